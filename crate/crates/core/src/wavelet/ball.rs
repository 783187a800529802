//! Hölder balls in wavelet-sequence norm: membership, projection and
//! two-sided bounds on the sup-norm distance to the ball.

use serde::{Deserialize, Serialize};

use super::family::WaveletFamily;
use super::transform::{holder_norm, synthesize, WaveletCoefficients};
use crate::error::{AcbError, Result};

/// Relative slack used by [`ball_membership`].
pub const MEMBERSHIP_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderBall {
    pub t: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

impl HolderBall {
    pub fn new(t: f64, b: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(AcbError::Domain(format!("smoothness t must be > 0, got {t}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(AcbError::Domain(format!("radius B must be > 0, got {b}")));
        }
        Ok(Self { t, b })
    }

    /// Coefficient bound at level `j`: `B 2^{-j(t+1/2)}`.
    pub fn threshold(&self, j: u32) -> f64 {
        self.b * (-(j as f64) * (self.t + 0.5)).exp2()
    }
}

pub fn ball_membership(coeffs: &WaveletCoefficients, ball: &HolderBall) -> bool {
    holder_norm(coeffs, ball.t) <= ball.b * (1.0 + MEMBERSHIP_RTOL)
}

/// Clip every coefficient to its threshold, keeping signs.
pub fn project_to_ball(coeffs: &WaveletCoefficients, ball: &HolderBall) -> WaveletCoefficients {
    let mut out = coeffs.clone();
    out.phi.iter_mut().for_each(|v| *v = v.clamp(-ball.b, ball.b));
    for (i, level) in out.psi.iter_mut().enumerate() {
        let thr = ball.threshold(coeffs.j0 + i as u32);
        level.iter_mut().for_each(|v| *v = v.clamp(-thr, thr));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Sup-norm of the grid values produced by `coeffs`.
fn grid_sup(coeffs: &WaveletCoefficients, family: &WaveletFamily) -> Result<f64> {
    Ok(synthesize(coeffs, family)?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Upper end of [`distance_bounds`] only; this is what the band statistic uses.
pub fn distance_upper(
    coeffs: &WaveletCoefficients,
    ball: &HolderBall,
    family: &WaveletFamily,
) -> Result<f64> {
    let residual = coeffs.sub(&project_to_ball(coeffs, ball))?;
    if residual.phi.iter().chain(residual.psi.iter().flatten()).all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    grid_sup(&residual, family)
}

/// Per-level `L^1` scale of one basis function, the larger of the continuous
/// value `2^{-j/2} ||psi||_1` and its discrete grid counterpart. Index 0 is
/// the scaling level, then detail levels `j0..J`.
fn l1_scales(j0: u32, j_max: u32, family: &WaveletFamily) -> Result<Vec<f64>> {
    let size = (1u64 << j_max) as f64;
    let mut out = Vec::with_capacity((j_max - j0 + 1) as usize);
    let discrete = |c: &WaveletCoefficients| -> Result<f64> {
        Ok(synthesize(c, family)?.iter().map(|v| v.abs()).sum::<f64>() / size)
    };
    let mut unit = WaveletCoefficients::zeros(j0, j_max)?;
    unit.phi[0] = 1.0;
    let phi_cont = (-(j0 as f64) / 2.0).exp2() * family.phi_l1();
    out.push(phi_cont.max(discrete(&unit)?));
    unit.phi[0] = 0.0;
    for j in j0..j_max {
        unit.level_mut(j)[0] = 1.0;
        let cont = (-(j as f64) / 2.0).exp2() * family.psi_l1();
        out.push(cont.max(discrete(&unit)?));
        unit.level_mut(j)[0] = 0.0;
    }
    Ok(out)
}

/// Two-sided surrogate for `d(f, Sigma(s))`.
///
/// `upper` is the grid sup of the residual after projection. `lower` uses
/// `|<h, psi_jm>| <= ||h||_inf ||psi_jm||_1`: every coefficient exceeding its
/// threshold forces a sup-norm gap of at least excess / `||psi_jm||_1`.
pub fn distance_bounds(
    coeffs: &WaveletCoefficients,
    ball: &HolderBall,
    family: &WaveletFamily,
) -> Result<DistanceBounds> {
    coeffs.check_shape()?;
    let upper = distance_upper(coeffs, ball, family)?;
    if upper == 0.0 {
        return Ok(DistanceBounds { lower: 0.0, upper });
    }
    let scales = l1_scales(coeffs.j0, coeffs.j_max, family)?;
    let excess = |v: f64, thr: f64| (v.abs() - thr).max(0.0);
    let mut lower = coeffs
        .phi
        .iter()
        .map(|&v| excess(v, ball.b) / scales[0])
        .fold(0.0f64, f64::max);
    for (i, (j, level)) in coeffs.levels().enumerate() {
        let thr = ball.threshold(j);
        let top = level.iter().map(|&v| excess(v, thr)).fold(0.0f64, f64::max);
        lower = lower.max(top / scales[i + 1]);
    }
    Ok(DistanceBounds { lower, upper })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::family::build_family;

    #[test]
    fn ball_validation() {
        assert!(HolderBall::new(0.0, 1.0).is_err());
        assert!(HolderBall::new(1.0, -1.0).is_err());
        assert!(HolderBall::new(1.0, 1.0).is_ok());
    }

    #[test]
    fn clip_single_coefficient() {
        let ball = HolderBall::new(1.0, 1.0).unwrap();
        let mut c = WaveletCoefficients::zeros(0, 5).unwrap();
        c.level_mut(2)[0] = 0.25;
        let p = project_to_ball(&c, &ball);
        assert_eq!(p.level(2)[0], 0.125);
        assert!(ball_membership(&p, &ball));
        assert!(!ball_membership(&c, &ball));
        assert_eq!(project_to_ball(&p, &ball), p);
    }

    #[test]
    fn haar_single_spike_distance() {
        let haar = build_family("haar").unwrap();
        let ball = HolderBall::new(1.0, 1.0).unwrap();
        let mut c = WaveletCoefficients::zeros(0, 6).unwrap();
        c.level_mut(2)[0] = 0.25;
        let d = distance_bounds(&c, &ball, &haar).unwrap();
        assert!((d.upper - 0.25).abs() < 1e-14, "{d:?}");
        assert!((d.lower - 0.25).abs() < 1e-14, "{d:?}");
    }

    #[test]
    fn members_are_at_distance_zero() {
        let db3 = build_family("db3").unwrap();
        let ball = HolderBall::new(2.0, 10.0).unwrap();
        let mut c = WaveletCoefficients::zeros(0, 6).unwrap();
        c.level_mut(3)[2] = 0.05;
        c.phi[0] = -3.0;
        let d = distance_bounds(&c, &ball, &db3).unwrap();
        assert_eq!((d.lower, d.upper), (0.0, 0.0));
    }
}
