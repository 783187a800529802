//! Disjointly supported spike alternatives `f_m = 2^{-j(r+1/2)} psi_{j, m/c0}`.

use serde::Serialize;

use super::family::WaveletFamily;
use super::transform::WaveletCoefficients;
use crate::error::{AcbError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spike {
    /// Alternative index `m`, starting at 1.
    pub index: usize,
    /// Translation `c0^{-1} m` of the level-`j` wavelet.
    pub translation: i64,
    /// Coefficient `scale * 2^{-j(r+1/2)}`.
    pub amplitude: f64,
}

/// A spike restricted to the design points where it can be nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTable {
    /// Design index of `values[0]`; point `i` is `x = i / n`.
    pub start: usize,
    pub values: Vec<f64>,
}

impl SpikeTable {
    pub fn dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (k, &v) in self.values.iter().enumerate() {
            out[self.start - 1 + k] = v;
        }
        out
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone)]
pub struct SpikeSet {
    pub family: WaveletFamily,
    pub j: u32,
    pub r: f64,
    /// Multiplier on the amplitudes; 1 gives unit `||f_m||_{r,inf}`.
    pub scale: f64,
    pub members: Vec<Spike>,
}

impl SpikeSet {
    pub fn count(&self) -> usize {
        self.members.len()
    }

    /// `f_m(x) = scale 2^{-jr} psi(2^j x - k)`.
    pub fn eval(&self, member: &Spike, x: f64) -> f64 {
        let level = (self.j as f64).exp2();
        let height = self.scale * (-(self.j as f64) * self.r).exp2();
        height * self.family.psi(level * x - member.translation as f64)
    }

    /// Sup-norm of any member: `scale 2^{-jr} ||psi||_inf`.
    pub fn sup_norm(&self) -> f64 {
        self.scale * (-(self.j as f64) * self.r).exp2() * self.family.psi_sup()
    }

    /// Values at the design points `i / n`, `i = 1..=n`, inside the support.
    pub fn tabulate(&self, member: &Spike, n: usize) -> SpikeTable {
        let level = (self.j as f64).exp2();
        let (a, b) = self.family.support();
        let lo = (member.translation + a) as f64 / level;
        let hi = (member.translation + b) as f64 / level;
        let first = ((lo * n as f64).floor() as usize).max(1);
        let last = ((hi * n as f64).ceil() as usize).min(n);
        let values = (first..=last)
            .map(|i| self.eval(member, i as f64 / n as f64))
            .collect();
        SpikeTable {
            start: first,
            values,
        }
    }

    pub fn tabulate_all(&self, n: usize) -> Vec<SpikeTable> {
        self.members.iter().map(|m| self.tabulate(m, n)).collect()
    }

    /// The member as a coefficient tree: one entry at `(j, translation)`.
    pub fn coefficients(&self, member: &Spike, j0: u32, j_max: u32) -> Result<WaveletCoefficients> {
        if self.j < j0 || self.j >= j_max {
            return Err(AcbError::Shape(format!(
                "spike level {} outside [{j0}, {j_max})",
                self.j
            )));
        }
        let mut c = WaveletCoefficients::zeros(j0, j_max)?;
        c.level_mut(self.j)[member.translation as usize] = member.amplitude;
        Ok(c)
    }
}

/// Number of interior, disjoint translations at level `j`:
/// `min(floor(c0 (2^j - 1)), floor(2^j c0) - 1)`.
pub fn realizable_count(family: &WaveletFamily, j: u32) -> usize {
    let spacing = family.spacing() as u64;
    let level = 1u64 << j;
    let nominal = (level - 1) / spacing;
    let interior = (level / spacing).saturating_sub(1);
    nominal.min(interior) as usize
}

pub fn spike_set(family: &WaveletFamily, j: u32, r: f64) -> Result<SpikeSet> {
    spike_set_scaled(family, j, r, 1.0)
}

/// Spike set with amplitudes multiplied by `scale`.
pub fn spike_set_scaled(family: &WaveletFamily, j: u32, r: f64, scale: f64) -> Result<SpikeSet> {
    if !(r > 0.0) {
        return Err(AcbError::Config(format!("spike smoothness r must be > 0, got {r}")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(AcbError::Config(format!("spike scale must be > 0, got {scale}")));
    }
    if j > 30 {
        return Err(AcbError::Config(format!("spike level {j} too large")));
    }
    let count = realizable_count(family, j);
    if count == 0 {
        return Err(AcbError::Config(format!(
            "level j={j} too small for {} (support length {}): no interior spike fits",
            family.name(),
            family.support_len()
        )));
    }
    let amplitude = scale * (-(j as f64) * (r + 0.5)).exp2();
    let members = (1..=count)
        .map(|m| Spike {
            index: m,
            translation: (family.spacing() * m) as i64,
            amplitude,
        })
        .collect();
    Ok(SpikeSet {
        family: family.clone(),
        j,
        r,
        scale,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::ball::{ball_membership, HolderBall};
    use crate::wavelet::family::build_family;
    use crate::wavelet::transform::holder_norm;

    #[test]
    fn haar_level_three_has_seven_disjoint_members() {
        let haar = build_family("haar").unwrap();
        let set = spike_set(&haar, 3, 1.0).unwrap();
        assert_eq!(set.count(), 7);
        let n = 256;
        let dense: Vec<Vec<f64>> = set.tabulate_all(n).iter().map(|t| t.dense(n)).collect();
        for a in 0..dense.len() {
            assert!(dense[a].iter().any(|&v| v != 0.0));
            for b in a + 1..dense.len() {
                assert!(dense[a].iter().zip(&dense[b]).all(|(x, y)| x * y == 0.0));
            }
        }
    }

    #[test]
    fn members_have_unit_norm() {
        for name in ["haar", "db2", "db3", "db4"] {
            let fam = build_family(name).unwrap();
            let set = spike_set(&fam, 6, 0.75).unwrap();
            for m in &set.members {
                let c = set.coefficients(m, 0, 8).unwrap();
                assert!((holder_norm(&c, 0.75) - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn membership_dichotomy() {
        let fam = build_family("db3").unwrap();
        let set = spike_set(&fam, 5, 1.0).unwrap();
        let c = set.coefficients(&set.members[0], 0, 8).unwrap();
        assert!(ball_membership(&c, &HolderBall::new(1.0, 1.0).unwrap()));
        // B 2^{j(r-s)} = 2 * 2^{-5} < 1
        assert!(!ball_membership(&c, &HolderBall::new(2.0, 2.0).unwrap()));
    }

    #[test]
    fn too_coarse_level_is_rejected() {
        let db4 = build_family("db4").unwrap();
        assert!(matches!(spike_set(&db4, 2, 1.0), Err(AcbError::Config(_))));
        let haar = build_family("haar").unwrap();
        assert!(matches!(spike_set(&haar, 0, 1.0), Err(AcbError::Config(_))));
    }

    #[test]
    fn tabulation_matches_pointwise_evaluation() {
        let fam = build_family("db2").unwrap();
        let set = spike_set(&fam, 4, 1.0).unwrap();
        let n = 300;
        for m in &set.members {
            let dense = set.tabulate(m, n).dense(n);
            for i in 1..=n {
                assert_eq!(dense[i - 1], set.eval(m, i as f64 / n as f64));
            }
        }
    }
}
