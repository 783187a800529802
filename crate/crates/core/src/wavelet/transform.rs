//! Periodized orthonormal discrete wavelet transform on `2^J` grid values.

use serde::{Deserialize, Serialize};

use super::family::WaveletFamily;
use crate::error::{AcbError, Result};

/// Coefficient tree: `phi` holds `2^j0` scaling coefficients, `psi[j - j0]`
/// holds the `2^j` detail coefficients of level `j` for `j0 <= j < J`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletCoefficients {
    pub j0: u32,
    #[serde(rename = "J")]
    pub j_max: u32,
    pub phi: Vec<f64>,
    pub psi: Vec<Vec<f64>>,
}

impl WaveletCoefficients {
    pub fn zeros(j0: u32, j_max: u32) -> Result<Self> {
        if j0 >= j_max {
            return Err(AcbError::Shape(format!("need j0 < J, got j0={j0}, J={j_max}")));
        }
        Ok(Self {
            j0,
            j_max,
            phi: vec![0.0; 1 << j0],
            psi: (j0..j_max).map(|j| vec![0.0; 1 << j]).collect(),
        })
    }

    /// Detail coefficients of level `j`.
    pub fn level(&self, j: u32) -> &[f64] {
        &self.psi[(j - self.j0) as usize]
    }

    pub fn level_mut(&mut self, j: u32) -> &mut [f64] {
        &mut self.psi[(j - self.j0) as usize]
    }

    pub fn levels(&self) -> impl Iterator<Item = (u32, &[f64])> {
        self.psi
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.j0 + i as u32, v.as_slice()))
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.j0 >= self.j_max {
            return Err(AcbError::Shape(format!(
                "need j0 < J, got j0={}, J={}",
                self.j0, self.j_max
            )));
        }
        if self.phi.len() != 1 << self.j0 {
            return Err(AcbError::Shape(format!(
                "phi has {} coefficients, expected {}",
                self.phi.len(),
                1u64 << self.j0
            )));
        }
        if self.psi.len() != (self.j_max - self.j0) as usize {
            return Err(AcbError::Shape(format!(
                "{} detail levels, expected {}",
                self.psi.len(),
                self.j_max - self.j0
            )));
        }
        for (j, level) in self.levels() {
            if level.len() != 1 << j {
                return Err(AcbError::Shape(format!(
                    "level {j} has {} coefficients, expected {}",
                    level.len(),
                    1u64 << j
                )));
            }
        }
        Ok(())
    }

    /// Coefficient-wise `self - other` (same shape required).
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.j0 != other.j0 || self.j_max != other.j_max {
            return Err(AcbError::Shape("coefficient trees differ in shape".into()));
        }
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        Ok(Self {
            j0: self.j0,
            j_max: self.j_max,
            phi: diff(&self.phi, &other.phi),
            psi: self
                .psi
                .iter()
                .zip(&other.psi)
                .map(|(a, b)| diff(a, b))
                .collect(),
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            j0: self.j0,
            j_max: self.j_max,
            phi: self.phi.iter().map(|v| c * v).collect(),
            psi: self
                .psi
                .iter()
                .map(|l| l.iter().map(|v| c * v).collect())
                .collect(),
        }
    }

    pub fn energy(&self) -> f64 {
        self.phi.iter().chain(self.psi.iter().flatten()).map(|v| v * v).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("coefficients serialize")
    }
}

fn log2_exact(len: usize) -> Result<u32> {
    if len < 2 || !len.is_power_of_two() {
        return Err(AcbError::Shape(format!(
            "input length {len} is not a power of two >= 2"
        )));
    }
    Ok(len.trailing_zeros())
}

fn step_forward(a: &[f64], h: &[f64], g: &[f64], approx: &mut Vec<f64>, detail: &mut Vec<f64>) {
    let n = a.len();
    let half = n / 2;
    approx.clear();
    detail.clear();
    for k in 0..half {
        let mut s = 0.0;
        let mut d = 0.0;
        for (t, (&ht, &gt)) in h.iter().zip(g).enumerate() {
            let v = a[(2 * k + t) % n];
            s += ht * v;
            d += gt * v;
        }
        approx.push(s);
        detail.push(d);
    }
}

fn step_inverse(approx: &[f64], detail: &[f64], h: &[f64], g: &[f64]) -> Vec<f64> {
    let n = approx.len() * 2;
    let mut out = vec![0.0; n];
    for k in 0..approx.len() {
        for (t, (&ht, &gt)) in h.iter().zip(g).enumerate() {
            out[(2 * k + t) % n] += ht * approx[k] + gt * detail[k];
        }
    }
    out
}

/// Forward transform of grid values `f(k / 2^J)`, scaled by `2^{-J/2}` so the
/// coefficients approximate the `L^2` inner products.
pub fn analyze(values: &[f64], family: &WaveletFamily, j0: u32) -> Result<WaveletCoefficients> {
    let j_max = log2_exact(values.len())?;
    if j0 >= j_max {
        return Err(AcbError::Shape(format!("need j0 < J, got j0={j0}, J={j_max}")));
    }
    let norm = (-(j_max as f64) / 2.0).exp2();
    let mut a: Vec<f64> = values.iter().map(|v| v * norm).collect();
    let mut psi = vec![Vec::new(); (j_max - j0) as usize];
    let (h, g) = (family.lowpass(), family.highpass());
    let mut approx = Vec::with_capacity(a.len() / 2);
    let mut detail = Vec::with_capacity(a.len() / 2);
    for j in (j0..j_max).rev() {
        step_forward(&a, h, g, &mut approx, &mut detail);
        psi[(j - j0) as usize] = detail.clone();
        std::mem::swap(&mut a, &mut approx);
    }
    Ok(WaveletCoefficients {
        j0,
        j_max,
        phi: a,
        psi,
    })
}

/// Inverse of [`analyze`]: grid values at `k / 2^J`.
pub fn synthesize(coeffs: &WaveletCoefficients, family: &WaveletFamily) -> Result<Vec<f64>> {
    coeffs.check_shape()?;
    let (h, g) = (family.lowpass(), family.highpass());
    let mut a = coeffs.phi.clone();
    for (_, detail) in coeffs.levels() {
        a = step_inverse(&a, detail, h, g);
    }
    let norm = (coeffs.j_max as f64 / 2.0).exp2();
    a.iter_mut().for_each(|v| *v *= norm);
    Ok(a)
}

/// `max(sup_m |phi_m|, sup_{j,m} 2^{j(t+1/2)} |psi_jm|)`.
pub fn holder_norm(coeffs: &WaveletCoefficients, t: f64) -> f64 {
    let mut best = coeffs.phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (j, level) in coeffs.levels() {
        let weight = (j as f64 * (t + 0.5)).exp2();
        let top = level.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        best = best.max(weight * top);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NoiseStream;
    use crate::wavelet::family::build_family;

    #[test]
    fn constant_has_no_detail_for_haar() {
        let haar = build_family("haar").unwrap();
        let c = analyze(&[3.0; 64], &haar, 0).unwrap();
        assert!(c.psi.iter().flatten().all(|&v| v == 0.0));
        assert!((c.phi[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn haar_psi_23_is_a_unit_coefficient() {
        let haar = build_family("haar").unwrap();
        let j_max = 6;
        let size = 1usize << j_max;
        let values: Vec<f64> = (0..size)
            .map(|k| {
                let x = k as f64 / size as f64;
                2.0 * haar.psi(4.0 * x - 3.0)
            })
            .collect();
        let c = analyze(&values, &haar, 0).unwrap();
        for (j, level) in c.levels() {
            for (m, &v) in level.iter().enumerate() {
                let expected = if (j, m) == (2, 3) { 1.0 } else { 0.0 };
                assert!((v - expected).abs() < 1e-14, "({j},{m}) = {v}");
            }
        }
    }

    #[test]
    fn round_trip_and_energy() {
        for name in ["haar", "db2", "db3", "db4"] {
            let fam = build_family(name).unwrap();
            for j_max in [1u32, 3, 8, 12] {
                let values = NoiseStream::normals(j_max as u64, 1 << j_max);
                let c = analyze(&values, &fam, 0).unwrap();
                let back = synthesize(&c, &fam).unwrap();
                let err = values
                    .iter()
                    .zip(&back)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(err < 1e-10, "{name} J={j_max} err={err}");
                let grid_energy: f64 =
                    values.iter().map(|v| v * v).sum::<f64>() / (1u64 << j_max) as f64;
                assert!((c.energy() - grid_energy).abs() < 1e-10 * grid_energy.max(1.0));
            }
        }
    }

    #[test]
    fn shape_errors() {
        let haar = build_family("haar").unwrap();
        assert!(matches!(analyze(&[1.0; 12], &haar, 0), Err(AcbError::Shape(_))));
        let mut c = WaveletCoefficients::zeros(0, 3).unwrap();
        c.psi[1].pop();
        assert!(matches!(synthesize(&c, &haar), Err(AcbError::Shape(_))));
    }

    #[test]
    fn phi_coefficient_synthesizes_constant() {
        let haar = build_family("haar").unwrap();
        let mut c = WaveletCoefficients::zeros(0, 5).unwrap();
        c.phi[0] = 2.0;
        let v = synthesize(&c, &haar).unwrap();
        assert!(v.iter().all(|&x| (x - 2.0).abs() < 1e-14));
        assert!(synthesize(&WaveletCoefficients::zeros(0, 5).unwrap(), &haar)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn holder_norm_examples() {
        let mut c = WaveletCoefficients::zeros(0, 6).unwrap();
        assert_eq!(holder_norm(&c, 1.0), 0.0);
        c.level_mut(2)[3] = 1.0;
        assert_eq!(holder_norm(&c, 1.0), 8.0);
        let mut d = WaveletCoefficients::zeros(0, 6).unwrap();
        d.level_mut(3)[1] = 0.5;
        d.phi[0] = 0.1;
        assert_eq!(holder_norm(&d, 0.5), 4.0);
    }

    #[test]
    fn json_keys() {
        let c = WaveletCoefficients::zeros(1, 3).unwrap();
        let v: serde_json::Value = serde_json::from_str(&c.to_json()).unwrap();
        for key in ["j0", "J", "phi", "psi"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
