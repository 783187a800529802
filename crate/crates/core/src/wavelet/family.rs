//! Daubechies filter families and cascade evaluation of `phi` and `psi`.

use std::f64::consts::SQRT_2;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{AcbError, Result};

/// Default dyadic resolution of the cascade tables.
pub const DEFAULT_DEPTH: u32 = 12;

/// Sampled scaling function and wavelet on `[0, L-1]` at spacing `2^-depth`.
#[derive(Debug)]
pub struct CascadeTable {
    pub depth: u32,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl CascadeTable {
    fn lookup(table: &[f64], depth: u32, y: f64) -> f64 {
        let scale = (1u64 << depth) as f64;
        let pos = y * scale;
        if !(pos >= 0.0) {
            return 0.0;
        }
        let i0 = pos.floor() as usize;
        if i0 + 1 >= table.len() {
            return if i0 + 1 == table.len() && pos == i0 as f64 {
                table[i0]
            } else {
                0.0
            };
        }
        let frac = pos - i0 as f64;
        if frac == 0.0 {
            table[i0]
        } else {
            table[i0] * (1.0 - frac) + table[i0 + 1] * frac
        }
    }

    pub fn phi_at(&self, y: f64) -> f64 {
        Self::lookup(&self.phi, self.depth, y)
    }

    pub fn psi_at(&self, y: f64) -> f64 {
        Self::lookup(&self.psi, self.depth, y)
    }
}

/// A compactly supported orthonormal wavelet: filters, support, spacing and
/// cached cascade tables.
#[derive(Debug, Clone)]
pub struct WaveletFamily {
    name: String,
    lowpass: Vec<f64>,
    highpass: Vec<f64>,
    vanishing_moments: usize,
    /// `supp(psi) ⊆ [support_a, support_b]`
    support_a: i64,
    support_b: i64,
    table: Arc<CascadeTable>,
    psi_l1: f64,
    psi_sup: f64,
    phi_l1: f64,
}

impl PartialEq for WaveletFamily {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl WaveletFamily {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    pub fn highpass(&self) -> &[f64] {
        &self.highpass
    }

    pub fn filter_len(&self) -> usize {
        self.lowpass.len()
    }

    pub fn vanishing_moments(&self) -> usize {
        self.vanishing_moments
    }

    pub fn support(&self) -> (i64, i64) {
        (self.support_a, self.support_b)
    }

    pub fn support_len(&self) -> usize {
        (self.support_b - self.support_a) as usize
    }

    /// `c0^{-1} = ceil(b - a)`, the translation step that makes spikes disjoint.
    pub fn spacing(&self) -> usize {
        self.support_len()
    }

    pub fn c0(&self) -> f64 {
        1.0 / self.spacing() as f64
    }

    pub fn is_haar(&self) -> bool {
        self.lowpass.len() == 2
    }

    pub fn table(&self) -> &CascadeTable {
        &self.table
    }

    /// `||psi||_1` by dyadic quadrature of the cached table.
    pub fn psi_l1(&self) -> f64 {
        self.psi_l1
    }

    pub fn psi_sup(&self) -> f64 {
        self.psi_sup
    }

    pub fn phi_l1(&self) -> f64 {
        self.phi_l1
    }

    /// Mother wavelet at `y` (cached default depth; closed form for Haar).
    pub fn psi(&self, y: f64) -> f64 {
        if self.is_haar() {
            haar_psi(y)
        } else {
            self.table.psi_at(y)
        }
    }

    /// Scaling function at `y`.
    pub fn phi(&self, y: f64) -> f64 {
        if self.is_haar() {
            haar_phi(y)
        } else {
            self.table.phi_at(y)
        }
    }
}

fn haar_phi(y: f64) -> f64 {
    if (0.0..1.0).contains(&y) {
        1.0
    } else {
        0.0
    }
}

fn haar_psi(y: f64) -> f64 {
    if (0.0..0.5).contains(&y) {
        1.0
    } else if (0.5..1.0).contains(&y) {
        -1.0
    } else {
        0.0
    }
}

/// Memoized [`build_family`].
pub fn shared_family(name: &str) -> Result<WaveletFamily> {
    static CACHE: OnceLock<Mutex<HashMap<String, WaveletFamily>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(f) = cache.lock().expect("family cache").get(name) {
        return Ok(f.clone());
    }
    let built = build_family(name)?;
    cache
        .lock()
        .expect("family cache")
        .insert(name.to_string(), built.clone());
    Ok(built)
}

/// Build one of `haar`, `db2`, `db3`, `db4`.
pub fn build_family(name: &str) -> Result<WaveletFamily> {
    let moments = match name.to_ascii_lowercase().as_str() {
        "haar" | "db1" => 1,
        "db2" => 2,
        "db3" => 3,
        "db4" => 4,
        other => {
            return Err(AcbError::Config(format!(
                "unknown wavelet family '{other}' (expected haar, db2, db3 or db4)"
            )))
        }
    };
    let lowpass = daubechies_lowpass(moments)?;
    let highpass = quadrature_mirror(&lowpass);
    let len = lowpass.len();
    let table = Arc::new(if moments == 1 {
        haar_table(DEFAULT_DEPTH)
    } else {
        cascade(&lowpass, &highpass, DEFAULT_DEPTH)?
    });
    let step = 1.0 / (1u64 << table.depth) as f64;
    let (psi_l1, psi_sup, phi_l1) = if moments == 1 {
        (1.0, 1.0, 1.0)
    } else {
        (
            table.psi.iter().map(|v| v.abs()).sum::<f64>() * step,
            table.psi.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            table.phi.iter().map(|v| v.abs()).sum::<f64>() * step,
        )
    };
    Ok(WaveletFamily {
        name: if moments == 1 {
            "haar".to_string()
        } else {
            format!("db{moments}")
        },
        lowpass,
        highpass,
        vanishing_moments: moments,
        support_a: 0,
        support_b: len as i64 - 1,
        table,
        psi_l1,
        psi_sup,
        phi_l1,
    })
}

/// `g_k = (-1)^k h_{L-1-k}`.
fn quadrature_mirror(h: &[f64]) -> Vec<f64> {
    let len = h.len();
    (0..len)
        .map(|k| {
            let v = h[len - 1 - k];
            if k % 2 == 0 {
                v
            } else {
                -v
            }
        })
        .collect()
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Roots of a real polynomial given by coefficients in increasing degree.
fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    let lead = coeffs[degree];
    let monic: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();
    let eval = |z: Complex64| {
        monic
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    };
    let deriv = |z: Complex64| {
        monic
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, (k, &c)| acc * z + c * k as f64)
    };
    // Durand-Kerner
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..degree).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..500 {
        let mut shift = 0.0f64;
        for i in 0..degree {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..degree {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            shift = shift.max(delta.norm());
        }
        if shift < 1e-16 {
            break;
        }
    }
    // Newton polish
    for root in roots.iter_mut() {
        for _ in 0..5 {
            let d = deriv(*root);
            if d.norm() == 0.0 {
                break;
            }
            *root -= eval(*root) / d;
        }
    }
    roots
}

/// Extremal-phase Daubechies lowpass filter with `moments` vanishing moments,
/// normalised so the taps sum to `sqrt(2)`.
fn daubechies_lowpass(moments: usize) -> Result<Vec<f64>> {
    if moments == 1 {
        return Ok(vec![1.0 / SQRT_2, 1.0 / SQRT_2]);
    }
    let n = moments as u64;
    let p: Vec<f64> = (0..n).map(|k| binomial(n - 1 + k, k)).collect();
    // y = (2 - z - 1/z) / 4  =>  z^2 - (2 - 4y) z + 1 = 0; keep |z| < 1
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    let multiply = |poly: &[Complex64], root: Complex64| {
        let mut out = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
        for (k, &c) in poly.iter().enumerate() {
            out[k + 1] += c;
            out[k] -= c * root;
        }
        out
    };
    for y in polynomial_roots(&p) {
        let b = Complex64::new(2.0, 0.0) - y * 4.0;
        let disc = (b * b - 4.0).sqrt();
        let z1 = (b + disc) / 2.0;
        let z2 = (b - disc) / 2.0;
        let z = if z1.norm() < z2.norm() { z1 } else { z2 };
        poly = multiply(&poly, z);
    }
    for _ in 0..moments {
        poly = multiply(&poly, Complex64::new(-1.0, 0.0));
    }
    let mut taps: Vec<f64> = poly.iter().map(|c| c.re).collect();
    if poly.iter().any(|c| c.im.abs() > 1e-9 * c.norm().max(1.0)) {
        return Err(AcbError::Numerical(
            "spectral factorisation produced complex taps".into(),
        ));
    }
    taps.reverse();
    let sum: f64 = taps.iter().sum();
    let scale = SQRT_2 / sum;
    taps.iter_mut().for_each(|t| *t *= scale);
    Ok(taps)
}

fn haar_table(depth: u32) -> CascadeTable {
    let per = 1usize << depth;
    let phi: Vec<f64> = (0..=per).map(|k| if k < per { 1.0 } else { 0.0 }).collect();
    let psi: Vec<f64> = (0..=per)
        .map(|k| {
            if k < per / 2 {
                1.0
            } else if k < per {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    CascadeTable { depth, phi, psi }
}

/// Cascade algorithm: exact values of `phi` at the integers from the
/// eigenvector of the two-scale matrix, then refinement level by level.
pub fn cascade(h: &[f64], g: &[f64], depth: u32) -> Result<CascadeTable> {
    let len = h.len();
    if len == 2 {
        return Ok(haar_table(depth));
    }
    let span = len - 1;
    let mut a = DMatrix::<f64>::zeros(len, len);
    for row in 0..len {
        for col in 0..len {
            let k = 2 * row as i64 - col as i64;
            if (0..len as i64).contains(&k) {
                a[(row, col)] = SQRT_2 * h[k as usize];
            }
        }
        a[(row, row)] -= 1.0;
    }
    for col in 0..len {
        a[(len - 1, col)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(len);
    rhs[len - 1] = 1.0;
    let integer_values = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| AcbError::Numerical("singular cascade eigen-system".into()))?;

    let mut phi: Vec<f64> = integer_values.iter().copied().collect();
    for level in 1..=depth {
        let per = 1usize << level;
        let coarse = &phi;
        let mut fine = vec![0.0; span * per + 1];
        for (k, value) in fine.iter_mut().enumerate() {
            if k % 2 == 0 {
                *value = coarse[k / 2];
                continue;
            }
            // phi(k / per) = sqrt2 * sum_t h_t phi(2k/per - t), on the coarse grid
            let mut acc = 0.0;
            for (t, &ht) in h.iter().enumerate() {
                let idx = k as i64 - (t * per / 2) as i64;
                if idx >= 0 && (idx as usize) < coarse.len() {
                    acc += ht * coarse[idx as usize];
                }
            }
            *value = SQRT_2 * acc;
        }
        phi = fine;
    }
    let per = 1usize << depth;
    let psi: Vec<f64> = (0..phi.len())
        .map(|k| {
            let mut acc = 0.0;
            for (t, &gt) in g.iter().enumerate() {
                // psi(x) = sqrt2 sum_t g_t phi(2x - t); 2x - t sits at index 2k - t*per
                let idx = 2 * k as i64 - (t * per) as i64;
                if idx >= 0 && (idx as usize) < phi.len() {
                    acc += gt * phi[idx as usize];
                }
            }
            SQRT_2 * acc
        })
        .collect();
    Ok(CascadeTable { depth, phi, psi })
}

/// `2^{j/2} psi(2^j x - m)`, with `psi` tabulated by the cascade at `depth`.
pub fn evaluate_wavelet(family: &WaveletFamily, j: u32, m: i64, x: f64, depth: u32) -> f64 {
    let y = (j as f64).exp2() * x - m as f64;
    let scale = (j as f64 / 2.0).exp2();
    if family.is_haar() {
        return scale * haar_psi(y);
    }
    if depth == family.table.depth {
        scale * family.table.psi_at(y)
    } else {
        let table = cascade(family.lowpass(), family.highpass(), depth)
            .expect("cascade of a validated family");
        scale * table.psi_at(y)
    }
}
