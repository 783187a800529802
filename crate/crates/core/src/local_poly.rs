//! Local polynomial estimator of order `l` on the fixed design `i / n`.
//!
//! At a point `x` the estimate is the intercept of a kernel-weighted least
//! squares fit in the scaled basis `U(u) = (1, u, u^2/2!, ..., u^l/l!)`,
//! `u = (x_i - x) / h`:
//!
//! ```text
//! B(x)     = (nh)^-1 sum_i K(u_i) U(u_i) U(u_i)^T
//! W_ni(x)  = (nh)^-1 e0^T B(x)^-1 U(u_i) K(u_i)
//! ```
//!
//! [`Smoother`] precomputes `v(x) = B(x)^-1 e0` for every evaluation point so
//! that an estimate is `sum_p v_p(x) C_p(x)` with `C_p` the correlation of the
//! data against the fixed taps `K(u) u^p / p!`. Wide windows use an FFT for
//! the correlations.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{AcbError, Result};
use crate::model::{FixedDesignSample, TruthFunction};

/// Largest supported polynomial order.
pub const MAX_ORDER: usize = 6;

/// Windows with more design points than this go through the FFT path.
const DIRECT_WINDOW_LIMIT: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Rectangular,
    Epanechnikov,
}

impl Kernel {
    pub fn eval(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Rectangular => 0.5,
            Kernel::Epanechnikov => 0.75 * (1.0 - u * u),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kernel::Rectangular => "rectangular",
            Kernel::Epanechnikov => "epanechnikov",
        })
    }
}

impl FromStr for Kernel {
    type Err = AcbError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rectangular" | "uniform" => Ok(Kernel::Rectangular),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            other => Err(AcbError::Config(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalPolyConfig {
    pub l: usize,
    pub kernel: Kernel,
    /// Diagonal regularizer, used only when the local Gram matrix is singular
    /// or badly conditioned.
    pub ridge_eps: f64,
}

impl Default for LocalPolyConfig {
    fn default() -> Self {
        Self {
            l: 2,
            kernel: Kernel::Epanechnikov,
            ridge_eps: 1e-9,
        }
    }
}

impl LocalPolyConfig {
    pub fn new(l: usize, kernel: Kernel) -> Self {
        Self {
            l,
            kernel,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l > MAX_ORDER {
            return Err(AcbError::Config(format!(
                "order l={} exceeds the supported maximum {MAX_ORDER}",
                self.l
            )));
        }
        if !(0.0..=1e-6).contains(&self.ridge_eps) {
            return Err(AcbError::Config(format!(
                "ridge_eps must lie in [0, 1e-6], got {}",
                self.ridge_eps
            )));
        }
        Ok(())
    }

    fn key(&self) -> (usize, Kernel, u64) {
        (self.l, self.kernel, self.ridge_eps.to_bits())
    }
}

fn factorials() -> [f64; 2 * MAX_ORDER + 1] {
    let mut out = [1.0; 2 * MAX_ORDER + 1];
    for k in 1..out.len() {
        out[k] = out[k - 1] * k as f64;
    }
    out
}

/// `(1, u, u^2/2!, ..., u^l/l!)`
fn basis(u: f64, l: usize, out: &mut [f64]) {
    out[0] = 1.0;
    for p in 1..=l {
        out[p] = out[p - 1] * u / p as f64;
    }
}

fn check_bandwidth(n: usize, h: f64) -> Result<()> {
    if n < 2 {
        return Err(AcbError::Domain(format!("n must be >= 2, got {n}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(AcbError::Domain(format!("bandwidth must be > 0, got {h}")));
    }
    Ok(())
}

/// Solve `B v = e0` from the kernel moments `S_r = (nh)^-1 sum K u^r`.
fn solve_intercept(moments: &[f64], l: usize, ridge: f64) -> Result<Vec<f64>> {
    let fact = factorials();
    let dim = l + 1;
    let gram = DMatrix::from_fn(dim, dim, |p, q| moments[p + q] / (fact[p] * fact[q]));
    let mut e0 = DVector::zeros(dim);
    e0[0] = 1.0;
    let well_conditioned = |chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        lo > 0.0 && (lo / hi).powi(2) > 1e-13
    };
    if let Some(chol) = gram.clone().cholesky() {
        if well_conditioned(&chol) {
            return Ok(chol.solve(&e0).iter().copied().collect());
        }
    }
    if ridge > 0.0 {
        let regular = gram + DMatrix::identity(dim, dim) * ridge;
        if let Some(chol) = regular.cholesky() {
            return Ok(chol.solve(&e0).iter().copied().collect());
        }
    }
    Err(AcbError::BandwidthTooSmall(
        "local Gram matrix is singular".into(),
    ))
}

/// Weights at an arbitrary point, restricted to the window: returns the first
/// design index `i` (1-based) and the weights from there on.
pub fn window_weights(
    n: usize,
    h: f64,
    config: &LocalPolyConfig,
    x: f64,
) -> Result<(usize, Vec<f64>)> {
    check_bandwidth(n, h)?;
    config.validate()?;
    if !(0.0..=1.0).contains(&x) {
        return Err(AcbError::Domain(format!("x must lie in [0, 1], got {x}")));
    }
    let nh = n as f64 * h;
    let center = n as f64 * x;
    let first = ((center - nh).ceil().max(1.0)) as usize;
    let last = ((center + nh).floor().min(n as f64)) as usize;
    let l = config.l;
    let mut moments = [0.0; 2 * MAX_ORDER + 1];
    let mut positive = 0usize;
    let mut kernel_u = Vec::new();
    if first <= last {
        for i in first..=last {
            let u = (i as f64 - center) / nh;
            let k = if (i as f64 / n as f64 - x).abs() > h {
                0.0
            } else {
                config.kernel.eval(u)
            };
            if k > 0.0 {
                positive += 1;
            }
            let mut pow = k / nh;
            for m in moments.iter_mut().take(2 * l + 1) {
                *m += pow;
                pow *= u;
            }
            kernel_u.push((k, u));
        }
    }
    if positive < l + 1 {
        return Err(AcbError::BandwidthTooSmall(format!(
            "{positive} design points in the window of h={h} at x={x}, need {}",
            l + 1
        )));
    }
    let v = solve_intercept(&moments, l, config.ridge_eps)?;
    let mut u_basis = [0.0; MAX_ORDER + 1];
    let weights = kernel_u
        .iter()
        .map(|&(k, u)| {
            basis(u, l, &mut u_basis);
            k / nh * u_basis[..=l].iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    Ok((first.min(last.max(first)), weights))
}

/// `W_ni(h, x)` for `i = 1..=n`.
pub fn weights(n: usize, h: f64, config: &LocalPolyConfig, x: f64) -> Result<Vec<f64>> {
    let (first, w) = window_weights(n, h, config, x)?;
    let mut out = vec![0.0; n];
    out[first - 1..first - 1 + w.len()].copy_from_slice(&w);
    Ok(out)
}

struct FftPath {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Spectra of `g_p + i g_{p+1}` for `p = 0, 2, 4, ...`.
    spectra: Vec<Vec<Complex64>>,
}

/// Precomputed local polynomial operator for `(n, h, config)` evaluated on
/// the grid `x_k = k / (mult n)`, `k = 1..=mult n`. With `mult = 1` the grid
/// is the design.
pub struct Smoother {
    n: usize,
    h: f64,
    config: LocalPolyConfig,
    mult: usize,
    /// Largest fine-lattice offset inside the window.
    reach: usize,
    /// `v(x_k)`, `l + 1` entries per row.
    coef: Vec<f64>,
    /// `g_p(d) = K(u) u^p / p! / (nh)`, `u = d / (mult nh)`, `d = -reach..=reach`.
    taps: Vec<Vec<f64>>,
    fft: Option<FftPath>,
    /// Weights at `x = 0`, which the grid leaves out.
    origin: Option<(usize, Vec<f64>)>,
}

impl fmt::Debug for Smoother {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Smoother")
            .field("n", &self.n)
            .field("h", &self.h)
            .field("config", &self.config)
            .field("mult", &self.mult)
            .field("fft", &self.fft.as_ref().map(|p| p.size))
            .finish()
    }
}

type SmootherKey = (usize, u64, (usize, Kernel, u64), usize);

fn smoother_cache() -> &'static Mutex<HashMap<SmootherKey, Arc<Smoother>>> {
    static CACHE: OnceLock<Mutex<HashMap<SmootherKey, Arc<Smoother>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Smoother {
    /// Process-wide memoized constructor.
    pub fn shared(n: usize, h: f64, config: &LocalPolyConfig, mult: usize) -> Result<Arc<Self>> {
        let key = (n, h.to_bits(), config.key(), mult);
        if let Some(s) = smoother_cache().lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(s));
        }
        let built = Arc::new(Self::new(n, h, config, mult)?);
        let mut cache = smoother_cache().lock().expect("cache lock");
        Ok(Arc::clone(cache.entry(key).or_insert(built)))
    }

    pub fn new(n: usize, h: f64, config: &LocalPolyConfig, mult: usize) -> Result<Self> {
        check_bandwidth(n, h)?;
        config.validate()?;
        if mult == 0 {
            return Err(AcbError::Config("evaluation multiplier must be >= 1".into()));
        }
        let l = config.l;
        let nh = n as f64 * h;
        let fine_nh = (mult * n) as f64 * h;
        let reach = (fine_nh.floor() as usize).min(mult * n);
        let fact = factorials();
        let span = 2 * reach + 1;
        let mut taps = vec![vec![0.0; span]; 2 * l + 1];
        for (idx, slot) in (0..span).enumerate() {
            let u = (slot as f64 - reach as f64) / fine_nh;
            let k = config.kernel.eval(u) / nh;
            let mut pow = k;
            for row in taps.iter_mut() {
                row[idx] = pow;
                pow *= u;
            }
        }
        // taps[r] now holds K u^r / nh; the Gram moments need all r <= 2l,
        // the correlations only r <= l with the factorial scaling.
        let moment_taps = taps;
        let taps: Vec<Vec<f64>> = (0..=l)
            .map(|p| moment_taps[p].iter().map(|v| v / fact[p]).collect())
            .collect();

        let points = mult * n;
        let rows: Vec<Result<Vec<f64>>> = (1..=points)
            .into_par_iter()
            .map(|k| {
                let interior = k >= reach + mult && k + reach <= points;
                if interior && k >= mult + reach + mult {
                    // identical to an earlier interior row of the same phase
                    return Ok(Vec::new());
                }
                Self::row_coef(&moment_taps, n, mult, reach, k, l, config, h)
            })
            .collect();
        let mut coef = Vec::with_capacity(points * (l + 1));
        let mut phase_rows: Vec<Option<Vec<f64>>> = vec![None; mult];
        for (idx, row) in rows.into_iter().enumerate() {
            let k = idx + 1;
            let row = row?;
            if row.is_empty() {
                let shared = phase_rows[k % mult]
                    .as_ref()
                    .expect("interior row precedes its copies");
                coef.extend_from_slice(shared);
            } else {
                let interior = k >= reach + mult && k + reach <= points;
                if interior && phase_rows[k % mult].is_none() {
                    phase_rows[k % mult] = Some(row.clone());
                }
                coef.extend_from_slice(&row);
            }
        }

        let window_points = span / mult + 1;
        let fft = if window_points > DIRECT_WINDOW_LIMIT {
            let size = (points + reach + 1).next_power_of_two();
            let mut planner = FftPlanner::<f64>::new();
            let forward = planner.plan_fft_forward(size);
            let inverse = planner.plan_fft_inverse(size);
            let mut spectra = Vec::new();
            for p in (0..=l).step_by(2) {
                let mut buf = vec![Complex64::new(0.0, 0.0); size];
                // tap at offset d goes to index -d mod size, so the circular
                // convolution with the data evaluates the correlation
                for d in -(reach as i64)..=(reach as i64) {
                    let t = (d + reach as i64) as usize;
                    let re = taps[p][t];
                    let im = if p < l { taps[p + 1][t] } else { 0.0 };
                    buf[(-d).rem_euclid(size as i64) as usize] = Complex64::new(re, im);
                }
                forward.process(&mut buf);
                spectra.push(buf);
            }
            Some(FftPath {
                size,
                forward,
                inverse,
                spectra,
            })
        } else {
            None
        };
        Ok(Self {
            n,
            h,
            config: *config,
            mult,
            reach,
            coef,
            taps,
            fft,
            origin: window_weights(n, h, config, 0.0).ok(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn row_coef(
        moment_taps: &[Vec<f64>],
        n: usize,
        mult: usize,
        reach: usize,
        k: usize,
        l: usize,
        config: &LocalPolyConfig,
        h: f64,
    ) -> Result<Vec<f64>> {
        let (first, last) = Self::window(n, mult, reach, k);
        let mut moments = [0.0; 2 * MAX_ORDER + 1];
        let mut positive = 0usize;
        for i in first..=last {
            let t = i * mult + reach - k;
            if moment_taps[0][t] > 0.0 {
                positive += 1;
            }
            for (r, m) in moments.iter_mut().enumerate().take(2 * l + 1) {
                *m += moment_taps[r][t];
            }
        }
        if positive < l + 1 || first > last {
            return Err(AcbError::BandwidthTooSmall(format!(
                "{positive} design points in the window of h={h} at x={}, need {}",
                k as f64 / (mult * n) as f64,
                l + 1
            )));
        }
        solve_intercept(&moments, l, config.ridge_eps)
    }

    /// Design indices `i` with `|i mult - k| <= reach`, clipped to `1..=n`.
    fn window(n: usize, mult: usize, reach: usize, k: usize) -> (usize, usize) {
        let first = (k.saturating_sub(reach)).div_ceil(mult).max(1);
        let last = ((k + reach) / mult).min(n);
        (first, last)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn mult(&self) -> usize {
        self.mult
    }

    pub fn config(&self) -> &LocalPolyConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.mult * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn uses_fft(&self) -> bool {
        self.fft.is_some()
    }

    pub fn grid(&self) -> Vec<f64> {
        let points = self.len() as f64;
        (1..=self.len()).map(|k| k as f64 / points).collect()
    }

    fn row_v(&self, k: usize) -> &[f64] {
        let dim = self.config.l + 1;
        &self.coef[(k - 1) * dim..k * dim]
    }

    /// Weights of grid row `k` (1-based): first design index and values.
    pub fn row(&self, k: usize) -> (usize, Vec<f64>) {
        let (first, last) = Self::window(self.n, self.mult, self.reach, k);
        let v = self.row_v(k);
        let w = (first..=last)
            .map(|i| {
                let t = i * self.mult + self.reach - k;
                self.taps.iter().zip(v).map(|(g, c)| g[t] * c).sum()
            })
            .collect();
        (first, w)
    }

    /// Whether row `k` has an untruncated window.
    pub fn is_interior(&self, k: usize) -> bool {
        k >= self.reach + self.mult && k + self.reach <= self.len()
    }

    /// `sum_i W_ni(0) y_i`.
    pub fn value_at_origin(&self, y: &[f64]) -> Result<f64> {
        let (first, w) = self.origin.as_ref().ok_or_else(|| {
            AcbError::BandwidthTooSmall(format!("no local fit at x = 0 for h={}", self.h))
        })?;
        Ok(w.iter().zip(&y[first - 1..]).map(|(a, b)| a * b).sum())
    }

    /// `sum_i W_ni(x_k) y_i` for every grid row.
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut spectra = SignalSpectra::new(y);
        self.apply_spectra(&mut spectra)
    }

    pub fn apply_spectra(&self, signal: &mut SignalSpectra<'_>) -> Result<Vec<f64>> {
        let y = signal.y;
        if y.len() != self.n {
            return Err(AcbError::Shape(format!(
                "smoother built for n={}, got {} observations",
                self.n,
                y.len()
            )));
        }
        let dim = self.config.l + 1;
        let points = self.len();
        match &self.fft {
            None => Ok((1..=points)
                .map(|k| {
                    let (first, last) = Self::window(self.n, self.mult, self.reach, k);
                    let v = self.row_v(k);
                    let mut acc = 0.0;
                    for (p, g) in self.taps.iter().enumerate() {
                        let mut c = 0.0;
                        for i in first..=last {
                            c += g[i * self.mult + self.reach - k] * y[i - 1];
                        }
                        acc += v[p] * c;
                    }
                    acc
                })
                .collect()),
            Some(path) => {
                let spectrum = signal.spectrum(self.mult, path);
                let scale = 1.0 / path.size as f64;
                let mut values = vec![0.0; points];
                let mut buf = vec![Complex64::new(0.0, 0.0); path.size];
                for (pair, g_hat) in path.spectra.iter().enumerate() {
                    for ((b, s), g) in buf.iter_mut().zip(spectrum.iter()).zip(g_hat) {
                        *b = s * g;
                    }
                    path.inverse.process(&mut buf);
                    let p = 2 * pair;
                    for (k, value) in values.iter_mut().enumerate() {
                        let v = &self.coef[k * dim..(k + 1) * dim];
                        let c = buf[k + 1] * scale;
                        *value += v[p] * c.re;
                        if p + 1 < dim {
                            *value += v[p + 1] * c.im;
                        }
                    }
                }
                Ok(values)
            }
        }
    }
}

/// Data vector with its forward FFTs memoized per transform size, so several
/// smoothers can share one transform.
pub struct SignalSpectra<'a> {
    y: &'a [f64],
    cache: Vec<(usize, usize, Vec<Complex64>)>,
}

impl<'a> SignalSpectra<'a> {
    pub fn new(y: &'a [f64]) -> Self {
        Self {
            y,
            cache: Vec::new(),
        }
    }

    fn spectrum(&mut self, mult: usize, path: &FftPath) -> &[Complex64] {
        let pos = self
            .cache
            .iter()
            .position(|(size, m, _)| *size == path.size && *m == mult);
        let pos = match pos {
            Some(p) => p,
            None => {
                let mut buf = vec![Complex64::new(0.0, 0.0); path.size];
                for (i, &v) in self.y.iter().enumerate() {
                    buf[(i + 1) * mult] = Complex64::new(v, 0.0);
                }
                path.forward.process(&mut buf);
                self.cache.push((path.size, mult, buf));
                self.cache.len() - 1
            }
        };
        &self.cache[pos].2
    }
}

/// Where a curve estimate is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalGrid {
    /// The design points `i / n`.
    Design,
    /// `k / (mult n)`, `k = 1..=mult n`.
    Refined(usize),
    /// Arbitrary points in `[0, 1]`.
    Points(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Raw,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub h: f64,
    pub provenance: Provenance,
}

impl CurveEstimate {
    /// Grid maximum of `|self - other|`.
    pub fn sup_distance(&self, other: &[f64]) -> f64 {
        sup_diff(&self.values, other)
    }
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max)
}

fn estimate_values(y: &[f64], h: f64, config: &LocalPolyConfig, grid: &EvalGrid) -> Result<CurveEstimate> {
    let n = y.len();
    let (grid_points, values) = match grid {
        EvalGrid::Design | EvalGrid::Refined(_) => {
            let mult = match grid {
                EvalGrid::Refined(m) => *m,
                _ => 1,
            };
            let s = Smoother::shared(n, h, config, mult)?;
            (s.grid(), s.apply(y)?)
        }
        EvalGrid::Points(points) => {
            let values = points
                .iter()
                .map(|&x| {
                    let (first, w) = window_weights(n, h, config, x)?;
                    Ok(w.iter().zip(&y[first - 1..]).map(|(a, b)| a * b).sum())
                })
                .collect::<Result<Vec<f64>>>()?;
            (points.clone(), values)
        }
    };
    Ok(CurveEstimate {
        grid: grid_points,
        values,
        h,
        provenance: Provenance::Raw,
    })
}

/// `f_n(h)(x) = sum_i W_ni(h, x) Y_i` on `grid`.
pub fn estimate(
    sample: &FixedDesignSample,
    h: f64,
    config: &LocalPolyConfig,
    grid: &EvalGrid,
) -> Result<CurveEstimate> {
    estimate_values(&sample.y, h, config, grid)
}

/// `E f_n(h)(x) = sum_i W_ni(h, x) f(i / n)`.
pub fn exact_mean(
    f: &TruthFunction,
    n: usize,
    h: f64,
    config: &LocalPolyConfig,
    grid: &EvalGrid,
) -> Result<CurveEstimate> {
    check_bandwidth(n, h)?;
    estimate_values(&f.tabulate(n), h, config, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightDiagnostics {
    /// `sup_{i,x} nh |W_ni(x)|`
    pub c1_sup: f64,
    /// `sup_x sum_i |W_ni(x)|`
    pub c1_sum: f64,
    pub locality_ok: bool,
    /// Worst error reproducing `x^q`, `q <= l`, at points of `[h, 1 - h]`.
    pub poly_repro_err: f64,
    /// `sup_x sum_i |W_ni(x)| |(x_i - x) / h|^{l+1}`: the Taylor-remainder
    /// constant of the bias at smoothness `l + 1`.
    pub bias_bound_const: f64,
    /// `sqrt(ln n / (nh))`
    pub variance_proxy: f64,
    /// `sup_x sqrt(nh sum_i W_ni(x)^2)`
    pub l2_const: f64,
}

/// Weight certificates on the grid `k / (4n)`.
pub fn weight_diagnostics(n: usize, h: f64, config: &LocalPolyConfig) -> Result<WeightDiagnostics> {
    weight_diagnostics_on(n, h, config, 4)
}

pub fn weight_diagnostics_on(
    n: usize,
    h: f64,
    config: &LocalPolyConfig,
    mult: usize,
) -> Result<WeightDiagnostics> {
    let s = Smoother::shared(n, h, config, mult)?;
    let nh = n as f64 * h;
    let l = config.l;
    let points = s.len();
    let mut seen_phase = vec![false; mult];
    let rows: Vec<usize> = (1..=points)
        .filter(|&k| {
            if s.is_interior(k) {
                let first = !seen_phase[k % mult];
                seen_phase[k % mult] = true;
                first
            } else {
                true
            }
        })
        .collect();
    let per_row: Vec<(f64, f64, bool, f64, f64, f64)> = rows
        .par_iter()
        .map(|&k| {
            let x = k as f64 / points as f64;
            let (first, w) = s.row(k);
            let mut sup = 0.0f64;
            let mut sum = 0.0;
            let mut sq = 0.0;
            let mut bias = 0.0;
            let mut local = true;
            for (off, &wi) in w.iter().enumerate() {
                let xi = (first + off) as f64 / n as f64;
                sup = sup.max(nh * wi.abs());
                sum += wi.abs();
                sq += wi * wi;
                let u = (xi - x) / h;
                bias += wi.abs() * u.abs().powi(l as i32 + 1);
                if wi != 0.0 && (xi - x).abs() > h * (1.0 + 1e-12) {
                    local = false;
                }
            }
            let mut repro = 0.0f64;
            if x >= h && x <= 1.0 - h {
                for q in 0..=l as i32 {
                    let fitted: f64 = w
                        .iter()
                        .enumerate()
                        .map(|(off, wi)| wi * ((first + off) as f64 / n as f64).powi(q))
                        .sum();
                    repro = repro.max((fitted - x.powi(q)).abs());
                }
            }
            (sup, sum, local, repro, bias, (nh * sq).sqrt())
        })
        .collect();
    let mut d = WeightDiagnostics {
        c1_sup: 0.0,
        c1_sum: 0.0,
        locality_ok: true,
        poly_repro_err: 0.0,
        bias_bound_const: 0.0,
        variance_proxy: ((n as f64).ln() / nh).sqrt(),
        l2_const: 0.0,
    };
    for (sup, sum, local, repro, bias, l2) in per_row {
        d.c1_sup = d.c1_sup.max(sup);
        d.c1_sum = d.c1_sum.max(sum);
        d.locality_ok &= local;
        d.poly_repro_err = d.poly_repro_err.max(repro);
        d.bias_bound_const = d.bias_bound_const.max(bias);
        d.l2_const = d.l2_const.max(l2);
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;

    fn cfg(l: usize, kernel: Kernel) -> LocalPolyConfig {
        LocalPolyConfig::new(l, kernel)
    }

    #[test]
    fn full_window_rectangular_is_the_global_mean() {
        let n = 50;
        for x in [0.0, 0.3, 1.0] {
            let w = weights(n, 1.0, &cfg(0, Kernel::Rectangular), x).unwrap();
            for &wi in &w {
                assert!((wi - 1.0 / n as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn weights_sum_to_one_and_are_local() {
        let n = 200;
        let h = 0.07;
        for l in 0..=3 {
            let c = cfg(l, Kernel::Epanechnikov);
            for k in 0..=40 {
                let x = k as f64 / 40.0;
                let w = weights(n, h, &c, x).unwrap();
                let s: f64 = w.iter().sum();
                assert!((s - 1.0).abs() < 1e-10, "l={l} x={x} sum={s}");
                for (i, wi) in w.iter().enumerate() {
                    if ((i + 1) as f64 / n as f64 - x).abs() > h {
                        assert_eq!(*wi, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn too_few_points_is_reported() {
        let r = weights(100, 0.015, &cfg(3, Kernel::Epanechnikov), 0.5);
        assert!(matches!(r, Err(AcbError::BandwidthTooSmall(_))), "{r:?}");
    }

    #[test]
    fn smoother_rows_match_pointwise_weights() {
        for (n, h, mult, l) in [(64, 0.2, 1, 2), (100, 0.05, 3, 1), (300, 0.3, 1, 2), (97, 0.11, 4, 0)] {
            let c = cfg(l, Kernel::Epanechnikov);
            let s = Smoother::new(n, h, &c, mult).unwrap();
            for k in 1..=s.len() {
                let x = k as f64 / s.len() as f64;
                let (first, w) = s.row(k);
                let dense = weights(n, h, &c, x).unwrap();
                for i in 1..=n {
                    let wi = if i >= first && i < first + w.len() { w[i - first] } else { 0.0 };
                    assert!((wi - dense[i - 1]).abs() < 1e-11, "n={n} k={k} i={i}");
                }
            }
        }
    }

    #[test]
    fn fft_and_direct_paths_agree() {
        let n = 512;
        let y = crate::rng::NoiseStream::normals(5, n);
        for (h, mult) in [(0.2, 1), (0.02, 1), (0.2, 2)] {
            let c = LocalPolyConfig::default();
            let s = Smoother::new(n, h, &c, mult).unwrap();
            let fast = s.apply(&y).unwrap();
            for k in (1..=s.len()).step_by(7) {
                let (first, w) = s.row(k);
                let slow: f64 = w.iter().zip(&y[first - 1..]).map(|(a, b)| a * b).sum();
                assert!((fast[k - 1] - slow).abs() < 1e-12, "h={h} k={k}");
            }
        }
    }

    #[test]
    fn linear_truth_is_reproduced() {
        let n = 512;
        let h = 0.1;
        let f = TruthFunction::linear();
        let s = simulate(&f, n, 0.0, 0).unwrap();
        let est = estimate(&s, h, &cfg(1, Kernel::Epanechnikov), &EvalGrid::Design).unwrap();
        for (x, v) in est.grid.iter().zip(&est.values) {
            if *x >= h && *x <= 1.0 - h {
                assert!((v - f.eval(*x)).abs() < 1e-9);
            }
        }
        let m = exact_mean(&f, n, h, &cfg(1, Kernel::Epanechnikov), &EvalGrid::Design).unwrap();
        assert_eq!(m.values, est.values);
    }

    #[test]
    fn constant_data_gives_constant_estimate() {
        let y = vec![2.5; 300];
        let c = LocalPolyConfig::default();
        let s = Smoother::new(300, 0.25, &c, 1).unwrap();
        for v in s.apply(&y).unwrap() {
            assert!((v - 2.5).abs() < 1e-10);
        }
    }

    #[test]
    fn rectangular_mean_diagnostics() {
        let d = weight_diagnostics(100, 0.25, &cfg(0, Kernel::Rectangular)).unwrap();
        assert!((d.c1_sum - 1.0).abs() < 1e-12);
        assert!(d.locality_ok);
        assert!(d.poly_repro_err < 1e-12);
    }

    #[test]
    fn diagnostics_certify_weights() {
        let d = weight_diagnostics(256, 0.2, &LocalPolyConfig::default()).unwrap();
        assert!(d.locality_ok);
        assert!(d.poly_repro_err < 1e-9);
        assert!(d.c1_sup.is_finite() && d.c1_sum >= 1.0);
    }
}
