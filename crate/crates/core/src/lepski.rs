//! Lepski bandwidth selection over a geometric grid.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{AcbError, Result};
use crate::local_poly::{
    exact_mean, sup_diff, CurveEstimate, EvalGrid, LocalPolyConfig, Provenance, SignalSpectra,
    Smoother,
};
use crate::model::{FixedDesignSample, TruthFunction};
use crate::rng::{derive_seed, label_id, NoiseStream};
use crate::stats::quantile;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthGrid {
    pub rho: f64,
    /// Decreasing `rho^-k`.
    pub values: Vec<f64>,
    /// `(ln n)^2 / n`
    pub floor: f64,
    /// `(ln n / n)^{1/(2l+1)}` when capped.
    pub cap: Option<f64>,
}

impl BandwidthGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        *self.values.last().expect("nonempty grid")
    }
}

/// `{rho^-k : rho^-k > (ln n)^2 / n}`, optionally truncated above at
/// `(ln n / n)^{1/(2l+1)}`.
pub fn build_grid(n: usize, rho: f64, l: usize, capped: bool) -> Result<BandwidthGrid> {
    if !(rho > 1.0 && rho.is_finite()) {
        return Err(AcbError::Config(format!("grid ratio must be > 1, got {rho}")));
    }
    if n < 8 {
        return Err(AcbError::Config(format!("grid needs n >= 8, got {n}")));
    }
    let nf = n as f64;
    let floor = nf.ln().powi(2) / nf;
    let cap = capped.then(|| (nf.ln() / nf).powf(1.0 / (2 * l + 1) as f64));
    let mut values = Vec::new();
    let mut k = 0i32;
    loop {
        let h = rho.powi(-k);
        if h <= floor {
            break;
        }
        if cap.is_none_or(|c| h <= c) {
            values.push(h);
        }
        k += 1;
    }
    if values.is_empty() {
        return Err(AcbError::Config(format!(
            "empty bandwidth grid for n={n}, rho={rho}, l={l} (floor {floor:.4}, cap {cap:?})"
        )));
    }
    Ok(BandwidthGrid {
        rho,
        values,
        floor,
        cap,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LepskiResult {
    pub h_hat: f64,
    /// Position of `h_hat` in the grid (0 = largest bandwidth).
    pub index: usize,
    pub m_const: f64,
    /// `pairwise[a][b - a - 1] = ||f_n(h_a) - f_n(h_b)||_inf` for `b > a`.
    pub pairwise: Vec<Vec<f64>>,
    pub estimate: CurveEstimate,
}

impl LepskiResult {
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.pairwise[a][b - a - 1]
    }
}

/// `sqrt(M ln n / (n g))`
pub fn threshold(m_const: f64, n: usize, g: f64) -> f64 {
    (m_const * (n as f64).ln() / (n as f64 * g)).sqrt()
}

/// Estimates at every grid bandwidth, sharing one data transform.
pub fn grid_estimates(
    y: &[f64],
    grid: &BandwidthGrid,
    config: &LocalPolyConfig,
    mult: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut spectra = SignalSpectra::new(y);
    grid.values
        .iter()
        .map(|&h| Smoother::shared(y.len(), h, config, mult)?.apply_spectra(&mut spectra))
        .collect()
}

fn pairwise_table(curves: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..curves.len())
        .map(|a| {
            (a + 1..curves.len())
                .map(|b| sup_diff(&curves[a], &curves[b]))
                .collect()
        })
        .collect()
}

/// First (largest) bandwidth whose estimate is within the threshold of every
/// smaller one.
fn lepski_index(pairwise: &[Vec<f64>], grid: &BandwidthGrid, n: usize, m_const: f64) -> usize {
    (0..grid.len())
        .find(|&a| {
            pairwise[a]
                .iter()
                .enumerate()
                .all(|(off, &d)| d <= threshold(m_const, n, grid.values[a + 1 + off]))
        })
        .unwrap_or(grid.len() - 1)
}

pub fn select_bandwidth(
    sample: &FixedDesignSample,
    grid: &BandwidthGrid,
    config: &LocalPolyConfig,
    m_const: f64,
) -> Result<LepskiResult> {
    select_bandwidth_on(sample, grid, config, m_const, 1)
}

/// [`select_bandwidth`] with sup-norms taken on the grid `k / (mult n)`.
pub fn select_bandwidth_on(
    sample: &FixedDesignSample,
    grid: &BandwidthGrid,
    config: &LocalPolyConfig,
    m_const: f64,
    mult: usize,
) -> Result<LepskiResult> {
    if grid.is_empty() {
        return Err(AcbError::Config("empty bandwidth grid".into()));
    }
    if !(m_const > 0.0 && m_const.is_finite()) {
        return Err(AcbError::Config(format!("M must be > 0, got {m_const}")));
    }
    let mut curves = grid_estimates(&sample.y, grid, config, mult)?;
    let pairwise = pairwise_table(&curves);
    let index = lepski_index(&pairwise, grid, sample.n, m_const);
    let h_hat = grid.values[index];
    let points = (sample.n * mult) as f64;
    let estimate = CurveEstimate {
        grid: (1..=sample.n * mult).map(|k| k as f64 / points).collect(),
        values: curves.swap_remove(index),
        h: h_hat,
        provenance: Provenance::Adaptive,
    };
    Ok(LepskiResult {
        h_hat,
        index,
        m_const,
        pairwise,
        estimate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LepskiParams {
    pub rho: f64,
    pub capped: bool,
    pub config: LocalPolyConfig,
    pub m_const: f64,
    pub mult: usize,
}

impl LepskiParams {
    pub fn new(config: LocalPolyConfig, m_const: f64) -> Self {
        Self {
            rho: 2.0,
            capped: true,
            config,
            m_const,
            mult: 1,
        }
    }

    pub fn grid(&self, n: usize) -> Result<BandwidthGrid> {
        build_grid(n, self.rho, self.config.l, self.capped)
    }
}

/// The adaptive estimator `f_n(h_hat)`.
pub fn adaptive_estimate(sample: &FixedDesignSample, params: &LepskiParams) -> Result<CurveEstimate> {
    let grid = params.grid(sample.n)?;
    Ok(select_bandwidth_on(sample, &grid, &params.config, params.m_const, params.mult)?.estimate)
}

/// `M = 16 (sqrt(2 sigma c1 K) + c2)^2`.
pub fn m_formula(sigma: f64, c1: f64, c2: f64, k: f64) -> f64 {
    16.0 * ((2.0 * sigma * c1 * k).sqrt() + c2).powi(2)
}

#[derive(Debug, Clone, Serialize)]
pub struct MCalibration {
    pub m_const: f64,
    pub level: f64,
    pub reps: usize,
    /// Smallest `M` per replicate that keeps `max(grid)`, sorted.
    pub per_replicate: Vec<f64>,
}

/// Smallest `M` for which the selector keeps the largest bandwidth.
pub fn minimal_m(y: &[f64], grid: &BandwidthGrid, config: &LocalPolyConfig, mult: usize) -> Result<f64> {
    let n = y.len();
    let curves = grid_estimates(y, grid, config, mult)?;
    let ln = (n as f64).ln();
    Ok((1..curves.len())
        .map(|b| sup_diff(&curves[0], &curves[b]).powi(2) * n as f64 * grid.values[b] / ln)
        .fold(0.0, f64::max))
}

/// Calibrate `M` so that under `f = 0` the selector keeps `max(grid)` in a
/// fraction `level` of the replicates.
pub fn calibrate_m(
    n: usize,
    sigma: f64,
    grid: &BandwidthGrid,
    config: &LocalPolyConfig,
    reps: usize,
    seed: u64,
    level: f64,
) -> Result<MCalibration> {
    if reps == 0 {
        return Err(AcbError::Config("M calibration needs reps >= 1".into()));
    }
    let stream = label_id("lepski-m") ^ n as u64;
    let mut per: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut y = NoiseStream::normals(derive_seed(seed, stream, rep), n);
            y.iter_mut().for_each(|v| *v *= sigma);
            minimal_m(&y, grid, config, 1)
        })
        .collect::<Result<_>>()?;
    per.sort_by(f64::total_cmp);
    // a hair above the quantile so the replicate sitting on it still passes
    // after the square root round trip; positive even if all agree exactly
    let q = quantile(&per, level) * (1.0 + 1e-9);
    let m_const = if q > 0.0 { q } else { f64::MIN_POSITIVE };
    Ok(MCalibration {
        m_const,
        level,
        reps,
        per_replicate: per,
    })
}

/// Proof oracle `h_f`: largest grid bandwidth with
/// `||E f_n(h) - f||_inf <= sqrt(M)/4 sqrt(ln n / (nh))`.
pub fn oracle_bandwidth(
    f: &TruthFunction,
    n: usize,
    grid: &BandwidthGrid,
    config: &LocalPolyConfig,
    m_const: f64,
) -> Result<f64> {
    let truth = f.tabulate(n);
    for &h in &grid.values {
        let mean = exact_mean(f, n, h, config, &EvalGrid::Design)?;
        let bias = sup_diff(&mean.values, &truth);
        let bound = m_const.sqrt() / 4.0 * ((n as f64).ln() / (n as f64 * h)).sqrt();
        if bias <= bound {
            return Ok(h);
        }
    }
    Ok(grid.min())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;

    #[test]
    fn grid_examples() {
        let g = build_grid(1024, 2.0, 2, false).unwrap();
        assert_eq!(g.values, vec![1.0, 0.5, 0.25, 0.125, 0.0625]);
        assert!((g.floor - 0.046919).abs() < 1e-6);
        let c = build_grid(1024, 2.0, 2, true).unwrap();
        assert_eq!(c.values, vec![0.25, 0.125, 0.0625]);
        assert!((c.cap.unwrap() - 0.36822).abs() < 1e-5);
        let big = build_grid(1 << 20, 2.0, 2, false).unwrap();
        let ratio = big.len() as f64 / g.len() as f64;
        assert!((ratio - 2.0).abs() <= 1.0, "ratio {ratio}");
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(build_grid(1024, 1.0, 2, true).is_err());
        assert!(build_grid(4, 2.0, 2, true).is_err());
        // cap below the floor
        assert!(build_grid(16, 2.0, 0, true).is_err());
    }

    #[test]
    fn polynomial_truth_keeps_largest_bandwidth() {
        let n = 512;
        let config = LocalPolyConfig::default();
        let grid = build_grid(n, 2.0, config.l, true).unwrap();
        let s = simulate(&TruthFunction::zero(), n, 0.0, 1).unwrap();
        let r = select_bandwidth(&s, &grid, &config, 1.0).unwrap();
        assert_eq!(r.h_hat, grid.max());
        assert_eq!(r.estimate.provenance, Provenance::Adaptive);
    }

    #[test]
    fn selection_respects_thresholds() {
        let n = 1024;
        let config = LocalPolyConfig::default();
        let grid = build_grid(n, 2.0, config.l, false).unwrap();
        let s = simulate(&TruthFunction::sine(), n, 1.0, 4).unwrap();
        let r = select_bandwidth(&s, &grid, &config, 2.0).unwrap();
        for b in r.index + 1..grid.len() {
            assert!(r.distance(r.index, b) <= threshold(2.0, n, grid.values[b]));
        }
        for a in 0..r.index {
            assert!((a + 1..grid.len())
                .any(|b| r.distance(a, b) > threshold(2.0, n, grid.values[b])));
        }
    }

    #[test]
    fn formula_value() {
        // 16 (sqrt(2 * 1 * 1 * 2) + 1)^2 = 16 * 9
        assert!((m_formula(1.0, 1.0, 1.0, 2.0) - 144.0).abs() < 1e-12);
    }
}
