//! Tail bounds for `G_n = f_n(h) - E f_n(h)` and their Monte Carlo check.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{AcbError, Result};
use crate::local_poly::{exact_mean, estimate, sup_diff, weight_diagnostics, EvalGrid, LocalPolyConfig};
use crate::model::{simulate_values, TruthFunction};
use crate::rng::{derive_seed, label_id};
use crate::stats::{mean, proportion_se};

/// Points per design interval of the grid standing in for `sup_x`.
pub const TAIL_GRID_MULT: usize = 4;

/// `sigma(h, n) = sqrt(ln n / (nh))`
pub fn sigma_hn(n: usize, h: f64) -> f64 {
    ((n as f64).ln() / (n as f64 * h)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BorellBound {
    pub value: f64,
    /// False when `u` lies below `c2 sigma(h, n)`; `value` is then 1.
    pub in_range: bool,
}

/// `2 exp(-(ln n / (2 sigma c1)) (u / sigma(h, n) - c2)^2)` for
/// `u >= c2 sigma(h, n)`.
pub fn borell_bound(u: f64, n: usize, h: f64, sigma: f64, c1: f64, c2: f64) -> Result<BorellBound> {
    if n < 2 || !(h > 0.0) || !(sigma > 0.0) {
        return Err(AcbError::Domain(format!(
            "borell_bound needs n >= 2, h > 0, sigma > 0 (n={n}, h={h}, sigma={sigma})"
        )));
    }
    let s = sigma_hn(n, h);
    let excess = u / s - c2;
    if excess < 0.0 {
        return Ok(BorellBound {
            value: 1.0,
            in_range: false,
        });
    }
    let value = 2.0 * (-(n as f64).ln() / (2.0 * sigma * c1) * excess * excess).exp();
    Ok(BorellBound { value, in_range: true })
}

/// `2 n^{-C^2 / (2 sigma c1)}`
pub fn kerk_bound(c: f64, n: usize, sigma: f64, c1: f64) -> f64 {
    2.0 * (n as f64).powf(-c * c / (2.0 * sigma * c1))
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub u: f64,
    pub empirical: f64,
    pub se: f64,
    pub bound: f64,
    pub in_range: bool,
    /// `sigma^2 c1^2 / (nh)`
    pub sigma0_sq: f64,
    pub n: usize,
    pub h: f64,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
    pub reps: usize,
    pub seed: u64,
}

impl TailReport {
    pub fn dominated(&self) -> bool {
        self.empirical <= self.bound
    }
}

/// `||G_n||_inf` on the `4n` grid for each replicate, in replicate order.
pub fn sup_samples(
    f: &TruthFunction,
    n: usize,
    h: f64,
    config: &LocalPolyConfig,
    sigma: f64,
    reps: usize,
    seed: u64,
    tag: &str,
) -> Result<Vec<f64>> {
    let grid = EvalGrid::Refined(TAIL_GRID_MULT);
    let center = exact_mean(f, n, h, config, &grid)?;
    let truth = f.tabulate(n);
    let id = label_id(&format!("{tag}|{}|{n}|{h}", f.id));
    (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let sample = simulate_values(&truth, sigma, derive_seed(seed, id, rep), &f.id);
            let est = estimate(&sample, h, config, &grid)?;
            Ok(sup_diff(&est.values, &center.values))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    /// `max(c1_sup, c1_sum)`
    pub c1: f64,
    /// `sqrt(E ||G_n||^2) / sigma(h, n)`, measured.
    pub c2: f64,
    /// `sup_x nh sum_i W_ni(x)^2`
    pub l2_sq: f64,
}

/// Measures `c1` from the weights and fits `c2` from `reps` null replicates.
pub fn measure_constants(
    n: usize,
    h: f64,
    config: &LocalPolyConfig,
    sigma: f64,
    reps: usize,
    seed: u64,
) -> Result<Constants> {
    let d = weight_diagnostics(n, h, config)?;
    let sups = sup_samples(&TruthFunction::zero(), n, h, config, sigma, reps, seed, "c2fit")?;
    let sq: Vec<f64> = sups.iter().map(|s| s * s).collect();
    Ok(Constants {
        c1: d.c1_sup.max(d.c1_sum),
        c2: mean(&sq).sqrt() / sigma_hn(n, h),
        l2_sq: d.l2_const * d.l2_const,
    })
}

/// `k` thresholds evenly spaced over `[c2 sigma(h, n), 3 c2 sigma(h, n)]`.
pub fn default_sweep(n: usize, h: f64, c2: f64, k: usize) -> Vec<f64> {
    let lo = c2 * sigma_hn(n, h);
    if k <= 1 {
        return vec![lo];
    }
    (0..k)
        .map(|i| lo * (1.0 + 2.0 * i as f64 / (k - 1) as f64))
        .collect()
}

/// Exceedance fractions `P(||G_n|| >= u)` over a sweep of `u`.
#[allow(clippy::too_many_arguments)]
pub fn tail_sweep(
    f: &TruthFunction,
    n: usize,
    h: f64,
    config: &LocalPolyConfig,
    sigma: f64,
    constants: Constants,
    us: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<TailReport>> {
    if reps < 1000 {
        return Err(AcbError::Config(format!("empirical tail needs reps >= 1000, got {reps}")));
    }
    let sups = sup_samples(f, n, h, config, sigma, reps, seed, "tail")?;
    let sigma0_sq = sigma * sigma * constants.c1 * constants.c1 / (n as f64 * h);
    us.iter()
        .map(|&u| {
            let hits = sups.iter().filter(|&&s| s >= u).count();
            let empirical = hits as f64 / reps as f64;
            let (bound, in_range) = if sigma > 0.0 {
                let b = borell_bound(u, n, h, sigma, constants.c1, constants.c2)?;
                (b.value, b.in_range)
            } else {
                (0.0, true)
            };
            Ok(TailReport {
                u,
                empirical,
                se: proportion_se(empirical, reps),
                bound,
                in_range,
                sigma0_sq,
                n,
                h,
                sigma,
                c1: constants.c1,
                c2: constants.c2,
                reps,
                seed,
            })
        })
        .collect()
}

/// Single-threshold form of [`tail_sweep`].
#[allow(clippy::too_many_arguments)]
pub fn empirical_tail(
    f: &TruthFunction,
    n: usize,
    h: f64,
    config: &LocalPolyConfig,
    sigma: f64,
    constants: Constants,
    u: f64,
    reps: usize,
    seed: u64,
) -> Result<TailReport> {
    Ok(tail_sweep(f, n, h, config, sigma, constants, &[u], reps, seed)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn borell_boundary_and_monotonicity() {
        let (n, h) = (1024, 0.0625);
        let s = sigma_hn(n, h);
        let b = borell_bound(1.5 * s, n, h, 1.0, 2.0, 1.5).unwrap();
        assert!(b.in_range);
        assert!((b.value - 2.0).abs() < 1e-12);
        let below = borell_bound(s, n, h, 1.0, 2.0, 1.5).unwrap();
        assert!(!below.in_range);
        assert_eq!(below.value, 1.0);
        let mut last = f64::INFINITY;
        for k in 0..20 {
            let v = borell_bound(s * (1.5 + 0.1 * k as f64), n, h, 1.0, 2.0, 1.5).unwrap().value;
            assert!(v < last || k == 0);
            last = v;
        }
        assert!(borell_bound(1.0, 0, h, 1.0, 1.0, 1.0).is_err());
        assert!(borell_bound(1.0, n, -1.0, 1.0, 1.0, 1.0).is_err());
        assert!(borell_bound(1.0, n, h, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn borell_matches_corollary_form() {
        let (n, h, c2) = (100usize, 0.2, 0.7);
        let s = sigma_hn(n, h);
        let u = (c2 + 2f64.sqrt()) * s;
        let b = borell_bound(u, n, h, 1.0, 1.0, c2).unwrap();
        assert!((b.value - 0.02).abs() < 1e-12);
    }

    #[test]
    fn kerk_examples() {
        assert_eq!(kerk_bound(0.0, 100, 1.0, 1.0), 2.0);
        assert!((kerk_bound(2f64.sqrt(), 100, 1.0, 1.0) - 0.02).abs() < 1e-14);
        let c = 0.8;
        let direct = 2.0 * 100f64.powf(-4.0 * c * c / 2.0);
        assert!((kerk_bound(2.0 * c, 100, 1.0, 1.0) - direct).abs() < 1e-15);
    }

    #[test]
    fn noiseless_tail_is_zero() {
        let cfg = LocalPolyConfig::default();
        let k = Constants {
            c1: 2.0,
            c2: 1.0,
            l2_sq: 1.0,
        };
        let r = tail_sweep(&TruthFunction::sine(), 256, 0.1, &cfg, 0.0, k, &[1e-9, 0.1], 1000, 3).unwrap();
        assert!(r.iter().all(|t| t.empirical == 0.0));
    }

    #[test]
    fn tail_does_not_depend_on_truth() {
        let cfg = LocalPolyConfig::default();
        let a = sup_samples(&TruthFunction::zero(), 256, 0.1, &cfg, 1.0, 50, 9, "x").unwrap();
        let mut sine = TruthFunction::sine();
        sine.id = "zero".into();
        let b = sup_samples(&sine, 256, 0.1, &cfg, 1.0, 50, 9, "x").unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pointwise_variance_below_proxy() {
        let cfg = LocalPolyConfig::default();
        for (n, h) in [(256, 0.1), (1024, 0.0625)] {
            let d = weight_diagnostics(n, h, &cfg).unwrap();
            assert!(d.l2_const * d.l2_const <= d.c1_sup.max(d.c1_sum).powi(2));
        }
    }
}
