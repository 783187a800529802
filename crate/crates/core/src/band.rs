//! Two-regime confidence band: `f_hat +- L r_n(r)` when the undersmoothed
//! estimate is far from `Sigma(s)`, `f_hat +- L r_n(s)` otherwise.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{AcbError, Result};
use crate::lepski::{build_grid, calibrate_m, select_bandwidth_on, LepskiParams};
use crate::local_poly::{sup_diff, window_weights, EvalGrid, LocalPolyConfig, Smoother};
use crate::model::{rate, simulate_values, FixedDesignSample, TruthFunction};
use crate::rng::{derive_seed, label_id};
use crate::stats::{mean, proportion_se, quantile};
use crate::wavelet::{analyze, distance_bounds, distance_upper, shared_family, HolderBall};

/// Which end of the distance surrogate feeds `d_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceSide {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandParams {
    pub r: f64,
    pub s: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub alpha: f64,
    #[serde(rename = "L")]
    pub l_const: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub family: String,
    /// Finest level of the distance transform; `floor(log2 n)` when unset.
    #[serde(rename = "J")]
    pub j_max: Option<u32>,
    pub distance: DistanceSide,
    pub lepski: LepskiParams,
}

impl BandParams {
    /// Parameters with unit constants, ready for calibration.
    pub fn new(r: f64, s: f64, b: f64, alpha: f64, config: LocalPolyConfig) -> Self {
        Self {
            r,
            s,
            b,
            alpha,
            l_const: 1.0,
            kappa: 1.0,
            lambda: 2.0,
            family: crate::model::DEFAULT_FAMILY.to_string(),
            j_max: None,
            distance: DistanceSide::Upper,
            lepski: LepskiParams::new(config, f64::NAN),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r < self.s) {
            return Err(AcbError::Config(format!(
                "need 0 < r < s, got r={}, s={}",
                self.r, self.s
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AcbError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        for (name, v) in [("L", self.l_const), ("kappa", self.kappa), ("lambda", self.lambda), ("B", self.b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AcbError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.lepski.m_const > 0.0 && self.lepski.m_const.is_finite()) {
            return Err(AcbError::Config(format!(
                "Lepski constant M must be > 0, got {}",
                self.lepski.m_const
            )));
        }
        shared_family(&self.family)?;
        Ok(())
    }

    pub fn ball_s(&self) -> Result<HolderBall> {
        HolderBall::new(self.s, self.b)
    }

    /// `tau = kappa r_n(r)`
    pub fn tau(&self, n: usize) -> Result<f64> {
        Ok(self.kappa * rate(self.r, n)?)
    }

    /// `rho_n = lambda r_n(r)`
    pub fn rho_n(&self, n: usize) -> Result<f64> {
        Ok(self.lambda * rate(self.r, n)?)
    }

    /// Undersmoothed bandwidth `(ln n / n)^{1/(2r+1)}`.
    pub fn undersmoothed_h(&self, n: usize) -> f64 {
        let nf = n as f64;
        (nf.ln() / nf).powf(1.0 / (2.0 * self.r + 1.0))
    }

    pub fn level(&self, n: usize) -> u32 {
        self.j_max
            .unwrap_or_else(|| (usize::BITS - 1 - n.leading_zeros()).max(1))
    }
}

/// `f_n(h)` sampled at `k / 2^J`, `k = 0..2^J`.
pub fn dyadic_samples(y: &[f64], h: f64, config: &LocalPolyConfig, j_max: u32) -> Result<Vec<f64>> {
    let n = y.len();
    let size = 1usize << j_max;
    if size >= n && size.is_multiple_of(n) {
        let s = Smoother::shared(n, h, config, size / n)?;
        let mut out = Vec::with_capacity(size);
        out.push(s.value_at_origin(y)?);
        let rows = s.apply(y)?;
        out.extend_from_slice(&rows[..size - 1]);
        Ok(out)
    } else if n.is_multiple_of(size) {
        let stride = n / size;
        let s = Smoother::shared(n, h, config, 1)?;
        let rows = s.apply(y)?;
        let mut out = Vec::with_capacity(size);
        out.push(s.value_at_origin(y)?);
        out.extend((1..size).map(|k| rows[k * stride - 1]));
        Ok(out)
    } else {
        (0..size)
            .map(|k| {
                let (first, w) = window_weights(n, h, config, k as f64 / size as f64)?;
                Ok(w.iter().zip(&y[first - 1..]).map(|(a, b)| a * b).sum())
            })
            .collect()
    }
}

/// Distance surrogate of grid samples `values` (length `2^J`) to `Sigma(s)`.
pub fn distance_of_samples(values: &[f64], params: &BandParams) -> Result<f64> {
    let family = shared_family(&params.family)?;
    let coeffs = analyze(values, &family, 0)?;
    let ball = params.ball_s()?;
    match params.distance {
        DistanceSide::Upper => distance_upper(&coeffs, &ball, &family),
        DistanceSide::Lower => Ok(distance_bounds(&coeffs, &ball, &family)?.lower),
    }
}

/// `d_n = d(f_n(h_r), Sigma(s))` through the wavelet surrogate.
pub fn distance_statistic(sample: &FixedDesignSample, params: &BandParams) -> Result<f64> {
    let h = params.undersmoothed_h(sample.n);
    let values = dyadic_samples(&sample.y, h, &params.lepski.config, params.level(sample.n))?;
    distance_of_samples(&values, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Wide,
    Narrow,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceBand {
    pub grid: Vec<f64>,
    pub center: Vec<f64>,
    pub halfwidth: f64,
    pub regime: Regime,
    pub d_n: f64,
    pub tau: f64,
    pub h_hat: f64,
    pub n: usize,
    pub seed: u64,
    pub params: BandParams,
}

impl ConfidenceBand {
    pub fn diameter(&self) -> f64 {
        2.0 * self.halfwidth
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().map(|c| c - self.halfwidth).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.center.iter().map(|c| c + self.halfwidth).collect()
    }

    /// CSV with a `#` metadata line, then `x,center,lower,upper`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let regime = match self.regime {
            Regime::Wide => "wide",
            Regime::Narrow => "narrow",
        };
        let _ = writeln!(
            out,
            "# regime={regime},d_n={},tau={},L={},n={},seed={}",
            self.d_n, self.tau, self.params.l_const, self.n, self.seed
        );
        out.push_str("x,center,lower,upper\n");
        for (x, c) in self.grid.iter().zip(&self.center) {
            let _ = writeln!(out, "{x},{c},{},{}", c - self.halfwidth, c + self.halfwidth);
        }
        out
    }
}

fn regime_for(d_n: f64, tau: f64) -> Regime {
    if d_n > tau {
        Regime::Wide
    } else {
        Regime::Narrow
    }
}

/// Center from the adaptive estimator, half-width from the regime of `d_n`.
pub fn build_band(sample: &FixedDesignSample, params: &BandParams) -> Result<ConfidenceBand> {
    params.validate()?;
    let n = sample.n;
    let grid = params.lepski.grid(n)?;
    let lepski = select_bandwidth_on(
        sample,
        &grid,
        &params.lepski.config,
        params.lepski.m_const,
        params.lepski.mult,
    )?;
    let d_n = distance_statistic(sample, params)?;
    let tau = params.tau(n)?;
    let regime = regime_for(d_n, tau);
    let halfwidth = params.l_const
        * match regime {
            Regime::Wide => rate(params.r, n)?,
            Regime::Narrow => rate(params.s, n)?,
        };
    Ok(ConfidenceBand {
        grid: lepski.estimate.grid,
        center: lepski.estimate.values,
        halfwidth,
        regime,
        d_n,
        tau,
        h_hat: lepski.h_hat,
        n,
        seed: sample.seed,
        params: params.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandMetrics {
    pub covers: bool,
    pub diameter: f64,
}

pub fn band_metrics_values(band: &ConfidenceBand, truth: &[f64]) -> Result<BandMetrics> {
    if truth.len() != band.center.len() {
        return Err(AcbError::Shape(format!(
            "truth has {} points, band has {}",
            truth.len(),
            band.center.len()
        )));
    }
    let covers = band
        .center
        .iter()
        .zip(truth)
        .all(|(c, f)| c - band.halfwidth <= *f && *f <= c + band.halfwidth);
    Ok(BandMetrics {
        covers,
        diameter: band.diameter(),
    })
}

pub fn band_metrics(band: &ConfidenceBand, truth: &TruthFunction) -> Result<BandMetrics> {
    band_metrics_values(band, &truth.tabulate_on(&band.grid))
}

/// Replicate seed stream for a truth at a sample size.
pub fn stream_id(tag: &str, truth_id: &str, n: usize) -> u64 {
    label_id(&format!("{tag}|{truth_id}|{n}"))
}

/// Values of `truth` on the grid an estimate with multiplier `mult` uses.
pub fn truth_on_estimate_grid(truth: &TruthFunction, n: usize, mult: usize) -> Vec<f64> {
    if mult == 1 {
        truth.tabulate(n)
    } else {
        let points = (mult * n) as f64;
        (1..=mult * n).map(|k| truth.eval(k as f64 / points)).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageCell {
    pub truth_id: String,
    pub n: usize,
    pub reps: usize,
    pub coverage: f64,
    pub coverage_se: f64,
    pub mean_diameter: f64,
    pub max_diameter: f64,
    pub wide_frac: f64,
    pub wide_se: f64,
    pub narrow_diameter: Option<f64>,
    pub wide_diameter: Option<f64>,
}

/// Monte Carlo coverage, diameter and regime frequencies for one truth.
pub fn simulate_coverage(
    params: &BandParams,
    truth: &TruthFunction,
    n: usize,
    sigma: f64,
    reps: usize,
    master_seed: u64,
) -> Result<CoverageCell> {
    params.validate()?;
    let design = truth.tabulate(n);
    let on_grid = truth_on_estimate_grid(truth, n, params.lepski.mult);
    let stream = stream_id("coverage", &truth.id, n);
    let outcomes: Vec<(bool, f64, Regime)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let seed = derive_seed(master_seed, stream, rep);
            let sample = simulate_values(&design, sigma, seed, &truth.id);
            let band = build_band(&sample, params)?;
            let m = band_metrics_values(&band, &on_grid)?;
            Ok((m.covers, m.diameter, band.regime))
        })
        .collect::<Result<_>>()?;
    let covered = outcomes.iter().filter(|o| o.0).count() as f64 / reps as f64;
    let wide = outcomes.iter().filter(|o| o.2 == Regime::Wide).count() as f64 / reps as f64;
    let diameters: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    let of_regime = |r: Regime| outcomes.iter().find(|o| o.2 == r).map(|o| o.1);
    Ok(CoverageCell {
        truth_id: truth.id.clone(),
        n,
        reps,
        coverage: covered,
        coverage_se: proportion_se(covered, reps),
        mean_diameter: mean(&diameters),
        max_diameter: diameters.iter().fold(0.0, |a: f64, &b| a.max(b)),
        wide_frac: wide,
        wide_se: proportion_se(wide, reps),
        narrow_diameter: of_regime(Regime::Narrow),
        wide_diameter: of_regime(Regime::Wide),
    })
}

/// Which class a calibration truth stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelClass {
    /// `Sigma(s)`
    Smooth,
    /// `Sigma~(r, rho_n)`: in `Sigma(r)`, far from `Sigma(s)`
    Far,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruthCalibration {
    pub truth_id: String,
    pub class: PanelClass,
    /// `(1 - alpha/2)` quantile of `||f_hat - f|| / r_n(t_f)`
    pub error_quantile: f64,
    /// `(1 - alpha/4)` quantile of `d_n / r_n(r)` (smooth truths only)
    pub distance_quantile: Option<f64>,
    /// `||E f_n(h_r) - f|| / r_n(r)`
    pub bias_ratio: f64,
    /// Lower distance bound of the truth itself to `Sigma(s)` over `r_n(r)`.
    pub separation_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub params: BandParams,
    pub b_hat: f64,
    pub n: usize,
    pub sigma: f64,
    pub reps: usize,
    pub seed: u64,
    pub m_reps: usize,
    pub truths: Vec<TruthCalibration>,
}

/// Separation of a truth from `Sigma(s)`: the lower distance bound of its
/// samples on `k / 2^J`, `J = level(n) + 2`.
pub fn truth_separation(truth: &TruthFunction, params: &BandParams, n: usize) -> Result<f64> {
    let j = params.level(n) + 2;
    let size = 1usize << j;
    let values: Vec<f64> = (0..size).map(|k| truth.eval(k as f64 / size as f64)).collect();
    let family = shared_family(&params.family)?;
    let coeffs = analyze(&values, &family, 0)?;
    Ok(distance_bounds(&coeffs, &params.ball_s()?, &family)?.lower)
}

/// Calibrate `M` (when unset), `L`, `kappa` and `lambda` on a truth panel.
///
/// `L` is the largest per-truth `(1 - alpha/2)` quantile of the sup-norm error
/// over the rate of the truth's class, `kappa` the largest per-truth
/// `(1 - alpha/4)` quantile of `d_n / r_n(r)` over the smooth truths, and
/// `lambda = 2 (kappa + b_hat)` with `b_hat` the largest undersmoothed bias
/// ratio.
pub fn calibrate_constants(
    base: &BandParams,
    panel: &[(TruthFunction, PanelClass)],
    n: usize,
    sigma: f64,
    reps: usize,
    seed: u64,
) -> Result<CalibrationReport> {
    if reps < 200 {
        return Err(AcbError::Config(format!("calibration needs reps >= 200, got {reps}")));
    }
    if !panel.iter().any(|(_, c)| *c == PanelClass::Smooth) {
        return Err(AcbError::Config("calibration panel needs a Sigma(s) truth".into()));
    }
    let mut params = base.clone();
    let mut m_reps = 0;
    if !(params.lepski.m_const > 0.0 && params.lepski.m_const.is_finite()) {
        let grid = build_grid(n, params.lepski.rho, params.lepski.config.l, params.lepski.capped)?;
        m_reps = reps.max(500);
        params.lepski.m_const =
            calibrate_m(n, sigma, &grid, &params.lepski.config, m_reps, seed, 0.95)?.m_const;
    }
    params.validate()?;
    let r_rate = rate(params.r, n)?;
    let s_rate = rate(params.s, n)?;
    let h_r = params.undersmoothed_h(n);
    let grid = params.lepski.grid(n)?;
    let mut truths = Vec::new();
    for (truth, class) in panel {
        let design = truth.tabulate(n);
        let on_grid = truth_on_estimate_grid(truth, n, params.lepski.mult);
        let stream = stream_id("calibrate", &truth.id, n);
        let per: Vec<(f64, f64)> = (0..reps as u64)
            .into_par_iter()
            .map(|rep| {
                let sample = simulate_values(&design, sigma, derive_seed(seed, stream, rep), &truth.id);
                let est = select_bandwidth_on(
                    &sample,
                    &grid,
                    &params.lepski.config,
                    params.lepski.m_const,
                    params.lepski.mult,
                )?;
                let err = sup_diff(&est.estimate.values, &on_grid);
                let d = if *class == PanelClass::Smooth {
                    distance_statistic(&sample, &params)?
                } else {
                    0.0
                };
                Ok((err, d))
            })
            .collect::<Result<_>>()?;
        let rate_f = match class {
            PanelClass::Smooth => s_rate,
            PanelClass::Far => r_rate,
        };
        let mut errs: Vec<f64> = per.iter().map(|p| p.0 / rate_f).collect();
        errs.sort_by(f64::total_cmp);
        let distance_quantile = (*class == PanelClass::Smooth).then(|| {
            let mut ds: Vec<f64> = per.iter().map(|p| p.1 / r_rate).collect();
            ds.sort_by(f64::total_cmp);
            quantile(&ds, 1.0 - params.alpha / 4.0)
        });
        let mean_curve = crate::local_poly::exact_mean(truth, n, h_r, &params.lepski.config, &EvalGrid::Design)?;
        let bias_ratio = sup_diff(&mean_curve.values, &design) / r_rate;
        truths.push(TruthCalibration {
            truth_id: truth.id.clone(),
            class: *class,
            error_quantile: quantile(&errs, 1.0 - params.alpha / 2.0),
            distance_quantile,
            bias_ratio,
            separation_ratio: truth_separation(truth, &params, n)? / r_rate,
        });
    }
    let l_const = truths.iter().map(|t| t.error_quantile).fold(0.0, f64::max);
    let kappa = truths
        .iter()
        .filter_map(|t| t.distance_quantile)
        .fold(0.0, f64::max);
    let b_hat = truths.iter().map(|t| t.bias_ratio).fold(0.0, f64::max);
    // a zero quantile (noise-free runs) would make the band degenerate
    params.l_const = if l_const > 0.0 { l_const } else { f64::MIN_POSITIVE };
    params.kappa = if kappa > 0.0 { kappa } else { f64::MIN_POSITIVE };
    params.lambda = 2.0 * (params.kappa + b_hat);
    Ok(CalibrationReport {
        params,
        b_hat,
        n,
        sigma,
        reps,
        seed,
        m_reps,
        truths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;
    use crate::wavelet::{spike_set_scaled, WaveletCoefficients};

    fn params() -> BandParams {
        let mut p = BandParams::new(0.75, 2.0, 10.0, 0.05, LocalPolyConfig::default());
        p.lepski.m_const = 1.0;
        p
    }

    #[test]
    fn zero_truth_without_noise_has_zero_distance() {
        let s = simulate(&TruthFunction::zero(), 1024, 0.0, 1).unwrap();
        assert_eq!(distance_statistic(&s, &params()).unwrap(), 0.0);
    }

    #[test]
    fn regime_sets_the_halfwidth() {
        let s = simulate(&TruthFunction::sine(), 512, 1.0, 2).unwrap();
        let mut p = params();
        p.kappa = 1e9;
        let narrow = build_band(&s, &p).unwrap();
        assert_eq!(narrow.regime, Regime::Narrow);
        assert_eq!(narrow.halfwidth, p.l_const * rate(p.s, 512).unwrap());
        assert_eq!(narrow.diameter(), 2.0 * narrow.halfwidth);
        p.kappa = 1e-12;
        let wide = build_band(&s, &p).unwrap();
        assert_eq!(wide.regime, Regime::Wide);
        assert_eq!(wide.halfwidth, p.l_const * rate(p.r, 512).unwrap());
    }

    #[test]
    fn metrics_examples() {
        let s = simulate(&TruthFunction::zero(), 64, 0.0, 1).unwrap();
        let mut band = build_band(&s, &params()).unwrap();
        band.halfwidth = 1.0;
        assert!(band_metrics(&band, &TruthFunction::zero()).unwrap().covers);
        band.halfwidth = 0.0;
        let m = band_metrics(&band, &TruthFunction::sine()).unwrap();
        assert!(!m.covers);
        assert_eq!(m.diameter, 0.0);
    }

    #[test]
    fn csv_layout() {
        let s = simulate(&TruthFunction::sine(), 64, 0.5, 3).unwrap();
        let band = build_band(&s, &params()).unwrap();
        let csv = band.to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# regime="));
        assert_eq!(lines.next().unwrap(), "x,center,lower,upper");
        assert_eq!(lines.count(), 64);
    }

    #[test]
    fn noise_free_spike_distance_matches_single_coefficient() {
        let p = params();
        let n = 4096;
        let family = shared_family(&p.family).unwrap();
        let set = spike_set_scaled(&family, 4, p.r, 10.0).unwrap();
        let truth = TruthFunction::spike(set.clone(), 1).unwrap();
        let s = simulate(&truth, n, 0.0, 1).unwrap();
        let d_n = distance_statistic(&s, &p).unwrap();
        let mut c = WaveletCoefficients::zeros(0, 12).unwrap();
        c.level_mut(4)[set.members[0].translation as usize] = set.members[0].amplitude;
        let closed = distance_upper(&c, &p.ball_s().unwrap(), &family).unwrap();
        let h = p.undersmoothed_h(n);
        let est = crate::local_poly::estimate(&s, h, &p.lepski.config, &EvalGrid::Design).unwrap();
        let smoothing = sup_diff(&est.values, &truth.tabulate(n));
        assert!((d_n - closed).abs() <= 2.0 * smoothing + 1e-3, "{d_n} vs {closed}, smoothing {smoothing}");
    }
}
