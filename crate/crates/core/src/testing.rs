//! Testing `f = 0` against the spike alternatives: exact likelihood ratios,
//! the averaged statistic `Z_n` and Monte Carlo testing risks.

use rayon::prelude::*;
use serde::Serialize;

use crate::band::{build_band, BandParams, ConfidenceBand};
use crate::error::{AcbError, Result};
use crate::model::simulate_values;
use crate::rng::{derive_seed, label_id, NoiseStream};
use crate::stats::proportion_se;
use crate::wavelet::{shared_family, spike_set, SpikeSet, SpikeTable};

/// `round(log2(n / ln n) / (2r + 1))`
pub fn jstar(n: usize, r: f64) -> u32 {
    let nf = n as f64;
    ((nf / nf.ln()).log2() / (2.0 * r + 1.0)).round().max(0.0) as u32
}

/// `alpha_m^2 = sum_i f_m(i/n)^2`
pub fn alpha_sq(table: &SpikeTable) -> f64 {
    table.energy()
}

/// `exp(alpha zeta / sigma - alpha^2 / (2 sigma^2))`
pub fn likelihood_ratio(alpha: f64, zeta: f64, sigma: f64) -> f64 {
    (alpha * zeta / sigma - alpha * alpha / (2.0 * sigma * sigma)).exp()
}

#[derive(Debug, Clone, Serialize)]
pub struct LikelihoodSample {
    pub zeta: Vec<f64>,
    pub xi: Vec<f64>,
    pub z: f64,
    pub alpha_sq: Vec<f64>,
}

/// The testing problem at level `j`: `f_0 = 0` against `M_n(j)`.
#[derive(Debug, Clone)]
pub struct TestingProblem {
    pub spikes: SpikeSet,
    pub n: usize,
    pub sigma: f64,
    tables: Vec<SpikeTable>,
    alpha_sq: Vec<f64>,
    /// Design index range covered by the spikes.
    span: (usize, usize),
}

impl TestingProblem {
    pub fn new(family: &str, j: u32, r: f64, n: usize, sigma: f64) -> Result<Self> {
        let family = shared_family(family)?;
        let spikes = spike_set(&family, j, r)?;
        Self::from_spikes(spikes, n, sigma)
    }

    pub fn from_spikes(spikes: SpikeSet, n: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(AcbError::Domain(format!("testing needs sigma > 0, got {sigma}")));
        }
        let tables = spikes.tabulate_all(n);
        let alpha_sq: Vec<f64> = tables.iter().map(alpha_sq).collect();
        if let Some(m) = alpha_sq.iter().position(|&a| a == 0.0) {
            return Err(AcbError::Domain(format!(
                "spike m={} vanishes on the design (n={n}, j={})",
                m + 1,
                spikes.j
            )));
        }
        let lo = tables.iter().map(|t| t.start).min().unwrap_or(1);
        let hi = tables
            .iter()
            .map(|t| t.start + t.values.len() - 1)
            .max()
            .unwrap_or(1);
        Ok(Self {
            spikes,
            n,
            sigma,
            tables,
            alpha_sq,
            span: (lo, hi),
        })
    }

    pub fn count(&self) -> usize {
        self.tables.len()
    }

    pub fn tables(&self) -> &[SpikeTable] {
        &self.tables
    }

    pub fn alpha_sq(&self) -> &[f64] {
        &self.alpha_sq
    }

    /// Noise on the spike span, `sigma eps_i` for `i` in `span`.
    fn noise(&self, seed: u64) -> Vec<f64> {
        let (lo, hi) = self.span;
        let mut out = vec![0.0; hi - lo + 1];
        NoiseStream::new(seed).fill((lo - 1) as u64, &mut out);
        out.iter_mut().for_each(|v| *v *= self.sigma);
        out
    }

    /// Likelihood ratios from observations restricted to the span.
    fn likelihood(&self, y_span: &[f64]) -> LikelihoodSample {
        let lo = self.span.0;
        let mut zeta = Vec::with_capacity(self.count());
        let mut xi = Vec::with_capacity(self.count());
        for (t, &a2) in self.tables.iter().zip(&self.alpha_sq) {
            let alpha = a2.sqrt();
            let off = t.start - lo;
            let dot: f64 = t.values.iter().zip(&y_span[off..]).map(|(f, y)| f * y).sum();
            let z = dot / (alpha * self.sigma);
            zeta.push(z);
            xi.push(likelihood_ratio(alpha, z, self.sigma));
        }
        let z = xi.iter().sum::<f64>() / xi.len() as f64;
        LikelihoodSample {
            zeta,
            xi,
            z,
            alpha_sq: self.alpha_sq.clone(),
        }
    }

    /// Observations on the span under `f_m` (`m` 1-based; 0 is the null).
    fn observe_span(&self, m: usize, seed: u64) -> Vec<f64> {
        let mut y = self.noise(seed);
        if m > 0 {
            let t = &self.tables[m - 1];
            let off = t.start - self.span.0;
            for (yi, f) in y[off..].iter_mut().zip(&t.values) {
                *yi += f;
            }
        }
        y
    }

    /// Full observation vector under `f_m`.
    pub fn observe(&self, m: usize, seed: u64) -> Vec<f64> {
        let truth = if m == 0 {
            vec![0.0; self.n]
        } else {
            self.tables[m - 1].dense(self.n)
        };
        simulate_values(&truth, self.sigma, seed, "testing").y
    }
}

/// `Z_n` and its ingredients from one draw of the null.
pub fn z_statistic(problem: &TestingProblem, seed: u64) -> LikelihoodSample {
    problem.likelihood(&problem.observe_span(0, seed))
}

#[derive(Debug, Clone, Serialize)]
pub struct TestingRiskReport {
    pub test_id: String,
    pub type1: f64,
    pub type1_se: f64,
    pub worst_type2: f64,
    pub worst_type2_se: f64,
    /// Alternative attaining the worst type-II error (1-based).
    pub worst_m: usize,
    pub risk: f64,
    pub risk_se: f64,
    pub replicates: usize,
}

fn report(test_id: String, rejections_null: usize, accepts: &[usize], reps: usize) -> TestingRiskReport {
    let type1 = rejections_null as f64 / reps as f64;
    let (worst_idx, worst) = accepts
        .iter()
        .enumerate()
        .map(|(m, &a)| (m + 1, a as f64 / reps as f64))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    let worst_m = if worst_idx == 0 { 1 } else { worst_idx };
    let type1_se = proportion_se(type1, reps);
    let worst_type2_se = proportion_se(worst, reps);
    TestingRiskReport {
        test_id,
        type1,
        type1_se,
        worst_type2: worst,
        worst_type2_se,
        worst_m,
        risk: type1 + worst,
        risk_se: (type1_se.powi(2) + worst_type2_se.powi(2)).sqrt(),
        replicates: reps,
    }
}

fn stream(tag: &str, problem: &TestingProblem, m: usize) -> u64 {
    label_id(&format!(
        "{tag}|{}|{}|{}|{}|{}",
        problem.spikes.family.name(),
        problem.spikes.j,
        problem.spikes.r,
        problem.n,
        m
    ))
}

/// Risk of "reject iff `Z_n >= 1 - eta`", each alternative simulated under
/// its own law.
pub fn lr_test_risk(problem: &TestingProblem, eta: f64, reps: usize, seed: u64) -> Result<TestingRiskReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(AcbError::Config(format!("eta must lie in (0, 1), got {eta}")));
    }
    if reps < 500 {
        return Err(AcbError::Config(format!("testing risk needs reps >= 500, got {reps}")));
    }
    let threshold = 1.0 - eta;
    let count_rejections = |m: usize| -> usize {
        let id = stream("lr", problem, m);
        (0..reps as u64)
            .into_par_iter()
            .map(|rep| {
                let y = problem.observe_span(m, derive_seed(seed, id, rep));
                usize::from(problem.likelihood(&y).z >= threshold)
            })
            .sum()
    };
    let null = count_rejections(0);
    let accepts: Vec<usize> = (1..=problem.count()).map(|m| reps - count_rejections(m)).collect();
    Ok(report(format!("lr:eta={eta}"), null, &accepts, reps))
}

/// A constant test: risk is exactly 1 either way.
pub fn constant_test_risk(problem: &TestingProblem, reject: bool, reps: usize) -> TestingRiskReport {
    let null = if reject { reps } else { 0 };
    let accepts = vec![if reject { 0 } else { reps }; problem.count()];
    report(format!("constant:{}", u8::from(reject)), null, &accepts, reps)
}

/// `T_n^0 = 1` iff some spike lies inside the band at every grid point.
pub fn band_test(band: &ConfidenceBand, spikes: &SpikeSet) -> bool {
    spikes.members.iter().any(|m| {
        band.grid.iter().zip(&band.center).all(|(&x, &c)| {
            let f = spikes.eval(m, x);
            c - band.halfwidth <= f && f <= c + band.halfwidth
        })
    })
}

/// [`band_test`] against spikes already tabulated on the band grid.
pub fn band_test_tables(band: &ConfidenceBand, tables: &[Vec<f64>]) -> Result<bool> {
    for t in tables {
        if t.len() != band.grid.len() {
            return Err(AcbError::Shape(format!(
                "spike tabulated on {} points, band grid has {}",
                t.len(),
                band.grid.len()
            )));
        }
    }
    Ok(tables.iter().any(|t| {
        t.iter()
            .zip(&band.center)
            .all(|(&f, &c)| c - band.halfwidth <= f && f <= c + band.halfwidth)
    }))
}

/// Risk of the band-induced test `T_n^0`.
pub fn band_test_risk(
    problem: &TestingProblem,
    params: &BandParams,
    reps: usize,
    seed: u64,
) -> Result<TestingRiskReport> {
    let n = problem.n;
    let tables: Vec<Vec<f64>> = if params.lepski.mult == 1 {
        problem.tables.iter().map(|t| t.dense(n)).collect()
    } else {
        let points = (params.lepski.mult * n) as f64;
        problem
            .spikes
            .members
            .iter()
            .map(|m| {
                (1..=params.lepski.mult * n)
                    .map(|k| problem.spikes.eval(m, k as f64 / points))
                    .collect()
            })
            .collect()
    };
    let count_rejections = |m: usize| -> Result<usize> {
        let id = stream("band", problem, m);
        (0..reps as u64)
            .into_par_iter()
            .map(|rep| {
                let y = problem.observe(m, derive_seed(seed, id, rep));
                let sample = crate::model::FixedDesignSample {
                    n,
                    sigma: problem.sigma,
                    y,
                    seed: rep,
                    truth_id: String::new(),
                };
                let band = build_band(&sample, params)?;
                Ok(usize::from(band_test_tables(&band, &tables)?))
            })
            .sum()
    };
    let null = count_rejections(0)?;
    let accepts = (1..=problem.count())
        .map(|m| Ok(reps - count_rejections(m)?))
        .collect::<Result<Vec<usize>>>()?;
    Ok(report("band".into(), null, &accepts, reps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jstar_examples() {
        assert_eq!(jstar(1024, 1.0), 2);
        assert_eq!(jstar(1 << 20, 1.0), 5);
        let mut last = 0;
        for e in 3..30 {
            let j = jstar(1 << e, 1.0);
            assert!(j >= last);
            last = j;
        }
    }

    #[test]
    fn haar_alpha_sq_is_exact() {
        let p = TestingProblem::new("haar", 1, 1.0, 8, 1.0).unwrap();
        assert_eq!(p.count(), 1);
        assert_eq!(p.alpha_sq()[0], 1.0);
        let zero = SpikeTable {
            start: 1,
            values: vec![0.0; 4],
        };
        assert_eq!(alpha_sq(&zero), 0.0);
    }

    #[test]
    fn likelihood_ratio_at_zero() {
        assert!((likelihood_ratio(1.0, 0.0, 1.0) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((likelihood_ratio(1.0, 0.0, 1.0) - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn single_alternative_z_is_its_ratio() {
        let p = TestingProblem::new("haar", 1, 1.0, 64, 1.0).unwrap();
        let s = z_statistic(&p, 3);
        assert_eq!(s.xi.len(), 1);
        assert_eq!(s.z, s.xi[0]);
    }

    #[test]
    fn span_and_dense_observations_agree() {
        let p = TestingProblem::new("db2", 4, 1.0, 256, 0.7).unwrap();
        for m in [0, 2] {
            let dense = p.observe(m, 11);
            let span = p.observe_span(m, 11);
            let (lo, _) = p.span;
            for (k, v) in span.iter().enumerate() {
                assert!((v - dense[lo - 1 + k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_tests_have_unit_risk() {
        let p = TestingProblem::new("haar", 3, 1.0, 256, 1.0).unwrap();
        assert_eq!(constant_test_risk(&p, false, 500).risk, 1.0);
        assert_eq!(constant_test_risk(&p, true, 500).risk, 1.0);
    }

    #[test]
    fn degenerate_problems_are_rejected() {
        assert!(TestingProblem::new("haar", 0, 1.0, 64, 1.0).is_err());
        assert!(TestingProblem::new("haar", 2, 1.0, 64, 0.0).is_err());
        assert!(lr_test_risk(&TestingProblem::new("haar", 2, 1.0, 64, 1.0).unwrap(), 0.5, 10, 1).is_err());
    }
}
