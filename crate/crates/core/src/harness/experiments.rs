//! Monte Carlo drivers behind the `acb` subcommands.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::band::{calibrate_constants, simulate_coverage, BandParams, CalibrationReport, PanelClass};
use crate::concentration::{default_sweep, measure_constants, tail_sweep};
use crate::error::{AcbError, Result};
use crate::lepski::{adaptive_estimate, calibrate_m, LepskiParams};
use crate::local_poly::sup_diff;
use crate::model::{rate, simulate_values, TruthFunction};
use crate::rng::derive_seed;
use crate::stats::{log_log_slope, mean, std_error};
use crate::testing::{band_test_risk, constant_test_risk, jstar, lr_test_risk, TestingProblem, TestingRiskReport};

use super::config::{Experiment, ExperimentConfig};
use super::manifest::{manifest_path, write_file, CalibratedConstants, RunManifest, SEED_RULE};
use super::report::{Cell, Table};

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: Table,
    pub constants: CalibratedConstants,
}

/// Far truths used when the config names none: single periodized wavelets
/// at levels 1 and 2 on the boundary of `Sigma(r)` at radius `B`.
pub fn default_far(r: f64, b: f64, family: &str) -> Vec<String> {
    [(1, 0), (2, 1)]
        .iter()
        .map(|(j, k)| format!("wavelet:j={j},k={k},r={r},scale={b},family={family}"))
        .collect()
}

/// The `Sigma(s)` truths followed by the far truths.
pub fn band_panel(cfg: &ExperimentConfig) -> Result<Vec<(TruthFunction, PanelClass)>> {
    let far = if cfg.far.is_empty() {
        default_far(cfg.r, cfg.b, &cfg.band_family)
    } else {
        cfg.far.clone()
    };
    let mut panel = Vec::new();
    for id in &cfg.truths {
        panel.push((TruthFunction::parse(id)?, PanelClass::Smooth));
    }
    for id in &far {
        panel.push((TruthFunction::parse(id)?, PanelClass::Far));
    }
    Ok(panel)
}

/// Middle entry of the sorted `n` list unless set explicitly.
pub fn calibration_n(cfg: &ExperimentConfig) -> usize {
    cfg.calib_n.unwrap_or_else(|| {
        let mut ns = cfg.n.clone();
        ns.sort_unstable();
        ns[ns.len() / 2]
    })
}

pub fn base_band_params(cfg: &ExperimentConfig) -> BandParams {
    let mut p = BandParams::new(cfg.r, cfg.s, cfg.b, cfg.alpha, cfg.local_poly());
    p.family = cfg.band_family.clone();
    p.lepski.rho = cfg.rho;
    p.lepski.mult = cfg.mult;
    p.lepski.m_const = cfg.m_const.unwrap_or(f64::NAN);
    p
}

fn calibration_constants(report: &CalibrationReport) -> CalibratedConstants {
    CalibratedConstants {
        l_const: Some(report.params.l_const),
        kappa: Some(report.params.kappa),
        lambda: Some(report.params.lambda),
        m_const: Some(report.params.lepski.m_const),
        b_hat: Some(report.b_hat),
        ..Default::default()
    }
}

/// Band parameters from the config, calibrating whatever it leaves unset.
pub fn resolve_band_params(cfg: &ExperimentConfig) -> Result<(BandParams, CalibratedConstants)> {
    let mut params = base_band_params(cfg);
    let n = calibration_n(cfg);
    let mut constants = CalibratedConstants::default();
    if cfg.l_const.is_none() || cfg.kappa.is_none() || cfg.lambda.is_none() {
        let report = calibrate_constants(&params, &band_panel(cfg)?, n, cfg.sigma, cfg.calib_reps, cfg.seed)?;
        constants = calibration_constants(&report);
        params = report.params;
    } else if cfg.m_const.is_none() {
        let grid = params.lepski.grid(n)?;
        let m = calibrate_m(n, cfg.sigma, &grid, &params.lepski.config, cfg.calib_reps.max(500), cfg.seed, 0.95)?;
        params.lepski.m_const = m.m_const;
        constants.m_const = Some(m.m_const);
    }
    if let Some(v) = cfg.l_const {
        params.l_const = v;
    }
    if let Some(v) = cfg.kappa {
        params.kappa = v;
    }
    if let Some(v) = cfg.lambda {
        params.lambda = v;
    }
    constants.l_const = Some(params.l_const);
    constants.kappa = Some(params.kappa);
    constants.lambda = Some(params.lambda);
    constants.m_const = Some(params.lepski.m_const);
    params.validate()?;
    Ok((params, constants))
}

pub fn run_coverage(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (params, constants) = resolve_band_params(cfg)?;
    let panel = band_panel(cfg)?;
    let mut table = Table::new(&[
        "truth",
        "class",
        "n",
        "reps",
        "coverage",
        "coverage_se",
        "mean_diameter",
        "max_diameter",
        "wide_frac",
        "wide_se",
        "narrow_diameter",
        "wide_diameter",
        "r_n_r",
        "r_n_s",
        "L",
        "kappa",
        "lambda",
        "M",
        "sigma",
        "seed",
    ]);
    for (truth, class) in &panel {
        for &n in &cfg.n {
            let cell = simulate_coverage(&params, truth, n, cfg.sigma, cfg.reps, cfg.seed)?;
            table.push(vec![
                truth.id.as_str().into(),
                class_name(*class).into(),
                n.into(),
                cell.reps.into(),
                cell.coverage.into(),
                cell.coverage_se.into(),
                cell.mean_diameter.into(),
                cell.max_diameter.into(),
                cell.wide_frac.into(),
                cell.wide_se.into(),
                cell.narrow_diameter.into(),
                cell.wide_diameter.into(),
                rate(params.r, n)?.into(),
                rate(params.s, n)?.into(),
                params.l_const.into(),
                params.kappa.into(),
                params.lambda.into(),
                params.lepski.m_const.into(),
                cfg.sigma.into(),
                cfg.seed.into(),
            ]);
        }
    }
    Ok(RunOutput { table, constants })
}

fn class_name(c: PanelClass) -> &'static str {
    match c {
        PanelClass::Smooth => "smooth",
        PanelClass::Far => "far",
    }
}

/// Sup-norm risk of the adaptive estimator per replicate, in replicate order.
pub fn adaptive_errors(
    truth: &TruthFunction,
    n: usize,
    sigma: f64,
    params: &LepskiParams,
    reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let design = truth.tabulate(n);
    let on_grid = crate::band::truth_on_estimate_grid(truth, n, params.mult);
    let stream = crate::band::stream_id("rates", &truth.id, n);
    (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let sample = simulate_values(&design, sigma, derive_seed(seed, stream, rep), &truth.id);
            Ok(sup_diff(&adaptive_estimate(&sample, params)?.values, &on_grid))
        })
        .collect()
}

pub fn run_rates(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut ns = cfg.n.clone();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 4 || ns[ns.len() - 1] < 4 * ns[0] {
        return Err(AcbError::Config(format!(
            "rates needs at least 4 sample sizes spanning 2 octaves, got {ns:?}"
        )));
    }
    let base = base_band_params(cfg).lepski;
    let mut constants = CalibratedConstants::default();
    let mut m_per_n = Vec::with_capacity(ns.len());
    for &n in &ns {
        let m = match cfg.m_const {
            Some(m) => m,
            None => {
                let grid = base.grid(n)?;
                calibrate_m(n, cfg.sigma, &grid, &base.config, cfg.calib_reps.max(500), cfg.seed, 0.95)?.m_const
            }
        };
        m_per_n.push(m);
    }
    if cfg.m_const.is_none() {
        constants
            .per_n
            .insert("M_const".into(), ns.iter().copied().zip(m_per_n.iter().copied()).collect());
    } else {
        constants.m_const = cfg.m_const;
    }
    let mut table = Table::new(&[
        "truth",
        "t",
        "n",
        "reps",
        "risk",
        "risk_se",
        "rate",
        "target_slope",
        "slope",
        "slope_lo",
        "slope_hi",
        "M",
        "sigma",
        "seed",
    ]);
    for id in &cfg.rate_truths {
        let truth = TruthFunction::parse(id)?;
        let t = truth
            .t
            .ok_or_else(|| AcbError::Config(format!("rates truth '{id}' has no declared smoothness")))?;
        let mut cells = Vec::with_capacity(ns.len());
        for (&n, &m) in ns.iter().zip(&m_per_n) {
            let mut params = base;
            params.m_const = m;
            let errs = adaptive_errors(&truth, n, cfg.sigma, &params, cfg.reps, cfg.seed)?;
            cells.push((n, mean(&errs), std_error(&errs), m));
        }
        let xs: Vec<f64> = cells.iter().map(|c| c.0 as f64).collect();
        let ys: Vec<f64> = cells.iter().map(|c| c.1).collect();
        let fit = log_log_slope(&xs, &ys);
        let (lo, hi) = fit.slope_interval();
        for (n, risk, se, m) in cells {
            table.push(vec![
                truth.id.as_str().into(),
                t.into(),
                n.into(),
                cfg.reps.into(),
                risk.into(),
                se.into(),
                rate(t, n)?.into(),
                (-t / (2.0 * t + 1.0)).into(),
                fit.slope.into(),
                lo.into(),
                hi.into(),
                m.into(),
                cfg.sigma.into(),
                cfg.seed.into(),
            ]);
        }
    }
    Ok(RunOutput { table, constants })
}

/// Outcome of one `(n, delta)` cell of the lower-bound sweep.
#[derive(Debug, Clone)]
pub struct LowerBoundCell {
    pub n: usize,
    pub j: i64,
    pub jstar: u32,
    pub delta: i32,
    pub alternatives: usize,
    pub status: &'static str,
    pub reports: Vec<TestingRiskReport>,
}

/// Testing risks at `j = jstar + delta`; cells without alternatives carry
/// no reports.
pub fn lower_bound_cell(
    cfg: &ExperimentConfig,
    n: usize,
    delta: i32,
    band: Option<&BandParams>,
) -> Result<LowerBoundCell> {
    let js = jstar(n, cfg.r);
    let j = i64::from(js) + i64::from(delta);
    let mut cell = LowerBoundCell {
        n,
        j,
        jstar: js,
        delta,
        alternatives: 0,
        status: "ok",
        reports: Vec::new(),
    };
    if j < 1 {
        cell.status = "no_alternatives";
        return Ok(cell);
    }
    let problem = match TestingProblem::new(&cfg.test_family, j as u32, cfg.r, n, cfg.sigma) {
        Ok(p) => p,
        Err(AcbError::Config(_)) => {
            cell.status = "no_alternatives";
            return Ok(cell);
        }
        Err(AcbError::Domain(_)) => {
            cell.status = "unresolved";
            return Ok(cell);
        }
        Err(e) => return Err(e),
    };
    cell.alternatives = problem.count();
    cell.reports.push(lr_test_risk(&problem, cfg.eta, cfg.reps, cfg.seed)?);
    if let Some(params) = band {
        cell.reports.push(band_test_risk(&problem, params, cfg.reps, cfg.seed)?);
    }
    cell.reports.push(constant_test_risk(&problem, false, cfg.reps));
    cell.reports.push(constant_test_risk(&problem, true, cfg.reps));
    Ok(cell)
}

/// `lr:eta=0.5` -> `lr`, `constant:1` -> `constant1`.
fn test_name(id: &str) -> String {
    match id.split_once(':') {
        Some(("lr", _)) => "lr".into(),
        Some((head, tail)) => format!("{head}{tail}"),
        None => id.into(),
    }
}

pub fn run_lowerbound(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (band, constants) = if cfg.band_test {
        let (p, c) = resolve_band_params(cfg)?;
        (Some(p), c)
    } else {
        (None, CalibratedConstants::default())
    };
    let mut table = Table::new(&[
        "n",
        "r",
        "j",
        "jstar",
        "delta_from_jstar",
        "test",
        "alternatives",
        "eta",
        "type1",
        "worst_type2",
        "risk",
        "se",
        "status",
        "family",
        "sigma",
        "reps",
        "seed",
    ]);
    let mut deltas = cfg.deltas.clone();
    deltas.sort_unstable();
    deltas.dedup();
    for &n in &cfg.n {
        for &delta in &deltas {
            let cell = lower_bound_cell(cfg, n, delta, band.as_ref())?;
            let prefix = |t: &str| -> Vec<Cell> {
                vec![
                    n.into(),
                    cfg.r.into(),
                    Cell::Int(cell.j),
                    cell.jstar.into(),
                    delta.into(),
                    t.into(),
                    cell.alternatives.into(),
                    cfg.eta.into(),
                ]
            };
            let suffix = |status: &str| -> Vec<Cell> {
                vec![
                    status.into(),
                    cfg.test_family.as_str().into(),
                    cfg.sigma.into(),
                    cfg.reps.into(),
                    cfg.seed.into(),
                ]
            };
            if cell.reports.is_empty() {
                let mut row = prefix("lr");
                row.extend([Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty]);
                row.extend(suffix(cell.status));
                table.push(row);
                continue;
            }
            for rep in &cell.reports {
                let mut row = prefix(&test_name(&rep.test_id));
                row.extend([
                    rep.type1.into(),
                    rep.worst_type2.into(),
                    rep.risk.into(),
                    rep.risk_se.into(),
                ]);
                row.extend(suffix(cell.status));
                table.push(row);
            }
        }
    }
    Ok(RunOutput { table, constants })
}

pub fn run_concentration(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let lp = cfg.local_poly();
    let mut ns = cfg.n.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut hs = cfg.h.clone();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    let mut table = Table::new(&[
        "u",
        "empirical",
        "se",
        "bound",
        "n",
        "h",
        "sigma",
        "c1",
        "c2",
        "reps",
        "seed",
        "sigma0_sq",
        "in_range",
        "dominated",
    ]);
    let mut constants = CalibratedConstants::default();
    for &n in &ns {
        for &h in &hs {
            // a noiseless run keeps the sweep of the unit-noise process
            let fit_sigma = if cfg.sigma > 0.0 { cfg.sigma } else { 1.0 };
            let k = measure_constants(n, h, &lp, fit_sigma, cfg.fit_reps, cfg.seed)?;
            constants.c1 = Some(constants.c1.map_or(k.c1, |c: f64| c.max(k.c1)));
            constants.c2 = Some(constants.c2.map_or(k.c2, |c: f64| c.max(k.c2)));
            for (name, v) in [("c1", k.c1), ("c2", k.c2)] {
                constants.per_n.entry(format!("{name}@h={h}")).or_default().insert(n, v);
            }
            let us = default_sweep(n, h, k.c2, cfg.u_points);
            let rows = tail_sweep(&TruthFunction::zero(), n, h, &lp, cfg.sigma, k, &us, cfg.reps, cfg.seed)?;
            for t in rows {
                let dominated = t.dominated();
                table.push(vec![
                    t.u.into(),
                    t.empirical.into(),
                    t.se.into(),
                    t.bound.into(),
                    t.n.into(),
                    t.h.into(),
                    t.sigma.into(),
                    t.c1.into(),
                    t.c2.into(),
                    t.reps.into(),
                    t.seed.into(),
                    t.sigma0_sq.into(),
                    t.in_range.into(),
                    dominated.into(),
                ]);
            }
        }
    }
    Ok(RunOutput { table, constants })
}

pub fn run_calibrate(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let n = calibration_n(cfg);
    let report = calibrate_constants(
        &base_band_params(cfg),
        &band_panel(cfg)?,
        n,
        cfg.sigma,
        cfg.reps,
        cfg.seed,
    )?;
    let p = &report.params;
    let mut table = Table::new(&[
        "truth",
        "class",
        "error_quantile",
        "distance_quantile",
        "bias_ratio",
        "separation_ratio",
        "separated",
        "L",
        "kappa",
        "lambda",
        "M",
        "b_hat",
        "n",
        "sigma",
        "reps",
        "seed",
    ]);
    for t in &report.truths {
        let separated = match t.class {
            PanelClass::Far => Cell::Bool(t.separation_ratio >= p.lambda),
            PanelClass::Smooth => Cell::Empty,
        };
        table.push(vec![
            t.truth_id.as_str().into(),
            class_name(t.class).into(),
            t.error_quantile.into(),
            t.distance_quantile.into(),
            t.bias_ratio.into(),
            t.separation_ratio.into(),
            separated,
            p.l_const.into(),
            p.kappa.into(),
            p.lambda.into(),
            p.lepski.m_const.into(),
            report.b_hat.into(),
            n.into(),
            cfg.sigma.into(),
            cfg.reps.into(),
            cfg.seed.into(),
        ]);
    }
    Ok(RunOutput {
        table,
        constants: calibration_constants(&report),
    })
}

/// Dispatch on the configured experiment, on the current thread pool.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Coverage => run_coverage(cfg),
        Experiment::Rates => run_rates(cfg),
        Experiment::Lowerbound => run_lowerbound(cfg),
        Experiment::Concentration => run_concentration(cfg),
        Experiment::Calibrate => run_calibrate(cfg),
    }
}

/// Run on a pool of `cfg.jobs` workers, write the report and its manifest
/// when `cfg.out` is set.
pub fn execute(cfg: &ExperimentConfig) -> Result<(RunOutput, RunManifest)> {
    cfg.validate()?;
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let clock = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| AcbError::Config(format!("cannot start worker pool: {e}")))?;
    let output = pool.install(|| run(cfg))?;
    let manifest = RunManifest {
        tool: "acb".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: cfg.experiment.to_string(),
        config: cfg.to_map(),
        constants: output.constants.clone(),
        seed_rule: SEED_RULE.into(),
        rows: output.table.len(),
        started_unix,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    if let Some(out) = &cfg.out {
        write_file(out, &output.table.render(cfg.format))?;
        write_file(&manifest_path(out), &manifest.to_json())?;
    }
    Ok((output, manifest))
}

