//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AcbError, Result};
use crate::local_poly::{Kernel, LocalPolyConfig};
use crate::model::TruthFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Coverage,
    Rates,
    Lowerbound,
    Concentration,
    Calibrate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Coverage => "coverage",
            Experiment::Rates => "rates",
            Experiment::Lowerbound => "lowerbound",
            Experiment::Concentration => "concentration",
            Experiment::Calibrate => "calibrate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = AcbError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "coverage" => Experiment::Coverage,
            "rates" => Experiment::Rates,
            "lowerbound" => Experiment::Lowerbound,
            "concentration" => Experiment::Concentration,
            "calibrate" => Experiment::Calibrate,
            other => return Err(AcbError::Config(format!("unknown experiment '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = AcbError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(AcbError::Config(format!("unknown format '{other}' (csv|json)"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

/// Default smooth panel for `s = 2`.
pub const DEFAULT_SMOOTH: &[&str] = &["zero", "sine", "weierstrass:t=2,K=20", "ball:t=2,B=10,seed=7"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub n: Vec<usize>,
    pub sigma: f64,
    pub r: f64,
    pub s: f64,
    pub b: f64,
    pub l: usize,
    pub kernel: Kernel,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub jobs: Option<usize>,
    /// `Sigma(s)` truths for coverage and calibration.
    pub truths: Vec<String>,
    /// Far-from-`Sigma(s)` truths; empty means the default spike panel.
    pub far: Vec<String>,
    /// Truths of the rates experiment.
    pub rate_truths: Vec<String>,
    pub l_const: Option<f64>,
    pub kappa: Option<f64>,
    pub lambda: Option<f64>,
    pub m_const: Option<f64>,
    pub calib_n: Option<usize>,
    pub calib_reps: usize,
    pub band_family: String,
    pub mult: usize,
    pub rho: f64,
    pub deltas: Vec<i32>,
    pub eta: f64,
    pub test_family: String,
    pub band_test: bool,
    pub h: Vec<f64>,
    pub u_points: usize,
    pub fit_reps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Coverage,
            n: vec![4096],
            sigma: 1.0,
            r: 0.75,
            s: 2.0,
            b: 10.0,
            l: 2,
            kernel: Kernel::Epanechnikov,
            alpha: 0.05,
            reps: 500,
            seed: 42,
            out: None,
            format: Format::Csv,
            jobs: None,
            truths: DEFAULT_SMOOTH.iter().map(|s| s.to_string()).collect(),
            far: Vec::new(),
            rate_truths: vec!["weierstrass:t=1,K=20".into(), "weierstrass:t=2,K=20".into()],
            l_const: None,
            kappa: None,
            lambda: None,
            m_const: None,
            calib_n: None,
            calib_reps: 500,
            band_family: crate::model::DEFAULT_FAMILY.into(),
            mult: 1,
            rho: 2.0,
            deltas: (-3..=4).collect(),
            eta: 0.5,
            test_family: "haar".into(),
            band_test: true,
            h: vec![0.0625],
            u_points: 9,
            fit_reps: 2000,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| AcbError::Config(format!("bad value '{value}' for '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_truths(value: &str) -> Vec<String> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(AcbError::Config(format!("bad value '{value}' for '{key}'"))),
    }
}

fn opt_f64(key: &str, value: &str) -> Result<Option<f64>> {
    match value.trim() {
        "" | "auto" => Ok(None),
        v => parse_num(key, v).map(Some),
    }
}

fn join<T: ToString>(xs: &[T], sep: &str) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(sep)
}

fn opt_str(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl ExperimentConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "experiment" => self.experiment = value.parse()?,
            "n" => self.n = parse_list(key, value)?,
            "sigma" => self.sigma = parse_num(key, value)?,
            "r" => self.r = parse_num(key, value)?,
            "s" => self.s = parse_num(key, value)?,
            "B" => self.b = parse_num(key, value)?,
            "l" => self.l = parse_num(key, value)?,
            "kernel" => self.kernel = value.parse()?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "reps" => self.reps = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "out" => self.out = (!value.is_empty()).then(|| PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            "jobs" => {
                self.jobs = match value {
                    "" | "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "truths" => self.truths = parse_truths(value),
            "far" => self.far = parse_truths(value),
            "rate_truths" => self.rate_truths = parse_truths(value),
            "L" => self.l_const = opt_f64(key, value)?,
            "kappa" => self.kappa = opt_f64(key, value)?,
            "lambda" => self.lambda = opt_f64(key, value)?,
            "M" => self.m_const = opt_f64(key, value)?,
            "calib_n" => {
                self.calib_n = match value {
                    "" | "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "calib_reps" => self.calib_reps = parse_num(key, value)?,
            "band_family" => self.band_family = value.to_string(),
            "mult" => self.mult = parse_num(key, value)?,
            "rho" => self.rho = parse_num(key, value)?,
            "deltas" => self.deltas = parse_list(key, value)?,
            "eta" => self.eta = parse_num(key, value)?,
            "test_family" => self.test_family = value.to_string(),
            "band_test" => self.band_test = parse_bool(key, value)?,
            "h" => self.h = parse_list(key, value)?,
            "u_points" => self.u_points = parse_num(key, value)?,
            "fit_reps" => self.fit_reps = parse_num(key, value)?,
            other => return Err(AcbError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                AcbError::Config(format!("line {}: expected key = value, got '{raw}'", lineno + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Settings from a config file or from the `config` block of a run
    /// manifest.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AcbError::Config(format!("cannot read config {}: {e}", path.display())))?;
        if text.trim_start().starts_with('{') {
            let manifest: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| AcbError::Config(format!("bad manifest {}: {e}", path.display())))?;
            let block = manifest
                .get("config")
                .and_then(|c| c.as_object())
                .ok_or_else(|| AcbError::Config(format!("{} has no config block", path.display())))?;
            for (k, v) in block {
                let v = v
                    .as_str()
                    .ok_or_else(|| AcbError::Config(format!("manifest key '{k}' is not a string")))?;
                self.set(k, v)?;
            }
            Ok(())
        } else {
            self.apply_text(&text)
        }
    }

    /// Every setting as strings; feeding it back through [`Self::set`]
    /// reproduces the config.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("experiment", self.experiment.to_string());
        put("n", join(&self.n, ","));
        put("sigma", self.sigma.to_string());
        put("r", self.r.to_string());
        put("s", self.s.to_string());
        put("B", self.b.to_string());
        put("l", self.l.to_string());
        put("kernel", self.kernel.to_string());
        put("alpha", self.alpha.to_string());
        put("reps", self.reps.to_string());
        put("seed", self.seed.to_string());
        put(
            "out",
            self.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        put("format", self.format.to_string());
        put("truths", self.truths.join(";"));
        put("far", self.far.join(";"));
        put("rate_truths", self.rate_truths.join(";"));
        put("L", opt_str(self.l_const));
        put("kappa", opt_str(self.kappa));
        put("lambda", opt_str(self.lambda));
        put("M", opt_str(self.m_const));
        put("calib_n", self.calib_n.map_or_else(|| "auto".into(), |v| v.to_string()));
        put("calib_reps", self.calib_reps.to_string());
        put("band_family", self.band_family.clone());
        put("mult", self.mult.to_string());
        put("rho", self.rho.to_string());
        put("deltas", join(&self.deltas, ","));
        put("eta", self.eta.to_string());
        put("test_family", self.test_family.clone());
        put("band_test", self.band_test.to_string());
        put("h", join(&self.h, ","));
        put("u_points", self.u_points.to_string());
        put("fit_reps", self.fit_reps.to_string());
        m
    }

    pub fn local_poly(&self) -> LocalPolyConfig {
        LocalPolyConfig::new(self.l, self.kernel)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() {
            return Err(AcbError::Config("n list is empty".into()));
        }
        if let Some(&n) = self.n.iter().find(|&&n| n < 8) {
            return Err(AcbError::Config(format!("n must be >= 8, got {n}")));
        }
        if self.reps < 1 {
            return Err(AcbError::Config("reps must be >= 1".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(AcbError::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.jobs == Some(0) {
            return Err(AcbError::Config("jobs must be >= 1".into()));
        }
        if self.mult == 0 {
            return Err(AcbError::Config("mult must be >= 1".into()));
        }
        self.local_poly().validate()?;
        for id in self.truths.iter().chain(&self.far).chain(&self.rate_truths) {
            TruthFunction::parse(id)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines_and_comments() {
        let cfg = ExperimentConfig::parse_str(
            "# coverage run\nexperiment = rates\nn = 512, 1024\nB=5 # radius\ntruths = zero; weierstrass:t=1,K=10\nM = auto\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment, Experiment::Rates);
        assert_eq!(cfg.n, vec![512, 1024]);
        assert_eq!(cfg.b, 5.0);
        assert_eq!(cfg.truths, vec!["zero", "weierstrass:t=1,K=10"]);
        assert_eq!(cfg.m_const, None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::parse_str("bogus = 1").is_err());
        assert!(ExperimentConfig::parse_str("n = eight").is_err());
        assert!(ExperimentConfig::parse_str("just a line").is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.n = vec![4];
        assert!(cfg.validate().is_err());
        cfg.n = vec![64];
        cfg.truths = vec!["nonsense".into()];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn map_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("experiment", "lowerbound").unwrap();
        cfg.set("L", "1.25").unwrap();
        cfg.set("deltas", "-2,0,3").unwrap();
        cfg.set("out", "/tmp/x.csv").unwrap();
        let mut back = ExperimentConfig::default();
        for (k, v) in cfg.to_map() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, cfg);
    }
}
