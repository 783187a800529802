//! Fixed-design Gaussian regression `Y_i = f(i/n) + sigma eps_i`, the rate
//! `r_n(t)` and the library of truth functions.

use std::f64::consts::TAU;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{AcbError, Result};
use crate::rng::NoiseStream;
use crate::wavelet::{
    build_family, spike_set_scaled, HolderBall, SpikeSet, WaveletCoefficients, WaveletFamily,
};

/// Default family for coefficient-defined truths and spikes.
pub const DEFAULT_FAMILY: &str = "db3";

#[derive(Debug, Clone, Serialize)]
pub struct FixedDesignSample {
    pub n: usize,
    pub sigma: f64,
    pub y: Vec<f64>,
    pub seed: u64,
    pub truth_id: String,
}

impl FixedDesignSample {
    /// Design point `x_i = i / n` for `i = 1..=n`.
    pub fn design_point(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }
}

#[derive(Debug, Clone)]
pub enum TruthKind {
    Zero,
    /// `2x - 1`
    Linear,
    /// `sin(2 pi x)`
    Sine,
    /// `sum_{k=0}^{levels} 2^{-kt} sin(2 pi 2^k x)`
    Weierstrass { t: f64, levels: u32 },
    /// Periodized wavelet expansion.
    Coefficients {
        family: WaveletFamily,
        coeffs: WaveletCoefficients,
    },
    /// Member `m` of a spike set.
    Spike { set: SpikeSet, m: usize },
}

#[derive(Debug, Clone)]
pub struct TruthFunction {
    pub id: String,
    pub kind: TruthKind,
    /// Declared smoothness, where known.
    pub t: Option<f64>,
    /// Declared radius, where known.
    pub b: Option<f64>,
}

impl fmt::Display for TruthFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

fn periodic_sum(family: &WaveletFamily, level: u32, x: f64, coeffs: &[f64], scaling: bool) -> f64 {
    let size = coeffs.len() as i64;
    let scale = (level as f64).exp2();
    let norm = (level as f64 / 2.0).exp2();
    let y = scale * x;
    let (a, b) = family.support();
    let lo = (y - b as f64).floor() as i64;
    let hi = (y - a as f64).ceil() as i64;
    let mut acc = 0.0;
    for k in lo..=hi {
        let c = coeffs[k.rem_euclid(size) as usize];
        if c == 0.0 {
            continue;
        }
        let arg = y - k as f64;
        let v = if scaling { family.phi(arg) } else { family.psi(arg) };
        acc += c * v;
    }
    norm * acc
}

impl TruthFunction {
    pub fn zero() -> Self {
        Self::named("zero", TruthKind::Zero)
    }

    pub fn linear() -> Self {
        Self::named("linear", TruthKind::Linear)
    }

    pub fn sine() -> Self {
        Self::named("sine", TruthKind::Sine)
    }

    fn named(id: &str, kind: TruthKind) -> Self {
        Self {
            id: id.to_string(),
            kind,
            t: None,
            b: None,
        }
    }

    /// Weierstrass-type series with `levels + 1` terms.
    pub fn weierstrass(t: f64, levels: u32) -> Result<Self> {
        if !(t > 0.0) {
            return Err(AcbError::Config(format!("weierstrass t must be > 0, got {t}")));
        }
        Ok(Self {
            id: format!("weierstrass:t={t},K={levels}"),
            kind: TruthKind::Weierstrass { t, levels },
            t: Some(t),
            b: None,
        })
    }

    pub fn spike(set: SpikeSet, m: usize) -> Result<Self> {
        if m == 0 || m > set.count() {
            return Err(AcbError::Config(format!(
                "spike index m={m} outside 1..={}",
                set.count()
            )));
        }
        let id = format!(
            "spike:j={},m={m},r={},scale={},family={}",
            set.j,
            set.r,
            set.scale,
            set.family.name()
        );
        let r = set.r;
        let scale = set.scale;
        Ok(Self {
            id,
            kind: TruthKind::Spike { set, m },
            t: Some(r),
            b: Some(scale),
        })
    }

    pub fn from_coefficients(
        id: String,
        family: WaveletFamily,
        coeffs: WaveletCoefficients,
        t: Option<f64>,
        b: Option<f64>,
    ) -> Result<Self> {
        coeffs.check_shape()?;
        Ok(Self {
            id,
            kind: TruthKind::Coefficients { family, coeffs },
            t,
            b,
        })
    }

    /// The periodized `psi_{jk}` with coefficient `scale 2^{-j(r+1/2)}`: on the
    /// boundary of `Sigma(r)` at radius `scale`.
    pub fn boundary_wavelet(
        id: String,
        family: WaveletFamily,
        j: u32,
        k: usize,
        r: f64,
        scale: f64,
    ) -> Result<Self> {
        if !(r > 0.0) || !(scale > 0.0 && scale.is_finite()) {
            return Err(AcbError::Config(format!("wavelet truth needs r > 0 and scale > 0 in '{id}'")));
        }
        if j > 20 || k >= 1usize << j {
            return Err(AcbError::Config(format!("wavelet index (j={j}, k={k}) out of range in '{id}'")));
        }
        let mut coeffs = WaveletCoefficients::zeros(0, j + 1)?;
        coeffs.level_mut(j)[k] = scale * (-(j as f64) * (r + 0.5)).exp2();
        Self::from_coefficients(id, family, coeffs, Some(r), Some(scale))
    }

    /// Parse a truth id such as `sine`, `weierstrass:t=2`,
    /// `ball:t=2,B=10,seed=7` or `spike:j=5,m=3,r=1`.
    pub fn parse(id: &str) -> Result<Self> {
        let id = id.trim();
        let (head, rest) = id.split_once(':').unwrap_or((id, ""));
        let mut params = Params::parse(rest, id)?;
        let truth = match head {
            "zero" => Self::zero(),
            "linear" => Self::linear(),
            "sine" => Self::sine(),
            "weierstrass" => {
                let t = params.take_f64("t")?.unwrap_or(1.0);
                let levels = params.take_u64("K")?.unwrap_or(20) as u32;
                Self::weierstrass(t, levels)?
            }
            "ball" => {
                let t = params.required_f64("t")?;
                let b = params.required_f64("B")?;
                let seed = params.take_u64("seed")?.unwrap_or(0);
                let j_max = params.take_u64("J")?.unwrap_or(10) as u32;
                let family = build_family(&params.take_str("family").unwrap_or(DEFAULT_FAMILY.into()))?;
                let ball = HolderBall::new(t, b).map_err(|e| AcbError::Config(e.to_string()))?;
                random_ball_function(&family, &ball, j_max, seed)?
            }
            "spike" => {
                let j = params.required_f64("j")? as u32;
                let m = params.required_f64("m")? as usize;
                let r = params.required_f64("r")?;
                let scale = params.take_f64("scale")?.unwrap_or(1.0);
                let family = build_family(&params.take_str("family").unwrap_or(DEFAULT_FAMILY.into()))?;
                Self::spike(spike_set_scaled(&family, j, r, scale)?, m)?
            }
            "wavelet" => {
                let j = params.required_f64("j")? as u32;
                let k = params.take_u64("k")?.unwrap_or(0) as usize;
                let r = params.required_f64("r")?;
                let scale = params.take_f64("scale")?.unwrap_or(1.0);
                let family = build_family(&params.take_str("family").unwrap_or(DEFAULT_FAMILY.into()))?;
                Self::boundary_wavelet(id.to_string(), family, j, k, r, scale)?
            }
            other => {
                return Err(AcbError::Config(format!("unknown truth '{other}' in '{id}'")));
            }
        };
        params.finish()?;
        Ok(truth)
    }

    /// `f(x)`; coefficient-defined truths are periodized.
    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            TruthKind::Zero => 0.0,
            TruthKind::Linear => 2.0 * x - 1.0,
            TruthKind::Sine => (TAU * x).sin(),
            TruthKind::Weierstrass { t, levels } => (0..=*levels)
                .map(|k| {
                    let f = (k as f64).exp2();
                    (-(k as f64) * t).exp2() * (TAU * (f * x).fract()).sin()
                })
                .sum(),
            TruthKind::Coefficients { family, coeffs } => {
                let mut v = periodic_sum(family, coeffs.j0, x, &coeffs.phi, true);
                for (j, level) in coeffs.levels() {
                    v += periodic_sum(family, j, x, level, false);
                }
                v
            }
            TruthKind::Spike { set, m } => set.eval(&set.members[m - 1], x),
        }
    }

    /// Values at the design points `i / n`, `i = 1..=n`.
    pub fn tabulate(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|i| self.eval(i as f64 / n as f64)).collect()
    }

    pub fn tabulate_on(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.eval(x)).collect()
    }

    /// Declared Hölder ball, when both `t` and `B` are known.
    pub fn declared_ball(&self) -> Option<HolderBall> {
        match (self.t, self.b) {
            (Some(t), Some(b)) => HolderBall::new(t, b).ok(),
            _ => None,
        }
    }
}

struct Params {
    entries: Vec<(String, String)>,
    source: String,
}

impl Params {
    fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                AcbError::Config(format!("malformed parameter '{part}' in '{source}'"))
            })?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Self {
            entries,
            source: source.to_string(),
        })
    }

    fn take_str(&mut self, key: &str) -> Option<String> {
        let pos = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(pos).1)
    }

    fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.take_str(key)
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    AcbError::Config(format!("bad value '{v}' for {key} in '{}'", self.source))
                })
            })
            .transpose()
    }

    fn take_u64(&mut self, key: &str) -> Result<Option<u64>> {
        self.take_str(key)
            .map(|v| {
                v.parse::<u64>().map_err(|_| {
                    AcbError::Config(format!("bad value '{v}' for {key} in '{}'", self.source))
                })
            })
            .transpose()
    }

    fn required_f64(&mut self, key: &str) -> Result<f64> {
        self.take_f64(key)?.ok_or_else(|| {
            AcbError::Config(format!("missing parameter {key} in '{}'", self.source))
        })
    }

    fn finish(self) -> Result<()> {
        match self.entries.first() {
            Some((k, _)) => Err(AcbError::Config(format!(
                "unknown parameter {k} in '{}'",
                self.source
            ))),
            None => Ok(()),
        }
    }
}

/// Sample from precomputed truth values at the design points.
pub fn simulate_values(truth_values: &[f64], sigma: f64, seed: u64, truth_id: &str) -> FixedDesignSample {
    let n = truth_values.len();
    let mut y = Vec::with_capacity(n);
    if sigma == 0.0 {
        y.extend_from_slice(truth_values);
    } else {
        let mut noise = vec![0.0; n];
        NoiseStream::new(seed).fill(0, &mut noise);
        y.extend(truth_values.iter().zip(&noise).map(|(f, z)| f + sigma * z));
    }
    FixedDesignSample {
        n,
        sigma,
        y,
        seed,
        truth_id: truth_id.to_string(),
    }
}

/// `y_i = f(i/n) + sigma z_i`, with `z_i` the `i`-th normal of the stream `seed`.
pub fn simulate(f: &TruthFunction, n: usize, sigma: f64, seed: u64) -> Result<FixedDesignSample> {
    if n < 2 {
        return Err(AcbError::Domain(format!("n must be >= 2, got {n}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(AcbError::Domain(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(simulate_values(&f.tabulate(n), sigma, seed, &f.id))
}

/// `r_n(t) = (ln n / n)^{t / (2t + 1)}`.
pub fn rate(t: f64, n: usize) -> Result<f64> {
    if n <= 2 {
        return Err(AcbError::Domain(format!("rate needs n >= 3, got {n}")));
    }
    if !(t > 0.0) {
        return Err(AcbError::Domain(format!("rate needs t > 0, got {t}")));
    }
    let nf = n as f64;
    Ok((nf.ln() / nf).powf(t / (2.0 * t + 1.0)))
}

/// Uniform draw of every coefficient inside its `Sigma(t)` threshold.
pub fn random_ball_function(
    family: &WaveletFamily,
    ball: &HolderBall,
    j_max: u32,
    seed: u64,
) -> Result<TruthFunction> {
    let mut coeffs = WaveletCoefficients::zeros(0, j_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in coeffs.phi.iter_mut() {
        *v = rng.gen_range(-ball.b..=ball.b);
    }
    for j in 0..j_max {
        let thr = ball.threshold(j);
        for v in coeffs.level_mut(j) {
            *v = rng.gen_range(-thr..=thr);
        }
    }
    let id = format!(
        "ball:t={},B={},seed={seed},J={j_max},family={}",
        ball.t,
        ball.b,
        family.name()
    );
    TruthFunction::from_coefficients(id, family.clone(), coeffs, Some(ball.t), Some(ball.b))
}
