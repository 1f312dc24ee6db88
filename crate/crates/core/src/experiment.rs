//! Convergence-rate experiments: sample from an oracle over a grid of sample
//! sizes, fit with model selection, and record the exact excess risk.
//!
//! Every row draws its randomness from `(base seed, n, trial)` only:
//!
//! ```text
//! row_seed   = mix(base ^ mix(n ^ mix(trial)))
//! data_seed  = row_seed
//! split_seed = mix(row_seed ^ 0x5EED_5EED_5EED_5EED)
//! ```
//!
//! where `mix` is the SplitMix64 finalizer. A row can therefore be rerun in
//! isolation, and the output does not depend on scheduling.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use crate::decorate::MAX_DECORATION_DIM;
use crate::error::{Error, Result};
use crate::forest::{ForestConfig, StoppingRule, DEFAULT_J_MAX};
use crate::oracle::{DistributionOracle, EtaKind, RiskMethod};
use crate::select::{select_model, Algorithm, SelectionConfig, DEFAULT_GRID_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistKind {
    SignedPower,
    Massart,
    Stripe,
}

impl std::str::FromStr for DistKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed-power" => Ok(DistKind::SignedPower),
            "massart" => Ok(DistKind::Massart),
            "stripe" => Ok(DistKind::Stripe),
            other => Err(Error::InvalidParameter(format!("unknown distribution {other:?}"))),
        }
    }
}

impl std::fmt::Display for DistKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistKind::SignedPower => "signed-power",
            DistKind::Massart => "massart",
            DistKind::Stripe => "stripe",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dist: DistKind,
    pub delta: f64,
    pub amp: f64,
    /// Stripe signs per slab, `1` for positive, e.g. `01`.
    pub pattern: String,
    pub axis: usize,
    pub d: usize,
    pub algo: Algorithm,
    pub ngrid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub jmax: u32,
    pub rule: StoppingRule,
    /// Largest budget offered to model selection; `None` for all of them.
    pub m_max: Option<usize>,
    /// Monte Carlo draws when no closed form exists.
    pub mc_samples: usize,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dist: DistKind::SignedPower,
            delta: 1.0,
            amp: 1.0,
            pattern: "01".into(),
            axis: 0,
            d: 1,
            algo: Algorithm::Plain,
            ngrid: (7..=13).map(|k| 1usize << k).collect(),
            trials: 20,
            seed: 0,
            jmax: DEFAULT_J_MAX,
            rule: StoppingRule::SingleSample,
            m_max: None,
            mc_samples: 100_000,
            out: None,
        }
    }
}

/// Keys accepted by [`ExperimentConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "dist", "delta", "amp", "pattern", "axis", "d", "algo", "ngrid", "trials", "seed", "jmax", "rule", "m-max",
    "mc-samples", "out",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse {value:?}")))
}

/// `a..b` means `2^a, ..., 2^b`; a comma list gives the sizes directly.
pub fn parse_ngrid(s: &str) -> Result<Vec<usize>> {
    let grid = if let Some((a, b)) = s.split_once("..") {
        let a: u32 = parse_num("ngrid", a.trim())?;
        let b: u32 = parse_num("ngrid", b.trim())?;
        if a > b || b >= usize::BITS - 1 {
            return Err(Error::InvalidParameter(format!("ngrid: bad exponent range {s:?}")));
        }
        (a..=b).map(|k| 1usize << k).collect()
    } else {
        s.split(',').map(|t| parse_num("ngrid", t.trim())).collect::<Result<Vec<usize>>>()?
    };
    Ok(grid)
}

impl ExperimentConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "dist" => self.dist = value.parse()?,
            "delta" => self.delta = parse_num(key, value)?,
            "amp" => self.amp = parse_num(key, value)?,
            "pattern" => self.pattern = value.to_string(),
            "axis" => self.axis = parse_num(key, value)?,
            "d" => self.d = parse_num(key, value)?,
            "algo" => self.algo = value.parse()?,
            "ngrid" => self.ngrid = parse_ngrid(value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "jmax" => self.jmax = parse_num(key, value)?,
            "rule" => {
                self.rule = match value {
                    "single-sample" => StoppingRule::SingleSample,
                    "occupied" => StoppingRule::OccupiedOnly,
                    other => return Err(Error::InvalidParameter(format!("unknown stopping rule {other:?}"))),
                }
            }
            "m-max" => self.m_max = if value == "all" { None } else { Some(parse_num(key, value)?) },
            "mc-samples" => self.mc_samples = parse_num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            other => return Err(Error::InvalidParameter(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Flat `key = value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("config line {}: expected key = value", i + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn oracle(&self) -> Result<DistributionOracle> {
        let kind = match self.dist {
            DistKind::SignedPower => EtaKind::SignedPower { delta: self.delta },
            DistKind::Massart => EtaKind::Massart { amp: self.amp },
            DistKind::Stripe => {
                let pattern = self
                    .pattern
                    .chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        _ => Err(Error::InvalidParameter(format!("pattern: {c:?} is not 0 or 1"))),
                    })
                    .collect::<Result<Vec<bool>>>()?;
                if !pattern.len().is_power_of_two() {
                    return Err(Error::InvalidParameter("pattern length must be a power of two".into()));
                }
                EtaKind::DyadicStripe { amp: self.amp, level: pattern.len().trailing_zeros(), pattern }
            }
        };
        DistributionOracle::new(self.d, self.axis, kind)
    }

    pub fn validate(&self) -> Result<()> {
        self.oracle()?;
        if self.ngrid.is_empty() || self.ngrid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("ngrid must be nonempty and strictly increasing".into()));
        }
        if self.ngrid[0] < 4 {
            return Err(Error::TooFewSamples { needed: 4, found: self.ngrid[0] });
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidParameter("mc-samples must be at least 1".into()));
        }
        if self.algo == Algorithm::Decorated && self.d > MAX_DECORATION_DIM {
            return Err(Error::DecorationDimension(self.d));
        }
        Ok(())
    }

    fn selection(&self, n: usize) -> SelectionConfig {
        let half = n / 2;
        let grid = match (self.algo, self.m_max) {
            (Algorithm::Uniform, Some(l)) => Some((1..=l.min(half).max(1)).collect()),
            (_, Some(m)) => Some((0..=m.min(half)).collect()),
            (_, None) => None,
        };
        SelectionConfig {
            algorithm: self.algo,
            forest: ForestConfig { j_max: self.jmax, rule: self.rule },
            grid,
            grid_cap: DEFAULT_GRID_CAP,
        }
    }
}

/// SplitMix64 output function.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn row_seed(base: u64, n: usize, trial: usize) -> u64 {
    mix(base ^ mix(n as u64 ^ mix(trial as u64)))
}

pub fn split_seed(row_seed: u64) -> u64 {
    mix(row_seed ^ 0x5EED_5EED_5EED_5EED)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub m_star: usize,
    pub excess_risk: f64,
    pub method: RiskMethod,
    pub wall_secs: f64,
}

/// Fit one `(n, trial)` cell.
pub fn run_row(cfg: &ExperimentConfig, oracle: &DistributionOracle, n: usize, trial: usize) -> Result<RateRow> {
    let start = Instant::now();
    let seed = row_seed(cfg.seed, n, trial);
    let data = oracle.sample(n, seed)?;
    let report = select_model(&data, &cfg.selection(n), split_seed(seed))?;
    let risk = match oracle.excess_risk_exact(&report.classifier) {
        Ok(r) => r,
        Err(Error::UnsupportedExact(_)) => oracle.excess_risk_mc(&report.classifier, cfg.mc_samples, mix(seed))?,
        Err(e) => return Err(e),
    };
    Ok(RateRow {
        n,
        trial,
        seed,
        m_star: report.m_star,
        excess_risk: risk.value,
        method: risk.method,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// All rows in `(n, trial)` order; trials run on the current rayon pool.
pub fn run_rates(cfg: &ExperimentConfig) -> Result<Vec<RateRow>> {
    cfg.validate()?;
    let oracle = cfg.oracle()?;
    let cells: Vec<(usize, usize)> =
        cfg.ngrid.iter().flat_map(|&n| (0..cfg.trials).map(move |t| (n, t))).collect();
    cells.par_iter().map(|&(n, t)| run_row(cfg, &oracle, n, t)).collect()
}

fn method_name(m: RiskMethod) -> &'static str {
    match m {
        RiskMethod::Exact => "exact",
        RiskMethod::MonteCarlo => "monte-carlo",
    }
}

/// Deterministic rate table: wall time is left out so reruns are byte-identical.
pub fn write_rates<W: Write>(writer: W, rows: &[RateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "trial", "seed", "m_star", "excess_risk", "method"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            r.m_star.to_string(),
            r.excess_risk.to_string(),
            method_name(r.method).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing<W: Write>(writer: W, rows: &[RateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "trial", "wall_secs"])?;
    for r in rows {
        w.write_record([r.n.to_string(), r.trial.to_string(), format!("{:.6}", r.wall_secs)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        (values[k / 2 - 1] + values[k / 2]) / 2.0
    }
}

/// Median excess risk per sample size, in grid order.
pub fn medians(rows: &[RateRow]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, Vec<f64>)> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some((n, v)) if *n == r.n => v.push(r.excess_risk),
            _ => out.push((r.n, vec![r.excess_risk])),
        }
    }
    out.into_iter().map(|(n, mut v)| (n, median(&mut v))).collect()
}

/// Least-squares slope of `log y` against `log x`, over points with `y > 0`.
pub fn log_log_slope(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|p| p.1 > 0.0).map(|&(n, y)| ((n as f64).ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Predicted log-log slope `-((1+a) b) / ((2+a) b + d)` of the excess risk.
///
/// `a` is the margin exponent of the oracle. `b` is the largest smoothness
/// the algorithm can exploit: at most 1 for whole-cube leaves, at most 2 with
/// hyperplane leaves, and for the power family also `b (1 - 1/d) < delta`.
/// The uniform grid is credited with Hoelder smoothness `min(1, delta)`. With
/// an infinite margin exponent the prediction is `-1`.
pub fn theoretical_exponent(oracle: &DistributionOracle, algo: Algorithm) -> f64 {
    let d = oracle.dim() as f64;
    let alpha = oracle.margin_exponent();
    if alpha.is_infinite() {
        return -1.0;
    }
    let delta = match oracle.kind() {
        EtaKind::SignedPower { delta } => *delta,
        _ => 1.0,
    };
    let besov = if d > 1.0 { delta / (1.0 - 1.0 / d) } else { f64::INFINITY };
    let beta = match algo {
        Algorithm::Plain => besov.min(1.0),
        Algorithm::Decorated => besov.min(2.0),
        Algorithm::Uniform => delta.min(1.0),
    };
    -((1.0 + alpha) * beta) / ((2.0 + alpha) * beta + d)
}

/// Human-readable summary with per-size medians and the fitted slope.
pub fn summary(cfg: &ExperimentConfig, rows: &[RateRow]) -> Result<String> {
    let oracle = cfg.oracle()?;
    let meds = medians(rows);
    let mut s = String::new();
    let _ = writeln!(s, "dist={} d={} algo={} trials={} seed={}", cfg.dist, cfg.d, cfg.algo, cfg.trials, cfg.seed);
    let _ = writeln!(s, "{:>10} {:>16}", "n", "median_excess");
    for (n, m) in &meds {
        let _ = writeln!(s, "{n:>10} {m:>16.6e}");
    }
    match log_log_slope(&meds) {
        Some(slope) => {
            let _ = writeln!(s, "fitted slope: {slope:.4}");
        }
        None => {
            let _ = writeln!(s, "fitted slope: n/a (fewer than two positive medians)");
        }
    }
    let _ = writeln!(s, "theoretical exponent: {:.4}", theoretical_exponent(&oracle, cfg.algo));
    Ok(s)
}

/// Path of the timing file written next to a rates file.
pub fn timing_path(rates: &std::path::Path) -> PathBuf {
    let stem = rates.file_stem().and_then(|s| s.to_str()).unwrap_or("rates");
    rates.with_file_name(format!("{stem}_timing.csv"))
}
