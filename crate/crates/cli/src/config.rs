//! Experiment configuration: strict TOML parsing, command-line overrides
//! and validation that reports every problem at once.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use swipt_lqg::channels::{db_to_linear, BpskParams, CurveRegistry, SwiptChannel, SwiptLink};
use swipt_lqg::linalg::{Mat, Vector};
use swipt_lqg::model::{validate_plant, PlantCandidate, PlantModel, ValidationMode};
use swipt_lqg::riccati::SolverOptions;
use swipt_lqg::sim::GainMode;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub plant: RawPlant,
    #[serde(default)]
    pub channel: RawChannel,
    #[serde(default)]
    pub bpsk: RawBpsk,
    #[serde(default)]
    pub run: RawRun,
    #[serde(default)]
    pub output: RawOutput,
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPlant {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0: Option<Rows>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0_mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChannel {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_unit: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_tx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_unit: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_e2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control_curve: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensing_curve: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBpsk {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bits_per_packet: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n0_unit: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ceiling: Option<f64>,
    /// Execution detail; never echoed or hashed.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critical_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub div_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    /// Execution detail; never echoed or hashed.
    #[serde(skip_serializing)]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

/// Values supplied on the command line; each one replaces its config entry.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<String>,
    pub alpha_min: Option<f64>,
    pub alpha_max: Option<f64>,
    pub alpha_step: Option<f64>,
    pub delta: Option<f64>,
    pub runs: Option<usize>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub threads: Option<usize>,
}

impl RawConfig {
    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                slot.clone_from(v);
            }
        }
        set(&mut self.run.mode, &o.mode);
        set(&mut self.run.alpha_min, &o.alpha_min);
        set(&mut self.run.alpha_max, &o.alpha_max);
        set(&mut self.run.alpha_step, &o.alpha_step);
        set(&mut self.run.delta, &o.delta);
        set(&mut self.run.runs, &o.runs);
        set(&mut self.run.horizon, &o.horizon);
        set(&mut self.run.seed, &o.seed);
        set(&mut self.run.threads, &o.threads);
        set(&mut self.output.dir, &o.out);
        set(&mut self.output.format, &o.format);
    }

    /// Canonical TOML of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io { path: PathBuf, message: String },
    Parse { line: usize, column: usize, message: String },
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io { path, message } => write!(f, "cannot read {}: {message}", path.display()),
            Self::Parse { line, column, message } => write!(f, "parse error at line {line}, column {column}: {message}"),
            Self::Invalid(list) => {
                write!(f, "{} validation error(s):", list.len())?;
                for e in list {
                    write!(f, "\n  - {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
        ConfigError::Parse { line, column, message: e.message().to_string() }
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

pub fn read_raw(path: &Path) -> Result<RawConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    parse_raw(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Critical,
    Sweep,
    MonteCarlo,
    Optimize,
}

impl Mode {
    pub const NAMES: [&'static str; 4] = ["critical", "sweep", "montecarlo", "optimize"];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "critical" => Some(Self::Critical),
            "sweep" => Some(Self::Sweep),
            "montecarlo" => Some(Self::MonteCarlo),
            "optimize" => Some(Self::Optimize),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        Self::NAMES[self as usize]
    }
}

#[derive(Debug, Clone)]
pub struct RunSettings {
    pub mode: Mode,
    pub alphas: Vec<f64>,
    pub delta: f64,
    pub warm_start: bool,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub gain_mode: GainMode,
    pub ceiling: f64,
    pub threads: Option<usize>,
    pub critical_tol: f64,
    pub opts: SolverOptions,
}

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub raw: RawConfig,
    pub plant: PlantModel,
    pub channel: SwiptChannel,
    pub bpsk: BpskParams,
    pub run: RunSettings,
    pub out_dir: PathBuf,
}

pub const GAIN_UNITS: [&str; 2] = ["db", "linear"];
pub const POWER_UNITS: [&str; 2] = ["W", "mW"];
pub const DENSITY_UNITS: [&str; 2] = ["W/Hz", "mW/Hz"];

fn milli(unit: &str) -> f64 {
    if unit.starts_with("mW") {
        1e-3
    } else {
        1.0
    }
}

struct Collector(Vec<String>);

impl Collector {
    fn need<'a, T>(&mut self, field: &str, v: &'a Option<T>) -> Option<&'a T> {
        if v.is_none() {
            self.0.push(format!("missing field `{field}`"));
        }
        v.as_ref()
    }

    fn choice(&mut self, field: &str, v: Option<&str>, allowed: &[&str]) -> Option<String> {
        let v = v?;
        if allowed.contains(&v) {
            Some(v.to_string())
        } else {
            self.0.push(format!("`{field}` = \"{v}\" is not one of {}", allowed.join(", ")));
            None
        }
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.0.push(msg());
        }
    }

    fn matrix(&mut self, field: &str, rows: &Option<Rows>) -> Option<Mat> {
        let rows = self.need(&format!("plant.{field}"), rows)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || ncols == 0 {
            self.0.push(format!("`plant.{field}` must be a non-empty matrix"));
            return None;
        }
        if rows.iter().any(|r| r.len() != ncols) {
            self.0.push(format!("`plant.{field}` has rows of different lengths"));
            return None;
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Some(Mat::from_row_slice(rows.len(), ncols, &flat))
    }
}

/// Evenly spaced points `min, min+step, …` up to `max`; a final point
/// within `1e-6·step` of `max` is snapped onto it.
pub fn alpha_grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    let span = (max - min) / step;
    let n = (span + 1e-6).floor() as usize;
    (0..=n)
        .map(|k| {
            let a = min + k as f64 * step;
            if (a - max).abs() <= 1e-6 * step {
                max
            } else {
                a.min(max)
            }
        })
        .collect()
}

/// Validates `raw`, collecting every problem found.
pub fn validate(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut c = Collector(Vec::new());

    let p = &raw.plant;
    let mats: Vec<Option<Mat>> = [
        ("a", &p.a),
        ("b", &p.b),
        ("c", &p.c),
        ("q", &p.q),
        ("r", &p.r),
        ("w", &p.w),
        ("u", &p.u),
        ("p0", &p.p0),
    ]
    .into_iter()
    .map(|(name, rows)| c.matrix(name, rows))
    .collect();
    let validation = match c.choice("plant.validation", p.validation.as_deref(), &["permissive", "strict"]).as_deref() {
        Some("strict") => ValidationMode::Strict,
        _ => ValidationMode::Permissive,
    };
    let mut plant = None;
    if let [Some(a), Some(b), Some(cm), Some(q), Some(r), Some(w), Some(u), Some(p0)] = mats.as_slice() {
        let x0_mean = match &p.x0_mean {
            Some(v) => Vector::from_column_slice(v),
            None => Vector::zeros(a.nrows()),
        };
        let cand = PlantCandidate {
            a: a.clone(),
            b: b.clone(),
            c: cm.clone(),
            q: q.clone(),
            r: r.clone(),
            w: w.clone(),
            u: u.clone(),
            x0_mean,
            p0: p0.clone(),
        };
        match validate_plant(&cand, validation) {
            Ok(m) => plant = Some(m),
            Err(e) => c.0.push(format!("plant: {e}")),
        }
    }

    let ch = &raw.channel;
    let gain_unit = c.choice("channel.gain_unit", ch.gain_unit.as_deref().or(Some("db")), &GAIN_UNITS);
    let p_unit = c.choice("channel.p_unit", ch.p_unit.as_deref().or(Some("W")), &POWER_UNITS);
    let gains: Vec<Option<f64>> = [("h_a", ch.h_a), ("h_s", ch.h_s), ("h_e", ch.h_e)]
        .into_iter()
        .map(|(name, v)| c.need(&format!("channel.{name}"), &v).copied())
        .collect();
    let p_tx = c.need("channel.p_tx", &ch.p_tx).copied();
    let registry = CurveRegistry::default();
    let curve_names: Vec<&str> = registry.names().collect();
    let control_curve = c.choice("channel.control_curve", ch.control_curve.as_deref().or(Some("bpsk")), &curve_names);
    let sensing_curve = c.choice("channel.sensing_curve", ch.sensing_curve.as_deref().or(Some("bpsk")), &curve_names);

    let bp = &raw.bpsk;
    let n0_unit = c.choice("bpsk.n0_unit", bp.n0_unit.as_deref().or(Some("W/Hz")), &DENSITY_UNITS);
    let bits = c.need("bpsk.bits_per_packet", &bp.bits_per_packet).copied();
    let t_s = c.need("bpsk.t_s", &bp.t_s).copied();
    let n0 = c.need("bpsk.n0", &bp.n0).copied();
    let bpsk = match (bits, t_s, n0, &n0_unit) {
        (Some(bits), Some(t_s), Some(n0), Some(unit)) => match BpskParams::new(bits, t_s, n0 * milli(unit)) {
            Ok(b) => Some(b),
            Err(e) => {
                c.0.push(format!("bpsk: {e}"));
                None
            }
        },
        _ => None,
    };

    let mut channel = None;
    if let ([Some(h_a), Some(h_s), Some(h_e)], Some(p_tx), Some(gu), Some(pu), Some(bpsk)) =
        (gains.as_slice(), p_tx, &gain_unit, &p_unit, &bpsk)
    {
        let lin = |g: f64| if gu == "db" { db_to_linear(g) } else { g };
        let link = SwiptLink {
            h_a: lin(*h_a),
            h_s: lin(*h_s),
            h_e: lin(*h_e),
            p_tx: p_tx * milli(pu),
            xi: ch.xi.unwrap_or(1.0),
            sigma_e2: ch.sigma_e2.unwrap_or(0.0) * milli(pu),
        };
        if gu == "linear" {
            for (name, g) in [("h_a", link.h_a), ("h_s", link.h_s), ("h_e", link.h_e)] {
                c.check(g > 0.0, || format!("`channel.{name}` must be positive in linear units, got {g}"));
            }
        }
        match link.validate() {
            Ok(()) => {
                if let (Some(cc), Some(sc)) = (&control_curve, &sensing_curve) {
                    let control = registry.build(cc, bpsk).expect("name checked");
                    let sensing = registry.build(sc, bpsk).expect("name checked");
                    channel = Some(SwiptChannel::new(link, control, sensing));
                }
            }
            Err(e) => c.0.push(format!("channel: {e}")),
        }
    }

    let r = &raw.run;
    let mode = match r.mode.as_deref() {
        None => {
            c.0.push(format!("missing field `run.mode` (one of {})", Mode::NAMES.join(", ")));
            None
        }
        Some(m) => c.choice("run.mode", Some(m), &Mode::NAMES).and_then(|m| Mode::parse(&m)),
    };
    let alpha_min = r.alpha_min.unwrap_or(0.0);
    let alpha_max = r.alpha_max.unwrap_or(1.0);
    let alpha_step = r.alpha_step.unwrap_or(0.02);
    c.check((0.0..=1.0).contains(&alpha_min), || format!("`run.alpha_min` must lie in [0, 1], got {alpha_min}"));
    c.check((0.0..=1.0).contains(&alpha_max), || format!("`run.alpha_max` must lie in [0, 1], got {alpha_max}"));
    c.check(alpha_min <= alpha_max, || format!("`run.alpha_min` ({alpha_min}) exceeds `run.alpha_max` ({alpha_max})"));
    c.check(alpha_step > 0.0 && alpha_step.is_finite(), || format!("`run.alpha_step` must be positive, got {alpha_step}"));
    let delta = r.delta.unwrap_or(0.02);
    c.check(delta > 0.0 && delta < 1.0, || format!("`run.delta` must lie in (0, 1), got {delta}"));
    let horizon = r.horizon.unwrap_or(500);
    c.check(horizon >= 1, || "`run.horizon` must be >= 1".into());
    let runs = r.runs.unwrap_or(200);
    c.check(runs >= 1, || "`run.runs` must be >= 1".into());
    c.check(r.threads != Some(0), || "`run.threads` must be >= 1".into());
    let gain_mode = match c
        .choice("run.gain_mode", r.gain_mode.as_deref().or(Some("stationary")), &["stationary", "finite_horizon"])
        .as_deref()
    {
        Some("finite_horizon") => GainMode::FiniteHorizon,
        _ => GainMode::Stationary,
    };
    let ceiling = r.ceiling.unwrap_or(f64::INFINITY);
    c.check(ceiling > 0.0, || format!("`run.ceiling` must be positive, got {ceiling}"));
    let critical_tol = r.critical_tol.unwrap_or(1e-6);
    c.check(critical_tol > 0.0, || format!("`run.critical_tol` must be positive, got {critical_tol}"));
    let defaults = SolverOptions::default();
    let opts = SolverOptions {
        tol: r.tol.unwrap_or(defaults.tol),
        max_iter: r.max_iter.unwrap_or(defaults.max_iter),
        div_threshold: r.div_threshold.unwrap_or(defaults.div_threshold),
    };
    c.check(opts.tol > 0.0, || format!("`run.tol` must be positive, got {}", opts.tol));
    c.check(opts.max_iter >= 1, || "`run.max_iter` must be >= 1".into());
    c.check(opts.div_threshold > 0.0, || format!("`run.div_threshold` must be positive, got {}", opts.div_threshold));

    c.choice("output.format", raw.output.format.as_deref().or(Some("csv")), &["csv"]);

    if !c.0.is_empty() {
        return Err(ConfigError::Invalid(c.0));
    }
    let alphas = alpha_grid(alpha_min, alpha_max, alpha_step);
    let out_dir = raw.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let run = RunSettings {
        mode: mode.expect("checked"),
        alphas,
        delta,
        warm_start: r.warm_start.unwrap_or(true),
        horizon,
        runs,
        seed: r.seed.unwrap_or(0),
        gain_mode,
        ceiling,
        threads: r.threads,
        critical_tol,
        opts,
    };
    Ok(ExperimentConfig {
        plant: plant.expect("checked"),
        channel: channel.expect("checked"),
        bpsk: bpsk.expect("checked"),
        raw,
        run,
        out_dir,
    })
}

/// Reads, overrides and validates.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = read_raw(path)?;
    raw.apply(overrides);
    validate(raw)
}
