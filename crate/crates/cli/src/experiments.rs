//! Experiment modes, looked up by name at run time.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use swipt_lqg::bounds::sweep_bounds;
use swipt_lqg::critical::{critical_alphas, CriticalRegion};
use swipt_lqg::optimizer::{optimize_alpha, OptimizerConfig};
use swipt_lqg::sim::{run_campaign, tail_crossings, SimConfig};
use swipt_lqg::Error;

use crate::config::ExperimentConfig;
use crate::output::{bounds_row, num, Artifact, BOUNDS_HEADER};

/// What a mode produces: text for stdout and tables for the output dir.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub stdout: String,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numerical failure: {0}")]
    Numerical(#[source] Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InfeasibleRegion(m) => Self::Infeasible(m),
            other => Self::Numerical(other),
        }
    }
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, cfg: &ExperimentConfig) -> Result<Report, RunError>;
}

pub struct ExperimentRegistry {
    modes: BTreeMap<&'static str, Box<dyn Experiment>>,
}

impl Default for ExperimentRegistry {
    fn default() -> Self {
        let mut r = Self { modes: BTreeMap::new() };
        r.register(Box::new(Critical));
        r.register(Box::new(Sweep));
        r.register(Box::new(MonteCarlo));
        r.register(Box::new(Optimize));
        r
    }
}

impl ExperimentRegistry {
    pub fn register(&mut self, e: Box<dyn Experiment>) {
        self.modes.insert(e.name(), e);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Experiment> {
        self.modes.get(name).map(|b| b.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.modes.keys().copied()
    }
}

fn comments(cfg: &ExperimentConfig, mode: &str) -> Vec<String> {
    let mut out = vec![
        format!("swipt-lqg {} mode={mode}", env!("CARGO_PKG_VERSION")),
        format!("config_sha256={} seed={}", cfg.raw.sha256(), cfg.run.seed),
    ];
    out.extend(cfg.raw.canonical().lines().filter(|l| !l.is_empty()).map(|l| format!("config: {l}")));
    out
}

fn region(cfg: &ExperimentConfig) -> Result<CriticalRegion, RunError> {
    Ok(critical_alphas(&cfg.plant, &cfg.channel, cfg.run.critical_tol, &cfg.run.opts)?)
}

fn infeasible(r: &CriticalRegion) -> RunError {
    RunError::Infeasible(format!(
        "lower critical split {} is not below upper critical split {}; the cost is unbounded for every split",
        r.alpha_lower, r.alpha_upper_lo
    ))
}

pub struct Critical;

impl Experiment for Critical {
    fn name(&self) -> &'static str {
        "critical"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Report, RunError> {
        let r = region(cfg)?;
        let fields: [(&'static str, String); 8] = [
            ("eta_c", num(r.eta_c)),
            ("gamma_c_lower", num(r.gamma_c_lower)),
            ("gamma_c_upper", num(r.gamma_c_upper)),
            ("gamma_p_max", num(r.gamma_p_max)),
            ("alpha_lower", num(r.alpha_lower)),
            ("alpha_upper_lo", num(r.alpha_upper_lo)),
            ("alpha_upper_hi", num(r.alpha_upper_hi)),
            ("feasible", r.feasible.to_string()),
        ];
        let mut stdout = String::new();
        for (k, v) in &fields {
            writeln!(stdout, "{k:<16} {v}").unwrap();
        }
        if !r.feasible {
            eprint!("{stdout}");
            return Err(infeasible(&r));
        }
        let artifact = Artifact {
            file_name: "critical.csv".into(),
            comments: comments(cfg, self.name()),
            header: fields.iter().map(|(k, _)| *k).collect(),
            rows: vec![fields.into_iter().map(|(_, v)| v).collect()],
        };
        Ok(Report { stdout, artifacts: vec![artifact] })
    }
}

pub struct Sweep;

impl Experiment for Sweep {
    fn name(&self) -> &'static str {
        "sweep"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Report, RunError> {
        let all = sweep_bounds(&cfg.plant, &cfg.channel, &cfg.run.alphas, &cfg.run.opts)?;
        let bounded = all.iter().filter(|b| b.bounded).count();
        let stdout = format!("{} of {} splits bounded\n", bounded, all.len());
        let artifact = Artifact {
            file_name: "sweep.csv".into(),
            comments: comments(cfg, self.name()),
            header: BOUNDS_HEADER.to_vec(),
            rows: all.iter().map(bounds_row).collect(),
        };
        Ok(Report { stdout, artifacts: vec![artifact] })
    }
}

pub struct MonteCarlo;

pub const MONTECARLO_HEADER: [&str; 8] =
    ["alpha", "j_emp", "std_err", "diverged_fraction", "eta_hat", "gamma_hat", "tail_index", "bounded"];

impl Experiment for MonteCarlo {
    fn name(&self) -> &'static str {
        "montecarlo"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Report, RunError> {
        let r = &cfg.run;
        let sim = SimConfig {
            horizon: r.horizon,
            runs: r.runs,
            seed: r.seed,
            alphas: r.alphas.clone(),
            gain_mode: r.gain_mode,
            threads: r.threads,
            ceiling: r.ceiling,
            opts: r.opts.clone(),
        };
        let res = run_campaign(&cfg.plant, &cfg.channel, &sim)?;
        let rows = res
            .per_alpha
            .iter()
            .map(|a| {
                let (j, se) = if a.bounded { (a.j_emp, a.std_err) } else { (f64::INFINITY, f64::INFINITY) };
                vec![
                    num(a.alpha),
                    num(j),
                    num(se),
                    num(a.diverged_fraction),
                    num(a.eta_hat),
                    num(a.gamma_hat),
                    num(a.tail_index),
                    a.bounded.to_string(),
                ]
            })
            .collect();
        let crossings: Vec<String> = tail_crossings(&res.per_alpha).into_iter().map(num).collect();
        let mut stdout = format!(
            "{} of {} splits bounded\n",
            res.per_alpha.iter().filter(|a| a.bounded).count(),
            res.per_alpha.len()
        );
        writeln!(stdout, "tail-index crossings: {}", if crossings.is_empty() { "none".into() } else { crossings.join(", ") })
            .unwrap();
        let mut comments = comments(cfg, self.name());
        comments.push(format!("tail_crossings={}", crossings.join(";")));
        let artifact = Artifact {
            file_name: "montecarlo.csv".into(),
            comments,
            header: MONTECARLO_HEADER.to_vec(),
            rows,
        };
        Ok(Report { stdout, artifacts: vec![artifact] })
    }
}

pub struct Optimize;

impl Experiment for Optimize {
    fn name(&self) -> &'static str {
        "optimize"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Report, RunError> {
        let reg = region(cfg)?;
        if !reg.feasible {
            return Err(infeasible(&reg));
        }
        let oc = OptimizerConfig { delta: cfg.run.delta, warm_start: cfg.run.warm_start, opts: cfg.run.opts.clone() };
        let opt = optimize_alpha(&cfg.plant, &cfg.channel, &reg, &oc)?;
        let stdout = format!(
            "alpha_star {}\nj_max {}\ndelta {}\n",
            num(opt.alpha_star_hat),
            num(opt.j_max_at_opt),
            num(cfg.run.delta)
        );
        let mut comments = comments(cfg, self.name());
        comments.push(format!(
            "alpha_star={} j_max={} delta={}",
            num(opt.alpha_star_hat),
            num(opt.j_max_at_opt),
            num(cfg.run.delta)
        ));
        let artifact = Artifact {
            file_name: "optimize.csv".into(),
            comments,
            header: BOUNDS_HEADER.to_vec(),
            rows: opt.profile.iter().map(bounds_row).collect(),
        };
        Ok(Report { stdout, artifacts: vec![artifact] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mode;

    #[test]
    fn registry_covers_every_mode() {
        let reg = ExperimentRegistry::default();
        let names: Vec<_> = reg.names().collect();
        let mut expect = Mode::NAMES.to_vec();
        expect.sort_unstable();
        assert_eq!(names, expect);
        assert!(reg.get("nonsense").is_none());
    }

    #[test]
    fn error_mapping() {
        assert!(matches!(RunError::from(Error::InfeasibleRegion("x".into())), RunError::Infeasible(_)));
        assert!(matches!(RunError::from(Error::SingularInnovation), RunError::Numerical(_)));
    }
}
