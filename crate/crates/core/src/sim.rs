//! Seeded Monte Carlo simulation of the closed loop.
//!
//! Each run draws its own ChaCha8 stream from
//! `seed ^ stream_key(alpha_index, run_index)`, so results do not depend on
//! how runs are scheduled across threads. Within a step the draws happen in
//! a fixed order: measurement noise, sensing arrival, control arrival,
//! process noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::{PowerSplit, SwiptChannel};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::lqg::{backward_gain_pass, filter_predict, filter_update, CovarianceUpdate, FilterState};
use crate::model::PlantModel;
use crate::riccati::{self, ControlForm, SolverOptions};

/// A run is abandoned once any state component exceeds this magnitude.
pub const OVERFLOW_LIMIT: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum GainMode {
    /// Constant gain from the control MARE at the split's η. Falls back to
    /// the finite-horizon schedule where that MARE has no solution.
    #[default]
    Stationary,
    /// Time-varying gains from the backward pass over the run horizon.
    FiniteHorizon,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub gain_mode: GainMode,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Mean costs above this are clipped to unbounded.
    pub ceiling: f64,
    #[serde(skip)]
    pub opts: SolverOptions,
}

impl SimConfig {
    pub fn new(horizon: usize, runs: usize, seed: u64, alphas: Vec<f64>) -> Self {
        Self {
            horizon,
            runs,
            seed,
            alphas,
            gain_mode: GainMode::default(),
            threads: None,
            ceiling: DEFAULT_CEILING,
            opts: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.horizon == 0 {
            problems.push("horizon must be >= 1".to_string());
        }
        if self.runs == 0 {
            problems.push("runs must be >= 1".to_string());
        }
        if self.threads == Some(0) {
            problems.push("threads must be >= 1".to_string());
        }
        if !(self.ceiling > 0.0) {
            problems.push(format!("ceiling must be positive, got {}", self.ceiling));
        }
        for &a in &self.alphas {
            if let Err(e) = PowerSplit::new(a) {
                problems.push(e.to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }
}

pub const DEFAULT_CEILING: f64 = f64::INFINITY;

/// One trajectory's summary. Averages are over the steps actually run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunOutcome {
    /// Time-averaged stage cost, `+∞` if the run overflowed.
    pub cost: f64,
    pub diverged: bool,
    /// Time-averaged `‖x_k − x̂_{k|k}‖²`.
    pub est_err: f64,
    /// Time-averaged `Tr(P_{k|k})`.
    pub trace_p: f64,
    pub steps: usize,
    pub control_arrivals: usize,
    pub sensing_arrivals: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub eta: f64,
    pub gamma: f64,
    /// Mean cost over runs that did not overflow (`+∞` if none survived).
    pub j_emp: f64,
    pub std_err: f64,
    pub diverged_fraction: f64,
    pub eta_hat: f64,
    pub gamma_hat: f64,
    /// Hill estimate of the stage-cost tail index; below one the mean
    /// cost is taken to be infinite.
    pub tail_index: f64,
    /// `tail_index > 1`, at most half the runs overflowed, and the mean
    /// is under the ceiling.
    pub bounded: bool,
    /// Whether the stationary gain was unavailable and the schedule used.
    pub gain_fallback: bool,
    pub runs: Vec<RunOutcome>,
}

impl AlphaResult {
    pub fn run_costs(&self) -> impl Iterator<Item = f64> + '_ {
        self.runs.iter().map(|r| r.cost)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimCampaignResult {
    pub config: SimConfig,
    pub per_alpha: Vec<AlphaResult>,
}

/// Per-run gain source.
#[derive(Debug, Clone)]
pub enum Gains {
    Constant(Mat),
    Schedule(Vec<Mat>),
}

impl Gains {
    fn at(&self, k: usize) -> &Mat {
        match self {
            Self::Constant(l) => l,
            Self::Schedule(seq) => &seq[k.min(seq.len() - 1)],
        }
    }
}

/// Gains for a split; the flag reports a stationary-mode fallback.
pub fn gains_for(
    plant: &PlantModel,
    eta: f64,
    horizon: usize,
    mode: GainMode,
    opts: &SolverOptions,
) -> Result<(Gains, bool)> {
    let schedule = || backward_gain_pass(plant, eta, horizon).map(|s| Gains::Schedule(s.l_seq));
    match mode {
        GainMode::FiniteHorizon => Ok((schedule()?, false)),
        GainMode::Stationary => {
            let solved = match riccati::solve_control_mare(plant, eta, None, opts) {
                Ok(r) if r.converged => Some(r.value),
                Ok(_) | Err(Error::MaxIterExceeded { .. }) => None,
                Err(e) => return Err(e),
            };
            match solved {
                Some(s) => {
                    let form = ControlForm { a: plant.a(), b: plant.b(), w: plant.w(), u: plant.u() };
                    Ok((Gains::Constant(form.gain(&s)?), false))
                }
                None => Ok((schedule()?, true)),
            }
        }
    }
}

/// Stream key mixing `(alpha_index, run_index)` through SplitMix64.
pub fn stream_key(alpha_index: u64, run_index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(alpha_index) ^ run_index)
}

pub fn run_rng(seed: u64, alpha_index: usize, run_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream_key(alpha_index as u64, run_index as u64))
}

/// Noise factors `(Q^{1/2}, R^{1/2}, P0^{1/2})`.
#[derive(Debug, Clone)]
pub struct NoiseShape {
    q_half: Mat,
    r_half: Mat,
    p0_half: Mat,
}

impl NoiseShape {
    pub fn new(plant: &PlantModel) -> Self {
        Self {
            q_half: linalg::psd_sqrt(plant.q(), 0.0),
            r_half: linalg::psd_sqrt(plant.r(), 0.0),
            p0_half: linalg::psd_sqrt(plant.p0(), 0.0),
        }
    }
}

fn gaussian<R: Rng>(rng: &mut R, half: &Mat) -> Vector {
    let z = Vector::from_fn(half.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    half * z
}

/// Simulates one closed-loop trajectory of `horizon` steps.
#[allow(clippy::too_many_arguments)]
pub fn run_single<R: Rng>(
    plant: &PlantModel,
    noise: &NoiseShape,
    gains: &Gains,
    eta: f64,
    gamma: f64,
    horizon: usize,
    rng: &mut R,
) -> Result<RunOutcome> {
    simulate(plant, noise, gains, eta, gamma, horizon, rng, None)
}

#[allow(clippy::too_many_arguments)]
fn simulate<R: Rng>(
    plant: &PlantModel,
    noise: &NoiseShape,
    gains: &Gains,
    eta: f64,
    gamma: f64,
    horizon: usize,
    rng: &mut R,
    mut stage_costs: Option<&mut Vec<f64>>,
) -> Result<RunOutcome> {
    let mut x = plant.x0_mean() + gaussian(rng, &noise.p0_half);
    let mut filter = FilterState::initial(plant);
    let (mut cost, mut est_err, mut trace_p) = (0.0, 0.0, 0.0);
    let (mut control_arrivals, mut sensing_arrivals) = (0, 0);

    for k in 0..horizon {
        let y = plant.c() * &x + gaussian(rng, &noise.r_half);
        let gamma_k = rng.random_bool(gamma);
        let eta_k = rng.random_bool(eta);
        filter = filter_update(&filter, plant, Some(&y), gamma_k, CovarianceUpdate::Standard)?;

        let u = gains.at(k) * &filter.x_hat;
        let err = &x - &filter.x_hat;
        est_err += err.norm_squared();
        trace_p += filter.p.trace();
        let mut stage = (x.transpose() * plant.w() * &x)[(0, 0)];
        if eta_k {
            stage += (u.transpose() * plant.u() * &u)[(0, 0)];
            control_arrivals += 1;
        }
        cost += stage;
        if let Some(trace) = stage_costs.as_deref_mut() {
            trace.push(stage);
        }
        sensing_arrivals += usize::from(gamma_k);

        let mut next = plant.a() * &x + gaussian(rng, &noise.q_half);
        if eta_k {
            next += plant.b() * &u;
        }
        x = next;
        filter = filter_predict(&filter, plant, &u, eta_k);

        if x.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT) {
            let steps = k + 1;
            return Ok(RunOutcome {
                cost: f64::INFINITY,
                diverged: true,
                est_err: f64::INFINITY,
                trace_p: trace_p / steps as f64,
                steps,
                control_arrivals,
                sensing_arrivals,
            });
        }
    }
    let t = horizon as f64;
    Ok(RunOutcome {
        cost: cost / t,
        diverged: false,
        est_err: est_err / t,
        trace_p: trace_p / t,
        steps: horizon,
        control_arrivals,
        sensing_arrivals,
    })
}

/// Sum by recursive halving.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::INFINITY, f64::INFINITY);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Share of the pooled stage costs used as the upper tail.
pub const TAIL_FRACTION: f64 = 0.01;

/// Hill estimate of the power-law tail index from the largest
/// `fraction` of `values` (reorders `values`). Non-finite entries count as
/// part of the tail; if any are present the estimate is 0.
pub fn hill_tail_index(values: &mut [f64], fraction: f64) -> f64 {
    let n = values.len();
    let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n.saturating_sub(1).max(1));
    if n < 2 {
        return f64::INFINITY;
    }
    if values.iter().any(|v| !v.is_finite()) {
        return 0.0;
    }
    values.sort_unstable_by(|a, b| b.total_cmp(a));
    let threshold = values[k];
    if threshold <= 0.0 {
        return f64::INFINITY;
    }
    let logs: Vec<f64> = values[..k].iter().map(|v| (v / threshold).ln()).collect();
    let h = pairwise_sum(&logs) / k as f64;
    if h > 0.0 { 1.0 / h } else { f64::INFINITY }
}

/// Splits at which the estimated tail index crosses one, located by
/// linear interpolation between neighbouring grid points.
pub fn tail_crossings(per_alpha: &[AlphaResult]) -> Vec<f64> {
    let clamp = |k: f64| if k.is_finite() { k } else { 1e3 };
    per_alpha
        .windows(2)
        .filter_map(|w| {
            let (k0, k1) = (clamp(w[0].tail_index) - 1.0, clamp(w[1].tail_index) - 1.0);
            if (k0 > 0.0) == (k1 > 0.0) {
                return None;
            }
            let t = k0 / (k0 - k1);
            Some(w[0].alpha + t * (w[1].alpha - w[0].alpha))
        })
        .collect()
}

fn summarize(
    alpha: f64,
    eta: f64,
    gamma: f64,
    fallback: bool,
    runs: Vec<RunOutcome>,
    tail_index: f64,
    ceiling: f64,
) -> AlphaResult {
    let finite: Vec<f64> = runs.iter().filter(|r| !r.diverged).map(|r| r.cost).collect();
    let (j_emp, std_err) = mean_and_se(&finite);
    let diverged_fraction = (runs.len() - finite.len()) as f64 / runs.len() as f64;
    let steps: usize = runs.iter().map(|r| r.steps).sum();
    let eta_hat = runs.iter().map(|r| r.control_arrivals).sum::<usize>() as f64 / steps as f64;
    let gamma_hat = runs.iter().map(|r| r.sensing_arrivals).sum::<usize>() as f64 / steps as f64;
    let bounded = diverged_fraction <= 0.5 && tail_index > 1.0 && j_emp.is_finite() && j_emp <= ceiling;
    AlphaResult {
        alpha,
        eta,
        gamma,
        j_emp,
        std_err,
        diverged_fraction,
        eta_hat,
        gamma_hat,
        tail_index,
        bounded,
        gain_fallback: fallback,
        runs,
    }
}

/// Runs every `(alpha, run)` pair in parallel and aggregates per split.
pub fn run_campaign(plant: &PlantModel, channel: &SwiptChannel, cfg: &SimConfig) -> Result<SimCampaignResult> {
    cfg.validate()?;
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot build thread pool: {e}")))?
            .install(|| campaign_inner(plant, channel, cfg)),
        None => campaign_inner(plant, channel, cfg),
    }
}

fn campaign_inner(plant: &PlantModel, channel: &SwiptChannel, cfg: &SimConfig) -> Result<SimCampaignResult> {
    let noise = NoiseShape::new(plant);
    let mut per_alpha = Vec::with_capacity(cfg.alphas.len());
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        let split = PowerSplit::new(alpha)?;
        let (eta, gamma) = (channel.eta(split), channel.gamma(split));
        let (gains, fallback) = gains_for(plant, eta, cfg.horizon, cfg.gain_mode, &cfg.opts)?;
        let traced = (0..cfg.runs)
            .into_par_iter()
            .map(|ri| {
                let mut rng = run_rng(cfg.seed, ai, ri);
                let mut stages = Vec::with_capacity(cfg.horizon);
                let out = simulate(plant, &noise, &gains, eta, gamma, cfg.horizon, &mut rng, Some(&mut stages))?;
                Ok((out, stages))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut pooled: Vec<f64> = traced.iter().flat_map(|(_, s)| s.iter().copied()).collect();
        let tail = hill_tail_index(&mut pooled, TAIL_FRACTION);
        let runs = traced.into_iter().map(|(r, _)| r).collect();
        per_alpha.push(summarize(alpha, eta, gamma, fallback, runs, tail, cfg.ceiling));
    }
    Ok(SimCampaignResult { config: cfg.clone(), per_alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{ConstantCurve, SwiptLink};
    use crate::model::{validate_plant, PlantCandidate, ValidationMode};
    use std::sync::Arc;

    fn constant(eta: f64, gamma: f64) -> SwiptChannel {
        let link = SwiptLink::new(1.0, 1.0, 1.0, 1.0).unwrap();
        SwiptChannel::new(link, Arc::new(ConstantCurve(eta)), Arc::new(ConstantCurve(gamma)))
    }

    fn plant_from(raw: PlantCandidate) -> PlantModel {
        validate_plant(&raw, ValidationMode::Permissive).unwrap()
    }

    #[test]
    fn noiseless_rollout_matches_closed_form() {
        let mut raw = PlantCandidate::scalar(1.2, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0);
        raw.x0_mean = Vector::from_element(1, 1.0);
        let p = plant_from(raw);
        let mut cfg = SimConfig::new(30, 3, 7, vec![0.5]);
        cfg.opts.tol = 1e-14;
        let res = run_campaign(&p, &constant(1.0, 1.0), &cfg).unwrap();
        let s = 1.952_233_744_059_949;
        let l = -1.2 * s / (s + 1.0);
        let f: f64 = 1.2 + l;
        let t = 30.0;
        let expect = (1.0 + l * l) * (1.0 - f.powf(2.0 * t)) / ((1.0 - f * f) * t);
        for r in &res.per_alpha[0].runs {
            assert!((r.cost - expect).abs() < 1e-10, "{} vs {expect}", r.cost);
        }
        assert_eq!(res.per_alpha[0].std_err, 0.0);
    }

    #[test]
    fn zero_state_weight_gives_zero_cost() {
        let p = plant_from(PlantCandidate::scalar(1.1, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0));
        let res = run_campaign(&p, &constant(0.7, 0.6), &SimConfig::new(50, 4, 1, vec![0.3])).unwrap();
        assert!(res.per_alpha[0].runs.iter().all(|r| r.cost == 0.0));
    }

    #[test]
    fn same_seed_same_result_any_thread_count() {
        let p = plant_from(PlantCandidate::scalar(1.2, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0));
        let ch = constant(0.8, 0.7);
        let mut cfg = SimConfig::new(100, 16, 99, vec![0.2, 0.6]);
        cfg.threads = Some(1);
        let a = run_campaign(&p, &ch, &cfg).unwrap();
        cfg.threads = Some(4);
        let b = run_campaign(&p, &ch, &cfg).unwrap();
        for (x, y) in a.per_alpha.iter().zip(&b.per_alpha) {
            assert_eq!(x.runs, y.runs);
            assert_eq!(x.j_emp.to_bits(), y.j_emp.to_bits());
        }
        cfg.seed = 100;
        let c = run_campaign(&p, &ch, &cfg).unwrap();
        assert_ne!(a.per_alpha[0].runs, c.per_alpha[0].runs);
    }

    #[test]
    fn empirical_rates_within_binomial_band() {
        let p = plant_from(PlantCandidate::scalar(0.9, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0));
        let (eta, gamma) = (0.37, 0.81);
        let (t, runs) = (200, 50);
        let res = run_campaign(&p, &constant(eta, gamma), &SimConfig::new(t, runs, 5, vec![0.5])).unwrap();
        let r = &res.per_alpha[0];
        let n = (t * runs) as f64;
        assert!((r.eta_hat - eta).abs() < 3.0 * (eta * (1.0 - eta) / n).sqrt());
        assert!((r.gamma_hat - gamma).abs() < 3.0 * (gamma * (1.0 - gamma) / n).sqrt());
    }

    #[test]
    fn estimation_error_tracks_covariance() {
        let p = plant_from(PlantCandidate::scalar(1.2, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0));
        let res = run_campaign(&p, &constant(0.9, 0.8), &SimConfig::new(400, 200, 11, vec![0.5])).unwrap();
        let diffs: Vec<f64> = res.per_alpha[0].runs.iter().map(|r| r.est_err - r.trace_p).collect();
        let (m, se) = mean_and_se(&diffs);
        assert!(m.abs() < 3.0 * se, "mean {m}, se {se}");
    }

    #[test]
    fn stationary_gain_falls_back_below_critical() {
        let p = plant_from(PlantCandidate::scalar(1.2, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0));
        let (_, fb) = gains_for(&p, 0.1, 10, GainMode::Stationary, &SolverOptions::default()).unwrap();
        assert!(fb);
        let (_, fb) = gains_for(&p, 0.9, 10, GainMode::Stationary, &SolverOptions::default()).unwrap();
        assert!(!fb);
    }

    #[test]
    fn overflow_is_flagged() {
        let p = plant_from(PlantCandidate::scalar(4.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0));
        let res = run_campaign(&p, &constant(0.0, 0.0), &SimConfig::new(500, 5, 3, vec![0.5])).unwrap();
        let r = &res.per_alpha[0];
        assert_eq!(r.diverged_fraction, 1.0);
        assert!(!r.bounded && r.j_emp.is_infinite());
    }

    #[test]
    fn hill_recovers_pareto_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kappa in [0.8, 1.5, 3.0] {
            let mut xs: Vec<f64> = (0..200_000).map(|_| rng.random::<f64>().powf(-1.0 / kappa)).collect();
            let est = hill_tail_index(&mut xs, 0.01);
            assert!((est - kappa).abs() < 0.05 * kappa, "{est} vs {kappa}");
        }
        assert_eq!(hill_tail_index(&mut [1.0, f64::INFINITY, 2.0], 0.5), 0.0);
        assert!(hill_tail_index(&mut [0.0; 10], 0.1).is_infinite());
    }

    #[test]
    fn crossings_interpolate() {
        let mk = |alpha, tail_index| AlphaResult {
            alpha,
            eta: 0.0,
            gamma: 0.0,
            j_emp: 0.0,
            std_err: 0.0,
            diverged_fraction: 0.0,
            eta_hat: 0.0,
            gamma_hat: 0.0,
            tail_index,
            bounded: tail_index > 1.0,
            gain_fallback: false,
            runs: Vec::new(),
        };
        let pts = [mk(0.0, 0.5), mk(0.2, 1.5), mk(0.4, 2.0), mk(0.6, 0.0)];
        let c = tail_crossings(&pts);
        assert_eq!(c.len(), 2);
        assert!((c[0] - 0.1).abs() < 1e-15 && (c[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
        assert_eq!(mean_and_se(&[2.0, 4.0]), (3.0, 1.0));
    }

    #[test]
    fn config_errors_are_collected() {
        let mut cfg = SimConfig::new(0, 0, 1, vec![1.5]);
        cfg.threads = Some(0);
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("horizon") && msg.contains("runs") && msg.contains("threads"));
    }
}
