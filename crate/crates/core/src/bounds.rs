//! Lower and upper bounds on the optimal LQG cost as a function of the power
//! split, for finite horizons and for the infinite-horizon average.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::channels::{PowerSplit, SwiptChannel};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::lqg::{backward_gain_pass, expected_cost_formula};
use crate::model::PlantModel;
use crate::riccati::{self, SolverOptions};

/// Which fixed point failed to exist (or to settle) at a given split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Divergence {
    /// Control MARE diverged: α too small.
    Control,
    /// Estimation MARE diverged: α too large.
    Estimation,
    /// The lower-bound Lyapunov recursion diverged.
    LowerBound,
    /// A solver hit its iteration budget without deciding.
    Stalled,
}

impl Divergence {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Control => "control",
            Self::Estimation => "estimation",
            Self::LowerBound => "lower_bound",
            Self::Stalled => "stalled",
        }
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `j_min ≤ J* ≤ j_max`. Unbounded results carry `+∞` in both fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBounds {
    pub j_min: f64,
    pub j_max: f64,
    pub bounded: bool,
    pub alpha: f64,
    pub eta: f64,
    pub gamma: f64,
    pub divergence: Option<Divergence>,
}

impl CostBounds {
    fn unbounded(alpha: f64, eta: f64, gamma: f64, why: Divergence) -> Self {
        Self {
            j_min: f64::INFINITY,
            j_max: f64::INFINITY,
            bounded: false,
            alpha,
            eta,
            gamma,
            divergence: Some(why),
        }
    }
}

/// Finite-horizon bounds `J_N^min ≤ J_N^* ≤ J_N^max`.
///
/// The expected posterior covariance is bracketed from below by
/// `(1−γ)P̲_k` with `P̲_k = (1−γ)AP̲_{k−1}Aᵀ + Q`, and from above by
/// `P̂_k = g̃_γ(P̄_k)` with `P̄_{k+1} = h̃(P̂_k)`; both start at `P̄₀ = P̲₀ = P0`.
pub fn finite_horizon_bounds(
    plant: &PlantModel,
    channel: &SwiptChannel,
    split: PowerSplit,
    horizon: usize,
) -> Result<CostBounds> {
    let eta = channel.eta(split);
    let gamma = channel.gamma(split);
    let schedule = backward_gain_pass(plant, eta, horizon)?;

    let a = plant.a();
    let at = a.transpose();
    let mut lower_seq = Vec::with_capacity(horizon);
    let mut upper_seq = Vec::with_capacity(horizon);
    let mut p_lower = plant.p0().clone();
    let mut p_bar = plant.p0().clone();
    for k in 0..horizon {
        if k > 0 {
            p_lower = linalg::symmetrize(&((a * &p_lower * &at) * (1.0 - gamma) + plant.q()));
        }
        lower_seq.push(&p_lower * (1.0 - gamma));
        let p_hat = riccati::op_g_tilde(plant, gamma, &p_bar)?;
        p_bar = riccati::op_h_tilde(plant, &p_hat);
        upper_seq.push(p_hat);
    }

    let j_min = expected_cost_formula(plant, &schedule, &lower_seq, plant.p0(), plant.x0_mean())?;
    let j_max = expected_cost_formula(plant, &schedule, &upper_seq, plant.p0(), plant.x0_mean())?;
    Ok(CostBounds { j_min, j_max, bounded: true, alpha: split.alpha(), eta, gamma, divergence: None })
}

/// `Tr((AᵀSA + W − S)P̃) + Tr(SQ)`.
pub fn filtered_form_objective(plant: &PlantModel, s: &Mat, p_tilde: &Mat) -> f64 {
    let weight = plant.a().transpose() * s * plant.a() + plant.w() - s;
    linalg::trace_product(&weight, p_tilde) + linalg::trace_product(s, plant.q())
}

/// Starting points for the inner fixed-point solves.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub s: Option<Mat>,
    pub p_bar: Option<Mat>,
}

/// Bounds plus the fixed points they were computed from.
#[derive(Debug, Clone)]
pub struct InfiniteHorizonDetail {
    pub bounds: CostBounds,
    pub s: Option<Mat>,
    pub p_bar: Option<Mat>,
    pub p_filtered: Option<Mat>,
    pub p_lower: Option<Mat>,
}

impl InfiniteHorizonDetail {
    pub fn warm_start(&self) -> WarmStart {
        WarmStart { s: self.s.clone(), p_bar: self.p_bar.clone() }
    }
}

/// Infinite-horizon average-cost bounds at a given split.
///
/// Divergence of any of the three fixed points is reported as data
/// (`bounded = false`), never as an error. Iteration-budget exhaustion
/// propagates as [`Error::MaxIterExceeded`].
pub fn infinite_horizon_bounds(
    plant: &PlantModel,
    channel: &SwiptChannel,
    split: PowerSplit,
    opts: &SolverOptions,
) -> Result<CostBounds> {
    infinite_horizon_detail(plant, channel, split, opts, &WarmStart::default()).map(|d| d.bounds)
}

pub fn infinite_horizon_detail(
    plant: &PlantModel,
    channel: &SwiptChannel,
    split: PowerSplit,
    opts: &SolverOptions,
    warm: &WarmStart,
) -> Result<InfiniteHorizonDetail> {
    let alpha = split.alpha();
    let eta = channel.eta(split);
    let gamma = channel.gamma(split);
    let unbounded = |why| InfiniteHorizonDetail {
        bounds: CostBounds::unbounded(alpha, eta, gamma, why),
        s: None,
        p_bar: None,
        p_filtered: None,
        p_lower: None,
    };

    let s = riccati::solve_control_mare(plant, eta, warm.s.as_ref(), opts)?;
    if !s.converged {
        return Ok(unbounded(Divergence::Control));
    }
    let est = riccati::solve_estimation_mare(plant, gamma, warm.p_bar.as_ref(), opts)?;
    let Some(p_filtered) = est.filtered else {
        return Ok(unbounded(Divergence::Estimation));
    };
    let lower = riccati::solve_lower_bound_lyapunov(plant, gamma, opts)?;
    if !lower.converged {
        return Ok(unbounded(Divergence::LowerBound));
    }

    let s = s.value;
    let weight = plant.a().transpose() * &s * plant.a() + plant.w() - &s;
    let base = linalg::trace_product(&s, plant.q());
    let j_min = base + (1.0 - gamma) * linalg::trace_product(&weight, &lower.value);
    let j_max = base + linalg::trace_product(&weight, &p_filtered);
    Ok(InfiniteHorizonDetail {
        bounds: CostBounds { j_min, j_max, bounded: true, alpha, eta, gamma, divergence: None },
        s: Some(s),
        p_bar: Some(est.prior.value),
        p_filtered: Some(p_filtered),
        p_lower: Some(lower.value),
    })
}

/// Like [`infinite_horizon_detail`] but folds a stalled solver into an
/// unbounded point, so sweeps keep going through near-critical regions.
pub fn infinite_horizon_detail_lenient(
    plant: &PlantModel,
    channel: &SwiptChannel,
    split: PowerSplit,
    opts: &SolverOptions,
    warm: &WarmStart,
) -> Result<InfiniteHorizonDetail> {
    match infinite_horizon_detail(plant, channel, split, opts, warm) {
        Err(Error::MaxIterExceeded { .. }) => Ok(InfiniteHorizonDetail {
            bounds: CostBounds::unbounded(split.alpha(), channel.eta(split), channel.gamma(split), Divergence::Stalled),
            s: None,
            p_bar: None,
            p_filtered: None,
            p_lower: None,
        }),
        other => other,
    }
}

/// Independent cold-start bounds at every split, evaluated in parallel.
pub fn sweep_bounds(
    plant: &PlantModel,
    channel: &SwiptChannel,
    alphas: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<CostBounds>> {
    alphas
        .par_iter()
        .map(|&a| {
            infinite_horizon_detail_lenient(plant, channel, PowerSplit::new(a)?, opts, &WarmStart::default())
                .map(|d| d.bounds)
        })
        .collect()
}
