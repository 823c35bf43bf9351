//! Critical arrival probabilities and critical power-splitting ratios.

use serde::Serialize;

use crate::channels::{PowerSplit, SwiptChannel};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{unstable_eigen_products, PlantModel};
use crate::riccati::{self, Feasibility, SolverOptions};

/// Bisection depth cap; 2⁻⁶⁰ is far below any tolerance we use.
pub const MAX_BISECTION_STEPS: usize = 60;

/// Critical probabilities and the α interval they induce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalRegion {
    pub eta_c: f64,
    /// `p_min`, lower bound on γ_c.
    pub gamma_c_lower: f64,
    /// `γ_max`, upper bound on γ_c.
    pub gamma_c_upper: f64,
    /// `p_max ≥ γ_max`.
    pub gamma_p_max: f64,
    /// α̲; `+∞` when no α makes the control link good enough.
    pub alpha_lower: f64,
    /// ᾱ solved against `γ_max` (conservative end).
    pub alpha_upper_lo: f64,
    /// ᾱ solved against `p_min` (optimistic end).
    pub alpha_upper_hi: f64,
    /// `α̲ < ᾱ_hi`.
    pub feasible: bool,
}

impl CriticalRegion {
    /// `α̲ < ᾱ_lo`: boundedness is certified somewhere strictly inside.
    pub fn certified(&self) -> bool {
        self.feasible && self.alpha_lower < self.alpha_upper_lo
    }
}

/// Generic bisection for the boundary of a monotone predicate that is false
/// at `lo` and true at `hi`. The bracket is checked before refinement.
fn bisect_boundary<F>(mut lo: f64, mut hi: f64, tol: f64, mut pred: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<bool>,
{
    if pred(lo)? {
        return Err(Error::PredicateNotMonotone(format!("predicate already true at left end {lo}")));
    }
    if !pred(hi)? {
        return Err(Error::PredicateNotMonotone(format!("predicate false at right end {hi}")));
    }
    for _ in 0..MAX_BISECTION_STEPS {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn probability_boundary<F>(tol: f64, mut feasible: F) -> Result<f64>
where
    F: FnMut(f64, Option<&Mat>) -> Result<Feasibility>,
{
    // Warm start from the iterate certified at the current right end: the
    // fixed point only grows as the probability drops, so it stays below.
    let mut warm: Option<Mat> = None;
    bisect_boundary(0.0, 1.0, tol, |p| {
        let f = feasible(p, warm.as_ref())?;
        if f.feasible {
            warm = f.iterate;
        }
        Ok(f.feasible)
    })
}

/// Critical control-arrival probability η_c. Zero for a stable `A`.
pub fn critical_eta(plant: &PlantModel, tol: f64, opts: &SolverOptions) -> Result<f64> {
    if !plant.flags().unstable {
        return Ok(0.0);
    }
    probability_boundary(tol, |p, warm| riccati::control_mare_feasible(plant, p, warm, opts))
}

/// `(p_min, γ_max, p_max)` bracketing the critical observation probability.
pub fn critical_gamma_bounds(plant: &PlantModel, tol: f64, opts: &SolverOptions) -> Result<(f64, f64, f64)> {
    if !plant.flags().unstable {
        return Ok((0.0, 0.0, 0.0));
    }
    let (max_sq, prod_sq) = unstable_eigen_products(plant.a());
    let p_min = 1.0 - 1.0 / max_sq;
    let p_max = 1.0 - 1.0 / prod_sq;
    let gamma_max = probability_boundary(tol, |p, warm| riccati::estimation_mare_feasible(plant, p, warm, opts))?;
    let slack = 2.0 * tol;
    if gamma_max < p_min - slack || gamma_max > p_max + slack {
        return Err(Error::PredicateNotMonotone(format!(
            "gamma_max {gamma_max} outside [p_min, p_max] = [{p_min}, {p_max}]"
        )));
    }
    Ok((p_min, gamma_max.clamp(p_min, p_max), p_max))
}

/// Smallest α with `η(α) ≥ target` (η nondecreasing). `0` when already met
/// at α = 0, `+∞` when never met.
fn solve_eta_crossing(channel: &SwiptChannel, target: f64, tol: f64) -> Result<f64> {
    let eta = |a: f64| channel.eta(PowerSplit::new(a).expect("alpha in [0,1]"));
    if eta(0.0) > target {
        return Ok(0.0);
    }
    if eta(1.0) <= target {
        return Ok(f64::INFINITY);
    }
    bisect_boundary(0.0, 1.0, tol, |a| Ok(eta(a) > target))
}

/// Largest α with `γ(α) ≥ target` (γ nonincreasing). `1` when still met at
/// α = 1, `−∞` when never met.
fn solve_gamma_crossing(channel: &SwiptChannel, target: f64, tol: f64) -> Result<f64> {
    let gamma = |a: f64| channel.gamma(PowerSplit::new(a).expect("alpha in [0,1]"));
    if gamma(1.0) > target {
        return Ok(1.0);
    }
    if gamma(0.0) <= target {
        return Ok(f64::NEG_INFINITY);
    }
    // predicate "γ has dropped to the target" is false at 0 and true at 1
    bisect_boundary(0.0, 1.0, tol, |a| Ok(gamma(a) <= target))
}

/// Critical probabilities and the critical power-splitting ratios.
///
/// `tol` is the bisection tolerance for η_c and γ_max; the α crossings are
/// resolved to `1e-12`.
pub fn critical_alphas(
    plant: &PlantModel,
    channel: &SwiptChannel,
    tol: f64,
    opts: &SolverOptions,
) -> Result<CriticalRegion> {
    let eta_c = critical_eta(plant, tol, opts)?;
    let (p_min, gamma_max, p_max) = critical_gamma_bounds(plant, tol, opts)?;
    Ok(region_from_probabilities(channel, eta_c, p_min, gamma_max, p_max))
}

/// Assembles the α interval from already-computed critical probabilities.
pub fn region_from_probabilities(
    channel: &SwiptChannel,
    eta_c: f64,
    p_min: f64,
    gamma_max: f64,
    p_max: f64,
) -> CriticalRegion {
    const ALPHA_TOL: f64 = 1e-12;
    let alpha_lower = solve_eta_crossing(channel, eta_c, ALPHA_TOL).expect("bracket checked");
    let alpha_upper_lo = solve_gamma_crossing(channel, gamma_max, ALPHA_TOL).expect("bracket checked");
    let alpha_upper_hi = solve_gamma_crossing(channel, p_min, ALPHA_TOL).expect("bracket checked");
    let feasible = alpha_lower.is_finite() && alpha_upper_hi.is_finite() && alpha_lower < alpha_upper_hi;
    CriticalRegion {
        eta_c,
        gamma_c_lower: p_min,
        gamma_c_upper: gamma_max,
        gamma_p_max: p_max,
        alpha_lower,
        alpha_upper_lo,
        alpha_upper_hi,
        feasible,
    }
}
