//! Grid search for the power split that minimizes the upper cost bound.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{infinite_horizon_detail_lenient, CostBounds, WarmStart};
use crate::channels::{PowerSplit, SwiptChannel};
use crate::critical::CriticalRegion;
use crate::error::{Error, Result};
use crate::model::PlantModel;
use crate::riccati::SolverOptions;

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Grid step δ.
    pub delta: f64,
    /// Reuse the previous grid point's fixed points as starting iterates.
    pub warm_start: bool,
    pub opts: SolverOptions,
}

impl OptimizerConfig {
    pub fn new(delta: f64) -> Result<Self> {
        let cfg = Self { delta, warm_start: true, opts: SolverOptions::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("grid step must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Optimum {
    pub alpha_star_hat: f64,
    pub j_max_at_opt: f64,
    pub profile: Vec<CostBounds>,
}

/// Grid `{α̲ + kδ}` restricted to `[α̲+δ, ᾱ_lo−δ]`. An interval too narrow
/// to hold an interior grid point collapses to its midpoint.
pub fn alpha_grid(region: &CriticalRegion, delta: f64) -> Vec<f64> {
    let lo = region.alpha_lower;
    let hi = region.alpha_upper_lo - delta;
    // slack so that an endpoint hit exactly in exact arithmetic survives rounding
    let slack = 1e-12;
    let mut grid = Vec::new();
    let mut k = 1usize;
    loop {
        let a = lo + k as f64 * delta;
        if a > hi + slack {
            break;
        }
        grid.push(a.min(1.0));
        k += 1;
    }
    if grid.is_empty() {
        grid.push(0.5 * (region.alpha_lower + region.alpha_upper_lo));
    }
    grid
}

/// Full scan of the grid; returns the argmin of `J_∞^max` over bounded
/// points, ties going to the smaller α.
pub fn optimize_alpha(
    plant: &PlantModel,
    channel: &SwiptChannel,
    region: &CriticalRegion,
    cfg: &OptimizerConfig,
) -> Result<Optimum> {
    cfg.validate()?;
    if !region.feasible {
        return Err(Error::InfeasibleRegion(format!(
            "no split keeps the cost bounded: lower critical split {} is not below upper critical split {}",
            region.alpha_lower, region.alpha_upper_lo
        )));
    }
    let grid = alpha_grid(region, cfg.delta);
    let eval = |alpha: f64, warm: &WarmStart| {
        infinite_horizon_detail_lenient(plant, channel, PowerSplit::new(alpha)?, &cfg.opts, warm)
    };

    let profile: Vec<CostBounds> = if cfg.warm_start {
        let mut warm = WarmStart::default();
        let mut out = Vec::with_capacity(grid.len());
        for &alpha in &grid {
            let detail = eval(alpha, &warm)?;
            if detail.bounds.bounded {
                warm = detail.warm_start();
            }
            out.push(detail.bounds);
        }
        out
    } else {
        grid.par_iter()
            .map(|&alpha| eval(alpha, &WarmStart::default()).map(|d| d.bounds))
            .collect::<Result<_>>()?
    };

    let best = profile
        .iter()
        .filter(|b| b.bounded)
        .fold(None::<&CostBounds>, |best, b| match best {
            Some(cur) if cur.j_max <= b.j_max => Some(cur),
            _ => Some(b),
        });
    let (alpha_star_hat, j_max_at_opt) = match best {
        Some(b) => (b.alpha, b.j_max),
        None => {
            return Err(Error::InfeasibleRegion(
                "every grid point in the certified interval diverged".to_string(),
            ))
        }
    };
    Ok(Optimum { alpha_star_hat, j_max_at_opt, profile })
}
