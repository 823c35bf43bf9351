//! Finite-horizon LQG under a TCP-like protocol: control-gain recursion,
//! Kalman filter with intermittent observations, and the expected optimal
//! cost for known arrival probabilities.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::PlantModel;
use crate::riccati::ControlForm;

/// Backward-pass output. `s_seq[k]` is `S_k` for `k = 0..=N` (so
/// `s_seq[N] = W`), `l_seq[k]` is the gain applied at time `k < N`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub s_seq: Vec<Mat>,
    pub l_seq: Vec<Mat>,
    pub eta: f64,
}

impl GainSchedule {
    pub fn horizon(&self) -> usize {
        self.l_seq.len()
    }
}

/// Runs `S_k = AᵀS_{k+1}A + W − η AᵀS_{k+1}B(BᵀS_{k+1}B+U)⁻¹BᵀS_{k+1}A`
/// from `S_N = W` and records `L_k = −(BᵀS_{k+1}B+U)⁻¹BᵀS_{k+1}A`.
pub fn backward_gain_pass(plant: &PlantModel, eta: f64, horizon: usize) -> Result<GainSchedule> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon N must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta must lie in [0, 1], got {eta}")));
    }
    let form = ControlForm { a: plant.a(), b: plant.b(), w: plant.w(), u: plant.u() };
    let mut s_rev = Vec::with_capacity(horizon + 1);
    let mut l_rev = Vec::with_capacity(horizon);
    let mut s = plant.w().clone();
    s_rev.push(s.clone());
    for _ in 0..horizon {
        l_rev.push(form.gain(&s)?);
        s = form.step(eta, &s)?;
        s_rev.push(s.clone());
    }
    s_rev.reverse();
    l_rev.reverse();
    Ok(GainSchedule { s_seq: s_rev, l_seq: l_rev, eta })
}

/// Estimator state: posterior and prior of the current step.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_hat: Vector,
    pub p: Mat,
    pub x_hat_prior: Vector,
    pub p_prior: Mat,
}

impl FilterState {
    /// State before the first measurement: prior `(x̄₀, P0)`.
    pub fn initial(plant: &PlantModel) -> Self {
        Self {
            x_hat: plant.x0_mean().clone(),
            p: plant.p0().clone(),
            x_hat_prior: plant.x0_mean().clone(),
            p_prior: plant.p0().clone(),
        }
    }
}

/// Covariance update form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceUpdate {
    /// `P = P⁻ − K C P⁻`, symmetrized.
    #[default]
    Standard,
    /// `P = (I − KC) P⁻ (I − KC)ᵀ + K R Kᵀ`.
    Joseph,
}

/// Time update. `eta_k` is the acknowledged arrival of the control packet.
pub fn filter_predict(state: &FilterState, plant: &PlantModel, u_applied: &Vector, eta_k: bool) -> FilterState {
    let mut x_prior = plant.a() * &state.x_hat;
    if eta_k {
        x_prior += plant.b() * u_applied;
    }
    let p_prior = linalg::symmetrize(&(plant.a() * &state.p * plant.a().transpose() + plant.q()));
    FilterState { x_hat: x_prior.clone(), p: p_prior.clone(), x_hat_prior: x_prior, p_prior }
}

/// Measurement update. With `gamma_k = false` (or no measurement) the
/// posterior equals the prior.
pub fn filter_update(
    state: &FilterState,
    plant: &PlantModel,
    y: Option<&Vector>,
    gamma_k: bool,
    form: CovarianceUpdate,
) -> Result<FilterState> {
    let mut next = state.clone();
    next.x_hat = state.x_hat_prior.clone();
    next.p = state.p_prior.clone();
    let y = match (gamma_k, y) {
        (true, Some(y)) => y,
        (true, None) => return Err(Error::InvalidParameter("measurement marked received but absent".into())),
        (false, _) => return Ok(next),
    };
    let c = plant.c();
    let pct = &state.p_prior * c.transpose();
    let innovation_cov = c * &pct + plant.r();
    // K = P⁻Cᵀ(CP⁻Cᵀ+R)⁻¹, computed as the transpose of a symmetric solve
    let k = linalg::spd_solve(&innovation_cov, &pct.transpose())
        .ok_or(Error::SingularInnovation)?
        .transpose();
    next.x_hat = &state.x_hat_prior + &k * (y - c * &state.x_hat_prior);
    next.p = match form {
        CovarianceUpdate::Standard => linalg::symmetrize(&(&state.p_prior - &k * c * &state.p_prior)),
        CovarianceUpdate::Joseph => {
            let n = plant.n();
            let ikc = Mat::identity(n, n) - &k * c;
            linalg::symmetrize(&(&ikc * &state.p_prior * ikc.transpose() + &k * plant.r() * k.transpose()))
        }
    };
    Ok(next)
}

/// Expected optimal cost
/// `x̄₀ᵀS₀x̄₀ + Tr(S₀P₀) + Σ Tr(S_{k+1}Q) + Σ Tr((AᵀS_{k+1}A + W − S_k) E[P_k])`,
/// with `p_seq[k]` standing in for `E[P_k]`, `k = 0..N`.
pub fn expected_cost_formula(
    plant: &PlantModel,
    schedule: &GainSchedule,
    p_seq: &[Mat],
    p0: &Mat,
    x0_mean: &Vector,
) -> Result<f64> {
    let n_steps = schedule.horizon();
    if p_seq.len() != n_steps || schedule.s_seq.len() != n_steps + 1 {
        return Err(Error::LengthMismatch(format!(
            "schedule has {} steps and {} value matrices, covariance sequence has {}",
            n_steps,
            schedule.s_seq.len(),
            p_seq.len()
        )));
    }
    let a = plant.a();
    let s0 = &schedule.s_seq[0];
    let mut cost = (x0_mean.transpose() * s0 * x0_mean)[(0, 0)] + linalg::trace_product(s0, p0);
    for k in 0..n_steps {
        let s_next = &schedule.s_seq[k + 1];
        cost += linalg::trace_product(s_next, plant.q());
        let weight = a.transpose() * s_next * a + plant.w() - &schedule.s_seq[k];
        cost += linalg::trace_product(&weight, &p_seq[k]);
    }
    Ok(cost)
}

/// Posterior covariances `P_{k|k}`, `k = 0..N`, of the Kalman filter that
/// receives every measurement (the `γ = 1` sequence).
pub fn deterministic_kalman_posteriors(plant: &PlantModel, horizon: usize) -> Result<Vec<Mat>> {
    let mut state = FilterState::initial(plant);
    let mut out = Vec::with_capacity(horizon);
    let zero_y = Vector::zeros(plant.outputs());
    let zero_u = Vector::zeros(plant.inputs());
    for k in 0..horizon {
        if k > 0 {
            state = filter_predict(&state, plant, &zero_u, true);
        }
        state = filter_update(&state, plant, Some(&zero_y), true, CovarianceUpdate::Standard)?;
        out.push(state.p.clone());
    }
    Ok(out)
}
