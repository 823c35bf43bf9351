//! Riccati-type operators and fixed-point solvers.
//!
//! Control side: `ĥ(X) = AᵀXA + W`, `ĝ_η(X) = X − η XB(BᵀXB+U)⁻¹BᵀX`, so the
//! modified algebraic Riccati equation is `S = ĥ∘ĝ_η(S)`.
//!
//! Estimation side: `h̃(X) = AXAᵀ + Q`, `g̃_γ(X) = X − γ XCᵀ(CXCᵀ+R)⁻¹CX`. The
//! prior bound solves `P̄ = h̃∘g̃_γ(P̄)` and the filtered bound `P̃ = g̃_γ(P̄)`
//! solves `P̃ = g̃_γ∘h̃(P̃)`.
//!
//! Both sides are the same algebraic object written in "control form"
//! `(a, b, w, u)`: the estimation side is `(Aᵀ, Cᵀ, Q, R)`. [`ControlForm`]
//! holds that shared machinery.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::model::PlantModel;

/// Iteration controls shared by every fixed-point solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Convergence when `‖X_{k+1} − X_k‖_max ≤ tol · max(1, ‖X_{k+1}‖_max)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Divergence when the trace exceeds this value.
    pub div_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100_000, div_threshold: 1e12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub value: Mat,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm of the last increment.
    pub residual: f64,
    pub diverged: bool,
}

/// Prior fixed point `P̄` together with the filtered companion `P̃ = g̃_γ(P̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationFixedPoint {
    pub prior: FixedPointResult,
    /// `None` when the prior diverged.
    pub filtered: Option<Mat>,
}

/// Outcome of a boundedness test at a fixed arrival probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// Iterate at which the stabilizing-gain certificate was found; a valid
    /// warm start for any smaller probability.
    pub iterate: Option<Mat>,
    pub iterations: usize,
}

/// `X ↦ aᵀXa + w − p·aᵀXb(bᵀXb+u)⁻¹bᵀXa`, split into `h` and `g_p`.
#[derive(Debug, Clone, Copy)]
pub struct ControlForm<'a> {
    pub a: &'a Mat,
    pub b: &'a Mat,
    pub w: &'a Mat,
    pub u: &'a Mat,
}

impl ControlForm<'_> {
    /// `aᵀXa + w`
    pub fn h(&self, x: &Mat) -> Mat {
        linalg::symmetrize(&(self.a.transpose() * x * self.a + self.w))
    }

    /// `X − p·Xb(bᵀXb+u)⁻¹bᵀX`
    pub fn g(&self, p: f64, x: &Mat) -> Result<Mat> {
        if p == 0.0 {
            return Ok(x.clone());
        }
        let xb = x * self.b;
        let inner = self.b.transpose() * &xb + self.u;
        let solved = linalg::spd_solve(&inner, &xb.transpose()).ok_or(Error::SingularInner)?;
        Ok(linalg::symmetrize(&(x - (&xb * solved) * p)))
    }

    /// Optimal gain `−(bᵀXb+u)⁻¹bᵀXa`.
    pub fn gain(&self, x: &Mat) -> Result<Mat> {
        let inner = self.b.transpose() * x * self.b + self.u;
        let rhs = self.b.transpose() * x * self.a;
        linalg::spd_solve(&inner, &rhs).map(|k| -k).ok_or(Error::SingularInner)
    }

    /// Matrix of the positive map `D ↦ (1−p)aᵀDa + p(a+bK)ᵀD(a+bK)` acting on
    /// column-major `vec(D)`.
    pub fn modified_lyapunov_matrix(&self, p: f64, gain: &Mat) -> Mat {
        let f = self.a + self.b * gain;
        let at = self.a.transpose();
        let ft = f.transpose();
        at.kronecker(&at) * (1.0 - p) + ft.kronecker(&ft) * p
    }

    /// Homogeneous part `aᵀXa − p·aᵀXb(bᵀXb)⁻¹bᵀXa` of the Riccati map, i.e.
    /// the limit of `Π(tX)/t` as `t → ∞`. `None` when `bᵀXb` is singular.
    pub fn asymptotic_step(&self, p: f64, x: &Mat) -> Option<Mat> {
        let xa = x * self.a;
        let xb = x * self.b;
        let inner = self.b.transpose() * &xb;
        let solved = linalg::spd_solve(&inner, &(self.b.transpose() * &xa))?;
        Some(linalg::symmetrize(&(self.a.transpose() * &xa - (xb.transpose() * self.a).transpose() * solved * p)))
    }

    /// One Riccati step `h(g_p(X))`.
    pub fn step(&self, p: f64, x: &Mat) -> Result<Mat> {
        Ok(self.h(&self.g(p, x)?))
    }
}

fn control_form(plant: &PlantModel) -> ControlForm<'_> {
    ControlForm { a: plant.a(), b: plant.b(), w: plant.w(), u: plant.u() }
}

/// The estimation side owns transposed copies of `A` and `C`.
struct DualMatrices {
    at: Mat,
    ct: Mat,
}

impl DualMatrices {
    fn new(plant: &PlantModel) -> Self {
        Self { at: plant.a().transpose(), ct: plant.c().transpose() }
    }

    fn form<'a>(&'a self, plant: &'a PlantModel) -> ControlForm<'a> {
        ControlForm { a: &self.at, b: &self.ct, w: plant.q(), u: plant.r() }
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("arrival probability must lie in [0, 1], got {p}")))
    }
}

/// `h̃(X) = AXAᵀ + Q`
pub fn op_h_tilde(plant: &PlantModel, x: &Mat) -> Mat {
    linalg::symmetrize(&(plant.a() * x * plant.a().transpose() + plant.q()))
}

/// `ĥ(X) = AᵀXA + W`
pub fn op_h_hat(plant: &PlantModel, x: &Mat) -> Mat {
    control_form(plant).h(x)
}

/// `g̃_γ(X) = X − γ XCᵀ(CXCᵀ+R)⁻¹CX`
pub fn op_g_tilde(plant: &PlantModel, gamma: f64, x: &Mat) -> Result<Mat> {
    check_probability(gamma)?;
    let dual = DualMatrices::new(plant);
    dual.form(plant).g(gamma, x).map_err(|_| Error::SingularInnovation)
}

/// `ĝ_η(X) = X − η XB(BᵀXB+U)⁻¹BᵀX`
pub fn op_g_hat(plant: &PlantModel, eta: f64, x: &Mat) -> Result<Mat> {
    check_probability(eta)?;
    control_form(plant).g(eta, x)
}

/// Generic fixed-point loop. `Ok` results are either converged or diverged.
pub fn iterate_fixed_point<F>(init: Mat, opts: &SolverOptions, mut step: F) -> Result<FixedPointResult>
where
    F: FnMut(&Mat) -> Result<Mat>,
{
    let mut x = init;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = step(&x)?;
        let trace = next.trace();
        if !next.iter().all(|v| v.is_finite()) || trace > opts.div_threshold {
            return Ok(FixedPointResult {
                value: next,
                iterations: it,
                converged: false,
                residual,
                diverged: true,
            });
        }
        residual = linalg::max_abs(&(&next - &x));
        let scale = linalg::max_abs(&next).max(1.0);
        x = next;
        if residual <= opts.tol * scale {
            return Ok(FixedPointResult { value: x, iterations: it, converged: true, residual, diverged: false });
        }
    }
    Err(Error::MaxIterExceeded { iterations: opts.max_iter, residual })
}

/// Solves `S = AᵀSA + W − η AᵀSB(BᵀSB+U)⁻¹BᵀSA` by iterating `ĥ∘ĝ_η`
/// from `init` (default `W`).
pub fn solve_control_mare(
    plant: &PlantModel,
    eta: f64,
    init: Option<&Mat>,
    opts: &SolverOptions,
) -> Result<FixedPointResult> {
    check_probability(eta)?;
    let form = control_form(plant);
    let start = init.cloned().unwrap_or_else(|| plant.w().clone());
    iterate_fixed_point(start, opts, |x| form.step(eta, x))
}

/// Solves `P̄ = AP̄Aᵀ + Q − γ AP̄Cᵀ(CP̄Cᵀ+R)⁻¹CP̄Aᵀ` by iterating `h̃∘g̃_γ` from
/// `init` (default `P0`) and reports `P̃ = g̃_γ(P̄)` alongside.
pub fn solve_estimation_mare(
    plant: &PlantModel,
    gamma: f64,
    init: Option<&Mat>,
    opts: &SolverOptions,
) -> Result<EstimationFixedPoint> {
    check_probability(gamma)?;
    let dual = DualMatrices::new(plant);
    let form = dual.form(plant);
    let start = init.cloned().unwrap_or_else(|| plant.p0().clone());
    let prior = iterate_fixed_point(start, opts, |x| form.step(gamma, x))
        .map_err(map_singular_innovation)?;
    let filtered = if prior.converged {
        Some(form.g(gamma, &prior.value).map_err(map_singular_innovation)?)
    } else {
        None
    };
    Ok(EstimationFixedPoint { prior, filtered })
}

/// Solves `P̃ = g̃_γ∘h̃(P̃)` directly, from `init` (default `P0`).
pub fn solve_filtered_mare(
    plant: &PlantModel,
    gamma: f64,
    init: Option<&Mat>,
    opts: &SolverOptions,
) -> Result<FixedPointResult> {
    check_probability(gamma)?;
    let dual = DualMatrices::new(plant);
    let form = dual.form(plant);
    let start = init.cloned().unwrap_or_else(|| plant.p0().clone());
    iterate_fixed_point(start, opts, |x| form.g(gamma, &form.h(x))).map_err(map_singular_innovation)
}

fn map_singular_innovation(e: Error) -> Error {
    match e {
        Error::SingularInner => Error::SingularInnovation,
        other => other,
    }
}

/// Fixed point of `P̲ ↦ (1−γ) AP̲Aᵀ + Q`, iterated from `Q`.
pub fn solve_lower_bound_lyapunov(plant: &PlantModel, gamma: f64, opts: &SolverOptions) -> Result<FixedPointResult> {
    check_probability(gamma)?;
    let a = plant.a();
    let at = a.transpose();
    let q = plant.q();
    iterate_fixed_point(q.clone(), opts, |x| Ok(linalg::symmetrize(&((a * x * &at) * (1.0 - gamma) + q))))
}

/// Tests whether the Riccati map of `form` at probability `p` has a PSD
/// fixed point.
///
/// Iterates from `start` (zero by default) and at every iterate forms the
/// optimal gain `K` and the modified Lyapunov map
/// `D ↦ (1−p)aᵀDa + p(a+bK)ᵀD(a+bK)`. If that map has spectral radius below
/// one, the affine majorant of the Riccati map built from `K` has a bounded
/// fixed point that dominates every iterate started at zero, so the
/// iteration is bounded and converges. The test reports infeasible once
/// the trace passes `div_threshold`, the iteration budget runs out without
/// a certificate, or the homogeneous part `Π∞` of the map satisfies
/// `Π∞(X) ⪰ μX` with `μ > 1` at an iterate `X ≻ 0`. Because `Π ⪰ Π∞` and
/// `Π∞` is monotone and positively homogeneous, that last condition forces
/// `X_{k+j} ⪰ μʲ X_k`.
pub fn riccati_feasible(form: &ControlForm<'_>, p: f64, start: Option<&Mat>, opts: &SolverOptions) -> Result<Feasibility> {
    check_probability(p)?;
    let n = form.a.nrows();
    let mut x = start.cloned().unwrap_or_else(|| DMatrix::zeros(n, n));
    for it in 0..opts.max_iter {
        let gain = form.gain(&x)?;
        if linalg::spectral_radius(&form.modified_lyapunov_matrix(p, &gain)) < 1.0 - 1e-13 {
            return Ok(Feasibility { feasible: true, iterate: Some(x), iterations: it });
        }
        if grows_geometrically(form, p, &x) {
            return Ok(Feasibility { feasible: false, iterate: None, iterations: it });
        }
        x = form.step(p, &x)?;
        if !x.iter().all(|v| v.is_finite()) || x.trace() > opts.div_threshold {
            return Ok(Feasibility { feasible: false, iterate: None, iterations: it + 1 });
        }
    }
    Ok(Feasibility { feasible: false, iterate: None, iterations: opts.max_iter })
}

fn grows_geometrically(form: &ControlForm<'_>, p: f64, x: &Mat) -> bool {
    let Some(chol) = nalgebra::Cholesky::new(x.clone()) else {
        return false;
    };
    let Some(asym) = form.asymptotic_step(p, x) else {
        return false;
    };
    let l = chol.l();
    let Some(l_inv) = l.clone().try_inverse() else {
        return false;
    };
    let scaled = &l_inv * asym * l_inv.transpose();
    linalg::min_eigenvalue(&scaled) > 1.0 + 1e-12
}

/// Boundedness of the control MARE at arrival probability `eta`.
pub fn control_mare_feasible(
    plant: &PlantModel,
    eta: f64,
    start: Option<&Mat>,
    opts: &SolverOptions,
) -> Result<Feasibility> {
    riccati_feasible(&control_form(plant), eta, start, opts)
}

/// Boundedness of the estimation MARE at arrival probability `gamma`.
pub fn estimation_mare_feasible(
    plant: &PlantModel,
    gamma: f64,
    start: Option<&Mat>,
    opts: &SolverOptions,
) -> Result<Feasibility> {
    let dual = DualMatrices::new(plant);
    riccati_feasible(&dual.form(plant), gamma, start, opts).map_err(map_singular_innovation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, psd_geq, scalar};
    use crate::model::{validate_plant, PlantCandidate, ValidationMode};
    use nalgebra::DVector;

    fn plant(a: f64) -> PlantModel {
        validate_plant(&PlantCandidate::scalar(a, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0), ValidationMode::Permissive)
            .unwrap()
    }

    fn diag_plant() -> PlantModel {
        let raw = PlantCandidate {
            a: Mat::from_diagonal(&DVector::from_vec(vec![1.2, 0.5])),
            b: Mat::identity(2, 2),
            c: Mat::identity(2, 2),
            q: Mat::identity(2, 2),
            r: Mat::identity(2, 2),
            w: Mat::identity(2, 2),
            u: Mat::identity(2, 2),
            x0_mean: DVector::zeros(2),
            p0: Mat::identity(2, 2),
        };
        validate_plant(&raw, ValidationMode::Permissive).unwrap()
    }

    const S_STAR: f64 = 1.952_233_744_059_949; // (1.44 + √(1.44² + 4)) / 2

    #[test]
    fn closed_form_root() {
        let root = (1.44 + (1.44f64 * 1.44 + 4.0).sqrt()) / 2.0;
        assert!((root - S_STAR).abs() < 1e-15);
    }

    #[test]
    fn h_operators() {
        let p = plant(1.2);
        assert_eq!(op_h_tilde(&p, &scalar(0.0))[(0, 0)], 1.0);
        assert!((op_h_tilde(&p, &scalar(1.0))[(0, 0)] - 2.44).abs() < 1e-15);
        assert!((op_h_hat(&p, &scalar(1.0))[(0, 0)] - 2.44).abs() < 1e-15);
        assert_eq!(op_h_hat(&p, &scalar(0.0)), p.w().clone());
        let d = diag_plant();
        let ht = op_h_tilde(&d, &Mat::identity(2, 2));
        assert!(max_abs(&(ht - Mat::from_diagonal(&DVector::from_vec(vec![2.44, 1.25])))) < 1e-15);
    }

    #[test]
    fn h_hat_with_orthogonal_a() {
        let (s, c) = 0.7f64.sin_cos();
        let mut raw = diag_plant().to_candidate();
        raw.a = Mat::from_row_slice(2, 2, &[c, -s, s, c]);
        let p = validate_plant(&raw, ValidationMode::Permissive).unwrap();
        let out = op_h_hat(&p, &Mat::identity(2, 2));
        assert!(max_abs(&(out - Mat::identity(2, 2) * 2.0)) < 1e-14);
    }

    #[test]
    fn g_operators() {
        let p = plant(1.2);
        let x = scalar(1.0);
        assert_eq!(op_g_tilde(&p, 0.0, &x).unwrap(), x);
        assert_eq!(op_g_hat(&p, 0.0, &x).unwrap(), x);
        // 1 − γ·1/(1+1)
        assert!((op_g_tilde(&p, 1.0, &x).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((op_g_tilde(&p, 0.5, &x).unwrap()[(0, 0)] - 0.75).abs() < 1e-15);
        assert!((op_g_hat(&p, 1.0, &x).unwrap()[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(op_g_hat(&p, 1.0, &scalar(0.0)).unwrap()[(0, 0)], 0.0);
        assert!(op_g_hat(&p, 1.5, &x).is_err());
    }

    #[test]
    fn composition_is_the_mare() {
        // ĥ∘ĝ(1) = 1.44 + 1 − 1.44/2 = 1.72
        let p = plant(1.2);
        let s = op_h_hat(&p, &op_g_hat(&p, 1.0, &scalar(1.0)).unwrap());
        assert!((s[(0, 0)] - 1.72).abs() < 1e-15);
        let e = op_h_tilde(&p, &op_g_tilde(&p, 1.0, &scalar(1.0)).unwrap());
        assert!((e[(0, 0)] - 1.72).abs() < 1e-15);
    }

    #[test]
    fn control_mare_scalar_closed_form() {
        let p = plant(1.2);
        let res = solve_control_mare(&p, 1.0, None, &SolverOptions::default()).unwrap();
        assert!(res.converged && !res.diverged);
        assert!((res.value[(0, 0)] - S_STAR).abs() < 1e-8);
    }

    #[test]
    fn control_mare_diverges_without_control() {
        let res = solve_control_mare(&plant(1.2), 0.0, None, &SolverOptions::default()).unwrap();
        assert!(res.diverged && !res.converged);
    }

    #[test]
    fn stable_plant_gives_lyapunov_solution() {
        let res = solve_control_mare(&plant(0.5), 0.0, None, &SolverOptions::default()).unwrap();
        assert!(res.converged);
        assert!((res.value[(0, 0)] - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn max_iter_is_reported() {
        let opts = SolverOptions { max_iter: 3, ..Default::default() };
        assert!(matches!(
            solve_control_mare(&plant(1.2), 1.0, None, &opts),
            Err(Error::MaxIterExceeded { iterations: 3, .. })
        ));
    }

    #[test]
    fn estimation_mare_scalar() {
        let p = plant(1.2);
        let res = solve_estimation_mare(&p, 1.0, None, &SolverOptions::default()).unwrap();
        assert!(res.prior.converged);
        assert!((res.prior.value[(0, 0)] - S_STAR).abs() < 1e-8);
        let filtered = res.filtered.unwrap()[(0, 0)];
        let expect = S_STAR - S_STAR * S_STAR / (S_STAR + 1.0);
        assert!((filtered - expect).abs() < 1e-8);
        assert!((filtered - 0.661_273_433_374_964_6).abs() < 1e-8);
        let direct = solve_filtered_mare(&p, 1.0, None, &SolverOptions::default()).unwrap();
        assert!((direct.value[(0, 0)] - expect).abs() < 1e-8);
    }

    #[test]
    fn estimation_mare_diverges_without_measurements() {
        let res = solve_estimation_mare(&plant(1.2), 0.0, None, &SolverOptions::default()).unwrap();
        assert!(res.prior.diverged);
        assert!(res.filtered.is_none());
    }

    #[test]
    fn estimation_mare_matches_kalman_recursion() {
        let p = plant(0.5);
        let res = solve_estimation_mare(&p, 1.0, None, &SolverOptions::default()).unwrap();
        // brute-force prior-covariance Kalman recursion
        let mut pk = 1.0_f64;
        for _ in 0..10_000 {
            let post = pk - pk * pk / (pk + 1.0);
            pk = 0.25 * post + 1.0;
        }
        assert!((res.prior.value[(0, 0)] - pk).abs() < 1e-9);
    }

    #[test]
    fn lower_bound_lyapunov() {
        let p = plant(1.2);
        let opts = SolverOptions::default();
        let full = solve_lower_bound_lyapunov(&p, 1.0, &opts).unwrap();
        assert!(full.converged && full.value == *p.q());
        let half = solve_lower_bound_lyapunov(&p, 0.5, &opts).unwrap();
        assert!((half.value[(0, 0)] - 1.0 / (1.0 - 0.5 * 1.44)).abs() < 1e-8);
        assert!(solve_lower_bound_lyapunov(&p, 0.2, &opts).unwrap().diverged);
    }

    #[test]
    fn duality_with_transposed_plant() {
        let d = diag_plant();
        let mut raw = d.to_candidate();
        raw.a[(0, 1)] = 0.3;
        raw.c = Mat::from_row_slice(1, 2, &[1.0, 0.4]);
        raw.r = scalar(0.7);
        let p = validate_plant(&raw, ValidationMode::Permissive).unwrap();
        let dual = validate_plant(&p.dual(), ValidationMode::Permissive).unwrap();
        let opts = SolverOptions { tol: 1e-13, ..Default::default() };
        let est = solve_estimation_mare(&p, 0.8, Some(p.q()), &opts).unwrap();
        let ctl = solve_control_mare(&dual, 0.8, None, &opts).unwrap();
        assert!(max_abs(&(est.prior.value - ctl.value)) < 1e-9);
    }

    #[test]
    fn monotone_in_probability() {
        let p = plant(1.2);
        let opts = SolverOptions::default();
        let mut prev_s: Option<Mat> = None;
        let mut prev_p: Option<Mat> = None;
        for i in 0..20 {
            let prob = 0.35 + 0.65 * i as f64 / 19.0;
            let s = solve_control_mare(&p, prob, None, &opts).unwrap().value;
            let pb = solve_estimation_mare(&p, prob, None, &opts).unwrap().prior.value;
            if let (Some(ps), Some(pp)) = (&prev_s, &prev_p) {
                assert!(psd_geq(ps, &s, 1e-10));
                assert!(psd_geq(pp, &pb, 1e-10));
            }
            prev_s = Some(s);
            prev_p = Some(pb);
        }
    }

    #[test]
    fn converged_results_are_fixed_points() {
        let p = diag_plant();
        let opts = SolverOptions::default();
        let s = solve_control_mare(&p, 0.9, None, &opts).unwrap();
        let step = op_h_hat(&p, &op_g_hat(&p, 0.9, &s.value).unwrap());
        assert!(max_abs(&(step - &s.value)) <= 10.0 * opts.tol * max_abs(&s.value).max(1.0));
    }

    #[test]
    fn feasibility_certificate_scalar() {
        let p = plant(1.2);
        let opts = SolverOptions::default();
        let eta_c = 1.0 - 1.0 / 1.44;
        assert!(control_mare_feasible(&p, eta_c + 1e-6, None, &opts).unwrap().feasible);
        assert!(!control_mare_feasible(&p, eta_c - 1e-6, None, &opts).unwrap().feasible);
        assert!(estimation_mare_feasible(&p, eta_c + 1e-6, None, &opts).unwrap().feasible);
        assert!(!estimation_mare_feasible(&p, eta_c - 1e-6, None, &opts).unwrap().feasible);
        assert!(control_mare_feasible(&plant(0.5), 0.0, None, &opts).unwrap().feasible);
    }
}
