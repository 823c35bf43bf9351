//! Plant, cost weights and initial-state statistics.
//!
//! A [`PlantModel`] is only obtainable through [`validate_plant`], which checks
//! dimensions, symmetry and definiteness, and records the structural
//! assumptions (controllability, observability, instability) that the
//! boundedness results rely on.

use std::num::NonZeroUsize;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Absolute asymmetry (scaled by `max(1, ‖X‖_max)`) tolerated before symmetrizing.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Relative singular-value threshold for the Kalman rank tests.
pub const RANK_TOL: f64 = 1e-8;
/// Eigenvalue clamp used for `W^{1/2}` and `Q^{1/2}`.
pub const SQRT_CLAMP_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

/// Unvalidated plant data, as read from a config file.
#[derive(Debug, Clone)]
pub struct PlantCandidate {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub q: Mat,
    pub r: Mat,
    pub w: Mat,
    pub u: Mat,
    pub x0_mean: Vector,
    pub p0: Mat,
}

impl PlantCandidate {
    /// Scalar plant `x⁺ = a x + b u + w`, `y = c x + v`, with `x̄₀ = 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(a: f64, b: f64, c: f64, q: f64, r: f64, w: f64, u: f64, p0: f64) -> Self {
        let s = linalg::scalar;
        Self {
            a: s(a),
            b: s(b),
            c: s(c),
            q: s(q),
            r: s(r),
            w: s(w),
            u: s(u),
            x0_mean: Vector::zeros(1),
            p0: s(p0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AssumptionFlags {
    /// `(A, B)` controllable.
    pub control_controllable: bool,
    /// `(A, W^{1/2})` observable.
    pub cost_observable: bool,
    /// `(A, Q^{1/2})` controllable.
    pub noise_controllable: bool,
    /// `(A, C)` observable.
    pub output_observable: bool,
    /// At least one eigenvalue of `A` outside the unit circle.
    pub unstable: bool,
}

impl AssumptionFlags {
    pub fn violations(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.control_controllable {
            out.push("(A, B) is not controllable");
        }
        if !self.cost_observable {
            out.push("(A, W^1/2) is not observable");
        }
        if !self.noise_controllable {
            out.push("(A, Q^1/2) is not controllable");
        }
        if !self.output_observable {
            out.push("(A, C) is not observable");
        }
        if !self.unstable {
            out.push("A is stable (no eigenvalue with modulus > 1)");
        }
        out
    }

    pub fn all_hold(&self) -> bool {
        self.violations().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationMode {
    /// Assumption violations are reported as warnings.
    #[default]
    Permissive,
    /// Assumption violations are errors.
    Strict,
}

/// A validated LTI plant with quadratic cost and Gaussian initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    a: Mat,
    b: Mat,
    c: Mat,
    q: Mat,
    r: Mat,
    w: Mat,
    u: Mat,
    x0_mean: Vector,
    p0: Mat,
    flags: AssumptionFlags,
    warnings: Vec<String>,
}

impl PlantModel {
    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn q(&self) -> &Mat {
        &self.q
    }
    pub fn r(&self) -> &Mat {
        &self.r
    }
    pub fn w(&self) -> &Mat {
        &self.w
    }
    pub fn u(&self) -> &Mat {
        &self.u
    }
    pub fn x0_mean(&self) -> &Vector {
        &self.x0_mean
    }
    pub fn p0(&self) -> &Mat {
        &self.p0
    }
    pub fn flags(&self) -> AssumptionFlags {
        self.flags
    }
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
    /// State dimension `n`.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension `q`.
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    /// Output dimension `p`.
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn to_candidate(&self) -> PlantCandidate {
        PlantCandidate {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            q: self.q.clone(),
            r: self.r.clone(),
            w: self.w.clone(),
            u: self.u.clone(),
            x0_mean: self.x0_mean.clone(),
            p0: self.p0.clone(),
        }
    }

    /// The estimation problem written in control form: `(Aᵀ, Cᵀ, Q, R)`.
    ///
    /// Returned as a raw candidate because the dual generally violates the
    /// primal's cost/noise assumptions; only the matrices matter to callers.
    pub fn dual(&self) -> PlantCandidate {
        PlantCandidate {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
            q: self.w.clone(),
            r: self.u.clone(),
            w: self.q.clone(),
            u: self.r.clone(),
            x0_mean: self.x0_mean.clone(),
            p0: self.p0.clone(),
        }
    }
}

/// Finite-horizon length or the infinite-horizon average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonSpec {
    Finite(NonZeroUsize),
    Infinite,
}

impl HorizonSpec {
    pub fn finite(n: usize) -> Result<Self> {
        NonZeroUsize::new(n)
            .map(Self::Finite)
            .ok_or_else(|| Error::InvalidParameter("horizon N must be >= 1".into()))
    }
}

fn check_finite(name: &'static str, m: &Mat) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { name })
    }
}

fn check_shape(name: &str, m: &Mat, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() == rows && m.ncols() == cols {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )))
    }
}

fn symmetric(name: &'static str, m: &Mat) -> Result<Mat> {
    let scale = linalg::max_abs(m).max(1.0);
    let asym = linalg::asymmetry(m);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { name, asymmetry: asym });
    }
    Ok(linalg::symmetrize(m))
}

fn require_psd(name: &'static str, m: &Mat) -> Result<()> {
    let min_eig = linalg::min_eigenvalue(m);
    if min_eig < -PSD_TOL * linalg::max_abs(m).max(1.0) {
        Err(Error::NotPsd { name, min_eig })
    } else {
        Ok(())
    }
}

fn require_pd(name: &'static str, m: &Mat) -> Result<()> {
    let min_eig = linalg::min_eigenvalue(m);
    if min_eig <= PSD_TOL * linalg::max_abs(m).max(1.0) {
        Err(Error::NotPositiveDefinite { name, min_eig })
    } else {
        Ok(())
    }
}

/// Validates a candidate plant.
///
/// Dimension, finiteness, symmetry and definiteness problems are always
/// errors. Structural assumption violations are errors only in
/// [`ValidationMode::Strict`]; otherwise they are recorded as warnings on
/// the returned model.
pub fn validate_plant(raw: &PlantCandidate, mode: ValidationMode) -> Result<PlantModel> {
    let fields: [(&'static str, &Mat); 8] = [
        ("A", &raw.a),
        ("B", &raw.b),
        ("C", &raw.c),
        ("Q", &raw.q),
        ("R", &raw.r),
        ("W", &raw.w),
        ("U", &raw.u),
        ("P0", &raw.p0),
    ];
    for (name, m) in fields {
        check_finite(name, m)?;
    }
    if !raw.x0_mean.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { name: "x0_mean" });
    }

    let n = raw.a.nrows();
    if n == 0 {
        return Err(Error::DimensionMismatch("A must be non-empty".into()));
    }
    let q_in = raw.b.ncols();
    let p_out = raw.c.nrows();
    check_shape("A", &raw.a, n, n)?;
    check_shape("B", &raw.b, n, q_in)?;
    check_shape("C", &raw.c, p_out, n)?;
    check_shape("Q", &raw.q, n, n)?;
    check_shape("R", &raw.r, p_out, p_out)?;
    check_shape("W", &raw.w, n, n)?;
    check_shape("U", &raw.u, q_in, q_in)?;
    check_shape("P0", &raw.p0, n, n)?;
    if raw.x0_mean.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "x0_mean has length {}, expected {n}",
            raw.x0_mean.len()
        )));
    }
    if q_in == 0 || p_out == 0 {
        return Err(Error::DimensionMismatch("B and C must be non-empty".into()));
    }

    let q = symmetric("Q", &raw.q)?;
    let r = symmetric("R", &raw.r)?;
    let w = symmetric("W", &raw.w)?;
    let u = symmetric("U", &raw.u)?;
    let p0 = symmetric("P0", &raw.p0)?;
    require_pd("R", &r)?;
    require_pd("U", &u)?;
    require_psd("Q", &q)?;
    require_psd("W", &w)?;
    require_psd("P0", &p0)?;

    let a = raw.a.clone();
    let w_half = linalg::psd_sqrt(&w, SQRT_CLAMP_TOL);
    let q_half = linalg::psd_sqrt(&q, SQRT_CLAMP_TOL);
    let flags = AssumptionFlags {
        control_controllable: linalg::is_controllable(&a, &raw.b, RANK_TOL),
        cost_observable: linalg::is_observable(&a, &w_half, RANK_TOL),
        noise_controllable: linalg::is_controllable(&a, &q_half, RANK_TOL),
        output_observable: linalg::is_observable(&a, &raw.c, RANK_TOL),
        unstable: linalg::eigen_moduli(&a).iter().any(|&m| m > 1.0),
    };
    let violations = flags.violations();
    if mode == ValidationMode::Strict && !violations.is_empty() {
        return Err(Error::AssumptionViolated(violations.join("; ")));
    }

    Ok(PlantModel {
        a,
        b: raw.b.clone(),
        c: raw.c.clone(),
        q,
        r,
        w,
        u,
        x0_mean: raw.x0_mean.clone(),
        p0,
        flags,
        warnings: violations.into_iter().map(String::from).collect(),
    })
}

/// `(max_i |λᵢᵘ|², ∏_i |λᵢᵘ|²)` over the eigenvalues of `A` with modulus > 1.
/// A stable matrix yields `(1, 1)`.
pub fn unstable_eigen_products(a: &Mat) -> (f64, f64) {
    linalg::eigen_moduli(a)
        .into_iter()
        .filter(|&m| m > 1.0)
        .fold((1.0, 1.0), |(mx, prod), m| (f64::max(mx, m * m), prod * m * m))
}
