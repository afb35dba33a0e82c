//! Exponentially fitted one-stage Runge-Kutta schemes and their implicit
//! stepper.
//!
//! The scheme family is the trigonometrically fitted implicit midpoint rule:
//! for a fitting parameter `nu = omega * dt` and abscissa `c1`, the modified
//! tableau
//!
//! ```text
//! gamma1 = 1 / cos(c1 nu),   a11 = tan(c1 nu) / nu,   b1 = sin nu / (nu cos(c1 nu))
//! ```
//!
//! integrates oscillations of angular frequency `omega` exactly and collapses
//! to the classic implicit midpoint rule as `nu -> 0`. The stage equation
//! carries the modification `Y1 = gamma1 u_n + dt a11 f(Y1)` — stages are
//! scaled copies of the base point, which is what lets the fitted scheme keep
//! the discrete conservation laws of [`crate::problems`]: for `c1 = 1/2` the
//! family satisfies the symplecticity condition and preserves quadratic
//! invariants to rounding at any `nu`.
//!
//! [`step`] solves the stage system with banded Newton iterations and then
//! *finalizes* with `u_{n+1} = u_n + dt b1 f(Y1)` evaluated at the converged
//! stage, so the update is an exact multiple of a discrete divergence and the
//! conservation sums telescope to rounding rather than to Newton tolerance.
//! Arbitrary tableaus (e.g. Gauss collocation) are accepted for comparison
//! runs through a dense stacked-stage path meant for small systems.

use crate::problems::OdeSystem;
use crate::solver::{newton_solve, BandShape, BandedMatrix, DenseLu, SolverError, SolverOptions};
use thiserror::Error;

/// Margin keeping `cos(c1 nu)` and `sin(nu)/nu` away from their poles/zeros.
const PRINCIPAL_MARGIN: f64 = 1e-8;

/// Below this `|nu|` the closed-form coefficients lose accuracy to
/// cancellation and a fourth-order Taylor expansion is used instead.
const SERIES_THRESHOLD: f64 = 1e-6;

/// Errors from tableau construction and time stepping.
#[derive(Debug, Error)]
pub enum EfrkError {
    /// `nu` or `c1 * nu` reached the non-principal branch of the fitted
    /// coefficient functions.
    #[error("fitted parameter outside the principal branch: nu = {nu}, c1 = {c1}")]
    SingularParameter { nu: f64, c1: f64 },
    /// Dimension or sign problems in a user-supplied tableau.
    #[error("invalid tableau: {0}")]
    BadTableau(String),
    /// The stage system failed to solve at step start time `t`.
    #[error("stage solve failed at t = {t}: {source}")]
    Stage {
        t: f64,
        #[source]
        source: SolverError,
    },
    /// Non-positive time step.
    #[error("dt must be positive and finite, got {0}")]
    BadTimeStep(f64),
    /// `t_end - t0` is not an integer number of steps.
    #[error("time span {span} is not an integer multiple of dt = {dt}")]
    StepCount { span: f64, dt: f64 },
}

/// A (possibly fitted) implicit Runge-Kutta tableau with stage scalings.
///
/// The scheme reads `Y_i = gamma_i u_n + dt sum_j a_ij f(t_n + c_j dt, Y_j)`,
/// `u_{n+1} = u_n + dt sum_i b_i f(t_n + c_i dt, Y_i)`. Classic tableaus have
/// all `gamma_i = 1` and `nu = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EfrkTableau {
    s: usize,
    gamma: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    nu: f64,
    label: String,
}

impl EfrkTableau {
    /// Builds a tableau from raw coefficients (`a` row-major, `s * s`).
    ///
    /// # Errors
    ///
    /// Mismatched lengths, zero stages, non-finite entries, or non-positive
    /// stage scalings.
    pub fn new(
        gamma: Vec<f64>,
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        nu: f64,
        label: impl Into<String>,
    ) -> Result<Self, EfrkError> {
        let s = b.len();
        if s == 0 {
            return Err(EfrkError::BadTableau(
                "at least one stage is required".into(),
            ));
        }
        if gamma.len() != s || c.len() != s || a.len() != s * s {
            return Err(EfrkError::BadTableau(format!(
                "inconsistent dimensions: gamma {}, a {}, b {}, c {}",
                gamma.len(),
                a.len(),
                s,
                c.len()
            )));
        }
        let finite = gamma
            .iter()
            .chain(&a)
            .chain(&b)
            .chain(&c)
            .all(|v| v.is_finite());
        if !finite || !nu.is_finite() {
            return Err(EfrkError::BadTableau("non-finite coefficient".into()));
        }
        if gamma.iter().any(|&g| g <= 0.0) {
            return Err(EfrkError::BadTableau(
                "stage scalings must be positive".into(),
            ));
        }
        Ok(Self {
            s,
            gamma,
            a,
            b,
            c,
            nu,
            label: label.into(),
        })
    }

    /// Stage count.
    pub fn stages(&self) -> usize {
        self.s
    }

    /// Stage scaling `gamma_i`.
    pub fn gamma(&self, i: usize) -> f64 {
        self.gamma[i]
    }

    /// Coupling coefficient `a_ij`.
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.s + j]
    }

    /// Weight `b_i`.
    pub fn b(&self, i: usize) -> f64 {
        self.b[i]
    }

    /// Abscissa `c_i`.
    pub fn c(&self, i: usize) -> f64 {
        self.c[i]
    }

    /// The fitting parameter `nu = omega * dt` (0 for classic tableaus).
    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Human-readable identifier used in reports.
    pub fn label(&self) -> &str {
        &self.label
    }
}

/// The classic implicit midpoint rule (the `nu -> 0` limit of the fitted
/// family): `gamma = 1`, `a = 1/2`, `b = 1`, `c = 1/2`.
pub fn classic_midpoint() -> EfrkTableau {
    EfrkTableau::new(
        vec![1.0],
        vec![0.5],
        vec![1.0],
        vec![0.5],
        0.0,
        "classic midpoint",
    )
    .expect("static tableau")
}

/// Builds the one-stage exponentially fitted tableau for fitting parameter
/// `nu = omega * dt` and abscissa `c1`.
///
/// For `|nu|` below `1e-6` the closed forms are replaced by their
/// fourth-order Taylor expansions, which keeps every coefficient accurate to
/// rounding through the crossover and reproduces the classic midpoint rule
/// exactly at `nu = 0`.
///
/// # Errors
///
/// [`EfrkError::SingularParameter`] when `|c1 nu| >= pi/2` or `|nu| >= pi`
/// (up to a small guard margin): beyond those the coefficient functions
/// change branch and the scheme is meaningless.
pub fn one_stage_ef_coeffs(nu: f64, c1: f64) -> Result<EfrkTableau, EfrkError> {
    let singular = !((c1 * nu).abs() < std::f64::consts::FRAC_PI_2 - PRINCIPAL_MARGIN)
        || !(nu.abs() < std::f64::consts::PI - PRINCIPAL_MARGIN);
    if singular || !c1.is_finite() {
        return Err(EfrkError::SingularParameter { nu, c1 });
    }
    let (gamma, a, b) = if nu.abs() < SERIES_THRESHOLD {
        let (n2, c2) = (nu * nu, c1 * c1);
        let n4 = n2 * n2;
        let gamma = 1.0 + c2 * n2 / 2.0 + 5.0 * c2 * c2 * n4 / 24.0;
        let a = c1 + c2 * c1 * n2 / 3.0 + 2.0 * c2 * c2 * c1 * n4 / 15.0;
        let b = 1.0
            + (c2 / 2.0 - 1.0 / 6.0) * n2
            + (5.0 * c2 * c2 / 24.0 - c2 / 12.0 + 1.0 / 120.0) * n4;
        (gamma, a, b)
    } else {
        let cos_cnu = (c1 * nu).cos();
        (
            (1.0 / cos_cnu),
            (c1 * nu).tan() / nu,
            nu.sin() / (nu * cos_cnu),
        )
    };
    let label = if c1 == 0.5 {
        format!("ef midpoint (nu = {nu:.3e})")
    } else {
        format!("ef one-stage (nu = {nu:.3e}, c1 = {c1})")
    };
    EfrkTableau::new(vec![gamma], vec![a], vec![b], vec![c1], nu, label)
}

/// Result of a symplecticity test.
#[derive(Debug, Clone, Copy)]
pub struct SymplecticCheck {
    /// Whether every defect entry is within tolerance.
    pub symplectic: bool,
    /// Largest defect magnitude found.
    pub max_defect: f64,
}

/// Checks the quadratic-invariant (symplecticity) condition
/// `b_i a_ij / gamma_i + b_j a_ji / gamma_j - b_i b_j = 0` for all `i, j`.
///
/// Tableaus passing this preserve every quadratic invariant of the vector
/// field exactly (up to the stage-equation solve); the fitted midpoint family
/// passes precisely when `c1 = 1/2`.
pub fn is_symplectic(t: &EfrkTableau, tol: f64) -> SymplecticCheck {
    let mut max_defect = 0.0f64;
    for i in 0..t.s {
        for j in 0..t.s {
            let d =
                t.b(i) * t.a(i, j) / t.gamma(i) + t.b(j) * t.a(j, i) / t.gamma(j) - t.b(i) * t.b(j);
            max_defect = max_defect.max(d.abs());
        }
    }
    SymplecticCheck {
        symplectic: max_defect <= tol,
        max_defect,
    }
}

/// One accepted implicit step.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// The updated state `u_{n+1}`.
    pub state: Vec<f64>,
    /// Converged stage states `Y_i`.
    pub stages: Vec<Vec<f64>>,
    /// Vector field at each stage, `f(t_n + c_i dt, Y_i)` — the exact
    /// increments of the finalized update.
    pub stage_rhs: Vec<Vec<f64>>,
    /// Newton iterations spent.
    pub iterations: usize,
    /// Final stage-equation residual (infinity norm).
    pub residual_norm: f64,
}

/// How the stage system is posed and solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Route {
    /// `s = 1`, `c1 = 1/2`: solve for `u_{n+1}` directly with the stage
    /// eliminated as `Y = gamma (u_n + u_{n+1}) / 2`.
    Compact,
    /// `s = 1`, general `c1`: solve the banded stage equation for `Y_1`.
    Stage,
    /// Any `s`: dense stacked stage system (reference path, small systems).
    Dense,
}

fn route_for(t: &EfrkTableau) -> Route {
    if t.s == 1 {
        if t.c(0) == 0.5 {
            Route::Compact
        } else {
            Route::Stage
        }
    } else {
        Route::Dense
    }
}

/// Advances `u0` one step of size `dt` from time `t`.
///
/// The Newton shape (bandwidth, periodic corners) is taken from the system,
/// not from `opts`; `opts` supplies tolerances, budget, and Jacobian mode.
/// Prescribed boundary entries are pinned to the system's closure: the stage
/// system carries identity rows for them and the finalized state is passed
/// through [`OdeSystem::apply_boundary`] at `t + dt`.
///
/// # Errors
///
/// [`EfrkError::Stage`] when the Newton iteration fails.
pub fn step<S>(
    tableau: &EfrkTableau,
    system: &S,
    t: f64,
    u0: &[f64],
    dt: f64,
    opts: &SolverOptions,
) -> Result<StepResult, EfrkError>
where
    S: OdeSystem + ?Sized,
{
    step_routed(tableau, system, t, u0, dt, opts, route_for(tableau))
}

fn step_routed<S>(
    tableau: &EfrkTableau,
    system: &S,
    t: f64,
    u0: &[f64],
    dt: f64,
    opts: &SolverOptions,
    route: Route,
) -> Result<StepResult, EfrkError>
where
    S: OdeSystem + ?Sized,
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(EfrkError::BadTimeStep(dt));
    }
    let n = system.dof();
    assert_eq!(u0.len(), n, "state length does not match system dof");
    if route != Route::Dense && tableau.s != 1 {
        return Err(EfrkError::BadTableau(format!(
            "banded route requires one stage, tableau has {}",
            tableau.s
        )));
    }
    let mut local = *opts;
    local.bandwidth = system.bandwidth().max(1);
    local.periodic = system.periodic_jacobian();
    match route {
        Route::Compact => step_compact(tableau, system, t, u0, dt, &local),
        Route::Stage => step_stage(tableau, system, t, u0, dt, &local),
        Route::Dense => step_dense(tableau, system, t, u0, dt, &local),
    }
}

/// Prescribed boundary values at time `t1` (only pinned entries meaningful).
fn prescribed<S: OdeSystem + ?Sized>(system: &S, t1: f64, u0: &[f64]) -> Vec<f64> {
    let mut p = u0.to_vec();
    system.apply_boundary(t1, &mut p);
    p
}

/// Finalizes a one-stage step from the converged stage: recomputes the stage
/// derivative and applies the exact divergence update.
fn finalize_one_stage<S: OdeSystem + ?Sized>(
    system: &S,
    tableau: &EfrkTableau,
    t: f64,
    u0: &[f64],
    dt: f64,
    y: Vec<f64>,
    iterations: usize,
    residual_norm: f64,
) -> StepResult {
    let ts = t + tableau.c(0) * dt;
    let mut f = vec![0.0; u0.len()];
    system.rhs(ts, &y, &mut f);
    let mut state: Vec<f64> = u0
        .iter()
        .zip(&f)
        .map(|(u, fi)| u + dt * tableau.b(0) * fi)
        .collect();
    if system.has_pinned() {
        system.apply_boundary(t + dt, &mut state);
    }
    StepResult {
        state,
        stages: vec![y],
        stage_rhs: vec![f],
        iterations,
        residual_norm,
    }
}

fn step_compact<S>(
    tableau: &EfrkTableau,
    system: &S,
    t: f64,
    u0: &[f64],
    dt: f64,
    opts: &SolverOptions,
) -> Result<StepResult, EfrkError>
where
    S: OdeSystem + ?Sized,
{
    let n = u0.len();
    let (g, b1) = (tableau.gamma(0), tableau.b(0));
    let ts = t + 0.5 * dt;
    let pinned = system.has_pinned();
    let presc = if pinned {
        prescribed(system, t + dt, u0)
    } else {
        Vec::new()
    };

    let mut ry = vec![0.0; n];
    let mut rf = vec![0.0; n];
    let residual = |x: &[f64], r: &mut [f64]| {
        for i in 0..n {
            ry[i] = 0.5 * g * (u0[i] + x[i]);
        }
        system.rhs(ts, &ry, &mut rf);
        for i in 0..n {
            r[i] = x[i] - u0[i] - dt * b1 * rf[i];
        }
        if pinned {
            for i in 0..n {
                if system.is_pinned(i) {
                    r[i] = x[i] - presc[i];
                }
            }
        }
    };
    let mut jy = vec![0.0; n];
    let jacobian = |x: &[f64], jac: &mut BandedMatrix| {
        for i in 0..n {
            jy[i] = 0.5 * g * (u0[i] + x[i]);
        }
        system.fill_jacobian(ts, &jy, jac);
        // R = x - u0 - dt b f(Y(x)), dY/dx = gamma/2.
        jac.scale(-dt * b1 * 0.5 * g);
        for i in 0..n {
            jac.add(i, i, 1.0);
        }
    };
    let sol = newton_solve(residual, jacobian, u0, opts)
        .map_err(|source| EfrkError::Stage { t, source })?;
    let y: Vec<f64> = u0
        .iter()
        .zip(&sol.x)
        .map(|(a, b)| 0.5 * g * (a + b))
        .collect();
    Ok(finalize_one_stage(
        system,
        tableau,
        t,
        u0,
        dt,
        y,
        sol.iterations,
        sol.residual_norm,
    ))
}

fn step_stage<S>(
    tableau: &EfrkTableau,
    system: &S,
    t: f64,
    u0: &[f64],
    dt: f64,
    opts: &SolverOptions,
) -> Result<StepResult, EfrkError>
where
    S: OdeSystem + ?Sized,
{
    let n = u0.len();
    let (g, a11, b1) = (tableau.gamma(0), tableau.a(0, 0), tableau.b(0));
    let ts = t + tableau.c(0) * dt;
    let pinned = system.has_pinned();
    // Boundary stage values chosen so the stage relation stays consistent
    // with the finalized update at pinned entries:
    // Y_b = gamma u0 + (a/b) (prescribed(t1) - u0).
    let ypin: Vec<f64> = if pinned {
        let presc = prescribed(system, t + dt, u0);
        u0.iter()
            .zip(&presc)
            .map(|(u, p)| g * u + a11 / b1 * (p - u))
            .collect()
    } else {
        Vec::new()
    };

    let mut rf = vec![0.0; n];
    let residual = |x: &[f64], r: &mut [f64]| {
        system.rhs(ts, x, &mut rf);
        for i in 0..n {
            r[i] = x[i] - g * u0[i] - dt * a11 * rf[i];
        }
        if pinned {
            for i in 0..n {
                if system.is_pinned(i) {
                    r[i] = x[i] - ypin[i];
                }
            }
        }
    };
    let jacobian = |x: &[f64], jac: &mut BandedMatrix| {
        system.fill_jacobian(ts, x, jac);
        jac.scale(-dt * a11);
        for i in 0..n {
            jac.add(i, i, 1.0);
        }
    };
    let mut guess: Vec<f64> = u0.iter().map(|u| g * u).collect();
    if pinned {
        for i in 0..n {
            if system.is_pinned(i) {
                guess[i] = ypin[i];
            }
        }
    }
    let sol = newton_solve(residual, jacobian, &guess, opts)
        .map_err(|source| EfrkError::Stage { t, source })?;
    Ok(finalize_one_stage(
        system,
        tableau,
        t,
        u0,
        dt,
        sol.x,
        sol.iterations,
        sol.residual_norm,
    ))
}

fn step_dense<S>(
    tableau: &EfrkTableau,
    system: &S,
    t: f64,
    u0: &[f64],
    dt: f64,
    opts: &SolverOptions,
) -> Result<StepResult, EfrkError>
where
    S: OdeSystem + ?Sized,
{
    let n = u0.len();
    let s = tableau.s;
    let big = s * n;
    let pinned = system.has_pinned();
    let shape = BandShape::symmetric(n, system.bandwidth().max(1), system.periodic_jacobian());
    // Per-stage prescribed boundary values, scaled into stage space.
    let presc: Vec<Vec<f64>> = (0..s)
        .map(|i| {
            if pinned {
                prescribed(system, t + tableau.c(i) * dt, u0)
            } else {
                Vec::new()
            }
        })
        .collect();

    let stage_times: Vec<f64> = (0..s).map(|i| t + tableau.c(i) * dt).collect();
    let mut z: Vec<f64> = Vec::with_capacity(big);
    for i in 0..s {
        let g = tableau.gamma(i);
        z.extend(u0.iter().map(|u| g * u));
    }
    if pinned {
        for i in 0..s {
            for p in 0..n {
                if system.is_pinned(p) {
                    z[i * n + p] = tableau.gamma(i) * presc[i][p];
                }
            }
        }
    }

    let mut f = vec![0.0; big];
    let mut r = vec![0.0; big];
    let eval_residual = |z: &[f64], f: &mut [f64], r: &mut [f64]| {
        for i in 0..s {
            system.rhs(
                stage_times[i],
                &z[i * n..(i + 1) * n],
                &mut f[i * n..(i + 1) * n],
            );
        }
        for i in 0..s {
            for p in 0..n {
                let mut acc = z[i * n + p] - tableau.gamma(i) * u0[p];
                for j in 0..s {
                    acc -= dt * tableau.a(i, j) * f[j * n + p];
                }
                r[i * n + p] = acc;
            }
            if pinned {
                for p in 0..n {
                    if system.is_pinned(p) {
                        r[i * n + p] = z[i * n + p] - tableau.gamma(i) * presc[i][p];
                    }
                }
            }
        }
    };

    eval_residual(&z, &mut f, &mut r);
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let target = opts.abs_tol + opts.rel_tol * inf(&r);
    let mut band = BandedMatrix::zeros(shape).map_err(|e| EfrkError::Stage {
        t,
        source: e.into(),
    })?;
    let mut iterations = 0;
    let mut rn = inf(&r);
    while rn > target {
        if iterations >= opts.max_iters {
            return Err(EfrkError::Stage {
                t,
                source: SolverError::NonConvergence {
                    iterations,
                    residual_norm: rn,
                },
            });
        }
        // Dense stacked Jacobian: block (i, j) = delta_ij I - dt a_ij J(Y_j).
        let mut amat = vec![0.0; big * big];
        for j in 0..s {
            band.clear();
            system.fill_jacobian(stage_times[j], &z[j * n..(j + 1) * n], &mut band);
            let dense = band.to_dense();
            for i in 0..s {
                let aij = tableau.a(i, j);
                if aij == 0.0 && i != j {
                    continue;
                }
                for p in 0..n {
                    let row = (i * n + p) * big + j * n;
                    for q in 0..n {
                        amat[row + q] -= dt * aij * dense[p * n + q];
                    }
                }
            }
        }
        for d in 0..big {
            amat[d * big + d] += 1.0;
        }
        if pinned {
            for i in 0..s {
                for p in 0..n {
                    if system.is_pinned(p) {
                        let row = i * n + p;
                        for q in 0..big {
                            amat[row * big + q] = if q == row { 1.0 } else { 0.0 };
                        }
                    }
                }
            }
        }
        let lu = DenseLu::factor(amat, big).map_err(|e| EfrkError::Stage {
            t,
            source: e.into(),
        })?;
        let mut delta = r.clone();
        lu.solve(&mut delta).map_err(|e| EfrkError::Stage {
            t,
            source: e.into(),
        })?;
        for (zi, di) in z.iter_mut().zip(&delta) {
            *zi -= di;
        }
        iterations += 1;
        eval_residual(&z, &mut f, &mut r);
        rn = inf(&r);
        if inf(&delta) <= 4.0 * f64::EPSILON * (1.0 + inf(&z)) {
            break;
        }
    }

    // Finalize from the converged stage derivatives.
    let mut state = u0.to_vec();
    for i in 0..s {
        let bi = tableau.b(i);
        for p in 0..n {
            state[p] += dt * bi * f[i * n + p];
        }
    }
    if pinned {
        system.apply_boundary(t + dt, &mut state);
    }
    let stages = (0..s).map(|i| z[i * n..(i + 1) * n].to_vec()).collect();
    let stage_rhs = (0..s).map(|i| f[i * n..(i + 1) * n].to_vec()).collect();
    Ok(StepResult {
        state,
        stages,
        stage_rhs,
        iterations,
        residual_norm: rn,
    })
}

/// Integrates from `t0` to `t_end` in uniform steps of `dt`, streaming every
/// accepted state (including the initial one) to `observe(step_index, time,
/// state)`. Returns the final state.
///
/// # Errors
///
/// [`EfrkError::StepCount`] when the span is not an integer number of steps
/// (to a generous rounding margin), plus anything [`step`] reports.
pub fn integrate_with<S, F>(
    tableau: &EfrkTableau,
    system: &S,
    u0: &[f64],
    t0: f64,
    t_end: f64,
    dt: f64,
    opts: &SolverOptions,
    mut observe: F,
) -> Result<Vec<f64>, EfrkError>
where
    S: OdeSystem + ?Sized,
    F: FnMut(usize, f64, &[f64]),
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(EfrkError::BadTimeStep(dt));
    }
    let span = t_end - t0;
    if !(span >= 0.0) {
        return Err(EfrkError::StepCount { span, dt });
    }
    let steps_f = span / dt;
    let n_steps = steps_f.round();
    if (steps_f - n_steps).abs() > 64.0 * f64::EPSILON * n_steps.max(1.0) {
        return Err(EfrkError::StepCount { span, dt });
    }
    let n_steps = n_steps as usize;

    let mut u = u0.to_vec();
    if system.has_pinned() {
        system.apply_boundary(t0, &mut u);
    }
    observe(0, t0, &u);
    for k in 0..n_steps {
        let t = t0 + k as f64 * dt;
        let result = step(tableau, system, t, &u, dt, opts)?;
        u = result.state;
        observe(k + 1, t0 + (k + 1) as f64 * dt, &u);
    }
    Ok(u)
}

/// Integrates and materializes the whole trajectory. See [`integrate_with`]
/// for the streaming variant used by long runs.
///
/// # Errors
///
/// As [`integrate_with`].
pub fn integrate<S>(
    tableau: &EfrkTableau,
    system: &S,
    u0: &[f64],
    t0: f64,
    t_end: f64,
    dt: f64,
    opts: &SolverOptions,
) -> Result<Trajectory, EfrkError>
where
    S: OdeSystem + ?Sized,
{
    let mut states = Vec::new();
    integrate_with(tableau, system, u0, t0, t_end, dt, opts, |_, _, u| {
        states.push(u.to_vec());
    })?;
    Ok(Trajectory {
        states,
        t0,
        dt,
        tableau: tableau.clone(),
    })
}

/// A uniformly sampled trajectory with the tableau that produced it.
#[derive(Debug, Clone)]
pub struct Trajectory {
    states: Vec<Vec<f64>>,
    t0: f64,
    dt: f64,
    tableau: EfrkTableau,
}

impl Trajectory {
    /// Builds a trajectory from externally produced states (tests, replays).
    ///
    /// # Errors
    ///
    /// Empty state list, ragged state lengths, or non-positive `dt`.
    pub fn from_states(
        states: Vec<Vec<f64>>,
        t0: f64,
        dt: f64,
        tableau: EfrkTableau,
    ) -> Result<Self, EfrkError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(EfrkError::BadTimeStep(dt));
        }
        let Some(first) = states.first() else {
            return Err(EfrkError::BadTableau(
                "trajectory needs at least one state".into(),
            ));
        };
        let n = first.len();
        if states.iter().any(|s| s.len() != n) {
            return Err(EfrkError::BadTableau("ragged trajectory states".into()));
        }
        Ok(Self {
            states,
            t0,
            dt,
            tableau,
        })
    }

    /// All states, oldest first.
    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    /// State at step `i`.
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    /// Number of stored states (steps + 1).
    pub fn len(&self) -> usize {
        self.states.len()
    }

    /// Whether the trajectory is empty (never true for constructed values).
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Start time.
    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Step size.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Time of step `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// The tableau used to produce the states.
    pub fn tableau(&self) -> &EfrkTableau {
        &self.tableau
    }

    /// The last state.
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }
}

/// The planar oscillator `u' = -omega v, v' = omega u` — the system the
/// fitted one-stage family integrates exactly when `nu = omega * dt`.
///
/// Kept public as the canonical fitting-space test problem: a long run with
/// the matched tableau should track [`Rotation::exact`] to rounding.
#[derive(Debug, Clone, Copy)]
pub struct Rotation {
    /// Angular frequency.
    pub omega: f64,
}

impl Rotation {
    /// The exact flow: rotation of `y0` by the angle `omega * t`.
    pub fn exact(&self, y0: [f64; 2], t: f64) -> [f64; 2] {
        let (s, c) = (self.omega * t).sin_cos();
        [c * y0[0] - s * y0[1], s * y0[0] + c * y0[1]]
    }
}

impl crate::problems::OdeSystem for Rotation {
    fn dof(&self) -> usize {
        2
    }
    fn bandwidth(&self) -> usize {
        1
    }
    fn periodic_jacobian(&self) -> bool {
        false
    }
    fn rhs(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        out[0] = -self.omega * y[1];
        out[1] = self.omega * y[0];
    }
    fn fill_jacobian(&self, _t: f64, _y: &[f64], jac: &mut BandedMatrix) {
        jac.set(0, 1, -self.omega);
        jac.set(1, 0, self.omega);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Topology;
    use crate::problems::{advection, mkdv, MkdvBreatherParams, WaveProfile};
    use std::f64::consts::PI;

    /// Scalar `u' = u`.
    struct Exponential;

    impl crate::problems::OdeSystem for Exponential {
        fn dof(&self) -> usize {
            1
        }
        fn bandwidth(&self) -> usize {
            1
        }
        fn periodic_jacobian(&self) -> bool {
            false
        }
        fn rhs(&self, _t: f64, y: &[f64], out: &mut [f64]) {
            out[0] = y[0];
        }
        fn fill_jacobian(&self, _t: f64, _y: &[f64], jac: &mut BandedMatrix) {
            jac.set(0, 0, 1.0);
        }
    }

    /// `f = 0`: stages must collapse to `gamma u0`.
    struct Still {
        n: usize,
    }

    impl crate::problems::OdeSystem for Still {
        fn dof(&self) -> usize {
            self.n
        }
        fn bandwidth(&self) -> usize {
            1
        }
        fn periodic_jacobian(&self) -> bool {
            false
        }
        fn rhs(&self, _t: f64, _y: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn fill_jacobian(&self, _t: f64, _y: &[f64], _jac: &mut BandedMatrix) {}
    }

    fn gauss2() -> EfrkTableau {
        let r = 3.0f64.sqrt() / 6.0;
        EfrkTableau::new(
            vec![1.0, 1.0],
            vec![0.25, 0.25 - r, 0.25 + r, 0.25],
            vec![0.5, 0.5],
            vec![0.5 - r, 0.5 + r],
            0.0,
            "gauss-2",
        )
        .unwrap()
    }

    #[test]
    fn zero_parameter_reproduces_classic_midpoint() {
        let ef = one_stage_ef_coeffs(0.0, 0.5).unwrap();
        let cl = classic_midpoint();
        assert_eq!(ef.gamma(0), cl.gamma(0));
        assert_eq!(ef.a(0, 0), cl.a(0, 0));
        assert_eq!(ef.b(0), cl.b(0));
        assert_eq!(ef.c(0), 0.5);
        assert_eq!(ef.nu(), 0.0);
    }

    #[test]
    fn quarter_turn_coefficients_match_closed_forms() {
        let t = one_stage_ef_coeffs(PI / 2.0, 0.5).unwrap();
        assert!((t.gamma(0) - 2.0f64.sqrt()).abs() < 1e-15);
        assert!((t.a(0, 0) - 2.0 / PI).abs() < 1e-15);
        assert!((t.b(0) - 0.90031631615710607).abs() < 1e-15);
    }

    #[test]
    fn series_and_closed_forms_agree_at_the_crossover() {
        // Closed forms exactly at the threshold (frozen against 40-digit
        // evaluation), series just below; both sides must agree to rounding.
        for sign in [1.0, -1.0] {
            let closed = one_stage_ef_coeffs(sign * 1e-6, 0.5).unwrap();
            assert!((closed.gamma(0) - 1.000000000000125).abs() < 1e-15);
            assert!((closed.a(0, 0) - 0.5000000000000417).abs() < 1e-15);
            assert!((closed.b(0) - 0.9999999999999583).abs() < 1e-15);
            let series = one_stage_ef_coeffs(sign * 0.999999999e-6, 0.5).unwrap();
            assert!((series.gamma(0) - closed.gamma(0)).abs() < 1e-14);
            assert!((series.a(0, 0) - closed.a(0, 0)).abs() < 1e-14);
            assert!((series.b(0) - closed.b(0)).abs() < 1e-14);
        }
    }

    #[test]
    fn non_principal_parameters_are_rejected() {
        assert!(matches!(
            one_stage_ef_coeffs(PI, 0.5),
            Err(EfrkError::SingularParameter { .. })
        ));
        assert!(matches!(
            one_stage_ef_coeffs(2.0, 0.8), // c1 nu = 1.6 > pi/2
            Err(EfrkError::SingularParameter { .. })
        ));
        assert!(one_stage_ef_coeffs(2.0, 0.5).is_ok());
        assert!(one_stage_ef_coeffs(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn tableau_validation_rejects_bad_input() {
        assert!(EfrkTableau::new(vec![], vec![], vec![], vec![], 0.0, "x").is_err());
        assert!(EfrkTableau::new(vec![1.0], vec![0.5], vec![1.0], vec![], 0.0, "x").is_err());
        assert!(EfrkTableau::new(vec![-1.0], vec![0.5], vec![1.0], vec![0.5], 0.0, "x").is_err());
        assert!(
            EfrkTableau::new(vec![1.0], vec![f64::NAN], vec![1.0], vec![0.5], 0.0, "x").is_err()
        );
    }

    #[test]
    fn symplecticity_dichotomy_in_the_abscissa() {
        let check = is_symplectic(&one_stage_ef_coeffs(0.3, 0.5).unwrap(), 1e-12);
        assert!(check.symplectic, "defect {}", check.max_defect);
        let check = is_symplectic(&classic_midpoint(), 1e-12);
        assert!(check.symplectic);
        let check = is_symplectic(&gauss2(), 1e-12);
        assert!(check.symplectic, "gauss defect {}", check.max_defect);
        // Off-center abscissa breaks the condition; defect frozen against
        // 40-digit evaluation of |b (b - 2 a / gamma)| at nu = c1 = 0.3.
        let check = is_symplectic(&one_stage_ef_coeffs(0.3, 0.3).unwrap(), 1e-12);
        assert!(!check.symplectic);
        assert!((check.max_defect - 0.38561882149414681).abs() < 1e-14);
    }

    #[test]
    fn still_field_scales_stages_and_keeps_the_state() {
        let t = one_stage_ef_coeffs(0.7, 0.37).unwrap();
        let u0 = [1.0, 2.0, 3.0];
        let r = step(
            &t,
            &Still { n: 3 },
            0.0,
            &u0,
            0.1,
            &SolverOptions::default(),
        )
        .unwrap();
        for i in 0..3 {
            assert!((r.stages[0][i] - t.gamma(0) * u0[i]).abs() < 1e-15);
            assert_eq!(r.state[i], u0[i]);
        }
    }

    #[test]
    fn classic_midpoint_on_exponential_growth() {
        // u' = u, dt = 0.1: the midpoint rule gives exactly (1 + dt/2)/(1 - dt/2).
        let r = step(
            &classic_midpoint(),
            &Exponential,
            0.0,
            &[1.0],
            0.1,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!((r.state[0] - 21.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn fitted_midpoint_rotates_exactly() {
        let om = 3.0;
        let dt = 0.1;
        let tab = one_stage_ef_coeffs(om * dt, 0.5).unwrap();
        let sys = Rotation { omega: om };
        let r = step(&tab, &sys, 0.0, &[1.0, 0.25], dt, &SolverOptions::default()).unwrap();
        let want = sys.exact([1.0, 0.25], dt);
        assert!((r.state[0] - want[0]).abs() < 1e-14);
        assert!((r.state[1] - want[1]).abs() < 1e-14);

        // Long run: no phase drift to rounding accumulation.
        let traj = integrate(
            &tab,
            &sys,
            &[1.0, 0.0],
            0.0,
            100.0 * dt,
            dt,
            &SolverOptions::default(),
        )
        .unwrap();
        let want = sys.exact([1.0, 0.0], 100.0 * dt);
        assert!((traj.last()[0] - want[0]).abs() < 5e-13);
        assert!((traj.last()[1] - want[1]).abs() < 5e-13);
    }

    #[test]
    fn tiny_parameter_matches_classic_midpoint_step() {
        let p = advection(-1.0, 1.0, 41, 5.0, WaveProfile::Sin).unwrap();
        let u0 = p.exact_state(0.0);
        let dt = 0.01;
        let a = step(
            &one_stage_ef_coeffs(1e-8, 0.5).unwrap(),
            &p,
            0.0,
            &u0,
            dt,
            &SolverOptions::default(),
        )
        .unwrap();
        let b = step(
            &classic_midpoint(),
            &p,
            0.0,
            &u0,
            dt,
            &SolverOptions::default(),
        )
        .unwrap();
        let gap = a
            .state
            .iter()
            .zip(&b.state)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(gap <= 1e-12, "gap {gap}");
    }

    #[test]
    fn all_routes_agree_on_a_periodic_problem() {
        let p = mkdv(-2.0, 2.0, 24, Topology::Periodic).unwrap();
        let params = MkdvBreatherParams::new(1.0).unwrap();
        let u0 = p.exact_state(&params, 0.0);
        let dt = 1e-4;
        let tab = one_stage_ef_coeffs(64.0 * dt, 0.5).unwrap();
        let opts = SolverOptions::default();
        let scale = u0.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let compact = step_routed(&tab, &p, 0.0, &u0, dt, &opts, Route::Compact).unwrap();
        let stage = step_routed(&tab, &p, 0.0, &u0, dt, &opts, Route::Stage).unwrap();
        let dense = step_routed(&tab, &p, 0.0, &u0, dt, &opts, Route::Dense).unwrap();
        for (a, b) in [(&compact, &stage), (&compact, &dense)] {
            let gap = a
                .state
                .iter()
                .zip(&b.state)
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(gap <= 1e-9 * scale, "route gap {gap}");
        }
    }

    #[test]
    fn compact_and_stage_routes_agree_with_pinned_boundaries() {
        let p = advection(-1.0, 1.0, 21, 5.0, WaveProfile::Sin).unwrap();
        let u0 = p.exact_state(0.0);
        let dt = 0.05;
        let tab = one_stage_ef_coeffs(5.0 * dt, 0.5).unwrap();
        let opts = SolverOptions::default();
        let compact = step_routed(&tab, &p, 0.0, &u0, dt, &opts, Route::Compact).unwrap();
        let stage = step_routed(&tab, &p, 0.0, &u0, dt, &opts, Route::Stage).unwrap();
        let gap = compact
            .state
            .iter()
            .zip(&stage.state)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(gap <= 1e-11, "route gap {gap}");
    }

    #[test]
    fn stage_relation_holds_at_convergence() {
        let p = mkdv(-2.0, 2.0, 32, Topology::Periodic).unwrap();
        let params = MkdvBreatherParams::new(1.0).unwrap();
        let u0 = p.exact_state(&params, 0.0);
        let dt = 2e-4;
        let tab = one_stage_ef_coeffs(64.0 * dt, 0.5).unwrap();
        let r = step(&tab, &p, 0.0, &u0, dt, &SolverOptions::default()).unwrap();
        // Y - gamma u0 - dt a f(Y) must vanish to solver tolerance, and the
        // finalized update must be exactly u0 + dt b f(Y).
        let scale = u0.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for i in 0..32 {
            let stage_resid =
                r.stages[0][i] - tab.gamma(0) * u0[i] - dt * tab.a(0, 0) * r.stage_rhs[0][i];
            assert!(
                stage_resid.abs() <= 1e-9 * scale,
                "stage residual {stage_resid}"
            );
            assert_eq!(r.state[i], u0[i] + dt * tab.b(0) * r.stage_rhs[0][i]);
        }
    }

    #[test]
    fn gauss_two_stage_runs_through_the_dense_path() {
        let tab = gauss2();
        let traj = integrate(
            &tab,
            &Exponential,
            &[1.0],
            0.0,
            1.0,
            0.1,
            &SolverOptions::default(),
        )
        .unwrap();
        let err = (traj.last()[0] - 1.0f64.exp()).abs() / 1.0f64.exp();
        assert!(err < 1e-6, "gauss-2 relative error {err}");

        // Fourth order: halving dt shrinks the error by ~16.
        let fine = integrate(
            &tab,
            &Exponential,
            &[1.0],
            0.0,
            1.0,
            0.05,
            &SolverOptions::default(),
        )
        .unwrap();
        let err_fine = (fine.last()[0] - 1.0f64.exp()).abs() / 1.0f64.exp();
        let ratio = err / err_fine;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn integrate_validates_the_time_span() {
        let opts = SolverOptions::default();
        assert!(matches!(
            integrate(
                &classic_midpoint(),
                &Exponential,
                &[1.0],
                0.0,
                1.0,
                0.3,
                &opts
            ),
            Err(EfrkError::StepCount { .. })
        ));
        assert!(matches!(
            integrate(
                &classic_midpoint(),
                &Exponential,
                &[1.0],
                0.0,
                1.0,
                -0.1,
                &opts
            ),
            Err(EfrkError::BadTimeStep(_))
        ));
        // Zero-length span: a single state, no steps.
        let traj = integrate(
            &classic_midpoint(),
            &Exponential,
            &[1.0],
            0.5,
            0.5,
            0.1,
            &opts,
        )
        .unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.time(0), 0.5);
    }

    #[test]
    fn streaming_and_materialized_integration_agree() {
        let tab = one_stage_ef_coeffs(0.3, 0.5).unwrap();
        let sys = Rotation { omega: 3.0 };
        let opts = SolverOptions::default();
        let traj = integrate(&tab, &sys, &[1.0, 0.0], 0.0, 1.0, 0.1, &opts).unwrap();
        let mut seen = Vec::new();
        let last = integrate_with(&tab, &sys, &[1.0, 0.0], 0.0, 1.0, 0.1, &opts, |k, t, u| {
            seen.push((k, t, u.to_vec()));
        })
        .unwrap();
        assert_eq!(seen.len(), traj.len());
        for (k, t, u) in &seen {
            assert_eq!(*t, traj.time(*k));
            assert_eq!(u, &traj.states()[*k]);
        }
        assert_eq!(&last, traj.last());
    }
}
