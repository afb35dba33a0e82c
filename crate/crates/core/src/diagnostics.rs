//! Conservation-law residuals, error metrics, and convergence-order
//! estimation for integrated trajectories.
//!
//! Two complementary error measures are provided, chosen by boundary type:
//!
//! * [`err_invariant`] — the global drift `dx * max_n |sum_m (G[m](t_n) -
//!   G[m](t_0))|` of a law's density sum, meaningful when boundary fluxes
//!   vanish (periodic or zero-tail grids);
//! * [`err_local`] — the worst pointwise residual of the fully discrete
//!   conservation law over all steps and nodes, meaningful on any grid and
//!   the only option with Dirichlet closures.
//!
//! The pointwise residual ([`residual_field`]) evaluates the one-stage
//! divergence form
//!
//! ```text
//! [G[m](gamma u_{n+1}) - G[m](gamma u_n)] / dt + (Phi[m+1] - Phi[m]) / dx,
//! Phi[m] = gamma * b1 * F[m](Y1, f(Y1))
//! ```
//!
//! with the stage `Y1` taken from the retained step internals when available
//! ([`LocalResidual::observe_result`]) and otherwise reconstructed from
//! consecutive states. For symplectic tableaus this quantity sits at the
//! rounding floor for every law; for non-symplectic ones it stays small only
//! for laws with linear densities — the measurable fingerprint of the
//! preservation theory.

pub use crate::efrk::Trajectory;
use crate::efrk::{EfrkTableau, StepResult};
use crate::grid::{Masked, Topology};
use crate::problems::{Conservative, Law};
use thiserror::Error;

/// Errors from diagnostics evaluation.
#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    /// Pointwise residuals reconstruct the single stage from state pairs and
    /// are undefined for multi-stage tableaus.
    #[error("pointwise residuals need a one-stage tableau, got {stages} stages")]
    MultiStage { stages: usize },
    /// Step index beyond the trajectory.
    #[error("step {step} out of range for a trajectory of {len} states")]
    StepOutOfRange { step: usize, len: usize },
    /// Density-sum drift is meaningless when boundary fluxes do not vanish.
    #[error("invariant drift needs vanishing boundary fluxes (periodic or zero-tail grids); use err_local with Dirichlet closures")]
    DirichletDrift,
    /// Degenerate numeric input.
    #[error("{0}")]
    BadInput(&'static str),
}

/// Compensated (Kahan) running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Pointwise residual of the chosen law across one accepted step, shared by
/// the trajectory-indexed and streaming entry points. The stage is
/// reconstructed from the state pair.
fn residual_pair<P>(
    problem: &P,
    tableau: &EfrkTableau,
    law: Law,
    t: f64,
    dt: f64,
    u0: &[f64],
    u1: &[f64],
) -> Result<Masked, DiagnosticsError>
where
    P: Conservative + ?Sized,
{
    if tableau.stages() != 1 {
        return Err(DiagnosticsError::MultiStage {
            stages: tableau.stages(),
        });
    }
    let g = tableau.gamma(0);
    let b1 = tableau.b(0);
    // Stage reconstruction from the update equation: the midpoint abscissa
    // admits the symmetric form, general c1 inverts u1 = u0 + dt b f(Y).
    let y: Vec<f64> = if tableau.c(0) == 0.5 {
        u0.iter().zip(u1).map(|(p, q)| 0.5 * g * (p + q)).collect()
    } else {
        let ratio = tableau.a(0, 0) / b1;
        u0.iter()
            .zip(u1)
            .map(|(p, q)| g * p + ratio * (q - p))
            .collect()
    };
    let mut f = vec![0.0; y.len()];
    problem.rhs(t + tableau.c(0) * dt, &y, &mut f);
    Ok(residual_with_stage(
        problem, tableau, law, dt, u0, u1, &y, &f,
    ))
}

/// The divergence-form residual with the stage state and its vector field
/// supplied directly. With the values an accepted [`StepResult`] retains the
/// flux telescopes against the update to plain evaluation roundoff — the
/// reconstruction path adds the stage-equation residual on top, which the
/// `1/dx` flux difference then amplifies.
fn residual_with_stage<P>(
    problem: &P,
    tableau: &EfrkTableau,
    law: Law,
    dt: f64,
    u0: &[f64],
    u1: &[f64],
    y: &[f64],
    f: &[f64],
) -> Masked
where
    P: Conservative + ?Sized,
{
    let g = tableau.gamma(0);
    let b1 = tableau.b(0);
    let flux = problem.claw_flux(law, y, f);

    let scaled0: Vec<f64> = u0.iter().map(|v| g * v).collect();
    let scaled1: Vec<f64> = u1.iter().map(|v| g * v).collect();
    let d0 = problem.claw_density(law, &scaled0);
    let d1 = problem.claw_density(law, &scaled1);

    let grid = problem.grid();
    let m = grid.m();
    let dx = grid.dx();
    let periodic = grid.topology() == Topology::Periodic;
    let mut vals = vec![0.0; m];
    let mut mask = vec![false; m];
    for j in 0..m {
        let next = if periodic {
            Some((j + 1) % m)
        } else if j + 1 < m {
            Some(j + 1)
        } else {
            None
        };
        if let Some(jn) = next {
            if let (Some(fj), Some(fjn)) = (flux.get(j), flux.get(jn)) {
                vals[j] = (d1[j] - d0[j]) / dt + g * b1 * (fjn - fj) / dx;
                mask[j] = true;
            }
        }
    }
    Masked::with_mask(vals, mask)
}

/// Pointwise conservation-law residual of step `step` (states `step` and
/// `step + 1`). Nodes whose flux stencil leaves a bounded grid are masked.
///
/// # Errors
///
/// Multi-stage tableaus and out-of-range steps.
pub fn residual_field<P>(
    traj: &Trajectory,
    problem: &P,
    law: Law,
    step: usize,
) -> Result<Masked, DiagnosticsError>
where
    P: Conservative + ?Sized,
{
    if step + 1 >= traj.len() {
        return Err(DiagnosticsError::StepOutOfRange {
            step,
            len: traj.len(),
        });
    }
    residual_pair(
        problem,
        traj.tableau(),
        law,
        traj.time(step),
        traj.dt(),
        traj.state(step),
        traj.state(step + 1),
    )
}

/// Global invariant drift: `dx * max_n |sum_m (G[m](u_n) - G[m](u_0))|`,
/// densities on raw (unscaled) states, compensated summation.
///
/// # Errors
///
/// Dirichlet grids, where the density sum is not an invariant.
pub fn err_invariant<P>(traj: &Trajectory, problem: &P, law: Law) -> Result<f64, DiagnosticsError>
where
    P: Conservative + ?Sized,
{
    let mut acc = InvariantDrift::new(problem, law)?;
    for state in traj.states() {
        acc.observe(state);
    }
    Ok(acc.value())
}

/// Worst pointwise law residual over every step of the trajectory.
///
/// # Errors
///
/// As [`residual_field`].
pub fn err_local<P>(traj: &Trajectory, problem: &P, law: Law) -> Result<f64, DiagnosticsError>
where
    P: Conservative + ?Sized,
{
    let mut acc = LocalResidual::new(problem, law, traj.tableau(), traj.t0(), traj.dt())?;
    for state in traj.states() {
        acc.observe(state)?;
    }
    Ok(acc.value())
}

/// Relative Euclidean solution error `||state - exact|| / ||exact||`.
///
/// States holding interleaved component pairs need no special casing: the
/// flat sum of squares is exactly the pairwise formula
/// `sqrt((||du||^2 + ||dv||^2) / (||u||^2 + ||v||^2))`.
///
/// # Errors
///
/// Length mismatch or an exact solution with zero norm.
pub fn solution_error(state: &[f64], exact: &[f64]) -> Result<f64, DiagnosticsError> {
    if state.len() != exact.len() {
        return Err(DiagnosticsError::BadInput("state and exact lengths differ"));
    }
    let mut num = Kahan::default();
    let mut den = Kahan::default();
    for (s, e) in state.iter().zip(exact) {
        num.add((s - e) * (s - e));
        den.add(e * e);
    }
    if !(den.sum > 0.0) {
        return Err(DiagnosticsError::BadInput("exact solution has zero norm"));
    }
    Ok((num.sum / den.sum).sqrt())
}

/// Convergence order `log(err1/err2) / log(dt1/dt2)` from two ladder rows.
///
/// # Errors
///
/// Nonpositive inputs or equal step sizes.
pub fn estimate_order(err1: f64, err2: f64, dt1: f64, dt2: f64) -> Result<f64, DiagnosticsError> {
    if !(err1 > 0.0 && err2 > 0.0 && dt1 > 0.0 && dt2 > 0.0) {
        return Err(DiagnosticsError::BadInput(
            "estimate_order needs positive errors and steps",
        ));
    }
    if dt1 == dt2 {
        return Err(DiagnosticsError::BadInput(
            "estimate_order needs distinct step sizes",
        ));
    }
    Ok((err1 / err2).ln() / (dt1 / dt2).ln())
}

/// One refinement row of an error table.
#[derive(Debug, Clone)]
pub struct ReportRow {
    /// Refinement index (`dt = dt0 / 2^n` in the benchmark ladders).
    pub n: usize,
    /// Step size.
    pub dt: f64,
    /// Scheme label the row belongs to.
    pub scheme: String,
    /// Relative solution error at final time.
    pub sol_err: f64,
    /// Estimated order against the previous row of the same scheme; absent
    /// for first rows and error-floor rows.
    pub order: Option<f64>,
    /// First conservation-law error (boundary-appropriate metric).
    pub err1: f64,
    /// Second conservation-law error.
    pub err2: f64,
    /// Worst Newton iteration count over the row's accepted steps; 0 when no
    /// steps ran. Not part of the CSV schema — kept so benchmark runs can
    /// assert the stage solves stay cheap from the previous-step predictor.
    pub max_newton: usize,
    /// Whether the run producing this row failed (errors are then NaN).
    pub failed: bool,
}

/// A refinement study: rows grouped by scheme, orders filled in.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    /// All rows, in ladder order per scheme.
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    /// Assembles a report, computing order entries within each scheme's
    /// ladder. An order is suppressed (left absent) for the first row, next
    /// to failed rows, and whenever either operand error sits within 3x of
    /// the scheme's smallest error — the saturation floor where log-ratios
    /// measure roundoff, not convergence.
    pub fn new(mut rows: Vec<ReportRow>) -> Self {
        let schemes: Vec<String> = rows
            .iter()
            .map(|r| r.scheme.clone())
            .collect::<Vec<_>>()
            .into_iter()
            .fold(Vec::new(), |mut acc, s| {
                if !acc.contains(&s) {
                    acc.push(s);
                }
                acc
            });
        for scheme in schemes {
            let idx: Vec<usize> = (0..rows.len())
                .filter(|&i| rows[i].scheme == scheme)
                .collect();
            let floor = idx
                .iter()
                .filter(|&&i| !rows[i].failed && rows[i].sol_err > 0.0)
                .map(|&i| rows[i].sol_err)
                .fold(f64::INFINITY, f64::min);
            for w in 1..idx.len() {
                let (pi, ci) = (idx[w - 1], idx[w]);
                let (prev, cur) = (rows[pi].clone(), rows[ci].clone());
                let order = if prev.failed
                    || cur.failed
                    || !(prev.sol_err > 0.0 && cur.sol_err > 0.0)
                    || prev.sol_err <= 3.0 * floor
                    || cur.sol_err <= 3.0 * floor
                {
                    None
                } else {
                    estimate_order(prev.sol_err, cur.sol_err, prev.dt, cur.dt).ok()
                };
                rows[ci].order = order;
            }
            if let Some(&first) = idx.first() {
                rows[first].order = None;
            }
        }
        Self { rows }
    }
}

/// Streaming form of [`err_invariant`] for runs too long to materialize:
/// feed every accepted state in order, read the drift at the end.
#[derive(Debug)]
pub struct InvariantDrift<'a, P: Conservative + ?Sized> {
    problem: &'a P,
    law: Law,
    base: Option<Vec<f64>>,
    worst: f64,
}

impl<'a, P: Conservative + ?Sized> InvariantDrift<'a, P> {
    /// Starts an accumulator for one law of one problem.
    ///
    /// # Errors
    ///
    /// Dirichlet grids (the metric is undefined there).
    pub fn new(problem: &'a P, law: Law) -> Result<Self, DiagnosticsError> {
        if problem.grid().topology() == Topology::Dirichlet {
            return Err(DiagnosticsError::DirichletDrift);
        }
        Ok(Self {
            problem,
            law,
            base: None,
            worst: 0.0,
        })
    }

    /// Feeds the next state (the first call sets the baseline).
    pub fn observe(&mut self, state: &[f64]) {
        let density = self.problem.claw_density(self.law, state);
        match &self.base {
            None => self.base = Some(density),
            Some(base) => {
                let mut sum = Kahan::default();
                for (d, b) in density.iter().zip(base) {
                    sum.add(d - b);
                }
                self.worst = self.worst.max(sum.sum.abs());
            }
        }
    }

    /// The drift seen so far, `dx * max_n |...|`.
    pub fn value(&self) -> f64 {
        self.problem.grid().dx() * self.worst
    }
}

/// Streaming form of [`err_local`]: feed every accepted state in order; each
/// consecutive pair contributes one residual field.
#[derive(Debug)]
pub struct LocalResidual<'a, P: Conservative + ?Sized> {
    problem: &'a P,
    law: Law,
    tableau: EfrkTableau,
    t0: f64,
    dt: f64,
    prev: Option<Vec<f64>>,
    steps_seen: usize,
    worst: f64,
}

impl<'a, P: Conservative + ?Sized> LocalResidual<'a, P> {
    /// Starts an accumulator for one law under the given stepping scheme.
    ///
    /// # Errors
    ///
    /// Multi-stage tableaus (stage reconstruction is one-stage only).
    pub fn new(
        problem: &'a P,
        law: Law,
        tableau: &EfrkTableau,
        t0: f64,
        dt: f64,
    ) -> Result<Self, DiagnosticsError> {
        if tableau.stages() != 1 {
            return Err(DiagnosticsError::MultiStage {
                stages: tableau.stages(),
            });
        }
        Ok(Self {
            problem,
            law,
            tableau: tableau.clone(),
            t0,
            dt,
            prev: None,
            steps_seen: 0,
            worst: 0.0,
        })
    }

    /// Feeds the next state; the stage is reconstructed from the pair.
    ///
    /// # Errors
    ///
    /// Propagated from the residual evaluation.
    pub fn observe(&mut self, state: &[f64]) -> Result<(), DiagnosticsError> {
        if let Some(prev) = self.prev.take() {
            let t = self.t0 + self.steps_seen as f64 * self.dt;
            let field = residual_pair(
                self.problem,
                &self.tableau,
                self.law,
                t,
                self.dt,
                &prev,
                state,
            )?;
            self.worst = self.worst.max(field.max_abs());
            self.steps_seen += 1;
        }
        self.prev = Some(state.to_vec());
        Ok(())
    }

    /// Feeds an accepted step with its retained stage, instead of
    /// reconstructing the stage from the state pair. This keeps the residual
    /// at the flux-evaluation rounding floor: the reconstructed stage is off
    /// by the stage-equation stopping residual, which the `1/dx` in the flux
    /// difference amplifies on fine grids. The result must come from the same
    /// tableau the accumulator was built with.
    ///
    /// # Errors
    ///
    /// Multi-stage results, or a result fed before the initial state.
    pub fn observe_result(&mut self, result: &StepResult) -> Result<(), DiagnosticsError> {
        if result.stages.len() != 1 {
            return Err(DiagnosticsError::MultiStage {
                stages: result.stages.len(),
            });
        }
        let Some(prev) = self.prev.take() else {
            return Err(DiagnosticsError::BadInput(
                "observe the initial state before feeding step results",
            ));
        };
        let field = residual_with_stage(
            self.problem,
            &self.tableau,
            self.law,
            self.dt,
            &prev,
            &result.state,
            &result.stages[0],
            &result.stage_rhs[0],
        );
        self.worst = self.worst.max(field.max_abs());
        self.steps_seen += 1;
        self.prev = Some(result.state.clone());
        Ok(())
    }

    /// The worst pointwise residual seen so far.
    pub fn value(&self) -> f64 {
        self.worst
    }
}
