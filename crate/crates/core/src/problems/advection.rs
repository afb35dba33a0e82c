//! Linear advection `u_t = omega * u_x` with centered differences and
//! time-dependent Dirichlet closures from the exact traveling-wave solution.
//!
//! The semidiscrete scheme at interior nodes is
//! `dU[m]/dt = omega * (U[m+1] - U[m-1]) / (2 dx)`; the two end nodes are
//! prescribed, not evolved. Both conservation laws telescope exactly for the
//! one-stage implicit schemes: mass with flux `-omega * (Y[m] + Y[m-1]) / 2`
//! and momentum with flux `-omega/2 * Y[m] * Y[m-1]`, each evaluated on the
//! stage state `Y`.

use super::{Conservative, DensityKind, Law, LawSpec, OdeSystem, ProblemError, ProblemId};
use crate::grid::{Grid, Masked, Topology};
use crate::solver::BandedMatrix;
use serde::{Deserialize, Serialize};

/// Traveling-wave profile `f` in the exact solution `u(x, t) = f(x + omega t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveProfile {
    /// `f(y) = sin(y)` — smooth benchmark.
    Sin,
    /// `f(y) = ln|y| sin(y)` — steep benchmark with wide dynamic range;
    /// `f(0) = 0` by continuous extension (`y ln|y| -> 0`).
    LogSin,
}

impl WaveProfile {
    /// Evaluates the profile.
    pub fn eval(self, y: f64) -> f64 {
        match self {
            WaveProfile::Sin => y.sin(),
            WaveProfile::LogSin => {
                if y == 0.0 {
                    0.0
                } else {
                    y.abs().ln() * y.sin()
                }
            }
        }
    }
}

/// Linear advection on a bounded grid with exact Dirichlet closures.
#[derive(Debug, Clone)]
pub struct AdvectionProblem {
    grid: Grid,
    omega: f64,
    profile: WaveProfile,
}

/// Builds the advection benchmark on `[a, b]` with `m` nodes.
///
/// # Errors
///
/// Grid construction failures.
pub fn advection(
    a: f64,
    b: f64,
    m: usize,
    omega: f64,
    profile: WaveProfile,
) -> Result<AdvectionProblem, ProblemError> {
    let grid = Grid::new(a, b, m, Topology::Dirichlet)?;
    Ok(AdvectionProblem {
        grid,
        omega,
        profile,
    })
}

impl AdvectionProblem {
    /// Advection speed `omega` (also the fitting frequency).
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// The traveling profile.
    pub fn profile(&self) -> WaveProfile {
        self.profile
    }

    /// Exact solution `f(x + omega t)` at a point.
    pub fn exact(&self, x: f64, t: f64) -> f64 {
        self.profile.eval(x + self.omega * t)
    }

    /// Exact solution sampled on the whole grid.
    pub fn exact_state(&self, t: f64) -> Vec<f64> {
        (0..self.grid.m())
            .map(|j| self.exact(self.grid.node(j), t))
            .collect()
    }
}

impl OdeSystem for AdvectionProblem {
    fn dof(&self) -> usize {
        self.grid.m()
    }

    fn bandwidth(&self) -> usize {
        1
    }

    fn periodic_jacobian(&self) -> bool {
        false
    }

    fn rhs(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        let m = self.grid.m();
        assert_eq!(y.len(), m, "advection state length");
        let c = self.omega / (2.0 * self.grid.dx());
        out[0] = 0.0;
        out[m - 1] = 0.0;
        for j in 1..m - 1 {
            out[j] = c * (y[j + 1] - y[j - 1]);
        }
    }

    fn fill_jacobian(&self, _t: f64, _y: &[f64], jac: &mut BandedMatrix) {
        let m = self.grid.m();
        let c = self.omega / (2.0 * self.grid.dx());
        for j in 1..m - 1 {
            jac.set(j, j + 1, c);
            jac.set(j, j - 1, -c);
        }
    }

    fn apply_boundary(&self, t: f64, y: &mut [f64]) {
        let m = self.grid.m();
        y[0] = self.exact(self.grid.a(), t);
        y[m - 1] = self.exact(self.grid.b(), t);
    }

    fn is_pinned(&self, i: usize) -> bool {
        i == 0 || i == self.grid.m() - 1
    }

    fn has_pinned(&self) -> bool {
        true
    }
}

impl Conservative for AdvectionProblem {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn id(&self) -> ProblemId {
        ProblemId::Advection
    }

    fn law_spec(&self, law: Law) -> LawSpec {
        match law {
            Law::First => LawSpec {
                name: "mass",
                density_kind: DensityKind::Linear,
                characteristic_doc: "multiplier 1: the scheme itself is already in divergence form",
            },
            Law::Second => LawSpec {
                name: "momentum",
                density_kind: DensityKind::QuadraticHomogeneous,
                characteristic_doc: "multiplier U[m]: node value against the scheme",
            },
        }
    }

    fn claw_density(&self, law: Law, y: &[f64]) -> Vec<f64> {
        match law {
            Law::First => y.to_vec(),
            Law::Second => y.iter().map(|u| 0.5 * u * u).collect(),
        }
    }

    fn claw_flux(&self, law: Law, y: &[f64], _ydot: &[f64]) -> Masked {
        let m = self.grid.m();
        let mut values = vec![0.0; m];
        let mut valid = vec![false; m];
        for j in 1..m {
            values[j] = match law {
                Law::First => -self.omega * 0.5 * (y[j] + y[j - 1]),
                Law::Second => -self.omega * 0.5 * y[j] * y[j - 1],
            };
            valid[j] = true;
        }
        Masked::with_mask(values, valid)
    }

    fn claw_density_rate(&self, law: Law, y: &[f64], ydot: &[f64]) -> Vec<f64> {
        match law {
            Law::First => ydot.to_vec(),
            Law::Second => y.iter().zip(ydot).map(|(u, du)| u * du).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(m: usize, omega: f64, profile: WaveProfile) -> AdvectionProblem {
        advection(-1.0, 1.0, m, omega, profile).unwrap()
    }

    #[test]
    fn constant_state_has_zero_interior_rhs() {
        let p = problem(11, 5.0, WaveProfile::Sin);
        let y = vec![3.25; 11];
        let mut out = vec![f64::NAN; 11];
        p.rhs(0.0, &y, &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_profile_gives_exact_derivative() {
        let p = problem(9, 5.0, WaveProfile::Sin);
        let y: Vec<f64> = (0..9).map(|j| p.grid().node(j)).collect();
        let mut out = vec![0.0; 9];
        p.rhs(0.0, &y, &mut out);
        for j in 1..8 {
            assert!((out[j] - 5.0).abs() < 1e-13, "rhs[{j}] = {}", out[j]);
        }
    }

    #[test]
    fn sine_profile_matches_analytic_derivative_to_discretization_error() {
        let p = problem(2001, 5.0, WaveProfile::Sin);
        let y: Vec<f64> = (0..2001).map(|j| p.grid().node(j).sin()).collect();
        let mut out = vec![0.0; 2001];
        p.rhs(0.0, &y, &mut out);
        for j in 1..2000 {
            let want = 5.0 * p.grid().node(j).cos();
            assert!(
                (out[j] - want).abs() < 1e-6,
                "node {j}: {} vs {want}",
                out[j]
            );
        }
    }

    #[test]
    fn exact_solution_is_a_traveling_wave() {
        let p = problem(11, 5.0, WaveProfile::Sin);
        // x + omega t = 0.8; frozen high-precision value of sin(0.8).
        assert!((p.exact(0.3, 0.1) - 0.71735609089952276).abs() < 1e-15);
    }

    #[test]
    fn log_sin_profile_handles_the_removable_singularity() {
        assert_eq!(WaveProfile::LogSin.eval(0.0), 0.0);
        // Frozen value: ln(51.3) * sin(51.3).
        assert!((WaveProfile::LogSin.eval(51.3) - 3.3849017742844336).abs() < 1e-13);
        // Continuity: tiny arguments stay tiny (y ln|y| -> 0).
        assert!(WaveProfile::LogSin.eval(1e-300).abs() < 1e-295);
    }

    #[test]
    fn boundary_nodes_are_pinned_to_the_closure() {
        let p = problem(11, 5.0, WaveProfile::Sin);
        let mut y = vec![0.0; 11];
        p.apply_boundary(0.2, &mut y);
        assert_eq!(y[0], p.exact(-1.0, 0.2));
        assert_eq!(y[10], p.exact(1.0, 0.2));
        assert!(p.is_pinned(0) && p.is_pinned(10) && !p.is_pinned(5));
    }

    #[test]
    fn mass_density_is_the_state_itself() {
        let p = problem(11, 5.0, WaveProfile::Sin);
        let y = vec![3.0; 11];
        assert_eq!(p.claw_density(Law::First, &y), y);
    }

    #[test]
    fn constant_state_momentum_flux() {
        let p = problem(11, 5.0, WaveProfile::Sin);
        let c = 1.7;
        let y = vec![c; 11];
        let f = p.claw_flux(Law::Second, &y, &[0.0; 11]);
        assert!(!f.mask()[0], "flux stencil leaves the grid at node 0");
        for (_, v) in f.iter_valid() {
            assert!((v - (-5.0 * c * c / 2.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn flux_divergence_balances_density_rate_at_interior_nodes() {
        // The semidiscrete conservation identity, checked on a deterministic
        // smooth state for both laws.
        let p = problem(41, 5.0, WaveProfile::Sin);
        let y: Vec<f64> = (0..41)
            .map(|j| (1.3 * p.grid().node(j)).cos() + 0.2)
            .collect();
        let mut ydot = vec![0.0; 41];
        p.rhs(0.0, &y, &mut ydot);
        let dx = p.grid().dx();
        for law in [Law::First, Law::Second] {
            let rate = p.claw_density_rate(law, &y, &ydot);
            let flux = p.claw_flux(law, &y, &ydot);
            for j in 2..39 {
                let div = (flux.get(j + 1).unwrap() - flux.get(j).unwrap()) / dx;
                assert!(
                    (rate[j] + div).abs() < 1e-11,
                    "law {law:?} node {j}: rate {} div {div}",
                    rate[j]
                );
            }
        }
    }
}
