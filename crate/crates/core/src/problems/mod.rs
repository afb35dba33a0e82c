//! The three benchmark semidiscretizations and their conservation laws.
//!
//! Each problem couples a spatial finite-difference scheme (`rhs`, with an
//! analytic banded Jacobian for the implicit solver) with exactly two
//! discrete conservation laws, given as density/flux pairs aligned so that
//! the divergence at node `m` is the forward difference `(F[m+1] - F[m])/dx`
//! plus the time difference of `G[m]`. The laws are not decorative: the time
//! integrators in [`crate::efrk`] preserve their telescoped sums to rounding,
//! and [`crate::diagnostics`] checks them pointwise.
//!
//! * [`AdvectionProblem`] — linear advection `u_t = omega * u_x` on a bounded
//!   grid with exact-solution Dirichlet closures; mass and momentum laws.
//! * [`MkdvProblem`] — the modified Korteweg-de Vries equation
//!   `u_t + 6 u^2 u_x + u_xxx = 0` on periodic or zero-tail grids; mass and
//!   momentum laws.
//! * [`NlsProblem`] — the focusing nonlinear Schrödinger equation
//!   `i psi_t + psi_xx + |psi|^2 psi = 0` split into real/imaginary parts on
//!   a periodic grid; charge and momentum laws.
//!
//! Closed-form reference solutions (traveling profiles and breathers) live
//! here too, used for initial data and error measurement.

mod advection;
mod mkdv;
mod nls;

pub use advection::{advection, AdvectionProblem, WaveProfile};
pub use mkdv::{mkdv, MkdvProblem};
pub use nls::{nls, NlsProblem};

use crate::grid::{Grid, Masked};
use crate::solver::BandedMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from problem construction and parameter validation.
#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error("{problem} requires {expected} topology, got {got:?}")]
    WrongTopology {
        problem: &'static str,
        expected: &'static str,
        got: crate::grid::Topology,
    },
    #[error("breather parameter out of range: {0}")]
    BadParameter(String),
    #[error("law index must be 1 or 2, got {0}")]
    BadLawIndex(usize),
}

/// Index of one of a problem's two conservation laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    /// Mass (scalar problems) or charge (NLS).
    First,
    /// Momentum.
    Second,
}

impl Law {
    /// Parses the 1-based law index used in configs and reports.
    ///
    /// # Errors
    ///
    /// Anything but 1 or 2.
    pub fn from_index(ix: usize) -> Result<Self, ProblemError> {
        match ix {
            1 => Ok(Law::First),
            2 => Ok(Law::Second),
            other => Err(ProblemError::BadLawIndex(other)),
        }
    }

    /// The 1-based index.
    pub fn index(self) -> usize {
        match self {
            Law::First => 1,
            Law::Second => 2,
        }
    }
}

/// Homogeneity class of a conservation-law density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    /// `G(alpha u) = alpha G(u)`.
    Linear,
    /// `G(alpha u) = alpha^2 G(u)`.
    QuadraticHomogeneous,
}

/// Metadata for one conservation law.
#[derive(Debug, Clone, Copy)]
pub struct LawSpec {
    /// Conventional name: mass, momentum, or charge.
    pub name: &'static str,
    /// Density homogeneity, which decides what kind of preservation guarantee applies.
    pub density_kind: DensityKind,
    /// Textual record of the discrete characteristic (the multiplier that
    /// produces the law from the scheme); documentation only, never executed.
    pub characteristic_doc: &'static str,
}

/// Identifier of a benchmark problem (configs, reports).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemId {
    Advection,
    Mkdv,
    Nls,
}

impl std::fmt::Display for ProblemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProblemId::Advection => "advection",
            ProblemId::Mkdv => "mkdv",
            ProblemId::Nls => "nls",
        })
    }
}

/// A first-order-in-time ODE system `y' = f(t, y)` with a banded Jacobian,
/// as produced by semidiscretizing a PDE. Everything the implicit steppers
/// need, and nothing tied to conservation structure.
pub trait OdeSystem: Send + Sync {
    /// Number of degrees of freedom in the flat state vector.
    fn dof(&self) -> usize;

    /// Half-bandwidth of `df/dy`.
    fn bandwidth(&self) -> usize;

    /// Whether `df/dy` has periodic corner entries.
    fn periodic_jacobian(&self) -> bool;

    /// Evaluates `f(t, y)` into `out`. Pinned (boundary) entries are written
    /// as zero; they are not evolved by the vector field.
    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]);

    /// Fills a pre-zeroed banded matrix with `df/dy` at `(t, y)`. Pinned rows
    /// are left zero.
    fn fill_jacobian(&self, t: f64, y: &[f64], jac: &mut BandedMatrix);

    /// Overwrites externally prescribed (Dirichlet) entries of `y` for time
    /// `t`. Default: nothing is prescribed.
    fn apply_boundary(&self, _t: f64, _y: &mut [f64]) {}

    /// Whether dof `i` is prescribed rather than evolved.
    fn is_pinned(&self, _i: usize) -> bool {
        false
    }

    /// Fast global check used to skip pinning work entirely.
    fn has_pinned(&self) -> bool {
        false
    }
}

/// An [`OdeSystem`] that came from a conservative PDE discretization: it has
/// a grid, and two discrete conservation laws with node-wise density and flux
/// evaluators.
pub trait Conservative: OdeSystem {
    /// The spatial grid.
    fn grid(&self) -> &Grid;

    /// Which benchmark problem this is.
    fn id(&self) -> ProblemId;

    /// Field components per node (2 for the NLS real/imaginary pair).
    fn components(&self) -> usize {
        1
    }

    /// Metadata for the given law.
    fn law_spec(&self, law: Law) -> LawSpec;

    /// Node-wise density `G[m]` of the chosen law (length = grid nodes).
    fn claw_density(&self, law: Law, y: &[f64]) -> Vec<f64>;

    /// Node-wise flux `F[m]`, masked where its stencil leaves a bounded grid.
    /// `ydot` fills the time-derivative slots some fluxes carry (NLS
    /// momentum); pass the RHS evaluated at the same state.
    fn claw_flux(&self, law: Law, y: &[f64], ydot: &[f64]) -> Masked;

    /// Exact time derivative of the density along the flow: the chain rule
    /// of `G[m]` applied to `ydot`. Used to verify the semidiscrete
    /// conservation identity directly.
    fn claw_density_rate(&self, law: Law, y: &[f64], ydot: &[f64]) -> Vec<f64>;
}

/// Parameters of the stationary-envelope mKdV breather.
///
/// The general two-parameter breather family is specialized to the choice
/// that makes the envelope stand still: amplitude ratio fixed by `A = 3`,
/// `B = sqrt(48 xi^2 - 9)`, internal frequency `eta = xi * sqrt(3)`. The
/// envelope phase `nu2 = 2 sqrt(3) xi x` then carries no time dependence and
/// the phase offset `rho2` vanishes, so the solution oscillates in place with
/// angular frequency `omega = 64 xi^3` — the frequency the fitted schemes
/// tune to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MkdvBreatherParams {
    /// Wavenumber-like parameter `xi`; must satisfy `48 xi^2 > 9`.
    pub xi: f64,
}

impl MkdvBreatherParams {
    /// Validates and builds.
    ///
    /// # Errors
    ///
    /// `xi` outside the domain where `B = sqrt(48 xi^2 - 9)` is real and
    /// positive.
    pub fn new(xi: f64) -> Result<Self, ProblemError> {
        if !(48.0 * xi * xi > 9.0) {
            return Err(ProblemError::BadParameter(format!(
                "mKdV breather needs 48*xi^2 > 9, got xi = {xi}"
            )));
        }
        Ok(Self { xi })
    }

    /// `eta = xi * sqrt(3)`.
    pub fn eta(&self) -> f64 {
        self.xi * 3.0f64.sqrt()
    }

    /// `B = sqrt(48 xi^2 - 9)`.
    pub fn b(&self) -> f64 {
        (48.0 * self.xi * self.xi - 9.0).sqrt()
    }

    /// Carrier phase offset `rho1`, from `tan(rho1) = (B xi - A eta)/(A xi + B eta)`
    /// with `A = 3`. The denominator is positive throughout the parameter
    /// domain, so the `atan2` branch is the principal one.
    pub fn rho1(&self) -> f64 {
        let (a, b) = (3.0, self.b());
        let eta = self.eta();
        f64::atan2(b * self.xi - a * eta, a * self.xi + b * eta)
    }

    /// Oscillation frequency `omega = 64 xi^3` of the stationary breather.
    pub fn omega(&self) -> f64 {
        64.0 * self.xi.powi(3)
    }
}

/// Evaluates the stationary mKdV breather at `(x, t)`.
pub fn mkdv_breather(p: &MkdvBreatherParams, x: f64, t: f64) -> f64 {
    let xi = p.xi;
    let eta = p.eta();
    let ratio = eta / xi; // = sqrt(3) for this family
    let nu1 = 2.0 * xi * x - p.omega() * t;
    let nu2 = 2.0 * eta * x; // rho2 = 0: envelope fixed at the origin
    let (s1, c1) = (nu1 + p.rho1()).sin_cos();
    let (sh2, ch2) = (nu2.sinh(), nu2.cosh());
    -4.0 * ratio * (xi * ch2 * s1 + eta * sh2 * c1) / (ch2 * ch2 + ratio * ratio * c1 * c1)
}

/// Parameters of the NLS breather.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlsBreatherParams {
    /// Modulation parameter `beta`, in `(0, sqrt(2))`.
    pub beta: f64,
    /// Carrier frequency `omega` (> 0) — the frequency the fitted schemes
    /// tune to.
    pub omega: f64,
}

impl NlsBreatherParams {
    /// Validates and builds.
    ///
    /// # Errors
    ///
    /// `beta` outside `(0, sqrt(2))` or nonpositive `omega`.
    pub fn new(beta: f64, omega: f64) -> Result<Self, ProblemError> {
        if !(beta > 0.0 && beta * beta < 2.0) {
            return Err(ProblemError::BadParameter(format!(
                "NLS breather needs 0 < beta < sqrt(2), got beta = {beta}"
            )));
        }
        if !(omega > 0.0) {
            return Err(ProblemError::BadParameter(format!(
                "NLS breather needs omega > 0, got omega = {omega}"
            )));
        }
        Ok(Self { beta, omega })
    }
}

/// Evaluates the NLS breather at `(x, t)`, returning `(Re psi, Im psi)`.
pub fn nls_breather(p: &NlsBreatherParams, x: f64, t: f64) -> (f64, f64) {
    let (beta, om) = (p.beta, p.omega);
    let root = (2.0 - beta * beta).sqrt();
    let theta = om * beta * root * t;
    let den = 2.0 * theta.cosh() - (4.0 - 2.0 * beta * beta).sqrt() * (om.sqrt() * beta * x).cos();
    // psi = (num/den - 1) * sqrt(om) * exp(i om t)
    let re = 2.0 * beta * beta * theta.cosh() / den - 1.0;
    let im = 2.0 * beta * root * theta.sinh() / den;
    let (s, c) = (om * t).sin_cos();
    let sq = om.sqrt();
    (sq * (re * c - im * s), sq * (re * s + im * c))
}
