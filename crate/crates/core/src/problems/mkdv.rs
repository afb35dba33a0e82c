//! Modified Korteweg-de Vries equation `u_t + 6 u^2 u_x + u_xxx = 0`,
//! semidiscretized so the right-hand side is an exact discrete divergence:
//!
//! `dU[m]/dt = -(Phi[m+1] - Phi[m]) / dx`,
//! `Phi[m] = (U[m] + U[m-1]) (U[m]^2 + U[m-1]^2) / 2
//!           + (U[m+1] - U[m] - U[m-1] + U[m-2]) / (2 dx^2)`.
//!
//! Mass conservation is the divergence form itself; the momentum law holds
//! with a quartic flux that telescopes under the symplectic time steppers.
//! Two boundary treatments are supported: periodic wrap (the benchmark
//! configuration) and zero ghost nodes (for fields with decaying tails).

use super::mkdv_breather;
use super::{
    Conservative, DensityKind, Law, LawSpec, MkdvBreatherParams, OdeSystem, ProblemError, ProblemId,
};
use crate::grid::{Grid, Masked, Topology};
use crate::solver::BandedMatrix;

/// The mKdV semidiscretization on a periodic or zero-tail grid.
#[derive(Debug, Clone)]
pub struct MkdvProblem {
    grid: Grid,
    periodic: bool,
}

/// Builds the mKdV problem on `[a, b]` with `m` nodes.
///
/// # Errors
///
/// Grid construction failures, or a Dirichlet topology (the scheme has no
/// prescribed-boundary closure; use periodic or zero-ghost grids).
pub fn mkdv(a: f64, b: f64, m: usize, topology: Topology) -> Result<MkdvProblem, ProblemError> {
    if topology == Topology::Dirichlet {
        return Err(ProblemError::WrongTopology {
            problem: "mkdv",
            expected: "periodic or zero_ghost",
            got: topology,
        });
    }
    let grid = Grid::new(a, b, m, topology)?;
    Ok(MkdvProblem {
        grid,
        periodic: topology == Topology::Periodic,
    })
}

impl MkdvProblem {
    /// Breather solution sampled on the whole grid at time `t`.
    pub fn exact_state(&self, p: &MkdvBreatherParams, t: f64) -> Vec<f64> {
        (0..self.grid.m())
            .map(|j| mkdv_breather(p, self.grid.node(j), t))
            .collect()
    }

    /// Reads `y[i]` with the boundary policy applied (wrap or zero ghost).
    #[inline]
    fn at(&self, y: &[f64], i: isize) -> f64 {
        let m = y.len() as isize;
        if (0..m).contains(&i) {
            y[i as usize]
        } else if self.periodic {
            y[i.rem_euclid(m) as usize]
        } else {
            0.0
        }
    }

    /// The divergence flux `Phi[j]`; `j` may be `m` on zero-ghost grids.
    #[inline]
    fn phi(&self, y: &[f64], j: isize) -> f64 {
        let um2 = self.at(y, j - 2);
        let um1 = self.at(y, j - 1);
        let u0 = self.at(y, j);
        let up1 = self.at(y, j + 1);
        let inv2dx2 = 0.5 / (self.grid.dx() * self.grid.dx());
        (u0 + um1) * (u0 * u0 + um1 * um1) * 0.5 + (up1 - u0 - um1 + um2) * inv2dx2
    }

    /// `d Phi[j] / d U[j]` and `d Phi[j] / d U[j-1]`.
    #[inline]
    fn phi_partials(&self, y: &[f64], j: isize) -> (f64, f64) {
        let um1 = self.at(y, j - 1);
        let u0 = self.at(y, j);
        let inv2dx2 = 0.5 / (self.grid.dx() * self.grid.dx());
        let sym = (u0 * u0 + um1 * um1) * 0.5;
        let sum = u0 + um1;
        (sym + sum * u0 - inv2dx2, sym + sum * um1 - inv2dx2)
    }
}

impl OdeSystem for MkdvProblem {
    fn dof(&self) -> usize {
        self.grid.m()
    }

    fn bandwidth(&self) -> usize {
        2
    }

    fn periodic_jacobian(&self) -> bool {
        self.periodic
    }

    fn rhs(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        let m = self.grid.m();
        assert_eq!(y.len(), m, "mkdv state length");
        let dx = self.grid.dx();
        let mut phi_j = self.phi(y, 0);
        for j in 0..m {
            let phi_j1 = self.phi(y, j as isize + 1);
            out[j] = -(phi_j1 - phi_j) / dx;
            phi_j = phi_j1;
        }
    }

    fn fill_jacobian(&self, _t: f64, y: &[f64], jac: &mut BandedMatrix) {
        let m = self.grid.m() as isize;
        let dx = self.grid.dx();
        let inv2dx2 = 0.5 / (dx * dx);
        let in_range = |i: isize| self.periodic || (0..m).contains(&i);
        let wrap = |i: isize| i.rem_euclid(m) as usize;
        for j in 0..m {
            // d Phi[j+1] / d U[j], d U[j+1]; d Phi[j] / d U[j], d U[j-1].
            let (dp1_dj1, dp1_dj) = self.phi_partials(y, j + 1);
            let (dpj_dj, dpj_djm1) = self.phi_partials(y, j);
            let entries = [
                (j + 2, -inv2dx2 / dx),
                (j + 1, -(dp1_dj1 - inv2dx2) / dx),
                (j, -(dp1_dj - dpj_dj) / dx),
                (j - 1, -(inv2dx2 - dpj_djm1) / dx),
                (j - 2, inv2dx2 / dx),
            ];
            for (col, v) in entries {
                if in_range(col) {
                    jac.set(j as usize, wrap(col), v);
                }
            }
        }
    }
}

impl Conservative for MkdvProblem {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn id(&self) -> ProblemId {
        ProblemId::Mkdv
    }

    fn law_spec(&self, law: Law) -> LawSpec {
        match law {
            Law::First => LawSpec {
                name: "mass",
                density_kind: DensityKind::Linear,
                characteristic_doc: "multiplier 1: the scheme is written in divergence form",
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
        let dx = self.grid.dx();
        let vals = (0..m as isize)
            .map(|j| match law {
                Law::First => self.phi(y, j),
                Law::Second => {
                    let um2 = self.at(y, j - 2);
                    let um1 = self.at(y, j - 1);
                    let u0 = self.at(y, j);
                    let up1 = self.at(y, j + 1);
                    let quartic = 0.5 * um1 * u0 * (um1 * um1 + u0 * u0 + um1 * u0);
                    let disp = (u0 + um1) * 0.5 * (up1 - u0 - um1 + um2) / (2.0 * dx * dx);
                    let skew = (u0 - um1) * (up1 - u0 + um1 - um2) / (4.0 * dx * dx);
                    quartic + disp - skew
                }
            })
            .collect();
        Masked::all_valid(vals)
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
    use crate::solver::{fd_jacobian, BandShape};
    use proptest::prelude::*;

    fn periodic(m: usize) -> MkdvProblem {
        mkdv(-2.0, 2.0, m, Topology::Periodic).unwrap()
    }

    fn zero_tail(m: usize) -> MkdvProblem {
        mkdv(-2.0, 2.0, m, Topology::ZeroGhost).unwrap()
    }

    #[test]
    fn dirichlet_topology_is_rejected() {
        assert!(matches!(
            mkdv(-2.0, 2.0, 9, Topology::Dirichlet),
            Err(ProblemError::WrongTopology { .. })
        ));
    }

    #[test]
    fn zero_state_is_stationary() {
        for p in [periodic(12), zero_tail(12)] {
            let mut out = vec![f64::NAN; 12];
            p.rhs(0.0, &[0.0; 12], &mut out);
            assert!(out.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn interior_spike_touches_exactly_the_five_point_neighborhood() {
        // dx = 1 via [0, 8] with 9 nodes; unit spike at node 4.
        let p = mkdv(0.0, 8.0, 9, Topology::ZeroGhost).unwrap();
        let mut y = vec![0.0; 9];
        y[4] = 1.0;
        let mut out = vec![0.0; 9];
        p.rhs(0.0, &y, &mut out);
        // Hand-expanded fluxes: Phi[3] = Phi[6] = 1/2, Phi[4] = Phi[5] = 0
        // (cubic and linear parts cancel), rest zero.
        let want = [0.0, 0.0, -0.5, 0.5, 0.0, -0.5, 0.5, 0.0, 0.0];
        for (j, (&got, &w)) in out.iter().zip(&want).enumerate() {
            assert!((got - w).abs() < 1e-15, "rhs[{j}] = {got}, want {w}");
        }
    }

    /// Max-norm gap between the semidiscrete RHS on the breather profile and
    /// the time derivative of the closed form (small central difference in t),
    /// relative to the derivative's own max norm. Interior nodes only.
    fn breather_rhs_gap(m: usize) -> f64 {
        let p = zero_tail(m);
        let params = MkdvBreatherParams::new(1.0).unwrap();
        let y = p.exact_state(&params, 0.0);
        let mut out = vec![0.0; m];
        p.rhs(0.0, &y, &mut out);
        let h = 1e-5;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for j in 5..m - 5 {
            let x = p.grid().node(j);
            let ut = (mkdv_breather(&params, x, h) - mkdv_breather(&params, x, -h)) / (2.0 * h);
            scale = scale.max(ut.abs());
            worst = worst.max((out[j] - ut).abs());
        }
        worst / scale
    }

    #[test]
    fn breather_initial_data_reproduces_the_analytic_time_derivative() {
        // The scheme is second order in space: the third-derivative stencil
        // on the breather's steep core measures ~4.4e-4 relative at
        // dx = 0.002 and shrinks by 4 per refinement, reaching 1e-4 well
        // before dx = 0.0005.
        let coarse = breather_rhs_gap(2001); // dx = 0.002
        let fine = breather_rhs_gap(8001); // dx = 0.0005
        assert!(coarse <= 6e-4, "relative gap {coarse} at dx = 0.002");
        assert!(fine <= 1e-4, "relative gap {fine} at dx = 0.0005");
        let ratio = coarse / fine;
        assert!(
            ratio > 12.0 && ratio < 20.0,
            "refinement ratio {ratio} is not second order"
        );
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        for (p, m) in [(periodic(24), 24usize), (zero_tail(24), 24)] {
            let y: Vec<f64> = (0..m).map(|j| (0.7 * j as f64).sin() * 0.8).collect();
            let mut jac = BandedMatrix::zeros(BandShape::symmetric(m, 2, p.periodic)).unwrap();
            p.fill_jacobian(0.0, &y, &mut jac);
            let fd = fd_jacobian(
                |x, r| p.rhs(0.0, x, r),
                &y,
                BandShape::symmetric(m, 2, p.periodic),
            )
            .unwrap();
            let scale = (0..m)
                .flat_map(|i| (0..m).map(move |j| (i, j)))
                .fold(0.0f64, |a, (i, j)| a.max(jac.get(i, j).abs()));
            for i in 0..m {
                for j in 0..m {
                    let d = (jac.get(i, j) - fd.get(i, j)).abs();
                    assert!(
                        d <= 1e-6 * scale,
                        "J[{i},{j}]: {} vs {}",
                        jac.get(i, j),
                        fd.get(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn constant_interior_momentum_flux_is_three_halves() {
        // All-ones state on a 5-node zero-ghost grid with dx = 1: at the
        // fully interior nodes every difference of equal neighbors vanishes
        // and the quartic term gives 1/2 * 1 * 1 * 3.
        let p = mkdv(0.0, 4.0, 5, Topology::ZeroGhost).unwrap();
        let y = vec![1.0; 5];
        let f = p.claw_flux(Law::Second, &y, &[0.0; 5]);
        for j in [2usize, 3] {
            assert!(
                (f.get(j).unwrap() - 1.5).abs() < 1e-15,
                "F[{j}] = {:?}",
                f.get(j)
            );
        }
        assert!(p
            .claw_flux(Law::First, &[0.0; 5], &[0.0; 5])
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Semidiscrete conservation: density rate + flux divergence vanishes
        /// node-wise for both laws, any state, both topologies.
        #[test]
        fn density_rate_balances_flux_divergence(
            vals in prop::collection::vec(-1.5f64..1.5, 16),
            use_periodic in proptest::bool::ANY,
        ) {
            let p = if use_periodic { periodic(16) } else { zero_tail(16) };
            let mut ydot = vec![0.0; 16];
            p.rhs(0.0, &vals, &mut ydot);
            let dx = p.grid().dx();
            for law in [Law::First, Law::Second] {
                let rate = p.claw_density_rate(law, &vals, &ydot);
                let flux = p.claw_flux(law, &vals, &ydot);
                let scale = 1.0 + flux.max_abs() / dx
                    + rate.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let last = if use_periodic { 16 } else { 14 };
                for j in if use_periodic { 0 } else { 2 }..last {
                    let f1 = flux.get((j + 1) % 16).unwrap();
                    let f0 = flux.get(j).unwrap();
                    prop_assert!(
                        (rate[j] + (f1 - f0) / dx).abs() <= 1e-11 * scale,
                        "law {:?} node {}", law, j
                    );
                }
            }
        }

        /// Density homogeneity: mass scales linearly, momentum quadratically.
        #[test]
        fn density_homogeneity(vals in prop::collection::vec(-2.0f64..2.0, 12)) {
            let p = periodic(12);
            for alpha in [2.0f64, -1.0] {
                let scaled: Vec<f64> = vals.iter().map(|v| alpha * v).collect();
                let d1 = p.claw_density(Law::First, &scaled);
                let d1_base = p.claw_density(Law::First, &vals);
                let d2 = p.claw_density(Law::Second, &scaled);
                let d2_base = p.claw_density(Law::Second, &vals);
                for j in 0..12 {
                    prop_assert!((d1[j] - alpha * d1_base[j]).abs() <= 1e-12 * (1.0 + d1_base[j].abs()));
                    prop_assert!((d2[j] - alpha * alpha * d2_base[j]).abs() <= 1e-12 * (1.0 + d2_base[j].abs()));
                }
            }
        }

        /// Periodic total mass and momentum rates telescope to zero.
        #[test]
        fn periodic_invariant_rates_vanish(vals in prop::collection::vec(-1.0f64..1.0, 20)) {
            let p = periodic(20);
            let mut ydot = vec![0.0; 20];
            p.rhs(0.0, &vals, &mut ydot);
            let dx = p.grid().dx();
            let mass_rate: f64 = ydot.iter().sum();
            let mom_rate: f64 = vals.iter().zip(&ydot).map(|(u, du)| u * du).sum();
            // Scale by the flux magnitudes hiding inside the divergences.
            let scale = (1.0 + p.claw_flux(Law::Second, &vals, &ydot).max_abs()) / dx * 20.0;
            prop_assert!(mass_rate.abs() <= 1e-12 * scale);
            prop_assert!(mom_rate.abs() <= 1e-12 * scale);
        }
    }
}
