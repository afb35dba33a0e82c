//! Focusing nonlinear Schrödinger equation `i psi_t + psi_xx + |psi|^2 psi = 0`
//! on a periodic grid, split into real and imaginary parts `psi = u + i v` and
//! stored interleaved: `y[2j] = U[j]`, `y[2j+1] = V[j]`.
//!
//! The nonlinear term is discretized with the neighbor-averaged product
//! `n[j] = (U[j](U[j-1]+U[j+1]) + V[j](V[j-1]+V[j+1])) / 2`, which is what
//! makes the discrete charge and momentum laws below exact rather than
//! approximate. The momentum flux carries explicit time-derivative slots;
//! callers fill them with the RHS (or a stage derivative) via `ydot`.

use super::nls_breather;
use super::{
    Conservative, DensityKind, Law, LawSpec, NlsBreatherParams, OdeSystem, ProblemError, ProblemId,
};
use crate::grid::{Grid, Masked, Topology};
use crate::solver::BandedMatrix;

/// The NLS semidiscretization on a periodic grid.
#[derive(Debug, Clone)]
pub struct NlsProblem {
    grid: Grid,
}

/// Builds the NLS problem on `[a, b]` with `m` nodes. The grid is always
/// periodic; no other closure exists for this scheme.
///
/// # Errors
///
/// Grid construction failures.
pub fn nls(a: f64, b: f64, m: usize) -> Result<NlsProblem, ProblemError> {
    let grid = Grid::new(a, b, m, Topology::Periodic)?;
    Ok(NlsProblem { grid })
}

impl NlsProblem {
    /// Breather solution sampled on the grid at time `t`, interleaved.
    pub fn exact_state(&self, p: &NlsBreatherParams, t: f64) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.grid.m());
        for j in 0..self.grid.m() {
            let (u, v) = nls_breather(p, self.grid.node(j), t);
            y.push(u);
            y.push(v);
        }
        y
    }

    /// Number of spatial nodes (half the dof count).
    fn m(&self) -> usize {
        self.grid.m()
    }

    /// The averaged nonlinearity `n[j] ~ |psi|^2` at node `j`.
    #[inline]
    fn nonlin(y: &[f64], j: usize, jm: usize, jp: usize) -> f64 {
        let (u, v) = (y[2 * j], y[2 * j + 1]);
        0.5 * (u * (y[2 * jm] + y[2 * jp]) + v * (y[2 * jm + 1] + y[2 * jp + 1]))
    }
}

impl OdeSystem for NlsProblem {
    fn dof(&self) -> usize {
        2 * self.m()
    }

    fn bandwidth(&self) -> usize {
        // Row 2j reaches V[j+1] at column 2j+3; interleaving makes the
        // half-bandwidth 3 even though the stencil is nearest-neighbor.
        3
    }

    fn periodic_jacobian(&self) -> bool {
        true
    }

    fn rhs(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        let m = self.m();
        assert_eq!(y.len(), 2 * m, "nls state length");
        let w = 1.0 / (self.grid.dx() * self.grid.dx());
        for j in 0..m {
            let jm = (j + m - 1) % m;
            let jp = (j + 1) % m;
            let n = Self::nonlin(y, j, jm, jp);
            let (u, v) = (y[2 * j], y[2 * j + 1]);
            let (um, vm) = (y[2 * jm], y[2 * jm + 1]);
            let (up, vp) = (y[2 * jp], y[2 * jp + 1]);
            out[2 * j] = -(vp - 2.0 * v + vm) * w - n * v;
            out[2 * j + 1] = (up - 2.0 * u + um) * w + n * u;
        }
    }

    fn fill_jacobian(&self, _t: f64, y: &[f64], jac: &mut BandedMatrix) {
        let m = self.m();
        let w = 1.0 / (self.grid.dx() * self.grid.dx());
        for j in 0..m {
            let jm = (j + m - 1) % m;
            let jp = (j + 1) % m;
            let n = Self::nonlin(y, j, jm, jp);
            let (u, v) = (y[2 * j], y[2 * j + 1]);
            let usum = y[2 * jm] + y[2 * jp];
            let vsum = y[2 * jm + 1] + y[2 * jp + 1];
            let (ru, rv) = (2 * j, 2 * j + 1);
            // d(dU[j]) / d(U, V) — the -n*v product couples everything.
            jac.set(ru, 2 * j, -v * usum * 0.5);
            jac.set(ru, 2 * j + 1, 2.0 * w - n - v * vsum * 0.5);
            for nb in [jm, jp] {
                jac.add(ru, 2 * nb, -v * u * 0.5);
                jac.add(ru, 2 * nb + 1, -w - v * v * 0.5);
            }
            // d(dV[j]) / d(U, V).
            jac.set(rv, 2 * j, -2.0 * w + n + u * usum * 0.5);
            jac.set(rv, 2 * j + 1, u * vsum * 0.5);
            for nb in [jm, jp] {
                jac.add(rv, 2 * nb, w + u * u * 0.5);
                jac.add(rv, 2 * nb + 1, u * v * 0.5);
            }
        }
    }
}

impl Conservative for NlsProblem {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn id(&self) -> ProblemId {
        ProblemId::Nls
    }

    fn components(&self) -> usize {
        2
    }

    fn law_spec(&self, law: Law) -> LawSpec {
        match law {
            Law::First => LawSpec {
                name: "charge",
                density_kind: DensityKind::QuadraticHomogeneous,
                characteristic_doc: "multiplier pair (2U[m], 2V[m])",
            },
            Law::Second => LawSpec {
                name: "momentum",
                density_kind: DensityKind::QuadraticHomogeneous,
                characteristic_doc: "multiplier pair of centered first differences",
            },
        }
    }

    fn claw_density(&self, law: Law, y: &[f64]) -> Vec<f64> {
        let m = self.m();
        let inv2dx = 0.5 / self.grid.dx();
        (0..m)
            .map(|j| {
                let (u, v) = (y[2 * j], y[2 * j + 1]);
                match law {
                    Law::First => u * u + v * v,
                    Law::Second => {
                        let jm = (j + m - 1) % m;
                        let jp = (j + 1) % m;
                        u * (y[2 * jp + 1] - y[2 * jm + 1]) * inv2dx
                            - v * (y[2 * jp] - y[2 * jm]) * inv2dx
                    }
                }
            })
            .collect()
    }

    fn claw_flux(&self, law: Law, y: &[f64], ydot: &[f64]) -> Masked {
        let m = self.m();
        let dx = self.grid.dx();
        let vals = (0..m)
            .map(|j| {
                // Everything below pairs node j with its left neighbor.
                let jm = (j + m - 1) % m;
                let (u, v) = (y[2 * j], y[2 * j + 1]);
                let (um, vm) = (y[2 * jm], y[2 * jm + 1]);
                match law {
                    Law::First => 2.0 * (um * v - u * vm) / dx,
                    Law::Second => {
                        let (du, dv) = (ydot[2 * j], ydot[2 * j + 1]);
                        let (dum, dvm) = (ydot[2 * jm], ydot[2 * jm + 1]);
                        let d_u = (u - um) / dx;
                        let d_v = (v - vm) / dx;
                        let mu_u = 0.5 * (u + um);
                        let mu_v = 0.5 * (v + vm);
                        let dt_mu_u = 0.5 * (du + dum);
                        let dt_mu_v = 0.5 * (dv + dvm);
                        let dt_d_u = (du - dum) / dx;
                        let dt_d_v = (dv - dvm) / dx;
                        d_u * d_u + d_v * d_v + mu_v * dt_mu_u - mu_u * dt_mu_v
                            + 0.5 * (u * um + v * vm) * (u * um + v * vm)
                            - 0.25 * dx * dx * (dt_d_u * d_v - dt_d_v * d_u)
                    }
                }
            })
            .collect();
        Masked::all_valid(vals)
    }

    fn claw_density_rate(&self, law: Law, y: &[f64], ydot: &[f64]) -> Vec<f64> {
        let m = self.m();
        let inv2dx = 0.5 / self.grid.dx();
        (0..m)
            .map(|j| {
                let (u, v) = (y[2 * j], y[2 * j + 1]);
                let (du, dv) = (ydot[2 * j], ydot[2 * j + 1]);
                match law {
                    Law::First => 2.0 * (u * du + v * dv),
                    Law::Second => {
                        let jm = (j + m - 1) % m;
                        let jp = (j + 1) % m;
                        du * (y[2 * jp + 1] - y[2 * jm + 1]) * inv2dx
                            + u * (ydot[2 * jp + 1] - ydot[2 * jm + 1]) * inv2dx
                            - dv * (y[2 * jp] - y[2 * jm]) * inv2dx
                            - v * (ydot[2 * jp] - ydot[2 * jm]) * inv2dx
                    }
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{fd_jacobian, BandShape};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn benchmark_problem(m: usize) -> NlsProblem {
        nls(-PI / 7.0, PI / 7.0, m).unwrap()
    }

    #[test]
    fn zero_state_is_stationary() {
        let p = benchmark_problem(10);
        let mut out = vec![f64::NAN; 20];
        p.rhs(0.0, &[0.0; 20], &mut out);
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn plane_wave_conserves_discrete_charge_exactly() {
        // U = cos(k x), V = sin(k x) with k a harmonic of the domain: the
        // charge derivative sum telescopes to rounding.
        let m = 64;
        let p = benchmark_problem(m);
        let k = 2.0 * PI / (p.grid().dx() * m as f64) * 3.0;
        let mut y = vec![0.0; 2 * m];
        for j in 0..m {
            let (s, c) = (k * p.grid().node(j)).sin_cos();
            y[2 * j] = c;
            y[2 * j + 1] = s;
        }
        let mut ydot = vec![0.0; 2 * m];
        p.rhs(0.0, &y, &mut ydot);
        let charge_rate: f64 = (0..m)
            .map(|j| y[2 * j] * ydot[2 * j] + y[2 * j + 1] * ydot[2 * j + 1])
            .sum();
        // Cancellation is against terms of size ~1/dx^2 per node.
        let w = 1.0 / (p.grid().dx() * p.grid().dx());
        assert!(
            charge_rate.abs() <= 1e-12 * m as f64 * w,
            "charge rate {charge_rate}"
        );
    }

    #[test]
    fn breather_initial_data_reproduces_the_analytic_time_derivative() {
        let m = 1000;
        let p = benchmark_problem(m);
        let params = NlsBreatherParams::new(1.4, 25.0).unwrap();
        let y = p.exact_state(&params, 0.0);
        let mut out = vec![0.0; 2 * m];
        p.rhs(0.0, &y, &mut out);
        let h = 1e-6;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for j in 0..m {
            let x = p.grid().node(j);
            let (up, vp) = nls_breather(&params, x, h);
            let (um, vm) = nls_breather(&params, x, -h);
            let (ut, vt) = ((up - um) / (2.0 * h), (vp - vm) / (2.0 * h));
            scale = scale.max(ut.abs()).max(vt.abs());
            worst = worst
                .max((out[2 * j] - ut).abs())
                .max((out[2 * j + 1] - vt).abs());
        }
        assert!(
            worst <= 1e-4 * scale,
            "max |rhs - psi_t| = {worst}, scale {scale}"
        );
    }

    #[test]
    fn unit_real_state_has_unit_charge_density() {
        let m = 12;
        let p = benchmark_problem(m);
        let mut y = vec![0.0; 2 * m];
        for j in 0..m {
            y[2 * j] = 1.0;
        }
        assert!(p.claw_density(Law::First, &y).iter().all(|&g| g == 1.0));
    }

    #[test]
    fn plane_wave_momentum_density_is_constant() {
        // On [0, 2 pi] with M nodes, dx equals the phase step h, and the
        // centered-difference momentum density of exp(i x) collapses to
        // sin(h)/h at every node.
        let m = 48;
        let p = nls(0.0, 2.0 * PI, m).unwrap();
        let h = 2.0 * PI / m as f64;
        assert!((p.grid().dx() - h).abs() < 1e-15);
        let mut y = vec![0.0; 2 * m];
        for j in 0..m {
            let (s, c) = (j as f64 * h).sin_cos();
            y[2 * j] = c;
            y[2 * j + 1] = s;
        }
        let want = h.sin() / h;
        for (j, g) in p.claw_density(Law::Second, &y).into_iter().enumerate() {
            assert!((g - want).abs() <= 1e-12, "G2[{j}] = {g}, want {want}");
        }
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let m = 8;
        let p = benchmark_problem(m);
        let y: Vec<f64> = (0..2 * m).map(|i| (0.9 * i as f64).sin() * 1.3).collect();
        let shape = BandShape::symmetric(2 * m, 3, true);
        let mut jac = BandedMatrix::zeros(shape).unwrap();
        p.fill_jacobian(0.0, &y, &mut jac);
        let fd = fd_jacobian(|x, r| p.rhs(0.0, x, r), &y, shape).unwrap();
        let n = 2 * m;
        let scale = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .fold(0.0f64, |a, (i, j)| a.max(jac.get(i, j).abs()));
        for i in 0..n {
            for j in 0..n {
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

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Node-wise semidiscrete conservation for both laws on random states.
        #[test]
        fn density_rate_balances_flux_divergence(
            vals in prop::collection::vec(-1.5f64..1.5, 24),
        ) {
            let m = 12;
            let p = benchmark_problem(m);
            let mut ydot = vec![0.0; 2 * m];
            p.rhs(0.0, &vals, &mut ydot);
            let dx = p.grid().dx();
            for law in [Law::First, Law::Second] {
                let rate = p.claw_density_rate(law, &vals, &ydot);
                let flux = p.claw_flux(law, &vals, &ydot);
                let scale = 1.0 + flux.max_abs() / dx
                    + rate.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                for j in 0..m {
                    let div = (flux.get((j + 1) % m).unwrap() - flux.get(j).unwrap()) / dx;
                    prop_assert!(
                        (rate[j] + div).abs() <= 1e-11 * scale,
                        "law {:?} node {}: rate {} div {}", law, j, rate[j], div
                    );
                }
            }
        }

        /// Both densities are homogeneous of degree two.
        #[test]
        fn density_homogeneity(vals in prop::collection::vec(-2.0f64..2.0, 20)) {
            let p = benchmark_problem(10);
            for alpha in [2.0f64, -1.0] {
                let scaled: Vec<f64> = vals.iter().map(|v| alpha * v).collect();
                for law in [Law::First, Law::Second] {
                    let base = p.claw_density(law, &vals);
                    let got = p.claw_density(law, &scaled);
                    for j in 0..10 {
                        prop_assert!(
                            (got[j] - alpha * alpha * base[j]).abs() <= 1e-12 * (1.0 + base[j].abs())
                        );
                    }
                }
            }
        }
    }
}
