//! Uniform 1-D grids and masked forward-difference stencil operators.
//!
//! Every spatial object in this crate lives on a [`Grid`]: an interval
//! `[a, b]` sampled at `m` equispaced nodes. The grid's [`Topology`] decides
//! what happens when a stencil reaches past the last node:
//!
//! * [`Topology::Dirichlet`] — nothing is assumed; stencil outputs that would
//!   read a missing neighbour are marked invalid in the result mask.
//! * [`Topology::ZeroGhost`] — missing neighbours read as zero, so every
//!   output stays valid (appropriate for fields that decay to zero).
//! * [`Topology::Periodic`] — indices wrap around; the rightmost node is the
//!   left neighbour of the first.
//!
//! The stencil operators [`diff_forward`] and [`avg_forward`] return a
//! [`Masked`] vector: values plus an explicit validity mask, so downstream
//! code can never silently consume an undefined boundary entry.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A state vector: one scalar per grid node, or two interleaved components
/// per node for complex-valued fields (see the problem constructors for the
/// layout in use).
pub type StateVector = Vec<f64>;

/// Boundary treatment for stencils that reach past the ends of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// No assumption about missing neighbours; affected outputs are masked
    /// invalid and boundary values are supplied externally.
    Dirichlet,
    /// Missing neighbours read as zero (fields with decaying tails).
    ZeroGhost,
    /// Indices wrap modulo the node count.
    Periodic,
}

/// Errors from grid construction and stencil application.
#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 5 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("grid interval is empty or reversed: [{0}, {1}]")]
    EmptyInterval(f64, f64),
    #[error("difference order must be 1 or 2, got {0}")]
    BadOrder(usize),
    #[error("vector length {got} does not match grid size {want}")]
    LengthMismatch { got: usize, want: usize },
}

/// A uniform grid on `[a, b]` with `m` nodes and a fixed boundary topology.
///
/// For bounded topologies the nodes include both endpoints and
/// `dx = (b - a) / (m - 1)`. For [`Topology::Periodic`] the right endpoint is
/// identified with the left one, the stored nodes cover `[a, b)`, and
/// `dx = (b - a) / m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    m: usize,
    dx: f64,
    topology: Topology,
}

impl Grid {
    /// Builds a grid with `m` nodes on `[a, b]`.
    ///
    /// # Errors
    ///
    /// Fails if `m < 5` (the widest stencil in the crate spans five nodes) or
    /// if the interval is empty or reversed.
    pub fn new(a: f64, b: f64, m: usize, topology: Topology) -> Result<Self, GridError> {
        if m < 5 {
            return Err(GridError::TooFewNodes(m));
        }
        if !(b > a) {
            return Err(GridError::EmptyInterval(a, b));
        }
        let dx = match topology {
            Topology::Periodic => (b - a) / m as f64,
            _ => (b - a) / (m - 1) as f64,
        };
        Ok(Self {
            a,
            b,
            m,
            dx,
            topology,
        })
    }

    /// Left end of the interval.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Right end of the interval.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Number of stored nodes.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Node spacing.
    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Boundary topology.
    pub fn topology(&self) -> Topology {
        self.topology
    }

    /// Coordinate of node `j` (0-based, `j < m`).
    pub fn node(&self, j: usize) -> f64 {
        debug_assert!(j < self.m);
        self.a + j as f64 * self.dx
    }

    /// All node coordinates in order.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.node(j)).collect()
    }
}

/// A vector of stencil outputs with an explicit per-entry validity mask.
///
/// Entries whose stencil would have read a neighbour that does not exist
/// (Dirichlet topology near a boundary) carry `valid = false` and a value of
/// zero; consumers must consult the mask, and the accessors here make that
/// hard to forget.
#[derive(Debug, Clone, PartialEq)]
pub struct Masked {
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl Masked {
    /// Wraps raw values with an all-valid mask.
    pub fn all_valid(values: Vec<f64>) -> Self {
        let valid = vec![true; values.len()];
        Self { values, valid }
    }

    /// Wraps values with the given mask; invalid entries are zeroed.
    pub fn with_mask(mut values: Vec<f64>, valid: Vec<bool>) -> Self {
        assert_eq!(values.len(), valid.len());
        for (v, &ok) in values.iter_mut().zip(&valid) {
            if !ok {
                *v = 0.0;
            }
        }
        Self { values, valid }
    }

    /// Number of entries (valid or not).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True if there are no entries at all.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The raw values; invalid entries are zero.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The validity mask.
    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    /// Value at `j` if valid.
    pub fn get(&self, j: usize) -> Option<f64> {
        if self.valid[j] {
            Some(self.values[j])
        } else {
            None
        }
    }

    /// Iterator over `(index, value)` pairs of the valid entries.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter_map(|(j, (&v, &ok))| ok.then_some((j, v)))
    }

    /// Largest absolute value among the valid entries (0 if none).
    pub fn max_abs(&self) -> f64 {
        self.iter_valid().fold(0.0, |acc, (_, v)| acc.max(v.abs()))
    }

    /// Sum of the valid entries using Kahan compensated summation.
    pub fn sum_valid(&self) -> f64 {
        let mut sum = 0.0;
        let mut comp = 0.0;
        for (_, v) in self.iter_valid() {
            let y = v - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    }
}

/// Reads `v[j + off]` honoring the grid topology; `None` when the neighbour
/// does not exist (Dirichlet past the ends).
fn neighbor(v: &[f64], grid: &Grid, j: usize, off: isize) -> Option<f64> {
    let n = v.len() as isize;
    let i = j as isize + off;
    if (0..n).contains(&i) {
        return Some(v[i as usize]);
    }
    match grid.topology() {
        Topology::Dirichlet => None,
        Topology::ZeroGhost => Some(0.0),
        Topology::Periodic => Some(v[i.rem_euclid(n) as usize]),
    }
}

/// One application of the forward difference `(v[j+1] - v[j]) / dx`,
/// propagating the input mask.
fn diff_once(v: &Masked, grid: &Grid) -> Masked {
    let n = v.len();
    let mut out = vec![0.0; n];
    let mut ok = vec![false; n];
    for j in 0..n {
        if !v.mask()[j] {
            continue;
        }
        let (right, right_ok) = if j + 1 < n {
            (v.values()[j + 1], v.mask()[j + 1])
        } else {
            match grid.topology() {
                Topology::Dirichlet => continue,
                Topology::ZeroGhost => (0.0, true),
                Topology::Periodic => (v.values()[0], v.mask()[0]),
            }
        };
        if !right_ok {
            continue;
        }
        out[j] = (right - v.values()[j]) / grid.dx();
        ok[j] = true;
    }
    Masked {
        values: out,
        valid: ok,
    }
}

/// `k`-fold forward difference of `v` on `grid` (`k` in {1, 2}).
///
/// The first-order operator maps `v[j]` to `(v[j+1] - v[j]) / dx`; `k = 2`
/// composes it with itself, so outputs near a Dirichlet boundary lose one more
/// valid entry per order. Under [`Topology::ZeroGhost`] and
/// [`Topology::Periodic`] every output is valid.
///
/// # Errors
///
/// Fails if `v.len() != grid.m()` or `k` is not 1 or 2.
pub fn diff_forward(v: &[f64], grid: &Grid, k: usize) -> Result<Masked, GridError> {
    check_len(v, grid)?;
    if !(1..=2).contains(&k) {
        return Err(GridError::BadOrder(k));
    }
    let mut cur = Masked::all_valid(v.to_vec());
    for _ in 0..k {
        cur = diff_once(&cur, grid);
    }
    Ok(cur)
}

/// Forward two-point average `(v[j+1] + v[j]) / 2`, masked like
/// [`diff_forward`] with `k = 1`.
///
/// # Errors
///
/// Fails if `v.len() != grid.m()`.
pub fn avg_forward(v: &[f64], grid: &Grid) -> Result<Masked, GridError> {
    check_len(v, grid)?;
    let n = v.len();
    let mut out = vec![0.0; n];
    let mut ok = vec![false; n];
    for j in 0..n {
        if let Some(right) = neighbor(v, grid, j, 1) {
            out[j] = 0.5 * (right + v[j]);
            ok[j] = true;
        }
    }
    Ok(Masked {
        values: out,
        valid: ok,
    })
}

fn check_len(v: &[f64], grid: &Grid) -> Result<(), GridError> {
    if v.len() != grid.m() {
        return Err(GridError::LengthMismatch {
            got: v.len(),
            want: grid.m(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(m: usize, topo: Topology) -> Grid {
        Grid::new(0.0, (m - 1) as f64, m, topo).unwrap()
    }

    #[test]
    fn rejects_tiny_and_reversed_grids() {
        assert_eq!(
            Grid::new(0.0, 1.0, 4, Topology::Periodic),
            Err(GridError::TooFewNodes(4))
        );
        assert_eq!(
            Grid::new(1.0, 1.0, 8, Topology::Dirichlet),
            Err(GridError::EmptyInterval(1.0, 1.0))
        );
    }

    #[test]
    fn spacing_convention_depends_on_topology() {
        let bounded = Grid::new(-1.0, 1.0, 5, Topology::Dirichlet).unwrap();
        assert_eq!(bounded.dx(), 0.5);
        assert_eq!(bounded.node(4), 1.0);
        let periodic = Grid::new(0.0, 1.0, 10, Topology::Periodic).unwrap();
        assert_eq!(periodic.dx(), 0.1);
        assert!((periodic.node(9) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn second_difference_of_squares_is_two() {
        // v(x) = x^2 on dx = 1 has exact second difference 2 wherever defined.
        let g = grid(5, Topology::Dirichlet);
        let v = [0.0, 1.0, 4.0, 9.0, 16.0];
        let d2 = diff_forward(&v, &g, 2).unwrap();
        assert_eq!(d2.mask(), &[true, true, true, false, false]);
        for (_, val) in d2.iter_valid() {
            assert_eq!(val, 2.0);
        }
    }

    #[test]
    fn ramp_has_constant_slope_and_zero_ghost_sees_the_drop() {
        let g = grid(5, Topology::ZeroGhost);
        let v = [0.0, 2.0, 4.0, 6.0, 8.0];
        let d = diff_forward(&v, &g, 1).unwrap();
        assert!(d.mask().iter().all(|&ok| ok));
        assert_eq!(&d.values()[..4], &[2.0, 2.0, 2.0, 2.0]);
        // Last entry differences against the zero ghost node.
        assert_eq!(d.values()[4], -8.0);
    }

    #[test]
    fn alternating_signal_averages_to_zero_periodically() {
        let g = grid(6, Topology::Periodic);
        let v = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let mu = avg_forward(&v, &g).unwrap();
        assert!(mu.mask().iter().all(|&ok| ok));
        assert!(mu.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn invalid_order_is_rejected() {
        let g = grid(5, Topology::Periodic);
        assert!(matches!(
            diff_forward(&[0.0; 5], &g, 3),
            Err(GridError::BadOrder(3))
        ));
        assert!(matches!(
            diff_forward(&[0.0; 4], &g, 1),
            Err(GridError::LengthMismatch { got: 4, want: 5 })
        ));
    }

    proptest! {
        /// Forward difference and forward average commute on periodic grids.
        #[test]
        fn diff_and_avg_commute(v in prop::collection::vec(-100.0f64..100.0, 8..40)) {
            let g = grid(v.len(), Topology::Periodic);
            let d_mu = diff_forward(avg_forward(&v, &g).unwrap().values(), &g, 1).unwrap();
            let mu_d = avg_forward(diff_forward(&v, &g, 1).unwrap().values(), &g).unwrap();
            let scale = 1.0 + d_mu.max_abs();
            for j in 0..v.len() {
                prop_assert!((d_mu.values()[j] - mu_d.values()[j]).abs() <= 1e-13 * scale);
            }
        }

        /// Periodic differences telescope: their sum vanishes to roundoff.
        #[test]
        fn periodic_differences_telescope(v in prop::collection::vec(-100.0f64..100.0, 8..40)) {
            let g = grid(v.len(), Topology::Periodic);
            let d = diff_forward(&v, &g, 1).unwrap();
            let scale: f64 = v.iter().map(|x| x.abs()).sum::<f64>() / g.dx() + 1.0;
            prop_assert!(d.sum_valid().abs() <= 1e-14 * scale);
        }

        /// The k = 2 operator is exactly the composition of two k = 1 passes.
        #[test]
        fn second_difference_is_composed_first_difference(
            v in prop::collection::vec(-10.0f64..10.0, 8..30),
            topo_ix in 0usize..3,
        ) {
            let topo = [Topology::Dirichlet, Topology::ZeroGhost, Topology::Periodic][topo_ix];
            let g = grid(v.len(), topo);
            let d2 = diff_forward(&v, &g, 2).unwrap();
            let d1 = diff_forward(&v, &g, 1).unwrap();
            let d1d1 = super::diff_once(&d1, &g);
            prop_assert_eq!(d2, d1d1);
        }
    }
}
