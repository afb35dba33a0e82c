//! Banded matrices, LU factorization with partial pivoting, and the bordered
//! elimination that extends both to periodic (wraparound) band structure.
//!
//! Storage follows the classic band layout: entry `(i, j)` with
//! `-ku <= i - j <= kl` lives at `ab[j * ldab + (kl + ku + i - j)]` where
//! `ldab = 2*kl + ku + 1`; the extra `kl` rows absorb fill-in from row
//! pivoting. Periodic wrap entries live in two small corner blocks and are
//! eliminated by a block-bordered Schur complement, so the cost stays linear
//! in the dimension with only `max(kl, ku)` extra band solves at factor time.

use thiserror::Error;

/// Errors raised by the linear-algebra kernels.
#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix entry ({0}, {1}) is outside the declared band/corner structure")]
    OutsideBand(usize, usize),
    #[error("exactly singular pivot in column {0}")]
    Singular(usize),
    #[error("dimension mismatch: expected {want}, got {got}")]
    Dimension { want: usize, got: usize },
    #[error("periodic band of dimension {n} needs n >= 2*max(kl, ku) + 1 = {min}")]
    PeriodicTooSmall { n: usize, min: usize },
}

/// Shape of a (possibly periodic) banded matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandShape {
    /// Matrix dimension.
    pub n: usize,
    /// Lower half-bandwidth.
    pub kl: usize,
    /// Upper half-bandwidth.
    pub ku: usize,
    /// Whether wraparound corner entries are representable.
    pub periodic: bool,
}

impl BandShape {
    /// Symmetric-band shape with half-bandwidth `bw`.
    pub fn symmetric(n: usize, bw: usize, periodic: bool) -> Self {
        Self {
            n,
            kl: bw,
            ku: bw,
            periodic,
        }
    }
}

/// A square banded matrix with optional periodic corner blocks.
///
/// Only entries inside the band — plus, for periodic shapes, the corner
/// entries a wrapped stencil can reach — are representable; writes elsewhere
/// are rejected so stencil bugs surface immediately instead of silently
/// truncating the matrix.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    shape: BandShape,
    ldab: usize,
    /// Column-major band storage, `ldab` rows per column, with `kl` spare
    /// rows for pivoting fill.
    ab: Vec<f64>,
    /// Top-right corner block, `kl x kl`: `(i, c)` holds entry
    /// `(i, n - kl + c)`, structurally nonzero when `i <= c`.
    tr: Vec<f64>,
    /// Bottom-left corner block, `ku x ku`: `(r, j)` holds entry
    /// `(n - ku + r, j)`, structurally nonzero when `j <= r`.
    bl: Vec<f64>,
}

impl BandedMatrix {
    /// All-zero matrix of the given shape.
    ///
    /// # Errors
    ///
    /// Periodic shapes need `n >= 2*max(kl, ku) + 1` so the corner blocks and
    /// the interior band cannot overlap.
    pub fn zeros(shape: BandShape) -> Result<Self, LinalgError> {
        if shape.periodic {
            let min = 2 * shape.kl.max(shape.ku) + 1;
            if shape.n < min {
                return Err(LinalgError::PeriodicTooSmall { n: shape.n, min });
            }
        }
        let ldab = 2 * shape.kl + shape.ku + 1;
        Ok(Self {
            shape,
            ldab,
            ab: vec![0.0; ldab * shape.n],
            tr: vec![
                0.0;
                if shape.periodic {
                    shape.kl * shape.kl
                } else {
                    0
                }
            ],
            bl: vec![
                0.0;
                if shape.periodic {
                    shape.ku * shape.ku
                } else {
                    0
                }
            ],
        })
    }

    /// The matrix shape.
    pub fn shape(&self) -> BandShape {
        self.shape
    }

    /// Classifies an index pair: in-band, corner, or unrepresentable.
    fn slot(&self, i: usize, j: usize) -> Option<Slot> {
        let BandShape {
            n,
            kl,
            ku,
            periodic,
        } = self.shape;
        if i >= n || j >= n {
            return None;
        }
        let d = i as isize - j as isize;
        if -(ku as isize) <= d && d <= kl as isize {
            return Some(Slot::Band(j * self.ldab + (kl + ku) + i - j));
        }
        if periodic {
            // Lower band wrapping past the top: (i, n - kl + c) with i <= c.
            if j + kl >= n && i + n - j <= kl {
                return Some(Slot::Corner(true, i * kl + (j + kl - n)));
            }
            // Upper band wrapping past the bottom: (n - ku + r, j) with j <= r.
            if i + ku >= n && j + n - i <= ku {
                return Some(Slot::Corner(false, (i + ku - n) * ku + j));
            }
        }
        None
    }

    /// Writes entry `(i, j)`.
    ///
    /// # Errors
    ///
    /// [`LinalgError::OutsideBand`] if the entry is not representable.
    pub fn try_set(&mut self, i: usize, j: usize, v: f64) -> Result<(), LinalgError> {
        match self.slot(i, j) {
            Some(Slot::Band(p)) => self.ab[p] = v,
            Some(Slot::Corner(true, p)) => self.tr[p] = v,
            Some(Slot::Corner(false, p)) => self.bl[p] = v,
            None => return Err(LinalgError::OutsideBand(i, j)),
        }
        Ok(())
    }

    /// Writes entry `(i, j)`, panicking on a structurally absent slot (a
    /// stencil-assembly bug, not a runtime condition).
    #[track_caller]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.try_set(i, j, v)
            .unwrap_or_else(|e| panic!("BandedMatrix::set: {e}"));
    }

    /// Adds `v` to entry `(i, j)` with the same rules as [`Self::set`].
    #[track_caller]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    /// Reads entry `(i, j)`; unrepresentable slots read as zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.slot(i, j) {
            Some(Slot::Band(p)) => self.ab[p],
            Some(Slot::Corner(true, p)) => self.tr[p],
            Some(Slot::Corner(false, p)) => self.bl[p],
            None => 0.0,
        }
    }

    /// Resets every stored entry to zero, keeping the shape.
    pub fn clear(&mut self) {
        self.ab.fill(0.0);
        self.tr.fill(0.0);
        self.bl.fill(0.0);
    }

    /// Multiplies every stored entry by `s` in place. Combined with
    /// [`BandedMatrix::add`] on the diagonal this turns a vector-field
    /// Jacobian `J` into a Newton matrix `I - s J` without re-walking the
    /// stencil.
    pub fn scale(&mut self, s: f64) {
        for v in self.ab.iter_mut().chain(&mut self.tr).chain(&mut self.bl) {
            *v *= s;
        }
    }

    /// Dense row-major copy (tests and small stacked systems).
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.shape.n;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = self.get(i, j);
            }
        }
        a
    }

    /// `y = A x`.
    ///
    /// # Errors
    ///
    /// Dimension mismatch.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) -> Result<(), LinalgError> {
        let BandShape {
            n,
            kl,
            ku,
            periodic,
        } = self.shape;
        if x.len() != n || y.len() != n {
            return Err(LinalgError::Dimension {
                want: n,
                got: x.len().min(y.len()),
            });
        }
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.get(i, j) * x[j];
            }
            if periodic {
                // Wrapped lower band (top rows) and upper band (bottom rows).
                if i < kl {
                    for c in i..kl {
                        acc += self.tr[i * kl + c] * x[n - kl + c];
                    }
                }
                if i + ku >= n {
                    let r = i + ku - n;
                    for j in 0..=r {
                        acc += self.bl[r * ku + j] * x[j];
                    }
                }
            }
            y[i] = acc;
        }
        Ok(())
    }

    /// Factorizes the matrix, consuming nothing (the band data is copied so
    /// the matrix can be refilled for the next Newton iteration).
    ///
    /// # Errors
    ///
    /// [`LinalgError::Singular`] on an exactly zero pivot.
    pub fn factor(&self) -> Result<BandedLu, LinalgError> {
        if self.shape.periodic {
            PeriodicLu::factor(self).map(BandedLu::Periodic)
        } else {
            PlainLu::factor_band(self.shape, self.ab.clone()).map(BandedLu::Plain)
        }
    }
}

enum Slot {
    Band(usize),
    /// `(is_top_right, flat offset)`.
    Corner(bool, usize),
}

/// A factorized banded matrix ready for repeated solves.
pub enum BandedLu {
    Plain(PlainLu),
    Periodic(PeriodicLu),
}

impl BandedLu {
    /// Solves `A x = b` in place.
    ///
    /// # Errors
    ///
    /// Dimension mismatch.
    pub fn solve(&self, b: &mut [f64]) -> Result<(), LinalgError> {
        match self {
            BandedLu::Plain(lu) => lu.solve(b),
            BandedLu::Periodic(lu) => lu.solve(b),
        }
    }
}

/// LU factors of a non-periodic band matrix (partial pivoting).
pub struct PlainLu {
    shape: BandShape,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl PlainLu {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.ab[j * self.ldab + (self.shape.kl + self.shape.ku) + i - j]
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.ab[j * self.ldab + (self.shape.kl + self.shape.ku) + i - j]
    }

    fn factor_band(shape: BandShape, ab: Vec<f64>) -> Result<Self, LinalgError> {
        let BandShape { n, kl, ku, .. } = shape;
        let mut lu = Self {
            shape,
            ldab: 2 * kl + ku + 1,
            ab,
            ipiv: vec![0; n],
        };
        for j in 0..n {
            // Partial pivot among the kl candidates below the diagonal.
            let last_row = (j + kl).min(n - 1);
            let mut p = j;
            let mut pmax = lu.at(j, j).abs();
            for i in (j + 1)..=last_row {
                let v = lu.at(i, j).abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax == 0.0 {
                return Err(LinalgError::Singular(j));
            }
            lu.ipiv[j] = p;
            let last_col = (j + kl + ku).min(n - 1);
            if p != j {
                for c in j..=last_col {
                    let vj = lu.at(j, c);
                    let vp = lu.at(p, c);
                    *lu.at_mut(j, c) = vp;
                    *lu.at_mut(p, c) = vj;
                }
            }
            let pivot = lu.at(j, j);
            for i in (j + 1)..=last_row {
                let l = lu.at(i, j) / pivot;
                *lu.at_mut(i, j) = l;
                if l != 0.0 {
                    for c in (j + 1)..=last_col {
                        let u = lu.at(j, c);
                        *lu.at_mut(i, c) -= l * u;
                    }
                }
            }
        }
        Ok(lu)
    }

    fn solve(&self, b: &mut [f64]) -> Result<(), LinalgError> {
        let BandShape { n, kl, ku, .. } = self.shape;
        if b.len() != n {
            return Err(LinalgError::Dimension {
                want: n,
                got: b.len(),
            });
        }
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let last_row = (j + kl).min(n - 1);
            for i in (j + 1)..=last_row {
                b[i] -= self.at(i, j) * b[j];
            }
        }
        let bw = kl + ku;
        for j in (0..n).rev() {
            b[j] /= self.at(j, j);
            let first_row = j.saturating_sub(bw);
            for i in first_row..j {
                b[i] -= self.at(i, j) * b[j];
            }
        }
        Ok(())
    }
}

/// Factors of a periodic band matrix via block-bordered elimination.
///
/// With `p = max(kl, ku)` and `q = n - p`, every wrap entry couples only the
/// first rows/columns with the last `p` unknowns, so the cyclic system
/// partitions as `[[A, B], [C, D]]` with `A` a plain `q x q` band. The factor
/// stores `A`'s LU, the propagated coupling `X = A^-1 B`, the dense rows `C`,
/// and the LU of the `p x p` Schur complement `S = D - C X`.
pub struct PeriodicLu {
    q: usize,
    p: usize,
    a_lu: PlainLu,
    /// `q x p`, column-major.
    x: Vec<f64>,
    /// `p x q`, row-major.
    c: Vec<f64>,
    s_lu: DenseLu,
}

impl PeriodicLu {
    fn factor(m: &BandedMatrix) -> Result<Self, LinalgError> {
        let BandShape { n, kl, ku, .. } = m.shape;
        let p = kl.max(ku);
        let q = n - p;
        // Interior block: the band entries with both indices below q.
        let interior = BandShape {
            n: q,
            kl,
            ku,
            periodic: false,
        };
        let mut a = BandedMatrix::zeros(interior)?;
        for j in 0..q {
            let lo = j.saturating_sub(ku);
            let hi = (j + kl).min(q - 1);
            for i in lo..=hi {
                a.set(i, j, m.get(i, j));
            }
        }
        let a_lu = PlainLu::factor_band(interior, a.ab)?;

        // Coupling columns B (interior rows, tail columns), solved in place.
        let mut x = vec![0.0; q * p];
        for t in 0..p {
            let col = &mut x[t * q..(t + 1) * q];
            for i in 0..q {
                col[i] = m.get(i, q + t);
            }
            a_lu.solve(col)?;
        }

        // Tail rows C (dense over the interior) and D, then S = D - C X.
        let mut c = vec![0.0; p * q];
        for r in 0..p {
            for j in 0..q {
                c[r * q + j] = m.get(q + r, j);
            }
        }
        let mut s = vec![0.0; p * p];
        for r in 0..p {
            for t in 0..p {
                let mut acc = m.get(q + r, q + t);
                for j in 0..q {
                    acc -= c[r * q + j] * x[t * q + j];
                }
                s[r * p + t] = acc;
            }
        }
        let s_lu = DenseLu::factor(s, p)?;
        Ok(Self {
            q,
            p,
            a_lu,
            x,
            c,
            s_lu,
        })
    }

    fn solve(&self, b: &mut [f64]) -> Result<(), LinalgError> {
        let (q, p) = (self.q, self.p);
        if b.len() != q + p {
            return Err(LinalgError::Dimension {
                want: q + p,
                got: b.len(),
            });
        }
        let (bi, bt) = b.split_at_mut(q);
        self.a_lu.solve(bi)?;
        // Tail solve: S x_t = b_t - C y.
        for r in 0..p {
            let mut acc = 0.0;
            for j in 0..q {
                acc += self.c[r * q + j] * bi[j];
            }
            bt[r] -= acc;
        }
        self.s_lu.solve(bt)?;
        // Back-substitute the coupling: x_i = y - X x_t.
        for t in 0..p {
            let xt = bt[t];
            if xt != 0.0 {
                for i in 0..q {
                    bi[i] -= self.x[t * q + i] * xt;
                }
            }
        }
        Ok(())
    }
}

/// Dense LU with partial pivoting, row-major storage. Used for the periodic
/// Schur complement and for small stacked-stage systems; sizes stay tiny.
pub struct DenseLu {
    n: usize,
    a: Vec<f64>,
    ipiv: Vec<usize>,
}

impl DenseLu {
    /// Factorizes an `n x n` row-major matrix.
    ///
    /// # Errors
    ///
    /// [`LinalgError::Singular`] on a zero pivot column,
    /// [`LinalgError::Dimension`] if the buffer is not `n * n` long.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self, LinalgError> {
        if a.len() != n * n {
            return Err(LinalgError::Dimension {
                want: n * n,
                got: a.len(),
            });
        }
        let mut ipiv = vec![0; n];
        for j in 0..n {
            let mut p = j;
            let mut pmax = a[j * n + j].abs();
            for i in (j + 1)..n {
                let v = a[i * n + j].abs();
                if v > pmax {
                    pmax = v;
                    p = i;
                }
            }
            if pmax == 0.0 {
                return Err(LinalgError::Singular(j));
            }
            ipiv[j] = p;
            if p != j {
                for c in 0..n {
                    a.swap(j * n + c, p * n + c);
                }
            }
            let pivot = a[j * n + j];
            for i in (j + 1)..n {
                let l = a[i * n + j] / pivot;
                a[i * n + j] = l;
                if l != 0.0 {
                    for c in (j + 1)..n {
                        a[i * n + c] -= l * a[j * n + c];
                    }
                }
            }
        }
        Ok(Self { n, a, ipiv })
    }

    /// Solves in place.
    ///
    /// # Errors
    ///
    /// Dimension mismatch.
    pub fn solve(&self, b: &mut [f64]) -> Result<(), LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::Dimension {
                want: n,
                got: b.len(),
            });
        }
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            for i in (j + 1)..n {
                b[i] -= self.a[i * n + j] * b[j];
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.a[j * n + j];
            for i in 0..j {
                b[i] -= self.a[i * n + j] * b[j];
            }
        }
        Ok(())
    }
}

/// One-shot convenience: factorize `a` and solve for `rhs`.
///
/// # Errors
///
/// Singular pivot or dimension mismatch.
pub fn banded_lu_solve(a: &BandedMatrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let lu = a.factor()?;
    let mut x = rhs.to_vec();
    lu.solve(&mut x)?;
    Ok(x)
}
