//! Small dense matrices over [`Jet2`].

use std::ops::{Index, IndexMut, Mul};

use thiserror::Error;

use crate::jet::{Jet2, JetError};

/// Relative determinant threshold below which a matrix counts as singular.
pub const SINGULARITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("singular matrix: |det| = {det:e} below threshold {threshold:e}")]
    SingularMatrix { det: f64, threshold: f64 },
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape((usize, usize), (usize, usize)),
    #[error(transparent)]
    Jet(#[from] JetError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct JetMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Jet2>,
}

impl JetMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Jet2) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        JetMatrix { rows, cols, entries }
    }

    pub fn identity(n: usize, dim: usize) -> Self {
        Self::from_fn(n, n, |i, j| Jet2::constant(dim, if i == j { 1.0 } else { 0.0 }))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Row-major matrix of the jet values.
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(Jet2::value).collect()
    }

    pub fn max_abs_value(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.value().abs()))
    }

    /// Determinant as a jet (square matrices up to 3×3 by cofactors,
    /// larger ones through elimination).
    pub fn det(&self) -> Result<Jet2, MatrixError> {
        self.require_square()?;
        let a = |i: usize, j: usize| self[(i, j)];
        Ok(match self.rows {
            1 => a(0, 0),
            2 => a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0),
            3 => {
                a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1))
                    - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
                    + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
            }
            _ => self.lu_det()?,
        })
    }

    /// Scale-aware singularity threshold `tol · (max |entry|)^n`.
    pub fn singularity_threshold(&self, tol: f64) -> f64 {
        tol * self.max_abs_value().powi(self.rows as i32)
    }

    /// Inverse in jet arithmetic. Fails with `SingularMatrix` when the value-part
    /// determinant is below `tol · (max |entry|)^n`.
    pub fn inverse_with_tol(&self, tol: f64) -> Result<JetMatrix, MatrixError> {
        self.require_square()?;
        let n = self.rows;
        let det = self.det()?;
        let threshold = self.singularity_threshold(tol);
        if !(det.value().abs() > threshold) {
            return Err(MatrixError::SingularMatrix { det: det.value(), threshold });
        }
        let a = |i: usize, j: usize| self[(i, j)];
        match n {
            1 => Ok(Self::from_fn(1, 1, |_, _| a(0, 0).recip().expect("nonzero determinant"))),
            2 => {
                let r = det.recip()?;
                Ok(Self::from_fn(2, 2, |i, j| match (i, j) {
                    (0, 0) => a(1, 1) * r,
                    (0, 1) => -a(0, 1) * r,
                    (1, 0) => -a(1, 0) * r,
                    _ => a(0, 0) * r,
                }))
            }
            3 => {
                let r = det.recip()?;
                // adjugate: inv[i][j] = cofactor(j, i) / det
                Ok(Self::from_fn(3, 3, |i, j| {
                    let (r0, r1) = others(j);
                    let (c0, c1) = others(i);
                    let minor = a(r0, c0) * a(r1, c1) - a(r0, c1) * a(r1, c0);
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    minor * r * sign
                }))
            }
            _ => self.gauss_jordan_inverse(),
        }
    }

    pub fn inverse(&self) -> Result<JetMatrix, MatrixError> {
        self.inverse_with_tol(SINGULARITY_TOL)
    }

    /// Solves `self · x = rhs` for a jet vector.
    pub fn solve(&self, rhs: &[Jet2]) -> Result<Vec<Jet2>, MatrixError> {
        let inv = self.inverse()?;
        Ok(inv.mul_vec(rhs))
    }

    pub fn mul_vec(&self, x: &[Jet2]) -> Vec<Jet2> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let mut acc = self[(i, 0)] * x[0];
                for j in 1..self.cols {
                    acc += self[(i, j)] * x[j];
                }
                acc
            })
            .collect()
    }

    /// Largest coefficient of `self - other` over every entry and jet slot.
    pub fn max_abs_diff(&self, other: &JetMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }

    fn require_square(&self) -> Result<(), MatrixError> {
        if self.rows != self.cols {
            return Err(MatrixError::Shape((self.rows, self.cols), (self.cols, self.rows)));
        }
        Ok(())
    }

    fn pivoted_elimination(&self) -> (Vec<Jet2>, Vec<usize>, f64) {
        let n = self.rows;
        let mut m = self.entries.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| m[x * n + k].value().abs().total_cmp(&m[y * n + k].value().abs()))
                .unwrap();
            if p != k {
                for c in 0..n {
                    m.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = m[k * n + k];
            for r in k + 1..n {
                let factor = m[r * n + k] / pivot;
                for c in k..n {
                    let sub = factor * m[k * n + c];
                    m[r * n + c] -= sub;
                }
            }
        }
        (m, perm, sign)
    }

    fn lu_det(&self) -> Result<Jet2, MatrixError> {
        let n = self.rows;
        let (m, _, sign) = self.pivoted_elimination();
        let mut det = Jet2::constant(m[0].dim(), sign);
        for k in 0..n {
            det = det * m[k * n + k];
        }
        Ok(det)
    }

    fn gauss_jordan_inverse(&self) -> Result<JetMatrix, MatrixError> {
        let n = self.rows;
        let dim = self.entries[0].dim();
        let mut a = self.entries.clone();
        let mut inv = JetMatrix::identity(n, dim).entries;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x * n + k].value().abs().total_cmp(&a[y * n + k].value().abs()))
                .unwrap();
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                    inv.swap(k * n + c, p * n + c);
                }
            }
            let r = a[k * n + k].recip()?;
            for c in 0..n {
                a[k * n + c] = a[k * n + c] * r;
                inv[k * n + c] = inv[k * n + c] * r;
            }
            for row in 0..n {
                if row == k {
                    continue;
                }
                let factor = a[row * n + k];
                for c in 0..n {
                    let sa = factor * a[k * n + c];
                    let si = factor * inv[k * n + c];
                    a[row * n + c] -= sa;
                    inv[row * n + c] -= si;
                }
            }
        }
        Ok(JetMatrix { rows: n, cols: n, entries: inv })
    }
}

fn others(k: usize) -> (usize, usize) {
    match k {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

impl Index<(usize, usize)> for JetMatrix {
    type Output = Jet2;
    fn index(&self, (i, j): (usize, usize)) -> &Jet2 {
        &self.entries[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for JetMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Jet2 {
        &mut self.entries[i * self.cols + j]
    }
}

impl Mul for &JetMatrix {
    type Output = JetMatrix;
    fn mul(self, rhs: &JetMatrix) -> JetMatrix {
        assert_eq!(self.cols, rhs.rows, "shape mismatch in jet matrix product");
        JetMatrix::from_fn(self.rows, rhs.cols, |i, j| {
            let mut acc = self[(i, 0)] * rhs[(0, j)];
            for k in 1..self.cols {
                acc += self[(i, k)] * rhs[(k, j)];
            }
            acc
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_inverts_to_identity() {
        for n in 1..=5 {
            let id = JetMatrix::identity(n, 2);
            let inv = id.inverse().unwrap();
            assert_eq!(inv.max_abs_diff(&id), 0.0);
        }
    }

    #[test]
    fn diagonal_reciprocal_jets() {
        let u = Jet2::variable(1, 0, 0.0);
        let g = JetMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => u + 1.0,
            (1, 1) => Jet2::constant(1, 2.0),
            _ => Jet2::zero(1),
        });
        let inv = g.inverse().unwrap();
        let d = inv[(0, 0)];
        assert_eq!((d.value(), d.d(0), d.dd(0, 0)), (1.0, -1.0, 2.0));
        assert_eq!(inv[(1, 1)].value(), 0.5);
        assert_eq!(inv[(0, 1)].max_abs(), 0.0);
    }

    #[test]
    fn singular_matrix_rejected() {
        let g = JetMatrix::from_fn(2, 2, |_, _| Jet2::constant(2, 1.0));
        assert!(matches!(g.inverse(), Err(MatrixError::SingularMatrix { .. })));
        let z = JetMatrix::from_fn(3, 3, |_, _| Jet2::zero(2));
        assert!(z.inverse().is_err());
    }

    #[test]
    fn lu_path_matches_cofactor_path() {
        let s = Jet2::seeds(&[0.3, -0.4]);
        let m = JetMatrix::from_fn(3, 3, |i, j| {
            let base = (s[0] * (i as f64 + 1.0)).sin() + (s[1] * (j as f64 - 0.5)).cos();
            if i == j { base + 3.0 } else { base }
        });
        let cof = m.inverse().unwrap();
        let lu = m.gauss_jordan_inverse().unwrap();
        assert!(cof.max_abs_diff(&lu) < 1e-12);
        assert!((m.det().unwrap().max_abs_diff(&m.lu_det().unwrap())) < 1e-12);
    }
}
