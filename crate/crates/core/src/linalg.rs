//! Small dense row-major matrices and an LU factorization with partial
//! pivoting. Model matrices here are at most a few dozen columns wide, so
//! nothing fancier is needed.

use std::fmt;
use std::ops::{Index, IndexMut};

/// Relative threshold below which a square model matrix is treated as singular:
/// `|det X| < SINGULAR_RTOL * max|x_ij|^p`.
pub const SINGULAR_RTOL: f64 = 1e-12;

/// A pivot smaller than `PIVOT_RTOL * max|x_ij|` also marks the matrix singular.
/// Large ±1 matrices of deficient rank can leave a determinant of order one
/// after round-off, which the determinant test alone lets through.
pub const PIVOT_RTOL: f64 = 1e-9;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally long rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn set_row(&mut self, i: usize, values: &[f64]) {
        self.row_mut(i).copy_from_slice(values);
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = rhs.row(k);
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// `X'X`.
    pub fn gram(&self) -> Matrix {
        self.transpose().matmul(self)
    }

    /// Column rank estimated from a pivoted elimination on a copy.
    pub fn rank(&self) -> usize {
        let mut a = self.clone();
        let tol = 1e-9 * self.max_abs().max(1.0);
        let mut rank = 0;
        for col in 0..a.cols {
            if rank == a.rows {
                break;
            }
            let (piv, val) = (rank..a.rows)
                .map(|r| (r, a[(r, col)].abs()))
                .fold((rank, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if val <= tol {
                continue;
            }
            a.swap_rows(piv, rank);
            for r in rank + 1..a.rows {
                let f = a[(r, col)] / a[(rank, col)];
                if f != 0.0 {
                    for c in col..a.cols {
                        let v = a[(rank, c)];
                        a[(r, c)] -= f * v;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{}", self.rows, self.cols)?;
        for r in self.rows_iter() {
            writeln!(f, "  {:?}", r)?;
        }
        Ok(())
    }
}

/// LU factorization `PA = LU` of a square matrix, unit lower triangle stored
/// below the diagonal.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Lu {
        assert!(a.is_square(), "LU needs a square matrix");
        let n = a.nrows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..n {
            let mut piv = k;
            let mut best = lu[(k, k)].abs();
            for r in k + 1..n {
                let v = lu[(r, k)].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 {
                singular = true;
                continue;
            }
            if piv != k {
                lu.swap_rows(piv, k);
                perm.swap(piv, k);
                sign = -sign;
            }
            let d = lu[(k, k)];
            for r in k + 1..n {
                let f = lu[(r, k)] / d;
                lu[(r, k)] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        let v = lu[(k, c)];
                        lu[(r, c)] -= f * v;
                    }
                }
            }
        }
        Lu {
            lu,
            perm,
            sign,
            singular,
        }
    }

    pub fn min_abs_pivot(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        (0..self.lu.nrows())
            .map(|i| self.lu[(i, i)].abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn det(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        let n = self.lu.nrows();
        (0..n).fold(self.sign, |acc, i| acc * self.lu[(i, i)])
    }

    /// Solves `A x = b`. Returns `None` if the matrix has an exactly zero pivot.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        if self.singular {
            return None;
        }
        let n = self.lu.nrows();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[(i, k)] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.lu[(i, k)] * x[k];
            }
            x[i] = s / self.lu[(i, i)];
        }
        Some(x)
    }

    pub fn inverse(&self) -> Option<Matrix> {
        let n = self.lu.nrows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Some(inv)
    }
}

pub fn det(a: &Matrix) -> f64 {
    Lu::factor(a).det()
}

/// `det(X)` for a square model matrix, with round-off-sized values snapped to 0.
pub fn thresholded_det(x: &Matrix) -> f64 {
    let lu = Lu::factor(x);
    let d = lu.det();
    let m = x.max_abs();
    let scale = m.powi(x.nrows() as i32);
    if d.abs() < SINGULAR_RTOL * scale || !d.is_finite() || lu.min_abs_pivot() < PIVOT_RTOL * m {
        0.0
    } else {
        d
    }
}
