//! Sparse assembly and direct solves shared by the cell and domain solvers.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Field over which systems are assembled: `f64` for the real cell
/// problems, `Complex64` for Helmholtz-type problems.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + faer::traits::ComplexField
{
    const ZERO: Self;
    fn from_f64(x: f64) -> Self;
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    const ZERO: Self = Complex64::new(0.0, 0.0);
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Accumulates `(row, col, value)` contributions in assembly order.
#[derive(Debug, Clone)]
pub struct TripletBuilder<T> {
    n: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> TripletBuilder<T> {
    pub fn new(n: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row, col, value));
    }

    pub fn extend(&mut self, other: TripletBuilder<T>) {
        self.entries.extend(other.entries);
    }

    /// Sorts column-major and sums duplicates. Duplicates are summed in
    /// insertion order, so the result does not depend on how a parallel
    /// assembly was scheduled as long as the per-worker chunks are merged in
    /// a fixed order.
    pub fn build(mut self) -> SparseMatrix<T> {
        self.entries.sort_by_key(|&(r, c, _)| (c, r));
        let mut merged: Vec<(usize, usize, T)> = Vec::with_capacity(self.entries.len());
        for (r, c, v) in self.entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        SparseMatrix {
            n: self.n,
            entries: merged,
        }
    }
}

/// Square sparse matrix stored as column-major sorted, duplicate-free triplets.
#[derive(Debug, Clone)]
pub struct SparseMatrix<T> {
    n: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, T)] {
        &self.entries
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::ZERO; self.n];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// Frobenius norm of `K - Kᵀ` (plain transpose, no conjugation).
    pub fn symmetry_defect(&self) -> f64 {
        let mut sorted_t: Vec<(usize, usize, T)> =
            self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect();
        sorted_t.sort_by_key(|&(r, c, _)| (c, r));
        let (a, b) = (&self.entries, &sorted_t);
        let (mut i, mut j) = (0, 0);
        let mut sum = 0.0;
        while i < a.len() || j < b.len() {
            let ka = a.get(i).map(|&(r, c, _)| (c, r));
            let kb = b.get(j).map(|&(r, c, _)| (c, r));
            let d = match (ka, kb) {
                (Some(x), Some(y)) if x == y => {
                    let d = a[i].2 - b[j].2;
                    i += 1;
                    j += 1;
                    d
                }
                (Some(x), Some(y)) if x < y => {
                    i += 1;
                    a[i - 1].2
                }
                (Some(_), None) => {
                    i += 1;
                    a[i - 1].2
                }
                _ => {
                    j += 1;
                    b[j - 1].2
                }
            };
            sum += d.modulus().powi(2);
        }
        sum.sqrt()
    }

    /// Direct sparse LU solve followed by a relative residual check.
    pub fn solve(&self, rhs: &[T], tolerance: f64) -> Result<Vec<T>> {
        assert_eq!(rhs.len(), self.n);
        if self.n == 0 {
            return Ok(Vec::new());
        }
        let triplets: Vec<Triplet<usize, usize, T>> = self
            .entries
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let a = SparseColMat::<usize, T>::try_new_from_triplets(self.n, self.n, &triplets)
            .map_err(|e| Error::Solver(format!("sparse matrix construction failed: {e:?}")))?;
        let lu = a
            .sp_lu()
            .map_err(|e| Error::Solver(format!("sparse LU factorization failed: {e:?}")))?;
        let mut b = Mat::<T>::from_fn(self.n, 1, |i, _| rhs[i]);
        lu.solve_in_place(b.as_mut());
        let x: Vec<T> = (0..self.n).map(|i| b[(i, 0)]).collect();
        let residual = self.relative_residual(&x, rhs);
        if residual.is_finite() && residual < tolerance {
            Ok(x)
        } else {
            Err(Error::Accuracy {
                residual,
                tolerance,
            })
        }
    }

    /// `‖K x − f‖ / ‖f‖` (absolute residual when `f = 0`).
    pub fn relative_residual(&self, x: &[T], rhs: &[T]) -> f64 {
        let kx = self.mul_vec(x);
        let num: f64 = kx
            .iter()
            .zip(rhs)
            .map(|(&a, &b)| (a - b).modulus().powi(2))
            .sum::<f64>()
            .sqrt();
        let den = norm(rhs);
        if den > 0.0 {
            num / den
        } else {
            num
        }
    }
}

pub fn norm<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.modulus().powi(2)).sum::<f64>().sqrt()
}
