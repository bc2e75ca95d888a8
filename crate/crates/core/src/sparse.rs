//! Compressed sparse row storage and a minimal linear-operator interface.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Rows per rayon task in matrix-vector products.
const ROW_CHUNK: usize = 2048;

/// Something that can be applied to a vector.
pub trait LinearOperator<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`.
    fn apply(&self, x: &[T], y: &mut [T]);

    /// Upper bound on the induced 1-norm (or a cheap estimate of it).
    fn norm1(&self) -> T;
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); n])
    }

    pub fn from_diagonal(d: &[T]) -> Self {
        let n = d.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n as u32).collect(),
            values: d.to_vec(),
        }
    }

    /// Builds from per-row `(column, value)` lists. Columns are sorted and duplicates summed;
    /// exact zeros produced by merging are kept so the pattern does not depend on cancellation.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        if ncols > u32::MAX as usize {
            return Err(invalid("matrix too large for 32-bit column indices"));
        }
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let total: usize = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(total);
        let mut values = Vec::with_capacity(total);
        for mut row in rows {
            row.sort_unstable_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if c >= ncols {
                    return Err(invalid(format!("column {c} out of range {ncols}")));
                }
                if last == Some(c) {
                    *values.last_mut().unwrap() = *values.last().unwrap() + v;
                } else {
                    indices.push(c as u32);
                    values.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        let lists = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != T::zero())
                    .map(|(j, v)| (j, *v))
                    .collect()
            })
            .collect();
        Self::from_rows(ncols, lists)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .zip(&self.values[r])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map_or(T::zero(), |(_, v)| v)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn is_zero_row(&self, i: usize) -> bool {
        self.row(i).all(|(_, v)| v == T::zero())
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = row[j] + v;
            }
        }
        d
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols, "matvec input length");
        assert_eq!(y.len(), self.nrows, "matvec output length");
        let row_dot = |i: usize| {
            let mut acc = T::zero();
            for k in self.indptr[i]..self.indptr[i + 1] {
                acc = acc + self.values[k] * x[self.indices[k] as usize];
            }
            acc
        };
        if self.nrows < 4 * ROW_CHUNK {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row_dot(i);
            }
        } else {
            y.par_chunks_mut(ROW_CHUNK)
                .enumerate()
                .for_each(|(c, chunk)| {
                    let base = c * ROW_CHUNK;
                    for (k, yi) in chunk.iter_mut().enumerate() {
                        *yi = row_dot(base + k);
                    }
                });
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// Scales every entry by `a`.
    pub fn scale(&mut self, a: T) {
        self.values.iter_mut().for_each(|v| *v = *v * a);
    }

    /// Zeroes the listed rows, keeping them in the pattern-free (empty) state.
    pub fn zero_rows(&self, rows: &[bool]) -> Self {
        assert_eq!(rows.len(), self.nrows);
        let lists = (0..self.nrows)
            .map(|i| if rows[i] { Vec::new() } else { self.row(i).collect() })
            .collect();
        Self::from_rows(self.ncols, lists).expect("same shape")
    }

    /// `a * self + b * other`.
    pub fn linear_combination(&self, a: T, other: &Self, b: T) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(invalid("matrix shapes differ"));
        }
        let lists = (0..self.nrows)
            .map(|i| {
                self.row(i)
                    .map(|(j, v)| (j, a * v))
                    .chain(other.row(i).map(|(j, v)| (j, b * v)))
                    .collect()
            })
            .collect();
        Self::from_rows(self.ncols, lists)
    }

    pub fn transpose(&self) -> Self {
        let mut lists = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                lists[j].push((i, v));
            }
        }
        Self::from_rows(self.nrows, lists).expect("same shape")
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> T {
        let mut col = vec![T::zero(); self.ncols];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            col[j as usize] = col[j as usize] + v.abs();
        }
        col.into_iter().fold(T::zero(), T::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.nrows)
            .map(|i| self.row(i).fold(T::zero(), |a, (_, v)| a + v.abs()))
            .fold(T::zero(), T::max)
    }

    /// Writes `row col value` lines (0-based) preceded by a `nrows ncols nnz` header.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                writeln!(w, "{i} {j} {v:e}")?;
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

impl<T: Scalar> LinearOperator<T> for CsrMatrix<T> {
    fn dim(&self) -> usize {
        self.nrows
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        self.matvec(x, y)
    }

    fn norm1(&self) -> T {
        CsrMatrix::norm1(self)
    }
}

/// `scale * A`, applied without copying `A`.
pub struct Scaled<'a, T, A: ?Sized> {
    pub inner: &'a A,
    pub scale: T,
}

impl<T: Scalar, A: LinearOperator<T> + ?Sized> LinearOperator<T> for Scaled<'_, T, A> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        self.inner.apply(x, y);
        y.iter_mut().for_each(|v| *v = *v * self.scale);
    }

    fn norm1(&self) -> T {
        self.scale.abs() * self.inner.norm1()
    }
}
