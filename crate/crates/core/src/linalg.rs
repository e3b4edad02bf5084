//! Dense LU factorization with partial pivoting over any [`Scalar`].

use std::ops::{Index, IndexMut};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("matrix is singular (pivot {column} vanished)")]
pub struct SingularMatrix {
    pub column: usize,
}

/// Row-major square or rectangular matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().cloned().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    /// Leading `n × n` principal block.
    pub fn leading_block(&self, n: usize) -> Self {
        let mut b = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] = self[(i, j)].clone();
            }
        }
        b
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect()
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// `PA = LU` with unit-diagonal `L` stored below the diagonal.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    factors: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &DenseMatrix<T>) -> Result<Self, SingularMatrix> {
        assert_eq!(a.rows(), a.cols(), "LU needs a square matrix");
        let n = a.rows();
        let mut m = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| {
                    m[(x, col)]
                        .abs()
                        .partial_cmp(&m[(y, col)].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .expect("non-empty pivot range");
            if m[(pivot, col)].is_negligible() {
                return Err(SingularMatrix { column: col });
            }
            if pivot != col {
                for j in 0..n {
                    let tmp = m[(col, j)].clone();
                    m[(col, j)] = m[(pivot, j)].clone();
                    m[(pivot, j)] = tmp;
                }
                perm.swap(col, pivot);
            }
            let p = m[(col, col)].clone();
            for i in col + 1..n {
                let factor = m[(i, col)].clone() / p.clone();
                if factor.is_zero() {
                    continue;
                }
                for j in col + 1..n {
                    let v = m[(i, j)].clone() - factor.clone() * m[(col, j)].clone();
                    m[(i, j)] = v;
                }
                m[(i, col)] = factor;
            }
        }
        Ok(Self { factors: m, perm })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.perm.len();
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p].clone()).collect();
        for i in 0..n {
            for j in 0..i {
                let v = y[i].clone() - self.factors[(i, j)].clone() * y[j].clone();
                y[i] = v;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let v = y[i].clone() - self.factors[(i, j)].clone() * y[j].clone();
                y[i] = v;
            }
            y[i] = y[i].clone() / self.factors[(i, i)].clone();
        }
        y
    }
}

pub fn solve<T: Scalar>(a: &DenseMatrix<T>, b: &[T]) -> Result<Vec<T>, SingularMatrix> {
    Ok(Lu::factor(a)?.solve(b))
}
