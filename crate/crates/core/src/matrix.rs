//! Dense symmetric matrices.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// A square real matrix whose `(i, j)` and `(j, i)` entries are always equal.
///
/// Every constructor either checks or enforces symmetry, and every mutator
/// writes both triangles, so downstream code can rely on exact equality.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: Array2<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(p: usize) -> Self {
        Self {
            data: Array2::zeros((p, p)),
        }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            data: Array2::eye(p),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[[i, i]] = d;
        }
        m
    }

    /// Wraps `data`, rejecting it unless it is square and exactly symmetric.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c {
            return Err(Error::invalid(format!(
                "matrix is {r}x{c}, expected square"
            )));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                let (a, b) = (data[[i, j]], data[[j, i]]);
                if a != b && !(a.is_nan() && b.is_nan()) {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { data })
    }

    /// Builds a symmetric matrix from the upper triangle of `data`.
    pub fn from_upper(data: ArrayView2<'_, f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c {
            return Err(Error::invalid(format!(
                "matrix is {r}x{c}, expected square"
            )));
        }
        Ok(Self::from_fn(r, |i, j| data[[i, j]]))
    }

    /// Builds a matrix by evaluating `f(i, j)` for `i <= j` and mirroring.
    pub fn from_fn(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Array2::zeros((p, p));
        for i in 0..p {
            for j in i..p {
                let v = f(i, j);
                data[[i, j]] = v;
                data[[j, i]] = v;
            }
        }
        Self { data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        let mut data = Array2::zeros((p, p));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::invalid(format!(
                    "row {i} has {} entries, expected {p}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                data[[i, j]] = v;
            }
        }
        Self::new(data)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[[i, j]]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[[i, j]] = v;
        self.data[[j, i]] = v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.data.diag().to_vec()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Entrywise difference `self - other`.
    pub fn sub(&self, other: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        self.check_same_dim(other)?;
        Ok(Self {
            data: &self.data - &other.data,
        })
    }

    pub fn scale(&self, c: f64) -> SymmetricMatrix {
        Self {
            data: &self.data * c,
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Returns the matrix with rows and columns reordered so that entry
    /// `(i, j)` of the result is entry `(perm[i], perm[j])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> SymmetricMatrix {
        Self::from_fn(self.dim(), |i, j| self.get(perm[i], perm[j]))
    }

    pub(crate) fn check_same_dim(&self, other: &SymmetricMatrix) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::invalid(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}
