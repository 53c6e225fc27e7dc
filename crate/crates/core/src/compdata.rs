//! Compositional data: count closure, the centered log-ratio transform and
//! the variation matrix.
//!
//! All logarithms are natural logarithms. Geometric means are taken in log
//! space so that wide rows (large `p`) never underflow.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;

/// Absolute tolerance on the row sums of a composition.
pub const ROW_SUM_TOL: f64 = 1e-10;

/// Zero replacement applied to raw counts before closure.
pub const DEFAULT_ZERO_REPLACEMENT: f64 = 0.5;

/// Nonnegative read counts, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    values: Array2<f64>,
}

impl CountMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        for (k, row) in values.axis_iter(Axis(0)).enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::data(format!(
                    "count at sample {k}, component {j} is negative or not finite"
                )));
            }
            if row.iter().all(|&v| v == 0.0) {
                return Err(Error::data(format!("sample {k} has no positive count")));
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }
}

/// Strictly positive proportions whose rows sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionMatrix {
    values: Array2<f64>,
}

impl CompositionMatrix {
    /// Validates `values` without renormalizing it.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, p) = values.dim();
        if n < 2 || p < 2 {
            return Err(Error::data(format!(
                "composition needs at least 2 samples and 2 components, got {n}x{p}"
            )));
        }
        for (k, row) in values.axis_iter(Axis(0)).enumerate() {
            if let Some(j) = row.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::data(format!(
                    "proportion at sample {k}, component {j} is not strictly positive ({})",
                    row[j]
                )));
            }
            let s: f64 = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::data(format!(
                    "sample {k} sums to {s}, expected 1 within {ROW_SUM_TOL:e}"
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Builds a new composition from a subset of rows (duplicates allowed).
    pub fn select_rows(&self, rows: &[usize]) -> CompositionMatrix {
        CompositionMatrix {
            values: self.values.select(Axis(0), rows),
        }
    }
}

/// Centered log-ratio coordinates; every row sums to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ClrMatrix {
    values: Array2<f64>,
}

impl ClrMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Replaces zero counts by `zero_replacement` and closes every row to sum one.
pub fn close_counts(counts: &CountMatrix, zero_replacement: f64) -> Result<CompositionMatrix> {
    if !(zero_replacement.is_finite() && zero_replacement > 0.0) {
        return Err(Error::invalid(format!(
            "zero replacement must be positive, got {zero_replacement}"
        )));
    }
    let mut values = counts
        .values
        .mapv(|c| if c == 0.0 { zero_replacement } else { c });
    for mut row in values.axis_iter_mut(Axis(0)) {
        let s: f64 = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    CompositionMatrix::new(values)
}

/// `W_kj = ln X_kj - mean_i ln X_ki`.
pub fn clr_transform(x: &CompositionMatrix) -> ClrMatrix {
    ClrMatrix {
        values: clr_rows(x.values.view()),
    }
}

fn clr_rows(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut w = x.mapv(f64::ln);
    let p = w.ncols() as f64;
    for mut row in w.axis_iter_mut(Axis(0)) {
        let log_gm = row.sum() / p;
        row.mapv_inplace(|v| v - log_gm);
    }
    w
}

/// Variation matrix `t_ij = w_ii + w_jj - 2 w_ij` of a covariance matrix.
pub fn variation_from_cov(omega: &SymmetricMatrix) -> SymmetricMatrix {
    SymmetricMatrix::from_fn(omega.dim(), |i, j| {
        if i == j {
            0.0
        } else {
            omega.get(i, i) + omega.get(j, j) - 2.0 * omega.get(i, j)
        }
    })
}
