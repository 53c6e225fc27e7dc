//! Loss norms, support recovery statistics and eigenvalue utilities.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigenvalues;
use crate::matrix::SymmetricMatrix;

/// Matrix l1 norm of `a - b`: the largest absolute column sum.
pub fn matrix_l1_loss(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    let d = a.sub(b)?;
    let p = d.dim();
    Ok((0..p)
        .map(|j| (0..p).map(|i| d.get(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Spectral norm of `a - b` (largest absolute eigenvalue of the difference).
pub fn spectral_loss(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    let ev = symmetric_eigenvalues(&a.sub(b)?)?;
    Ok(ev.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// Frobenius norm of `a - b`.
pub fn frobenius_loss(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    Ok(squared_frobenius(a, b)?.sqrt())
}

pub(crate) fn squared_frobenius(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    a.check_same_dim(b)?;
    Ok(a.as_array()
        .iter()
        .zip(b.as_array().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// Elementwise max norm of `a - b`.
pub fn max_loss(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    Ok(a.sub(b)?.max_abs())
}

/// Smallest eigenvalue.
pub fn min_eigenvalue(a: &SymmetricMatrix) -> Result<f64> {
    Ok(symmetric_eigenvalues(a)?
        .first()
        .copied()
        .unwrap_or(f64::NAN))
}

/// Support recovery over the unordered off-diagonal pairs `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportMetrics {
    pub tpr: f64,
    pub fpr: f64,
    pub sign_consistent: bool,
    /// The truth has no nonzero off-diagonal pair; `tpr` is reported as 1.
    pub tpr_degenerate: bool,
    /// The truth has no zero off-diagonal pair; `fpr` is reported as 0.
    pub fpr_degenerate: bool,
}

fn sgn(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

pub fn support_metrics(
    estimate: &SymmetricMatrix,
    truth: &SymmetricMatrix,
    zero_tol: f64,
) -> Result<SupportMetrics> {
    estimate.check_same_dim(truth)?;
    if !(zero_tol >= 0.0) {
        return Err(Error::invalid(format!(
            "zero tolerance must be >= 0, got {zero_tol}"
        )));
    }
    let p = truth.dim();
    let (mut pos, mut tp, mut neg, mut fp) = (0usize, 0usize, 0usize, 0usize);
    let mut sign_consistent = true;
    for i in 0..p {
        for j in (i + 1)..p {
            let e = estimate.get(i, j);
            let t = truth.get(i, j);
            let hit = e.abs() > zero_tol;
            if t != 0.0 {
                pos += 1;
                tp += hit as usize;
            } else {
                neg += 1;
                fp += hit as usize;
            }
            let se = if hit { sgn(e) } else { 0 };
            if se != sgn(t) {
                sign_consistent = false;
            }
        }
    }
    Ok(SupportMetrics {
        tpr: if pos == 0 {
            1.0
        } else {
            tp as f64 / pos as f64
        },
        fpr: if neg == 0 {
            0.0
        } else {
            fp as f64 / neg as f64
        },
        sign_consistent,
        tpr_degenerate: pos == 0,
        fpr_degenerate: neg == 0,
    })
}

/// `G A G` with the centering matrix `G = I - 11^T / p`.
pub fn double_center(a: &SymmetricMatrix) -> SymmetricMatrix {
    let p = a.dim();
    let pf = p as f64;
    let row_mean: Vec<f64> = (0..p)
        .map(|i| (0..p).map(|j| a.get(i, j)).sum::<f64>() / pf)
        .collect();
    let grand = row_mean.iter().sum::<f64>() / pf;
    SymmetricMatrix::from_fn(p, |i, j| a.get(i, j) - row_mean[i] - row_mean[j] + grand)
}

/// Distance between a basis covariance and its clr proxy `G Omega G`,
/// together with the upper bound `3 ||Omega||_1 / p`.
pub fn clr_proxy_gap(omega: &SymmetricMatrix) -> (f64, f64) {
    let gamma = double_center(omega);
    let gap = omega.sub(&gamma).expect("same dimension").max_abs();
    let zero = SymmetricMatrix::zeros(omega.dim());
    let l1 = matrix_l1_loss(omega, &zero).expect("same dimension");
    (gap, 3.0 * l1 / omega.dim() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> SymmetricMatrix {
        SymmetricMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn loss_examples() {
        let z = SymmetricMatrix::zeros(2);
        let d = m(&[&[1.0, -2.0], &[-2.0, 0.0]]);
        assert_eq!(matrix_l1_loss(&d, &z).unwrap(), 3.0);
        assert_eq!(matrix_l1_loss(&d, &d).unwrap(), 0.0);
        let s = m(&[&[2.0, 1.0], &[1.0, 2.0]]);
        assert_abs_diff_eq!(spectral_loss(&s, &z).unwrap(), 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            frobenius_loss(&s, &z).unwrap(),
            10f64.sqrt(),
            epsilon = 1e-14
        );
        let ci = SymmetricMatrix::identity(5).scale(-2.5);
        assert_abs_diff_eq!(
            spectral_loss(&ci, &SymmetricMatrix::zeros(5)).unwrap(),
            2.5,
            epsilon = 1e-14
        );
        let u = [1.0, -2.0, 0.5];
        let outer = SymmetricMatrix::from_fn(3, |i, j| u[i] * u[j]);
        assert_abs_diff_eq!(
            frobenius_loss(&outer, &SymmetricMatrix::zeros(3)).unwrap(),
            5.25,
            epsilon = 1e-14
        );
        assert!(spectral_loss(&s, &SymmetricMatrix::zeros(3)).is_err());
    }

    #[test]
    fn min_eigenvalue_examples() {
        assert_abs_diff_eq!(
            min_eigenvalue(&SymmetricMatrix::identity(6)).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            min_eigenvalue(&m(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        assert_eq!(
            min_eigenvalue(&SymmetricMatrix::from_diagonal(&[4.0, -1.0])).unwrap(),
            -1.0
        );
    }

    #[test]
    fn support_examples() {
        let truth = m(&[&[1.0, 0.5, 0.0], &[0.5, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        let est = m(&[&[1.0, 0.3, 0.2], &[0.3, 1.0, 0.0], &[0.2, 0.0, 1.0]]);
        let s = support_metrics(&est, &truth, 0.0).unwrap();
        assert_eq!((s.tpr, s.fpr), (1.0, 0.5));
        assert!(!s.sign_consistent);

        let s = support_metrics(&truth, &truth, 0.0).unwrap();
        assert_eq!((s.tpr, s.fpr, s.sign_consistent), (1.0, 0.0, true));

        let dense = SymmetricMatrix::from_fn(3, |_, _| 1.0);
        let s = support_metrics(&dense, &truth, 0.0).unwrap();
        assert_eq!((s.tpr, s.fpr), (1.0, 1.0));

        let s = support_metrics(&truth, &SymmetricMatrix::identity(3), 0.0).unwrap();
        assert!(s.tpr_degenerate && s.tpr == 1.0);
        let s = support_metrics(&truth, &dense, 0.0).unwrap();
        assert!(s.fpr_degenerate && s.fpr == 0.0);
    }

    #[test]
    fn proxy_gap_examples() {
        let (gap, bound) = clr_proxy_gap(&SymmetricMatrix::identity(4));
        assert_abs_diff_eq!(gap, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(bound, 0.75, epsilon = 1e-15);

        let p = 7;
        let centered =
            SymmetricMatrix::from_fn(p, |i, j| 2.0 * ((i == j) as u8 as f64 - 1.0 / p as f64));
        let (gap, _) = clr_proxy_gap(&centered);
        assert!(gap < 1e-14);
    }

    fn sym(entries: &[f64]) -> SymmetricMatrix {
        SymmetricMatrix::from_fn(5, |i, j| entries[i * 5 + j])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn losses_are_metrics(
            a in prop::collection::vec(-3.0f64..3.0, 25),
            b in prop::collection::vec(-3.0f64..3.0, 25),
            c in prop::collection::vec(-3.0f64..3.0, 25),
        ) {
            let (a, b, c) = (sym(&a), sym(&b), sym(&c));
            type Loss = fn(&SymmetricMatrix, &SymmetricMatrix) -> Result<f64>;
            let losses: [Loss; 3] = [matrix_l1_loss, spectral_loss, frobenius_loss];
            for f in losses {
                let ab = f(&a, &b).unwrap();
                prop_assert!((ab - f(&b, &a).unwrap()).abs() <= 1e-12);
                prop_assert_eq!(f(&a, &a).unwrap(), 0.0);
                prop_assert!(ab + 1e-12 >= 0.0);
                prop_assert!(ab <= f(&a, &c).unwrap() + f(&c, &b).unwrap() + 1e-9);
            }
            prop_assert!(spectral_loss(&a, &b).unwrap() <= matrix_l1_loss(&a, &b).unwrap() + 1e-9);
        }
    }
}
