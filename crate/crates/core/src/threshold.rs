//! Generalized thresholding rules and entry-adaptive matrix thresholding.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;

/// Default SCAD concavity parameter.
pub const DEFAULT_SCAD_A: f64 = 3.7;

/// Diagonal entries of the pilot covariance below this are raised to it
/// before threshold scales are formed.
pub const DIAGONAL_FLOOR: f64 = 1e-12;

/// A shrinkage operator `tau_lambda(z)`.
///
/// Every variant satisfies `tau(z) = 0` for `|z| <= lambda`,
/// `|tau(z) - z| <= lambda` and `|tau(z)| <= |z|`. The stronger
/// `|tau(z)| <= |y|` whenever `|y - z| <= lambda` holds only for `Soft` (and
/// adaptive lasso with `eta = 1`, which coincides with it).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ThresholdRule {
    #[default]
    Soft,
    /// `z (1 - |lambda / z|^eta)_+`, `eta >= 1`.
    AdaptiveLasso { eta: f64 },
    /// Smoothly clipped absolute deviation with concavity `a > 2`.
    Scad { a: f64 },
}

impl ThresholdRule {
    pub fn adaptive_lasso(eta: f64) -> Result<Self> {
        if !(eta >= 1.0 && eta.is_finite()) {
            return Err(Error::invalid(format!(
                "adaptive lasso needs eta >= 1, got {eta}"
            )));
        }
        Ok(ThresholdRule::AdaptiveLasso { eta })
    }

    pub fn scad(a: f64) -> Result<Self> {
        if !(a > 2.0 && a.is_finite()) {
            return Err(Error::invalid(format!("SCAD needs a > 2, got {a}")));
        }
        Ok(ThresholdRule::Scad { a })
    }

    /// Applies the rule to a single value.
    pub fn apply(&self, z: f64, lambda: f64) -> f64 {
        let az = z.abs();
        match *self {
            ThresholdRule::Soft => soft(z, lambda),
            ThresholdRule::AdaptiveLasso { eta } => {
                if az <= lambda {
                    0.0
                } else {
                    z * (1.0 - (lambda / az).powf(eta)).max(0.0)
                }
            }
            ThresholdRule::Scad { a } => {
                if az <= 2.0 * lambda {
                    soft(z, lambda)
                } else if az <= a * lambda {
                    ((a - 1.0) * z - z.signum() * a * lambda) / (a - 2.0)
                } else {
                    z
                }
            }
        }
    }
}

#[inline]
fn soft(z: f64, lambda: f64) -> f64 {
    let s = z.abs() - lambda;
    if s > 0.0 {
        z.signum() * s
    } else {
        0.0
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdRule::Soft => write!(f, "soft"),
            ThresholdRule::AdaptiveLasso { eta } => write!(f, "alasso:{eta}"),
            ThresholdRule::Scad { a } => write!(f, "scad:{a}"),
        }
    }
}

impl FromStr for ThresholdRule {
    type Err = Error;

    /// Parses `soft`, `alasso:<eta>` or `scad[:<a>]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |a: &str| {
            a.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad rule parameter in `{s}`")))
        };
        match (name.to_ascii_lowercase().as_str(), arg) {
            ("soft", None) => Ok(ThresholdRule::Soft),
            ("alasso", Some(a)) => ThresholdRule::adaptive_lasso(num(a)?),
            ("scad", None) => ThresholdRule::scad(DEFAULT_SCAD_A),
            ("scad", Some(a)) => ThresholdRule::scad(num(a)?),
            _ => Err(Error::invalid(format!(
                "unknown rule `{s}`, expected soft | alasso:<eta> | scad:<a>"
            ))),
        }
    }
}

/// Per-entry threshold scales `sqrt(g_ii g_jj ln p / n)`; the threshold for
/// tuning constant `lambda` is `lambda * scale_ij`.
#[derive(Debug, Clone)]
pub struct ThresholdScale {
    scale: SymmetricMatrix,
    clamped: usize,
}

impl ThresholdScale {
    pub fn new(gamma: &SymmetricMatrix, n: usize) -> Result<Self> {
        let p = gamma.dim();
        if n < 2 || p < 2 {
            return Err(Error::invalid(format!(
                "threshold scales need n >= 2 and p >= 2, got n = {n}, p = {p}"
            )));
        }
        if !gamma.is_finite() {
            return Err(Error::invalid("covariance estimate has nonfinite entries"));
        }
        let mut clamped = 0;
        let diag: Vec<f64> = gamma
            .diagonal()
            .into_iter()
            .map(|d| {
                if d < DIAGONAL_FLOOR {
                    clamped += 1;
                    DIAGONAL_FLOOR
                } else {
                    d
                }
            })
            .collect();
        let rate = (p as f64).ln() / n as f64;
        let scale = SymmetricMatrix::from_fn(p, |i, j| (diag[i] * diag[j] * rate).sqrt());
        Ok(Self { scale, clamped })
    }

    /// Uses precomputed scales as is, without any diagonal clamping.
    pub fn from_matrix(scale: SymmetricMatrix) -> Self {
        Self { scale, clamped: 0 }
    }

    /// Number of diagonal entries raised to [`DIAGONAL_FLOOR`].
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scale.get(i, j)
    }

    pub fn thresholds(&self, lambda: f64) -> SymmetricMatrix {
        self.scale.scale(lambda)
    }

    /// Thresholds every off-diagonal entry of `gamma` (and the diagonal
    /// when `threshold_diagonal` is set).
    pub fn apply(
        &self,
        gamma: &SymmetricMatrix,
        lambda: f64,
        rule: ThresholdRule,
        threshold_diagonal: bool,
    ) -> SymmetricMatrix {
        SymmetricMatrix::from_fn(gamma.dim(), |i, j| {
            let z = gamma.get(i, j);
            if i == j && !threshold_diagonal {
                z
            } else {
                rule.apply(z, lambda * self.scale.get(i, j))
            }
        })
    }
}

/// Entry-dependent thresholds `lambda * sqrt(g_ii g_jj ln p / n)`.
pub fn entry_thresholds(gamma: &SymmetricMatrix, lambda: f64, n: usize) -> Result<SymmetricMatrix> {
    check_lambda(lambda)?;
    Ok(ThresholdScale::new(gamma, n)?.thresholds(lambda))
}

/// Adaptive thresholding of a pilot covariance estimate.
pub fn threshold_matrix(
    gamma: &SymmetricMatrix,
    lambda: f64,
    n: usize,
    rule: ThresholdRule,
    threshold_diagonal: bool,
) -> Result<SymmetricMatrix> {
    check_lambda(lambda)?;
    Ok(ThresholdScale::new(gamma, n)?.apply(gamma, lambda, rule, threshold_diagonal))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    Ok(())
}
