//! Synthetic benchmark data: the two-block basis covariance and latent
//! samplers for Gaussian, Student t, skew-t and contaminated skew-t cases.
//!
//! Skew-t rows follow the Azzalini–Capitanio construction. With `omega`
//! the scale standard deviations and `R` the scale correlation matrix, a
//! skew-normal vector is drawn as `Z = H` if `U <= alpha' H` and `Z = -H`
//! otherwise, where `H ~ N(0, R)` and `U ~ N(0, 1)` are independent; the row
//! is then `omega * Z / sqrt(chi2_nu / nu)`.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Bernoulli, ChiSquared, Distribution, StandardNormal};

use crate::compdata::CompositionMatrix;
use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::matrix::SymmetricMatrix;
use crate::rng::root_rng;

/// Latent log-abundances `Y = log Z`, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    values: Array2<f64>,
}

impl BasisMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("basis matrix has nonfinite entries"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> ndarray::ArrayView2<'_, f64> {
        self.values.view()
    }
}

/// Latent distribution of a benchmark case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimulationCase {
    Gaussian,
    StudentT {
        nu: f64,
    },
    SkewT {
        nu: f64,
        alpha: f64,
    },
    /// Mixture `(1 - b) V1 + b V2` with `b ~ Bernoulli(contamination)`,
    /// `V1` skew-t and `V2 ~ N(shift * 1, I)`.
    ContaminatedSkewT {
        nu: f64,
        alpha: f64,
        contamination: f64,
        shift: f64,
    },
}

impl SimulationCase {
    /// The four benchmark cases, numbered 1 to 4.
    pub fn numbered(case: u8) -> Result<Self> {
        match case {
            1 => Ok(SimulationCase::Gaussian),
            2 => Ok(SimulationCase::StudentT { nu: 3.5 }),
            3 => Ok(SimulationCase::SkewT {
                nu: 4.0,
                alpha: 20.0,
            }),
            4 => Ok(SimulationCase::ContaminatedSkewT {
                nu: 4.0,
                alpha: 10.0,
                contamination: 0.05,
                shift: -8.0,
            }),
            _ => Err(Error::invalid(format!("case must be 1..=4, got {case}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SimulationCase::Gaussian => "gaussian",
            SimulationCase::StudentT { .. } => "student-t",
            SimulationCase::SkewT { .. } => "skew-t",
            SimulationCase::ContaminatedSkewT { .. } => "contaminated-skew-t",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        match *self {
            SimulationCase::Gaussian => Ok(()),
            SimulationCase::StudentT { nu } if !(nu > 2.0) => {
                bad(format!("t needs nu > 2, got {nu}"))
            }
            SimulationCase::SkewT { nu, .. } if !(nu > 0.0) => {
                bad(format!("nu must be positive, got {nu}"))
            }
            SimulationCase::ContaminatedSkewT {
                nu, contamination, ..
            } => {
                if !(nu > 0.0) {
                    bad(format!("nu must be positive, got {nu}"))
                } else if !(0.0..=1.0).contains(&contamination) {
                    bad(format!(
                        "contamination must lie in [0, 1], got {contamination}"
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Two-block basis covariance: a banded block `(1 - |i-j|/10)_+` of size
/// `p/2` followed by `4 I`.
pub fn build_omega0(p: usize) -> Result<SymmetricMatrix> {
    if p < 4 || !p.is_multiple_of(2) {
        return Err(Error::invalid(format!("p must be even and >= 4, got {p}")));
    }
    let h = p / 2;
    Ok(SymmetricMatrix::from_fn(p, |i, j| {
        if i < h && j < h {
            (1.0 - (j - i) as f64 / 10.0).max(0.0)
        } else if i >= h && j >= h && i == j {
            4.0
        } else {
            0.0
        }
    }))
}

/// Correlated Gaussian row `L g`.
fn gaussian_row(chol: &Array2<f64>, rng: &mut ChaCha20Rng, out: &mut [f64]) {
    let p = out.len();
    let g: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    for i in 0..p {
        out[i] = (0..=i).map(|k| chol[[i, k]] * g[k]).sum();
    }
}

struct SkewSampler {
    corr_chol: Array2<f64>,
    sd: Vec<f64>,
    alpha: f64,
    chi2: ChiSquared<f64>,
    nu: f64,
}

impl SkewSampler {
    fn new(omega0: &SymmetricMatrix, nu: f64, alpha: f64) -> Result<Self> {
        let sd: Vec<f64> = omega0.diagonal().iter().map(|v| v.sqrt()).collect();
        let corr =
            SymmetricMatrix::from_fn(omega0.dim(), |i, j| omega0.get(i, j) / (sd[i] * sd[j]));
        Ok(Self {
            corr_chol: cholesky(&corr)?,
            sd,
            alpha,
            chi2: ChiSquared::new(nu).map_err(|e| Error::invalid(e.to_string()))?,
            nu,
        })
    }

    fn row(&self, rng: &mut ChaCha20Rng, out: &mut [f64]) {
        gaussian_row(&self.corr_chol, rng, out);
        let u: f64 = rng.sample(StandardNormal);
        let proj: f64 = out.iter().sum::<f64>() * self.alpha;
        let flip = if u <= proj { 1.0 } else { -1.0 };
        let w = (self.chi2.sample(rng) / self.nu).sqrt();
        for (v, s) in out.iter_mut().zip(&self.sd) {
            *v = flip * s * *v / w;
        }
    }
}

/// Draws `n` i.i.d. latent rows for `case` with scale matrix `omega0`.
pub fn sample_case(
    case: SimulationCase,
    omega0: &SymmetricMatrix,
    n: usize,
    seed: u64,
) -> Result<BasisMatrix> {
    case.validate()?;
    let p = omega0.dim();
    let mut rng = root_rng(seed);
    let mut y = Array2::zeros((n, p));
    let mut row = vec![0.0; p];
    match case {
        SimulationCase::Gaussian => {
            let chol = cholesky(omega0)?;
            for k in 0..n {
                gaussian_row(&chol, &mut rng, &mut row);
                y.row_mut(k).assign(&Array1::from(row.clone()));
            }
        }
        SimulationCase::StudentT { nu } => {
            let chol = cholesky(omega0)?;
            let chi2 = ChiSquared::new(nu).map_err(|e| Error::invalid(e.to_string()))?;
            for k in 0..n {
                gaussian_row(&chol, &mut rng, &mut row);
                let w = (chi2.sample(&mut rng) / nu).sqrt();
                y.row_mut(k)
                    .assign(&Array1::from_iter(row.iter().map(|v| v / w)));
            }
        }
        SimulationCase::SkewT { nu, alpha } => {
            let s = SkewSampler::new(omega0, nu, alpha)?;
            for k in 0..n {
                s.row(&mut rng, &mut row);
                y.row_mut(k).assign(&Array1::from(row.clone()));
            }
        }
        SimulationCase::ContaminatedSkewT {
            nu,
            alpha,
            contamination,
            shift,
        } => {
            let s = SkewSampler::new(omega0, nu, alpha)?;
            let coin = Bernoulli::new(contamination).map_err(|e| Error::invalid(e.to_string()))?;
            for k in 0..n {
                if coin.sample(&mut rng) {
                    for v in row.iter_mut() {
                        *v = shift + rng.sample::<f64, _>(StandardNormal);
                    }
                } else {
                    s.row(&mut rng, &mut row);
                }
                y.row_mut(k).assign(&Array1::from(row.clone()));
            }
        }
    }
    BasisMatrix::new(y)
}

/// Closes `exp(Y)` row by row, shifting by the row maximum first.
pub fn basis_to_composition(y: &BasisMatrix) -> Result<CompositionMatrix> {
    let mut x = y.values.clone();
    for mut row in x.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    CompositionMatrix::new(x)
}
