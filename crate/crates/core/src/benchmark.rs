//! Monte Carlo benchmark over the synthetic cases.
//!
//! Each `(case, p, replication)` cell draws one latent sample from its own
//! child random stream, so cells can run on any thread in any order. All
//! estimators in a cell see the same data, which makes the per-replication
//! records paired comparisons. Summaries are reduced serially in cell
//! order, so results do not depend on the worker count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;
use crate::metrics::{frobenius_loss, matrix_l1_loss, spectral_loss, support_metrics};
use crate::rng::child_seed;
use crate::simgen::{basis_to_composition, build_omega0, sample_case, SimulationCase};
use crate::tuning::{estimate, estimate_from_samples, EstimatorConfig, EstimatorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchEstimator {
    Rcec,
    Coat,
    /// The RCEC threshold pipeline applied to the latent log-basis directly.
    Oracle,
}

impl fmt::Display for BenchEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchEstimator::Rcec => "rcec",
            BenchEstimator::Coat => "coat",
            BenchEstimator::Oracle => "oracle",
        })
    }
}

impl FromStr for BenchEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rcec" => Ok(BenchEstimator::Rcec),
            "coat" => Ok(BenchEstimator::Coat),
            "oracle" => Ok(BenchEstimator::Oracle),
            _ => Err(Error::invalid(format!("unknown estimator `{s}`"))),
        }
    }
}

/// Basis covariance used as the benchmark truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Structure {
    /// Banded block plus `4 I`.
    #[default]
    TwoBlock,
    /// Identity; no true edges.
    Diagonal,
}

impl Structure {
    pub fn omega0(&self, p: usize) -> Result<SymmetricMatrix> {
        match self {
            Structure::TwoBlock => build_omega0(p),
            Structure::Diagonal => {
                if p < 2 {
                    return Err(Error::invalid("p must be >= 2"));
                }
                Ok(SymmetricMatrix::identity(p))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub cases: Vec<u8>,
    pub n: usize,
    pub p_list: Vec<usize>,
    pub replications: usize,
    pub estimators: Vec<BenchEstimator>,
    pub seed: u64,
    pub structure: Structure,
    /// Settings shared by every estimator; `kind` and `seed` are set per cell.
    pub config: EstimatorConfig,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            cases: vec![1, 2, 3, 4],
            n: 100,
            p_list: vec![50, 100, 200],
            replications: 200,
            estimators: vec![
                BenchEstimator::Rcec,
                BenchEstimator::Coat,
                BenchEstimator::Oracle,
            ],
            seed: 0,
            structure: Structure::TwoBlock,
            config: EstimatorConfig::default(),
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::invalid("replications must be >= 1"));
        }
        if self.cases.is_empty() || self.p_list.is_empty() || self.estimators.is_empty() {
            return Err(Error::invalid(
                "cases, p values and estimators must be nonempty",
            ));
        }
        for &c in &self.cases {
            SimulationCase::numbered(c)?;
        }
        if self.structure == Structure::TwoBlock {
            if let Some(p) = self.p_list.iter().find(|p| **p % 2 != 0 || **p < 4) {
                return Err(Error::invalid(format!(
                    "p values must be even and >= 4, got {p}"
                )));
            }
        }
        self.config.validate()
    }
}

/// Scores of one estimator on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRecord {
    pub case: u8,
    pub p: usize,
    pub estimator: BenchEstimator,
    pub replication: usize,
    pub l1: f64,
    pub spectral: f64,
    pub frobenius: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub sign_consistent: bool,
    pub tpr_degenerate: bool,
    pub lambda_star: f64,
}

/// Mean and sample standard deviation of one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub case: u8,
    pub p: usize,
    pub estimator: BenchEstimator,
    pub metric: &'static str,
    pub mean: f64,
    pub sd: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResults {
    pub records: Vec<ReplicationRecord>,
    pub summary: Vec<SummaryRow>,
    /// `(case, p, estimator)` cells whose truth has no off-diagonal support.
    pub degenerate_tpr: Vec<(u8, usize, BenchEstimator)>,
}

pub const METRICS: [&str; 6] = [
    "l1",
    "spectral",
    "frobenius",
    "tpr",
    "fpr",
    "sign_consistent",
];

fn metric_value(r: &ReplicationRecord, metric: &str) -> f64 {
    match metric {
        "l1" => r.l1,
        "spectral" => r.spectral,
        "frobenius" => r.frobenius,
        "tpr" => r.tpr,
        "fpr" => r.fpr,
        "sign_consistent" => r.sign_consistent as u8 as f64,
        _ => unreachable!("unknown metric {metric}"),
    }
}

/// Random stream of one `(case, p, replication)` cell.
pub fn cell_seed(seed: u64, case: u8, p: usize, replication: usize) -> u64 {
    let stream = ((case as u64) << 56) ^ ((p as u64) << 32) ^ replication as u64;
    child_seed(seed, stream)
}

fn score(
    case: u8,
    p: usize,
    replication: usize,
    estimator: BenchEstimator,
    omega_hat: &SymmetricMatrix,
    omega0: &SymmetricMatrix,
    lambda_star: f64,
) -> Result<ReplicationRecord> {
    let support = support_metrics(omega_hat, omega0, 0.0)?;
    Ok(ReplicationRecord {
        case,
        p,
        estimator,
        replication,
        l1: matrix_l1_loss(omega_hat, omega0)?,
        spectral: spectral_loss(omega_hat, omega0)?,
        frobenius: frobenius_loss(omega_hat, omega0)?,
        tpr: support.tpr,
        fpr: support.fpr,
        sign_consistent: support.sign_consistent,
        tpr_degenerate: support.tpr_degenerate,
        lambda_star,
    })
}

fn run_cell(
    spec: &BenchmarkSpec,
    case: u8,
    p: usize,
    rep: usize,
) -> Result<Vec<ReplicationRecord>> {
    let omega0 = spec.structure.omega0(p)?;
    let seed = cell_seed(spec.seed, case, p, rep);
    let y = sample_case(SimulationCase::numbered(case)?, &omega0, spec.n, seed)?;
    let x = basis_to_composition(&y)?;
    let mut out = Vec::with_capacity(spec.estimators.len());
    for &est in &spec.estimators {
        let config = EstimatorConfig {
            kind: if est == BenchEstimator::Coat {
                EstimatorKind::Coat
            } else {
                EstimatorKind::Rcec
            },
            seed,
            ..spec.config.clone()
        };
        let result = match est {
            BenchEstimator::Oracle => estimate_from_samples(y.values(), &config)?,
            _ => estimate(&x, &config)?,
        };
        out.push(score(
            case,
            p,
            rep,
            est,
            &result.omega_hat,
            &omega0,
            result.lambda_star,
        )?);
    }
    Ok(out)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkResults> {
    spec.validate()?;
    let cells: Vec<(u8, usize, usize)> = spec
        .cases
        .iter()
        .flat_map(|&c| {
            spec.p_list
                .iter()
                .flat_map(move |&p| (0..spec.replications).map(move |r| (c, p, r)))
        })
        .collect();
    let per_cell: Vec<Vec<ReplicationRecord>> = cells
        .par_iter()
        .map(|&(c, p, r)| run_cell(spec, c, p, r))
        .collect::<Result<_>>()?;
    let records: Vec<ReplicationRecord> = per_cell.into_iter().flatten().collect();

    let mut summary = Vec::new();
    let mut degenerate_tpr = Vec::new();
    for &case in &spec.cases {
        for &p in &spec.p_list {
            for &est in &spec.estimators {
                let group: Vec<&ReplicationRecord> = records
                    .iter()
                    .filter(|r| r.case == case && r.p == p && r.estimator == est)
                    .collect();
                if group.iter().any(|r| r.tpr_degenerate) {
                    degenerate_tpr.push((case, p, est));
                }
                for metric in METRICS {
                    let vals: Vec<f64> = group.iter().map(|r| metric_value(r, metric)).collect();
                    let (mean, sd) = mean_sd(&vals);
                    summary.push(SummaryRow {
                        case,
                        p,
                        estimator: est,
                        metric,
                        mean,
                        sd,
                        replications: vals.len(),
                        seed: spec.seed,
                    });
                }
            }
        }
    }
    Ok(BenchmarkResults {
        records,
        summary,
        degenerate_tpr,
    })
}

impl BenchmarkResults {
    pub fn mean(&self, case: u8, p: usize, est: BenchEstimator, metric: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.case == case && r.p == p && r.estimator == est && r.metric == metric)
            .map(|r| r.mean)
    }

    pub fn records_for(&self, case: u8, p: usize, est: BenchEstimator) -> Vec<&ReplicationRecord> {
        self.records
            .iter()
            .filter(|r| r.case == case && r.p == p && r.estimator == est)
            .collect()
    }
}
