//! Network edges of a sparse covariance estimate and their bootstrap stability.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::compdata::{clr_transform, CompositionMatrix};
use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;
use crate::rng::child_rng;
use crate::threshold::ThresholdScale;
use crate::tuning::{estimate, pilot_covariance, EstimatorConfig};

pub const DEFAULT_REPLICATES: usize = 100;
pub const DEFAULT_RETAIN: usize = 50;

/// A nonzero off-diagonal entry of an estimate, `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub sign: i8,
    /// Covariance-scale weight.
    pub weight: f64,
    /// `w_ij / sqrt(w_ii w_jj)`; NaN when a variance is not positive.
    pub correlation: f64,
}

/// Edges with their bootstrap occurrence counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupportSet {
    pub edges: Vec<Edge>,
    pub occurrence: BTreeMap<(usize, usize), usize>,
}

impl SupportSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.i, e.j)).collect()
    }

    pub fn occurrences(&self, i: usize, j: usize) -> usize {
        self.occurrence.get(&(i, j)).copied().unwrap_or(0)
    }
}

/// All off-diagonal pairs with a nonzero estimate, in row-major order.
pub fn extract_edges(omega_hat: &SymmetricMatrix) -> SupportSet {
    let p = omega_hat.dim();
    let mut edges = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            let w = omega_hat.get(i, j);
            if w != 0.0 {
                let denom = (omega_hat.get(i, i) * omega_hat.get(j, j)).sqrt();
                edges.push(Edge {
                    i,
                    j,
                    sign: if w > 0.0 { 1 } else { -1 },
                    weight: w,
                    correlation: if denom > 0.0 { w / denom } else { f64::NAN },
                });
            }
        }
    }
    SupportSet {
        edges,
        occurrence: BTreeMap::new(),
    }
}

/// How bootstrap samples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resampling {
    /// `n` rows drawn with replacement.
    #[default]
    WithReplacement,
    /// Every replicate is the original data; a self-consistency hook.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub retain_threshold: usize,
    pub seed: u64,
    /// Reuse the baseline lambda instead of re-running cross-validation in
    /// every replicate.
    pub reuse_lambda: bool,
    pub resampling: Resampling,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_REPLICATES,
            retain_threshold: DEFAULT_RETAIN,
            seed: 0,
            reuse_lambda: false,
            resampling: Resampling::WithReplacement,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Edges of the full-data estimate, with occurrence counts.
    pub baseline: SupportSet,
    /// Baseline edges seen in at least `retain_threshold` replicates.
    pub stable: SupportSet,
    /// Mean over baseline edges of occurrences / replicates (0 with no edges).
    pub stability: f64,
    pub positives: usize,
    pub negatives: usize,
    /// Fraction of (edge, replicate) occurrences whose sign matches the baseline.
    pub sign_agreement: f64,
    pub baseline_lambda: f64,
    pub replicates: usize,
    pub retain_threshold: usize,
}

impl StabilityReport {
    /// Re-selects stable edges for a different retain threshold.
    pub fn with_retain_threshold(&self, retain: usize) -> StabilityReport {
        let stable = select_stable(&self.baseline, retain);
        let (positives, negatives) = sign_counts(&stable);
        StabilityReport {
            stable,
            positives,
            negatives,
            retain_threshold: retain,
            ..self.clone()
        }
    }
}

fn select_stable(baseline: &SupportSet, retain: usize) -> SupportSet {
    let edges: Vec<Edge> = baseline
        .edges
        .iter()
        .filter(|e| baseline.occurrences(e.i, e.j) >= retain)
        .copied()
        .collect();
    let occurrence = edges
        .iter()
        .map(|e| ((e.i, e.j), baseline.occurrences(e.i, e.j)))
        .collect();
    SupportSet { edges, occurrence }
}

fn sign_counts(set: &SupportSet) -> (usize, usize) {
    let pos = set.edges.iter().filter(|e| e.sign > 0).count();
    (pos, set.edges.len() - pos)
}

/// Bootstrap edge stability of the network estimated from `x`.
pub fn bootstrap_stability(
    x: &CompositionMatrix,
    config: &EstimatorConfig,
    options: &BootstrapOptions,
) -> Result<StabilityReport> {
    if options.replicates < 1 {
        return Err(Error::invalid("need at least one bootstrap replicate"));
    }
    if options.retain_threshold > options.replicates + 1 {
        return Err(Error::invalid(format!(
            "retain threshold {} exceeds replicates {}",
            options.retain_threshold, options.replicates
        )));
    }
    let base = estimate(x, config)?;
    let mut baseline = extract_edges(&base.omega_hat);
    let n = x.n();

    let signs: Vec<Vec<i8>> = (0..options.replicates)
        .into_par_iter()
        .map(|b| -> Result<Vec<i8>> {
            let sample = match options.resampling {
                Resampling::Identity => x.clone(),
                Resampling::WithReplacement => {
                    let mut rng = child_rng(options.seed, b as u64 + 1);
                    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    x.select_rows(&rows)
                }
            };
            let omega = if options.reuse_lambda {
                reestimate_at(&sample, config, base.lambda_star)?
            } else {
                estimate(&sample, config)?.omega_hat
            };
            Ok(baseline
                .edges
                .iter()
                .map(|e| {
                    let w = omega.get(e.i, e.j);
                    if w > 0.0 {
                        1
                    } else if w < 0.0 {
                        -1
                    } else {
                        0
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut agree = 0usize;
    let mut total = 0usize;
    for (k, e) in baseline.edges.iter().enumerate() {
        let mut count = 0;
        for rep in &signs {
            if rep[k] != 0 {
                count += 1;
                total += 1;
                agree += (rep[k] == e.sign) as usize;
            }
        }
        baseline.occurrence.insert((e.i, e.j), count);
    }
    let b = options.replicates as f64;
    let stability = if baseline.is_empty() {
        0.0
    } else {
        baseline
            .edges
            .iter()
            .map(|e| baseline.occurrences(e.i, e.j) as f64 / b)
            .sum::<f64>()
            / baseline.len() as f64
    };
    let stable = select_stable(&baseline, options.retain_threshold);
    let (positives, negatives) = sign_counts(&stable);
    Ok(StabilityReport {
        baseline,
        stable,
        stability,
        positives,
        negatives,
        sign_agreement: if total == 0 {
            1.0
        } else {
            agree as f64 / total as f64
        },
        baseline_lambda: base.lambda_star,
        replicates: options.replicates,
        retain_threshold: options.retain_threshold,
    })
}

fn reestimate_at(
    x: &CompositionMatrix,
    config: &EstimatorConfig,
    lambda: f64,
) -> Result<SymmetricMatrix> {
    let w = clr_transform(x);
    let (gamma, _) = pilot_covariance(w.values(), config)?;
    let scale = ThresholdScale::new(&gamma, x.n())?;
    Ok(scale.apply(&gamma, lambda, config.rule, config.threshold_diagonal))
}
