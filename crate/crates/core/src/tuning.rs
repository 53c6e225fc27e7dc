//! Tuning-parameter selection and the end-to-end estimation pipelines.
//!
//! The pipeline is: clr transform, pilot covariance (median of means for
//! [`EstimatorKind::Rcec`], sample covariance for [`EstimatorKind::Coat`]),
//! a linear lambda grid, an optional positive-definiteness restriction of
//! the grid, V-fold cross-validation over the remaining grid, and a final
//! thresholded estimate on the full data at the selected lambda.
//!
//! Folds come from a seeded Fisher–Yates shuffle of the sample indices cut
//! into V contiguous chunks (sizes differ by at most one, larger first).
//! Inside each fold the training and held-out rows keep their original
//! order, so median-of-means blocks are contiguous in sample order.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::compdata::{clr_transform, CompositionMatrix};
use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;
use crate::metrics::{min_eigenvalue, squared_frobenius};
use crate::mom::{
    chunk_sizes, default_block_count, mom_covariance_with, regular_partition, sample_covariance,
    shuffled_partition,
};
use crate::rng::{child_seed, root_rng};
use crate::threshold::{ThresholdRule, ThresholdScale};

/// Minimum eigenvalue that counts as positive definite.
pub const PD_EPS: f64 = 1e-10;

/// Upper grid endpoint used when the pilot has no off-diagonal signal.
pub const DEGENERATE_GRID_END: f64 = f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorKind {
    /// Median-of-means pilot.
    #[default]
    Rcec,
    /// Sample-covariance pilot.
    Coat,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Rcec => "rcec",
            EstimatorKind::Coat => "coat",
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rcec" => Ok(EstimatorKind::Rcec),
            "coat" => Ok(EstimatorKind::Coat),
            _ => Err(Error::invalid(format!(
                "unknown estimator `{s}`, expected rcec | coat"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Block-count constant: `M = ceil((2 + L) ln p)`.
    pub block_constant: f64,
    /// Overrides the block count (still clamped to the sample count).
    pub block_count: Option<usize>,
    /// Partition a seeded permutation of the samples instead of sample order.
    pub shuffle_blocks: bool,
    pub rule: ThresholdRule,
    pub folds: usize,
    pub grid_size: usize,
    pub enforce_pd: bool,
    pub threshold_diagonal: bool,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Rcec,
            block_constant: 1.0,
            block_count: None,
            shuffle_blocks: false,
            rule: ThresholdRule::Soft,
            folds: 5,
            grid_size: 50,
            enforce_pd: true,
            threshold_diagonal: false,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        if self.grid_size < 2 {
            return Err(Error::invalid(format!(
                "grid size must be >= 2, got {}",
                self.grid_size
            )));
        }
        if !(self.block_constant > 0.0 && self.block_constant.is_finite()) {
            return Err(Error::invalid(format!(
                "L must be positive, got {}",
                self.block_constant
            )));
        }
        if self.block_count == Some(0) {
            return Err(Error::invalid("block count must be positive"));
        }
        Ok(())
    }

    /// Block count used for a sample of `n` rows with `p` columns.
    pub fn blocks_for(&self, n: usize, p: usize) -> usize {
        match self.kind {
            EstimatorKind::Coat => 1,
            EstimatorKind::Rcec => match self.block_count {
                Some(m) => m.clamp(1, n.max(1)),
                None => default_block_count(p, self.block_constant, n),
            },
        }
    }

    /// Flat `key = value` text, one setting per line.
    pub fn to_kv_string(&self) -> String {
        let blocks = self
            .block_count
            .map_or("auto".to_string(), |m| m.to_string());
        format!(
            "estimator = {}\nL = {}\nblocks = {}\nshuffle_blocks = {}\nrule = {}\nfolds = {}\n\
             grid_size = {}\nenforce_pd = {}\nthreshold_diagonal = {}\nseed = {}\n",
            self.kind,
            self.block_constant,
            blocks,
            self.shuffle_blocks,
            self.rule,
            self.folds,
            self.grid_size,
            self.enforce_pd,
            self.threshold_diagonal,
            self.seed
        )
    }

    /// Applies the settings in `text` on top of `self`. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn merge_kv_str(mut self, text: &str) -> Result<Self> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                line: lineno + 1,
                column: 1,
                message: msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || parse_err(format!("bad value `{value}` for `{key}`"));
            match key {
                "estimator" => self.kind = value.parse().map_err(|_| bad())?,
                "L" => self.block_constant = value.parse().map_err(|_| bad())?,
                "blocks" => {
                    self.block_count = match value {
                        "auto" => None,
                        v => Some(v.parse().map_err(|_| bad())?),
                    }
                }
                "shuffle_blocks" => self.shuffle_blocks = value.parse().map_err(|_| bad())?,
                "rule" => self.rule = value.parse().map_err(|_| bad())?,
                "folds" => self.folds = value.parse().map_err(|_| bad())?,
                "grid_size" => self.grid_size = value.parse().map_err(|_| bad())?,
                "enforce_pd" => self.enforce_pd = value.parse().map_err(|_| bad())?,
                "threshold_diagonal" => {
                    self.threshold_diagonal = value.parse().map_err(|_| bad())?
                }
                "seed" => self.seed = value.parse().map_err(|_| bad())?,
                other => return Err(parse_err(format!("unknown key `{other}`"))),
            }
        }
        Ok(self)
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        Self::default().merge_kv_str(text)
    }
}

/// Pilot covariance of the rows of `data` and the block count used.
pub fn pilot_covariance(
    data: ArrayView2<'_, f64>,
    config: &EstimatorConfig,
) -> Result<(SymmetricMatrix, usize)> {
    let (n, p) = data.dim();
    match config.kind {
        EstimatorKind::Coat => Ok((sample_covariance(data)?, 1)),
        EstimatorKind::Rcec => {
            let m = config.blocks_for(n, p);
            let partition = if config.shuffle_blocks {
                shuffled_partition(n, m, child_seed(config.seed, 1))?
            } else {
                regular_partition(n, m)?
            };
            Ok((mom_covariance_with(data, &partition)?, m))
        }
    }
}

fn lambda_max(gamma: &SymmetricMatrix, scale: &ThresholdScale) -> f64 {
    let p = gamma.dim();
    let mut best = 0.0_f64;
    for i in 0..p {
        for j in (i + 1)..p {
            let s = scale.get(i, j);
            if s > 0.0 {
                best = best.max(gamma.get(i, j).abs() / s);
            }
        }
    }
    best
}

fn linear_grid(end: f64, grid_size: usize) -> Vec<f64> {
    if end <= 0.0 || !end.is_finite() {
        return vec![0.0, DEGENERATE_GRID_END];
    }
    let step = end / (grid_size - 1) as f64;
    let mut grid: Vec<f64> = (0..grid_size).map(|k| k as f64 * step).collect();
    grid[grid_size - 1] = end;
    grid
}

/// `grid_size` values spaced linearly on `[0, lambda_max]`, where
/// `lambda_max` is the smallest lambda that soft-thresholds every
/// off-diagonal entry to zero. A pilot with no off-diagonal signal yields
/// the degenerate grid `[0, DEGENERATE_GRID_END]`.
pub fn lambda_grid(gamma: &SymmetricMatrix, n: usize, grid_size: usize) -> Result<Vec<f64>> {
    if grid_size < 2 {
        return Err(Error::invalid(format!(
            "grid size must be >= 2, got {grid_size}"
        )));
    }
    let scale = ThresholdScale::new(gamma, n)?;
    Ok(linear_grid(lambda_max(gamma, &scale), grid_size))
}

/// Held-out index sets for V-fold cross-validation, each sorted ascending.
pub fn make_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 || n < 2 * folds {
        return Err(Error::invalid(format!(
            "cross-validation needs n >= 2V, got n = {n}, V = {folds}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut root_rng(seed));
    let mut start = 0;
    Ok(chunk_sizes(n, folds)
        .into_iter()
        .map(|len| {
            let mut f = order[start..start + len].to_vec();
            start += len;
            f.sort_unstable();
            f
        })
        .collect())
}

/// Cross-validation outcome over a lambda grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub lambda_star: f64,
    /// `(lambda, mean squared Frobenius error)` for every grid value.
    pub curve: Vec<(f64, f64)>,
}

/// Selects lambda by V-fold cross-validation on a grid built from the
/// full-data pilot covariance.
pub fn cv_select(data: ArrayView2<'_, f64>, config: &EstimatorConfig) -> Result<CvOutcome> {
    config.validate()?;
    let (gamma, _) = pilot_covariance(data, config)?;
    let grid = lambda_grid(&gamma, data.nrows(), config.grid_size)?;
    cv_select_on_grid(data, config, &grid)
}

/// Cross-validation over an explicit grid. Ties go to the largest lambda.
pub fn cv_select_on_grid(
    data: ArrayView2<'_, f64>,
    config: &EstimatorConfig,
    grid: &[f64],
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::invalid("empty lambda grid"));
    }
    let n = data.nrows();
    let folds = make_folds(n, config.folds, config.seed)?;

    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|held_out| -> Result<Vec<f64>> {
            let mut in_fold = vec![false; n];
            held_out.iter().for_each(|&k| in_fold[k] = true);
            let train: Vec<usize> = (0..n).filter(|&k| !in_fold[k]).collect();
            let train_data = data.select(Axis(0), &train);
            let test_data = data.select(Axis(0), held_out);
            let (g_train, _) = pilot_covariance(train_data.view(), config)?;
            let (g_test, _) = pilot_covariance(test_data.view(), config)?;
            let scale = ThresholdScale::new(&g_train, train.len())?;
            grid.iter()
                .map(|&lambda| {
                    let est = scale.apply(&g_train, lambda, config.rule, config.threshold_diagonal);
                    squared_frobenius(&est, &g_test)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let v = folds.len() as f64;
    let curve: Vec<(f64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(g, &lambda)| (lambda, per_fold.iter().map(|f| f[g]).sum::<f64>() / v))
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for &(lambda, err) in &curve {
        if err.is_nan() {
            continue;
        }
        best = match best {
            Some((bl, be)) if err > be || (err == be && lambda < bl) => Some((bl, be)),
            _ => Some((lambda, err)),
        };
    }
    let (lambda_star, _) = best.ok_or_else(|| {
        Error::Numerical("cross-validation error is NaN on the whole grid".into())
    })?;
    Ok(CvOutcome { lambda_star, curve })
}

/// Grid restricted to lambdas whose full-data estimate is positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct PdRestriction {
    pub grid: Vec<f64>,
    /// Smallest qualifying grid value, if any.
    pub lambda_pd: Option<f64>,
    pub warnings: Vec<String>,
}

/// Keeps the suffix of `grid` starting at the smallest lambda whose full-data
/// estimate has minimum eigenvalue above [`PD_EPS`].
pub fn pd_floor(
    data: ArrayView2<'_, f64>,
    grid: &[f64],
    config: &EstimatorConfig,
) -> Result<PdRestriction> {
    let (gamma, _) = pilot_covariance(data, config)?;
    let scale = ThresholdScale::new(&gamma, data.nrows())?;
    pd_floor_with_scale(&gamma, &scale, grid, config.rule, config.threshold_diagonal)
}

/// [`pd_floor`] for a given pilot matrix and threshold scales.
pub fn pd_floor_with_scale(
    gamma: &SymmetricMatrix,
    scale: &ThresholdScale,
    grid: &[f64],
    rule: ThresholdRule,
    threshold_diagonal: bool,
) -> Result<PdRestriction> {
    let qualifies: Vec<bool> = grid
        .par_iter()
        .map(|&lambda| {
            let est = scale.apply(gamma, lambda, rule, threshold_diagonal);
            min_eigenvalue(&est).map(|ev| ev > PD_EPS)
        })
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    let Some(first) = qualifies.iter().position(|&q| q) else {
        warnings.push(format!(
            "no lambda in the grid gives a positive definite estimate (min eigenvalue <= {PD_EPS:e}); using the full grid"
        ));
        return Ok(PdRestriction {
            grid: grid.to_vec(),
            lambda_pd: None,
            warnings,
        });
    };
    let failures_after = qualifies[first..].iter().filter(|q| !**q).count();
    if failures_after > 0 {
        warnings.push(format!(
            "positive definiteness is not monotone in lambda: {failures_after} grid value(s) above {} fail",
            grid[first]
        ));
    }
    Ok(PdRestriction {
        grid: grid[first..].to_vec(),
        lambda_pd: Some(grid[first]),
        warnings,
    })
}

/// Everything produced by one estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub omega_hat: SymmetricMatrix,
    pub gamma_hat: SymmetricMatrix,
    pub lambda_star: f64,
    pub cv_curve: Vec<(f64, f64)>,
    pub min_eigenvalue: f64,
    /// Grid before positive-definiteness restriction.
    pub grid: Vec<f64>,
    pub lambda_pd: Option<f64>,
    pub block_count: usize,
    pub warnings: Vec<String>,
}

/// Full pipeline on a composition.
pub fn estimate(x: &CompositionMatrix, config: &EstimatorConfig) -> Result<EstimateResult> {
    let w = clr_transform(x);
    estimate_from_samples(w.values(), config)
}

/// Pipeline on an arbitrary sample matrix (clr coordinates, or observed
/// log-basis values for the oracle benchmark).
pub fn estimate_from_samples(
    data: ArrayView2<'_, f64>,
    config: &EstimatorConfig,
) -> Result<EstimateResult> {
    config.validate()?;
    let n = data.nrows();
    if n < 2 * config.folds {
        return Err(Error::invalid(format!(
            "need at least 2V = {} samples, got {n}",
            2 * config.folds
        )));
    }
    let mut warnings = Vec::new();
    let (gamma, block_count) = pilot_covariance(data, config)?;
    let scale = ThresholdScale::new(&gamma, n)?;
    if scale.clamped() > 0 {
        warnings.push(format!(
            "{} nonpositive pilot variance(s) clamped to {:e} for threshold scales",
            scale.clamped(),
            crate::threshold::DIAGONAL_FLOOR
        ));
    }
    let grid = linear_grid(lambda_max(&gamma, &scale), config.grid_size);

    let (cv_grid, lambda_pd) = if config.enforce_pd {
        let pd = pd_floor_with_scale(
            &gamma,
            &scale,
            &grid,
            config.rule,
            config.threshold_diagonal,
        )?;
        warnings.extend(pd.warnings);
        (pd.grid, pd.lambda_pd)
    } else {
        (grid.clone(), None)
    };

    let cv = cv_select_on_grid(data, config, &cv_grid)?;
    let omega_hat = scale.apply(
        &gamma,
        cv.lambda_star,
        config.rule,
        config.threshold_diagonal,
    );
    let min_eigenvalue = min_eigenvalue(&omega_hat)?;
    Ok(EstimateResult {
        omega_hat,
        gamma_hat: gamma,
        lambda_star: cv.lambda_star,
        cv_curve: cv.curve,
        min_eigenvalue,
        grid,
        lambda_pd,
        block_count,
        warnings,
    })
}
