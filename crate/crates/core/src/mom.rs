//! Median-of-means covariance estimation.
//!
//! Samples are split into `M` blocks of nearly equal size. Each first and
//! second moment is estimated by the median of its within-block means, and
//! the covariance entry is `mu_ij - mu_i * mu_j`. With `M = 1` this is the
//! plain (divisor `n`) sample covariance.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::matrix::SymmetricMatrix;

/// A partition of `0..n` into disjoint blocks whose sizes differ from `n / M`
/// by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionScheme {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl PartitionScheme {
    /// Validates an explicit block layout.
    pub fn from_blocks(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("partition has no blocks"));
        }
        let m = blocks.len();
        let lo = n / m;
        let hi = lo + usize::from(!n.is_multiple_of(m));
        let mut seen = vec![false; n];
        for b in &blocks {
            if b.is_empty() || b.len() < lo || b.len() > hi {
                return Err(Error::invalid(format!(
                    "block of size {} is irregular for n = {n}, M = {m}",
                    b.len()
                )));
            }
            for &k in b {
                if k >= n || seen[k] {
                    return Err(Error::invalid(format!(
                        "index {k} out of range or repeated"
                    )));
                }
                seen[k] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("blocks do not cover every sample"));
        }
        Ok(Self { n, blocks })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }
}

/// Sizes of `m` contiguous chunks of `n` items, larger chunks first.
pub(crate) fn chunk_sizes(n: usize, m: usize) -> Vec<usize> {
    let (q, r) = (n / m, n % m);
    (0..m).map(|b| if b < r { q + 1 } else { q }).collect()
}

fn chunk(order: &[usize], m: usize) -> Vec<Vec<usize>> {
    let mut start = 0;
    chunk_sizes(order.len(), m)
        .into_iter()
        .map(|len| {
            let b = order[start..start + len].to_vec();
            start += len;
            b
        })
        .collect()
}

/// Contiguous regular partition of `0..n` into `m` blocks; the first
/// `n mod m` blocks hold one extra sample.
pub fn regular_partition(n: usize, m: usize) -> Result<PartitionScheme> {
    if m < 1 || m > n {
        return Err(Error::invalid(format!(
            "block count must satisfy 1 <= M <= n, got M = {m}, n = {n}"
        )));
    }
    let order: Vec<usize> = (0..n).collect();
    Ok(PartitionScheme {
        n,
        blocks: chunk(&order, m),
    })
}

/// Like [`regular_partition`] but over a seeded random permutation of the samples.
pub fn shuffled_partition(n: usize, m: usize, seed: u64) -> Result<PartitionScheme> {
    if m < 1 || m > n {
        return Err(Error::invalid(format!(
            "block count must satisfy 1 <= M <= n, got M = {m}, n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    Ok(PartitionScheme {
        n,
        blocks: chunk(&order, m),
    })
}

/// Median of a nonempty slice; even lengths give the midpoint of the two
/// central order statistics. Reorders `values`.
pub(crate) fn median_in_place(values: &mut [f64]) -> f64 {
    let len = values.len();
    values.sort_unstable_by(f64::total_cmp);
    if len % 2 == 1 {
        values[len / 2]
    } else {
        0.5 * (values[len / 2 - 1] + values[len / 2])
    }
}

/// Median over blocks of the within-block arithmetic means.
pub fn median_of_means(values: &[f64], partition: &PartitionScheme) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("median of means of an empty sample"));
    }
    if values.len() != partition.n {
        return Err(Error::invalid(format!(
            "partition covers {} samples but {} values were given",
            partition.n,
            values.len()
        )));
    }
    let mut means: Vec<f64> = partition
        .blocks
        .iter()
        .map(|b| b.iter().map(|&k| values[k]).sum::<f64>() / b.len() as f64)
        .collect();
    Ok(median_in_place(&mut means))
}

/// Median-of-means covariance of the rows of `w` using `m` contiguous blocks.
pub fn mom_covariance(w: ArrayView2<'_, f64>, m: usize) -> Result<SymmetricMatrix> {
    let partition = regular_partition(w.nrows(), m)?;
    mom_covariance_with(w, &partition)
}

/// Median-of-means covariance of the rows of `w` under an explicit partition.
pub fn mom_covariance_with(
    w: ArrayView2<'_, f64>,
    partition: &PartitionScheme,
) -> Result<SymmetricMatrix> {
    let (n, p) = w.dim();
    if n != partition.n {
        return Err(Error::invalid(format!(
            "partition covers {} samples but data has {n}",
            partition.n
        )));
    }
    let m = partition.block_count();
    let tri = p * (p + 1) / 2;
    // block_first[b * p + i], block_second[b * tri + upper(i, j)]
    let mut block_first = vec![0.0; m * p];
    let mut block_second = vec![0.0; m * tri];
    for (b, block) in partition.blocks.iter().enumerate() {
        let first = &mut block_first[b * p..(b + 1) * p];
        let second = &mut block_second[b * tri..(b + 1) * tri];
        for &k in block {
            let row = w.row(k);
            let mut idx = 0;
            for i in 0..p {
                let wi = row[i];
                first[i] += wi;
                for j in i..p {
                    second[idx] += wi * row[j];
                    idx += 1;
                }
            }
        }
        let d = block.len() as f64;
        first.iter_mut().for_each(|v| *v /= d);
        second.iter_mut().for_each(|v| *v /= d);
    }

    let mut buf = vec![0.0; m];
    let mu: Vec<f64> = (0..p)
        .map(|i| {
            for b in 0..m {
                buf[b] = block_first[b * p + i];
            }
            median_in_place(&mut buf)
        })
        .collect();

    let mut out = SymmetricMatrix::zeros(p);
    let mut idx = 0;
    for i in 0..p {
        for j in i..p {
            for b in 0..m {
                buf[b] = block_second[b * tri + idx];
            }
            out.set(i, j, median_in_place(&mut buf) - mu[i] * mu[j]);
            idx += 1;
        }
    }
    Ok(out)
}

/// Sample covariance with divisor `n`: `(1/n) sum_k w_ki w_kj - mean_i mean_j`.
pub fn sample_covariance(w: ArrayView2<'_, f64>) -> Result<SymmetricMatrix> {
    let (n, p) = w.dim();
    if n < 2 {
        return Err(Error::invalid(format!(
            "sample covariance needs at least 2 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let mut mean = vec![0.0; p];
    let mut cross = vec![vec![0.0; p]; p];
    for row in w.rows() {
        for i in 0..p {
            let wi = row[i];
            mean[i] += wi;
            for j in i..p {
                cross[i][j] += wi * row[j];
            }
        }
    }
    mean.iter_mut().for_each(|v| *v /= nf);
    Ok(SymmetricMatrix::from_fn(p, |i, j| {
        cross[i][j] / nf - mean[i] * mean[j]
    }))
}

/// Block count `ceil((2 + L) ln p)`, clamped to `[1, n_cap]`.
pub fn default_block_count(p: usize, l: f64, n_cap: usize) -> usize {
    let raw = ((2.0 + l) * (p as f64).ln()).ceil();
    let m = if raw.is_finite() && raw >= 1.0 {
        raw as usize
    } else {
        1
    };
    m.min(n_cap).max(1)
}
