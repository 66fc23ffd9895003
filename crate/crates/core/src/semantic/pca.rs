//! Streaming PCA.
//!
//! Each `partial_fit` stacks the current scaled components, the centered new
//! batch and a mean-correction row, and takes a thin SVD of the stack. That
//! is the classic incremental update: exact when the data so far lies in the
//! tracked subspace, and a close approximation when the discarded spectrum is
//! small. Total variance is tracked separately (Chan's pairwise combination
//! of centered sums of squares) since only the leading eigenvalues are kept.

use nalgebra::{DMatrix, DVector};

use super::embed::Embedding;
use super::SemanticError;

/// Samples required before projections stop being provisional.
pub const PCA_WARMUP: u64 = 256;

#[derive(Debug, Clone)]
pub struct PcaState {
    dim: usize,
    n_components: usize,
    mean: DVector<f64>,
    /// Orthonormal rows, at most `n_components` of them.
    components: DMatrix<f64>,
    singular_values: Vec<f64>,
    samples_seen: u64,
    /// Sum over samples of the squared distance to the running mean.
    centered_ss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedEmbedding {
    pub vector: Vec<f64>,
    pub norm: f64,
    /// Set while the PCA is still warming up; the vector is then a plain
    /// coordinate truncation.
    pub provisional: bool,
}

impl ReducedEmbedding {
    pub fn new(vector: Vec<f64>, provisional: bool) -> Self {
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        ReducedEmbedding {
            vector,
            norm,
            provisional,
        }
    }
}

impl PcaState {
    pub fn new(dim: usize, n_components: usize) -> Self {
        assert!(n_components >= 1 && n_components <= dim);
        PcaState {
            dim,
            n_components,
            mean: DVector::zeros(dim),
            components: DMatrix::zeros(0, dim),
            singular_values: Vec::new(),
            samples_seen: 0,
            centered_ss: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    /// Per-component variance, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.samples_seen < 2 {
            return vec![0.0; self.singular_values.len()];
        }
        let denom = (self.samples_seen - 1) as f64;
        self.singular_values.iter().map(|s| s * s / denom).collect()
    }

    /// Sum of per-dimension sample variances.
    pub fn total_variance(&self) -> f64 {
        if self.samples_seen < 2 {
            return 0.0;
        }
        self.centered_ss / (self.samples_seen - 1) as f64
    }

    pub fn is_warm(&self) -> bool {
        self.samples_seen >= PCA_WARMUP
    }

    pub fn partial_fit(&mut self, batch: &[Embedding]) -> Result<(), SemanticError> {
        let rows: Vec<&[f64]> = batch.iter().map(|e| e.vector.as_slice()).collect();
        self.partial_fit_rows(&rows)
    }

    pub fn partial_fit_rows(&mut self, batch: &[&[f64]]) -> Result<(), SemanticError> {
        if batch.is_empty() {
            return Err(SemanticError::EmptyBatch);
        }
        if let Some(bad) = batch.iter().find(|r| r.len() != self.dim) {
            return Err(SemanticError::DimensionMismatch {
                expected: self.dim,
                got: bad.len(),
            });
        }
        let m = batch.len();
        let n = self.samples_seen as f64;
        let mf = m as f64;
        let total = n + mf;

        let mut batch_mean = DVector::<f64>::zeros(self.dim);
        for r in batch {
            for (acc, &x) in batch_mean.iter_mut().zip(r.iter()) {
                *acc += x;
            }
        }
        batch_mean /= mf;

        let prev_rows = self.components.nrows();
        let correction = self.samples_seen > 0;
        let stack_rows = prev_rows + m + usize::from(correction);
        let mut stack = DMatrix::<f64>::zeros(stack_rows, self.dim);
        for i in 0..prev_rows {
            let s = self.singular_values[i];
            for j in 0..self.dim {
                stack[(i, j)] = s * self.components[(i, j)];
            }
        }
        let mut batch_ss = 0.0;
        for (k, r) in batch.iter().enumerate() {
            for j in 0..self.dim {
                let v = r[j] - batch_mean[j];
                stack[(prev_rows + k, j)] = v;
                batch_ss += v * v;
            }
        }
        let mean_gap = &self.mean - &batch_mean;
        if correction {
            let scale = (n * mf / total).sqrt();
            for j in 0..self.dim {
                stack[(stack_rows - 1, j)] = scale * mean_gap[j];
            }
        }

        self.centered_ss += batch_ss + mean_gap.norm_squared() * n * mf / total;
        self.mean = (&self.mean * n + &batch_mean * mf) / total;
        self.samples_seen += m as u64;

        let (components, singular_values) = thin_svd_rows(stack, self.n_components);
        self.components = components;
        self.singular_values = singular_values;
        Ok(())
    }

    /// Projects `e`; before warmup returns the leading coordinates instead.
    pub fn transform(&self, e: &Embedding) -> ReducedEmbedding {
        self.transform_slice(&e.vector)
    }

    pub fn transform_slice(&self, e: &[f64]) -> ReducedEmbedding {
        if !self.is_warm() || self.components.nrows() < self.n_components {
            return ReducedEmbedding::new(e[..self.n_components].to_vec(), true);
        }
        let mut out = vec![0.0; self.n_components];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..self.dim {
                acc += self.components[(i, j)] * (e[j] - self.mean[j]);
            }
            *o = acc;
        }
        ReducedEmbedding::new(out, false)
    }

    /// Squared norm of the part of `e` the kept components do not explain,
    /// given its projection `r`. Zero for provisional projections.
    pub fn residual(&self, e: &Embedding, r: &ReducedEmbedding) -> f64 {
        if r.provisional {
            return 0.0;
        }
        let centered: f64 = e.vector.iter().zip(self.mean.iter()).map(|(x, m)| (x - m) * (x - m)).sum();
        let kept: f64 = r.vector.iter().map(|x| x * x).sum();
        (centered - kept).max(0.0)
    }

    /// Maps a reduced vector back into the embedding space.
    pub fn inverse_transform(&self, r: &ReducedEmbedding) -> Embedding {
        let mut vector: Vec<f64> = self.mean.iter().copied().collect();
        for (i, &c) in r.vector.iter().enumerate().take(self.components.nrows()) {
            for (j, v) in vector.iter_mut().enumerate() {
                *v += c * self.components[(i, j)];
            }
        }
        Embedding { vector }
    }

    /// Fraction of total variance captured by the first `d_prime` components.
    pub fn retained_variance(&self, d_prime: usize) -> Result<f64, SemanticError> {
        if self.samples_seen < 2 {
            return Err(SemanticError::InsufficientSamples(self.samples_seen));
        }
        let ev = self.eigenvalues();
        if d_prime == 0 || d_prime > ev.len() {
            return Err(SemanticError::ComponentOutOfRange {
                requested: d_prime,
                tracked: ev.len(),
            });
        }
        let total = self.total_variance();
        if total <= 0.0 {
            // A single repeated point: nothing to explain, nothing lost.
            return Ok(1.0);
        }
        Ok((ev[..d_prime].iter().sum::<f64>() / total).clamp(0.0, 1.0))
    }

    /// Max |G - I| over the Gram matrix of the component rows.
    pub fn orthonormality_error(&self) -> f64 {
        let g = &self.components * self.components.transpose();
        let mut worst: f64 = 0.0;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

/// Top-`k` right singular vectors (as rows) and singular values of `a`,
/// descending, with each row's sign fixed so its largest-magnitude entry is
/// positive.
fn thin_svd_rows(a: DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>) {
    let cols = a.ncols();
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let keep = k.min(order.len());
    let mut comps = DMatrix::<f64>::zeros(keep, cols);
    let mut values = Vec::with_capacity(keep);
    for (out, &src) in order.iter().take(keep).enumerate() {
        let row = v_t.row(src);
        let mut pivot = 0.0f64;
        for &x in row.iter() {
            if x.abs() > pivot.abs() {
                pivot = x;
            }
        }
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for j in 0..cols {
            comps[(out, j)] = sign * row[j];
        }
        values.push(svd.singular_values[src].max(0.0));
    }
    (comps, values)
}
