//! Streaming variance estimation and ridge regression.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue threshold below which a symmetric system is singular.
pub const SINGULAR_RTOL: f64 = 1e-12;

/// Count, mean and sum of squared deviations of a stream (Welford update).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Self::new();
        xs.iter().for_each(|&x| m.push(x));
        m
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Value-returning form of [`push`](Self::push).
    pub fn updated(mut self, x: f64) -> Self {
        self.push(x);
        self
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Unbiased sample variance `m2 / (n - 1)`.
    pub fn sample_variance(&self) -> Result<f64> {
        if self.n < 2 {
            return Err(Error::InsufficientData { needed: 2, got: self.n });
        }
        Ok(self.m2 / (self.n - 1) as f64)
    }
}

/// Sufficient statistics and full history of one arm's ridge regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeState {
    dim: usize,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    contexts: Vec<f64>,
    rewards: Vec<f64>,
}

impl RidgeState {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            gram: DMatrix::zeros(dim, dim),
            xty: DVector::zeros(dim),
            contexts: Vec::new(),
            rewards: Vec::new(),
        }
    }

    pub fn update(&mut self, context: &[f64], reward: f64) -> Result<()> {
        if context.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: context.len() });
        }
        for i in 0..self.dim {
            self.xty[i] += context[i] * reward;
            for j in 0..self.dim {
                self.gram[(i, j)] += context[i] * context[j];
            }
        }
        self.contexts.extend_from_slice(context);
        self.rewards.push(reward);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.rewards.len()
    }

    /// Unregularised Gram matrix `sum c c^T`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn xty(&self) -> &DVector<f64> {
        &self.xty
    }

    /// Observed `(context, reward)` pairs in arrival order.
    pub fn history(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.contexts.chunks_exact(self.dim.max(1)).zip(self.rewards.iter().copied())
    }

    /// Ridge estimate `(gamma I + gram)^{-1} xty`.
    pub fn estimate(&self, gamma: f64) -> Result<Vec<f64>> {
        let eig = decompose(regularised(&self.gram, gamma))?;
        let proj = eig.eigenvectors.transpose() * &self.xty;
        let scaled = DVector::from_iterator(
            self.dim,
            proj.iter().zip(eig.eigenvalues.iter()).map(|(p, l)| p / l),
        );
        Ok((&eig.eigenvectors * scaled).iter().copied().collect())
    }

    /// Sample variance of the residuals `X - beta_hat . c` over the whole
    /// history, recentred by their mean and divided by `n - 1`.
    pub fn residual_variance(&self, beta_hat: &[f64]) -> Result<f64> {
        if beta_hat.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: beta_hat.len() });
        }
        let mut m = RunningMoments::new();
        for (c, x) in self.history() {
            let fit: f64 = c.iter().zip(beta_hat).map(|(a, b)| a * b).sum();
            m.push(x - fit);
        }
        m.sample_variance()
    }
}

/// Regulariser `gamma = lambda_min / n`.
pub fn gamma_schedule(lambda_min: f64, n: usize) -> f64 {
    lambda_min / n.max(1) as f64
}

/// Closed-form conditional mean squared error of the ridge estimate given
/// the contexts:
/// `sigma^2 Tr(V^-1) + gamma^2 beta^T V^-2 beta - gamma sigma^2 Tr(V^-2)`
/// with `V = gamma I + gram`.
pub fn conditional_mse(gram: &DMatrix<f64>, beta: &[f64], sigma_sq: f64, gamma: f64) -> Result<f64> {
    if gram.nrows() != beta.len() || gram.ncols() != beta.len() {
        return Err(Error::DimensionMismatch { expected: gram.nrows(), got: beta.len() });
    }
    let eig = decompose(regularised(gram, gamma))?;
    let beta = DVector::from_column_slice(beta);
    let proj = eig.eigenvectors.transpose() * beta;
    let mut tr1 = 0.0;
    let mut tr2 = 0.0;
    let mut quad = 0.0;
    for (l, b) in eig.eigenvalues.iter().zip(proj.iter()) {
        tr1 += 1.0 / l;
        tr2 += 1.0 / (l * l);
        quad += b * b / (l * l);
    }
    Ok(sigma_sq * tr1 + gamma * gamma * quad - gamma * sigma_sq * tr2)
}

fn regularised(gram: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let mut v = gram.clone();
    for i in 0..v.nrows() {
        v[(i, i)] += gamma;
    }
    v
}

fn decompose(v: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let eig = SymmetricEigen::new(v);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > SINGULAR_RTOL * max) {
        return Err(Error::Singular { min_eigenvalue: min });
    }
    Ok(eig)
}
