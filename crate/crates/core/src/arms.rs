//! Reward and context models with deterministic, seeded sampling.
//!
//! Every random quantity in a simulated run comes from a ChaCha8 stream
//! derived from a single trial seed. Each arm owns its own stream, so the
//! sequence of rewards an arm produces does not depend on the order in
//! which a policy pulls the arms.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Stream id used for context draws. Arm streams use ids `0..K`.
pub const CONTEXT_STREAM: u64 = 1 << 40;
/// Stream id used to draw random problem instances (means, coefficients).
pub const INSTANCE_STREAM: u64 = (1 << 40) + 1;

/// Independent random stream `stream` of the generator seeded by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Reward distribution family.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Gaussian,
    /// `mean + R` with `R` uniform on `{-1, +1}`.
    Rademacher,
    /// `mean + (2 B - 1)` with `B ~ Beta(shape, shape)`, i.e. the symmetric
    /// Beta law rescaled to `[-1, 1]`.
    SymmetricBeta { shape: f64 },
    /// Piecewise-linear quantile function on an equally spaced probability
    /// grid: `quantiles[i] = Q(i / (len - 1))`.
    Custom { quantiles: Vec<f64> },
}

/// Reward distribution of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSpec {
    family: Family,
    mean: f64,
    variance: f64,
    beta: Option<Beta<f64>>,
}

impl ArmSpec {
    pub fn gaussian(mean: f64, variance: f64) -> Result<Self> {
        check_finite("mean", mean)?;
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::config(format!(
                "gaussian variance must be finite and positive, got {variance}"
            )));
        }
        Ok(Self { family: Family::Gaussian, mean, variance, beta: None })
    }

    pub fn rademacher(mean: f64) -> Result<Self> {
        check_finite("mean", mean)?;
        Ok(Self { family: Family::Rademacher, mean, variance: 1.0, beta: None })
    }

    pub fn symmetric_beta(mean: f64, shape: f64) -> Result<Self> {
        check_finite("mean", mean)?;
        if !(shape.is_finite() && shape > 0.0) {
            return Err(Error::config(format!("beta shape must be positive, got {shape}")));
        }
        let beta = Beta::new(shape, shape).map_err(|e| Error::config(e.to_string()))?;
        Ok(Self {
            family: Family::SymmetricBeta { shape },
            mean,
            variance: 1.0 / (2.0 * shape + 1.0),
            beta: Some(beta),
        })
    }

    /// Arm sampled by inverse transform from a quantile table. The mean and
    /// variance are the exact moments of the piecewise-linear quantile
    /// function. A constant table gives a zero-variance arm, which is only
    /// useful as a noise-free stub in tests.
    pub fn custom(quantiles: Vec<f64>) -> Result<Self> {
        if quantiles.len() < 2 {
            return Err(Error::config("quantile table needs at least two entries"));
        }
        if quantiles.iter().any(|q| !q.is_finite()) {
            return Err(Error::config("quantile table must be finite"));
        }
        if quantiles.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::config("quantile table must be non-decreasing"));
        }
        let h = 1.0 / (quantiles.len() - 1) as f64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for w in quantiles.windows(2) {
            let (a, b) = (w[0], w[1]);
            m1 += h * (a + b) / 2.0;
            m2 += h * (a * a + a * b + b * b) / 3.0;
        }
        let variance = (m2 - m1 * m1).max(0.0);
        Ok(Self { family: Family::Custom { quantiles }, mean: m1, variance, beta: None })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Gaussian, Rademacher and symmetric Beta laws are strictly subgaussian.
    pub fn is_strictly_subgaussian(&self) -> bool {
        !matches!(self.family, Family::Custom { .. })
    }
}

fn check_finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{what} must be finite, got {v}")))
    }
}

impl Distribution<f64> for ArmSpec {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            Family::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                self.mean + self.variance.sqrt() * z
            }
            Family::Rademacher => {
                if rng.random::<bool>() {
                    self.mean + 1.0
                } else {
                    self.mean - 1.0
                }
            }
            Family::SymmetricBeta { .. } => {
                let b = self.beta.as_ref().expect("beta arm carries its sampler").sample(rng);
                self.mean + 2.0 * b - 1.0
            }
            Family::Custom { quantiles } => {
                let u: f64 = rng.random();
                let pos = u * (quantiles.len() - 1) as f64;
                let i = (pos.floor() as usize).min(quantiles.len() - 2);
                let frac = pos - i as f64;
                quantiles[i] + frac * (quantiles[i + 1] - quantiles[i])
            }
        }
    }
}

/// Draw one reward from `arm`.
pub fn sample_reward<R: Rng + ?Sized>(arm: &ArmSpec, rng: &mut R) -> f64 {
    arm.sample(rng)
}

/// Which tail model the confidence radii assume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseRegime {
    /// General subgaussian with a known variance proxy.
    Gsg,
    /// Strictly subgaussian: the proxy equals the arm's own variance.
    Ssg,
    /// Exactly Gaussian rewards (chi-square radii).
    GaussianExact,
}

impl NoiseRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseRegime::Gsg => "gsg",
            NoiseRegime::Ssg => "ssg",
            NoiseRegime::GaussianExact => "gaussian",
        }
    }
}

impl fmt::Display for NoiseRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gsg" | "subgaussian" => Ok(NoiseRegime::Gsg),
            "ssg" | "strict" | "strictly-subgaussian" => Ok(NoiseRegime::Ssg),
            "gaussian" | "gaussian-exact" => Ok(NoiseRegime::GaussianExact),
            other => Err(Error::config(format!("unknown noise regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContextFamily {
    /// Independent uniform coordinates on `[-half_width, half_width]`.
    UniformHypercube { half_width: f64 },
    /// Uniform draw from a fixed list of support points.
    Custom { points: Vec<Vec<f64>> },
}

/// Distribution of the context vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSpec {
    dimension: usize,
    support_bound: f64,
    lambda_min: f64,
    family: ContextFamily,
}

impl ContextSpec {
    /// Hypercube `[-sqrt(3), sqrt(3)]^d`: unit coordinate variance, so the
    /// second-moment matrix is the identity.
    pub fn uniform_hypercube(dimension: usize) -> Result<Self> {
        Self::hypercube(dimension, 3f64.sqrt())
    }

    pub fn hypercube(dimension: usize, half_width: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::config("context dimension must be positive"));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::config("hypercube half-width must be positive"));
        }
        Ok(Self {
            dimension,
            support_bound: half_width * (dimension as f64).sqrt(),
            lambda_min: half_width * half_width / 3.0,
            family: ContextFamily::UniformHypercube { half_width },
        })
    }

    /// Empirical context law over `points`; `lambda_min` is the smallest
    /// eigenvalue of the points' second-moment matrix.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let dimension = points.first().map(Vec::len).unwrap_or(0);
        if dimension == 0 {
            return Err(Error::config("context point list is empty"));
        }
        if let Some(bad) = points.iter().find(|p| p.len() != dimension) {
            return Err(Error::DimensionMismatch { expected: dimension, got: bad.len() });
        }
        let mut second = DMatrix::<f64>::zeros(dimension, dimension);
        for p in &points {
            for i in 0..dimension {
                for j in 0..dimension {
                    second[(i, j)] += p[i] * p[j];
                }
            }
        }
        second /= points.len() as f64;
        let lambda_min = SymmetricEigen::new(second).eigenvalues.min();
        if lambda_min <= 0.0 {
            return Err(Error::config("context second-moment matrix is not positive definite"));
        }
        let support_bound = points
            .iter()
            .map(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Ok(Self { dimension, support_bound, lambda_min, family: ContextFamily::Custom { points } })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn support_bound(&self) -> f64 {
        self.support_bound
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn family(&self) -> &ContextFamily {
        &self.family
    }
}

impl Distribution<Vec<f64>> for ContextSpec {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.family {
            ContextFamily::UniformHypercube { half_width } => (0..self.dimension)
                .map(|_| rng.random_range(-*half_width..=*half_width))
                .collect(),
            ContextFamily::Custom { points } => points[rng.random_range(0..points.len())].clone(),
        }
    }
}

pub fn sample_context<R: Rng + ?Sized>(spec: &ContextSpec, rng: &mut R) -> Vec<f64> {
    spec.sample(rng)
}

/// `beta . context + eta` with `eta` drawn from `noise`.
pub fn reward_with_context<R: Rng + ?Sized>(
    beta: &[f64],
    context: &[f64],
    noise: &ArmSpec,
    rng: &mut R,
) -> Result<f64> {
    if beta.len() != context.len() {
        return Err(Error::DimensionMismatch { expected: beta.len(), got: context.len() });
    }
    let signal: f64 = beta.iter().zip(context).map(|(b, c)| b * c).sum();
    Ok(signal + noise.sample(rng))
}

/// Environment for the canonical (context-free) problem.
pub trait RewardSource {
    fn num_arms(&self) -> usize;
    fn pull(&mut self, arm: usize) -> f64;
}

/// Independent arms, each with its own random stream.
#[derive(Debug, Clone)]
pub struct ArmBank {
    arms: Vec<ArmSpec>,
    streams: Vec<ChaCha8Rng>,
}

impl ArmBank {
    pub fn new(arms: Vec<ArmSpec>, seed: u64) -> Self {
        let streams = (0..arms.len()).map(|k| substream(seed, k as u64)).collect();
        Self { arms, streams }
    }

    pub fn arms(&self) -> &[ArmSpec] {
        &self.arms
    }

    pub fn variances(&self) -> Vec<f64> {
        self.arms.iter().map(ArmSpec::variance).collect()
    }
}

impl RewardSource for ArmBank {
    fn num_arms(&self) -> usize {
        self.arms.len()
    }

    fn pull(&mut self, arm: usize) -> f64 {
        self.arms[arm].sample(&mut self.streams[arm])
    }
}

/// Environment for the contextual problem. The context of a round is only
/// revealed by `pull`, after the arm has been chosen.
pub trait ContextualSource {
    fn num_arms(&self) -> usize;
    fn dimension(&self) -> usize;
    fn pull(&mut self, arm: usize) -> (Vec<f64>, f64);
}

/// Linear arms `X = beta_k . c + eta_k` sharing one i.i.d. context stream.
#[derive(Debug, Clone)]
pub struct LinearBank {
    betas: Vec<Vec<f64>>,
    noise: Vec<ArmSpec>,
    contexts: ContextSpec,
    context_rng: ChaCha8Rng,
    noise_streams: Vec<ChaCha8Rng>,
}

impl LinearBank {
    pub fn new(
        betas: Vec<Vec<f64>>,
        noise: Vec<ArmSpec>,
        contexts: ContextSpec,
        seed: u64,
    ) -> Result<Self> {
        if betas.len() != noise.len() {
            return Err(Error::DimensionMismatch { expected: betas.len(), got: noise.len() });
        }
        if let Some(b) = betas.iter().find(|b| b.len() != contexts.dimension()) {
            return Err(Error::DimensionMismatch { expected: contexts.dimension(), got: b.len() });
        }
        let noise_streams = (0..noise.len()).map(|k| substream(seed, k as u64)).collect();
        Ok(Self {
            betas,
            noise,
            contexts,
            context_rng: substream(seed, CONTEXT_STREAM),
            noise_streams,
        })
    }

    pub fn betas(&self) -> &[Vec<f64>] {
        &self.betas
    }

    pub fn noise_variances(&self) -> Vec<f64> {
        self.noise.iter().map(ArmSpec::variance).collect()
    }

    pub fn contexts(&self) -> &ContextSpec {
        &self.contexts
    }
}

impl ContextualSource for LinearBank {
    fn num_arms(&self) -> usize {
        self.betas.len()
    }

    fn dimension(&self) -> usize {
        self.contexts.dimension()
    }

    fn pull(&mut self, arm: usize) -> (Vec<f64>, f64) {
        let c = self.contexts.sample(&mut self.context_rng);
        let x = reward_with_context(&self.betas[arm], &c, &self.noise[arm], &mut self.noise_streams[arm])
            .expect("dimensions checked at construction");
        (c, x)
    }
}
