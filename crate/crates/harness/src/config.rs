//! Experiment configuration files.
//!
//! One experiment per TOML file:
//!
//! ```toml
//! name = "canonical-inf"
//! policy = "nonadaptive"
//! horizons = [2000, 5000, 10000]
//! trials = 100
//! seed = 7
//!
//! [settings]
//! norm = "inf"
//! regime = "gsg"
//! proxy = 2.5
//! lower_bound = 1.0
//!
//! [[arms]]
//! family = "gaussian"
//! variance = 1.0
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::Deserialize;
use varalloc_core::allocation::NormOrder;
use varalloc_core::arms::{substream, ArmSpec, ContextSpec, NoiseRegime, INSTANCE_STREAM};
use varalloc_core::concentration::LeftTail;
use varalloc_core::policies::PolicyConfig;

use crate::bounds::BoundCurve;
use crate::error::{HarnessError, Result};

/// Canonical horizon grid.
pub const DEFAULT_HORIZONS: [usize; 6] = [2_000, 5_000, 10_000, 20_000, 50_000, 100_000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    #[serde(alias = "non-adaptive", alias = "non_adaptive")]
    NonAdaptive,
    Adaptive,
    Contextual,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::NonAdaptive => "nonadaptive",
            PolicyKind::Adaptive => "adaptive",
            PolicyKind::Contextual => "contextual",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `norm = "inf"` or `norm = 2`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum NormValue {
    Number(f64),
    Text(String),
}

impl Default for NormValue {
    fn default() -> Self {
        NormValue::Text("inf".into())
    }
}

impl NormValue {
    pub fn resolve(&self) -> Result<NormOrder> {
        match self {
            NormValue::Number(p) => Ok(NormOrder::finite(*p)?),
            NormValue::Text(s) => Ok(NormOrder::from_str(s)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default)]
    pub norm: NormValue,
    #[serde(default = "default_regime")]
    pub regime: String,
    pub proxy: Option<f64>,
    pub lower_bound: Option<f64>,
    #[serde(default)]
    pub phase3_ucb: bool,
    #[serde(default = "default_growth")]
    pub batch_growth: f64,
    #[serde(default = "default_margin")]
    pub phase1_margin: f64,
    #[serde(default = "default_tail")]
    pub left_tail: String,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            norm: NormValue::default(),
            regime: default_regime(),
            proxy: None,
            lower_bound: None,
            phase3_ucb: false,
            batch_growth: default_growth(),
            phase1_margin: default_margin(),
            left_tail: default_tail(),
        }
    }
}

fn default_regime() -> String {
    "ssg".into()
}

fn default_growth() -> f64 {
    2.0
}

fn default_margin() -> f64 {
    1.0
}

fn default_tail() -> String {
    "refined".into()
}

fn default_trials() -> usize {
    100
}

fn default_horizons() -> Vec<usize> {
    DEFAULT_HORIZONS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArmConfig {
    Gaussian {
        #[serde(default)]
        mean: f64,
        variance: f64,
    },
    Rademacher {
        #[serde(default)]
        mean: f64,
    },
    SymmetricBeta {
        #[serde(default)]
        mean: f64,
        shape: f64,
    },
    Custom {
        quantiles: Vec<f64>,
    },
}

impl ArmConfig {
    pub fn to_spec(&self) -> Result<ArmSpec> {
        Ok(match self {
            ArmConfig::Gaussian { mean, variance } => ArmSpec::gaussian(*mean, *variance)?,
            ArmConfig::Rademacher { mean } => ArmSpec::rademacher(*mean)?,
            ArmConfig::SymmetricBeta { mean, shape } => ArmSpec::symmetric_beta(*mean, *shape)?,
            ArmConfig::Custom { quantiles } => ArmSpec::custom(quantiles.clone())?,
        })
    }
}

/// Random linear instances: coefficients uniform on `[-coef_range, coef_range]^d`,
/// Gaussian noise with variance uniform on `noise_variance_range`, contexts
/// uniform on a hypercube with identity second moment.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextualConfig {
    pub arms: usize,
    pub dimension: usize,
    #[serde(default = "default_coef_range")]
    pub coef_range: f64,
    #[serde(default = "default_noise_range")]
    pub noise_variance_range: [f64; 2],
}

fn default_coef_range() -> f64 {
    2.0
}

fn default_noise_range() -> [f64; 2] {
    [1.0, 4.0]
}

/// One linear instance drawn for a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearInstance {
    pub betas: Vec<Vec<f64>>,
    pub noise: Vec<ArmSpec>,
    pub contexts: ContextSpec,
}

impl LinearInstance {
    pub fn noise_variances(&self) -> Vec<f64> {
        self.noise.iter().map(ArmSpec::variance).collect()
    }
}

impl ContextualConfig {
    /// Instance for a trial, drawn from the trial seed's instance stream.
    pub fn draw(&self, trial_seed: u64) -> Result<LinearInstance> {
        let mut rng = substream(trial_seed, INSTANCE_STREAM);
        let [lo, hi] = self.noise_variance_range;
        let mut betas = Vec::with_capacity(self.arms);
        let mut noise = Vec::with_capacity(self.arms);
        for _ in 0..self.arms {
            betas.push((0..self.dimension).map(|_| rng.random_range(-self.coef_range..=self.coef_range)).collect());
            noise.push(ArmSpec::gaussian(0.0, rng.random_range(lo..=hi))?);
        }
        Ok(LinearInstance { betas, noise, contexts: ContextSpec::uniform_hypercube(self.dimension)? })
    }

    fn validate(&self) -> Result<()> {
        let [lo, hi] = self.noise_variance_range;
        if self.arms == 0 || self.dimension == 0 {
            return Err(HarnessError::config("contextual arms and dimension must be positive"));
        }
        if !(self.coef_range.is_finite() && self.coef_range >= 0.0) {
            return Err(HarnessError::config("coef_range must be a nonnegative number"));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(HarnessError::config("noise_variance_range must satisfy 0 < lo <= hi"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub policy: PolicyKind,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Record wall-clock time per run; off by default so output is reproducible.
    #[serde(default)]
    pub timing: bool,
    /// Bound curve to report, `"none"` to disable; defaults to the curve
    /// matching the policy and regime.
    pub bound: Option<String>,
    #[serde(default)]
    pub settings: Settings,
    #[serde(default)]
    pub arms: Vec<ArmConfig>,
    pub contextual: Option<ContextualConfig>,
}

impl FromStr for ExperimentConfig {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        text.parse()
    }

    pub fn norm(&self) -> Result<NormOrder> {
        self.settings.norm.resolve()
    }

    pub fn regime(&self) -> Result<NoiseRegime> {
        Ok(self.settings.regime.parse()?)
    }

    pub fn left_tail(&self) -> Result<LeftTail> {
        match self.settings.left_tail.to_ascii_lowercase().as_str() {
            "refined" => Ok(LeftTail::Refined),
            "symmetric" => Ok(LeftTail::Symmetric),
            other => Err(HarnessError::config(format!("unknown left_tail `{other}`"))),
        }
    }

    /// Number of arms of every instance.
    pub fn num_arms(&self) -> usize {
        match (&self.policy, &self.contextual) {
            (PolicyKind::Contextual, Some(c)) => c.arms,
            _ => self.arms.len(),
        }
    }

    /// Requested bound curve; `Ok(None)` when disabled.
    pub fn bound_curve(&self) -> Result<Option<BoundCurve>> {
        match self.bound.as_deref() {
            Some(s) if s.eq_ignore_ascii_case("none") => Ok(None),
            Some(s) => Ok(Some(s.parse()?)),
            None => Ok(Some(BoundCurve::default_for(self.policy, self.regime()?, self.norm()?))),
        }
    }

    pub fn arm_specs(&self) -> Result<Vec<ArmSpec>> {
        self.arms.iter().map(ArmConfig::to_spec).collect()
    }

    pub fn policy_config(&self, horizon: usize) -> Result<PolicyConfig> {
        let s = &self.settings;
        let mut cfg = PolicyConfig::new(horizon, self.norm()?, self.regime()?)
            .with_phase3_ucb(s.phase3_ucb)
            .with_batch_growth(s.batch_growth)
            .with_phase1_margin(s.phase1_margin)
            .with_left_tail(self.left_tail()?);
        if let Some(p) = s.proxy {
            cfg = cfg.with_proxy(p);
        }
        if let Some(l) = s.lower_bound {
            cfg = cfg.with_lower_bound(l);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(HarnessError::config("experiment name is empty"));
        }
        if self.name.contains([',', '"', '\n']) {
            return Err(HarnessError::config("experiment name may not contain commas, quotes or newlines"));
        }
        if self.trials == 0 {
            return Err(HarnessError::config("trials must be at least 1"));
        }
        if self.horizons.is_empty() {
            return Err(HarnessError::config("horizons list is empty"));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::config("horizons must be strictly ascending"));
        }
        match (self.policy, &self.contextual) {
            (PolicyKind::Contextual, None) => {
                return Err(HarnessError::config("contextual policy needs a [contextual] section"));
            }
            (PolicyKind::Contextual, Some(c)) => {
                c.validate()?;
                if !self.arms.is_empty() {
                    return Err(HarnessError::config("contextual experiments draw their arms; remove [[arms]]"));
                }
            }
            (_, Some(_)) => return Err(HarnessError::config("[contextual] is only valid with policy = \"contextual\"")),
            (_, None) => {
                if self.arms.is_empty() {
                    return Err(HarnessError::config("no [[arms]] given"));
                }
                self.arm_specs()?;
            }
        }
        if self.policy == PolicyKind::NonAdaptive
            && (self.settings.lower_bound.is_none() || self.settings.proxy.is_none())
        {
            return Err(HarnessError::config("the non-adaptive policy needs lower_bound and proxy"));
        }
        self.left_tail()?;
        self.bound_curve()?;
        let k = self.num_arms();
        self.policy_config(self.horizons[0])?.validate(k)?;
        Ok(())
    }

    /// Applies command-line overrides, then re-validates.
    pub fn with_overrides(
        mut self,
        trials: Option<usize>,
        seed: Option<u64>,
        horizons: Option<Vec<usize>>,
        output: Option<PathBuf>,
    ) -> Result<Self> {
        if let Some(t) = trials {
            self.trials = t;
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(h) = horizons {
            self.horizons = h;
        }
        if output.is_some() {
            self.output = output;
        }
        self.validate()?;
        Ok(self)
    }
}
