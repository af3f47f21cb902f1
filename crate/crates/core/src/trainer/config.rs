//! Training configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{dbm_to_w, LinkParams};
use crate::constellation::Constellation;
use crate::neural::{AdamConfig, Relaxation};
use crate::Error;

/// What the shaper emits per step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Unsigned amplitudes with uniform random signs.
    Npas,
    /// Signed constellation points.
    Nps,
}

/// Estimator of the shaper entropy entering the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyEstimator {
    /// `-log p` of the sampled sequences.
    Sample,
    /// Sum of the per-step conditional entropies along the sampled prefixes.
    Conditional,
}

/// Noise variance assumed by the training demapper.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemapperNoise {
    /// The channel's additive noise variance.
    Channel,
    /// Mean squared error between received and sent center symbols.
    Fitted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub order: usize,
    pub mode: Mode,
    /// Block length `L`.
    #[serde(alias = "L")]
    pub block_len: usize,
    /// Side blocks `k` per side; derived from the kernel memory when absent.
    pub context: Option<usize>,
    pub hidden: usize,
    /// Center blocks per step.
    pub batch: usize,
    pub steps: usize,
    pub tau_start: f64,
    pub tau_end: f64,
    pub adam: AdamConfig,
    /// Link and training launch power.
    pub link: LinkParams,
    /// Nonlinear coefficient in 1/(W km), replacing the link's.
    pub gamma: Option<f64>,
    /// Additive noise variance relative to the signal power, replacing the
    /// amplifier noise of the link.
    pub sigma2: Option<f64>,
    pub demapper_noise: DemapperNoise,
    /// Precomputed kernel file.
    pub kernels: Option<PathBuf>,
    /// Kernel memory when generating; chosen from the link when absent.
    pub memory: Option<usize>,
    pub entropy: EntropyEstimator,
    pub relaxation: Relaxation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let mut link = LinkParams::desk();
        link.launch_power_dbm = 7.0;
        Self {
            order: 64,
            mode: Mode::Npas,
            block_len: 16,
            context: None,
            hidden: 32,
            batch: 16,
            steps: 400,
            tau_start: 1.5,
            tau_end: 1.5,
            adam: AdamConfig {
                rate: 1e-2,
                ..AdamConfig::default()
            },
            link,
            gamma: None,
            sigma2: None,
            demapper_noise: DemapperNoise::Fitted,
            kernels: None,
            memory: None,
            entropy: EntropyEstimator::Sample,
            relaxation: Relaxation::StraightThrough,
            seed: 1,
        }
    }
}

impl TrainConfig {
    /// Reads JSON, or TOML when the extension is `.toml`.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        Constellation::qam(self.order)?;
        self.link.validate()?;
        let bad = |what: &str| Err(Error::Config(format!("{what} must be positive")));
        if self.block_len == 0 {
            return bad("block length");
        }
        if self.hidden == 0 {
            return bad("hidden size");
        }
        if self.batch == 0 {
            return bad("batch size");
        }
        if !(self.tau_start > 0.0 && self.tau_end > 0.0) {
            return bad("temperature");
        }
        if !(self.adam.rate > 0.0) {
            return bad("learning rate");
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("gamma must be finite and nonnegative, got {g}")));
            }
        }
        if let Some(s) = self.sigma2 {
            if !(s > 0.0 && s.is_finite()) {
                return bad("noise variance");
            }
        }
        Ok(())
    }

    /// Shaper alphabet size per step.
    pub fn alphabet(&self) -> usize {
        match self.mode {
            Mode::Npas => self.order / 4,
            Mode::Nps => self.order,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(self.link.gamma)
    }

    /// Nonlinear coefficient acting on unit-power symbols.
    pub fn gamma_eff(&self) -> f64 {
        self.gamma() * dbm_to_w(self.link.launch_power_dbm)
    }

    /// Channel noise variance relative to unit signal power.
    pub fn noise_variance(&self) -> f64 {
        self.sigma2
            .unwrap_or_else(|| self.link.ase_variance() / self.link.launch_power_w())
    }

    /// Temperature at `step` on the geometric schedule.
    pub fn tau(&self, step: usize) -> f64 {
        if self.steps <= 1 {
            return self.tau_start;
        }
        let frac = step as f64 / (self.steps - 1) as f64;
        self.tau_start * (self.tau_end / self.tau_start).powf(frac)
    }
}
