//! Run configuration: a JSON file with every key optional, overridden by
//! command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use mifi::data::{
    generate_synthetic, load_dataset, split_by_driver, Dataset, SplitSpec, SynthConfig,
    DEFAULT_N_CLASSES,
};
use mifi::experiments::{complementary_benchmark, skewed_benchmark};
use mifi::fusion::FusionMode;
use mifi::harness::FeatureSource;
use mifi::head::SgdConfig;
use mifi::losses::{CaslConfig, LossKind};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LossName {
    Ce,
    Fl,
    Asl,
    Casl,
}

/// Bundled synthetic benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
    Complementary,
    Skewed,
}

impl Preset {
    pub fn synth(self, seed: u64) -> SynthConfig {
        match self {
            Preset::Default => SynthConfig {
                seed,
                ..SynthConfig::default()
            },
            Preset::Complementary => complementary_benchmark(seed),
            Preset::Skewed => skewed_benchmark(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct RunConfig {
    pub fusion: FusionMode,
    /// Train on one camera (1-based) instead of the fused pair.
    pub view: Option<usize>,
    pub loss: LossName,
    pub beta: f64,
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Cyclical schedule length; defaults to `epochs`.
    pub total_epochs: Option<u32>,
    pub fl_gamma: f64,
    pub asl_lambda1: f64,
    pub asl_lambda2: f64,
    pub lr: f64,
    pub epochs: u32,
    pub decay_epochs: Vec<u32>,
    pub decay_factor: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Dataset directory; when absent the `synth` section is generated in memory.
    pub dataset: Option<PathBuf>,
    pub n_classes: usize,
    pub synth: SynthConfig,
    /// Driver counts for train, val and test.
    pub split: [usize; 3],
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let casl = CaslConfig::default();
        let sgd = SgdConfig::default();
        let split = SplitSpec::default();
        RunConfig {
            fusion: FusionMode::TemporalConcat,
            view: None,
            loss: LossName::Casl,
            beta: casl.beta,
            gamma: casl.gamma,
            lambda1: casl.lambda1,
            lambda2: casl.lambda2,
            total_epochs: None,
            fl_gamma: LossKind::DEFAULT_FOCAL_GAMMA,
            asl_lambda1: LossKind::DEFAULT_ASL_LAMBDA1,
            asl_lambda2: LossKind::DEFAULT_ASL_LAMBDA2,
            lr: sgd.lr0,
            epochs: sgd.epochs,
            decay_epochs: sgd.decay_epochs,
            decay_factor: sgd.decay_factor,
            batch_size: sgd.batch_size,
            seed: 0,
            dataset: None,
            n_classes: DEFAULT_N_CLASSES,
            synth: SynthConfig::default(),
            split: [split.train, split.val, split.test],
            out: PathBuf::from("run"),
        }
    }
}

impl RunConfig {
    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text =
            fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> CliResult<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(config_err)?;
        s.push('\n');
        Ok(s)
    }

    pub fn casl(&self) -> CaslConfig {
        CaslConfig {
            beta: self.beta,
            gamma: self.gamma,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            total_epochs: self.total_epochs.unwrap_or(self.epochs),
        }
    }

    pub fn loss_kind(&self) -> CliResult<LossKind> {
        let kind = match self.loss {
            LossName::Ce => LossKind::CrossEntropy,
            LossName::Fl => LossKind::Focal {
                gamma: self.fl_gamma,
            },
            LossName::Asl => LossKind::Asymmetric {
                lambda1: self.asl_lambda1,
                lambda2: self.asl_lambda2,
            },
            LossName::Casl => LossKind::Cyclical(self.casl()),
        };
        kind.validate().map_err(config_err)?;
        Ok(kind)
    }

    pub fn sgd(&self) -> CliResult<SgdConfig> {
        let sgd = SgdConfig {
            lr0: self.lr,
            decay_epochs: self.decay_epochs.clone(),
            decay_factor: self.decay_factor,
            epochs: self.epochs,
            batch_size: self.batch_size,
        };
        sgd.validate().map_err(config_err)?;
        Ok(sgd)
    }

    pub fn source(&self) -> CliResult<FeatureSource> {
        match self.view {
            None => Ok(FeatureSource::Fused(self.fusion)),
            Some(v @ (1 | 2)) => Ok(FeatureSource::View(v)),
            Some(v) => Err(config_err(format!("view must be 1 or 2, got {v}"))),
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train: self.split[0],
            val: self.split[1],
            test: self.split[2],
            seed: self.seed,
        }
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> CliResult<()> {
        self.loss_kind()?;
        self.sgd()?;
        self.source()?;
        if self.dataset.is_none() {
            self.synth.validate().map_err(config_err)?;
        }
        Ok(())
    }

    /// Loads or generates the dataset and applies the driver split.
    pub fn dataset(&self) -> CliResult<Dataset> {
        let ds = match &self.dataset {
            Some(dir) => load_dataset(dir, self.n_classes)?,
            None => generate_synthetic(&self.synth)?,
        };
        Ok(split_by_driver(ds, &self.split_spec())?)
    }
}

pub fn source_label(source: FeatureSource) -> String {
    match source {
        FeatureSource::Fused(mode) => mode.to_string(),
        FeatureSource::View(v) => format!("cam{v}"),
    }
}

pub fn parse_source_label(label: &str) -> CliResult<FeatureSource> {
    match label {
        "cam1" => Ok(FeatureSource::View(1)),
        "cam2" => Ok(FeatureSource::View(2)),
        other => other.parse().map(FeatureSource::Fused).map_err(config_err),
    }
}
