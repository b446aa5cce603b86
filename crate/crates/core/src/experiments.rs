//! Constructed benchmarks that check directional claims at desk scale.
//!
//! * Complementary views: each camera confuses a disjoint set of class pairs,
//!   so one camera alone is capped at 50% while the two together separate all
//!   classes.
//! * Difficulty skew: a few classes have prototypes pulled close together,
//!   which makes them hard while the rest stay easy.

use serde::Serialize;

use crate::data::{generate_synthetic, split_by_driver, Dataset, Split, SplitSpec, SynthConfig};
use crate::error::Result;
use crate::fusion::FusionMode;
use crate::harness::{evaluate, train, vote_evaluate, FeatureSource, Metrics};
use crate::head::SgdConfig;
use crate::losses::{CaslConfig, LossKind};

pub const COMPLEMENTARY_DIMS: [usize; 4] = [32, 4, 4, 4];
pub const COMPLEMENTARY_NOISE_STD: f64 = 8.0;
pub const COMPLEMENTARY_CLIPS: usize = 2;

pub const SKEWED_DIMS: [usize; 4] = [32, 4, 4, 4];
pub const SKEWED_NOISE_STD: f64 = 8.0;
pub const SKEWED_CLIPS: usize = 2;
pub const SKEWED_HARD_CLASSES: [usize; 4] = [0, 10, 11, 15];
pub const SKEWED_HARD_MARGIN: f64 = 0.2;
pub const SKEWED_LR0: f64 = 0.01;

pub fn complementary_benchmark(seed: u64) -> SynthConfig {
    SynthConfig {
        dims: COMPLEMENTARY_DIMS,
        clips_per_driver_per_class: COMPLEMENTARY_CLIPS,
        noise_std: COMPLEMENTARY_NOISE_STD,
        driver_std: 0.3,
        seed,
        ..SynthConfig::complementary(16)
    }
}

pub fn skewed_benchmark(seed: u64) -> SynthConfig {
    SynthConfig {
        dims: SKEWED_DIMS,
        clips_per_driver_per_class: SKEWED_CLIPS,
        noise_std: SKEWED_NOISE_STD,
        driver_std: 0.3,
        hard_classes: SKEWED_HARD_CLASSES.to_vec(),
        hard_margin: SKEWED_HARD_MARGIN,
        seed,
        ..SynthConfig::default()
    }
}

/// Default schedule with a smaller initial step.
pub fn skewed_sgd() -> SgdConfig {
    SgdConfig {
        lr0: SKEWED_LR0,
        ..SgdConfig::default()
    }
}

/// Generates a benchmark and applies the 35/5/10 driver split.
pub fn prepare(config: &SynthConfig) -> Result<Dataset> {
    let spec = SplitSpec {
        seed: config.seed,
        ..SplitSpec::default()
    };
    split_by_driver(generate_synthetic(config)?, &spec)
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplementaryReport {
    pub seed: u64,
    /// Test accuracy of camera 1 and camera 2 alone.
    pub single_view: [f64; 2],
    pub fused: Vec<(FusionMode, f64)>,
    pub voting: f64,
}

impl ComplementaryReport {
    pub fn best_single_view(&self) -> f64 {
        self.single_view[0].max(self.single_view[1])
    }

    pub fn fused_accuracy(&self, mode: FusionMode) -> Option<f64> {
        self.fused.iter().find(|(m, _)| *m == mode).map(|(_, a)| *a)
    }
}

pub fn run_complementary(
    seed: u64,
    loss: &LossKind,
    sgd: &SgdConfig,
) -> Result<ComplementaryReport> {
    let ds = prepare(&complementary_benchmark(seed))?;
    let v1 = train(&ds, FeatureSource::View(1), loss, sgd, seed)?;
    let v2 = train(&ds, FeatureSource::View(2), loss, sgd, seed)?;
    let single_view = [
        evaluate(&v1.params, &ds, Split::Test, FeatureSource::View(1))?.accuracy,
        evaluate(&v2.params, &ds, Split::Test, FeatureSource::View(2))?.accuracy,
    ];
    let voting = vote_evaluate(&v1.params, &v2.params, &ds, Split::Test)?.accuracy;
    let fused = FusionMode::ALL
        .into_iter()
        .map(|mode| {
            let source = FeatureSource::Fused(mode);
            let out = train(&ds, source, loss, sgd, seed)?;
            Ok((
                mode,
                evaluate(&out.params, &ds, Split::Test, source)?.accuracy,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComplementaryReport {
        seed,
        single_view,
        fused,
        voting,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReweightingReport {
    pub seed: u64,
    pub cross_entropy: Metrics,
    pub cyclical: Metrics,
}

/// Trains the same fused head with cross-entropy and with the cyclical loss.
pub fn run_reweighting(
    config: &SynthConfig,
    mode: FusionMode,
    casl: &CaslConfig,
    sgd: &SgdConfig,
) -> Result<ReweightingReport> {
    let seed = config.seed;
    let ds = prepare(config)?;
    let source = FeatureSource::Fused(mode);
    let ce = train(&ds, source, &LossKind::CrossEntropy, sgd, seed)?;
    let cy = train(&ds, source, &LossKind::Cyclical(*casl), sgd, seed)?;
    Ok(ReweightingReport {
        seed,
        cross_entropy: evaluate(&ce.params, &ds, Split::Test, source)?,
        cyclical: evaluate(&cy.params, &ds, Split::Test, source)?,
    })
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
