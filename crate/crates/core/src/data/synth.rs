//! Seeded synthetic multi-view features.
//!
//! Every class has one prototype clip per view. A prototype is a per-channel
//! level (N(0, 1)) plus an element-wise texture (N(0, 0.25)). Hard classes are
//! pulled toward their common centroid by `hard_margin`. Classes paired in a
//! view's ambiguity list share that view's prototype. A sample is its class
//! prototype plus a per-driver channel offset (N(0, driver_std²)) plus
//! element-wise noise (N(0, noise_std²)).
//!
//! Randomness is drawn from independent streams keyed by what is being drawn
//! (prototype, driver, sample index), so any part can be regenerated alone.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Dataset, Sample, DEFAULT_N_CLASSES};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

const TEXTURE_STD: f64 = 0.5;

const PROTOTYPE_STREAM: u64 = 1 << 40;
const DRIVER_STREAM: u64 = 2 << 40;
const SAMPLE_STREAM: u64 = 3 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct SynthConfig {
    pub n_classes: usize,
    pub n_drivers: usize,
    pub clips_per_driver_per_class: usize,
    /// Per-view clip shape (C, T, W, H).
    pub dims: [usize; 4],
    /// `view_ambiguity[v]` lists class pairs that camera `v + 1` cannot tell apart.
    pub view_ambiguity: Vec<Vec<(usize, usize)>>,
    pub hard_classes: Vec<usize>,
    /// Scale applied to hard-class prototype offsets from their centroid (1 = no shrink).
    pub hard_margin: f64,
    pub noise_std: f64,
    pub driver_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_classes: DEFAULT_N_CLASSES,
            n_drivers: 50,
            clips_per_driver_per_class: 1,
            dims: [64, 4, 7, 7],
            view_ambiguity: vec![Vec::new(), Vec::new()],
            hard_classes: Vec::new(),
            hard_margin: 1.0,
            noise_std: 1.0,
            driver_std: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Camera 1 confuses (0,1), (2,3), …; camera 2 confuses (1,2), (3,4), …,
    /// (n−1, 0). Each camera alone is capped at 50%, the pair is separable.
    pub fn complementary(n_classes: usize) -> Self {
        let view1 = (0..n_classes / 2).map(|i| (2 * i, 2 * i + 1)).collect();
        let view2 = (0..n_classes / 2)
            .map(|i| (2 * i + 1, (2 * i + 2) % n_classes))
            .collect();
        SynthConfig {
            n_classes,
            view_ambiguity: vec![view1, view2],
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidInput(
                "synthetic data needs >= 2 classes".into(),
            ));
        }
        if self.n_drivers == 0 || self.clips_per_driver_per_class == 0 {
            return Err(Error::InvalidInput(
                "n_drivers and clips_per_driver_per_class must be >= 1".into(),
            ));
        }
        if self.dims.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "dims {:?} contain a zero",
                self.dims
            )));
        }
        if self.view_ambiguity.len() != 2 {
            return Err(Error::InvalidInput(format!(
                "view_ambiguity needs one list per camera (2), got {}",
                self.view_ambiguity.len()
            )));
        }
        for (v, pairs) in self.view_ambiguity.iter().enumerate() {
            for &(a, b) in pairs {
                if a >= self.n_classes || b >= self.n_classes || a == b {
                    return Err(Error::InvalidInput(format!(
                        "invalid ambiguity pair ({a}, {b}) for camera {} with {} classes",
                        v + 1,
                        self.n_classes
                    )));
                }
            }
        }
        if let Some(&k) = self.hard_classes.iter().find(|&&k| k >= self.n_classes) {
            return Err(Error::InvalidInput(format!("hard class {k} out of range")));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("driver_std", self.driver_std),
            ("hard_margin", self.hard_margin),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn channels(&self) -> usize {
        self.dims[0]
    }

    fn clip_len(&self) -> usize {
        self.dims.iter().product()
    }

    /// Prototype clips, `[view][class]`, as flat row-major data.
    pub fn prototypes(&self) -> Result<Vec<Vec<Vec<f32>>>> {
        self.validate()?;
        let len = self.clip_len();
        let per_channel = len / self.channels();
        let hard: BTreeSet<usize> = self.hard_classes.iter().copied().collect();
        let mut out = Vec::with_capacity(2);
        for (v, pairs) in self.view_ambiguity.iter().enumerate() {
            let mut protos: Vec<Vec<f64>> = (0..self.n_classes)
                .map(|k| {
                    let stream = PROTOTYPE_STREAM + (v * self.n_classes + k) as u64;
                    let mut rng = Rng::stream(self.seed, stream);
                    let levels: Vec<f64> = (0..self.channels())
                        .map(|_| rng.standard_normal())
                        .collect();
                    (0..len)
                        .map(|i| levels[i / per_channel] + TEXTURE_STD * rng.standard_normal())
                        .collect()
                })
                .collect();
            if !hard.is_empty() {
                let mut centroid = vec![0.0f64; len];
                for &k in &hard {
                    for (c, x) in centroid.iter_mut().zip(&protos[k]) {
                        *c += x / hard.len() as f64;
                    }
                }
                for &k in &hard {
                    for (x, c) in protos[k].iter_mut().zip(&centroid) {
                        *x = c + self.hard_margin * (*x - c);
                    }
                }
            }
            for &(a, b) in pairs {
                protos[b] = protos[a].clone();
            }
            out.push(
                protos
                    .into_iter()
                    .map(|p| p.into_iter().map(|x| x as f32).collect())
                    .collect(),
            );
        }
        Ok(out)
    }
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset> {
    let protos = config.prototypes()?;
    let channels = config.channels();
    let len = config.clip_len();
    let per_channel = len / channels;
    let offsets: Vec<Vec<Vec<f64>>> = (0..2)
        .map(|v| {
            (0..config.n_drivers)
                .map(|d| {
                    let stream = DRIVER_STREAM + (v * config.n_drivers + d) as u64;
                    let mut rng = Rng::stream(config.seed, stream);
                    (0..channels)
                        .map(|_| config.driver_std * rng.standard_normal())
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut samples =
        Vec::with_capacity(config.n_drivers * config.n_classes * config.clips_per_driver_per_class);
    for d in 0..config.n_drivers {
        for k in 0..config.n_classes {
            for clip in 0..config.clips_per_driver_per_class {
                let index = samples.len() as u64;
                let mut rng = Rng::stream(config.seed, SAMPLE_STREAM + index);
                let mut views = Vec::with_capacity(2);
                for (view_protos, view_offsets) in protos.iter().zip(&offsets) {
                    let proto = &view_protos[k];
                    let offset = &view_offsets[d];
                    let data: Vec<f32> = (0..len)
                        .map(|i| {
                            let x = proto[i] as f64
                                + offset[i / per_channel]
                                + config.noise_std * rng.standard_normal();
                            x as f32
                        })
                        .collect();
                    views.push(Tensor::new(config.dims.to_vec(), data)?);
                }
                samples.push(Sample {
                    id: format!("d{d:03}-c{k:02}-k{clip:02}"),
                    label: k,
                    driver: d as u32,
                    views,
                    split: None,
                });
            }
        }
    }
    Dataset::new(config.n_classes, samples)
}
