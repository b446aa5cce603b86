//! Multi-view samples, synthetic generation, driver-grouped splits, feature
//! container I/O and keyframe selection.

mod container;
mod keyframe;
mod manifest;
mod synth;

pub use container::{
    decode_tensor, encode_tensor, load_features, save_features, HEADER_FIXED_LEN, MAGIC, VERSION,
};
pub use keyframe::{
    frame_difference_scores, keyframe_indices, keyframe_select, keyframe_select_axis,
};
pub use manifest::{load_dataset, save_dataset, ManifestEntry, ManifestViews, MANIFEST_FILE};
pub use synth::{generate_synthetic, SynthConfig};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

pub const DEFAULT_N_CLASSES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!(
                "unknown split {other:?} (expected train, val or test)"
            ))),
        }
    }
}

/// One labeled clip seen by every camera. `views[0]` is camera 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    pub driver: u32,
    pub views: Vec<Tensor>,
    pub split: Option<Split>,
}

impl Sample {
    /// Feature clip of a 1-based camera id.
    pub fn view(&self, camera: usize) -> Result<&Tensor> {
        camera
            .checked_sub(1)
            .and_then(|i| self.views.get(i))
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "sample {} has no camera {camera} ({} views)",
                    self.id,
                    self.views.len()
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_classes: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Checks labels, view count and that every view shares one shape.
    pub fn new(n_classes: usize, samples: Vec<Sample>) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::InvalidInput("n_classes must be >= 1".into()));
        }
        let mut shape: Option<&[usize]> = None;
        for s in &samples {
            if s.label >= n_classes {
                return Err(Error::InvalidInput(format!(
                    "sample {} has label {} but n_classes is {n_classes}",
                    s.id, s.label
                )));
            }
            if s.views.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "sample {} has {} views, need 2",
                    s.id,
                    s.views.len()
                )));
            }
            for v in &s.views {
                v.expect_rank(4, "feature clip")?;
                match shape {
                    None => shape = Some(v.dims()),
                    Some(d) if d != v.dims() => {
                        return Err(Error::Shape(format!(
                            "sample {} view shape {:?} differs from {d:?}",
                            s.id,
                            v.dims()
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(Dataset { n_classes, samples })
    }

    /// Per-view clip dims, or `None` for an empty dataset.
    pub fn clip_dims(&self) -> Option<&[usize]> {
        self.samples.first().map(|s| s.views[0].dims())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == Some(split))
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn drivers(&self) -> BTreeSet<u32> {
        self.samples.iter().map(|s| s.driver).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 35,
            val: 5,
            test: 10,
            seed: 0,
        }
    }
}

const SPLIT_STREAM: u64 = 0x5350_4C49_5400_0000;

/// Assigns whole drivers to train/val/test after a seeded shuffle.
pub fn split_by_driver(mut dataset: Dataset, spec: &SplitSpec) -> Result<Dataset> {
    let mut drivers: Vec<u32> = dataset.drivers().into_iter().collect();
    let total = spec.train + spec.val + spec.test;
    if total != drivers.len() {
        return Err(Error::InvalidInput(format!(
            "split counts {}+{}+{} = {total} do not match {} drivers",
            spec.train,
            spec.val,
            spec.test,
            drivers.len()
        )));
    }
    Rng::stream(spec.seed, SPLIT_STREAM).shuffle(&mut drivers);
    let assign = |d: u32| {
        let pos = drivers.iter().position(|&x| x == d).expect("driver listed");
        if pos < spec.train {
            Split::Train
        } else if pos < spec.train + spec.val {
            Split::Val
        } else {
            Split::Test
        }
    };
    for s in &mut dataset.samples {
        s.split = Some(assign(s.driver));
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn tiny(n_drivers: usize, clips: usize) -> Dataset {
        generate_synthetic(&SynthConfig {
            n_drivers,
            clips_per_driver_per_class: clips,
            dims: [2, 1, 2, 2],
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn protocol_split_sizes() {
        let ds = split_by_driver(tiny(50, 1), &SplitSpec::default()).unwrap();
        assert_eq!(ds.split_len(Split::Train), 35 * 16);
        assert_eq!(ds.split_len(Split::Val), 5 * 16);
        assert_eq!(ds.split_len(Split::Test), 10 * 16);
    }

    #[test]
    fn empty_test_split_allowed() {
        let spec = SplitSpec {
            train: 8,
            val: 2,
            test: 0,
            seed: 3,
        };
        let ds = split_by_driver(tiny(10, 1), &spec).unwrap();
        assert_eq!(ds.split_len(Split::Test), 0);
        assert_eq!(ds.split_len(Split::Train), 8 * 16);
    }

    #[test]
    fn inconsistent_counts_rejected() {
        let spec = SplitSpec {
            train: 35,
            val: 5,
            test: 9,
            seed: 0,
        };
        assert!(matches!(
            split_by_driver(tiny(50, 1), &spec),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn no_driver_in_two_splits() {
        for seed in 0..10 {
            let spec = SplitSpec {
                seed,
                ..SplitSpec::default()
            };
            let ds = split_by_driver(tiny(50, 2), &spec).unwrap();
            let mut seen: BTreeMap<u32, Split> = BTreeMap::new();
            for s in &ds.samples {
                let split = s.split.unwrap();
                assert_eq!(*seen.entry(s.driver).or_insert(split), split);
            }
            assert_eq!(seen.len(), 50);
        }
    }

    #[test]
    fn split_depends_on_seed_only() {
        let a = split_by_driver(tiny(50, 1), &SplitSpec::default()).unwrap();
        let b = split_by_driver(tiny(50, 1), &SplitSpec::default()).unwrap();
        assert_eq!(a, b);
        let c = split_by_driver(
            tiny(50, 1),
            &SplitSpec {
                seed: 1,
                ..SplitSpec::default()
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dataset_rejects_bad_labels_and_shapes() {
        let t = Tensor::zeros(vec![2, 1, 1, 1]).unwrap();
        let u = Tensor::zeros(vec![3, 1, 1, 1]).unwrap();
        let sample = |label, views: Vec<Tensor>| Sample {
            id: "x".into(),
            label,
            driver: 0,
            views,
            split: None,
        };
        assert!(Dataset::new(4, vec![sample(4, vec![t.clone(), t.clone()])]).is_err());
        assert!(Dataset::new(4, vec![sample(0, vec![t.clone(), u])]).is_err());
        assert!(Dataset::new(4, vec![sample(0, vec![t.clone()])]).is_err());
        assert!(Dataset::new(4, vec![sample(0, vec![t.clone(), t])]).is_ok());
    }
}
