//! Feature-level fusion of per-camera feature clips, plus the input-level
//! early-fusion baseline.
//!
//! Views are always combined in camera order (camera 1 first). More than two
//! views fold left in that order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FusionMode {
    #[serde(rename = "sum")]
    Sum,
    #[serde(rename = "concat-c")]
    ChannelConcat,
    #[serde(rename = "concat-t")]
    TemporalConcat,
    /// Temporal concatenation applied to the raw inputs rather than to
    /// extracted features.
    #[serde(rename = "early")]
    EarlyTemporal,
}

impl FusionMode {
    pub const ALL: [FusionMode; 4] = [
        FusionMode::Sum,
        FusionMode::ChannelConcat,
        FusionMode::TemporalConcat,
        FusionMode::EarlyTemporal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Sum => "sum",
            FusionMode::ChannelConcat => "concat-c",
            FusionMode::TemporalConcat => "concat-t",
            FusionMode::EarlyTemporal => "early",
        }
    }

    /// Pooled feature length seen by the head for `channels`-channel views.
    pub fn pooled_len(self, channels: usize) -> usize {
        match self {
            FusionMode::ChannelConcat => 2 * channels,
            _ => channels,
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown fusion mode {s:?} (expected sum, concat-c, concat-t or early)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature {
    pub tensor: Tensor,
    pub mode: FusionMode,
    pub source_shapes: Vec<Vec<usize>>,
}

fn check_pair(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    a.expect_rank(4, what)?;
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "{what}: view shapes differ ({:?} vs {:?})",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

fn sum_tensors(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.dims().to_vec(), data)
        .map_err(|e| Error::Numeric(format!("sum fusion overflowed: {e}")))
}

fn concat_axis(a: &Tensor, b: &Tensor, axis: usize) -> Result<Tensor> {
    let dims = a.dims();
    let outer: usize = dims[..axis].iter().product();
    let a_block: usize = a.dims()[axis..].iter().product();
    let b_block: usize = b.dims()[axis..].iter().product();
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    for o in 0..outer {
        data.extend_from_slice(&a.data()[o * a_block..(o + 1) * a_block]);
        data.extend_from_slice(&b.data()[o * b_block..(o + 1) * b_block]);
    }
    let mut out_dims = dims.to_vec();
    out_dims[axis] = a.dims()[axis] + b.dims()[axis];
    Tensor::new(out_dims, data)
}

pub fn fuse_sum(a: &Tensor, b: &Tensor) -> Result<FusedFeature> {
    check_pair(a, b, "sum fusion")?;
    Ok(FusedFeature {
        tensor: sum_tensors(a, b)?,
        mode: FusionMode::Sum,
        source_shapes: vec![a.dims().to_vec(), b.dims().to_vec()],
    })
}

pub fn fuse_channel_concat(a: &Tensor, b: &Tensor) -> Result<FusedFeature> {
    check_pair(a, b, "channel concatenation")?;
    Ok(FusedFeature {
        tensor: concat_axis(a, b, 0)?,
        mode: FusionMode::ChannelConcat,
        source_shapes: vec![a.dims().to_vec(), b.dims().to_vec()],
    })
}

pub fn fuse_temporal_concat(a: &Tensor, b: &Tensor) -> Result<FusedFeature> {
    check_pair(a, b, "temporal concatenation")?;
    Ok(FusedFeature {
        tensor: concat_axis(a, b, 1)?,
        mode: FusionMode::TemporalConcat,
        source_shapes: vec![a.dims().to_vec(), b.dims().to_vec()],
    })
}

/// Input-level fusion: concatenates two raw input cubes along time, before any
/// feature mapping.
pub fn fuse_early(a_frames: &Tensor, b_frames: &Tensor) -> Result<Tensor> {
    check_pair(a_frames, b_frames, "early fusion")?;
    concat_axis(a_frames, b_frames, 1)
}

pub fn fuse(mode: FusionMode, a: &Tensor, b: &Tensor) -> Result<FusedFeature> {
    match mode {
        FusionMode::Sum => fuse_sum(a, b),
        FusionMode::ChannelConcat => fuse_channel_concat(a, b),
        FusionMode::TemporalConcat => fuse_temporal_concat(a, b),
        FusionMode::EarlyTemporal => Ok(FusedFeature {
            tensor: fuse_early(a, b)?,
            mode,
            source_shapes: vec![a.dims().to_vec(), b.dims().to_vec()],
        }),
    }
}

/// Fuses any number of views (camera order) by folding left.
pub fn fuse_views(mode: FusionMode, views: &[&Tensor]) -> Result<FusedFeature> {
    let (first, rest) = views
        .split_first()
        .ok_or_else(|| Error::InvalidInput("no views to fuse".into()))?;
    first.expect_rank(4, "fusion")?;
    if let Some(bad) = rest.iter().find(|v| v.dims() != first.dims()) {
        return Err(Error::Shape(format!(
            "view shapes differ ({:?} vs {:?})",
            first.dims(),
            bad.dims()
        )));
    }
    let mut acc = (*first).clone();
    for v in rest {
        acc = match mode {
            FusionMode::Sum => sum_tensors(&acc, v)?,
            FusionMode::ChannelConcat => concat_axis(&acc, v, 0)?,
            FusionMode::TemporalConcat | FusionMode::EarlyTemporal => concat_axis(&acc, v, 1)?,
        };
    }
    Ok(FusedFeature {
        tensor: acc,
        mode,
        source_shapes: views.iter().map(|v| v.dims().to_vec()).collect(),
    })
}

/// Extracts `len` entries starting at `start` along `axis`. Used to recover
/// sources from a concatenation.
pub fn slice_axis(t: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let dims = t.dims();
    if axis >= dims.len() || len == 0 || start + len > dims[axis] {
        return Err(Error::Shape(format!(
            "slice [{start}, {}) on axis {axis} out of range for {dims:?}",
            start + len
        )));
    }
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let mut data = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = o * dims[axis] * inner;
        data.extend_from_slice(&t.data()[base + start * inner..base + (start + len) * inner]);
    }
    let mut out = dims.to_vec();
    out[axis] = len;
    Tensor::new(out, data)
}
