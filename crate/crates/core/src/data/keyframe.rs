//! Keyframe selection by aggregate frame difference.
//!
//! A frame's score is the sum, over every other frame, of the L1 distance
//! between the two frames. The `n` highest-scoring frames are kept in their
//! original order; equal scores prefer the earlier frame.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Temporal axis of a C×T×W×H clip.
pub const TEMPORAL_AXIS: usize = 1;

fn frames(t: &Tensor, axis: usize) -> Result<Vec<Vec<f32>>> {
    let dims = t.dims();
    if axis >= dims.len() {
        return Err(Error::Shape(format!(
            "axis {axis} out of range for {dims:?}"
        )));
    }
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let len = dims[axis];
    Ok((0..len)
        .map(|f| {
            (0..outer)
                .flat_map(|o| {
                    let base = (o * len + f) * inner;
                    t.data()[base..base + inner].iter().copied()
                })
                .collect()
        })
        .collect())
}

/// Per-frame sum of L1 distances to all other frames along `axis`.
pub fn frame_difference_scores(t: &Tensor, axis: usize) -> Result<Vec<f64>> {
    let frames = frames(t, axis)?;
    let n = frames.len();
    let mut scores = vec![0.0f64; n];
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = frames[i]
                .iter()
                .zip(&frames[j])
                .map(|(&a, &b)| (a as f64 - b as f64).abs())
                .sum();
            scores[i] += d;
            scores[j] += d;
        }
    }
    Ok(scores)
}

/// Indices of the selected frames, ascending.
pub fn keyframe_indices(t: &Tensor, axis: usize, n: usize) -> Result<Vec<usize>> {
    let len = t
        .dims()
        .get(axis)
        .copied()
        .ok_or_else(|| Error::Shape(format!("axis {axis} out of range for {:?}", t.dims())))?;
    if n == 0 || n > len {
        return Err(Error::InvalidInput(format!(
            "keyframe count {n} outside [1, {len}]"
        )));
    }
    let scores = frame_difference_scores(t, axis)?;
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = order[..n].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

pub fn keyframe_select_axis(t: &Tensor, axis: usize, n: usize) -> Result<Tensor> {
    let keep = keyframe_indices(t, axis, n)?;
    let dims = t.dims();
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    let mut data = Vec::with_capacity(outer * n * inner);
    for o in 0..outer {
        for &f in &keep {
            let base = (o * dims[axis] + f) * inner;
            data.extend_from_slice(&t.data()[base..base + inner]);
        }
    }
    let mut out = dims.to_vec();
    out[axis] = n;
    Tensor::new(out, data)
}

/// Keeps the `n` most distinctive time steps of a C×T×W×H clip.
pub fn keyframe_select(frames: &Tensor, n: usize) -> Result<Tensor> {
    frames.expect_rank(4, "keyframe selection")?;
    keyframe_select_axis(frames, TEMPORAL_AXIS, n)
}
