//! Dense tensor substrate and seeded randomness.
//!
//! Tensors are stored row-major as `f32`. Reductions accumulate in `f64`.
//! Feature clips use the dimension order (channel, temporal, width, height).

use crate::error::{Error, Result};

/// Row-major dense `f32` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel = checked_numel(&dims)?;
        if data.len() != numel {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {numel} elements, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite element {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: Vec<usize>, value: f32) -> Result<Self> {
        let numel = checked_numel(&dims)?;
        Tensor::new(dims, vec![value; numel])
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in row-major order.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f32) -> Result<Self> {
        let numel = checked_numel(&dims)?;
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(f(&idx));
            for axis in (0..dims.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < dims[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Tensor::new(dims, data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f32>) {
        (self.dims, self.data)
    }

    /// Flat offset of a multi-index, or `None` if it is out of bounds.
    pub fn offset(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.dims.len() {
            return None;
        }
        let mut off = 0usize;
        for (&i, &d) in index.iter().zip(&self.dims) {
            if i >= d {
                return None;
            }
            off = off * d + i;
        }
        Some(off)
    }

    pub fn get(&self, index: &[usize]) -> Option<f32> {
        self.offset(index).map(|o| self.data[o])
    }

    pub(crate) fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::Shape(format!(
                "{what}: expected rank {rank}, got dims {:?}",
                self.dims
            )));
        }
        Ok(())
    }
}

fn checked_numel(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::Shape("tensor needs at least one dimension".into()));
    }
    if let Some(a) = dims.iter().position(|&d| d == 0) {
        return Err(Error::Shape(format!("dimension {a} is zero in {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Shape(format!("element count of {dims:?} overflows")))
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("softmax input is not finite".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Mean over the temporal and spatial axes of a C×T×W×H tensor.
pub fn global_average_pool(feature: &Tensor) -> Result<Vec<f32>> {
    feature.expect_rank(4, "global_average_pool")?;
    let channels = feature.dims[0];
    let per_channel = feature.numel() / channels;
    Ok(feature
        .data
        .chunks_exact(per_channel)
        .map(|chunk| {
            let sum: f64 = chunk.iter().map(|&v| v as f64).sum();
            (sum / per_channel as f64) as f32
        })
        .collect())
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based generator (SplitMix64 output function over a Weyl sequence).
///
/// Draw `i` of a stream is `mix64(key + (i + 1) * GOLDEN_GAMMA)`, so a stream is
/// fully determined by its key and reproducible in any language with wrapping
/// 64-bit arithmetic. Normals use Box-Muller and consume two draws per pair.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    key: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            key: seed,
            counter: 0,
            spare_normal: None,
        }
    }

    /// Independent sub-stream identified by `(seed, stream)`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        Rng {
            seed,
            key: mix64(seed ^ mix64(stream.wrapping_add(GOLDEN_GAMMA))),
            counter: 0,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(
            self.key
                .wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)),
        )
    }

    /// Uniform in the open interval (0, 1).
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift; `n > 0`).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "Rng::below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// `n` draws from N(mean, std²).
pub fn rng_normal(rng: &mut Rng, n: usize, mean: f64, std: f64) -> Result<Vec<f64>> {
    if !std.is_finite() || std < 0.0 || !mean.is_finite() {
        return Err(Error::InvalidInput(format!(
            "normal parameters must be finite with std >= 0 (mean {mean}, std {std})"
        )));
    }
    Ok((0..n).map(|_| mean + std * rng.standard_normal()).collect())
}

#[cfg(test)]
mod tests {
    use super::Rng;
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_symmetric_pair() {
        let p = softmax(&[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_large_logit_does_not_overflow() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!(close(p[0], 1.0, 1e-12));
        assert!(p[1] < 1e-300);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_log_ratios() {
        let p = softmax(&[7f64.ln(), 2f64.ln(), 1f64.ln()]).unwrap();
        for (got, want) in p.iter().zip([0.7, 0.2, 0.1]) {
            assert!(close(*got, want, 1e-12), "{got} vs {want}");
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(matches!(
            softmax(&[0.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(softmax(&[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn pool_constant_tensor() {
        let t = Tensor::filled(vec![2, 4, 7, 7], 1.0).unwrap();
        assert_eq!(global_average_pool(&t).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn pool_per_channel_constant() {
        let t = Tensor::from_fn(vec![2, 3, 2, 2], |i| if i[0] == 0 { 0.0 } else { 2.0 }).unwrap();
        assert_eq!(global_average_pool(&t).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn pool_matches_element_loop() {
        let mut rng = Rng::new(3);
        let t = Tensor::from_fn(vec![3, 2, 2, 2], |_| rng.standard_normal() as f32).unwrap();
        let pooled = global_average_pool(&t).unwrap();
        for (c, &got) in pooled.iter().enumerate() {
            let mut sum = 0.0f64;
            for ti in 0..2 {
                for w in 0..2 {
                    for h in 0..2 {
                        sum += t.get(&[c, ti, w, h]).unwrap() as f64;
                    }
                }
            }
            assert!(close(got as f64, sum / 8.0, 1e-6));
        }
    }

    #[test]
    fn pool_rejects_wrong_rank() {
        let t = Tensor::zeros(vec![2, 3]).unwrap();
        assert!(matches!(global_average_pool(&t), Err(Error::Shape(_))));
    }

    #[test]
    fn tensor_validates() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![1], vec![f32::INFINITY]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
        let t = Tensor::from_fn(vec![2, 3], |i| (i[0] * 10 + i[1]) as f32).unwrap();
        assert_eq!(t.get(&[1, 2]), Some(12.0));
        assert_eq!(t.get(&[2, 0]), None);
    }

    #[test]
    fn rng_is_deterministic() {
        let a = rng_normal(&mut Rng::new(42), 64, 0.0, 1.0).unwrap();
        let b = rng_normal(&mut Rng::new(42), 64, 0.0, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rng_zero_std_is_constant() {
        let v = rng_normal(&mut Rng::new(1), 100, 3.5, 0.0).unwrap();
        assert!(v.iter().all(|&x| x == 3.5));
    }

    #[test]
    fn rng_negative_std_rejected() {
        assert!(matches!(
            rng_normal(&mut Rng::new(1), 1, 0.0, -1.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rng_sample_mean_converges() {
        let v = rng_normal(&mut Rng::new(7), 1_000_000, 0.0, 1.0).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn rng_first_draws_pin_the_stream() {
        // Frozen so other implementations of the generator can be checked against it.
        let mut rng = Rng::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn rng_seed_pairs_differ() {
        for s in 0..100u64 {
            let mut a = Rng::new(s);
            let mut b = Rng::new(s + 1000);
            let da: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
            let db: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
            assert_ne!(da, db);
        }
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(logits in prop::collection::vec(-50.0f64..50.0, 1..32)) {
            let p = softmax(&logits).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }

        #[test]
        fn softmax_shift_invariant(
            logits in prop::collection::vec(-20.0f64..20.0, 1..32),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&logits).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn pool_commutes_with_channel_permutation(seed in any::<u64>(), c in 1usize..6) {
            let mut rng = Rng::new(seed);
            let t = Tensor::from_fn(vec![c, 2, 3, 2], |_| rng.standard_normal() as f32).unwrap();
            let mut perm: Vec<usize> = (0..c).collect();
            rng.shuffle(&mut perm);
            let permuted = Tensor::from_fn(vec![c, 2, 3, 2], |i| {
                t.get(&[perm[i[0]], i[1], i[2], i[3]]).unwrap()
            }).unwrap();
            let p = global_average_pool(&t).unwrap();
            let q = global_average_pool(&permuted).unwrap();
            for k in 0..c {
                prop_assert_eq!(q[k], p[perm[k]]);
            }
        }
    }
}
