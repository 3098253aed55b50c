//! Binary layer types.
//!
//! Flat weight index order within a weight set is
//! `(input channel, kernel row, kernel column)`, row-major. Activation maps use
//! `(channel, row, column)`. The same order is used everywhere in the crate.

use rand::Rng;

use crate::bits::BitVec;
use crate::error::{Error, Result};

/// Geometry of a stride-1 square-kernel binary convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerShape {
    pub c_out: usize,
    pub c_in: usize,
    pub m: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub pad: usize,
}

const MAX_BITS: u64 = u32::MAX as u64;

impl LayerShape {
    pub fn new(c_out: usize, c_in: usize, m: usize, h_in: usize, w_in: usize, pad: usize) -> Result<Self> {
        let shape = LayerShape { c_out, c_in, m, h_in, w_in, pad };
        shape.validate()?;
        Ok(shape)
    }

    /// Same-padding shape: `pad = (m - 1) / 2`.
    pub fn same(c_out: usize, c_in: usize, m: usize, h_in: usize, w_in: usize) -> Result<Self> {
        Self::new(c_out, c_in, m, h_in, w_in, m.saturating_sub(1) / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_out == 0 || self.c_in == 0 || self.m == 0 {
            return Err(Error::InvalidShape(format!(
                "c_out, c_in and m must be positive (got {}, {}, {})",
                self.c_out, self.c_in, self.m
            )));
        }
        if self.m.is_multiple_of(2) {
            return Err(Error::InvalidShape(format!("kernel side {} is not odd", self.m)));
        }
        if self.h_in == 0 || self.w_in == 0 {
            return Err(Error::InvalidShape("input spatial dims must be positive".into()));
        }
        let full = (self.c_in as u64)
            .checked_mul(self.m as u64)
            .and_then(|x| x.checked_mul(self.m as u64));
        let act = (self.c_in as u64)
            .checked_mul(self.h_in as u64)
            .and_then(|x| x.checked_mul(self.w_in as u64));
        let total = full.and_then(|f| f.checked_mul(self.c_out as u64));
        match (full, act, total) {
            (Some(f), Some(a), Some(t)) if f <= MAX_BITS && a <= MAX_BITS && t <= MAX_BITS => {}
            _ => return Err(Error::ShapeOverflow(format!("{self:?}"))),
        }
        if self.h_in + 2 * self.pad < self.m || self.w_in + 2 * self.pad < self.m {
            return Err(Error::InvalidShape(format!(
                "kernel {} larger than padded input {}x{}",
                self.m,
                self.h_in + 2 * self.pad,
                self.w_in + 2 * self.pad
            )));
        }
        Ok(())
    }

    /// Per-channel weight count, which is also the XNOR count of one full channel evaluation.
    #[inline]
    pub fn full(&self) -> usize {
        self.c_in * self.m * self.m
    }

    #[inline]
    pub fn h_out(&self) -> usize {
        self.h_in + 2 * self.pad + 1 - self.m
    }

    #[inline]
    pub fn w_out(&self) -> usize {
        self.w_in + 2 * self.pad + 1 - self.m
    }

    #[inline]
    pub fn weight_index(&self, ci: usize, ky: usize, kx: usize) -> usize {
        (ci * self.m + ky) * self.m + kx
    }
}

/// The ±1 weights feeding one output channel, packed (bit 1 = `+1`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryWeightSet {
    bits: BitVec,
}

impl BinaryWeightSet {
    pub fn new(bits: BitVec) -> Self {
        BinaryWeightSet { bits }
    }

    pub fn from_signs(signs: &[i8]) -> Self {
        BinaryWeightSet { bits: BitVec::from_signs(signs) }
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let words: Vec<u64> = (0..len.div_ceil(64)).map(|_| rng.gen()).collect();
        BinaryWeightSet { bits: BitVec::from_words(words, len) }
    }

    #[inline]
    pub fn bits(&self) -> &BitVec {
        &self.bits
    }

    pub fn into_bits(self) -> BitVec {
        self.bits
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.bits.get(i)
    }
}

/// Hamming distance `d_ij` between two weight sets.
pub fn hamming(a: &BinaryWeightSet, b: &BinaryWeightSet) -> Result<u32> {
    a.bits.hamming(&b.bits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryLayer {
    shape: LayerShape,
    weights: Vec<BinaryWeightSet>,
    alpha: f64,
}

impl BinaryLayer {
    pub fn new(shape: LayerShape, weights: Vec<BinaryWeightSet>, alpha: f64) -> Result<Self> {
        shape.validate()?;
        if weights.len() != shape.c_out {
            return Err(Error::ShapeMismatch(format!(
                "{} weight sets for c_out = {}",
                weights.len(),
                shape.c_out
            )));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| w.len() != shape.full()) {
            return Err(Error::ShapeMismatch(format!(
                "weight set {i} has {} bits, expected {}",
                w.len(),
                shape.full()
            )));
        }
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha {alpha} is not finite")));
        }
        Ok(BinaryLayer { shape, weights, alpha })
    }

    /// Uniform random ±1 weights with `alpha = 1`.
    pub fn random<R: Rng + ?Sized>(shape: LayerShape, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        let weights = (0..shape.c_out).map(|_| BinaryWeightSet::random(shape.full(), rng)).collect();
        Self::new(shape, weights, 1.0)
    }

    #[inline]
    pub fn shape(&self) -> &LayerShape {
        &self.shape
    }

    #[inline]
    pub fn weights(&self) -> &[BinaryWeightSet] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, channel: usize) -> &BinaryWeightSet {
        &self.weights[channel]
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
}

/// Binary input feature map; padding is never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryActivationMap {
    pub c_in: usize,
    pub h_in: usize,
    pub w_in: usize,
    bits: BitVec,
}

impl BinaryActivationMap {
    pub fn new(c_in: usize, h_in: usize, w_in: usize, bits: BitVec) -> Result<Self> {
        let expected = c_in
            .checked_mul(h_in)
            .and_then(|x| x.checked_mul(w_in))
            .ok_or_else(|| Error::ShapeOverflow(format!("activation {c_in}x{h_in}x{w_in}")))?;
        if expected as u64 > MAX_BITS {
            return Err(Error::ShapeOverflow(format!("activation {c_in}x{h_in}x{w_in}")));
        }
        if bits.len() != expected {
            return Err(Error::LengthMismatch { left: bits.len(), right: expected });
        }
        Ok(BinaryActivationMap { c_in, h_in, w_in, bits })
    }

    pub fn random<R: Rng + ?Sized>(c_in: usize, h_in: usize, w_in: usize, rng: &mut R) -> Result<Self> {
        let len = c_in * h_in * w_in;
        let words = (0..len.div_ceil(64)).map(|_| rng.gen()).collect();
        Self::new(c_in, h_in, w_in, BitVec::from_words(words, len))
    }

    /// Activation map matching the input side of `shape`.
    pub fn random_for<R: Rng + ?Sized>(shape: &LayerShape, rng: &mut R) -> Result<Self> {
        Self::random(shape.c_in, shape.h_in, shape.w_in, rng)
    }

    #[inline]
    pub fn bits(&self) -> &BitVec {
        &self.bits
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> bool {
        self.bits.get((c * self.h_in + y) * self.w_in + x)
    }

    pub fn check_compatible(&self, shape: &LayerShape) -> Result<()> {
        if self.c_in != shape.c_in || self.h_in != shape.h_in || self.w_in != shape.w_in {
            return Err(Error::ShapeMismatch(format!(
                "activation {}x{}x{} does not match layer input {}x{}x{}",
                self.c_in, self.h_in, self.w_in, shape.c_in, shape.h_in, shape.w_in
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_hamming(a: &BinaryWeightSet, b: &BinaryWeightSet) -> u32 {
        (0..a.len()).filter(|&i| a.get(i) != b.get(i)).count() as u32
    }

    #[test]
    fn shape_rules() {
        assert!(LayerShape::new(1, 1, 1, 1, 1, 0).is_ok());
        assert!(matches!(LayerShape::new(0, 1, 3, 4, 4, 1), Err(Error::InvalidShape(_))));
        assert!(matches!(LayerShape::new(1, 1, 2, 4, 4, 1), Err(Error::InvalidShape(_))));
        assert!(matches!(LayerShape::new(1, usize::MAX / 2, 3, 4, 4, 1), Err(Error::ShapeOverflow(_))));
        let s = LayerShape::same(16, 16, 3, 32, 32).unwrap();
        assert_eq!((s.full(), s.h_out(), s.w_out(), s.pad), (144, 32, 32, 1));
    }

    #[test]
    fn hamming_identity_and_complement() {
        let a = BinaryWeightSet::from_signs(&[1, -1, 1, 1, -1, -1, 1, -1, 1]);
        assert_eq!(hamming(&a, &a).unwrap(), 0);
        let not_a = BinaryWeightSet::new(a.bits().not());
        assert_eq!(hamming(&a, &not_a).unwrap(), 9);
    }

    #[test]
    fn hamming_length_mismatch() {
        let a = BinaryWeightSet::new(BitVec::zeros(9));
        let b = BinaryWeightSet::new(BitVec::zeros(8));
        assert!(matches!(hamming(&a, &b), Err(Error::LengthMismatch { left: 9, right: 8 })));
    }

    #[test]
    fn hamming_matches_bit_loop_on_144_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = BinaryWeightSet::random(144, &mut rng);
            let b = BinaryWeightSet::random(144, &mut rng);
            assert_eq!(hamming(&a, &b).unwrap(), naive_hamming(&a, &b));
        }
    }

    #[test]
    fn hamming_is_metric_on_all_6_bit_sets() {
        let sets: Vec<BinaryWeightSet> = (0u64..64)
            .map(|v| BinaryWeightSet::new(BitVec::from_words(vec![v], 6)))
            .collect();
        for a in &sets {
            assert_eq!(hamming(a, a).unwrap(), 0);
            for b in &sets {
                let ab = hamming(a, b).unwrap();
                assert_eq!(ab, hamming(b, a).unwrap());
                for c in &sets {
                    assert!(ab <= hamming(a, c).unwrap() + hamming(c, b).unwrap());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn hamming_metric_random(seed in any::<u64>(), len in 1usize..400) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = BinaryWeightSet::random(len, &mut rng);
            let b = BinaryWeightSet::random(len, &mut rng);
            let c = BinaryWeightSet::random(len, &mut rng);
            let ab = hamming(&a, &b).unwrap();
            prop_assert_eq!(ab, naive_hamming(&a, &b));
            prop_assert_eq!(ab, hamming(&b, &a).unwrap());
            prop_assert!(ab as usize <= len);
            prop_assert!(ab <= hamming(&a, &c).unwrap() + hamming(&c, &b).unwrap());
        }
    }

    #[test]
    fn layer_rejects_wrong_channel_count() {
        let shape = LayerShape::same(2, 1, 3, 4, 4).unwrap();
        let w = vec![BinaryWeightSet::new(BitVec::zeros(9))];
        assert!(matches!(BinaryLayer::new(shape, w, 1.0), Err(Error::ShapeMismatch(_))));
    }
}
