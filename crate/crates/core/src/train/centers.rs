//! Binary centers that pull each layer's weight sets together.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::layer::{BinaryWeightSet, LayerShape};

/// Fixed center vectors for one binary layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CenterSet {
    centers: Vec<BinaryWeightSet>,
}

impl CenterSet {
    pub fn new(centers: Vec<BinaryWeightSet>) -> Result<Self> {
        let Some(first) = centers.first() else {
            return Err(Error::InvalidParameter("center set must be nonempty".into()));
        };
        let len = first.len();
        if let Some(c) = centers.iter().find(|c| c.len() != len) {
            return Err(Error::LengthMismatch { left: len, right: c.len() });
        }
        Ok(CenterSet { centers })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, i: usize) -> &BinaryWeightSet {
        &self.centers[i]
    }

    pub fn centers(&self) -> &[BinaryWeightSet] {
        &self.centers
    }

    pub fn full(&self) -> usize {
        self.centers[0].len()
    }
}

/// `n_centers` uniform ±1 vectors of length `c_in * m * m`.
pub fn sample_centers(shape: &LayerShape, n_centers: usize, seed: u64) -> Result<CenterSet> {
    if n_centers == 0 {
        return Err(Error::InvalidParameter("n_centers must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CenterSet::new((0..n_centers).map(|_| BinaryWeightSet::random(shape.full(), &mut rng)).collect())
}

/// Nearest center by Hamming distance for every channel; ties go to the smaller index.
pub fn assign_centers(weights: &[BinaryWeightSet], centers: &CenterSet) -> Result<Vec<usize>> {
    weights
        .iter()
        .map(|w| {
            let mut best = (u32::MAX, 0);
            for (k, c) in centers.centers.iter().enumerate() {
                let d = w.bits().hamming(c.bits())?;
                if d < best.0 {
                    best = (d, k);
                }
            }
            Ok(best.1)
        })
        .collect()
}

/// `sum_i ||c(i) - w_i||^2` over the ±1 entries. Unscaled.
pub fn mst_loss(weights: &[BinaryWeightSet], assignment: &[usize], centers: &CenterSet) -> Result<f64> {
    if weights.len() != assignment.len() {
        return Err(Error::LengthMismatch { left: weights.len(), right: assignment.len() });
    }
    let mut total = 0.0;
    for (w, &k) in weights.iter().zip(assignment) {
        let c = centers.centers.get(k).ok_or_else(|| Error::InvalidParameter(format!("center {k} out of range")))?;
        if c.len() != w.len() {
            return Err(Error::LengthMismatch { left: c.len(), right: w.len() });
        }
        total += c
            .bits()
            .to_signs()
            .iter()
            .zip(w.bits().to_signs())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total)
}

/// Expands each channel's assigned center into ±1 floats, row per channel.
pub(crate) fn center_targets(assignment: &[usize], centers: &CenterSet) -> Vec<f64> {
    assignment.iter().flat_map(|&k| centers.centers[k].bits().to_signs()).collect()
}

pub(crate) fn bits_of_rows(rows: &[f64], width: usize) -> Vec<BinaryWeightSet> {
    rows.chunks(width)
        .map(|r| BinaryWeightSet::new(BitVec::from_bools(r.iter().map(|&x| x >= 0.0))))
        .collect()
}
