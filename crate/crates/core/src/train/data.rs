//! Synthetic oriented-bar images.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const CLASSES: usize = 4;

/// Single-channel square images, row-major, one label per image.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub hw: usize,
    pub images: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let px = self.hw * self.hw;
        &self.images[i * px..(i + 1) * px]
    }
}

/// Class 0: horizontal bar, 1: vertical, 2: diagonal, 3: anti-diagonal.
/// Bar pixels are 1, background 0, plus Gaussian noise of std `noise`.
pub fn oriented_bars(n: usize, hw: usize, noise: f64, rng: &mut ChaCha8Rng) -> Dataset {
    let normal = Normal::new(0.0, noise).expect("noise must be finite and non-negative");
    let mut images = vec![0.0; n * hw * hw];
    let mut labels = Vec::with_capacity(n);
    let span = hw as isize;
    for (i, img) in images.chunks_mut(hw * hw).enumerate() {
        let label = rng.gen_range(0..CLASSES);
        let offset = rng.gen_range(-(span / 4)..=span / 4);
        for y in 0..span {
            for x in 0..span {
                let on = match label {
                    0 => y == span / 2 + offset,
                    1 => x == span / 2 + offset,
                    2 => y - x == offset,
                    _ => x + y == span - 1 + offset,
                };
                img[(y * span + x) as usize] = f64::from(u8::from(on)) + normal.sample(rng);
            }
        }
        debug_assert_eq!(labels.len(), i);
        labels.push(label);
    }
    Dataset { hw, images, labels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn deterministic_and_balanced() {
        let a = oriented_bars(2000, 8, 0.3, &mut ChaCha8Rng::seed_from_u64(1));
        let b = oriented_bars(2000, 8, 0.3, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        for c in 0..CLASSES {
            let k = a.labels.iter().filter(|&&l| l == c).count();
            assert!((400..600).contains(&k), "class {c}: {k}");
        }
    }

    #[test]
    fn noiseless_bars_have_expected_pixels() {
        let d = oriented_bars(200, 8, 0.0, &mut ChaCha8Rng::seed_from_u64(2));
        for i in 0..d.len() {
            let img = d.image(i);
            let lit: Vec<(usize, usize)> = (0..64).filter(|&p| img[p] == 1.0).map(|p| (p / 8, p % 8)).collect();
            match d.labels[i] {
                0 => assert!(lit.len() == 8 && lit.iter().all(|&(y, _)| y == lit[0].0)),
                1 => assert!(lit.len() == 8 && lit.iter().all(|&(_, x)| x == lit[0].1)),
                2 => assert!(lit.len() >= 6 && lit.iter().all(|&(y, x)| y as isize - x as isize == lit[0].0 as isize - lit[0].1 as isize)),
                _ => assert!(lit.len() >= 6 && lit.iter().all(|&(y, x)| y + x == lit[0].0 + lit[0].1)),
            }
        }
    }
}
