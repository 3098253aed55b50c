//! Bit-exact evaluation of a binary convolution, directly and through a reuse schedule.

use std::io::Write;

use crate::error::{Error, Result};
use crate::layer::{BinaryActivationMap, BinaryLayer, LayerShape};
use crate::schedule::ComputeSchedule;

/// Per-channel popcounts `P_i` over output pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopcountMap {
    pub c_out: usize,
    pub h_out: usize,
    pub w_out: usize,
    counts: Vec<u32>,
}

impl PopcountMap {
    pub fn get(&self, c: usize, y: usize, x: usize) -> u32 {
        self.counts[(c * self.h_out + y) * self.w_out + x]
    }

    pub fn channel(&self, c: usize) -> &[u32] {
        let px = self.h_out * self.w_out;
        &self.counts[c * px..(c + 1) * px]
    }

    /// `Y = 2P - full` for every entry.
    pub fn to_outputs(&self, full: usize, alpha: f64) -> OutputMap {
        let values = self.counts.iter().map(|&p| 2 * p as i32 - full as i32).collect();
        OutputMap { c_out: self.c_out, h_out: self.h_out, w_out: self.w_out, values, alpha }
    }
}

/// Integer outputs before scaling, plus the scale `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMap {
    pub c_out: usize,
    pub h_out: usize,
    pub w_out: usize,
    values: Vec<i32>,
    pub alpha: f64,
}

impl OutputMap {
    pub fn get(&self, c: usize, y: usize, x: usize) -> i32 {
        self.values[(c * self.h_out + y) * self.w_out + x]
    }

    pub fn channel(&self, c: usize) -> &[i32] {
        let px = self.h_out * self.w_out;
        &self.values[c * px..(c + 1) * px]
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn scaled(&self, c: usize, y: usize, x: usize) -> f64 {
        self.get(c, y, x) as f64 * self.alpha
    }
}

/// Receptive-field bits for every output pixel, laid out in weight-index order.
/// Padding positions are `-1` (bit 0).
struct Windows {
    words_per: usize,
    words: Vec<u64>,
}

impl Windows {
    fn build(shape: &LayerShape, act: &BinaryActivationMap) -> Windows {
        let full = shape.full();
        let words_per = full.div_ceil(64);
        let (h_out, w_out, m, pad) = (shape.h_out(), shape.w_out(), shape.m, shape.pad);
        let mut words = vec![0u64; h_out * w_out * words_per];
        for y in 0..h_out {
            for x in 0..w_out {
                let base = (y * w_out + x) * words_per;
                for ci in 0..shape.c_in {
                    for ky in 0..m {
                        let iy = (y + ky).wrapping_sub(pad);
                        if iy >= shape.h_in {
                            continue;
                        }
                        for kx in 0..m {
                            let ix = (x + kx).wrapping_sub(pad);
                            if ix < shape.w_in && act.get(ci, iy, ix) {
                                let k = shape.weight_index(ci, ky, kx);
                                words[base + k / 64] |= 1 << (k % 64);
                            }
                        }
                    }
                }
            }
        }
        Windows { words_per, words }
    }

    #[inline]
    fn pixel(&self, px: usize) -> &[u64] {
        &self.words[px * self.words_per..(px + 1) * self.words_per]
    }

    #[inline]
    fn bit(&self, px: usize, k: usize) -> bool {
        (self.words[px * self.words_per + k / 64] >> (k % 64)) & 1 == 1
    }

    fn pixels(&self) -> usize {
        self.words.len() / self.words_per.max(1)
    }
}

fn full_popcounts(win: &Windows, weights: &[u64], full: usize, out: &mut [u32]) {
    for (px, p) in out.iter_mut().enumerate() {
        // XNOR count = full - differing bits
        *p = full as u32 - crate::bits::hamming_words(win.pixel(px), weights);
    }
}

/// Direct XNOR-popcount convolution: every channel popcounts its full window.
pub fn direct_popcounts(layer: &BinaryLayer, act: &BinaryActivationMap) -> Result<PopcountMap> {
    let shape = layer.shape();
    act.check_compatible(shape)?;
    let win = Windows::build(shape, act);
    let px = shape.h_out() * shape.w_out();
    let mut counts = vec![0u32; shape.c_out * px];
    for (c, chunk) in counts.chunks_mut(px).enumerate() {
        full_popcounts(&win, layer.weight(c).bits().words(), shape.full(), chunk);
    }
    Ok(PopcountMap { c_out: shape.c_out, h_out: shape.h_out(), w_out: shape.w_out(), counts })
}

/// `Y_i = 2 * popcount(XNOR(window, w_i)) - full` for every channel and pixel.
pub fn direct_conv(layer: &BinaryLayer, act: &BinaryActivationMap) -> Result<OutputMap> {
    Ok(direct_popcounts(layer, act)?.to_outputs(layer.shape().full(), layer.alpha()))
}

/// Popcounts through the schedule: roots in full, every other channel from its
/// parent as `P_j = P_i - d + 2 P_ij`, where `P_ij` counts XNOR matches over the
/// `d` differing positions only.
pub fn reuse_popcounts(schedule: &ComputeSchedule, act: &BinaryActivationMap) -> Result<PopcountMap> {
    let shape = schedule.shape();
    act.check_compatible(shape)?;
    let full = shape.full();
    let win = Windows::build(shape, act);
    let px = win.pixels();
    let mut counts = vec![0u32; shape.c_out * px];
    let mut done = vec![false; shape.c_out];

    for &v in schedule.eval_order() {
        match schedule.parent(v) {
            None => {
                let w = schedule
                    .root_weights(v)
                    .ok_or_else(|| Error::InvalidSchedule(format!("root {v} has no weights")))?;
                full_popcounts(&win, w.bits().words(), full, &mut counts[v * px..(v + 1) * px]);
            }
            Some(p) => {
                if !done[p] {
                    return Err(Error::InvalidSchedule(format!("channel {v} scheduled before parent {p}")));
                }
                let diff = schedule.diff(v).entries();
                if let Some(&(pos, _)) = diff.iter().find(|(pos, _)| *pos as usize >= full) {
                    return Err(Error::DiffOutOfRange { channel: v, position: pos as usize, full });
                }
                let d = diff.len() as i64;
                for i in 0..px {
                    let matches = diff.iter().filter(|&&(pos, b)| win.bit(i, pos as usize) == b).count() as i64;
                    let pj = counts[p * px + i] as i64 - d + 2 * matches;
                    debug_assert!((0..=full as i64).contains(&pj));
                    counts[v * px + i] = pj as u32;
                }
            }
        }
        done[v] = true;
    }
    Ok(PopcountMap { c_out: shape.c_out, h_out: shape.h_out(), w_out: shape.w_out(), counts })
}

pub fn reuse_eval(schedule: &ComputeSchedule, act: &BinaryActivationMap) -> Result<OutputMap> {
    Ok(reuse_popcounts(schedule, act)?.to_outputs(schedule.shape().full(), schedule.alpha()))
}

/// Per-channel maximum absolute deviation between the two evaluation paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceReport {
    pub max_abs_diff: Vec<u32>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.max_abs_diff.iter().all(|&d| d == 0)
    }

    pub fn failing_channels(&self) -> Vec<usize> {
        self.max_abs_diff.iter().enumerate().filter(|(_, &d)| d != 0).map(|(c, _)| c).collect()
    }
}

/// Runs [`direct_conv`] and [`reuse_eval`] and compares them exactly.
pub fn assert_equivalent(
    layer: &BinaryLayer,
    act: &BinaryActivationMap,
    schedule: &ComputeSchedule,
) -> Result<EquivalenceReport> {
    if layer.shape() != schedule.shape() {
        return Err(Error::ShapeMismatch(format!(
            "layer {:?} vs schedule {:?}",
            layer.shape(),
            schedule.shape()
        )));
    }
    let direct = direct_conv(layer, act)?;
    let reused = reuse_eval(schedule, act)?;
    let max_abs_diff = (0..direct.c_out)
        .map(|c| {
            direct
                .channel(c)
                .iter()
                .zip(reused.channel(c))
                .map(|(a, b)| a.abs_diff(*b))
                .max()
                .unwrap_or(0)
        })
        .collect();
    Ok(EquivalenceReport { max_abs_diff })
}

/// Writes `alpha=<a>` and `shape=<c> <h> <w>` followed by `channel y x value` lines.
pub fn write_output_map<W: Write>(out: &OutputMap, mut sink: W) -> Result<()> {
    writeln!(sink, "alpha={}", out.alpha)?;
    writeln!(sink, "shape={} {} {}", out.c_out, out.h_out, out.w_out)?;
    for c in 0..out.c_out {
        for y in 0..out.h_out {
            for x in 0..out.w_out {
                writeln!(sink, "{c} {y} {x} {}", out.get(c, y, x))?;
            }
        }
    }
    sink.flush()?;
    Ok(())
}
