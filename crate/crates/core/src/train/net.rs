//! Small convolutional net with a real stem, binary 3x3 layers, global average
//! pooling and a real classifier. Activations are stored channel-last,
//! one row per (image, pixel).

use rand::Rng;

use crate::layer::LayerShape;

const K: usize = 3;

/// How the sign functions behave in the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// `sign` forward; clip-STE for weights, polynomial surrogate for activations.
    Hard,
    /// Hard-tanh weights and the piecewise-polynomial activation, differentiated exactly.
    Soft,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetSpec {
    pub hw: usize,
    pub stem: usize,
    pub binary: Vec<usize>,
    pub classes: usize,
}

impl NetSpec {
    /// 8x8 input, stem to 8 channels, binary 8->16->16, 4 classes.
    pub fn toy() -> Self {
        NetSpec { hw: 8, stem: 8, binary: vec![16, 16], classes: 4 }
    }

    pub fn binary_shapes(&self) -> Vec<LayerShape> {
        let mut c_in = self.stem;
        self.binary
            .iter()
            .map(|&c_out| {
                let s = LayerShape::same(c_out, c_in, K, self.hw, self.hw).expect("toy shapes are valid");
                c_in = c_out;
                s
            })
            .collect()
    }

    fn last_channels(&self) -> usize {
        *self.binary.last().unwrap_or(&self.stem)
    }
}

/// All trainable tensors. Binary layers keep real-valued latent weights,
/// one row of `c_in * 9` per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub stem_w: Vec<f64>,
    pub stem_b: Vec<f64>,
    pub bin_w: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub fc_w: Vec<f64>,
    pub fc_b: Vec<f64>,
}

impl Params {
    pub fn init<R: Rng + ?Sized>(spec: &NetSpec, rng: &mut R) -> Self {
        let mut uniform = |n: usize, bound: f64| (0..n).map(|_| rng.gen_range(-bound..bound)).collect::<Vec<f64>>();
        let stem_w = uniform(spec.stem * K * K, 1.0 / 3.0);
        let stem_b = vec![0.0; spec.stem];
        let bin_w = spec.binary_shapes().iter().map(|s| uniform(s.c_out * s.full(), 0.1)).collect();
        let c = spec.last_channels();
        let fc_w = uniform(spec.classes * c, 1.0 / (c as f64).sqrt());
        Params { stem_w, stem_b, bin_w, alpha: vec![1.0; spec.binary.len()], fc_w, fc_b: vec![0.0; spec.classes] }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |v: &Vec<f64>| vec![0.0; v.len()];
        Params {
            stem_w: z(&self.stem_w),
            stem_b: z(&self.stem_b),
            bin_w: self.bin_w.iter().map(z).collect(),
            alpha: z(&self.alpha),
            fc_w: z(&self.fc_w),
            fc_b: z(&self.fc_b),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.stem_w, &self.stem_b];
        v.extend(self.bin_w.iter().map(|w| w.as_slice()));
        v.extend([self.alpha.as_slice(), &self.fc_w, &self.fc_b]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.stem_w, &mut self.stem_b];
        v.extend(self.bin_w.iter_mut().map(|w| w.as_mut_slice()));
        v.extend([self.alpha.as_mut_slice(), &mut self.fc_w, &mut self.fc_b]);
        v
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Distance regularizer: per binary layer, each channel's assigned center
/// as ±1 rows, and the combined factor `lambda * gamma`.
pub struct Regularizer<'a> {
    pub targets: &'a [Vec<f64>],
    pub coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOut {
    pub loss: f64,
    pub ce: f64,
    /// Unscaled `sum ||c - w_b||^2` over all binary layers.
    pub reg: f64,
    pub correct: usize,
}

pub fn approx_sign(x: f64) -> f64 {
    if x < -1.0 {
        -1.0
    } else if x < 0.0 {
        2.0 * x + x * x
    } else if x < 1.0 {
        2.0 * x - x * x
    } else {
        1.0
    }
}

/// Derivative of [`approx_sign`], also the backward of the hard activation sign.
pub fn approx_sign_grad(x: f64) -> f64 {
    if (-1.0..0.0).contains(&x) {
        2.0 + 2.0 * x
    } else if (0.0..1.0).contains(&x) {
        2.0 - 2.0 * x
    } else {
        0.0
    }
}

fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn binarize_weight(mode: Mode, w: f64) -> (f64, f64) {
    match mode {
        Mode::Hard => (sign(w), if w.abs() <= 1.0 { 1.0 } else { 0.0 }),
        Mode::Soft => (w.clamp(-1.0, 1.0), if w.abs() < 1.0 { 1.0 } else { 0.0 }),
    }
}

fn activate(mode: Mode, z: f64) -> f64 {
    match mode {
        Mode::Hard => sign(z),
        Mode::Soft => approx_sign(z),
    }
}

/// `c = a * b + beta * c` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: (&[f64], usize, usize), b: (&[f64], usize, usize), c: (&mut [f64], usize, usize), beta: f64) {
    let span = |rows: usize, cols: usize, rs: usize, cs: usize| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.0.len() >= span(m, k, a.1, a.2));
    assert!(b.0.len() >= span(k, n, b.1, b.2));
    assert!(c.0.len() >= span(m, n, c.1, c.2));
    // SAFETY: the asserts above keep every strided access in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.0.as_mut_ptr(),
            c.1 as isize,
            c.2 as isize,
        );
    }
}

/// Patch matrix for a same-padded 3x3 convolution: row `(b, y, x)`,
/// column `(ci * 3 + ky) * 3 + kx`.
fn im2col(input: &[f64], batch: usize, hw: usize, c: usize, pad: f64) -> Vec<f64> {
    let width = c * K * K;
    let mut cols = vec![pad; batch * hw * hw * width];
    for b in 0..batch {
        for y in 0..hw {
            for x in 0..hw {
                let row = &mut cols[((b * hw + y) * hw + x) * width..][..width];
                for ky in 0..K {
                    let iy = (y + ky).wrapping_sub(1);
                    if iy >= hw {
                        continue;
                    }
                    for kx in 0..K {
                        let ix = (x + kx).wrapping_sub(1);
                        if ix >= hw {
                            continue;
                        }
                        let src = &input[((b * hw + iy) * hw + ix) * c..][..c];
                        for (ci, &v) in src.iter().enumerate() {
                            row[(ci * K + ky) * K + kx] = v;
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(dcols: &[f64], batch: usize, hw: usize, c: usize) -> Vec<f64> {
    let width = c * K * K;
    let mut out = vec![0.0; batch * hw * hw * c];
    for b in 0..batch {
        for y in 0..hw {
            for x in 0..hw {
                let row = &dcols[((b * hw + y) * hw + x) * width..][..width];
                for ky in 0..K {
                    let iy = (y + ky).wrapping_sub(1);
                    if iy >= hw {
                        continue;
                    }
                    for kx in 0..K {
                        let ix = (x + kx).wrapping_sub(1);
                        if ix >= hw {
                            continue;
                        }
                        let dst = &mut out[((b * hw + iy) * hw + ix) * c..][..c];
                        for (ci, d) in dst.iter_mut().enumerate() {
                            *d += row[(ci * K + ky) * K + kx];
                        }
                    }
                }
            }
        }
    }
    out
}

struct BinaryCache {
    cols: Vec<f64>,
    wb: Vec<f64>,
    dwb: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

/// Loss over a batch; fills `grad` (overwriting it) when given.
pub fn loss_and_grad(
    spec: &NetSpec,
    p: &Params,
    mode: Mode,
    images: &[f64],
    labels: &[usize],
    reg: Option<&Regularizer>,
    grad: Option<&mut Params>,
) -> StepOut {
    let batch = labels.len();
    let hw = spec.hw;
    let px = hw * hw;
    let rows = batch * px;
    assert_eq!(images.len(), rows);

    // stem
    let cols0 = im2col(images, batch, hw, 1, 0.0);
    let mut z0 = vec![0.0; rows * spec.stem];
    for r in z0.chunks_mut(spec.stem) {
        r.copy_from_slice(&p.stem_b);
    }
    gemm(rows, K * K, spec.stem, (&cols0, K * K, 1), (&p.stem_w, 1, K * K), (&mut z0, spec.stem, 1), 1.0);
    let mut act: Vec<f64> = z0.iter().map(|&z| activate(mode, z)).collect();

    // binary layers
    let shapes = spec.binary_shapes();
    let mut caches: Vec<BinaryCache> = Vec::with_capacity(shapes.len());
    let mut reg_sum = 0.0;
    for (l, s) in shapes.iter().enumerate() {
        let width = s.full();
        let (wb, dwb): (Vec<f64>, Vec<f64>) = p.bin_w[l].iter().map(|&w| binarize_weight(mode, w)).unzip();
        if let Some(r) = reg {
            reg_sum += r.targets[l].iter().zip(&wb).map(|(t, w)| (t - w) * (t - w)).sum::<f64>();
        }
        let cols = im2col(&act, batch, hw, s.c_in, -1.0);
        let mut y = vec![0.0; rows * s.c_out];
        gemm(rows, width, s.c_out, (&cols, width, 1), (&wb, 1, width), (&mut y, s.c_out, 1), 0.0);
        let scale = p.alpha[l] / (width as f64).sqrt();
        let z: Vec<f64> = y.iter().map(|v| v * scale).collect();
        if l + 1 < shapes.len() {
            act = z.iter().map(|&v| activate(mode, v)).collect();
        }
        caches.push(BinaryCache { cols, wb, dwb, y, z });
    }
    let (c_last, feat) = match caches.last() {
        Some(c) => (spec.last_channels(), &c.z),
        None => (spec.stem, &act),
    };

    // pool and classify
    let mut pooled = vec![0.0; batch * c_last];
    for b in 0..batch {
        for q in 0..px {
            for c in 0..c_last {
                pooled[b * c_last + c] += feat[(b * px + q) * c_last + c];
            }
        }
    }
    pooled.iter_mut().for_each(|v| *v /= px as f64);
    let mut logits = vec![0.0; batch * spec.classes];
    for r in logits.chunks_mut(spec.classes) {
        r.copy_from_slice(&p.fc_b);
    }
    gemm(batch, c_last, spec.classes, (&pooled, c_last, 1), (&p.fc_w, 1, c_last), (&mut logits, spec.classes, 1), 1.0);

    let mut ce = 0.0;
    let mut correct = 0;
    let mut dlogits = vec![0.0; batch * spec.classes];
    for b in 0..batch {
        let row = &logits[b * spec.classes..][..spec.classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        ce += max + sum.ln() - row[labels[b]];
        let pred = row.iter().position(|&v| v == max).unwrap_or(0);
        correct += usize::from(pred == labels[b]);
        for (c, d) in dlogits[b * spec.classes..][..spec.classes].iter_mut().enumerate() {
            *d = ((row[c] - max).exp() / sum - f64::from(u8::from(c == labels[b]))) / batch as f64;
        }
    }
    ce /= batch as f64;
    let coef = reg.map_or(0.0, |r| r.coef);
    let out = StepOut { loss: ce + coef * reg_sum, ce, reg: reg_sum, correct };

    let Some(g) = grad else {
        return out;
    };

    gemm(spec.classes, batch, c_last, (&dlogits, 1, spec.classes), (&pooled, c_last, 1), (&mut g.fc_w, c_last, 1), 0.0);
    for (c, gb) in g.fc_b.iter_mut().enumerate() {
        *gb = (0..batch).map(|b| dlogits[b * spec.classes + c]).sum();
    }
    let mut dpooled = vec![0.0; batch * c_last];
    gemm(batch, spec.classes, c_last, (&dlogits, spec.classes, 1), (&p.fc_w, c_last, 1), (&mut dpooled, c_last, 1), 0.0);
    let mut dz = vec![0.0; rows * c_last];
    for b in 0..batch {
        for q in 0..px {
            for c in 0..c_last {
                dz[(b * px + q) * c_last + c] = dpooled[b * c_last + c] / px as f64;
            }
        }
    }

    for l in (0..shapes.len()).rev() {
        let s = &shapes[l];
        let width = s.full();
        let cache = &caches[l];
        let scale = 1.0 / (width as f64).sqrt();
        g.alpha[l] = scale * dz.iter().zip(&cache.y).map(|(d, y)| d * y).sum::<f64>();
        let dy: Vec<f64> = dz.iter().map(|d| d * p.alpha[l] * scale).collect();
        let gw = &mut g.bin_w[l];
        gemm(s.c_out, rows, width, (&dy, 1, s.c_out), (&cache.cols, width, 1), (gw, width, 1), 0.0);
        if let Some(r) = reg {
            for ((gw, &wb), &t) in gw.iter_mut().zip(&cache.wb).zip(&r.targets[l]) {
                *gw += 2.0 * r.coef * (wb - t);
            }
        }
        for (gw, &d) in gw.iter_mut().zip(&cache.dwb) {
            *gw *= d;
        }
        let mut dcols = vec![0.0; rows * width];
        gemm(rows, s.c_out, width, (&dy, s.c_out, 1), (&cache.wb, width, 1), (&mut dcols, width, 1), 0.0);
        let dact = col2im(&dcols, batch, hw, s.c_in);
        let pre = if l == 0 { &z0 } else { &caches[l - 1].z };
        dz = dact.iter().zip(pre).map(|(d, &z)| d * approx_sign_grad(z)).collect();
    }

    gemm(spec.stem, rows, K * K, (&dz, 1, spec.stem), (&cols0, K * K, 1), (&mut g.stem_w, K * K, 1), 0.0);
    for (c, gb) in g.stem_b.iter_mut().enumerate() {
        *gb = (0..rows).map(|r| dz[r * spec.stem + c]).sum();
    }
    out
}
