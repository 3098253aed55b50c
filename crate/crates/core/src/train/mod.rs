//! Toy-scale training with a distance-to-center regularizer on binary layers.
//!
//! Total loss is `CE + lambda * gamma * sum_i ||c(i) - w_b^i||^2`, where `c(i)`
//! is the nearest of a few fixed random binary centers and `gamma` follows the
//! learning rate.

pub mod centers;
pub mod data;
pub mod net;

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::format::write_bwt;
use crate::graph::{build_distance_graph, prim_mst, reroot_min_depth, tree_depth};
use crate::layer::{BinaryLayer, BinaryWeightSet};
use crate::schedule::{schedule_from_tree, ScheduleKind};

pub use centers::{assign_centers, mst_loss, sample_centers, CenterSet};
pub use data::{oriented_bars, Dataset};
pub use net::{loss_and_grad, Mode, NetSpec, Params, Regularizer, StepOut};

/// Regularizer strength used on the toy net: the VGG-small value 4e-6 times 25.
/// The toy layers are far smaller, so the distance term needs more weight to matter.
pub const TOY_LAMBDA: f64 = 1e-4;

/// Three-point sweep used for the lambda ablation.
pub const TOY_SWEEP: [f64; 3] = [0.0, 1e-4, 1e-3];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub gamma0: f64,
    pub epochs: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub n_centers: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub noise: f64,
    pub net: NetSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 4e-6,
            gamma0: 1.0,
            epochs: 20,
            lr0: 0.05,
            momentum: 0.9,
            batch_size: 32,
            seed: 0,
            n_centers: 1,
            n_train: 2048,
            n_test: 512,
            noise: 0.3,
            net: NetSpec::toy(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if !self.gamma0.is_finite() || self.gamma0 < 0.0 {
            return bad("gamma0 must be finite and >= 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if self.batch_size == 0 || self.n_train == 0 {
            return bad("batch size and training set must be nonempty");
        }
        if self.n_centers == 0 {
            return bad("n_centers must be at least 1");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be finite and >= 0");
        }
        Ok(())
    }
}

/// Cosine decay from `lr0` at epoch 0.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr0: f64) -> f64 {
    0.5 * lr0 * (1.0 + (PI * epoch as f64 / total_epochs as f64).cos())
}

/// `gamma0 * lr / lr0`: the regularizer weight tracks the learning rate.
pub fn gamma_schedule(epoch: usize, total_epochs: usize, lr_at_epoch: f64, lr0: f64, gamma0: f64) -> Result<f64> {
    if epoch >= total_epochs {
        return Err(Error::InvalidParameter(format!("epoch {epoch} outside 0..{total_epochs}")));
    }
    if lr0.is_nan() || lr0 <= 0.0 {
        return Err(Error::InvalidParameter("lr0 must be positive".into()));
    }
    Ok(gamma0 * (lr_at_epoch / lr0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub ce_loss: f64,
    pub mst_loss: f64,
    pub gamma: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub sum_mst_distance: u64,
    pub max_depth: usize,
    pub params_bits: u64,
}

pub const METRICS_HEADER: &str =
    "epoch,loss,ce_loss,mst_loss,gamma,train_acc,test_acc,sum_mst_distance,max_depth,params_bits";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.loss,
            self.ce_loss,
            self.mst_loss,
            self.gamma,
            self.train_acc,
            self.test_acc,
            self.sum_mst_distance,
            self.max_depth,
            self.params_bits
        )
    }
}

pub fn write_metrics<W: Write>(history: &[EpochMetrics], mut sink: W) -> Result<()> {
    writeln!(sink, "{METRICS_HEADER}")?;
    for m in history {
        writeln!(sink, "{}", m.csv_row())?;
    }
    sink.flush()?;
    Ok(())
}

/// Weights, centers and history after training.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub params: Params,
    pub centers: Vec<CenterSet>,
    pub history: Vec<EpochMetrics>,
}

impl TrainState {
    /// Binary shadow of layer `l`: `sign` of the latent weights.
    pub fn binary_weights(&self, l: usize) -> Vec<BinaryWeightSet> {
        let width = self.config.net.binary_shapes()[l].full();
        centers::bits_of_rows(&self.params.bin_w[l], width)
    }

    /// Binary layers as deployed; `alpha` includes the fixed `1/sqrt(c_in*m*m)` scale.
    pub fn binary_layers(&self) -> Result<Vec<BinaryLayer>> {
        binary_layers(&self.config.net, &self.params)
    }

    pub fn final_metrics(&self) -> &EpochMetrics {
        self.history.last().expect("training runs at least one epoch")
    }

    /// Writes `layer{l}.bwt` for each binary layer into `dir`.
    pub fn write_weight_files(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = Vec::new();
        for (l, layer) in self.binary_layers()?.iter().enumerate() {
            let path = dir.join(format!("layer{l}.bwt"));
            write_bwt(layer, std::io::BufWriter::new(std::fs::File::create(&path)?))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

fn binary_layers(spec: &NetSpec, p: &Params) -> Result<Vec<BinaryLayer>> {
    spec.binary_shapes()
        .iter()
        .enumerate()
        .map(|(l, s)| {
            let w = centers::bits_of_rows(&p.bin_w[l], s.full());
            BinaryLayer::new(*s, w, p.alpha[l] / (s.full() as f64).sqrt())
        })
        .collect()
}

/// Sum of Prim-MST totals, deepest re-rooted tree, and MST-schedule parameter bits.
fn tree_metrics(layers: &[BinaryLayer]) -> Result<(u64, usize, u64)> {
    let (mut total, mut depth, mut bits) = (0, 0, 0);
    for layer in layers {
        let g = build_distance_graph(layer);
        let t = reroot_min_depth(&prim_mst(&g, 0)?);
        total += t.total_distance();
        depth = depth.max(tree_depth(&t));
        bits += schedule_from_tree(&t, layer, ScheduleKind::Mst)?.params_bits();
    }
    Ok((total, depth, bits))
}

fn accuracy(spec: &NetSpec, p: &Params, data: &Dataset, batch: usize) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let px = data.hw * data.hw;
    let mut correct = 0;
    for start in (0..data.len()).step_by(batch) {
        let end = (start + batch).min(data.len());
        let out = loss_and_grad(spec, p, Mode::Hard, &data.images[start * px..end * px], &data.labels[start..end], None, None);
        correct += out.correct;
    }
    correct as f64 / data.len() as f64
}

/// Trains the toy net and records one [`EpochMetrics`] per epoch.
pub fn train_toy(config: &TrainConfig) -> Result<TrainState> {
    config.validate()?;
    let spec = &config.net;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train = oriented_bars(config.n_train, spec.hw, config.noise, &mut rng);
    let test = oriented_bars(config.n_test, spec.hw, config.noise, &mut rng);
    let mut params = Params::init(spec, &mut rng);
    let shapes = spec.binary_shapes();
    let centers: Vec<CenterSet> = shapes
        .iter()
        .enumerate()
        .map(|(l, s)| sample_centers(s, config.n_centers, config.seed.wrapping_mul(1000).wrapping_add(l as u64 + 1)))
        .collect::<Result<_>>()?;

    let mut velocity = params.zeros_like();
    let mut grad = params.zeros_like();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let px = spec.hw * spec.hw;
    let mut images = Vec::with_capacity(config.batch_size * px);
    let mut labels = Vec::with_capacity(config.batch_size);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config.epochs, config.lr0);
        let gamma = gamma_schedule(epoch, config.epochs, lr, config.lr0, config.gamma0)?;
        let coef = config.lambda * gamma;
        order.shuffle(&mut rng);
        let (mut loss, mut ce, mut reg, mut correct, mut steps) = (0.0, 0.0, 0.0, 0, 0);
        for chunk in order.chunks(config.batch_size) {
            images.clear();
            labels.clear();
            for &i in chunk {
                images.extend_from_slice(train.image(i));
                labels.push(train.labels[i]);
            }
            let targets: Vec<Vec<f64>> = shapes
                .iter()
                .enumerate()
                .map(|(l, s)| {
                    let w = centers::bits_of_rows(&params.bin_w[l], s.full());
                    let a = assign_centers(&w, &centers[l])?;
                    Ok(centers::center_targets(&a, &centers[l]))
                })
                .collect::<Result<_>>()?;
            let r = Regularizer { targets: &targets, coef };
            let out = loss_and_grad(spec, &params, Mode::Hard, &images, &labels, Some(&r), Some(&mut grad));
            if !out.loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            for ((p, v), g) in params.tensors_mut().into_iter().zip(velocity.tensors_mut()).zip(grad.tensors()) {
                for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = config.momentum * *v + g;
                    *p -= lr * *v;
                }
            }
            if !params.all_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss += out.loss;
            ce += out.ce;
            reg += out.reg;
            correct += out.correct;
            steps += 1;
        }
        let layers = binary_layers(spec, &params)?;
        let (sum_mst_distance, max_depth, params_bits) = tree_metrics(&layers)?;
        history.push(EpochMetrics {
            epoch,
            loss: loss / steps as f64,
            ce_loss: ce / steps as f64,
            mst_loss: reg / steps as f64,
            gamma,
            train_acc: correct as f64 / train.len() as f64,
            test_acc: accuracy(spec, &params, &test, 256),
            sum_mst_distance,
            max_depth,
            params_bits,
        });
    }
    Ok(TrainState { config: config.clone(), params, centers, history })
}
