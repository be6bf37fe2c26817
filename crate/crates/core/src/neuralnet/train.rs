//! Backpropagation and plain gradient descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lrf::{LrfGradients, LrfNetwork};
use super::{Label, NetError, Network, Transfer};
use crate::scalar::softmax;
use crate::Scalar;

/// Samples per parallel work unit. Sums are reduced chunk by chunk in a fixed
/// order so the result does not depend on the thread count.
const REDUCTION_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub features: Vec<T>,
    pub label: Label,
}

impl<T> Sample<T> {
    pub fn new(features: Vec<T>, label: Label) -> Self {
        Self { features, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// Cross-entropy over the softmax of the two outputs.
    #[default]
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// `None` trains on the whole set per step.
    pub batch_size: Option<usize>,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 50, learning_rate: 1.0, seed: 0, batch_size: None, loss: LossKind::SoftmaxCrossEntropy }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.epochs == 0 {
            return Err(NetError::InvalidConfig("epochs must be at least 1"));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(NetError::InvalidConfig("learning rate must be positive"));
        }
        if self.batch_size == Some(0) {
            return Err(NetError::InvalidConfig("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean loss of each epoch, measured on the parameters before each step.
    pub epoch_losses: Vec<f64>,
    /// Set once an epoch loss reaches twice the lowest loss seen so far.
    pub diverged: bool,
}

/// Per-parameter gradients laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self {
            weights: net.layers().iter().map(|l| vec![T::zero(); l.weights.len()]).collect(),
            biases: net.layers().iter().map(|l| vec![T::zero(); l.biases.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights).chain(self.biases.iter_mut().zip(&other.biases)) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = *x + y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()).flatten() {
            *v = *v * factor;
        }
    }

    pub fn norm(&self) -> T {
        self.weights.iter().chain(&self.biases).flatten().map(|&g| g * g).sum::<T>().sqrt()
    }
}

fn check_label_network<T: Scalar>(net: &Network<T>, features: &[T]) -> Result<(), NetError> {
    if features.len() != net.input_size() {
        return Err(NetError::DimensionMismatch { expected: net.input_size(), found: features.len() });
    }
    Ok(())
}

/// Loss of one sample.
pub fn sample_loss<T: Scalar>(net: &Network<T>, sample: &Sample<T>) -> Result<T, NetError> {
    let pass = net.forward(&sample.features)?;
    let probs = softmax(pass.outputs());
    Ok(-probs[sample.label.output_index()].ln())
}

/// Analytic gradient of one sample's loss, together with that loss.
pub fn gradient<T: Scalar>(net: &Network<T>, sample: &Sample<T>) -> Result<(Gradients<T>, T), NetError> {
    check_label_network(net, &sample.features)?;
    let pass = net.forward(&sample.features)?;
    let n_layers = net.layers().len();
    let probs = softmax(pass.outputs());
    let target = sample.label.output_index();
    let loss = -probs[target].ln();

    let mut grads = Gradients::zeros_like(net);
    // dL/da for the output activations, then chain through the transfer.
    let out_f = net.transfer_for(n_layers - 1);
    let mut delta: Vec<T> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if i == target { p - T::one() } else { p })
        .zip(pass.pre_activations[n_layers - 1].iter().zip(&pass.activations[n_layers]))
        .map(|(d, (&z, &a))| d * out_f.derivative(z, a))
        .collect();

    for l in (0..n_layers).rev() {
        let layer = &net.layers()[l];
        let input = &pass.activations[l];
        let gw = &mut grads.weights[l];
        for (o, &d) in delta.iter().enumerate() {
            let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
            for (g, &x) in row.iter_mut().zip(input) {
                *g = d * x;
            }
        }
        grads.biases[l].copy_from_slice(&delta);
        if l > 0 {
            let f = net.transfer_for(l - 1);
            let mut prev = vec![T::zero(); layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p = *p + w * d;
                }
            }
            for ((p, &z), &a) in prev.iter_mut().zip(&pass.pre_activations[l - 1]).zip(&pass.activations[l]) {
                *p = *p * f.derivative(z, a);
            }
            delta = prev;
        }
    }
    Ok((grads, loss))
}

/// Summed gradient and summed loss over a batch.
pub fn batch_gradient<T: Scalar>(net: &Network<T>, samples: &[Sample<T>]) -> Result<(Gradients<T>, T), NetError> {
    let partials: Vec<Result<(Gradients<T>, T), NetError>> = samples
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut acc = Gradients::zeros_like(net);
            let mut loss = T::zero();
            for s in chunk {
                let (g, l) = gradient(net, s)?;
                acc.add_assign(&g);
                loss = loss + l;
            }
            Ok((acc, loss))
        })
        .collect();
    let mut total = Gradients::zeros_like(net);
    let mut loss = T::zero();
    for p in partials {
        let (g, l) = p?;
        total.add_assign(&g);
        loss = loss + l;
    }
    Ok((total, loss))
}

fn check_dataset<T>(samples: &[Sample<T>], width: usize) -> Result<(), NetError> {
    if samples.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    if let Some(bad) = samples.iter().find(|s| s.features.len() != width) {
        return Err(NetError::DimensionMismatch { expected: width, found: bad.features.len() });
    }
    let first = samples[0].label;
    if samples.iter().all(|s| s.label == first) {
        return Err(NetError::SingleClass);
    }
    Ok(())
}

struct DivergenceWatch {
    best: f64,
    diverged: bool,
}

impl DivergenceWatch {
    fn observe(&mut self, epoch: usize, loss: f64) {
        self.best = self.best.min(loss);
        if !self.diverged && (loss >= 2.0 * self.best || !loss.is_finite()) && self.best.is_finite() {
            self.diverged = true;
            log::warn!("training loss {loss:.6} at epoch {epoch} is at least twice the best {:.6}", self.best);
        }
    }
}

fn batches(n: usize, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    match cfg.batch_size {
        Some(b) if b < n => {
            order.shuffle(rng);
            order.chunks(b).map(<[usize]>::to_vec).collect()
        }
        _ => vec![order],
    }
}

/// Gradient descent on the mean softmax cross-entropy.
pub fn train<T: Scalar>(
    mut net: Network<T>,
    samples: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<(Network<T>, TrainReport), NetError> {
    cfg.validate()?;
    check_dataset(samples, net.input_size())?;
    let lr = T::lit(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = TrainReport::default();
    let mut watch = DivergenceWatch { best: f64::INFINITY, diverged: false };
    let full_batch = cfg.batch_size.is_none_or(|b| b >= samples.len());

    for epoch in 0..cfg.epochs {
        let mut epoch_loss = T::zero();
        for idx in batches(samples.len(), cfg, &mut rng) {
            let (mut g, loss) = if full_batch {
                batch_gradient(&net, samples)?
            } else {
                let batch: Vec<Sample<T>> = idx.iter().map(|&i| samples[i].clone()).collect();
                batch_gradient(&net, &batch)?
            };
            epoch_loss = epoch_loss + loss;
            g.scale(-lr / T::from_usize_lossy(idx.len()));
            for (layer, (gw, gb)) in net.layers_mut().iter_mut().zip(g.weights.iter().zip(&g.biases)) {
                for (w, &d) in layer.weights.iter_mut().zip(gw) {
                    *w = *w + d;
                }
                for (b, &d) in layer.biases.iter_mut().zip(gb) {
                    *b = *b + d;
                }
            }
        }
        let mean = epoch_loss.as_f64() / samples.len() as f64;
        watch.observe(epoch, mean);
        report.epoch_losses.push(mean);
    }
    report.diverged = watch.diverged;
    Ok((net, report))
}

/// Gradient of the binary cross-entropy of one LRF output, with its loss.
/// The output transfer must be the sigmoid.
pub fn lrf_gradient<T: Scalar>(net: &LrfNetwork<T>, sample: &Sample<T>) -> Result<(LrfGradients<T>, T), NetError> {
    if net.output_transfer() != Transfer::Sigmoid {
        return Err(NetError::InvalidConfig("LRF training requires a sigmoid output"));
    }
    let trace = net.trace(&sample.features)?;
    let geom = net.geometry();
    let m = geom.field_size();
    let n_fields = net.n_fields();
    let y = T::from_byte(sample.label.as_binary());
    let o = trace.output;
    let eps = T::epsilon();
    let loss = -(y * o.max(eps).ln() + (T::one() - y) * (T::one() - o).max(eps).ln());
    let delta = o - y;

    let mut g = LrfGradients::zeros_like(net);
    g.output_bias = delta;
    let g_fn = net.hidden_transfer();
    for (i, origin) in geom.positions().into_iter().enumerate() {
        for j in 0..n_fields {
            let idx = i * n_fields + j;
            let a = trace.hidden[idx];
            g.output_weights[idx] = delta * a;
            let du = delta * net.output_weights[idx] * g_fn.derivative(trace.pre_hidden[idx], a);
            g.field_biases[j] = g.field_biases[j] + du;
            let row = &mut g.field_weights[j * m..(j + 1) * m];
            for (k, gk) in row.iter_mut().enumerate() {
                let x = sample.features[geom.pixel_index(origin, k)];
                *gk = *gk + du * x;
            }
        }
    }
    Ok((g, loss))
}

/// Gradient descent for the receptive-field network on binary cross-entropy.
pub fn train_lrf<T: Scalar>(
    mut net: LrfNetwork<T>,
    samples: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<(LrfNetwork<T>, TrainReport), NetError> {
    cfg.validate()?;
    check_dataset(samples, net.geometry().input_len())?;
    let lr = T::lit(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = TrainReport::default();
    let mut watch = DivergenceWatch { best: f64::INFINITY, diverged: false };

    for epoch in 0..cfg.epochs {
        let mut epoch_loss = T::zero();
        for idx in batches(samples.len(), cfg, &mut rng) {
            let partials: Vec<Result<(LrfGradients<T>, T), NetError>> = idx
                .par_chunks(REDUCTION_CHUNK)
                .map(|chunk| {
                    let mut acc = LrfGradients::zeros_like(&net);
                    let mut loss = T::zero();
                    for &i in chunk {
                        let (g, l) = lrf_gradient(&net, &samples[i])?;
                        acc.add_assign(&g);
                        loss = loss + l;
                    }
                    Ok((acc, loss))
                })
                .collect();
            let mut total = LrfGradients::zeros_like(&net);
            for p in partials {
                let (g, l) = p?;
                total.add_assign(&g);
                epoch_loss = epoch_loss + l;
            }
            net.apply_step(&total, -lr / T::from_usize_lossy(idx.len()));
        }
        let mean = epoch_loss.as_f64() / samples.len() as f64;
        watch.observe(epoch, mean);
        report.epoch_losses.push(mean);
    }
    report.diverged = watch.diverged;
    Ok((net, report))
}
