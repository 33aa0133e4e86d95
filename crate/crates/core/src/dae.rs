//! One-hidden-layer denoising autoencoder.
//!
//! `output = sigmoid(W2 * sigmoid(W1 * input + b1) + b2)`, trained with
//! mini-batch SGD on binary cross-entropy between the output and a clean
//! target. For path recovery the input is the distance-form indicator of a
//! corrupted sample and the target is the binary indicator of the clean one.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{inject_noise, Dataset, NoiseSpec};
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::indicator::IndicatorLayout;
use crate::seed;

pub const DAE_FORMAT_VERSION: u32 = 1;

/// Output clamp used by the loss.
const EVAL_CHUNK: usize = 64;
pub const CLAMP: f64 = 1e-7;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoisingAutoencoder {
    pub depth: usize,
    input_size: usize,
    hidden_size: usize,
    /// `hidden x input`, row-major.
    enc_w: Vec<f64>,
    enc_b: Vec<f64>,
    /// `input x hidden`, row-major.
    dec_w: Vec<f64>,
    dec_b: Vec<f64>,
}

/// Parameter gradients, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub enc_w: Vec<f64>,
    pub enc_b: Vec<f64>,
    pub dec_w: Vec<f64>,
    pub dec_b: Vec<f64>,
}

impl Gradients {
    fn zeros_like(dae: &DenoisingAutoencoder) -> Self {
        Gradients {
            enc_w: vec![0.0; dae.enc_w.len()],
            enc_b: vec![0.0; dae.enc_b.len()],
            dec_w: vec![0.0; dae.dec_w.len()],
            dec_b: vec![0.0; dae.dec_b.len()],
        }
    }

    fn clear(&mut self) {
        for v in [&mut self.enc_w, &mut self.enc_b, &mut self.dec_w, &mut self.dec_b] {
            v.fill(0.0);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        [&self.enc_w, &self.enc_b, &self.dec_w, &self.dec_b]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

/// Bottleneck width for an input of `n` units: `ceil(n / 2)`.
pub fn default_hidden(n: usize) -> usize {
    n.div_ceil(2).max(1)
}

impl DenoisingAutoencoder {
    pub fn zeros(input_size: usize, hidden_size: usize, depth: usize) -> Self {
        DenoisingAutoencoder {
            depth,
            input_size,
            hidden_size,
            enc_w: vec![0.0; hidden_size * input_size],
            enc_b: vec![0.0; hidden_size],
            dec_w: vec![0.0; input_size * hidden_size],
            dec_b: vec![0.0; input_size],
        }
    }

    /// Parameters uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn random(input_size: usize, hidden_size: usize, depth: usize, seed_value: u64) -> Self {
        let mut dae = Self::zeros(input_size, hidden_size, depth);
        let mut rng = seed::rng(seed_value, &[0x1417]);
        let enc = 1.0 / (input_size as f64).sqrt();
        let dec = 1.0 / (hidden_size as f64).sqrt();
        for w in dae.enc_w.iter_mut().chain(dae.enc_b.iter_mut()) {
            *w = rng.gen_range(-enc..=enc);
        }
        for w in dae.dec_w.iter_mut().chain(dae.dec_b.iter_mut()) {
            *w = rng.gen_range(-dec..=dec);
        }
        dae
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn parameter_count(&self) -> usize {
        self.enc_w.len() + self.enc_b.len() + self.dec_w.len() + self.dec_b.len()
    }

    fn parameters_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.enc_w, &mut self.enc_b, &mut self.dec_w, &mut self.dec_b]
    }

    fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for p in self.parameters_mut() {
            if index < p.len() {
                return &mut p[index];
            }
            index -= p.len();
        }
        panic!("parameter index out of range")
    }

    pub fn is_finite(&self) -> bool {
        [&self.enc_w, &self.enc_b, &self.dec_w, &self.dec_b]
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.input_size {
            return Err(Error::Shape(format!(
                "{what} has length {len}, autoencoder expects {}",
                self.input_size
            )));
        }
        Ok(())
    }

    fn encode_into(&self, input: &[f64], hidden: &mut [f64]) {
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &self.enc_w[j * self.input_size..(j + 1) * self.input_size];
            let z = self.enc_b[j] + dot(row, input);
            *h = sigmoid(z);
        }
    }

    fn decode_into(&self, hidden: &[f64], output: &mut [f64]) {
        for (k, o) in output.iter_mut().enumerate() {
            let row = &self.dec_w[k * self.hidden_size..(k + 1) * self.hidden_size];
            let z = self.dec_b[k] + dot(row, hidden);
            *o = sigmoid(z);
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_len("input", input.len())?;
        let mut hidden = vec![0.0; self.hidden_size];
        let mut output = vec![0.0; self.input_size];
        self.encode_into(input, &mut hidden);
        self.decode_into(&hidden, &mut output);
        Ok(output)
    }

    /// Mean BCE loss and its parameter gradients for one pair.
    pub fn gradients(&self, input: &[f64], target: &[f64]) -> Result<(f64, Gradients)> {
        self.check_len("input", input.len())?;
        self.check_len("target", target.len())?;
        let mut grads = Gradients::zeros_like(self);
        let mut scratch = Scratch::default();
        let l = self.accumulate(input, target, 1.0, &mut scratch, &mut grads);
        Ok((l, grads))
    }

    /// Forward pass over `b` row-major inputs into `s.hidden` / `s.output`.
    fn forward_batch(&self, inputs: &[f64], s: &mut Scratch) {
        let (n, h) = (self.input_size, self.hidden_size);
        let b = inputs.len() / n;
        s.resize(b, n, h);
        for j in 0..h {
            let row = &self.enc_w[j * n..(j + 1) * n];
            for (i, x) in inputs.chunks_exact(n).enumerate() {
                s.hidden[i * h + j] = sigmoid(self.enc_b[j] + dot(row, x));
            }
        }
        for k in 0..n {
            let row = &self.dec_w[k * h..(k + 1) * h];
            for (i, hid) in s.hidden.chunks_exact(h).enumerate() {
                s.output[i * n + k] = sigmoid(self.dec_b[k] + dot(row, hid));
            }
        }
    }

    /// Adds `scale * d(loss)/d(params)` for every pair of the batch into
    /// `grads`; returns the summed loss.
    fn accumulate(&self, inputs: &[f64], targets: &[f64], scale: f64, s: &mut Scratch, grads: &mut Gradients) -> f64 {
        let (n, h) = (self.input_size, self.hidden_size);
        self.forward_batch(inputs, s);
        let loss: f64 = s
            .output
            .chunks_exact(n)
            .zip(targets.chunks_exact(n))
            .map(|(o, t)| loss_unchecked(o, t))
            .sum();

        let inv_n = 1.0 / n as f64;
        for ((d, &o), &t) in s.delta_out.iter_mut().zip(&s.output).zip(targets) {
            // d(mean BCE)/d(pre-activation); zero where the clamp is active
            *d = if o > CLAMP && o < 1.0 - CLAMP {
                (o - t) * inv_n * scale
            } else {
                0.0
            };
        }
        s.delta_hidden.fill(0.0);
        for k in 0..n {
            let w_row = &self.dec_w[k * h..(k + 1) * h];
            let g_row = &mut grads.dec_w[k * h..(k + 1) * h];
            for (i, (hid, dh)) in s.hidden.chunks_exact(h).zip(s.delta_hidden.chunks_exact_mut(h)).enumerate() {
                let d = s.delta_out[i * n + k];
                if d == 0.0 {
                    continue;
                }
                grads.dec_b[k] += d;
                axpy(d, hid, g_row);
                axpy(d, w_row, dh);
            }
        }
        for (dh, &hj) in s.delta_hidden.iter_mut().zip(&s.hidden) {
            *dh *= hj * (1.0 - hj);
        }
        for j in 0..h {
            let g_row = &mut grads.enc_w[j * n..(j + 1) * n];
            for (i, x) in inputs.chunks_exact(n).enumerate() {
                let d = s.delta_hidden[i * h + j];
                grads.enc_b[j] += d;
                axpy(d, x, g_row);
            }
        }
        loss
    }

    fn apply(&mut self, grads: &Gradients, step: f64) {
        let src = [&grads.enc_w, &grads.enc_b, &grads.dec_w, &grads.dec_b];
        for (p, g) in self.parameters_mut().into_iter().zip(src) {
            for (w, d) in p.iter_mut().zip(g) {
                *w -= step * d;
            }
        }
    }

    /// One plain SGD step on the mean loss over `pairs`.
    pub fn sgd_step(&mut self, pairs: &[(&[f64], &[f64])], learning_rate: f64) -> Result<()> {
        let mut inputs = Vec::with_capacity(pairs.len() * self.input_size);
        let mut targets = Vec::with_capacity(pairs.len() * self.input_size);
        for (x, t) in pairs {
            self.check_len("input", x.len())?;
            self.check_len("target", t.len())?;
            inputs.extend_from_slice(x);
            targets.extend_from_slice(t);
        }
        let mut grads = Gradients::zeros_like(self);
        let scale = 1.0 / pairs.len().max(1) as f64;
        self.accumulate(&inputs, &targets, scale, &mut Scratch::default(), &mut grads);
        self.apply(&grads, learning_rate);
        Ok(())
    }

    pub fn to_doc(&self) -> DaeDoc {
        let rows = |w: &[f64], width: usize| w.chunks(width.max(1)).map(<[f64]>::to_vec).collect();
        DaeDoc {
            version: DAE_FORMAT_VERSION,
            depth: self.depth,
            input_size: self.input_size,
            hidden_size: self.hidden_size,
            enc_w: rows(&self.enc_w, self.input_size),
            enc_b: self.enc_b.clone(),
            dec_w: rows(&self.dec_w, self.hidden_size),
            dec_b: self.dec_b.clone(),
        }
    }

    pub fn from_doc(doc: DaeDoc) -> Result<Self> {
        if doc.version != DAE_FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported autoencoder format version {}", doc.version)));
        }
        let (n, h) = (doc.input_size, doc.hidden_size);
        let flat = |rows: Vec<Vec<f64>>, count: usize, width: usize, what: &str| -> Result<Vec<f64>> {
            if rows.len() != count || rows.iter().any(|r| r.len() != width) {
                return Err(Error::Model(format!("{what} is not {count} x {width}")));
            }
            Ok(rows.into_iter().flatten().collect())
        };
        let dae = DenoisingAutoencoder {
            depth: doc.depth,
            input_size: n,
            hidden_size: h,
            enc_w: flat(doc.enc_w, h, n, "enc_w")?,
            enc_b: doc.enc_b,
            dec_w: flat(doc.dec_w, n, h, "dec_w")?,
            dec_b: doc.dec_b,
        };
        if dae.enc_b.len() != h || dae.dec_b.len() != n {
            return Err(Error::Model("bias lengths do not match layer sizes".into()));
        }
        if !dae.is_finite() {
            return Err(Error::Model("non-finite parameter".into()));
        }
        Ok(dae)
    }
}

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`.
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Default)]
struct Scratch {
    hidden: Vec<f64>,
    output: Vec<f64>,
    delta_out: Vec<f64>,
    delta_hidden: Vec<f64>,
}

impl Scratch {
    fn resize(&mut self, batch: usize, n: usize, h: usize) {
        self.hidden.resize(batch * h, 0.0);
        self.output.resize(batch * n, 0.0);
        self.delta_out.resize(batch * n, 0.0);
        self.delta_hidden.resize(batch * h, 0.0);
    }
}

fn loss_unchecked(output: &[f64], target: &[f64]) -> f64 {
    let sum: f64 = output
        .iter()
        .zip(target)
        .map(|(&o, &t)| {
            let o = o.clamp(CLAMP, 1.0 - CLAMP);
            -(t * o.ln() + (1.0 - t) * (1.0 - o).ln())
        })
        .sum();
    sum / output.len() as f64
}

/// Mean binary cross-entropy with the output clamped to `[1e-7, 1 - 1e-7]`.
pub fn loss(output: &[f64], target: &[f64]) -> Result<f64> {
    if output.len() != target.len() || output.is_empty() {
        return Err(Error::Shape(format!(
            "output length {} vs target length {}",
            output.len(),
            target.len()
        )));
    }
    Ok(loss_unchecked(output, target))
}

/// Largest relative disagreement between analytic gradients and central
/// finite differences of the loss.
pub fn gradient_check(dae: &DenoisingAutoencoder, input: &[f64], target: &[f64], epsilon: f64) -> Result<f64> {
    if !(1e-6..=1e-4).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} outside [1e-6, 1e-4]")));
    }
    let (_, grads) = dae.gradients(input, target)?;
    let analytic = grads.flatten();
    let mut probe = dae.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.parameter_mut(i);
        *probe.parameter_mut(i) = orig + epsilon;
        let up = loss_unchecked(&probe.forward(input)?, target);
        *probe.parameter_mut(i) = orig - epsilon;
        let down = loss_unchecked(&probe.forward(input)?, target);
        *probe.parameter_mut(i) = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Corruption fractions sampled uniformly per sample per epoch.
    pub noise_levels: Vec<f64>,
    pub seed: u64,
    /// Epochs without held-out improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 200,
            batch_size: 32,
            noise_levels: vec![0.0, 0.125, 0.25, 0.375, 0.5],
            seed: 0,
            patience: 20,
            holdout_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config("noise levels must be a non-empty subset of [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config("holdout fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Produces (noisy input, clean target) pairs for one training row.
trait PairSource: Sync {
    fn len(&self) -> usize;
    fn fill(&self, row: usize, noise: NoiseSpec, input: &mut [f64], target: &mut [f64]) -> Result<()>;
}

struct IndicatorPairs<'a> {
    data: &'a Dataset,
    forest: &'a Forest,
    layout: IndicatorLayout,
    clean: Vec<Vec<usize>>,
}

impl PairSource for IndicatorPairs<'_> {
    fn len(&self) -> usize {
        self.layout.len()
    }

    fn fill(&self, row: usize, noise: NoiseSpec, input: &mut [f64], target: &mut [f64]) -> Result<()> {
        let (noisy, _) = inject_noise(self.data.row(row), noise, self.data.column_means())?;
        let arrived = self.layout.arrived(self.forest, &noisy);
        self.layout.write_distance(&arrived, input);
        self.layout.write_binary(&self.clean[row], target);
        Ok(())
    }
}

struct FeaturePairs<'a> {
    data: &'a Dataset,
}

impl PairSource for FeaturePairs<'_> {
    fn len(&self) -> usize {
        self.data.dim()
    }

    fn fill(&self, row: usize, noise: NoiseSpec, input: &mut [f64], target: &mut [f64]) -> Result<()> {
        let clean = self.data.row(row);
        let (noisy, _) = inject_noise(clean, noise, self.data.column_means())?;
        input.copy_from_slice(&noisy);
        for (t, &c) in target.iter_mut().zip(clean) {
            *t = c.clamp(0.0, 1.0);
        }
        Ok(())
    }
}

fn fit(source: &dyn PairSource, rows: usize, depth: usize, config: &TrainConfig) -> Result<DenoisingAutoencoder> {
    config.validate()?;
    let n = source.len();
    let mut dae = DenoisingAutoencoder::random(n, default_hidden(n), depth, config.seed);
    if config.epochs == 0 || rows == 0 {
        return Ok(dae);
    }

    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut seed::rng(config.seed, &[0x401d]));
    let held = if rows >= 10 {
        ((config.holdout_fraction * rows as f64).round() as usize).min(rows - 1)
    } else {
        0
    };
    let (holdout_rows, train_rows) = order.split_at(held);
    let mut train_rows = train_rows.to_vec();

    // Fixed held-out pairs: every held-out row at every noise level.
    let mut holdout = Vec::with_capacity(holdout_rows.len() * config.noise_levels.len());
    for &r in holdout_rows {
        for (li, &snr) in config.noise_levels.iter().enumerate() {
            let mut x = vec![0.0; n];
            let mut t = vec![0.0; n];
            let spec = NoiseSpec::new(snr, seed::derive(config.seed, &[0x401d, r as u64, li as u64]))?;
            source.fill(r, spec, &mut x, &mut t)?;
            holdout.push((x, t));
        }
    }
    let holdout_inputs: Vec<f64> = holdout.iter().flat_map(|(x, _)| x.iter().copied()).collect();
    let holdout_targets: Vec<f64> = holdout.iter().flat_map(|(_, t)| t.iter().copied()).collect();
    let eval = |dae: &DenoisingAutoencoder, s: &mut Scratch| -> f64 {
        let mut total = 0.0;
        for (xs, ts) in holdout_inputs
            .chunks(EVAL_CHUNK * n)
            .zip(holdout_targets.chunks(EVAL_CHUNK * n))
        {
            dae.forward_batch(xs, s);
            total += s.output.chunks_exact(n).zip(ts.chunks_exact(n)).map(|(o, t)| loss_unchecked(o, t)).sum::<f64>();
        }
        total / holdout.len() as f64
    };

    let mut best = dae.clone();
    let mut best_loss = f64::INFINITY;
    let mut stale = 0;
    let mut grads = Gradients::zeros_like(&dae);
    let mut scratch = Scratch::default();
    let mut xs = vec![0.0; config.batch_size * n];
    let mut ts = vec![0.0; config.batch_size * n];
    for epoch in 0..config.epochs {
        let mut rng = seed::rng(config.seed, &[0xe90c, epoch as u64]);
        train_rows.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_rows.chunks(config.batch_size) {
            grads.clear();
            let scale = 1.0 / batch.len() as f64;
            let used = batch.len() * n;
            for ((&r, x), t) in batch.iter().zip(xs.chunks_exact_mut(n)).zip(ts.chunks_exact_mut(n)) {
                let snr = config.noise_levels[rng.gen_range(0..config.noise_levels.len())];
                let spec = NoiseSpec::new(snr, rng.gen())?;
                source.fill(r, spec, x, t)?;
            }
            epoch_loss += dae.accumulate(&xs[..used], &ts[..used], scale, &mut scratch, &mut grads);
            // the rate applies to the loss summed over units
            dae.apply(&grads, config.learning_rate * n as f64);
        }
        if !epoch_loss.is_finite() || !dae.is_finite() {
            return Err(Error::Numeric(format!(
                "training loss diverged at epoch {epoch}; lower the learning rate"
            )));
        }
        let score = if holdout.is_empty() {
            epoch_loss / train_rows.len() as f64
        } else {
            eval(&dae, &mut scratch)
        };
        if !score.is_finite() {
            return Err(Error::Numeric(format!("held-out loss is not finite at epoch {epoch}")));
        }
        if score < best_loss {
            best_loss = score;
            best = dae.clone();
            stale = 0;
        } else {
            stale += 1;
            if config.patience > 0 && stale >= config.patience {
                break;
            }
        }
    }
    Ok(best)
}

/// Trains the autoencoder for indicator level `depth` of `forest` on the
/// clean rows of `data`.
pub fn train(data: &Dataset, forest: &Forest, depth: usize, config: &TrainConfig) -> Result<DenoisingAutoencoder> {
    if depth > forest.max_depth() {
        return Err(Error::Config(format!(
            "depth {depth} exceeds forest depth {}",
            forest.max_depth()
        )));
    }
    let layout = IndicatorLayout::new(forest, depth);
    let clean = data.rows().map(|x| layout.arrived(forest, x)).collect();
    let source = IndicatorPairs {
        data,
        forest,
        layout,
        clean,
    };
    fit(&source, data.len(), depth, config)
}

/// Same architecture trained to denoise the (scaled) feature vectors
/// themselves; the comparison baseline for path-space denoising.
pub fn train_feature_dae(data: &Dataset, config: &TrainConfig) -> Result<DenoisingAutoencoder> {
    fit(&FeaturePairs { data }, data.len(), 0, config)
}

/// Autoencoders for one or more indicator levels, shallowest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DaeStack {
    members: Vec<DenoisingAutoencoder>,
}

impl DaeStack {
    pub fn new(mut members: Vec<DenoisingAutoencoder>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("autoencoder stack is empty".into()));
        }
        members.sort_by_key(|m| m.depth);
        if members.windows(2).any(|w| w[0].depth == w[1].depth) {
            return Err(Error::Config("autoencoder stack has two members for one depth".into()));
        }
        Ok(DaeStack { members })
    }

    pub fn members(&self) -> &[DenoisingAutoencoder] {
        &self.members
    }

    pub fn get(&self, depth: usize) -> Option<&DenoisingAutoencoder> {
        self.members.iter().find(|m| m.depth == depth)
    }

    pub fn deepest(&self) -> &DenoisingAutoencoder {
        self.members.last().expect("non-empty")
    }

    /// True when every level from 1 to the deepest has an autoencoder.
    pub fn is_per_depth(&self) -> bool {
        let deepest = self.deepest().depth;
        (1..=deepest).all(|d| self.get(d).is_some())
    }

    pub fn to_json(&self) -> Result<String> {
        let docs: Vec<DaeDoc> = self.members.iter().map(DenoisingAutoencoder::to_doc).collect();
        Ok(serde_json::to_string(&docs)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let docs: Vec<DaeDoc> = serde_json::from_str(text)?;
        let members = docs.into_iter().map(DenoisingAutoencoder::from_doc).collect::<Result<Vec<_>>>()?;
        DaeStack::new(members).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Trains the leaf-level autoencoder, or one per level `1..=max_depth`
/// when `per_depth` is set. Levels train in parallel with independent seeds.
pub fn train_stack(data: &Dataset, forest: &Forest, config: &TrainConfig, per_depth: bool) -> Result<DaeStack> {
    let leaf_depth = forest.max_depth();
    let depths: Vec<usize> = if per_depth && leaf_depth > 0 {
        (1..=leaf_depth).collect()
    } else {
        vec![leaf_depth]
    };
    let members = depths
        .par_iter()
        .map(|&d| {
            let cfg = TrainConfig {
                seed: seed::derive(config.seed, &[d as u64]),
                ..config.clone()
            };
            train(data, forest, d, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    DaeStack::new(members)
}

/// Serialized autoencoder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DaeDoc {
    pub version: u32,
    pub depth: usize,
    pub input_size: usize,
    pub hidden_size: usize,
    pub enc_w: Vec<Vec<f64>>,
    pub enc_b: Vec<f64>,
    pub dec_w: Vec<Vec<f64>>,
    pub dec_b: Vec<f64>,
}
