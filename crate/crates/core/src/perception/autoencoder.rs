//! Heightmap autoencoder `192 -> 128 -> 64 -> 32 -> 64 -> 128 -> 192`.
//!
//! Hidden layers (the 32-wide code included) use `tanh`; the reconstruction
//! layer is linear. Inputs are standardised per ray with statistics stored in
//! the network, and the loss is the mean squared reconstruction error in that
//! standardised space. Gradients are computed by hand-written reverse mode.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::perception::heightmap::{HeightmapFrame, NUM_RAYS};
use crate::{Error, Result};

pub const LAYER_SIZES: [usize; 7] = [NUM_RAYS, 128, 64, 32, 64, 128, NUM_RAYS];
pub const LATENT_DIM: usize = 32;
/// Number of layers in the encoder half.
pub const ENCODER_LAYERS: usize = 3;
const STD_FLOOR: f64 = 1e-3;

pub const NETWORK_FORMAT: &str = "perceptloco-heightmap-autoencoder";
pub const NETWORK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights, zero bias.
    fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut l = Self::zeros(inputs, outputs);
        for w in &mut l.weights {
            *w = rng.random_range(-limit..limit);
        }
        l
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

/// Activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    /// Standardised input.
    pub input: Vec<f64>,
    /// Output of every layer, after its activation.
    pub activations: Vec<Vec<f64>>,
    pub loss: f64,
}

impl ForwardPass {
    pub fn latent(&self) -> &[f64] {
        &self.activations[ENCODER_LAYERS - 1]
    }

    pub fn reconstruction(&self) -> &[f64] {
        &self.activations[self.activations.len() - 1]
    }
}

/// Per-layer `(d loss / d weights, d loss / d bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros_like(net: &EncoderNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, v)| *a += scale * v);
            b.iter_mut().zip(ob).for_each(|(a, v)| *a += scale * v);
        }
    }

    /// Flattened in the same order as [`EncoderNetwork::parameter`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean training loss per epoch.
    pub train_curve: Vec<f64>,
    /// Validation loss; entry 0 is the untrained network.
    pub validation_curve: Vec<f64>,
    pub final_step_size: f64,
    pub train_frames: usize,
    pub validation_frames: usize,
}

impl TrainingReport {
    pub fn baseline_validation(&self) -> f64 {
        self.validation_curve[0]
    }

    pub fn final_validation(&self) -> f64 {
        *self.validation_curve.last().expect("curve starts with the baseline")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderNetwork {
    layers: Vec<DenseLayer>,
    input_mean: Vec<f64>,
    input_std: Vec<f64>,
    frozen: bool,
}

impl EncoderNetwork {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            layers: LAYER_SIZES.windows(2).map(|w| DenseLayer::glorot(w[0], w[1], rng)).collect(),
            input_mean: vec![0.0; NUM_RAYS],
            input_std: vec![1.0; NUM_RAYS],
            frozen: false,
        }
    }

    pub fn zeros() -> Self {
        Self {
            layers: LAYER_SIZES.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect(),
            input_mean: vec![0.0; NUM_RAYS],
            input_std: vec![1.0; NUM_RAYS],
            frozen: false,
        }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn normalization(&self) -> (&[f64], &[f64]) {
        (&self.input_mean, &self.input_std)
    }

    pub fn set_normalization(&mut self, mean: Vec<f64>, std: Vec<f64>) -> Result<()> {
        if mean.len() != NUM_RAYS || std.len() != NUM_RAYS {
            return Err(Error::ShapeMismatch("normalization statistics need 192 entries".into()));
        }
        if std.iter().any(|s| !(s.is_finite() && *s > 0.0)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParameter("normalization statistics must be finite, std > 0".into()));
        }
        self.input_mean = mean;
        self.input_std = std;
        Ok(())
    }

    /// Per-ray mean and standard deviation of a dataset.
    pub fn fit_normalization(&mut self, frames: &[HeightmapFrame]) -> Result<()> {
        if frames.is_empty() {
            return Err(Error::InvalidParameter("cannot fit normalization on no frames".into()));
        }
        let n = frames.len() as f64;
        let mut mean = vec![0.0; NUM_RAYS];
        for f in frames {
            mean.iter_mut().zip(&f.distances).for_each(|(m, d)| *m += d / n);
        }
        let mut var = vec![0.0; NUM_RAYS];
        for f in frames {
            var.iter_mut()
                .zip(&f.distances)
                .zip(&mean)
                .for_each(|((v, d), m)| *v += (d - m) * (d - m) / n);
        }
        let std = var.into_iter().map(|v| v.sqrt().max(STD_FLOOR)).collect();
        self.set_normalization(mean, std)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Marks the weights as fixed for downstream use.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if index < l.weights.len() {
                return (li, true, index);
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return (li, false, index);
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// Flat parameter access: layer by layer, weights then bias.
    pub fn parameter(&self, index: usize) -> f64 {
        let (l, is_w, k) = self.locate(index);
        if is_w {
            self.layers[l].weights[k]
        } else {
            self.layers[l].bias[k]
        }
    }

    pub fn set_parameter(&mut self, index: usize, value: f64) {
        let (l, is_w, k) = self.locate(index);
        if is_w {
            self.layers[l].weights[k] = value;
        } else {
            self.layers[l].bias[k] = value;
        }
    }

    pub fn normalize(&self, frame: &HeightmapFrame) -> Vec<f64> {
        frame
            .distances
            .iter()
            .zip(&self.input_mean)
            .zip(&self.input_std)
            .map(|((d, m), s)| (d - m) / s)
            .collect()
    }

    pub fn forward(&self, frame: &HeightmapFrame) -> Result<ForwardPass> {
        self.forward_normalized(self.normalize(frame))
    }

    pub fn forward_normalized(&self, input: Vec<f64>) -> Result<ForwardPass> {
        if input.len() != NUM_RAYS {
            return Err(Error::ShapeMismatch(format!("expected {NUM_RAYS} inputs, got {}", input.len())));
        }
        let last = self.layers.len() - 1;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let x = if li == 0 { &input } else { &activations[li - 1] };
            let mut out = Vec::with_capacity(layer.outputs);
            layer.apply(x, &mut out);
            if li != last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalBlowUp(format!("non-finite activation in layer {li}")));
            }
            activations.push(out);
        }
        let recon = &activations[last];
        let loss = recon.iter().zip(&input).map(|(r, x)| (r - x) * (r - x)).sum::<f64>() / NUM_RAYS as f64;
        Ok(ForwardPass { input, activations, loss })
    }

    /// Loss recomputed from layer `first` onwards, reusing the earlier
    /// activations of `pass`. Cheap re-evaluation after perturbing one layer.
    pub fn loss_from_layer(&self, pass: &ForwardPass, first: usize) -> f64 {
        let last = self.layers.len() - 1;
        let mut x = if first == 0 { pass.input.clone() } else { pass.activations[first - 1].clone() };
        let mut out = Vec::new();
        for li in first..=last {
            self.layers[li].apply(&x, &mut out);
            if li != last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut x, &mut out);
        }
        x.iter().zip(&pass.input).map(|(r, v)| (r - v) * (r - v)).sum::<f64>() / NUM_RAYS as f64
    }

    /// Layer that owns flat parameter `index`.
    pub fn parameter_layer(&self, index: usize) -> usize {
        self.locate(index).0
    }

    pub fn loss(&self, frame: &HeightmapFrame) -> Result<f64> {
        Ok(self.forward(frame)?.loss)
    }

    pub fn encode(&self, frame: &HeightmapFrame) -> Result<[f64; LATENT_DIM]> {
        let pass = self.forward(frame)?;
        let mut out = [0.0; LATENT_DIM];
        out.copy_from_slice(pass.latent());
        Ok(out)
    }

    /// Exact gradient of the reconstruction loss for one frame.
    pub fn backward(&self, frame: &HeightmapFrame) -> Result<(ForwardPass, Gradients)> {
        let pass = self.forward(frame)?;
        let grads = self.backward_from(&pass);
        Ok((pass, grads))
    }

    pub fn backward_from(&self, pass: &ForwardPass) -> Gradients {
        let n = NUM_RAYS as f64;
        let mut grads = Gradients::zeros_like(self);
        let mut delta: Vec<f64> = pass
            .reconstruction()
            .iter()
            .zip(&pass.input)
            .map(|(r, x)| 2.0 * (r - x) / n)
            .collect();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let prev = if li == 0 { &pass.input } else { &pass.activations[li - 1] };
            let (gw, gb) = &mut grads.layers[li];
            for (i, d) in delta.iter().enumerate() {
                gb[i] = *d;
                let row = &mut gw[i * layer.inputs..(i + 1) * layer.inputs];
                row.iter_mut().zip(prev).for_each(|(g, a)| *g = d * a);
            }
            if li > 0 {
                let mut next = vec![0.0; layer.inputs];
                for (i, d) in delta.iter().enumerate() {
                    let row = &layer.weights[i * layer.inputs..(i + 1) * layer.inputs];
                    next.iter_mut().zip(row).for_each(|(acc, w)| *acc += w * d);
                }
                // tanh'(z) = 1 - tanh(z)^2
                next.iter_mut().zip(prev).for_each(|(g, a)| *g *= 1.0 - a * a);
                delta = next;
            }
        }
        grads
    }

    pub fn mean_loss(&self, frames: &[HeightmapFrame]) -> Result<f64> {
        let mut total = 0.0;
        for f in frames {
            total += self.loss(f)?;
        }
        Ok(total / frames.len().max(1) as f64)
    }

    /// Serialises to the versioned network file format.
    pub fn to_json(&self, training: Option<&TrainingReport>) -> Result<String> {
        let file = NetworkFile {
            format: NETWORK_FORMAT.to_string(),
            version: NETWORK_VERSION,
            layer_sizes: LAYER_SIZES.to_vec(),
            network: self.clone(),
            training: training.cloned(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Parses a network file, validating the `192/128/64/32` signature.
    pub fn from_json(text: &str) -> Result<(Self, Option<TrainingReport>)> {
        let file: NetworkFile = serde_json::from_str(text)?;
        if file.format != NETWORK_FORMAT || file.version != NETWORK_VERSION {
            return Err(Error::Parse(format!(
                "unsupported network file {} v{}",
                file.format, file.version
            )));
        }
        if file.layer_sizes != LAYER_SIZES {
            return Err(Error::ShapeMismatch(format!("layer sizes {:?}", file.layer_sizes)));
        }
        let net = file.network;
        let shapes_ok = net.layers.len() == LAYER_SIZES.len() - 1
            && net.layers.iter().zip(LAYER_SIZES.windows(2)).all(|(l, w)| {
                l.inputs == w[0] && l.outputs == w[1] && l.weights.len() == w[0] * w[1] && l.bias.len() == w[1]
            });
        if !shapes_ok {
            return Err(Error::ShapeMismatch("layer parameters do not match 192/128/64/32".into()));
        }
        if net.input_mean.len() != NUM_RAYS || net.input_std.len() != NUM_RAYS {
            return Err(Error::ShapeMismatch("normalization statistics need 192 entries".into()));
        }
        let finite = net
            .layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidParameter("non-finite network parameter".into()));
        }
        Ok((net, file.training))
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    network: EncoderNetwork,
    training: Option<TrainingReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub validation_fraction: f64,
    /// Epochs without a 1% validation improvement before the step is halved.
    pub plateau_patience: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            step_size: 0.05,
            momentum: 0.9,
            validation_fraction: 0.2,
            plateau_patience: 2,
        }
    }
}

/// Mini-batch gradient descent with momentum on standardised frames.
///
/// Normalization statistics are fitted on the training split. The returned
/// network is frozen.
pub fn fit<R: Rng + ?Sized>(
    frames: &[HeightmapFrame],
    config: &TrainingConfig,
    rng: &mut R,
) -> Result<(EncoderNetwork, TrainingReport)> {
    if frames.len() < 2 || config.batch_size == 0 || !(config.step_size > 0.0) {
        return Err(Error::InvalidParameter("training needs at least two frames and a positive step".into()));
    }
    let mut order: Vec<usize> = (0..frames.len()).collect();
    order.shuffle(rng);
    let n_val = ((frames.len() as f64 * config.validation_fraction).round() as usize).clamp(1, frames.len() - 1);
    let val: Vec<HeightmapFrame> = order[..n_val].iter().map(|&i| frames[i].clone()).collect();
    let train: Vec<HeightmapFrame> = order[n_val..].iter().map(|&i| frames[i].clone()).collect();

    let mut net = EncoderNetwork::random(rng);
    net.fit_normalization(&train)?;
    let mut velocity = Gradients::zeros_like(&net);
    let mut step = config.step_size;
    let mut train_curve = Vec::with_capacity(config.epochs);
    let mut validation_curve = vec![net.mean_loss(&val)?];
    let mut best_val = validation_curve[0];
    let mut stale = 0;
    let mut idx: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        idx.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in idx.chunks(config.batch_size) {
            let mut grad = Gradients::zeros_like(&net);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (pass, g) = net.backward(&train[i])?;
                epoch_loss += pass.loss;
                grad.add_scaled(&g, scale);
            }
            for ((layer, (vw, vb)), (gw, gb)) in net.layers.iter_mut().zip(&mut velocity.layers).zip(&grad.layers) {
                for ((p, v), g) in layer.weights.iter_mut().zip(vw.iter_mut()).zip(gw) {
                    *v = config.momentum * *v + g;
                    *p -= step * *v;
                }
                for ((p, v), g) in layer.bias.iter_mut().zip(vb.iter_mut()).zip(gb) {
                    *v = config.momentum * *v + g;
                    *p -= step * *v;
                }
            }
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = net.mean_loss(&val)?;
        if !(train_loss.is_finite() && val_loss.is_finite()) {
            return Err(Error::Diverged(format!(
                "epoch {epoch}: train loss {train_loss}, validation loss {val_loss}, step {step}"
            )));
        }
        train_curve.push(train_loss);
        validation_curve.push(val_loss);
        if val_loss < 0.99 * best_val {
            best_val = val_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.plateau_patience {
                step *= 0.5;
                stale = 0;
            }
        }
    }
    net.freeze();
    let report = TrainingReport {
        train_curve,
        validation_curve,
        final_step_size: step,
        train_frames: train.len(),
        validation_frames: val.len(),
    };
    Ok((net, report))
}
