//! Dense network parameters and the three first-layer variants.
//!
//! Every network is a chain of dense layers. Hidden layers use `tanh`, the
//! output layer is linear. The first layer is one of:
//!
//! * [`FirstLayerKind::Plain`]: an ordinary dense `tanh` layer (Xavier init).
//! * [`FirstLayerKind::SpectralEmbedding`]: `A_j cos(B_j · x + b_j)` where the
//!   rows of `B` are *angular* frequencies, so a DFT mode with integer index
//!   `m` on an axis of length `L` is stored as `2πm/L`.
//! * [`FirstLayerKind::Rff`]: `cos(2π B_j · x + b_j)` where the rows of `B`
//!   are *cyclic* frequencies (the `2π` lives in the activation).
//!
//! Parameters are flattened layer-major; inside a layer the weight matrix
//! comes first (row-major, one row per output neuron), then the bias vector,
//! then, for a spectral-embedding layer only, the amplitude vector.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstLayerKind {
    Plain,
    SpectralEmbedding,
    Rff,
}

impl FirstLayerKind {
    pub(crate) fn tag(self) -> u8 {
        match self {
            FirstLayerKind::Plain => 0,
            FirstLayerKind::SpectralEmbedding => 1,
            FirstLayerKind::Rff => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(FirstLayerKind::Plain),
            1 => Ok(FirstLayerKind::SpectralEmbedding),
            2 => Ok(FirstLayerKind::Rff),
            other => Err(Error::Format(format!("unknown first-layer tag {other}"))),
        }
    }
}

/// One dense layer, `outputs × inputs` weights stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.inputs + col]
    }
}

/// Activation applied after a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Activation {
    Tanh,
    /// `cos`, optionally followed by a per-neuron amplitude.
    Cos,
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    layers: Vec<Layer>,
    first_layer: FirstLayerKind,
    /// Spectral-embedding amplitudes `A`; empty for the other kinds.
    amplitudes: Vec<f64>,
    freeze_first_layer: bool,
    seed: u64,
}

/// Weight-initialization settings for one stage network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub seed: u64,
    /// Number of weight layers, counting the output layer.
    pub depth: usize,
    pub width: usize,
    /// Number of spectral modes (SI) or sampled frequencies (RFF) in the first layer.
    pub features: usize,
    /// Multiplier for the first-layer weights of MSNN stages; `None` derives it
    /// from the residual's dominant frequency.
    pub scale_factor: Option<f64>,
    /// Multiplier for the output-layer weights; `None` means 1 for the base
    /// stage and 0 for correction stages, which then start from the
    /// uncorrected composite instead of adding an arbitrary ε-scaled field.
    pub output_gain: Option<f64>,
    pub freeze_first_layer: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            depth: 4,
            width: 20,
            features: 20,
            scale_factor: None,
            output_gain: None,
            freeze_first_layer: false,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::InvalidArgument(format!(
                "depth must be at least 2, got {}",
                self.depth
            )));
        }
        if self.width == 0 || self.features == 0 {
            return Err(Error::InvalidArgument(
                "width and features must be positive".into(),
            ));
        }
        if let Some(k) = self.scale_factor {
            if !(k > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "scale factor must be positive, got {k}"
                )));
            }
        }
        if let Some(g) = self.output_gain {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "output gain must be finite and non-negative, got {g}"
                )));
            }
        }
        Ok(())
    }

    /// Layer dimensions of a plain network for the given input/output sizes.
    pub fn plain_dims(&self, inputs: usize, outputs: usize) -> Vec<usize> {
        let mut dims = vec![inputs];
        dims.extend(std::iter::repeat(self.width).take(self.depth - 1));
        dims.push(outputs);
        dims
    }

    /// Dimensions of the dense layers that follow an embedding layer of
    /// `features` outputs, starting with `features`.
    pub fn tail_dims(&self, outputs: usize) -> Vec<usize> {
        let mut dims = vec![self.features];
        dims.extend(std::iter::repeat(self.width).take(self.depth - 2));
        dims.push(outputs);
        dims
    }
}

fn xavier_layers(dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<Layer> {
    dims.windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let mut layer = Layer::zeros(fan_in, fan_out);
            for v in layer.weights.iter_mut() {
                *v = dist.sample(rng);
            }
            layer
        })
        .collect()
}

fn check_chain(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a network needs at least an input and an output dimension, got {dims:?}"
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidArgument(format!(
            "layer dimensions must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

/// Copy of `net` with the output-layer weights and biases multiplied by `gain`.
pub fn scale_output_layer(net: &NetworkParams, gain: f64) -> NetworkParams {
    let mut out = net.clone();
    if let Some(last) = out.layers.last_mut() {
        last.weights.iter_mut().for_each(|w| *w *= gain);
        last.biases.iter_mut().for_each(|b| *b *= gain);
    }
    out
}

/// Plain MLP with Xavier-uniform weights and zero biases.
pub fn xavier_init(dims: &[usize], seed: u64) -> Result<NetworkParams> {
    check_chain(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(NetworkParams {
        layers: xavier_layers(dims, &mut rng),
        first_layer: FirstLayerKind::Plain,
        amplitudes: Vec::new(),
        freeze_first_layer: false,
        seed,
    })
}

impl NetworkParams {
    /// Network whose first layer is the spectral embedding `A cos(Bx + b)`.
    ///
    /// `frequencies` holds angular frequency rows; `tail_dims` starts with the
    /// embedding width and ends with the output dimension. The tail layers are
    /// Xavier-initialized from `seed`.
    pub fn spectral_embedding(
        frequencies: &[Vec<f64>],
        phases: &[f64],
        amplitudes: &[f64],
        tail_dims: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let first = embedding_layer(frequencies, phases)?;
        check_dim("amplitude vector", first.outputs, amplitudes.len())?;
        let mut net = Self::with_embedding(first, tail_dims, seed)?;
        net.first_layer = FirstLayerKind::SpectralEmbedding;
        net.amplitudes = amplitudes.to_vec();
        Ok(net)
    }

    /// Network whose first layer is the random Fourier feature map
    /// `cos(2πBx + b)` with cyclic frequency rows.
    pub fn rff(
        frequencies: &[Vec<f64>],
        phases: &[f64],
        tail_dims: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let first = embedding_layer(frequencies, phases)?;
        let mut net = Self::with_embedding(first, tail_dims, seed)?;
        net.first_layer = FirstLayerKind::Rff;
        Ok(net)
    }

    fn with_embedding(first: Layer, tail_dims: &[usize], seed: u64) -> Result<Self> {
        check_chain(tail_dims)?;
        check_dim("embedding output", first.outputs, tail_dims[0])?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = vec![first];
        layers.extend(xavier_layers(tail_dims, &mut rng));
        Ok(Self {
            layers,
            first_layer: FirstLayerKind::Plain,
            amplitudes: Vec::new(),
            freeze_first_layer: false,
            seed,
        })
    }

    /// Assemble a network from explicit parts.
    pub fn from_parts(
        layers: Vec<Layer>,
        first_layer: FirstLayerKind,
        amplitudes: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        for pair in layers.windows(2) {
            check_dim("layer chain", pair[0].outputs, pair[1].inputs)?;
        }
        for layer in &layers {
            check_dim("weight matrix", layer.inputs * layer.outputs, layer.weights.len())?;
            check_dim("bias vector", layer.outputs, layer.biases.len())?;
        }
        match first_layer {
            FirstLayerKind::SpectralEmbedding => {
                check_dim("amplitude vector", layers[0].outputs, amplitudes.len())?
            }
            _ => check_dim("amplitude vector", 0, amplitudes.len())?,
        }
        if first_layer != FirstLayerKind::Plain && layers.len() < 2 {
            return Err(Error::InvalidArgument(
                "an embedding first layer needs at least one dense layer after it".into(),
            ));
        }
        Ok(Self {
            layers,
            first_layer,
            amplitudes,
            freeze_first_layer: false,
            seed,
        })
    }

    pub fn with_frozen_first_layer(mut self, frozen: bool) -> Self {
        self.freeze_first_layer = frozen;
        self
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn first_layer_kind(&self) -> FirstLayerKind {
        self.first_layer
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn first_layer_frozen(&self) -> bool {
        self.freeze_first_layer
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub(crate) fn activation(&self, layer: usize) -> Activation {
        if layer == 0 && self.first_layer != FirstLayerKind::Plain {
            Activation::Cos
        } else if layer + 1 == self.layers.len() {
            Activation::Linear
        } else {
            Activation::Tanh
        }
    }

    /// Multiplier applied to first-layer weights inside the activation
    /// argument (`2π` for RFF, 1 otherwise).
    pub(crate) fn first_layer_weight_scale(&self) -> f64 {
        match self.first_layer {
            FirstLayerKind::Rff => std::f64::consts::TAU,
            _ => 1.0,
        }
    }

    fn layer_param_count(&self, index: usize) -> usize {
        let layer = &self.layers[index];
        let extra = if index == 0 { self.amplitudes.len() } else { 0 };
        layer.weights.len() + layer.biases.len() + extra
    }

    pub fn n_params(&self) -> usize {
        (0..self.layers.len()).map(|i| self.layer_param_count(i)).sum()
    }

    /// Number of parameters skipped at the front of the flattening when the
    /// first layer is frozen.
    pub(crate) fn frozen_prefix(&self) -> usize {
        if self.freeze_first_layer {
            self.layer_param_count(0)
        } else {
            0
        }
    }

    pub fn n_trainable(&self) -> usize {
        self.n_params() - self.frozen_prefix()
    }

    /// All parameters in canonical order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
            if i == 0 {
                out.extend_from_slice(&self.amplitudes);
            }
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        check_dim("parameter vector", self.n_params(), flat.len())?;
        let mut offset = 0;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let w = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + w]);
            offset += w;
            let b = layer.biases.len();
            layer.biases.copy_from_slice(&flat[offset..offset + b]);
            offset += b;
            if i == 0 {
                let a = self.amplitudes.len();
                self.amplitudes.copy_from_slice(&flat[offset..offset + a]);
                offset += a;
            }
        }
        Ok(())
    }

    pub fn trainable_params(&self) -> Vec<f64> {
        let mut all = self.params();
        all.drain(..self.frozen_prefix());
        all
    }

    pub fn set_trainable_params(&mut self, flat: &[f64]) -> Result<()> {
        check_dim("trainable parameter vector", self.n_trainable(), flat.len())?;
        let mut all = self.params();
        let skip = self.frozen_prefix();
        all[skip..].copy_from_slice(flat);
        self.set_params(&all)
    }
}

fn embedding_layer(frequencies: &[Vec<f64>], phases: &[f64]) -> Result<Layer> {
    if frequencies.is_empty() {
        return Err(Error::InvalidArgument("no frequencies given".into()));
    }
    check_dim("phase vector", frequencies.len(), phases.len())?;
    let dim = frequencies[0].len();
    let mut layer = Layer::zeros(dim, frequencies.len());
    for (j, row) in frequencies.iter().enumerate() {
        check_dim("frequency row", dim, row.len())?;
        layer.weights[j * dim..(j + 1) * dim].copy_from_slice(row);
    }
    layer.biases.copy_from_slice(phases);
    Ok(layer)
}

/// `A_j cos(B_j · x + b_j)` for every row `j`.
pub fn spectral_embedding_forward(
    amplitudes: &[f64],
    frequencies: &[Vec<f64>],
    phases: &[f64],
    x: &[f64],
) -> Result<Vec<f64>> {
    check_dim("amplitude vector", frequencies.len(), amplitudes.len())?;
    check_dim("phase vector", frequencies.len(), phases.len())?;
    frequencies
        .iter()
        .zip(phases)
        .zip(amplitudes)
        .map(|((row, &phase), &amp)| {
            check_dim("frequency row", x.len(), row.len())?;
            let arg: f64 = row.iter().zip(x).map(|(k, xi)| k * xi).sum::<f64>() + phase;
            Ok(amp * arg.cos())
        })
        .collect()
}

/// `cos(2π B_j · x + b_j)` for every row `j`.
pub fn rff_forward(frequencies: &[Vec<f64>], phases: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    check_dim("phase vector", frequencies.len(), phases.len())?;
    frequencies
        .iter()
        .zip(phases)
        .map(|(row, &phase)| {
            check_dim("frequency row", x.len(), row.len())?;
            let dot: f64 = row.iter().zip(x).map(|(k, xi)| k * xi).sum();
            Ok((std::f64::consts::TAU * dot + phase).cos())
        })
        .collect()
}

/// Multiply the first-layer weights of a plain network by `kappa`.
pub fn apply_scale_factor(net: &NetworkParams, kappa: f64) -> Result<NetworkParams> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "scale factor must be positive and finite, got {kappa}"
        )));
    }
    if net.first_layer != FirstLayerKind::Plain {
        return Err(Error::InvalidArgument(
            "scale factor applies to plain first layers only".into(),
        ));
    }
    let mut out = net.clone();
    for w in out.layers[0].weights.iter_mut() {
        *w *= kappa;
    }
    Ok(out)
}

/// Default MSNN scale factor `2π f_d`, clamped to `[1, 500]`.
pub fn scale_factor_for_frequency(dominant_frequency: f64) -> f64 {
    (std::f64::consts::TAU * dominant_frequency).clamp(1.0, 500.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn xavier_single_weight_bound() {
        for seed in 0..50 {
            let net = xavier_init(&[1, 1], seed).unwrap();
            assert!(net.layers()[0].weights[0].abs() <= 3f64.sqrt());
            assert_eq!(net.layers()[0].biases[0], 0.0);
        }
    }

    #[test]
    fn xavier_is_deterministic() {
        let a = xavier_init(&[2, 20, 20, 20, 1], 7).unwrap();
        let b = xavier_init(&[2, 20, 20, 20, 1], 7).unwrap();
        let c = xavier_init(&[2, 20, 20, 20, 1], 8).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn xavier_rejects_empty_dims() {
        assert!(xavier_init(&[], 0).is_err());
        assert!(xavier_init(&[3], 0).is_err());
    }

    #[test]
    fn xavier_variance_matches_uniform_formula() {
        // Var(U[-a, a]) = a²/3 = 2/(fan_in + fan_out).
        let dims = [2usize, 20, 20, 20, 1];
        let mut sums = vec![(0.0f64, 0usize); dims.len() - 1];
        for seed in 0..1000 {
            let net = xavier_init(&dims, seed).unwrap();
            for (acc, layer) in sums.iter_mut().zip(net.layers()) {
                acc.0 += layer.weights.iter().map(|w| w * w).sum::<f64>();
                acc.1 += layer.weights.len();
            }
        }
        for (l, (sq, n)) in sums.iter().enumerate() {
            let empirical = sq / *n as f64;
            let expected = 2.0 / (dims[l] + dims[l + 1]) as f64;
            assert!(
                (empirical / expected - 1.0).abs() < 0.2,
                "layer {l}: {empirical} vs {expected}"
            );
        }
    }

    #[test]
    fn spectral_embedding_examples() {
        let y = spectral_embedding_forward(&[1.0], &[vec![0.0, 0.0]], &[0.0], &[0.3, -0.8]).unwrap();
        assert_eq!(y, vec![1.0]);
        let y = spectral_embedding_forward(&[2.0], &[vec![PI, 0.0]], &[0.0], &[1.0, 0.0]).unwrap();
        assert!((y[0] + 2.0).abs() < 1e-15);
        let y = spectral_embedding_forward(&[1.0], &[vec![PI / 2.0, 0.0]], &[PI / 2.0], &[1.0, 0.0])
            .unwrap();
        assert!((y[0] + 1.0).abs() < 1e-15);
        assert!(spectral_embedding_forward(&[1.0, 2.0], &[vec![0.0, 0.0]], &[0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn rff_examples() {
        for x in [[0.1, 0.2], [-0.7, 0.9]] {
            assert_eq!(rff_forward(&[vec![0.0, 0.0]], &[0.0], &x).unwrap(), vec![1.0]);
        }
        let y = rff_forward(&[vec![1.0, 0.0]], &[0.0], &[0.5, 0.0]).unwrap();
        assert!((y[0] + 1.0).abs() < 1e-15);
        let y = rff_forward(&[vec![0.25, 0.0]], &[PI], &[1.0, 0.0]).unwrap();
        assert!(y[0].abs() < 1e-15);
        assert!(rff_forward(&[vec![0.25, 0.0]], &[PI, 0.0], &[1.0, 0.0]).is_err());
        assert!(rff_forward(&[vec![0.25]], &[PI], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn phases_are_two_pi_periodic() {
        let rows = vec![vec![1.3, -0.4], vec![0.2, 2.0]];
        let x = [0.37, -0.61];
        let a = spectral_embedding_forward(&[0.5, 1.5], &rows, &[0.1, 2.0], &x).unwrap();
        let b = spectral_embedding_forward(&[0.5, 1.5], &rows, &[0.1 + 2.0 * PI, 2.0 + 2.0 * PI], &x)
            .unwrap();
        let c = rff_forward(&rows, &[0.1, 2.0], &x).unwrap();
        let d = rff_forward(&rows, &[0.1 + 2.0 * PI, 2.0 + 2.0 * PI], &x).unwrap();
        for (u, v) in a.iter().zip(&b).chain(c.iter().zip(&d)) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn scale_factor_examples() {
        let mut net = xavier_init(&[1, 2, 1], 3).unwrap();
        assert_eq!(apply_scale_factor(&net, 1.0).unwrap(), net);

        net.layers[0].weights[0] = 0.3;
        let scaled = apply_scale_factor(&net, 10.0).unwrap();
        assert!((scaled.layers()[0].weights[0] - 3.0).abs() < 1e-15);
        assert_eq!(scaled.layers()[1], net.layers()[1]);

        assert!((scale_factor_for_frequency(4.0) - 8.0 * PI).abs() < 1e-12);
        assert_eq!(scale_factor_for_frequency(0.0), 1.0);
        assert_eq!(scale_factor_for_frequency(1e6), 500.0);
        assert!(apply_scale_factor(&net, 0.0).is_err());
        assert!(apply_scale_factor(&net, -2.0).is_err());
    }

    #[test]
    fn scale_factor_composes() {
        let net = xavier_init(&[2, 5, 1], 11).unwrap();
        let twice = apply_scale_factor(&apply_scale_factor(&net, 3.0).unwrap(), 0.5).unwrap();
        let once = apply_scale_factor(&net, 1.5).unwrap();
        for (a, b) in twice.params().iter().zip(once.params()) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn flattening_round_trip_and_freeze() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let net = NetworkParams::spectral_embedding(&rows, &[0.5, 0.6], &[0.7, 0.8], &[2, 3, 1], 1)
            .unwrap();
        let flat = net.params();
        assert_eq!(&flat[..8], &[1.0, 2.0, 3.0, 4.0, 0.5, 0.6, 0.7, 0.8]);
        assert_eq!(flat.len(), net.n_params());
        assert_eq!(net.n_params(), 8 + 6 + 3 + 3 + 1);

        let mut frozen = net.clone().with_frozen_first_layer(true);
        assert_eq!(frozen.n_trainable(), net.n_params() - 8);
        let mut t = frozen.trainable_params();
        t.iter_mut().for_each(|v| *v += 1.0);
        frozen.set_trainable_params(&t).unwrap();
        assert_eq!(&frozen.params()[..8], &flat[..8]);
        assert_eq!(frozen.params()[8], flat[8] + 1.0);
    }
}
