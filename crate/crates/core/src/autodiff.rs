//! Input-derivative jets and exact parameter gradients for dense networks.
//!
//! A forward pass carries, for every neuron, the *jet* `(value, ∂/∂x_k,
//! ∂²/∂x_k²)` over all input axes `k`. Mixed second derivatives are not
//! tracked. The forward pass caches every layer's jets so the reverse pass
//! can return the exact gradient of any loss built from output jets,
//! including the paths through the second derivatives.
//!
//! Points are processed in fixed chunks of [`CHUNK`] points. Chunk results
//! are reduced sequentially in chunk order, so the summation order (and thus
//! every bit of the result) does not depend on the number of worker threads.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::network::{Activation, FirstLayerKind, NetworkParams};

/// Points per evaluation chunk.
pub const CHUNK: usize = 64;

/// Number of jet entries per output for an input of dimension `dim`.
#[inline]
pub const fn jet_width(dim: usize) -> usize {
    1 + 2 * dim
}

/// Value, gradient and Hessian diagonal of one network output at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeBundle {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian_diag: Vec<f64>,
}

/// Gradient of a loss with respect to the trainable parameters, in the
/// canonical flattening order of [`NetworkParams::params`] with any frozen
/// first-layer block removed.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGradient(pub Vec<f64>);

impl ParameterGradient {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Borrowed view of all output jets at one point.
///
/// Layout: for each output `c`, `[value, grad_0..grad_{d-1}, hess_0..hess_{d-1}]`.
#[derive(Clone, Copy, Debug)]
pub struct PointJets<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> PointJets<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        debug_assert_eq!(data.len() % jet_width(dim), 0);
        Self { data, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outputs(&self) -> usize {
        self.data.len() / jet_width(self.dim)
    }

    pub fn raw(&self) -> &'a [f64] {
        self.data
    }

    #[inline]
    pub fn value(&self, c: usize) -> f64 {
        self.data[c * jet_width(self.dim)]
    }

    #[inline]
    pub fn grad(&self, c: usize, k: usize) -> f64 {
        self.data[c * jet_width(self.dim) + 1 + k]
    }

    #[inline]
    pub fn hess(&self, c: usize, k: usize) -> f64 {
        self.data[c * jet_width(self.dim) + 1 + self.dim + k]
    }

    pub fn bundle(&self, c: usize) -> DerivativeBundle {
        let base = c * jet_width(self.dim);
        DerivativeBundle {
            value: self.data[base],
            gradient: self.data[base + 1..base + 1 + self.dim].to_vec(),
            hessian_diag: self.data[base + 1 + self.dim..base + 1 + 2 * self.dim].to_vec(),
        }
    }
}

/// Flat index helpers for adjoint buffers sharing the [`PointJets`] layout.
#[derive(Clone, Copy, Debug)]
pub struct JetIndex {
    pub dim: usize,
}

impl JetIndex {
    #[inline]
    pub fn value(&self, c: usize) -> usize {
        c * jet_width(self.dim)
    }
    #[inline]
    pub fn grad(&self, c: usize, k: usize) -> usize {
        c * jet_width(self.dim) + 1 + k
    }
    #[inline]
    pub fn hess(&self, c: usize, k: usize) -> usize {
        c * jet_width(self.dim) + 1 + self.dim + k
    }
}

/// A loss that is a sum of per-point terms, each a function of the output
/// jets at that point.
pub trait PointwiseLoss: Sync {
    /// Returns the loss contribution of point `index` and writes its partial
    /// derivatives with respect to every jet entry into `adjoint` (zeroed on
    /// entry, same layout as `jets`).
    fn point_loss(&self, index: usize, jets: PointJets<'_>, adjoint: &mut [f64]) -> Result<f64>;
}

impl<F> PointwiseLoss for F
where
    F: Fn(usize, PointJets<'_>, &mut [f64]) -> Result<f64> + Sync,
{
    fn point_loss(&self, index: usize, jets: PointJets<'_>, adjoint: &mut [f64]) -> Result<f64> {
        self(index, jets, adjoint)
    }
}

/// Cached forward state for one chunk.
struct Forward {
    points: usize,
    /// Pre-activation jets per layer, `outputs × (J·points)`, column index
    /// `component · points + point`.
    pre: Vec<Vec<f64>>,
    /// Post-activation jets per non-output layer.
    post: Vec<Vec<f64>>,
    /// Unscaled `cos` jets of a spectral-embedding first layer.
    unscaled: Vec<f64>,
    /// σ', σ'', σ''' at the pre-activation value, `outputs × points`.
    derivs: Vec<[Vec<f64>; 3]>,
}

#[inline]
fn activation_derivs(act: Activation, z: f64) -> [f64; 4] {
    match act {
        Activation::Tanh => {
            let t = z.tanh();
            let s1 = 1.0 - t * t;
            let s2 = -2.0 * t * s1;
            let s3 = -2.0 * s1 * s1 + 4.0 * t * t * s1;
            [t, s1, s2, s3]
        }
        Activation::Cos => {
            let (s, c) = z.sin_cos();
            [c, -s, -c, s]
        }
        Activation::Linear => [z, 1.0, 0.0, 0.0],
    }
}

fn apply_activation(
    act: Activation,
    dim: usize,
    neurons: usize,
    points: usize,
    pre: &[f64],
    post: &mut [f64],
) -> [Vec<f64>; 3] {
    let jw = jet_width(dim);
    let stride = jw * points;
    let mut d1 = vec![0.0; neurons * points];
    let mut d2 = vec![0.0; neurons * points];
    let mut d3 = vec![0.0; neurons * points];
    for i in 0..neurons {
        let row = &pre[i * stride..(i + 1) * stride];
        let out = &mut post[i * stride..(i + 1) * stride];
        for p in 0..points {
            let [s0, s1, s2, s3] = activation_derivs(act, row[p]);
            out[p] = s0;
            d1[i * points + p] = s1;
            d2[i * points + p] = s2;
            d3[i * points + p] = s3;
        }
        for k in 0..dim {
            let g = (1 + k) * points;
            let h = (1 + dim + k) * points;
            for p in 0..points {
                let s1 = d1[i * points + p];
                let s2 = d2[i * points + p];
                let zg = row[g + p];
                let zh = row[h + p];
                out[g + p] = s1 * zg;
                out[h + p] = s2 * zg * zg + s1 * zh;
            }
        }
    }
    [d1, d2, d3]
}

/// Reverse of [`apply_activation`]: maps the adjoint of the post-activation
/// jets to the adjoint of the pre-activation jets.
fn activation_backward(
    dim: usize,
    neurons: usize,
    points: usize,
    pre: &[f64],
    derivs: &[Vec<f64>; 3],
    post_bar: &[f64],
    pre_bar: &mut [f64],
) {
    let stride = jet_width(dim) * points;
    let [d1, d2, d3] = derivs;
    for i in 0..neurons {
        let z = &pre[i * stride..(i + 1) * stride];
        let a_bar = &post_bar[i * stride..(i + 1) * stride];
        let z_bar = &mut pre_bar[i * stride..(i + 1) * stride];
        for p in 0..points {
            z_bar[p] = d1[i * points + p] * a_bar[p];
        }
        for k in 0..dim {
            let g = (1 + k) * points;
            let h = (1 + dim + k) * points;
            for p in 0..points {
                let s1 = d1[i * points + p];
                let s2 = d2[i * points + p];
                let s3 = d3[i * points + p];
                let zg = z[g + p];
                let zh = z[h + p];
                let ag = a_bar[g + p];
                let ah = a_bar[h + p];
                z_bar[p] += s2 * zg * ag + (s3 * zg * zg + s2 * zh) * ah;
                z_bar[g + p] = s1 * ag + 2.0 * s2 * zg * ah;
                z_bar[h + p] = s1 * ah;
            }
        }
    }
}

fn forward(net: &NetworkParams, xs: &[f64]) -> Forward {
    let dim = net.input_dim();
    let points = xs.len() / dim;
    let jw = jet_width(dim);
    let cols = jw * points;
    let layers = net.layers();
    let n_layers = layers.len();

    let mut pre = Vec::with_capacity(n_layers);
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
    let mut derivs = Vec::with_capacity(n_layers);
    let mut unscaled = Vec::new();

    // First layer acts on the raw input: x has unit gradient and zero curvature.
    let first = &layers[0];
    let scale = net.first_layer_weight_scale();
    let mut z0 = vec![0.0; first.outputs * cols];
    for i in 0..first.outputs {
        let row = &mut z0[i * cols..(i + 1) * cols];
        let w = &first.weights[i * dim..(i + 1) * dim];
        for p in 0..points {
            let x = &xs[p * dim..(p + 1) * dim];
            let dot: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            row[p] = scale * dot + first.biases[i];
        }
        for k in 0..dim {
            let g = (1 + k) * points;
            row[g..g + points].fill(scale * w[k]);
        }
    }
    pre.push(z0);

    for l in 0..n_layers {
        if l > 0 {
            let layer = &layers[l];
            let mut z = vec![0.0; layer.outputs * cols];
            {
                let w = ArrayView2::from_shape((layer.outputs, layer.inputs), &layer.weights)
                    .expect("weight shape");
                let a = ArrayView2::from_shape((layer.inputs, cols), &post[l - 1])
                    .expect("activation shape");
                let mut zv = ArrayViewMut2::from_shape((layer.outputs, cols), &mut z)
                    .expect("pre-activation shape");
                general_mat_mul(1.0, &w, &a, 0.0, &mut zv);
            }
            for i in 0..layer.outputs {
                let b = layer.biases[i];
                for v in &mut z[i * cols..i * cols + points] {
                    *v += b;
                }
            }
            pre.push(z);
        }
        let act = net.activation(l);
        if act == Activation::Linear {
            // Only the output layer is linear; its jets are read from `pre`.
            derivs.push([Vec::new(), Vec::new(), Vec::new()]);
            continue;
        }
        let neurons = layers[l].outputs;
        let mut a = vec![0.0; neurons * cols];
        let d = apply_activation(act, dim, neurons, points, &pre[l], &mut a);
        if l == 0 && net.first_layer_kind() == FirstLayerKind::SpectralEmbedding {
            unscaled = a.clone();
            for (i, amp) in net.amplitudes().iter().enumerate() {
                for v in &mut a[i * cols..(i + 1) * cols] {
                    *v *= amp;
                }
            }
        }
        derivs.push(d);
        post.push(a);
    }

    Forward {
        points,
        pre,
        post,
        unscaled,
        derivs,
    }
}

/// Reverse pass. `out_bar` is the adjoint of the output-layer jets in the
/// chunk layout; returns the gradient over all parameters (frozen blocks
/// left at zero).
fn backward(net: &NetworkParams, xs: &[f64], fwd: &Forward, out_bar: Vec<f64>) -> Vec<f64> {
    let dim = net.input_dim();
    let points = fwd.points;
    let cols = jet_width(dim) * points;
    let layers = net.layers();
    let n_layers = layers.len();
    let frozen = net.first_layer_frozen();

    let offsets: Vec<usize> = {
        let mut acc = 0;
        let mut v = Vec::with_capacity(n_layers);
        for (i, l) in layers.iter().enumerate() {
            v.push(acc);
            acc += l.weights.len() + l.biases.len();
            if i == 0 {
                acc += net.amplitudes().len();
            }
        }
        v
    };
    let mut grad = vec![0.0; net.n_params()];

    let mut z_bar = out_bar;
    for l in (0..n_layers).rev() {
        let layer = &layers[l];
        if l != n_layers - 1 {
            // z_bar currently holds the adjoint of this layer's post-activation jets.
            let mut a_bar = z_bar;
            if l == 0 && net.first_layer_kind() == FirstLayerKind::SpectralEmbedding {
                let amp_off = offsets[0] + layer.weights.len() + layer.biases.len();
                for (i, &amp) in net.amplitudes().iter().enumerate() {
                    let row = &mut a_bar[i * cols..(i + 1) * cols];
                    let t = &fwd.unscaled[i * cols..(i + 1) * cols];
                    grad[amp_off + i] += row.iter().zip(t).map(|(a, b)| a * b).sum::<f64>();
                    for v in row.iter_mut() {
                        *v *= amp;
                    }
                }
            }
            let mut pre_bar = vec![0.0; layer.outputs * cols];
            activation_backward(
                dim,
                layer.outputs,
                points,
                &fwd.pre[l],
                &fwd.derivs[l],
                &a_bar,
                &mut pre_bar,
            );
            z_bar = pre_bar;
        }

        let w_off = offsets[l];
        let b_off = w_off + layer.weights.len();
        if l > 0 {
            {
                let zb = ArrayView2::from_shape((layer.outputs, cols), &z_bar).expect("shape");
                let a = ArrayView2::from_shape((layer.inputs, cols), &fwd.post[l - 1])
                    .expect("shape");
                let mut wbar = ArrayViewMut2::from_shape(
                    (layer.outputs, layer.inputs),
                    &mut grad[w_off..b_off],
                )
                .expect("shape");
                general_mat_mul(1.0, &zb, &a.t(), 1.0, &mut wbar);
            }
            for i in 0..layer.outputs {
                grad[b_off + i] += z_bar[i * cols..i * cols + points].iter().sum::<f64>();
            }
            if l == 1 && frozen {
                break;
            }
            let mut prev_bar = vec![0.0; layer.inputs * cols];
            {
                let w = ArrayView2::from_shape((layer.outputs, layer.inputs), &layer.weights)
                    .expect("shape");
                let zb = ArrayView2::from_shape((layer.outputs, cols), &z_bar).expect("shape");
                let mut pb =
                    ArrayViewMut2::from_shape((layer.inputs, cols), &mut prev_bar).expect("shape");
                general_mat_mul(1.0, &w.t(), &zb, 0.0, &mut pb);
            }
            z_bar = prev_bar;
        } else if !frozen {
            let scale = net.first_layer_weight_scale();
            for i in 0..layer.outputs {
                let row = &z_bar[i * cols..(i + 1) * cols];
                for k in 0..dim {
                    let mut acc = 0.0;
                    for p in 0..points {
                        acc += row[p] * xs[p * dim + k];
                    }
                    let g = (1 + k) * points;
                    acc += row[g..g + points].iter().sum::<f64>();
                    grad[w_off + i * dim + k] += scale * acc;
                }
                grad[b_off + i] += row[..points].iter().sum::<f64>();
            }
        }
    }
    grad
}

fn check_points(net: &NetworkParams, points: &[f64]) -> Result<usize> {
    let dim = net.input_dim();
    if points.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            what: "point coordinates",
            expected: dim,
            got: points.len() % dim,
        });
    }
    Ok(points.len() / dim)
}

/// Output jets of `net` at every point, point-major:
/// `out[(p · outputs + c) · J + entry]`.
pub fn eval_jets(net: &NetworkParams, points: &[f64]) -> Result<Vec<f64>> {
    check_points(net, points)?;
    let dim = net.input_dim();
    let outs = net.output_dim();
    let jw = jet_width(dim);
    let chunks: Vec<Vec<f64>> = points
        .par_chunks(CHUNK * dim)
        .map(|xs| {
            let fwd = forward(net, xs);
            let z = fwd.pre.last().expect("output layer");
            let p = fwd.points;
            let mut out = vec![0.0; p * outs * jw];
            for pt in 0..p {
                for c in 0..outs {
                    for e in 0..jw {
                        out[(pt * outs + c) * jw + e] = z[c * jw * p + e * p + pt];
                    }
                }
            }
            out
        })
        .collect();
    Ok(chunks.concat())
}

/// Value, gradient and Hessian diagonal of a single-output network at `x`.
pub fn eval_with_derivatives(net: &NetworkParams, x: &[f64]) -> Result<DerivativeBundle> {
    check_dim("input point", net.input_dim(), x.len())?;
    check_dim("network output", 1, net.output_dim())?;
    let jets = eval_jets(net, x)?;
    Ok(PointJets::new(&jets, x.len()).bundle(0))
}

/// Jets of every output of `net` at `x`.
pub fn eval_outputs_with_derivatives(
    net: &NetworkParams,
    x: &[f64],
) -> Result<Vec<DerivativeBundle>> {
    check_dim("input point", net.input_dim(), x.len())?;
    let jets = eval_jets(net, x)?;
    let view = PointJets::new(&jets, x.len());
    Ok((0..net.output_dim()).map(|c| view.bundle(c)).collect())
}

/// Total loss `Σ_i loss.point_loss(i, jets(x_i))` over `points` and its exact
/// gradient with respect to the trainable parameters of `net`.
pub fn loss_parameter_gradient<L: PointwiseLoss + ?Sized>(
    net: &NetworkParams,
    points: &[f64],
    loss: &L,
) -> Result<(f64, ParameterGradient)> {
    check_points(net, points)?;
    let dim = net.input_dim();
    let outs = net.output_dim();
    let jw = jet_width(dim);

    let partials: Vec<Result<(f64, Vec<f64>)>> = points
        .par_chunks(CHUNK * dim)
        .enumerate()
        .map(|(chunk, xs)| {
            let fwd = forward(net, xs);
            let p = fwd.points;
            let z = fwd.pre.last().expect("output layer");
            let mut out_bar = vec![0.0; outs * jw * p];
            let mut jets = vec![0.0; outs * jw];
            let mut adj = vec![0.0; outs * jw];
            let mut total = 0.0;
            for pt in 0..p {
                for c in 0..outs {
                    for e in 0..jw {
                        jets[c * jw + e] = z[c * jw * p + e * p + pt];
                    }
                }
                adj.fill(0.0);
                let index = chunk * CHUNK + pt;
                total += loss.point_loss(index, PointJets::new(&jets, dim), &mut adj)?;
                if let Some(bad) = adj.iter().find(|v| !v.is_finite()) {
                    return Err(Error::UnsupportedLoss(format!(
                        "loss derivative {bad} at point {index} is not finite"
                    )));
                }
                for c in 0..outs {
                    for e in 0..jw {
                        out_bar[c * jw * p + e * p + pt] = adj[c * jw + e];
                    }
                }
            }
            let grad = backward(net, xs, &fwd, out_bar);
            Ok((total, grad))
        })
        .collect();

    let mut total = 0.0;
    let mut grad = vec![0.0; net.n_params()];
    for part in partials {
        let (l, g) = part?;
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    grad.drain(..net.frozen_prefix());
    Ok((total, ParameterGradient(grad)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{xavier_init, Layer};

    #[test]
    fn affine_map_has_zero_curvature() {
        let mut layer = Layer::zeros(1, 1);
        layer.weights[0] = 2.0;
        layer.biases[0] = 1.0;
        let net = NetworkParams::from_parts(vec![layer], FirstLayerKind::Plain, vec![], 0).unwrap();
        let b = eval_with_derivatives(&net, &[0.5]).unwrap();
        assert_eq!(b.value, 2.0);
        assert_eq!(b.gradient, vec![2.0]);
        assert_eq!(b.hessian_diag, vec![0.0]);
    }

    #[test]
    fn zero_weights_give_constant() {
        let mut net = xavier_init(&[2, 4, 4, 1], 0).unwrap();
        let mut p = net.params();
        p.iter_mut().for_each(|v| *v = 0.0);
        // Output bias is the last parameter.
        *p.last_mut().unwrap() = 1.7;
        net.set_params(&p).unwrap();
        let b = eval_with_derivatives(&net, &[0.3, -0.2]).unwrap();
        assert_eq!(b.value, 1.7);
        assert!(b.gradient.iter().chain(&b.hessian_diag).all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = xavier_init(&[2, 3, 1], 0).unwrap();
        assert!(matches!(
            eval_with_derivatives(&net, &[0.1]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(eval_jets(&net, &[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn squared_output_gradient_is_chain_rule() {
        // u(x) = w·x with a single weight, loss = u(x0)^2 → dL/dw = 2 u x0.
        let mut layer = Layer::zeros(1, 1);
        layer.weights[0] = 1.5;
        let net = NetworkParams::from_parts(vec![layer], FirstLayerKind::Plain, vec![], 0).unwrap();
        let x0 = 0.8;
        let loss = |_: usize, jets: PointJets<'_>, adj: &mut [f64]| -> Result<f64> {
            let u = jets.value(0);
            adj[0] = 2.0 * u;
            Ok(u * u)
        };
        let (l, g) = loss_parameter_gradient(&net, &[x0], &loss).unwrap();
        let u = 1.5 * x0;
        assert!((l - u * u).abs() < 1e-15);
        assert!((g.0[0] - 2.0 * u * x0).abs() < 1e-15);
        assert_eq!(g.0[1], 2.0 * u);
    }

    #[test]
    fn zero_loss_gives_zero_gradient() {
        let net = xavier_init(&[2, 5, 5, 1], 3).unwrap();
        let loss = |_: usize, _: PointJets<'_>, _: &mut [f64]| -> Result<f64> { Ok(0.0) };
        let (l, g) = loss_parameter_gradient(&net, &[0.1, 0.2, 0.3, 0.4], &loss).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.0.iter().all(|&v| v == 0.0));
        assert_eq!(g.0.len(), net.n_trainable());
    }

    #[test]
    fn non_finite_adjoint_is_unsupported() {
        let net = xavier_init(&[1, 3, 1], 3).unwrap();
        // |u| has no derivative at the kink; a loss reporting NaN there is rejected.
        let loss = |_: usize, jets: PointJets<'_>, adj: &mut [f64]| -> Result<f64> {
            adj[0] = f64::NAN;
            Ok(jets.value(0).abs())
        };
        assert!(matches!(
            loss_parameter_gradient(&net, &[0.2], &loss),
            Err(Error::UnsupportedLoss(_))
        ));
    }

    #[test]
    fn chunking_does_not_change_results() {
        // 150 points straddle three chunks; per-point jets must match single-point evaluation.
        let net = xavier_init(&[2, 6, 6, 2], 9).unwrap();
        let pts: Vec<f64> = (0..300).map(|i| ((i as f64) * 0.37).sin()).collect();
        let all = eval_jets(&net, &pts).unwrap();
        let jw = jet_width(2);
        for p in [0usize, 63, 64, 100, 149] {
            let single = eval_jets(&net, &pts[2 * p..2 * p + 2]).unwrap();
            assert_eq!(&all[p * 2 * jw..(p + 1) * 2 * jw], &single[..]);
        }
    }
}
