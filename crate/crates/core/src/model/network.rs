//! Forward pass and backpropagation over a compiled layer stack.

use crate::error::{Error, Result};
use crate::model::metrics::{self, LossKind, Prediction, PROBABILITY_FLOOR};
use crate::model::{Activation, LabeledDataset, Layer, ModelSpec, ParamVector};

/// A [`ModelSpec`] compiled to layers with parameter offsets.
#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
    layers: Vec<Layer>,
    offsets: Vec<usize>,
    param_count: usize,
}

/// Per-layer buffers of one forward pass. `pre[l]` holds layer `l`'s values
/// before its activation (pool outputs for pooling layers), `post[l]` after.
#[derive(Debug, Clone)]
pub struct Trace {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
    grad: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl Network {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec.layers();
        let mut offsets = Vec::with_capacity(layers.len());
        let mut at = 0;
        for l in &layers {
            offsets.push(at);
            at += l.param_len();
        }
        debug_assert_eq!(at, spec.param_count());
        Ok(Self {
            spec: spec.clone(),
            layers,
            offsets,
            param_count: at,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].input_len()
    }

    pub fn classes(&self) -> usize {
        self.spec.class_count()
    }

    /// First flat index of layer `l`'s parameters.
    pub fn offset(&self, l: usize) -> usize {
        self.offsets[l]
    }

    /// Weights and biases of layer `l`.
    pub fn layer_params<'a>(&self, params: &'a [f64], l: usize) -> (&'a [f64], &'a [f64]) {
        let layer = &self.layers[l];
        let start = self.offsets[l];
        let mid = start + layer.weight_len();
        (&params[start..mid], &params[mid..mid + layer.bias_len()])
    }

    pub fn trace(&self) -> Trace {
        Trace {
            pre: self.layers.iter().map(|l| vec![0.0; l.output_len()]).collect(),
            post: self.layers.iter().map(|l| vec![0.0; l.output_len()]).collect(),
            grad: self.layers.iter().map(|l| vec![0.0; l.input_len().max(l.output_len())]).collect(),
            probs: vec![0.0; self.classes()],
        }
    }

    pub fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count {
            return Err(Error::invalid(format!(
                "parameter vector has {} entries, model needs {}",
                params.len(),
                self.param_count
            )));
        }
        Ok(())
    }

    pub fn check_data(&self, data: &LabeledDataset) -> Result<()> {
        if data.feature_len() != self.input_len() {
            return Err(Error::invalid(format!(
                "samples have {} features, model expects {}",
                data.feature_len(),
                self.input_len()
            )));
        }
        if data.classes() != self.classes() {
            return Err(Error::invalid(format!(
                "dataset has {} classes, model predicts {}",
                data.classes(),
                self.classes()
            )));
        }
        Ok(())
    }

    /// Runs one sample through the network; returns its logits.
    pub fn forward_sample<'t>(&self, params: &[f64], input: &[f64], trace: &'t mut Trace) -> &'t [f64] {
        for l in 0..self.layers.len() {
            let (w, b) = self.layer_params(params, l);
            let (done, rest) = trace.post.split_at_mut(l);
            let x = if l == 0 { input } else { &done[l - 1] };
            layer_forward(&self.layers[l], w, b, x, &mut trace.pre[l]);
            let act = self.layers[l].activation();
            for (p, &z) in rest[0].iter_mut().zip(&trace.pre[l]) {
                *p = act.apply(z);
            }
        }
        trace.post.last().expect("network has layers")
    }

    /// Row-major N x k logits.
    pub fn logits(&self, params: &[f64], data: &LabeledDataset) -> Result<Vec<f64>> {
        self.check_params(params)?;
        self.check_data(data)?;
        let mut trace = self.trace();
        let mut out = Vec::with_capacity(data.len() * self.classes());
        for n in 0..data.len() {
            out.extend_from_slice(self.forward_sample(params, data.sample(n), &mut trace));
        }
        Ok(out)
    }

    pub fn predict(&self, params: &[f64], data: &LabeledDataset) -> Result<Prediction> {
        Ok(Prediction::from_logits(self.classes(), &self.logits(params, data)?))
    }

    /// Mean per-row loss, summed in row order.
    pub fn loss(&self, params: &[f64], data: &LabeledDataset, kind: LossKind) -> Result<f64> {
        let logits = self.logits(params, data)?;
        let k = self.classes();
        let total: f64 = logits
            .chunks(k)
            .enumerate()
            .map(|(n, z)| metrics::row_loss(kind, z, data.labels().class_of(n)))
            .sum();
        Ok(total / data.len() as f64)
    }

    /// Adds `scale * d(cross-entropy of this sample)/d(params)` to `grad`
    /// and returns the sample's loss.
    pub fn accumulate_gradient(
        &self,
        params: &[f64],
        input: &[f64],
        label: usize,
        scale: f64,
        trace: &mut Trace,
        grad: &mut [f64],
    ) -> f64 {
        self.forward_sample(params, input, trace);
        let logits = trace.post.last().expect("network has layers");
        let loss = metrics::row_loss(LossKind::CrossEntropy, logits, label);
        metrics::softmax_into(logits, &mut trace.probs);
        if trace.probs[label] < PROBABILITY_FLOOR {
            // The floor is active: the loss is locally constant.
            return loss;
        }
        let last = self.layers.len() - 1;
        {
            let g = &mut trace.grad[last];
            for (c, gc) in g[..self.classes()].iter_mut().enumerate() {
                let y = if c == label { 1.0 } else { 0.0 };
                *gc = (trace.probs[c] - y) * scale;
            }
        }
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            let out_len = layer.output_len();
            // d loss / d pre-activation of layer l, in grad[l][..out_len].
            let act = layer.activation();
            if act != Activation::Identity {
                for (g, &z) in trace.grad[l][..out_len].iter_mut().zip(&trace.pre[l]) {
                    *g *= act.derivative(z);
                }
            }
            let (w, _) = self.layer_params(params, l);
            let start = self.offsets[l];
            let mid = start + layer.weight_len();
            let (gw, gb) = grad[start..mid + layer.bias_len()].split_at_mut(layer.weight_len());
            let (lower, upper) = trace.grad.split_at_mut(l);
            let g_out = &upper[0][..out_len];
            let x = if l == 0 { input } else { &trace.post[l - 1][..] };
            let g_in = if l == 0 { None } else { Some(&mut lower[l - 1][..layer.input_len()]) };
            layer_backward(&layer, w, x, g_out, &trace.pre[l], gw, gb, g_in);
        }
        loss
    }
}

fn layer_forward(layer: &Layer, w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    match *layer {
        Layer::Dense { inputs, .. } => {
            for (o, z) in out.iter_mut().enumerate() {
                let row = &w[o * inputs..(o + 1) * inputs];
                let mut acc = b[o];
                for (wi, xi) in row.iter().zip(x) {
                    acc += wi * xi;
                }
                *z = acc;
            }
        }
        Layer::Conv {
            in_channels,
            out_channels,
            kernel,
            padding,
            in_height,
            in_width,
            ..
        } => {
            let (oh, ow) = layer.output_hw();
            for oc in 0..out_channels {
                let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
                plane.fill(b[oc]);
                for ic in 0..in_channels {
                    let src = &x[ic * in_height * in_width..(ic + 1) * in_height * in_width];
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let wv = w[((oc * in_channels + ic) * kernel + ky) * kernel + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            let (x0, x1) = valid_range(kx, padding, in_width, ow);
                            let (y0, y1) = valid_range(ky, padding, in_height, oh);
                            for y in y0..y1 {
                                let iy = y + ky - padding;
                                let dst = &mut plane[y * ow + x0..y * ow + x1];
                                let row = &src[iy * in_width + x0 + kx - padding..iy * in_width + x1 + kx - padding];
                                for (d, s) in dst.iter_mut().zip(row) {
                                    *d += wv * s;
                                }
                            }
                        }
                    }
                }
            }
        }
        Layer::MaxPool {
            channels,
            in_height,
            in_width,
        } => {
            let (oh, ow) = layer.output_hw();
            for c in 0..channels {
                let src = &x[c * in_height * in_width..];
                for y in 0..oh {
                    for xo in 0..ow {
                        out[(c * oh + y) * ow + xo] = pool_window(src, in_width, y, xo).1;
                    }
                }
            }
        }
    }
}

/// Output coordinates `o` for which `o + k - padding` is a valid input index.
#[inline]
pub(crate) fn valid_range(k: usize, padding: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let lo = padding.saturating_sub(k);
    let hi = (in_len + padding).saturating_sub(k).min(out_len);
    (lo, hi.max(lo))
}

/// Index (within the channel plane) and value of the first maximum of the
/// 2x2 window feeding pool output `(y, x)`.
#[inline]
pub(crate) fn pool_window(plane: &[f64], in_width: usize, y: usize, x: usize) -> (usize, f64) {
    let base = 2 * y * in_width + 2 * x;
    let mut best = (base, plane[base]);
    for idx in [base + 1, base + in_width, base + in_width + 1] {
        if plane[idx] > best.1 {
            best = (idx, plane[idx]);
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn layer_backward(
    layer: &Layer,
    w: &[f64],
    x: &[f64],
    g_out: &[f64],
    pre: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    g_in: Option<&mut [f64]>,
) {
    match *layer {
        Layer::Dense { inputs, .. } => {
            for (o, &g) in g_out.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                gb[o] += g;
                for (gwi, xi) in gw[o * inputs..(o + 1) * inputs].iter_mut().zip(x) {
                    *gwi += g * xi;
                }
            }
            if let Some(g_in) = g_in {
                g_in.fill(0.0);
                for (o, &g) in g_out.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    for (gi, wi) in g_in.iter_mut().zip(&w[o * inputs..(o + 1) * inputs]) {
                        *gi += g * wi;
                    }
                }
            }
        }
        Layer::Conv {
            in_channels,
            out_channels,
            kernel,
            padding,
            in_height,
            in_width,
            ..
        } => {
            let (oh, ow) = layer.output_hw();
            let mut g_in = g_in;
            if let Some(g) = g_in.as_deref_mut() {
                g.fill(0.0);
            }
            for oc in 0..out_channels {
                let gplane = &g_out[oc * oh * ow..(oc + 1) * oh * ow];
                gb[oc] += gplane.iter().sum::<f64>();
                for ic in 0..in_channels {
                    let src = &x[ic * in_height * in_width..(ic + 1) * in_height * in_width];
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let wi = ((oc * in_channels + ic) * kernel + ky) * kernel + kx;
                            let (x0, x1) = valid_range(kx, padding, in_width, ow);
                            let (y0, y1) = valid_range(ky, padding, in_height, oh);
                            let mut acc = 0.0;
                            for y in y0..y1 {
                                let iy = y + ky - padding;
                                let grow = &gplane[y * ow + x0..y * ow + x1];
                                let srow = &src[iy * in_width + x0 + kx - padding..iy * in_width + x1 + kx - padding];
                                for (g, s) in grow.iter().zip(srow) {
                                    acc += g * s;
                                }
                            }
                            gw[wi] += acc;
                            if let Some(g_in) = g_in.as_deref_mut() {
                                let wv = w[wi];
                                if wv == 0.0 {
                                    continue;
                                }
                                let dst_plane = &mut g_in[ic * in_height * in_width..(ic + 1) * in_height * in_width];
                                for y in y0..y1 {
                                    let iy = y + ky - padding;
                                    let grow = &gplane[y * ow + x0..y * ow + x1];
                                    let drow = &mut dst_plane
                                        [iy * in_width + x0 + kx - padding..iy * in_width + x1 + kx - padding];
                                    for (d, g) in drow.iter_mut().zip(grow) {
                                        *d += wv * g;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Layer::MaxPool {
            channels,
            in_height,
            in_width,
        } => {
            let _ = pre;
            let (oh, ow) = layer.output_hw();
            if let Some(g_in) = g_in {
                g_in.fill(0.0);
                for c in 0..channels {
                    let plane = &x[c * in_height * in_width..(c + 1) * in_height * in_width];
                    for y in 0..oh {
                        for xo in 0..ow {
                            let (idx, _) = pool_window(plane, in_width, y, xo);
                            g_in[c * in_height * in_width + idx] += g_out[(c * oh + y) * ow + xo];
                        }
                    }
                }
            }
        }
    }
}

/// Class probabilities of every sample.
pub fn forward(spec: &ModelSpec, params: &ParamVector, data: &LabeledDataset) -> Result<Prediction> {
    if params.spec() != spec {
        return Err(Error::invalid("parameter vector belongs to a different model"));
    }
    Network::new(spec)?.predict(params.values(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OneHotLabels;
    use rand::Rng;

    fn dataset(n: usize, d: usize, k: usize, seed: u64) -> LabeledDataset {
        let mut rng = crate::rng::seeded(seed);
        let x = (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect();
        let y = (0..n).map(|i| i % k).collect();
        LabeledDataset::new("rand", x, vec![d], OneHotLabels::from_indices(k, y).unwrap()).unwrap()
    }

    fn random_params(net: &Network, seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = crate::rng::seeded(seed);
        (0..net.param_count()).map(|_| rng.random_range(-scale..scale)).collect()
    }

    #[test]
    fn zero_logistic_is_uniform() {
        let spec = ModelSpec::logistic(5, 4);
        let data = dataset(6, 5, 4, 1);
        let p = forward(&spec, &ParamVector::zeros(&spec).unwrap(), &data).unwrap();
        assert!(p.probabilities().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(p.predicted_class().iter().all(|&c| c == 0));
    }

    #[test]
    fn zero_lenet_on_zero_image_is_uniform() {
        let spec = ModelSpec::mnist_lenet();
        let labels = OneHotLabels::from_indices(10, vec![3]).unwrap();
        let data = LabeledDataset::new("z", vec![0.0; 784], vec![28, 28, 1], labels).unwrap();
        let p = forward(&spec, &ParamVector::zeros(&spec).unwrap(), &data).unwrap();
        assert!(p.row(0).iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn logistic_matches_matrix_formula() {
        let spec = ModelSpec::logistic(3, 2);
        // w[o][i] then b[o]
        let params = [1.0, -1.0, 0.0, 0.0, 1.0, 1.0, 0.5, -0.5];
        let labels = OneHotLabels::from_indices(2, vec![0]).unwrap();
        let data = LabeledDataset::new("x", vec![1.0, 2.0, 3.0], vec![3], labels).unwrap();
        let logits = Network::new(&spec).unwrap().logits(&params, &data).unwrap();
        assert_eq!(logits, vec![1.0 - 2.0 + 0.5, 2.0 + 3.0 - 0.5]);
    }

    #[test]
    fn mlp_2_2_2_hand_computed() {
        // x = (1, 2). Hidden: w1 = [[1, 0], [0, 1]], b1 = (0, -3) -> relu(1, -1) = (1, 0).
        // Output: w2 = [[2, 0], [0, 1]], b2 = (0, 0.5) -> logits (2, 0.5).
        let spec = ModelSpec::mlp(&[2, 2, 2]);
        let params = vec![1.0, 0.0, 0.0, 1.0, 0.0, -3.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.5];
        let labels = OneHotLabels::from_indices(2, vec![0]).unwrap();
        let data = LabeledDataset::new("x", vec![1.0, 2.0], vec![2], labels).unwrap();
        let pred = forward(&spec, &ParamVector::new(&spec, params).unwrap(), &data).unwrap();
        // softmax(2, 0.5) = (1/(1+e^-1.5), e^-1.5/(1+e^-1.5))
        let p0 = 1.0 / (1.0 + (-1.5f64).exp());
        assert!((pred.row(0)[0] - p0).abs() < 1e-15);
        assert!((pred.row(0)[1] - (1.0 - p0)).abs() < 1e-15);
    }

    #[test]
    fn conv_matches_direct_sum() {
        // Single conv layer checked against a naive per-output loop.
        let layer = Layer::Conv {
            in_channels: 2,
            out_channels: 3,
            kernel: 3,
            padding: 1,
            in_height: 5,
            in_width: 4,
            activation: Activation::Identity,
        };
        let mut rng = crate::rng::seeded(3);
        let w: Vec<f64> = (0..layer.weight_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..layer.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut out = vec![0.0; layer.output_len()];
        layer_forward(&layer, &w, &b, &x, &mut out);
        let (oh, ow) = layer.output_hw();
        assert_eq!((oh, ow), (5, 4));
        for oc in 0..3 {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = b[oc];
                    for ic in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = y as isize + ky as isize - 1;
                                let ix = xo as isize + kx as isize - 1;
                                if iy < 0 || ix < 0 || iy >= 5 || ix >= 4 {
                                    continue;
                                }
                                acc += w[((oc * 2 + ic) * 3 + ky) * 3 + kx] * x[ic * 20 + iy as usize * 4 + ix as usize];
                            }
                        }
                    }
                    assert!((out[(oc * oh + y) * ow + xo] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = ModelSpec::lenet(12, 12, 1, 3);
        let net = Network::new(&spec).unwrap();
        let data = dataset(4, 144, 3, 2);
        let params = random_params(&net, 4, 0.3);
        let a = net.logits(&params, &data).unwrap();
        let b = net.logits(&params, &data).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn one_logistic_weight_moves_one_logit_column() {
        let spec = ModelSpec::logistic(6, 4);
        let net = Network::new(&spec).unwrap();
        let data = dataset(10, 6, 4, 8);
        let mut params = random_params(&net, 1, 1.0);
        let before = net.logits(&params, &data).unwrap();
        // weight (class 2, feature 3)
        params[2 * 6 + 3] += 0.75;
        let after = net.logits(&params, &data).unwrap();
        for (i, (a, b)) in before.iter().zip(&after).enumerate() {
            if i % 4 != 2 {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let spec = ModelSpec::logistic(5, 4);
        let net = Network::new(&spec).unwrap();
        assert!(net.logits(&[0.0; 24], &dataset(3, 6, 4, 1)).is_err());
        assert!(net.logits(&[0.0; 23], &dataset(3, 5, 4, 1)).is_err());
        assert!(net.logits(&[0.0; 24], &dataset(3, 5, 3, 1)).is_err());
    }
}
