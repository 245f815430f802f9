//! Single-coordinate loss updates from cached activations.
//!
//! Every sample's pre-activations are kept for every layer. A trial seeds
//! the change in the layer owning the parameter, then pushes the sparse
//! difference forward layer by layer, stopping as soon as nothing changes
//! (a ReLU that stays off, a pooling window whose maximum survives). Only
//! the touched logits are rescored.

use crate::error::{Error, Result};
use crate::model::metrics;
use crate::model::{BlockKind, LabeledDataset, Layer, LossKind, Network, ParamLayout, ParamVector};
use crate::rng::stream_seed;
use crate::search::SearchObjective;

/// Order-independent fingerprint of a parameter vector.
pub fn param_checksum(params: &[f64]) -> u64 {
    params
        .iter()
        .enumerate()
        .fold(0u64, |acc, (i, &v)| acc.wrapping_add(entry_hash(i, v)))
}

fn entry_hash(i: usize, v: f64) -> u64 {
    stream_seed(v.to_bits(), i as u64)
}

/// Sparse per-sample scratch values over one layer's outputs. Entries are
/// valid for the current generation only, so clearing is O(1).
#[derive(Debug, Clone)]
struct Overlay {
    value: Vec<f64>,
    stamp: Vec<u32>,
    touched: Vec<usize>,
    generation: u32,
}

impl Overlay {
    fn new(len: usize) -> Self {
        Self {
            value: vec![0.0; len],
            stamp: vec![0; len],
            touched: Vec::new(),
            generation: 1,
        }
    }

    fn reset(&mut self) {
        self.touched.clear();
        if self.generation == u32::MAX {
            self.stamp.fill(0);
            self.generation = 1;
        } else {
            self.generation += 1;
        }
    }

    #[inline]
    fn is_set(&self, j: usize) -> bool {
        self.stamp[j] == self.generation
    }

    #[inline]
    fn get(&self, j: usize, base: f64) -> f64 {
        if self.is_set(j) {
            self.value[j]
        } else {
            base
        }
    }

    #[inline]
    fn add(&mut self, j: usize, base: f64, delta: f64) {
        if !self.is_set(j) {
            self.stamp[j] = self.generation;
            self.value[j] = base;
            self.touched.push(j);
        }
        self.value[j] += delta;
    }

    #[inline]
    fn set(&mut self, j: usize, v: f64) {
        if !self.is_set(j) {
            self.stamp[j] = self.generation;
            self.touched.push(j);
        }
        self.value[j] = v;
    }
}

#[derive(Debug, Clone, Copy)]
enum Target {
    DenseWeight { layer: usize, o: usize, i: usize },
    DenseBias { layer: usize, o: usize },
    ConvWeight { layer: usize, oc: usize, ic: usize, ky: usize, kx: usize },
    ConvBias { layer: usize, oc: usize },
}

impl Target {
    fn layer(self) -> usize {
        match self {
            Target::DenseWeight { layer, .. }
            | Target::DenseBias { layer, .. }
            | Target::ConvWeight { layer, .. }
            | Target::ConvBias { layer, .. } => layer,
        }
    }
}

/// Search objective that rescores only what a single substitution changes.
/// Agrees with a full recompute within rounding.
#[derive(Debug, Clone)]
pub struct IncrementalObjective<'a> {
    net: Network,
    layout: ParamLayout,
    data: &'a LabeledDataset,
    kind: LossKind,
    params: Vec<f64>,
    checksum: u64,
    /// `cache[l][n * out_len + j]`: pre-activation `j` of layer `l` for sample `n`.
    cache: Vec<Vec<f64>>,
    rows: Vec<f64>,
    total: f64,
    overlays: Vec<Overlay>,
    changed: Vec<(usize, f64)>,
    logits: Vec<f64>,
    /// Non-zero inputs per feature, when the first layer is dense.
    columns: Option<Vec<Vec<(u32, f64)>>>,
}

impl<'a> IncrementalObjective<'a> {
    pub fn new(params: &ParamVector, data: &'a LabeledDataset, kind: LossKind) -> Result<Self> {
        let net = Network::new(params.spec())?;
        net.check_data(data)?;
        if data.len() > u32::MAX as usize {
            return Err(Error::invalid("too many samples for the incremental cache"));
        }
        let n = data.len();
        let mut cache: Vec<Vec<f64>> = net.layers().iter().map(|l| Vec::with_capacity(n * l.output_len())).collect();
        let mut rows = Vec::with_capacity(n);
        let mut trace = net.trace();
        for s in 0..n {
            let logits = net.forward_sample(params.values(), data.sample(s), &mut trace);
            rows.push(metrics::row_loss(kind, logits, data.labels().class_of(s)));
            for (c, pre) in cache.iter_mut().zip(&trace.pre) {
                c.extend_from_slice(pre);
            }
        }
        let total: f64 = rows.iter().sum();
        let columns = match net.layers()[0] {
            Layer::Dense { inputs, .. } => {
                let mut cols = vec![Vec::new(); inputs];
                for s in 0..n {
                    for (i, &x) in data.sample(s).iter().enumerate() {
                        if x != 0.0 {
                            cols[i].push((s as u32, x));
                        }
                    }
                }
                Some(cols)
            }
            _ => None,
        };
        Ok(Self {
            layout: ParamLayout::new(net.layers()),
            overlays: net.layers().iter().map(|l| Overlay::new(l.output_len())).collect(),
            logits: vec![0.0; net.classes()],
            net,
            data,
            kind,
            checksum: param_checksum(params.values()),
            params: params.values().to_vec(),
            cache,
            rows,
            total,
            changed: Vec::new(),
            columns,
        })
    }

    /// Fingerprint of the parameters the cache was built for.
    pub fn checksum(&self) -> u64 {
        self.checksum
    }

    /// [`SearchObjective::trial_loss`] for a caller that tracks its own copy
    /// of the parameters. Fails with [`Error::InvalidState`] when that copy no
    /// longer matches the cache.
    pub fn trial_loss_checked(&mut self, params: &[f64], index: usize, value: f64) -> Result<f64> {
        if params.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "parameter vector has {} entries, cache holds {}",
                params.len(),
                self.params.len()
            )));
        }
        if index >= params.len() {
            return Err(Error::invalid(format!("index {index} out of range for {} parameters", params.len())));
        }
        if param_checksum(params) != self.checksum {
            return Err(Error::InvalidState("activation cache is stale for these parameters".into()));
        }
        Ok(self.trial_loss(index, value))
    }

    /// Cached logits, N x k.
    pub fn logits(&self) -> &[f64] {
        self.cache.last().expect("network has layers")
    }

    fn target(&self, index: usize) -> Target {
        let slot = self.layout.locate(index).expect("index within parameter vector");
        match (self.net.layers()[slot.layer], slot.kind) {
            (Layer::Dense { inputs, .. }, BlockKind::Weight) => Target::DenseWeight {
                layer: slot.layer,
                o: slot.index / inputs,
                i: slot.index % inputs,
            },
            (Layer::Dense { .. }, BlockKind::Bias) => Target::DenseBias {
                layer: slot.layer,
                o: slot.index,
            },
            (Layer::Conv { in_channels, kernel, .. }, BlockKind::Weight) => {
                let kk = kernel * kernel;
                Target::ConvWeight {
                    layer: slot.layer,
                    oc: slot.index / (in_channels * kk),
                    ic: slot.index / kk % in_channels,
                    ky: slot.index % kk / kernel,
                    kx: slot.index % kernel,
                }
            }
            (Layer::Conv { .. }, BlockKind::Bias) => Target::ConvBias {
                layer: slot.layer,
                oc: slot.index,
            },
            (Layer::MaxPool { .. }, _) => unreachable!("pooling layers own no parameters"),
        }
    }

    /// Sum over samples of the row-loss change, optionally writing the new
    /// activations into the cache.
    fn sweep(&mut self, index: usize, value: f64, write: bool) -> f64 {
        let dw = value - self.params[index];
        if dw == 0.0 {
            return 0.0;
        }
        let target = self.target(index);
        let mut sum = 0.0;
        if let (Target::DenseWeight { layer: 0, o, i }, Some(columns)) = (target, self.columns.take()) {
            for &(s, x) in &columns[i] {
                sum += self.sample_delta(s as usize, target, dw * x, Some(o), write);
            }
            self.columns = Some(columns);
        } else {
            for s in 0..self.data.len() {
                sum += self.sample_delta(s, target, dw, None, write);
            }
        }
        sum
    }

    /// Row-loss change of sample `s`. `first_layer_hit` carries a
    /// precomputed seed for a first-layer dense weight: `dw` is then
    /// already multiplied by the input.
    fn sample_delta(&mut self, s: usize, target: Target, dw: f64, first_layer_hit: Option<usize>, write: bool) -> f64 {
        let l0 = target.layer();
        let depth = self.net.layers().len();
        for ov in &mut self.overlays[l0..] {
            ov.reset();
        }
        if let Some(o) = first_layer_hit {
            let len = self.net.layers()[0].output_len();
            self.overlays[0].add(o, self.cache[0][s * len + o], dw);
        } else {
            self.seed(s, target, dw);
        }
        let mut reached = l0;
        let mut alive = !self.overlays[l0].touched.is_empty();
        while alive && reached + 1 < depth {
            alive = self.propagate(s, reached);
            if alive {
                reached += 1;
            }
        }
        let mut delta = 0.0;
        let mut new_row = self.rows[s];
        if alive {
            let k = self.net.classes();
            let last = &self.overlays[depth - 1];
            self.logits.copy_from_slice(&self.cache[depth - 1][s * k..(s + 1) * k]);
            for &j in &last.touched {
                self.logits[j] = last.value[j];
            }
            new_row = metrics::row_loss(self.kind, &self.logits, self.data.labels().class_of(s));
            delta = new_row - self.rows[s];
        }
        if write {
            for l in l0..=reached {
                let len = self.net.layers()[l].output_len();
                let ov = &self.overlays[l];
                let cache = &mut self.cache[l][s * len..(s + 1) * len];
                for &j in &ov.touched {
                    cache[j] = ov.value[j];
                }
            }
            self.rows[s] = new_row;
        }
        delta
    }

    /// Input `j` of layer `l` for sample `s`, as currently cached.
    #[inline]
    fn base_input(&self, l: usize, s: usize, j: usize) -> f64 {
        if l == 0 {
            self.data.sample(s)[j]
        } else {
            let prev = &self.net.layers()[l - 1];
            prev.activation().apply(self.cache[l - 1][s * prev.output_len() + j])
        }
    }

    fn seed(&mut self, s: usize, target: Target, dw: f64) {
        let l = target.layer();
        let layer = self.net.layers()[l];
        let len = layer.output_len();
        match (target, layer) {
            (Target::DenseWeight { o, i, .. }, _) => {
                let x = self.base_input(l, s, i);
                if x != 0.0 {
                    let base = self.cache[l][s * len + o];
                    self.overlays[l].add(o, base, dw * x);
                }
            }
            (Target::DenseBias { o, .. }, _) => {
                let base = self.cache[l][s * len + o];
                self.overlays[l].add(o, base, dw);
            }
            (
                Target::ConvWeight { oc, ic, ky, kx, .. },
                Layer::Conv {
                    padding,
                    in_height,
                    in_width,
                    ..
                },
            ) => {
                let (oh, ow) = layer.output_hw();
                let (y0, y1) = crate::model::valid_range(ky, padding, in_height, oh);
                let (x0, x1) = crate::model::valid_range(kx, padding, in_width, ow);
                let plane = ic * in_height * in_width;
                for y in y0..y1 {
                    let iy = y + ky - padding;
                    for x in x0..x1 {
                        let v = self.base_input(l, s, plane + iy * in_width + x + kx - padding);
                        if v != 0.0 {
                            let j = (oc * oh + y) * ow + x;
                            let base = self.cache[l][s * len + j];
                            self.overlays[l].add(j, base, dw * v);
                        }
                    }
                }
            }
            (Target::ConvBias { oc, .. }, _) => {
                let (oh, ow) = layer.output_hw();
                for j in oc * oh * ow..(oc + 1) * oh * ow {
                    let base = self.cache[l][s * len + j];
                    self.overlays[l].add(j, base, dw);
                }
            }
            (Target::ConvWeight { .. }, _) => unreachable!("convolution target on a non-convolution layer"),
        }
    }

    /// Pushes the changes of layer `l` into layer `l + 1`. Returns whether
    /// anything changed there.
    fn propagate(&mut self, s: usize, l: usize) -> bool {
        let layer = self.net.layers()[l];
        let act = layer.activation();
        let len = layer.output_len();
        self.changed.clear();
        {
            let ov = &self.overlays[l];
            let cache = &self.cache[l][s * len..(s + 1) * len];
            for &j in &ov.touched {
                let new = act.apply(ov.value[j]);
                let old = act.apply(cache[j]);
                if new != old {
                    self.changed.push((j, new - old));
                }
            }
        }
        if self.changed.is_empty() {
            return false;
        }
        let next = self.net.layers()[l + 1];
        let next_len = next.output_len();
        let (w, _) = self.net.layer_params(&self.params, l + 1);
        let (lower, upper) = self.overlays.split_at_mut(l + 1);
        let (cur, out) = (&lower[l], &mut upper[0]);
        let next_cache = &self.cache[l + 1][s * next_len..(s + 1) * next_len];
        match next {
            Layer::Dense { inputs, outputs, .. } => {
                for &(j, d) in &self.changed {
                    for o in 0..outputs {
                        let wv = w[o * inputs + j];
                        if wv != 0.0 {
                            out.add(o, next_cache[o], wv * d);
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
                let (oh, ow) = next.output_hw();
                for &(j, d) in &self.changed {
                    let ic = j / (in_height * in_width);
                    let iy = j / in_width % in_height;
                    let ix = j % in_width;
                    for oc in 0..out_channels {
                        for ky in 0..kernel {
                            let Some(y) = (iy + padding).checked_sub(ky).filter(|&y| y < oh) else {
                                continue;
                            };
                            for kx in 0..kernel {
                                let Some(x) = (ix + padding).checked_sub(kx).filter(|&x| x < ow) else {
                                    continue;
                                };
                                let wv = w[((oc * in_channels + ic) * kernel + ky) * kernel + kx];
                                if wv != 0.0 {
                                    let o = (oc * oh + y) * ow + x;
                                    out.add(o, next_cache[o], wv * d);
                                }
                            }
                        }
                    }
                }
            }
            Layer::MaxPool {
                in_height, in_width, ..
            } => {
                let (oh, ow) = next.output_hw();
                let cache = &self.cache[l][s * len..(s + 1) * len];
                for &(j, _) in &self.changed {
                    let c = j / (in_height * in_width);
                    let y = j / in_width % in_height / 2;
                    let x = j % in_width / 2;
                    if y >= oh || x >= ow {
                        continue;
                    }
                    let o = (c * oh + y) * ow + x;
                    if out.is_set(o) {
                        continue;
                    }
                    let base = c * in_height * in_width + 2 * y * in_width + 2 * x;
                    let value = |p: usize| act.apply(cur.get(p, cache[p]));
                    let mut best = value(base);
                    for p in [base + 1, base + in_width, base + in_width + 1] {
                        let v = value(p);
                        if v > best {
                            best = v;
                        }
                    }
                    out.set(o, best);
                }
            }
        }
        !out.touched.is_empty()
    }
}

impl SearchObjective for IncrementalObjective<'_> {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn current_loss(&self) -> f64 {
        self.total / self.data.len() as f64
    }

    fn trial_loss(&mut self, index: usize, value: f64) -> f64 {
        let delta = self.sweep(index, value, false);
        (self.total + delta) / self.data.len() as f64
    }

    fn commit(&mut self, index: usize, value: f64) {
        let old = self.params[index];
        if old == value {
            return;
        }
        let delta = self.sweep(index, value, true);
        self.total += delta;
        self.params[index] = value;
        self.checksum = self
            .checksum
            .wrapping_sub(entry_hash(index, old))
            .wrapping_add(entry_hash(index, value));
    }
}
