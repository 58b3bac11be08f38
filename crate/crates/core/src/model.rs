//! Compiled G-DNNs in latent form.
//!
//! Layout conventions:
//! - a layer of irreps `ρ_a` with `k_a` channels is a vector of `Σ n_a k_a` entries,
//!   summand after summand, each point-major (`offset + point * k_a + channel`);
//! - segment 0 is the input, segment `j ≥ 1` is the carried output of hidden layer `j`;
//! - the carried vector `h` lists segments newest first, `h^(i+1) = [top^(i); h^(i)]`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::admissibility::{AdmissibilityReport, Calculus};
use crate::arch::Architecture;
use crate::basis::{build_basis, BasisSet};
use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::group::Group;
use crate::perm::SignedPerm;
use crate::reps::Irrep;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Admission {
    Strict,
    Warn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A source of columns: the input, or one summand of an earlier hidden layer.
#[derive(Clone, Debug)]
pub struct InSlot {
    pub degree: usize,
    pub channels: usize,
    pub offset: usize,
    /// Unsigned images of every group element.
    pub pi: Vec<SignedPerm>,
}

#[derive(Clone, Debug)]
pub struct Segment {
    pub width: usize,
    pub slots: Vec<InSlot>,
}

#[derive(Clone, Debug)]
pub struct OutSlot {
    pub irrep: Irrep,
    pub channels: usize,
    pub offset: usize,
    pub bias: Option<usize>,
    pub gamma: Option<usize>,
    pub beta: Option<usize>,
    pub stat: Option<usize>,
}

impl OutSlot {
    pub fn degree(&self) -> usize {
        self.irrep.degree()
    }
}

/// Latent block `V^(i)_{a ← (j, b)}` with coefficients laid out `[basis][out channel][in channel]`.
#[derive(Clone, Debug)]
pub struct Block {
    pub slot: usize,
    pub seg: usize,
    pub src: usize,
    pub basis: BasisSet,
    pub offset: usize,
}

#[derive(Clone, Debug)]
pub struct Layer {
    pub width: usize,
    pub in_width: usize,
    pub slots: Vec<OutSlot>,
    pub blocks: Vec<Block>,
    /// Column offset of segment `j` inside `h`.
    pub seg_offsets: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TensorKind {
    Coef,
    Bias,
    Gamma,
    Beta,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub kind: TensorKind,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub arch: Architecture,
    pub segments: Vec<Segment>,
    pub layers: Vec<Layer>,
    pub tensors: Vec<TensorInfo>,
    pub n_params: usize,
    pub n_stats: usize,
    pub report: AdmissibilityReport,
}

/// Trainable parameters plus batchnorm running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentWeights {
    pub params: Vec<f64>,
    pub bn_mean: Vec<f64>,
    pub bn_var: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct LayerTrace {
    pub g: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub top: Vec<Vec<f64>>,
    /// Batchnorm mean and `sqrt(var + eps)` per statistic index, as used.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Trace {
    /// `h^(i)` per layer and sample.
    pub h: Vec<Vec<Vec<f64>>>,
    pub hidden: Vec<LayerTrace>,
    pub out: Vec<Vec<f64>>,
}

impl Trace {
    pub fn logits(&self) -> Vec<f64> {
        self.out.iter().map(|o| o[0]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
    pub bn_mean: Vec<f64>,
    pub bn_var: Vec<f64>,
}

fn unsigned_images(images: &[SignedPerm]) -> Vec<SignedPerm> {
    images.iter().map(|p| p.unsigned()).collect()
}

impl Model {
    pub fn compile(arch: &Architecture, admission: Admission) -> Result<Model> {
        let calc = Calculus::new(arch.group.clone());
        Self::compile_with(arch, admission, &calc)
    }

    pub fn compile_with(arch: &Architecture, admission: Admission, calc: &Calculus) -> Result<Model> {
        let report = arch.check(calc)?;
        if admission == Admission::Strict && !report.admissible {
            return Err(Error::NotAdmissible {
                layer: report.failing_layer.unwrap_or(1),
                irrep: report.failing_irrep.unwrap_or(0),
            });
        }
        let group = &arch.group;
        let gens: Vec<usize> = group.generators().to_vec();
        let m = group.degree();
        if group.elements().iter().any(|g| !g.is_unsigned()) {
            return Err(Error::NotOrdinaryPerm);
        }
        let k0 = arch.input_channels;
        let mut segments = vec![Segment {
            width: m * k0,
            slots: vec![InSlot { degree: m, channels: k0, offset: 0, pi: group.elements().to_vec() }],
        }];
        let mut layers = Vec::new();
        let mut tensors = Vec::new();
        let mut n_params = 0usize;
        let mut n_stats = 0usize;
        let depth = arch.depth();
        let mut push = |tensors: &mut Vec<TensorInfo>, name: String, kind, shape: Vec<usize>| {
            let info = TensorInfo { name, kind, shape, offset: n_params };
            n_params += info.len();
            let off = info.offset;
            tensors.push(info);
            off
        };
        for (li, summands) in arch.layers.iter().enumerate() {
            let hidden = li + 1 < depth;
            let mut slots = Vec::new();
            let mut width = 0;
            for (a, (irrep, k)) in summands.iter().enumerate() {
                let bias = (!irrep.is_type2())
                    .then(|| push(&mut tensors, format!("layer{}.bias.{a}", li + 1), TensorKind::Bias, vec![*k]));
                let (gamma, beta, stat) = if hidden && arch.batchnorm {
                    let g = push(&mut tensors, format!("layer{}.bn_gamma.{a}", li + 1), TensorKind::Gamma, vec![*k]);
                    let b = push(&mut tensors, format!("layer{}.bn_beta.{a}", li + 1), TensorKind::Beta, vec![*k]);
                    let s = n_stats;
                    n_stats += k;
                    (Some(g), Some(b), Some(s))
                } else {
                    (None, None, None)
                };
                slots.push(OutSlot { irrep: irrep.clone(), channels: *k, offset: width, bias, gamma, beta, stat });
                width += irrep.degree() * k;
            }
            let mut seg_offsets = vec![0; li + 1];
            let mut acc = 0;
            for j in (0..=li).rev() {
                seg_offsets[j] = acc;
                acc += segments[j].width;
            }
            let in_width = acc;
            let mut blocks = Vec::new();
            for (a, slot) in slots.iter().enumerate() {
                let rho: Vec<SignedPerm> = gens.iter().map(|&g| slot.irrep.evaluate(g).clone()).collect();
                for j in (0..=li).rev() {
                    for (b, src) in segments[j].slots.iter().enumerate() {
                        let pi: Vec<SignedPerm> = gens.iter().map(|&g| src.pi[g].clone()).collect();
                        let basis = build_basis(&rho, &pi, slot.degree(), src.degree)?;
                        if basis.is_empty() {
                            continue;
                        }
                        let offset = push(
                            &mut tensors,
                            format!("layer{}.w.{a}.{j}.{b}", li + 1),
                            TensorKind::Coef,
                            vec![basis.len(), slot.channels, src.channels],
                        );
                        blocks.push(Block { slot: a, seg: j, src: b, basis, offset });
                    }
                }
            }
            if blocks.is_empty() {
                return Err(Error::BasisEmpty(li + 1));
            }
            if hidden {
                segments.push(Segment {
                    width,
                    slots: slots
                        .iter()
                        .map(|s| InSlot {
                            degree: s.degree(),
                            channels: s.channels,
                            offset: s.offset,
                            pi: unsigned_images(s.irrep.images()),
                        })
                        .collect(),
                });
            }
            layers.push(Layer { width, in_width, slots, blocks, seg_offsets });
        }
        Ok(Model { arch: arch.clone(), segments, layers, tensors, n_params, n_stats, report })
    }

    pub fn group(&self) -> &Arc<Group> {
        &self.arch.group
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> usize {
        self.segments[0].width
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().width
    }

    /// Number of latent coefficients and biases, excluding batchnorm affine parameters.
    pub fn n_free(&self) -> usize {
        self.tensors.iter().filter(|t| matches!(t.kind, TensorKind::Coef | TensorKind::Bias)).map(|t| t.len()).sum()
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }

    fn src<'a>(&'a self, block: &Block) -> &'a InSlot {
        &self.segments[block.seg].slots[block.src]
    }

    /// Column of `(segment, slot, point, channel)` inside `h` of layer `li`.
    fn col(&self, li: usize, block: &Block, point: usize, ch: usize) -> usize {
        let src = self.src(block);
        self.layers[li].seg_offsets[block.seg] + src.offset + point * src.channels + ch
    }

    /// Dense `V^(i)` of layer `li` (0-based).
    pub fn materialize(&self, li: usize, params: &[f64]) -> Mat {
        let layer = &self.layers[li];
        let mut v = Mat::zeros(layer.width, layer.in_width);
        for block in &layer.blocks {
            let slot = &layer.slots[block.slot];
            let (ka, kb) = (slot.channels, self.src(block).channels);
            for (r, c, b, s) in block.basis.entries() {
                let s = f64::from(s);
                for co in 0..ka {
                    let row = slot.offset + r * ka + co;
                    for ci in 0..kb {
                        let coef = params[block.offset + (b * ka + co) * kb + ci];
                        v.add(row, self.col(li, block, c, ci), s * coef);
                    }
                }
            }
        }
        v
    }

    pub fn materialize_all(&self, params: &[f64]) -> Vec<Mat> {
        (0..self.depth()).map(|li| self.materialize(li, params)).collect()
    }

    /// Coefficient gradient from the gradient of a dense `V^(i)`.
    pub(crate) fn reduce_dense(&self, li: usize, dv: &Mat, grad: &mut [f64]) {
        let layer = &self.layers[li];
        for block in &layer.blocks {
            let slot = &layer.slots[block.slot];
            let (ka, kb) = (slot.channels, self.src(block).channels);
            for (r, c, b, s) in block.basis.entries() {
                let s = f64::from(s);
                for co in 0..ka {
                    let row = slot.offset + r * ka + co;
                    for ci in 0..kb {
                        grad[block.offset + (b * ka + co) * kb + ci] += s * dv.get(row, self.col(li, block, c, ci));
                    }
                }
            }
        }
    }

    /// Dense bias vector of layer `li`, broadcast along the fixed vectors.
    pub fn bias_vector(&self, li: usize, params: &[f64]) -> Vec<f64> {
        let layer = &self.layers[li];
        let mut b = vec![0.0; layer.width];
        for slot in &layer.slots {
            if let Some(off) = slot.bias {
                for p in 0..slot.degree() {
                    for co in 0..slot.channels {
                        b[slot.offset + p * slot.channels + co] = params[off + co];
                    }
                }
            }
        }
        b
    }

    /// Signed layer representation (with channels) evaluated at `g`.
    pub fn layer_rep(&self, li: usize, g: usize) -> SignedPerm {
        let parts: Vec<SignedPerm> =
            self.layers[li].slots.iter().map(|s| s.irrep.evaluate(g).with_channels(s.channels)).collect();
        SignedPerm::direct_sum(&parts.iter().collect::<Vec<_>>())
    }

    /// Input representation (with channels) evaluated at `g`.
    pub fn input_rep(&self, g: usize) -> SignedPerm {
        self.group().element(g).with_channels(self.arch.input_channels)
    }

    fn check_weights(&self, w: &LatentWeights) -> Result<()> {
        if w.params.len() != self.n_params || w.bn_mean.len() != self.n_stats || w.bn_var.len() != self.n_stats {
            return Err(Error::ShapeMismatch(format!(
                "weights have {} parameters and {} statistics, model expects {} and {}",
                w.params.len(),
                w.bn_mean.len(),
                self.n_params,
                self.n_stats
            )));
        }
        Ok(())
    }

    pub fn forward(&self, w: &LatentWeights, xs: &[Vec<f64>], mode: Mode) -> Result<Trace> {
        self.check_weights(w)?;
        let n_in = self.input_width();
        if let Some(x) = xs.iter().find(|x| x.len() != n_in) {
            return Err(Error::ShapeMismatch(format!("input has length {}, expected {n_in}", x.len())));
        }
        let p = &w.params;
        let mut h: Vec<Vec<f64>> = xs.to_vec();
        let mut hs = Vec::with_capacity(self.depth());
        let mut hidden = Vec::new();
        let last = self.depth() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let v = self.materialize(li, p);
            let bias = self.bias_vector(li, p);
            let g: Vec<Vec<f64>> = h.iter().map(|x| v.matvec(x)).collect();
            let pre: Vec<Vec<f64>> =
                g.iter().map(|gi| gi.iter().zip(&bias).map(|(a, b)| a + b).collect()).collect();
            if li == last {
                hs.push(h);
                return Ok(Trace { h: hs, hidden, out: pre });
            }
            let r: Vec<Vec<f64>> = pre.iter().map(|v| v.iter().map(|a| a.max(0.0)).collect()).collect();
            let mut top: Vec<Vec<f64>> =
                r.iter().zip(&g).map(|(ri, gi)| ri.iter().zip(gi).map(|(a, b)| a - 0.5 * b).collect()).collect();
            let mut mean = vec![0.0; self.n_stats];
            let mut std = vec![0.0; self.n_stats];
            for slot in &layer.slots {
                let Some(stat) = slot.stat else { continue };
                let (ga, be) = (slot.gamma.unwrap(), slot.beta.unwrap());
                let k = slot.channels;
                for co in 0..k {
                    let idx = |pt: usize| slot.offset + pt * k + co;
                    let (mu, s) = match mode {
                        Mode::Train => {
                            let n = (xs.len() * slot.degree()) as f64;
                            let mut sum = 0.0;
                            for ri in &r {
                                for pt in 0..slot.degree() {
                                    sum += ri[idx(pt)];
                                }
                            }
                            let mu = sum / n;
                            let mut var = 0.0;
                            for ri in &r {
                                for pt in 0..slot.degree() {
                                    var += (ri[idx(pt)] - mu).powi(2);
                                }
                            }
                            (mu, (var / n + BN_EPS).sqrt())
                        }
                        Mode::Eval => (w.bn_mean[stat + co], (w.bn_var[stat + co] + BN_EPS).sqrt()),
                    };
                    mean[stat + co] = mu;
                    std[stat + co] = s;
                    let (gamma, beta) = (p[ga + co], p[be + co]);
                    for t in top.iter_mut() {
                        for pt in 0..slot.degree() {
                            let e = &mut t[idx(pt)];
                            *e = gamma * (*e - mu) / s + beta;
                        }
                    }
                }
            }
            let next: Vec<Vec<f64>> = top
                .iter()
                .zip(&h)
                .map(|(t, hi)| {
                    let mut v = Vec::with_capacity(t.len() + hi.len());
                    v.extend_from_slice(t);
                    v.extend_from_slice(hi);
                    v
                })
                .collect();
            hs.push(std::mem::replace(&mut h, next));
            hidden.push(LayerTrace { g, pre, r, top, mean, std });
        }
        unreachable!("the final layer returns")
    }

    /// Output channel 0 for each input, in eval mode.
    pub fn predict(&self, w: &LatentWeights, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.forward(w, xs, Mode::Eval)?.logits())
    }

    /// Folds the batch statistics of a training forward pass into the running averages.
    pub fn update_running(&self, w: &mut LatentWeights, trace: &Trace) {
        for (li, lt) in trace.hidden.iter().enumerate() {
            for slot in &self.layers[li].slots {
                let Some(stat) = slot.stat else { continue };
                for q in stat..stat + slot.channels {
                    let var = lt.std[q].powi(2) - BN_EPS;
                    w.bn_mean[q] = BN_MOMENTUM * w.bn_mean[q] + (1.0 - BN_MOMENTUM) * lt.mean[q];
                    w.bn_var[q] = BN_MOMENTUM * w.bn_var[q] + (1.0 - BN_MOMENTUM) * var;
                }
            }
        }
    }

    /// `max |f(gx) − f(x)|` over generators and inputs, in eval mode, over all output channels.
    pub fn invariance_deviation(&self, w: &LatentWeights, xs: &[Vec<f64>]) -> Result<f64> {
        let base = self.forward(w, xs, Mode::Eval)?.out;
        let k0 = self.arch.input_channels;
        let mut dev: f64 = 0.0;
        for &g in self.group().generators() {
            let el = self.group().element(g);
            let moved: Vec<Vec<f64>> = xs.iter().map(|x| el.apply_channels(x, k0)).collect();
            let out = self.forward(w, &moved, Mode::Eval)?.out;
            for (a, b) in base.iter().zip(&out) {
                for (u, v) in a.iter().zip(b) {
                    dev = dev.max((u - v).abs());
                }
            }
        }
        Ok(dev)
    }

    pub fn zero_weights(&self) -> LatentWeights {
        let mut params = vec![0.0; self.n_params];
        for t in &self.tensors {
            if t.kind == TensorKind::Gamma {
                params[t.offset..t.offset + t.len()].fill(1.0);
            }
        }
        LatentWeights { params, bn_mean: vec![0.0; self.n_stats], bn_var: vec![1.0; self.n_stats] }
    }

    /// Width of `h` feeding layer `li`: the fan-in counted in apparent-weight space.
    pub fn fan_in(&self, li: usize) -> usize {
        self.layers[li].in_width
    }

    /// `normal`: coefficients `N(0, 1/fan_in)`; `zeros`: all zero. Biases zero, `γ = 1`, `β = 0`.
    pub fn init_weights(&self, seed: u64, scheme: &str) -> Result<LatentWeights> {
        let mut w = self.zero_weights();
        match scheme {
            "zeros" => {}
            "normal" => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for (li, layer) in self.layers.iter().enumerate() {
                    let dist = Normal::new(0.0, (1.0 / self.fan_in(li) as f64).sqrt()).expect("positive variance");
                    for block in &layer.blocks {
                        let slot = &layer.slots[block.slot];
                        let n = block.basis.len() * slot.channels * self.src(block).channels;
                        for v in &mut w.params[block.offset..block.offset + n] {
                            *v = dist.sample(&mut rng);
                        }
                    }
                }
            }
            other => return Err(Error::UnknownScheme(other.to_string())),
        }
        Ok(w)
    }

    /// Latent weights reproducing the given dense `V^(i)` and bias vectors.
    /// Errors with `NotInSpan` when a matrix is not a combination of the basis patterns.
    pub fn weights_from_dense(&self, vs: &[Mat], biases: Option<&[Vec<f64>]>) -> Result<LatentWeights> {
        if vs.len() != self.depth() {
            return Err(Error::ShapeMismatch(format!("{} matrices for {} layers", vs.len(), self.depth())));
        }
        let mut w = self.zero_weights();
        for (li, (layer, v)) in self.layers.iter().zip(vs).enumerate() {
            if (v.rows, v.cols) != (layer.width, layer.in_width) {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} expects {}x{}, got {}x{}",
                    li + 1,
                    layer.width,
                    layer.in_width,
                    v.rows,
                    v.cols
                )));
            }
            for block in &layer.blocks {
                let slot = &layer.slots[block.slot];
                let (ka, kb) = (slot.channels, self.src(block).channels);
                let mut count = vec![0usize; block.basis.len()];
                for (r, c, b, s) in block.basis.entries() {
                    count[b] += 1;
                    for co in 0..ka {
                        for ci in 0..kb {
                            let val = f64::from(s) * v.get(slot.offset + r * ka + co, self.col(li, block, c, ci));
                            w.params[block.offset + (b * ka + co) * kb + ci] += val;
                        }
                    }
                }
                for (b, &n) in count.iter().enumerate() {
                    for e in 0..ka * kb {
                        w.params[block.offset + b * ka * kb + e] /= n as f64;
                    }
                }
            }
            let back = self.materialize(li, &w.params);
            let scale = v.max_abs().max(1.0);
            let res = back.max_abs_diff(v);
            if res > 1e-9 * scale {
                return Err(Error::NotInSpan(res));
            }
            if let Some(bs) = biases {
                let b = &bs[li];
                if b.len() != layer.width {
                    return Err(Error::ShapeMismatch(format!("bias of layer {} has the wrong length", li + 1)));
                }
                for slot in &layer.slots {
                    if let Some(off) = slot.bias {
                        for co in 0..slot.channels {
                            let s: f64 =
                                (0..slot.degree()).map(|pt| b[slot.offset + pt * slot.channels + co]).sum();
                            w.params[off + co] = s / slot.degree() as f64;
                        }
                    }
                }
                let res = self
                    .bias_vector(li, &w.params)
                    .iter()
                    .zip(b)
                    .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                if res > 1e-9 * b.iter().fold(1.0f64, |m, x| m.max(x.abs())) {
                    return Err(Error::NotInSpan(res));
                }
            }
        }
        Ok(w)
    }

    /// Source representation of CReLU layer `li`: the input for the first layer,
    /// otherwise the raw unraveling `[relu(y); relu(−y)]` of the previous layer.
    pub fn crelu_source(&self, li: usize, g: usize) -> SignedPerm {
        if li == 0 {
            self.input_rep(g)
        } else {
            self.layer_rep(li - 1, g).unravel()
        }
    }

    /// Latent weights of the CReLU network `U^(d) crelu(⋯ crelu(U^(1) x))`.
    pub fn import_crelu(&self, us: &[Mat]) -> Result<LatentWeights> {
        if self.arch.batchnorm {
            return Err(Error::InvalidArchitecture("CReLU import requires a model without batchnorm".into()));
        }
        if us.len() != self.depth() {
            return Err(Error::ShapeMismatch(format!("{} matrices for {} layers", us.len(), self.depth())));
        }
        for (li, u) in us.iter().enumerate() {
            let cols = if li == 0 { self.input_width() } else { 2 * self.layers[li - 1].width };
            if (u.rows, u.cols) != (self.layers[li].width, cols) {
                return Err(Error::ShapeMismatch(format!("U of layer {} has the wrong shape", li + 1)));
            }
            let scale = u.max_abs().max(1.0);
            for &g in self.group().generators() {
                let lhs = Mat::from_signed(&self.layer_rep(li, g)).mul(u);
                let rhs = u.mul(&Mat::from_signed(&self.crelu_source(li, g)));
                let dev = lhs.max_abs_diff(&rhs);
                if dev > 1e-9 * scale {
                    return Err(Error::NotEquivariant(dev));
                }
            }
        }
        let mut vs = vec![us[0].clone()];
        for li in 1..self.depth() {
            let u = &us[li];
            let n = self.layers[li - 1].width;
            let u1 = u.slice(0, u.rows, 0, n);
            let u2 = u.slice(0, u.rows, n, n);
            let sum = Mat { rows: u.rows, cols: n, data: u1.data.iter().zip(&u2.data).map(|(a, b)| a + b).collect() };
            let skip = u1.sub(&u2).scale(0.5).mul(&vs[li - 1]);
            let mut v = Mat::zeros(u.rows, n + skip.cols);
            v.put(0, 0, &sum);
            v.put(0, n, &skip);
            vs.push(v);
        }
        self.weights_from_dense(&vs, None)
    }

    /// Random equivariant CReLU weights, one Gaussian coefficient per basis pattern.
    pub fn random_crelu(&self, seed: u64) -> Result<Vec<Mat>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let gens = self.group().generators().to_vec();
        let mut us = Vec::new();
        for li in 0..self.depth() {
            let rho: Vec<SignedPerm> = gens.iter().map(|&g| self.layer_rep(li, g)).collect();
            let pi: Vec<SignedPerm> = gens.iter().map(|&g| self.crelu_source(li, g)).collect();
            let rows = self.layers[li].width;
            let cols = if li == 0 { self.input_width() } else { 2 * self.layers[li - 1].width };
            let basis = build_basis(&rho, &pi, rows, cols)?;
            let coef: Vec<f64> = (0..basis.len()).map(|_| normal.sample(&mut rng)).collect();
            let mut u = Mat::zeros(rows, cols);
            for (r, c, b, s) in basis.entries() {
                u.set(r, c, f64::from(s) * coef[b]);
            }
            us.push(u);
        }
        Ok(us)
    }

    /// Plain CReLU evaluation, for checking imports.
    pub fn crelu_forward(us: &[Mat], x: &[f64]) -> Vec<f64> {
        let mut y = us[0].matvec(x);
        for u in &us[1..] {
            let mut c: Vec<f64> = y.iter().map(|a| a.max(0.0)).collect();
            c.extend(y.iter().map(|a| (-a).max(0.0)));
            y = u.matvec(&c);
        }
        y
    }

    pub fn to_checkpoint(&self, w: &LatentWeights) -> Checkpoint {
        Checkpoint {
            tensors: self
                .tensors
                .iter()
                .map(|t| NamedTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: w.params[t.offset..t.offset + t.len()].to_vec(),
                })
                .collect(),
            bn_mean: w.bn_mean.clone(),
            bn_var: w.bn_var.clone(),
        }
    }

    pub fn from_checkpoint(&self, ck: &Checkpoint) -> Result<LatentWeights> {
        if ck.tensors.len() != self.tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint has {} tensors, model expects {}",
                ck.tensors.len(),
                self.tensors.len()
            )));
        }
        let mut w = self.zero_weights();
        for (info, t) in self.tensors.iter().zip(&ck.tensors) {
            if info.name != t.name || info.shape != t.shape || t.data.len() != info.len() {
                return Err(Error::ShapeMismatch(format!("tensor {} does not match {}", t.name, info.name)));
            }
            w.params[info.offset..info.offset + info.len()].copy_from_slice(&t.data);
        }
        if ck.bn_mean.len() != self.n_stats || ck.bn_var.len() != self.n_stats {
            return Err(Error::ShapeMismatch("batchnorm statistics have the wrong length".into()));
        }
        w.bn_mean = ck.bn_mean.clone();
        w.bn_var = ck.bn_var.clone();
        Ok(w)
    }

    pub fn save_json(&self, w: &LatentWeights) -> String {
        serde_json::to_string(&self.to_checkpoint(w)).expect("checkpoint serializes")
    }

    pub fn load_json(&self, text: &str) -> Result<LatentWeights> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Io(e.to_string()))?;
        self.from_checkpoint(&ck)
    }
}
