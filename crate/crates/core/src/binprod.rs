//! Binary multiplication: `f(x) = Π (x_{2i−1} − x_{2i})` over one-hot pairs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{Architecture, ArchitectureSpec, GroupRef};
use crate::bits::ElemSet;
use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::grad::{gradients, mean_bce};
use crate::group::{Group, SubgroupPair};
use crate::model::{Admission, LatentWeights, Model};
use crate::named;
use crate::optim::{Adam, AdamConfig};

#[derive(Clone, Debug)]
pub struct BinProdTask {
    pub m: usize,
    pub inputs: Vec<Vec<f64>>,
    /// `+1` or `−1`.
    pub products: Vec<f64>,
    /// Class labels `(f + 1) / 2`.
    pub labels: Vec<f64>,
}

impl BinProdTask {
    pub fn new(m: usize) -> Result<BinProdTask> {
        if m < 8 || !m.is_power_of_two() {
            return Err(Error::BadDimension(format!("m = {m} must be a power of two, at least 8")));
        }
        let pairs = m / 2;
        let mut inputs = Vec::new();
        let mut products = Vec::new();
        for bits in 0u64..(1u64 << pairs) {
            let mut x = vec![0.0; m];
            let mut prod = 1.0;
            for i in 0..pairs {
                if bits >> i & 1 == 0 {
                    x[2 * i] = 1.0;
                } else {
                    x[2 * i + 1] = 1.0;
                    prod = -prod;
                }
            }
            inputs.push(x);
            products.push(prod);
        }
        let labels = products.iter().map(|f| (f + 1.0) / 2.0).collect();
        Ok(BinProdTask { m, inputs, products, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchKind {
    Type2,
    Type1,
    Unraveled,
    UnraveledType2Init,
}

impl ArchKind {
    pub const ALL: [ArchKind; 4] = [ArchKind::Type1, ArchKind::Type2, ArchKind::Unraveled, ArchKind::UnraveledType2Init];

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Type2 => "type2",
            ArchKind::Type1 => "type1",
            ArchKind::Unraveled => "unraveled",
            ArchKind::UnraveledType2Init => "unraveled-type2init",
        }
    }
}

impl std::str::FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArchitecture(format!("unknown binprod architecture {s}")))
    }
}

fn stab(group: &Group, v: &[f64], up_to_sign: bool) -> ElemSet {
    let mut s = ElemSet::empty();
    for (i, g) in group.elements().iter().enumerate() {
        let gv = g.apply(v);
        if gv == v || (up_to_sign && gv.iter().zip(v).all(|(a, b)| *a == -b)) {
            s.insert(i);
        }
    }
    s
}

/// Layer pairs of the type-2 architecture, each with its multiplicity; the final layer is trivial.
pub fn type2_pairs(group: &Group, m: usize) -> Result<Vec<Vec<(SubgroupPair, usize)>>> {
    let d = m.trailing_zeros() as usize;
    let mut level: Vec<SubgroupPair> = (0..m / 4)
        .map(|j| {
            let mut v = vec![0.0; m];
            v[4 * j..4 * j + 4].copy_from_slice(&[1.0, -1.0, 1.0, -1.0]);
            SubgroupPair { h: stab(group, &v, true), k: stab(group, &v, false) }
        })
        .collect();
    let full = group.full();
    let mut layers = Vec::new();
    for _ in 1..=d - 2 {
        layers.push(level.iter().map(|p| (*p, 1)).collect());
        level = level
            .chunks(2)
            .map(|c| {
                let (a, b) = (c[0].h, c[1].h);
                let both = a.and(&b);
                let neither = full.minus(&a).and(&full.minus(&b));
                SubgroupPair { h: both.or(&neither), k: both }
            })
            .collect();
    }
    debug_assert_eq!(level.len(), 1);
    layers.push(vec![(SubgroupPair::new(level[0].h, level[0].k)?, 2)]);
    layers.push(vec![(SubgroupPair { h: full, k: full }, 1)]);
    Ok(layers)
}

/// Type-2, tunneled (`ρ_HK → ρ_HH`) and unraveled (`ρ_HK → ρ_KK`) architectures.
pub fn binprod_architectures(m: usize) -> Result<(Architecture, Architecture, Architecture)> {
    let group = named::shared(&format!("BinProd{m}"))?;
    let t2 = type2_pairs(&group, m)?;
    let map = |f: &dyn Fn(&SubgroupPair) -> SubgroupPair| -> Vec<Vec<(SubgroupPair, usize)>> {
        // distinct type-2 irreps can share a tunneled image; copies become channels
        t2.iter()
            .map(|l| {
                let mut out: Vec<(SubgroupPair, usize)> = Vec::new();
                for (p, k) in l {
                    let q = f(p);
                    match out.iter_mut().find(|(r, _)| *r == q) {
                        Some((_, n)) => *n += k,
                        None => out.push((q, *k)),
                    }
                }
                out
            })
            .collect()
    };
    let t1 = map(&|p| SubgroupPair { h: p.h, k: p.h });
    let un = map(&|p| SubgroupPair { h: p.k, k: p.k });
    let build = |layers: &[Vec<(SubgroupPair, usize)>]| {
        let spec = ArchitectureSpec::from_pairs(GroupRef::Name(format!("BinProd{m}")), layers, 1, false);
        Architecture::resolve_in(&spec, group.clone())
    };
    Ok((build(&t2)?, build(&t1)?, build(&un)?))
}

fn product_block(rows: usize) -> Mat {
    let pattern = [[1.0, -1.0, 1.0, -1.0], [1.0, -1.0, -1.0, 1.0]];
    let mut t = Mat::zeros(2 * rows, 4 * rows);
    for j in 0..rows {
        for (r, row) in pattern.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                t.set(2 * j + r, 4 * j + c, v);
            }
        }
    }
    t
}

/// Closed-form latent weights for the type-2 architecture: `V^(i)_i = I ⊗ [1 −1 1 −1; 1 −1 −1 1]`
/// for `i < d`, `V^(d)_d = [1 −1]`, every other block zero.
///
/// Each basis coefficient is read off at the first entry of its pattern. Transversal choices may
/// flip the sign of whole rows relative to the closed form; that is harmless since the carried
/// activations of these layers are `|g|/2`. Any other mismatch is an error.
pub fn binprod_closed_form(model: &Model) -> Result<LatentWeights> {
    let mut w = model.zero_weights();
    for (li, layer) in model.layers.iter().enumerate() {
        let target = if li + 1 == model.depth() {
            Mat { rows: 1, cols: 2, data: vec![1.0, -1.0] }
        } else {
            product_block(layer.width / 2)
        };
        let newest = if li == 0 { model.input_width() } else { model.layers[li - 1].width };
        if (target.rows, target.cols) != (layer.width, newest) {
            return Err(Error::ShapeMismatch(format!(
                "closed form of layer {} is {}x{}, the model has {}x{}",
                li + 1,
                target.rows,
                target.cols,
                layer.width,
                newest
            )));
        }
        let mut full = Mat::zeros(layer.width, layer.in_width);
        full.put(0, 0, &target);
        for block in layer.blocks.iter().filter(|b| b.seg == li) {
            let slot = &layer.slots[block.slot];
            let src = &model.segments[block.seg].slots[block.src];
            let (ka, kb) = (slot.channels, src.channels);
            let mut seen = vec![false; block.basis.len()];
            for (r, c, b, s) in block.basis.entries() {
                if std::mem::replace(&mut seen[b], true) {
                    continue;
                }
                for co in 0..ka {
                    for ci in 0..kb {
                        let row = slot.offset + r * ka + co;
                        let col = layer.seg_offsets[block.seg] + src.offset + c * kb + ci;
                        w.params[block.offset + (b * ka + co) * kb + ci] = f64::from(s) * full.get(row, col);
                    }
                }
            }
        }
        let v = model.materialize(li, &w.params);
        for r in 0..layer.width {
            let plus = (0..layer.in_width).all(|c| v.get(r, c) == full.get(r, c));
            let minus = (0..layer.in_width).all(|c| v.get(r, c) == -full.get(r, c));
            let allowed_flip = li + 1 < model.depth();
            if !(plus || (minus && allowed_flip)) {
                return Err(Error::NotInSpan(1.0));
            }
        }
    }
    Ok(w)
}

/// Maps the raw unraveled index `t` of a type-2 slot to the point of its `ρ_KK` slot.
fn unravel_map(model_t2: &Model, un: &Model, li: usize, a: usize) -> Vec<usize> {
    let irrep = &model_t2.layers[li].slots[a].irrep;
    let kk = &un.layers[li].slots[a].irrep;
    let n = irrep.degree();
    let mut map = vec![usize::MAX; 2 * n];
    for g in 0..model_t2.group().order() {
        let t = irrep.unravel_raw(g).image(0);
        let p = kk.evaluate(g).image(0);
        debug_assert!(map[t] == usize::MAX || map[t] == p);
        map[t] = p;
    }
    map
}

/// Weights of the unraveled architecture computing the same function as the type-2 weights:
/// rows of the raw unraveling carry `±V`, columns reading an unraveled layer carry `½V` per copy.
pub fn unravel_embedding(t2: &Model, w: &LatentWeights, un: &Model) -> Result<LatentWeights> {
    if t2.depth() != un.depth() || t2.arch.batchnorm || un.arch.batchnorm {
        return Err(Error::InvalidArchitecture("models do not correspond".into()));
    }
    let depth = t2.depth();
    let mut maps = Vec::new();
    for li in 0..depth - 1 {
        let mut per_slot = Vec::new();
        for (a, slot) in t2.layers[li].slots.iter().enumerate() {
            let target = &un.layers[li].slots[a];
            if !slot.irrep.is_type2()
                || target.irrep.degree() != 2 * slot.degree()
                || target.channels != slot.channels
            {
                return Err(Error::InvalidArchitecture(format!("layer {} is not an unraveling", li + 1)));
            }
            per_slot.push(unravel_map(t2, un, li, a));
        }
        maps.push(per_slot);
    }
    // (dst index, src index, factor) for rows of layer li and columns of segment j
    let rows_of = |li: usize| -> Vec<(usize, usize, f64)> {
        if li + 1 == depth {
            return (0..t2.layers[li].width).map(|r| (r, r, 1.0)).collect();
        }
        let mut out = Vec::new();
        for (a, slot) in t2.layers[li].slots.iter().enumerate() {
            let (n, k) = (slot.degree(), slot.channels);
            let dst = &un.layers[li].slots[a];
            for (t, &m) in maps[li][a].iter().enumerate().take(2 * n) {
                let sign = if t < n { 1.0 } else { -1.0 };
                for c in 0..k {
                    out.push((dst.offset + m * k + c, slot.offset + (t % n) * k + c, sign));
                }
            }
        }
        out
    };
    let cols_of = |seg: usize| -> Vec<(usize, usize, f64)> {
        if seg == 0 {
            return (0..t2.input_width()).map(|c| (c, c, 1.0)).collect();
        }
        rows_of(seg - 1).into_iter().map(|(d, s, _)| (d, s, 0.5)).collect()
    };
    let mut vs = Vec::new();
    let mut biases = Vec::new();
    for li in 0..depth {
        let v = t2.materialize(li, &w.params);
        let (lt, lu) = (&t2.layers[li], &un.layers[li]);
        let mut out = Mat::zeros(lu.width, lu.in_width);
        let rows = rows_of(li);
        for seg in 0..=li {
            for (dc, sc, fc) in cols_of(seg) {
                let (dc, sc) = (lu.seg_offsets[seg] + dc, lt.seg_offsets[seg] + sc);
                for &(dr, sr, fr) in &rows {
                    out.add(dr, dc, fr * fc * v.get(sr, sc));
                }
            }
        }
        vs.push(out);
        let b = t2.bias_vector(li, &w.params);
        let mut bu = vec![0.0; lu.width];
        for &(dr, sr, fr) in &rows {
            bu[dr] += fr * b[sr];
        }
        biases.push(bu);
    }
    un.weights_from_dense(&vs, Some(&biases))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub split_fraction: f64,
    pub stratified: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { adam: AdamConfig::default(), batch_size: 64, epochs: 5, split_fraction: 0.2, stratified: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    /// Evaluation before training and after every epoch.
    pub history: Vec<Evaluation>,
    pub steps: u64,
    pub final_lr: f64,
}

impl SeedRun {
    pub fn initial(&self) -> &Evaluation {
        &self.history[0]
    }

    pub fn last(&self) -> &Evaluation {
        self.history.last().unwrap()
    }

    /// Largest `|train − val|` loss gap over all evaluations.
    pub fn max_gap(&self) -> f64 {
        self.history.iter().fold(0.0, |m, e| m.max((e.train_loss - e.val_loss).abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub architecture: String,
    pub initial_train: (f64, f64),
    pub initial_val: (f64, f64),
    pub final_train: (f64, f64),
    pub final_val: (f64, f64),
    pub accuracy: (f64, f64),
    pub runs: Vec<SeedRun>,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "architecture,initial_train,initial_val,final_train,final_val,accuracy";

    pub fn csv_line(&self) -> String {
        let f = |(m, s): (f64, f64)| format!("{m:.2}±{s:.2}");
        format!(
            "{},{},{},{},{},{}",
            self.architecture,
            f(self.initial_train),
            f(self.initial_val),
            f(self.final_train),
            f(self.final_val),
            f(self.accuracy)
        )
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Per-class shuffle with the seed; the first `round(fraction · class size)` of each class train.
pub fn stratified_split(labels: &[f64], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in [0.0, 1.0] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let cut = (fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..cut]);
        val.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn random_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let cut = (fraction * n as f64).round() as usize;
    let (mut t, mut v) = (idx[..cut].to_vec(), idx[cut..].to_vec());
    t.sort_unstable();
    v.sort_unstable();
    (t, v)
}

/// The three compiled models of one input size, shared across seeds.
pub struct BinProdSuite {
    pub task: BinProdTask,
    pub type2: Model,
    pub type1: Model,
    pub unraveled: Model,
}

impl BinProdSuite {
    pub fn new(m: usize) -> Result<BinProdSuite> {
        let task = BinProdTask::new(m)?;
        let (a2, a1, au) = binprod_architectures(m)?;
        Ok(BinProdSuite {
            task,
            type2: Model::compile(&a2, Admission::Strict)?,
            type1: Model::compile(&a1, Admission::Warn)?,
            unraveled: Model::compile(&au, Admission::Warn)?,
        })
    }

    pub fn model(&self, kind: ArchKind) -> &Model {
        match kind {
            ArchKind::Type2 => &self.type2,
            ArchKind::Type1 => &self.type1,
            ArchKind::Unraveled | ArchKind::UnraveledType2Init => &self.unraveled,
        }
    }

    pub fn init(&self, kind: ArchKind, seed: u64) -> Result<LatentWeights> {
        match kind {
            ArchKind::UnraveledType2Init => {
                let w2 = self.type2.init_weights(seed, "normal")?;
                unravel_embedding(&self.type2, &w2, &self.unraveled)
            }
            k => self.model(k).init_weights(seed, "normal"),
        }
    }

    fn evaluate(&self, model: &Model, w: &LatentWeights, train: &[usize], val: &[usize]) -> Result<Evaluation> {
        let logits = model.predict(w, &self.task.inputs)?;
        let part = |idx: &[usize]| {
            let f: Vec<f64> = idx.iter().map(|&i| logits[i]).collect();
            let y: Vec<f64> = idx.iter().map(|&i| self.task.labels[i]).collect();
            let acc = f.iter().zip(&y).filter(|(f, y)| (**f > 0.0) == (**y > 0.5)).count() as f64 / f.len() as f64;
            (mean_bce(&f, &y), acc)
        };
        let (train_loss, train_acc) = part(train);
        let (val_loss, val_acc) = part(val);
        Ok(Evaluation { train_loss, val_loss, train_acc, val_acc })
    }

    pub fn run_seed(&self, kind: ArchKind, config: &TrainConfig, seed: u64) -> Result<SeedRun> {
        let model = self.model(kind);
        let mut w = self.init(kind, seed)?;
        let (train, val) = if config.stratified {
            stratified_split(&self.task.labels, config.split_fraction, seed)
        } else {
            random_split(self.task.len(), config.split_fraction, seed)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut adam = Adam::new(model.n_params, config.adam);
        let mut history = vec![self.evaluate(model, &w, &train, &val)?];
        let mut order = train.clone();
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(config.batch_size.max(1)) {
                let xs: Vec<Vec<f64>> = batch.iter().map(|&i| self.task.inputs[i].clone()).collect();
                let ys: Vec<f64> = batch.iter().map(|&i| self.task.labels[i]).collect();
                let g = gradients(model, &w, &xs, &ys)?;
                adam.step(&mut w.params, &g.grad);
                model.update_running(&mut w, &g.trace);
            }
            history.push(self.evaluate(model, &w, &train, &val)?);
        }
        Ok(SeedRun { seed, history, steps: adam.step, final_lr: adam.current_lr() })
    }

    pub fn run(&self, kind: ArchKind, config: &TrainConfig, seeds: &[u64]) -> Result<MetricsRow> {
        let runs: Vec<SeedRun> =
            seeds.par_iter().map(|&s| self.run_seed(kind, config, s)).collect::<Result<Vec<_>>>()?;
        let col = |f: &dyn Fn(&SeedRun) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>());
        Ok(MetricsRow {
            architecture: kind.name().to_string(),
            initial_train: col(&|r| r.initial().train_loss),
            initial_val: col(&|r| r.initial().val_loss),
            final_train: col(&|r| r.last().train_loss),
            final_val: col(&|r| r.last().val_loss),
            accuracy: col(&|r| 0.5 * (r.last().train_acc + r.last().val_acc)),
            runs,
        })
    }
}

/// Runs the suite for the given architectures and returns a CSV table.
pub fn run_binprod_experiment(
    m: usize,
    config: &TrainConfig,
    kinds: &[ArchKind],
    seeds: &[u64],
) -> Result<(Vec<MetricsRow>, String)> {
    let suite = BinProdSuite::new(m)?;
    let rows: Vec<MetricsRow> = kinds.iter().map(|&k| suite.run(k, config, seeds)).collect::<Result<_>>()?;
    let mut csv = String::from(MetricsRow::CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_line());
        csv.push('\n');
    }
    Ok((rows, csv))
}
