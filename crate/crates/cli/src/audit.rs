use std::path::PathBuf;

use clap::Args;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use gdnn_core::admissibility::Calculus;
use gdnn_core::audit::{apparent_weights, cpz_reparam_audit, psi_audit};
use gdnn_core::basis::{verify_basis, BasisJson, BasisSet};
use gdnn_core::grad::{finite_difference, gradients};
use gdnn_core::model::TensorKind;
use gdnn_core::{Admission, LatentWeights, Mat, Mode, Model, SignedPerm};

use crate::{load_spec, CmdResult, Failure};

#[derive(Args)]
pub struct AuditArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random inputs per check.
    #[arg(long, default_value_t = 20)]
    inputs: usize,
    /// Replace the computed weight-sharing bases with the ones in this file.
    #[arg(long)]
    bases: Option<PathBuf>,
    /// Write the computed bases to this file.
    #[arg(long)]
    dump_bases: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct BlockBasis {
    layer: usize,
    slot: usize,
    seg: usize,
    src: usize,
    basis: BasisJson,
}

struct Check {
    name: &'static str,
    status: &'static str,
    value: f64,
    detail: String,
}

impl Check {
    fn new(name: &'static str, pass: bool, value: f64, detail: impl Into<String>) -> Check {
        Check { name, status: if pass { "pass" } else { "fail" }, value, detail: detail.into() }
    }

    fn skip(name: &'static str, detail: &str) -> Check {
        Check { name, status: "skip", value: 0.0, detail: detail.into() }
    }
}

fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(1, format!("{}: {e}", path.display()))
}

fn swap_bases(model: &mut Model, path: &PathBuf) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let blocks: Vec<BlockBasis> = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
    for b in blocks {
        let basis = BasisSet::from_json(&b.basis)?;
        let block = model
            .layers
            .get_mut(b.layer)
            .and_then(|l| l.blocks.iter_mut().find(|x| (x.slot, x.seg, x.src) == (b.slot, b.seg, b.src)))
            .ok_or_else(|| Failure::new(1, format!("no block {}.{}.{}.{} in the model", b.layer, b.slot, b.seg, b.src)))?;
        if basis.shape() != block.basis.shape() || basis.len() != block.basis.len() {
            return Err(Failure::new(1, format!("basis for block {}.{}.{}.{} has the wrong size", b.layer, b.slot, b.seg, b.src)));
        }
        block.basis = basis;
    }
    Ok(())
}

fn random_weights(model: &Model, seed: u64) -> Result<LatentWeights, Failure> {
    let mut w = model.init_weights(seed, "normal")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa0d17);
    for t in &model.tensors {
        let range = t.offset..t.offset + t.len();
        match t.kind {
            TensorKind::Coef => {}
            TensorKind::Bias | TensorKind::Beta => w.params[range].iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5)),
            TensorKind::Gamma => w.params[range].iter_mut().for_each(|v| *v = rng.random_range(0.5..1.5)),
        }
    }
    Ok(w)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn crelu_reference(us: &[Mat], x: &[f64]) -> f64 {
    let mut y = us[0].matvec(x);
    for u in &us[1..] {
        let stacked: Vec<f64> = y.iter().map(|v| v.max(0.0)).chain(y.iter().map(|v| (-v).max(0.0))).collect();
        y = u.matvec(&stacked);
    }
    y[0]
}

fn checks(model: &Model, a: &AuditArgs) -> Result<Vec<Check>, Failure> {
    let g = model.group().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let n = a.inputs.max(1);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..model.input_width()).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let w = random_weights(model, a.seed)?;
    let mut out = Vec::new();

    out.push(Check::new(
        "admissible",
        model.report.admissible,
        0.0,
        match model.report.failing_layer {
            Some(l) => format!("fails at layer {l}"),
            None => "every irrep has phi = K".into(),
        },
    ));

    let mut blocks = 0;
    let mut bad = 0;
    for (li, layer) in model.layers.iter().enumerate() {
        for block in &layer.blocks {
            let rho: Vec<SignedPerm> = layer.slots[block.slot].irrep.images().to_vec();
            let pi = &model.segments[block.seg].slots[block.src].pi;
            blocks += 1;
            if !verify_basis(&block.basis, &rho, pi) {
                bad += 1;
                eprintln!("basis of layer {li} block {}.{}.{} is not equivariant", block.slot, block.seg, block.src);
            }
        }
    }
    out.push(Check::new("basis", bad == 0, bad as f64, format!("{bad} of {blocks} blocks fail over the full group")));

    let base = model.forward(&w, &xs, Mode::Eval)?;
    let mut eq: f64 = 0.0;
    for &el in g.generators() {
        let moved: Vec<Vec<f64>> = xs.iter().map(|x| model.input_rep(el).apply(x)).collect();
        let tr = model.forward(&w, &moved, Mode::Eval)?;
        for li in 0..model.depth() - 1 {
            let rep = model.layer_rep(li, el);
            for (p, q) in base.hidden[li].pre.iter().zip(&tr.hidden[li].pre) {
                eq = eq.max(max_diff(&rep.apply(p), q));
            }
        }
    }
    out.push(Check::new("equivariance", eq <= 1e-9, eq, "hidden pre-activations under each generator"));

    let inv = model.invariance_deviation(&w, &xs)?;
    out.push(Check::new("invariance", inv <= 1e-9, inv, "max |f(gx) - f(x)| over generators"));

    if model.arch.batchnorm {
        for name in ["psi", "reparameterization", "crelu-import"] {
            out.push(Check::skip(name, "defined for networks without batchnorm"));
        }
    } else {
        let mut psi: f64 = 0.0;
        for &el in g.generators() {
            psi = psi.max(psi_audit(model, &w, el)?);
        }
        out.push(Check::new("psi", psi <= 1e-9, psi, "apparent network intertwiner residual"));

        let (app, _) = apparent_weights(model, &w)?;
        if app.w.len() < 2 {
            out.push(Check::skip("reparameterization", "needs a hidden layer"));
        } else {
            let mut dev: f64 = 0.0;
            for _ in 0..5 {
                let i = rng.random_range(1..app.w.len());
                let k = app.widths[i - 1];
                let c: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..3.0)).collect();
                let mut perm: Vec<usize> = (0..k).collect();
                perm.shuffle(&mut rng);
                let z: Vec<i8> = (0..k).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
                dev = dev.max(cpz_reparam_audit(&app, i, &c, &perm, &z, &xs)?);
            }
            out.push(Check::new("reparameterization", dev <= 1e-8, dev, "5 random scalings, permutations and sign flips"));
        }

        match model.random_crelu(a.seed).and_then(|us| model.import_crelu(&us).map(|wc| (us, wc))) {
            Ok((us, wc)) => {
                let f = model.predict(&wc, &xs)?;
                let dev = xs.iter().zip(&f).fold(0.0f64, |m, (x, y)| m.max((crelu_reference(&us, x) - y).abs()));
                out.push(Check::new("crelu-import", dev <= 1e-9, dev, "imported CReLU network against its dense forward"));
            }
            Err(e) => out.push(Check::new("crelu-import", false, f64::NAN, e.to_string())),
        }
    }

    let ys: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let grads = gradients(model, &w, &xs, &ys)?;
    let mut idx: Vec<usize> = (0..model.n_params).collect();
    idx.shuffle(&mut rng);
    idx.truncate(20);
    let mut rel: f64 = 0.0;
    for &i in &idx {
        let fd = finite_difference(model, &w, &xs, &ys, i, 1e-5)?;
        rel = rel.max((fd - grads.grad[i]).abs() / fd.abs().max(grads.grad[i].abs()).max(1e-8));
    }
    out.push(Check::new("gradient", rel <= 1e-5, rel, format!("{} coordinates against central differences", idx.len())));
    Ok(out)
}

pub fn run(a: &AuditArgs) -> CmdResult {
    let (_, arch) = load_spec(&a.spec)?;
    let calc = Calculus::new(arch.group.clone());
    let mut model = Model::compile_with(&arch, Admission::Warn, &calc)?;
    if let Some(path) = &a.dump_bases {
        let blocks: Vec<BlockBasis> = model
            .layers
            .iter()
            .enumerate()
            .flat_map(|(li, l)| {
                l.blocks.iter().map(move |b| BlockBasis { layer: li, slot: b.slot, seg: b.seg, src: b.src, basis: b.basis.to_json() })
            })
            .collect();
        std::fs::write(path, serde_json::to_string(&blocks).unwrap()).map_err(|e| io_err(path, e))?;
    }
    if let Some(path) = &a.bases {
        swap_bases(&mut model, path)?;
    }
    let report = checks(&model, a)?;
    let mut text = String::from("check,status,max_deviation,detail\n");
    for c in &report {
        text.push_str(&format!("{},{},{:.3e},{}\n", c.name, c.status, c.value, c.detail));
    }
    let failed = report.iter().any(|c| c.status == "fail");
    Ok((text, u8::from(failed)))
}
