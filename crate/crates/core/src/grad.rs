//! Reverse-mode gradients of the mean binary cross-entropy through the latent recursion.

use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::model::{LatentWeights, Mode, Model, Trace};

/// `log(1 + e^f) − y f`, stable for large `|f|`.
pub fn bce_with_logits(f: f64, y: f64) -> f64 {
    f.max(0.0) - y * f + (-f.abs()).exp().ln_1p()
}

pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

pub fn mean_bce(logits: &[f64], ys: &[f64]) -> f64 {
    logits.iter().zip(ys).map(|(&f, &y)| bce_with_logits(f, y)).sum::<f64>() / logits.len() as f64
}

#[derive(Clone, Debug)]
pub struct Gradients {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub trace: Trace,
}

/// Loss and gradient for a batch in training mode (batchnorm uses batch statistics).
/// The logit is output channel 0.
pub fn gradients(model: &Model, w: &LatentWeights, xs: &[Vec<f64>], ys: &[f64]) -> Result<Gradients> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::ShapeMismatch(format!("{} inputs and {} labels", xs.len(), ys.len())));
    }
    let trace = model.forward(w, xs, Mode::Train)?;
    let logits = trace.logits();
    let loss = mean_bce(&logits, ys);
    let bsz = xs.len() as f64;
    let p = &w.params;
    let mut grad = vec![0.0; model.n_params];
    let last = model.depth() - 1;
    let out_w = model.output_width();
    let dout: Vec<Vec<f64>> = logits
        .iter()
        .zip(ys)
        .map(|(&f, &y)| {
            let mut d = vec![0.0; out_w];
            d[0] = (sigmoid(f) - y) / bsz;
            d
        })
        .collect();
    let mut dh = backprop_linear(model, last, p, &trace.h[last], &dout, &mut grad);
    for li in (0..last).rev() {
        let layer = &model.layers[li];
        let lt = &trace.hidden[li];
        let width = layer.width;
        let mut dg: Vec<Vec<f64>> = vec![vec![0.0; width]; xs.len()];
        let mut dr: Vec<Vec<f64>> = vec![vec![0.0; width]; xs.len()];
        for slot in &layer.slots {
            let k = slot.channels;
            for co in 0..k {
                let idx = |pt: usize| slot.offset + pt * k + co;
                if let Some(stat) = slot.stat {
                    let (ga, be) = (slot.gamma.unwrap(), slot.beta.unwrap());
                    let gamma = p[ga + co];
                    let (mu, s) = (lt.mean[stat + co], lt.std[stat + co]);
                    let n = (xs.len() * slot.degree()) as f64;
                    let (mut sum_t, mut sum_tu) = (0.0, 0.0);
                    for (s_i, dhs) in dh.iter().enumerate() {
                        for pt in 0..slot.degree() {
                            let t = dhs[idx(pt)];
                            let u = lt.r[s_i][idx(pt)] - 0.5 * lt.g[s_i][idx(pt)];
                            sum_t += t;
                            sum_tu += t * (u - mu);
                        }
                    }
                    grad[be + co] += sum_t;
                    grad[ga + co] += sum_tu / s;
                    let dmu = -gamma * sum_t / s;
                    let ds = -gamma * sum_tu / (s * s);
                    for (s_i, dhs) in dh.iter().enumerate() {
                        for pt in 0..slot.degree() {
                            let i = idx(pt);
                            let du = dhs[i] * gamma / s;
                            dr[s_i][i] = du + dmu / n + ds * (lt.r[s_i][i] - mu) / (n * s);
                            dg[s_i][i] = -0.5 * du;
                        }
                    }
                } else {
                    for (s_i, dhs) in dh.iter().enumerate() {
                        for pt in 0..slot.degree() {
                            let i = idx(pt);
                            dr[s_i][i] = dhs[i];
                            dg[s_i][i] = -0.5 * dhs[i];
                        }
                    }
                }
                for s_i in 0..xs.len() {
                    for pt in 0..slot.degree() {
                        let i = idx(pt);
                        let dpre = if lt.pre[s_i][i] > 0.0 { dr[s_i][i] } else { 0.0 };
                        dg[s_i][i] += dpre;
                        if let Some(off) = slot.bias {
                            grad[off + co] += dpre;
                        }
                    }
                }
            }
        }
        let rest: Vec<Vec<f64>> = dh.iter().map(|d| d[width..].to_vec()).collect();
        let back = backprop_linear(model, li, p, &trace.h[li], &dg, &mut grad);
        dh = rest.into_iter().zip(back).map(|(a, b)| a.iter().zip(&b).map(|(x, y)| x + y).collect()).collect();
    }
    Ok(Gradients { loss, grad, trace })
}

/// Accumulates coefficient gradients of `g = V h` and returns `Vᵀ dg` per sample.
/// Bias gradients of the final layer are added here; hidden-layer biases are handled by the caller.
fn backprop_linear(
    model: &Model,
    li: usize,
    p: &[f64],
    hs: &[Vec<f64>],
    dg: &[Vec<f64>],
    grad: &mut [f64],
) -> Vec<Vec<f64>> {
    let layer = &model.layers[li];
    let v = model.materialize(li, p);
    let mut dv = Mat::zeros(layer.width, layer.in_width);
    for (h, d) in hs.iter().zip(dg) {
        for (r, &dr) in d.iter().enumerate() {
            if dr == 0.0 {
                continue;
            }
            let row = &mut dv.data[r * layer.in_width..(r + 1) * layer.in_width];
            for (x, &hv) in row.iter_mut().zip(h) {
                *x += dr * hv;
            }
        }
    }
    model.reduce_dense(li, &dv, grad);
    if li + 1 == model.depth() {
        for slot in &layer.slots {
            if let Some(off) = slot.bias {
                for d in dg {
                    for pt in 0..slot.degree() {
                        for co in 0..slot.channels {
                            grad[off + co] += d[slot.offset + pt * slot.channels + co];
                        }
                    }
                }
            }
        }
    }
    dg.iter().map(|d| v.tmatvec(d)).collect()
}

/// Central-difference estimate of one partial derivative of the training-mode loss.
pub fn finite_difference(model: &Model, w: &LatentWeights, xs: &[Vec<f64>], ys: &[f64], i: usize, h: f64) -> Result<f64> {
    let mut wp = w.clone();
    wp.params[i] += h;
    let lp = mean_bce(&model.forward(&wp, xs, Mode::Train)?.logits(), ys);
    wp.params[i] = w.params[i] - h;
    let lm = mean_bce(&model.forward(&wp, xs, Mode::Train)?.logits(), ys);
    Ok((lp - lm) / (2.0 * h))
}
