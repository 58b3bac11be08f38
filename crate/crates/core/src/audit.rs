//! Apparent weights of a latent model and the audits that run on them.

use crate::dense::Mat;
use crate::error::{Error, Result};
use crate::model::{LatentWeights, Model};

/// Weights of the plain densely connected network `f^(i+1) = [relu(W f^(i) + b); f^(i)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Apparent {
    pub w: Vec<Mat>,
    pub b: Vec<Vec<f64>>,
    /// Width of each hidden layer, oldest first.
    pub widths: Vec<usize>,
    pub input_width: usize,
}

impl Apparent {
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut f = x.to_vec();
        let last = self.w.len() - 1;
        for (i, (w, b)) in self.w.iter().zip(&self.b).enumerate() {
            let z: Vec<f64> = w.matvec(&f).iter().zip(b).map(|(a, c)| a + c).collect();
            if i == last {
                return z;
            }
            let mut next: Vec<f64> = z.iter().map(|a| a.max(0.0)).collect();
            next.extend_from_slice(&f);
            f = next;
        }
        unreachable!("networks have a final layer")
    }

    /// Width of `f^(i)` for 1-based `i`.
    fn f_width(&self, i: usize) -> usize {
        self.input_width + self.widths[..i - 1].iter().sum::<usize>()
    }
}

/// `W^(i) = V^(i) A^(i−1)`, with `A^(0) = I` and `A^(i) = [[I, −½W^(i)], [0, A^(i−1)]]`.
/// Also returns the `A^(i)` matrices, `A^(0)` first.
pub fn apparent_weights(model: &Model, w: &LatentWeights) -> Result<(Apparent, Vec<Mat>)> {
    if model.arch.batchnorm {
        return Err(Error::InvalidArchitecture("apparent weights are defined for models without batchnorm".into()));
    }
    let mut a = vec![Mat::identity(model.input_width())];
    let mut ws = Vec::new();
    let mut bs = Vec::new();
    for li in 0..model.depth() {
        let v = model.materialize(li, &w.params);
        let wi = v.mul(&a[li]);
        bs.push(model.bias_vector(li, &w.params));
        if li + 1 < model.depth() {
            let n = model.layers[li].width;
            a.push(Mat::upper_block(&Mat::identity(n), &wi.scale(-0.5), &a[li]));
        }
        ws.push(wi);
    }
    let widths = model.layers[..model.depth() - 1].iter().map(|l| l.width).collect();
    Ok((Apparent { w: ws, b: bs, widths, input_width: model.input_width() }, a))
}

/// Max deviation of `ρ^(i)(g) W^(i) = W^(i) ψ^(i)(g)` and `A^(i) ψ^(i+1)(g) = Π^(i)(g) A^(i)` over layers.
pub fn psi_audit(model: &Model, w: &LatentWeights, g: usize) -> Result<f64> {
    let (app, a) = apparent_weights(model, w)?;
    let mut psi = Mat::from_signed(&model.input_rep(g));
    let mut big_pi = psi.clone();
    let mut dev: f64 = 0.0;
    for li in 0..model.depth() {
        let rho = Mat::from_signed(&model.layer_rep(li, g));
        let wi = &app.w[li];
        let rw = rho.mul(wi);
        dev = dev.max(rw.max_abs_diff(&wi.mul(&psi)));
        if li + 1 == model.depth() {
            break;
        }
        let pi = Mat::from_signed(&model.layer_rep(li, g).unsigned());
        let corner = wi.mul(&psi).sub(&pi.mul(wi)).scale(0.5);
        psi = Mat::upper_block(&pi, &corner, &psi);
        big_pi = Mat::block_diag(&[pi, big_pi]);
        let lhs = a[li + 1].mul(&psi);
        let rhs = big_pi.mul(&a[li + 1]);
        dev = dev.max(lhs.max_abs_diff(&rhs));
    }
    Ok(dev)
}

/// Reparameterization of hidden layer `i` (1-based) by `C P Z`: `C = diag(c)` positive,
/// `P` sends coordinate `k` to `perm[k]`, `Z = diag(z)` signs. Later layers are adjusted so
/// that the network function is unchanged.
pub fn cpz_transform(app: &Apparent, i: usize, c: &[f64], perm: &[usize], z: &[i8]) -> Result<Apparent> {
    if i == 0 || i >= app.w.len() {
        return Err(Error::ShapeMismatch(format!("layer {i} is not a hidden layer")));
    }
    let n = app.widths[i - 1];
    if c.len() != n || perm.len() != n || z.len() != n {
        return Err(Error::ShapeMismatch(format!("C, P, Z must have size {n}")));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::ShapeMismatch("P is not a permutation".into()));
        }
    }
    if c.iter().any(|&x| x <= 0.0) || z.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::ShapeMismatch("C must be positive and Z a sign vector".into()));
    }
    let mut out = app.clone();
    let wi = &app.w[i - 1];
    let bi = &app.b[i - 1];
    let mut nw = Mat::zeros(n, wi.cols);
    let mut nb = vec![0.0; n];
    for k in 0..n {
        let s = c[perm[k]] * f64::from(z[k]);
        for col in 0..wi.cols {
            nw.set(perm[k], col, s * wi.get(k, col));
        }
        nb[perm[k]] = s * bi[k];
    }
    out.w[i - 1] = nw;
    out.b[i - 1] = nb;
    let fw = app.f_width(i);
    for layer in i..app.w.len() {
        let old = &app.w[layer];
        // f^(layer+1) = [r^(layer); …; r^(i); f^(i)]
        let r0: usize = app.widths[i..layer].iter().sum();
        let f0 = r0 + n;
        let neww = &mut out.w[layer];
        for row in 0..old.rows {
            for k in 0..n {
                neww.set(row, r0 + perm[k], old.get(row, r0 + k) / c[perm[k]]);
            }
            for k in 0..n {
                if z[k] > 0 {
                    continue;
                }
                let wr = old.get(row, r0 + k);
                if wr == 0.0 {
                    continue;
                }
                for col in 0..fw {
                    neww.add(row, f0 + col, wr * wi.get(k, col));
                }
                out.b[layer][row] += wr * bi[k];
            }
        }
    }
    Ok(out)
}

/// `max |f(x) − f'(x)|` after the reparameterization of [`cpz_transform`].
pub fn cpz_reparam_audit(
    app: &Apparent,
    i: usize,
    c: &[f64],
    perm: &[usize],
    z: &[i8],
    xs: &[Vec<f64>],
) -> Result<f64> {
    let moved = cpz_transform(app, i, c, perm, z)?;
    let mut dev: f64 = 0.0;
    for x in xs {
        for (a, b) in app.forward(x).iter().zip(moved.forward(x)) {
            dev = dev.max((a - b).abs());
        }
    }
    Ok(dev)
}
