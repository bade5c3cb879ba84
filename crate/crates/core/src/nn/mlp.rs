use std::f64::consts::PI;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::flows::VelocityField;

/// Sinusoidal features `sin(2^k π t), cos(2^k π t)` for `k < n/2`.
pub fn time_features(t: f64, n: usize, out: &mut [f64]) {
    for k in 0..n / 2 {
        let arg = (1u64 << k) as f64 * PI * t;
        out[2 * k] = arg.sin();
        out[2 * k + 1] = arg.cos();
    }
}

/// Tanh MLP mapping `[x, features(t)]` to a velocity of the same size as `x`.
///
/// Parameters live in one flat vector, layer by layer, each layer stored as
/// its row-major `n_out x n_in` weight matrix followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    t_embed: usize,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Parameter gradient with the same layout as [`Mlp::params`].
pub type Gradients = Vec<f64>;

fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut off = vec![0];
    for w in dims.windows(2) {
        off.push(off.last().unwrap() + w[0] * w[1] + w[1]);
    }
    off
}

impl Mlp {
    pub const DEFAULT_T_EMBED: usize = 8;

    /// All-zero network with the given hidden widths.
    pub fn zeros(data_dim: usize, hidden: &[usize], t_embed: usize) -> Result<Self> {
        if data_dim == 0 || t_embed % 2 == 1 || hidden.contains(&0) {
            return Err(Error::Config("invalid network shape".into()));
        }
        let mut dims = vec![data_dim + t_embed];
        dims.extend_from_slice(hidden);
        dims.push(data_dim);
        Self::from_parts(dims.clone(), t_embed, vec![0.0; *offsets(&dims).last().unwrap()])
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(data_dim: usize, hidden: &[usize], t_embed: usize, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(data_dim, hidden, t_embed)?;
        for l in 0..net.n_layers() {
            let (n_in, n_out) = (net.dims[l], net.dims[l + 1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let start = net.offsets[l];
            for w in &mut net.params[start..start + n_in * n_out] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn from_parts(dims: Vec<usize>, t_embed: usize, params: Vec<f64>) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config("network needs at least one non-empty layer".into()));
        }
        let data_dim = *dims.last().unwrap();
        if dims[0] != data_dim + t_embed {
            return Err(Error::Config(format!(
                "input width {} must equal data dimension {data_dim} plus {t_embed} time features",
                dims[0]
            )));
        }
        let offsets = offsets(&dims);
        check_dim(*offsets.last().unwrap(), params.len())?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("non-finite network parameter".into()));
        }
        Ok(Self {
            dims,
            t_embed,
            params,
            offsets,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn t_embed(&self) -> usize {
        self.t_embed
    }

    pub fn data_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
        let start = self.offsets[l];
        let (w, rest) = self.params[start..self.offsets[l + 1]].split_at(n_in * n_out);
        (w, rest)
    }

    fn input_row(&self, x: &[f64], t: f64, row: &mut [f64]) {
        let d = self.data_dim();
        row[..d].copy_from_slice(x);
        time_features(t, self.t_embed, &mut row[d..]);
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        check_dim(self.data_dim(), x.len())?;
        check_dim(self.data_dim(), out.len())?;
        let mut a = vec![0.0; self.dims[0]];
        self.input_row(x, t, &mut a);
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let n_in = self.dims[l];
            let last = l + 1 == self.n_layers();
            let next: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, bo)| {
                    let z = bo + w[o * n_in..(o + 1) * n_in].iter().zip(&a).map(|(p, q)| p * q).sum::<f64>();
                    if last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            a = next;
        }
        out.copy_from_slice(&a);
        Ok(())
    }

    /// Mean-squared-error loss `mean_b ‖net(x_b, t_b) - y_b‖²` and its exact
    /// gradient for a batch stored row-major in `xs`, `ts`, `ys`.
    pub fn loss_and_grad(&self, xs: &[f64], ts: &[f64], ys: &[f64], ws: &mut Workspace, grad: &mut Gradients) -> Result<f64> {
        let d = self.data_dim();
        let bsz = ts.len();
        check_dim(bsz * d, xs.len())?;
        check_dim(bsz * d, ys.len())?;
        grad.resize(self.params.len(), 0.0);
        grad.iter_mut().for_each(|g| *g = 0.0);
        ws.prepare(&self.dims, bsz);

        for (b, &t) in ts.iter().enumerate() {
            let row = &mut ws.acts[0][b * self.dims[0]..(b + 1) * self.dims[0]];
            self.input_row(&xs[b * d..(b + 1) * d], t, row);
        }
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let (w, bias) = self.layer(l);
            let (prev, next) = ws.acts.split_at_mut(l + 1);
            let (input, out) = (&prev[l], &mut next[0]);
            for r in 0..bsz {
                out[r * n_out..(r + 1) * n_out].copy_from_slice(bias);
            }
            // out (B x n_out) += input (B x n_in) · Wᵀ
            unsafe {
                matrixmultiply::dgemm(
                    bsz, n_in, n_out, 1.0,
                    input.as_ptr(), n_in as isize, 1,
                    w.as_ptr(), 1, n_in as isize,
                    1.0, out.as_mut_ptr(), n_out as isize, 1,
                );
            }
            if l + 1 < self.n_layers() {
                out.iter_mut().for_each(|z| *z = z.tanh());
            }
        }

        let out = &ws.acts[self.n_layers()];
        let mut loss = 0.0;
        let delta = &mut ws.delta;
        delta.clear();
        for (o, y) in out.iter().zip(ys) {
            let r = o - y;
            loss += r * r;
            delta.push(2.0 * r / bsz as f64);
        }
        loss /= bsz as f64;

        for l in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let start = self.offsets[l];
            let (gw, gb) = grad[start..self.offsets[l + 1]].split_at_mut(n_in * n_out);
            let input = &ws.acts[l];
            // gW (n_out x n_in) = deltaᵀ · input
            unsafe {
                matrixmultiply::dgemm(
                    n_out, bsz, n_in, 1.0,
                    ws.delta.as_ptr(), 1, n_out as isize,
                    input.as_ptr(), n_in as isize, 1,
                    0.0, gw.as_mut_ptr(), n_in as isize, 1,
                );
            }
            for r in 0..bsz {
                for (g, dv) in gb.iter_mut().zip(&ws.delta[r * n_out..(r + 1) * n_out]) {
                    *g += dv;
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            ws.back.resize(bsz * n_in, 0.0);
            // back (B x n_in) = delta (B x n_out) · W
            unsafe {
                matrixmultiply::dgemm(
                    bsz, n_out, n_in, 1.0,
                    ws.delta.as_ptr(), n_out as isize, 1,
                    w.as_ptr(), n_in as isize, 1,
                    0.0, ws.back.as_mut_ptr(), n_in as isize, 1,
                );
            }
            for (bk, a) in ws.back.iter_mut().zip(input) {
                *bk *= 1.0 - a * a;
            }
            std::mem::swap(&mut ws.delta, &mut ws.back);
        }
        Ok(loss)
    }
}

/// Reusable activation buffers for [`Mlp::loss_and_grad`].
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    back: Vec<f64>,
}

impl Workspace {
    fn prepare(&mut self, dims: &[usize], bsz: usize) {
        self.acts.resize(dims.len(), Vec::new());
        for (a, &w) in self.acts.iter_mut().zip(dims) {
            a.resize(bsz * w, 0.0);
        }
    }
}

impl VelocityField for Mlp {
    fn dim(&self) -> usize {
        self.data_dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, _label: Option<usize>, out: &mut [f64]) -> Result<()> {
        self.forward(x, t, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(3, &[5, 4], 8).unwrap();
        let mut out = [1.0; 3];
        net.forward(&[0.3, -2.0, 7.0], 0.4, &mut out).unwrap();
        assert_eq!(out, [0.0; 3]);
    }

    #[test]
    fn single_linear_layer_is_a_matrix_product() {
        let (d, te) = (2, 2);
        let w = vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.5, 0.0, 2.0];
        let b = vec![0.1, -0.2];
        let net = Mlp::from_parts(vec![d + te, d], te, [w.clone(), b.clone()].concat()).unwrap();
        let (x, t) = ([0.7, -0.3], 0.25);
        let mut feats = [0.0; 2];
        time_features(t, te, &mut feats);
        let inp = [x[0], x[1], feats[0], feats[1]];
        let mut out = [0.0; 2];
        net.forward(&x, t, &mut out).unwrap();
        for o in 0..2 {
            let expect: f64 = b[o] + (0..4).map(|i| w[o * 4 + i] * inp[i]).sum::<f64>();
            assert!((out[o] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_loss_matches_single_sample_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::random(3, &[6, 5], 8, &mut rng).unwrap();
        let xs: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let ts = [0.1, 0.5, 0.9, 0.0];
        let ys: Vec<f64> = (0..12).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut g = Vec::new();
        let loss = net.loss_and_grad(&xs, &ts, &ys, &mut Workspace::default(), &mut g).unwrap();
        let mut expect = 0.0;
        for b in 0..4 {
            let mut out = [0.0; 3];
            net.forward(&xs[b * 3..b * 3 + 3], ts[b], &mut out).unwrap();
            expect += out.iter().zip(&ys[b * 3..b * 3 + 3]).map(|(o, y)| (o - y).powi(2)).sum::<f64>();
        }
        assert!((loss - expect / 4.0).abs() < 1e-12);
    }

    #[test]
    fn shape_validation() {
        assert!(Mlp::zeros(0, &[4], 8).is_err());
        assert!(Mlp::zeros(2, &[0], 8).is_err());
        assert!(Mlp::from_parts(vec![3, 2], 8, vec![0.0; 8]).is_err());
    }
}
