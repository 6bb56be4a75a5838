//! Forward and backward passes.

use super::{LstmParams, NetworkParams, PolicyOutput};
use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one LSTM direction, indexed by processing step.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// Row of the input read at each step.
    order: Vec<usize>,
    /// Post-activation gates `[i, f, g, o]`, `T x 4H`.
    gates: Array2<f64>,
    /// Cell states, `(T + 1) x H`; row 0 is the zero initial state.
    c: Array2<f64>,
    /// Hidden states, `(T + 1) x H`; row 0 is the zero initial state.
    h: Array2<f64>,
    tanh_c: Array2<f64>,
}

impl LstmCache {
    pub fn final_hidden(&self) -> ArrayView1<'_, f64> {
        self.h.row(self.h.nrows() - 1)
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Array2<f64>,
    fwd: LstmCache,
    bwd: LstmCache,
    s: Array1<f64>,
    block_u: Vec<Array1<f64>>,
    block_z: Vec<Array1<f64>>,
    pub output: PolicyOutput,
}

fn lstm_forward(p: &LstmParams, x: ArrayView2<'_, f64>, order: Vec<usize>) -> LstmCache {
    let hd = p.wh.ncols();
    let steps = order.len();
    let xw = x.dot(&p.wx.t());
    let mut gates = Array2::zeros((steps, 4 * hd));
    let mut c = Array2::<f64>::zeros((steps + 1, hd));
    let mut h = Array2::zeros((steps + 1, hd));
    let mut tanh_c = Array2::zeros((steps, hd));
    for (t, &row) in order.iter().enumerate() {
        let mut a = p.wh.dot(&h.row(t));
        a += &xw.row(row);
        a += &p.b;
        let a = a.as_slice().expect("contiguous");
        let g = gates.row_mut(t).into_slice().expect("contiguous");
        for j in 0..hd {
            g[j] = sigmoid(a[j]);
            g[hd + j] = sigmoid(a[hd + j]);
            g[2 * hd + j] = a[2 * hd + j].tanh();
            g[3 * hd + j] = sigmoid(a[3 * hd + j]);
        }
        for j in 0..hd {
            let ct = g[hd + j] * c[[t, j]] + g[j] * g[2 * hd + j];
            let tc = ct.tanh();
            c[[t + 1, j]] = ct;
            tanh_c[[t, j]] = tc;
            h[[t + 1, j]] = g[3 * hd + j] * tc;
        }
    }
    LstmCache {
        order,
        gates,
        c,
        h,
        tanh_c,
    }
}

fn lstm_backward(
    p: &LstmParams,
    cache: &LstmCache,
    x: &Array2<f64>,
    dh_final: ArrayView1<'_, f64>,
    grad: &mut LstmParams,
) {
    let hd = p.wh.ncols();
    let rows = x.nrows();
    let mut dgates = Array2::<f64>::zeros((rows, 4 * hd));
    let mut h_prev = Array2::<f64>::zeros((rows, hd));
    let mut dh = dh_final.to_owned();
    let mut dc = Array1::<f64>::zeros(hd);
    for t in (0..cache.order.len()).rev() {
        let row = cache.order[t];
        let g = cache.gates.row(t);
        let g = g.as_slice().expect("contiguous");
        {
            let out = dgates.row_mut(row).into_slice().expect("contiguous");
            for j in 0..hd {
                let (i, f, gg, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                let tc = cache.tanh_c[[t, j]];
                let d_o = dh[j] * tc;
                let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
                out[j] = dcj * gg * i * (1.0 - i);
                out[hd + j] = dcj * cache.c[[t, j]] * f * (1.0 - f);
                out[2 * hd + j] = dcj * i * (1.0 - gg * gg);
                out[3 * hd + j] = d_o * o * (1.0 - o);
                dc[j] = dcj * f;
            }
        }
        h_prev.row_mut(row).assign(&cache.h.row(t));
        dh = dgates.row(row).dot(&p.wh);
    }
    general_mat_mul(1.0, &dgates.t(), x, 1.0, &mut grad.wx);
    general_mat_mul(1.0, &dgates.t(), &h_prev, 1.0, &mut grad.wh);
    grad.b += &dgates.sum_axis(Axis(0));
}

fn add_outer(target: &mut Array2<f64>, a: &Array1<f64>, b: ArrayView1<'_, f64>) {
    for (mut row, &ai) in target.outer_iter_mut().zip(a.iter()) {
        if ai != 0.0 {
            row.scaled_add(ai, &b);
        }
    }
}

impl NetworkParams {
    /// Runs the network on a feature matrix (rows = charts).
    pub fn forward(&self, x: &Array2<f64>) -> ForwardCache {
        assert_eq!(x.ncols(), self.shape.input, "feature width does not match the network");
        assert!(x.nrows() > 0, "at least one feature row is required");
        let n = x.nrows();
        let fwd = lstm_forward(&self.forward, x.view(), (0..n).collect());
        let bwd = lstm_forward(&self.backward, x.view(), (0..n).rev().collect());
        let hd = self.shape.hidden;
        let mut s = Array1::zeros(2 * hd);
        s.slice_mut(s![..hd]).assign(&fwd.final_hidden());
        s.slice_mut(s![hd..]).assign(&bwd.final_hidden());

        let value = self.value_w.dot(&s) + self.value_b[0];
        let mut block_u = Vec::with_capacity(self.blocks.len());
        let mut block_z = Vec::with_capacity(self.blocks.len());
        let mut head_logits = Vec::with_capacity(self.blocks.len());
        let mut u = s.clone();
        for b in &self.blocks {
            let z = (b.w_in.dot(&u) + &b.b_in).mapv(f64::tanh);
            let mut v = Array1::zeros(z.len() + s.len());
            v.slice_mut(s![..z.len()]).assign(&z);
            v.slice_mut(s![z.len()..]).assign(&s);
            let logits = b.w_out.dot(&v) + &b.b_out;
            head_logits.push(logits.to_vec());
            block_u.push(u);
            block_z.push(z);
            u = if self.shape.independent_heads { s.clone() } else { v };
        }
        ForwardCache {
            x: x.clone(),
            fwd,
            bwd,
            s,
            block_u,
            block_z,
            output: PolicyOutput { value, head_logits },
        }
    }

    /// Accumulates into `grad` the gradient of a scalar whose derivatives with
    /// respect to the logits of each head and to the value are given. Heads
    /// without gradient may pass an all-zero or empty slice.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[Vec<f64>], dvalue: f64, grad: &mut NetworkParams) {
        let hd = self.shape.hidden;
        let e = self.shape.embed;
        let mut ds = Array1::<f64>::zeros(2 * hd);
        // Gradient with respect to [z_k; s] arriving from block k + 1.
        let mut dv_next: Option<Array1<f64>> = None;
        for k in (0..self.blocks.len()).rev() {
            let b = &self.blocks[k];
            let gb = &mut grad.blocks[k];
            let dl = dlogits.get(k).filter(|d| d.iter().any(|x| *x != 0.0));
            let mut dv = match dv_next.take() {
                Some(d) => d,
                None if dl.is_none() => continue,
                None => Array1::zeros(e + 2 * hd),
            };
            if let Some(dl) = dl {
                let dl = Array1::from(dl.clone());
                let mut v = Array1::zeros(e + 2 * hd);
                v.slice_mut(s![..e]).assign(&cache.block_z[k]);
                v.slice_mut(s![e..]).assign(&cache.s);
                add_outer(&mut gb.w_out, &dl, v.view());
                gb.b_out += &dl;
                dv += &dl.dot(&b.w_out);
            }
            ds += &dv.slice(s![e..]);
            let z = &cache.block_z[k];
            let da = Array1::from_shape_fn(e, |j| dv[j] * (1.0 - z[j] * z[j]));
            add_outer(&mut gb.w_in, &da, cache.block_u[k].view());
            gb.b_in += &da;
            let du = da.dot(&b.w_in);
            if self.shape.independent_heads || k == 0 {
                ds += &du;
            } else {
                dv_next = Some(du);
            }
        }
        if dvalue != 0.0 {
            grad.value_w.scaled_add(dvalue, &cache.s);
            grad.value_b[0] += dvalue;
            ds.scaled_add(dvalue, &self.value_w);
        }
        lstm_backward(&self.forward, &cache.fwd, &cache.x, ds.slice(s![..hd]), &mut grad.forward);
        lstm_backward(&self.backward, &cache.bwd, &cache.x, ds.slice(s![hd..]), &mut grad.backward);
    }
}
