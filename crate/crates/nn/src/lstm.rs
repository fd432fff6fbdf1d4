//! Peephole LSTM cell and sequence runner.
//!
//! Gate activations are logistic; the candidate and the state squashing are
//! hyperbolic tangent. The input and forget gates peek at the previous cell
//! state, the output gate peeks at the freshly computed one. Peephole weights
//! are diagonal (element-wise vectors over the cell state). A linear readout
//! (`w_hy`, `b_y`) maps the hidden state to an output vector; stacks that feed
//! hidden states onward simply construct it with `output_dim = 0`.
//!
//! The readout is applied to the final hidden state rather than the previous
//! step's state.

use crate::init;
use crate::tensor::Tensor;
use rand::Rng;

/// Full parameter bundle for one LSTM layer.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    // input gate
    pub w_ix: Tensor,
    pub w_ih: Tensor,
    pub p_ic: Tensor,
    pub b_i: Tensor,
    // forget gate
    pub w_fx: Tensor,
    pub w_fh: Tensor,
    pub p_fc: Tensor,
    pub b_f: Tensor,
    // output gate
    pub w_ox: Tensor,
    pub w_oh: Tensor,
    pub p_oc: Tensor,
    pub b_o: Tensor,
    // cell candidate
    pub w_gx: Tensor,
    pub w_gh: Tensor,
    pub b_g: Tensor,
    // readout
    pub w_hy: Tensor,
    pub b_y: Tensor,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        LstmParams {
            input_dim,
            hidden_dim,
            output_dim,
            w_ix: Tensor::zeros(&[input_dim, hidden_dim]),
            w_ih: Tensor::zeros(&[hidden_dim, hidden_dim]),
            p_ic: Tensor::zeros(&[hidden_dim]),
            b_i: Tensor::zeros(&[hidden_dim]),
            w_fx: Tensor::zeros(&[input_dim, hidden_dim]),
            w_fh: Tensor::zeros(&[hidden_dim, hidden_dim]),
            p_fc: Tensor::zeros(&[hidden_dim]),
            b_f: Tensor::zeros(&[hidden_dim]),
            w_ox: Tensor::zeros(&[input_dim, hidden_dim]),
            w_oh: Tensor::zeros(&[hidden_dim, hidden_dim]),
            p_oc: Tensor::zeros(&[hidden_dim]),
            b_o: Tensor::zeros(&[hidden_dim]),
            w_gx: Tensor::zeros(&[input_dim, hidden_dim]),
            w_gh: Tensor::zeros(&[hidden_dim, hidden_dim]),
            b_g: Tensor::zeros(&[hidden_dim]),
            w_hy: Tensor::zeros(&[hidden_dim, output_dim]),
            b_y: Tensor::zeros(&[output_dim]),
        }
    }

    /// Xavier weights, zero biases and peepholes.
    pub fn init(input_dim: usize, hidden_dim: usize, output_dim: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim, output_dim);
        p.w_ix = init::xavier_uniform(input_dim, hidden_dim, rng);
        p.w_ih = init::xavier_uniform(hidden_dim, hidden_dim, rng);
        p.w_fx = init::xavier_uniform(input_dim, hidden_dim, rng);
        p.w_fh = init::xavier_uniform(hidden_dim, hidden_dim, rng);
        p.w_ox = init::xavier_uniform(input_dim, hidden_dim, rng);
        p.w_oh = init::xavier_uniform(hidden_dim, hidden_dim, rng);
        p.w_gx = init::xavier_uniform(input_dim, hidden_dim, rng);
        p.w_gh = init::xavier_uniform(hidden_dim, hidden_dim, rng);
        if output_dim > 0 {
            p.w_hy = init::xavier_uniform(hidden_dim, output_dim, rng);
        }
        p
    }

    /// Parameter tensors paired with stable names, in serialization order.
    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("w_ix", &self.w_ix),
            ("w_ih", &self.w_ih),
            ("p_ic", &self.p_ic),
            ("b_i", &self.b_i),
            ("w_fx", &self.w_fx),
            ("w_fh", &self.w_fh),
            ("p_fc", &self.p_fc),
            ("b_f", &self.b_f),
            ("w_ox", &self.w_ox),
            ("w_oh", &self.w_oh),
            ("p_oc", &self.p_oc),
            ("b_o", &self.b_o),
            ("w_gx", &self.w_gx),
            ("w_gh", &self.w_gh),
            ("b_g", &self.b_g),
            ("w_hy", &self.w_hy),
            ("b_y", &self.b_y),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_ix,
            &mut self.w_ih,
            &mut self.p_ic,
            &mut self.b_i,
            &mut self.w_fx,
            &mut self.w_fh,
            &mut self.p_fc,
            &mut self.b_f,
            &mut self.w_ox,
            &mut self.w_oh,
            &mut self.p_oc,
            &mut self.b_o,
            &mut self.w_gx,
            &mut self.w_gh,
            &mut self.b_g,
            &mut self.w_hy,
            &mut self.b_y,
        ]
    }
}

/// Gradients mirroring `LstmParams`.
#[derive(Clone, Debug)]
pub struct LstmGrads {
    pub w_ix: Tensor,
    pub w_ih: Tensor,
    pub p_ic: Tensor,
    pub b_i: Tensor,
    pub w_fx: Tensor,
    pub w_fh: Tensor,
    pub p_fc: Tensor,
    pub b_f: Tensor,
    pub w_ox: Tensor,
    pub w_oh: Tensor,
    pub p_oc: Tensor,
    pub b_o: Tensor,
    pub w_gx: Tensor,
    pub w_gh: Tensor,
    pub b_g: Tensor,
    pub w_hy: Tensor,
    pub b_y: Tensor,
}

impl LstmGrads {
    pub fn zeros(p: &LstmParams) -> Self {
        LstmGrads {
            w_ix: Tensor::zeros(p.w_ix.shape()),
            w_ih: Tensor::zeros(p.w_ih.shape()),
            p_ic: Tensor::zeros(p.p_ic.shape()),
            b_i: Tensor::zeros(p.b_i.shape()),
            w_fx: Tensor::zeros(p.w_fx.shape()),
            w_fh: Tensor::zeros(p.w_fh.shape()),
            p_fc: Tensor::zeros(p.p_fc.shape()),
            b_f: Tensor::zeros(p.b_f.shape()),
            w_ox: Tensor::zeros(p.w_ox.shape()),
            w_oh: Tensor::zeros(p.w_oh.shape()),
            p_oc: Tensor::zeros(p.p_oc.shape()),
            b_o: Tensor::zeros(p.b_o.shape()),
            w_gx: Tensor::zeros(p.w_gx.shape()),
            w_gh: Tensor::zeros(p.w_gh.shape()),
            b_g: Tensor::zeros(p.b_g.shape()),
            w_hy: Tensor::zeros(p.w_hy.shape()),
            b_y: Tensor::zeros(p.b_y.shape()),
        }
    }

    pub fn add_assign(&mut self, other: &LstmGrads) {
        self.w_ix.add_assign(&other.w_ix);
        self.w_ih.add_assign(&other.w_ih);
        self.p_ic.add_assign(&other.p_ic);
        self.b_i.add_assign(&other.b_i);
        self.w_fx.add_assign(&other.w_fx);
        self.w_fh.add_assign(&other.w_fh);
        self.p_fc.add_assign(&other.p_fc);
        self.b_f.add_assign(&other.b_f);
        self.w_ox.add_assign(&other.w_ox);
        self.w_oh.add_assign(&other.w_oh);
        self.p_oc.add_assign(&other.p_oc);
        self.b_o.add_assign(&other.b_o);
        self.w_gx.add_assign(&other.w_gx);
        self.w_gh.add_assign(&other.w_gh);
        self.b_g.add_assign(&other.b_g);
        self.w_hy.add_assign(&other.w_hy);
        self.b_y.add_assign(&other.b_y);
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.w_ix, &self.w_ih, &self.p_ic, &self.b_i, &self.w_fx, &self.w_fh, &self.p_fc,
            &self.b_f, &self.w_ox, &self.w_oh, &self.p_oc, &self.b_o, &self.w_gx, &self.w_gh,
            &self.b_g, &self.w_hy, &self.b_y,
        ]
    }
}

/// Intermediates saved by one forward step.
pub struct LstmCache {
    pub x: Tensor,
    pub h_prev: Tensor,
    pub c_prev: Tensor,
    pub i: Tensor,
    pub f: Tensor,
    pub o: Tensor,
    pub g: Tensor,
    pub c: Tensor,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// One step of the cell. x [B,I], h_prev and c_prev [B,H].
pub fn lstm_cell(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    p: &LstmParams,
) -> (Tensor, Tensor, LstmCache) {
    let b = x.rows();
    assert_eq!(x.cols(), p.input_dim, "lstm_cell: input width");
    assert_eq!(h_prev.shape(), &[b, p.hidden_dim], "lstm_cell: h_prev shape");
    assert_eq!(c_prev.shape(), &[b, p.hidden_dim], "lstm_cell: c_prev shape");

    let peep = |lin: &mut Tensor, c: &Tensor, pv: &Tensor| {
        let h = pv.len();
        for (row, crow) in lin.data_mut().chunks_mut(h).zip(c.data().chunks(h)) {
            for ((l, &cv), &pw) in row.iter_mut().zip(crow.iter()).zip(pv.data().iter()) {
                *l += cv * pw;
            }
        }
    };

    let mut zi = x.matmul(&p.w_ix);
    zi.add_assign(&h_prev.matmul(&p.w_ih));
    peep(&mut zi, c_prev, &p.p_ic);
    let zi = zi.add_row_broadcast(&p.b_i);
    let i = zi.map(sigmoid);

    let mut zf = x.matmul(&p.w_fx);
    zf.add_assign(&h_prev.matmul(&p.w_fh));
    peep(&mut zf, c_prev, &p.p_fc);
    let zf = zf.add_row_broadcast(&p.b_f);
    let f = zf.map(sigmoid);

    let mut zg = x.matmul(&p.w_gx);
    zg.add_assign(&h_prev.matmul(&p.w_gh));
    let zg = zg.add_row_broadcast(&p.b_g);
    let g = zg.map(f64::tanh);

    // c = f ⊙ c_prev + i ⊙ g
    let c = f.zip(c_prev, |fv, cv| fv * cv).zip(&i.zip(&g, |iv, gv| iv * gv), |a, b| a + b);

    // output gate peeks at the new cell state
    let mut zo = x.matmul(&p.w_ox);
    zo.add_assign(&h_prev.matmul(&p.w_oh));
    peep(&mut zo, &c, &p.p_oc);
    let zo = zo.add_row_broadcast(&p.b_o);
    let o = zo.map(sigmoid);

    let h = o.zip(&c.map(f64::tanh), |ov, tv| ov * tv);

    let cache = LstmCache {
        x: x.clone(),
        h_prev: h_prev.clone(),
        c_prev: c_prev.clone(),
        i,
        f,
        o,
        g,
        c: c.clone(),
    };
    (h, c, cache)
}

/// Exact gradients of `lstm_cell`. `grad_h` and `grad_c` are upstream
/// gradients on the step's outputs. Returns
/// (grad_x, grad_h_prev, grad_c_prev, grad_params).
pub fn lstm_cell_backward(
    grad_h: &Tensor,
    grad_c: &Tensor,
    cache: &LstmCache,
    p: &LstmParams,
) -> (Tensor, Tensor, Tensor, LstmGrads) {
    let hdim = p.hidden_dim;
    let tanh_c = cache.c.map(f64::tanh);

    // output gate first: its pre-activation also feeds gradient into c
    let d_o = grad_h.zip(&tanh_c, |gh, tc| gh * tc);
    let dzo = d_o.zip(&cache.o, |d, o| d * o * (1.0 - o));

    // dc collects: upstream grad_c, h-path through tanh(c), and o's peephole
    let mut dc = grad_c.clone();
    dc.add_assign(&grad_h.zip(&cache.o.zip(&tanh_c, |o, tc| o * (1.0 - tc * tc)), |gh, m| gh * m));
    {
        let dcd = dc.data_mut();
        for (row, zrow) in dcd.chunks_mut(hdim).zip(dzo.data().chunks(hdim)) {
            for ((d, &z), &pw) in row.iter_mut().zip(zrow.iter()).zip(p.p_oc.data().iter()) {
                *d += z * pw;
            }
        }
    }

    let d_i = dc.zip(&cache.g, |d, g| d * g);
    let dzi = d_i.zip(&cache.i, |d, i| d * i * (1.0 - i));
    let d_f = dc.zip(&cache.c_prev, |d, cp| d * cp);
    let dzf = d_f.zip(&cache.f, |d, f| d * f * (1.0 - f));
    let d_g = dc.zip(&cache.i, |d, i| d * i);
    let dzg = d_g.zip(&cache.g, |d, g| d * (1.0 - g * g));

    // grad into c_prev: forget path plus the i/f peepholes
    let mut grad_c_prev = dc.zip(&cache.f, |d, f| d * f);
    {
        let gcd = grad_c_prev.data_mut();
        for ((row, zi_row), zf_row) in gcd
            .chunks_mut(hdim)
            .zip(dzi.data().chunks(hdim))
            .zip(dzf.data().chunks(hdim))
        {
            for (k, d) in row.iter_mut().enumerate() {
                *d += zi_row[k] * p.p_ic.data()[k] + zf_row[k] * p.p_fc.data()[k];
            }
        }
    }

    let mut grad_x = dzi.matmul_transpose_rhs(&p.w_ix);
    grad_x.add_assign(&dzf.matmul_transpose_rhs(&p.w_fx));
    grad_x.add_assign(&dzo.matmul_transpose_rhs(&p.w_ox));
    grad_x.add_assign(&dzg.matmul_transpose_rhs(&p.w_gx));

    let mut grad_h_prev = dzi.matmul_transpose_rhs(&p.w_ih);
    grad_h_prev.add_assign(&dzf.matmul_transpose_rhs(&p.w_fh));
    grad_h_prev.add_assign(&dzo.matmul_transpose_rhs(&p.w_oh));
    grad_h_prev.add_assign(&dzg.matmul_transpose_rhs(&p.w_gh));

    let peep_grad = |dz: &Tensor, c: &Tensor| -> Tensor {
        let mut out = Tensor::zeros(&[hdim]);
        for (zrow, crow) in dz.data().chunks(hdim).zip(c.data().chunks(hdim)) {
            for ((o, &z), &cv) in out.data_mut().iter_mut().zip(zrow.iter()).zip(crow.iter()) {
                *o += z * cv;
            }
        }
        out
    };

    let mut grads = LstmGrads::zeros(p);
    grads.w_ix = cache.x.matmul_transpose_self(&dzi);
    grads.w_ih = cache.h_prev.matmul_transpose_self(&dzi);
    grads.p_ic = peep_grad(&dzi, &cache.c_prev);
    grads.b_i = dzi.sum_rows();
    grads.w_fx = cache.x.matmul_transpose_self(&dzf);
    grads.w_fh = cache.h_prev.matmul_transpose_self(&dzf);
    grads.p_fc = peep_grad(&dzf, &cache.c_prev);
    grads.b_f = dzf.sum_rows();
    grads.w_ox = cache.x.matmul_transpose_self(&dzo);
    grads.w_oh = cache.h_prev.matmul_transpose_self(&dzo);
    grads.p_oc = peep_grad(&dzo, &cache.c);
    grads.b_o = dzo.sum_rows();
    grads.w_gx = cache.x.matmul_transpose_self(&dzg);
    grads.w_gh = cache.h_prev.matmul_transpose_self(&dzg);
    grads.b_g = dzg.sum_rows();

    (grad_x, grad_h_prev, grad_c_prev, grads)
}

/// Linear readout y = h·w_hy + b_y, applied to the final hidden state.
pub fn readout(h: &Tensor, p: &LstmParams) -> Tensor {
    h.matmul(&p.w_hy).add_row_broadcast(&p.b_y)
}

/// Returns (grad_h, grad_w_hy, grad_b_y).
pub fn readout_backward(grad_y: &Tensor, h: &Tensor, p: &LstmParams) -> (Tensor, Tensor, Tensor) {
    let grad_h = grad_y.matmul_transpose_rhs(&p.w_hy);
    let grad_w = h.matmul_transpose_self(grad_y);
    let grad_b = grad_y.sum_rows();
    (grad_h, grad_w, grad_b)
}

/// Caches for a whole unrolled sequence.
pub struct LstmSeqCache {
    pub steps: Vec<LstmCache>,
}

/// Runs the cell over `xs` (one [B,I] tensor per step) from zero initial
/// state. Returns the hidden state at every step.
pub fn lstm_forward_seq(xs: &[Tensor], p: &LstmParams) -> (Vec<Tensor>, LstmSeqCache) {
    let b = xs[0].rows();
    let mut h = Tensor::zeros(&[b, p.hidden_dim]);
    let mut c = Tensor::zeros(&[b, p.hidden_dim]);
    let mut hs = Vec::with_capacity(xs.len());
    let mut steps = Vec::with_capacity(xs.len());
    for x in xs {
        let (h_new, c_new, cache) = lstm_cell(x, &h, &c, p);
        h = h_new;
        c = c_new;
        hs.push(h.clone());
        steps.push(cache);
    }
    (hs, LstmSeqCache { steps })
}

/// Backpropagation through time. `grad_hs[t]` is the upstream gradient on the
/// hidden state at step t (zero tensors where nothing flows in). Returns the
/// per-step input gradients and the summed parameter gradients.
pub fn lstm_backward_seq(
    grad_hs: &[Tensor],
    cache: &LstmSeqCache,
    p: &LstmParams,
) -> (Vec<Tensor>, LstmGrads) {
    let t_len = cache.steps.len();
    assert_eq!(grad_hs.len(), t_len, "one upstream grad per step");
    let b = cache.steps[0].x.rows();
    let mut grads = LstmGrads::zeros(p);
    let mut grad_xs = vec![Tensor::zeros(&[0]); t_len];
    let mut dh_carry = Tensor::zeros(&[b, p.hidden_dim]);
    let mut dc_carry = Tensor::zeros(&[b, p.hidden_dim]);
    for t in (0..t_len).rev() {
        let mut dh = grad_hs[t].clone();
        dh.add_assign(&dh_carry);
        let (dx, dh_prev, dc_prev, step_grads) =
            lstm_cell_backward(&dh, &dc_carry, &cache.steps[t], p);
        grads.add_assign(&step_grads);
        grad_xs[t] = dx;
        dh_carry = dh_prev;
        dc_carry = dc_prev;
    }
    (grad_xs, grads)
}
