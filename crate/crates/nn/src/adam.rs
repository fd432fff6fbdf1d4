//! Adam optimizer with bias correction.

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates per parameter tensor plus the step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub t: u64,
    moments: Vec<(Tensor, Tensor)>,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, param_shapes: &[&[usize]]) -> Self {
        AdamState {
            cfg,
            t: 0,
            moments: param_shapes
                .iter()
                .map(|s| (Tensor::zeros(s), Tensor::zeros(s)))
                .collect(),
        }
    }

    pub fn for_params(cfg: AdamConfig, params: &[&Tensor]) -> Self {
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        Self::new(cfg, &shapes)
    }
}

/// One bias-corrected update over a flat list of parameter tensors.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState) {
    assert_eq!(params.len(), grads.len(), "one gradient per parameter");
    assert_eq!(params.len(), state.moments.len(), "state matches parameters");
    state.t += 1;
    let t = state.t as i32;
    let cfg = state.cfg;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((param, grad), (m, v)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.moments.iter_mut())
    {
        assert_eq!(param.shape(), grad.shape(), "gradient shape matches parameter");
        let pd = param.data_mut();
        let gd = grad.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for k in 0..pd.len() {
            md[k] = cfg.beta1 * md[k] + (1.0 - cfg.beta1) * gd[k];
            vd[k] = cfg.beta2 * vd[k] + (1.0 - cfg.beta2) * gd[k] * gd[k];
            let m_hat = md[k] / bc1;
            let v_hat = vd[k] / bc2;
            pd[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}
