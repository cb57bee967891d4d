use super::{Gradients, ModelParams, SageError, Weights};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of a flat tensor at step `t >= 1`.
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    hyper: &AdamHyper,
    t: u64,
) -> Result<(), SageError> {
    if grad.len() != param.len() || m.len() != param.len() || v.len() != param.len() {
        return Err(SageError::ShapeMismatch("adam tensor".into()));
    }
    let t = t.max(1) as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    Ok(())
}

/// Adam optimizer state over a whole parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub hyper: AdamHyper,
    pub m: Weights,
    pub v: Weights,
    pub t: u64,
}

impl Adam {
    pub fn new(params: &ModelParams, hyper: AdamHyper) -> Self {
        Adam {
            hyper,
            m: params.weights.zeros_like(),
            v: params.weights.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) -> Result<(), SageError> {
        if let Some(name) = params
            .weights
            .shape_mismatch(grads)
            .or_else(|| params.weights.shape_mismatch(&self.m))
        {
            return Err(SageError::ShapeMismatch(name));
        }
        self.t += 1;
        let grads = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for ((((_, p), (_, g)), (_, m)), (_, v)) in
            params.weights.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs)
        {
            adam_update(p, g, m, v, &self.hyper, self.t)?;
        }
        Ok(())
    }
}
