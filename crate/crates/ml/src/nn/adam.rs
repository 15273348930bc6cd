use super::tensor::{Param, Scalar};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay: `p −= lr·decay·p` before the moment update.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }
}

/// One Adam update at step `t` (1-based) with bias correction.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    t: u64,
    cfg: &AdamConfig,
) -> Result<(), NnError> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(NnError::Shape(format!(
            "adam: {} params, {} grads, state {}/{}",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if t == 0 {
        return Err(NnError::InvalidConfig("adam step counter starts at 1".into()));
    }
    let lr = T::lit(cfg.lr);
    let decay = T::lit(cfg.lr * cfg.weight_decay);
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let c1 = T::lit(1.0 - cfg.beta1.powf(t as f64));
    let c2 = T::lit(1.0 - cfg.beta2.powf(t as f64));
    let eps = T::lit(cfg.eps);
    let one = T::one();
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *p = *p - decay * *p;
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam over a fixed, ordered list of parameters.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub states: Vec<AdamState<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &[&mut Param<T>]) -> Self {
        Self {
            config,
            t: 0,
            states: params.iter().map(|p| AdamState::zeros(p.len())).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<(), NnError> {
        if params.len() != self.states.len() {
            return Err(NnError::Shape(format!(
                "optimizer tracks {} tensors, got {}",
                self.states.len(),
                params.len()
            )));
        }
        self.t += 1;
        for (p, s) in params.iter_mut().zip(&mut self.states) {
            let Param { value, grad } = &mut **p;
            adam_step(value, grad, s, self.t, &self.config)?;
        }
        Ok(())
    }
}
