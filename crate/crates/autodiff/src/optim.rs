use crate::error::{AutodiffError, Result};
use crate::params::ParameterStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Optimizer::Sgd { lr }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => lr,
        }
    }

    pub fn step(&self, store: &mut ParameterStore) -> Result<()> {
        match *self {
            Optimizer::Sgd { lr } => sgd_step(store, lr),
            Optimizer::Adam { lr, beta1, beta2, eps } => adam_step(store, lr, beta1, beta2, eps),
        }
    }
}

fn check_lr(lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(AutodiffError::InvalidLearningRate(lr))
    }
}

/// `p ← p − lr·g` for every trainable parameter.
pub fn sgd_step(store: &mut ParameterStore, lr: f64) -> Result<()> {
    check_lr(lr)?;
    for p in store.params_mut().iter_mut().filter(|p| p.trainable) {
        let grad = p.grad.data().to_vec();
        for (v, g) in p.value.data_mut().iter_mut().zip(grad) {
            *v -= lr * g;
        }
    }
    Ok(())
}

/// Bias-corrected Adam update. The step counter lives in the store so that
/// a restored store continues the same schedule.
pub fn adam_step(store: &mut ParameterStore, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<()> {
    check_lr(lr)?;
    store.adam_steps += 1;
    let t = store.adam_steps as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for p in store.params_mut().iter_mut().filter(|p| p.trainable) {
        let n = p.value.len();
        for i in 0..n {
            let g = p.grad.data()[i];
            let m = beta1 * p.first_moment.data()[i] + (1.0 - beta1) * g;
            let v = beta2 * p.second_moment.data()[i] + (1.0 - beta2) * g * g;
            p.first_moment.data_mut()[i] = m;
            p.second_moment.data_mut()[i] = v;
            p.value.data_mut()[i] -= lr * (m / c1) / ((v / c2).sqrt() + eps);
        }
    }
    Ok(())
}
