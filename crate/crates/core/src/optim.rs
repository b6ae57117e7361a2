use crate::error::{Error, Result};
use crate::networks::{Grads, NetworkParams};
use crate::real::Real;

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// Adam moments for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Grads<T>,
    pub v: Grads<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &NetworkParams<T>) -> Self {
        AdamState {
            step: 0,
            m: params.zeros_like_learnable(),
            v: params.zeros_like_learnable(),
        }
    }

    /// One bias-corrected Adam update of every learnable array.
    pub fn update(&mut self, params: &mut NetworkParams<T>, grads: &Grads<T>, cfg: &AdamConfig) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let c1 = T::of(1.0 - cfg.beta1.powi(t));
        let c2 = T::of(1.0 - cfg.beta2.powi(t));
        let lr = T::of(cfg.learning_rate);
        let eps = T::of(ADAM_EPS);
        let one = T::one();
        for (name, p) in params.learnable.iter_mut() {
            let g = grads.get(name).ok_or_else(|| Error::shape(format!("no gradient for {name}")))?;
            let m = self.m.get_mut(name).ok_or_else(|| Error::shape(format!("no moment for {name}")))?;
            let v = self.v.get_mut(name).ok_or_else(|| Error::shape(format!("no moment for {name}")))?;
            if g.shape() != p.shape() {
                return Err(Error::shape(format!("{name}: gradient {:?} vs param {:?}", g.shape(), p.shape())));
            }
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            });
        }
        Ok(())
    }
}
