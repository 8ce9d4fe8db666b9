use crate::diff::{Real, Tensor};
use crate::nn::{ParamId, ParamStore};
use crate::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Bias-corrected Adam over the trainable entries of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub lr: f64,
    pub step: u64,
    /// First and second moments, indexed like the store; `None` for state entries.
    pub moments: Vec<Option<(Tensor<T>, Tensor<T>)>>,
}

impl<T: Real> Adam<T> {
    pub fn new(store: &ParamStore<T>, lr: f64) -> Self {
        let moments = store
            .ids()
            .map(|id| {
                store.is_trainable(id).then(|| {
                    let shape = store.value(id).shape();
                    (Tensor::zeros(shape), Tensor::zeros(shape))
                })
            })
            .collect();
        Self { lr, step: 0, moments }
    }

    pub fn cast<U: Real>(&self) -> Adam<U> {
        Adam {
            lr: self.lr,
            step: self.step,
            moments: self
                .moments
                .iter()
                .map(|m| m.as_ref().map(|(a, b)| (a.cast(), b.cast())))
                .collect(),
        }
    }

    pub fn update(&mut self, store: &mut ParamStore<T>, grads: &[(ParamId, Tensor<T>)]) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let (b1, b2) = (T::of(BETA1), T::of(BETA2));
        let (one, eps) = (T::one(), T::of(EPSILON));
        let (step_size, c2) = (T::of(self.lr / c1), T::of(c2));
        for (id, g) in grads {
            let Some((m, v)) = self.moments.get_mut(id.index()).and_then(Option::as_mut) else {
                return Err(Error::Dimension(format!("no optimizer slot for {}", store.name(*id))));
            };
            let p = store.value_mut(*id);
            if g.shape() != p.shape() {
                return Err(Error::Dimension(format!(
                    "gradient shape {:?} for parameter of shape {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let (m, v) = (m.data_mut(), v.data_mut());
            for (k, (x, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = b1 * m[k] + (one - b1) * gk;
                v[k] = b2 * v[k] + (one - b2) * gk * gk;
                *x = *x - step_size * m[k] / ((v[k] / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
