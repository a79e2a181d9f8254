use crate::autograd::{Gradients, Tensor};
use crate::error::{Error, Result};
use crate::model::{Moments, ParamStore};

/// Adam with bias correction. Moments are kept in f32 so that they
/// round-trip through checkpoints exactly.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Updates applied so far.
    pub t: u64,
    moments: Moments,
}

impl Adam {
    pub fn new(params: &ParamStore<f32>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect::<Vec<_>>()
        };
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            moments: Moments {
                m: zeros(),
                v: zeros(),
            },
        }
    }

    /// Continues from saved moments after `t` updates.
    pub fn restore(
        params: &ParamStore<f32>,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        moments: Moments,
    ) -> Result<Self> {
        let fits = |ts: &[Tensor<f32>]| {
            ts.len() == params.len()
                && ts
                    .iter()
                    .zip(params.iter())
                    .all(|(a, p)| a.shape() == p.value.shape())
        };
        if !fits(&moments.m) || !fits(&moments.v) {
            return Err(Error::config(
                "optimizer moments do not match the model parameters",
            ));
        }
        Ok(Self {
            beta1,
            beta2,
            eps,
            t,
            moments,
        })
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    /// Applies one update. Parameters without a gradient are treated as
    /// having a zero gradient; `grad_scale` multiplies every gradient first.
    pub fn step(
        &mut self,
        params: &mut ParamStore<f32>,
        grads: &Gradients<f32>,
        lr: f64,
        grad_scale: f64,
    ) {
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for id in 0..params.len() {
            let g = grads.param(id).map(Tensor::data);
            let m = self.moments.m[id].data_mut();
            let v = self.moments.v[id].data_mut();
            let p = params.value_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = g.map_or(0.0, |g| g[i] as f64 * grad_scale);
                let mi = b1 * m[i] as f64 + (1.0 - b1) * gi;
                let vi = b2 * v[i] as f64 + (1.0 - b2) * gi * gi;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = (mi / c1) / ((vi / c2).sqrt() + self.eps);
                p[i] = (p[i] as f64 - lr * update) as f32;
            }
        }
    }
}

/// Global L2 norm over all parameter gradients.
pub fn grad_norm(params: &ParamStore<f32>, grads: &Gradients<f32>) -> f64 {
    (0..params.len())
        .filter_map(|id| grads.param(id))
        .flat_map(|g| g.data().iter())
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}
