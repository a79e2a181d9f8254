use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Float, Tensor, Var};
use crate::error::{Error, Result};

/// A named learnable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Flat, ordered collection of parameters. Layers refer to entries by index.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Float> ParamStore<T> {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn get(&self, id: usize) -> &Param<T> {
        &self.params[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Tensor<T> {
        &mut self.params[id].value
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Total learnable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Graph leaves for one forward pass.
    pub fn vars(&self, trainable: bool) -> Vec<Var<T>> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| Var::param(i, p.value.clone(), trainable))
            .collect()
    }

    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
        }
    }

    /// Replaces every value with the entry of the same name in `other`,
    /// which must have identical names and shapes.
    pub fn assign(&mut self, other: &ParamStore<T>) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::config(format!(
                "expected {} parameter tensors, found {}",
                self.len(),
                other.len()
            )));
        }
        for p in &mut self.params {
            let src = other
                .find(&p.name)
                .map(|i| &other.params[i])
                .ok_or_else(|| Error::config(format!("missing parameter {}", p.name)))?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::config(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    p.name,
                    src.value.shape(),
                    p.value.shape()
                )));
            }
            p.value = src.value.clone();
        }
        Ok(())
    }
}

/// Allocates parameters under a dotted name prefix and initializes them
/// from a seeded stream.
pub struct ParamBuilder<T> {
    params: Vec<Param<T>>,
    scope: Vec<String>,
    rng: ChaCha8Rng,
}

impl<T: Float> ParamBuilder<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            params: Vec::new(),
            scope: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn scoped<R>(&mut self, name: impl Into<String>, f: impl FnOnce(&mut Self) -> R) -> R {
        self.scope.push(name.into());
        let out = f(self);
        self.scope.pop();
        out
    }

    fn full_name(&self, leaf: &str) -> String {
        let mut parts = self.scope.clone();
        parts.push(leaf.to_string());
        parts.join(".")
    }

    fn push(&mut self, leaf: &str, value: Tensor<T>) -> usize {
        let name = self.full_name(leaf);
        debug_assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter {name}"
        );
        self.params.push(Param { name, value });
        self.params.len() - 1
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn kaiming_uniform(&mut self, leaf: &str, shape: &[usize]) -> usize {
        let fan_in: usize = shape[1..].iter().product();
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::of(self.rng.gen_range(-bound..bound)))
            .collect();
        let value = Tensor::from_vec(shape, data).expect("shape matches length");
        self.push(leaf, value)
    }

    /// `base` plus uniform noise in `[-rel/sqrt(fan_in), rel/sqrt(fan_in)]`.
    pub fn perturbed(&mut self, leaf: &str, base: Tensor<T>, rel: f64) -> usize {
        let fan_in: usize = base.shape()[1..].iter().product();
        let bound = rel / (fan_in as f64).sqrt();
        let mut value = base;
        for x in value.data_mut() {
            *x += T::of(self.rng.gen_range(-bound..bound));
        }
        self.push(leaf, value)
    }

    pub fn zeros(&mut self, leaf: &str, shape: &[usize]) -> usize {
        self.push(leaf, Tensor::zeros(shape))
    }

    pub fn finish(self) -> ParamStore<T> {
        ParamStore {
            params: self.params,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_follow_scopes_and_init_is_seeded() {
        let build = |seed| {
            let mut b = ParamBuilder::<f32>::new(seed);
            b.scoped("outer", |b| {
                b.scoped("conv", |b| {
                    b.kaiming_uniform("weight", &[4, 2, 3, 3]);
                    b.zeros("bias", &[4]);
                })
            });
            b.finish()
        };
        let s = build(5);
        assert_eq!(s.get(0).name, "outer.conv.weight");
        assert_eq!(s.get(1).name, "outer.conv.bias");
        assert_eq!(s.scalar_count(), 4 * 2 * 9 + 4);
        assert_eq!(s, build(5));
        assert_ne!(s, build(6));
        let bound = 1.0 / 18f32.sqrt();
        assert!(s.get(0).value.data().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn assign_checks_names_and_shapes() {
        let mut b = ParamBuilder::<f32>::new(0);
        b.zeros("a", &[2]);
        let mut dst = b.finish();
        let mut b = ParamBuilder::<f32>::new(0);
        b.zeros("a", &[3]);
        assert!(matches!(dst.assign(&b.finish()), Err(Error::Config(_))));
        let mut b = ParamBuilder::<f32>::new(0);
        b.zeros("b", &[2]);
        assert!(dst.assign(&b.finish()).is_err());
    }
}
