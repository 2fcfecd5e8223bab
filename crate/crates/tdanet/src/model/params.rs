use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::{Scalar, Tensor};

/// Named, ordered collection of learnable tensors. Order is construction
/// order and defines the checkpoint layout; names are unique.
pub struct ParamStore<T: Scalar> {
    entries: Vec<(String, Tensor<T>)>,
    index: HashMap<String, usize>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Construction seed recorded for reproducibility.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn total_params(&self) -> u64 {
        self.entries.iter().map(|(_, t)| t.numel() as u64).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> Vec<Tensor<T>> {
        self.entries.iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn zero_grads(&self) {
        for (_, t) in &self.entries {
            t.zero_grad();
        }
    }

    fn register(&mut self, name: String, tensor: Tensor<T>) -> Tensor<T> {
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name `{name}`"
        );
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor.clone()));
        tensor
    }

    /// Uniform init on `[-bound, bound]`, drawn from the construction stream
    /// in registration order.
    pub fn uniform(&mut self, name: impl Into<String>, shape: &[usize], bound: f64) -> Tensor<T> {
        let n: usize = shape.iter().product();
        let data: Vec<T> = (0..n)
            .map(|_| T::from_f64(self.rng.gen_range(-bound..bound)))
            .collect();
        self.register(name.into(), Tensor::param(data, shape))
    }

    /// Constant-initialized parameter; draws nothing from the stream.
    pub fn constant(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> Tensor<T> {
        let n: usize = shape.iter().product();
        self.register(
            name.into(),
            Tensor::param(vec![T::from_f64(value); n], shape),
        )
    }

    /// Convolution weight `[c_out, c_in_per_group, k]` with the usual
    /// 1/sqrt(fan_in) uniform bound.
    pub fn conv_weight(
        &mut self,
        name: impl Into<String>,
        c_out: usize,
        c_in_per_group: usize,
        k: usize,
    ) -> Tensor<T> {
        let bound = 1.0 / ((c_in_per_group * k) as f64).sqrt();
        self.uniform(name, &[c_out, c_in_per_group, k], bound)
    }

    /// Bias for a convolution or linear map, same bound as its weight.
    pub fn bias(&mut self, name: impl Into<String>, c_out: usize, fan_in: usize) -> Tensor<T> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        self.uniform(name, &[c_out], bound)
    }

    /// Linear weight `[out_d, in_d]`.
    pub fn linear_weight(
        &mut self,
        name: impl Into<String>,
        out_d: usize,
        in_d: usize,
    ) -> Tensor<T> {
        let bound = 1.0 / (in_d as f64).sqrt();
        self.uniform(name, &[out_d, in_d], bound)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registration_order_and_names() {
        let mut store = ParamStore::<f32>::new(3);
        store.uniform("a.weight", &[2, 2], 0.5);
        store.constant("a.gain", &[2, 1], 1.0);
        assert_eq!(store.len(), 2);
        assert_eq!(store.total_params(), 6);
        let names: Vec<&str> = store.iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["a.weight", "a.gain"]);
        assert!(store.get("a.gain").is_some());
        assert!(store.get("missing").is_none());
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_panic() {
        let mut store = ParamStore::<f32>::new(3);
        store.uniform("w", &[1], 0.1);
        store.uniform("w", &[1], 0.1);
    }

    #[test]
    fn same_seed_same_draws() {
        let mut a = ParamStore::<f64>::new(17);
        let mut b = ParamStore::<f64>::new(17);
        let ta = a.uniform("w", &[4, 4], 0.3);
        let tb = b.uniform("w", &[4, 4], 0.3);
        assert_eq!(ta.to_vec(), tb.to_vec());
    }
}
