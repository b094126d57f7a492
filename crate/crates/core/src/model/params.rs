use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numeric::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadIndex {
    pub query: usize,
    pub key: usize,
    pub value: usize,
    pub out: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerIndex {
    pub heads: Vec<HeadIndex>,
    pub ln1_gamma: usize,
    pub ln1_beta: usize,
    pub ff_w_in: usize,
    pub ff_b_in: usize,
    pub ff_w_out: usize,
    pub ff_b_out: usize,
    pub ln2_gamma: usize,
    pub ln2_beta: usize,
}

/// Position of every named tensor inside [`ModelParams::tensors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub token_embedding: usize,
    pub position_embedding: usize,
    pub layers: Vec<LayerIndex>,
    pub unembedding: Option<usize>,
}

enum Init {
    Normal,
    Ones,
    Zeros,
}

fn plan(cfg: &ModelConfig) -> (Layout, Vec<(String, Vec<usize>, Init)>) {
    let d = cfg.d_model;
    let mut specs = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| {
        specs.push((name, shape, init));
        specs.len() - 1
    };
    let token_embedding = push("token_embedding".into(), vec![cfg.vocab_size, d], Init::Normal);
    let position_embedding = push("position_embedding".into(), vec![cfg.max_positions, d], Init::Normal);
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let heads = (0..cfg.n_heads)
            .map(|h| {
                let p = format!("layers.{l}.attn.{h}");
                HeadIndex {
                    query: push(format!("{p}.w_query"), vec![cfg.d_attn, d], Init::Normal),
                    key: push(format!("{p}.w_key"), vec![cfg.d_attn, d], Init::Normal),
                    value: push(format!("{p}.w_value"), vec![cfg.d_attn, d], Init::Normal),
                    out: push(format!("{p}.w_out"), vec![cfg.d_attn, d], Init::Normal),
                }
            })
            .collect();
        layers.push(LayerIndex {
            heads,
            ln1_gamma: push(format!("layers.{l}.ln1.gamma"), vec![d], Init::Ones),
            ln1_beta: push(format!("layers.{l}.ln1.beta"), vec![d], Init::Zeros),
            ff_w_in: push(format!("layers.{l}.ff.w_in"), vec![d, cfg.d_ff], Init::Normal),
            ff_b_in: push(format!("layers.{l}.ff.b_in"), vec![cfg.d_ff], Init::Zeros),
            ff_w_out: push(format!("layers.{l}.ff.w_out"), vec![cfg.d_ff, d], Init::Normal),
            ff_b_out: push(format!("layers.{l}.ff.b_out"), vec![d], Init::Zeros),
            ln2_gamma: push(format!("layers.{l}.ln2.gamma"), vec![d], Init::Ones),
            ln2_beta: push(format!("layers.{l}.ln2.beta"), vec![d], Init::Zeros),
        });
    }
    let unembedding = (!cfg.tie_embeddings)
        .then(|| push("unembedding".into(), vec![d, cfg.vocab_size], Init::Normal));
    (
        Layout {
            token_embedding,
            position_embedding,
            layers,
            unembedding,
        },
        specs,
    )
}

/// All weights of one model, stored in a fixed, config-determined order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    layout: Layout,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// Weights ~ N(0, init_std²), layer-norm gamma = 1, beta and biases = 0.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = plan(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, config.init_std)
            .map_err(|e| Error::Config(format!("init_std: {e}")))?;
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for (name, shape, init) in specs {
            let n: usize = shape.iter().product();
            let data: Vec<T> = match init {
                Init::Normal => (0..n).map(|_| T::from_f64_lossy(normal.sample(&mut rng))).collect(),
                Init::Ones => vec![T::one(); n],
                Init::Zeros => vec![T::zero(); n],
            };
            names.push(name);
            tensors.push(Tensor::new(shape, data)?.with_requires_grad());
        }
        Ok(Self {
            config: config.clone(),
            layout,
            names,
            tensors,
        })
    }

    /// Rebuilds params from named tensors, checking names and shapes against `config`.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let (layout, specs) = plan(config);
        if named.len() != specs.len() {
            return Err(Error::Compatibility(format!(
                "expected {} tensors, found {}",
                specs.len(),
                named.len()
            )));
        }
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for ((name, shape, _), (got_name, mut t)) in specs.into_iter().zip(named) {
            if name != got_name || shape != t.shape() {
                return Err(Error::Compatibility(format!(
                    "expected {name} {shape:?}, found {got_name} {:?}",
                    t.shape()
                )));
            }
            t.set_requires_grad(true);
            names.push(name);
            tensors.push(t);
        }
        Ok(Self {
            config: config.clone(),
            layout,
            names,
            tensors,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            layout: self.layout.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// Global L2 norm of the weights, for diagnostics.
    pub fn l2_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::count_params;

    fn tiny() -> ModelConfig {
        ModelConfig::new(2, 2, 16, 32, 8, 16)
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = ModelParams::<f32>::init(&tiny(), 3).unwrap();
        let b = ModelParams::<f32>::init(&tiny(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_seeds_differ() {
        let a = ModelParams::<f32>::init(&tiny(), 3).unwrap();
        let b = ModelParams::<f32>::init(&tiny(), 4).unwrap();
        assert_ne!(a.tensors()[0].data(), b.tensors()[0].data());
    }

    #[test]
    fn gamma_starts_at_one_and_biases_at_zero() {
        let p = ModelParams::<f64>::init(&tiny(), 0).unwrap();
        for l in &p.layout().layers {
            assert!(p.tensors()[l.ln1_gamma].data().iter().all(|&v| v == 1.0));
            assert!(p.tensors()[l.ln2_gamma].data().iter().all(|&v| v == 1.0));
            assert!(p.tensors()[l.ff_b_in].data().iter().all(|&v| v == 0.0));
            assert!(p.tensors()[l.ln1_beta].data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn analytic_count_matches_materialized_params() {
        for tie in [false, true] {
            let mut cfg = tiny();
            cfg.tie_embeddings = tie;
            let p = ModelParams::<f32>::init(&cfg, 1).unwrap();
            assert_eq!(p.num_params(), count_params(&cfg).total);
        }
    }
}
