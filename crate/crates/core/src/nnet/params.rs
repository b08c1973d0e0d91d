use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, Real};
use crate::error::{Error, Result};

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    Normal,
    Zeros,
    Ones,
    Const(f64),
}

/// Named flat tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) -> Result<usize> {
        let name = name.into();
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::Shape(format!(
                "parameter {name}: shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if self.index.contains_key(&name) {
            return Err(Error::InvalidConfig(format!("duplicate parameter {name}")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param { name, shape, data });
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.id(name).map(|i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.id(name).map(move |i| &mut self.params[i])
    }

    pub fn at(&self, id: usize) -> &Param<T> {
        &self.params[id]
    }

    pub fn at_mut(&mut self, id: usize) -> &mut Param<T> {
        &mut self.params[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Zero tensors with the same layout, e.g. for gradients or moments.
    pub fn zeros_like(&self) -> Vec<Vec<T>> {
        self.params.iter().map(|p| vec![T::zero(); p.data.len()]).collect()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| U::cast(v.as_f64())).collect(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Ordered parameter declarations for a config: (name, shape, init).
pub(crate) fn declare(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.d_model;
    let mut out: Vec<(String, Vec<usize>, Init)> = Vec::new();
    let lin = |out: &mut Vec<_>, prefix: &str, din: usize, dout: usize| {
        out.push((format!("{prefix}.w"), vec![din, dout], Init::Normal));
        out.push((format!("{prefix}.b"), vec![dout], Init::Zeros));
    };
    lin(&mut out, "preseq", cfg.in_dim, d);
    for l in 0..cfg.n_layers {
        if cfg.dense_variant {
            lin(&mut out, &format!("layer{l}.inproj"), (l + 1) * d, d);
        }
        out.push((format!("layer{l}.ln1.g"), vec![d], Init::Ones));
        out.push((format!("layer{l}.ln1.b"), vec![d], Init::Zeros));
        for p in ["q", "k", "v", "o"] {
            lin(&mut out, &format!("layer{l}.attn.{p}"), d, d);
        }
        out.push((
            format!("layer{l}.attn.sigma"),
            vec![cfg.n_heads],
            Init::Const(cfg.sigma_init),
        ));
        out.push((format!("layer{l}.ln2.g"), vec![d], Init::Ones));
        out.push((format!("layer{l}.ln2.b"), vec![d], Init::Zeros));
        lin(&mut out, &format!("layer{l}.ffn.1"), d, cfg.ffn_dim);
        lin(&mut out, &format!("layer{l}.ffn.2"), cfg.ffn_dim, d);
    }
    for (head, dout) in [
        ("mag0", cfg.out_mag_dim),
        ("mag1", cfg.out_mag_dim),
        ("doa", cfg.n_doa_classes),
    ] {
        lin(&mut out, &format!("head.{head}.1"), d, cfg.head_hidden);
        lin(&mut out, &format!("head.{head}.2"), cfg.head_hidden, dout);
    }
    out
}

/// Parameter count of a config without allocating it.
pub fn parameter_count(cfg: &ModelConfig) -> usize {
    declare(cfg)
        .iter()
        .map(|(_, s, _)| s.iter().product::<usize>())
        .sum()
}

pub(crate) fn init_store<T: Real>(cfg: &ModelConfig, seed: u64, std: f64) -> ParamStore<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("finite std");
    let mut store = ParamStore::new();
    for (name, shape, init) in declare(cfg) {
        let n: usize = shape.iter().product();
        let data: Vec<T> = match init {
            Init::Normal => (0..n).map(|_| T::cast(normal.sample(&mut rng))).collect(),
            Init::Zeros => vec![T::zero(); n],
            Init::Ones => vec![T::one(); n],
            Init::Const(v) => vec![T::cast(v); n],
        };
        store.push(name, shape, data).expect("declarations are consistent");
    }
    store
}
