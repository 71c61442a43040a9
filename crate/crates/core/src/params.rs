//! Named parameter and buffer storage, and per-pass binding onto a tape.

use crate::tensor::{RunningStats, Scalar, Tape, Tensor, TensorError, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("duplicate tensor name {0:?}")]
    Collision(String),
    #[error("no tensor named {0:?}")]
    Missing(String),
    #[error("{name}: expected shape {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    /// Trained by the optimizer.
    Param,
    /// State updated during forward passes (batch-norm running statistics).
    Buffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry<T> {
    pub name: String,
    pub kind: EntryKind,
    pub value: Tensor<T>,
}

/// Insertion-ordered collection of named tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<Entry<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn insert(
        &mut self,
        name: &str,
        kind: EntryKind,
        value: Tensor<T>,
    ) -> Result<usize, ParamError> {
        if self.index.contains_key(name) {
            return Err(ParamError::Collision(name.to_string()));
        }
        let id = self.entries.len();
        self.entries.push(Entry {
            name: name.to_string(),
            kind,
            value,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry<T>] {
        &self.entries
    }

    pub fn id(&self, name: &str) -> Result<usize, ParamError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| ParamError::Missing(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>, ParamError> {
        Ok(&self.entries[self.id(name)?].value)
    }

    pub fn entry_mut(&mut self, id: usize) -> &mut Entry<T> {
        &mut self.entries[id]
    }

    /// Overwrites a tensor, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<(), ParamError> {
        let id = self.id(name)?;
        let e = &mut self.entries[id];
        if e.value.shape() != value.shape() {
            return Err(ParamError::Shape {
                name: name.to_string(),
                expected: e.value.shape().to_vec(),
                found: value.shape().to_vec(),
            });
        }
        e.value = value;
        Ok(())
    }

    pub fn param_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.entries.len()).filter(|&i| self.entries[i].kind == EntryKind::Param)
    }

    /// Total trainable scalars.
    pub fn num_params(&self) -> usize {
        self.param_ids().map(|i| self.entries[i].value.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    name: e.name.clone(),
                    kind: e.kind,
                    value: e.value.cast(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Builds a store with deterministic initialization.
pub struct Initializer<'a, T> {
    pub store: &'a mut ParamStore<T>,
    pub rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Initializer<'_, T> {
    /// Uniform in `±sqrt(6 / fan_in)`.
    pub fn kaiming(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
    ) -> Result<(), ParamError> {
        let bound = (6.0 / fan_in as f64).sqrt();
        let rng = &mut *self.rng;
        let t = Tensor::from_fn(shape, |_| T::of(rng.gen_range(-bound..bound)));
        self.store.insert(name, EntryKind::Param, t).map(drop)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], v: f64) -> Result<(), ParamError> {
        self.store
            .insert(name, EntryKind::Param, Tensor::full(shape, T::of(v)))
            .map(drop)
    }

    /// `prefix.{gamma, beta, running_mean, running_var}` for `c` channels.
    pub fn batch_norm(&mut self, prefix: &str, c: usize) -> Result<(), ParamError> {
        self.constant(&format!("{prefix}.gamma"), &[c], 1.0)?;
        self.constant(&format!("{prefix}.beta"), &[c], 0.0)?;
        self.store.insert(
            &format!("{prefix}.running_mean"),
            EntryKind::Buffer,
            Tensor::zeros(&[c]),
        )?;
        self.store.insert(
            &format!("{prefix}.running_var"),
            EntryKind::Buffer,
            Tensor::ones(&[c]),
        )?;
        Ok(())
    }
}

/// One forward pass: parameters bound to tape leaves on first use.
pub struct Session<'s, 't, T: Scalar> {
    store: &'s mut ParamStore<T>,
    pub tape: &'t Tape<T>,
    bound: Vec<Option<Var>>,
    pub train: bool,
    rng: ChaCha8Rng,
}

impl<'s, 't, T: Scalar> Session<'s, 't, T> {
    pub fn new(
        store: &'s mut ParamStore<T>,
        tape: &'t Tape<T>,
        train: bool,
        rng: ChaCha8Rng,
    ) -> Self {
        let n = store.len();
        Self {
            store,
            tape,
            bound: vec![None; n],
            train,
            rng,
        }
    }

    /// Uses `vars[k]` for the k-th parameter instead of copying from the store.
    pub fn with_bound(mut self, vars: &[Var]) -> Self {
        let ids: Vec<usize> = self.store.param_ids().collect();
        assert_eq!(ids.len(), vars.len(), "one var per parameter");
        for (id, &v) in ids.iter().zip(vars) {
            self.bound[*id] = Some(v);
        }
        self
    }

    pub fn param(&mut self, name: &str) -> Result<Var, ParamError> {
        let id = self.store.id(name)?;
        if let Some(v) = self.bound[id] {
            return Ok(v);
        }
        let v = self.tape.leaf(self.store.entries[id].value.clone());
        self.bound[id] = Some(v);
        Ok(v)
    }

    pub fn batch_norm(
        &mut self,
        x: Var,
        prefix: &str,
        channel_axis: usize,
    ) -> Result<Var, ParamError> {
        let gamma = self.param(&format!("{prefix}.gamma"))?;
        let beta = self.param(&format!("{prefix}.beta"))?;
        let mi = self.store.id(&format!("{prefix}.running_mean"))?;
        let vi = self.store.id(&format!("{prefix}.running_var"))?;
        let (lo, hi) = self.store.entries.split_at_mut(mi.max(vi));
        let (mean, var) = if mi < vi {
            (lo[mi].value.data_mut(), hi[0].value.data_mut())
        } else {
            (hi[0].value.data_mut(), lo[vi].value.data_mut())
        };
        Ok(self.tape.batch_norm(
            x,
            gamma,
            beta,
            RunningStats { mean, var },
            channel_axis,
            self.train,
        )?)
    }

    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var, ParamError> {
        Ok(self.tape.dropout(x, p, self.train, &mut self.rng)?)
    }

    /// `(entry id, var)` for every parameter used in this pass.
    pub fn bindings(&self) -> Vec<(usize, Var)> {
        self.bound
            .iter()
            .enumerate()
            .filter(|(i, _)| self.store.entries[*i].kind == EntryKind::Param)
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .collect()
    }
}
