use std::collections::HashMap;
use std::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Shape, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

impl Param {
    pub fn shape(&self) -> Shape {
        Shape::new(self.shape[0], self.shape[1])
    }
}

/// Named, ordered collection of learnable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Shape, values: Vec<f64>) -> Result<ParamId> {
        let name = name.into();
        if values.len() != shape.len() {
            return Err(Error::shape(
                "param",
                format!("`{name}` declared {shape} but has {} values", values.len()),
            ));
        }
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter `{name}`")));
        }
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            shape: [shape.rows, shape.cols],
            values,
        });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    /// Overwrite values from a list of serialized params, matched by name.
    pub fn load_values(&mut self, saved: &[Param]) -> Result<()> {
        if saved.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "checkpoint holds {} parameters, model expects {}",
                saved.len(),
                self.params.len()
            )));
        }
        for s in saved {
            let id = self
                .id(&s.name)
                .ok_or_else(|| Error::invalid(format!("unknown parameter `{}`", s.name)))?;
            let p = &mut self.params[id.0];
            if p.shape != s.shape || p.values.len() != s.values.len() {
                return Err(Error::shape(
                    "checkpoint",
                    format!("`{}` is {:?}, checkpoint has {:?}", s.name, p.shape, s.shape),
                ));
            }
            p.values.copy_from_slice(&s.values);
        }
        Ok(())
    }
}

/// Xavier-uniform sample for a `rows x cols` weight (fan_out = rows, fan_in = cols).
pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// Registers parameters under a common name prefix.
pub struct ParamBuilder<'s, R: Rng> {
    store: &'s mut ParamStore,
    rng: &'s mut R,
    prefix: String,
}

impl<'s, R: Rng> ParamBuilder<'s, R> {
    pub fn new(store: &'s mut ParamStore, rng: &'s mut R) -> Self {
        ParamBuilder {
            store,
            rng,
            prefix: String::new(),
        }
    }

    fn full(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    /// Run `f` with `name` appended to the prefix.
    pub fn scope<T>(&mut self, name: &str, f: impl FnOnce(&mut ParamBuilder<'_, R>) -> Result<T>) -> Result<T> {
        let prefix = self.full(name);
        let mut inner = ParamBuilder {
            store: &mut *self.store,
            rng: &mut *self.rng,
            prefix,
        };
        f(&mut inner)
    }

    pub fn weight(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        let values = xavier_uniform(rows, cols, self.rng);
        self.store.insert(self.full(name), Shape::new(rows, cols), values)
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        self.store
            .insert(self.full(name), Shape::new(rows, cols), vec![0.0; rows * cols])
    }
}

/// One forward/backward pass: a tape bound to a parameter store.
pub struct Session<'p> {
    tape: Tape<'p>,
    store: &'p ParamStore,
    bound: Vec<Option<Var>>,
    training: bool,
    rng: ChaCha8Rng,
}

impl<'p> Session<'p> {
    pub fn new(store: &'p ParamStore, training: bool, seed: u64) -> Self {
        Session {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
            training,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn eval(store: &'p ParamStore) -> Self {
        Self::new(store, false, 0)
    }

    pub fn training(&self) -> bool {
        self.training
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    /// Tape node for a parameter; created once per session.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let p = self.store.get(id);
        let v = self
            .tape
            .borrowed_leaf(p.shape(), &p.values, true, &p.name)
            .expect("stored parameter shape is consistent");
        self.bound[id.0] = Some(v);
        v
    }

    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        super::dropout(&mut self.tape, x, rate, self.training, &mut self.rng)
    }

    /// Gradients of every bound parameter, in store order.
    pub fn param_grads(&self) -> Vec<Option<&[f64]>> {
        self.bound
            .iter()
            .map(|b| b.and_then(|v| self.tape.grad(v)))
            .collect()
    }
}

impl<'p> Deref for Session<'p> {
    type Target = Tape<'p>;

    fn deref(&self) -> &Self::Target {
        &self.tape
    }
}

impl<'p> DerefMut for Session<'p> {
    fn deref_mut(&mut self) -> &mut Self::Target {
        &mut self.tape
    }
}

/// Sum of parameter gradients over a mini-batch.
#[derive(Clone, Debug)]
pub struct GradBuffer {
    sums: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn new(store: &ParamStore) -> Self {
        GradBuffer {
            sums: store.params().iter().map(|p| vec![0.0; p.values.len()]).collect(),
        }
    }

    pub fn accumulate(&mut self, session: &Session<'_>) {
        for (sum, g) in self.sums.iter_mut().zip(session.param_grads()) {
            if let Some(g) = g {
                sum.iter_mut().zip(g).for_each(|(s, g)| *s += g);
            }
        }
    }

    pub fn clear(&mut self) {
        self.sums.iter_mut().for_each(|s| s.fill(0.0));
    }

    pub fn grads(&self) -> &[Vec<f64>] {
        &self.sums
    }

    pub fn is_finite(&self) -> bool {
        self.sums.iter().flatten().all(|g| g.is_finite())
    }
}
