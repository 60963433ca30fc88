//! Heterogeneous spatial correlation model for one measurement channel.
//!
//! The target's window and the windows of every road within `hops` hops are
//! embedded into length-`c` vectors, the kernel GCN turns the neighbourhood
//! into one feature per hop, one LSTM reads the hop features in hop order,
//! a second LSTM reads the target's raw window, and a FNN head maps the two
//! summaries to the channel prediction.

mod embed;
mod gcn;

pub use embed::{embed_series, nearest_copy, nearest_sources, raw_positions, EmbeddedVector};
pub use gcn::{gcn_aggregate, Gcn, GcnParams};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamBuilder, Session, Shape, Var};
use crate::error::{Error, Result};
use crate::nn::{Activation, Cpa, Fnn, Lstm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Speed,
    Trend,
    Deviation,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Speed, Channel::Trend, Channel::Deviation];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Speed => "speed",
            Channel::Trend => "trend",
            Channel::Deviation => "deviation",
        }
    }
}

/// How unobserved embedding slots are filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    /// Learnable Chebyshev approximation.
    Cpa,
    /// Copy the observation closest in time; no parameters.
    Nearest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HscConfig {
    pub c: usize,
    pub hops: usize,
    pub filters: usize,
    pub k_em: usize,
    pub k_gcn: usize,
    pub hidden: usize,
    pub lstm_layers: usize,
    pub output: usize,
    pub dropout: f64,
    pub embedding: EmbeddingMode,
}

/// Window of one neighbour at 0-based hop distance `hop`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighbourWindow {
    pub hop: usize,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HscInput {
    /// Target channel values, oldest first.
    pub target: Vec<f64>,
    pub neighbours: Vec<NeighbourWindow>,
}

#[derive(Clone, Copy, Debug)]
pub struct HscOutput {
    /// `output x 1`
    pub output: Var,
    /// `hops x filters`
    pub hop_features: Var,
    pub h_self: Var,
    pub h_neigh: Var,
}

#[derive(Clone, Debug)]
pub struct Hsc {
    pub cpa: Option<Cpa>,
    pub gcn: Gcn,
    pub lstm_self: Lstm,
    pub lstm_neigh: Lstm,
    pub head: Fnn,
    pub config: HscConfig,
}

impl Hsc {
    pub fn new<R: Rng>(b: &mut ParamBuilder<'_, R>, config: &HscConfig) -> Result<Self> {
        let cpa = match config.embedding {
            EmbeddingMode::Cpa => Some(b.scope("cpa", |b| Cpa::new(b, config.k_em))?),
            EmbeddingMode::Nearest => None,
        };
        let gcn = b.scope("gcn", |b| Gcn::new(b, config.c, config.filters, config.k_gcn, config.hops))?;
        let lstm_self = b.scope("lstm_self", |b| Lstm::new(b, 1, config.hidden, config.lstm_layers))?;
        let lstm_neigh = b.scope("lstm_neigh", |b| {
            Lstm::new(b, config.filters, config.hidden, config.lstm_layers)
        })?;
        let head = b.scope("head", |b| {
            Fnn::new(
                b,
                &[2 * config.hidden, config.hidden, config.output],
                Activation::Sigmoid,
                Activation::Identity,
                config.dropout,
            )
        })?;
        Ok(Hsc {
            cpa,
            gcn,
            lstm_self,
            lstm_neigh,
            head,
            config: config.clone(),
        })
    }

    /// Embeds each window into one column of a `c x n` matrix.
    fn embed_columns(&self, s: &mut Session<'_>, windows: &[&[f64]], fill: Option<Var>) -> Result<Var> {
        let c = self.config.c;
        let n = windows.len();
        let mut raw = vec![0.0; c * n];
        let mut hole = vec![0.0; c * n];
        for (col, w) in windows.iter().enumerate() {
            match fill {
                Some(_) => {
                    let pos = raw_positions(w.len(), c)?;
                    let mut is_raw = vec![false; c];
                    for (&p, &v) in pos.iter().zip(w.iter()) {
                        raw[p * n + col] = v;
                        is_raw[p] = true;
                    }
                    for (j, r) in is_raw.into_iter().enumerate() {
                        if !r {
                            hole[j * n + col] = 1.0;
                        }
                    }
                }
                None => {
                    for (j, v) in nearest_copy(w, c)?.into_iter().enumerate() {
                        raw[j * n + col] = v;
                    }
                }
            }
        }
        let raw = s.constant(Shape::new(c, n), raw)?;
        let Some(fill) = fill else {
            return Ok(raw);
        };
        let ones = s.constant(Shape::new(1, n), vec![1.0; n])?;
        let tiled = s.matmul(fill, ones)?;
        let hole = s.constant(Shape::new(c, n), hole)?;
        let filled = s.mul(tiled, hole)?;
        s.add(raw, filled)
    }

    /// Differentiable embedding of a single window (`c x 1`).
    pub fn embed(&self, s: &mut Session<'_>, window: &[f64]) -> Result<Var> {
        let fill = match &self.cpa {
            Some(cpa) => Some(cpa.fill(s, self.config.c)?),
            None => None,
        };
        self.embed_columns(s, &[window], fill)
    }

    pub fn forward(&self, s: &mut Session<'_>, input: &HscInput) -> Result<HscOutput> {
        if input.target.is_empty() {
            return Err(Error::invalid("HSC target window is empty"));
        }
        let fill = match &self.cpa {
            Some(cpa) => Some(cpa.fill(s, self.config.c)?),
            None => None,
        };
        let target = self.embed_columns(s, &[&input.target], fill)?;
        let neighbours = if input.neighbours.is_empty() {
            None
        } else {
            let windows: Vec<&[f64]> = input.neighbours.iter().map(|n| n.values.as_slice()).collect();
            Some(self.embed_columns(s, &windows, fill)?)
        };
        let hop_of: Vec<usize> = input.neighbours.iter().map(|n| n.hop).collect();
        let hop_features = self.gcn.forward(s, target, neighbours, &hop_of)?;

        let filters = self.config.filters;
        let mut hop_seq = Vec::with_capacity(self.config.hops);
        for k in 0..self.config.hops {
            let row = s.slice_rows(hop_features, k, k + 1)?;
            hop_seq.push(s.reshape(row, Shape::col(filters))?);
        }
        let h_neigh = self.lstm_neigh.sequence(s, &hop_seq)?;

        let self_seq: Vec<Var> = input.target.iter().map(|&v| s.scalar_const(v)).collect();
        let h_self = self.lstm_self.sequence(s, &self_seq)?;

        let joined = s.concat_rows(&[h_neigh, h_self])?;
        let output = self.head.forward(s, joined)?;
        Ok(HscOutput {
            output,
            hop_features,
            h_self,
            h_neigh,
        })
    }
}
