use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::ContextEncoding;
use crate::hsc::{Channel, EmbeddingMode, HscConfig};

/// Branch switches. Every set flag removes the branch and its parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Drop the trend spatial channel.
    pub ntr: bool,
    /// Drop the deviation spatial channel.
    pub nde: bool,
    /// Drop the daily temporal branch.
    pub nd: bool,
    /// Drop the weekly temporal branch.
    pub nw: bool,
    /// Replace the CPA embedding by nearest-in-time copying.
    pub nemb: bool,
}

impl Ablation {
    pub const FLAGS: [&'static str; 7] = ["ntr", "nde", "ntr-nde", "nd", "nw", "nd-nw", "nemb"];

    /// Set the switches named by one flag.
    pub fn apply(&mut self, flag: &str) -> Result<()> {
        match flag {
            "ntr" => self.ntr = true,
            "nde" => self.nde = true,
            "ntr-nde" => {
                self.ntr = true;
                self.nde = true;
            }
            "nd" => self.nd = true,
            "nw" => self.nw = true,
            "nd-nw" => {
                self.nd = true;
                self.nw = true;
            }
            "nemb" => self.nemb = true,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown ablation flag `{other}` (valid: {})",
                    Self::FLAGS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub fn channel_enabled(&self, ch: Channel) -> bool {
        match ch {
            Channel::Speed => true,
            Channel::Trend => !self.ntr,
            Channel::Deviation => !self.nde,
        }
    }

    pub fn is_full(&self) -> bool {
        *self == Ablation::default()
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut a = Ablation::default();
        a.apply(s)?;
        Ok(a)
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.ntr, "ntr"),
            (self.nde, "nde"),
            (self.nd, "nd"),
            (self.nw, "nw"),
            (self.nemb, "nemb"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        if names.is_empty() {
            write!(f, "full")
        } else {
            write!(f, "{}", names.join("-"))
        }
    }
}

/// Architecture and loss settings of the full model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Number of future slots predicted per query.
    pub horizon: usize,
    pub lr: usize,
    pub ld: usize,
    pub lw: usize,
    /// Length of the spatial input window in wall-clock minutes.
    pub window_minutes: u32,
    /// Unified embedding length.
    pub c: usize,
    pub hops: usize,
    pub filters: usize,
    pub k_em: usize,
    pub k_gcn: usize,
    pub hidden: usize,
    pub lstm_layers: usize,
    pub fusion_width: usize,
    pub dropout: f64,
    pub alpha: f64,
    pub beta: f64,
    pub ablation: Ablation,
    pub road_types: usize,
    pub weather_codes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            horizon: 3,
            lr: 6,
            ld: 4,
            lw: 2,
            window_minutes: 60,
            c: 12,
            hops: 2,
            filters: 8,
            k_em: 5,
            k_gcn: 5,
            hidden: 36,
            lstm_layers: 3,
            fusion_width: 36,
            dropout: 0.5,
            alpha: 0.2,
            beta: 0.2,
            ablation: Ablation::default(),
            road_types: 4,
            weather_codes: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("horizon", self.horizon),
            ("lr", self.lr),
            ("c", self.c),
            ("hops", self.hops),
            ("filters", self.filters),
            ("k_em", self.k_em),
            ("k_gcn", self.k_gcn),
            ("hidden", self.hidden),
            ("lstm_layers", self.lstm_layers),
            ("fusion_width", self.fusion_width),
            ("road_types", self.road_types),
            ("weather_codes", self.weather_codes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        if !self.ablation.nd && self.ld == 0 {
            return Err(Error::config("ld", "must be >= 1 unless the daily branch is ablated"));
        }
        if !self.ablation.nw && self.lw == 0 {
            return Err(Error::config("lw", "must be >= 1 unless the weekly branch is ablated"));
        }
        if self.window_minutes == 0 {
            return Err(Error::config("window_minutes", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must lie in [0, 1)"));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::config("alpha", "loss weights must be >= 0"));
        }
        Ok(())
    }

    pub fn hsc(&self) -> HscConfig {
        HscConfig {
            c: self.c,
            hops: self.hops,
            filters: self.filters,
            k_em: self.k_em,
            k_gcn: self.k_gcn,
            hidden: self.hidden,
            lstm_layers: self.lstm_layers,
            output: self.horizon,
            dropout: self.dropout,
            embedding: if self.ablation.nemb {
                EmbeddingMode::Nearest
            } else {
                EmbeddingMode::Cpa
            },
        }
    }

    pub fn context_encoding(&self) -> ContextEncoding {
        ContextEncoding {
            road_types: self.road_types,
            weather_codes: self.weather_codes,
        }
    }

    /// Window length in slots for a road observed every `interval` minutes.
    pub fn window_len(&self, interval: u32) -> Result<usize> {
        if interval == 0 || self.window_minutes % interval != 0 {
            return Err(Error::config(
                "window_minutes",
                format!("{} is not a multiple of the {interval}-minute interval", self.window_minutes),
            ));
        }
        let len = (self.window_minutes / interval) as usize;
        if len > self.c {
            return Err(Error::config(
                "c",
                format!("{len} observations per window exceed the embedding length {}", self.c),
            ));
        }
        Ok(len)
    }
}
