//! Minimal reverse-mode automatic differentiation.

mod adam;
mod gradcheck;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{check_gradients, GradCheck};
pub use params::{xavier_uniform, GradBuffer, Param, ParamBuilder, ParamId, ParamStore, Session};
pub use tape::{Shape, Tape, Var};

use rand::Rng;

use crate::error::{Error, Result};

/// Inverted dropout: zero each element with probability `rate` and scale
/// survivors by `1 / (1 - rate)`. Identity outside training.
pub fn dropout(tape: &mut Tape<'_>, x: Var, rate: f64, training: bool, rng: &mut impl Rng) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let shape = tape.shape(x);
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..shape.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mask = tape.constant(shape, mask)?;
    tape.mul(x, mask)
}
