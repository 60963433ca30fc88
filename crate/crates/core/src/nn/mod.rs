//! Differentiable layers built on the autodiff tape.

mod attention;
pub mod chebyshev;
mod fnn;
mod lstm;

pub use attention::{Attention, Fused};
pub use chebyshev::{Cpa, CpaParams};
pub use fnn::{Activation, Dense, Fnn};
pub use lstm::{Lstm, LstmLayer, LstmParams};
