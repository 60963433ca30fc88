use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamBuilder, ParamId, Session, Shape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

/// Fully connected stack. Dropout is applied after every hidden layer.
#[derive(Clone, Debug)]
pub struct Fnn {
    pub layers: Vec<Dense>,
    pub dropout: f64,
}

impl Fnn {
    /// `widths = [in, h1, .., out]`; hidden layers use `hidden`, the last
    /// layer uses `output`.
    pub fn new<R: Rng>(
        b: &mut ParamBuilder<'_, R>,
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        dropout: f64,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("bad FNN widths {widths:?}")));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                b.scope(&format!("l{i}"), |b| {
                    Ok(Dense {
                        weight: b.weight("w", widths[i + 1], widths[i])?,
                        bias: b.zeros("b", widths[i + 1], 1)?,
                        input: widths[i],
                        output: widths[i + 1],
                        activation: if i + 1 == n { output } else { hidden },
                    })
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Fnn { layers, dropout })
    }

    pub fn input(&self) -> usize {
        self.layers[0].input
    }

    pub fn output(&self) -> usize {
        self.layers.last().expect("nonempty").output
    }

    pub fn forward(&self, s: &mut Session<'_>, x: Var) -> Result<Var> {
        if s.shape(x) != Shape::col(self.input()) {
            return Err(Error::shape(
                "fnn_forward",
                format!("input {} but first layer expects {}x1", s.shape(x), self.input()),
            ));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (w, b) = (s.param(layer.weight), s.param(layer.bias));
            let z = s.matmul(w, h)?;
            let z = s.add(z, b)?;
            h = match layer.activation {
                Activation::Identity => z,
                Activation::Sigmoid => s.sigmoid(z),
            };
            if i < last {
                h = s.dropout(h, self.dropout)?;
            }
        }
        Ok(h)
    }
}
