use rand::Rng;

use crate::autodiff::{ParamBuilder, ParamId, Session, Shape, Var};
use crate::error::{Error, Result};

/// Dot-product attention over component vectors with a learned query.
///
/// Every component (width `input`) is projected by one shared matrix to
/// width `width`; the score of a component is `query . projected`, weights
/// are the softmax of the scores and the output is the weighted sum of the
/// projected components.
#[derive(Clone, Debug)]
pub struct Attention {
    pub projection: ParamId,
    pub query: ParamId,
    pub input: usize,
    pub width: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct Fused {
    /// `width x 1`
    pub output: Var,
    /// `1 x n` probability vector over components.
    pub weights: Var,
}

impl Attention {
    pub fn new<R: Rng>(b: &mut ParamBuilder<'_, R>, input: usize, width: usize) -> Result<Self> {
        Ok(Attention {
            projection: b.weight("proj", width, input)?,
            query: b.weight("query", width, 1)?,
            input,
            width,
        })
    }

    pub fn fuse(&self, s: &mut Session<'_>, components: &[Var]) -> Result<Fused> {
        if components.is_empty() {
            return Err(Error::invalid("attention needs at least one component"));
        }
        for &c in components {
            if s.shape(c) != Shape::col(self.input) {
                return Err(Error::shape(
                    "attention_fuse",
                    format!("component {} but expected {}x1", s.shape(c), self.input),
                ));
            }
        }
        let stacked = s.concat_cols(components)?;
        let proj = s.param(self.projection);
        let projected = s.matmul(proj, stacked)?;
        let q = s.param(self.query);
        let qt = s.transpose(q);
        let scores = s.matmul(qt, projected)?;
        let weights = s.softmax(scores)?;
        let wt = s.transpose(weights);
        let output = s.matmul(projected, wt)?;
        Ok(Fused { output, weights })
    }
}
