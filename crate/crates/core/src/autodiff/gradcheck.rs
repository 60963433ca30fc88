//! Finite-difference check of parameter gradients.

use super::{ParamStore, Session, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// Parameter name and flat index where the largest error occurred.
    pub worst: Option<(String, usize)>,
    /// Number of scalar entries compared.
    pub checked: usize,
    /// Entries whose analytic gradient was nonzero.
    pub nonzero: usize,
}

/// Compare reverse-mode gradients of the scalar built by `loss` against
/// the fourth-order five-point difference with step `h`, for every parameter entry accepted by
/// `select(name, index)`. `loss` runs in evaluation mode (no dropout).
pub fn check_gradients(
    store: &ParamStore,
    h: f64,
    floor: f64,
    select: impl Fn(&str, usize) -> bool,
    loss: impl Fn(&mut Session<'_>) -> Result<Var>,
) -> Result<GradCheck> {
    let analytic: Vec<Vec<f64>> = {
        let mut s = Session::eval(store);
        let l = loss(&mut s)?;
        s.backward(l)?;
        s.param_grads()
            .into_iter()
            .zip(store.params())
            .map(|(g, p)| g.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.values.len()]))
            .collect()
    };
    let eval = |st: &ParamStore| -> Result<f64> {
        let mut s = Session::eval(st);
        let l = loss(&mut s)?;
        Ok(s.scalar(l))
    };

    let mut work = store.clone();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        nonzero: 0,
    };
    for (pi, p) in store.params().iter().enumerate() {
        for k in 0..p.values.len() {
            if !select(&p.name, k) {
                continue;
            }
            let orig = p.values[k];
            let mut at = |x: f64| -> Result<f64> {
                work.params_mut()[pi].values[k] = x;
                eval(&work)
            };
            let (up2, up, down, down2) = (at(orig + 2.0 * h)?, at(orig + h)?, at(orig - h)?, at(orig - 2.0 * h)?);
            work.params_mut()[pi].values[k] = orig;
            let numeric = (8.0 * (up - down) - (up2 - down2)) / (12.0 * h);
            let a = analytic[pi][k];
            if !(numeric.is_finite() && a.is_finite()) {
                return Err(Error::NonFinite(format!("{}[{k}]", p.name)));
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if a != 0.0 {
                report.nonzero += 1;
            }
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((p.name.clone(), k));
            }
        }
    }
    Ok(report)
}
