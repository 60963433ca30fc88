//! Unified-length embedding of windows observed at different frequencies.
//!
//! A window of `L` raw values is spread over `c` slots: with
//! `sn = floor((c - L) / (L - 1))` the `m`-th value lands at `m * (sn + 1)`.
//! The remaining slots hold a CPA curve evaluated at `j / c`. A single
//! value (`L = 1`) sits at slot 0.

use crate::error::{Error, Result};
use crate::nn::chebyshev::{to_domain, CpaParams};

/// Slot index of every raw value, in time order.
pub fn raw_positions(len: usize, c: usize) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::invalid("cannot embed an empty window"));
    }
    if len > c {
        return Err(Error::invalid(format!(
            "window of {len} values does not fit an embedding of length {c}"
        )));
    }
    if len == 1 {
        return Ok(vec![0]);
    }
    let sn = (c - len) / (len - 1);
    Ok((0..len).map(|m| m * (sn + 1)).collect())
}

/// Source index used at every slot when copying the value closest in time
/// instead of interpolating: slot `j` of `c` sits at the same relative time
/// as raw value `j * L / c`. Ties go to the earlier value.
pub fn nearest_sources(len: usize, c: usize) -> Result<Vec<usize>> {
    if len == 0 || c == 0 {
        return Err(Error::invalid("nearest copy needs a nonempty window and grid"));
    }
    Ok((0..c)
        .map(|j| {
            let rel = (j * len) as f64 / c as f64;
            ((rel - 0.5).ceil().max(0.0) as usize).min(len - 1)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedVector {
    pub values: Vec<f64>,
    /// `true` where the slot holds a raw observation.
    pub raw: Vec<bool>,
}

impl EmbeddedVector {
    /// Values at the raw slots, in time order.
    pub fn raw_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.raw)
            .filter(|(_, &r)| r)
            .map(|(&v, _)| v)
            .collect()
    }
}

/// Plain-valued embedding of `x` into `c` slots.
pub fn embed_series(x: &[f64], c: usize, cpa: &CpaParams) -> Result<EmbeddedVector> {
    let pos = raw_positions(x.len(), c)?;
    let mut raw = vec![false; c];
    let mut values: Vec<f64> = (0..c).map(|j| cpa.eval(to_domain(j as f64 / c as f64))).collect();
    for (&p, &v) in pos.iter().zip(x) {
        values[p] = v;
        raw[p] = true;
    }
    Ok(EmbeddedVector { values, raw })
}

/// Plain-valued nearest-in-time copy of `x` onto `c` slots.
pub fn nearest_copy(x: &[f64], c: usize) -> Result<Vec<f64>> {
    if x.len() > c {
        return Err(Error::invalid(format!(
            "window of {} values does not fit an embedding of length {c}",
            x.len()
        )));
    }
    Ok(nearest_sources(x.len(), c)?.into_iter().map(|m| x[m]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placement_examples() {
        assert_eq!(raw_positions(6, 12).unwrap(), vec![0, 2, 4, 6, 8, 10]);
        assert_eq!(raw_positions(12, 12).unwrap(), (0..12).collect::<Vec<_>>());
        assert_eq!(raw_positions(3, 12).unwrap(), vec![0, 5, 10]);
        assert_eq!(raw_positions(1, 12).unwrap(), vec![0]);
        assert!(raw_positions(13, 12).is_err());
        assert!(raw_positions(0, 12).is_err());
    }

    #[test]
    fn three_values_leave_nine_filled_slots() {
        let cpa = CpaParams::new(vec![0.3, -0.2, 0.1, 0.0, 0.05]).unwrap();
        let e = embed_series(&[7.0, 8.0, 9.0], 12, &cpa).unwrap();
        assert_eq!(e.raw.iter().filter(|r| !**r).count(), 9);
        assert_eq!(e.raw_values(), vec![7.0, 8.0, 9.0]);
        // filled slot 1 holds the CPA at j/c = 1/12
        assert_eq!(e.values[1], cpa.eval(2.0 / 12.0 - 1.0));
    }

    #[test]
    fn full_resolution_is_identity() {
        let cpa = CpaParams::new(vec![1.0; 5]).unwrap();
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 1.5).collect();
        let e = embed_series(&x, 12, &cpa).unwrap();
        assert_eq!(e.values, x);
        assert!(e.raw.iter().all(|&r| r));
    }

    #[test]
    fn five_and_ten_minute_roads_stay_time_consistent() {
        // One hour window at c = 12: the 10-minute road's observation at
        // minute 10k sits within sn + 1 slots of the 5-minute road's one.
        let fine = raw_positions(12, 12).unwrap();
        let coarse = raw_positions(6, 12).unwrap();
        let sn = (12 - 6) / (6 - 1);
        for (m, &p) in coarse.iter().enumerate() {
            let q = fine[2 * m];
            assert!(p.abs_diff(q) <= sn + 1, "m={m}: {p} vs {q}");
        }
    }

    #[test]
    fn nearest_copy_picks_closest_time() {
        assert_eq!(nearest_copy(&[1.0, 2.0, 3.0], 6).unwrap(), vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert_eq!(nearest_copy(&[4.0], 3).unwrap(), vec![4.0; 3]);
        let x: Vec<f64> = (0..12).map(f64::from).collect();
        assert_eq!(nearest_copy(&x, 12).unwrap(), x);
    }
}
