//! Per-road z-score scaling and frozen daily averages.
//!
//! Speeds become `(v - mean) / std`. Trend and deviation are formed from
//! raw speeds and divided by the same `std` without a mean shift, which is
//! what differencing the scaled speeds produces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::{fit_daily_average, Dataset};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadScale {
    pub mean: f64,
    pub std: f64,
}

impl RoadScale {
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub roads: Vec<RoadScale>,
    /// Per-road daily averages in km/h, one entry per daily slot.
    pub daily_averages: Vec<Vec<f64>>,
}

/// Population mean and standard deviation; a zero spread falls back to 1.
pub fn fit_scale(values: impl IntoIterator<Item = f64>) -> Result<RoadScale> {
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        sum += v;
        sq += v * v;
    }
    if n == 0 {
        return Err(Error::MissingData("no values to fit a scaler".into()));
    }
    let mean = sum / n as f64;
    let var = (sq / n as f64 - mean * mean).max(0.0);
    let std = var.sqrt();
    Ok(RoadScale {
        mean,
        std: if std > 1e-12 { std } else { 1.0 },
    })
}

impl Normalization {
    /// Fit on the `(road, slot)` pairs accepted by `include`.
    pub fn fit(ds: &Dataset, include: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut roads = Vec::with_capacity(ds.len());
        let mut daily_averages = Vec::with_capacity(ds.len());
        for (r, seg) in ds.graph.nodes().iter().enumerate() {
            let v = ds.speeds(r);
            let kept = v.iter().enumerate().filter(|(t, _)| include(r, *t)).map(|(_, &x)| x);
            roads.push(
                fit_scale(kept).map_err(|_| Error::MissingData(format!("road {r}: no training slots to fit on")))?,
            );
            daily_averages.push(fit_daily_average(v, seg.slots_per_day(), |t| include(r, t))?);
        }
        Ok(Normalization { roads, daily_averages })
    }

    pub fn apply(&self, road: usize, v: f64) -> f64 {
        self.roads[road].apply(v)
    }

    pub fn invert(&self, road: usize, z: f64) -> f64 {
        self.roads[road].invert(z)
    }

    /// Scale a difference of speeds (trend or deviation).
    pub fn scale_delta(&self, road: usize, d: f64) -> f64 {
        d / self.roads[road].std
    }

    pub fn apply_series(&self, road: usize, v: &[f64]) -> Vec<f64> {
        v.iter().map(|&x| self.apply(road, x)).collect()
    }

    pub fn invert_series(&self, road: usize, z: &[f64]) -> Vec<f64> {
        z.iter().map(|&x| self.invert(road, x)).collect()
    }

    /// Daily average of `road` at `slot`, in km/h.
    pub fn average(&self, road: usize, slot: usize) -> f64 {
        let a = &self.daily_averages[road];
        a[slot % a.len()]
    }
}
