use super::channels::ChannelSource;
use crate::error::{Error, Result};

/// Recent-history branch input: the `lr` slots before `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecentWindow {
    pub speed: Vec<f64>,
    pub trend: Vec<f64>,
    pub deviation: Vec<f64>,
    pub average: Vec<f64>,
}

/// Periodic branch input: the same slot on previous days or weeks.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicWindow {
    pub speed: Vec<f64>,
    pub trend: Vec<f64>,
    pub deviation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalInputs {
    pub recent: RecentWindow,
    pub daily: PeriodicWindow,
    pub weekly: PeriodicWindow,
}

impl RecentWindow {
    /// One 4-feature tuple `(speed, trend, deviation, average)` per step.
    pub fn steps(&self) -> Vec<[f64; 4]> {
        (0..self.speed.len())
            .map(|k| [self.speed[k], self.trend[k], self.deviation[k], self.average[k]])
            .collect()
    }
}

impl PeriodicWindow {
    /// One 3-feature tuple `(speed, trend, deviation)` per step.
    pub fn steps(&self) -> Vec<[f64; 3]> {
        (0..self.speed.len())
            .map(|k| [self.speed[k], self.trend[k], self.deviation[k]])
            .collect()
    }
}

/// Indices `t - k * stride` for `k = count..1` (oldest first).
pub fn periodic_indices(branch: &'static str, t: usize, count: usize, stride: usize) -> Result<Vec<usize>> {
    let earliest = t as i64 - (count * stride) as i64;
    if earliest < 0 {
        return Err(Error::InsufficientHistory {
            branch,
            t,
            needed: earliest,
        });
    }
    Ok((1..=count).rev().map(|k| t - k * stride).collect())
}

fn periodic<S: ChannelSource + ?Sized>(src: &S, idx: &[usize]) -> PeriodicWindow {
    PeriodicWindow {
        speed: idx.iter().map(|&i| src.speed(i)).collect(),
        trend: idx.iter().map(|&i| src.trend(i)).collect(),
        deviation: idx.iter().map(|&i| src.deviation(i)).collect(),
    }
}

/// Assemble the recent, daily and weekly inputs for predicting slot `t`.
/// Only indices strictly below `t` are read.
pub fn build_temporal_inputs<S: ChannelSource + ?Sized>(
    src: &S,
    t: usize,
    lr: usize,
    ld: usize,
    lw: usize,
) -> Result<TemporalInputs> {
    if t > src.len() {
        return Err(Error::invalid(format!(
            "prediction slot {t} beyond series length {}",
            src.len()
        )));
    }
    let per_day = src.slots_per_day();
    let recent_idx = periodic_indices("recent", t, lr, 1)?;
    let daily_idx = periodic_indices("daily", t, ld, per_day)?;
    let weekly_idx = periodic_indices("weekly", t, lw, 7 * per_day)?;
    let recent = RecentWindow {
        speed: recent_idx.iter().map(|&i| src.speed(i)).collect(),
        trend: recent_idx.iter().map(|&i| src.trend(i)).collect(),
        deviation: recent_idx.iter().map(|&i| src.deviation(i)).collect(),
        average: recent_idx.iter().map(|&i| src.average(i)).collect(),
    };
    Ok(TemporalInputs {
        recent,
        daily: periodic(src, &daily_idx),
        weekly: periodic(src, &weekly_idx),
    })
}
