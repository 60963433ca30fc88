//! Speed series and the channels derived from it: changing trend,
//! deviation from the daily average, and the daily average itself.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedSeries {
    pub road_id: usize,
    /// Minutes after midnight of day 0 for slot 0.
    pub start_minute: u64,
    /// km/h, one value per observation interval.
    pub values: Vec<f64>,
}

impl SpeedSeries {
    pub fn new(road_id: usize, values: Vec<f64>) -> Self {
        SpeedSeries {
            road_id,
            start_minute: 0,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `out[t-1] = values[t] - values[t-1]`.
pub fn compute_trend(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::invalid(format!(
            "trend needs at least 2 values, got {}",
            values.len()
        )));
    }
    Ok(values.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Mean over whole days of the value at each daily slot.
pub fn compute_daily_average(values: &[f64], slots_per_day: usize) -> Result<Vec<f64>> {
    if slots_per_day == 0 {
        return Err(Error::invalid("slots per day must be positive"));
    }
    if values.is_empty() || values.len() % slots_per_day != 0 {
        return Err(Error::invalid(format!(
            "series of length {} is not a positive multiple of {slots_per_day} slots per day",
            values.len()
        )));
    }
    let days = values.len() / slots_per_day;
    let mut avg = vec![0.0; slots_per_day];
    for day in values.chunks(slots_per_day) {
        for (a, v) in avg.iter_mut().zip(day) {
            *a += v;
        }
    }
    avg.iter_mut().for_each(|a| *a /= days as f64);
    Ok(avg)
}

/// Per-slot mean over the indices accepted by `include`. Slots with no
/// accepted value fall back to the mean of all accepted values.
pub fn fit_daily_average(
    values: &[f64],
    slots_per_day: usize,
    include: impl Fn(usize) -> bool,
) -> Result<Vec<f64>> {
    if slots_per_day == 0 {
        return Err(Error::invalid("slots per day must be positive"));
    }
    let mut sum = vec![0.0; slots_per_day];
    let mut count = vec![0usize; slots_per_day];
    let (mut total, mut n) = (0.0, 0usize);
    for (t, &v) in values.iter().enumerate() {
        if include(t) {
            sum[t % slots_per_day] += v;
            count[t % slots_per_day] += 1;
            total += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::MissingData("no values available to fit daily averages".into()));
    }
    let overall = total / n as f64;
    Ok(sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { overall } else { s / c as f64 })
        .collect())
}

/// `out[t] = values[t] - daily_average[t mod T_d]`.
pub fn compute_deviation(values: &[f64], daily_average: &[f64]) -> Result<Vec<f64>> {
    if daily_average.is_empty() {
        return Err(Error::invalid("daily average must have at least one slot"));
    }
    let d = daily_average.len();
    Ok(values
        .iter()
        .enumerate()
        .map(|(t, v)| v - daily_average[t % d])
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedChannels {
    pub trend: Vec<f64>,
    pub deviation: Vec<f64>,
    pub daily_average: Vec<f64>,
}

impl DerivedChannels {
    pub fn derive(values: &[f64], daily_average: Vec<f64>) -> Result<Self> {
        Ok(DerivedChannels {
            trend: compute_trend(values)?,
            deviation: compute_deviation(values, &daily_average)?,
            daily_average,
        })
    }
}

/// Read access to one road's channels by slot index.
///
/// `trend(t)` is `speed(t) - speed(t-1)`, taken as 0 at `t = 0`.
pub trait ChannelSource {
    fn len(&self) -> usize;
    fn slots_per_day(&self) -> usize;
    fn speed(&self, t: usize) -> f64;
    fn trend(&self, t: usize) -> f64;
    fn deviation(&self, t: usize) -> f64;
    fn average(&self, t: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Channels of one road held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadChannels {
    pub speed: Vec<f64>,
    pub daily_average: Vec<f64>,
}

impl RoadChannels {
    pub fn new(speed: Vec<f64>, daily_average: Vec<f64>) -> Result<Self> {
        if daily_average.is_empty() {
            return Err(Error::invalid("daily average must have at least one slot"));
        }
        Ok(RoadChannels { speed, daily_average })
    }
}

impl ChannelSource for RoadChannels {
    fn len(&self) -> usize {
        self.speed.len()
    }

    fn slots_per_day(&self) -> usize {
        self.daily_average.len()
    }

    fn speed(&self, t: usize) -> f64 {
        self.speed[t]
    }

    fn trend(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.speed[t] - self.speed[t - 1]
        }
    }

    fn deviation(&self, t: usize) -> f64 {
        self.speed[t] - self.average(t)
    }

    fn average(&self, t: usize) -> f64 {
        self.daily_average[t % self.daily_average.len()]
    }
}
