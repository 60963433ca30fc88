//! Same-slot Pearson correlations between two roads under the speed, trend
//! and deviation measurements.
//!
//! For a slot `t` of road `r` with `T` slots per day, the same-slot series
//! is `<x(t), x(t - T), .., x(t - d T)>`. The correlation of a road pair at a
//! wall-clock time is the Pearson coefficient of their same-slot series.

mod planted;

use std::io::Write;
use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphdata::{fit_daily_average, ChannelSource, Dataset, RoadChannels};
use crate::hsc::Channel;

pub use planted::{planted_pair, PlantedPairConfig, PlantedRegime};

/// `<values[t], values[t - spd], .., values[t - d * spd]>`.
pub fn same_slot_series(values: &[f64], slots_per_day: usize, t: usize, d: usize) -> Result<Vec<f64>> {
    if t >= values.len() {
        return Err(Error::invalid(format!("slot {t} outside a series of {}", values.len())));
    }
    let reach = d * slots_per_day;
    if reach > t {
        return Err(Error::InsufficientHistory {
            branch: "same-slot",
            t,
            needed: t as i64 - reach as i64,
        });
    }
    Ok((0..=d).map(|k| values[t - k * slots_per_day]).collect())
}

/// Sample Pearson coefficient, or `None` when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::invalid(format!(
            "pearson needs two vectors of equal length >= 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // Spreads at rounding level of the mean count as constant.
    let tiny = |ss: f64, m: f64| ss.sqrt() <= 1e-12 * m.abs().max(1.0) * n.sqrt();
    if tiny(saa, ma) || tiny(sbb, mb) {
        return Ok(None);
    }
    Ok(Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationPoint {
    /// Wall-clock minute of the slot.
    pub minute: u64,
    pub correlation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationSeries {
    pub road_a: usize,
    pub road_b: usize,
    pub measurement: Channel,
    pub window_days: usize,
    pub points: Vec<CorrelationPoint>,
}

fn measurement_values(ds: &Dataset, road: usize, m: Channel) -> Result<Vec<f64>> {
    let seg = ds.segment(road);
    let v = ds.speeds(road);
    let avg = fit_daily_average(v, seg.slots_per_day(), |_| true)?;
    let ch = RoadChannels::new(v.to_vec(), avg)?;
    Ok((0..ch.len())
        .map(|t| match m {
            Channel::Speed => ch.speed(t),
            Channel::Trend => ch.trend(t),
            Channel::Deviation => ch.deviation(t),
        })
        .collect())
}

/// Same-slot correlations of `road_a` and `road_b` at every wall-clock
/// minute in `minutes` that both roads observe and that has `d` days of
/// history. Deviations are taken from daily averages over the full series.
pub fn multifold_correlation(
    ds: &Dataset,
    road_a: usize,
    road_b: usize,
    measurements: &[Channel],
    d: usize,
    minutes: Range<u64>,
) -> Result<Vec<CorrelationSeries>> {
    for r in [road_a, road_b] {
        if r >= ds.len() {
            return Err(Error::invalid(format!("unknown road {r}")));
        }
    }
    if measurements.is_empty() {
        return Err(Error::invalid("no measurements requested"));
    }
    if d == 0 {
        return Err(Error::invalid("window must span at least one earlier day (d >= 1)"));
    }
    let (sa, sb) = (ds.segment(road_a), ds.segment(road_b));
    let (ia, ib) = (sa.interval_minutes as u64, sb.interval_minutes as u64);
    let step = lcm(ia, ib);
    let history = d as u64 * crate::graphdata::MINUTES_PER_DAY as u64;
    let first = minutes.start.max(history).div_ceil(step) * step;
    let end = minutes.end.min(ds.span_minutes());
    let shared: Vec<u64> = (first..end).step_by(step as usize).collect();
    if shared.is_empty() {
        return Err(Error::MissingData(format!(
            "roads {road_a} and {road_b} share no slot with {d} days of history in minutes {}..{}",
            minutes.start, minutes.end
        )));
    }
    measurements
        .iter()
        .map(|&m| {
            let va = measurement_values(ds, road_a, m)?;
            let vb = measurement_values(ds, road_b, m)?;
            let points = shared
                .iter()
                .map(|&minute| {
                    let xa = same_slot_series(&va, sa.slots_per_day(), (minute / ia) as usize, d)?;
                    let xb = same_slot_series(&vb, sb.slots_per_day(), (minute / ib) as usize, d)?;
                    Ok(CorrelationPoint {
                        minute,
                        correlation: pearson(&xa, &xb)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CorrelationSeries {
                road_a,
                road_b,
                measurement: m,
                window_days: d,
                points,
            })
        })
        .collect()
}

fn lcm(a: u64, b: u64) -> u64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Rows `time_slot,measurement,correlation`; undefined values are empty.
pub fn write_correlation_csv(series: &[CorrelationSeries], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_slot", "measurement", "correlation"])?;
    for s in series {
        for p in &s.points {
            let value = p.correlation.map(|c| c.to_string()).unwrap_or_default();
            w.write_record([p.minute.to_string().as_str(), s.measurement.name(), value.as_str()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<correlation>", e))?;
    Ok(())
}

/// For each series, the fraction of time slots where its absolute
/// correlation is the largest among all series (ties within `1e-9` count
/// for every tied series). Slots where any series is undefined are skipped.
pub fn dominance_shares(series: &[CorrelationSeries]) -> Result<Vec<f64>> {
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    let n = first.points.len();
    if series.iter().any(|s| s.points.len() != n) {
        return Err(Error::invalid("correlation series cover different slots"));
    }
    let mut wins = vec![0usize; series.len()];
    let mut counted = 0usize;
    for i in 0..n {
        let vals: Option<Vec<f64>> = series.iter().map(|s| s.points[i].correlation.map(f64::abs)).collect();
        let Some(vals) = vals else { continue };
        counted += 1;
        let best = vals.iter().copied().fold(f64::MIN, f64::max);
        for (w, v) in wins.iter_mut().zip(&vals) {
            if *v >= best - 1e-9 {
                *w += 1;
            }
        }
    }
    if counted == 0 {
        return Err(Error::MissingData("no slot where every correlation is defined".into()));
    }
    Ok(wins.into_iter().map(|w| w as f64 / counted as f64).collect())
}
