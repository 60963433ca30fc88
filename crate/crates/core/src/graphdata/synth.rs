//! Seeded synthetic road network with heterogeneous sampling intervals.
//!
//! Each road carries a periodic profile (mean speed plus a two-harmonic
//! daily sinusoid whose amplitude is damped on weekends) and an AR(1)
//! disturbance simulated on a common fine time grid. The observed signal
//! mixes the road's own base signal with the mean base signal of its 1-hop
//! neighbours, weighted by `coupling`. Each road is then sampled at its own
//! interval and clipped at 0 km/h.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::context::{ContextRow, ContextSeries};
use super::graph::{RoadGraph, RoadSegment, MINUTES_PER_DAY};
use super::{Dataset, SpeedSeries};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub roads: usize,
    /// Probability of each extra edge beyond a random spanning tree.
    pub edge_density: f64,
    /// Candidate observation intervals in minutes.
    pub interval_menu: Vec<u32>,
    pub days: usize,
    /// Weight of the neighbour-mean term in `[0, 1]`.
    pub coupling: f64,
    /// Stationary standard deviation of the disturbance, km/h.
    pub noise: f64,
    /// Correlation time of the disturbance, minutes.
    pub noise_timescale_minutes: f64,
    pub base_speed: f64,
    pub daily_amplitude: f64,
    /// Fractional reduction of the daily amplitude on weekend days.
    pub weekly_amplitude: f64,
    pub road_types: usize,
    pub weather_codes: usize,
    /// Day indices flagged as holidays.
    pub holidays: Vec<usize>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            roads: 10,
            edge_density: 0.15,
            interval_menu: vec![5, 10, 15],
            days: 28,
            coupling: 0.5,
            noise: 4.0,
            noise_timescale_minutes: 60.0,
            base_speed: 40.0,
            daily_amplitude: 10.0,
            weekly_amplitude: 0.4,
            road_types: 4,
            weather_codes: 4,
            holidays: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.roads == 0 {
            return Err(Error::config("roads", "must be >= 1"));
        }
        if self.interval_menu.is_empty() {
            return Err(Error::config("interval_menu", "must not be empty"));
        }
        if let Some(bad) = self
            .interval_menu
            .iter()
            .find(|&&i| i == 0 || MINUTES_PER_DAY % i != 0)
        {
            return Err(Error::config(
                "interval_menu",
                format!("{bad} does not divide {MINUTES_PER_DAY}"),
            ));
        }
        if self.days == 0 {
            return Err(Error::config("days", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::config("coupling", "must lie in [0, 1]"));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::config("noise", "must be >= 0"));
        }
        if !(self.noise_timescale_minutes > 0.0) {
            return Err(Error::config("noise_timescale_minutes", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return Err(Error::config("edge_density", "must lie in [0, 1]"));
        }
        if self.road_types == 0 || self.weather_codes == 0 {
            return Err(Error::config("road_types", "category counts must be >= 1"));
        }
        Ok(())
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct Profile {
    mean: f64,
    amplitude: f64,
    phase_minutes: f64,
}

impl Profile {
    fn at(&self, day: usize, minute_of_day: u32, weekly: f64) -> f64 {
        let x = 2.0 * PI * (minute_of_day as f64 - self.phase_minutes) / MINUTES_PER_DAY as f64;
        let shape = 0.6 * x.cos() + 0.4 * (2.0 * x).cos();
        let damp = if day % 7 >= 5 { 1.0 - weekly } else { 1.0 };
        self.mean - self.amplitude * damp * shape
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Generate a full dataset. Deterministic for a fixed `(config, seed)`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.roads;

    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.gen_range(0..i), i));
    }
    for a in 0..n {
        for b in a + 1..n {
            if !edges.contains(&(a, b)) && rng.gen::<f64>() < config.edge_density {
                edges.push((a, b));
            }
        }
    }

    let nodes: Vec<RoadSegment> = (0..n)
        .map(|id| RoadSegment {
            id,
            length_m: (rng.gen_range(100.0..1000.0f64)).round(),
            road_type: rng.gen_range(0..config.road_types),
            lanes: rng.gen_range(1..=4),
            traffic_lights: rng.gen_range(0..=3),
            interval_minutes: config.interval_menu[rng.gen_range(0..config.interval_menu.len())],
        })
        .collect();
    let graph = RoadGraph::new(nodes, edges)?;

    let profiles: Vec<Profile> = (0..n)
        .map(|_| Profile {
            mean: config.base_speed + rng.gen_range(-5.0..5.0),
            amplitude: config.daily_amplitude * rng.gen_range(0.7..1.3),
            phase_minutes: rng.gen_range(-30.0..30.0),
        })
        .collect();

    let step = config.interval_menu.iter().copied().fold(0, gcd);
    let total_minutes = config.days as u64 * MINUTES_PER_DAY as u64;
    let grid_len = (total_minutes / step as u64) as usize;

    // AR(1) disturbance per road on the fine grid.
    let phi = (-(step as f64) / config.noise_timescale_minutes).exp();
    let innovation = config.noise * (1.0 - phi * phi).sqrt();
    let disturbance: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            if config.noise == 0.0 {
                return vec![0.0; grid_len];
            }
            let mut d = Vec::with_capacity(grid_len);
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut cur = config.noise * z;
            for _ in 0..grid_len {
                d.push(cur);
                let z: f64 = StandardNormal.sample(&mut rng);
                cur = phi * cur + innovation * z;
            }
            d
        })
        .collect();

    let base = |road: usize, g: usize| -> f64 {
        let minute = g as u64 * step as u64;
        let day = (minute / MINUTES_PER_DAY as u64) as usize;
        let mod_minute = (minute % MINUTES_PER_DAY as u64) as u32;
        profiles[road].at(day, mod_minute, config.weekly_amplitude) + disturbance[road][g]
    };

    let series = graph
        .nodes()
        .iter()
        .map(|seg| {
            let per = (seg.interval_minutes / step) as usize;
            let len = config.days * seg.slots_per_day();
            let neigh = graph.neighbors(seg.id);
            let values = (0..len)
                .map(|t| {
                    let g = t * per;
                    let own = base(seg.id, g);
                    let mixed = if neigh.is_empty() || config.coupling == 0.0 {
                        own
                    } else {
                        let m = neigh.iter().map(|&j| base(j, g)).sum::<f64>() / neigh.len() as f64;
                        (1.0 - config.coupling) * own + config.coupling * m
                    };
                    round3(mixed.max(0.0))
                })
                .collect();
            SpeedSeries::new(seg.id, values)
        })
        .collect();

    // City-wide hourly weather as a sticky Markov chain.
    let hours = config.days * 24;
    let mut weather = Vec::with_capacity(hours);
    let mut w = 0u8;
    for _ in 0..hours {
        if rng.gen::<f64>() < 0.1 {
            w = rng.gen_range(0..config.weather_codes) as u8;
        }
        weather.push(w);
    }
    let contexts = graph
        .nodes()
        .iter()
        .map(|seg| {
            let rows = (0..config.days * seg.slots_per_day())
                .map(|t| {
                    let minute = t * seg.interval_minutes as usize;
                    let day = minute / MINUTES_PER_DAY as usize;
                    ContextRow {
                        weather_code: weather[minute / 60],
                        holiday: config.holidays.contains(&day),
                        day_of_week: (day % 7) as u8,
                    }
                })
                .collect();
            ContextSeries { road_id: seg.id, rows }
        })
        .collect();

    Dataset::new(graph, series, contexts)
}
