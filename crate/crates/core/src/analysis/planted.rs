//! Two-road datasets with a known correlation structure.
//!
//! Road `a` is `base + L_k + f * u(k, s)`: a day level `L_k ~ N(0, level_std)`
//! plus within-day fluctuations `u ~ N(0, 1)` scaled by `f`. Across days at a
//! fixed slot, `a`'s level dominates its variance while its slot-to-slot
//! changes come only from the fluctuations. Road `b` is built from the same
//! draws so that either measurement can be made the strongest link.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::{ContextRow, ContextSeries, Dataset, RoadGraph, RoadSegment, SpeedSeries, MINUTES_PER_DAY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantedRegime {
    /// Blocks of `block_slots` slots alternate between a speed-linked block
    /// (`b = a + small noise`) and a trend-linked block (`b` has its own
    /// day level but copies `a`'s fluctuations).
    Alternating,
    /// `b = base + L_k - f * u(k, s)`: same day level, mirrored fluctuations,
    /// so speeds correlate positively while trends anticorrelate.
    MirroredTrend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantedPairConfig {
    pub days: usize,
    pub interval_minutes: u32,
    pub base_speed: f64,
    pub level_std: f64,
    pub fluctuation_std: f64,
    /// Noise added to `b` in speed-linked blocks.
    pub link_noise_std: f64,
    pub block_slots: usize,
    pub regime: PlantedRegime,
}

impl Default for PlantedPairConfig {
    fn default() -> Self {
        PlantedPairConfig {
            days: 30,
            interval_minutes: 15,
            base_speed: 40.0,
            level_std: 5.0,
            fluctuation_std: 1.0,
            link_noise_std: 1.0,
            block_slots: 8,
            regime: PlantedRegime::Alternating,
        }
    }
}

impl PlantedPairConfig {
    /// Whether slot-of-day `s` lies in a speed-linked block.
    pub fn speed_linked(&self, s: usize) -> bool {
        match self.regime {
            PlantedRegime::Alternating => (s / self.block_slots) % 2 == 0,
            PlantedRegime::MirroredTrend => true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.days < 2 {
            return Err(Error::config("days", "need at least 2 days"));
        }
        if self.interval_minutes == 0 || MINUTES_PER_DAY % self.interval_minutes != 0 {
            return Err(Error::config("interval_minutes", "must divide a day"));
        }
        if self.block_slots == 0 {
            return Err(Error::config("block_slots", "must be >= 1"));
        }
        for (name, v) in [
            ("level_std", self.level_std),
            ("fluctuation_std", self.fluctuation_std),
            ("link_noise_std", self.link_noise_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be a finite number >= 0"));
            }
        }
        Ok(())
    }
}

/// Build the pair as roads 0 (`a`) and 1 (`b`), joined by one edge.
pub fn planted_pair(config: &PlantedPairConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let spd = (MINUTES_PER_DAY / config.interval_minutes) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let n = config.days * spd;
    let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..config.days {
        let la = config.level_std * unit.sample(&mut rng);
        let lb = config.level_std * unit.sample(&mut rng);
        for s in 0..spd {
            let u = config.fluctuation_std * unit.sample(&mut rng);
            let e = config.link_noise_std * unit.sample(&mut rng);
            let va = config.base_speed + la + u;
            let vb = match config.regime {
                PlantedRegime::MirroredTrend => config.base_speed + la - u,
                PlantedRegime::Alternating if config.speed_linked(s) => va + e,
                PlantedRegime::Alternating => config.base_speed + lb + u,
            };
            a.push(va.max(0.0));
            b.push(vb.max(0.0));
        }
    }
    let nodes = (0..2)
        .map(|id| RoadSegment {
            id,
            length_m: 500.0,
            road_type: 0,
            lanes: 2,
            traffic_lights: 1,
            interval_minutes: config.interval_minutes,
        })
        .collect();
    let graph = RoadGraph::new(nodes, vec![(0, 1)])?;
    let context = |road_id| ContextSeries {
        road_id,
        rows: (0..n)
            .map(|t| ContextRow {
                weather_code: 0,
                holiday: false,
                day_of_week: ((t / spd) % 7) as u8,
            })
            .collect(),
    };
    Dataset::new(
        graph,
        vec![SpeedSeries::new(0, a), SpeedSeries::new(1, b)],
        vec![context(0), context(1)],
    )
}
