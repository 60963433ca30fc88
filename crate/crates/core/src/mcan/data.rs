//! Normalized per-road channels and per-sample input assembly.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::graphdata::{
    build_temporal_inputs, ChannelSource, ContextEncoding, ContextFeatures, ContextSeries, Dataset, RoadChannels,
    RoadGraph, TemporalInputs, MINUTES_PER_DAY,
};
use crate::hsc::{Channel, HscInput, NeighbourWindow};
use crate::trainer::Normalization;

use super::ModelConfig;

/// One prediction query: forecast road `road` from slot `t` onwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sample {
    pub road: usize,
    pub t: usize,
}

/// Everything the model reads for one sample, in normalized units.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleInputs {
    /// Spatial inputs for speed, trend and deviation (in that order);
    /// `None` for ablated channels.
    pub spatial: [Option<HscInput>; 3],
    /// Scaled speed at `t - 1`.
    pub prev_speed: f64,
    /// Scaled daily average at the slot of `t`.
    pub average_at_t: f64,
    pub temporal: TemporalInputs,
    pub context: ContextFeatures,
}

/// Normalized training targets of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTargets {
    /// Scaled speeds at `t .. t + H`.
    pub speed: Vec<f64>,
    /// Scaled trend at `t`.
    pub trend: f64,
    /// Scaled deviation at `t`.
    pub deviation: f64,
}

/// Log of `(road, slot)` speed reads made while assembling inputs.
pub type ReadTrace = RefCell<Vec<(usize, usize)>>;

struct Traced<'a> {
    inner: &'a RoadChannels,
    road: usize,
    trace: Option<&'a ReadTrace>,
}

impl Traced<'_> {
    fn touch(&self, t: usize) {
        if let Some(tr) = self.trace {
            tr.borrow_mut().push((self.road, t));
        }
    }
}

impl ChannelSource for Traced<'_> {
    fn len(&self) -> usize {
        self.inner.len()
    }
    fn slots_per_day(&self) -> usize {
        self.inner.slots_per_day()
    }
    fn speed(&self, t: usize) -> f64 {
        self.touch(t);
        self.inner.speed(t)
    }
    fn trend(&self, t: usize) -> f64 {
        self.touch(t);
        if t > 0 {
            self.touch(t - 1);
        }
        self.inner.trend(t)
    }
    fn deviation(&self, t: usize) -> f64 {
        self.touch(t);
        self.inner.deviation(t)
    }
    fn average(&self, t: usize) -> f64 {
        self.inner.average(t)
    }
}

/// A dataset prepared for one model configuration and normalization.
#[derive(Clone, Debug)]
pub struct ModelData {
    config: ModelConfig,
    graph: RoadGraph,
    raw: Vec<Vec<f64>>,
    channels: Vec<RoadChannels>,
    contexts: Vec<ContextSeries>,
    norm: Normalization,
    hops: Vec<Vec<Vec<usize>>>,
    window: Vec<usize>,
    encoding: ContextEncoding,
    static_features: Vec<Vec<f64>>,
}

impl ModelData {
    pub fn new(ds: &Dataset, norm: &Normalization, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        if norm.roads.len() != ds.len() || norm.daily_averages.len() != ds.len() {
            return Err(Error::invalid(format!(
                "normalization covers {} roads but the dataset has {}",
                norm.roads.len(),
                ds.len()
            )));
        }
        let encoding = config.context_encoding();
        let mut channels = Vec::with_capacity(ds.len());
        let mut window = Vec::with_capacity(ds.len());
        let mut hops = Vec::with_capacity(ds.len());
        let mut static_features = Vec::with_capacity(ds.len());
        for (r, seg) in ds.graph.nodes().iter().enumerate() {
            let avg = &norm.daily_averages[r];
            if avg.len() != seg.slots_per_day() {
                return Err(Error::invalid(format!(
                    "road {r}: {} daily averages for {} slots per day",
                    avg.len(),
                    seg.slots_per_day()
                )));
            }
            let scaled_avg = avg.iter().map(|&a| norm.apply(r, a)).collect();
            channels.push(RoadChannels::new(norm.apply_series(r, ds.speeds(r)), scaled_avg)?);
            window.push(config.window_len(seg.interval_minutes)?);
            hops.push(ds.graph.k_hop_neighbors(r, config.hops)?);
            static_features.push(encoding.static_features(seg)?);
        }
        Ok(ModelData {
            config: config.clone(),
            graph: ds.graph.clone(),
            raw: ds.series.iter().map(|s| s.values.clone()).collect(),
            channels,
            contexts: ds.contexts.clone(),
            norm: norm.clone(),
            hops,
            window,
            encoding,
            static_features,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn roads(&self) -> usize {
        self.graph.len()
    }

    pub fn interval(&self, road: usize) -> u32 {
        self.graph.nodes()[road].interval_minutes
    }

    pub fn series_len(&self, road: usize) -> usize {
        self.raw[road].len()
    }

    /// Smallest `t` with full history for every branch of `road`.
    pub fn first_t(&self, road: usize) -> usize {
        let seg = &self.graph.nodes()[road];
        let c = &self.config;
        [
            c.lr,
            c.ld * seg.slots_per_day(),
            c.lw * seg.slots_per_week(),
            self.window[road],
            1,
        ]
        .into_iter()
        .max()
        .unwrap_or(1)
    }

    /// One past the largest `t` whose whole horizon lies inside the series.
    pub fn end_t(&self, road: usize) -> usize {
        (self.raw[road].len() + 1).saturating_sub(self.config.horizon)
    }

    pub fn is_eligible(&self, s: Sample) -> bool {
        s.road < self.roads() && s.t >= self.first_t(s.road) && s.t < self.end_t(s.road)
    }

    /// Wall-clock minute of the first predicted slot.
    pub fn minute(&self, s: Sample) -> u64 {
        s.t as u64 * self.interval(s.road) as u64
    }

    /// All eligible samples ordered by wall-clock time, then road.
    pub fn samples(&self) -> Vec<Sample> {
        let mut out: Vec<Sample> = (0..self.roads())
            .flat_map(|road| (self.first_t(road)..self.end_t(road)).map(move |t| Sample { road, t }))
            .collect();
        out.sort_by_key(|s| (self.minute(*s), s.road));
        out
    }

    /// Wall-clock minutes `[start, end)` whose speeds a sample may read as
    /// inputs or targets.
    pub fn footprint(&self, s: Sample) -> (u64, u64) {
        let seg = &self.graph.nodes()[s.road];
        let iv = seg.interval_minutes as u64;
        let c = &self.config;
        let day = MINUTES_PER_DAY as u64;
        let tau = self.minute(s);
        let back = [
            (c.lr as u64 + 1) * iv,
            c.ld as u64 * day + iv,
            c.lw as u64 * 7 * day + iv,
            self.max_neighbour_reach(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        (tau.saturating_sub(back), tau + c.horizon as u64 * iv)
    }

    /// Longest look-back of a spatial window, including the extra slot read
    /// by the trend channel.
    fn max_neighbour_reach(&self) -> u64 {
        let coarsest = self
            .graph
            .nodes()
            .iter()
            .map(|n| n.interval_minutes as u64)
            .max()
            .unwrap_or(0);
        self.config.window_minutes as u64 + coarsest
    }

    fn channel_value(src: &Traced<'_>, ch: Channel, s: usize) -> f64 {
        match ch {
            Channel::Speed => src.speed(s),
            Channel::Trend => src.trend(s),
            Channel::Deviation => src.deviation(s),
        }
    }

    /// Slots of road `j` inside the spatial window ending before minute `tau`.
    fn aligned_window(&self, j: usize, tau: u64) -> Result<std::ops::Range<usize>> {
        let iv = self.interval(j) as u64;
        let end = tau.div_ceil(iv) as usize;
        let len = self.window[j];
        if end < len || end > self.raw[j].len() {
            return Err(Error::InsufficientHistory {
                branch: "spatial",
                t: end,
                needed: end as i64 - len as i64,
            });
        }
        Ok(end - len..end)
    }

    pub fn inputs(&self, s: Sample) -> Result<SampleInputs> {
        self.inputs_traced(s, None)
    }

    /// Like [`ModelData::inputs`], logging every speed slot read.
    pub fn inputs_traced(&self, s: Sample, trace: Option<&ReadTrace>) -> Result<SampleInputs> {
        if !self.is_eligible(s) {
            return Err(Error::InsufficientHistory {
                branch: "sample",
                t: s.t,
                needed: self.first_t(s.road.min(self.roads().saturating_sub(1))) as i64,
            });
        }
        let c = &self.config;
        let src = |road: usize| Traced {
            inner: &self.channels[road],
            road,
            trace,
        };
        let tau = self.minute(s);
        let me = src(s.road);

        let mut spatial: [Option<HscInput>; 3] = [None, None, None];
        for (slot, ch) in Channel::ALL.into_iter().enumerate() {
            if !c.ablation.channel_enabled(ch) {
                continue;
            }
            let own = self.aligned_window(s.road, tau)?;
            let target = own.map(|k| Self::channel_value(&me, ch, k)).collect();
            let mut neighbours = Vec::new();
            for (hop, ring) in self.hops[s.road].iter().enumerate() {
                for &j in ring {
                    let nj = src(j);
                    let values = self
                        .aligned_window(j, tau)?
                        .map(|k| Self::channel_value(&nj, ch, k))
                        .collect();
                    neighbours.push(NeighbourWindow { hop, values });
                }
            }
            spatial[slot] = Some(HscInput { target, neighbours });
        }

        let temporal = build_temporal_inputs(&me, s.t, c.lr, c.ld, c.lw)?;
        let first_ctx = (s.t + 1).saturating_sub(c.lr);
        let context = self.encoding.features(
            &self.graph.nodes()[s.road],
            &self.contexts[s.road],
            first_ctx..=s.t,
        )?;
        Ok(SampleInputs {
            spatial,
            prev_speed: me.speed(s.t - 1),
            average_at_t: me.average(s.t),
            temporal,
            context: ContextFeatures {
                static_features: self.static_features[s.road].clone(),
                dynamic: context.dynamic,
            },
        })
    }

    pub fn targets(&self, s: Sample) -> Result<SampleTargets> {
        if !self.is_eligible(s) {
            return Err(Error::invalid(format!("sample {s:?} is not eligible")));
        }
        let ch = &self.channels[s.road];
        Ok(SampleTargets {
            speed: (s.t..s.t + self.config.horizon).map(|k| ch.speed(k)).collect(),
            trend: ch.trend(s.t),
            deviation: ch.deviation(s.t),
        })
    }

    /// Observed speeds over the horizon, in km/h.
    pub fn truth_kmh(&self, s: Sample) -> &[f64] {
        &self.raw[s.road][s.t..s.t + self.config.horizon]
    }

    pub fn to_kmh(&self, road: usize, z: &[f64]) -> Vec<f64> {
        self.norm.invert_series(road, z)
    }

    /// Frozen daily average in km/h at slot `t` of `road`.
    pub fn daily_average_kmh(&self, road: usize, t: usize) -> f64 {
        self.norm.average(road, t)
    }
}
