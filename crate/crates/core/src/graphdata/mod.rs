//! Road graph, heterogeneous speed series, derived channels, temporal
//! windows, context features, the synthetic generator and file formats.

mod channels;
mod context;
mod graph;
pub mod io;
mod synth;
mod windows;

pub use channels::{
    compute_daily_average, compute_deviation, compute_trend, fit_daily_average, ChannelSource, DerivedChannels,
    RoadChannels, SpeedSeries,
};
pub use context::{ContextEncoding, ContextFeatures, ContextRow, ContextSeries};
pub use graph::{RoadGraph, RoadSegment, DAYS_PER_WEEK, MINUTES_PER_DAY};
pub use io::{load_dataset, write_dataset, DatasetPaths};
pub use synth::{generate_synthetic, SynthConfig};
pub use windows::{build_temporal_inputs, periodic_indices, PeriodicWindow, RecentWindow, TemporalInputs};

use crate::error::{Error, Result};

/// A road graph together with one speed series and one context series per
/// road, indexed by road id.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graph: RoadGraph,
    pub series: Vec<SpeedSeries>,
    pub contexts: Vec<ContextSeries>,
}

impl Dataset {
    /// Checks that every road has exactly one series and context, that all
    /// series cover the same wall-clock span, and that speeds are finite and
    /// non-negative. Series and contexts are reordered by road id.
    pub fn new(graph: RoadGraph, mut series: Vec<SpeedSeries>, mut contexts: Vec<ContextSeries>) -> Result<Self> {
        series.sort_by_key(|s| s.road_id);
        contexts.sort_by_key(|c| c.road_id);
        for id in 0..graph.len() {
            if series.get(id).map(|s| s.road_id) != Some(id) {
                return Err(Error::MissingData(format!("road {id} has no speed series")));
            }
            if contexts.get(id).map(|c| c.road_id) != Some(id) {
                return Err(Error::MissingData(format!("road {id} has no context rows")));
            }
        }
        if series.len() != graph.len() {
            return Err(Error::invalid(format!(
                "series for unknown road {}",
                series[graph.len()].road_id
            )));
        }
        if contexts.len() != graph.len() {
            return Err(Error::invalid(format!(
                "context for unknown road {}",
                contexts[graph.len()].road_id
            )));
        }

        let mut span: Option<(usize, u64)> = None;
        for (seg, s) in graph.nodes().iter().zip(&series) {
            if s.is_empty() {
                return Err(Error::MissingData(format!("road {}: empty speed series", seg.id)));
            }
            if let Some(t) = s.values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid(format!(
                    "road {}: speed {} at slot {t} is not a finite non-negative number",
                    seg.id, s.values[t]
                )));
            }
            let minutes = s.len() as u64 * seg.interval_minutes as u64;
            match span {
                None => span = Some((seg.id, minutes)),
                Some((first, m)) if m != minutes => {
                    return Err(Error::invalid(format!(
                        "road {}: {} rows at {} min cover {minutes} min, but road {first} covers {m} min",
                        seg.id,
                        s.len(),
                        seg.interval_minutes
                    )));
                }
                _ => {}
            }
        }
        for (s, c) in series.iter().zip(&contexts) {
            if s.len() != c.rows.len() {
                return Err(Error::invalid(format!(
                    "road {}: {} speed rows but {} context rows",
                    s.road_id,
                    s.len(),
                    c.rows.len()
                )));
            }
        }
        Ok(Dataset {
            graph,
            series,
            contexts,
        })
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    /// Wall-clock minutes covered by every series.
    pub fn span_minutes(&self) -> u64 {
        self.series
            .first()
            .map(|s| s.len() as u64 * self.graph.nodes()[0].interval_minutes as u64)
            .unwrap_or(0)
    }

    pub fn segment(&self, road: usize) -> &RoadSegment {
        &self.graph.nodes()[road]
    }

    pub fn speeds(&self, road: usize) -> &[f64] {
        &self.series[road].values
    }

    /// The first `minutes` of every road. `minutes` must be a positive
    /// multiple of every interval and no longer than the current span.
    pub fn prefix(&self, minutes: u64) -> Result<Dataset> {
        if minutes == 0 || minutes > self.span_minutes() {
            return Err(Error::invalid(format!(
                "prefix of {minutes} min outside the {} min span",
                self.span_minutes()
            )));
        }
        let mut out = self.clone();
        for ((seg, s), c) in self.graph.nodes().iter().zip(&mut out.series).zip(&mut out.contexts) {
            let iv = seg.interval_minutes as u64;
            if minutes % iv != 0 {
                return Err(Error::invalid(format!(
                    "prefix of {minutes} min is not a multiple of road {}'s {iv}-minute interval",
                    seg.id
                )));
            }
            let n = (minutes / iv) as usize;
            s.values.truncate(n);
            c.rows.truncate(n);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_keeps_leading_slots() {
        let ds = synth::generate_synthetic(
            &SynthConfig {
                roads: 2,
                days: 2,
                interval_menu: vec![30, 60],
                ..SynthConfig::default()
            },
            1,
        )
        .unwrap();
        let p = ds.prefix(600).unwrap();
        assert_eq!(p.span_minutes(), 600);
        for r in 0..2 {
            let n = p.speeds(r).len();
            assert_eq!(n as u64 * ds.segment(r).interval_minutes as u64, 600);
            assert_eq!(p.speeds(r), &ds.speeds(r)[..n]);
            assert_eq!(p.contexts[r].rows.len(), n);
        }
        assert!(ds.prefix(630).is_err() || ds.graph.nodes().iter().all(|n| n.interval_minutes == 30));
        assert!(ds.prefix(0).is_err());
        assert!(ds.prefix(ds.span_minutes() + 60).is_err());
    }

    fn seg(id: usize, interval: u32) -> RoadSegment {
        RoadSegment {
            id,
            length_m: 100.0,
            road_type: 0,
            lanes: 1,
            traffic_lights: 0,
            interval_minutes: interval,
        }
    }

    fn ctx(id: usize, n: usize) -> ContextSeries {
        ContextSeries {
            road_id: id,
            rows: vec![
                ContextRow {
                    weather_code: 0,
                    holiday: false,
                    day_of_week: 0
                };
                n
            ],
        }
    }

    #[test]
    fn mixed_intervals_over_common_span() {
        let g = RoadGraph::new(vec![seg(0, 5), seg(1, 10)], vec![(0, 1)]).unwrap();
        let ds = Dataset::new(
            g,
            vec![SpeedSeries::new(1, vec![1.0; 3]), SpeedSeries::new(0, vec![1.0; 6])],
            vec![ctx(0, 6), ctx(1, 3)],
        )
        .unwrap();
        assert_eq!(ds.speeds(0).len(), 6);
        assert_eq!(ds.speeds(1).len(), 3);
        assert_eq!(ds.span_minutes(), 30);
    }

    #[test]
    fn inconsistent_row_count_rejected() {
        let g = RoadGraph::new(vec![seg(0, 5), seg(1, 10)], vec![]).unwrap();
        let err = Dataset::new(
            g,
            vec![SpeedSeries::new(0, vec![1.0; 6]), SpeedSeries::new(1, vec![1.0; 4])],
            vec![ctx(0, 6), ctx(1, 4)],
        )
        .unwrap_err();
        assert!(err.to_string().contains("road 1"), "{err}");
    }

    #[test]
    fn missing_series_rejected() {
        let g = RoadGraph::new(vec![seg(0, 5), seg(1, 5)], vec![]).unwrap();
        let err = Dataset::new(g, vec![SpeedSeries::new(0, vec![1.0; 6])], vec![ctx(0, 6), ctx(1, 6)]).unwrap_err();
        assert!(matches!(err, Error::MissingData(_)));
    }

    #[test]
    fn negative_speed_rejected() {
        let g = RoadGraph::new(vec![seg(0, 5)], vec![]).unwrap();
        assert!(Dataset::new(g, vec![SpeedSeries::new(0, vec![1.0, -1.0])], vec![ctx(0, 2)]).is_err());
    }
}
