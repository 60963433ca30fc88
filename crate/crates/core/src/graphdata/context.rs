use serde::{Deserialize, Serialize};

use super::graph::RoadSegment;
use crate::error::{Error, Result};

/// Time-dependent context of one road at one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRow {
    pub weather_code: u8,
    pub holiday: bool,
    pub day_of_week: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextSeries {
    pub road_id: usize,
    pub rows: Vec<ContextRow>,
}

/// Static vector plus the sequence of dynamic vectors fed to the context
/// encoders.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextFeatures {
    pub static_features: Vec<f64>,
    pub dynamic: Vec<Vec<f64>>,
}

/// Sizes of the categorical codes used by the one-hot encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEncoding {
    pub road_types: usize,
    pub weather_codes: usize,
}

impl Default for ContextEncoding {
    fn default() -> Self {
        ContextEncoding {
            road_types: 4,
            weather_codes: 4,
        }
    }
}

fn one_hot(code: usize, n: usize, what: &str) -> Result<Vec<f64>> {
    if code >= n {
        return Err(Error::invalid(format!("{what} code {code} outside 0..{n}")));
    }
    let mut v = vec![0.0; n];
    v[code] = 1.0;
    Ok(v)
}

impl ContextEncoding {
    /// length (km), one-hot road type, lanes, traffic lights
    pub fn static_width(&self) -> usize {
        self.road_types + 3
    }

    /// one-hot weather, holiday flag, time-of-day fraction, one-hot day of week
    pub fn dynamic_width(&self) -> usize {
        self.weather_codes + 2 + 7
    }

    pub fn static_features(&self, seg: &RoadSegment) -> Result<Vec<f64>> {
        let mut v = vec![seg.length_m / 1000.0];
        v.extend(one_hot(seg.road_type, self.road_types, "road type")?);
        v.push(seg.lanes as f64);
        v.push(seg.traffic_lights as f64);
        Ok(v)
    }

    pub fn dynamic_features(&self, row: &ContextRow, slot: usize, slots_per_day: usize) -> Result<Vec<f64>> {
        let mut v = one_hot(row.weather_code as usize, self.weather_codes, "weather")?;
        v.push(if row.holiday { 1.0 } else { 0.0 });
        v.push((slot % slots_per_day) as f64 / slots_per_day as f64);
        v.extend(one_hot(row.day_of_week as usize, 7, "day of week")?);
        Ok(v)
    }

    /// Static features of `seg` and dynamic features for `slots`.
    pub fn features(
        &self,
        seg: &RoadSegment,
        context: &ContextSeries,
        slots: impl IntoIterator<Item = usize>,
    ) -> Result<ContextFeatures> {
        let per_day = seg.slots_per_day();
        let dynamic = slots
            .into_iter()
            .map(|s| {
                let row = context.rows.get(s).ok_or_else(|| {
                    Error::MissingData(format!("road {}: no context at slot {s}", seg.id))
                })?;
                self.dynamic_features(row, s, per_day)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ContextFeatures {
            static_features: self.static_features(seg)?,
            dynamic,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(road_type: usize) -> RoadSegment {
        RoadSegment {
            id: 0,
            length_m: 250.0,
            road_type,
            lanes: 2,
            traffic_lights: 1,
            interval_minutes: 10,
        }
    }

    #[test]
    fn road_type_one_hot_is_disjoint() {
        let enc = ContextEncoding::default();
        let a = enc.static_features(&seg(0)).unwrap();
        let b = enc.static_features(&seg(2)).unwrap();
        assert_eq!(a.len(), enc.static_width());
        assert_eq!(a[1..5], [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b[1..5], [0.0, 0.0, 1.0, 0.0]);
        assert!(enc.static_features(&seg(4)).is_err());
    }

    #[test]
    fn dynamic_layout() {
        let enc = ContextEncoding::default();
        let row = ContextRow {
            weather_code: 1,
            holiday: true,
            day_of_week: 6,
        };
        let v = enc.dynamic_features(&row, 144 + 36, 144).unwrap();
        assert_eq!(v.len(), enc.dynamic_width());
        assert_eq!(v[..4], [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(v[4], 1.0);
        assert_eq!(v[5], 0.25);
        assert_eq!(v[12], 1.0);
    }
}
