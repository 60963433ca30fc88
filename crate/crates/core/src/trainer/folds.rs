//! Time-series cross-validation.
//!
//! Samples are ordered by wall-clock time and cut into `k` contiguous test
//! blocks. For each block, training keeps only samples whose input and
//! target footprint avoids the block's time window, and normalization is
//! fitted on slots outside that window. A shuffled mode assigns samples to
//! folds at random instead; it does no purging and its training samples
//! will usually overlap the test targets.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graphdata::Dataset;
use crate::mcan::{ModelConfig, ModelData, ReadTrace, Sample};

use super::Normalization;

/// `k` consecutive index ranges covering `0..n`; the first `n % k` ranges
/// hold one extra element.
pub fn block_ranges(n: usize, k: usize) -> Result<Vec<Range<usize>>> {
    if k < 2 {
        return Err(Error::config("folds", "need at least 2 folds"));
    }
    if k > n {
        return Err(Error::invalid(format!("{k} folds requested for {n} samples")));
    }
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    Ok((0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Training candidates dropped because their footprint touches the test window.
    pub purged: usize,
    intervals: Vec<u32>,
    /// Sorted, disjoint wall-clock minute ranges reserved for testing.
    excluded: Vec<(u64, u64)>,
}

impl Fold {
    pub fn excluded_minutes(&self) -> &[(u64, u64)] {
        &self.excluded
    }

    pub fn excludes_minute(&self, m: u64) -> bool {
        let i = self.excluded.partition_point(|&(_, end)| end <= m);
        self.excluded.get(i).is_some_and(|&(start, _)| start <= m)
    }

    /// Whether slot `slot` of `road` may be used for fitting.
    pub fn fit_includes(&self, road: usize, slot: usize) -> bool {
        !self.excludes_minute(slot as u64 * self.intervals[road] as u64)
    }

    /// Normalization and daily averages fitted on the non-test slots.
    pub fn fit_normalization(&self, ds: &Dataset) -> Result<Normalization> {
        Normalization::fit(ds, |r, t| self.fit_includes(r, t))
    }

    /// Replays input assembly for every training sample and fails on the
    /// first speed read or target inside the test window.
    pub fn check_leakage(&self, data: &ModelData) -> Result<()> {
        let test: std::collections::HashSet<Sample> = self.test.iter().copied().collect();
        let h = data.config().horizon;
        for &s in &self.train {
            if test.contains(&s) {
                return Err(Error::invalid(format!("fold {}: {s:?} is in both splits", self.index)));
            }
            let trace = ReadTrace::default();
            data.inputs_traced(s, Some(&trace))?;
            let reads = trace.into_inner();
            let targets = (s.t..s.t + h).map(|t| (s.road, t));
            for (road, slot) in reads.into_iter().chain(targets) {
                if !self.fit_includes(road, slot) {
                    return Err(Error::invalid(format!(
                        "fold {}: training sample {s:?} touches road {road} slot {slot} inside the test window",
                        self.index
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Index data for enumerating samples; scaling does not affect eligibility.
pub fn sample_index(ds: &Dataset, config: &ModelConfig) -> Result<ModelData> {
    let norm = Normalization::fit(ds, |_, _| true)?;
    ModelData::new(ds, &norm, config)
}

fn merge(mut ranges: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    ranges.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(ranges.len());
    for (a, b) in ranges {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Split every eligible sample of `ds` into `k` folds. `seed` only matters
/// when `shuffled` is set.
pub fn kfold_split(ds: &Dataset, config: &ModelConfig, k: usize, shuffled: bool, seed: u64) -> Result<Vec<Fold>> {
    let data = sample_index(ds, config)?;
    let mut samples = data.samples();
    if shuffled {
        samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let blocks = block_ranges(samples.len(), k)?;
    let intervals: Vec<u32> = (0..data.roads()).map(|r| data.interval(r)).collect();
    let horizon_end = |s: Sample| data.minute(s) + config.horizon as u64 * data.interval(s.road) as u64;

    Ok(blocks
        .into_iter()
        .enumerate()
        .map(|(index, block)| {
            let mut test = samples[block.clone()].to_vec();
            let rest = samples[..block.start].iter().chain(&samples[block.end..]).copied();
            let (excluded, train, purged) = if shuffled {
                let excluded = merge(test.iter().map(|&s| (data.minute(s), horizon_end(s))).collect());
                let mut train: Vec<Sample> = rest.collect();
                train.sort_by_key(|s| (data.minute(*s), s.road));
                (excluded, train, 0)
            } else {
                let a = test.iter().map(|&s| data.minute(s)).min().unwrap_or(0);
                let b = test.iter().map(|&s| horizon_end(s)).max().unwrap_or(0);
                let (train, dropped): (Vec<Sample>, Vec<Sample>) = rest.partition(|&s| {
                    let (lo, hi) = data.footprint(s);
                    hi <= a || lo >= b
                });
                (vec![(a, b)], train, dropped.len())
            };
            test.sort_by_key(|s| (data.minute(*s), s.road));
            Fold {
                index,
                train,
                test,
                purged,
                intervals: intervals.clone(),
                excluded,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdata::{generate_synthetic, SynthConfig};

    fn dataset() -> Dataset {
        generate_synthetic(
            &SynthConfig {
                roads: 3,
                days: 6,
                interval_menu: vec![30, 60],
                edge_density: 0.5,
                ..SynthConfig::default()
            },
            4,
        )
        .unwrap()
    }

    fn config() -> ModelConfig {
        ModelConfig {
            horizon: 2,
            lr: 3,
            ld: 1,
            lw: 0,
            window_minutes: 120,
            c: 4,
            ablation: "nw".parse().unwrap(),
            ..ModelConfig::default()
        }
    }

    #[test]
    fn block_arithmetic() {
        let b = block_ranges(100, 5).unwrap();
        assert!(b.iter().all(|r| r.len() == 20));
        let b = block_ranges(7, 3).unwrap();
        assert_eq!(b, vec![0..3, 3..5, 5..7]);
        assert!(block_ranges(3, 4).is_err());
        assert!(block_ranges(10, 1).is_err());
    }

    #[test]
    fn test_blocks_partition_samples() {
        let ds = dataset();
        let all = sample_index(&ds, &config()).unwrap().samples();
        let folds = kfold_split(&ds, &config(), 4, false, 0).unwrap();
        let mut seen: Vec<Sample> = folds.iter().flat_map(|f| f.test.clone()).collect();
        seen.sort();
        let mut expected = all.clone();
        expected.sort();
        assert_eq!(seen, expected);
        for f in &folds {
            assert!(f.train.iter().all(|s| !f.test.contains(s)));
            assert_eq!(f.train.len() + f.test.len() + f.purged, all.len());
        }
    }

    #[test]
    fn contiguous_folds_do_not_leak() {
        let ds = dataset();
        let folds = kfold_split(&ds, &config(), 4, false, 0).unwrap();
        for f in &folds {
            let norm = f.fit_normalization(&ds).unwrap();
            let data = ModelData::new(&ds, &norm, &config()).unwrap();
            f.check_leakage(&data).unwrap();
        }
        assert!(!folds.last().unwrap().train.is_empty());
    }

    #[test]
    fn shuffled_folds_are_detected_as_leaky() {
        let ds = dataset();
        let folds = kfold_split(&ds, &config(), 4, true, 9).unwrap();
        let f = &folds[1];
        let data = ModelData::new(&ds, &f.fit_normalization(&ds).unwrap(), &config()).unwrap();
        assert!(f.check_leakage(&data).is_err());
    }

    #[test]
    fn seeded_shuffles_repeat() {
        let ds = dataset();
        let a = kfold_split(&ds, &config(), 3, true, 5).unwrap();
        let b = kfold_split(&ds, &config(), 3, true, 5).unwrap();
        let c = kfold_split(&ds, &config(), 3, true, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn normalization_ignores_test_values() {
        let ds = dataset();
        let folds = kfold_split(&ds, &config(), 3, false, 0).unwrap();
        let f = &folds[1];
        let mut poisoned = ds.clone();
        for (r, series) in poisoned.series.iter_mut().enumerate() {
            for (t, v) in series.values.iter_mut().enumerate() {
                if !f.fit_includes(r, t) {
                    *v = 1.0e6;
                }
            }
        }
        assert_eq!(
            f.fit_normalization(&ds).unwrap(),
            f.fit_normalization(&poisoned).unwrap()
        );
    }

    #[test]
    fn excluded_lookup() {
        let f = Fold {
            index: 0,
            train: vec![],
            test: vec![],
            purged: 0,
            intervals: vec![10],
            excluded: vec![(10, 20), (40, 50)],
        };
        assert!(!f.excludes_minute(9));
        assert!(f.excludes_minute(10));
        assert!(!f.excludes_minute(20));
        assert!(f.excludes_minute(49));
        assert!(!f.excludes_minute(50));
        assert!(!f.fit_includes(0, 4));
        assert!(f.fit_includes(0, 3));
    }

    #[test]
    fn too_many_folds() {
        let ds = dataset();
        assert!(kfold_split(&ds, &config(), 1_000_000, false, 0).is_err());
    }
}
