//! Dataset files: a JSON graph file plus CSV speed and context tables.
//!
//! ```text
//! graph.json   {"nodes": [{id, length_m, road_type, lanes, traffic_lights, interval_minutes}], "edges": [[a, b]]}
//! series.csv   road_id,slot_index,speed_kmh
//! context.csv  road_id,slot_index,weather_code,holiday_flag,day_of_week
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::context::{ContextRow, ContextSeries};
use super::graph::{RoadGraph, RoadSegment};
use super::{Dataset, SpeedSeries};
use crate::error::{Error, Result};

/// Locations of the three dataset files.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPaths {
    pub graph: PathBuf,
    pub series: PathBuf,
    pub context: PathBuf,
}

impl DatasetPaths {
    /// `graph.json`, `series.csv` and `context.csv` inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            graph: dir.join("graph.json"),
            series: dir.join("series.csv"),
            context: dir.join("context.csv"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    nodes: Vec<RoadSegment>,
    edges: Vec<[usize; 2]>,
}

#[derive(Serialize, Deserialize)]
struct SeriesRecord {
    road_id: usize,
    slot_index: usize,
    speed_kmh: f64,
}

#[derive(Serialize, Deserialize)]
struct ContextRecord {
    road_id: usize,
    slot_index: usize,
    weather_code: u8,
    holiday_flag: u8,
    day_of_week: u8,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    let msg = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(f) => format!("field {}: {}", f + 1, err.kind()),
            None => err.kind().to_string(),
        },
        _ => e.to_string(),
    };
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(open(path)?));
    let mut out = Vec::new();
    for rec in rdr.deserialize::<T>() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        // The reader has already advanced past this record.
        out.push((out.len() + 2, rec));
    }
    Ok(out)
}

/// Groups `(road, slot, value)` rows into dense per-road vectors, rejecting
/// duplicate or missing slots.
fn group<T>(path: &Path, rows: Vec<(usize, usize, usize, T)>) -> Result<BTreeMap<usize, Vec<T>>> {
    let mut by_road: BTreeMap<usize, Vec<(usize, usize, T)>> = BTreeMap::new();
    for (line, road, slot, v) in rows {
        by_road.entry(road).or_default().push((slot, line, v));
    }
    let mut out = BTreeMap::new();
    for (road, mut rows) in by_road {
        rows.sort_by_key(|r| r.0);
        let mut values = Vec::with_capacity(rows.len());
        for (expect, (slot, line, v)) in rows.into_iter().enumerate() {
            if slot != expect {
                let msg = if slot < expect {
                    format!("road {road}: duplicate slot_index {slot}")
                } else {
                    format!("road {road}: slot_index {expect} missing (next is {slot})")
                };
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg,
                });
            }
            values.push(v);
        }
        out.insert(road, values);
    }
    Ok(out)
}

pub fn read_graph(path: &Path) -> Result<RoadGraph> {
    let file: GraphFile = serde_json::from_reader(BufReader::new(open(path)?)).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    RoadGraph::new(file.nodes, file.edges.into_iter().map(|[a, b]| (a, b)).collect())
}

pub fn read_series(path: &Path) -> Result<Vec<SpeedSeries>> {
    let rows = read_rows::<SeriesRecord>(path)?
        .into_iter()
        .map(|(line, r)| (line, r.road_id, r.slot_index, r.speed_kmh))
        .collect();
    Ok(group(path, rows)?
        .into_iter()
        .map(|(road, values)| SpeedSeries::new(road, values))
        .collect())
}

pub fn read_contexts(path: &Path) -> Result<Vec<ContextSeries>> {
    let mut rows = Vec::new();
    for (line, r) in read_rows::<ContextRecord>(path)? {
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if r.holiday_flag > 1 {
            return Err(bad(format!("field 4: holiday_flag must be 0 or 1, got {}", r.holiday_flag)));
        }
        if r.day_of_week > 6 {
            return Err(bad(format!("field 5: day_of_week must be 0..6, got {}", r.day_of_week)));
        }
        let row = ContextRow {
            weather_code: r.weather_code,
            holiday: r.holiday_flag == 1,
            day_of_week: r.day_of_week,
        };
        rows.push((line, r.road_id, r.slot_index, row));
    }
    Ok(group(path, rows)?
        .into_iter()
        .map(|(road_id, rows)| ContextSeries { road_id, rows })
        .collect())
}

/// Load and cross-validate the three dataset files.
pub fn load_dataset(paths: &DatasetPaths) -> Result<Dataset> {
    let graph = read_graph(&paths.graph)?;
    let series = read_series(&paths.series)?;
    let contexts = read_contexts(&paths.context)?;
    Dataset::new(graph, series, contexts)
}

/// Write the dataset in a byte-stable layout (rows ordered by road, then slot).
pub fn write_dataset(ds: &Dataset, paths: &DatasetPaths) -> Result<()> {
    let file = GraphFile {
        nodes: ds.graph.nodes().to_vec(),
        edges: ds.graph.edges().iter().map(|&(a, b)| [a, b]).collect(),
    };
    let mut w = create(&paths.graph)?;
    serde_json::to_writer_pretty(&mut w, &file)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(&paths.graph, e))?;

    let mut w = csv::Writer::from_writer(create(&paths.series)?);
    for s in &ds.series {
        for (slot_index, &speed_kmh) in s.values.iter().enumerate() {
            w.serialize(SeriesRecord {
                road_id: s.road_id,
                slot_index,
                speed_kmh,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(&paths.series, e))?;

    let mut w = csv::Writer::from_writer(create(&paths.context)?);
    for c in &ds.contexts {
        for (slot_index, row) in c.rows.iter().enumerate() {
            w.serialize(ContextRecord {
                road_id: c.road_id,
                slot_index,
                weather_code: row.weather_code,
                holiday_flag: row.holiday as u8,
                day_of_week: row.day_of_week,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(&paths.context, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const LINE_GRAPH: &str = r#"{
        "nodes": [
            {"id": 0, "length_m": 120.0, "road_type": 0, "lanes": 2, "traffic_lights": 0, "interval_minutes": 5},
            {"id": 1, "length_m": 300.0, "road_type": 1, "lanes": 1, "traffic_lights": 1, "interval_minutes": 10},
            {"id": 2, "length_m": 80.0, "road_type": 2, "lanes": 3, "traffic_lights": 2, "interval_minutes": 5}
        ],
        "edges": [[1, 0], [1, 2]]
    }"#;

    fn series_csv(lens: &[usize]) -> String {
        let mut s = String::from("road_id,slot_index,speed_kmh\n");
        for (r, &n) in lens.iter().enumerate() {
            for t in 0..n {
                s += &format!("{r},{t},{}\n", 30.0 + t as f64);
            }
        }
        s
    }

    fn context_csv(lens: &[usize]) -> String {
        let mut s = String::from("road_id,slot_index,weather_code,holiday_flag,day_of_week\n");
        for (r, &n) in lens.iter().enumerate() {
            for t in 0..n {
                s += &format!("{r},{t},0,0,3\n");
            }
        }
        s
    }

    fn write_files(dir: &Path, graph: &str, series: &str, context: &str) -> DatasetPaths {
        let p = DatasetPaths::in_dir(dir);
        fs::write(&p.graph, graph).unwrap();
        fs::write(&p.series, series).unwrap();
        fs::write(&p.context, context).unwrap();
        p
    }

    #[test]
    fn loads_line_graph_with_mixed_intervals() {
        let dir = tempfile::tempdir().unwrap();
        let lens = [6, 3, 6];
        let p = write_files(dir.path(), LINE_GRAPH, &series_csv(&lens), &context_csv(&lens));
        let ds = load_dataset(&p).unwrap();
        assert_eq!(ds.graph.len(), 3);
        assert_eq!(ds.graph.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(ds.speeds(0).len(), 6);
        assert_eq!(ds.speeds(1).len(), 3);
        assert_eq!(ds.contexts[2].rows[0].day_of_week, 3);
    }

    #[test]
    fn row_count_inconsistent_with_interval() {
        let dir = tempfile::tempdir().unwrap();
        let lens = [6, 4, 6];
        let p = write_files(dir.path(), LINE_GRAPH, &series_csv(&lens), &context_csv(&lens));
        assert!(load_dataset(&p).is_err());
    }

    #[test]
    fn road_without_series() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_files(dir.path(), LINE_GRAPH, &series_csv(&[6, 3]), &context_csv(&[6, 3, 6]));
        assert!(matches!(load_dataset(&p), Err(Error::MissingData(_))));
    }

    #[test]
    fn parse_error_names_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let series = "road_id,slot_index,speed_kmh\n0,0,31.0\n0,1,fast\n";
        let p = write_files(dir.path(), LINE_GRAPH, series, &context_csv(&[6, 3, 6]));
        let err = load_dataset(&p).unwrap_err();
        match &err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(*line, 3);
                assert!(msg.contains("field 3"), "{msg}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_slot_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let series = "road_id,slot_index,speed_kmh\n0,0,1\n0,0,2\n";
        let p = write_files(dir.path(), LINE_GRAPH, series, &context_csv(&[6, 3, 6]));
        let err = load_dataset(&p).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn bad_holiday_flag() {
        let dir = tempfile::tempdir().unwrap();
        let lens = [6, 3, 6];
        let ctx = context_csv(&lens).replacen("0,0,0,0,3", "0,0,0,2,3", 1);
        let p = write_files(dir.path(), LINE_GRAPH, &series_csv(&lens), &ctx);
        let err = load_dataset(&p).unwrap_err().to_string();
        assert!(err.contains("holiday_flag"), "{err}");
    }

    #[test]
    fn unknown_graph_field_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = LINE_GRAPH.replace("\"lanes\": 2,", "\"lanes\": 2, \"speed_limit\": 50,");
        let lens = [6, 3, 6];
        let p = write_files(dir.path(), &g, &series_csv(&lens), &context_csv(&lens));
        assert!(matches!(load_dataset(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn write_then_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = crate::graphdata::SynthConfig {
            roads: 4,
            days: 2,
            ..Default::default()
        };
        let ds = crate::graphdata::generate_synthetic(&cfg, 5).unwrap();
        let p = DatasetPaths::in_dir(dir.path());
        write_dataset(&ds, &p).unwrap();
        let back = load_dataset(&p).unwrap();
        assert_eq!(ds, back);
    }
}
