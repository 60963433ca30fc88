use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
struct Sums {
    abs: f64,
    sq: f64,
    ape: f64,
    n: usize,
    n_ape: usize,
}

impl Sums {
    fn add(&mut self, pred: f64, truth: f64) {
        let e = pred - truth;
        self.abs += e.abs();
        self.sq += e * e;
        self.n += 1;
        if truth != 0.0 {
            self.ape += e.abs() / truth.abs();
            self.n_ape += 1;
        }
    }

    fn merge(&mut self, o: &Sums) {
        self.abs += o.abs;
        self.sq += o.sq;
        self.ape += o.ape;
        self.n += o.n;
        self.n_ape += o.n_ape;
    }

    fn finish(&self) -> ErrorMetrics {
        let n = self.n as f64;
        ErrorMetrics {
            mae: self.abs / n,
            mape: (self.n_ape > 0).then(|| 100.0 * self.ape / self.n_ape as f64),
            rmse: (self.sq / n).sqrt(),
            count: self.n,
        }
    }
}

/// MAE and RMSE in km/h; MAPE in percent over nonzero truths only
/// (`None` when every truth is zero).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorMetrics {
    pub mae: f64,
    pub mape: Option<f64>,
    pub rmse: f64,
    /// Number of (prediction, truth) pairs.
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub overall: ErrorMetrics,
    /// One entry per horizon step, step 1 first.
    pub per_step: Vec<ErrorMetrics>,
    pub samples: usize,
}

/// Collects horizon-long predictions and their truths.
#[derive(Clone, Debug)]
pub struct MetricsAccumulator {
    steps: Vec<Sums>,
    samples: usize,
}

impl MetricsAccumulator {
    pub fn new(horizon: usize) -> Self {
        MetricsAccumulator {
            steps: vec![Sums::default(); horizon],
            samples: 0,
        }
    }

    pub fn add(&mut self, pred: &[f64], truth: &[f64]) -> Result<()> {
        if pred.len() != self.steps.len() || truth.len() != self.steps.len() {
            return Err(Error::shape(
                "metrics",
                format!(
                    "expected {} steps, got {} predictions and {} truths",
                    self.steps.len(),
                    pred.len(),
                    truth.len()
                ),
            ));
        }
        for ((sums, &p), &y) in self.steps.iter_mut().zip(pred).zip(truth) {
            sums.add(p, y);
        }
        self.samples += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<MetricsReport> {
        if self.samples == 0 {
            return Err(Error::MissingData("no samples to evaluate".into()));
        }
        let mut all = Sums::default();
        for s in &self.steps {
            all.merge(s);
        }
        Ok(MetricsReport {
            overall: all.finish(),
            per_step: self.steps.iter().map(Sums::finish).collect(),
            samples: self.samples,
        })
    }
}

impl MetricsReport {
    /// Single-step metrics over paired values.
    pub fn from_pairs(pred: &[f64], truth: &[f64]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::shape(
                "metrics",
                format!("{} predictions for {} truths", pred.len(), truth.len()),
            ));
        }
        let mut acc = MetricsAccumulator::new(1);
        for (&p, &y) in pred.iter().zip(truth) {
            acc.add(&[p], &[y])?;
        }
        acc.finish()
    }

    pub fn horizon(&self) -> usize {
        self.per_step.len()
    }

    /// Rows of `metric,horizon_step,value`; the aggregate uses step `all`
    /// and an undefined MAPE leaves the value empty.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "horizon_step", "value"])?;
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut rows = |step: String, m: &ErrorMetrics| -> Result<()> {
            w.write_record(["mae", step.as_str(), &m.mae.to_string()])?;
            w.write_record(["mape", step.as_str(), &fmt_opt(m.mape)])?;
            w.write_record(["rmse", step.as_str(), &m.rmse.to_string()])?;
            Ok(())
        };
        rows("all".into(), &self.overall)?;
        for (i, m) in self.per_step.iter().enumerate() {
            rows((i + 1).to_string(), m)?;
        }
        w.write_record(["samples", "all", &self.samples.to_string()])?;
        w.flush().map_err(|e| Error::io("<metrics>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mape = |m: &ErrorMetrics| match m.mape {
            Some(v) => format!("{v:.2}%"),
            None => "n/a".to_string(),
        };
        writeln!(
            f,
            "samples {}  MAE {:.4} km/h  MAPE {}  RMSE {:.4} km/h",
            self.samples,
            self.overall.mae,
            mape(&self.overall),
            self.overall.rmse
        )?;
        for (i, m) in self.per_step.iter().enumerate() {
            writeln!(
                f,
                "  step {:>2}: MAE {:.4}  MAPE {}  RMSE {:.4}",
                i + 1,
                m.mae,
                mape(m),
                m.rmse
            )?;
        }
        Ok(())
    }
}
