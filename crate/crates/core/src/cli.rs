//! Command-line front end. Exit codes: 0 success, 1 usage or configuration
//! error, 2 failure while running a command.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{dominance_shares, multifold_correlation, planted_pair, write_correlation_csv};
use crate::config::{PredictSplit, RunConfig};
use crate::error::{Error, Result};
use crate::graphdata::{generate_synthetic, load_dataset, write_dataset, Dataset};
use crate::mcan::{Checkpoint, Mcan, ModelData, Sample};
use crate::trainer::{evaluate, historical_average, kfold_split, predict_rows, train_fold, MetricsReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mcan", version, about = "Traffic speed prediction on road graphs with mixed sampling intervals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (graph.json, series.csv, context.csv).
    Generate(CommonArgs),
    /// Same-slot correlations of a road pair under several measurements.
    Correlate(CommonArgs),
    /// Train on all folds but the held-out one and save a checkpoint.
    Train(CommonArgs),
    /// Metrics of a checkpoint and of the daily-average baseline on the held-out fold.
    Evaluate(CommonArgs),
    /// Per-step speed predictions of a checkpoint.
    Predict(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ablation flag (ntr, nde, ntr-nde, nd, nw, nd-nw, nemb); repeatable.
    #[arg(long = "ablate", value_name = "FLAG")]
    pub ablate: Vec<String>,
    /// Override one config key, e.g. `--set train.epochs=5`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Generate(a)
            | Command::Correlate(a)
            | Command::Train(a)
            | Command::Evaluate(a)
            | Command::Predict(a) => a,
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p, &args.set)?,
        None => RunConfig::from_toml("", &args.set, Path::new(""))?,
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    for flag in &args.ablate {
        cfg.model.ablation.apply(flag)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn metrics_bytes(r: &MetricsReport) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.write_csv(&mut buf)?;
    Ok(buf)
}

fn cmd_generate(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let ds = generate_synthetic(&cfg.generate, cfg.seed)?;
    let paths = cfg.dataset_paths();
    for p in [&paths.graph, &paths.series, &paths.context] {
        create_parent(p)?;
    }
    write_dataset(&ds, &paths)?;
    writeln!(out, "wrote {} roads, {} minutes to {}", ds.len(), ds.span_minutes(), paths.graph.display())
        .map_err(|e| Error::io("<stdout>", e))
}

fn cmd_correlate(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let c = &cfg.correlate;
    let ds = match &c.planted {
        Some(p) => planted_pair(p, cfg.seed)?,
        None => load_dataset(&cfg.dataset_paths())?,
    };
    let end = c.end_minute.unwrap_or(u64::MAX);
    let series = multifold_correlation(&ds, c.road_a, c.road_b, &c.measurements, c.days, c.start_minute..end)?;
    let path = cfg.output_dir().join("correlation.csv");
    let mut buf = Vec::new();
    write_correlation_csv(&series, &mut buf)?;
    write_file(&path, &buf)?;
    let shares = dominance_shares(&series)?;
    let io = |e| Error::io("<stdout>", e);
    writeln!(
        out,
        "roads {} and {}: {} slots, window {} days -> {}",
        c.road_a,
        c.road_b,
        series[0].points.len(),
        c.days,
        path.display()
    )
    .map_err(io)?;
    for (s, share) in series.iter().zip(shares) {
        writeln!(out, "  {:<9} strongest on {:5.1}% of slots", s.measurement.name(), 100.0 * share).map_err(io)?;
    }
    Ok(())
}

fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let ds = load_dataset(&cfg.dataset_paths())?;
    let run = train_fold(&ds, &cfg.model, &cfg.train, cfg.seed)?;
    let ck_path = cfg.checkpoint_path();
    create_parent(&ck_path)?;
    run.checkpoint().save(&ck_path)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss"])?;
    w.write_record(["0", &run.history.initial_loss.to_string()])?;
    for (i, l) in run.history.epoch_losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    let history = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    let hist_path = cfg.output_dir().join("history.csv");
    write_file(&hist_path, &history)?;

    let io = |e| Error::io("<stdout>", e);
    writeln!(
        out,
        "model {} ({} parameters), {} training samples ({} purged), {} epochs",
        cfg.model.ablation,
        run.model.param_count(),
        run.history.train_samples,
        run.fold.purged,
        run.history.epoch_losses.len()
    )
    .map_err(io)?;
    writeln!(
        out,
        "loss {:.6} -> {:.6}; checkpoint {}",
        run.history.initial_loss,
        run.history.final_loss,
        ck_path.display()
    )
    .map_err(io)
}

struct Loaded {
    model: Mcan,
    data: ModelData,
    test: Vec<Sample>,
}

fn load_for_inference(cfg: &RunConfig) -> Result<Loaded> {
    let ck = Checkpoint::load(&cfg.checkpoint_path())?;
    let model = ck.model()?;
    let ds: Dataset = load_dataset(&cfg.dataset_paths())?;
    let mut folds = kfold_split(&ds, &ck.config, cfg.train.folds, cfg.train.shuffled_folds, cfg.seed)?;
    let fold = folds.swap_remove(cfg.train.holdout_fold());
    let data = ModelData::new(&ds, &ck.normalization, &ck.config)?;
    Ok(Loaded {
        model,
        data,
        test: fold.test,
    })
}

fn cmd_evaluate(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let l = load_for_inference(cfg)?;
    let report = evaluate(&l.model, &l.data, &l.test)?;
    let baseline = historical_average(&l.data, &l.test)?;
    let dir = cfg.output_dir();
    write_file(&dir.join("metrics.csv"), &metrics_bytes(&report)?)?;
    write_file(&dir.join("baseline_metrics.csv"), &metrics_bytes(&baseline)?)?;
    write!(out, "model ({})\n{report}historical average\n{baseline}", l.model.config.ablation)
        .map_err(|e| Error::io("<stdout>", e))
}

fn cmd_predict(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let l = load_for_inference(cfg)?;
    let samples = match cfg.predict.split {
        PredictSplit::Test => l.test,
        PredictSplit::All => l.data.samples(),
    };
    let rows = predict_rows(&l.model, &l.data, &samples)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    let path = cfg.output_dir().join("predictions.csv");
    write_file(&path, &bytes)?;
    writeln!(out, "{} rows for {} samples -> {}", rows.len(), samples.len(), path.display())
        .map_err(|e| Error::io("<stdout>", e))
}

/// Parse `args` (including the program name), run the command and return
/// the process exit code. Diagnostics go to `err`, reports to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let cfg = match load_config(cli.command.args()).and_then(|cfg| {
        if matches!(cli.command, Command::Generate(_)) {
            cfg.require("generate.roads")?;
        }
        Ok(cfg)
    }) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let result = match &cli.command {
        Command::Generate(_) => cmd_generate(&cfg, out),
        Command::Correlate(_) => cmd_correlate(&cfg, out),
        Command::Train(_) => cmd_train(&cfg, out),
        Command::Evaluate(_) => cmd_evaluate(&cfg, out),
        Command::Predict(_) => cmd_predict(&cfg, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("mcan").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(call(&["bogus"]).0, EXIT_USAGE);
        let (code, _, err) = call(&["train", "--ablate", "nx"]);
        assert_eq!(code, EXIT_USAGE);
        for f in ["ntr", "nde", "ntr-nde", "nd", "nw", "nd-nw", "nemb"] {
            assert!(err.contains(f), "{err}");
        }
        assert_eq!(call(&["train", "--set", "train.epochz=1"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("generate"));
    }

    #[test]
    fn generate_requires_road_count() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(&cfg, "[generate]\ndays = 2\n").unwrap();
        let (code, _, err) = call(&["generate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("generate.roads"), "{err}");
    }

    #[test]
    fn missing_inputs_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        fs::write(&cfg, "[paths]\ndata_dir = \"nowhere\"\n").unwrap();
        let (code, _, err) = call(&["evaluate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code, EXIT_RUNTIME);
        assert_eq!(err.lines().count(), 1, "{err}");
    }
}
