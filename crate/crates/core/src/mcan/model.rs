use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamBuilder, ParamStore, Session, Shape, Var};
use crate::error::{Error, Result};
use crate::graphdata::PeriodicWindow;
use crate::hsc::{Channel, Hsc};
use crate::nn::{Activation, Attention, Fnn, Lstm};

use super::data::{SampleInputs, SampleTargets};
use super::ModelConfig;

#[derive(Clone, Debug)]
struct Layers {
    hsc: [Option<Hsc>; 3],
    msc: [Option<Fnn>; 3],
    recent: Lstm,
    daily: Option<Lstm>,
    weekly: Option<Lstm>,
    context_static: Fnn,
    context_dynamic: Lstm,
    fusion: Attention,
    head: Fnn,
}

/// The full network: parameters plus the layer layout that reads them.
#[derive(Clone, Debug)]
pub struct Mcan {
    pub config: ModelConfig,
    pub store: ParamStore,
    layers: Layers,
}

/// Tape handles of one forward pass.
#[derive(Clone, Debug)]
pub struct BundleVars {
    /// `H x 1` scaled speed prediction.
    pub speed: Var,
    /// Spatial trend and deviation channel outputs (`H x 1`), when enabled.
    pub trend: Option<Var>,
    pub deviation: Option<Var>,
    /// `1 x n` attention weights over `components`.
    pub fusion_weights: Var,
    pub components: Vec<&'static str>,
}

/// Plain values of one forward pass, in scaled units.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionBundle {
    pub speed: Vec<f64>,
    pub trend: Option<Vec<f64>>,
    pub deviation: Option<Vec<f64>>,
    pub fusion_weights: Vec<f64>,
    pub components: Vec<&'static str>,
}

impl BundleVars {
    pub fn values(&self, s: &Session<'_>) -> PredictionBundle {
        PredictionBundle {
            speed: s.value(self.speed).to_vec(),
            trend: self.trend.map(|v| s.value(v).to_vec()),
            deviation: self.deviation.map(|v| s.value(v).to_vec()),
            fusion_weights: s.value(self.fusion_weights).to_vec(),
            components: self.components.clone(),
        }
    }
}

/// `sum (pred - truth)^2 + alpha (trend_0 - trend)^2 + beta (dev_0 - dev)^2`
/// for one sample. Auxiliary terms of disabled channels are omitted.
pub fn loss_value(pred: &PredictionBundle, truth: &SampleTargets, alpha: f64, beta: f64) -> Result<f64> {
    if pred.speed.len() != truth.speed.len() {
        return Err(Error::shape(
            "loss",
            format!("{} predicted speeds for {} targets", pred.speed.len(), truth.speed.len()),
        ));
    }
    let mut l: f64 = pred.speed.iter().zip(&truth.speed).map(|(p, y)| (p - y).powi(2)).sum();
    if let Some(tr) = &pred.trend {
        l += alpha * (tr[0] - truth.trend).powi(2);
    }
    if let Some(de) = &pred.deviation {
        l += beta * (de[0] - truth.deviation).powi(2);
    }
    Ok(l)
}

fn periodic_steps(s: &mut Session<'_>, w: &PeriodicWindow) -> Vec<Var> {
    w.steps().into_iter().map(|x| s.column(x.to_vec())).collect()
}

impl Mcan {
    /// Fresh parameters drawn from `seed`.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = ParamBuilder::new(&mut store, &mut rng);
        let h = config.hidden;
        let hsc_cfg = config.hsc();
        let enc = config.context_encoding();
        let ab = config.ablation;

        let mut hsc: [Option<Hsc>; 3] = [None, None, None];
        let mut msc: [Option<Fnn>; 3] = [None, None, None];
        for (i, ch) in Channel::ALL.into_iter().enumerate() {
            if !ab.channel_enabled(ch) {
                continue;
            }
            hsc[i] = Some(b.scope(&format!("hsc_{}", ch.name()), |b| Hsc::new(b, &hsc_cfg))?);
            let extra = usize::from(ch != Channel::Speed);
            msc[i] = Some(b.scope(&format!("msc_{}", ch.name()), |b| {
                Fnn::new(
                    b,
                    &[config.horizon + extra, h],
                    Activation::Sigmoid,
                    Activation::Sigmoid,
                    config.dropout,
                )
            })?);
        }
        let recent = b.scope("mtc_recent", |b| Lstm::new(b, 4, h, config.lstm_layers))?;
        let daily = if ab.nd {
            None
        } else {
            Some(b.scope("mtc_daily", |b| Lstm::new(b, 3, h, config.lstm_layers))?)
        };
        let weekly = if ab.nw {
            None
        } else {
            Some(b.scope("mtc_weekly", |b| Lstm::new(b, 3, h, config.lstm_layers))?)
        };
        let context_static = b.scope("context_static", |b| {
            Fnn::new(
                b,
                &[enc.static_width(), h],
                Activation::Sigmoid,
                Activation::Sigmoid,
                config.dropout,
            )
        })?;
        let context_dynamic = b.scope("context_dynamic", |b| {
            Lstm::new(b, enc.dynamic_width(), h, config.lstm_layers)
        })?;
        let fusion = b.scope("fusion", |b| Attention::new(b, h, config.fusion_width))?;
        let head = b.scope("head", |b| {
            Fnn::new(
                b,
                &[config.fusion_width, h, config.horizon],
                Activation::Sigmoid,
                Activation::Identity,
                config.dropout,
            )
        })?;
        Ok(Mcan {
            config: config.clone(),
            store,
            layers: Layers {
                hsc,
                msc,
                recent,
                daily,
                weekly,
                context_static,
                context_dynamic,
                fusion,
                head,
            },
        })
    }

    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }

    pub fn forward(&self, s: &mut Session<'_>, inputs: &SampleInputs) -> Result<BundleVars> {
        let l = &self.layers;
        let c = &self.config;
        let mut components = Vec::new();
        let mut names = Vec::new();
        let mut channel_out: [Option<Var>; 3] = [None, None, None];

        for (i, ch) in Channel::ALL.into_iter().enumerate() {
            let (Some(hsc), Some(msc)) = (&l.hsc[i], &l.msc[i]) else {
                continue;
            };
            let input = inputs.spatial[i]
                .as_ref()
                .ok_or_else(|| Error::MissingData(format!("no spatial input for the {} channel", ch.name())))?;
            let y = hsc.forward(s, input)?.output;
            channel_out[i] = Some(y);
            let x = match ch {
                Channel::Speed => y,
                Channel::Trend => {
                    let prev = s.scalar_const(inputs.prev_speed);
                    s.concat_rows(&[y, prev])?
                }
                Channel::Deviation => {
                    let avg = s.scalar_const(inputs.average_at_t);
                    s.concat_rows(&[y, avg])?
                }
            };
            components.push(msc.forward(s, x)?);
            names.push(match ch {
                Channel::Speed => "msc_speed",
                Channel::Trend => "msc_trend",
                Channel::Deviation => "msc_deviation",
            });
        }

        let rec = &inputs.temporal.recent;
        if rec.speed.len() != c.lr {
            return Err(Error::shape(
                "mtc_forward",
                format!("recent window {}x4 but lr = {}", rec.speed.len(), c.lr),
            ));
        }
        let steps: Vec<Var> = rec.steps().into_iter().map(|x| s.column(x.to_vec())).collect();
        components.push(l.recent.sequence(s, &steps)?);
        names.push("mtc_recent");
        for (lstm, w, len, name) in [
            (&l.daily, &inputs.temporal.daily, c.ld, "mtc_daily"),
            (&l.weekly, &inputs.temporal.weekly, c.lw, "mtc_weekly"),
        ] {
            let Some(lstm) = lstm else { continue };
            if w.speed.len() != len {
                return Err(Error::shape(
                    "mtc_forward",
                    format!("{name} window {}x3 but expected {len}x3", w.speed.len()),
                ));
            }
            let steps = periodic_steps(s, w);
            components.push(lstm.sequence(s, &steps)?);
            names.push(name);
        }

        let xr = s.column(inputs.context.static_features.clone());
        components.push(l.context_static.forward(s, xr)?);
        names.push("context_static");
        let xe: Vec<Var> = inputs.context.dynamic.iter().map(|v| s.column(v.clone())).collect();
        components.push(l.context_dynamic.sequence(s, &xe)?);
        names.push("context_dynamic");

        let fused = l.fusion.fuse(s, &components)?;
        let speed = l.head.forward(s, fused.output)?;
        Ok(BundleVars {
            speed,
            trend: channel_out[1],
            deviation: channel_out[2],
            fusion_weights: fused.weights,
            components: names,
        })
    }

    /// Evaluation-mode forward pass.
    pub fn predict(&self, inputs: &SampleInputs) -> Result<PredictionBundle> {
        let mut s = Session::eval(&self.store);
        let b = self.forward(&mut s, inputs)?;
        Ok(b.values(&s))
    }

    /// Differentiable per-sample loss.
    pub fn loss(&self, s: &mut Session<'_>, bundle: &BundleVars, truth: &SampleTargets) -> Result<Var> {
        let h = self.config.horizon;
        if truth.speed.len() != h {
            return Err(Error::shape(
                "loss",
                format!("{} speed targets for horizon {h}", truth.speed.len()),
            ));
        }
        let y = s.constant(Shape::col(h), truth.speed.clone())?;
        let r = s.sub(bundle.speed, y)?;
        let sq = s.square(r);
        let mut total = s.sum(sq);
        for (out, target, weight) in [
            (bundle.trend, truth.trend, self.config.alpha),
            (bundle.deviation, truth.deviation, self.config.beta),
        ] {
            let Some(out) = out else { continue };
            let first = s.slice_rows(out, 0, 1)?;
            let r = s.affine(first, 1.0, -target);
            let sq = s.square(r);
            let term = s.scale(sq, weight);
            total = s.add(total, term)?;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check_gradients;
    use crate::graphdata::{generate_synthetic, SynthConfig};
    use crate::mcan::{Ablation, ModelData};
    use crate::trainer::Normalization;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            horizon: 2,
            lr: 3,
            ld: 1,
            lw: 1,
            window_minutes: 60,
            c: 6,
            hops: 2,
            filters: 2,
            k_em: 3,
            k_gcn: 3,
            hidden: 3,
            lstm_layers: 1,
            fusion_width: 3,
            dropout: 0.0,
            ..ModelConfig::default()
        }
    }

    fn data(config: &ModelConfig) -> ModelData {
        let ds = generate_synthetic(
            &SynthConfig {
                roads: 4,
                days: 9,
                interval_menu: vec![10, 20],
                edge_density: 0.5,
                ..SynthConfig::default()
            },
            21,
        )
        .unwrap();
        let norm = Normalization::fit(&ds, |_, _| true).unwrap();
        ModelData::new(&ds, &norm, config).unwrap()
    }

    fn bundle(speed: Vec<f64>, trend: f64, dev: f64) -> PredictionBundle {
        PredictionBundle {
            speed,
            trend: Some(vec![trend]),
            deviation: Some(vec![dev]),
            fusion_weights: vec![],
            components: vec![],
        }
    }

    #[test]
    fn loss_hand_example() {
        let truth = SampleTargets {
            speed: vec![0.0, 0.0],
            trend: 0.0,
            deviation: 0.0,
        };
        let l = loss_value(&bundle(vec![1.0, -1.0], 2.0, 3.0), &truth, 0.2, 0.2).unwrap();
        approx::assert_abs_diff_eq!(l, 4.6, epsilon = 1e-12);
        assert_eq!(loss_value(&bundle(vec![0.0, 0.0], 0.0, 0.0), &truth, 0.2, 0.2).unwrap(), 0.0);
        assert_eq!(loss_value(&bundle(vec![1.0, -1.0], 2.0, 3.0), &truth, 0.0, 0.0).unwrap(), 2.0);
        assert!(loss_value(&bundle(vec![1.0], 0.0, 0.0), &truth, 0.2, 0.2).is_err());
    }

    #[test]
    fn differentiable_loss_matches_plain() {
        let cfg = tiny_config();
        let md = data(&cfg);
        let model = Mcan::new(&cfg, 1).unwrap();
        let s0 = md.samples()[5];
        let inputs = md.inputs(s0).unwrap();
        let truth = md.targets(s0).unwrap();
        let mut s = Session::eval(&model.store);
        let b = model.forward(&mut s, &inputs).unwrap();
        let l = model.loss(&mut s, &b, &truth).unwrap();
        let plain = loss_value(&b.values(&s), &truth, cfg.alpha, cfg.beta).unwrap();
        approx::assert_abs_diff_eq!(s.scalar(l), plain, epsilon = 1e-12);
    }

    #[test]
    fn component_counts_follow_ablation() {
        let mut cfg = tiny_config();
        let md = data(&cfg);
        let s0 = md.samples()[0];
        let full = Mcan::new(&cfg, 1).unwrap().predict(&md.inputs(s0).unwrap()).unwrap();
        assert_eq!(full.components.len(), 8);
        assert_eq!(full.speed.len(), 2);
        let total: f64 = full.fusion_weights.iter().sum();
        approx::assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);

        cfg.ablation = Ablation {
            ntr: true,
            nde: true,
            nd: true,
            nw: true,
            nemb: false,
        };
        let md = data(&cfg);
        let lean = Mcan::new(&cfg, 1).unwrap();
        let p = lean.predict(&md.inputs(s0).unwrap()).unwrap();
        assert_eq!(p.components, vec!["msc_speed", "mtc_recent", "context_static", "context_dynamic"]);
        assert!(p.trend.is_none() && p.deviation.is_none());
        assert!(lean.param_count() < Mcan::new(&tiny_config(), 1).unwrap().param_count());
    }

    #[test]
    fn ntr_nde_keeps_only_speed_channel() {
        let mut cfg = tiny_config();
        cfg.ablation = "ntr-nde".parse().unwrap();
        let md = data(&cfg);
        let p = Mcan::new(&cfg, 1).unwrap().predict(&md.inputs(md.samples()[0]).unwrap()).unwrap();
        let msc: Vec<_> = p.components.iter().filter(|c| c.starts_with("msc")).collect();
        assert_eq!(msc, vec![&"msc_speed"]);
    }

    #[test]
    fn nd_nw_keeps_only_recent_branch() {
        let mut cfg = tiny_config();
        cfg.ablation = "nd-nw".parse().unwrap();
        let md = data(&cfg);
        let p = Mcan::new(&cfg, 1).unwrap().predict(&md.inputs(md.samples()[0]).unwrap()).unwrap();
        let mtc: Vec<_> = p.components.iter().filter(|c| c.starts_with("mtc")).collect();
        assert_eq!(mtc, vec![&"mtc_recent"]);
    }

    #[test]
    fn each_ablation_sheds_parameters() {
        let full = Mcan::new(&tiny_config(), 1).unwrap().param_count();
        for flag in Ablation::FLAGS {
            let mut cfg = tiny_config();
            cfg.ablation = flag.parse().unwrap();
            assert!(Mcan::new(&cfg, 1).unwrap().param_count() < full, "{flag}");
        }
    }

    #[test]
    fn zero_network_predicts_zero() {
        let cfg = tiny_config();
        let md = data(&cfg);
        let mut model = Mcan::new(&cfg, 1).unwrap();
        for p in model.store.params_mut() {
            p.values.iter_mut().for_each(|v| *v = 0.0);
        }
        let p = model.predict(&md.inputs(md.samples()[3]).unwrap()).unwrap();
        assert_eq!(p.speed, vec![0.0, 0.0]);
        assert_eq!(p.trend, Some(vec![0.0, 0.0]));
    }

    #[test]
    fn recent_window_shape_contract() {
        let cfg = tiny_config();
        let md = data(&cfg);
        let model = Mcan::new(&cfg, 1).unwrap();
        let mut inputs = md.inputs(md.samples()[0]).unwrap();
        assert!(model.predict(&inputs).is_ok());
        inputs.temporal.recent.speed.pop();
        inputs.temporal.recent.trend.pop();
        inputs.temporal.recent.deviation.pop();
        inputs.temporal.recent.average.pop();
        let err = model.predict(&inputs).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }), "{err}");
    }

    #[test]
    fn holiday_flag_changes_dynamic_summary() {
        let cfg = tiny_config();
        let md = data(&cfg);
        let model = Mcan::new(&cfg, 5).unwrap();
        let inputs = md.inputs(md.samples()[2]).unwrap();
        let mut flipped = inputs.clone();
        let hol = cfg.weather_codes;
        for v in flipped.context.dynamic.iter_mut() {
            v[hol] = 1.0 - v[hol];
        }
        assert_ne!(model.predict(&inputs).unwrap().speed, model.predict(&flipped).unwrap().speed);
    }

    #[test]
    fn deterministic_in_eval_mode() {
        let cfg = tiny_config();
        let md = data(&cfg);
        let model = Mcan::new(&cfg, 2).unwrap();
        let inputs = md.inputs(md.samples()[9]).unwrap();
        assert_eq!(model.predict(&inputs).unwrap(), model.predict(&inputs).unwrap());
    }

    #[test]
    fn prev_speed_column_gets_gradient() {
        let cfg = tiny_config();
        let md = data(&cfg);
        let model = Mcan::new(&cfg, 3).unwrap();
        let s0 = md.samples()[4];
        let inputs = md.inputs(s0).unwrap();
        let truth = md.targets(s0).unwrap();
        let report = check_gradients(
            &model.store,
            1e-4,
            1e-6,
            |name, k| name == "msc_trend.l0.w" && k % (cfg.horizon + 1) == cfg.horizon,
            |s| {
                let b = model.forward(s, &inputs)?;
                model.loss(s, &b, &truth)
            },
        )
        .unwrap();
        assert_eq!(report.checked, cfg.hidden);
        assert!(report.nonzero > 0);
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn end_to_end_gradients() {
        let cfg = tiny_config();
        let md = data(&cfg);
        let model = Mcan::new(&cfg, 4).unwrap();
        let s0 = md.samples()[11];
        assert!(md.graph().k_hop_neighbors(s0.road, 2).unwrap()[0].len() > 0);
        let inputs = md.inputs(s0).unwrap();
        let truth = md.targets(s0).unwrap();
        let report = check_gradients(&model.store, 1e-4, 1e-6, |_, _| true, |s| {
            let b = model.forward(s, &inputs)?;
            model.loss(s, &b, &truth)
        })
        .unwrap();
        assert_eq!(report.checked, model.param_count());
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}
