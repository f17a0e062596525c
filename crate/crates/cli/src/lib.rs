//! Figure presets and command bodies behind the `uepmm` binary.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use uepmm::analytics::{expected_loss_mds, expected_loss_now, now_decoding_bound, now_loss_given_received, CountConvention};
use uepmm::coding::{Strategy, WindowMode};
use uepmm::simrun::{format_value, Experiment, ExperimentConfig, FigureTable, SweepAxis, CSV_VERSION};
use uepmm_train::{train_and_evaluate, AccuracyCurve, Encoding, TrainConfig};

/// Reads a TOML config, reporting parse errors on a single line.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].lines().count().max(1));
        match line {
            Some(l) => anyhow!("{}:{l}: {}", path.display(), e.message().trim()),
            None => anyhow!("{}: {}", path.display(), e.message().trim()),
        }
    })
}

pub mod presets {
    use super::*;

    pub fn fig2() -> ExperimentConfig {
        ExperimentConfig::reference()
    }

    /// Class-wide windows with the lagged packet count.
    pub fn fig3() -> ExperimentConfig {
        ExperimentConfig {
            trials: 200_000,
            window_mode: WindowMode::ClassWide,
            count_convention: CountConvention::Lagged,
            ..ExperimentConfig::reference()
        }
    }

    pub fn fig4() -> ExperimentConfig {
        ExperimentConfig {
            trials: 20_000,
            window_mode: WindowMode::ClassWide,
            deadlines: Vec::new(),
            received: (0..=20).collect(),
            ..ExperimentConfig::reference()
        }
    }
}

/// `received,class-1,...`: decoding probability of every class after `N`
/// packets, for `N = 0..=workers`.
pub fn fig2_csv(cfg: &ExperimentConfig) -> Result<String> {
    let exp = Experiment::new(cfg.clone())?;
    let counts = exp.profile().class_counts();
    let mut out = format!("# {CSV_VERSION}: NOW decoding probability by received packets\nreceived");
    for l in 1..=counts.len() {
        out.push_str(&format!(",class-{l}"));
    }
    out.push('\n');
    for n in 0..=cfg.workers {
        let p = now_decoding_bound(&cfg.gamma, counts, n)?;
        out.push_str(&n.to_string());
        for v in p {
            out.push(',');
            out.push_str(&format_value(v));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Normalized loss against the deadline. NOW (for synthetic inputs) and MDS
/// rows are exact expectations with `ci = 0`; every other strategy is
/// simulated.
pub fn fig3_table(cfg: &ExperimentConfig) -> Result<FigureTable> {
    let exp = Experiment::new(cfg.clone())?;
    let k = exp.profile().subproducts();
    let mut table = FigureTable::new("normalized loss by deadline", "t");
    let simulated: Vec<Strategy> = cfg
        .strategies
        .iter()
        .copied()
        .filter(|&s| !(s == Strategy::Mds || (s == Strategy::Now && exp.variances().is_some())))
        .collect();
    let mc = if simulated.is_empty() {
        Vec::new()
    } else {
        Experiment::new(ExperimentConfig {
            strategies: simulated,
            ..cfg.clone()
        })?
        .sweep(SweepAxis::Deadline)?
    };
    for &s in &cfg.strategies {
        for &t in &cfg.deadlines {
            let (value, ci) = match (s, exp.variances()) {
                (Strategy::Now, Some(vp)) => {
                    let l = expected_loss_now(
                        &cfg.gamma,
                        exp.profile(),
                        vp,
                        &cfg.latency,
                        cfg.workers,
                        t,
                        cfg.count_convention,
                    )?;
                    (l.normalized, 0.0)
                }
                (Strategy::Mds, _) => (expected_loss_mds(k, &cfg.latency, cfg.workers, t)?, 0.0),
                _ => {
                    let p = mc
                        .iter()
                        .find(|p| p.strategy == s && p.x == t)
                        .ok_or_else(|| anyhow!("missing simulated point {s} at t={t}"))?;
                    (p.loss.mean, p.loss.ci)
                }
            };
            table.push(t, s.name(), value, ci);
        }
    }
    Ok(table)
}

/// Normalized loss against the number of received packets: simulated rows
/// for every strategy plus `now-analytic` rows for synthetic inputs.
pub fn fig4_table(cfg: &ExperimentConfig) -> Result<FigureTable> {
    let exp = Experiment::new(cfg.clone())?;
    let mut table = FigureTable::new("normalized loss by received packets", "received");
    table.extend_sweep(&exp.sweep(SweepAxis::Received)?);
    if let Some(vp) = exp.variances() {
        let weights = vp.class_weights(exp.profile())?;
        for &n in &cfg.received {
            let v = now_loss_given_received(&cfg.gamma, exp.profile().class_counts(), &weights, n)?;
            table.push(n as f64, "now-analytic", v, 0.0);
        }
    }
    Ok(table)
}

/// One table per configured sweep axis, keyed by file stem.
pub fn sim_tables(cfg: &ExperimentConfig) -> Result<Vec<(String, FigureTable)>> {
    if cfg.deadlines.is_empty() && cfg.received.is_empty() {
        bail!("config lists neither `deadlines` nor `received`; nothing to sweep");
    }
    let exp = Experiment::new(cfg.clone())?;
    let mut out = Vec::new();
    for (axis, stem, label, present) in [
        (SweepAxis::Deadline, "sim-deadline", "t", !cfg.deadlines.is_empty()),
        (SweepAxis::Received, "sim-received", "received", !cfg.received.is_empty()),
    ] {
        if present {
            let mut table = FigureTable::new(format!("simulated normalized loss ({stem})"), label);
            table.extend_sweep(&exp.sweep(axis)?);
            out.push((stem.to_string(), table));
        }
    }
    Ok(out)
}

/// Every `(encoding, deadline)` run of `cfg`, trained in parallel and
/// returned in config order. The baseline ignores the deadline and runs once.
pub fn train_runs(cfg: &TrainConfig) -> Result<Vec<AccuracyCurve>> {
    cfg.validate()?;
    let (train, test) = cfg.dataset.load(cfg.train_samples, cfg.test_samples)?;
    let mut jobs = Vec::new();
    for &enc in &cfg.encodings {
        if enc == Encoding::Baseline {
            jobs.push((enc, f64::INFINITY));
        } else {
            jobs.extend(cfg.deadlines.iter().map(|&t| (enc, t)));
        }
    }
    jobs.into_par_iter()
        .map(|(enc, t)| train_and_evaluate(cfg, enc, t, &train, &test).map_err(Into::into))
        .collect()
}

/// File stem of a training curve, e.g. `train-now-t0.5` or `train-baseline`.
pub fn curve_stem(curve: &AccuracyCurve) -> String {
    if curve.encoding == Encoding::Baseline {
        "train-baseline".into()
    } else {
        format!("train-{}-t{}", curve.encoding, curve.deadline)
    }
}

pub fn curve_csv(curve: &AccuracyCurve) -> String {
    let t = if curve.encoding == Encoding::Baseline {
        "none".to_string()
    } else {
        curve.deadline.to_string()
    };
    format!(
        "# {CSV_VERSION}: held-out accuracy, encoding {}, deadline {t}\n{}",
        curve.encoding,
        curve.to_csv()
    )
}

pub fn train_summary_csv(curves: &[AccuracyCurve]) -> String {
    let mut out = format!("# {CSV_VERSION}: final held-out accuracy\nencoding,deadline,iterations,accuracy,full_recovery\n");
    for c in curves {
        let iters = c.points.last().map_or(0, |p| p.0);
        out.push_str(&format!(
            "{},{},{iters},{},{}\n",
            c.encoding,
            format_value(c.deadline),
            format_value(c.final_accuracy()),
            format_value(c.full_recovery)
        ));
    }
    out
}
