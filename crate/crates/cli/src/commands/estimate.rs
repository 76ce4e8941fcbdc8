use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use noisy_shadows::estimator::{collect_shadows, estimate, EstimateSettings, ObservableEstimate};
use noisy_shadows::planner::advisory_f_bounds;
use serde::Serialize;

use super::{to_json, write_file, Common};
use crate::config::{base_dir, read_json, Experiment, ExperimentConfig};

#[derive(Serialize)]
struct TrialEstimate {
    trial: usize,
    seed: u64,
    #[serde(flatten)]
    estimate: ObservableEstimate,
    /// `tr(Oρ)` for the simulated state.
    exact: f64,
}

#[derive(Serialize)]
struct Report {
    seed: u64,
    config_digest: String,
    trials: usize,
    snapshots_per_trial: usize,
    estimates: Vec<TrialEstimate>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    trial: usize,
    seed: u64,
    observable_id: &'a str,
    value: f64,
    exact: f64,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "K")]
    k: usize,
}

fn write_csv(path: &Path, rows: &[TrialEstimate]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(CsvRow {
            trial: r.trial,
            seed: r.seed,
            observable_id: &r.estimate.observable_id,
            value: r.estimate.value,
            exact: r.exact,
            n: r.estimate.n,
            k: r.estimate.k,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn write_shadows(
    path: &Path,
    cfg: &ExperimentConfig,
    exp: &Experiment,
    count: usize,
) -> Result<()> {
    let mut set = collect_shadows(&exp.rho, &exp.protocol, count, cfg.seed)?;
    set.header.state = Some(serde_json::to_value(&cfg.state)?);
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    set.write_jsonl(BufWriter::new(file), false)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn run(common: &Common) -> Result<()> {
    let path = common.config_path()?;
    let mut cfg: ExperimentConfig = read_json(path)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let exp = cfg.build(&base_dir(path))?;
    let advisory = advisory_f_bounds(&exp.protocol.channel);
    if !advisory.within_bounds {
        eprintln!(
            "warning: f(E) = {:.6e} lies outside [{:.6e}, {:.6e}]",
            advisory.f, advisory.lower, advisory.upper
        );
    }

    let mut settings = EstimateSettings::new(cfg.epsilon, cfg.delta);
    settings.n_override = cfg.snapshots_per_bucket;
    if let Some(max) = cfg.max_snapshots {
        settings.max_snapshots = max;
    }
    let named: Vec<_> = exp
        .observables
        .iter()
        .map(|o| (o.id.clone(), o.op.clone()))
        .collect();
    let exact: Vec<f64> = exp
        .observables
        .iter()
        .map(|o| o.op.op().trace_product(exp.rho.op()).re)
        .collect();

    let mut rows = Vec::new();
    let mut snapshots = 0;
    for trial in 0..cfg.trials {
        let seed = cfg.seed.wrapping_add(trial as u64);
        let report = estimate(&exp.rho, &named, &exp.protocol, &settings, seed)?;
        snapshots = report.snapshots;
        rows.extend(
            report
                .estimates
                .into_iter()
                .zip(&exact)
                .map(|(estimate, &exact)| TrialEstimate {
                    trial,
                    seed,
                    estimate,
                    exact,
                }),
        );
    }

    let report = Report {
        seed: cfg.seed,
        config_digest: cfg.digest(),
        trials: cfg.trials,
        snapshots_per_trial: snapshots,
        estimates: rows,
    };
    let out = common.out_dir()?.unwrap_or(Path::new("."));
    write_file(&out.join(&cfg.outputs.report), &to_json(&report)?)?;
    write_file(&out.join("config.json"), &to_json(&cfg)?)?;
    write_csv(&out.join(&cfg.outputs.csv), &report.estimates)?;
    let shadows = common
        .shadows_out
        .clone()
        .or_else(|| cfg.outputs.shadows.as_ref().map(|p| out.join(p)));
    if let Some(p) = shadows {
        write_shadows(&p, &cfg, &exp, snapshots)?;
    }

    eprintln!(
        "{} trial(s), {} snapshots each, digest {}",
        cfg.trials,
        snapshots,
        &report.config_digest[..12]
    );
    eprintln!(
        "{:<6} {:<16} {:>12} {:>12} {:>8} {:>4}",
        "trial", "observable", "estimate", "exact", "N", "K"
    );
    for r in &report.estimates {
        eprintln!(
            "{:<6} {:<16} {:>12.6} {:>12.6} {:>8} {:>4}",
            r.trial,
            r.estimate.observable_id,
            r.estimate.value,
            r.exact,
            r.estimate.n,
            r.estimate.k
        );
    }
    Ok(())
}
