use anyhow::{bail, Result};
use noisy_shadows::identities::{run_battery, BatteryConfig, MonteCarloSettings};

use super::{emit, Common};
use crate::failure::NumericalFailure;

pub fn run(
    common: &Common,
    samples: usize,
    skip_monte_carlo: bool,
    lemma_trials: usize,
) -> Result<()> {
    let seed = common.seed.unwrap_or(BatteryConfig::default().seed);
    let cfg = BatteryConfig {
        seed,
        lemma_trials,
        monte_carlo: (!skip_monte_carlo).then_some(MonteCarloSettings {
            samples,
            seed,
            ..MonteCarloSettings::default()
        }),
    };
    let report = run_battery(&cfg)?;
    for c in &report.checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        eprintln!(
            "{mark} {:<48} residual {:.3e} (tolerance {:.1e})",
            c.name, c.max_residual, c.tolerance
        );
    }
    for cell in &report.klocal_identity_cell {
        eprintln!(
            "     k-local identity cell, {} at f = {}: matches {}",
            cell.observable, cell.depolarizing_parameter, cell.matches
        );
    }
    emit(common, "verify.json", &report)?;
    if !report.all_passed {
        let failed: Vec<_> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        bail!(NumericalFailure(format!(
            "identity checks failed: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}
