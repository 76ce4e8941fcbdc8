use anyhow::{bail, Result};
use noisy_shadows::linalg::qubits_for_dim;
use noisy_shadows::seminorm::{auto, compute, compute_with_oracle, SeminormContext};
use noisy_shadows::{ChannelDescriptor, EnsembleDescriptor, ShadowError};
use serde::Deserialize;

use super::{emit, Common};
use crate::config::{base_dir, build_protocol, read_json, ObservableSpec, PostProcessing};
use crate::failure::ConfigError;

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeminormConfig {
    ensemble: EnsembleDescriptor,
    channel: ChannelDescriptor,
    #[serde(default)]
    input_noise: Option<ChannelDescriptor>,
    #[serde(default)]
    post_processing: PostProcessing,
    observable: ObservableSpec,
    /// A registered method name; the first applicable one when absent.
    #[serde(default)]
    method: Option<String>,
    /// Compares with the brute-force value when it is affordable.
    #[serde(default = "yes")]
    oracle: bool,
}

pub fn run(common: &Common) -> Result<()> {
    let path = common.config_path()?;
    let cfg: SeminormConfig = read_json(path)?;
    let n = match cfg.ensemble.n {
        Some(n) => n,
        None => cfg
            .ensemble
            .dim
            .and_then(qubits_for_dim)
            .ok_or_else(|| ConfigError("ensemble needs a qubit count \"n\"".into()))?,
    };
    let o = cfg.observable.build(0, n, &base_dir(path))?;
    let protocol = build_protocol(
        n,
        &cfg.ensemble,
        &cfg.channel,
        cfg.input_noise.as_ref(),
        cfg.post_processing,
    )?;
    let ctx = SeminormContext::from_protocol(&protocol);
    let result = match (cfg.oracle, cfg.method.as_deref()) {
        (true, m) => compute_with_oracle(&ctx, &o.op, m)?,
        (false, Some(m)) => compute(&ctx, &o.op, m)?,
        (false, None) => auto(&ctx, &o.op)?,
    };
    if !result.value.is_finite() {
        bail!(ShadowError::Numerical(format!(
            "seminorm of {} is not finite",
            o.id
        )));
    }
    eprintln!(
        "{}: seminorm {:.10} (squared {:.10}) via {}",
        o.id, result.value, result.value_squared, result.method
    );
    if let Some(d) = result.oracle_discrepancy {
        eprintln!("oracle discrepancy {d:.3e}");
    }
    emit(common, "seminorm.json", &result)
}
