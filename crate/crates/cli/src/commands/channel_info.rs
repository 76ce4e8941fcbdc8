use anyhow::Result;
use noisy_shadows::channels::CptpReport;
use noisy_shadows::linalg::{index_to_bits, qubits_for_dim};
use noisy_shadows::planner::advisory_f_bounds;
use noisy_shadows::shadow::f_of_e;
use noisy_shadows::{ChannelDescriptor, QuantumChannel};
use serde::{Deserialize, Serialize};

use super::{emit, Common};
use crate::config::read_json;

const TOL: f64 = 1e-10;

#[derive(Deserialize)]
#[serde(untagged)]
enum ChannelFile {
    Wrapped { channel: ChannelDescriptor },
    Bare(ChannelDescriptor),
}

#[derive(Serialize)]
struct FBoundsStatus {
    lower: f64,
    upper: f64,
    within: bool,
}

#[derive(Serialize)]
struct ChannelInfo {
    channel: String,
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    alpha: f64,
    beta: f64,
    /// Global-Clifford shadow parameter.
    f: f64,
    f_bounds: FBoundsStatus,
    /// `f` relative to the noiseless value.
    severity_ratio: f64,
    invertible: bool,
    /// Single-qubit shadow parameters, for channels that factor over qubits.
    #[serde(skip_serializing_if = "Option::is_none")]
    qubit_f: Option<Vec<f64>>,
    lambda_n: bool,
    /// Basis states `b` where `E‡(|b⟩⟨b|)` vanishes.
    lambda_n_failures: Vec<String>,
    inconsequential: bool,
    cptp: CptpReport,
}

fn bitstring(b: usize, dim: usize) -> String {
    match qubits_for_dim(dim) {
        Some(n) => index_to_bits(b, n)
            .iter()
            .map(|&x| char::from(b'0' + x))
            .collect(),
        None => b.to_string(),
    }
}

pub fn run(common: &Common) -> Result<()> {
    let desc = match read_json::<ChannelFile>(common.config_path()?)? {
        ChannelFile::Wrapped { channel } | ChannelFile::Bare(channel) => channel,
    };
    let e = QuantumChannel::from_descriptor(&desc)?;
    let adv = advisory_f_bounds(&e);
    let info = ChannelInfo {
        channel: e.label(),
        dim: e.dim(),
        n: e.n(),
        alpha: e.alpha(),
        beta: adv.beta,
        f: adv.f,
        f_bounds: FBoundsStatus {
            lower: adv.lower,
            upper: adv.upper,
            within: adv.within_bounds,
        },
        severity_ratio: adv.severity_ratio,
        invertible: adv.invertible,
        qubit_f: e
            .qubit_factors()
            .filter(|fs| fs.len() > 1)
            .map(|fs| fs.iter().map(f_of_e).collect()),
        lambda_n: e.in_lambda_n(TOL),
        lambda_n_failures: e
            .lambda_n_failures(TOL)
            .into_iter()
            .map(|b| bitstring(b, e.dim()))
            .collect(),
        inconsequential: e.is_inconsequential(TOL),
        cptp: e.cptp_report(1e-9),
    };
    eprintln!("{}", info.channel);
    eprintln!(
        "  beta = {:.12}  f = {:.12}  in [{:.6}, {:.6}]: {}",
        info.beta, info.f, info.f_bounds.lower, info.f_bounds.upper, info.f_bounds.within
    );
    eprintln!(
        "  invertible: {}  lambda_n: {}  inconsequential: {}",
        info.invertible, info.lambda_n, info.inconsequential
    );
    emit(common, "channel_info.json", &info)
}
