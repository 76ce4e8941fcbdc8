use anyhow::{bail, Result};
use noisy_shadows::planner::{plan_general, plan_global, plan_pauli_for_channel, Plan};
use noisy_shadows::shadow::{f_of_e, DEPOLARIZING_FLOOR};
use noisy_shadows::{ChannelDescriptor, PauliString, QuantumChannel, ShadowError};
use serde::{Deserialize, Serialize};

use super::{emit, Common};
use crate::config::read_json;
use crate::failure::ConfigError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Measurement {
    CliffordGlobal,
    CliffordProduct,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PlanObservable {
    Pauli(String),
    TrO2(f64),
    Detailed { tr_o2: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Scenario {
    n: usize,
    /// Defaults to product Cliffords when every observable is a Pauli string.
    #[serde(default)]
    ensemble: Option<Measurement>,
    channel: ChannelDescriptor,
    observables: Vec<PlanObservable>,
    /// Number of observables to be estimated; defaults to the number listed.
    #[serde(rename = "M", default)]
    m: Option<usize>,
    #[serde(alias = "epsilon")]
    eps: f64,
    delta: f64,
}

#[derive(Serialize)]
struct Row {
    observable: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    weight: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tr_o2: Option<f64>,
    /// Squared-seminorm value (product) or upper bound (global) entering `N`.
    seminorm_sq: f64,
}

#[derive(Serialize)]
struct PlanOutput {
    #[serde(flatten)]
    plan: Plan,
    ensemble: Measurement,
    observables: Vec<Row>,
}

fn config_err(msg: String) -> anyhow::Error {
    ConfigError(msg).into()
}

fn paulis(s: &Scenario) -> Result<Option<Vec<PauliString>>> {
    let mut out = Vec::new();
    for o in &s.observables {
        let PlanObservable::Pauli(text) = o else {
            return Ok(None);
        };
        let p: PauliString = text
            .parse()
            .map_err(|e| config_err(format!("observable \"{text}\": {e}")))?;
        if p.len() != s.n {
            bail!(config_err(format!(
                "Pauli string \"{text}\" acts on {} qubits, expected {}",
                p.len(),
                s.n
            )));
        }
        out.push(p);
    }
    Ok(Some(out))
}

fn product_plan(
    s: &Scenario,
    e: &QuantumChannel,
    ps: &[PauliString],
    m: usize,
) -> Result<(Plan, Vec<Row>)> {
    let factors = e.qubit_factors().ok_or_else(|| {
        config_err(format!(
            "channel {} is not a product of single-qubit channels",
            e.label()
        ))
    })?;
    let fs: Vec<f64> = factors.iter().map(f_of_e).collect();
    if let Some(i) = fs.iter().position(|f| f.abs() <= DEPOLARIZING_FLOOR) {
        bail!(ShadowError::NotInvertible {
            beta: factors[i].beta()
        });
    }
    let rows: Vec<Row> = ps
        .iter()
        .map(|p| Row {
            observable: p.to_string(),
            weight: Some(p.weight()),
            tr_o2: None,
            seminorm_sq: p
                .support()
                .iter()
                .map(|&q| 1.0 / (3.0 * fs[q] * fs[q]))
                .product(),
        })
        .collect();
    let uniform = fs.iter().all(|&f| (f - fs[0]).abs() <= 1e-15);
    let plan = if uniform {
        // Unlisted observables count toward M with weight zero, which never raises the maximum.
        let mut weights: Vec<usize> = ps.iter().map(PauliString::weight).collect();
        weights.resize(m, 0);
        plan_pauli_for_channel(&weights, &factors[0], s.eps, s.delta)?
    } else {
        let max = rows.iter().map(|r| r.seminorm_sq).fold(0.0, f64::max);
        plan_general(max, m, s.eps, s.delta)?
    };
    Ok((plan, rows))
}

fn global_plan(s: &Scenario, e: &QuantumChannel, m: usize) -> Result<(Plan, Vec<Row>)> {
    if !e.is_trace_preserving(1e-9) {
        bail!(config_err(format!(
            "global planning needs a trace-preserving channel, got {}",
            e.label()
        )));
    }
    let d = (1u64 << s.n) as f64;
    let beta = e.beta();
    let scale = 3.0 * (d - 1.0).powi(2) / (beta - 1.0).powi(2);
    let rows: Vec<Row> = s
        .observables
        .iter()
        .map(|o| match o {
            PlanObservable::Pauli(p) => Row {
                observable: p.clone(),
                weight: None,
                tr_o2: Some(d),
                seminorm_sq: scale * d,
            },
            PlanObservable::TrO2(t) | PlanObservable::Detailed { tr_o2: t } => Row {
                observable: format!("tr(O^2)={t}"),
                weight: None,
                tr_o2: Some(*t),
                seminorm_sq: scale * t,
            },
        })
        .collect();
    let max_tr = rows.iter().filter_map(|r| r.tr_o2).fold(0.0, f64::max);
    Ok((plan_global(max_tr, s.n, beta, m, s.eps, s.delta)?, rows))
}

pub fn run(common: &Common) -> Result<()> {
    let s: Scenario = read_json(common.config_path()?)?;
    if s.observables.is_empty() {
        bail!(config_err("no observables given".into()));
    }
    let m = s.m.unwrap_or(s.observables.len());
    if m < s.observables.len() {
        bail!(config_err(format!(
            "M = {m} is smaller than the {} observables listed",
            s.observables.len()
        )));
    }
    let e = QuantumChannel::from_descriptor(&s.channel)?;
    if e.dim() != 1 << s.n {
        bail!(config_err(format!(
            "channel has dimension {}, expected {}",
            e.dim(),
            1usize << s.n
        )));
    }
    let ps = paulis(&s)?;
    let ensemble = s.ensemble.unwrap_or(if ps.is_some() {
        Measurement::CliffordProduct
    } else {
        Measurement::CliffordGlobal
    });
    let (plan, rows) = match (ensemble, &ps) {
        (Measurement::CliffordProduct, Some(ps)) => product_plan(&s, &e, ps, m)?,
        (Measurement::CliffordProduct, None) => {
            bail!(config_err(
                "product Clifford planning needs Pauli-string observables".into()
            ))
        }
        (Measurement::CliffordGlobal, _) => global_plan(&s, &e, m)?,
    };

    eprintln!(
        "{:<20} {:>6} {:>12} {:>16}",
        "observable", "weight", "tr(O^2)", "seminorm^2"
    );
    for r in &rows {
        let w = r.weight.map_or("-".into(), |w| w.to_string());
        let t = r.tr_o2.map_or("-".into(), |t| format!("{t}"));
        eprintln!(
            "{:<20} {:>6} {:>12} {:>16.6}",
            r.observable, w, t, r.seminorm_sq
        );
    }
    eprintln!("N = {}  K = {}  N_total = {}", plan.n, plan.k, plan.n_total);
    if let Some(b) = plan.n_total_bound {
        eprintln!(
            "closed-form bound on N_total: {b:.1} ({:?})",
            plan.bound_source
        );
    }

    emit(
        common,
        "plan.json",
        &PlanOutput {
            plan,
            ensemble,
            observables: rows,
        },
    )
}
