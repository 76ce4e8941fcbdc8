//! Experiment configuration files and their resolution into library objects.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use noisy_shadows::linalg::random::{random_density, random_pure_ket, seeded, stream_rng};
use noisy_shadows::linalg::MatrixJson;
use noisy_shadows::{
    ChannelDescriptor, DenseOperator, DensityMatrix, EnsembleDescriptor, HermitianObservable,
    PauliString, QuantumChannel, ShadowProtocol, UnitaryEnsemble, C64,
};
use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::ConfigError;

/// Reads and parses a JSON file. Parse failures carry the file path and the line and column.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())).into())
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Input state of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    /// `zero`, `one`, `plus`, `minus`, `plus_i`, `minus_i` (all as n-fold products), `ghz`
    /// or `maximally_mixed`.
    Named { name: String },
    /// Computational basis state, qubit 0 first.
    Basis { bits: String },
    /// Dense density matrix, inline or from a JSON file of `[re, im]` entries.
    Matrix {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<MatrixJson>,
    },
    /// Haar-random pure state, or a random full-rank state when `mixed`. Without an
    /// explicit seed the state is drawn from the experiment seed.
    Random {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default)]
        mixed: bool,
    },
}

fn product_ket(single: [C64; 2], n: usize) -> Vec<C64> {
    (0..1usize << n)
        .map(|idx| {
            (0..n).fold(C64::new(1.0, 0.0), |acc, q| {
                let bit = (idx >> (n - 1 - q)) & 1;
                acc * single[bit]
            })
        })
        .collect()
}

fn pure_state(ket: &[C64]) -> Result<DensityMatrix> {
    let op = DenseOperator::from_fn(ket.len(), |i, j| ket[i] * ket[j].conj());
    Ok(DensityMatrix::new(op)?)
}

fn parse_bits(bits: &str, n: usize) -> Result<usize> {
    if bits.len() != n {
        bail!(config_err(format!(
            "bitstring \"{bits}\" has length {}, expected {n}",
            bits.len()
        )));
    }
    bits.chars().try_fold(0usize, |acc, c| match c {
        '0' => Ok(acc << 1),
        '1' => Ok((acc << 1) | 1),
        other => Err(config_err(format!(
            "bitstring \"{bits}\" contains '{other}'"
        ))),
    })
}

fn load_matrix(
    path: Option<&PathBuf>,
    inline: Option<&MatrixJson>,
    base: &Path,
    what: &str,
) -> Result<DenseOperator> {
    let m = match (path, inline) {
        (Some(p), None) => read_json::<MatrixJson>(&base.join(p))?,
        (None, Some(m)) => m.clone(),
        _ => bail!(config_err(format!(
            "{what} needs exactly one of \"path\" or \"matrix\""
        ))),
    };
    Ok(DenseOperator::try_from(&m)?)
}

impl StateSpec {
    pub fn build(&self, n: usize, base: &Path, experiment_seed: u64) -> Result<DensityMatrix> {
        let d = 1usize << n;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (zero, re, im) = (C64::new(0.0, 0.0), C64::new(h, 0.0), C64::new(0.0, h));
        let rho = match self {
            StateSpec::Named { name } => match name.as_str() {
                "zero" => DensityMatrix::basis_state(0, d),
                "one" => DensityMatrix::basis_state(d - 1, d),
                "plus" => pure_state(&product_ket([re, re], n))?,
                "minus" => pure_state(&product_ket([re, -re], n))?,
                "plus_i" => pure_state(&product_ket([re, im], n))?,
                "minus_i" => pure_state(&product_ket([re, -im], n))?,
                "ghz" => {
                    let mut ket = vec![zero; d];
                    ket[0] = re;
                    ket[d - 1] = re;
                    pure_state(&ket)?
                }
                "maximally_mixed" => DensityMatrix::maximally_mixed(d),
                other => bail!(config_err(format!("unknown named state \"{other}\""))),
            },
            StateSpec::Basis { bits } => DensityMatrix::basis_state(parse_bits(bits, n)?, d),
            StateSpec::Matrix { path, matrix } => {
                let op = load_matrix(path.as_ref(), matrix.as_ref(), base, "matrix state")?;
                if op.dim() != d {
                    bail!(config_err(format!(
                        "state has dimension {}, expected {d}",
                        op.dim()
                    )));
                }
                DensityMatrix::new(op)?
            }
            StateSpec::Random { seed, mixed } => {
                let seed = seed.unwrap_or_else(|| stream_rng(experiment_seed, u64::MAX).next_u64());
                let mut rng = seeded(seed);
                if *mixed {
                    DensityMatrix::new(random_density(d, &mut rng))?
                } else {
                    DensityMatrix::pure(&random_pure_ket(d, &mut rng))?
                }
            }
        };
        Ok(rho)
    }
}

/// A Pauli string such as `"XIZ"`, or an object naming a Pauli string or a dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    Pauli(String),
    Detailed(ObservableEntry),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pauli: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixJson>,
}

#[derive(Clone, Debug)]
pub struct Observable {
    pub id: String,
    pub op: HermitianObservable,
}

fn parse_pauli(s: &str, n: usize) -> Result<PauliString> {
    let p: PauliString = s
        .parse()
        .map_err(|e| config_err(format!("observable \"{s}\": {e}")))?;
    if p.len() != n {
        bail!(config_err(format!(
            "Pauli string \"{s}\" acts on {} qubits, expected {n}",
            p.len()
        )));
    }
    Ok(p)
}

impl ObservableSpec {
    pub fn build(&self, index: usize, n: usize, base: &Path) -> Result<Observable> {
        match self {
            ObservableSpec::Pauli(s) => {
                let p = parse_pauli(s, n)?;
                Ok(Observable {
                    id: s.clone(),
                    op: p.to_observable(),
                })
            }
            ObservableSpec::Detailed(entry) => {
                if let Some(s) = &entry.pauli {
                    if entry.path.is_some() || entry.matrix.is_some() {
                        bail!(config_err(format!(
                            "observable {index}: \"pauli\" excludes \"path\" and \"matrix\""
                        )));
                    }
                    let p = parse_pauli(s, n)?;
                    return Ok(Observable {
                        id: entry.id.clone().unwrap_or_else(|| s.clone()),
                        op: p.to_observable(),
                    });
                }
                let what = format!("observable {index}");
                let op = load_matrix(entry.path.as_ref(), entry.matrix.as_ref(), base, &what)?;
                if op.dim() != 1 << n {
                    bail!(config_err(format!(
                        "{what} has dimension {}, expected {}",
                        op.dim(),
                        1 << n
                    )));
                }
                let id = entry.id.clone().unwrap_or_else(|| match &entry.path {
                    Some(p) => p
                        .file_stem()
                        .map_or(what.clone(), |s| s.to_string_lossy().into_owned()),
                    None => format!("O{index}"),
                });
                Ok(Observable {
                    id,
                    op: HermitianObservable::new(op)?,
                })
            }
        }
    }
}

/// Which inverse the classical post-processing applies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostProcessing {
    /// The inverse of the noisy shadow channel.
    #[default]
    Matched,
    /// The noiseless inverse, ignoring the measurement noise.
    Noiseless,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default = "default_report")]
    pub report: PathBuf,
    #[serde(default = "default_csv")]
    pub csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shadows: Option<PathBuf>,
}

fn default_report() -> PathBuf {
    "report.json".into()
}

fn default_csv() -> PathBuf {
    "estimates.csv".into()
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            report: default_report(),
            csv: default_csv(),
            shadows: None,
        }
    }
}

fn one() -> usize {
    1
}

/// Inputs of an `estimate` run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub state: StateSpec,
    pub ensemble: EnsembleDescriptor,
    pub channel: ChannelDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_noise: Option<ChannelDescriptor>,
    #[serde(default)]
    pub post_processing: PostProcessing,
    pub observables: Vec<ObservableSpec>,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    /// Independent repetitions; trial `t` uses seed `seed + t`.
    #[serde(default = "one")]
    pub trials: usize,
    /// Fixes the snapshots per bucket instead of deriving it from the seminorm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots_per_bucket: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_snapshots: Option<usize>,
    #[serde(default)]
    pub outputs: OutputPaths,
}

/// Everything an `estimate` run needs, built from an [`ExperimentConfig`].
pub struct Experiment {
    pub rho: DensityMatrix,
    pub observables: Vec<Observable>,
    pub protocol: ShadowProtocol,
}

/// Ensemble and channel with a dimension check against `n` qubits.
pub fn build_pair(
    n: usize,
    ens: &EnsembleDescriptor,
    channel: &ChannelDescriptor,
) -> Result<(UnitaryEnsemble, QuantumChannel)> {
    let ensemble = UnitaryEnsemble::from_descriptor(ens).context("building ensemble")?;
    let channel = QuantumChannel::from_descriptor(channel).context("building channel")?;
    let d = 1usize << n;
    for (what, dim) in [("ensemble", ensemble.dim()), ("channel", channel.dim())] {
        if dim != d {
            bail!(config_err(format!(
                "{what} has dimension {dim}, expected {d} for n = {n}"
            )));
        }
    }
    Ok((ensemble, channel))
}

/// Protocol with the requested post-processing and optional input noise.
pub fn build_protocol(
    n: usize,
    ens: &EnsembleDescriptor,
    channel: &ChannelDescriptor,
    input_noise: Option<&ChannelDescriptor>,
    post: PostProcessing,
) -> Result<ShadowProtocol> {
    let (ensemble, channel) = build_pair(n, ens, channel)?;
    let mut protocol = match post {
        PostProcessing::Matched => ShadowProtocol::new(ensemble, channel)?,
        PostProcessing::Noiseless => ShadowProtocol::naive(ensemble, channel)?,
    };
    if let Some(k) = input_noise {
        let k = QuantumChannel::from_descriptor(k).context("building input noise")?;
        protocol = protocol.with_input_noise(k)?;
    }
    Ok(protocol)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            bail!(config_err("n must be at least 1"));
        }
        for (name, v) in [("epsilon", self.epsilon), ("delta", self.delta)] {
            if !(v > 0.0 && v < 1.0) {
                bail!(config_err(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        if self.trials == 0 {
            bail!(config_err("trials must be at least 1"));
        }
        if self.observables.is_empty() {
            bail!(config_err("no observables given"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(bytes))
    }

    /// Resolves files relative to `base`.
    pub fn build(&self, base: &Path) -> Result<Experiment> {
        self.validate()?;
        let protocol = build_protocol(
            self.n,
            &self.ensemble,
            &self.channel,
            self.input_noise.as_ref(),
            self.post_processing,
        )?;
        let rho = self.state.build(self.n, base, self.seed)?;
        let observables = self
            .observables
            .iter()
            .enumerate()
            .map(|(i, o)| o.build(i, self.n, base))
            .collect::<Result<Vec<_>>>()?;
        Ok(Experiment {
            rho,
            observables,
            protocol,
        })
    }
}

/// Directory that relative paths in the config at `path` are resolved against.
pub fn base_dir(path: &Path) -> PathBuf {
    path.parent()
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}
