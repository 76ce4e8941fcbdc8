//! Noisy measurement simulation, shadow collection and median-of-means estimation.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{EnsembleElement, UnitaryTag};
use crate::error::{Result, ShadowError};
use crate::linalg::random::stream_rng;
use crate::linalg::{traceless_part, DenseOperator, DensityMatrix, HermitianObservable};
use crate::seminorm::{self, SeminormContext};
use crate::shadow::{ShadowProtocol, ShadowSet, ShadowSetHeader, Snapshot};

/// Slack on Born probabilities: entries below `-BORN_TOL` or totals off by more are errors.
pub const BORN_TOL: f64 = 1e-9;
/// Default cap on the number of snapshots a single estimate may consume.
pub const DEFAULT_MAX_SNAPSHOTS: usize = 20_000_000;

/// One simulated noisy measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementOutcome {
    pub u: UnitaryTag,
    pub b: usize,
    pub prob: f64,
}

/// `P(b) = ⟨b|E(U σ U†)|b⟩` for an already prepared state `σ`.
pub fn born_probabilities(
    prepared: &DenseOperator,
    u: &DenseOperator,
    e: &crate::channels::QuantumChannel,
) -> Result<Vec<f64>> {
    let out = e.apply(&prepared.conjugate_by(u))?;
    let mut probs: Vec<f64> = (0..out.dim()).map(|b| out.get(b, b).re).collect();
    if let Some((b, p)) = probs.iter().enumerate().find(|(_, p)| **p < -BORN_TOL) {
        return Err(ShadowError::ChannelValidity(format!(
            "negative outcome probability {p:.3e} at b={b}"
        )));
    }
    let total: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    if (total - 1.0).abs() > BORN_TOL {
        return Err(ShadowError::ChannelValidity(format!(
            "outcome probabilities sum to {total}"
        )));
    }
    for p in &mut probs {
        *p = p.max(0.0) / total;
    }
    Ok(probs)
}

fn draw<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (b, p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return b;
        }
    }
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Measures `E(U ρ U†)` in the computational basis.
pub fn born_sample<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    u: &EnsembleElement,
    e: &crate::channels::QuantumChannel,
    rng: &mut R,
) -> Result<MeasurementOutcome> {
    let probs = born_probabilities(rho.op(), &u.unitary, e)?;
    let b = draw(&probs, rng);
    Ok(MeasurementOutcome {
        u: u.tag.clone(),
        b,
        prob: probs[b],
    })
}

fn measure(
    protocol: &ShadowProtocol,
    prepared: &DenseOperator,
    seed: u64,
    i: usize,
) -> Result<(EnsembleElement, usize)> {
    let mut rng = stream_rng(seed, i as u64);
    let el = protocol.ensemble.sample(&mut rng)?;
    let probs = born_probabilities(prepared, &el.unitary, &protocol.channel)?;
    let b = draw(&probs, &mut rng);
    Ok((el, b))
}

fn check_state(protocol: &ShadowProtocol, rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != protocol.dim() {
        return Err(ShadowError::DimensionMismatch {
            expected: protocol.dim(),
            found: rho.dim(),
        });
    }
    Ok(())
}

/// `count` snapshots, each from a fresh copy of `ρ`. Snapshot `i` uses RNG stream `i`
/// of `seed`, so the set does not depend on the thread count.
pub fn collect_shadows(
    rho: &DensityMatrix,
    protocol: &ShadowProtocol,
    count: usize,
    seed: u64,
) -> Result<ShadowSet> {
    if count == 0 {
        return Err(ShadowError::EmptyInput("snapshot count must be at least 1"));
    }
    check_state(protocol, rho)?;
    let prepared = protocol.prepare(rho.op())?;
    let snapshots = (0..count)
        .into_par_iter()
        .map(|i| {
            let (el, b) = measure(protocol, &prepared, seed, i)?;
            Ok(Snapshot {
                rho_hat: protocol.snapshot(&el.unitary, b)?,
                tag: el.tag,
                outcome: b,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let header = ShadowSetHeader {
        n: protocol.n(),
        count,
        seed,
        ensemble: protocol.ensemble.descriptor(),
        channel: protocol.channel.descriptor().clone(),
        input_noise: protocol
            .input_noise
            .as_ref()
            .map(|k| k.descriptor().clone()),
        state: None,
        inverse: protocol.inverse().descriptors(),
    };
    ShadowSet::new(header, snapshots)
}

/// `⟨b|U Õ U†|b⟩`, which equals `tr(O ρ̂)` for `Õ = inverse†(O)`.
fn projected_value(effective: &DenseOperator, u: &DenseOperator, b: usize) -> f64 {
    let row = u.matrix().row(b);
    (row * effective.matrix() * row.adjoint())[(0, 0)].re
}

/// `tr(O_j ρ̂_i)` for `count` snapshots without materializing them; indexed `[j][i]`.
/// Uses the same streams as [`collect_shadows`].
pub fn shadow_values(
    rho: &DensityMatrix,
    observables: &[DenseOperator],
    protocol: &ShadowProtocol,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_state(protocol, rho)?;
    let prepared = protocol.prepare(rho.op())?;
    let effective: Vec<DenseOperator> = observables
        .iter()
        .map(|o| protocol.effective_observable(o))
        .collect::<Result<_>>()?;
    let rows = (0..count)
        .into_par_iter()
        .map(|i| {
            let (el, b) = measure(protocol, &prepared, seed, i)?;
            Ok(effective
                .iter()
                .map(|o| projected_value(o, &el.unitary, b))
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..observables.len())
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect())
}

/// Means of `k` consecutive buckets of size `⌊L/k⌋`; the trailing remainder is dropped.
pub fn bucket_means(values: &[f64], k: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(ShadowError::EmptyInput("median of means over no values"));
    }
    if k == 0 || k > values.len() {
        return Err(ShadowError::InvalidParameter(format!(
            "bucket count {k} must lie in 1..={}",
            values.len()
        )));
    }
    let size = values.len() / k;
    Ok(values[..k * size]
        .chunks(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect())
}

/// Median of sorted-or-not values; even lengths give the midpoint of the central pair.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn median_of_means(values: &[f64], k: usize) -> Result<f64> {
    Ok(median(&bucket_means(values, k)?))
}

/// Ceiling that ignores a relative excess of `1e-9`, so `2 ln(e)` rounds to 2.
pub fn ceil_tol(x: f64) -> f64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil()
}

/// `⌈2 ln(2M/δ)⌉`, at least 1.
pub fn bucket_count(m: usize, delta: f64) -> usize {
    (ceil_tol(2.0 * (2.0 * m as f64 / delta).ln()) as usize).max(1)
}

/// `⌈34 s / ε²⌉`, at least 1.
pub fn bucket_size(max_seminorm_sq: f64, epsilon: f64) -> usize {
    (ceil_tol(34.0 * max_seminorm_sq / (epsilon * epsilon)) as usize).max(1)
}

/// Accuracy target and resource limits for [`estimate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateSettings {
    pub epsilon: f64,
    pub delta: f64,
    /// Snapshots per bucket, replacing the seminorm-derived value.
    #[serde(default)]
    pub n_override: Option<usize>,
    #[serde(default = "default_max_snapshots")]
    pub max_snapshots: usize,
}

fn default_max_snapshots() -> usize {
    DEFAULT_MAX_SNAPSHOTS
}

impl EstimateSettings {
    pub fn new(epsilon: f64, delta: f64) -> Self {
        Self {
            epsilon,
            delta,
            n_override: None,
            max_snapshots: DEFAULT_MAX_SNAPSHOTS,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("delta", self.delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ShadowError::InvalidParameter(format!(
                    "{name} = {v} must lie in (0, 1)"
                )));
            }
        }
        if self.n_override == Some(0) {
            return Err(ShadowError::InvalidParameter(
                "snapshots per bucket must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableEstimate {
    pub observable_id: String,
    pub value: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub bucket_means: Vec<f64>,
    /// Squared seminorm of the traceless part, when computed.
    pub seminorm_sq: Option<f64>,
    pub seminorm_method: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimates: Vec<ObservableEstimate>,
    pub seed: u64,
    pub snapshots: usize,
}

/// Median-of-means estimates of `tr(O_j ρ)` from one shared set of `N·K` snapshots.
pub fn estimate(
    rho: &DensityMatrix,
    observables: &[(String, HermitianObservable)],
    protocol: &ShadowProtocol,
    settings: &EstimateSettings,
    seed: u64,
) -> Result<EstimateReport> {
    settings.validate()?;
    if observables.is_empty() {
        return Err(ShadowError::EmptyInput("no observables to estimate"));
    }
    let n_qubits = protocol.n();
    let ctx = SeminormContext::from_protocol(protocol);
    let mut norms = Vec::with_capacity(observables.len());
    for (id, o) in observables {
        if o.dim() != protocol.dim() {
            return Err(ShadowError::DimensionMismatch {
                expected: protocol.dim(),
                found: o.dim(),
            });
        }
        let traceless = traceless_part(o, n_qubits)?;
        match seminorm::auto(&ctx, &traceless) {
            Ok(r) => norms.push(Some((r.value_squared, r.method))),
            Err(ShadowError::Unsupported(msg)) if settings.n_override.is_none() => {
                return Err(ShadowError::Unsupported(format!(
                    "no seminorm for observable {id} ({msg}); supply snapshots per bucket explicitly"
                )))
            }
            Err(ShadowError::Unsupported(_)) => norms.push(None),
            Err(other) => return Err(other),
        }
    }
    let k = bucket_count(observables.len(), settings.delta);
    let n = settings.n_override.unwrap_or_else(|| {
        let max_sq = norms.iter().flatten().map(|(s, _)| *s).fold(0.0, f64::max);
        bucket_size(max_sq, settings.epsilon)
    });
    let total = n
        .checked_mul(k)
        .filter(|&t| t <= settings.max_snapshots)
        .ok_or_else(|| {
            ShadowError::InvalidParameter(format!(
                "plan needs {n} x {k} snapshots, above the limit of {}",
                settings.max_snapshots
            ))
        })?;
    let ops: Vec<DenseOperator> = observables.iter().map(|(_, o)| o.op().clone()).collect();
    let values = shadow_values(rho, &ops, protocol, total, seed)?;
    let estimates = observables
        .iter()
        .zip(values)
        .zip(norms)
        .map(|(((id, _), vals), norm)| {
            let means = bucket_means(&vals, k)?;
            Ok(ObservableEstimate {
                observable_id: id.clone(),
                value: median(&means),
                n,
                k,
                bucket_means: means,
                seminorm_sq: norm.as_ref().map(|(s, _)| *s),
                seminorm_method: norm.map(|(_, m)| m),
            })
        })
        .collect::<Result<_>>()?;
    Ok(EstimateReport {
        estimates,
        seed,
        snapshots: total,
    })
}

/// Unbiased sample variance of `tr(O ρ̂)` over `samples` independent snapshots.
pub fn empirical_variance(
    rho: &DensityMatrix,
    o: &HermitianObservable,
    protocol: &ShadowProtocol,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if samples < 2 {
        return Err(ShadowError::InvalidParameter(
            "variance needs at least two samples".into(),
        ));
    }
    let vals = shadow_values(rho, std::slice::from_ref(o.op()), protocol, samples, seed)?.remove(0);
    let mean = vals.iter().sum::<f64>() / samples as f64;
    Ok(vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64)
}

/// Exact mean and variance of `tr(O ρ̂)` by summing over every `(U, b)`.
pub fn exact_moments(
    rho: &DensityMatrix,
    o: &HermitianObservable,
    protocol: &ShadowProtocol,
) -> Result<(f64, f64)> {
    check_state(protocol, rho)?;
    let prepared = protocol.prepare(rho.op())?;
    let effective = protocol.effective_observable(o.op())?;
    let elements = protocol.ensemble.elements()?;
    let (m1, m2) = elements.iter().try_fold((0.0, 0.0), |(m1, m2), el| {
        let probs = born_probabilities(&prepared, &el.unitary, &protocol.channel)?;
        Ok::<_, ShadowError>(probs.iter().enumerate().fold((m1, m2), |(a, b), (k, p)| {
            let v = projected_value(&effective, &el.unitary, k);
            (a + p * v, b + p * v * v)
        }))
    })?;
    let w = elements.len() as f64;
    let mean = m1 / w;
    Ok((mean, m2 / w - mean * mean))
}

/// `E[ρ̂]` by summing over every `(U, b)` with exact Born weights.
pub fn exact_mean_state(rho: &DensityMatrix, protocol: &ShadowProtocol) -> Result<DenseOperator> {
    check_state(protocol, rho)?;
    let prepared = protocol.prepare(rho.op())?;
    let elements = protocol.ensemble.elements()?;
    let mut acc = DenseOperator::zeros(protocol.dim());
    for el in elements.iter() {
        let probs = born_probabilities(&prepared, &el.unitary, &protocol.channel)?;
        for (b, p) in probs.iter().enumerate() {
            if *p > 0.0 {
                acc += &protocol.snapshot(&el.unitary, b)?.scale_real(*p);
            }
        }
    }
    Ok(acc.scale_real(1.0 / elements.len() as f64))
}
