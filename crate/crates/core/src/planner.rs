//! Sample-complexity plans for median-of-means shadow estimation.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::channels::QuantumChannel;
use crate::error::{Result, ShadowError};
use crate::estimator::{bucket_count, bucket_size};
use crate::shadow::{check_f_bounds, f_of_e, DEPOLARIZING_FLOOR};

/// Constant of the global-Clifford bound (`34 · 6`).
pub const GLOBAL_CONSTANT: f64 = 204.0;
/// Constant of the product-Clifford Pauli bound (`34 · 2`).
pub const PAULI_CONSTANT: f64 = 68.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSource {
    General,
    Global3design,
    PauliProduct,
    Depolarizing,
    AmplitudeDamping,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// Snapshots per bucket.
    #[serde(rename = "N")]
    pub n: usize,
    /// Number of buckets.
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N_total")]
    pub n_total: usize,
    /// Real-valued closed-form bound on the total, when one is stated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_total_bound: Option<f64>,
    pub bound_source: BoundSource,
    pub inputs: Value,
}

fn check_accuracy(m: usize, eps: f64, delta: f64) -> Result<()> {
    if m == 0 {
        return Err(ShadowError::InvalidParameter(
            "number of observables must be at least 1".into(),
        ));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(ShadowError::InvalidParameter(format!(
            "epsilon = {eps} must lie in (0, 1]"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ShadowError::InvalidParameter(format!(
            "delta = {delta} must lie in (0, 1)"
        )));
    }
    Ok(())
}

fn split(max_seminorm_sq: f64, m: usize, eps: f64, delta: f64) -> Result<(usize, usize, usize)> {
    if !(max_seminorm_sq >= 0.0 && max_seminorm_sq.is_finite()) {
        return Err(ShadowError::InvalidParameter(format!(
            "squared seminorm {max_seminorm_sq} must be finite and nonnegative"
        )));
    }
    let (n, k) = (bucket_size(max_seminorm_sq, eps), bucket_count(m, delta));
    let total = n
        .checked_mul(k)
        .ok_or_else(|| ShadowError::Numerical("snapshot count overflows".into()))?;
    Ok((n, k, total))
}

/// `K = ⌈2 ln(2M/δ)⌉`, `N = ⌈34 s/ε²⌉` for the largest squared seminorm `s`.
pub fn plan_general(max_seminorm_sq: f64, m: usize, eps: f64, delta: f64) -> Result<Plan> {
    check_accuracy(m, eps, delta)?;
    let (n, k, n_total) = split(max_seminorm_sq, m, eps, delta)?;
    Ok(Plan {
        n,
        k,
        n_total,
        n_total_bound: None,
        bound_source: BoundSource::General,
        inputs: json!({"max_seminorm_sq": max_seminorm_sq, "M": m, "epsilon": eps, "delta": delta}),
    })
}

/// Global Clifford measurements under trace-preserving noise with parameter `β`:
/// total bound `204 (2^n−1)² ln(2M/δ) max tr(O²) / ((β−1)² ε²)`. The split uses the
/// squared-seminorm upper bound `3 (2^n−1)² max tr(O²) / (β−1)²`.
pub fn plan_global(
    max_tr_o2: f64,
    n_qubits: usize,
    beta: f64,
    m: usize,
    eps: f64,
    delta: f64,
) -> Result<Plan> {
    check_accuracy(m, eps, delta)?;
    if (beta - 1.0).abs() <= DEPOLARIZING_FLOOR {
        return Err(ShadowError::NotInvertible { beta });
    }
    let scale = ((1u64 << n_qubits) as f64 - 1.0).powi(2) / (beta - 1.0).powi(2);
    let log = (2.0 * m as f64 / delta).ln();
    let bound = GLOBAL_CONSTANT * scale * log * max_tr_o2 / (eps * eps);
    let (n, k, n_total) = split(3.0 * scale * max_tr_o2, m, eps, delta)?;
    Ok(Plan {
        n,
        k,
        n_total,
        n_total_bound: Some(bound),
        bound_source: BoundSource::Global3design,
        inputs: json!({"max_tr_o2": max_tr_o2, "n": n_qubits, "beta": beta, "M": m, "epsilon": eps, "delta": delta}),
    })
}

/// Squared Pauli seminorm `(1/(3 f²))^{wt}`.
pub fn pauli_factor(weight: usize, f_single: f64) -> f64 {
    (1.0 / (3.0 * f_single * f_single)).powi(weight as i32)
}

/// Product Clifford measurements of Pauli observables with single-qubit shadow
/// parameter `f`: total bound `68 ln(2M/δ) max (1/(3f²))^{wt} / ε²`.
pub fn plan_pauli(weights: &[usize], f_single: f64, eps: f64, delta: f64) -> Result<Plan> {
    check_accuracy(weights.len(), eps, delta)?;
    if f_single.abs() <= DEPOLARIZING_FLOOR {
        return Err(ShadowError::InvalidParameter(
            "single-qubit shadow parameter f must be nonzero".into(),
        ));
    }
    let m = weights.len();
    let max_factor = weights
        .iter()
        .map(|&w| pauli_factor(w, f_single))
        .fold(0.0, f64::max);
    let log = (2.0 * m as f64 / delta).ln();
    let (n, k, n_total) = split(max_factor, m, eps, delta)?;
    Ok(Plan {
        n,
        k,
        n_total,
        n_total_bound: Some(PAULI_CONSTANT * log * max_factor / (eps * eps)),
        bound_source: BoundSource::PauliProduct,
        inputs: json!({"weights": weights, "f": f_single, "M": m, "epsilon": eps, "delta": delta}),
    })
}

/// [`plan_pauli`] with `f = (β − 1)/3` for a single-qubit trace-preserving channel.
pub fn plan_pauli_from_beta(weights: &[usize], beta: f64, eps: f64, delta: f64) -> Result<Plan> {
    plan_pauli(weights, (beta - 1.0) / 3.0, eps, delta)
}

/// [`plan_pauli`] for a named single-qubit noise model, tagging the source accordingly.
pub fn plan_pauli_for_channel(
    weights: &[usize],
    e: &QuantumChannel,
    eps: f64,
    delta: f64,
) -> Result<Plan> {
    if e.dim() != 2 {
        return Err(ShadowError::DimensionMismatch {
            expected: 2,
            found: e.dim(),
        });
    }
    let mut plan = plan_pauli(weights, f_of_e(e), eps, delta)?;
    plan.bound_source = match e.descriptor().kind.as_str() {
        "depolarizing" => BoundSource::Depolarizing,
        "amplitude_damping" => BoundSource::AmplitudeDamping,
        _ => BoundSource::PauliProduct,
    };
    if let Value::Object(map) = &mut plan.inputs {
        map.insert("channel".into(), json!(e.label()));
    }
    Ok(plan)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FAdvisory {
    pub f: f64,
    pub lower: f64,
    pub upper: f64,
    pub within_bounds: bool,
    /// `f(E) / f(identity)`
    pub severity_ratio: f64,
    pub beta: f64,
    pub invertible: bool,
}

/// `f(E)`, its admissible interval, the ratio to the noiseless value and invertibility.
pub fn advisory_f_bounds(e: &QuantumChannel) -> FAdvisory {
    let b = check_f_bounds(e);
    let noiseless = 1.0 / (e.dim() as f64 + 1.0);
    FAdvisory {
        f: b.f,
        lower: b.lower,
        upper: b.upper,
        within_bounds: b.within,
        severity_ratio: b.f / noiseless,
        beta: e.beta(),
        invertible: b.f.abs() > DEPOLARIZING_FLOOR,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn general_examples() {
        let p = plan_general(1.0, 1, 1.0, 2.0 / std::f64::consts::E).unwrap();
        assert_eq!((p.k, p.n), (2, 34));
        let p = plan_general(3.0, 10, 0.1, 0.01).unwrap();
        assert_eq!((p.n, p.k), (10200, 16));
        assert_eq!(p.n_total, 10200 * 16);
        let doubled = plan_general(3.0, 20, 0.1, 0.01).unwrap();
        assert_eq!(doubled.n, p.n);
        assert!(doubled.k >= p.k && doubled.k <= p.k + 2);
        assert!(plan_general(1.0, 0, 0.1, 0.1).is_err());
        assert!(plan_general(1.0, 1, 1.5, 0.1).is_err());
        assert!(plan_general(1.0, 1, 0.1, 0.0).is_err());
    }

    #[test]
    fn global_examples() {
        let p = plan_global(4.0, 2, 1.5, 5, 0.2, 0.05).unwrap();
        let expected = 204.0 * 9.0 * 200f64.ln() / (0.25 * 0.04) * 4.0;
        assert!((p.n_total_bound.unwrap() - expected).abs() < 1e-6 * expected);
        let noiseless = plan_global(1.0, 3, 8.0, 5, 0.2, 0.05).unwrap();
        let expected = 204.0 * 200f64.ln() / 0.04;
        assert!((noiseless.n_total_bound.unwrap() - expected).abs() < 1e-9 * expected);
        assert!(matches!(
            plan_global(1.0, 1, 1.0, 1, 0.1, 0.1),
            Err(ShadowError::NotInvertible { .. })
        ));
        let near = plan_global(1.0, 1, 1.0 + 1e-6, 1, 0.1, 0.1).unwrap();
        assert!(near.n_total_bound.unwrap() > 1e12);
    }

    #[test]
    fn pauli_examples() {
        for w in 0..4 {
            assert!((pauli_factor(w, 1.0 / 3.0) - 3f64.powi(w as i32)).abs() < 1e-9);
        }
        let f = 0.6;
        let e = QuantumChannel::depolarizing(1, f);
        let p = plan_pauli_for_channel(&[2, 1], &e, 0.1, 0.05).unwrap();
        assert_eq!(p.bound_source, BoundSource::Depolarizing);
        let factor = (3.0 / (f * f)).powi(2);
        assert_eq!(p.n, (34.0 * factor / 0.01f64).ceil() as usize);
        let q = plan_pauli(&[0, 0], 0.2, 0.1, 0.05).unwrap();
        assert_eq!(q.n, 3400);
        assert!(plan_pauli(&[1], 0.0, 0.1, 0.1).is_err());
        let ad = plan_pauli_for_channel(
            &[1],
            &QuantumChannel::amplitude_damping(1, 0.5).unwrap(),
            0.1,
            0.1,
        )
        .unwrap();
        assert_eq!(ad.bound_source, BoundSource::AmplitudeDamping);
        assert_eq!(ad.n, (34.0 * 12.0 / 0.01f64).ceil() as usize);
        let b = plan_pauli_from_beta(&[1], 2.0, 0.1, 0.1).unwrap();
        assert_eq!(b.n, plan_pauli(&[1], 1.0 / 3.0, 0.1, 0.1).unwrap().n);
    }

    #[test]
    fn general_and_pauli_agree() {
        for w in 0..4 {
            let f = 0.15;
            let a = plan_general(pauli_factor(w, f), 3, 0.1, 0.05).unwrap();
            let b = plan_pauli(&[w, 0, 0], f, 0.1, 0.05).unwrap();
            assert_eq!(a.n_total, b.n_total);
            assert!(b.n_total as f64 <= b.n_total_bound.unwrap() + (b.n + b.k) as f64 * 34.0);
        }
    }

    #[test]
    fn monotonicity() {
        let eps = [0.05, 0.1, 0.2, 0.4];
        let deltas = [0.01, 0.05, 0.1, 0.3];
        for w in eps.windows(2) {
            assert!(
                plan_general(2.0, 3, w[0], 0.1).unwrap().n_total
                    >= plan_general(2.0, 3, w[1], 0.1).unwrap().n_total
            );
        }
        for w in deltas.windows(2) {
            assert!(
                plan_general(2.0, 3, 0.1, w[0]).unwrap().n_total
                    >= plan_general(2.0, 3, 0.1, w[1]).unwrap().n_total
            );
        }
        for m in 1..20 {
            assert!(
                plan_general(2.0, m + 1, 0.1, 0.1).unwrap().n_total
                    >= plan_general(2.0, m, 0.1, 0.1).unwrap().n_total
            );
        }
        for s in [0.5, 1.0, 2.0, 8.0].windows(2) {
            assert!(
                plan_general(s[1], 3, 0.1, 0.1).unwrap().n_total
                    >= plan_general(s[0], 3, 0.1, 0.1).unwrap().n_total
            );
        }
    }

    #[test]
    fn advisory_examples() {
        let id = advisory_f_bounds(&QuantumChannel::identity(2));
        assert!((id.severity_ratio - 1.0).abs() < 1e-12 && id.invertible && id.within_bounds);
        let ad = advisory_f_bounds(&QuantumChannel::amplitude_damping(1, 0.5).unwrap());
        assert!((ad.f - 1.0 / 6.0).abs() < 1e-12 && (ad.severity_ratio - 0.5).abs() < 1e-12);
        let full = advisory_f_bounds(&QuantumChannel::depolarizing(1, 0.0));
        assert!(!full.invertible && full.f.abs() < 1e-12 && (full.beta - 1.0).abs() < 1e-12);
    }
}
