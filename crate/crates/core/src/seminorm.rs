//! Shadow seminorms `‖O‖_{shadow,𝒰,E}`: the eigenvalue oracle and the closed forms.
//!
//! Every method implements [`SeminormMethod`] and lives in [`method_registry`].
//! [`auto`] picks the first applicable method in [`AUTO_ORDER`].

use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::channels::QuantumChannel;
use crate::ensembles::{DesignClass, UnitaryEnsemble};
use crate::error::{Result, ShadowError};
use crate::linalg::{
    max_eigenvalue, ordered_par_fold, partial_trace, qubits_for_dim, spectral_norm, DenseOperator,
    HermitianObservable, MatrixJson, C64,
};
use crate::pauli::{pauli_coefficients, PauliString};
use crate::registry::{Named, Registry};
use crate::shadow::{
    apply_local_depolarizing, channel_inverse, f_of_e, InverseMap, ShadowChannel, ShadowProtocol,
};

/// Preference order used by [`auto`].
pub const AUTO_ORDER: [&str; 4] = [
    "pauli",
    "global_closed",
    "klocal_depolarizing_derived",
    "bruteforce",
];
/// Upper limit on `|𝒰| · 2^n` for the eigenvalue oracle.
pub const BRUTEFORCE_BUDGET: usize = 200_000;
/// Largest qubit count for Pauli-basis expansions.
pub const MAX_PAULI_QUBITS: usize = 6;
const TRACELESS_TOL: f64 = 1e-9;

/// Ensemble, measurement noise and optional input noise or post-processing override.
#[derive(Clone, Copy, Debug)]
pub struct SeminormContext<'a> {
    pub ensemble: &'a UnitaryEnsemble,
    pub channel: &'a QuantumChannel,
    pub input_noise: Option<&'a QuantumChannel>,
    pub inverse: Option<&'a InverseMap>,
}

impl<'a> SeminormContext<'a> {
    pub fn new(ensemble: &'a UnitaryEnsemble, channel: &'a QuantumChannel) -> Self {
        Self {
            ensemble,
            channel,
            input_noise: None,
            inverse: None,
        }
    }

    pub fn from_protocol(p: &'a ShadowProtocol) -> Self {
        Self {
            ensemble: &p.ensemble,
            channel: &p.channel,
            input_noise: p.input_noise.as_ref(),
            inverse: p.has_custom_inverse().then(|| p.inverse()),
        }
    }

    pub fn dim(&self) -> usize {
        self.ensemble.dim()
    }

    /// True when no input noise or inverse override is present.
    pub fn is_plain(&self) -> bool {
        self.input_noise.is_none() && self.inverse.is_none()
    }

    /// The post-processing map: the override, or `M⁻¹` followed by `K⁻¹`.
    pub fn resolve_inverse(&self) -> Result<InverseMap> {
        if let Some(inv) = self.inverse {
            return Ok(inv.clone());
        }
        let m = ShadowChannel::for_protocol(self.ensemble, self.channel)?.inverse()?;
        match self.input_noise {
            Some(k) => m.then(channel_inverse(k)?),
            None => Ok(m),
        }
    }

    /// Per-qubit shadow parameters when the ensemble is a product of
    /// single-qubit 3-designs and the noise acts qubit-wise.
    fn product_factors(&self) -> Option<Vec<QuantumChannel>> {
        let product = match self.ensemble.design_class() {
            DesignClass::ProductOfQubitDesigns { t } => t >= 3,
            DesignClass::Global { t } => t >= 3 && self.dim() == 2,
            DesignClass::Unknown => false,
        };
        if !product || !self.is_plain() {
            return None;
        }
        self.channel.qubit_factors()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeminormResult {
    pub value: f64,
    pub value_squared: f64,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_discrepancy: Option<f64>,
    pub inputs_digest: String,
}

impl SeminormResult {
    fn new(value: f64, method: &str, digest: String) -> Self {
        Self {
            value,
            value_squared: value * value,
            method: method.to_string(),
            oracle: None,
            oracle_discrepancy: None,
            inputs_digest: digest,
        }
    }
}

fn digest(method: &str, ctx: Option<&SeminormContext>, o: &DenseOperator) -> String {
    let mut h = Sha256::new();
    h.update(method.as_bytes());
    if let Some(ctx) = ctx {
        h.update(ctx.ensemble.label().as_bytes());
        h.update(ctx.channel.label().as_bytes());
        if let Some(k) = ctx.input_noise {
            h.update(k.label().as_bytes());
        }
        if let Some(inv) = ctx.inverse {
            h.update(format!("{:?}", inv.descriptors()).as_bytes());
        }
    }
    h.update(
        serde_json::to_string(&MatrixJson::from(o))
            .unwrap_or_default()
            .as_bytes(),
    );
    format!("{:x}", h.finalize())
}

/// A seminorm evaluation strategy.
pub trait SeminormMethod: Named {
    /// Whether the method is exact for this context and observable.
    fn applies(&self, ctx: &SeminormContext, o: &HermitianObservable) -> bool;
    /// The seminorm value (not squared).
    fn value(&self, ctx: &SeminormContext, o: &HermitianObservable) -> Result<f64>;
}

fn check_dim(ctx: &SeminormContext, o: &HermitianObservable) -> Result<()> {
    if o.dim() != ctx.dim() {
        return Err(ShadowError::DimensionMismatch {
            expected: ctx.dim(),
            found: o.dim(),
        });
    }
    Ok(())
}

/// `Q = E_U Σ_b K‡(U† E‡(|b⟩⟨b|) U) |⟨b|U Õ U†|b⟩|²`; the seminorm is `√λ_max(Q)`.
pub fn bruteforce_matrix(ctx: &SeminormContext, o: &HermitianObservable) -> Result<DenseOperator> {
    check_dim(ctx, o)?;
    let d = ctx.dim();
    let effective = ctx.resolve_inverse()?.apply_adjoint(o.op())?;
    let elements = ctx.ensemble.elements()?;
    let dd = ctx.channel.ddagger();
    let g: Vec<DenseOperator> = (0..d)
        .map(|b| dd.apply(&DenseOperator::projector(b, d)))
        .collect::<Result<_>>()?;
    let sum = ordered_par_fold(
        &elements,
        || DMatrix::<C64>::zeros(d, d),
        |acc, _, el| {
            let rotated = effective.conjugate_by(&el.unitary);
            for (b, gb) in g.iter().enumerate() {
                let weight = rotated.get(b, b).norm_sqr();
                if weight > 0.0 {
                    *acc += gb.conjugate_by_adjoint(&el.unitary).matrix() * C64::new(weight, 0.0);
                }
            }
        },
        |acc, part| *acc += part,
    );
    let q = DenseOperator::from_matrix(sum / C64::new(elements.len() as f64, 0.0))?;
    match ctx.input_noise {
        Some(k) => k.ddagger().apply(&q),
        None => Ok(q),
    }
}

pub struct BruteForce;

impl Named for BruteForce {
    fn name(&self) -> &str {
        "bruteforce"
    }
}

impl SeminormMethod for BruteForce {
    fn applies(&self, ctx: &SeminormContext, o: &HermitianObservable) -> bool {
        o.dim() == ctx.dim()
            && ctx.ensemble.is_enumerable()
            && ctx
                .ensemble
                .size()
                .and_then(|s| s.checked_mul(ctx.dim()))
                .is_some_and(|w| w <= BRUTEFORCE_BUDGET)
    }

    fn value(&self, ctx: &SeminormContext, o: &HermitianObservable) -> Result<f64> {
        let q = bruteforce_matrix(ctx, o)?;
        Ok(max_eigenvalue(&q.hermitian_part()).max(0.0).sqrt())
    }
}

/// Squared global seminorm of a traceless observable for general `α = tr E(I)`, `β`.
/// For `dβ < α` (negative `f`) the spectral-norm term becomes the smallest eigenvalue of `O_o²`.
pub fn global_traceless_squared(o_o: &HermitianObservable, alpha: f64, beta: f64) -> Result<f64> {
    let d = o_o.dim() as f64;
    let tr = o_o.op().trace().re;
    if tr.abs() > TRACELESS_TOL {
        return Err(ShadowError::InvalidParameter(format!(
            "observable has trace {tr:.3e}; expected traceless"
        )));
    }
    let denom = d * beta - alpha;
    if denom.abs() < 1e-12 {
        return Err(ShadowError::NotInvertible { beta });
    }
    let tr_sq = o_o.op().trace_product(o_o.op()).re;
    // the σ-dependent term enters with the sign of dβ − α, so the maximizing
    // state picks the largest or the smallest eigenvalue of O_o²
    let abs_eigs = o_o.eigenvalues().iter().map(|x| x * x).collect::<Vec<_>>();
    let extreme = if denom > 0.0 {
        abs_eigs.iter().copied().fold(0.0, f64::max)
    } else {
        abs_eigs.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let coef = d * (d * d - 1.0) / ((d + 2.0) * denom);
    Ok(coef * (((1.0 + d) * alpha - 2.0 * beta) / denom * tr_sq + 2.0 * extreme))
}

pub fn seminorm_global_traceless(
    o_o: &HermitianObservable,
    alpha: f64,
    beta: f64,
) -> Result<SeminormResult> {
    let sq = global_traceless_squared(o_o, alpha, beta)?;
    let tag = format!("global_closed|alpha={alpha}|beta={beta}");
    Ok(SeminormResult::new(
        sq.max(0.0).sqrt(),
        "global_closed",
        digest(&tag, None, o_o.op()),
    ))
}

pub struct GlobalClosed;

impl Named for GlobalClosed {
    fn name(&self) -> &str {
        "global_closed"
    }
}

impl SeminormMethod for GlobalClosed {
    fn applies(&self, ctx: &SeminormContext, o: &HermitianObservable) -> bool {
        o.dim() == ctx.dim()
            && ctx.is_plain()
            && matches!(ctx.ensemble.design_class(), DesignClass::Global { t } if t >= 3)
            && o.op().trace().re.abs() <= TRACELESS_TOL
    }

    fn value(&self, ctx: &SeminormContext, o: &HermitianObservable) -> Result<f64> {
        check_dim(ctx, o)?;
        Ok(
            global_traceless_squared(o, ctx.channel.alpha(), ctx.channel.beta())?
                .max(0.0)
                .sqrt(),
        )
    }
}

/// The chain `lower ≤ ‖O_o‖² ≤ closed_form_upper ≤ trace_upper` for global 3-designs
/// and trace-preserving noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GlobalBounds {
    pub lower: f64,
    pub closed_form_upper: f64,
    pub trace_upper: f64,
}

pub fn global_bounds(o: &HermitianObservable, n: usize, beta: f64) -> Result<GlobalBounds> {
    if (beta - 1.0).abs() < 1e-12 {
        return Err(ShadowError::NotInvertible { beta });
    }
    let o_o = crate::linalg::traceless_part(o, n)?;
    let scale = ((1u64 << n) as f64 - 1.0).powi(2) / (beta - 1.0).powi(2);
    let lower = scale * o_o.op().trace_product(o_o.op()).re;
    Ok(GlobalBounds {
        lower,
        closed_form_upper: 3.0 * lower,
        trace_upper: 3.0 * scale * o.op().trace_product(o.op()).re,
    })
}

/// `(c, P)` with `O = c·P`, if `O` is a multiple of a single Pauli string.
pub fn scaled_pauli(o: &HermitianObservable) -> Option<(f64, PauliString)> {
    let n = qubits_for_dim(o.dim())?;
    if n > MAX_PAULI_QUBITS {
        return None;
    }
    let coeffs = pauli_coefficients(o).ok()?;
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut hits = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > 1e-12 * scale.max(1.0));
    match (hits.next(), hits.next()) {
        (Some((i, &c)), None) => Some((c, PauliString::from_index(i, n))),
        (None, _) => Some((0.0, PauliString::identity(n))),
        _ => None,
    }
}

/// `‖P‖ = (1/(√3 f))^{wt(P)}` for a single-qubit shadow parameter `f` on every qubit.
pub fn seminorm_pauli_product(p: &PauliString, f_single: f64) -> Result<SeminormResult> {
    seminorm_pauli_per_qubit(p, &vec![f_single; p.len()])
}

/// `Π_{i ∈ supp P} 1/(√3 |f_i|)` with per-qubit shadow parameters.
pub fn seminorm_pauli_per_qubit(p: &PauliString, fs: &[f64]) -> Result<SeminormResult> {
    if fs.len() != p.len() {
        return Err(ShadowError::LengthMismatch {
            expected: p.len(),
            found: fs.len(),
        });
    }
    let value = pauli_value(p, fs)?;
    let tag = format!("pauli|{fs:?}");
    Ok(SeminormResult::new(
        value,
        "pauli",
        digest(&tag, None, &p.to_dense()),
    ))
}

fn pauli_value(p: &PauliString, fs: &[f64]) -> Result<f64> {
    p.support().iter().try_fold(1.0, |acc, &q| {
        let f = fs[q];
        if f.abs() <= crate::shadow::DEPOLARIZING_FLOOR {
            return Err(ShadowError::InvalidParameter(format!(
                "shadow parameter of qubit {q} is zero"
            )));
        }
        Ok(acc / (3f64.sqrt() * f.abs()))
    })
}

pub struct PauliProduct;

impl Named for PauliProduct {
    fn name(&self) -> &str {
        "pauli"
    }
}

impl SeminormMethod for PauliProduct {
    fn applies(&self, ctx: &SeminormContext, o: &HermitianObservable) -> bool {
        o.dim() == ctx.dim() && ctx.product_factors().is_some() && scaled_pauli(o).is_some()
    }

    fn value(&self, ctx: &SeminormContext, o: &HermitianObservable) -> Result<f64> {
        let factors = ctx.product_factors().ok_or_else(|| {
            ShadowError::Unsupported(
                "pauli formula needs a product 3-design and product noise".into(),
            )
        })?;
        let (c, p) = scaled_pauli(o).ok_or_else(|| {
            ShadowError::Unsupported("observable is not a multiple of a Pauli string".into())
        })?;
        let fs: Vec<f64> = factors.iter().map(f_of_e).collect();
        Ok(c.abs() * pauli_value(&p, &fs)?)
    }
}

/// Which value the `(I, I)` cell of the k-local depolarizing table takes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KLocalTable {
    /// `f̃(0,0) = 1/f`
    Printed,
    /// `f̃(0,0) = 1`
    Derived,
}

/// Per-qubit weight `f̃(p, q)` for Pauli indices `p, q ∈ {0,1,2,3}` and depolarizing parameter `f`.
pub fn f_tilde(p: usize, q: usize, f: f64, table: KLocalTable) -> f64 {
    match (p, q) {
        (0, 0) => match table {
            KLocalTable::Printed => 1.0 / f,
            KLocalTable::Derived => 1.0,
        },
        (0, _) | (_, 0) => 1.0,
        _ if p == q => 3.0 / (f * f),
        _ => 0.0,
    }
}

/// Squared seminorm `‖Σ_{p,q} α_p α_q F̃(p,q) P_p P_q‖_sp` for Pauli coefficients `α`
/// over `k = fs.len()` qubits, each under `D_{1,f_i}` noise and a single-qubit 3-design.
pub fn klocal_squared(coeffs: &[f64], fs: &[f64], table: KLocalTable) -> Result<f64> {
    let k = fs.len();
    if coeffs.len() != 1 << (2 * k) {
        return Err(ShadowError::LengthMismatch {
            expected: 1 << (2 * k),
            found: coeffs.len(),
        });
    }
    if let Some(f) = fs.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(ShadowError::InvalidParameter(format!(
            "depolarizing parameter {f} outside (0, 1]"
        )));
    }
    let dim = 1usize << k;
    let active: Vec<(usize, f64)> = coeffs
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, a)| *a != 0.0)
        .collect();
    let dense: Vec<DenseOperator> = active
        .iter()
        .map(|(i, _)| PauliString::from_index(*i, k).to_dense())
        .collect();
    let digits = |i: usize| {
        PauliString::from_index(i, k)
            .ops()
            .iter()
            .map(|p| p.index())
            .collect::<Vec<_>>()
    };
    let mut acc = DenseOperator::zeros(dim);
    for (x, (p, ap)) in active.iter().enumerate() {
        let dp = digits(*p);
        for (y, (q, aq)) in active.iter().enumerate() {
            let dq = digits(*q);
            let weight: f64 = (0..k)
                .map(|i| f_tilde(dp[i], dq[i], fs[i], table))
                .product();
            if weight != 0.0 {
                acc += &(&dense[x] * &dense[y]).scale_real(ap * aq * weight);
            }
        }
    }
    Ok(spectral_norm(&HermitianObservable::new(
        acc.hermitian_part(),
    )?))
}

pub fn seminorm_klocal_depolarizing(
    coeffs: &[f64],
    fs: &[f64],
    table: KLocalTable,
) -> Result<SeminormResult> {
    let sq = klocal_squared(coeffs, fs, table)?;
    let name = match table {
        KLocalTable::Printed => "klocal_depolarizing",
        KLocalTable::Derived => "klocal_depolarizing_derived",
    };
    let k = fs.len();
    let o = crate::pauli::from_pauli_coefficients(coeffs, k)?;
    Ok(SeminormResult::new(
        sq.sqrt(),
        name,
        digest(&format!("{name}|{fs:?}"), None, o.op()),
    ))
}

pub struct KLocalDepolarizing(pub KLocalTable);

impl Named for KLocalDepolarizing {
    fn name(&self) -> &str {
        match self.0 {
            KLocalTable::Printed => "klocal_depolarizing",
            KLocalTable::Derived => "klocal_depolarizing_derived",
        }
    }
}

impl KLocalDepolarizing {
    fn parameters(ctx: &SeminormContext) -> Option<Vec<f64>> {
        let fs: Vec<f64> = ctx
            .product_factors()?
            .iter()
            .map(QuantumChannel::depolarizing_parameter)
            .collect::<Option<_>>()?;
        fs.iter().all(|f| *f > 0.0 && *f <= 1.0).then_some(fs)
    }
}

impl SeminormMethod for KLocalDepolarizing {
    fn applies(&self, ctx: &SeminormContext, o: &HermitianObservable) -> bool {
        o.dim() == ctx.dim()
            && Self::parameters(ctx).is_some()
            && locality_reduce(o).is_ok_and(|(_, s)| s.len() <= MAX_PAULI_QUBITS)
    }

    fn value(&self, ctx: &SeminormContext, o: &HermitianObservable) -> Result<f64> {
        let fs = Self::parameters(ctx).ok_or_else(|| {
            ShadowError::Unsupported(
                "k-local formula needs product 3-designs under depolarizing noise".into(),
            )
        })?;
        let (reduced, support) = locality_reduce(o)?;
        if support.is_empty() {
            return Ok(reduced.op().get(0, 0).re.abs());
        }
        let coeffs = pauli_coefficients(&reduced)?;
        let local: Vec<f64> = support.iter().map(|&q| fs[q]).collect();
        Ok(klocal_squared(&coeffs, &local, self.0)?.sqrt())
    }
}

/// Qubits on which `O` acts nontrivially, and `O` restricted to them.
/// An observable proportional to the identity reduces to a 1×1 matrix.
pub fn locality_reduce(o: &HermitianObservable) -> Result<(HermitianObservable, Vec<usize>)> {
    let d = o.dim();
    let n = qubits_for_dim(d).ok_or_else(|| {
        ShadowError::InvalidParameter(format!("dimension {d} is not a qubit register"))
    })?;
    let tol = 1e-10 * o.op().max_abs().max(1.0);
    let support: Vec<usize> = (0..n)
        .filter(|&q| apply_local_depolarizing(o.op(), n, q, 0.0).max_abs_diff(o.op()) > tol)
        .collect();
    if support.is_empty() {
        let c = o.op().trace() / C64::new(d as f64, 0.0);
        return Ok((
            HermitianObservable::new(DenseOperator::from_fn(1, |_, _| c))?,
            support,
        ));
    }
    let reduced = partial_trace(o.op(), &vec![2; n], &support)?;
    let scale = 1.0 / (1usize << (n - support.len())) as f64;
    Ok((
        HermitianObservable::new(reduced.scale_real(scale).hermitian_part())?,
        support,
    ))
}

pub fn method_registry() -> &'static Registry<dyn SeminormMethod> {
    static REGISTRY: OnceLock<Registry<dyn SeminormMethod>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let reg: Registry<dyn SeminormMethod> = Registry::new("seminorm method");
        reg.register(Arc::new(BruteForce));
        reg.register(Arc::new(GlobalClosed));
        reg.register(Arc::new(PauliProduct));
        reg.register(Arc::new(KLocalDepolarizing(KLocalTable::Printed)));
        reg.register(Arc::new(KLocalDepolarizing(KLocalTable::Derived)));
        reg
    })
}

fn lookup(name: &str) -> Result<Arc<dyn SeminormMethod>> {
    method_registry().get(name).ok_or_else(|| {
        ShadowError::Parse(format!(
            "unknown seminorm method \"{name}\" (known: {})",
            method_registry().names().join(", ")
        ))
    })
}

/// Runs the named method, failing if it does not apply.
pub fn compute(
    ctx: &SeminormContext,
    o: &HermitianObservable,
    method: &str,
) -> Result<SeminormResult> {
    let m = lookup(method)?;
    if !m.applies(ctx, o) {
        return Err(ShadowError::Unsupported(format!(
            "seminorm method {method} does not apply to ensemble {} with channel {}",
            ctx.ensemble.label(),
            ctx.channel.label()
        )));
    }
    let value = m.value(ctx, o)?;
    Ok(SeminormResult::new(
        value,
        m.name(),
        digest(m.name(), Some(ctx), o.op()),
    ))
}

/// First applicable method in [`AUTO_ORDER`].
pub fn auto(ctx: &SeminormContext, o: &HermitianObservable) -> Result<SeminormResult> {
    for name in AUTO_ORDER {
        if lookup(name)?.applies(ctx, o) {
            return compute(ctx, o, name);
        }
    }
    Err(ShadowError::Unsupported(format!(
        "no seminorm method covers ensemble {} with channel {}",
        ctx.ensemble.label(),
        ctx.channel.label()
    )))
}

/// Runs `method` (or [`auto`]) and, when the oracle applies, records its value and
/// the absolute discrepancy.
pub fn compute_with_oracle(
    ctx: &SeminormContext,
    o: &HermitianObservable,
    method: Option<&str>,
) -> Result<SeminormResult> {
    let mut res = match method {
        Some(m) => compute(ctx, o, m)?,
        None => auto(ctx, o)?,
    };
    if res.method != "bruteforce" && BruteForce.applies(ctx, o) {
        let oracle = BruteForce.value(ctx, o)?;
        res.oracle_discrepancy = Some((oracle - res.value).abs());
        res.oracle = Some(oracle);
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::{random_hermitian, seeded};
    use crate::pauli::from_pauli_coefficients;

    fn obs(s: &str) -> HermitianObservable {
        s.parse::<PauliString>().unwrap().to_observable()
    }

    fn clifford1() -> UnitaryEnsemble {
        UnitaryEnsemble::single_qubit_clifford_group()
    }

    fn oracle(ens: &UnitaryEnsemble, e: &QuantumChannel, o: &HermitianObservable) -> f64 {
        compute(&SeminormContext::new(ens, e), o, "bruteforce")
            .unwrap()
            .value
    }

    #[test]
    fn oracle_examples() {
        let ens = clifford1();
        let mut rng = seeded(5);
        let channels = [
            QuantumChannel::identity(1),
            QuantumChannel::amplitude_damping(1, 0.3).unwrap(),
            QuantumChannel::random_cptp(2, 3, &mut rng).unwrap(),
        ];
        for e in &channels {
            assert!((oracle(&ens, e, &obs("I")) - 1.0).abs() < 1e-9);
        }
        assert!((oracle(&ens, &QuantumChannel::identity(1), &obs("Z")) - 3f64.sqrt()).abs() < 1e-9);
        let sq = oracle(&ens, &QuantumChannel::depolarizing(1, 0.5), &obs("X")).powi(2);
        assert!((sq - 12.0).abs() < 1e-8);
        let sq = oracle(
            &ens,
            &QuantumChannel::amplitude_damping(1, 0.5).unwrap(),
            &obs("X"),
        )
        .powi(2);
        assert!((sq - 12.0).abs() < 1e-8);
    }

    #[test]
    fn global_closed_examples() {
        let z = obs("Z");
        assert!((global_traceless_squared(&z, 2.0, 2.0).unwrap() - 3.0).abs() < 1e-12);
        assert!((global_traceless_squared(&z, 2.0, 1.5).unwrap() - 12.0).abs() < 1e-12);
        assert!(global_traceless_squared(&obs("I"), 2.0, 2.0).is_err());
        assert!(matches!(
            global_traceless_squared(&z, 2.0, 1.0),
            Err(ShadowError::NotInvertible { .. })
        ));
        let mut rng = seeded(6);
        for n in 1..=3 {
            let d = (1usize << n) as f64;
            let o = crate::linalg::traceless_part(
                &HermitianObservable::new(random_hermitian(1 << n, &mut rng)).unwrap(),
                n,
            )
            .unwrap();
            let tr = o.op().trace_product(o.op()).re;
            let sp = spectral_norm(&o).powi(2);
            let claim = (d + 1.0) / (d + 2.0) * (tr + 2.0 * sp);
            assert!((global_traceless_squared(&o, d, d).unwrap() - claim).abs() < 1e-9 * claim);
        }
    }

    #[test]
    fn global_closed_matches_oracle() {
        let mut rng = seeded(7);
        let ens1 = clifford1();
        let ens2 = UnitaryEnsemble::global_clifford(2).unwrap();
        for (ens, n) in [(&ens1, 1usize), (&ens2, 2)] {
            let channels = [
                QuantumChannel::identity(n),
                QuantumChannel::depolarizing(n, 0.6),
                QuantumChannel::amplitude_damping(n, 0.4).unwrap(),
                QuantumChannel::random_cptp(1 << n, 2, &mut rng).unwrap(),
                QuantumChannel::from_kraus(vec!["X"
                    .repeat(n)
                    .parse::<PauliString>()
                    .unwrap()
                    .to_dense()])
                .unwrap(),
            ];
            for e in &channels {
                let o = crate::linalg::traceless_part(
                    &HermitianObservable::new(random_hermitian(1 << n, &mut rng)).unwrap(),
                    n,
                )
                .unwrap();
                let ctx = SeminormContext::new(ens, e);
                let r = compute_with_oracle(&ctx, &o, Some("global_closed")).unwrap();
                assert!(
                    r.oracle_discrepancy.unwrap() < 1e-8,
                    "{} {:?}",
                    e.label(),
                    r
                );
            }
        }
    }

    #[test]
    fn global_bounds_chain() {
        let mut rng = seeded(8);
        use rand::Rng;
        for k in 0..50 {
            let n = 1 + k % 3;
            let d = (1usize << n) as f64;
            let beta = 1.0 + rng.random_range(0.01..1.0) * (d - 1.0);
            let o = HermitianObservable::new(random_hermitian(1 << n, &mut rng)).unwrap();
            let b = global_bounds(&o, n, beta).unwrap();
            let sq =
                global_traceless_squared(&crate::linalg::traceless_part(&o, n).unwrap(), d, beta)
                    .unwrap();
            assert!(b.lower <= sq * (1.0 + 1e-12) && sq <= b.closed_form_upper * (1.0 + 1e-12));
            assert!(b.closed_form_upper <= b.trace_upper * (1.0 + 1e-12));
        }
        let b = global_bounds(&obs("Z"), 1, 2.0).unwrap();
        assert!((b.closed_form_upper - 6.0).abs() < 1e-12);
        let b = global_bounds(&obs("I"), 1, 2.0).unwrap();
        assert_eq!((b.lower, b.closed_form_upper), (0.0, 0.0));
        assert!(global_bounds(&obs("Z"), 1, 1.0).is_err());
    }

    #[test]
    fn pauli_examples() {
        let v = |s: &str, f: f64| {
            seminorm_pauli_product(&s.parse().unwrap(), f)
                .unwrap()
                .value_squared
        };
        assert!((v("II", 0.2) - 1.0).abs() < 1e-12);
        assert!((v("XZ", 1.0 / 3.0) - 9.0).abs() < 1e-9);
        let p = 0.4;
        assert!((v("IY", p / 3.0) - 3.0 / (p * p)).abs() < 1e-9);
        assert!(seminorm_pauli_product(&"X".parse().unwrap(), 0.0).is_err());
    }

    #[test]
    fn pauli_matches_oracle_on_products() {
        let ens = UnitaryEnsemble::clifford_product(2).unwrap();
        let mut rng = seeded(9);
        let noises = [
            QuantumChannel::identity(2),
            QuantumChannel::tensor(&[
                QuantumChannel::amplitude_damping(1, 0.5).unwrap(),
                QuantumChannel::depolarizing(1, 0.7),
            ])
            .unwrap(),
            QuantumChannel::tensor(&[
                QuantumChannel::random_cptp(2, 2, &mut rng).unwrap(),
                QuantumChannel::random_cptp(2, 2, &mut rng).unwrap(),
            ])
            .unwrap(),
        ];
        for e in &noises {
            for s in ["IZ", "XI", "YZ", "II"] {
                let ctx = SeminormContext::new(&ens, e);
                let r = compute_with_oracle(&ctx, &obs(s), None).unwrap();
                assert_eq!(r.method, "pauli");
                assert!(r.oracle_discrepancy.unwrap() < 1e-8, "{s} {}", e.label());
            }
        }
    }

    #[test]
    fn monotone_blow_up() {
        let ens = clifford1();
        let mut last = 0.0;
        for f in [1.0, 0.8, 0.6, 0.4, 0.2] {
            let e = QuantumChannel::depolarizing(1, f);
            let v = auto(&SeminormContext::new(&ens, &e), &obs("X"))
                .unwrap()
                .value;
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn klocal_examples() {
        let f = 0.7;
        let x = [0.0, 1.0, 0.0, 0.0];
        assert!(
            (klocal_squared(&x, &[f], KLocalTable::Printed).unwrap() - 3.0 / (f * f)).abs() < 1e-12
        );
        let xz = [0.0, 1.0, 0.0, 1.0];
        assert!((klocal_squared(&xz, &[1.0], KLocalTable::Printed).unwrap() - 6.0).abs() < 1e-12);
        assert!(klocal_squared(&xz, &[0.0], KLocalTable::Printed).is_err());
        assert!(klocal_squared(&xz, &[1.5], KLocalTable::Printed).is_err());
    }

    #[test]
    fn klocal_matches_oracle_without_identity_factors() {
        let ens1 = clifford1();
        let ens2 = UnitaryEnsemble::clifford_product(2).unwrap();
        let mut rng = seeded(10);
        use rand::Rng;
        for f in [1.0, 0.5, 0.3] {
            let e1 = QuantumChannel::depolarizing(1, f);
            let e2 = QuantumChannel::tensor(&[e1.clone(), e1.clone()]).unwrap();
            let mut c1 = [0.0; 4];
            for c in &mut c1[1..] {
                *c = rng.random_range(-1.0..1.0);
            }
            let o1 = from_pauli_coefficients(&c1, 1).unwrap();
            let mut c2 = [0.0; 16];
            for (i, c) in c2.iter_mut().enumerate() {
                if i % 4 != 0 && i / 4 != 0 {
                    *c = rng.random_range(-1.0..1.0);
                }
            }
            let o2 = from_pauli_coefficients(&c2, 2).unwrap();
            for table in ["klocal_depolarizing", "klocal_depolarizing_derived"] {
                let r = compute_with_oracle(&SeminormContext::new(&ens1, &e1), &o1, Some(table))
                    .unwrap();
                assert!(r.oracle_discrepancy.unwrap() < 1e-8, "{table} f={f} k=1");
                let r = compute_with_oracle(&SeminormContext::new(&ens2, &e2), &o2, Some(table))
                    .unwrap();
                assert!(r.oracle_discrepancy.unwrap() < 1e-8, "{table} f={f} k=2");
            }
        }
    }

    #[test]
    fn klocal_identity_cell() {
        let ens = UnitaryEnsemble::clifford_product(2).unwrap();
        let f = 0.5;
        let e = QuantumChannel::tensor(&[
            QuantumChannel::depolarizing(1, f),
            QuantumChannel::depolarizing(1, f),
        ])
        .unwrap();
        let ctx = SeminormContext::new(&ens, &e);
        let o = HermitianObservable::new(obs("XI").op() + obs("IZ").op()).unwrap();
        let derived = compute_with_oracle(&ctx, &o, Some("klocal_depolarizing_derived")).unwrap();
        assert!(derived.oracle_discrepancy.unwrap() < 1e-8);
        let printed = compute_with_oracle(&ctx, &o, Some("klocal_depolarizing")).unwrap();
        assert!(printed.oracle_discrepancy.unwrap() > 1e-3);
        assert_eq!(
            auto(&ctx, &o).unwrap().method,
            "klocal_depolarizing_derived"
        );
    }

    #[test]
    fn locality_reduction() {
        let (r, s) = locality_reduce(&obs("ZII")).unwrap();
        assert_eq!(s, vec![0]);
        assert!(r.op().max_abs_diff(obs("Z").op()) < 1e-12);
        let (r, s) = locality_reduce(&obs("III")).unwrap();
        assert!(s.is_empty() && (r.op().get(0, 0).re - 1.0).abs() < 1e-12);
        let (_, s) = locality_reduce(&obs("IXZ")).unwrap();
        assert_eq!(s, vec![1, 2]);

        let two = UnitaryEnsemble::clifford_product(2).unwrap();
        let one = clifford1();
        let e1 = QuantumChannel::amplitude_damping(1, 0.3).unwrap();
        let e2 = QuantumChannel::tensor(&[e1.clone(), e1.clone()]).unwrap();
        let mut rng = seeded(11);
        let small = HermitianObservable::new(random_hermitian(2, &mut rng)).unwrap();
        let big = HermitianObservable::new(small.op().kron(&DenseOperator::identity(2))).unwrap();
        let a = oracle(&two, &e2, &big);
        let b = oracle(&one, &e1, &small);
        assert!((a - b).abs() < 1e-9);
        assert!(locality_reduce(&big).unwrap().1 == vec![0]);
    }

    #[test]
    fn seminorm_axioms() {
        let ens = clifford1();
        let mut rng = seeded(12);
        let e = QuantumChannel::random_cptp(2, 2, &mut rng).unwrap();
        for _ in 0..10 {
            let s = HermitianObservable::new(random_hermitian(2, &mut rng)).unwrap();
            let t = HermitianObservable::new(random_hermitian(2, &mut rng)).unwrap();
            let (ns, nt) = (oracle(&ens, &e, &s), oracle(&ens, &e, &t));
            let sum = oracle(&ens, &e, &s.add(&t));
            assert!(sum <= ns + nt + 1e-9);
            let c = -2.5;
            assert!((oracle(&ens, &e, &s.scale(c)) - c.abs() * ns).abs() < 1e-9);
            if e.in_lambda_n(1e-9) {
                assert!(ns > 1e-7 * spectral_norm(&s));
            }
        }
    }

    #[test]
    fn input_noise_oracle() {
        let ens = clifford1();
        let e = QuantumChannel::identity(1);
        let k = QuantumChannel::depolarizing(1, 0.5);
        let mut ctx = SeminormContext::new(&ens, &e);
        ctx.input_noise = Some(&k);
        assert!(!GlobalClosed.applies(&ctx, &obs("Z")));
        let v = auto(&ctx, &obs("Z")).unwrap();
        assert_eq!(v.method, "bruteforce");
        assert!(v.value > 3f64.sqrt());
    }

    #[test]
    fn registry_contents() {
        let names = method_registry().names();
        for m in AUTO_ORDER {
            assert!(names.iter().any(|n| n == m));
        }
        assert!(names.iter().any(|n| n == "klocal_depolarizing"));
        assert!(compute(
            &SeminormContext::new(&clifford1(), &QuantumChannel::identity(1)),
            &obs("Z"),
            "nope"
        )
        .is_err());
    }
}
