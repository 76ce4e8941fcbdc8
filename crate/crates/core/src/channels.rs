//! Quantum-channel algebra.
//!
//! A [`QuantumChannel`] is a linear map `A ↦ Σ_a J_a A K_a†` on operators of a
//! fixed dimension. CPTP channels have `J_a = K_a`; general linear maps keep
//! distinct pairs. The named channels (identity, depolarizing, dephasing,
//! amplitude damping) carry a structured representation so they stay cheap at
//! six qubits, and any channel can be expanded to explicit Kraus pairs or to a
//! [`Superoperator`] matrix on demand.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Result, ShadowError};
use crate::linalg::random::{ginibre, random_kraus_set};
use crate::linalg::{
    eigh, kron_all, operator_norm, qubits_for_dim, unvec, vec, DenseOperator, MatrixJson, C64, ONE,
    ZERO,
};
use crate::pauli::PauliString;
use crate::registry::{Named, Registry};

/// Tolerance for trace preservation and the Choi-matrix eigenvalue floor.
pub const CPTP_TOL: f64 = 1e-9;
/// Smallest singular value treated as nonzero when inverting a superoperator.
pub const SINGULAR_FLOOR: f64 = 1e-10;

/// Matrix of a linear map on `d × d` operators under column-stacking
/// vectorization: `apply(A) = unvec(mat · vec(A))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator {
    d: usize,
    mat: DMatrix<C64>,
}

impl Superoperator {
    pub fn new(d: usize, mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != d * d || mat.ncols() != d * d {
            return Err(ShadowError::DimensionMismatch {
                expected: d * d,
                found: mat.nrows().max(mat.ncols()),
            });
        }
        Ok(Self { d, mat })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            d,
            mat: DMatrix::identity(d * d, d * d),
        }
    }

    /// Builds the matrix column by column from the images of `|i⟩⟨j|`.
    pub fn from_map(d: usize, mut map: impl FnMut(&DenseOperator) -> DenseOperator) -> Self {
        let mut mat = DMatrix::zeros(d * d, d * d);
        for j in 0..d {
            for i in 0..d {
                let image = map(&DenseOperator::ket_bra(i, j, d));
                mat.set_column(i + j * d, &vec(&image));
            }
        }
        Self { d, mat }
    }

    /// `A ↦ f A + (1 − f) tr(A) I/d`
    pub fn depolarizing(d: usize, f: f64) -> Self {
        let mut mat = DMatrix::<C64>::identity(d * d, d * d) * C64::new(f, 0.0);
        let w = C64::new((1.0 - f) / d as f64, 0.0);
        for a in 0..d {
            for b in 0..d {
                mat[(a + a * d, b + b * d)] += w;
            }
        }
        Self { d, mat }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn apply(&self, a: &DenseOperator) -> Result<DenseOperator> {
        if a.dim() != self.d {
            return Err(ShadowError::DimensionMismatch {
                expected: self.d,
                found: a.dim(),
            });
        }
        unvec(&(&self.mat * vec(a)), self.d)
    }

    /// `self ∘ inner`
    pub fn compose(&self, inner: &Superoperator) -> Result<Self> {
        if inner.d != self.d {
            return Err(ShadowError::DimensionMismatch {
                expected: self.d,
                found: inner.d,
            });
        }
        Ok(Self {
            d: self.d,
            mat: &self.mat * &inner.mat,
        })
    }

    /// Hilbert–Schmidt adjoint: `tr(X† S(A)) = tr(S†(X)† A)`.
    pub fn adjoint(&self) -> Self {
        Self {
            d: self.d,
            mat: self.mat.adjoint(),
        }
    }

    /// Superoperator of `S₁ ⊗ S₂` acting on the composite space, `S₁` on the left factor.
    pub fn tensor(&self, other: &Superoperator) -> Self {
        let (d1, d2) = (self.d, other.d);
        let d = d1 * d2;
        let col = |s: &Superoperator, i: usize, j: usize| {
            unvec(&s.mat.column(i + j * s.d).into_owned(), s.d).expect("column has d² entries")
        };
        let left: Vec<DenseOperator> = (0..d1 * d1).map(|k| col(self, k % d1, k / d1)).collect();
        let right: Vec<DenseOperator> = (0..d2 * d2).map(|k| col(other, k % d2, k / d2)).collect();
        let mut mat = DMatrix::zeros(d * d, d * d);
        for j1 in 0..d1 {
            for i1 in 0..d1 {
                let l = &left[i1 + j1 * d1];
                for j2 in 0..d2 {
                    for i2 in 0..d2 {
                        let image = l.kron(&right[i2 + j2 * d2]);
                        let (i, j) = (i1 * d2 + i2, j1 * d2 + j2);
                        mat.set_column(i + j * d, &vec(&image));
                    }
                }
            }
        }
        Self { d, mat }
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.mat.clone().singular_values().iter().copied().collect();
        sv.sort_by(f64::total_cmp);
        sv
    }

    pub fn min_singular_value(&self) -> f64 {
        self.singular_values()[0]
    }

    pub fn is_invertible(&self) -> bool {
        self.min_singular_value() > SINGULAR_FLOOR
    }

    pub fn inverse(&self) -> Result<Self> {
        let smin = self.min_singular_value();
        if smin <= SINGULAR_FLOOR {
            return Err(ShadowError::Singular(format!(
                "smallest singular value {smin:.3e} is below {SINGULAR_FLOOR:.0e}"
            )));
        }
        let inv = self
            .mat
            .clone()
            .try_inverse()
            .ok_or_else(|| ShadowError::Singular("LU inversion failed".into()))?;
        Ok(Self {
            d: self.d,
            mat: inv,
        })
    }

    /// Largest deviation of `tr(S(|i⟩⟨j|))` from `δ_ij`.
    pub fn trace_preservation_deviation(&self) -> f64 {
        let d = self.d;
        let mut dev: f64 = 0.0;
        for col in 0..d * d {
            let tr: C64 = (0..d).map(|a| self.mat[(a + a * d, col)]).sum();
            let target = if col % (d + 1) == 0 { ONE } else { ZERO };
            dev = dev.max((tr - target).norm());
        }
        dev
    }

    pub fn max_abs_diff(&self, other: &Superoperator) -> f64 {
        assert_eq!(self.d, other.d, "superoperator dimensions differ");
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// One term `A ↦ left · A · right†` of a Kraus decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausPair {
    pub left: DenseOperator,
    pub right: DenseOperator,
}

impl KrausPair {
    pub fn symmetric(k: DenseOperator) -> Self {
        Self {
            left: k.clone(),
            right: k,
        }
    }
}

#[derive(Clone, Debug)]
enum Repr {
    Identity,
    Depolarizing {
        f: f64,
    },
    Dephasing,
    Kraus(Vec<KrausPair>),
    /// Factors act on consecutive subsystems, leftmost first.
    Product(Vec<QuantumChannel>),
    /// Applied first to last.
    Sequence(Vec<QuantumChannel>),
}

/// JSON descriptor of a channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelDescriptor {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub params: Map<String, Value>,
    /// Left Kraus operators, or the only ones for a CPTP set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus: Option<Vec<MatrixJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus_right: Option<Vec<MatrixJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<ChannelDescriptor>>,
}

impl ChannelDescriptor {
    pub fn simple(kind: &str, n: usize) -> Self {
        Self {
            kind: kind.to_string(),
            n: Some(n),
            params: Map::new(),
            kraus: None,
            kraus_right: None,
            factors: None,
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), Value::from(value));
        self
    }

    pub fn param(&self, key: &str) -> Result<f64> {
        self.params.get(key).and_then(Value::as_f64).ok_or_else(|| {
            ShadowError::Parse(format!(
                "channel \"{}\" needs numeric param \"{key}\"",
                self.kind
            ))
        })
    }

    fn require_n(&self) -> Result<usize> {
        self.n.ok_or_else(|| {
            ShadowError::Parse(format!("channel \"{}\" needs field \"n\"", self.kind))
        })
    }

    /// Compact human-readable label.
    pub fn label(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        if let Some(n) = self.n {
            parts.push(format!("n={n}"));
        }
        for (k, v) in &self.params {
            parts.push(format!("{k}={v}"));
        }
        if let Some(fs) = &self.factors {
            parts.extend(fs.iter().map(ChannelDescriptor::label));
        }
        format!("{}({})", self.kind, parts.join(","))
    }
}

/// Trace-preservation and complete-positivity diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CptpReport {
    pub trace_preserving: bool,
    pub tp_deviation: f64,
    pub completely_positive: bool,
    pub choi_min_eigenvalue: f64,
    pub choi_hermitian_deviation: f64,
    pub cptp: bool,
}

/// Linear map on operators of a fixed dimension.
#[derive(Clone)]
pub struct QuantumChannel {
    dim: usize,
    repr: Repr,
    cptp: bool,
    descriptor: ChannelDescriptor,
    superop: Arc<OnceLock<Superoperator>>,
}

impl fmt::Debug for QuantumChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuantumChannel")
            .field("dim", &self.dim)
            .field("cptp", &self.cptp)
            .field("descriptor", &self.descriptor.label())
            .finish()
    }
}

fn embed(op: &DenseOperator, before: usize, after: usize) -> DenseOperator {
    kron_all(&[
        DenseOperator::identity(before),
        op.clone(),
        DenseOperator::identity(after),
    ])
}

fn apply_pairs(pairs: &[KrausPair], a: &DenseOperator) -> DenseOperator {
    let mut out = DenseOperator::zeros(a.dim());
    for p in pairs {
        out += &(&(&p.left * a) * &p.right.adjoint());
    }
    out
}

fn pauli_dim_check(n: usize) -> Result<()> {
    if n == 0 || n > 6 {
        return Err(ShadowError::InvalidParameter(format!(
            "qubit count must be between 1 and 6, got {n}"
        )));
    }
    Ok(())
}

impl QuantumChannel {
    fn build(dim: usize, repr: Repr, cptp: bool, descriptor: ChannelDescriptor) -> Self {
        Self {
            dim,
            repr,
            cptp,
            descriptor,
            superop: Arc::new(OnceLock::new()),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::build(
            1 << n,
            Repr::Identity,
            true,
            ChannelDescriptor::simple("identity", n),
        )
    }

    /// Identity on an arbitrary dimension (for qudit checks).
    pub fn identity_dim(dim: usize) -> Self {
        let mut descriptor = ChannelDescriptor::simple("identity", 0);
        descriptor.n = qubits_for_dim(dim);
        Self::build(dim, Repr::Identity, true, descriptor)
    }

    /// `D_{n,f}(A) = f A + (1 − f) tr(A) I/2^n`. Any real `f` is accepted; the
    /// CPTP flag is set for `−1/(4^n − 1) ≤ f ≤ 1`.
    pub fn depolarizing(n: usize, f: f64) -> Self {
        let d2 = (1usize << (2 * n)) as f64;
        let cptp = f <= 1.0 + 1e-12 && f >= -1.0 / (d2 - 1.0) - 1e-12;
        Self::build(
            1 << n,
            Repr::Depolarizing { f },
            cptp,
            ChannelDescriptor::simple("depolarizing", n).with_param("f", f),
        )
    }

    /// `AD_{n,p} = AD_{1,p}^{⊗n}` with `K₀ = diag(1, √p)`, `K₁ = √(1−p)|0⟩⟨1|`.
    pub fn amplitude_damping(n: usize, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(ShadowError::InvalidParameter(format!(
                "amplitude damping parameter must lie in [0, 1], got {p}"
            )));
        }
        let k0 = DenseOperator::diagonal(&[1.0, p.sqrt()]);
        let k1 = DenseOperator::ket_bra(0, 1, 2).scale_real((1.0 - p).sqrt());
        let single = Self::build(
            2,
            Repr::Kraus(vec![KrausPair::symmetric(k0), KrausPair::symmetric(k1)]),
            true,
            ChannelDescriptor::simple("amplitude_damping", 1).with_param("p", p),
        );
        if n == 1 {
            return Ok(single);
        }
        let mut out = Self::tensor(&vec![single; n])?;
        out.descriptor = ChannelDescriptor::simple("amplitude_damping", n).with_param("p", p);
        Ok(out)
    }

    /// Completely dephasing channel `A ↦ Σ_i |i⟩⟨i|A|i⟩⟨i|`.
    pub fn dephasing(n: usize) -> Self {
        Self::build(
            1 << n,
            Repr::Dephasing,
            true,
            ChannelDescriptor::simple("dephasing", n),
        )
    }

    /// `A ↦ tr(A)|0…0⟩⟨0…0|`.
    pub fn reset(n: usize) -> Self {
        let d = 1usize << n;
        let pairs = (0..d)
            .map(|b| KrausPair::symmetric(DenseOperator::ket_bra(0, b, d)))
            .collect();
        Self::build(
            d,
            Repr::Kraus(pairs),
            true,
            ChannelDescriptor::simple("reset", n),
        )
    }

    /// CPTP channel from Kraus operators `{K_a}`. The CPTP flag reflects validation.
    pub fn from_kraus(ops: Vec<DenseOperator>) -> Result<Self> {
        let pairs = ops.into_iter().map(KrausPair::symmetric).collect();
        Self::from_pairs(pairs)
    }

    /// General linear map `A ↦ Σ J A K†` from `(J, K)` pairs.
    pub fn from_pairs(pairs: Vec<KrausPair>) -> Result<Self> {
        let first = pairs
            .first()
            .ok_or(ShadowError::EmptyInput("Kraus set is empty"))?;
        let dim = first.left.dim();
        for p in &pairs {
            for m in [&p.left, &p.right] {
                if m.dim() != dim {
                    return Err(ShadowError::DimensionMismatch {
                        expected: dim,
                        found: m.dim(),
                    });
                }
            }
        }
        let symmetric = pairs.iter().all(|p| p.left == p.right);
        let mut descriptor = ChannelDescriptor::simple("kraus", qubits_for_dim(dim).unwrap_or(0));
        if qubits_for_dim(dim).is_none() {
            descriptor.n = None;
        }
        descriptor.kraus = Some(pairs.iter().map(|p| MatrixJson::from(&p.left)).collect());
        if !symmetric {
            descriptor.kraus_right =
                Some(pairs.iter().map(|p| MatrixJson::from(&p.right)).collect());
        }
        let mut channel = Self::build(dim, Repr::Kraus(pairs), false, descriptor);
        if symmetric {
            channel.cptp = channel.cptp_report(CPTP_TOL).cptp;
        }
        Ok(channel)
    }

    /// Random CPTP channel with `rank` Kraus operators on dimension `dim`.
    pub fn random_cptp<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> Result<Self> {
        Self::from_kraus(random_kraus_set(dim, rank.max(1), rng))
    }

    /// Random linear (generally neither CP nor TP) map with `rank` pairs.
    pub fn random_linear<R: Rng + ?Sized>(dim: usize, rank: usize, rng: &mut R) -> Result<Self> {
        let scale = C64::new(1.0 / (dim as f64 * rank as f64).sqrt(), 0.0);
        let pairs = (0..rank.max(1))
            .map(|_| KrausPair {
                left: DenseOperator::from_matrix(ginibre(dim, dim, rng) * scale).expect("square"),
                right: DenseOperator::from_matrix(ginibre(dim, dim, rng) * scale).expect("square"),
            })
            .collect();
        Self::from_pairs(pairs)
    }

    /// `second ∘ first`
    pub fn compose(second: &QuantumChannel, first: &QuantumChannel) -> Result<Self> {
        if second.dim != first.dim {
            return Err(ShadowError::DimensionMismatch {
                expected: second.dim,
                found: first.dim,
            });
        }
        let mut descriptor = ChannelDescriptor::simple("composite", 0);
        descriptor.n = qubits_for_dim(first.dim);
        descriptor.factors = Some(vec![first.descriptor.clone(), second.descriptor.clone()]);
        Ok(Self::build(
            first.dim,
            Repr::Sequence(vec![first.clone(), second.clone()]),
            first.cptp && second.cptp,
            descriptor,
        ))
    }

    /// `E₁ ⊗ E₂ ⊗ …` with `E₁` on the leftmost subsystem.
    pub fn tensor(factors: &[QuantumChannel]) -> Result<Self> {
        if factors.is_empty() {
            return Err(ShadowError::EmptyInput("tensor product of zero channels"));
        }
        if factors.len() == 1 {
            return Ok(factors[0].clone());
        }
        let dim = factors.iter().map(|c| c.dim).product();
        let mut descriptor = ChannelDescriptor::simple("product", 0);
        descriptor.n = qubits_for_dim(dim);
        descriptor.factors = Some(factors.iter().map(|c| c.descriptor.clone()).collect());
        Ok(Self::build(
            dim,
            Repr::Product(factors.to_vec()),
            factors.iter().all(|c| c.cptp),
            descriptor,
        ))
    }

    /// Builds a channel from its descriptor via the channel registry.
    pub fn from_descriptor(desc: &ChannelDescriptor) -> Result<Self> {
        let builder = channel_registry().get(&desc.kind).ok_or_else(|| {
            ShadowError::Parse(format!(
                "unknown channel kind \"{}\" (known: {})",
                desc.kind,
                channel_registry().names().join(", ")
            ))
        })?;
        builder.build(desc)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> Option<usize> {
        qubits_for_dim(self.dim)
    }

    /// Whether the channel was constructed as (or validated to be) CPTP.
    pub fn is_flagged_cptp(&self) -> bool {
        self.cptp
    }

    pub fn descriptor(&self) -> &ChannelDescriptor {
        &self.descriptor
    }

    pub fn label(&self) -> String {
        self.descriptor.label()
    }

    /// Depolarizing parameter when the channel is a named depolarizing channel.
    pub fn depolarizing_parameter(&self) -> Option<f64> {
        match self.repr {
            Repr::Depolarizing { f } => Some(f),
            Repr::Identity => Some(1.0),
            _ => None,
        }
    }

    /// Single-qubit factors when the channel is a known product of them.
    pub fn qubit_factors(&self) -> Option<Vec<QuantumChannel>> {
        if self.dim == 2 {
            return Some(vec![self.clone()]);
        }
        let n = self.n()?;
        match &self.repr {
            Repr::Identity => Some(vec![Self::identity(1); n]),
            Repr::Dephasing => Some(vec![Self::dephasing(1); n]),
            Repr::Product(fs) => {
                let mut out = Vec::new();
                for f in fs {
                    out.extend(f.qubit_factors()?);
                }
                Some(out)
            }
            _ => None,
        }
    }

    /// Explicit Kraus pairs; the named depolarizing channel expands into `4^n` Pauli terms.
    pub fn kraus_pairs(&self) -> Vec<KrausPair> {
        match &self.repr {
            Repr::Identity => vec![KrausPair::symmetric(DenseOperator::identity(self.dim))],
            Repr::Dephasing => (0..self.dim)
                .map(|i| KrausPair::symmetric(DenseOperator::projector(i, self.dim)))
                .collect(),
            Repr::Depolarizing { f } => {
                let n = self.n().expect("depolarizing channels act on qubits");
                let d2 = (self.dim * self.dim) as f64;
                let cptp = self.cptp;
                PauliString::all(n)
                    .map(|p| {
                        let w = if p.weight() == 0 {
                            f + (1.0 - f) / d2
                        } else {
                            (1.0 - f) / d2
                        };
                        let m = p.to_dense();
                        if cptp {
                            KrausPair::symmetric(m.scale_real(w.max(0.0).sqrt()))
                        } else {
                            KrausPair {
                                left: m.scale_real(w),
                                right: m,
                            }
                        }
                    })
                    .collect()
            }
            Repr::Kraus(pairs) => pairs.clone(),
            Repr::Product(fs) => {
                let mut acc = vec![KrausPair::symmetric(DenseOperator::identity(1))];
                for f in fs {
                    let next = f.kraus_pairs();
                    acc = acc
                        .iter()
                        .flat_map(|a| {
                            next.iter().map(move |b| KrausPair {
                                left: a.left.kron(&b.left),
                                right: a.right.kron(&b.right),
                            })
                        })
                        .collect();
                }
                acc
            }
            Repr::Sequence(cs) => {
                let mut acc = vec![KrausPair::symmetric(DenseOperator::identity(self.dim))];
                for c in cs {
                    let next = c.kraus_pairs();
                    acc = next
                        .iter()
                        .flat_map(|b| {
                            acc.iter().map(move |a| KrausPair {
                                left: &b.left * &a.left,
                                right: &b.right * &a.right,
                            })
                        })
                        .collect();
                }
                acc
            }
        }
    }

    pub fn apply(&self, a: &DenseOperator) -> Result<DenseOperator> {
        if a.dim() != self.dim {
            return Err(ShadowError::DimensionMismatch {
                expected: self.dim,
                found: a.dim(),
            });
        }
        Ok(self.apply_unchecked(a))
    }

    fn apply_unchecked(&self, a: &DenseOperator) -> DenseOperator {
        match &self.repr {
            Repr::Identity => a.clone(),
            Repr::Depolarizing { f } => {
                let shift = a.trace() * C64::new((1.0 - f) / self.dim as f64, 0.0);
                &a.scale_real(*f) + &DenseOperator::identity(self.dim).scale(shift)
            }
            Repr::Dephasing => {
                DenseOperator::from_fn(self.dim, |i, j| if i == j { a.get(i, i) } else { ZERO })
            }
            Repr::Kraus(pairs) => apply_pairs(pairs, a),
            Repr::Product(fs) => {
                let mut out = a.clone();
                let mut before = 1;
                for f in fs {
                    let after = self.dim / (before * f.dim);
                    let pairs: Vec<KrausPair> = f
                        .kraus_pairs()
                        .into_iter()
                        .map(|p| KrausPair {
                            left: embed(&p.left, before, after),
                            right: embed(&p.right, before, after),
                        })
                        .collect();
                    out = apply_pairs(&pairs, &out);
                    before *= f.dim;
                }
                out
            }
            Repr::Sequence(cs) => cs.iter().fold(a.clone(), |acc, c| c.apply_unchecked(&acc)),
        }
    }

    /// Cached superoperator matrix.
    pub fn superop(&self) -> &Superoperator {
        self.superop.get_or_init(|| match &self.repr {
            Repr::Identity => Superoperator::identity(self.dim),
            Repr::Depolarizing { f } => Superoperator::depolarizing(self.dim, *f),
            Repr::Kraus(pairs) => {
                let d = self.dim;
                let mut mat = DMatrix::zeros(d * d, d * d);
                for p in pairs {
                    mat += p.right.conj().kron(&p.left).matrix();
                }
                Superoperator { d, mat }
            }
            Repr::Product(fs) => {
                let mut it = fs.iter();
                let first = it.next().expect("nonempty product").superop().clone();
                it.fold(first, |acc, f| acc.tensor(f.superop()))
            }
            Repr::Sequence(cs) => {
                let mut acc = Superoperator::identity(self.dim);
                for c in cs {
                    acc = c
                        .superop()
                        .compose(&acc)
                        .expect("dimensions checked at construction");
                }
                acc
            }
            Repr::Dephasing => Superoperator::from_map(self.dim, |a| self.apply_unchecked(a)),
        })
    }

    /// `Tr(E) = Σ_ij ⟨i|E(|i⟩⟨j|)|j⟩`, the trace of the superoperator matrix.
    pub fn super_trace(&self) -> C64 {
        match &self.repr {
            Repr::Identity => C64::new((self.dim * self.dim) as f64, 0.0),
            Repr::Depolarizing { f } => {
                let d2 = (self.dim * self.dim) as f64;
                C64::new(f * d2 + (1.0 - f), 0.0)
            }
            Repr::Product(fs) => fs.iter().map(|f| f.super_trace()).product(),
            _ => self.superop().trace(),
        }
    }

    /// `⟨x|E(|x⟩⟨x|)|x⟩`
    pub fn diagonal_probe(&self, x: usize) -> C64 {
        self.apply_unchecked(&DenseOperator::projector(x, self.dim))
            .get(x, x)
    }

    /// `tr E(|x⟩⟨x|)`
    pub fn trace_probe(&self, x: usize) -> C64 {
        self.apply_unchecked(&DenseOperator::projector(x, self.dim))
            .trace()
    }

    /// `β = Tr(E ∘ diag) = Σ_b ⟨b|E(|b⟩⟨b|)|b⟩` as a complex number.
    pub fn beta_complex(&self) -> C64 {
        match &self.repr {
            Repr::Product(fs) => fs.iter().map(|f| f.beta_complex()).product(),
            _ => (0..self.dim).map(|b| self.diagonal_probe(b)).sum(),
        }
    }

    /// Real part of [`beta_complex`](Self::beta_complex).
    pub fn beta(&self) -> f64 {
        self.beta_complex().re
    }

    /// `α = tr E(I)`
    pub fn alpha(&self) -> f64 {
        self.apply_unchecked(&DenseOperator::identity(self.dim))
            .trace()
            .re
    }

    /// `E‡(A) = (E*(A†))†`, i.e. `A ↦ Σ K† A J` for pairs `(J, K)`.
    pub fn ddagger(&self) -> Self {
        let (repr, cptp) = match &self.repr {
            Repr::Identity | Repr::Depolarizing { .. } | Repr::Dephasing => {
                (self.repr.clone(), self.cptp)
            }
            Repr::Kraus(pairs) => {
                let flipped: Vec<KrausPair> = pairs
                    .iter()
                    .map(|p| KrausPair {
                        left: p.right.adjoint(),
                        right: p.left.adjoint(),
                    })
                    .collect();
                let probe = Self::build(
                    self.dim,
                    Repr::Kraus(flipped.clone()),
                    false,
                    self.descriptor.clone(),
                );
                let cptp =
                    flipped.iter().all(|p| p.left == p.right) && probe.cptp_report(CPTP_TOL).cptp;
                (Repr::Kraus(flipped), cptp)
            }
            Repr::Product(fs) => {
                let ds: Vec<QuantumChannel> = fs.iter().map(|f| f.ddagger()).collect();
                let cptp = ds.iter().all(|c| c.cptp);
                (Repr::Product(ds), cptp)
            }
            Repr::Sequence(cs) => {
                let ds: Vec<QuantumChannel> = cs.iter().rev().map(|c| c.ddagger()).collect();
                let cptp = ds.iter().all(|c| c.cptp);
                (Repr::Sequence(ds), cptp)
            }
        };
        let descriptor = match &self.repr {
            Repr::Identity | Repr::Depolarizing { .. } | Repr::Dephasing => self.descriptor.clone(),
            _ => {
                let mut d = ChannelDescriptor::simple("ddagger", 0);
                d.n = self.n();
                d.factors = Some(vec![self.descriptor.clone()]);
                d
            }
        };
        Self::build(self.dim, repr, cptp, descriptor)
    }

    /// Choi matrix `Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|)`.
    pub fn choi(&self) -> DenseOperator {
        let d = self.dim;
        let mut choi = DenseOperator::zeros(d * d);
        for i in 0..d {
            for j in 0..d {
                let image = self.apply_unchecked(&DenseOperator::ket_bra(i, j, d));
                choi += &DenseOperator::ket_bra(i, j, d).kron(&image);
            }
        }
        choi
    }

    /// Trace preservation from `Σ K†J = I` and complete positivity from the Choi matrix.
    pub fn cptp_report(&self, tol: f64) -> CptpReport {
        let d = self.dim;
        let tp_deviation = match &self.repr {
            Repr::Identity | Repr::Dephasing => 0.0,
            Repr::Depolarizing { .. } => 0.0,
            _ => {
                let mut sum = DenseOperator::zeros(d);
                for p in self.kraus_pairs() {
                    sum += &(p.right.adjoint() * &p.left);
                }
                sum.max_abs_diff(&DenseOperator::identity(d))
            }
        };
        let (choi_min_eigenvalue, choi_hermitian_deviation) = match &self.repr {
            Repr::Identity | Repr::Dephasing => (0.0, 0.0),
            Repr::Depolarizing { f } => {
                // Choi eigenvalues: (1-f)/d with multiplicity d²-1, and f·d + (1-f)/d.
                let lo = (1.0 - f) / d as f64;
                let hi = f * d as f64 + lo;
                (lo.min(hi), 0.0)
            }
            _ => {
                let choi = self.choi();
                let dev = choi.hermitian_deviation();
                (eigh(&choi).0[0], dev)
            }
        };
        let trace_preserving = tp_deviation <= tol;
        let completely_positive = choi_min_eigenvalue >= -tol && choi_hermitian_deviation <= tol;
        CptpReport {
            trace_preserving,
            tp_deviation,
            completely_positive,
            choi_min_eigenvalue,
            choi_hermitian_deviation,
            cptp: trace_preserving && completely_positive,
        }
    }

    pub fn is_cptp(&self, tol: f64) -> bool {
        self.cptp_report(tol).cptp
    }

    /// Whether `E‡(|b⟩⟨b|)` is nonzero for every computational basis state.
    pub fn in_lambda_n(&self, tol: f64) -> bool {
        self.lambda_n_failures(tol).is_empty()
    }

    /// Basis states `b` with `‖E‡(|b⟩⟨b|)‖ ≤ tol`.
    pub fn lambda_n_failures(&self, tol: f64) -> Vec<usize> {
        let dd = self.ddagger();
        (0..self.dim)
            .filter(|&b| {
                operator_norm(&dd.apply_unchecked(&DenseOperator::projector(b, self.dim))) <= tol
            })
            .collect()
    }

    /// Whether `⟨b|E(|b⟩⟨b|)|b⟩ = 1` for every `b`.
    pub fn is_inconsequential(&self, tol: f64) -> bool {
        (0..self.dim).all(|b| (self.diagonal_probe(b) - ONE).norm() <= tol)
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        self.superop().trace_preservation_deviation() <= tol
    }
}

/// Builds channels of one `kind` from descriptors.
pub trait ChannelBuilder: Named {
    fn build(&self, desc: &ChannelDescriptor) -> Result<QuantumChannel>;
}

struct IdentityBuilder;
struct DepolarizingBuilder;
struct AmplitudeDampingBuilder;
struct DephasingBuilder;
struct ResetBuilder;
struct KrausBuilder;
struct ProductBuilder;
struct CompositeBuilder;
struct DdaggerBuilder;

macro_rules! named {
    ($t:ty, $name:literal) => {
        impl Named for $t {
            fn name(&self) -> &str {
                $name
            }
        }
    };
}

named!(IdentityBuilder, "identity");
named!(DepolarizingBuilder, "depolarizing");
named!(AmplitudeDampingBuilder, "amplitude_damping");
named!(DephasingBuilder, "dephasing");
named!(ResetBuilder, "reset");
named!(KrausBuilder, "kraus");
named!(ProductBuilder, "product");
named!(CompositeBuilder, "composite");
named!(DdaggerBuilder, "ddagger");

impl ChannelBuilder for IdentityBuilder {
    fn build(&self, desc: &ChannelDescriptor) -> Result<QuantumChannel> {
        let n = desc.require_n()?;
        pauli_dim_check(n)?;
        Ok(QuantumChannel::identity(n))
    }
}

impl ChannelBuilder for DepolarizingBuilder {
    fn build(&self, desc: &ChannelDescriptor) -> Result<QuantumChannel> {
        let n = desc.require_n()?;
        pauli_dim_check(n)?;
        Ok(QuantumChannel::depolarizing(n, desc.param("f")?))
    }
}

impl ChannelBuilder for AmplitudeDampingBuilder {
    fn build(&self, desc: &ChannelDescriptor) -> Result<QuantumChannel> {
        let n = desc.require_n()?;
        pauli_dim_check(n)?;
        QuantumChannel::amplitude_damping(n, desc.param("p")?)
    }
}

impl ChannelBuilder for DephasingBuilder {
    fn build(&self, desc: &ChannelDescriptor) -> Result<QuantumChannel> {
        let n = desc.require_n()?;
        pauli_dim_check(n)?;
        Ok(QuantumChannel::dephasing(n))
    }
}

impl ChannelBuilder for ResetBuilder {
    fn build(&self, desc: &ChannelDescriptor) -> Result<QuantumChannel> {
        let n = desc.require_n()?;
        pauli_dim_check(n)?;
        Ok(QuantumChannel::reset(n))
    }
}

impl ChannelBuilder for KrausBuilder {
    fn build(&self, desc: &ChannelDescriptor) -> Result<QuantumChannel> {
        let left = desc
            .kraus
            .as_ref()
            .ok_or_else(|| ShadowError::Parse("channel \"kraus\" needs field \"kraus\"".into()))?;
        let left: Vec<DenseOperator> = left
            .iter()
            .map(DenseOperator::try_from)
            .collect::<Result<_>>()?;
        let channel = match &desc.kraus_right {
            None => QuantumChannel::from_kraus(left)?,
            Some(right) => {
                if right.len() != left.len() {
                    return Err(ShadowError::LengthMismatch {
                        expected: left.len(),
                        found: right.len(),
                    });
                }
                let right: Vec<DenseOperator> = right
                    .iter()
                    .map(DenseOperator::try_from)
                    .collect::<Result<_>>()?;
                QuantumChannel::from_pairs(
                    left.into_iter()
                        .zip(right)
                        .map(|(l, r)| KrausPair { left: l, right: r })
                        .collect(),
                )?
            }
        };
        if let (Some(n), Some(m)) = (desc.n, channel.n()) {
            if n != m {
                return Err(ShadowError::DimensionMismatch {
                    expected: n,
                    found: m,
                });
            }
        }
        Ok(channel)
    }
}

fn build_factors(desc: &ChannelDescriptor) -> Result<Vec<QuantumChannel>> {
    desc.factors
        .as_ref()
        .ok_or_else(|| {
            ShadowError::Parse(format!("channel \"{}\" needs field \"factors\"", desc.kind))
        })?
        .iter()
        .map(QuantumChannel::from_descriptor)
        .collect()
}

impl ChannelBuilder for ProductBuilder {
    fn build(&self, desc: &ChannelDescriptor) -> Result<QuantumChannel> {
        QuantumChannel::tensor(&build_factors(desc)?)
    }
}

impl ChannelBuilder for CompositeBuilder {
    fn build(&self, desc: &ChannelDescriptor) -> Result<QuantumChannel> {
        let factors = build_factors(desc)?;
        let mut iter = factors.into_iter();
        let first = iter
            .next()
            .ok_or(ShadowError::EmptyInput("composite channel without factors"))?;
        iter.try_fold(first, |acc, next| QuantumChannel::compose(&next, &acc))
    }
}

impl ChannelBuilder for DdaggerBuilder {
    fn build(&self, desc: &ChannelDescriptor) -> Result<QuantumChannel> {
        let factors = build_factors(desc)?;
        match factors.as_slice() {
            [single] => Ok(single.ddagger()),
            _ => Err(ShadowError::Parse(
                "channel \"ddagger\" needs exactly one factor".into(),
            )),
        }
    }
}

/// Registry of channel builders keyed by descriptor `kind`.
pub fn channel_registry() -> &'static Registry<dyn ChannelBuilder> {
    static REGISTRY: OnceLock<Registry<dyn ChannelBuilder>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let reg: Registry<dyn ChannelBuilder> = Registry::new("channel");
        reg.register(Arc::new(IdentityBuilder));
        reg.register(Arc::new(DepolarizingBuilder));
        reg.register(Arc::new(AmplitudeDampingBuilder));
        reg.register(Arc::new(DephasingBuilder));
        reg.register(Arc::new(ResetBuilder));
        reg.register(Arc::new(KrausBuilder));
        reg.register(Arc::new(ProductBuilder));
        reg.register(Arc::new(CompositeBuilder));
        reg.register(Arc::new(DdaggerBuilder));
        reg
    })
}
