//! Shadow channels `M(ρ) = E_U Σ_b ⟨b|E(UρU†)|b⟩ U†|b⟩⟨b|U`, their inverses,
//! classical-shadow snapshots and serialized shadow sets.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channels::{ChannelDescriptor, QuantumChannel, Superoperator};
use crate::ensembles::{DesignClass, EnsembleDescriptor, UnitaryEnsemble, UnitaryTag};
use crate::error::{Result, ShadowError};
use crate::linalg::{
    bits_to_index, index_to_bits, ordered_par_fold, qubits_for_dim, vec, DenseOperator, MatrixJson,
    C64,
};

/// Threshold on `|f|` below which a depolarizing shadow channel counts as singular.
pub const DEPOLARIZING_FLOOR: f64 = 1e-12;
/// Largest dimension for which a generic (matrix) shadow channel is built.
pub const MAX_GENERIC_DIM: usize = 16;

/// `f(E) = (Tr(E∘diag) − tr E(I)/d) / (d² − 1)`; equals `(β − 1)/(d² − 1)` for trace-preserving `E`.
pub fn f_of_e(e: &QuantumChannel) -> f64 {
    let d = e.dim() as f64;
    (e.beta() - e.alpha() / d) / (d * d - 1.0)
}

/// `f(E)` together with its admissible interval `[−1/(d²−1), 1/(d+1)]` for CPTP `E`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FBounds {
    pub f: f64,
    pub lower: f64,
    pub upper: f64,
    pub within: bool,
}

pub fn check_f_bounds(e: &QuantumChannel) -> FBounds {
    let d = e.dim() as f64;
    let f = f_of_e(e);
    let lower = -1.0 / (d * d - 1.0);
    let upper = 1.0 / (d + 1.0);
    FBounds {
        f,
        lower,
        upper,
        within: f >= lower - 1e-10 && f <= upper + 1e-10,
    }
}

/// Applies `D_{1,f}` to qubit `q` of an `n`-qubit operator.
pub fn apply_local_depolarizing(a: &DenseOperator, n: usize, q: usize, f: f64) -> DenseOperator {
    let d = a.dim();
    let bit = 1usize << (n - 1 - q);
    let mut out = a.scale_real(f);
    let w = (1.0 - f) / 2.0;
    for i in 0..d {
        for j in 0..d {
            if (i & bit) != (j & bit) {
                continue;
            }
            // (tr_q A) ⊗ I/2 at qubit q
            let (i0, j0) = (i & !bit, j & !bit);
            let partial = a.get(i0, j0) + a.get(i0 | bit, j0 | bit);
            out.set(i, j, out.get(i, j) + partial * w);
        }
    }
    out
}

/// `U†|b⟩⟨b|U`
pub fn projected(u: &DenseOperator, b: usize) -> DenseOperator {
    let row = u.matrix().row(b).transpose().map(|z| z.conj());
    DenseOperator::outer(&row)
}

/// One stage of an inverse shadow map.
#[derive(Clone, Debug)]
pub enum InverseStage {
    /// `D_{n,f}` on the whole register.
    Depolarizing {
        f: f64,
    },
    /// `⊗_q D_{1,f_q}`.
    ProductDepolarizing {
        fs: Vec<f64>,
    },
    Generic(Superoperator),
}

impl InverseStage {
    fn apply(&self, a: &DenseOperator) -> Result<DenseOperator> {
        match self {
            Self::Depolarizing { f } => {
                let d = a.dim() as f64;
                let shift = a.trace() * ((1.0 - f) / d);
                Ok(&a.scale_real(*f) + &DenseOperator::identity(a.dim()).scale(shift))
            }
            Self::ProductDepolarizing { fs } => {
                let n = fs.len();
                if a.dim() != 1 << n {
                    return Err(ShadowError::DimensionMismatch {
                        expected: 1 << n,
                        found: a.dim(),
                    });
                }
                Ok(fs.iter().enumerate().fold(a.clone(), |acc, (q, &f)| {
                    apply_local_depolarizing(&acc, n, q, f)
                }))
            }
            Self::Generic(s) => s.apply(a),
        }
    }

    fn apply_adjoint(&self, a: &DenseOperator) -> Result<DenseOperator> {
        match self {
            Self::Generic(s) => s.adjoint().apply(a),
            other => other.apply(a),
        }
    }

    fn superop(&self, dim: usize) -> Superoperator {
        match self {
            Self::Depolarizing { f } => Superoperator::depolarizing(dim, *f),
            Self::ProductDepolarizing { fs } => {
                let mut it = fs.iter().map(|&f| Superoperator::depolarizing(2, f));
                let first = it.next().expect("at least one qubit");
                it.fold(first, |acc, s| acc.tensor(&s))
            }
            Self::Generic(s) => s.clone(),
        }
    }

    fn descriptor(&self) -> StageDescriptor {
        match self {
            Self::Depolarizing { f } => StageDescriptor::Depolarizing { parameter: *f },
            Self::ProductDepolarizing { fs } => StageDescriptor::ProductDepolarizing {
                parameters: fs.clone(),
            },
            Self::Generic(_) => StageDescriptor::Generic,
        }
    }
}

/// Serialized form of an inverse stage; generic matrices are not stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum StageDescriptor {
    Depolarizing { parameter: f64 },
    ProductDepolarizing { parameters: Vec<f64> },
    Generic,
}

/// Post-processing map applied to `U†|b⟩⟨b|U`; stages run in order.
#[derive(Clone, Debug)]
pub struct InverseMap {
    dim: usize,
    stages: Vec<InverseStage>,
}

impl InverseMap {
    pub fn new(dim: usize, stages: Vec<InverseStage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(ShadowError::EmptyInput("inverse map without stages"));
        }
        for s in &stages {
            let found = match s {
                InverseStage::Depolarizing { .. } => dim,
                InverseStage::ProductDepolarizing { fs } => 1 << fs.len(),
                InverseStage::Generic(sup) => sup.dim(),
            };
            if found != dim {
                return Err(ShadowError::DimensionMismatch {
                    expected: dim,
                    found,
                });
            }
        }
        Ok(Self { dim, stages })
    }

    /// Rebuilds a closed-form inverse from its descriptors.
    pub fn from_descriptors(dim: usize, stages: &[StageDescriptor]) -> Result<Self> {
        let stages = stages
            .iter()
            .map(|s| match s {
                StageDescriptor::Depolarizing { parameter } => {
                    Ok(InverseStage::Depolarizing { f: *parameter })
                }
                StageDescriptor::ProductDepolarizing { parameters } => {
                    Ok(InverseStage::ProductDepolarizing {
                        fs: parameters.clone(),
                    })
                }
                StageDescriptor::Generic => Err(ShadowError::Unsupported(
                    "generic inverse stages are not serialized; snapshots must carry rho_hat"
                        .into(),
                )),
            })
            .collect::<Result<_>>()?;
        Self::new(dim, stages)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stages(&self) -> &[InverseStage] {
        &self.stages
    }

    /// `self` followed by `next`.
    pub fn then(mut self, next: InverseMap) -> Result<Self> {
        if next.dim != self.dim {
            return Err(ShadowError::DimensionMismatch {
                expected: self.dim,
                found: next.dim,
            });
        }
        self.stages.extend(next.stages);
        Ok(self)
    }

    pub fn apply(&self, a: &DenseOperator) -> Result<DenseOperator> {
        self.stages
            .iter()
            .try_fold(a.clone(), |acc, s| s.apply(&acc))
    }

    /// Hilbert–Schmidt adjoint, e.g. `M^{−1,†}` for observables.
    pub fn apply_adjoint(&self, a: &DenseOperator) -> Result<DenseOperator> {
        self.stages
            .iter()
            .rev()
            .try_fold(a.clone(), |acc, s| s.apply_adjoint(&acc))
    }

    pub fn superop(&self) -> Result<Superoperator> {
        let mut acc = Superoperator::identity(self.dim);
        for s in &self.stages {
            acc = s.superop(self.dim).compose(&acc)?;
        }
        Ok(acc)
    }

    pub fn descriptors(&self) -> Vec<StageDescriptor> {
        self.stages.iter().map(InverseStage::descriptor).collect()
    }

    pub fn is_closed_form(&self) -> bool {
        !self
            .stages
            .iter()
            .any(|s| matches!(s, InverseStage::Generic(_)))
    }

    /// Single global depolarizing parameter, when that is the whole map.
    pub fn as_depolarizing(&self) -> Option<f64> {
        match self.stages.as_slice() {
            [InverseStage::Depolarizing { f }] => Some(*f),
            _ => None,
        }
    }

    /// Per-qubit depolarizing parameters, when the map is a product of them.
    pub fn as_product_depolarizing(&self) -> Option<Vec<f64>> {
        match self.stages.as_slice() {
            [InverseStage::ProductDepolarizing { fs }] => Some(fs.clone()),
            [InverseStage::Depolarizing { f }] if self.dim == 2 => Some(vec![*f]),
            _ => None,
        }
    }
}

/// Representation of a shadow channel.
#[derive(Clone, Debug)]
pub enum ShadowForm {
    /// `D_{n,f}`
    Depolarizing {
        f: f64,
    },
    /// `⊗_q D_{1,f_q}`
    ProductDepolarizing {
        fs: Vec<f64>,
    },
    Generic(Superoperator),
}

/// The shadow channel `M_{𝒰,E}` with provenance.
#[derive(Clone, Debug)]
pub struct ShadowChannel {
    dim: usize,
    form: ShadowForm,
    beta: f64,
    pub ensemble: String,
    pub channel: String,
}

fn check_dims(ens: &UnitaryEnsemble, e: &QuantumChannel) -> Result<()> {
    if ens.dim() != e.dim() {
        return Err(ShadowError::DimensionMismatch {
            expected: ens.dim(),
            found: e.dim(),
        });
    }
    Ok(())
}

impl ShadowChannel {
    /// Exact average over all ensemble elements and outcomes. Product
    /// ensembles with product noise are evaluated factor by factor.
    pub fn bruteforce(ens: &UnitaryEnsemble, e: &QuantumChannel) -> Result<Self> {
        check_dims(ens, e)?;
        if let (Some(us), Some(es)) = (ens.qubit_factors(), e.qubit_factors()) {
            if us.len() == es.len() && us.len() > 1 {
                let mut parts = us
                    .iter()
                    .zip(&es)
                    .map(|(u, c)| Self::bruteforce_direct(u, c));
                let first = parts.next().expect("at least two factors")?.superop();
                let mat = parts.try_fold(first, |acc, p| {
                    Ok::<_, ShadowError>(acc.tensor(&p?.superop()))
                })?;
                return Ok(Self {
                    dim: e.dim(),
                    form: ShadowForm::Generic(mat),
                    beta: e.beta(),
                    ensemble: ens.label(),
                    channel: e.label(),
                });
            }
        }
        Self::bruteforce_direct(ens, e)
    }

    /// Exact average over every element of an enumerable ensemble, without factorization.
    pub fn bruteforce_direct(ens: &UnitaryEnsemble, e: &QuantumChannel) -> Result<Self> {
        check_dims(ens, e)?;
        let d = ens.dim();
        if d > MAX_GENERIC_DIM {
            return Err(ShadowError::Unsupported(format!(
                "brute-force shadow channel limited to dimension {MAX_GENERIC_DIM}"
            )));
        }
        let elements = ens.elements()?;
        // ⟨b|E(X)|b⟩ = tr(X E‡(|b⟩⟨b|))
        let dd = e.ddagger();
        let g: Vec<DenseOperator> = (0..d)
            .map(|b| dd.apply(&DenseOperator::projector(b, d)))
            .collect::<Result<_>>()?;
        let sum = ordered_par_fold(
            &elements,
            || DMatrix::<C64>::zeros(d * d, d * d),
            |acc, _, el| {
                for (b, gb) in g.iter().enumerate() {
                    let left = vec(&projected(&el.unitary, b));
                    let right = vec(&gb.conjugate_by_adjoint(&el.unitary).transpose());
                    *acc += &left * right.transpose();
                }
            },
            |acc, part| *acc += part,
        );
        let mat = Superoperator::new(d, sum / C64::new(elements.len() as f64, 0.0))?;
        Ok(Self {
            dim: d,
            form: ShadowForm::Generic(mat),
            beta: e.beta(),
            ensemble: ens.label(),
            channel: e.label(),
        })
    }

    /// Depolarizing closed form for 2-design ensembles and for products of
    /// single-qubit 2-designs under product noise.
    pub fn closed_form(ens: &UnitaryEnsemble, e: &QuantumChannel) -> Result<Self> {
        check_dims(ens, e)?;
        let form = match ens.design_class() {
            DesignClass::Global { t } if t >= 2 => ShadowForm::Depolarizing { f: f_of_e(e) },
            DesignClass::ProductOfQubitDesigns { t } if t >= 2 => {
                let factors = e.qubit_factors().ok_or_else(|| {
                    ShadowError::Unsupported(format!(
                        "product ensemble needs product noise for the closed form, got {}",
                        e.label()
                    ))
                })?;
                ShadowForm::ProductDepolarizing {
                    fs: factors.iter().map(f_of_e).collect(),
                }
            }
            _ => {
                return Err(ShadowError::Unsupported(format!(
                    "ensemble {} is not a recognized 2-design composite",
                    ens.label()
                )))
            }
        };
        Ok(Self {
            dim: e.dim(),
            form,
            beta: e.beta(),
            ensemble: ens.label(),
            channel: e.label(),
        })
    }

    /// Closed form when available, otherwise brute force.
    pub fn for_protocol(ens: &UnitaryEnsemble, e: &QuantumChannel) -> Result<Self> {
        match Self::closed_form(ens, e) {
            Ok(s) => Ok(s),
            Err(ShadowError::Unsupported(_)) => Self::bruteforce(ens, e),
            Err(other) => Err(other),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> Option<usize> {
        qubits_for_dim(self.dim)
    }

    pub fn form(&self) -> &ShadowForm {
        &self.form
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn superop(&self) -> Superoperator {
        match &self.form {
            ShadowForm::Depolarizing { f } => Superoperator::depolarizing(self.dim, *f),
            ShadowForm::ProductDepolarizing { fs } => {
                InverseStage::ProductDepolarizing { fs: fs.clone() }.superop(self.dim)
            }
            ShadowForm::Generic(s) => s.clone(),
        }
    }

    pub fn apply(&self, a: &DenseOperator) -> Result<DenseOperator> {
        match &self.form {
            ShadowForm::Depolarizing { f } => InverseStage::Depolarizing { f: *f }.apply(a),
            ShadowForm::ProductDepolarizing { fs } => {
                InverseStage::ProductDepolarizing { fs: fs.clone() }.apply(a)
            }
            ShadowForm::Generic(s) => s.apply(a),
        }
    }

    pub fn is_invertible(&self) -> bool {
        match &self.form {
            ShadowForm::Depolarizing { f } => f.abs() > DEPOLARIZING_FLOOR,
            ShadowForm::ProductDepolarizing { fs } => {
                fs.iter().all(|f| f.abs() > DEPOLARIZING_FLOOR)
            }
            ShadowForm::Generic(s) => s.is_invertible(),
        }
    }

    /// `M⁻¹`; depolarizing forms invert parameter-wise.
    pub fn inverse(&self) -> Result<InverseMap> {
        if !self.is_invertible() {
            return Err(ShadowError::NotInvertible { beta: self.beta });
        }
        let stage = match &self.form {
            ShadowForm::Depolarizing { f } => InverseStage::Depolarizing { f: 1.0 / f },
            ShadowForm::ProductDepolarizing { fs } => InverseStage::ProductDepolarizing {
                fs: fs.iter().map(|f| 1.0 / f).collect(),
            },
            ShadowForm::Generic(s) => InverseStage::Generic(
                s.inverse()
                    .map_err(|_| ShadowError::NotInvertible { beta: self.beta })?,
            ),
        };
        InverseMap::new(self.dim, vec![stage])
    }
}

/// `(1/f) U†|b⟩⟨b|U + (1 − 1/f) I/2^n`
pub fn snapshot_global(u: &DenseOperator, b: usize, f: f64) -> Result<DenseOperator> {
    if f.abs() <= DEPOLARIZING_FLOOR {
        return Err(ShadowError::InvalidParameter(
            "shadow parameter f must be nonzero".into(),
        ));
    }
    InverseStage::Depolarizing { f: 1.0 / f }.apply(&projected(u, b))
}

/// `⊗_q [(1/f_q) u_q†|b_q⟩⟨b_q|u_q + (1 − 1/f_q) I/2]`
pub fn snapshot_product(us: &[DenseOperator], bits: &[u8], fs: &[f64]) -> Result<DenseOperator> {
    if us.len() != bits.len() || us.len() != fs.len() {
        return Err(ShadowError::LengthMismatch {
            expected: us.len(),
            found: bits.len().min(fs.len()),
        });
    }
    let factors: Vec<DenseOperator> = us
        .iter()
        .zip(bits)
        .zip(fs)
        .map(|((u, &b), &f)| snapshot_global(u, b as usize, f))
        .collect::<Result<_>>()?;
    Ok(crate::linalg::kron_all(&factors))
}

/// `M⁻¹(U†|b⟩⟨b|U)` for an arbitrary inverse map.
pub fn snapshot_generic(u: &DenseOperator, b: usize, inv: &InverseMap) -> Result<DenseOperator> {
    inv.apply(&projected(u, b))
}

/// `K⁻¹(M⁻¹(U†|b⟩⟨b|U))`
pub fn snapshot_with_input_noise(
    u: &DenseOperator,
    b: usize,
    inv_m: &InverseMap,
    inv_k: &InverseMap,
) -> Result<DenseOperator> {
    inv_k.apply(&inv_m.apply(&projected(u, b))?)
}

/// Inverse of an input-noise channel, closed form for (product) depolarizing noise.
pub fn channel_inverse(k: &QuantumChannel) -> Result<InverseMap> {
    let singular = || {
        ShadowError::Singular(format!(
            "input-noise channel {} is not invertible",
            k.label()
        ))
    };
    if let Some(g) = k.depolarizing_parameter() {
        if g.abs() <= DEPOLARIZING_FLOOR {
            return Err(singular());
        }
        return InverseMap::new(k.dim(), vec![InverseStage::Depolarizing { f: 1.0 / g }]);
    }
    if let Some(factors) = k.qubit_factors() {
        if let Some(gs) = factors
            .iter()
            .map(QuantumChannel::depolarizing_parameter)
            .collect::<Option<Vec<f64>>>()
        {
            if gs.iter().any(|g| g.abs() <= DEPOLARIZING_FLOOR) {
                return Err(singular());
            }
            let fs = gs.iter().map(|g| 1.0 / g).collect();
            return InverseMap::new(k.dim(), vec![InverseStage::ProductDepolarizing { fs }]);
        }
    }
    if k.dim() > MAX_GENERIC_DIM {
        return Err(ShadowError::Unsupported(format!(
            "generic channel inversion limited to dimension {MAX_GENERIC_DIM}"
        )));
    }
    let inv = k.superop().inverse().map_err(|_| singular())?;
    InverseMap::new(k.dim(), vec![InverseStage::Generic(inv)])
}

/// Ensemble, measurement noise `E`, optional input noise `K` and the
/// post-processing inverse used to turn outcomes into snapshots.
#[derive(Clone, Debug)]
pub struct ShadowProtocol {
    pub ensemble: UnitaryEnsemble,
    pub channel: QuantumChannel,
    pub input_noise: Option<QuantumChannel>,
    pub shadow: ShadowChannel,
    inverse: InverseMap,
    custom_inverse: bool,
}

impl ShadowProtocol {
    /// Protocol with the matched inverse `M_{𝒰,E}⁻¹`.
    pub fn new(ensemble: UnitaryEnsemble, channel: QuantumChannel) -> Result<Self> {
        if ensemble.n().is_none() {
            return Err(ShadowError::InvalidParameter(format!(
                "ensemble dimension {} is not a qubit register",
                ensemble.dim()
            )));
        }
        let shadow = ShadowChannel::for_protocol(&ensemble, &channel)?;
        let inverse = shadow.inverse()?;
        Ok(Self {
            ensemble,
            channel,
            input_noise: None,
            shadow,
            inverse,
            custom_inverse: false,
        })
    }

    /// Adds input noise `K`: states are prepared as `K(ρ)` and snapshots become `K⁻¹(M⁻¹(·))`.
    pub fn with_input_noise(mut self, k: QuantumChannel) -> Result<Self> {
        if k.dim() != self.dim() {
            return Err(ShadowError::DimensionMismatch {
                expected: self.dim(),
                found: k.dim(),
            });
        }
        let inv_k = channel_inverse(&k)?;
        self.inverse = self.inverse.then(inv_k)?;
        self.input_noise = Some(k);
        Ok(self)
    }

    /// Replaces the post-processing map, e.g. to invert with a mismatched channel.
    pub fn with_inverse(mut self, inverse: InverseMap) -> Result<Self> {
        if inverse.dim() != self.dim() {
            return Err(ShadowError::DimensionMismatch {
                expected: self.dim(),
                found: inverse.dim(),
            });
        }
        self.inverse = inverse;
        self.custom_inverse = true;
        Ok(self)
    }

    /// Post-processing as if the measurement were noiseless.
    pub fn naive(ensemble: UnitaryEnsemble, channel: QuantumChannel) -> Result<Self> {
        let n = ensemble.n().ok_or_else(|| {
            ShadowError::InvalidParameter("naive inverse needs a qubit ensemble".into())
        })?;
        let noiseless =
            ShadowChannel::for_protocol(&ensemble, &QuantumChannel::identity(n))?.inverse()?;
        Self::new(ensemble, channel)?.with_inverse(noiseless)
    }

    pub fn dim(&self) -> usize {
        self.ensemble.dim()
    }

    pub fn n(&self) -> usize {
        self.ensemble.n().expect("checked at construction")
    }

    pub fn inverse(&self) -> &InverseMap {
        &self.inverse
    }

    pub fn has_custom_inverse(&self) -> bool {
        self.custom_inverse
    }

    /// `K(ρ)`, or `ρ` without input noise.
    pub fn prepare(&self, rho: &DenseOperator) -> Result<DenseOperator> {
        match &self.input_noise {
            Some(k) => k.apply(rho),
            None => Ok(rho.clone()),
        }
    }

    /// `ρ̂ = inverse(U†|b⟩⟨b|U)`
    pub fn snapshot(&self, u: &DenseOperator, b: usize) -> Result<DenseOperator> {
        snapshot_generic(u, b, &self.inverse)
    }

    /// `Õ` with `tr(O ρ̂) = ⟨b|U Õ U†|b⟩`.
    pub fn effective_observable(&self, o: &DenseOperator) -> Result<DenseOperator> {
        self.inverse.apply_adjoint(o)
    }
}

/// One classical-shadow snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub tag: UnitaryTag,
    pub outcome: usize,
    pub rho_hat: DenseOperator,
}

/// Provenance written as the first line of a shadow-set file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowSetHeader {
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub ensemble: EnsembleDescriptor,
    pub channel: ChannelDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_noise: Option<ChannelDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<serde_json::Value>,
    pub inverse: Vec<StageDescriptor>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: ShadowSetHeader,
}

#[derive(Serialize, Deserialize)]
struct SnapshotLine {
    u: UnitaryTag,
    b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho_hat: Option<MatrixJson>,
}

/// Ordered snapshots with provenance.
#[derive(Clone, Debug)]
pub struct ShadowSet {
    pub header: ShadowSetHeader,
    pub snapshots: Vec<Snapshot>,
}

impl ShadowSet {
    pub fn new(header: ShadowSetHeader, snapshots: Vec<Snapshot>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(ShadowError::EmptyInput("shadow set has no snapshots"));
        }
        let d = 1usize << header.n;
        if let Some(bad) = snapshots.iter().find(|s| s.rho_hat.dim() != d) {
            return Err(ShadowError::DimensionMismatch {
                expected: d,
                found: bad.rho_hat.dim(),
            });
        }
        Ok(Self { header, snapshots })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// `tr(O ρ̂_i)` for every snapshot.
    pub fn values(&self, o: &DenseOperator) -> Vec<f64> {
        self.snapshots
            .iter()
            .map(|s| o.trace_product(&s.rho_hat).re)
            .collect()
    }

    /// Writes JSON lines: a header line followed by one line per snapshot.
    /// `rho_hat` is written only when the inverse cannot be rebuilt from the header.
    pub fn write_jsonl<W: Write>(&self, mut w: W, force_rho_hat: bool) -> std::io::Result<()> {
        let closed = !self
            .header
            .inverse
            .iter()
            .any(|s| matches!(s, StageDescriptor::Generic));
        let header = HeaderLine {
            header: self.header.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for s in &self.snapshots {
            let line = SnapshotLine {
                u: s.tag.clone(),
                b: index_to_bits(s.outcome, self.header.n)
                    .iter()
                    .map(|b| char::from(b'0' + b))
                    .collect(),
                rho_hat: (force_rho_hat || !closed).then(|| MatrixJson::from(&s.rho_hat)),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads a file produced by [`write_jsonl`](Self::write_jsonl), recomputing
    /// omitted snapshot matrices from the header.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, first) = lines
            .next()
            .ok_or(ShadowError::EmptyInput("shadow set file is empty"))?;
        let first = first.map_err(|e| ShadowError::Parse(e.to_string()))?;
        let header: HeaderLine =
            serde_json::from_str(&first).map_err(|e| ShadowError::Parse(format!("line 1: {e}")))?;
        let header = header.header;
        let ensemble = UnitaryEnsemble::from_descriptor(&header.ensemble)?;
        let inverse = InverseMap::from_descriptors(1 << header.n, &header.inverse).ok();
        let mut snapshots = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| ShadowError::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SnapshotLine = serde_json::from_str(&line)
                .map_err(|e| ShadowError::Parse(format!("line {}: {e}", i + 1)))?;
            let bits: Vec<u8> = rec
                .b
                .chars()
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    _ => Err(ShadowError::Parse(format!(
                        "line {}: bad bitstring \"{}\"",
                        i + 1,
                        rec.b
                    ))),
                })
                .collect::<Result<_>>()?;
            if bits.len() != header.n {
                return Err(ShadowError::Parse(format!(
                    "line {}: expected {} bits",
                    i + 1,
                    header.n
                )));
            }
            let outcome = bits_to_index(&bits);
            let rho_hat = match (&rec.rho_hat, &inverse) {
                (Some(m), _) => DenseOperator::try_from(m)?,
                (None, Some(inv)) => snapshot_generic(&ensemble.resolve(&rec.u)?, outcome, inv)?,
                (None, None) => {
                    return Err(ShadowError::Parse(format!(
                        "line {}: rho_hat missing and the inverse is not closed form",
                        i + 1
                    )))
                }
            };
            snapshots.push(Snapshot {
                tag: rec.u,
                outcome,
                rho_hat,
            });
        }
        Self::new(header, snapshots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::{haar_unitary, random_density, seeded};

    fn clifford1() -> UnitaryEnsemble {
        UnitaryEnsemble::single_qubit_clifford_group()
    }

    #[test]
    fn trivial_ensemble_gives_dephasing() {
        let sc =
            ShadowChannel::bruteforce(&UnitaryEnsemble::trivial(1), &QuantumChannel::identity(1))
                .unwrap();
        assert!(
            sc.superop()
                .max_abs_diff(QuantumChannel::dephasing(1).superop())
                < 1e-12
        );
    }

    #[test]
    fn single_qubit_bruteforce_closed_forms() {
        let sc = ShadowChannel::bruteforce(&clifford1(), &QuantumChannel::identity(1)).unwrap();
        assert!(
            sc.superop()
                .max_abs_diff(&Superoperator::depolarizing(2, 1.0 / 3.0))
                < 1e-12
        );
        let p = 0.3;
        let ad = QuantumChannel::amplitude_damping(1, p).unwrap();
        let sc = ShadowChannel::bruteforce(&clifford1(), &ad).unwrap();
        assert!(
            sc.superop()
                .max_abs_diff(&Superoperator::depolarizing(2, p / 3.0))
                < 1e-12
        );
    }

    #[test]
    fn named_f_values() {
        for n in 1..=3 {
            let d = (1usize << n) as f64;
            assert!((f_of_e(&QuantumChannel::identity(n)) - 1.0 / (d + 1.0)).abs() < 1e-12);
            assert!(
                (f_of_e(&QuantumChannel::depolarizing(n, 0.8)) - 0.8 / (d + 1.0)).abs() < 1e-12
            );
            let p: f64 = 0.5;
            let expected = ((1.0 + p).powi(n as i32) - 1.0) / (d * d - 1.0);
            assert!(
                (f_of_e(&QuantumChannel::amplitude_damping(n, p).unwrap()) - expected).abs()
                    < 1e-12
            );
        }
        assert!(
            (f_of_e(&QuantumChannel::amplitude_damping(2, 0.5).unwrap()) - 1.0 / 12.0).abs()
                < 1e-12
        );
    }

    #[test]
    fn f_bounds() {
        let id = check_f_bounds(&QuantumChannel::identity(2));
        assert!(id.within && (id.f - id.upper).abs() < 1e-12);
        let ad0 = check_f_bounds(&QuantumChannel::amplitude_damping(1, 0.0).unwrap());
        assert!(ad0.within && ad0.f.abs() < 1e-12);
        let mut rng = seeded(40);
        for k in 0..50 {
            let e = QuantumChannel::random_cptp(2 << (k % 2), 1 + k % 4, &mut rng).unwrap();
            assert!(check_f_bounds(&e).within);
            assert!(f_of_e(&e) <= f_of_e(&QuantumChannel::identity(e.n().unwrap())) + 1e-12);
        }
    }

    #[test]
    fn closed_form_examples() {
        let g = UnitaryEnsemble::global_clifford(2).unwrap();
        let sc = ShadowChannel::closed_form(&g, &QuantumChannel::depolarizing(2, 0.8)).unwrap();
        assert!(matches!(sc.form(), ShadowForm::Depolarizing { f } if (f - 0.16).abs() < 1e-12));
        let prod = UnitaryEnsemble::clifford_product(3).unwrap();
        let sc =
            ShadowChannel::closed_form(&prod, &QuantumChannel::amplitude_damping(3, 0.6).unwrap())
                .unwrap();
        match sc.form() {
            ShadowForm::ProductDepolarizing { fs } => {
                assert!(fs.iter().all(|f| (f - 0.2).abs() < 1e-12))
            }
            other => panic!("unexpected form {other:?}"),
        }
        let sc = ShadowChannel::closed_form(&g, &QuantumChannel::identity(2)).unwrap();
        assert!(matches!(sc.form(), ShadowForm::Depolarizing { f } if (f - 0.2).abs() < 1e-12));
        assert!(ShadowChannel::closed_form(
            &UnitaryEnsemble::trivial(1),
            &QuantumChannel::identity(1)
        )
        .is_err());
    }

    #[test]
    fn invertibility() {
        let ens = clifford1();
        let full = QuantumChannel::depolarizing(1, 0.0);
        let sc = ShadowChannel::closed_form(&ens, &full).unwrap();
        assert!(!sc.is_invertible());
        match sc.inverse() {
            Err(ShadowError::NotInvertible { beta }) => assert!((beta - 1.0).abs() < 1e-12),
            other => panic!("expected non-invertible, got {other:?}"),
        }
        assert!(ShadowChannel::bruteforce(&ens, &full)
            .unwrap()
            .inverse()
            .is_err());
        let ad = QuantumChannel::amplitude_damping(1, 0.5).unwrap();
        assert!(ShadowChannel::closed_form(&ens, &ad)
            .unwrap()
            .is_invertible());
    }

    #[test]
    fn inverses_match_across_representations() {
        let ens = clifford1();
        let p = 0.4;
        let ad = QuantumChannel::amplitude_damping(1, p).unwrap();
        let closed = ShadowChannel::closed_form(&ens, &ad)
            .unwrap()
            .inverse()
            .unwrap();
        assert!((closed.as_depolarizing().unwrap() - 3.0 / p).abs() < 1e-12);
        let generic = ShadowChannel::bruteforce(&ens, &ad)
            .unwrap()
            .inverse()
            .unwrap();
        assert!(
            generic
                .superop()
                .unwrap()
                .max_abs_diff(&closed.superop().unwrap())
                < 1e-9
        );
        let noiseless = ShadowChannel::closed_form(&ens, &QuantumChannel::identity(1))
            .unwrap()
            .inverse()
            .unwrap();
        assert!((noiseless.as_depolarizing().unwrap() - 3.0).abs() < 1e-12);
        let fwd = ShadowChannel::bruteforce(&ens, &ad).unwrap().superop();
        let id = generic.superop().unwrap().compose(&fwd).unwrap();
        assert!(id.max_abs_diff(&Superoperator::identity(2)) < 1e-9);
    }

    #[test]
    fn snapshot_forms() {
        let mut rng = seeded(41);
        let u = haar_unitary(4, &mut rng);
        let noiseless = snapshot_global(&u, 2, 1.0 / 5.0).unwrap();
        let expected = &projected(&u, 2).scale_real(5.0) - &DenseOperator::identity(4);
        assert!(noiseless.max_abs_diff(&expected) < 1e-12);
        assert!(
            snapshot_global(&u, 1, 1.0)
                .unwrap()
                .max_abs_diff(&projected(&u, 1))
                < 1e-12
        );
        for f in [0.1, 0.5, -0.05] {
            assert!((snapshot_global(&u, 3, f).unwrap().trace().re - 1.0).abs() < 1e-12);
        }
        assert!(snapshot_global(&u, 0, 0.0).is_err());

        let id = DenseOperator::identity(2);
        let s =
            snapshot_product(&[id.clone(), id.clone()], &[0, 0], &[1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert!(s.max_abs_diff(&DenseOperator::diagonal(&[4.0, -2.0, -2.0, 1.0])) < 1e-12);

        let f = 0.6;
        let v = haar_unitary(2, &mut rng);
        let factor = snapshot_global(&v, 1, f / 3.0).unwrap();
        let expected =
            &projected(&v, 1).scale_real(3.0 / f) - &id.scale_real((3.0 - f) / (2.0 * f));
        assert!(factor.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn product_snapshot_matches_generic() {
        let mut rng = seeded(42);
        let us = [haar_unitary(2, &mut rng), haar_unitary(2, &mut rng)];
        let fs = [0.2, 0.25];
        let prod = snapshot_product(&us, &[1, 0], &fs).unwrap();
        let inv = InverseMap::new(
            4,
            vec![InverseStage::ProductDepolarizing {
                fs: fs.iter().map(|f| 1.0 / f).collect(),
            }],
        )
        .unwrap();
        let generic = snapshot_generic(&us[0].kron(&us[1]), 2, &inv).unwrap();
        assert!(prod.max_abs_diff(&generic) < 1e-12);
    }

    #[test]
    fn generic_inverse_reproduces_global_snapshot() {
        let ens = clifford1();
        let ad = QuantumChannel::amplitude_damping(1, 0.5).unwrap();
        let inv = ShadowChannel::bruteforce(&ens, &ad)
            .unwrap()
            .inverse()
            .unwrap();
        for el in ens.elements().unwrap().iter().take(6) {
            for b in 0..2 {
                let a = snapshot_generic(&el.unitary, b, &inv).unwrap();
                let c = snapshot_global(&el.unitary, b, 1.0 / 6.0).unwrap();
                assert!(a.max_abs_diff(&c) < 1e-9);
            }
        }
    }

    #[test]
    fn input_noise_snapshot() {
        let ens = clifford1();
        let g = 0.7;
        let protocol = ShadowProtocol::new(ens.clone(), QuantumChannel::identity(1))
            .unwrap()
            .with_input_noise(QuantumChannel::depolarizing(1, g))
            .unwrap();
        let u = &ens.elements().unwrap()[5].unitary;
        let expected = InverseStage::Depolarizing { f: 1.0 / g }
            .apply(&(&projected(u, 0).scale_real(3.0) - &DenseOperator::identity(2)))
            .unwrap();
        assert!(protocol.snapshot(u, 0).unwrap().max_abs_diff(&expected) < 1e-12);

        let plain = ShadowProtocol::new(ens.clone(), QuantumChannel::identity(1)).unwrap();
        let with_id = plain
            .clone()
            .with_input_noise(QuantumChannel::identity(1))
            .unwrap();
        assert!(
            plain
                .snapshot(u, 1)
                .unwrap()
                .max_abs_diff(&with_id.snapshot(u, 1).unwrap())
                < 1e-12
        );
    }

    #[test]
    fn local_depolarizing_matches_superoperator() {
        let mut rng = seeded(43);
        let a = random_density(8, &mut rng);
        let out = apply_local_depolarizing(&a, 3, 1, 0.3);
        let sup = Superoperator::depolarizing(2, 1.0)
            .tensor(&Superoperator::depolarizing(2, 0.3))
            .tensor(&Superoperator::depolarizing(2, 1.0));
        assert!(out.max_abs_diff(&sup.apply(&a).unwrap()) < 1e-12);
    }

    #[test]
    fn adjoint_of_generic_inverse() {
        let mut rng = seeded(44);
        let e = QuantumChannel::random_cptp(2, 2, &mut rng).unwrap();
        let inv = ShadowChannel::bruteforce(&clifford1(), &e)
            .unwrap()
            .inverse()
            .unwrap();
        let (x, y) = (random_density(2, &mut rng), random_density(2, &mut rng));
        let lhs = inv.apply_adjoint(&x).unwrap().hs_inner(&y);
        let rhs = x.hs_inner(&inv.apply(&y).unwrap());
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn shadow_set_round_trip() {
        let ens = UnitaryEnsemble::clifford_product(2).unwrap();
        let protocol = ShadowProtocol::new(ens.clone(), QuantumChannel::identity(2)).unwrap();
        let mut rng = seeded(45);
        let snapshots: Vec<Snapshot> = (0..5)
            .map(|i| {
                let el = ens.sample(&mut rng).unwrap();
                Snapshot {
                    rho_hat: protocol.snapshot(&el.unitary, i % 4).unwrap(),
                    tag: el.tag,
                    outcome: i % 4,
                }
            })
            .collect();
        let header = ShadowSetHeader {
            n: 2,
            count: 5,
            seed: 45,
            ensemble: ens.descriptor(),
            channel: protocol.channel.descriptor().clone(),
            input_noise: None,
            state: None,
            inverse: protocol.inverse().descriptors(),
        };
        let set = ShadowSet::new(header, snapshots).unwrap();
        for force in [false, true] {
            let mut buf = Vec::new();
            set.write_jsonl(&mut buf, force).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            assert_eq!(text.contains("rho_hat"), force);
            let back = ShadowSet::read_jsonl(std::io::Cursor::new(buf)).unwrap();
            assert_eq!(back.len(), 5);
            for (a, b) in set.snapshots.iter().zip(&back.snapshots) {
                assert_eq!(a.outcome, b.outcome);
                assert!(a.rho_hat.max_abs_diff(&b.rho_hat) < 1e-12);
            }
        }
    }
}
