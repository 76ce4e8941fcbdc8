//! Unitary ensembles: exhaustive Clifford groups, product ensembles, uniform
//! global-Clifford sampling and Haar sampling.

pub mod clifford;
pub mod tableau;
pub mod twirl;

use std::sync::{Arc, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShadowError};
use crate::linalg::random::haar_unitary;
use crate::linalg::{kron_all, qubits_for_dim, DenseOperator, MatrixJson};
use crate::registry::{Named, Registry};

pub use clifford::{clifford_group, CliffordElement, CliffordGroup, Gate};
pub use twirl::{
    haar_twirl, haar_twirl_2, haar_twirl_3, is_t_design, is_tomographically_complete, twirl,
    twirl_monte_carlo, TwirlEstimate,
};

/// Largest qubit count accepted by the dense global-Clifford sampler.
pub const MAX_SAMPLER_QUBITS: usize = 6;
/// Largest product ensemble materialized element by element.
pub const MAX_MATERIALIZED: usize = 1 << 20;

/// How a sampled unitary is recorded in shadow sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitaryTag {
    Gates(Vec<Gate>),
    Index(usize),
    Matrix(MatrixJson),
    Product(Vec<UnitaryTag>),
}

/// A unitary together with its tag.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleElement {
    pub unitary: DenseOperator,
    pub tag: UnitaryTag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    GlobalClifford { n: usize },
    Haar { dim: usize },
}

/// Design property certified by construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DesignClass {
    /// Global unitary `t`-design on the full space (`u32::MAX` for Haar).
    Global {
        t: u32,
    },
    /// Tensor product of single-qubit `t`-designs.
    ProductOfQubitDesigns {
        t: u32,
    },
    Unknown,
}

/// Unitary ensemble with uniform weights.
#[derive(Clone, Debug)]
pub enum UnitaryEnsemble {
    Explicit {
        label: String,
        elements: Arc<Vec<EnsembleElement>>,
        design: Option<u32>,
    },
    Product(Vec<UnitaryEnsemble>),
    Sampler(SamplerKind),
}

impl UnitaryEnsemble {
    /// The 24 single-qubit Cliffords modulo phase.
    pub fn single_qubit_clifford_group() -> Self {
        Self::enumerate_clifford(1).expect("one-qubit enumeration")
    }

    /// Exhaustive Clifford group for `n ≤ 2`.
    pub fn enumerate_clifford(n: usize) -> Result<Self> {
        let group = clifford_group(n)?;
        // the gate word, not the phase-canonical matrix, so tags resolve exactly
        let elements = group
            .elements
            .iter()
            .map(|e| {
                Ok(EnsembleElement {
                    unitary: clifford::densify(&e.gates, n)?,
                    tag: UnitaryTag::Gates(e.gates.clone()),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self::Explicit {
            label: format!("clifford_{n}"),
            elements: Arc::new(elements),
            design: Some(3),
        })
    }

    /// Uniform global Clifford ensemble; enumerable for `n ≤ 2`, sampled via tableaux otherwise.
    pub fn global_clifford(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_SAMPLER_QUBITS {
            return Err(ShadowError::Unsupported(format!(
                "global Clifford ensemble needs 1 ≤ n ≤ {MAX_SAMPLER_QUBITS}, got {n}"
            )));
        }
        Ok(Self::Sampler(SamplerKind::GlobalClifford { n }))
    }

    /// `C_1^{⊗n}`
    pub fn clifford_product(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(ShadowError::InvalidParameter(
                "product ensemble needs n ≥ 1".into(),
            ));
        }
        Ok(Self::Product(vec![Self::single_qubit_clifford_group(); n]))
    }

    pub fn haar(dim: usize) -> Self {
        Self::Sampler(SamplerKind::Haar { dim })
    }

    /// Finite ensemble of user-supplied unitaries.
    pub fn explicit(label: &str, unitaries: Vec<DenseOperator>) -> Result<Self> {
        let first = unitaries
            .first()
            .ok_or(ShadowError::EmptyInput("ensemble has no elements"))?;
        let dim = first.dim();
        let mut elements = Vec::with_capacity(unitaries.len());
        for (i, u) in unitaries.into_iter().enumerate() {
            if u.dim() != dim {
                return Err(ShadowError::DimensionMismatch {
                    expected: dim,
                    found: u.dim(),
                });
            }
            if !u.is_unitary(1e-10) {
                return Err(ShadowError::InvalidParameter(format!(
                    "element {i} is not unitary"
                )));
            }
            elements.push(EnsembleElement {
                unitary: u,
                tag: UnitaryTag::Index(i),
            });
        }
        Ok(Self::Explicit {
            label: label.to_string(),
            elements: Arc::new(elements),
            design: None,
        })
    }

    /// `{I}` on `n` qubits.
    pub fn trivial(n: usize) -> Self {
        Self::explicit("identity", vec![DenseOperator::identity(1 << n)])
            .expect("identity is unitary")
    }

    pub fn product(factors: Vec<UnitaryEnsemble>) -> Result<Self> {
        if factors.is_empty() {
            return Err(ShadowError::EmptyInput("product ensemble without factors"));
        }
        Ok(Self::Product(factors))
    }

    pub fn from_descriptor(desc: &EnsembleDescriptor) -> Result<Self> {
        let builder = ensemble_registry().get(&desc.kind).ok_or_else(|| {
            ShadowError::Parse(format!(
                "unknown ensemble kind \"{}\" (known: {})",
                desc.kind,
                ensemble_registry().names().join(", ")
            ))
        })?;
        builder.build(desc)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Explicit { elements, .. } => elements[0].unitary.dim(),
            Self::Product(fs) => fs.iter().map(Self::dim).product(),
            Self::Sampler(SamplerKind::GlobalClifford { n }) => 1 << n,
            Self::Sampler(SamplerKind::Haar { dim }) => *dim,
        }
    }

    pub fn n(&self) -> Option<usize> {
        qubits_for_dim(self.dim())
    }

    pub fn label(&self) -> String {
        match self {
            Self::Explicit { label, .. } => label.clone(),
            Self::Product(fs) => fs.iter().map(Self::label).collect::<Vec<_>>().join("⊗"),
            Self::Sampler(SamplerKind::GlobalClifford { n }) => format!("clifford_global_{n}"),
            Self::Sampler(SamplerKind::Haar { dim }) => format!("haar_{dim}"),
        }
    }

    pub fn design_class(&self) -> DesignClass {
        match self {
            Self::Explicit {
                design: Some(t), ..
            } => DesignClass::Global { t: *t },
            Self::Explicit { design: None, .. } => DesignClass::Unknown,
            Self::Sampler(SamplerKind::GlobalClifford { .. }) => DesignClass::Global { t: 3 },
            Self::Sampler(SamplerKind::Haar { .. }) => DesignClass::Global { t: u32::MAX },
            Self::Product(fs) => {
                let mut t_min = u32::MAX;
                for f in fs {
                    match (f.dim(), f.design_class()) {
                        (2, DesignClass::Global { t }) => t_min = t_min.min(t),
                        _ => return DesignClass::Unknown,
                    }
                }
                DesignClass::ProductOfQubitDesigns { t: t_min }
            }
        }
    }

    /// Single-qubit factor ensembles of a product ensemble.
    pub fn qubit_factors(&self) -> Option<Vec<UnitaryEnsemble>> {
        match self {
            Self::Product(fs) => {
                let mut out = Vec::new();
                for f in fs {
                    out.extend(f.qubit_factors()?);
                }
                Some(out)
            }
            other if other.dim() == 2 => Some(vec![other.clone()]),
            _ => None,
        }
    }

    /// Number of elements, when the ensemble can be enumerated.
    pub fn size(&self) -> Option<usize> {
        match self {
            Self::Explicit { elements, .. } => Some(elements.len()),
            Self::Product(fs) => fs
                .iter()
                .try_fold(1usize, |acc, f| acc.checked_mul(f.size()?)),
            Self::Sampler(SamplerKind::GlobalClifford { n }) if *n <= 2 => {
                Some(if *n == 1 { 24 } else { 11520 })
            }
            Self::Sampler(_) => None,
        }
    }

    pub fn is_enumerable(&self) -> bool {
        self.size().is_some_and(|s| s <= MAX_MATERIALIZED)
    }

    /// All elements with uniform weight.
    pub fn elements(&self) -> Result<Arc<Vec<EnsembleElement>>> {
        match self {
            Self::Explicit { elements, .. } => Ok(elements.clone()),
            Self::Sampler(SamplerKind::GlobalClifford { n }) if *n <= 2 => {
                match Self::enumerate_clifford(*n)? {
                    Self::Explicit { elements, .. } => Ok(elements),
                    _ => unreachable!("enumeration yields an explicit ensemble"),
                }
            }
            Self::Product(fs) => {
                let size = self
                    .size()
                    .filter(|&s| s <= MAX_MATERIALIZED)
                    .ok_or_else(|| {
                        ShadowError::Unsupported(format!(
                            "product ensemble {} is too large to enumerate",
                            self.label()
                        ))
                    })?;
                let parts: Vec<Arc<Vec<EnsembleElement>>> =
                    fs.iter().map(Self::elements).collect::<Result<_>>()?;
                let mut out = Vec::with_capacity(size);
                let mut idx = vec![0usize; parts.len()];
                loop {
                    let picked: Vec<&EnsembleElement> =
                        idx.iter().zip(&parts).map(|(&i, p)| &p[i]).collect();
                    out.push(EnsembleElement {
                        unitary: kron_all(picked.iter().map(|e| &e.unitary)),
                        tag: UnitaryTag::Product(picked.iter().map(|e| e.tag.clone()).collect()),
                    });
                    let mut k = parts.len();
                    loop {
                        if k == 0 {
                            return Ok(Arc::new(out));
                        }
                        k -= 1;
                        idx[k] += 1;
                        if idx[k] < parts[k].len() {
                            break;
                        }
                        idx[k] = 0;
                    }
                }
            }
            Self::Sampler(_) => Err(ShadowError::Unsupported(format!(
                "ensemble {} is sampled, not enumerable",
                self.label()
            ))),
        }
    }

    /// Draws one element.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<EnsembleElement> {
        match self {
            Self::Explicit { elements, .. } => {
                Ok(elements[rng.random_range(0..elements.len())].clone())
            }
            Self::Product(fs) => {
                let parts: Vec<EnsembleElement> =
                    fs.iter().map(|f| f.sample(rng)).collect::<Result<_>>()?;
                Ok(EnsembleElement {
                    unitary: kron_all(parts.iter().map(|e| &e.unitary)),
                    tag: UnitaryTag::Product(parts.into_iter().map(|e| e.tag).collect()),
                })
            }
            Self::Sampler(SamplerKind::GlobalClifford { n }) => {
                let gates = tableau::sample_clifford_gates(*n, rng);
                Ok(EnsembleElement {
                    unitary: clifford::densify(&gates, *n)?,
                    tag: UnitaryTag::Gates(gates),
                })
            }
            Self::Sampler(SamplerKind::Haar { dim }) => {
                let u = haar_unitary(*dim, rng);
                Ok(EnsembleElement {
                    tag: UnitaryTag::Matrix(MatrixJson::from(&u)),
                    unitary: u,
                })
            }
        }
    }

    /// Reconstructs the unitary behind a tag produced by this ensemble.
    pub fn resolve(&self, tag: &UnitaryTag) -> Result<DenseOperator> {
        match (self, tag) {
            (_, UnitaryTag::Matrix(m)) => DenseOperator::try_from(m),
            (Self::Explicit { elements, .. }, UnitaryTag::Index(i)) => elements
                .get(*i)
                .map(|e| e.unitary.clone())
                .ok_or_else(|| ShadowError::Parse(format!("element index {i} out of range"))),
            (_, UnitaryTag::Gates(gates)) => {
                let n = self
                    .n()
                    .ok_or_else(|| ShadowError::Parse("gate tags need a qubit ensemble".into()))?;
                clifford::densify(gates, n)
            }
            (Self::Product(fs), UnitaryTag::Product(tags)) if fs.len() == tags.len() => {
                let parts: Vec<DenseOperator> = fs
                    .iter()
                    .zip(tags)
                    .map(|(f, t)| f.resolve(t))
                    .collect::<Result<_>>()?;
                Ok(kron_all(&parts))
            }
            _ => Err(ShadowError::Parse(format!(
                "tag does not match ensemble {}",
                self.label()
            ))),
        }
    }

    pub fn descriptor(&self) -> EnsembleDescriptor {
        let mut desc = EnsembleDescriptor {
            kind: String::new(),
            n: self.n(),
            dim: None,
            seed: None,
            elements: None,
        };
        match self {
            Self::Sampler(SamplerKind::GlobalClifford { .. }) => {
                desc.kind = "clifford_global".into()
            }
            Self::Explicit { label, .. } if label.starts_with("clifford_") => {
                desc.kind = "clifford_global".into()
            }
            Self::Sampler(SamplerKind::Haar { dim }) => {
                desc.kind = "haar".into();
                desc.dim = Some(*dim);
            }
            Self::Product(_)
                if self.design_class() != DesignClass::Unknown && self.is_clifford_product() =>
            {
                desc.kind = "clifford_product".into();
            }
            other => {
                desc.kind = "explicit".into();
                if let Ok(els) = other.elements() {
                    desc.elements =
                        Some(els.iter().map(|e| MatrixJson::from(&e.unitary)).collect());
                }
            }
        }
        desc
    }

    fn is_clifford_product(&self) -> bool {
        match self {
            Self::Product(fs) => fs
                .iter()
                .all(|f| matches!(f, Self::Explicit { label, .. } if label == "clifford_1")),
            _ => false,
        }
    }
}

/// JSON descriptor of an ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDescriptor {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Local dimension for `haar` ensembles that are not on qubits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Unitaries of an `explicit` ensemble.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elements: Option<Vec<MatrixJson>>,
}

impl EnsembleDescriptor {
    pub fn new(kind: &str, n: usize) -> Self {
        Self {
            kind: kind.into(),
            n: Some(n),
            dim: None,
            seed: None,
            elements: None,
        }
    }

    fn require_n(&self) -> Result<usize> {
        self.n.ok_or_else(|| {
            ShadowError::Parse(format!("ensemble \"{}\" needs field \"n\"", self.kind))
        })
    }
}

/// Builds ensembles of one `kind` from descriptors.
pub trait EnsembleBuilder: Named {
    fn build(&self, desc: &EnsembleDescriptor) -> Result<UnitaryEnsemble>;
}

struct GlobalCliffordBuilder;
struct ProductCliffordBuilder;
struct HaarBuilder;
struct ExplicitBuilder;

impl Named for GlobalCliffordBuilder {
    fn name(&self) -> &str {
        "clifford_global"
    }
}

impl Named for ProductCliffordBuilder {
    fn name(&self) -> &str {
        "clifford_product"
    }
}

impl Named for HaarBuilder {
    fn name(&self) -> &str {
        "haar"
    }
}

impl Named for ExplicitBuilder {
    fn name(&self) -> &str {
        "explicit"
    }
}

impl EnsembleBuilder for GlobalCliffordBuilder {
    fn build(&self, desc: &EnsembleDescriptor) -> Result<UnitaryEnsemble> {
        UnitaryEnsemble::global_clifford(desc.require_n()?)
    }
}

impl EnsembleBuilder for ProductCliffordBuilder {
    fn build(&self, desc: &EnsembleDescriptor) -> Result<UnitaryEnsemble> {
        UnitaryEnsemble::clifford_product(desc.require_n()?)
    }
}

impl EnsembleBuilder for HaarBuilder {
    fn build(&self, desc: &EnsembleDescriptor) -> Result<UnitaryEnsemble> {
        let dim = match (desc.dim, desc.n) {
            (Some(d), _) => d,
            (None, Some(n)) => 1 << n,
            (None, None) => {
                return Err(ShadowError::Parse(
                    "ensemble \"haar\" needs \"n\" or \"dim\"".into(),
                ))
            }
        };
        Ok(UnitaryEnsemble::haar(dim))
    }
}

impl EnsembleBuilder for ExplicitBuilder {
    fn build(&self, desc: &EnsembleDescriptor) -> Result<UnitaryEnsemble> {
        let mats = desc.elements.as_ref().ok_or_else(|| {
            ShadowError::Parse("ensemble \"explicit\" needs field \"elements\"".into())
        })?;
        let ops: Vec<DenseOperator> = mats
            .iter()
            .map(DenseOperator::try_from)
            .collect::<Result<_>>()?;
        let ens = UnitaryEnsemble::explicit("explicit", ops)?;
        if let (Some(n), Some(m)) = (desc.n, ens.n()) {
            if n != m {
                return Err(ShadowError::DimensionMismatch {
                    expected: n,
                    found: m,
                });
            }
        }
        Ok(ens)
    }
}

/// Registry of ensemble builders keyed by descriptor `kind`.
pub fn ensemble_registry() -> &'static Registry<dyn EnsembleBuilder> {
    static REGISTRY: OnceLock<Registry<dyn EnsembleBuilder>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let reg: Registry<dyn EnsembleBuilder> = Registry::new("ensemble");
        reg.register(Arc::new(GlobalCliffordBuilder));
        reg.register(Arc::new(ProductCliffordBuilder));
        reg.register(Arc::new(HaarBuilder));
        reg.register(Arc::new(ExplicitBuilder));
        reg
    })
}
