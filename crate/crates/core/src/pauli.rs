//! Pauli strings and Pauli-basis expansions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ShadowError};
use crate::linalg::{kron_all, DenseOperator, HermitianObservable, C64, I, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    /// Index in `Z_4` with `I = 0`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Pauli {
        Self::ALL[i % 4]
    }

    pub fn matrix(self) -> DenseOperator {
        let entries = match self {
            Pauli::I => [ONE, ZERO, ZERO, ONE],
            Pauli::X => [ZERO, ONE, ONE, ZERO],
            Pauli::Y => [ZERO, -I, I, ZERO],
            Pauli::Z => [ONE, ZERO, ZERO, -ONE],
        };
        DenseOperator::from_row_major(2, entries.to_vec()).expect("2x2 Pauli")
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Tensor product of single-qubit Paulis; qubit 0 is the leftmost character.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PauliString(Vec<Pauli>);

impl PauliString {
    pub fn new(ops: Vec<Pauli>) -> Self {
        Self(ops)
    }

    pub fn identity(n: usize) -> Self {
        Self(vec![Pauli::I; n])
    }

    /// Pauli string whose `k`-th factor is `Pauli::from_index(digit k of index in base 4)`,
    /// with the most significant digit on qubit 0.
    pub fn from_index(mut index: usize, n: usize) -> Self {
        let mut ops = vec![Pauli::I; n];
        for q in (0..n).rev() {
            ops[q] = Pauli::from_index(index % 4);
            index /= 4;
        }
        Self(ops)
    }

    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, p| acc * 4 + p.index())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ops(&self) -> &[Pauli] {
        &self.0
    }

    /// Number of non-identity factors.
    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&p| p != Pauli::I).count()
    }

    /// Qubits carrying a non-identity factor.
    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len())
            .filter(|&q| self.0[q] != Pauli::I)
            .collect()
    }

    pub fn to_dense(&self) -> DenseOperator {
        let mats: Vec<DenseOperator> = self.0.iter().map(|p| p.matrix()).collect();
        kron_all(&mats)
    }

    pub fn to_observable(&self) -> HermitianObservable {
        HermitianObservable::new(self.to_dense()).expect("Pauli strings are Hermitian")
    }

    /// All `4^n` Pauli strings in index order.
    pub fn all(n: usize) -> impl Iterator<Item = PauliString> {
        (0..1usize << (2 * n)).map(move |i| PauliString::from_index(i, n))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "{}", p.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = ShadowError;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(ShadowError::Parse("empty Pauli string".into()));
        }
        s.chars()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(ShadowError::Parse(format!(
                    "invalid Pauli symbol '{other}' in \"{s}\""
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(PauliString)
    }
}

impl TryFrom<String> for PauliString {
    type Error = ShadowError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PauliString> for String {
    fn from(p: PauliString) -> String {
        p.to_string()
    }
}

/// Real coefficients `α_p = tr(P_p O) / 2^n` of a Hermitian operator in the
/// Pauli basis, indexed by [`PauliString::index`].
pub fn pauli_coefficients(o: &HermitianObservable) -> Result<Vec<f64>> {
    let d = o.dim();
    let n = crate::linalg::qubits_for_dim(d).ok_or_else(|| {
        ShadowError::InvalidParameter(format!("dimension {d} is not a power of two"))
    })?;
    Ok(PauliString::all(n)
        .map(|p| p.to_dense().trace_product(o.op()).re / d as f64)
        .collect())
}

/// `Σ_p α_p P_p`
pub fn from_pauli_coefficients(coeffs: &[f64], n: usize) -> Result<HermitianObservable> {
    if coeffs.len() != 1 << (2 * n) {
        return Err(ShadowError::LengthMismatch {
            expected: 1 << (2 * n),
            found: coeffs.len(),
        });
    }
    let mut acc = DenseOperator::zeros(1 << n);
    for (i, &a) in coeffs.iter().enumerate() {
        if a != 0.0 {
            acc += &PauliString::from_index(i, n)
                .to_dense()
                .scale(C64::new(a, 0.0));
        }
    }
    HermitianObservable::new(acc)
}

/// Returns the Pauli string if `o` equals one up to roundoff.
pub fn as_pauli_string(o: &HermitianObservable) -> Option<PauliString> {
    let coeffs = pauli_coefficients(o).ok()?;
    let n = crate::linalg::qubits_for_dim(o.dim())?;
    let mut hit = None;
    for (i, &a) in coeffs.iter().enumerate() {
        if (a - 1.0).abs() < 1e-10 {
            if hit.is_some() {
                return None;
            }
            hit = Some(i);
        } else if a.abs() > 1e-10 {
            return None;
        }
    }
    hit.map(|i| PauliString::from_index(i, n))
}
