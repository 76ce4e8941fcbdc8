//! Clifford generators, dense gate application and exhaustive enumeration of
//! the Clifford group modulo global phase for one and two qubits.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShadowError};
use crate::linalg::{DenseOperator, C64, I};

/// Generator of the Clifford group. Qubit 0 is the most significant bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Gate {
    H(usize),
    S(usize),
    /// Control, target.
    Cnot(usize, usize),
}

impl Gate {
    pub fn max_qubit(&self) -> usize {
        match *self {
            Gate::H(q) | Gate::S(q) => q,
            Gate::Cnot(c, t) => c.max(t),
        }
    }

    /// Left-multiplies `u` by the gate acting on `n` qubits.
    pub fn apply_left(&self, u: &mut DMatrix<C64>, n: usize) {
        let d = 1usize << n;
        let bit = |q: usize| 1usize << (n - 1 - q);
        match *self {
            Gate::H(q) => {
                let b = bit(q);
                let s = std::f64::consts::FRAC_1_SQRT_2;
                for r in (0..d).filter(|r| r & b == 0) {
                    let r1 = r | b;
                    for c in 0..u.ncols() {
                        let (x, y) = (u[(r, c)], u[(r1, c)]);
                        u[(r, c)] = (x + y) * s;
                        u[(r1, c)] = (x - y) * s;
                    }
                }
            }
            Gate::S(q) => {
                let b = bit(q);
                for r in (0..d).filter(|r| r & b != 0) {
                    for c in 0..u.ncols() {
                        u[(r, c)] *= I;
                    }
                }
            }
            Gate::Cnot(c, t) => {
                let (bc, bt) = (bit(c), bit(t));
                for r in (0..d).filter(|r| r & bc != 0 && r & bt == 0) {
                    u.swap_rows(r, r | bt);
                }
            }
        }
    }

    pub fn matrix(&self, n: usize) -> DenseOperator {
        let mut u = DMatrix::identity(1 << n, 1 << n);
        self.apply_left(&mut u, n);
        DenseOperator::from_matrix(u).expect("square")
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::H(q) => write!(f, "H{q}"),
            Gate::S(q) => write!(f, "S{q}"),
            Gate::Cnot(c, t) => write!(f, "CX{c}-{t}"),
        }
    }
}

impl FromStr for Gate {
    type Err = ShadowError;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || ShadowError::Parse(format!("invalid gate tag \"{s}\""));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        if let Some(rest) = s.strip_prefix("CX") {
            let (c, t) = rest.split_once('-').ok_or_else(bad)?;
            let (c, t) = (num(c)?, num(t)?);
            if c == t {
                return Err(bad());
            }
            Ok(Gate::Cnot(c, t))
        } else if let Some(rest) = s.strip_prefix('H') {
            Ok(Gate::H(num(rest)?))
        } else if let Some(rest) = s.strip_prefix('S') {
            Ok(Gate::S(num(rest)?))
        } else {
            Err(bad())
        }
    }
}

impl TryFrom<String> for Gate {
    type Error = ShadowError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Gate> for String {
    fn from(g: Gate) -> String {
        g.to_string()
    }
}

/// Unitary of a gate sequence applied in order (first gate acts first).
pub fn densify(gates: &[Gate], n: usize) -> Result<DenseOperator> {
    if let Some(g) = gates.iter().find(|g| g.max_qubit() >= n) {
        return Err(ShadowError::InvalidParameter(format!(
            "gate {g} acts outside {n} qubits"
        )));
    }
    let mut u = DMatrix::identity(1 << n, 1 << n);
    for g in gates {
        g.apply_left(&mut u, n);
    }
    DenseOperator::from_matrix(u)
}

/// Clifford unitary with the generator word that produces it.
#[derive(Clone, Debug, PartialEq)]
pub struct CliffordElement {
    pub n: usize,
    pub gates: Vec<Gate>,
    pub dense: DenseOperator,
}

impl CliffordElement {
    pub fn from_gates(gates: Vec<Gate>, n: usize) -> Result<Self> {
        let dense = densify(&gates, n)?;
        Ok(Self { n, gates, dense })
    }
}

/// Multiplies by the phase that makes the first nonnegligible entry real positive.
pub fn canonical_phase(u: &DenseOperator) -> DenseOperator {
    let m = u.matrix();
    match m.iter().find(|z| z.norm() > 1e-6) {
        Some(z) => u.scale(z.conj() / z.norm()),
        None => u.clone(),
    }
}

/// Hash key of a unitary modulo global phase.
pub fn phase_key(u: &DenseOperator) -> Vec<i64> {
    canonical_phase(u)
        .matrix()
        .iter()
        .flat_map(|z| [(z.re * 1e6).round() as i64, (z.im * 1e6).round() as i64])
        .collect()
}

/// Clifford group modulo phase, with lookup by unitary.
#[derive(Debug)]
pub struct CliffordGroup {
    pub n: usize,
    pub elements: Vec<CliffordElement>,
    index: HashMap<Vec<i64>, usize>,
}

impl CliffordGroup {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Position of `u` in the group modulo phase.
    pub fn find(&self, u: &DenseOperator) -> Option<usize> {
        if u.dim() != 1 << self.n {
            return None;
        }
        self.index.get(&phase_key(u)).copied()
    }
}

pub fn generators(n: usize) -> Vec<Gate> {
    let mut gens = Vec::new();
    for q in 0..n {
        gens.push(Gate::H(q));
        gens.push(Gate::S(q));
    }
    for c in 0..n {
        for t in 0..n {
            if c != t {
                gens.push(Gate::Cnot(c, t));
            }
        }
    }
    gens
}

/// Breadth-first closure over the generators with phase canonicalization.
fn enumerate(n: usize) -> CliffordGroup {
    let gens = generators(n);
    let identity = CliffordElement {
        n,
        gates: Vec::new(),
        dense: DenseOperator::identity(1 << n),
    };
    let mut index = HashMap::new();
    index.insert(phase_key(&identity.dense), 0);
    let mut elements = vec![identity];
    let mut frontier = 0;
    while frontier < elements.len() {
        for g in &gens {
            let mut u = elements[frontier].dense.matrix().clone();
            g.apply_left(&mut u, n);
            let dense = canonical_phase(&DenseOperator::from_matrix(u).expect("square"));
            let key = phase_key(&dense);
            if let Entry::Vacant(slot) = index.entry(key) {
                let mut gates = elements[frontier].gates.clone();
                gates.push(*g);
                slot.insert(elements.len());
                elements.push(CliffordElement { n, gates, dense });
            }
        }
        frontier += 1;
    }
    CliffordGroup { n, elements, index }
}

/// The Clifford group on `n ≤ 2` qubits, enumerated once and cached.
pub fn clifford_group(n: usize) -> Result<Arc<CliffordGroup>> {
    static ONE: OnceLock<Arc<CliffordGroup>> = OnceLock::new();
    static TWO: OnceLock<Arc<CliffordGroup>> = OnceLock::new();
    match n {
        1 => Ok(ONE.get_or_init(|| Arc::new(enumerate(1))).clone()),
        2 => Ok(TWO.get_or_init(|| Arc::new(enumerate(2))).clone()),
        _ => Err(ShadowError::Unsupported(format!(
            "exhaustive Clifford enumeration is available for 1 or 2 qubits, not {n}; use the sampler"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::Pauli;

    #[test]
    fn gate_tags_round_trip() {
        for g in [Gate::H(0), Gate::S(3), Gate::Cnot(1, 0)] {
            assert_eq!(g.to_string().parse::<Gate>().unwrap(), g);
        }
        assert!("CX1-1".parse::<Gate>().is_err());
        assert!("T0".parse::<Gate>().is_err());
    }

    #[test]
    fn gate_matrices() {
        let h = Gate::H(0).matrix(1);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expected = DenseOperator::from_real_rows(&[&[s, s], &[s, -s]]).unwrap();
        assert!(h.max_abs_diff(&expected) < 1e-15);
        let cx = Gate::Cnot(0, 1).matrix(2);
        assert_eq!(cx.get(3, 2), C64::new(1.0, 0.0));
        assert_eq!(cx.get(2, 3), C64::new(1.0, 0.0));
        assert_eq!(cx.get(1, 1), C64::new(1.0, 0.0));
        let sz = Gate::S(1).matrix(2);
        assert_eq!(sz.get(1, 1), I);
        assert_eq!(sz.get(2, 2), C64::new(1.0, 0.0));
    }

    #[test]
    fn single_qubit_group() {
        let g = clifford_group(1).unwrap();
        assert_eq!(g.len(), 24);
        assert!(g.find(&DenseOperator::identity(2)).is_some());
        let paulis: Vec<DenseOperator> = [Pauli::X, Pauli::Y, Pauli::Z]
            .iter()
            .flat_map(|p| [p.matrix(), -p.matrix()])
            .collect();
        for el in &g.elements {
            assert!(el.dense.is_unitary(1e-12));
            let rebuilt = densify(&el.gates, 1).unwrap();
            assert_eq!(phase_key(&rebuilt), phase_key(&el.dense));
            for p in &paulis[..] {
                let img = p.conjugate_by(&el.dense);
                assert!(paulis.iter().any(|q| q.max_abs_diff(&img) < 1e-12));
            }
        }
    }

    #[test]
    fn two_qubit_group_order_and_closure() {
        let g = clifford_group(2).unwrap();
        assert_eq!(g.len(), 11520);
        for (a, b) in [(17usize, 4000usize), (11519, 3), (500, 500), (9000, 7777)] {
            let prod = &g.elements[a].dense * &g.elements[b].dense;
            assert!(g.find(&prod).is_some());
        }
        assert!(clifford_group(3).is_err());
    }
}
