//! Dense complex matrix kernel.
//!
//! Every operator in the toolkit (states, observables, unitaries, projectors)
//! is a [`DenseOperator`]: a square complex matrix with an explicit dimension.
//! Subsystems are ordered big-endian, so qubit 0 is the leftmost Kronecker
//! factor and the most significant bit of a basis index.
//!
//! Vectorization is column stacking: `vec(A)[i + j*d] = A[i][j]`. Under this
//! convention `vec(X A Y) = (Yᵀ ⊗ X) vec(A)`.

pub mod random;

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ShadowError};

pub type C64 = Complex64;

/// Tolerance for Hermiticity and unit-trace checks.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Slack allowed on the smallest eigenvalue of a density matrix.
pub const PSD_SLACK: f64 = 1e-9;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Square complex matrix.
#[derive(Clone, PartialEq)]
pub struct DenseOperator(DMatrix<C64>);

impl fmt::Debug for DenseOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseOperator({}x{})", self.dim(), self.dim())?;
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .map(|j| {
                    let z = self.0[(i, j)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl DenseOperator {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(ShadowError::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(ShadowError::EmptyInput(
                "operator dimension must be at least 1",
            ));
        }
        Ok(Self(m))
    }

    pub fn from_row_major(dim: usize, entries: Vec<C64>) -> Result<Self> {
        if dim == 0 {
            return Err(ShadowError::EmptyInput(
                "operator dimension must be at least 1",
            ));
        }
        if entries.len() != dim * dim {
            return Err(ShadowError::LengthMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        Ok(Self(DMatrix::from_row_slice(dim, dim, &entries)))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for r in rows {
            if r.len() != dim {
                return Err(ShadowError::LengthMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            entries.extend(r.iter().map(|&x| C64::new(x, 0.0)));
        }
        Self::from_row_major(dim, entries)
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(dim, dim, f))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    /// `|i⟩⟨j|`
    pub fn ket_bra(i: usize, j: usize, dim: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(i, j)] = ONE;
        Self(m)
    }

    /// `|b⟩⟨b|`
    pub fn projector(b: usize, dim: usize) -> Self {
        Self::ket_bra(b, b, dim)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let dim = values.len();
        Self::from_fn(dim, |i, j| {
            if i == j {
                C64::new(values[i], 0.0)
            } else {
                ZERO
            }
        })
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) ket.
    pub fn outer(ket: &DVector<C64>) -> Self {
        Self(ket * ket.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.0[(i, j)] = value;
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    /// Entries in row-major order.
    pub fn row_major(&self) -> Vec<C64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn conj(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self(&self.0 * C64::new(s, 0.0))
    }

    pub fn kron(&self, other: &DenseOperator) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    /// Hilbert–Schmidt inner product `tr(A† B)`.
    pub fn hs_inner(&self, other: &DenseOperator) -> C64 {
        self.0.dotc(&other.0)
    }

    /// `tr(A B)` without forming the product.
    pub fn trace_product(&self, other: &DenseOperator) -> C64 {
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for k in 0..d {
                acc += self.0[(i, k)] * other.0[(k, i)];
            }
        }
        acc
    }

    /// `⟨b|A|b⟩`
    pub fn diag_entry(&self, b: usize) -> C64 {
        self.0[(b, b)]
    }

    pub fn max_abs_diff(&self, other: &DenseOperator) -> f64 {
        assert_eq!(
            self.dim(),
            other.dim(),
            "max_abs_diff on mismatched dimensions"
        );
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn hermitian_deviation(&self) -> f64 {
        let d = self.dim();
        let mut dev: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                dev = dev.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// `(A + A†)/2`
    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let prod = self.adjoint() * self;
        prod.max_abs_diff(&Self::identity(self.dim())) <= tol
    }

    /// Conjugation `U A U†`.
    pub fn conjugate_by(&self, u: &DenseOperator) -> Self {
        Self(&u.0 * &self.0 * u.0.adjoint())
    }

    /// Conjugation `U† A U`.
    pub fn conjugate_by_adjoint(&self, u: &DenseOperator) -> Self {
        Self(u.0.adjoint() * &self.0 * &u.0)
    }

    pub fn column(&self, j: usize) -> DVector<C64> {
        self.0.column(j).into_owned()
    }

    pub fn try_inverse(&self) -> Option<Self> {
        self.0.clone().try_inverse().map(Self)
    }
}

impl Add<&DenseOperator> for &DenseOperator {
    type Output = DenseOperator;
    fn add(self, rhs: &DenseOperator) -> DenseOperator {
        DenseOperator(&self.0 + &rhs.0)
    }
}

impl Add for DenseOperator {
    type Output = DenseOperator;
    fn add(self, rhs: DenseOperator) -> DenseOperator {
        DenseOperator(self.0 + rhs.0)
    }
}

impl AddAssign<&DenseOperator> for DenseOperator {
    fn add_assign(&mut self, rhs: &DenseOperator) {
        self.0 += &rhs.0;
    }
}

impl Sub<&DenseOperator> for &DenseOperator {
    type Output = DenseOperator;
    fn sub(self, rhs: &DenseOperator) -> DenseOperator {
        DenseOperator(&self.0 - &rhs.0)
    }
}

impl Sub for DenseOperator {
    type Output = DenseOperator;
    fn sub(self, rhs: DenseOperator) -> DenseOperator {
        DenseOperator(self.0 - rhs.0)
    }
}

impl Mul<&DenseOperator> for &DenseOperator {
    type Output = DenseOperator;
    fn mul(self, rhs: &DenseOperator) -> DenseOperator {
        DenseOperator(&self.0 * &rhs.0)
    }
}

impl Mul for DenseOperator {
    type Output = DenseOperator;
    fn mul(self, rhs: DenseOperator) -> DenseOperator {
        DenseOperator(self.0 * rhs.0)
    }
}

impl Mul<&DenseOperator> for DenseOperator {
    type Output = DenseOperator;
    fn mul(self, rhs: &DenseOperator) -> DenseOperator {
        DenseOperator(self.0 * &rhs.0)
    }
}

impl Neg for DenseOperator {
    type Output = DenseOperator;
    fn neg(self) -> DenseOperator {
        DenseOperator(-self.0)
    }
}

/// Hermitian operator, validated at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianObservable(DenseOperator);

impl HermitianObservable {
    pub fn new(op: DenseOperator) -> Result<Self> {
        let deviation = op.hermitian_deviation();
        if deviation > HERMITIAN_TOL {
            return Err(ShadowError::NotHermitian { deviation });
        }
        Ok(Self(op))
    }

    pub fn op(&self) -> &DenseOperator {
        &self.0
    }

    pub fn into_op(self) -> DenseOperator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale_real(s))
    }

    pub fn add(&self, other: &HermitianObservable) -> Self {
        Self(&self.0 + &other.0)
    }

    /// Real eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh(&self.0).0
    }
}

/// Density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(DenseOperator);

impl DensityMatrix {
    pub fn new(op: DenseOperator) -> Result<Self> {
        let deviation = op.hermitian_deviation();
        if deviation > HERMITIAN_TOL {
            return Err(ShadowError::InvalidState(format!(
                "not Hermitian (deviation {deviation:.3e})"
            )));
        }
        let tr = op.trace();
        if (tr - ONE).norm() > HERMITIAN_TOL {
            return Err(ShadowError::InvalidState(format!(
                "trace is {:.12} + {:.12}i, expected 1",
                tr.re, tr.im
            )));
        }
        let min_eig = eigh(&op).0[0];
        if min_eig < -PSD_SLACK {
            return Err(ShadowError::InvalidState(format!(
                "minimum eigenvalue {min_eig:.3e} is negative"
            )));
        }
        Ok(Self(op))
    }

    /// `|ψ⟩⟨ψ|` after normalizing the ket.
    pub fn pure(ket: &DVector<C64>) -> Result<Self> {
        let norm = ket.norm();
        if norm == 0.0 {
            return Err(ShadowError::InvalidState("zero ket".into()));
        }
        Self::new(DenseOperator::outer(&(ket / C64::new(norm, 0.0))))
    }

    pub fn basis_state(b: usize, dim: usize) -> Self {
        Self(DenseOperator::projector(b, dim))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(DenseOperator::identity(dim).scale_real(1.0 / dim as f64))
    }

    pub fn op(&self) -> &DenseOperator {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn into_op(self) -> DenseOperator {
        self.0
    }
}

pub fn kron(a: &DenseOperator, b: &DenseOperator) -> DenseOperator {
    a.kron(b)
}

/// Kronecker product of a list of operators, left to right.
pub fn kron_all<'a>(ops: impl IntoIterator<Item = &'a DenseOperator>) -> DenseOperator {
    let mut iter = ops.into_iter();
    let first = iter
        .next()
        .cloned()
        .unwrap_or_else(|| DenseOperator::identity(1));
    iter.fold(first, |acc, op| acc.kron(op))
}

fn digits(mut index: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = index % dims[k];
        index /= dims[k];
    }
}

/// Partial trace keeping the subsystems listed in `keep`; all others are traced out.
///
/// Kept subsystems appear in the output in their original order.
pub fn partial_trace(a: &DenseOperator, dims: &[usize], keep: &[usize]) -> Result<DenseOperator> {
    let total: usize = dims.iter().product();
    if total != a.dim() {
        return Err(ShadowError::DimensionMismatch {
            expected: a.dim(),
            found: total,
        });
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&k| k >= dims.len()) {
        return Err(ShadowError::InvalidParameter(format!(
            "subsystem {bad} out of range for {} subsystems",
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !kept.contains(k)).collect();
    let out_dim: usize = kept.iter().map(|&k| dims[k]).product();
    let mut out = DMatrix::<C64>::zeros(out_dim, out_dim);
    let mut di = vec![0usize; dims.len()];
    let mut dj = vec![0usize; dims.len()];
    let compose = |d: &[usize]| kept.iter().fold(0usize, |acc, &k| acc * dims[k] + d[k]);
    for i in 0..total {
        digits(i, dims, &mut di);
        let oi = compose(&di);
        for j in 0..total {
            digits(j, dims, &mut dj);
            if traced.iter().all(|&k| di[k] == dj[k]) {
                out[(oi, compose(&dj))] += a.0[(i, j)];
            }
        }
    }
    DenseOperator::from_matrix(out)
}

/// Eigen-decomposition of the Hermitian part of `a`: eigenvalues ascending and
/// the matching unitary of eigenvectors (columns).
pub fn eigh(a: &DenseOperator) -> (Vec<f64>, DMatrix<C64>) {
    let herm = a.hermitian_part().into_matrix();
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(a.dim(), a.dim(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// Largest eigenvalue of a Hermitian operator.
pub fn max_eigenvalue(a: &DenseOperator) -> f64 {
    *eigh(a)
        .0
        .last()
        .expect("operator has at least one eigenvalue")
}

/// `‖H‖_sp = max |λ|`.
pub fn spectral_norm(h: &HermitianObservable) -> f64 {
    h.eigenvalues().iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Spectral norm of an arbitrary operator via its largest singular value.
pub fn operator_norm(a: &DenseOperator) -> f64 {
    a.matrix().clone().singular_values().max()
}

/// `O − tr(O) I / 2^n`
pub fn traceless_part(o: &HermitianObservable, n: usize) -> Result<HermitianObservable> {
    let d = 1usize << n;
    if o.dim() != d {
        return Err(ShadowError::DimensionMismatch {
            expected: d,
            found: o.dim(),
        });
    }
    let shift = o.op().trace().re / d as f64;
    let out = o.op() - &DenseOperator::identity(d).scale_real(shift);
    Ok(HermitianObservable(out.hermitian_part()))
}

/// Column-stacking vectorization.
pub fn vec(a: &DenseOperator) -> DVector<C64> {
    DVector::from_column_slice(a.0.as_slice())
}

pub fn unvec(v: &DVector<C64>, dim: usize) -> Result<DenseOperator> {
    if v.len() != dim * dim {
        return Err(ShadowError::LengthMismatch {
            expected: dim * dim,
            found: v.len(),
        });
    }
    DenseOperator::from_matrix(DMatrix::from_column_slice(dim, dim, v.as_slice()))
}

/// Index of `|i⟩⟨j|` inside `vec`.
pub fn vec_index(i: usize, j: usize, dim: usize) -> usize {
    i + j * dim
}

/// Big-endian bits of `index` over `n` qubits.
pub fn index_to_bits(index: usize, n: usize) -> Vec<u8> {
    (0..n).map(|q| ((index >> (n - 1 - q)) & 1) as u8).collect()
}

pub fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Number of qubits for a dimension that is a power of two.
pub fn qubits_for_dim(dim: usize) -> Option<usize> {
    if dim.is_power_of_two() {
        Some(dim.trailing_zeros() as usize)
    } else {
        None
    }
}

/// Complex numbers serialize as `[re, im]` pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexPair(pub [f64; 2]);

impl From<C64> for ComplexPair {
    fn from(z: C64) -> Self {
        Self([z.re, z.im])
    }
}

impl From<ComplexPair> for C64 {
    fn from(p: ComplexPair) -> Self {
        C64::new(p.0[0], p.0[1])
    }
}

/// Nested row-major `[[[re, im], ...], ...]` representation of an operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixJson(pub Vec<Vec<ComplexPair>>);

impl From<&DenseOperator> for MatrixJson {
    fn from(op: &DenseOperator) -> Self {
        let d = op.dim();
        Self(
            (0..d)
                .map(|i| (0..d).map(|j| op.get(i, j).into()).collect())
                .collect(),
        )
    }
}

impl TryFrom<&MatrixJson> for DenseOperator {
    type Error = ShadowError;
    fn try_from(m: &MatrixJson) -> Result<Self> {
        let dim = m.0.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in &m.0 {
            if row.len() != dim {
                return Err(ShadowError::LengthMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            entries.extend(row.iter().map(|&p| C64::from(p)));
        }
        DenseOperator::from_row_major(dim, entries)
    }
}

/// Items per parallel work unit in [`ordered_par_fold`].
pub const PAR_CHUNK: usize = 64;

/// Folds `items` in fixed-size chunks on the rayon pool, then merges the chunk
/// accumulators in index order. The result is independent of the thread count.
pub fn ordered_par_fold<I, T>(
    items: &[I],
    init: impl Fn() -> T + Sync,
    step: impl Fn(&mut T, usize, &I) + Sync,
    merge: impl Fn(&mut T, T),
) -> T
where
    I: Sync,
    T: Send,
{
    use rayon::prelude::*;
    let partials: Vec<T> = items
        .par_chunks(PAR_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut acc = init();
            for (k, item) in chunk.iter().enumerate() {
                step(&mut acc, c * PAR_CHUNK + k, item);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in partials {
        merge(&mut total, p);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::{random_operator, random_pure_ket, seeded};

    fn pauli_x() -> DenseOperator {
        DenseOperator::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
    }

    fn pauli_z() -> DenseOperator {
        DenseOperator::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap()
    }

    #[test]
    fn kron_identity_and_layout() {
        let i2 = DenseOperator::identity(2);
        assert_eq!(kron(&i2, &i2), DenseOperator::identity(4));

        let xz = kron(&pauli_x(), &pauli_z());
        assert_eq!(xz.get(0, 2), ONE);
        assert_eq!(xz.get(1, 3), -ONE);
        assert_eq!(xz.get(2, 0), ONE);
        assert_eq!(xz.get(3, 1), -ONE);
        assert_eq!(xz.get(0, 0), ZERO);

        assert_eq!(kron(&i2, &DenseOperator::identity(4)).dim(), 8);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let mut rng = seeded(3);
        let rho = DenseOperator::outer(&random_pure_ket(2, &mut rng));
        let tau = DenseOperator::outer(&random_pure_ket(2, &mut rng));
        let reduced = partial_trace(&kron(&rho, &tau), &[2, 2], &[0]).unwrap();
        assert!(reduced.max_abs_diff(&rho) < 1e-12);
        let reduced = partial_trace(&kron(&rho, &tau), &[2, 2], &[1]).unwrap();
        assert!(reduced.max_abs_diff(&tau) < 1e-12);
    }

    #[test]
    fn swap_partial_trace_identity() {
        let mut rng = seeded(4);
        let a = random_operator(2, &mut rng);
        let w = crate::identities::swap_operator(2);
        let prod = &w * &kron(&a, &DenseOperator::identity(2));
        let out = partial_trace(&prod, &[2, 2], &[1]).unwrap();
        assert!(out.max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn partial_trace_full_system_is_trace() {
        let mut rng = seeded(5);
        let a = random_operator(8, &mut rng);
        let out = partial_trace(&a, &[2, 2, 2], &[]).unwrap();
        assert_eq!(out.dim(), 1);
        assert!((out.get(0, 0) - a.trace()).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        let a = DenseOperator::identity(4);
        assert!(matches!(
            partial_trace(&a, &[2, 3], &[0]),
            Err(ShadowError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spectral_norm_examples() {
        let id = HermitianObservable::new(DenseOperator::identity(2)).unwrap();
        assert!((spectral_norm(&id) - 1.0).abs() < 1e-12);
        let d = HermitianObservable::new(DenseOperator::diagonal(&[3.0, -5.0])).unwrap();
        assert!((spectral_norm(&d) - 5.0).abs() < 1e-12);
        let zz = HermitianObservable::new(kron(&pauli_z(), &pauli_z())).unwrap();
        assert!((spectral_norm(&zz) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_hermitian_rejected() {
        let a = DenseOperator::ket_bra(0, 1, 2);
        assert!(matches!(
            HermitianObservable::new(a),
            Err(ShadowError::NotHermitian { .. })
        ));
    }

    #[test]
    fn traceless_part_examples() {
        let id = HermitianObservable::new(DenseOperator::identity(2)).unwrap();
        assert!(traceless_part(&id, 1).unwrap().op().max_abs() < 1e-15);
        let z = HermitianObservable::new(pauli_z()).unwrap();
        assert_eq!(traceless_part(&z, 1).unwrap().op(), &pauli_z());
        let d = HermitianObservable::new(DenseOperator::diagonal(&[2.0, 0.0])).unwrap();
        let out = traceless_part(&d, 1).unwrap();
        assert!(
            out.op()
                .max_abs_diff(&DenseOperator::diagonal(&[1.0, -1.0]))
                < 1e-15
        );
    }

    #[test]
    fn vec_convention_and_identity() {
        let v = vec(&DenseOperator::ket_bra(0, 1, 2));
        assert_eq!(v[2], ONE);
        assert_eq!(v.iter().filter(|z| z.norm() > 0.0).count(), 1);

        let mut rng = seeded(6);
        let a = random_operator(3, &mut rng);
        let x = random_operator(3, &mut rng);
        let y = random_operator(3, &mut rng);
        assert_eq!(unvec(&vec(&a), 3).unwrap(), a);
        let lhs = vec(&(&(&x * &a) * &y));
        let rhs = y.transpose().kron(&x).matrix() * vec(&a);
        assert!((lhs - rhs).camax() < 1e-12);
        assert!(matches!(
            unvec(&vec(&a), 2),
            Err(ShadowError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(DenseOperator::diagonal(&[0.5, 0.5])).is_ok());
        assert!(DensityMatrix::new(DenseOperator::diagonal(&[1.5, -0.5])).is_err());
        assert!(DensityMatrix::new(DenseOperator::diagonal(&[0.5, 0.6])).is_err());
    }

    #[test]
    fn spectral_norm_dominates_random_pure_state_expectations() {
        let mut rng = seeded(7);
        for _ in 0..5 {
            let h =
                HermitianObservable::new(random_operator(4, &mut rng).hermitian_part()).unwrap();
            let norm = spectral_norm(&h);
            let mut best: f64 = 0.0;
            for _ in 0..10_000 {
                let psi = random_pure_ket(4, &mut rng);
                let val = (psi.adjoint() * h.op().matrix() * &psi)[(0, 0)].re;
                best = best.max(val.abs());
            }
            assert!(best <= norm + 1e-12);
            // Random pure states in dimension 4 come close to the extremal eigenvector.
            assert!(norm - best < 0.25 * norm, "norm {norm}, sampled {best}");
        }
    }

    #[test]
    fn matrix_json_round_trip() {
        let mut rng = seeded(8);
        let a = random_operator(2, &mut rng);
        let json = serde_json::to_string(&MatrixJson::from(&a)).unwrap();
        let back: MatrixJson = serde_json::from_str(&json).unwrap();
        assert_eq!(DenseOperator::try_from(&back).unwrap(), a);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn op(dim: usize) -> impl Strategy<Value = DenseOperator> {
            proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * dim).prop_map(move |v| {
                DenseOperator::from_row_major(
                    dim,
                    v.into_iter().map(|(r, i)| C64::new(r, i)).collect(),
                )
                .unwrap()
            })
        }

        proptest! {
            #[test]
            fn kron_is_associative(a in op(2), b in op(2), c in op(3)) {
                let left = kron(&kron(&a, &b), &c);
                let right = kron(&a, &kron(&b, &c));
                prop_assert!(left.max_abs_diff(&right) < 1e-12);
            }

            #[test]
            fn partial_trace_preserves_trace(a in op(8), keep in proptest::sample::subsequence(vec![0usize, 1, 2], 0..=3)) {
                let out = partial_trace(&a, &[2, 2, 2], &keep).unwrap();
                prop_assert!((out.trace() - a.trace()).norm() < 1e-12);
            }
        }
    }
}
