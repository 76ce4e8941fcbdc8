//! Seeded random matrices: Ginibre operators, Haar unitaries, random states
//! and Stiefel isometries for random channels.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DenseOperator, C64};

/// Root generator for a seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent generator for work item `stream` under `seed`.
///
/// Each index gets its own ChaCha stream, so results do not depend on how
/// work is scheduled across threads.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn random_operator<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DenseOperator {
    DenseOperator(ginibre(dim, dim, rng))
}

pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DenseOperator {
    random_operator(dim, rng).hermitian_part()
}

/// Haar-random unit vector.
pub fn random_pure_ket<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<C64> {
    let v = DVector::from_fn(dim, |_, _| gaussian(rng));
    let norm = v.norm();
    v / C64::new(norm, 0.0)
}

/// Density matrix `G G† / tr(G G†)` from a Ginibre `G` (Hilbert–Schmidt measure).
pub fn random_density<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DenseOperator {
    let g = ginibre(dim, dim, rng);
    let rho = &g * g.adjoint();
    let tr = rho.trace().re;
    DenseOperator(rho / C64::new(tr, 0.0)).hermitian_part()
}

/// Haar-random unitary via QR of a Ginibre matrix with the phase correction
/// `U = Q diag(r_ii / |r_ii|)`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DenseOperator {
    let qr = ginibre(dim, dim, rng).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    DenseOperator(q)
}

/// Random isometry `V: C^d -> C^(d r)` with `V†V = I`, split into `r` Kraus
/// operators of a CPTP map.
pub fn random_kraus_set<R: Rng + ?Sized>(
    dim: usize,
    rank: usize,
    rng: &mut R,
) -> Vec<DenseOperator> {
    let g = ginibre(dim * rank, dim, rng);
    let (q, r) = g.qr().unpack();
    let mut v = q;
    for j in 0..dim {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..dim * rank {
            v[(i, j)] *= phase;
        }
    }
    (0..rank)
        .map(|a| DenseOperator(v.rows(a * dim, dim).into_owned()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = seeded(1);
        for d in [2, 3, 4, 8] {
            assert!(haar_unitary(d, &mut rng).is_unitary(1e-10));
        }
    }

    #[test]
    fn kraus_set_is_trace_preserving() {
        let mut rng = seeded(2);
        let ks = random_kraus_set(4, 3, &mut rng);
        let mut sum = DenseOperator::zeros(4);
        for k in &ks {
            sum += &(k.adjoint() * k);
        }
        assert!(sum.max_abs_diff(&DenseOperator::identity(4)) < 1e-12);
    }

    #[test]
    fn random_density_is_valid() {
        let mut rng = seeded(3);
        let rho = random_density(4, &mut rng);
        assert!(crate::linalg::DensityMatrix::new(rho).is_ok());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream_rng(9, 0).random();
        let b: u64 = stream_rng(9, 0).random();
        let c: u64 = stream_rng(9, 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
