//! `t`-fold twirls `A ↦ E_U U^{⊗t} A U^{†⊗t}`: exact ensemble averages, Monte
//! Carlo estimates, Haar closed forms and design checks.

use nalgebra::DMatrix;

use super::UnitaryEnsemble;
use crate::channels::Superoperator;
use crate::error::{Result, ShadowError};
use crate::identities::{
    all_permutations, cycle_count, permutation_operator, swap_operator, ROperators,
};
use crate::linalg::random::stream_rng;
use crate::linalg::{kron_all, ordered_par_fold, vec, DenseOperator, C64};

/// Default Monte Carlo budget.
pub const DEFAULT_TWIRL_SAMPLES: usize = 100_000;
/// Largest `d^t` for which design checks compare full superoperators.
pub const SUPEROP_CHECK_LIMIT: usize = 16;
/// Largest `d^t` accepted by [`is_t_design`].
pub const DESIGN_CHECK_LIMIT: usize = 64;

/// `U^{⊗t}`
pub fn tensor_power(u: &DenseOperator, t: usize) -> DenseOperator {
    kron_all(std::iter::repeat_n(u, t))
}

fn check_dim(ens_dim: usize, t: usize, a: &DenseOperator) -> Result<()> {
    let expected = ens_dim.pow(t as u32);
    if a.dim() != expected {
        return Err(ShadowError::DimensionMismatch {
            expected,
            found: a.dim(),
        });
    }
    Ok(())
}

/// Exact twirl over an enumerable ensemble.
pub fn twirl(ens: &UnitaryEnsemble, t: usize, a: &DenseOperator) -> Result<DenseOperator> {
    check_dim(ens.dim(), t, a)?;
    let elements = ens.elements()?;
    let dim = a.dim();
    let sum = ordered_par_fold(
        &elements,
        || DenseOperator::zeros(dim),
        |acc, _, el| *acc += &a.conjugate_by(&tensor_power(&el.unitary, t)),
        |acc, part| *acc += &part,
    );
    Ok(sum.scale_real(1.0 / elements.len() as f64))
}

/// Monte Carlo twirl with entrywise standard errors.
#[derive(Clone, Debug)]
pub struct TwirlEstimate {
    pub mean: DenseOperator,
    pub stderr_re: DMatrix<f64>,
    pub stderr_im: DMatrix<f64>,
    pub samples: usize,
}

impl TwirlEstimate {
    /// Largest deviation from `exact` in units of the standard error. Entries
    /// with vanishing error must match to `1e-9`.
    pub fn max_z_score(&self, exact: &DenseOperator) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..exact.dim() {
            for j in 0..exact.dim() {
                let diff = self.mean.get(i, j) - exact.get(i, j);
                for (delta, se) in [
                    (diff.re, self.stderr_re[(i, j)]),
                    (diff.im, self.stderr_im[(i, j)]),
                ] {
                    let z = if se > 1e-12 {
                        delta.abs() / se
                    } else if delta.abs() < 1e-9 {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    worst = worst.max(z);
                }
            }
        }
        worst
    }
}

struct Moments {
    sum: DMatrix<C64>,
    sq_re: DMatrix<f64>,
    sq_im: DMatrix<f64>,
}

impl Moments {
    fn zeros(d: usize) -> Self {
        Self {
            sum: DMatrix::zeros(d, d),
            sq_re: DMatrix::zeros(d, d),
            sq_im: DMatrix::zeros(d, d),
        }
    }

    fn push(&mut self, x: &DenseOperator) {
        let m = x.matrix();
        self.sum += m;
        self.sq_re += m.map(|z| z.re * z.re);
        self.sq_im += m.map(|z| z.im * z.im);
    }

    fn merge(&mut self, other: Moments) {
        self.sum += other.sum;
        self.sq_re += other.sq_re;
        self.sq_im += other.sq_im;
    }

    fn finish(self, samples: usize) -> Result<TwirlEstimate> {
        let n = samples as f64;
        let mean = self.sum.map(|z| z / n);
        let se = |sq: &DMatrix<f64>, part: fn(C64) -> f64| {
            DMatrix::from_fn(sq.nrows(), sq.ncols(), |i, j| {
                let m = part(mean[(i, j)]);
                let var = ((sq[(i, j)] - n * m * m) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            })
        };
        let stderr_re = se(&self.sq_re, |z| z.re);
        let stderr_im = se(&self.sq_im, |z| z.im);
        Ok(TwirlEstimate {
            mean: DenseOperator::from_matrix(mean)?,
            stderr_re,
            stderr_im,
            samples,
        })
    }
}

/// Monte Carlo mean of `f(i)` over `samples` indices, with entrywise standard errors.
pub fn monte_carlo_mean(
    dim: usize,
    samples: usize,
    f: impl Fn(usize) -> Result<DenseOperator> + Sync,
) -> Result<TwirlEstimate> {
    if samples < 2 {
        return Err(ShadowError::InvalidParameter(
            "Monte Carlo needs at least 2 samples".into(),
        ));
    }
    let indices: Vec<usize> = (0..samples).collect();
    let acc = ordered_par_fold(
        &indices,
        || Ok(Moments::zeros(dim)),
        |acc: &mut Result<Moments>, _, &i| {
            if let Ok(m) = acc {
                match f(i) {
                    Ok(x) => m.push(&x),
                    Err(e) => *acc = Err(e),
                }
            }
        },
        |acc, part| match (acc.as_mut(), part) {
            (Ok(a), Ok(p)) => a.merge(p),
            (Ok(_), Err(e)) => *acc = Err(e),
            (Err(_), _) => {}
        },
    )?;
    acc.finish(samples)
}

/// Monte Carlo twirl; sample `i` uses the RNG stream `(seed, i)`.
pub fn twirl_monte_carlo(
    ens: &UnitaryEnsemble,
    t: usize,
    a: &DenseOperator,
    samples: usize,
    seed: u64,
) -> Result<TwirlEstimate> {
    check_dim(ens.dim(), t, a)?;
    monte_carlo_mean(a.dim(), samples, |i| {
        let el = ens.sample(&mut stream_rng(seed, i as u64))?;
        Ok(a.conjugate_by(&tensor_power(&el.unitary, t)))
    })
}

fn local_dim(a: &DenseOperator, d: usize, t: u32) -> Result<()> {
    if d < 2 || a.dim() != d.pow(t) {
        return Err(ShadowError::DimensionMismatch {
            expected: d.pow(t),
            found: a.dim(),
        });
    }
    Ok(())
}

/// `T₂(A) = [tr(A)(I − W/d) + tr(WA)(W − I/d)] / (d² − 1)`
pub fn haar_twirl_2(a: &DenseOperator, d: usize) -> Result<DenseOperator> {
    local_dim(a, d, 2)?;
    let w = swap_operator(d);
    let id = DenseOperator::identity(d * d);
    let df = d as f64;
    let tr_a = a.trace();
    let tr_wa = w.trace_product(a);
    let first = (&id - &w.scale_real(1.0 / df)).scale(tr_a);
    let second = (&w - &id.scale_real(1.0 / df)).scale(tr_wa);
    Ok((&first + &second).scale_real(1.0 / (df * df - 1.0)))
}

/// Three-fold Haar twirl in terms of the symmetrizer `R₊`, antisymmetrizer
/// `R₋` and the mixed-symmetry operators `R₀…R₃`. At `d = 2` the `R₋` term
/// vanishes identically and is dropped.
pub fn haar_twirl_3(a: &DenseOperator, d: usize) -> Result<DenseOperator> {
    local_dim(a, d, 3)?;
    let r = ROperators::build(d);
    Ok(r.twirl(a))
}

/// Haar `t`-fold twirl as the Hilbert–Schmidt projection onto the span of the
/// permutation operators, using the pseudo-inverse of their Gram matrix.
pub fn haar_twirl(a: &DenseOperator, d: usize, t: usize) -> Result<DenseOperator> {
    local_dim(a, d, t as u32)?;
    let perms = all_permutations(t);
    let ws: Vec<DenseOperator> = perms.iter().map(|p| permutation_operator(p, d)).collect();
    let wg = weingarten_matrix(&perms, d)?;
    let b: Vec<C64> = ws.iter().map(|w| w.hs_inner(a)).collect();
    let mut out = DenseOperator::zeros(a.dim());
    for (pi, w) in ws.iter().enumerate() {
        let c: C64 = (0..perms.len()).map(|s| b[s] * wg[(pi, s)]).sum();
        out += &w.scale(c);
    }
    Ok(out)
}

/// Gram matrix `G_{πσ} = tr(W_π† W_σ) = d^{cycles(π⁻¹σ)}`.
pub fn permutation_gram(perms: &[Vec<usize>], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(perms.len(), perms.len(), |i, j| {
        let inv = invert(&perms[i]);
        let comp: Vec<usize> = (0..inv.len()).map(|k| inv[perms[j][k]]).collect();
        (d as f64).powi(cycle_count(&comp) as i32)
    })
}

fn invert(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (k, &v) in p.iter().enumerate() {
        inv[v] = k;
    }
    inv
}

fn weingarten_matrix(perms: &[Vec<usize>], d: usize) -> Result<DMatrix<f64>> {
    permutation_gram(perms, d)
        .pseudo_inverse(1e-10)
        .map_err(|e| ShadowError::Numerical(format!("Gram pseudo-inverse failed: {e}")))
}

/// Haar value of the frame potential: the dimension of the commutant of `U^{⊗t}`.
pub fn haar_frame_potential(d: usize, t: usize) -> usize {
    let gram = permutation_gram(&all_permutations(t), d);
    gram.rank(1e-8 * gram.amax())
}

/// `F_t = E_{U,V} |tr(U†V)|^{2t}` over an enumerable ensemble.
pub fn frame_potential(ens: &UnitaryEnsemble, t: usize) -> Result<f64> {
    let elements = ens.elements()?;
    let total = ordered_par_fold(
        &elements,
        || 0.0,
        |acc, _, u| {
            for v in elements.iter() {
                *acc += u.unitary.hs_inner(&v.unitary).norm_sqr().powi(t as i32);
            }
        },
        |acc, part| *acc += part,
    );
    Ok(total / (elements.len() * elements.len()) as f64)
}

fn twirl_superop(ens: &UnitaryEnsemble, t: usize) -> Result<Superoperator> {
    let elements = ens.elements()?;
    let dt = ens.dim().pow(t as u32);
    let sum = ordered_par_fold(
        &elements,
        || DMatrix::<C64>::zeros(dt * dt, dt * dt),
        |acc, _, el| {
            let v = tensor_power(&el.unitary, t);
            *acc += v.conj().kron(&v).matrix();
        },
        |acc, part| *acc += part,
    );
    Superoperator::new(dt, sum / C64::new(elements.len() as f64, 0.0))
}

/// Whether the ensemble's `t`-fold twirl equals the Haar twirl.
///
/// For `d^t ≤ 16` the two superoperators are compared entrywise on a complete
/// operator basis. Up to `d^t = 64` the frame potential is compared with its
/// Haar value, which it attains exactly for `t`-designs.
pub fn is_t_design(ens: &UnitaryEnsemble, t: usize, tol: f64) -> Result<bool> {
    let d = ens.dim();
    let dt = d.pow(t as u32);
    if dt > DESIGN_CHECK_LIMIT {
        return Err(ShadowError::Unsupported(format!(
            "design check needs d^t ≤ {DESIGN_CHECK_LIMIT}, got {dt}"
        )));
    }
    if dt <= SUPEROP_CHECK_LIMIT {
        let ours = twirl_superop(ens, t)?;
        let haar =
            Superoperator::from_map(dt, |a| haar_twirl(a, d, t).expect("dimensions fixed above"));
        Ok(ours.max_abs_diff(&haar) <= tol)
    } else {
        let fp = frame_potential(ens, t)?;
        Ok((fp - haar_frame_potential(d, t) as f64).abs() <= tol * fp.max(1.0))
    }
}

/// Whether `{U†|b⟩⟨b|U}` spans all operators (rank `d²`).
pub fn is_tomographically_complete(ens: &UnitaryEnsemble) -> Result<bool> {
    let elements = ens.elements()?;
    let d = ens.dim();
    let gram = ordered_par_fold(
        &elements,
        || DMatrix::<C64>::zeros(d * d, d * d),
        |acc, _, el| {
            for b in 0..d {
                let v = vec(&DenseOperator::projector(b, d).conjugate_by_adjoint(&el.unitary));
                *acc += &v * v.adjoint();
            }
        },
        |acc, part| *acc += part,
    );
    let gram = DenseOperator::from_matrix(gram)?;
    let (values, _) = crate::linalg::eigh(&gram);
    let top = values.last().copied().unwrap_or(0.0);
    let rank = values.iter().filter(|&&x| x > 1e-9 * top.max(1.0)).count();
    Ok(rank == d * d)
}
