//! Design-theoretic identities: permutation operators, the `R` operators of
//! the three-fold Haar twirl, the 3-design summation identity and the
//! projection identities of the three-fold twirl, each with a numerical check.

pub mod battery;

use serde::Serialize;

use crate::channels::QuantumChannel;
use crate::ensembles::twirl::{haar_twirl_3, monte_carlo_mean, twirl};
use crate::ensembles::UnitaryEnsemble;
use crate::error::{Result, ShadowError};
use crate::linalg::random::{haar_unitary, random_operator, seeded, stream_rng};
use crate::linalg::{kron_all, partial_trace, DenseOperator, C64, I, ZERO};

pub use battery::{run_battery, BatteryConfig, VerifyReport};

/// `W = Σ_ij |ij⟩⟨ji|` on `ℂ^d ⊗ ℂ^d`.
pub fn swap_operator(d: usize) -> DenseOperator {
    permutation_operator(&[1, 0], d)
}

/// `W_π` on `(ℂ^d)^{⊗t}` with `W_π (x_1 ⊗ … ⊗ x_t) = x_{π⁻¹(1)} ⊗ … ⊗ x_{π⁻¹(t)}`.
///
/// Permutations are 0-based images: `perm[k] = π(k)`.
pub fn permutation_operator(perm: &[usize], d: usize) -> DenseOperator {
    let t = perm.len();
    let dim = d.pow(t as u32);
    let mut out = DenseOperator::zeros(dim);
    let mut digits = vec![0usize; t];
    let mut image = vec![0usize; t];
    for y in 0..dim {
        let mut rest = y;
        for k in (0..t).rev() {
            digits[k] = rest % d;
            rest /= d;
        }
        for k in 0..t {
            image[perm[k]] = digits[k];
        }
        let x = image.iter().fold(0, |acc, &v| acc * d + v);
        out.set(x, y, C64::new(1.0, 0.0));
    }
    out
}

/// All permutations of `0..t` in lexicographic order (identity first).
pub fn all_permutations(t: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                extend(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), &mut vec![false; t], &mut out);
    out
}

pub fn cycle_count(perm: &[usize]) -> usize {
    let mut seen = vec![false; perm.len()];
    let mut cycles = 0;
    for start in 0..perm.len() {
        if !seen[start] {
            cycles += 1;
            let mut k = start;
            while !seen[k] {
                seen[k] = true;
                k = perm[k];
            }
        }
    }
    cycles
}

/// `(π∘σ)(k) = π(σ(k))`
pub fn compose_permutations(pi: &[usize], sigma: &[usize]) -> Vec<usize> {
    sigma.iter().map(|&s| pi[s]).collect()
}

/// `+1` for even permutations, `−1` for odd ones.
pub fn sign(perm: &[usize]) -> f64 {
    if (perm.len() - cycle_count(perm)).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Permutation operators and their combinations `R₊, R₋, R₀, R₁, R₂, R₃` on `(ℂ^d)^{⊗3}`.
#[derive(Clone, Debug)]
pub struct ROperators {
    pub d: usize,
    pub r_plus: DenseOperator,
    pub r_minus: DenseOperator,
    pub r0: DenseOperator,
    pub r1: DenseOperator,
    pub r2: DenseOperator,
    pub r3: DenseOperator,
}

impl ROperators {
    pub fn build(d: usize) -> Self {
        let w = |p: [usize; 3]| permutation_operator(&p, d);
        let id = w([0, 1, 2]);
        let w12 = w([1, 0, 2]);
        let w13 = w([2, 1, 0]);
        let w23 = w([0, 2, 1]);
        let w123 = w([1, 2, 0]);
        let w132 = w([2, 0, 1]);
        let sum = |terms: &[(f64, &DenseOperator)]| {
            let mut out = DenseOperator::zeros(id.dim());
            for (c, op) in terms {
                out += &op.scale_real(*c);
            }
            out
        };
        let s3 = 1.0 / 3f64.sqrt();
        let r_plus = sum(&[
            (1.0, &id),
            (1.0, &w12),
            (1.0, &w13),
            (1.0, &w23),
            (1.0, &w123),
            (1.0, &w132),
        ])
        .scale_real(1.0 / 6.0);
        let r_minus = sum(&[
            (1.0, &id),
            (-1.0, &w12),
            (-1.0, &w13),
            (-1.0, &w23),
            (1.0, &w123),
            (1.0, &w132),
        ])
        .scale_real(1.0 / 6.0);
        let r0 = sum(&[(2.0, &id), (-1.0, &w123), (-1.0, &w132)]).scale_real(1.0 / 3.0);
        let r1 = sum(&[(2.0, &w23), (-1.0, &w13), (-1.0, &w12)]).scale_real(1.0 / 3.0);
        let r2 = sum(&[(s3, &w12), (-s3, &w13)]);
        let r3 = sum(&[(1.0, &w123), (-1.0, &w132)]).scale(I * s3);
        Self {
            d,
            r_plus,
            r_minus,
            r0,
            r1,
            r2,
            r3,
        }
    }

    pub fn mixed(&self) -> [&DenseOperator; 4] {
        [&self.r0, &self.r1, &self.r2, &self.r3]
    }

    /// Closed-form three-fold Haar twirl.
    pub fn twirl(&self, a: &DenseOperator) -> DenseOperator {
        let d = self.d as f64;
        let mut out = self
            .r_plus
            .scale(self.r_plus.trace_product(a) * (6.0 / (d * (d + 1.0) * (d + 2.0))));
        if self.d >= 3 {
            out += &self
                .r_minus
                .scale(self.r_minus.trace_product(a) * (6.0 / (d * (d - 1.0) * (d - 2.0))));
        }
        let c = 3.0 / (2.0 * d * (d * d - 1.0));
        for r in self.mixed() {
            out += &r.scale(r.trace_product(a) * c);
        }
        out
    }
}

fn diag_overlap(u: &DenseOperator, x: &DenseOperator, b: usize) -> C64 {
    // ⟨b|U X U†|b⟩ = Σ_ij U_bi X_ij conj(U_bj)
    let d = u.dim();
    let mut acc = ZERO;
    for i in 0..d {
        let ubi = u.get(b, i);
        if ubi == ZERO {
            continue;
        }
        for j in 0..d {
            acc += ubi * x.get(i, j) * u.get(b, j).conj();
        }
    }
    acc
}

/// `E_U Σ_b ⟨b|E(UAU†)|b⟩⟨b|UBU†|b⟩⟨b|UCU†|b⟩` summed exactly over an enumerable ensemble.
pub fn lemma3design_lhs(
    a: &DenseOperator,
    b: &DenseOperator,
    c: &DenseOperator,
    e: &QuantumChannel,
    ens: &UnitaryEnsemble,
) -> Result<C64> {
    let d = ens.dim();
    for op in [a, b, c] {
        if op.dim() != d {
            return Err(ShadowError::DimensionMismatch {
                expected: d,
                found: op.dim(),
            });
        }
    }
    let elements = ens.elements()?;
    let total = crate::linalg::ordered_par_fold(
        &elements,
        || Ok(ZERO),
        |acc: &mut Result<C64>, _, el| {
            if let Ok(sum) = acc {
                match e.apply(&a.conjugate_by(&el.unitary)) {
                    Ok(ea) => {
                        for bb in 0..d {
                            *sum += ea.get(bb, bb)
                                * diag_overlap(&el.unitary, b, bb)
                                * diag_overlap(&el.unitary, c, bb);
                        }
                    }
                    Err(err) => *acc = Err(err),
                }
            }
        },
        |acc, part| match (acc.as_mut(), part) {
            (Ok(x), Ok(p)) => *x += p,
            (Ok(_), Err(err)) => *acc = Err(err),
            _ => {}
        },
    )?;
    Ok(total / elements.len() as f64)
}

/// Closed-form right-hand side of the 3-design summation identity with
/// `α = tr E(I)` and `β = Tr(E ∘ diag)`.
pub fn lemma3design_rhs(
    a: &DenseOperator,
    b: &DenseOperator,
    c: &DenseOperator,
    alpha: C64,
    beta: C64,
    d: usize,
) -> C64 {
    let df = d as f64;
    let denom = (df - 1.0) * df * (df + 1.0) * (df + 2.0);
    let (ta, tb, tc) = (a.trace(), b.trace(), c.trace());
    let bc = b * c;
    let first = ta * bc.trace() + ta * tb * tc;
    let second = a.trace_product(b) * tc
        + a.trace_product(c) * tb
        + a.trace_product(&bc)
        + (a * c).trace_product(b);
    ((alpha * (1.0 + df) - beta * 2.0) * first + (beta * df - alpha) * second) / denom
}

/// `(α, β)` as complex numbers for an arbitrary linear superoperator.
pub fn alpha_beta(e: &QuantumChannel) -> Result<(C64, C64)> {
    let alpha = e.apply(&DenseOperator::identity(e.dim()))?.trace();
    Ok((alpha, e.beta_complex()))
}

fn kd(a: usize, b: usize) -> f64 {
    f64::from(u8::from(a == b))
}

fn ket3(z: usize, x: usize, d: usize) -> usize {
    (z * d + x) * d + x
}

/// Right-hand side of the projection identity for `T₃(|zxx⟩⟨yxx|)`.
pub fn t3_first_rhs(r: &ROperators, x: usize, y: usize, z: usize) -> DenseOperator {
    let d = r.d as f64;
    let dyz = kd(y, z);
    let dxyz = dyz * kd(x, y);
    let plus = r
        .r_plus
        .scale_real(2.0 / (d * (d + 1.0) * (d + 2.0)) * (dyz + 2.0 * dxyz));
    let mixed = (&r.r0 + &r.r1).scale_real((dyz - dxyz) / (d * (d + 1.0) * (d - 1.0)));
    &plus + &mixed
}

/// Right-hand side of the projection identity for `T₃(Γ ⊗ |xx⟩⟨xx|)`.
pub fn t3_second_rhs(r: &ROperators, gamma: &DenseOperator, x: usize) -> DenseOperator {
    let d = r.d as f64;
    let tr = gamma.trace();
    let gxx = gamma.get(x, x);
    let plus = r
        .r_plus
        .scale((tr + gxx * 2.0) * (2.0 / (d * (d + 1.0) * (d + 2.0))));
    let mixed = (&r.r0 + &r.r1).scale((tr - gxx) / (d * (d + 1.0) * (d - 1.0)));
    &plus + &mixed
}

/// Right-hand side of `tr₂₃{T₃(Λ(|x⟩⟨x|) ⊗ |xx⟩⟨xx|)(I ⊗ B ⊗ C)}`.
pub fn t3_third_rhs(
    lambda: &QuantumChannel,
    x: usize,
    b: &DenseOperator,
    c: &DenseOperator,
) -> DenseOperator {
    let d = lambda.dim();
    let df = d as f64;
    let t = lambda.trace_probe(x);
    let lxxxx = lambda.diagonal_probe(x);
    let id = DenseOperator::identity(d);
    let scalar = (b * c).trace() + b.trace() * c.trace();
    let op = &(&(&b.scale(c.trace()) + &c.scale(b.trace())) + &(b * c)) + &(c * b);
    let out = &id.scale((t * (1.0 + df) - lxxxx * 2.0) * scalar) + &op.scale(lxxxx * df - t);
    out.scale_real(1.0 / ((df - 1.0) * df * (df + 1.0) * (df + 2.0)))
}

/// `tr₂₃{X (I ⊗ B ⊗ C)}` for `X` on `(ℂ^d)^{⊗3}`.
pub fn contract_23(
    x: &DenseOperator,
    b: &DenseOperator,
    c: &DenseOperator,
) -> Result<DenseOperator> {
    let d = b.dim();
    let product = x * &kron_all([&DenseOperator::identity(d), b, c]);
    partial_trace(&product, &[d, d, d], &[0])
}

/// Outcome of one numerical identity check.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub passed: bool,
    /// Largest absolute residual, or largest z-score for Monte Carlo checks.
    pub max_residual: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl IdentityCheck {
    pub fn new(name: &str, max_residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: max_residual <= tolerance,
            max_residual,
            tolerance,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: String) -> Self {
        self.detail = Some(detail);
        self
    }
}

/// Sample budget and seed for the Monte Carlo parts of the T3 checks.
#[derive(Clone, Copy, Debug)]
pub struct MonteCarloSettings {
    pub samples: usize,
    pub seed: u64,
    pub z_tolerance: f64,
}

impl Default for MonteCarloSettings {
    fn default() -> Self {
        Self {
            samples: 100_000,
            seed: 2024,
            z_tolerance: 5.0,
        }
    }
}

/// Checks the three projection identities of the three-fold twirl at local
/// dimension `d ∈ {2, 3}`.
///
/// The closed-form twirl is compared with the printed right-hand sides for all
/// basis labels and random `Γ, Λ, B, C`. At `d = 2` the left-hand sides are also
/// evaluated exactly over the single-qubit Clifford group. At `d = 3`, and when
/// `mc` is given, they are estimated with Haar samples and compared in units of
/// the standard error.
pub fn verify_t3_projection_identities(
    d: usize,
    seed: u64,
    mc: Option<MonteCarloSettings>,
) -> Result<Vec<IdentityCheck>> {
    if !(2..=3).contains(&d) {
        return Err(ShadowError::Unsupported(format!(
            "T3 identities are checked at d = 2 or 3, not {d}"
        )));
    }
    let r = ROperators::build(d);
    let mut rng = seeded(seed);
    let gamma = random_operator(d, &mut rng);
    let lambda = QuantumChannel::random_linear(d, 2, &mut rng)?;
    let (b, c) = (random_operator(d, &mut rng), random_operator(d, &mut rng));
    let id = DenseOperator::identity(d);
    let clifford = (d == 2).then(UnitaryEnsemble::single_qubit_clifford_group);
    let twirl3 = |a: &DenseOperator| -> Result<DenseOperator> {
        match &clifford {
            Some(ens) => twirl(ens, 3, a),
            None => haar_twirl_3(a, d),
        }
    };
    let mut checks = Vec::new();

    let mut first = 0.0f64;
    let mut first_exact = 0.0f64;
    for x in 0..d {
        for y in 0..d {
            for z in 0..d {
                let a = DenseOperator::ket_bra(ket3(z, x, d), ket3(y, x, d), d * d * d);
                let rhs = t3_first_rhs(&r, x, y, z);
                first = first.max(haar_twirl_3(&a, d)?.max_abs_diff(&rhs));
                if clifford.is_some() {
                    first_exact = first_exact.max(twirl3(&a)?.max_abs_diff(&rhs));
                }
            }
        }
    }
    checks.push(IdentityCheck::new(
        &format!("t3_first_closed_form_d{d}"),
        first,
        1e-10,
    ));

    let mut second = 0.0f64;
    let mut second_exact = 0.0f64;
    let mut third = 0.0f64;
    let mut third_exact = 0.0f64;
    for x in 0..d {
        let xx = DenseOperator::projector(x * d + x, d * d);
        for g in [&gamma, &id] {
            let a = g.kron(&xx);
            let rhs = t3_second_rhs(&r, g, x);
            second = second.max(haar_twirl_3(&a, d)?.max_abs_diff(&rhs));
            if clifford.is_some() {
                second_exact = second_exact.max(twirl3(&a)?.max_abs_diff(&rhs));
            }
        }
        for l in [&lambda, &QuantumChannel::identity_dim(d)] {
            let a = l.apply(&DenseOperator::projector(x, d))?.kron(&xx);
            let rhs = t3_third_rhs(l, x, &b, &c);
            third = third.max(contract_23(&haar_twirl_3(&a, d)?, &b, &c)?.max_abs_diff(&rhs));
            if clifford.is_some() {
                third_exact =
                    third_exact.max(contract_23(&twirl3(&a)?, &b, &c)?.max_abs_diff(&rhs));
            }
        }
    }
    checks.push(IdentityCheck::new(
        &format!("t3_second_closed_form_d{d}"),
        second,
        1e-10,
    ));
    checks.push(IdentityCheck::new(
        &format!("t3_third_closed_form_d{d}"),
        third,
        1e-10,
    ));
    if clifford.is_some() {
        checks.push(IdentityCheck::new(
            "t3_first_clifford_exact_d2",
            first_exact,
            1e-10,
        ));
        checks.push(IdentityCheck::new(
            "t3_second_clifford_exact_d2",
            second_exact,
            1e-10,
        ));
        checks.push(IdentityCheck::new(
            "t3_third_clifford_exact_d2",
            third_exact,
            1e-10,
        ));
    }

    if let Some(mc) = mc {
        checks.extend(t3_monte_carlo(d, &r, &gamma, &lambda, &b, &c, mc)?);
    }
    Ok(checks)
}

fn column_outer(u: &DenseOperator, ket: [usize; 3], bra: [usize; 3]) -> DenseOperator {
    let cols: Vec<_> = (0..u.dim()).map(|k| u.column(k)).collect();
    let kron3 = |idx: [usize; 3]| {
        cols[idx[0]]
            .kronecker(&cols[idx[1]])
            .kronecker(&cols[idx[2]])
    };
    let (k, b) = (kron3(ket), kron3(bra));
    DenseOperator::from_matrix(&k * b.adjoint()).expect("square")
}

fn t3_monte_carlo(
    d: usize,
    r: &ROperators,
    gamma: &DenseOperator,
    lambda: &QuantumChannel,
    b: &DenseOperator,
    c: &DenseOperator,
    mc: MonteCarloSettings,
) -> Result<Vec<IdentityCheck>> {
    let haar = |i: usize, salt: u64| haar_unitary(d, &mut stream_rng(mc.seed ^ salt, i as u64));
    let mut checks = Vec::new();

    let (x, y, z) = (0, 1, 1);
    let est = monte_carlo_mean(d * d * d, mc.samples, |i| {
        let u = haar(i, 0x1);
        Ok(column_outer(&u, [z, x, x], [y, x, x]))
    })?;
    let zs = est.max_z_score(&t3_first_rhs(r, x, y, z));
    checks.push(IdentityCheck::new(
        &format!("t3_first_monte_carlo_d{d}"),
        zs,
        mc.z_tolerance,
    ));

    let x = d - 1;
    let est = monte_carlo_mean(d * d * d, mc.samples, |i| {
        let u = haar(i, 0x2);
        let ux = DenseOperator::outer(&u.column(x));
        Ok(kron_all([&gamma.conjugate_by(&u), &ux, &ux]))
    })?;
    let zs = est.max_z_score(&t3_second_rhs(r, gamma, x));
    checks.push(IdentityCheck::new(
        &format!("t3_second_monte_carlo_d{d}"),
        zs,
        mc.z_tolerance,
    ));

    let x = 0;
    let image = lambda.apply(&DenseOperator::projector(x, d))?;
    let est = monte_carlo_mean(d, mc.samples, |i| {
        let u = haar(i, 0x3);
        let ux = u.column(x);
        let wb = (ux.adjoint() * b.matrix() * &ux)[(0, 0)];
        let wc = (ux.adjoint() * c.matrix() * &ux)[(0, 0)];
        Ok(image.conjugate_by(&u).scale(wb * wc))
    })?;
    let zs = est.max_z_score(&t3_third_rhs(lambda, x, b, c));
    checks.push(IdentityCheck::new(
        &format!("t3_third_monte_carlo_d{d}"),
        zs,
        mc.z_tolerance,
    ));
    Ok(checks)
}

/// 3-design summation identity over `trials` random `(A, B, C, E)` with the
/// single-qubit Clifford group. With `linear` set, `E` is a general linear map
/// built from random Kraus pairs `(J, K)`.
pub fn verify_lemma3design(trials: usize, seed: u64, linear: bool) -> Result<IdentityCheck> {
    let ens = UnitaryEnsemble::single_qubit_clifford_group();
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let e = if linear {
            QuantumChannel::random_linear(2, 3, &mut rng)?
        } else {
            QuantumChannel::random_cptp(2, 3, &mut rng)?
        };
        let (a, b, c) = (
            random_operator(2, &mut rng),
            random_operator(2, &mut rng),
            random_operator(2, &mut rng),
        );
        let (alpha, beta) = alpha_beta(&e)?;
        let lhs = lemma3design_lhs(&a, &b, &c, &e, &ens)?;
        let rhs = lemma3design_rhs(&a, &b, &c, alpha, beta, 2);
        worst = worst.max((lhs - rhs).norm());
    }
    let name = if linear {
        "lemma_3design_linear_maps"
    } else {
        "lemma_3design_cptp"
    };
    Ok(IdentityCheck::new(name, worst, 1e-9))
}
