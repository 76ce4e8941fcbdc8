//! The full verification battery behind `shadows verify`.

use serde::Serialize;

use super::{
    all_permutations, compose_permutations, permutation_operator, swap_operator,
    verify_lemma3design, verify_t3_projection_identities, IdentityCheck, MonteCarloSettings,
    ROperators,
};
use crate::channels::{QuantumChannel, Superoperator};
use crate::ensembles::{haar_twirl_3, twirl, UnitaryEnsemble};
use crate::error::Result;
use crate::linalg::random::{random_operator, seeded};
use crate::linalg::{DenseOperator, HermitianObservable};
use crate::pauli::PauliString;
use crate::seminorm::{compute, compute_with_oracle, SeminormContext};
use crate::shadow::{f_of_e, ShadowChannel};

#[derive(Clone, Debug)]
pub struct BatteryConfig {
    pub seed: u64,
    pub lemma_trials: usize,
    /// Haar sampling for the qutrit checks; `None` skips them.
    pub monte_carlo: Option<MonteCarloSettings>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            lemma_trials: 20,
            monte_carlo: Some(MonteCarloSettings::default()),
        }
    }
}

/// Comparison of both `(I, I)` cell conventions of the k-local table against the oracle.
#[derive(Clone, Debug, Serialize)]
pub struct KLocalCellReport {
    pub observable: String,
    pub depolarizing_parameter: f64,
    pub oracle: f64,
    pub printed: f64,
    pub derived: f64,
    pub printed_discrepancy: f64,
    pub derived_discrepancy: f64,
    /// `printed`, `derived`, `both` or `neither`.
    pub matches: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<IdentityCheck>,
    pub all_passed: bool,
    /// Recorded for inspection; not part of `all_passed`.
    pub klocal_identity_cell: Vec<KLocalCellReport>,
}

fn permutation_checks(d: usize) -> IdentityCheck {
    let perms = all_permutations(3);
    let ops: Vec<DenseOperator> = perms.iter().map(|p| permutation_operator(p, d)).collect();
    let mut worst = 0.0f64;
    for (i, p) in perms.iter().enumerate() {
        for (j, q) in perms.iter().enumerate() {
            let prod = &ops[i] * &ops[j];
            worst =
                worst.max(prod.max_abs_diff(&permutation_operator(&compose_permutations(p, q), d)));
        }
    }
    IdentityCheck::new(&format!("permutation_homomorphism_d{d}"), worst, 1e-12)
}

fn swap_checks(seed: u64) -> IdentityCheck {
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    for d in 2..=4 {
        let w = swap_operator(d);
        worst = worst.max((&w * &w).max_abs_diff(&DenseOperator::identity(d * d)));
        worst = worst.max((w.trace().re - d as f64).abs());
        let (a, b) = (random_operator(d, &mut rng), random_operator(d, &mut rng));
        worst = worst.max((w.trace_product(&a.kron(&b)) - a.trace_product(&b)).norm());
    }
    IdentityCheck::new("swap_operator", worst, 1e-12)
}

fn r_operator_checks() -> Vec<IdentityCheck> {
    let mut out = Vec::new();
    for d in [2usize, 3] {
        let r = ROperators::build(d);
        let idem = (&r.r_plus * &r.r_plus).max_abs_diff(&r.r_plus);
        out.push(IdentityCheck::new(
            &format!("r_plus_idempotent_d{d}"),
            idem,
            1e-10,
        ));
        let herm = [&r.r_plus, &r.r_minus, &r.r0, &r.r1, &r.r2, &r.r3]
            .iter()
            .map(|m| m.hermitian_deviation())
            .fold(0.0, f64::max);
        out.push(IdentityCheck::new(
            &format!("r_operators_hermitian_d{d}"),
            herm,
            1e-12,
        ));
        let df = d as f64;
        let dim_sym = df * (df + 1.0) * (df + 2.0) / 6.0;
        out.push(IdentityCheck::new(
            &format!("r_plus_trace_d{d}"),
            (r.r_plus.trace().re - dim_sym).abs(),
            1e-10,
        ));
    }
    let r2 = ROperators::build(2);
    out.push(IdentityCheck::new(
        "r_minus_vanishes_d2",
        r2.r_minus.max_abs(),
        1e-12,
    ));
    out
}

fn haar_vs_clifford_twirl() -> Result<IdentityCheck> {
    let ens = UnitaryEnsemble::single_qubit_clifford_group();
    let mut worst = 0.0f64;
    for i in 0..8 {
        for j in 0..8 {
            let a = DenseOperator::ket_bra(i, j, 8);
            worst = worst.max(twirl(&ens, 3, &a)?.max_abs_diff(&haar_twirl_3(&a, 2)?));
        }
    }
    Ok(IdentityCheck::new(
        "haar_twirl_3_equals_clifford_d2",
        worst,
        1e-9,
    ))
}

fn shadow_closed_form_checks(seed: u64) -> Result<IdentityCheck> {
    let ens = UnitaryEnsemble::single_qubit_clifford_group();
    let mut rng = seeded(seed);
    let channels = [
        QuantumChannel::identity(1),
        QuantumChannel::dephasing(1),
        QuantumChannel::depolarizing(1, 0.7),
        QuantumChannel::amplitude_damping(1, 0.4)?,
        QuantumChannel::random_cptp(2, 3, &mut rng)?,
    ];
    let mut worst = 0.0f64;
    for e in &channels {
        let brute = ShadowChannel::bruteforce(&ens, e)?.superop();
        worst = worst.max(brute.max_abs_diff(&Superoperator::depolarizing(2, f_of_e(e))));
    }
    Ok(IdentityCheck::new(
        "shadow_channel_closed_form_n1",
        worst,
        1e-9,
    ))
}

fn seminorm_value_checks() -> Result<IdentityCheck> {
    let ens = UnitaryEnsemble::single_qubit_clifford_group();
    let cases = [
        (QuantumChannel::identity(1), "Z", 3.0),
        (QuantumChannel::depolarizing(1, 0.5), "X", 12.0),
        (QuantumChannel::amplitude_damping(1, 0.5)?, "X", 12.0),
    ];
    let mut worst = 0.0f64;
    for (e, p, expected) in &cases {
        let o = p.parse::<PauliString>()?.to_observable();
        let ctx = SeminormContext::new(&ens, e);
        let r = compute_with_oracle(&ctx, &o, None)?;
        worst = worst
            .max((r.value_squared - expected).abs())
            .max(r.oracle_discrepancy.unwrap_or(0.0));
    }
    Ok(IdentityCheck::new("seminorm_named_values", worst, 1e-8))
}

fn klocal_context(k: usize, f: f64) -> Result<(UnitaryEnsemble, QuantumChannel)> {
    let ens = UnitaryEnsemble::clifford_product(k)?;
    let e = QuantumChannel::tensor(&vec![QuantumChannel::depolarizing(1, f); k])?;
    Ok((ens, e))
}

fn observable(terms: &[(&str, f64)]) -> Result<HermitianObservable> {
    let mut acc: Option<DenseOperator> = None;
    for (p, c) in terms {
        let term = p.parse::<PauliString>()?.to_dense().scale_real(*c);
        acc = Some(match acc {
            Some(a) => &a + &term,
            None => term,
        });
    }
    HermitianObservable::new(acc.expect("at least one term"))
}

/// Full-weight observables: the printed table must match the oracle.
fn klocal_full_weight_check() -> Result<IdentityCheck> {
    let mut worst = 0.0f64;
    for f in [1.0, 0.5, 0.3] {
        for terms in [
            vec![("X", 1.0)],
            vec![("X", 1.0), ("Z", 1.0)],
            vec![("X", 0.3), ("Y", -0.8), ("Z", 0.5)],
            vec![("XZ", 1.0), ("YY", 0.4), ("ZX", -0.7)],
        ] {
            let o = observable(&terms)?;
            let (ens, e) = klocal_context(o.dim().trailing_zeros() as usize, f)?;
            let r = compute_with_oracle(
                &SeminormContext::new(&ens, &e),
                &o,
                Some("klocal_depolarizing"),
            )?;
            worst = worst.max(r.oracle_discrepancy.unwrap_or(f64::INFINITY));
        }
    }
    Ok(IdentityCheck::new(
        "klocal_depolarizing_no_identity_component",
        worst,
        1e-8,
    ))
}

/// Observables whose Pauli terms have identity factors exercise the `(I, I)` cell.
fn klocal_identity_cell() -> Result<Vec<KLocalCellReport>> {
    let mut out = Vec::new();
    for f in [0.5, 0.8] {
        for terms in [
            vec![("I", 1.0), ("X", 1.0)],
            vec![("XI", 1.0), ("IZ", 1.0)],
            vec![("II", 0.5), ("XZ", 1.0)],
        ] {
            let o = observable(&terms)?;
            let (ens, e) = klocal_context(o.dim().trailing_zeros() as usize, f)?;
            let ctx = SeminormContext::new(&ens, &e);
            let oracle = compute(&ctx, &o, "bruteforce")?.value;
            let printed = compute(&ctx, &o, "klocal_depolarizing")?.value;
            let derived = compute(&ctx, &o, "klocal_depolarizing_derived")?.value;
            let (dp, dd) = ((printed - oracle).abs(), (derived - oracle).abs());
            let matches = match (dp < 1e-8, dd < 1e-8) {
                (true, true) => "both",
                (true, false) => "printed",
                (false, true) => "derived",
                (false, false) => "neither",
            };
            out.push(KLocalCellReport {
                observable: terms
                    .iter()
                    .map(|(p, c)| format!("{c}*{p}"))
                    .collect::<Vec<_>>()
                    .join(" + "),
                depolarizing_parameter: f,
                oracle,
                printed,
                derived,
                printed_discrepancy: dp,
                derived_discrepancy: dd,
                matches: matches.to_string(),
            });
        }
    }
    Ok(out)
}

/// Runs every identity check. Failures are reported, not returned as errors.
pub fn run_battery(cfg: &BatteryConfig) -> Result<VerifyReport> {
    let mut checks = vec![
        permutation_checks(2),
        permutation_checks(3),
        swap_checks(cfg.seed),
    ];
    checks.extend(r_operator_checks());
    checks.push(haar_vs_clifford_twirl()?);
    checks.push(
        verify_lemma3design(cfg.lemma_trials, cfg.seed, false)?
            .with_detail("random CPTP channels".into()),
    );
    let linear = verify_lemma3design(cfg.lemma_trials, cfg.seed + 1, true)?;
    checks.push(linear.with_detail("random linear maps from Kraus pairs".into()));
    checks.extend(verify_t3_projection_identities(2, cfg.seed, None)?);
    if let Some(mc) = cfg.monte_carlo {
        checks.extend(verify_t3_projection_identities(3, cfg.seed, Some(mc))?);
    }
    checks.push(shadow_closed_form_checks(cfg.seed)?);
    checks.push(seminorm_value_checks()?);
    checks.push(klocal_full_weight_check()?);
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        checks,
        all_passed,
        klocal_identity_cell: klocal_identity_cell()?,
    })
}
