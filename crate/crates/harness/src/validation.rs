//! Self-checks: each closed form is compared against an independent oracle
//! (Monte Carlo, grid search or a textbook reference) at small sizes.
//! Tolerances are loose enough that the verdicts do not depend on the seed.

use std::fmt;

use irsfd::channel_gen::complex_gaussian;
use irsfd::ewmmse::{
    expected_mse, reference, run_from, transceiver_sweep, SolverOptions,
};
use irsfd::irs_mm::{build_mm_problem, build_stz, mm_step, run_algorithm1, MmOptions};
use irsfd::kron_expectation::{build_sigma, expect_hhx, expect_hxh, SigmaPair};
use irsfd::linalg::{self, rel_frobenius, CMat};
use irsfd::oracle::{mc_expect_hhx, mc_expect_hxh, mc_expected_mse, mc_sigma};
use irsfd::rate::{ergodic_wsr_lb, sample_wsr};
use irsfd::streams::{derive_seed, substream, tag};
use irsfd::testing::{prepared_instance, random_covariances, random_psd, random_state, small_config};
use irsfd::{BeamformingState, ChannelEstimates, ErrorCovariances, IrsPhase, SystemConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::experiment::{relative_drop, KktStats};

/// Signature of the interference-plus-noise builder under test.
pub type SigmaBuilder = fn(
    &ChannelEstimates,
    &ErrorCovariances,
    &IrsPhase,
    &CMat,
    &CMat,
    &SystemConfig,
) -> irsfd::Result<SigmaPair>;

/// Implementations the suite exercises; tests swap in faulty ones.
#[derive(Clone, Copy)]
pub struct Hooks {
    pub sigma: SigmaBuilder,
}

impl Default for Hooks {
    fn default() -> Self {
        Self { sigma: build_sigma }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<24} measured {:.3e}  tolerance {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {failed} failed (seed {})", self.checks.len(), self.seed)
    }
}

/// Measured value must not exceed the tolerance. NaN fails.
fn at_most(name: &'static str, measured: f64, tolerance: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        measured,
        tolerance,
        passed: measured <= tolerance,
    }
}

const MC_DRAWS: usize = 40_000;
const MC_TOL: f64 = 0.05;

pub fn run_validation_suite(seed: u64) -> ValidationReport {
    run_validation_suite_with(seed, &Hooks::default())
}

pub fn run_validation_suite_with(seed: u64, hooks: &Hooks) -> ValidationReport {
    let rng = |k: u64| substream(seed, tag::TEST, k);
    let mut checks = vec![
        check_expect_hxh(&mut rng(0)),
        check_expect_hhx(&mut rng(1)),
        check_sigma(hooks, &mut rng(2)),
        check_expected_mse(&mut rng(3)),
        check_rate_bound(seed, &mut rng(4)),
    ];
    checks.extend(check_mm(&mut rng(5)));
    checks.push(check_mm_grid(&mut rng(6)));
    checks.push(check_perfect_csi(&mut rng(7)));
    checks.extend(check_algorithm2(&mut rng(8)));
    ValidationReport { seed, checks }
}

fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    // NaN propagates so that a broken oracle cannot pass.
    values
        .into_iter()
        .fold(0.0, |acc, v| if v.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(v) })
}

fn check_expect_hxh(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let errs = (0..5).map(|_| {
        let (r, c) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let h = complex_gaussian(r, c, rng);
        let (j, k) = (random_psd(c, rng), random_psd(r, rng) * linalg::real(0.5));
        let x = random_psd(c, rng);
        let exact = expect_hxh(&h, &j, &k, &x).expect("shapes agree");
        let mc = mc_expect_hxh(&h, &j, &k, &x, MC_DRAWS, rng).expect("valid covariances");
        rel_frobenius(&mc, &exact)
    });
    at_most("expect_hxh", worst(errs.collect::<Vec<_>>()), MC_TOL)
}

fn check_expect_hhx(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let errs = (0..5).map(|_| {
        let (r, c) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let h = complex_gaussian(r, c, rng);
        let (j, k) = (random_psd(c, rng), random_psd(r, rng) * linalg::real(0.5));
        let a = random_psd(r, rng);
        let exact = expect_hhx(&h, &j, &k, &a).expect("shapes agree");
        let mc = mc_expect_hhx(&h, &j, &k, &a, MC_DRAWS, rng).expect("valid covariances");
        rel_frobenius(&mc, &exact)
    });
    at_most("expect_hhx", worst(errs.collect::<Vec<_>>()), MC_TOL)
}

fn check_sigma(hooks: &Hooks, rng: &mut ChaCha8Rng) -> CheckOutcome {
    let cfg = SystemConfig { uk: 2, ..small_config(3) };
    let mut errs = Vec::new();
    for _ in 0..3 {
        let est = irsfd::testing::random_channels(&cfg, rng);
        let err = random_covariances(&cfg, 0.5, rng);
        let state = random_state(&cfg, rng);
        let (u, v) = (state.u_cov(), state.v_cov());
        let got = match (hooks.sigma)(&est, &err, &state.theta, &u, &v, &cfg) {
            Ok(pair) => pair,
            Err(_) => {
                errs.push(f64::NAN);
                continue;
            }
        };
        let mc = mc_sigma(&est, &err, &state.theta, &u, &v, &cfg, MC_DRAWS, rng).expect("valid covariances");
        errs.push(rel_frobenius(&got.sigma_ul, &mc.sigma_ul));
        errs.push(rel_frobenius(&got.sigma_dl, &mc.sigma_dl));
    }
    at_most("build_sigma", worst(errs), MC_TOL)
}

fn check_expected_mse(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let cfg = small_config(3);
    let mut errs = Vec::new();
    for _ in 0..3 {
        let (est, err, state) = prepared_instance(&cfg, 0.3, rng);
        let exact = expected_mse(&est, &err, &state, &cfg);
        let mc = mc_expected_mse(&est, &err, &state, &cfg, MC_DRAWS, rng).expect("valid covariances");
        errs.push(rel_frobenius(&mc.e_k, &exact.e_k));
        errs.push(rel_frobenius(&mc.e_j, &exact.e_j));
    }
    at_most("expected_mse", worst(errs), MC_TOL)
}

/// The closed-form bound may not exceed the Monte-Carlo rate by more than
/// three standard errors. Measured in standard errors.
fn check_rate_bound(seed: u64, rng: &mut ChaCha8Rng) -> CheckOutcome {
    let cfg = small_config(3);
    let mut excess = Vec::new();
    for i in 0..5 {
        let (est, err, state) = prepared_instance(&cfg, 0.3, rng);
        let lb = ergodic_wsr_lb(&est, &err, &state, &cfg).expect("valid state").wsr_total;
        let mc = sample_wsr(&est, &err, &state, &cfg, 2000, derive_seed(seed, tag::ERROR_DRAW, i))
            .and_then(|s| s.report())
            .expect("valid state");
        excess.push((lb - mc.wsr_total) / mc.stderr().max(1e-12));
    }
    at_most("rate_lower_bound", worst(excess), 3.0)
}

fn check_mm(rng: &mut ChaCha8Rng) -> [CheckOutcome; 2] {
    let cfg = small_config(4);
    let (mut modulus, mut rise) = (0.0f64, 0.0f64);
    for _ in 0..5 {
        let (est, err, state) = prepared_instance(&cfg, 0.2, rng);
        let prob = build_mm_problem(&build_stz(&est, &err, &state, &cfg).expect("valid state"));
        let mut theta = state.theta.clone();
        let mut f = prob.objective(&theta);
        for _ in 0..50 {
            theta = mm_step(&prob, &theta);
            modulus = modulus.max(theta.max_modulus_error());
            let next = prob.objective(&theta);
            rise = rise.max((next - f) / f.abs().max(1.0));
            f = next;
        }
    }
    [at_most("mm_unit_modulus", modulus, 1e-12), at_most("mm_descent", rise, 1e-10)]
}

fn check_mm_grid(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let cfg = small_config(2);
    let steps = 720;
    let step = std::f64::consts::TAU / steps as f64;
    let mut gaps = Vec::new();
    for _ in 0..3 {
        let (est, err, state) = prepared_instance(&cfg, 0.1, rng);
        let prob = build_mm_problem(&build_stz(&est, &err, &state, &cfg).expect("valid state"));
        let mm = prob.objective(&run_algorithm1(&prob, &state.theta, &MmOptions::default()).theta);
        let mut best = f64::INFINITY;
        for a in 0..steps {
            for b in 0..steps {
                let th = IrsPhase::from_angles(&[a as f64 * step, b as f64 * step]);
                best = best.min(prob.objective(&th));
            }
        }
        gaps.push((mm - best).abs() / best.abs().max(1.0));
    }
    at_most("mm_grid_rc2", worst(gaps), 1e-3)
}

fn check_perfect_csi(rng: &mut ChaCha8Rng) -> CheckOutcome {
    let cfg = small_config(3);
    let zero = ErrorCovariances::zeros(&cfg);
    let mut diffs = Vec::new();
    for _ in 0..5 {
        let ch = irsfd::testing::random_channels(&cfg, rng);
        let state = random_state(&cfg, rng);
        let expect = reference::sweep(&ch, &state, &cfg).expect("reference sweep");
        let mut got = state.clone();
        transceiver_sweep(&ch, &zero, &mut got, &cfg, &SolverOptions::default()).expect("sweep");
        diffs.extend(blocks(&got).iter().zip(blocks(&expect)).map(|(a, b)| rel_frobenius(a, b)));
    }
    at_most("perfect_csi_reduction", worst(diffs), 1e-9)
}

fn blocks(s: &BeamformingState) -> [&CMat; 6] {
    [&s.f_k, &s.f_j, &s.w_k, &s.w_j, &s.u_k, &s.v_j]
}

fn check_algorithm2(rng: &mut ChaCha8Rng) -> [CheckOutcome; 3] {
    let cfg = small_config(3);
    let opts = SolverOptions::default();
    let mut drop = 0.0f64;
    let mut kkt = KktStats::default();
    for _ in 0..3 {
        let (est, err, state) = prepared_instance(&cfg, 0.2, rng);
        let sol = run_from(&est, &err, &cfg, &opts, state).expect("solver run");
        drop = drop.max(relative_drop(&sol.wsr_trace()));
        kkt.observe(&sol, &cfg);
    }
    [
        at_most("algorithm2_monotone", drop, 1e-6),
        at_most("power_budget", kkt.max_power_excess.max(0.0), 1e-6),
        at_most("complementarity", kkt.max_complementarity, 1e-6),
    ]
}
