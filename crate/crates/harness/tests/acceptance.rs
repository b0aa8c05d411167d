//! Acceptance suite: one PASS/FAIL line per criterion with the measured
//! values. Exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use irsfd::baselines::{Duplex, IrsMode, Robustness, SchemeId};
use irsfd::channel_gen::{error_covariances, generate_estimates, CsiErrorPolicy, GeometryConfig};
use irsfd::ewmmse::{initial_precoders, reference, run_from, transceiver_sweep, SolverOptions};
use irsfd::irs_mm::{build_mm_problem, build_stz, mm_step, run_algorithm1, MmOptions};
use irsfd::kron_expectation::{build_sigma, expect_hxh};
use irsfd::linalg::{self, rel_frobenius};
use irsfd::oracle::{mc_expect_hxh, mc_sigma};
use irsfd::rate::mean_stderr;
use irsfd::streams::{substream, tag};
use irsfd::system_model::db_to_linear;
use irsfd::testing::{prepared_instance, random_channels, random_covariances, random_psd, random_state, small_config};
use irsfd::{BeamformingState, ErrorCovariances, IrsPhase, SystemConfig};
use irsfd_harness::experiment::{relative_drop, Diagnostics, RunOutput};
use irsfd_harness::output::format_csv;
use irsfd_harness::{run_experiment, ExperimentSpec, Preset, SweepKind, SweepResult};
use rand::Rng;

const SEED: u64 = 20_240_601;

const ROBUST: SchemeId = SchemeId::PROPOSED;
const NAIVE: SchemeId = SchemeId::new(Duplex::Fd, IrsMode::WithIrs, Robustness::NonRobust);
const HALF: SchemeId = SchemeId::new(Duplex::Hd, IrsMode::WithIrs, Robustness::Robust);

struct Verdict {
    id: u32,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn report(v: &Verdict) {
    println!(
        "{} [{:02}] {}: {}",
        if v.passed { "PASS" } else { "FAIL" },
        v.id,
        v.title,
        v.detail
    );
}

fn expectation_identity() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..20 {
        let mut rng = substream(SEED, tag::TEST, 100 + i);
        let (r, c) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let h = irsfd::channel_gen::complex_gaussian(r, c, &mut rng);
        let j = random_psd(c, &mut rng);
        let k = random_psd(r, &mut rng) * linalg::real(0.5);
        let x = random_psd(c, &mut rng);
        let exact = expect_hxh(&h, &j, &k, &x).unwrap();
        let mc = mc_expect_hxh(&h, &j, &k, &x, 100_000, &mut rng).unwrap();
        worst = worst.max(rel_frobenius(&mc, &exact));
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        id: 1,
        title: "expectation identity vs Monte Carlo",
        passed: worst <= 0.02 && secs <= 60.0,
        detail: format!("max rel. error {worst:.4} (tol 0.02), {secs:.1}s (limit 60s)"),
    }
}

fn sigma_oracle() -> Verdict {
    let start = Instant::now();
    let cfg = SystemConfig { uk: 2, ..small_config(3) };
    let mut worst = 0.0f64;
    for i in 0..10 {
        let mut rng = substream(SEED, tag::TEST, 200 + i);
        let est = random_channels(&cfg, &mut rng);
        let err = random_covariances(&cfg, 0.5, &mut rng);
        let state = random_state(&cfg, &mut rng);
        let (u, v) = (state.u_cov(), state.v_cov());
        let exact = build_sigma(&est, &err, &state.theta, &u, &v, &cfg).unwrap();
        let mc = mc_sigma(&est, &err, &state.theta, &u, &v, &cfg, 100_000, &mut rng).unwrap();
        worst = worst
            .max(rel_frobenius(&mc.sigma_ul, &exact.sigma_ul))
            .max(rel_frobenius(&mc.sigma_dl, &exact.sigma_dl));
    }
    let secs = start.elapsed().as_secs_f64();
    Verdict {
        id: 2,
        title: "interference covariance vs Monte Carlo",
        passed: worst <= 0.02 && secs <= 300.0,
        detail: format!("max rel. error {worst:.4} (tol 0.02), {secs:.1}s (limit 300s)"),
    }
}

fn point_index(result: &SweepResult, rho: f64, snr_db: f64) -> usize {
    result
        .points
        .iter()
        .position(|p| p.rho == rho && p.snr_db == snr_db)
        .expect("sweep point present")
}

fn bound_vs_monte_carlo(desk: &SweepResult) -> Verdict {
    let mut passed = true;
    let mut parts = Vec::new();
    for rho in [0.01, 0.1, 0.4, 1.0] {
        let row = desk.row(ROBUST, point_index(desk, rho, 30.0)).unwrap();
        let gap = row.wsr_mean - row.analytical_mean;
        let rel = gap / row.wsr_mean;
        let within_se = gap >= 0.0 && gap <= 2.0 * row.wsr_stderr;
        let within_rel = rho > 0.1 || rel.abs() <= 0.10;
        passed &= within_se && within_rel;
        parts.push(format!(
            "rho={rho}: mc {:.3}±{:.3} bound {:.3} gap {:.2}se rel {:.1}%",
            row.wsr_mean,
            row.wsr_stderr,
            row.analytical_mean,
            gap / row.wsr_stderr,
            100.0 * rel
        ));
    }
    Verdict {
        id: 3,
        title: "analytical bound vs Monte-Carlo rate",
        passed,
        detail: parts.join("; "),
    }
}

fn robust_vs_naive(desk: &SweepResult) -> Verdict {
    let p = point_index(desk, 0.4, 30.0);
    let (rb, nrb) = (desk.row(ROBUST, p).unwrap(), desk.row(NAIVE, p).unwrap());
    let (diff, se) = mean_stderr(&desk.paired_difference(ROBUST, NAIVE, p).unwrap());
    Verdict {
        id: 4,
        title: "robust beats naive at rho=0.4, 30 dB",
        passed: diff > 0.0 && diff >= 2.0 * se,
        detail: format!(
            "robust {:.3}±{:.3}, naive {:.3}±{:.3}, paired diff {diff:.4}±{se:.4} ({:.2} se)",
            rb.wsr_mean,
            rb.wsr_stderr,
            nrb.wsr_mean,
            nrb.wsr_stderr,
            diff / se.max(1e-300)
        ),
    }
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn gap_trend(snr: &SweepResult) -> Verdict {
    let x: Vec<f64> = snr.points.iter().map(|p| p.snr_db).collect();
    let gaps: Vec<f64> = (0..x.len())
        .map(|p| snr.row(ROBUST, p).unwrap().wsr_mean - snr.row(NAIVE, p).unwrap().wsr_mean)
        .collect();
    let rho_s = spearman(&x, &gaps);
    let shown: Vec<String> = x.iter().zip(&gaps).map(|(s, g)| format!("{s}dB {g:+.3}")).collect();
    Verdict {
        id: 5,
        title: "robust-minus-naive gap non-increasing in SNR",
        passed: rho_s <= 0.0,
        detail: format!("gaps [{}], spearman {rho_s:+.2} (need <= 0)", shown.join(", ")),
    }
}

fn fd_vs_hd(snr: &SweepResult) -> Verdict {
    let p = point_index(snr, 0.4, 30.0);
    let (fd, hd) = (snr.row(ROBUST, p).unwrap(), snr.row(HALF, p).unwrap());
    let ratio = fd.wsr_mean / hd.wsr_mean;
    Verdict {
        id: 6,
        title: "full duplex beats half duplex at rho=0.4, 30 dB",
        passed: fd.wsr_mean > hd.wsr_mean && ratio > 1.0 && ratio <= 2.0,
        detail: format!("FD {:.3}, HD {:.3}, ratio {ratio:.3} (need (1, 2])", fd.wsr_mean, hd.wsr_mean),
    }
}

fn algorithm2_monotone(diag: &mut Diagnostics) -> Verdict {
    let cfg = SystemConfig::desk_default().with_snr_db(30.0);
    let geo = GeometryConfig::default();
    let err = error_covariances(&CsiErrorPolicy::iid(0.4, 0.6), db_to_linear(30.0), &cfg).unwrap();
    let opts = SolverOptions::default();
    let (mut converged, mut worst_drop, mut worst_sweeps) = (0, 0.0f64, 0);
    for i in 0..100 {
        let est = generate_estimates(&cfg, &geo, &mut substream(SEED, tag::SCENARIO, i)).unwrap();
        let mut init = BeamformingState::zeros(&cfg);
        let mut rng = substream(SEED, tag::INIT, i);
        let (u, v) = initial_precoders(&est, &cfg, &init.theta, opts.init_policy, &mut rng);
        init.u_k = u;
        init.v_j = v;
        let sol = run_from(&est, &err, &cfg, &opts, init).unwrap();
        diag.kkt.observe(&sol, &cfg);
        diag.convergence.observe(&sol);
        converged += usize::from(sol.converged);
        worst_drop = worst_drop.max(relative_drop(&sol.wsr_trace()));
        worst_sweeps = worst_sweeps.max(sol.trace.len() - 1);
    }
    Verdict {
        id: 7,
        title: "rate bound monotone and convergent",
        passed: worst_drop <= 1e-6 && converged >= 95,
        detail: format!(
            "max relative drop {worst_drop:.2e} (tol 1e-6), converged {converged}/100 within 200 sweeps (need 95), \
             longest run {worst_sweeps} sweeps"
        ),
    }
}

fn mm_correctness() -> Verdict {
    let mut modulus = 0.0f64;
    let mut rise = 0.0f64;
    let cfg = small_config(8);
    for i in 0..20 {
        let mut rng = substream(SEED, tag::TEST, 800 + i);
        let (est, err, state) = prepared_instance(&cfg, 0.2, &mut rng);
        let prob = build_mm_problem(&build_stz(&est, &err, &state, &cfg).unwrap());
        let mut theta = state.theta.clone();
        let mut f = prob.objective(&theta);
        for _ in 0..200 {
            theta = mm_step(&prob, &theta);
            modulus = modulus.max(theta.max_modulus_error());
            let next = prob.objective(&theta);
            rise = rise.max(next - f);
            f = next;
        }
    }
    let cfg2 = small_config(2);
    let steps = 720;
    let step = std::f64::consts::TAU / steps as f64;
    let mut grid_gap = 0.0f64;
    for i in 0..20 {
        let mut rng = substream(SEED, tag::TEST, 900 + i);
        let (est, err, state) = prepared_instance(&cfg2, 0.1, &mut rng);
        let prob = build_mm_problem(&build_stz(&est, &err, &state, &cfg2).unwrap());
        let mm = prob.objective(&run_algorithm1(&prob, &state.theta, &MmOptions::default()).theta);
        let mut best = f64::INFINITY;
        for a in 0..steps {
            for b in 0..steps {
                best = best.min(prob.objective(&IrsPhase::from_angles(&[a as f64 * step, b as f64 * step])));
            }
        }
        grid_gap = grid_gap.max(mm - best);
    }
    Verdict {
        id: 8,
        title: "phase update correctness",
        passed: modulus <= 1e-12 && rise <= 1e-10 && grid_gap <= 1e-3,
        detail: format!(
            "max |1-|theta_i|| {modulus:.2e} (tol 1e-12), max objective rise {rise:.2e} (tol 1e-10), \
             max excess over 0.5-degree grid {grid_gap:.2e} (tol 1e-3)"
        ),
    }
}

fn kkt(diag: &Diagnostics) -> Verdict {
    let k = &diag.kkt;
    Verdict {
        id: 9,
        title: "power budgets and complementary slackness",
        passed: k.max_power_excess <= 1e-6 && k.max_complementarity <= 1e-6,
        detail: format!(
            "{} solver runs, max (power-budget)/budget {:.2e} (tol 1e-6), max |lambda(power-budget)|/budget {:.2e} (tol 1e-6)",
            k.runs, k.max_power_excess, k.max_complementarity
        ),
    }
}

fn perfect_csi() -> Verdict {
    let cfg = small_config(3);
    let zero = ErrorCovariances::zeros(&cfg);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let mut rng = substream(SEED, tag::TEST, 1000 + i);
        let ch = random_channels(&cfg, &mut rng);
        let state = random_state(&cfg, &mut rng);
        let expect = reference::sweep(&ch, &state, &cfg).unwrap();
        let mut got = state.clone();
        transceiver_sweep(&ch, &zero, &mut got, &cfg, &SolverOptions::default()).unwrap();
        for (a, b) in [
            (&got.f_k, &expect.f_k),
            (&got.f_j, &expect.f_j),
            (&got.w_k, &expect.w_k),
            (&got.w_j, &expect.w_j),
            (&got.u_k, &expect.u_k),
            (&got.v_j, &expect.v_j),
        ] {
            worst = worst.max(rel_frobenius(a, b));
        }
    }
    Verdict {
        id: 10,
        title: "perfect-CSI sweep equals reference WMMSE",
        passed: worst <= 1e-9,
        detail: format!("max rel. block difference {worst:.2e} (tol 1e-9)"),
    }
}

fn reproducibility(a: &RunOutput, b: &RunOutput) -> Verdict {
    let (ca, cb) = (format_csv(&a.result), format_csv(&b.result));
    Verdict {
        id: 11,
        title: "results.csv identical across thread counts",
        passed: ca.as_bytes() == cb.as_bytes(),
        detail: format!("{} bytes vs {} bytes, threads 1 vs 2", ca.len(), cb.len()),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut verdicts = Vec::new();
    let emit = |v: Verdict, all: &mut Vec<Verdict>| {
        report(&v);
        all.push(v);
    };

    emit(expectation_identity(), &mut verdicts);
    emit(sigma_oracle(), &mut verdicts);

    let desk = ExperimentSpec::preset(Preset::Desk);
    let desk_a = run_experiment(&desk, 1).expect("desk sweep");
    let desk_b = run_experiment(&desk, 2).expect("desk sweep");
    emit(bound_vs_monte_carlo(&desk_a.result), &mut verdicts);
    emit(robust_vs_naive(&desk_a.result), &mut verdicts);

    let mut snr_spec = desk.clone();
    snr_spec.sweep.kind = SweepKind::Snr;
    snr_spec.sweep.rho = 0.4;
    snr_spec.sweep.snr_db_list = vec![0.0, 10.0, 20.0, 30.0];
    snr_spec.schemes = vec![ROBUST, NAIVE, HALF];
    let snr = run_experiment(&snr_spec, 0).expect("SNR sweep");
    emit(gap_trend(&snr.result), &mut verdicts);
    emit(fd_vs_hd(&snr.result), &mut verdicts);

    let mut diag = Diagnostics::default();
    for d in [&desk_a.result.diagnostics, &snr.result.diagnostics] {
        diag.kkt.merge(&d.kkt);
        diag.convergence.merge(&d.convergence);
    }
    emit(algorithm2_monotone(&mut diag), &mut verdicts);
    emit(mm_correctness(), &mut verdicts);
    emit(kkt(&diag), &mut verdicts);
    emit(perfect_csi(), &mut verdicts);
    emit(reproducibility(&desk_a, &desk_b), &mut verdicts);

    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.passed).map(|v| v.id).collect();
    println!(
        "acceptance: {}/{} passed in {:.0}s{}",
        verdicts.len() - failed.len(),
        verdicts.len(),
        start.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
