use std::path::Path;
use std::process::Command;

use irsfd::baselines::{Robustness, SchemeId};
use irsfd::kron_expectation::{build_sigma, SigmaPair};
use irsfd::linalg::CMat;
use irsfd::{ChannelEstimates, ErrorCovariances, IrsPhase, SystemConfig};
use irsfd_harness::experiment::{Diagnostics, PointResult, SCHEMA_VERSION};
use irsfd_harness::output::{self, CSV_HEADER};
use irsfd_harness::plot::{build_series, render_svg, ANALYTICAL_SERIES};
use irsfd_harness::validation::{run_validation_suite_with, Hooks};
use irsfd_harness::{run_experiment, run_validation_suite, ExperimentSpec, SweepKind, SweepPoint, SweepResult};

fn tiny_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::default();
    spec.system.irs_rows = 2;
    spec.system.irs_cols = 2;
    spec.sweep.rho_list = vec![0.4];
    spec.schemes = vec![SchemeId::PROPOSED];
    spec.n_scenarios = 1;
    spec.n_error_draws = 20;
    spec
}

#[test]
fn one_scenario_one_scheme_one_point_gives_one_csv_row() {
    let run = run_experiment(&tiny_spec(), 1).unwrap();
    let csv = output::format_csv(&run.result);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], CSV_HEADER);
    assert!(lines[1].starts_with("1,FD-IRS-RB,0,rho,"));
    let row = &run.result.rows[0];
    assert_eq!(row.n, 1);
    assert_eq!(row.wsr_stderr, 0.0);
}

#[test]
fn results_json_matches_shipped_schema() {
    let mut spec = tiny_spec();
    spec.n_scenarios = 2;
    spec.schemes.push(SchemeId::PROPOSED.with_robustness(Robustness::NonRobust));
    let run = run_experiment(&spec, 1).unwrap();
    let instance: serde_json::Value = serde_json::from_str(&output::format_json(&run.result).unwrap()).unwrap();
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/results.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    if let Err(errors) = compiled.validate(&instance) {
        let msgs: Vec<String> = errors.map(|e| e.to_string()).collect();
        panic!("schema violations: {msgs:?}");
    }
    let mut broken = instance.clone();
    broken["schema_version"] = serde_json::json!(2);
    assert!(!compiled.is_valid(&broken));
}

#[test]
fn worker_count_does_not_change_any_output() {
    let mut spec = tiny_spec();
    spec.n_scenarios = 3;
    spec.sweep.rho_list = vec![0.1, 0.4];
    let a = run_experiment(&spec, 1).unwrap();
    let b = run_experiment(&spec, 3).unwrap();
    assert_eq!(output::format_csv(&a.result), output::format_csv(&b.result));
    assert_eq!(output::format_json(&a.result).unwrap(), output::format_json(&b.result).unwrap());
    for (x, y) in a.traces.iter().zip(&b.traces) {
        assert_eq!(output::format_trace(x).unwrap(), output::format_trace(y).unwrap());
    }
}

#[test]
fn written_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_experiment(&tiny_spec(), 1).unwrap();
    let written = output::write_all(&run, dir.path()).unwrap();
    assert!(written.iter().all(|p| p.exists()));
    let back = output::read_result(&dir.path().join(output::RESULTS_JSON)).unwrap();
    assert_eq!(back, run.result);
    let trace = std::fs::read_to_string(dir.path().join("trace/FD-IRS-RB_p0.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(first["iteration"], 0);
    assert_eq!(first["scenario"], 0);
}

fn row(scheme: &str, point: usize, x: f64, y: f64) -> PointResult {
    PointResult {
        scheme: scheme.to_string(),
        point,
        rho: x,
        snr_db: x,
        n: 2,
        wsr_mean: y,
        wsr_stderr: 0.1,
        analytical_mean: y - 0.5,
        analytical_stderr: 0.1,
        r_ul_mean: y / 2.0,
        r_dl_mean: y / 2.0,
        converged: 2,
        solver_runs: 2,
        per_scenario: vec![y, y],
        analytical_per_scenario: vec![y - 0.5, y - 0.5],
    }
}

fn synthetic(kind: SweepKind, rows: Vec<PointResult>) -> SweepResult {
    SweepResult {
        schema_version: SCHEMA_VERSION,
        config_sha256: "0".repeat(64),
        sweep_kind: kind,
        spec: Default::default(),
        points: vec![SweepPoint { rho: 0.4, snr_db: 30.0 }],
        rows,
        diagnostics: Diagnostics::default(),
    }
}

/// Series lines are the only width-2 polylines; axes and ticks use width 1.
fn has_series_line(svg: &str) -> bool {
    svg.lines().any(|l| l.starts_with("<polyline") && l.contains("stroke-width=\"2\""))
}

#[test]
fn single_point_chart_has_markers_and_no_line() {
    let result = synthetic(SweepKind::Rho, vec![row("FD-IRS-RB", 0, 0.4, 10.0)]);
    let svg = render_svg(&result).unwrap();
    assert!(svg.contains("<circle"));
    assert!(!has_series_line(&svg));
}

#[test]
fn multi_point_chart_connects_points() {
    let rows = vec![row("FD-IRS-RB", 0, 0.01, 10.0), row("FD-IRS-RB", 1, 0.1, 9.0)];
    let svg = render_svg(&synthetic(SweepKind::Rho, rows)).unwrap();
    assert!(has_series_line(&svg));
}

#[test]
fn all_schemes_plus_bound_give_one_series_each() {
    let rows: Vec<PointResult> = SchemeId::ALL
        .iter()
        .skip(1)
        .chain(std::iter::once(&SchemeId::PROPOSED))
        .flat_map(|id| [0.0, 10.0, 20.0].into_iter().enumerate().map(move |(p, x)| row(&id.label(), p, x, 5.0 + x)))
        .filter(|r| r.scheme != "HD-No-IRS-Non-RB")
        .collect();
    let series = build_series(&synthetic(SweepKind::Snr, rows));
    assert_eq!(series.len(), 8);
    assert!(series.iter().any(|s| s.name == ANALYTICAL_SERIES));
}

#[test]
fn empty_series_are_dropped() {
    let rows = vec![row("FD-IRS-RB", 0, 0.1, 10.0), row("HD-IRS-RB", 0, 0.1, f64::NAN)];
    let series = build_series(&synthetic(SweepKind::Rho, rows));
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["FD-IRS-RB", ANALYTICAL_SERIES]);
    let all_empty = synthetic(SweepKind::Rho, vec![row("HD-IRS-RB", 0, 0.1, f64::NAN)]);
    assert!(render_svg(&all_empty).is_err());
}

#[test]
fn validation_suite_passes_and_is_seed_stable() {
    for seed in [1, 2] {
        let report = run_validation_suite(seed);
        assert!(report.all_passed(), "{report}");
    }
}

/// Error terms enter with the wrong sign.
fn sign_flipped_sigma(
    est: &ChannelEstimates,
    err: &ErrorCovariances,
    theta: &IrsPhase,
    u: &CMat,
    v: &CMat,
    cfg: &SystemConfig,
) -> irsfd::Result<SigmaPair> {
    let clean = build_sigma(est, &ErrorCovariances::zeros(cfg), theta, u, v, cfg)?;
    let full = build_sigma(est, err, theta, u, v, cfg)?;
    Ok(SigmaPair {
        sigma_ul: &clean.sigma_ul * irsfd::linalg::real(2.0) - full.sigma_ul,
        sigma_dl: &clean.sigma_dl * irsfd::linalg::real(2.0) - full.sigma_dl,
    })
}

#[test]
fn sigma_oracle_catches_sign_error() {
    let report = run_validation_suite_with(1, &Hooks { sigma: sign_flipped_sigma });
    assert!(!report.check("build_sigma").unwrap().passed, "{report}");
    assert!(report.check("expect_hxh").unwrap().passed);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_irsfd"))
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = bin().args(["show-config", "--set", "system.bogus=1"]).output().unwrap();
    assert_eq!(bad_key.status.code(), Some(2));
    let missing = bin().args(["show-config", "--spec", "/nonexistent/spec.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(3));
    let no_results = bin()
        .args(["plot", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(no_results.status.code(), Some(3));
    let ok = bin().arg("validate").output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
}

#[test]
fn cli_spec_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.toml");
    std::fs::write(
        &spec_path,
        "n_scenarios = 1\nn_error_draws = 10\nschemes = [\"FD-IRS-RB\"]\n\n[sweep]\nrho_list = [0.4]\n\n[system]\nirs_rows = 2\nirs_cols = 2\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let shown = bin()
        .args(["show-config", "--spec"])
        .arg(&spec_path)
        .args(["--set", "n_error_draws=12", "--seed", "9"])
        .output()
        .unwrap();
    let text = String::from_utf8(shown.stdout).unwrap();
    assert!(text.contains("n_error_draws = 12\n"), "{text}");
    assert!(text.contains("master_seed = \"9\"\n"), "{text}");
    assert!(text.contains("system.irs_rows = 2\n"), "{text}");

    let run = bin()
        .args(["run", "--threads", "1", "--spec"])
        .arg(&spec_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    for name in ["results.csv", "results.json", "sweep.svg", "trace/FD-IRS-RB_p0.jsonl"] {
        assert!(out.join(name).exists(), "{name}");
    }
    std::fs::remove_file(out.join("sweep.svg")).unwrap();
    let replot = bin().arg("plot").arg(out.join("results.json")).output().unwrap();
    assert!(replot.status.success());
    assert!(out.join("sweep.svg").exists());
}
