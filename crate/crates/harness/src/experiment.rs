//! Sweep execution. Work is split into (sweep point, scenario) tasks that
//! run on a private thread pool; every random draw comes from a substream
//! keyed by the scenario index, so results do not depend on scheduling.

use std::collections::BTreeMap;

use irsfd::baselines::{solve_scheme, EvalOptions, SchemeId, SchemeOutcome};
use irsfd::channel_gen::{error_covariances, generate_estimates};
use irsfd::ewmmse::{IterationRecord, Solution};
use irsfd::rate::mean_stderr;
use irsfd::streams::{derive_seed, substream, tag};
use irsfd::system_model::db_to_linear;
use irsfd::SystemConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentSpec, SweepKind, SweepPoint};
use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Worst-case power and complementary-slackness figures over solver runs,
/// relative to the budget. Only records after the first update count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KktStats {
    pub runs: usize,
    /// `max (power − budget) / budget`; nonpositive when feasible.
    pub max_power_excess: f64,
    /// `max |λ · (power − budget)| / budget`.
    pub max_complementarity: f64,
}

impl KktStats {
    pub fn observe(&mut self, sol: &Solution, cfg: &SystemConfig) {
        let mut first = self.runs == 0;
        self.runs += 1;
        for rec in sol.trace.iter().filter(|r| r.iteration > 0) {
            for (p, b, lambda) in [
                (rec.power_ul, cfg.alphak, rec.lambda_k),
                (rec.power_dl, cfg.alpha0, rec.lambda_0),
            ] {
                let excess = (p - b) / b;
                let slack = (lambda * (p - b)).abs() / b;
                if first {
                    self.max_power_excess = excess;
                    self.max_complementarity = slack;
                    first = false;
                } else {
                    self.max_power_excess = self.max_power_excess.max(excess);
                    self.max_complementarity = self.max_complementarity.max(slack);
                }
            }
        }
    }

    pub fn merge(&mut self, other: &KktStats) {
        if other.runs == 0 {
            return;
        }
        if self.runs == 0 {
            *self = *other;
            return;
        }
        self.runs += other.runs;
        self.max_power_excess = self.max_power_excess.max(other.max_power_excess);
        self.max_complementarity = self.max_complementarity.max(other.max_complementarity);
    }
}

/// Outer-loop behaviour over solver runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStats {
    pub runs: usize,
    pub converged: usize,
    /// Largest relative decrease of the rate bound between sweeps.
    pub max_relative_drop: f64,
    pub max_sweeps: usize,
}

impl ConvergenceStats {
    pub fn observe(&mut self, sol: &Solution) {
        self.runs += 1;
        self.converged += usize::from(sol.converged);
        self.max_sweeps = self.max_sweeps.max(sol.trace.len().saturating_sub(1));
        self.max_relative_drop = self.max_relative_drop.max(relative_drop(&sol.wsr_trace()));
    }

    pub fn merge(&mut self, other: &ConvergenceStats) {
        self.runs += other.runs;
        self.converged += other.converged;
        self.max_sweeps = self.max_sweeps.max(other.max_sweeps);
        self.max_relative_drop = self.max_relative_drop.max(other.max_relative_drop);
    }
}

/// `max (prev − next) / max(|prev|, 1e-300)` over consecutive entries, or 0.
pub fn relative_drop(trace: &[f64]) -> f64 {
    trace
        .windows(2)
        .map(|w| (w[0] - w[1]) / w[0].abs().max(1e-300))
        .fold(0.0, f64::max)
}

/// One CSV row: a scheme at a sweep point, aggregated over scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub scheme: String,
    pub point: usize,
    pub rho: f64,
    pub snr_db: f64,
    pub n: usize,
    /// Mean over scenarios of the per-scenario Monte-Carlo WSR.
    pub wsr_mean: f64,
    /// Standard error of that mean across scenarios.
    pub wsr_stderr: f64,
    pub analytical_mean: f64,
    pub analytical_stderr: f64,
    pub r_ul_mean: f64,
    pub r_dl_mean: f64,
    /// Solver runs that met the outer tolerance (two per scenario for HD).
    pub converged: usize,
    pub solver_runs: usize,
    pub per_scenario: Vec<f64>,
    pub analytical_per_scenario: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub kkt: KktStats,
    pub convergence: ConvergenceStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub config_sha256: String,
    pub sweep_kind: SweepKind,
    pub spec: BTreeMap<String, serde_json::Value>,
    pub points: Vec<SweepPoint>,
    pub rows: Vec<PointResult>,
    pub diagnostics: Diagnostics,
}

impl SweepResult {
    pub fn row(&self, scheme: SchemeId, point: usize) -> Option<&PointResult> {
        let label = scheme.label();
        self.rows.iter().find(|r| r.scheme == label && r.point == point)
    }

    /// Per-scenario differences `a − b` at one point, for paired comparisons.
    pub fn paired_difference(&self, a: SchemeId, b: SchemeId, point: usize) -> Option<Vec<f64>> {
        let (ra, rb) = (self.row(a, point)?, self.row(b, point)?);
        Some(ra.per_scenario.iter().zip(&rb.per_scenario).map(|(x, y)| x - y).collect())
    }
}

/// Solver trace records of one scheme at one sweep point, one line each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub scenario: usize,
    /// 0 for full duplex and the UL slot of half duplex, 1 for the DL slot.
    pub slot: usize,
    #[serde(flatten)]
    pub record: IterationRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceSet {
    pub scheme: SchemeId,
    pub point: usize,
    pub lines: Vec<TraceLine>,
}

impl TraceSet {
    pub fn file_name(&self) -> String {
        format!("{}_p{}.jsonl", self.scheme.label(), self.point)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub result: SweepResult,
    pub traces: Vec<TraceSet>,
}

/// Per-point system configuration: budgets from the SNR.
pub fn point_config(spec: &ExperimentSpec, point: SweepPoint) -> SystemConfig {
    spec.system.clone().with_snr_db(point.snr_db)
}

struct TaskOutput {
    outcomes: Vec<SchemeOutcome>,
    diagnostics: Diagnostics,
}

fn run_task(spec: &ExperimentSpec, point: SweepPoint, scenario: usize) -> Result<TaskOutput> {
    let cfg = point_config(spec, point);
    let csi = irsfd::channel_gen::CsiErrorPolicy {
        rho: point.rho,
        ..spec.csi.clone()
    };
    let err = error_covariances(&csi, db_to_linear(point.snr_db), &cfg)?;
    let s = scenario as u64;
    let est = generate_estimates(&cfg, &spec.geometry, &mut substream(spec.master_seed, tag::SCENARIO, s))?;
    let eval = EvalOptions {
        n_error_draws: spec.n_error_draws,
        seed: derive_seed(spec.master_seed, tag::ERROR_DRAW, s),
    };
    let mut diagnostics = Diagnostics::default();
    let mut outcomes = Vec::with_capacity(spec.schemes.len());
    for &scheme in &spec.schemes {
        // Every scheme starts from the same initialization stream.
        let mut init_rng = substream(spec.master_seed, tag::INIT, s);
        let outcome = solve_scheme(scheme, &est, &err, &cfg, &spec.solver, &eval, &mut init_rng)?;
        for sol in &outcome.designs {
            diagnostics.kkt.observe(sol, &cfg);
            diagnostics.convergence.observe(sol);
        }
        outcomes.push(outcome);
    }
    Ok(TaskOutput { outcomes, diagnostics })
}

/// Runs the sweep on `threads` workers (0 picks the rayon default).
pub fn run_experiment(spec: &ExperimentSpec, threads: usize) -> Result<RunOutput> {
    spec.validate()?;
    let points = spec.sweep.points();
    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..spec.n_scenarios).map(move |s| (p, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let outputs: Vec<TaskOutput> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(p, s)| run_task(spec, points[p], s))
            .collect::<Result<_>>()
    })?;

    let mut diagnostics = Diagnostics::default();
    for out in &outputs {
        diagnostics.kkt.merge(&out.diagnostics.kkt);
        diagnostics.convergence.merge(&out.diagnostics.convergence);
    }

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for (k, &scheme) in spec.schemes.iter().enumerate() {
        for (p, &point) in points.iter().enumerate() {
            let runs = &outputs[p * spec.n_scenarios..(p + 1) * spec.n_scenarios];
            let outcomes: Vec<&SchemeOutcome> = runs.iter().map(|r| &r.outcomes[k]).collect();
            rows.push(aggregate(scheme, p, point, &outcomes));
            traces.push(TraceSet {
                scheme,
                point: p,
                lines: trace_lines(&outcomes),
            });
        }
    }
    log::info!(
        "{} rows, {} solver runs, {} converged",
        rows.len(),
        diagnostics.convergence.runs,
        diagnostics.convergence.converged
    );

    let spec_echo = spec
        .entries()
        .into_iter()
        .map(|(k, v)| {
            let json = serde_json::to_value(&v).unwrap_or(serde_json::Value::Null);
            (k.to_string(), json)
        })
        .collect();
    Ok(RunOutput {
        result: SweepResult {
            schema_version: SCHEMA_VERSION,
            config_sha256: spec.content_hash(),
            sweep_kind: spec.sweep.kind,
            spec: spec_echo,
            points,
            rows,
            diagnostics,
        },
        traces,
    })
}

fn aggregate(scheme: SchemeId, p: usize, point: SweepPoint, outcomes: &[&SchemeOutcome]) -> PointResult {
    let per_scenario: Vec<f64> = outcomes.iter().map(|o| o.eval.wsr_total).collect();
    let analytical: Vec<f64> = outcomes.iter().map(|o| o.analytical).collect();
    let ul: Vec<f64> = outcomes.iter().map(|o| o.eval.r_ul).collect();
    let dl: Vec<f64> = outcomes.iter().map(|o| o.eval.r_dl).collect();
    let (wsr_mean, wsr_stderr) = mean_stderr(&per_scenario);
    let (analytical_mean, analytical_stderr) = mean_stderr(&analytical);
    let designs = outcomes.iter().flat_map(|o| &o.designs);
    PointResult {
        scheme: scheme.label(),
        point: p,
        rho: point.rho,
        snr_db: point.snr_db,
        n: outcomes.len(),
        wsr_mean,
        wsr_stderr,
        analytical_mean,
        analytical_stderr,
        r_ul_mean: mean_stderr(&ul).0,
        r_dl_mean: mean_stderr(&dl).0,
        converged: designs.clone().filter(|d| d.converged).count(),
        solver_runs: designs.count(),
        per_scenario,
        analytical_per_scenario: analytical,
    }
}

fn trace_lines(outcomes: &[&SchemeOutcome]) -> Vec<TraceLine> {
    let mut lines = Vec::new();
    for (scenario, o) in outcomes.iter().enumerate() {
        for (slot, sol) in o.designs.iter().enumerate() {
            lines.extend(sol.trace.iter().map(|rec| TraceLine {
                scenario,
                slot,
                record: rec.clone(),
            }));
        }
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_drop_ignores_increases() {
        assert_eq!(relative_drop(&[1.0, 2.0, 3.0]), 0.0);
        assert!((relative_drop(&[2.0, 1.0, 3.0]) - 0.5).abs() < 1e-15);
        assert_eq!(relative_drop(&[]), 0.0);
    }

    #[test]
    fn kkt_merge_keeps_worst_case() {
        let mut a = KktStats {
            runs: 1,
            max_power_excess: -0.5,
            max_complementarity: 1e-9,
        };
        a.merge(&KktStats {
            runs: 2,
            max_power_excess: -1e-3,
            max_complementarity: 0.0,
        });
        assert_eq!(a.runs, 3);
        assert_eq!(a.max_power_excess, -1e-3);
        assert_eq!(a.max_complementarity, 1e-9);
    }
}
