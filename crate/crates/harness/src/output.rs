//! Result files. All writers are deterministic functions of the result:
//! fixed column order, fixed float formatting, sorted JSON maps, no clock.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{HarnessError, Result};
use crate::experiment::{RunOutput, SweepResult, TraceSet, SCHEMA_VERSION};
use crate::plot;

/// Column layout of `results.csv` for [`SCHEMA_VERSION`] 1.
pub const CSV_HEADER: &str = "schema_version,scheme,point,sweep,rho,snr_db,n,wsr_mean,wsr_stderr,\
analytical_mean,analytical_stderr,r_ul_mean,r_dl_mean,converged,solver_runs";

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const SWEEP_SVG: &str = "sweep.svg";
pub const TRACE_DIR: &str = "trace";

pub fn format_csv(result: &SweepResult) -> String {
    let mut out = String::with_capacity(256 * (result.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{SCHEMA_VERSION},{},{},{},{:.12e},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
            r.scheme,
            r.point,
            result.sweep_kind,
            r.rho,
            r.snr_db,
            r.n,
            r.wsr_mean,
            r.wsr_stderr,
            r.analytical_mean,
            r.analytical_stderr,
            r.r_ul_mean,
            r.r_dl_mean,
            r.converged,
            r.solver_runs,
        );
    }
    out
}

pub fn format_json(result: &SweepResult) -> Result<String> {
    let mut text = serde_json::to_string_pretty(result)
        .map_err(|e| HarnessError::Config(format!("serializing results: {e}")))?;
    text.push('\n');
    Ok(text)
}

pub fn format_trace(set: &TraceSet) -> Result<String> {
    let mut out = String::new();
    for line in &set.lines {
        let json = serde_json::to_string(line)
            .map_err(|e| HarnessError::Config(format!("serializing trace: {e}")))?;
        out.push_str(&json);
        out.push('\n');
    }
    Ok(out)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// Writes every artifact under `dir` and returns the written paths.
pub fn write_all(run: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let trace_dir = dir.join(TRACE_DIR);
    fs::create_dir_all(&trace_dir).map_err(|e| HarnessError::io(&trace_dir, e))?;
    let mut written = Vec::new();

    let csv = dir.join(RESULTS_CSV);
    write(&csv, &format_csv(&run.result))?;
    written.push(csv);

    let json = dir.join(RESULTS_JSON);
    write(&json, &format_json(&run.result)?)?;
    written.push(json);

    for set in &run.traces {
        let path = trace_dir.join(set.file_name());
        write(&path, &format_trace(set)?)?;
        written.push(path);
    }

    written.push(plot::emit_plots(&run.result, dir)?);
    Ok(written)
}

pub fn read_result(path: &Path) -> Result<SweepResult> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let result: SweepResult = serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if result.schema_version != SCHEMA_VERSION {
        return Err(HarnessError::Parse {
            path: path.to_path_buf(),
            message: format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                result.schema_version
            ),
        });
    }
    Ok(result)
}
