use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use irsfd_harness::output::{self, RESULTS_JSON};
use irsfd_harness::{plot, run_experiment, run_validation_suite, ExperimentSpec, HarnessError, Preset, Result};

#[derive(Parser)]
#[command(name = "irsfd", version, about = "Robust IRS-aided full-duplex beamforming experiments")]
struct Cli {
    /// Base configuration.
    #[arg(long, global = true, default_value = "desk")]
    preset: String,
    /// Flat TOML spec file applied on top of the preset.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// `key=value` override; repeatable, applied after the spec file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides `master_seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep and write results, traces and the chart.
    Run,
    /// Run the oracle self-checks.
    Validate,
    /// Redraw the chart from an existing results.json.
    Plot {
        /// Defaults to `<out>/results.json`.
        results: Option<PathBuf>,
    },
    /// Print the resolved configuration and its content hash.
    ShowConfig,
}

fn resolve(cli: &Cli) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::preset(cli.preset.parse::<Preset>()?);
    if let Some(path) = &cli.spec {
        spec.apply_file(path)?;
    }
    for assignment in &cli.overrides {
        spec.apply_override(assignment)?;
    }
    if let Some(out) = &cli.out {
        spec.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        spec.master_seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn execute(cli: &Cli) -> Result<()> {
    let spec = resolve(cli)?;
    match &cli.command {
        Command::ShowConfig => {
            print!("{}", spec.render());
            println!("# config_sha256 = {}", spec.content_hash());
        }
        Command::Run => {
            let run = run_experiment(&spec, cli.threads)?;
            let written = output::write_all(&run, &spec.out_dir)?;
            println!("{:<22} {:>8} {:>8} {:>10} {:>10} {:>10}", "scheme", "rho", "snr_db", "wsr", "stderr", "bound");
            for r in &run.result.rows {
                println!(
                    "{:<22} {:>8.3} {:>8.1} {:>10.4} {:>10.4} {:>10.4}",
                    r.scheme, r.rho, r.snr_db, r.wsr_mean, r.wsr_stderr, r.analytical_mean
                );
            }
            println!("wrote {} files under {}", written.len(), spec.out_dir.display());
        }
        Command::Validate => {
            let report = run_validation_suite(spec.master_seed);
            println!("{report}");
            if !report.all_passed() {
                return Err(HarnessError::Validation("one or more oracle checks failed".into()));
            }
        }
        Command::Plot { results } => {
            let path = results.clone().unwrap_or_else(|| spec.out_dir.join(RESULTS_JSON));
            let result = output::read_result(&path)?;
            let dir = path.parent().map(PathBuf::from).unwrap_or_default();
            let svg = plot::emit_plots(&result, &dir)?;
            println!("wrote {}", svg.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
