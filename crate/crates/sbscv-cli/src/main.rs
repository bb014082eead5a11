use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sbscv::runner::{self, Fault, Suite, VerifyOptions, CAP_ENV};

#[derive(Parser)]
#[command(name = "sbscv", version, about = "Spectrum broadcast structure checks on a grid")]
struct Cli {
    /// Largest joint dimension any matrix may reach. Overrides SBSCV_CAP
    /// and the scenario file.
    #[arg(long, global = true)]
    cap: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Fast,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    GammaSign,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a scenario and write bounds.csv, samples.csv and manifest.json.
    Run {
        scenario: PathBuf,
        /// Output directory (default: out/<scenario name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the seed recorded in the scenario.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the randomised invariant suite.
    Verify {
        #[arg(long, value_enum, default_value = "fast")]
        suite: SuiteArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Print the rows of one bound for a scenario as CSV.
    Bounds {
        scenario: PathBuf,
        #[arg(long)]
        only: String,
    },
}

fn env_cap() -> Result<Option<usize>, String> {
    match std::env::var(CAP_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|e| format!("{CAP_ENV}: {e}")),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, String> {
    match cli.cmd {
        Command::Run { scenario, out, seed } => {
            let mut scn = runner::load_scenario_with(&scenario, cli.cap).map_err(|e| format!("{}: {e}", scenario.display()))?;
            if let Some(s) = seed {
                scn = scn.with_seed(s);
            }
            let record = runner::run(&scn).map_err(|e| e.to_string())?;
            let dir = out.unwrap_or_else(|| {
                let stem = scenario.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
                PathBuf::from("out").join(stem)
            });
            runner::write_outputs(&scn, &record, &dir).map_err(|e| e.to_string())?;
            for s in &record.samples {
                let bad = s.bounds.iter().filter(|b| !b.satisfied).count();
                println!(
                    "t = {:<8} sbs_distance {:.6e}  diagonal {:.6e}  offdiag {:.6e}  rows {} violated {}",
                    s.t,
                    s.sbs_distance,
                    s.diagonal_distance,
                    s.offdiag_half_norm,
                    s.bounds.len(),
                    bad
                );
                for w in &s.pvm_warnings {
                    eprintln!("warning: t = {}: {w}", s.t);
                }
            }
            println!("wrote {}", dir.display());
            Ok(if record.all_satisfied() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Verify { suite, seed, inject_fault } => {
            let cap = match cli.cap {
                Some(c) => c,
                None => env_cap()?.unwrap_or(sbscv::DEFAULT_CAP),
            };
            let opts = VerifyOptions {
                suite: match suite {
                    SuiteArg::Fast => Suite::Fast,
                    SuiteArg::All => Suite::All,
                },
                seed,
                fault: inject_fault.map(|f| match f {
                    FaultArg::GammaSign => Fault::GammaSign,
                }),
                cap,
            };
            let report = runner::verify(&opts);
            print!("{}", report.render());
            Ok(if report.ok() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Bounds { scenario, only } => {
            let scn = runner::load_scenario_with(&scenario, cli.cap).map_err(|e| format!("{}: {e}", scenario.display()))?;
            let record = runner::run(&scn).map_err(|e| e.to_string())?;
            let rows: Vec<_> = record.rows().filter(|(_, b)| b.name == only).collect();
            if rows.is_empty() {
                let mut names: Vec<&str> = record.rows().map(|(_, b)| b.name.as_str()).collect();
                names.sort_unstable();
                names.dedup();
                return Err(format!("no rows named {only:?}; available: {}", names.join(", ")));
            }
            print!("{}", runner::bounds_csv(&scn, &record, Some(&only)));
            Ok(if rows.iter().all(|(_, b)| b.satisfied) { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}
