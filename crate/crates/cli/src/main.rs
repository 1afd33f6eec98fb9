use clap::{Parser, Subcommand};
use log::{info, warn};
use orbizeta_cli::cache::{default_dir, Cache};
use orbizeta_cli::output::{comparison_table, residue_table, write_artifact};
use orbizeta_cli::runner::{CliError, CliResult, OracleStatus, RunOptions};
use orbizeta_cli::spec::{load_spec, BackendKind};
use orbizeta_cli::{run_oracle_for, run_residues, run_strata, run_verify};
use std::path::PathBuf;
use std::process::ExitCode;

/// Residues of equivariant, isotypic and orbifold zeta functions on flat
/// orbifolds.
///
/// Exit status: 0 success, 2 invalid spec, 3 computation error,
/// 4 oracle verification failure.
#[derive(Parser)]
#[command(name = "orbizeta", version)]
struct Cli {
    /// Bypass the on-disk cache.
    #[arg(long, global = true)]
    no_cache: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute residues and write JSON/CSV artifacts.
    Residues {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        /// Output directory (default: output.dir from the spec, else ./orbizeta-out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare engine residues against the spectral oracle.
    Verify {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        k_max: Option<usize>,
        /// Also write artifacts here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print fixed sets and the orbit-type stratification as JSON.
    Strata {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Print the spectral oracle for one group element as JSON.
    Oracle {
        #[arg(long)]
        spec: PathBuf,
        /// Element index or label (e, g1, ...).
        #[arg(long)]
        gamma: String,
    },
    /// Manage the artifact cache.
    Cache {
        /// Delete every cached entry.
        #[arg(long)]
        clear: bool,
    },
}

fn open_cache(disabled: bool) -> Cache {
    if disabled {
        Cache::disabled()
    } else {
        Cache::open(default_dir())
    }
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("report serializes"));
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Residues {
            spec,
            k_max,
            backend,
            out,
        } => {
            let s = load_spec(&spec)?;
            let cache = open_cache(cli.no_cache);
            let res = run_residues(&s, &RunOptions { k_max, backend }, &cache)?;
            info!(
                "cache: residues {:?}, power {:?}; {:.1} ms",
                res.cache.residues, res.cache.power, res.elapsed_ms
            );
            let dir = out
                .or_else(|| s.output.dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("orbizeta-out"));
            let files = write_artifact(&res.artifact, &dir, &s.output.formats)?;
            print!("{}", residue_table(&res.artifact));
            println!("spec {}", res.artifact.spec_hash);
            for f in files {
                println!("wrote {}", f.display());
            }
            if res.artifact.oracle.status == OracleStatus::Error {
                warn!("oracle: {}", res.artifact.oracle.message.as_deref().unwrap_or(""));
            }
            Ok(())
        }
        Cmd::Verify { spec, k_max, out } => {
            let s = load_spec(&spec)?;
            let cache = open_cache(cli.no_cache);
            let opts = RunOptions { k_max, backend: None };
            let result = run_verify(&s, &opts, &cache);
            // the comparison table is useful on failure too
            let shown = match &result {
                Ok(r) => Some(r.artifact.clone()),
                Err(CliError::Verify { .. }) => run_residues(&s, &opts, &cache).ok().map(|r| r.artifact),
                Err(_) => None,
            };
            if let Some(a) = &shown {
                if let Some(dir) = &out {
                    write_artifact(a, dir, &s.output.formats)?;
                }
                if a.oracle.status == OracleStatus::Skipped {
                    warn!(
                        "verification skipped: {}",
                        a.oracle.message.as_deref().unwrap_or("oracle unavailable")
                    );
                    println!("verify: skipped");
                } else {
                    print!("{}", comparison_table(a, &a.oracle));
                    println!(
                        "verify: {} ({} of {} comparisons within tolerance)",
                        if a.oracle.failures() == 0 { "passed" } else { "failed" },
                        a.oracle.checked() - a.oracle.failures(),
                        a.oracle.checked()
                    );
                }
            }
            result.map(|_| ())
        }
        Cmd::Strata { spec } => {
            let s = load_spec(&spec)?;
            print_json(&run_strata(&s)?);
            Ok(())
        }
        Cmd::Oracle { spec, gamma } => {
            let s = load_spec(&spec)?;
            print_json(&run_oracle_for(&s, &gamma)?);
            Ok(())
        }
        Cmd::Cache { clear } => {
            let cache = open_cache(false);
            let Some(root) = cache.root().map(|p| p.to_path_buf()) else {
                println!("cache disabled");
                return Ok(());
            };
            if clear {
                let n = cache.clear().map_err(|e| CliError::io(format!("clearing {}", root.display()), e))?;
                println!("removed {n} entries from {}", root.display());
            } else {
                println!("{}", root.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
