use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fleet_cbf::scenario::{parse_config, run, summarize_dir, write_outputs, ConfigError, RunOptions};

const EXIT_CONFIG: u8 = 2;
const EXIT_SAFETY_ABORT: u8 = 3;

#[derive(Parser)]
#[command(name = "fleet-sim", version, about = "Simulate UAV/UGV fleets under CBF safety filters")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write its logs.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Virtual duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Also write the message trace.
        #[arg(long)]
        trace: bool,
    },
    /// Check a scenario file and list every violation.
    Validate { config: PathBuf },
    /// Recompute metrics from a run's output directory.
    Summarize { out_dir: PathBuf },
}

fn load(path: &PathBuf) -> Result<String, ExitCode> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })
}

fn report(err: &ConfigError) -> ExitCode {
    for v in &err.violations {
        eprintln!("{}: {}", v.code, v.message);
    }
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Validate { config } => {
            let text = match load(&config) {
                Ok(t) => t,
                Err(code) => return code,
            };
            match parse_config(&text) {
                Ok(c) => {
                    println!("ok: {} pairs, {} s", c.n_pairs(), c.duration);
                    ExitCode::SUCCESS
                }
                Err(e) => report(&e),
            }
        }
        Cmd::Run { config, seed, duration, out_dir, trace } => {
            let text = match load(&config) {
                Ok(t) => t,
                Err(code) => return code,
            };
            let mut cfg = match parse_config(&text) {
                Ok(c) => c,
                Err(e) => return report(&e),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = duration {
                cfg.duration = d;
            }
            if let Err(e) = fleet_cbf::scenario::validate(&cfg) {
                return report(&e);
            }
            let out = run(&cfg, RunOptions { trace });
            if let Err(e) = write_outputs(&out_dir, &cfg, &out) {
                eprintln!("{}: {e}", out_dir.display());
                return ExitCode::FAILURE;
            }
            println!("{}", serde_json::to_string_pretty(&out.summary).expect("summary serializes"));
            match &out.abort {
                Some(a) => {
                    eprintln!("safety abort at t={}: {}", a.t, a.reason);
                    ExitCode::from(EXIT_SAFETY_ABORT)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Cmd::Summarize { out_dir } => match summarize_dir(&out_dir) {
            Ok(s) => {
                println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
                if s.telemetry_mismatches > 0 {
                    eprintln!("{} logged values disagree with recomputation", s.telemetry_mismatches);
                    return ExitCode::FAILURE;
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::FAILURE
            }
        },
    }
}
