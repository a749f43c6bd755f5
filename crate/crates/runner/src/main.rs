use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use env_logger::Env;
use log::info;

use evoshift::{acceptance, emit_results, load_config, run, Mode};

/// Selection-mutation dynamics under a shifting, periodically fluctuating optimum.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the scenarios described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scenarios executed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Override `scenario.mode`.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Run the built-in acceptance criteria and print a pass/fail table.
    Check {
        /// Only these criteria (1-11).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(Env::default().filter_or("EVOSHIFT_LOG", "error")).init();
    match do_main(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn do_main(args: Args) -> Result<bool> {
    match args.command {
        Command::Run { config, out, jobs, mode } => {
            let mut cfg = load_config(&config)?;
            if let Some(m) = mode {
                cfg.scenario.mode = m;
                cfg.validate()?;
            }
            let out_dir = out
                .or_else(|| cfg.output_dir.as_ref().map(|d| cfg.base_dir.join(d)))
                .unwrap_or_else(|| PathBuf::from("evoshift-out"));
            let summary = run(&cfg, &out_dir, jobs).context("run failed")?;
            let files = emit_results(&summary, &out_dir).context("writing results")?;
            info!("wrote {} files under {}", files.len(), out_dir.display());
            for s in &summary.scenarios {
                match &s.error {
                    None => println!("{:<24} ok      {:.2} s {}", s.id, s.seconds, s.verdict.as_deref().unwrap_or("")),
                    Some(e) => println!("{:<24} FAILED  {e}", s.id),
                }
            }
            println!("summary: {}", out_dir.join("summary.json").display());
            Ok(summary.all_ok())
        }
        Command::Check { only } => {
            let ids: Vec<usize> = if only.is_empty() { (1..=acceptance::CRITERIA).collect() } else { only };
            if let Some(bad) = ids.iter().find(|i| !(1..=acceptance::CRITERIA).contains(*i)) {
                anyhow::bail!("no criterion {bad}; valid ids are 1-{}", acceptance::CRITERIA);
            }
            let mut all = true;
            for id in ids {
                let o = acceptance::criterion(id);
                println!("{}", o.line());
                all &= o.passed;
            }
            Ok(all)
        }
    }
}
