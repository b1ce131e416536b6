use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use twistlab_cli::config::{GridConfig, Params, TubeConfig, OUT_ENV};
use twistlab_cli::{run, sweep, ResultRecord, RunConfig, Task};
use twistlab_core::{CrossSection, TwistProfile};

#[derive(Parser)]
#[command(name = "twistlab", version, about = "Spectral and heat-flow experiments on twisted tubes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config file.
    Run { config: PathBuf },
    /// Run a config once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// Config leaf or alias: beta, w, L, I_epsilon, section_h, h_coarse, h_fine, n, c_h, seed, ...
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Run the inequality suite on the default grids.
    Check {
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn print_record(r: &ResultRecord) {
    println!("{} -> {}", r.task, r.output_dir.display());
    for inv in &r.invariants {
        let mark = if inv.passed { "ok  " } else { "FAIL" };
        println!("  [{mark}] {} {}", inv.name, inv.detail);
    }
}

fn check_config(seeds: usize, seed: u64) -> RunConfig {
    let pi = std::f64::consts::PI;
    RunConfig {
        task: Task::Inequalities,
        seed,
        output: Some(PathBuf::from("twistlab-out").join("check")),
        workers: None,
        tube: TubeConfig {
            section: CrossSection::square(pi),
            twist: TwistProfile::Zero,
            half_length: 8.0,
        },
        grid: GridConfig {
            section_h: pi / 16.0,
            h_coarse: 0.125,
            h_fine: None,
            ratio: None,
        },
        params: Params {
            seeds: Some(seeds),
            ..Params::default()
        },
    }
}

fn main_inner() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let r = run(&cfg)?;
            print_record(&r);
            Ok(r.passed())
        }
        Command::Sweep { config, axis, values } => {
            let cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let root = cfg.output_dir();
            let s = sweep(&cfg, &axis, &values, &root)?;
            for e in &s.entries {
                println!("{axis}={} {}", e.value, e.status);
            }
            println!("summary: {}", root.join("sweep_summary.csv").display());
            Ok(s.passed())
        }
        Command::Check { seeds, seed } => {
            let cfg = check_config(seeds, seed);
            if std::env::var_os(OUT_ENV).is_none() {
                eprintln!("writing to {}", cfg.output_dir().display());
            }
            let r = run(&cfg)?;
            print_record(&r);
            Ok(r.passed())
        }
    }
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
