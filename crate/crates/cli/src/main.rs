use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use pbdw_core::experiment::{Experiment, ExperimentConfig};
use pbdw_core::materials::Lattice;
use pbdw_core::rom::ModelTag;
use pbdw_core::Error;

#[derive(Parser, Debug)]
#[command(name = "pbdw", version, about = "Power-map reconstruction experiments")]
struct Cli {
    /// Experiment config (JSON); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's out_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for snapshot generation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve one model on one parameter lattice and store the snapshots.
    Snapshots {
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long, value_enum)]
        set: Set,
    },
    /// Run Case 1 (transport reduced model) or Case 2 (diffusion reduced model).
    Case {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        id: u8,
    },
    /// Case 2 with noisy observations.
    NoiseSweep {
        /// Comma-separated noise levels.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Print the resolved configuration and problem sizes.
    Info,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Model {
    Transport,
    Diffusion,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Set {
    Training,
    Test,
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim(), 2),
    };
    match run(cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = match e.kind() {
                "usage" | "config" => 2,
                _ => 1,
            };
            fail(e.kind(), &e.to_string(), code)
        }
    }
}

fn run(cli: Cli) -> pbdw_core::Result<String> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.out.is_some() {
        cfg.out_dir = cli.out.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if cfg.threads == Some(0) {
        return Err(Error::Usage("--threads must be at least 1".into()));
    }
    let ex = Experiment::new(cfg)?;
    let out_dir = ex.config().out_dir.clone();

    let value = match cli.cmd {
        Cmd::Snapshots { model, set } => {
            let model = match model {
                Model::Transport => ModelTag::Transport,
                Model::Diffusion => ModelTag::Diffusion,
            };
            let lattice = match set {
                Set::Training => Lattice::Training,
                Set::Test => Lattice::Test,
            };
            let s = ex.generate_snapshots(model, lattice)?;
            let k = s.k_eff();
            json!({
                "model": model,
                "set": lattice,
                "count": s.len(),
                "k_eff_min": k.iter().copied().fold(f64::INFINITY, f64::min),
                "k_eff_max": k.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                "dir": out_dir.map(|d| d.join("snapshots").join(format!("{}_{}", model, lattice.name()))),
            })
        }
        Cmd::Case { id } => {
            let r = ex.run_case(id)?;
            if out_dir.is_none() {
                return Ok(r.to_csv().trim_end().to_string());
            }
            let best = r
                .rows
                .iter()
                .filter(|row| row.err_wc.is_finite())
                .min_by(|a, b| a.err_wc.total_cmp(&b.err_wc));
            json!({
                "case": id,
                "csv": out_dir.map(|d| d.join(format!("case{id}.csv"))),
                "rows": r.rows.len(),
                "basis_rank": r.meta.basis_rank,
                "flagged_rows": r.meta.flagged_rows,
                "min_err_wc": best.map(|b| b.err_wc),
                "argmin_n": best.map(|b| b.n),
                "seconds": r.meta.seconds,
            })
        }
        Cmd::NoiseSweep { eps, seeds } => {
            let eps = eps.unwrap_or_else(|| ex.config().noise.eps.clone());
            let seeds = seeds.unwrap_or(ex.config().noise.seeds);
            let r = ex.sweep_noise(&eps, seeds)?;
            if out_dir.is_none() {
                return Ok(r.to_csv().trim_end().to_string());
            }
            let violations = r.rows.iter().filter(|row| row.err_wc > row.bound).count();
            json!({
                "csv": out_dir.map(|d| d.join("noise_sweep.csv")),
                "rows": r.rows.len(),
                "eps_model": r.rows.first().map(|row| row.eps_model),
                "bound_violations": violations,
            })
        }
        Cmd::Info => {
            let mesh = ex.mesh();
            json!({
                "config": ex.config(),
                "mesh": { "nx": mesh.nx(), "ny": mesh.ny(), "dx": mesh.dx(), "dy": mesh.dy(), "cells": mesh.ncells() },
                "regions": mesh.regions().iter().map(|r| r.name()).collect::<Vec<_>>(),
                "sensors": ex.sensors().m(),
                "directions": ex.quadrature().len(),
                "training_points": ex.config().training_set.points().len(),
                "test_points": ex.config().test_set.points().len(),
            })
        }
    };
    Ok(serde_json::to_string_pretty(&value)?)
}
