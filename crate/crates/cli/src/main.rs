//! `ribaucour` command-line front end.
//!
//! Exit codes: 0 when every check passes, 1 on a verification failure,
//! 2 on bad input (scene, flags, expressions, I/O).

mod run;
mod scene;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ribaucour::chart::ChartError;
use ribaucour::Error;
use serde::Serialize;

use crate::run::Outcome;
use crate::scene::{parse_grid, Prepared, Scene};

#[derive(Debug, Parser)]
#[command(name = "ribaucour", version, about = "Ribaucour transforms of Legendre surfaces in Lie sphere geometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Frame certification, regularity sweep and the Ribaucour closedness test.
    Check(Common),
    /// Transform with all identity gates; writes meshes, CSV and a JSON report.
    Transform(Common),
    /// Demoulin family from `tau` and `tau1`, with optional dual-family step.
    Demoulin(Common),
    /// Jet derivatives against central differences (expected order 2).
    Oracle(Common),
    /// Meshes, CSV and report without gating.
    Export(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Scene file (JSON).
    #[arg(long)]
    scene: PathBuf,
    /// Grid size override, e.g. 64x64.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<[usize; 2]>,
    /// Comma-separated family angles in radians.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Option<Vec<f64>>,
    /// Output directory for artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Project from the pole (0, 0, 0, -1) instead.
    #[arg(long)]
    pole_flip: bool,
    /// Print the report as JSON instead of PASS/FAIL lines.
    #[arg(long)]
    json: bool,
}

/// Errors caused by the input rather than by the geometry.
#[derive(Debug)]
pub struct InputError(String);

impl InputError {
    pub fn new(msg: &str) -> Self {
        InputError(msg.to_string())
    }
}

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn is_input_error(e: &anyhow::Error) -> bool {
    if e.downcast_ref::<InputError>().is_some() || e.downcast_ref::<std::io::Error>().is_some() {
        return true;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Parse(_) | Error::Eval(_) | Error::InvalidStep(_) | Error::StencilOutOfDomain { .. }) => true,
        Some(Error::GridTooSmall(..)) => true,
        Some(Error::Chart(c)) => !matches!(c, ChartError::Frame(_)),
        _ => false,
    }
}

fn prepare(c: &Common) -> anyhow::Result<Prepared> {
    let mut scene = Scene::load(&c.scene)?;
    if let Some(g) = c.grid {
        scene.grid = g;
    }
    if let Some(t) = &c.theta {
        scene.thetas = Some(t.clone());
    }
    scene.pole_flip |= c.pole_flip;
    scene.prepare()
}

fn emit<R: Serialize>(outcome: &Outcome<R>, json: bool) -> anyhow::Result<ExitCode> {
    if json {
        println!("{}", serde_json::to_string_pretty(outcome)?);
    } else {
        print!("{}", outcome.render_text());
    }
    Ok(ExitCode::from(if outcome.pass { 0 } else { 1 }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Check(c) | Command::Transform(c) | Command::Demoulin(c) | Command::Oracle(c) | Command::Export(c) => c,
    };
    let p = match prepare(common) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Check(c) => run::check(&p).and_then(|o| emit(&o, c.json)),
        Command::Transform(c) => run::transform_cmd(&p, &c.out).and_then(|o| emit(&o, c.json)),
        Command::Export(c) => run::export(&p, &c.out).and_then(|o| emit(&o, c.json)),
        Command::Oracle(c) => run::oracle(&p).and_then(|o| emit(&o, c.json)),
        Command::Demoulin(c) => {
            let thetas = p.scene.thetas.clone().unwrap_or_else(run::default_thetas);
            run::demoulin(&p, &thetas, &c.out).and_then(|o| emit(&o, c.json))
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let input = is_input_error(&e);
            eprintln!("{}: {e:#}", if input { "error" } else { "FAIL" });
            ExitCode::from(if input { 2 } else { 1 })
        }
    }
}
