use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use mwgan::eval::{
    evaluate_run, export_surface, thread_count, value_surface, write_metrics, GridSpec, SurfaceFormat,
};
use mwgan::mmot::{solve_dual_free, solve_dual_shared, solve_primal, MmotInstance};
use mwgan::mwgan::{load_checkpoint, train, DatasetRef, TrainConfig};
use mwgan::toydata::write_csv;
use mwgan::{verify, Error, Result};

#[derive(Parser)]
#[command(name = "mwgan", version, about = "Multi-marginal WGAN toy workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Primal,
    DualFree,
    DualShared,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Svg,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a toy dataset to CSV.
    GenData {
        /// Dataset name ("seven-gaussians"), toy config object, or train config.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a discrete multi-marginal transport instance and print JSON.
    SolveMmot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Include the optimal coupling (primal mode).
        #[arg(long)]
        coupling: bool,
    },
    /// Train a model and write checkpoints into the run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute metrics for the latest checkpoint of a run.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the critic value surface.
    Surface {
        #[arg(long)]
        run: PathBuf,
        /// lo:hi:n, applied to both axes.
        #[arg(long, default_value = "-2.5:2.5:201", allow_hyphen_values = true)]
        grid: String,
        #[arg(long, value_enum, default_value = "svg")]
        format: Format,
        #[arg(long)]
        out: PathBuf,
        /// Overlay the source and target samples (SVG only).
        #[arg(long)]
        scatter: bool,
    },
    /// Run the theory suite.
    Verify,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn gen_data(config: &Path, out: &Path) -> Result<()> {
    let text = read(config)?;
    let dataset = match serde_json::from_str::<DatasetRef>(&text) {
        Ok(d) => d,
        Err(_) => TrainConfig::from_json(&text)?.dataset,
    };
    let toy = dataset.resolve()?;
    let data = toy.generate()?;
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    write_csv(&out.join("data.csv"), &data)?;
    let cfg_path = out.join("toy_config.json");
    let cfg_text = serde_json::to_string_pretty(&toy).expect("serializable");
    fs::write(&cfg_path, cfg_text + "\n").map_err(|e| Error::Io { path: cfg_path, source: e })?;
    println!("wrote {} domains to {}", data.len(), out.join("data.csv").display());
    Ok(())
}

fn solve(input: &Path, mode: Mode, coupling: bool) -> Result<()> {
    let mut inst: MmotInstance = parse_json(input, &read(input)?)?;
    inst.tuple_cap = mwgan::mmot::DEFAULT_TUPLE_CAP;
    let out = match mode {
        Mode::Primal => {
            let p = solve_primal(&inst)?;
            let mut v = json!({"mode": "primal", "objective": p.optimal_cost});
            if coupling {
                v["coupling"] = serde_json::to_value(&p.coupling).expect("serializable");
            }
            v
        }
        Mode::DualFree | Mode::DualShared => {
            let (name, d) = match mode {
                Mode::DualFree => ("dual-free", solve_dual_free(&inst)?),
                _ => ("dual-shared", solve_dual_shared(&inst)?),
            };
            json!({
                "mode": name,
                "objective": d.objective,
                "potentials": d.potentials,
                "active_constraints": d.active_constraints,
            })
        }
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    Ok(())
}

fn run_train(config: &Path, out: &Path) -> Result<()> {
    let cfg = TrainConfig::from_json(&read(config)?)?;
    let data = cfg.toy()?.generate()?;
    let summary = train(&cfg, data, out)?;
    println!(
        "trained {} generator steps; checkpoint {}",
        summary.steps,
        summary.checkpoints.last().expect("final checkpoint").display()
    );
    Ok(())
}

fn surface(run: &Path, grid: &str, format: Format, out: &Path, scatter: bool) -> Result<()> {
    let spec: GridSpec = grid.parse()?;
    let (config, models, _) = load_checkpoint(run)?;
    let grid = value_surface(&models.critic, &spec, thread_count()?)?;
    let points = if scatter {
        Some(config.toy()?.generate()?.into_iter().flat_map(|d| d.points).collect::<Vec<_>>())
    } else {
        None
    };
    let format = match format {
        Format::Csv => SurfaceFormat::Csv,
        Format::Svg => SurfaceFormat::Svg,
    };
    export_surface(&grid, format, out, points.as_deref())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenData { config, out } => gen_data(&config, &out),
        Command::SolveMmot { input, mode, coupling } => solve(&input, mode, coupling),
        Command::Train { config, out } => run_train(&config, &out),
        Command::Eval { run, out } => evaluate_run(&run).and_then(|m| {
            write_metrics(&out, &m)?;
            println!("mean W2 {:.4}, max W2 {:.4}", m.mean_w2(), m.max_w2());
            Ok(())
        }),
        Command::Surface { run, grid, format, out, scatter } => surface(&run, &grid, format, &out, scatter),
        Command::Verify => {
            let results = verify::run_suite();
            for r in &results {
                println!("{}", r.line());
            }
            if results.iter().all(|r| r.passed) {
                Ok(())
            } else {
                return ExitCode::from(3);
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
