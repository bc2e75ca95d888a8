use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use fxhhw_core::grid::AxisKind;
use fxhhw_core::runner::{self, ExperimentConfig, SliceSpec};
use fxhhw_core::Error;

/// Worker threads for assembly, matrix-vector products, sweeps and Monte Carlo.
const WORKERS_ENV: &str = "FXHHW_WORKERS";

#[derive(Parser)]
#[command(name = "fxhhw", version, about = "RBF-FD pricing of FX options under Heston / Hull-White dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price one experiment and write its reports.
    Run {
        config: PathBuf,
        /// Output directory (defaults to `output.dir`, then `out/<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Refine one axis along a doubling ladder and report the rate of convergence.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value = "s")]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        ladder: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a 2D slice of a solved field as CSV.
    Export {
        /// A run's output directory or its field.csv.
        result: PathBuf,
        #[arg(long, default_value = "sv")]
        slice: String,
        /// Fixed coordinates `s,v,rd,rf`; defaults to `(E, v0, rd0, rf0)` of the run.
        #[arg(long, value_delimiter = ',')]
        at: Option<Vec<f64>>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_axis(s: &str) -> anyhow::Result<AxisKind> {
    Ok(match s {
        "s" => AxisKind::S,
        "v" => AxisKind::V,
        "rd" => AxisKind::Rd,
        "rf" => AxisKind::Rf,
        other => bail!("unknown axis {other:?}; expected s, v, rd or rf"),
    })
}

fn configure_workers() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("{WORKERS_ENV} must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| Path::new("out").join(&cfg.name))
}

fn run(config: &Path, out: Option<PathBuf>) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let output = runner::run_experiment(&cfg)?;
    let dir = out_dir(&cfg, out);
    let files = runner::write_outputs(&output, &cfg, &dir)?;
    print!("{}", runner::format_table(&output.report));
    for f in files {
        log::info!("wrote {}", f.display());
    }
    println!("results in {}", dir.display());
    Ok(())
}

fn sweep(config: &Path, axis: &str, ladder: &[usize], out: Option<PathBuf>) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let axis = parse_axis(axis)?;
    let report = runner::sweep(&cfg, axis, ladder)?;
    let dir = out_dir(&cfg, out);
    runner::write_sweep_outputs(&report, &dir)?;
    print!("{}", runner::format_table(&report));
    println!("results in {}", dir.display());
    Ok(())
}

fn export(result: &Path, slice: &str, at: Option<Vec<f64>>, out: Option<PathBuf>) -> anyhow::Result<()> {
    let spec: SliceSpec = slice.parse()?;
    let (field, meta) = runner::load_result(result)?;
    let fixed = match (at, meta) {
        (Some(v), _) => {
            let Ok(p) = <[f64; 4]>::try_from(v.as_slice()) else {
                bail!("--at needs four values s,v,rd,rf");
            };
            p
        }
        (None, Some(m)) => m.focus,
        (None, None) => bail!("no meta.toml next to the field; pass --at s,v,rd,rf"),
    };
    let rows = runner::surface(&field, spec, fixed)?;
    match out {
        Some(p) => runner::write_surface(&rows, spec, std::fs::File::create(&p)?)?,
        None => runner::write_surface(&rows, spec, std::io::stdout().lock())?,
    }
    Ok(())
}

/// 2 for bad input, 3 when the numerics fail, 1 otherwise.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(
            Error::Config(_)
            | Error::ModelConfig(_)
            | Error::InvalidArgument(_)
            | Error::OutOfDomain { .. }
            | Error::GridDegenerate { .. },
        ) => 2,
        Some(Error::Unstable { .. } | Error::KrylovNotConverged { .. } | Error::Assembly(_) | Error::Conditioning { .. }) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_workers().and_then(|()| match cli.command {
        Command::Run { config, out } => run(&config, out),
        Command::Sweep {
            config,
            axis,
            ladder,
            out,
        } => sweep(&config, &axis, &ladder, out),
        Command::Export { result, slice, at, out } => export(&result, &slice, at, out),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
