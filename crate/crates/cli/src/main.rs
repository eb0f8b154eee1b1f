use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use windsr::data::Modality;
use windsr::metrics::capped;
use windsr_cli::commands::{self, EvalArgs, PlotArgs, PredictArgs, SynthArgs};
use windsr_cli::run_config::parse_scales;
use windsr_cli::CliError;

#[derive(Parser)]
#[command(name = "windsr", version, about = "Continuous super-resolution of gridded wind fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-height dataset with an 80/20 split.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 150)]
        h: usize,
        #[arg(long, default_value_t = 200)]
        w: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replace an existing dataset.
        #[arg(long)]
        force: bool,
    },
    /// Train all eight networks from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on the test split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated, e.g. 1.5,2,2.5,3
        #[arg(long)]
        scales: String,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Super-resolve a single grid.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_modality)]
        source: Modality,
        #[arg(long, value_parser = parse_modality)]
        target: Modality,
        #[arg(long)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a grid as an 8-bit PGM heatmap.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        max: Option<f64>,
    },
}

fn parse_modality(s: &str) -> Result<Modality, String> {
    let i: usize = s.parse().map_err(|_| format!("expected 0 or 1, got {s:?}"))?;
    Modality::try_from(i).map_err(|e| e.to_string())
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::SynthData { out, count, h, w, seed, force } => {
            let (train, test) = commands::synth_data(&SynthArgs { out: out.clone(), count, h, w, seed, force })?;
            println!("wrote {train} train / {test} test pairs to {}", out.display());
        }
        Command::Train { config, resume } => {
            let outcome = commands::train(&config, resume.as_deref())?;
            if let Some(last) = outcome.epochs.last() {
                println!(
                    "epoch {}: loss {:.6e} (self {:.6e}, cross {:.6e}, latent {:.6e})",
                    last.epoch, last.total, last.self_term, last.cross_term, last.latent_term
                );
            }
            for p in &outcome.checkpoints {
                println!("checkpoint {}", p.display());
            }
        }
        Command::Eval { ckpt, data, scales, csv } => {
            let scales = parse_scales(&scales).map_err(CliError::Invalid)?;
            let records = commands::eval(&EvalArgs { ckpt, data, scales, csv: csv.clone() })?;
            for r in &records {
                println!(
                    "s={:<5} {}->{} {:<5} psnr {:7.3} dB  ssim {:.5}",
                    r.scale,
                    r.source,
                    r.target,
                    r.mode.to_string(),
                    capped(r.psnr),
                    r.ssim
                );
            }
            println!("wrote {}", csv.display());
        }
        Command::Predict { ckpt, input, source, target, scale, out } => {
            let grid = commands::predict(&PredictArgs { ckpt, input, source, target, scale, out: out.clone() })?;
            let (c, h, w) = grid.dims();
            println!("wrote {c}×{h}×{w} grid to {}", out.display());
        }
        Command::Plot { input, out, min, max } => {
            commands::plot(&PlotArgs { input, out: out.clone(), min, max })?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
