//! The five verbs, as functions over plain arguments.

use std::fs;
use std::path::{Path, PathBuf};

use windsr::data::{
    denormalize, load_grid, load_split, load_stats, normalize, save_grid, scaled_dims, split_counts, synth_wind,
    write_dataset, FieldPair, Modality, Split, WindGrid, MAX_SCALE, MIN_SCALE, STATS_FILE,
};
use windsr::metrics::{evaluate, write_eval_csv, EvalRecord};
use windsr::models::ModelBundle;
use windsr::training::{normalize_pairs, train as run_training, Checkpoint, EpochSummary, RunWriter, TrainState};

use crate::error::{invalid, CliError};
use crate::plot::render_pgm;
use crate::run_config::RunConfig;

#[derive(Clone, Debug)]
pub struct SynthArgs {
    pub out: PathBuf,
    pub count: usize,
    pub h: usize,
    pub w: usize,
    pub seed: u64,
    pub force: bool,
}

/// Seed of the `i`-th synthesized sample.
pub fn sample_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Writes `count` field pairs and returns the (train, test) counts.
pub fn synth_data(args: &SynthArgs) -> Result<(usize, usize), CliError> {
    let (n_train, n_test) = split_counts(args.count).map_err(|e| invalid(e.to_string()))?;
    if args.h < 8 || args.w < 8 {
        return Err(invalid(format!("fields must be at least 8×8, got {}×{}", args.h, args.w)));
    }
    let occupied = fs::read_dir(&args.out).map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied {
        if !args.force {
            return Err(invalid(format!("{} exists and is not empty (use --force to overwrite)", args.out.display())));
        }
        for split in [Split::Train, Split::Test] {
            let dir = args.out.join(split.name());
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
            }
        }
    }
    let pairs = (0..args.count)
        .map(|i| {
            let (m0, m1) = synth_wind(sample_seed(args.seed, i), args.h, args.w)?;
            FieldPair::new(m0, m1)
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_dataset(&args.out, &pairs, n_train)?;
    Ok((n_train, n_test))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochSummary>,
    pub checkpoints: Vec<PathBuf>,
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{what} not found: {}", path.display())))
    }
}

/// Trains per the run config, optionally continuing from a checkpoint.
pub fn train(config: &Path, resume: Option<&Path>) -> Result<TrainOutcome, CliError> {
    let cfg = RunConfig::load(config)?;
    let exp = &cfg.experiment;
    let stats_path = cfg.data_dir.join(STATS_FILE);
    require_file(&stats_path, "dataset statistics")?;
    let stats = load_stats(&stats_path)?;
    let raw = load_split(&cfg.data_dir, Split::Train)?;
    if raw.is_empty() {
        return Err(invalid(format!("no training samples under {}", cfg.data_dir.display())));
    }
    let (fh, fw) = (raw[0].get(Modality::M0).height(), raw[0].get(Modality::M0).width());
    let (sh, sw) = scaled_dims(exp.shape.h_h, exp.shape.w_h, exp.training.scale_max);
    if sh > fh || sw > fw {
        return Err(invalid(format!(
            "scale {} needs {sh}×{sw} crops but the fields are {fh}×{fw}",
            exp.training.scale_max
        )));
    }
    let (mut bundle, mut state) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            if ck.config.shape != exp.shape || ck.config.arch != exp.arch {
                return Err(invalid(format!("{} was trained with a different model shape", path.display())));
            }
            (ck.bundle, ck.state)
        }
        None => {
            let mut b = ModelBundle::new(exp.shape, exp.arch.clone())?;
            b.init(exp.training.seed);
            let s = TrainState::new(&b);
            (b, s)
        }
    };
    let data = normalize_pairs(&raw, &stats)?;
    let mut writer = RunWriter::create(&cfg.out_dir, exp.clone(), stats, resume.is_some())?;
    let epochs = run_training(&mut bundle, &mut state, &data, &exp.training, &mut writer)?;
    Ok(TrainOutcome { epochs, checkpoints: writer.checkpoints().to_vec() })
}

#[derive(Clone, Debug)]
pub struct EvalArgs {
    pub ckpt: PathBuf,
    pub data: PathBuf,
    pub scales: Vec<f64>,
    pub csv: PathBuf,
}

pub fn eval(args: &EvalArgs) -> Result<Vec<EvalRecord>, CliError> {
    if args.scales.is_empty() {
        return Err(invalid("scale list is empty"));
    }
    let ck = Checkpoint::load(&args.ckpt)?;
    let t = &ck.config.training;
    for &s in &args.scales {
        if !(t.scale_min..=t.scale_max).contains(&s) {
            log::warn!("scale {s} lies outside the trained range [{}, {}]", t.scale_min, t.scale_max);
        }
    }
    let raw = load_split(&args.data, Split::Test)?;
    let test = normalize_pairs(&raw, &ck.stats)?;
    let shape = ck.bundle.shape;
    let records = evaluate(&ck.bundle, &test, (shape.h_h, shape.w_h), &args.scales)?;
    let mut buf = Vec::new();
    write_eval_csv(&records, &mut buf).map_err(|e| CliError::io(&args.csv, e))?;
    fs::write(&args.csv, buf).map_err(|e| CliError::io(&args.csv, e))?;
    Ok(records)
}

#[derive(Clone, Debug)]
pub struct PredictArgs {
    pub ckpt: PathBuf,
    pub input: PathBuf,
    pub source: Modality,
    pub target: Modality,
    pub scale: f64,
    pub out: PathBuf,
}

/// Super-resolves one grid and writes it in m/s.
pub fn predict(args: &PredictArgs) -> Result<WindGrid, CliError> {
    if !(MIN_SCALE..=MAX_SCALE).contains(&args.scale) {
        return Err(invalid(format!("scale {} outside [{MIN_SCALE}, {MAX_SCALE}]", args.scale)));
    }
    let ck = Checkpoint::load(&args.ckpt)?;
    let input = load_grid(&args.input)?;
    let shape = ck.bundle.shape;
    let expected = (shape.c_h, shape.h_h, shape.w_h);
    if input.dims() != expected {
        return Err(invalid(format!(
            "{}: expected a {}×{}×{} grid, got {:?}",
            args.input.display(),
            expected.0,
            expected.1,
            expected.2,
            input.dims()
        )));
    }
    let x = if input.is_normalized() { input } else { normalize(&input, &ck.stats.get(args.source))? };
    let (oh, ow) = scaled_dims(shape.h_h, shape.w_h, args.scale);
    let pred = ck.bundle.predict(&x, args.source, args.target, oh, ow)?;
    let out = denormalize(&pred, &ck.stats.get(args.target))?;
    save_grid(&out, &args.out)?;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct PlotArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

pub fn plot(args: &PlotArgs) -> Result<(), CliError> {
    if let (Some(lo), Some(hi)) = (args.min, args.max) {
        if lo >= hi {
            return Err(invalid(format!("--min {lo} must be below --max {hi}")));
        }
    }
    let grid = load_grid(&args.input)?;
    let img = render_pgm(&grid, args.min, args.max)?;
    fs::write(&args.out, img).map_err(|e| CliError::io(&args.out, e))
}
