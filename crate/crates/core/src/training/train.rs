use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{adam_step, loss_total, AdamState, Checkpoint, StepBatch, TrainError, TrainingConfig};
use crate::config::ExperimentConfig;
use crate::coords::sample_queries;
use crate::data::{make_train_pair, normalize, scaled_dims, DatasetStats, FieldPair, Modality};
use crate::kv::format_sig;
use crate::models::{ModelBundle, ShapeConfig};
use crate::tensor::Tape;

pub const METRICS_CSV_HEADER: &str = "epoch,step,scale,loss_total,loss_self,loss_cross,loss_latent,lr";

/// Optimiser state plus the number of completed epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub adam: AdamState<f32>,
    pub epoch: usize,
}

impl TrainState {
    pub fn new(bundle: &ModelBundle<f32>) -> Self {
        Self { adam: AdamState::new(&bundle.params), epoch: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub scale: f64,
    pub total: f64,
    pub self_term: f64,
    pub cross_term: f64,
    pub latent_term: f64,
    pub lr: f64,
}

impl StepRecord {
    /// One metrics CSV row, without the newline.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.step,
            format_sig(self.scale),
            format_sig(self.total),
            format_sig(self.self_term),
            format_sig(self.cross_term),
            format_sig(self.latent_term),
            format_sig(self.lr)
        )
    }
}

/// Mean losses over one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub total: f64,
    pub self_term: f64,
    pub cross_term: f64,
    pub latent_term: f64,
    pub lr: f64,
}

/// Hooks called by [`train`]. Returning an error stops training.
pub trait TrainObserver {
    fn on_step(&mut self, _record: &StepRecord) -> Result<(), TrainError> {
        Ok(())
    }

    /// Called after `state.epoch` has been advanced past `summary.epoch`.
    fn on_epoch(
        &mut self,
        _summary: &EpochSummary,
        _bundle: &ModelBundle<f32>,
        _state: &TrainState,
    ) -> Result<(), TrainError> {
        Ok(())
    }
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

/// Per-modality min-max normalization of every pair.
pub fn normalize_pairs(pairs: &[FieldPair], stats: &DatasetStats) -> Result<Vec<FieldPair>, TrainError> {
    pairs
        .iter()
        .map(|p| {
            let m0 = normalize(p.get(Modality::M0), &stats.get(Modality::M0))?;
            let m1 = normalize(p.get(Modality::M1), &stats.get(Modality::M1))?;
            Ok(FieldPair::new(m0, m1)?)
        })
        .collect()
}

/// Visiting order of the training samples in `epoch`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5348_5546_464c_4521);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn step_rng(seed: u64, epoch: usize, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 24) | step as u64);
    rng
}

/// Batch for (`epoch`, `step`) built from one normalized sample: a scale
/// drawn from the configured range, a crop shared by both modalities, and
/// `k` query positions shared by both targets. Returns the batch, the scale
/// and the step seed.
pub fn build_step_batch(
    sample: &FieldPair,
    shape: &ShapeConfig,
    cfg: &TrainingConfig,
    epoch: usize,
    step: usize,
) -> Result<(StepBatch<f32>, f64, u64), TrainError> {
    let mut rng = step_rng(cfg.seed, epoch, step);
    let scale = if cfg.scale_max > cfg.scale_min { rng.gen_range(cfg.scale_min..=cfg.scale_max) } else { cfg.scale_min };
    let step_seed: u64 = rng.gen();
    let hr_dims = (shape.h_h, shape.w_h);
    let (sh, sw) = scaled_dims(shape.h_h, shape.w_h, scale);
    let k = cfg.queries_per_step.min(sh * sw);
    let query_seed = step_seed.rotate_left(17) ^ 0x9e37_79b9_7f4a_7c15;
    let mut hr = Vec::with_capacity(2);
    let mut targets = Vec::with_capacity(2);
    let mut queries = None;
    for m in Modality::ALL {
        let pair = make_train_pair(sample.get(m), m, hr_dims, scale, step_seed)?;
        let (q, t) = sample_queries(&pair.sr, k, query_seed)?;
        hr.push(pair.hr.to_tensor());
        targets.push(t);
        queries.get_or_insert(q);
    }
    let batch = StepBatch {
        hr: hr.try_into().expect("two modalities"),
        queries: queries.expect("two modalities"),
        targets: targets.try_into().expect("two modalities"),
    };
    Ok((batch, scale, step_seed))
}

/// One optimisation step. Returns the loss values before the update.
fn run_step(
    bundle: &mut ModelBundle<f32>,
    state: &mut TrainState,
    batch: &StepBatch<f32>,
    cfg: &TrainingConfig,
    lr: f64,
) -> Result<[f64; 4], TrainError> {
    let mut tape = Tape::new();
    let p = bundle.params.bind(&mut tape, true);
    let lv = loss_total(bundle, &mut tape, &p, batch, cfg.use_latent_loss)?;
    let vals = [lv.total, lv.self_term, lv.cross_term, lv.latent_term].map(|v| tape.value(v).item() as f64);
    if vals.iter().any(|v| !v.is_finite()) {
        return Ok(vals);
    }
    tape.backward(lv.total)?;
    bundle.params.collect_grads(&mut tape, &p);
    drop(tape);
    adam_step(&mut bundle.params, &mut state.adam, lr, &cfg.adam)?;
    Ok(vals)
}

/// Trains from `state.epoch` up to `cfg.epochs` on normalized `data`.
/// Returns the per-epoch means of the epochs run by this call.
pub fn train(
    bundle: &mut ModelBundle<f32>,
    state: &mut TrainState,
    data: &[FieldPair],
    cfg: &TrainingConfig,
    observer: &mut dyn TrainObserver,
) -> Result<Vec<EpochSummary>, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::Batch("empty training set".into()));
    }
    if data.iter().any(|p| Modality::ALL.iter().any(|&m| !p.get(m).is_normalized())) {
        return Err(TrainError::Batch("training data must be normalized".into()));
    }
    let mut summaries = Vec::new();
    for epoch in state.epoch..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let order = epoch_order(cfg.seed, epoch, data.len());
        let mut sums = [0.0f64; 4];
        for step in 0..cfg.steps_per_epoch {
            let sample = &data[order[step % order.len()]];
            let (batch, scale, _) = build_step_batch(sample, &bundle.shape, cfg, epoch, step)?;
            let vals = run_step(bundle, state, &batch, cfg, lr)?;
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(TrainError::NonFiniteLoss { epoch, step, seed: cfg.seed, scale });
            }
            for (s, v) in sums.iter_mut().zip(vals) {
                *s += v;
            }
            let [total, self_term, cross_term, latent_term] = vals;
            observer.on_step(&StepRecord { epoch, step, scale, total, self_term, cross_term, latent_term, lr })?;
        }
        let n = cfg.steps_per_epoch as f64;
        let summary = EpochSummary {
            epoch,
            total: sums[0] / n,
            self_term: sums[1] / n,
            cross_term: sums[2] / n,
            latent_term: sums[3] / n,
            lr,
        };
        log::info!(
            "epoch {epoch}: loss {:.6e} (self {:.4e}, cross {:.4e}, latent {:.4e})",
            summary.total,
            summary.self_term,
            summary.cross_term,
            summary.latent_term
        );
        state.epoch = epoch + 1;
        observer.on_epoch(&summary, bundle, state)?;
        summaries.push(summary);
    }
    Ok(summaries)
}

/// Writes the metrics CSV and checkpoints into a run directory.
///
/// Checkpoints go to `epoch_NNNNN.wckp` every `checkpoint_every` epochs and
/// after the last epoch.
pub struct RunWriter {
    csv: BufWriter<File>,
    csv_path: PathBuf,
    dir: PathBuf,
    config: ExperimentConfig,
    stats: DatasetStats,
    written: Vec<PathBuf>,
}

impl RunWriter {
    pub const METRICS_FILE: &'static str = "metrics.csv";

    /// Creates `dir` if needed and starts a fresh metrics file, or appends
    /// to an existing one when `append` is set.
    pub fn create(dir: &Path, config: ExperimentConfig, stats: DatasetStats, append: bool) -> Result<Self, TrainError> {
        let io = |path: &Path, e| TrainError::Io { path: path.to_owned(), source: e };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let csv_path = dir.join(Self::METRICS_FILE);
        let fresh = !append || !csv_path.exists();
        let file = fs::OpenOptions::new()
            .create(true)
            .write(true)
            .append(!fresh)
            .truncate(fresh)
            .open(&csv_path)
            .map_err(|e| io(&csv_path, e))?;
        let mut csv = BufWriter::new(file);
        if fresh {
            writeln!(csv, "{METRICS_CSV_HEADER}").map_err(|e| io(&csv_path, e))?;
        }
        Ok(Self { csv, csv_path, dir: dir.to_owned(), config, stats, written: Vec::new() })
    }

    pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
        dir.join(format!("epoch_{epoch:05}.wckp"))
    }

    /// Checkpoints written so far, in order.
    pub fn checkpoints(&self) -> &[PathBuf] {
        &self.written
    }
}

impl TrainObserver for RunWriter {
    fn on_step(&mut self, record: &StepRecord) -> Result<(), TrainError> {
        writeln!(self.csv, "{}", record.csv_row()).map_err(|e| TrainError::Io { path: self.csv_path.clone(), source: e })
    }

    fn on_epoch(&mut self, _summary: &EpochSummary, bundle: &ModelBundle<f32>, state: &TrainState) -> Result<(), TrainError> {
        self.csv.flush().map_err(|e| TrainError::Io { path: self.csv_path.clone(), source: e })?;
        let every = self.config.training.checkpoint_every;
        let last = state.epoch == self.config.training.epochs;
        if last || (every > 0 && state.epoch % every == 0) {
            let path = Self::checkpoint_path(&self.dir, state.epoch);
            Checkpoint::write(&path, &self.config, &self.stats, bundle, state)?;
            self.written.push(path);
        }
        Ok(())
    }
}
