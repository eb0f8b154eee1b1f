//! Model and training settings as flat `key = value` text, shared by run
//! configs and the checkpoint header.

use std::fmt::Write as _;

use crate::kv::KvDoc;
use crate::kv::KvError;
use crate::models::{ArchConfig, ShapeConfig};
use crate::training::{TrainError, TrainingConfig};

/// Everything needed to rebuild and retrain a model bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub shape: ShapeConfig,
    pub arch: ArchConfig,
    pub training: TrainingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { shape: ShapeConfig::desk(), arch: ArchConfig::default(), training: TrainingConfig::default() }
    }
}

fn read<T: std::str::FromStr>(doc: &mut KvDoc, key: &str, slot: &mut T) -> Result<(), KvError>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = doc.get(key)? {
        *slot = v;
    }
    Ok(())
}

impl ExperimentConfig {
    /// Every field, one per line. Floats use the shortest exact form.
    pub fn to_kv(&self) -> String {
        let (s, a, t) = (&self.shape, &self.arch, &self.training);
        let widths: Vec<String> = a.stage_widths.iter().map(usize::to_string).collect();
        let mut out = String::new();
        let mut line = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to string");
        line("shape.c_h", s.c_h.to_string());
        line("shape.h_h", s.h_h.to_string());
        line("shape.w_h", s.w_h.to_string());
        line("shape.c_l", s.c_l.to_string());
        line("shape.h_l", s.h_l.to_string());
        line("shape.w_l", s.w_l.to_string());
        line("shape.c_f", s.c_f.to_string());
        line("arch.stage_widths", widths.join(","));
        line("arch.res_blocks", a.res_blocks.to_string());
        line("arch.res_scale", a.res_scale.to_string());
        line("arch.mlp_layers", a.mlp_layers.to_string());
        line("arch.mlp_width", a.mlp_width.to_string());
        line("train.epochs", t.epochs.to_string());
        line("train.lr", t.lr.to_string());
        line("train.gamma", t.gamma.to_string());
        line("train.weight_decay", t.adam.weight_decay.to_string());
        line("train.beta1", t.adam.beta1.to_string());
        line("train.beta2", t.adam.beta2.to_string());
        line("train.eps", t.adam.eps.to_string());
        line("train.queries_per_step", t.queries_per_step.to_string());
        line("train.steps_per_epoch", t.steps_per_epoch.to_string());
        line("train.seed", t.seed.to_string());
        line("train.scale_min", t.scale_min.to_string());
        line("train.scale_max", t.scale_max.to_string());
        line("train.checkpoint_every", t.checkpoint_every.to_string());
        line("train.use_latent_loss", t.use_latent_loss.to_string());
        out
    }

    /// Reads the keys this type owns from `doc`; absent keys keep the value
    /// from `base`. The caller decides whether leftovers are an error.
    pub fn read_kv(doc: &mut KvDoc, base: &Self) -> Result<Self, KvError> {
        let mut c = base.clone();
        let (s, a, t) = (&mut c.shape, &mut c.arch, &mut c.training);
        read(doc, "shape.c_h", &mut s.c_h)?;
        read(doc, "shape.h_h", &mut s.h_h)?;
        read(doc, "shape.w_h", &mut s.w_h)?;
        read(doc, "shape.c_l", &mut s.c_l)?;
        read(doc, "shape.h_l", &mut s.h_l)?;
        read(doc, "shape.w_l", &mut s.w_l)?;
        read(doc, "shape.c_f", &mut s.c_f)?;
        if let Some(list) = doc.get::<String>("arch.stage_widths")? {
            let parsed: Result<Vec<usize>, _> = list.split(',').map(|v| v.trim().parse::<usize>()).collect();
            a.stage_widths = parsed.map_err(|e| doc.invalid("arch.stage_widths", e.to_string()))?;
        }
        read(doc, "arch.res_blocks", &mut a.res_blocks)?;
        read(doc, "arch.res_scale", &mut a.res_scale)?;
        read(doc, "arch.mlp_layers", &mut a.mlp_layers)?;
        read(doc, "arch.mlp_width", &mut a.mlp_width)?;
        read(doc, "train.epochs", &mut t.epochs)?;
        read(doc, "train.lr", &mut t.lr)?;
        read(doc, "train.gamma", &mut t.gamma)?;
        read(doc, "train.weight_decay", &mut t.adam.weight_decay)?;
        read(doc, "train.beta1", &mut t.adam.beta1)?;
        read(doc, "train.beta2", &mut t.adam.beta2)?;
        read(doc, "train.eps", &mut t.adam.eps)?;
        read(doc, "train.queries_per_step", &mut t.queries_per_step)?;
        read(doc, "train.steps_per_epoch", &mut t.steps_per_epoch)?;
        read(doc, "train.seed", &mut t.seed)?;
        read(doc, "train.scale_min", &mut t.scale_min)?;
        read(doc, "train.scale_max", &mut t.scale_max)?;
        read(doc, "train.checkpoint_every", &mut t.checkpoint_every)?;
        read(doc, "train.use_latent_loss", &mut t.use_latent_loss)?;
        Ok(c)
    }

    /// Parses a complete document, rejecting unknown keys.
    pub fn parse(text: &str, base: &Self) -> Result<Self, KvError> {
        let mut doc = KvDoc::parse(text)?;
        let c = Self::read_kv(&mut doc, base)?;
        doc.finish()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let depth = self.shape.depth()?;
        if self.arch.stage_widths.len() != depth {
            return Err(TrainError::Config(format!(
                "{} stage widths given but the shape needs {depth} downsampling stages",
                self.arch.stage_widths.len()
            )));
        }
        if self.arch.stage_widths.contains(&0) || self.arch.mlp_width == 0 {
            return Err(TrainError::Config("layer widths must be positive".into()));
        }
        self.training.validate()
    }
}
