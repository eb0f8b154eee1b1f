//! Run configuration: model and training settings plus where to read data
//! and write results.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use windsr::config::ExperimentConfig;
use windsr::kv::{format_sig, KvDoc, KvError};

use crate::error::CliError;

pub const DEFAULT_EVAL_SCALES: [f64; 4] = [1.5, 2.0, 2.5, 3.0];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub eval_scales: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("run"),
            eval_scales: DEFAULT_EVAL_SCALES.to_vec(),
        }
    }
}

/// Comma-separated scale list, each within the supported range.
pub fn parse_scales(text: &str) -> Result<Vec<f64>, String> {
    let scales = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("bad scale {s:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if scales.is_empty() {
        return Err("scale list is empty".into());
    }
    if let Some(s) = scales.iter().find(|s| !(windsr::data::MIN_SCALE..=windsr::data::MAX_SCALE).contains(*s)) {
        return Err(format!("scale {s} outside [{}, {}]", windsr::data::MIN_SCALE, windsr::data::MAX_SCALE));
    }
    Ok(scales)
}

impl RunConfig {
    /// Parses `text`. Relative directories are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, KvError> {
        let defaults = Self::default();
        let mut doc = KvDoc::parse(text)?;
        let experiment = ExperimentConfig::read_kv(&mut doc, &defaults.experiment)?;
        let data_dir = doc.get::<PathBuf>("data_dir")?.unwrap_or(defaults.data_dir);
        let out_dir = doc.get::<PathBuf>("out_dir")?.unwrap_or(defaults.out_dir);
        let eval_scales = match doc.get::<String>("eval_scales")? {
            Some(list) => parse_scales(&list).map_err(|m| doc.invalid("eval_scales", m))?,
            None => defaults.eval_scales,
        };
        doc.finish()?;
        Ok(Self { experiment, data_dir: base.join(data_dir), out_dir: base.join(out_dir), eval_scales })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::parse(&text, base).map_err(|source| CliError::Config { path: path.to_owned(), source })?;
        cfg.experiment.validate().map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> String {
        let mut out = self.experiment.to_kv();
        let scales: Vec<String> = self.eval_scales.iter().map(|&s| format_sig(s)).collect();
        writeln!(out, "data_dir = {}", self.data_dir.display()).expect("write to string");
        writeln!(out, "out_dir = {}", self.out_dir.display()).expect("write to string");
        writeln!(out, "eval_scales = {}", scales.join(",")).expect("write to string");
        out
    }
}
