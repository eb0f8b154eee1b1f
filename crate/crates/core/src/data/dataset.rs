use std::fs;
use std::path::{Path, PathBuf};

use super::{load_grid, save_grid, DataError, DatasetStats, Modality, NormStats, WindGrid};
use crate::kv::{format_sig, KvDoc};

pub const STATS_FILE: &str = "stats.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// The same instant observed at both heights.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPair {
    pub fields: [WindGrid; 2],
}

impl FieldPair {
    pub fn new(m0: WindGrid, m1: WindGrid) -> Result<Self, DataError> {
        if m0.dims() != m1.dims() {
            return Err(DataError::Shape(format!("modality extents differ: {:?} vs {:?}", m0.dims(), m1.dims())));
        }
        Ok(Self { fields: [m0, m1] })
    }

    pub fn get(&self, m: Modality) -> &WindGrid {
        &self.fields[m.index()]
    }
}

/// `(n_train, n_test)` with 80% of the samples for training.
pub fn split_counts(n: usize) -> Result<(usize, usize), DataError> {
    if n < 2 {
        return Err(DataError::Dataset(format!("need at least 2 samples to split, got {n}")));
    }
    let train = (n * 4 / 5).clamp(1, n - 1);
    Ok((train, n - train))
}

pub fn grid_path(root: &Path, split: Split, m: Modality, index: usize) -> PathBuf {
    root.join(split.name()).join(m.to_string()).join(format!("{index}.wgrd"))
}

/// Per-modality min/max over `pairs`.
pub fn compute_stats(pairs: &[FieldPair]) -> Result<DatasetStats, DataError> {
    if pairs.is_empty() {
        return Err(DataError::Dataset("no samples to compute statistics from".into()));
    }
    let mut per = [(f32::INFINITY, f32::NEG_INFINITY); 2];
    for p in pairs {
        for m in Modality::ALL {
            for &v in p.get(m).values() {
                let e = &mut per[m.index()];
                e.0 = e.0.min(v);
                e.1 = e.1.max(v);
            }
        }
    }
    Ok(DatasetStats { per_modality: [NormStats::new(per[0].0, per[0].1)?, NormStats::new(per[1].0, per[1].1)?] })
}

pub fn save_stats(stats: &DatasetStats, path: &Path) -> Result<(), DataError> {
    let mut text = String::from("# per-modality min/max over the training split, m/s\n");
    for m in Modality::ALL {
        let s = stats.get(m);
        text.push_str(&format!("m{m}.min = {}\nm{m}.max = {}\n", format_sig(s.min as f64), format_sig(s.max as f64)));
    }
    fs::write(path, text).map_err(|e| DataError::io(path, e))
}

pub fn load_stats(path: &Path) -> Result<DatasetStats, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut doc = KvDoc::parse(&text)?;
    let mut read = |m: Modality| -> Result<NormStats, DataError> {
        let min: f64 = doc.require(&format!("m{m}.min"))?;
        let max: f64 = doc.require(&format!("m{m}.max"))?;
        NormStats::new(min as f32, max as f32)
    };
    let per_modality = [read(Modality::M0)?, read(Modality::M1)?];
    doc.finish()?;
    Ok(DatasetStats { per_modality })
}

/// Writes `pairs` under `root`: the first `n_train` to `train/`, the rest to
/// `test/`, plus training-split statistics in `stats.txt`.
pub fn write_dataset(root: &Path, pairs: &[FieldPair], n_train: usize) -> Result<DatasetStats, DataError> {
    if n_train == 0 || n_train >= pairs.len() {
        return Err(DataError::Dataset(format!("train count {n_train} must lie in [1, {})", pairs.len())));
    }
    let stats = compute_stats(&pairs[..n_train])?;
    for (split, chunk) in [(Split::Train, &pairs[..n_train]), (Split::Test, &pairs[n_train..])] {
        for m in Modality::ALL {
            let dir = root.join(split.name()).join(m.to_string());
            fs::create_dir_all(&dir).map_err(|e| DataError::io(&dir, e))?;
        }
        for (i, p) in chunk.iter().enumerate() {
            for m in Modality::ALL {
                save_grid(p.get(m), grid_path(root, split, m, i))?;
            }
        }
    }
    save_stats(&stats, &root.join(STATS_FILE))?;
    Ok(stats)
}

fn count_grids(dir: &Path) -> Result<usize, DataError> {
    let entries = fs::read_dir(dir).map_err(|e| DataError::io(dir, e))?;
    let mut n = 0;
    for e in entries {
        let e = e.map_err(|err| DataError::io(dir, err))?;
        if e.path().extension().is_some_and(|x| x == "wgrd") {
            n += 1;
        }
    }
    Ok(n)
}

/// Loads every sample of a split, in index order.
pub fn load_split(root: &Path, split: Split) -> Result<Vec<FieldPair>, DataError> {
    let n0 = count_grids(&root.join(split.name()).join("0"))?;
    let n1 = count_grids(&root.join(split.name()).join("1"))?;
    if n0 != n1 {
        return Err(DataError::Dataset(format!("{} split has {n0} grids for modality 0 but {n1} for 1", split.name())));
    }
    (0..n0)
        .map(|i| {
            FieldPair::new(
                load_grid(grid_path(root, split, Modality::M0, i))?,
                load_grid(grid_path(root, split, Modality::M1, i))?,
            )
        })
        .collect()
}
