use std::fs;
use std::path::Path;

use super::{AdamState, TrainError, TrainState};
use crate::config::ExperimentConfig;
use crate::data::{DatasetStats, Modality, NormStats};
use crate::kv::{format_sig, KvDoc};
use crate::models::ModelBundle;
use crate::nn::ParamRegistry;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained bundle with everything needed to resume or evaluate it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub stats: DatasetStats,
    pub bundle: ModelBundle<f32>,
    pub state: TrainState,
}

fn header_text(config: &ExperimentConfig, stats: &DatasetStats) -> String {
    let mut text = config.to_kv();
    for m in Modality::ALL {
        let s = stats.get(m);
        text.push_str(&format!("stats.m{m}.min = {}\n", format_sig(s.min as f64)));
        text.push_str(&format!("stats.m{m}.max = {}\n", format_sig(s.max as f64)));
    }
    text
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("checkpoint field fits in u32").to_le_bytes());
}

/// Name, shape and little-endian payload of every tensor, in registry order.
fn put_blocks(out: &mut Vec<u8>, names: &[&str], tensors: &[&Tensor<f32>]) {
    put_u32(out, tensors.len());
    for (name, t) in names.iter().zip(tensors) {
        put_u32(out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(out, t.ndim());
        for &d in t.shape() {
            put_u32(out, d);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            TrainError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// Reads one block list and checks it against `reg` entry by entry.
    fn blocks(&mut self, reg: &ParamRegistry<f32>, what: &str) -> Result<Vec<Tensor<f32>>, TrainError> {
        let n = self.u32()?;
        if n != reg.len() {
            return Err(TrainError::Checkpoint(format!("{what}: {n} blocks for {} parameters", reg.len())));
        }
        let mut out = Vec::with_capacity(n);
        for (name, expected) in reg.iter() {
            let len = self.u32()?;
            let got = std::str::from_utf8(self.take(len)?)
                .map_err(|_| TrainError::Checkpoint(format!("{what}: parameter name is not UTF-8")))?;
            if got != name {
                return Err(TrainError::Checkpoint(format!("{what}: expected parameter `{name}`, found `{got}`")));
            }
            let ndim = self.u32()?;
            let shape = (0..ndim).map(|_| self.u32()).collect::<Result<Vec<_>, _>>()?;
            if shape != expected.shape() {
                return Err(TrainError::Checkpoint(format!(
                    "{what}: `{name}` has shape {shape:?}, model expects {:?}",
                    expected.shape()
                )));
            }
            let count = expected.len();
            let raw = self.take(count.checked_mul(4).expect("tensor size"))?;
            let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            out.push(Tensor::new(shape, data)?);
        }
        Ok(out)
    }
}

impl Checkpoint {
    pub fn encode(config: &ExperimentConfig, stats: &DatasetStats, bundle: &ModelBundle<f32>, state: &TrainState) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let header = header_text(config, stats);
        put_u32(&mut out, header.len());
        out.extend_from_slice(header.as_bytes());
        let names: Vec<&str> = bundle.params.iter().map(|(n, _)| n).collect();
        let values: Vec<&Tensor<f32>> = bundle.params.iter().map(|(_, t)| t).collect();
        put_blocks(&mut out, &names, &values);
        put_blocks(&mut out, &names, &state.adam.m.iter().collect::<Vec<_>>());
        put_blocks(&mut out, &names, &state.adam.v.iter().collect::<Vec<_>>());
        out.extend_from_slice(&state.adam.t.to_le_bytes());
        out.extend_from_slice(&(state.epoch as u64).to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(TrainError::Checkpoint(format!("bad magic {magic:?}")));
        }
        let version = r.u32()? as u32;
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::Checkpoint(format!("unsupported version {version}")));
        }
        let len = r.u32()?;
        let text = std::str::from_utf8(r.take(len)?).map_err(|_| TrainError::Checkpoint("header is not UTF-8".into()))?;
        let mut doc = KvDoc::parse(text)?;
        let config = ExperimentConfig::read_kv(&mut doc, &ExperimentConfig::default())?;
        let mut stat = |m: Modality| -> Result<NormStats, TrainError> {
            let min: f32 = doc.require(&format!("stats.m{m}.min"))?;
            let max: f32 = doc.require(&format!("stats.m{m}.max"))?;
            Ok(NormStats::new(min, max)?)
        };
        let stats = DatasetStats { per_modality: [stat(Modality::M0)?, stat(Modality::M1)?] };
        doc.finish()?;
        config.validate()?;

        let mut bundle = ModelBundle::new(config.shape, config.arch.clone())?;
        let values = r.blocks(&bundle.params, "parameters")?;
        let m = r.blocks(&bundle.params, "first moments")?;
        let v = r.blocks(&bundle.params, "second moments")?;
        let t = r.u64()?;
        let epoch = r.u64()? as usize;
        if r.pos != bytes.len() {
            return Err(TrainError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let ids: Vec<_> = bundle.params.ids().collect();
        for (id, value) in ids.into_iter().zip(values) {
            *bundle.params.get_mut(id) = value;
        }
        let state = TrainState { adam: AdamState { m, v, t }, epoch };
        Ok(Self { config, stats, bundle, state })
    }

    pub fn write(
        path: &Path,
        config: &ExperimentConfig,
        stats: &DatasetStats,
        bundle: &ModelBundle<f32>,
        state: &TrainState,
    ) -> Result<(), TrainError> {
        fs::write(path, Self::encode(config, stats, bundle, state))
            .map_err(|e| TrainError::Io { path: path.to_owned(), source: e })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        Self::write(path, &self.config, &self.stats, &self.bundle, &self.state)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let bytes = fs::read(path).map_err(|e| TrainError::Io { path: path.to_owned(), source: e })?;
        Self::decode(&bytes).map_err(|e| TrainError::Checkpoint(format!("{}: {e}", path.display())))
    }
}
