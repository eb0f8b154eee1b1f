use std::fs;
use std::path::Path;

use super::DataError;
use crate::tensor::Tensor;

/// Wind velocity component carried by a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    /// Northern projection.
    U,
    /// Eastern projection.
    V,
}

impl Component {
    fn code(self) -> u8 {
        match self {
            Component::U => 0,
            Component::V => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Component::U),
            1 => Some(Component::V),
            _ => None,
        }
    }
}

/// One of the two modalities: wind at a lower (`M0`) or upper (`M1`) height.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    M0,
    M1,
}

impl Modality {
    pub const ALL: [Modality; 2] = [Modality::M0, Modality::M1];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> Self {
        match self {
            Modality::M0 => Modality::M1,
            Modality::M1 => Modality::M0,
        }
    }
}

impl TryFrom<usize> for Modality {
    type Error = DataError;

    fn try_from(v: usize) -> Result<Self, DataError> {
        match v {
            0 => Ok(Modality::M0),
            1 => Ok(Modality::M1),
            _ => Err(DataError::UnknownModality(v)),
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.index())
    }
}

/// A `c×h×w` field of wind-velocity values with its modality metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct WindGrid {
    c: usize,
    h: usize,
    w: usize,
    values: Vec<f32>,
    height_m: f32,
    component: Component,
    normalized: bool,
}

impl WindGrid {
    pub fn new(
        c: usize,
        h: usize,
        w: usize,
        values: Vec<f32>,
        height_m: f32,
        component: Component,
    ) -> Result<Self, DataError> {
        if values.len() != c * h * w {
            return Err(DataError::Shape(format!("{c}×{h}×{w} grid needs {} values, got {}", c * h * w, values.len())));
        }
        if !(height_m > 0.0 && height_m.is_finite()) {
            return Err(DataError::Shape(format!("height above ground must be positive, got {height_m}")));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { index });
        }
        Ok(Self { c, h, w, values, height_m, component, normalized: false })
    }

    /// Same metadata as `self`, new values and extents.
    pub fn with_values(&self, c: usize, h: usize, w: usize, values: Vec<f32>) -> Result<Self, DataError> {
        let mut g = Self::new(c, h, w, values, self.height_m, self.component)?;
        g.normalized = self.normalized;
        Ok(g)
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn height_m(&self) -> f32 {
        self.height_m
    }

    pub fn component(&self) -> Component {
        self.component
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub(crate) fn set_normalized(&mut self, v: bool) {
        self.normalized = v;
    }

    pub fn set_height_m(&mut self, height_m: f32) -> Result<(), DataError> {
        if !(height_m > 0.0 && height_m.is_finite()) {
            return Err(DataError::Shape(format!("height above ground must be positive, got {height_m}")));
        }
        self.height_m = height_m;
        Ok(())
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.values[(c * self.h + y) * self.w + x]
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new(vec![self.c, self.h, self.w], self.values.clone()).expect("grid extents match values")
    }

    /// Sub-window `[y0, y0+h) × [x0, x0+w)` of every channel.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Self, DataError> {
        if y0 + h > self.h || x0 + w > self.w {
            return Err(DataError::CropTooLarge { crop: (h, w), source_dims: (self.h, self.w) });
        }
        let mut out = Vec::with_capacity(self.c * h * w);
        for c in 0..self.c {
            for y in y0..y0 + h {
                let row = (c * self.h + y) * self.w;
                out.extend_from_slice(&self.values[row + x0..row + x0 + w]);
            }
        }
        self.with_values(self.c, h, w, out)
    }
}

pub const MAGIC: &[u8; 4] = b"WGRD";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

/// Encodes a grid in the WGRD layout: a 32-byte little-endian header
/// (magic, version, c, h, w, height_m as f32, component code, normalized
/// flag, six zero bytes) followed by row-major f32 values.
pub fn encode_grid(grid: &WindGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [grid.c, grid.h, grid.w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&grid.height_m.to_le_bytes());
    out.push(grid.component.code());
    out.push(u8::from(grid.normalized));
    out.extend_from_slice(&[0u8; 6]);
    for v in &grid.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

pub fn decode_grid(bytes: &[u8]) -> Result<WindGrid, DataError> {
    if bytes.len() < HEADER_LEN {
        return Err(DataError::Truncated { expected: HEADER_LEN, got: bytes.len() });
    }
    if &bytes[..4] != MAGIC {
        return Err(DataError::BadMagic { found: bytes[..4].try_into().expect("four bytes") });
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(DataError::Header { offset: 4, msg: format!("unsupported version {version}") });
    }
    let (c, h, w) = (u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize, u32_at(bytes, 16) as usize);
    let height_m = f32::from_le_bytes(bytes[20..24].try_into().expect("four bytes"));
    let component = Component::from_code(bytes[24])
        .ok_or_else(|| DataError::Header { offset: 24, msg: format!("unknown component code {}", bytes[24]) })?;
    let normalized = match bytes[25] {
        0 => false,
        1 => true,
        other => return Err(DataError::Header { offset: 25, msg: format!("bad normalization flag {other}") }),
    };
    let count = c
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .ok_or_else(|| DataError::Header { offset: 8, msg: format!("extents {c}×{h}×{w} overflow") })?;
    let expected = HEADER_LEN + 4 * count;
    if bytes.len() < expected {
        return Err(DataError::Truncated { expected, got: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(DataError::Header {
            offset: expected,
            msg: format!("{} trailing bytes after payload", bytes.len() - expected),
        });
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("four bytes")))
        .collect();
    let mut grid = WindGrid::new(c, h, w, values, height_m, component).map_err(|e| match e {
        DataError::NonFinite { index } => DataError::NonFiniteAt { index, offset: HEADER_LEN + 4 * index },
        other => other,
    })?;
    grid.normalized = normalized;
    Ok(grid)
}

pub fn save_grid(grid: &WindGrid, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, encode_grid(grid)).map_err(|e| DataError::io(path, e))
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<WindGrid, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_grid(&bytes).map_err(|e| DataError::InFile { path: path.to_path_buf(), source: Box::new(e) })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn sample() -> WindGrid {
        WindGrid::new(1, 2, 2, vec![1.5, -2.25, 0.0, 7.125], 60.0, Component::V).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.wgrd");
        let mut g = sample();
        g.normalized = true;
        save_grid(&g, &path).unwrap();
        let back = load_grid(&path).unwrap();
        assert_eq!(back, g);
        assert_eq!(encode_grid(&back), fs::read(&path).unwrap());
    }

    #[test]
    fn file_size_is_header_plus_payload() {
        assert_eq!(encode_grid(&sample()).len(), 32 + 16);
    }

    #[test]
    fn header_layout() {
        let b = encode_grid(&sample());
        assert_eq!(&b[..4], b"WGRD");
        assert_eq!(u32_at(&b, 4), 1);
        assert_eq!((u32_at(&b, 8), u32_at(&b, 12), u32_at(&b, 16)), (1, 2, 2));
        assert_eq!(f32::from_le_bytes(b[20..24].try_into().unwrap()), 60.0);
        assert_eq!(b[24], 1);
        assert_eq!(&b[26..32], &[0; 6]);
        assert_eq!(f32::from_le_bytes(b[32..36].try_into().unwrap()), 1.5);
    }

    #[test]
    fn corrupted_inputs_are_rejected() {
        let good = encode_grid(&sample());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode_grid(&bad), Err(DataError::BadMagic { .. })));
        assert!(matches!(decode_grid(&good[..40]), Err(DataError::Truncated { expected: 48, got: 40 })));
        assert!(matches!(decode_grid(&good[..10]), Err(DataError::Truncated { .. })));
        let mut nan = good.clone();
        nan[40..44].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_grid(&nan), Err(DataError::NonFiniteAt { index: 2, offset: 40 })));
        let mut long = good;
        long.push(0);
        assert!(matches!(decode_grid(&long), Err(DataError::Header { offset: 48, .. })));
    }

    #[test]
    fn construction_validates() {
        assert!(WindGrid::new(1, 2, 2, vec![0.0; 3], 60.0, Component::U).is_err());
        assert!(WindGrid::new(1, 1, 1, vec![0.0], 0.0, Component::U).is_err());
        assert!(matches!(
            WindGrid::new(1, 1, 2, vec![0.0, f32::INFINITY], 60.0, Component::U),
            Err(DataError::NonFinite { index: 1 })
        ));
        assert!(Modality::try_from(2).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(h in 1usize..6, w in 1usize..6, seed in any::<u32>(), height in 1.0f32..300.0) {
            let values: Vec<f32> = (0..h * w).map(|i| ((i as u32).wrapping_mul(seed) as f32).sin() * 12.0).collect();
            let g = WindGrid::new(1, h, w, values, height, Component::U).unwrap();
            prop_assert_eq!(decode_grid(&encode_grid(&g)).unwrap(), g);
        }
    }
}
