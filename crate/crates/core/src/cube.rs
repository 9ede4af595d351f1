//! Hyperspectral cubes: BSQ raw I/O with a plain-text sidecar header,
//! global min-max normalization and synthetic test cubes.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// A `width × height × bands` cube stored band-sequentially:
/// sample `(x, y, band)` lives at `band·width·height + y·width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    width: usize,
    height: usize,
    bands: usize,
    data: Vec<f32>,
    value_range: (f32, f32),
}

impl HyperCube {
    pub fn new(width: usize, height: usize, bands: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::Dimension(format!(
                "cube dimensions must be positive, got {width}x{height}x{bands}"
            )));
        }
        let expected = width * height * bands;
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "{width}x{height}x{bands} cube needs {expected} samples, got {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dimension(format!("sample {index} is not finite")));
        }
        let value_range = data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        Ok(Self {
            width,
            height,
            bands,
            data,
            value_range,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// `(min, max)` over every sample.
    pub fn value_range(&self) -> (f32, f32) {
        self.value_range
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.bands)
    }

    /// One band as a row-major `width × height` image.
    pub fn band(&self, band: usize) -> &[f32] {
        let plane = self.pixels();
        &self.data[band * plane..(band + 1) * plane]
    }

    pub fn get(&self, x: usize, y: usize, band: usize) -> f32 {
        self.data[band * self.pixels() + y * self.width + x]
    }

    /// Spectrum of the pixel with row-major index `pixel`.
    pub fn spectrum(&self, pixel: usize) -> impl Iterator<Item = f32> + '_ {
        let plane = self.pixels();
        (0..self.bands).map(move |b| self.data[b * plane + pixel])
    }

    /// Builds a cube from pixel-interleaved rows (`pixels × bands`, one
    /// spectrum per row), the layout the network produces.
    pub fn from_pixel_rows(width: usize, height: usize, bands: usize, rows: &[f32]) -> Result<Self> {
        let plane = width * height;
        if rows.len() != plane * bands {
            return Err(Error::Dimension(format!(
                "expected {} pixel-row samples, got {}",
                plane * bands,
                rows.len()
            )));
        }
        let mut data = vec![0.0f32; plane * bands];
        for (p, spectrum) in rows.chunks_exact(bands).enumerate() {
            for (b, &v) in spectrum.iter().enumerate() {
                data[b * plane + p] = v;
            }
        }
        Self::new(width, height, bands, data)
    }
}

/// Raw value range recorded by [`normalize`] so that [`denormalize`] can
/// restore physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleInfo {
    pub raw_min: f32,
    pub raw_max: f32,
}

impl ScaleInfo {
    pub fn new(raw_min: f32, raw_max: f32) -> Result<Self> {
        if !(raw_min.is_finite() && raw_max.is_finite()) || raw_max < raw_min {
            return Err(Error::Config(format!("invalid scale range ({raw_min}, {raw_max})")));
        }
        Ok(Self { raw_min, raw_max })
    }

    /// The unit range, under which normalization is the identity.
    pub fn identity() -> Self {
        Self {
            raw_min: 0.0,
            raw_max: 1.0,
        }
    }

    pub fn span(&self) -> f64 {
        self.raw_max as f64 - self.raw_min as f64
    }
}

/// Global min-max normalization into `[0, 1]`. A constant cube maps to all
/// zeros and its value is kept in the returned scale.
pub fn normalize(cube: &HyperCube) -> (HyperCube, ScaleInfo) {
    let (lo, hi) = cube.value_range;
    let scale = ScaleInfo {
        raw_min: lo,
        raw_max: hi,
    };
    (normalize_with(cube, scale), scale)
}

/// Maps `cube` through a fixed `scale`, clamping to `[0, 1]`. Used to put a
/// reconstruction on the same footing as its original.
pub fn normalize_with(cube: &HyperCube, scale: ScaleInfo) -> HyperCube {
    let span = scale.span();
    let lo = scale.raw_min as f64;
    let data = if span > 0.0 {
        cube.data
            .iter()
            .map(|&v| (((v as f64 - lo) / span) as f32).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; cube.data.len()]
    };
    HyperCube::new(cube.width, cube.height, cube.bands, data).expect("normalization preserves shape")
}

/// Inverse of [`normalize`]: `v·(raw_max − raw_min) + raw_min`.
pub fn denormalize(cube: &HyperCube, scale: ScaleInfo) -> HyperCube {
    let span = scale.span();
    let lo = scale.raw_min as f64;
    let data = cube.data.iter().map(|&v| (v as f64 * span + lo) as f32).collect();
    HyperCube::new(cube.width, cube.height, cube.bands, data).expect("denormalization preserves shape")
}

/// Minimal ENVI-style sidecar describing a `.raw` file.
///
/// ```text
/// width = 145
/// height = 145
/// bands = 220
/// interleave = bsq
/// dtype = f32le
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CubeHeader {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
}

impl CubeHeader {
    pub fn for_cube(cube: &HyperCube) -> Self {
        Self {
            width: cube.width,
            height: cube.height,
            bands: cube.bands,
        }
    }

    pub fn byte_len(&self) -> u64 {
        (self.width * self.height * self.bands * 4) as u64
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for CubeHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "width = {}", self.width)?;
        writeln!(f, "height = {}", self.height)?;
        writeln!(f, "bands = {}", self.bands)?;
        writeln!(f, "interleave = bsq")?;
        writeln!(f, "dtype = f32le")
    }
}

impl FromStr for CubeHeader {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (mut width, mut height, mut bands) = (None, None, None);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            // A leading "ENVI" marker line is tolerated.
            if line.is_empty() || line.starts_with('#') || line.eq_ignore_ascii_case("envi") {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Header(format!("line {}: expected key = value", lineno + 1)))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            let dim = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::Header(format!("{key}: not a count: {v:?}")))
            };
            match key.as_str() {
                "width" | "samples" => width = Some(dim(value)?),
                "height" | "lines" => height = Some(dim(value)?),
                "bands" => bands = Some(dim(value)?),
                "interleave" if !value.eq_ignore_ascii_case("bsq") => {
                    return Err(Error::Header(format!("unsupported interleave {value:?}")));
                }
                "dtype" if !value.eq_ignore_ascii_case("f32le") => {
                    return Err(Error::Header(format!("unsupported dtype {value:?}")));
                }
                _ => {}
            }
        }
        let header = CubeHeader {
            width: width.ok_or_else(|| Error::Header("missing width".into()))?,
            height: height.ok_or_else(|| Error::Header("missing height".into()))?,
            bands: bands.ok_or_else(|| Error::Header("missing bands".into()))?,
        };
        if header.width == 0 || header.height == 0 || header.bands == 0 {
            return Err(Error::Header(format!(
                "zero dimension in {}x{}x{}",
                header.width, header.height, header.bands
            )));
        }
        Ok(header)
    }
}

/// Sidecar header path for a raw data file (`cube.raw` → `cube.hdr`).
pub fn header_path(data_path: impl AsRef<Path>) -> PathBuf {
    data_path.as_ref().with_extension("hdr")
}

/// Reads a little-endian f32 BSQ file whose shape is given by `header`.
pub fn load_cube(data_path: impl AsRef<Path>, header: &CubeHeader) -> Result<HyperCube> {
    let path = data_path.as_ref();
    if header.width == 0 || header.height == 0 || header.bands == 0 {
        return Err(Error::Header("zero dimension".into()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() as u64 != header.byte_len() {
        return Err(Error::SizeMismatch {
            expected: header.byte_len(),
            actual: bytes.len() as u64,
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    HyperCube::new(header.width, header.height, header.bands, data)
}

/// Reads `data_path` using the `.hdr` sidecar next to it.
pub fn read_cube(data_path: impl AsRef<Path>) -> Result<HyperCube> {
    let data_path = data_path.as_ref();
    let header = CubeHeader::read(header_path(data_path))?;
    load_cube(data_path, &header)
}

/// Writes the raw samples to `data_path` and the sidecar header next to it.
pub fn save_cube(cube: &HyperCube, data_path: impl AsRef<Path>) -> Result<()> {
    let data_path = data_path.as_ref();
    let mut bytes = Vec::with_capacity(cube.data.len() * 4);
    for v in &cube.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(data_path, bytes).map_err(|e| Error::io(data_path, e))?;
    CubeHeader::for_cube(cube).write(header_path(data_path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// Band `k` holds `(x/(w−1) + y/(h−1) + k/c) / 3`.
    SmoothGradient,
    /// Spatial sinusoid with a seed-dependent frequency and a per-band phase.
    BandSinusoid,
    /// Independent uniform samples in `[0, 1)`.
    Random,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth-gradient" => Ok(SynthKind::SmoothGradient),
            "band-sinusoid" => Ok(SynthKind::BandSinusoid),
            "random" => Ok(SynthKind::Random),
            other => Err(Error::Config(format!("unknown synthetic cube kind {other:?}"))),
        }
    }
}

fn unit_coord(i: usize, n: usize) -> f64 {
    if n > 1 {
        i as f64 / (n - 1) as f64
    } else {
        0.0
    }
}

/// Deterministic synthetic cube; every sample lies in `[0, 1]`.
pub fn synth_cube(kind: SynthKind, width: usize, height: usize, bands: usize, seed: u64) -> Result<HyperCube> {
    if width == 0 || height == 0 || bands == 0 {
        return Err(Error::Dimension("synthetic cube dimensions must be positive".into()));
    }
    let plane = width * height;
    let mut data = vec![0.0f32; plane * bands];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SynthKind::SmoothGradient => {
            for k in 0..bands {
                for y in 0..height {
                    for x in 0..width {
                        let v = (unit_coord(x, width) + unit_coord(y, height) + k as f64 / bands as f64) / 3.0;
                        data[k * plane + y * width + x] = v.clamp(0.0, 1.0) as f32;
                    }
                }
            }
        }
        SynthKind::BandSinusoid => {
            let fx: f64 = rng.gen_range(0.5..2.0);
            let fy: f64 = rng.gen_range(0.5..2.0);
            for k in 0..bands {
                let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let amp = 0.25 + 0.2 * k as f64 / bands as f64;
                for y in 0..height {
                    for x in 0..width {
                        let arg =
                            std::f64::consts::TAU * (fx * unit_coord(x, width) + fy * unit_coord(y, height)) + phase;
                        data[k * plane + y * width + x] = (0.5 + amp * arg.sin()).clamp(0.0, 1.0) as f32;
                    }
                }
            }
        }
        SynthKind::Random => {
            for v in data.iter_mut() {
                *v = rng.gen::<f32>();
            }
        }
    }
    HyperCube::new(width, height, bands, data)
}
