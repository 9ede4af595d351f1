//! The `.hsin` bitstream and reconstruction.
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset | size | field                                  |
//! |-------:|-----:|----------------------------------------|
//! | 0      | 4    | magic `HSIN`                           |
//! | 4      | 1    | format version (1)                     |
//! | 5      | 3    | reserved, zero                         |
//! | 8      | 2    | width                                  |
//! | 10     | 2    | height                                 |
//! | 12     | 2    | bands                                  |
//! | 14     | 1    | hidden layer count                     |
//! | 15     | 1    | hidden layer width                     |
//! | 16     | 1    | q: 0 = f32 payload, 1 = f16 payload     |
//! | 17     | 4    | raw minimum (f32)                      |
//! | 21     | 4    | raw maximum (f32)                      |
//! | 25     | n·b  | parameters in canonical order          |

use std::fs;
use std::path::Path;

pub use half::f16;

use crate::cube::{denormalize, HyperCube, ScaleInfo};
use crate::nn::mlp_forward_chunked;
use crate::quality;
use crate::sampler::build_grid;
use crate::siren::{param_count, SirenSpec};
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"HSIN";
pub const FORMAT_VERSION: u8 = 1;
/// Bytes before the parameter payload.
pub const HEADER_LEN: usize = 25;

/// Rounds every parameter to binary16 (round to nearest, ties to even).
/// Values outside the finite binary16 range are rejected.
pub fn quantize(params: &[f32]) -> Result<Vec<f16>> {
    params
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if !value.is_finite() || value.abs() > f16::MAX.to_f32() {
                return Err(Error::HalfOverflow { index, value });
            }
            Ok(f16::from_f32(value))
        })
        .collect()
}

/// Exact widening back to f32.
pub fn dequantize(params: &[f16]) -> Vec<f32> {
    params.iter().map(|h| h.to_f32()).collect()
}

#[derive(Debug, Clone)]
pub enum Payload {
    Full(Vec<f32>),
    Half(Vec<f16>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::Full(v) => v.len(),
            Payload::Half(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bits_per_param(&self) -> u32 {
        match self {
            Payload::Full(_) => 32,
            Payload::Half(_) => 16,
        }
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self, Payload::Half(_))
    }

    /// Parameters as f32, dequantizing if needed.
    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            Payload::Full(v) => v.clone(),
            Payload::Half(v) => dequantize(v),
        }
    }
}

impl PartialEq for Payload {
    /// Bitwise comparison.
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Payload::Full(a), Payload::Full(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Payload::Half(a), Payload::Half(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

/// Everything needed to rebuild a cube.
#[derive(Debug, Clone)]
pub struct EncodedImage {
    pub width: u16,
    pub height: u16,
    pub bands: u16,
    pub n_hidden: u8,
    pub hidden_width: u8,
    pub scale: ScaleInfo,
    pub payload: Payload,
}

impl PartialEq for EncodedImage {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bands == other.bands
            && self.n_hidden == other.n_hidden
            && self.hidden_width == other.hidden_width
            && self.scale.raw_min.to_bits() == other.scale.raw_min.to_bits()
            && self.scale.raw_max.to_bits() == other.scale.raw_max.to_bits()
            && self.payload == other.payload
    }
}

fn header_field<T: TryFrom<usize>>(name: &str, value: usize) -> Result<T> {
    T::try_from(value).map_err(|_| Error::Config(format!("{name} = {value} does not fit its header field")))
}

impl EncodedImage {
    /// Packs a trained network; fails when a dimension does not fit its
    /// header field or the payload length disagrees with the shape.
    pub fn new(spec: &SirenSpec, width: usize, height: usize, scale: ScaleInfo, payload: Payload) -> Result<Self> {
        let enc = Self {
            width: header_field("width", width)?,
            height: header_field("height", height)?,
            bands: header_field("bands", spec.out_dim)?,
            n_hidden: header_field("hidden layer count", spec.n_hidden)?,
            hidden_width: header_field("hidden layer width", spec.hidden_width)?,
            scale,
            payload,
        };
        enc.validate()?;
        Ok(enc)
    }

    pub fn spec(&self) -> Result<SirenSpec> {
        SirenSpec::new(self.n_hidden as usize, self.hidden_width as usize, self.bands as usize)
    }

    pub fn quantized(&self) -> bool {
        self.payload.is_quantized()
    }

    pub fn bits_per_param(&self) -> u32 {
        self.payload.bits_per_param()
    }

    pub fn param_count(&self) -> usize {
        self.payload.len()
    }

    /// Serialized size in bytes.
    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.payload.len() * (self.bits_per_param() as usize / 8)
    }

    /// Rate counting parameters only.
    pub fn bpppb(&self) -> f64 {
        quality::bpppb(
            self.param_count(),
            self.bits_per_param(),
            self.width as usize,
            self.height as usize,
            self.bands as usize,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Header(format!("zero image size {}x{}", self.width, self.height)));
        }
        let spec = self.spec().map_err(|e| Error::Header(e.to_string()))?;
        ScaleInfo::new(self.scale.raw_min, self.scale.raw_max).map_err(|e| Error::Header(e.to_string()))?;
        let expected = param_count(&spec);
        if self.payload.len() != expected {
            return Err(Error::Dimension(format!(
                "header describes {expected} parameters, payload has {}",
                self.payload.len()
            )));
        }
        Ok(())
    }
}

pub fn serialize(enc: &EncodedImage) -> Result<Vec<u8>> {
    enc.validate()?;
    let mut out = Vec::with_capacity(enc.byte_len());
    out.extend_from_slice(&MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&[0; 3]);
    out.extend_from_slice(&enc.width.to_le_bytes());
    out.extend_from_slice(&enc.height.to_le_bytes());
    out.extend_from_slice(&enc.bands.to_le_bytes());
    out.push(enc.n_hidden);
    out.push(enc.hidden_width);
    out.push(enc.quantized() as u8);
    out.extend_from_slice(&enc.scale.raw_min.to_le_bytes());
    out.extend_from_slice(&enc.scale.raw_max.to_le_bytes());
    match &enc.payload {
        Payload::Full(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        Payload::Half(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    debug_assert_eq!(out.len(), enc.byte_len());
    Ok(out)
}

pub fn deserialize(bytes: &[u8]) -> Result<EncodedImage> {
    if bytes.len() < 4 {
        return Err(Error::Header(format!(
            "file is {} bytes, too short for a header",
            bytes.len()
        )));
    }
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Header(format!(
            "truncated header: expected {HEADER_LEN} bytes, found {}",
            bytes.len()
        )));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(bytes[4]));
    }
    if bytes[5..8] != [0, 0, 0] {
        return Err(Error::Header("reserved bytes are not zero".into()));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let f32_at = |i: usize| f32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let (width, height, bands) = (u16_at(8), u16_at(10), u16_at(12));
    let (n_hidden, hidden_width) = (bytes[14], bytes[15]);
    let quantized = match bytes[16] {
        0 => false,
        1 => true,
        q => return Err(Error::Header(format!("invalid quantization flag {q}"))),
    };
    let scale = ScaleInfo {
        raw_min: f32_at(17),
        raw_max: f32_at(21),
    };
    let spec = SirenSpec::new(n_hidden as usize, hidden_width as usize, bands as usize)
        .map_err(|e| Error::Header(e.to_string()))?;
    let n = param_count(&spec);
    let body = &bytes[HEADER_LEN..];
    let width_bytes = if quantized { 2 } else { 4 };
    if body.len() != n * width_bytes {
        return Err(Error::PayloadLength {
            expected: n * width_bytes,
            actual: body.len(),
        });
    }
    let payload = if quantized {
        Payload::Half(body.chunks_exact(2).map(|b| f16::from_le_bytes([b[0], b[1]])).collect())
    } else {
        Payload::Full(
            body.chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        )
    };
    let enc = EncodedImage {
        width,
        height,
        bands,
        n_hidden,
        hidden_width,
        scale,
        payload,
    };
    enc.validate()?;
    Ok(enc)
}

pub fn write_file(enc: &EncodedImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, serialize(enc)?).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: impl AsRef<Path>) -> Result<EncodedImage> {
    let path = path.as_ref();
    deserialize(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Evaluates `params` on the full grid, clipped to `[0, 1]`. This is the
/// single reconstruction path shared by training-time evaluation and
/// decompression.
pub fn render_normalized(spec: &SirenSpec, params: &[f32], width: usize, height: usize) -> Result<HyperCube> {
    let grid = build_grid(width, height)?;
    let out = mlp_forward_chunked(spec, params, &grid.to_matrix())?;
    let clipped: Vec<f32> = out.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
    HyperCube::from_pixel_rows(width, height, spec.out_dim, &clipped)
}

/// Reconstruction in normalized `[0, 1]` units.
pub fn reconstruct_normalized(enc: &EncodedImage) -> Result<HyperCube> {
    enc.validate()?;
    let spec = enc.spec()?;
    render_normalized(&spec, &enc.payload.to_f32(), enc.width as usize, enc.height as usize)
}

/// Reconstruction in the original units.
pub fn decompress(enc: &EncodedImage) -> Result<HyperCube> {
    Ok(denormalize(&reconstruct_normalized(enc)?, enc.scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siren::init_params;

    fn sample(quantized: bool) -> EncodedImage {
        let spec = SirenSpec::new(2, 3, 4).unwrap();
        let p = init_params(&spec, 1).into_inner();
        let payload = if quantized {
            Payload::Half(quantize(&p).unwrap())
        } else {
            Payload::Full(p)
        };
        EncodedImage::new(&spec, 5, 6, ScaleInfo::new(-1.5, 20.0).unwrap(), payload).unwrap()
    }

    #[test]
    fn exact_values_survive_quantization() {
        let v = [0.0f32, 1.0, -2.0, 0.5, 65504.0];
        assert_eq!(dequantize(&quantize(&v).unwrap()), v);
    }

    #[test]
    fn overflow_names_the_index() {
        match quantize(&[0.0, 1.0, 70000.0]) {
            Err(Error::HalfOverflow { index: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(quantize(&[f32::NAN]).is_err());
    }

    #[test]
    fn header_layout() {
        let enc = sample(false);
        let bytes = serialize(&enc).unwrap();
        assert_eq!(&bytes[..8], b"HSIN\x01\0\0\0");
        assert_eq!(&bytes[8..17], &[5, 0, 6, 0, 4, 0, 2, 3, 0]);
        assert_eq!(&bytes[17..21], &(-1.5f32).to_le_bytes());
        assert_eq!(&bytes[21..25], &20.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 25 + enc.param_count() * 4);
        let half = serialize(&sample(true)).unwrap();
        assert_eq!(half[16], 1);
        assert_eq!(half.len(), 25 + enc.param_count() * 2);
    }

    #[test]
    fn round_trip() {
        for q in [false, true] {
            let enc = sample(q);
            assert_eq!(deserialize(&serialize(&enc).unwrap()).unwrap(), enc);
        }
    }

    #[test]
    fn corrupted_inputs() {
        let bytes = serialize(&sample(false)).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(deserialize(&bad), Err(Error::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(deserialize(&bad), Err(Error::UnsupportedVersion(9))));
        assert!(matches!(
            deserialize(&bytes[..bytes.len() - 1]),
            Err(Error::PayloadLength { .. })
        ));
        assert!(deserialize(&bytes[..10]).is_err());
        let mut flipped = bytes.clone();
        flipped[16] = 1;
        match deserialize(&flipped) {
            Err(Error::PayloadLength { expected, actual }) => assert_eq!(actual, 2 * expected),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oversized_header_fields_are_rejected() {
        let spec = SirenSpec::new(1, 256, 1).unwrap();
        let p = vec![0.0; spec.param_count()];
        assert!(EncodedImage::new(&spec, 4, 4, ScaleInfo::identity(), Payload::Full(p)).is_err());
        let spec = SirenSpec::new(1, 2, 1).unwrap();
        let p = vec![0.0; spec.param_count()];
        assert!(EncodedImage::new(&spec, 70_000, 4, ScaleInfo::identity(), Payload::Full(p)).is_err());
    }

    #[test]
    fn decompress_shape_and_determinism() {
        let enc = sample(true);
        let a = decompress(&enc).unwrap();
        let b = decompress(&enc).unwrap();
        assert_eq!(a.dims(), (5, 6, 4));
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| (-1.5..=20.0).contains(&v)));
    }
}
