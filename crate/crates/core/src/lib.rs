//! Hyperspectral cube compression with implicit neural representations.
//!
//! A cube is compressed by overfitting a small MLP with sine activations that
//! maps a pixel coordinate in `[-1, 1]²` to that pixel's spectrum. The trained
//! weights, optionally rounded to binary16, are the compressed artifact.
//! Decompression evaluates the network on the coordinate grid.
//!
//! Module map:
//!
//! * [`cube`]: BSQ cube I/O, normalization, synthetic test cubes.
//! * [`nn`]: dense forward pass and exact reverse-mode gradients.
//! * [`siren`]: network shape, initialization, canonical parameter order.
//! * [`optim`]: Adam with bias correction.
//! * [`sampler`]: coordinate grid and windowed random pixel sampling.
//! * [`encoder`]: overfitting loop, architecture search, `compress`.
//! * [`codec`]: binary16 quantization, `.hsin` bitstream, `decompress`.
//! * [`quality`]: MSE, PSNR, SSIM, bpppb and report formatting.

pub mod codec;
pub mod cube;
pub mod encoder;
mod error;
pub mod nn;
pub mod optim;
pub mod quality;
pub mod sampler;
pub mod siren;

pub use codec::{decompress, deserialize, serialize, EncodedImage, Payload};
pub use cube::{CubeHeader, HyperCube, ScaleInfo, SynthKind};
pub use encoder::{compress, overfit, BestSnapshot, CompressTarget, Precision, TrainConfig};
pub use error::{Error, Result};
pub use quality::{Distortion, QualityReport};
pub use sampler::{CoordGrid, SampleConfig};
pub use siren::{ParamVector, SirenSpec};
