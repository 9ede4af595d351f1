//! Rate and distortion metrics.

use std::fmt;
use std::io::Write;

use crate::cube::HyperCube;
use crate::{Error, Result};

pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_dims(a: &HyperCube, b: &HyperCube) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!(
            "cubes differ in shape: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Mean of squared differences over all `w·h·c` samples.
pub fn mse(a: &HyperCube, b: &HyperCube) -> Result<f64> {
    same_dims(a, b)?;
    Ok(mse_slices(a.data(), b.data()))
}

pub(crate) fn mse_slices(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = x as f64 - y as f64;
        acc += d * d;
    }
    acc / a.len() as f64
}

/// `10·log10(peak²/mse)`; `+∞` when `mse` is zero.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(a: &HyperCube, b: &HyperCube, peak: f64) -> Result<f64> {
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::Config(format!("PSNR peak must be positive, got {peak}")));
    }
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

/// SSIM of two equally sized images using whole-image statistics
/// (one mean, variance and covariance per image).
pub fn ssim_band(x: &[f32], y: &[f32], dynamic_range: f64) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Dimension(format!(
            "band sizes differ or are empty: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mean = |s: &[f32]| s.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mx, my) = (mean(x), mean(y));
    let (mut vx, mut vy, mut cov) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a as f64 - mx, b as f64 - my);
        vx += da * da;
        vy += db * db;
        cov += da * db;
    }
    vx /= n;
    vy /= n;
    cov /= n;
    let c1 = (SSIM_K1 * dynamic_range).powi(2);
    let c2 = (SSIM_K2 * dynamic_range).powi(2);
    Ok(((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
}

/// Per-band SSIM averaged over bands.
pub fn ssim_mean(a: &HyperCube, b: &HyperCube, dynamic_range: f64) -> Result<f64> {
    same_dims(a, b)?;
    let mut total = 0.0;
    for band in 0..a.bands() {
        total += ssim_band(a.band(band), b.band(band), dynamic_range)?;
    }
    Ok(total / a.bands() as f64)
}

/// Bits per pixel per band: `n_params · bits / (w · h · c)`.
pub fn bpppb(n_params: usize, bits_per_param: u32, width: usize, height: usize, bands: usize) -> f64 {
    n_params as f64 * bits_per_param as f64 / (width as f64 * height as f64 * bands as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distortion {
    pub mse: f64,
    pub psnr: f64,
    pub ssim_mean: f64,
}

impl Distortion {
    /// All three metrics with peak and SSIM dynamic range `range`.
    pub fn measure(orig: &HyperCube, recon: &HyperCube, range: f64) -> Result<Self> {
        let mse = mse(orig, recon)?;
        Ok(Self {
            mse,
            psnr: psnr_from_mse(mse, range),
            ssim_mean: ssim_mean(orig, recon, range)?,
        })
    }
}

impl fmt::Display for Distortion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mse={}", self.mse)?;
        writeln!(f, "psnr={}", fmt_db(self.psnr))?;
        writeln!(f, "ssim_mean={}", self.ssim_mean)
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        v.to_string()
    }
}

/// Quality of one compress/decompress run, in normalized units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub mse: f64,
    pub psnr: f64,
    pub ssim_mean: f64,
    pub bpppb: f64,
    pub compress_seconds: f64,
    pub decompress_seconds: f64,
}

impl QualityReport {
    pub fn distortion(&self) -> Distortion {
        Distortion {
            mse: self.mse,
            psnr: self.psnr,
            ssim_mean: self.ssim_mean,
        }
    }

    /// Parses the `key=value` form written by `Display`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = [None; 6];
        const KEYS: [&str; 6] = [
            "mse",
            "psnr",
            "ssim_mean",
            "bpppb",
            "compress_seconds",
            "decompress_seconds",
        ];
        for line in text.lines() {
            let Some((k, v)) = line.split_once('=') else { continue };
            if let Some(slot) = KEYS.iter().position(|&key| key == k.trim()) {
                let v = v.trim();
                let parsed = if v == "inf" {
                    Ok(f64::INFINITY)
                } else {
                    v.parse::<f64>()
                };
                fields[slot] = Some(parsed.map_err(|_| Error::Header(format!("{k}: bad number {v:?}")))?);
            }
        }
        let get = |i: usize| fields[i].ok_or_else(|| Error::Header(format!("report is missing {}", KEYS[i])));
        Ok(Self {
            mse: get(0)?,
            psnr: get(1)?,
            ssim_mean: get(2)?,
            bpppb: get(3)?,
            compress_seconds: get(4)?,
            decompress_seconds: get(5)?,
        })
    }
}

impl fmt::Display for QualityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.distortion())?;
        writeln!(f, "bpppb={}", self.bpppb)?;
        writeln!(f, "compress_seconds={}", self.compress_seconds)?;
        writeln!(f, "decompress_seconds={}", self.decompress_seconds)
    }
}

/// Writes an `epoch,psnr` CSV with a header row.
pub fn write_history_csv<W: Write>(mut out: W, history: &[(usize, f64)]) -> std::io::Result<()> {
    writeln!(out, "epoch,psnr")?;
    for (epoch, psnr) in history {
        writeln!(out, "{epoch},{}", fmt_db(*psnr))?;
    }
    Ok(())
}
