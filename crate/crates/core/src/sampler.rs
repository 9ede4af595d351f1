//! Coordinate grid and windowed random pixel sampling.
//!
//! The image is tiled into square `window × window` blocks (edge blocks may
//! be smaller). Each epoch draws `max(1, round(rate · block_pixels))`
//! distinct pixels from every block, uniformly and without replacement.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::HyperCube;
use crate::nn::{Batch, Matrix};
use crate::{Error, Result};

/// Pixel positions mapped onto `[-1, 1]²`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordGrid {
    width: usize,
    height: usize,
    coords: Vec<[f32; 2]>,
}

fn axis(i: usize, n: usize) -> f32 {
    if n > 1 {
        (-1.0 + 2.0 * i as f64 / (n - 1) as f64) as f32
    } else {
        0.0
    }
}

impl CoordGrid {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coords(&self) -> &[[f32; 2]] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// All coordinates as an `n × 2` network input.
    pub fn to_matrix(&self) -> Matrix<f32> {
        Matrix::new(self.len(), 2, self.coords.iter().flatten().copied().collect()).expect("n×2")
    }
}

pub fn build_grid(width: usize, height: usize) -> Result<CoordGrid> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension(format!(
            "grid must be non-empty, got {width}x{height}"
        )));
    }
    let xs: Vec<f32> = (0..width).map(|j| axis(j, width)).collect();
    let mut coords = Vec::with_capacity(width * height);
    for i in 0..height {
        let y = axis(i, height);
        coords.extend(xs.iter().map(|&x| [x, y]));
    }
    Ok(CoordGrid { width, height, coords })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    /// Side length of the square sampling window, in pixels.
    pub window: usize,
    /// Fraction of each window drawn per epoch, in `(0, 1]`.
    pub rate: f64,
    pub seed: u64,
    /// Draw a fresh subset every epoch; otherwise reuse the epoch-0 subset.
    pub resample_each_epoch: bool,
}

impl SampleConfig {
    pub fn new(window: usize, rate: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            window,
            rate,
            seed,
            resample_each_epoch: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("sampling window must be at least 1".into()));
        }
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::Config(format!(
                "sampling rate must be in (0, 1], got {}",
                self.rate
            )));
        }
        Ok(())
    }
}

/// Pixels drawn from a block of `block_pixels` pixels: round half up,
/// at least one.
pub fn per_block_count(rate: f64, block_pixels: usize) -> usize {
    ((rate * block_pixels as f64 + 0.5).floor() as usize).clamp(1, block_pixels)
}

/// Sorted, distinct row-major pixel indices selected for `epoch`.
pub fn sample_indices(width: usize, height: usize, cfg: &SampleConfig, epoch: u64) -> Result<Vec<usize>> {
    cfg.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::Dimension("cannot sample an empty image".into()));
    }
    let stream = if cfg.resample_each_epoch { epoch } else { 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);

    let win = cfg.window;
    let mut out = Vec::new();
    for by in (0..height).step_by(win) {
        let bh = win.min(height - by);
        for bx in (0..width).step_by(win) {
            let bw = win.min(width - bx);
            let n = bw * bh;
            let k = per_block_count(cfg.rate, n);
            if k == n {
                for dy in 0..bh {
                    out.extend((0..bw).map(|dx| (by + dy) * width + bx + dx));
                }
                continue;
            }
            for local in index::sample(&mut rng, n, k) {
                out.push((by + local / bw) * width + bx + local % bw);
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Network inputs and target spectra for the given pixels.
pub fn gather_batch(cube: &HyperCube, grid: &CoordGrid, indices: &[usize]) -> Result<Batch<f32>> {
    if grid.width != cube.width() || grid.height != cube.height() {
        return Err(Error::Dimension(format!(
            "grid is {}x{}, cube is {}x{}",
            grid.width,
            grid.height,
            cube.width(),
            cube.height()
        )));
    }
    if indices.is_empty() {
        return Err(Error::Dimension("empty index set".into()));
    }
    let pixels = cube.pixels();
    let bands = cube.bands();
    let data = cube.data();
    let mut inputs = Vec::with_capacity(indices.len() * 2);
    let mut targets = Vec::with_capacity(indices.len() * bands);
    for &i in indices {
        if i >= pixels {
            return Err(Error::Dimension(format!("pixel index {i} out of range 0..{pixels}")));
        }
        inputs.extend_from_slice(&grid.coords[i]);
        targets.extend((0..bands).map(|b| data[b * pixels + i]));
    }
    Batch::new(
        Matrix::new(indices.len(), 2, inputs)?,
        Matrix::new(indices.len(), bands, targets)?,
    )
}

/// Batch over every pixel of the cube.
pub fn full_batch(cube: &HyperCube, grid: &CoordGrid) -> Result<Batch<f32>> {
    let all: Vec<usize> = (0..cube.pixels()).collect();
    gather_batch(cube, grid, &all)
}
