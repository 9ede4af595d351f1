//! Network shape, initialization and the canonical flat parameter layout.
//!
//! A network with `n_hidden` hidden layers of width `hidden_width` has
//! `n_hidden + 1` affine layers:
//!
//! ```text
//! 2 → w_h → … → w_h → c
//! ```
//!
//! Parameters are stored flat, layer by layer from input to output, each
//! layer contributing its weights row-major (`fan_out × fan_in`) followed by
//! its biases. This order is part of the `.hsin` file format.

use std::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Frequency scale of the sine activations. Not stored in encoded files.
pub const DEFAULT_W0: f64 = 30.0;

/// Coordinate networks always take a 2-D pixel position.
pub const INPUT_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirenSpec {
    pub in_dim: usize,
    pub n_hidden: usize,
    pub hidden_width: usize,
    pub out_dim: usize,
    pub w0: f64,
}

impl SirenSpec {
    pub fn new(n_hidden: usize, hidden_width: usize, out_dim: usize) -> Result<Self> {
        Self {
            in_dim: INPUT_DIM,
            n_hidden,
            hidden_width,
            out_dim,
            w0: DEFAULT_W0,
        }
        .validated()
    }

    pub fn with_w0(mut self, w0: f64) -> Result<Self> {
        self.w0 = w0;
        self.validated()
    }

    fn validated(self) -> Result<Self> {
        if self.in_dim == 0 || self.n_hidden == 0 || self.hidden_width == 0 || self.out_dim == 0 {
            return Err(Error::Config(format!(
                "network dimensions must be positive: {} hidden layers of width {}, {} outputs",
                self.n_hidden, self.hidden_width, self.out_dim
            )));
        }
        if !(self.w0 > 0.0 && self.w0.is_finite()) {
            return Err(Error::Config(format!("w0 must be positive, got {}", self.w0)));
        }
        Ok(self)
    }

    /// `(fan_in, fan_out)` of every affine layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.n_hidden + 1);
        shapes.push((self.in_dim, self.hidden_width));
        for _ in 1..self.n_hidden {
            shapes.push((self.hidden_width, self.hidden_width));
        }
        shapes.push((self.hidden_width, self.out_dim));
        shapes
    }

    pub fn param_count(&self) -> usize {
        param_count(self)
    }
}

/// Weights `2·w_h + (n_h−1)·w_h² + w_h·c` plus biases `n_h·w_h + c`.
pub fn param_count(spec: &SirenSpec) -> usize {
    spec.layer_shapes()
        .iter()
        .map(|&(fan_in, fan_out)| fan_out * fan_in + fan_out)
        .sum()
}

/// Flat parameters in canonical order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector<T = f32>(pub Vec<T>);

impl<T> ParamVector<T> {
    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for ParamVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for ParamVector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for ParamVector<T> {
    fn from(v: Vec<T>) -> Self {
        ParamVector(v)
    }
}

impl ParamVector<f32> {
    pub fn to_f64(&self) -> ParamVector<f64> {
        ParamVector(self.0.iter().map(|&v| v as f64).collect())
    }
}

/// One affine layer, weights row-major `fan_out × fan_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T = f32> {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

impl<T> LayerParams<T> {
    pub fn new(fan_in: usize, fan_out: usize, weights: Vec<T>, biases: Vec<T>) -> Result<Self> {
        if weights.len() != fan_in * fan_out || biases.len() != fan_out {
            return Err(Error::Dimension(format!(
                "layer {fan_in}→{fan_out} needs {} weights and {fan_out} biases, got {} and {}",
                fan_in * fan_out,
                weights.len(),
                biases.len()
            )));
        }
        Ok(Self {
            fan_in,
            fan_out,
            weights,
            biases,
        })
    }
}

pub fn flatten<T: Copy>(layers: &[LayerParams<T>]) -> ParamVector<T> {
    let mut out = Vec::with_capacity(layers.iter().map(|l| l.weights.len() + l.biases.len()).sum());
    for layer in layers {
        out.extend_from_slice(&layer.weights);
        out.extend_from_slice(&layer.biases);
    }
    ParamVector(out)
}

pub fn unflatten<T: Copy>(spec: &SirenSpec, params: &[T]) -> Result<Vec<LayerParams<T>>> {
    check_len(spec, params.len())?;
    let mut offset = 0;
    let mut layers = Vec::with_capacity(spec.n_hidden + 1);
    for (fan_in, fan_out) in spec.layer_shapes() {
        let w_end = offset + fan_in * fan_out;
        let b_end = w_end + fan_out;
        layers.push(LayerParams {
            fan_in,
            fan_out,
            weights: params[offset..w_end].to_vec(),
            biases: params[w_end..b_end].to_vec(),
        });
        offset = b_end;
    }
    Ok(layers)
}

pub(crate) fn check_len(spec: &SirenSpec, len: usize) -> Result<()> {
    let expected = param_count(spec);
    if len != expected {
        return Err(Error::Dimension(format!(
            "network needs {expected} parameters, got {len}"
        )));
    }
    Ok(())
}

/// Half-width of the uniform init interval for layer `index` with `fan_in`
/// inputs: `1/fan_in` for the first layer, `√(6/fan_in)/w0` afterwards.
pub fn init_bound(spec: &SirenSpec, index: usize, fan_in: usize) -> f64 {
    if index == 0 {
        1.0 / fan_in as f64
    } else {
        (6.0 / fan_in as f64).sqrt() / spec.w0
    }
}

/// Sine-network initialization. Weights and biases of a layer are drawn
/// uniformly from the open interval `(−bound, bound)` of that layer.
pub fn init_params(spec: &SirenSpec, seed: u64) -> ParamVector<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(param_count(spec));
    for (index, (fan_in, fan_out)) in spec.layer_shapes().into_iter().enumerate() {
        let bound = init_bound(spec, index, fan_in);
        let bound32 = bound as f32;
        for _ in 0..fan_out * fan_in + fan_out {
            let v = loop {
                let v = rng.gen_range(-bound..bound) as f32;
                if v.abs() < bound32 {
                    break v;
                }
            };
            out.push(v);
        }
    }
    ParamVector(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_by_layer_shape() {
        assert_eq!(param_count(&SirenSpec::new(1, 4, 3).unwrap()), 27);
        assert_eq!(param_count(&SirenSpec::new(1, 1, 1).unwrap()), 5);
        let pines = SirenSpec::new(15, 40, 220).unwrap();
        let weights: usize = pines.layer_shapes().iter().map(|(i, o)| i * o).sum();
        let biases: usize = pines.layer_shapes().iter().map(|(_, o)| o).sum();
        assert_eq!(weights, 31_280);
        assert_eq!(biases, 820);
        assert_eq!(param_count(&pines), 32_100);
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(SirenSpec::new(0, 4, 3).is_err());
        assert!(SirenSpec::new(1, 0, 3).is_err());
        assert!(SirenSpec::new(1, 4, 0).is_err());
        assert!(SirenSpec::new(1, 4, 3).unwrap().with_w0(0.0).is_err());
    }

    #[test]
    fn first_layer_bound_is_half() {
        let spec = SirenSpec::new(2, 40, 5).unwrap();
        assert_eq!(init_bound(&spec, 0, 2), 0.5);
        let p = init_params(&spec, 3);
        assert!(p[..40 * 2 + 40].iter().all(|v| v.abs() < 0.5));
    }

    #[test]
    fn hidden_layer_bound() {
        let spec = SirenSpec::new(2, 40, 5).unwrap();
        let b = init_bound(&spec, 1, 40);
        assert!((b - 0.012_909_944).abs() < 1e-8);
        let p = init_params(&spec, 3);
        let start = 40 * 2 + 40;
        let hidden = &p[start..start + 40 * 40 + 40];
        assert!(hidden.iter().all(|v| (v.abs() as f64) < b));
        // The interval is actually used, not collapsed near zero.
        assert!(hidden.iter().any(|v| (v.abs() as f64) > 0.9 * b));
    }

    #[test]
    fn init_is_seeded() {
        let spec = SirenSpec::new(3, 8, 4).unwrap();
        assert_eq!(init_params(&spec, 1), init_params(&spec, 1));
        assert_ne!(init_params(&spec, 1), init_params(&spec, 2));
    }

    #[test]
    fn flatten_unflatten_round_trip() {
        let spec = SirenSpec::new(3, 5, 2).unwrap();
        let p = init_params(&spec, 11);
        let layers = unflatten(&spec, &p).unwrap();
        assert_eq!(layers.len(), 4);
        assert_eq!((layers[0].fan_in, layers[0].fan_out), (2, 5));
        assert_eq!((layers[3].fan_in, layers[3].fan_out), (5, 2));
        let back = flatten(&layers);
        assert_eq!(back.len(), param_count(&spec));
        assert!(back.iter().zip(p.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(unflatten(&spec, &p[1..]).is_err());
    }

    #[test]
    fn canonical_order_is_weights_then_biases() {
        let spec = SirenSpec::new(1, 2, 1).unwrap();
        let p: Vec<f32> = (0..param_count(&spec)).map(|i| i as f32).collect();
        let layers = unflatten(&spec, &p).unwrap();
        assert_eq!(layers[0].weights, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(layers[0].biases, vec![4.0, 5.0]);
        assert_eq!(layers[1].weights, vec![6.0, 7.0]);
        assert_eq!(layers[1].biases, vec![8.0]);
    }
}
