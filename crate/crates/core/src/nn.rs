//! Forward evaluation and exact gradients for the sine-MLP family.
//!
//! Hidden layers compute `sin(w0·(x·Wᵀ + b))`; the output layer is affine
//! with no activation. The loss is the mean squared error over every output
//! entry of the batch. Gradients are computed by reverse accumulation over
//! cached activations. Matrix products go through `matrixmultiply`; every
//! other reduction runs in a fixed sequential order so that results are
//! bitwise reproducible.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rayon::prelude::*;

use crate::siren::{check_len, ParamVector, SirenSpec};
use crate::{Error, Result};

/// Scalar type the network can be evaluated in (`f32` or `f64`).
pub trait Real: Float + FromPrimitive + ToPrimitive + Default + Debug + Send + Sync + 'static {
    /// `c ← alpha·a·b + beta·c` on strided row/column views.
    ///
    /// # Safety
    /// The strides and dimensions must address memory inside the slices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Strided read-only matrix view used to express transposes without copies.
#[derive(Clone, Copy)]
struct View<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T> View<'a, T> {
    fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn fits(&self) -> bool {
        self.rows == 0 || self.cols == 0 || (self.rows - 1) * self.rs + (self.cols - 1) * self.cs < self.data.len()
    }
}

/// `c ← a·b + beta·c`, `c` row-major.
fn gemm<T: Real>(a: View<'_, T>, b: View<'_, T>, beta: T, c: &mut [T]) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert!(a.fits() && b.fits());
    assert_eq!(c.len(), a.rows * b.cols);
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    // SAFETY: the views were bounds-checked above and `c` is exactly m×n.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            T::one(),
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            b.cols as isize,
            1,
        )
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn view(&self) -> View<'_, T> {
        View::row_major(&self.data, self.rows, self.cols)
    }
}

/// Training pairs: `n × 2` coordinates and `n × c` target spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T = f32> {
    pub inputs: Matrix<T>,
    pub targets: Matrix<T>,
}

impl<T: Copy> Batch<T> {
    pub fn new(inputs: Matrix<T>, targets: Matrix<T>) -> Result<Self> {
        if inputs.rows != targets.rows || inputs.rows == 0 {
            return Err(Error::Dimension(format!(
                "batch needs equal, non-zero row counts; got {} inputs and {} targets",
                inputs.rows, targets.rows
            )));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows == 0
    }
}

/// Borrowed view of one affine layer inside a flat parameter slice.
struct LayerRef<'a, T> {
    fan_in: usize,
    fan_out: usize,
    weights: &'a [T],
    biases: &'a [T],
    /// Offset of the weights inside the flat vector.
    offset: usize,
}

fn layer_refs<'a, T>(spec: &SirenSpec, params: &'a [T]) -> Vec<LayerRef<'a, T>> {
    let mut offset = 0;
    spec.layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let w_end = offset + fan_in * fan_out;
            let layer = LayerRef {
                fan_in,
                fan_out,
                weights: &params[offset..w_end],
                biases: &params[w_end..w_end + fan_out],
                offset,
            };
            offset = w_end + fan_out;
            layer
        })
        .collect()
}

fn affine<T: Real>(layer: &LayerRef<'_, T>, x: &Matrix<T>) -> Matrix<T> {
    let mut out = Vec::with_capacity(x.rows * layer.fan_out);
    for _ in 0..x.rows {
        out.extend_from_slice(layer.biases);
    }
    let w = View::row_major(layer.weights, layer.fan_out, layer.fan_in);
    gemm(x.view(), w.t(), T::one(), &mut out);
    Matrix {
        rows: x.rows,
        cols: layer.fan_out,
        data: out,
    }
}

/// `x·Wᵀ + b` with the bias broadcast over rows.
pub fn affine_forward<T: Real>(layer: &crate::siren::LayerParams<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    if x.cols != layer.fan_in {
        return Err(Error::Dimension(format!(
            "layer expects {} inputs, matrix has {} columns",
            layer.fan_in, x.cols
        )));
    }
    let layer = LayerRef {
        fan_in: layer.fan_in,
        fan_out: layer.fan_out,
        weights: &layer.weights,
        biases: &layer.biases,
        offset: 0,
    };
    Ok(affine(&layer, x))
}

/// Elementwise `sin(w0·z)`.
pub fn sine_forward<T: Real>(z: &Matrix<T>, w0: f64) -> Matrix<T> {
    let w0 = T::lit(w0);
    z.map(|v| (w0 * v).sin())
}

fn check_inputs<T>(spec: &SirenSpec, params: &[T], inputs: &Matrix<T>) -> Result<()> {
    check_len(spec, params.len())?;
    if inputs.cols != spec.in_dim {
        return Err(Error::Dimension(format!(
            "network takes {} inputs, matrix has {} columns",
            spec.in_dim, inputs.cols
        )));
    }
    Ok(())
}

/// Network output for every input row (`n × out_dim`, unclipped).
pub fn mlp_forward<T: Real>(spec: &SirenSpec, params: &[T], inputs: &Matrix<T>) -> Result<Matrix<T>> {
    check_inputs(spec, params, inputs)?;
    let layers = layer_refs(spec, params);
    let (last, hidden) = layers.split_last().expect("at least one layer");
    let w0 = T::lit(spec.w0);
    let mut x = inputs.clone();
    for layer in hidden {
        let mut z = affine(layer, &x);
        z.data.iter_mut().for_each(|v| *v = (w0 * *v).sin());
        x = z;
    }
    Ok(affine(last, &x))
}

/// Rows per independent chunk in [`mlp_forward_chunked`]. Fixed so that the
/// result does not depend on the thread count.
pub const FORWARD_CHUNK_ROWS: usize = 4096;

/// [`mlp_forward`] evaluated over fixed-size row chunks, in parallel when a
/// rayon pool is available. Output is identical for any thread count.
pub fn mlp_forward_chunked<T: Real>(spec: &SirenSpec, params: &[T], inputs: &Matrix<T>) -> Result<Matrix<T>> {
    check_inputs(spec, params, inputs)?;
    let parts: Vec<Matrix<T>> = inputs
        .data
        .par_chunks(FORWARD_CHUNK_ROWS * inputs.cols)
        .map(|chunk| {
            let rows = chunk.len() / inputs.cols;
            let m = Matrix {
                rows,
                cols: inputs.cols,
                data: chunk.to_vec(),
            };
            mlp_forward(spec, params, &m)
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(inputs.rows * spec.out_dim);
    for p in parts {
        data.extend_from_slice(&p.data);
    }
    Ok(Matrix {
        rows: inputs.rows,
        cols: spec.out_dim,
        data,
    })
}

fn check_batch<T>(spec: &SirenSpec, params: &[T], batch: &Batch<T>) -> Result<()> {
    check_inputs(spec, params, &batch.inputs)?;
    if batch.targets.cols != spec.out_dim || batch.targets.rows != batch.inputs.rows {
        return Err(Error::Dimension(format!(
            "targets are {}x{}, network produces {}x{}",
            batch.targets.rows, batch.targets.cols, batch.inputs.rows, spec.out_dim
        )));
    }
    Ok(())
}

fn sum_sq_error<T: Real>(outputs: &[T], targets: &[T]) -> f64 {
    let mut acc = 0.0f64;
    for (&y, &t) in outputs.iter().zip(targets) {
        let d = (y - t).to_f64().unwrap_or(f64::NAN);
        acc += d * d;
    }
    acc
}

/// Mean squared error of the network over `batch`.
pub fn mlp_loss<T: Real>(spec: &SirenSpec, params: &[T], batch: &Batch<T>) -> Result<f64> {
    check_batch(spec, params, batch)?;
    let y = mlp_forward(spec, params, &batch.inputs)?;
    Ok(sum_sq_error(&y.data, &batch.targets.data) / y.data.len() as f64)
}

/// Mean squared error and its exact gradient with respect to every
/// parameter, in canonical order.
pub fn mlp_loss_and_grad<T: Real>(spec: &SirenSpec, params: &[T], batch: &Batch<T>) -> Result<(f64, ParamVector<T>)> {
    check_batch(spec, params, batch)?;
    let layers = layer_refs(spec, params);
    let n_layers = layers.len();
    let w0 = T::lit(spec.w0);

    // acts[l] is the input of layer l; slopes[l] = d act[l+1] / d z_l.
    let mut acts: Vec<Matrix<T>> = Vec::with_capacity(n_layers);
    let mut slopes: Vec<Vec<T>> = Vec::with_capacity(n_layers - 1);
    acts.push(batch.inputs.clone());
    for layer in &layers[..n_layers - 1] {
        let mut z = affine(layer, acts.last().expect("non-empty"));
        let mut slope = Vec::with_capacity(z.data.len());
        for v in z.data.iter_mut() {
            let (s, c) = (w0 * *v).sin_cos();
            *v = s;
            slope.push(w0 * c);
        }
        acts.push(z);
        slopes.push(slope);
    }
    let y = affine(&layers[n_layers - 1], acts.last().expect("non-empty"));

    let count = y.data.len();
    let loss = sum_sq_error(&y.data, &batch.targets.data) / count as f64;
    let scale = T::lit(2.0 / count as f64);
    let mut delta = Matrix {
        rows: y.rows,
        cols: y.cols,
        data: y
            .data
            .iter()
            .zip(&batch.targets.data)
            .map(|(&o, &t)| scale * (o - t))
            .collect(),
    };

    let mut grads = vec![T::zero(); params.len()];
    for (l, layer) in layers.iter().enumerate().rev() {
        let input = &acts[l];
        let (w_grad, rest) = grads[layer.offset..].split_at_mut(layer.fan_in * layer.fan_out);
        gemm(delta.view().t(), input.view(), T::zero(), w_grad);
        let b_grad = &mut rest[..layer.fan_out];
        for row in delta.data.chunks_exact(layer.fan_out) {
            for (g, &d) in b_grad.iter_mut().zip(row) {
                *g = *g + d;
            }
        }
        if l == 0 {
            break;
        }
        let mut back = vec![T::zero(); delta.rows * layer.fan_in];
        let w = View::row_major(layer.weights, layer.fan_out, layer.fan_in);
        gemm(delta.view(), w, T::zero(), &mut back);
        for (b, &s) in back.iter_mut().zip(&slopes[l - 1]) {
            *b = *b * s;
        }
        delta = Matrix {
            rows: delta.rows,
            cols: layer.fan_in,
            data: back,
        };
    }
    Ok((loss, ParamVector(grads)))
}

/// Central finite-difference gradient of [`mlp_loss`]. Meant as a test
/// oracle; use `f64` for meaningful results.
pub fn numeric_gradient<T: Real>(spec: &SirenSpec, params: &[T], batch: &Batch<T>, eps: f64) -> Result<ParamVector<T>> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    check_batch(spec, params, batch)?;
    let h = T::lit(eps);
    let mut probe = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = mlp_loss(spec, &probe, batch)?;
        probe[i] = orig - h;
        let minus = mlp_loss(spec, &probe, batch)?;
        probe[i] = orig;
        out.push(T::lit((plus - minus) / (2.0 * eps)));
    }
    Ok(ParamVector(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siren::{init_params, LayerParams};

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix<f64> {
        Matrix::new(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn affine_identity() {
        let l = LayerParams::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let y = affine_forward(&l, &m(1, 2, &[0.3, -0.7])).unwrap();
        assert_eq!(y.data(), &[0.3, -0.7]);
    }

    #[test]
    fn affine_bias_only() {
        let l = LayerParams::new(2, 2, vec![0.0; 4], vec![1.0, 2.0]).unwrap();
        let y = affine_forward(&l, &m(2, 2, &[5.0, -3.0, 0.1, 9.0])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn affine_dot_product() {
        let l = LayerParams::new(2, 1, vec![1.0, 1.0], vec![0.0]).unwrap();
        assert_eq!(affine_forward(&l, &m(1, 2, &[2.0, 3.0])).unwrap().data(), &[5.0]);
    }

    #[test]
    fn affine_rectangular() {
        // W = [[1,2],[3,4],[5,6]], x = [[1,-1]] -> [-1,-1,-1] + b
        let l = LayerParams::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![0.5, 0.0, -0.5]).unwrap();
        let y = affine_forward(&l, &m(1, 2, &[1.0, -1.0])).unwrap();
        assert_eq!(y.data(), &[-0.5, -1.0, -1.5]);
    }

    #[test]
    fn affine_dimension_mismatch() {
        let l = LayerParams::new(3, 1, vec![1.0; 3], vec![0.0]).unwrap();
        assert!(affine_forward(&l, &m(1, 2, &[1.0, 2.0])).is_err());
    }

    #[test]
    fn sine_examples() {
        assert_eq!(sine_forward(&m(1, 1, &[0.0]), 30.0).data(), &[0.0]);
        let q = sine_forward(&m(1, 1, &[std::f64::consts::PI / 60.0]), 30.0);
        assert!((q.data()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sine_slope_at_zero_is_w0() {
        // One hidden unit fed by a zero-weight first layer: d out / d b0 = w0 · w_out.
        let spec = SirenSpec::new(1, 1, 1).unwrap();
        // [w0_0, w0_1, b0, w1, b1]
        let params = [0.0, 0.0, 0.0, 1.0, 0.0];
        let batch = Batch::new(m(1, 2, &[0.2, 0.4]), m(1, 1, &[-1.0])).unwrap();
        let (_, g) = mlp_loss_and_grad(&spec, &params, &batch).unwrap();
        // dL/dy = 2(0 - (-1)) = 2, dL/db0 = 2 · w_out · w0 cos(0) = 60
        assert!((g[2] - 60.0).abs() < 1e-12);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = SirenSpec::new(2, 4, 3).unwrap();
        let params = vec![0.0f64; spec.param_count()];
        let y = mlp_forward(&spec, &params, &m(2, 2, &[0.1, 0.2, -0.5, 0.9])).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert_eq!((y.rows(), y.cols()), (2, 3));
    }

    #[test]
    fn duplicated_rows_give_duplicated_outputs() {
        let spec = SirenSpec::new(2, 6, 3).unwrap();
        let p = init_params(&spec, 5);
        let one = mlp_forward(&spec, &p, &Matrix::new(1, 2, vec![0.25f32, -0.5]).unwrap()).unwrap();
        let two = mlp_forward(&spec, &p, &Matrix::new(2, 2, vec![0.25f32, -0.5, 0.25, -0.5]).unwrap()).unwrap();
        assert_eq!(two.row(0), one.row(0));
        assert_eq!(two.row(1), one.row(0));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let spec = SirenSpec::new(1, 2, 1).unwrap();
        let x = m(1, 2, &[0.0, 0.0]);
        assert!(mlp_forward(&spec, &[0.0; 4], &x).is_err());
        let batch = Batch::new(x.clone(), m(1, 1, &[0.0])).unwrap();
        assert!(mlp_loss_and_grad(&spec, &[0.0; 6], &batch).is_err());
        let bad_targets = Batch::new(x, m(1, 2, &[0.0, 0.0])).unwrap();
        assert!(mlp_loss_and_grad(&spec, &[0.0; 9], &bad_targets).is_err());
    }

    #[test]
    fn perfect_fit_has_zero_loss_and_grad() {
        let spec = SirenSpec::new(2, 5, 2).unwrap();
        let p = init_params(&spec, 8).to_f64();
        let x = m(3, 2, &[0.1, 0.2, -0.3, 0.4, 0.9, -0.9]);
        let y = mlp_forward(&spec, &p, &x).unwrap();
        let (loss, g) = mlp_loss_and_grad(&spec, &p, &Batch::new(x, y).unwrap()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn doubled_residual_quadruples_loss() {
        let spec = SirenSpec::new(2, 5, 2).unwrap();
        let p = init_params(&spec, 8).to_f64();
        let x = m(3, 2, &[0.1, 0.2, -0.3, 0.4, 0.9, -0.9]);
        let y = mlp_forward(&spec, &p, &x).unwrap();
        let t1 = y.map(|v| v + 0.25);
        let t2 = y.map(|v| v + 0.5);
        let l1 = mlp_loss(&spec, &p, &Batch::new(x.clone(), t1).unwrap()).unwrap();
        let l2 = mlp_loss(&spec, &p, &Batch::new(x, t2).unwrap()).unwrap();
        assert!((l2 / l1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn numeric_gradient_rejects_bad_step() {
        let spec = SirenSpec::new(1, 1, 1).unwrap();
        let batch = Batch::new(m(1, 2, &[0.0, 0.0]), m(1, 1, &[0.0])).unwrap();
        assert!(numeric_gradient(&spec, &[0.0; 5], &batch, 0.0).is_err());
    }

    #[test]
    fn chunked_forward_matches_in_shape() {
        let spec = SirenSpec::new(1, 3, 2).unwrap();
        let p = init_params(&spec, 1);
        let rows = FORWARD_CHUNK_ROWS + 7;
        let x = Matrix::new(rows, 2, (0..rows * 2).map(|i| (i % 17) as f32 / 17.0).collect()).unwrap();
        let y = mlp_forward_chunked(&spec, &p, &x).unwrap();
        assert_eq!((y.rows(), y.cols()), (rows, 2));
        let tail = mlp_forward(&spec, &p, &Matrix::new(1, 2, x.row(rows - 1).to_vec()).unwrap()).unwrap();
        assert_eq!(y.row(rows - 1), tail.row(0));
    }
}
