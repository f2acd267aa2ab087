use super::gemm::{gemm, MatRef};
use super::Real;
use crate::error::{Error, Result};

/// Fully connected layer, weights stored `out × in` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T = f32> {
    pub out_features: usize,
    pub in_features: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> DenseLayer<T> {
    pub fn new(
        out_features: usize,
        in_features: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        if weights.len() != out_features * in_features || bias.len() != out_features {
            return Err(Error::config(format!(
                "dense layer {out_features}x{in_features}: got {} weights, {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(DenseLayer {
            out_features,
            in_features,
            weights,
            bias,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Runs a vector through a stack of dense layers.
pub fn dense_forward<T: Real>(
    layers: &[DenseLayer<T>],
    activations: &[Activation],
    input: &[T],
) -> Result<Vec<T>> {
    if layers.len() != activations.len() {
        return Err(Error::config(format!(
            "{} layers but {} activations",
            layers.len(),
            activations.len()
        )));
    }
    let mut x = input.to_vec();
    for (i, (layer, act)) in layers.iter().zip(activations).enumerate() {
        if layer.in_features != x.len() {
            return Err(Error::config(format!(
                "dense layer {i} expects {} inputs, got {}",
                layer.in_features,
                x.len()
            )));
        }
        x = dense_rows(
            &x,
            1,
            &layer.weights,
            &layer.bias,
            layer.out_features,
            layer.in_features,
        );
        if *act == Activation::Relu {
            x.iter_mut().for_each(|v| *v = v.max(T::zero()));
        }
    }
    Ok(x)
}

/// `Y = X·Wᵀ + b` for `rows` input vectors stacked row-major.
pub(crate) fn dense_rows<T: Real>(
    x: &[T],
    rows: usize,
    weights: &[T],
    bias: &[T],
    out_features: usize,
    in_features: usize,
) -> Vec<T> {
    let mut y = Vec::with_capacity(rows * out_features);
    for _ in 0..rows {
        y.extend_from_slice(bias);
    }
    gemm(
        MatRef::new(x, rows, in_features),
        MatRef::new(weights, out_features, in_features).t(),
        T::one(),
        &mut y,
    );
    y
}

/// Gradients of [`dense_rows`]: `(dX if requested, dW, db)`.
pub(crate) fn dense_rows_backward<T: Real>(
    x: &[T],
    rows: usize,
    weights: &[T],
    grad_y: &[T],
    out_features: usize,
    in_features: usize,
    need_input: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let mut gw = vec![T::zero(); out_features * in_features];
    gemm(
        MatRef::new(grad_y, rows, out_features).t(),
        MatRef::new(x, rows, in_features),
        T::zero(),
        &mut gw,
    );
    let mut gb = vec![T::zero(); out_features];
    for r in 0..rows {
        for (b, g) in gb
            .iter_mut()
            .zip(&grad_y[r * out_features..][..out_features])
        {
            *b += *g;
        }
    }
    let gx = need_input.then(|| {
        let mut gx = vec![T::zero(); rows * in_features];
        gemm(
            MatRef::new(grad_y, rows, out_features),
            MatRef::new(weights, out_features, in_features),
            T::zero(),
            &mut gx,
        );
        gx
    });
    (gx, gw, gb)
}
