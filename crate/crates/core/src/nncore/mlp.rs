//! Fully connected ReLU stacks with an explicit activation tape for exact
//! reverse-mode gradients.
//!
//! Every layer but the last is followed by a ReLU; the last is linear. The
//! ReLU derivative at exactly zero is taken to be 0.

use rand::Rng;

use super::init::orthogonal_init;
use super::matrix::{gemm, Matrix, Trans};
use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// `y = W x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl LinearLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        LinearLayer {
            weights: Matrix::zeros(output, input),
            biases: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Number of weights plus biases.
    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.biases.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<LinearLayer>,
    activations: Vec<Activation>,
}

/// Inputs seen by every layer during a batched forward pass.
///
/// `inputs[0]` is the network input; `inputs[l]` for `l > 0` is the
/// post-activation output of layer `l - 1`.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Matrix>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].rows()
    }

    pub fn input(&self) -> &Matrix {
        &self.inputs[0]
    }
}

impl Mlp {
    /// Build from layers; ReLU follows every layer except the last.
    pub fn from_layers(layers: Vec<LinearLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.biases.len() != layer.output_dim() {
                return Err(Error::dim(
                    format!("bias length of layer {i}"),
                    layer.output_dim(),
                    layer.biases.len(),
                ));
            }
            if i > 0 && layers[i - 1].output_dim() != layer.input_dim() {
                return Err(Error::dim(
                    format!("input dim of layer {i}"),
                    layers[i - 1].output_dim(),
                    layer.input_dim(),
                ));
            }
        }
        let n = layers.len();
        let activations = (0..n)
            .map(|i| if i + 1 < n { Activation::Relu } else { Activation::Identity })
            .collect();
        Ok(Mlp { layers, activations })
    }

    /// All-zero network with the given layer widths, e.g. `[100, 50, 50, 2]`.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least an input and an output width, got {widths:?}"
            )));
        }
        Mlp::from_layers(widths.windows(2).map(|w| LinearLayer::zeros(w[0], w[1])).collect())
    }

    /// Orthogonally initialised weights, zero biases.
    pub fn orthogonal<R: Rng>(widths: &[usize], rng: &mut R) -> Result<Self> {
        let mut mlp = Mlp::zeros(widths)?;
        for layer in &mut mlp.layers {
            let seed = rng.random::<u64>();
            layer.weights = orthogonal_init(layer.output_dim(), layer.input_dim(), seed);
        }
        Ok(mlp)
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LinearLayer] {
        &mut self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(LinearLayer::output_dim))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LinearLayer::param_count).sum()
    }

    /// Same shape, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| LinearLayer::zeros(l.input_dim(), l.output_dim()))
                .collect(),
            activations: self.activations.clone(),
        }
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.widths() == other.widths()
    }

    /// Forward pass for a single input vector.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let (out, tape) = self.forward_batch(&Matrix::row_vector(input))?;
        Ok((out.into_vec(), tape))
    }

    /// Forward pass over a batch (one sample per row).
    pub fn forward_batch(&self, input: &Matrix) -> Result<(Matrix, Tape)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for (layer, act) in self.layers.iter().zip(&self.activations) {
            let next = apply_layer(layer, *act, &current);
            inputs.push(current);
            current = next;
        }
        Ok((current, Tape { inputs }))
    }

    /// Forward pass without keeping a tape.
    pub fn infer(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut current = apply_layer(&self.layers[0], self.activations[0], input);
        for (layer, act) in self.layers.iter().zip(&self.activations).skip(1) {
            current = apply_layer(layer, *act, &current);
        }
        Ok(current)
    }

    pub fn infer_vec(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.infer(&Matrix::row_vector(input))?.into_vec())
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::dim("MLP input", self.input_dim(), input.cols()));
        }
        Ok(())
    }

    /// Gradients of `Σ output ⊙ output_grad` with respect to every parameter
    /// and to the input.
    pub fn backward(&self, tape: &Tape, output_grad: &Matrix) -> Result<(Mlp, Matrix)> {
        let mut grads = self.zeros_like();
        let dx = self.backward_into(tape, output_grad, &mut grads)?;
        Ok((grads, dx))
    }

    /// Like [`Mlp::backward`] but adds the parameter gradients into `acc`.
    /// Returns the input gradient.
    pub fn backward_into(&self, tape: &Tape, output_grad: &Matrix, acc: &mut Mlp) -> Result<Matrix> {
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::dim("tape depth", self.layers.len(), tape.inputs.len()));
        }
        if output_grad.cols() != self.output_dim() {
            return Err(Error::dim("output gradient width", self.output_dim(), output_grad.cols()));
        }
        if output_grad.rows() != tape.batch_size() {
            return Err(Error::dim("output gradient batch", tape.batch_size(), output_grad.rows()));
        }
        if !acc.same_shape(self) {
            return Err(Error::InvalidArgument("gradient accumulator shape differs from network".into()));
        }

        let mut delta = output_grad.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &tape.inputs[l];
            if input.cols() != layer.input_dim() {
                return Err(Error::dim(format!("tape entry {l}"), layer.input_dim(), input.cols()));
            }
            let g = &mut acc.layers[l];
            // dW += δᵀ · input
            gemm(1.0, &delta, Trans::Yes, input, Trans::No, 1.0, &mut g.weights);
            for r in 0..delta.rows() {
                for (b, d) in g.biases.iter_mut().zip(delta.row(r)) {
                    *b += d;
                }
            }
            // δ_in = δ · W
            let mut prev = Matrix::zeros(delta.rows(), layer.input_dim());
            gemm(1.0, &delta, Trans::No, &layer.weights, Trans::No, 0.0, &mut prev);
            if l > 0 && self.activations[l - 1] == Activation::Relu {
                for (d, x) in prev.data_mut().iter_mut().zip(input.data()) {
                    if *x <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(delta)
    }
}

impl Mlp {
    /// Input gradient only; skips the parameter gradients.
    pub fn backward_input(&self, tape: &Tape, output_grad: &Matrix) -> Result<Matrix> {
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::dim("tape depth", self.layers.len(), tape.inputs.len()));
        }
        if output_grad.cols() != self.output_dim() || output_grad.rows() != tape.batch_size() {
            return Err(Error::dim("output gradient width", self.output_dim(), output_grad.cols()));
        }
        let mut delta = output_grad.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut prev = Matrix::zeros(delta.rows(), layer.input_dim());
            gemm(1.0, &delta, Trans::No, &layer.weights, Trans::No, 0.0, &mut prev);
            if l > 0 && self.activations[l - 1] == Activation::Relu {
                for (d, x) in prev.data_mut().iter_mut().zip(tape.inputs[l].data()) {
                    if *x <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(delta)
    }
}

fn apply_layer(layer: &LinearLayer, act: Activation, input: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(input.rows(), layer.output_dim());
    for r in 0..out.rows() {
        out.row_mut(r).copy_from_slice(&layer.biases);
    }
    gemm(1.0, input, Trans::No, &layer.weights, Trans::Yes, 1.0, &mut out);
    if act == Activation::Relu {
        for v in out.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    out
}

impl Parameters for Mlp {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.data(), l.biases.as_slice()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.data_mut(), l.biases.as_mut_slice()])
            .collect()
    }

    fn tensor_name(&self, index: usize) -> String {
        let kind = if index % 2 == 0 { "weights" } else { "biases" };
        format!("layer {} {kind}", index / 2)
    }
}
