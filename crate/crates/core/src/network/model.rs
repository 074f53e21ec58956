use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::arch::{Activation, Architecture, ConvShape};
use super::layers::{
    accumulate_column_sums, add_bias_rows, col2im_add, im2col, maxpool, maxpool_backward,
    relu_in_place,
};
use super::real::{gemm, Op};
use super::{NetworkError, Real, Tensor};

/// `[kh, kw, in, out]` kernel and per-filter bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// `[in, out]` weight matrix and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// All trainable tensors. Also used to hold gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    pub conv: Vec<ConvLayer<T>>,
    /// Hidden layers followed by the output layer.
    pub dense: Vec<DenseLayer<T>>,
}

impl<T: Real> Weights<T> {
    pub fn zeros(arch: &Architecture) -> Result<Self, NetworkError> {
        let shapes = arch.param_shapes()?;
        let mut tensors = shapes.iter().map(|(_, s)| Tensor::zeros(s));
        let conv = (0..arch.conv.len())
            .map(|_| ConvLayer {
                weight: tensors.next().expect("conv weight"),
                bias: tensors.next().expect("conv bias"),
            })
            .collect();
        let dense = (0..=arch.hidden.len())
            .map(|_| DenseLayer {
                weight: tensors.next().expect("dense weight"),
                bias: tensors.next().expect("dense bias"),
            })
            .collect();
        Ok(Weights { conv, dense })
    }

    /// Fan-in scaled normal weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self, NetworkError> {
        let mut w = Weights::zeros(arch)?;
        for t in w.weight_tensors_mut() {
            let fan_in: usize = t.shape()[..t.shape().len() - 1].iter().product();
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for v in t.data_mut() {
                *v = T::from_f64_lossy(normal.sample(rng));
            }
        }
        Ok(w)
    }

    fn weight_tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.conv
            .iter_mut()
            .map(|l| &mut l.weight)
            .chain(self.dense.iter_mut().map(|l| &mut l.weight))
    }

    /// Every tensor in storage order (weight then bias, layer by layer).
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::with_capacity(2 * (self.conv.len() + self.dense.len()));
        for l in &self.conv {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        for l in &self.dense {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::with_capacity(2 * (self.conv.len() + self.dense.len()));
        for l in &mut self.conv {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for l in &mut self.dense {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Weights<U> {
        Weights {
            conv: self
                .conv
                .iter()
                .map(|l| ConvLayer {
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                })
                .collect(),
            dense: self
                .dense
                .iter()
                .map(|l| DenseLayer {
                    weight: l.weight.cast(),
                    bias: l.bias.cast(),
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// How gradients pass backwards through rectifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientRule {
    /// Ordinary chain rule: pass where the forward activation was positive.
    Standard,
    /// Guided backpropagation: additionally drop negative incoming gradients.
    Guided,
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    /// `batch * positions x patch` unrolled inputs.
    cols: Vec<T>,
    /// Post-activation maps, `batch x out_len`.
    activated: Vec<T>,
    pooled: Vec<T>,
    argmax: Vec<u32>,
}

/// Intermediate values of one batched forward pass, kept for backprop and
/// for layer-by-layer inspection.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    batch: usize,
    conv_shapes: Vec<ConvShape>,
    conv: Vec<ConvCache<T>>,
    /// Input of each dense layer; `dense_inputs[i + 1]` is the activated
    /// output of hidden layer `i`.
    dense_inputs: Vec<Vec<T>>,
    dense_widths: Vec<usize>,
    logits: Vec<T>,
    classes: usize,
}

impl<T: Real> ForwardCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn logits(&self, sample: usize) -> &[T] {
        &self.logits[sample * self.classes..(sample + 1) * self.classes]
    }

    pub fn all_logits(&self) -> &[T] {
        &self.logits
    }

    /// Activated output of convolution `layer` (before pooling), `(h, w, c)`.
    pub fn conv_activation(&self, layer: usize, sample: usize) -> &[T] {
        let n = self.conv_shapes[layer].out_len();
        &self.conv[layer].activated[sample * n..(sample + 1) * n]
    }

    pub fn conv_pooled(&self, layer: usize, sample: usize) -> &[T] {
        let n = self.conv_shapes[layer].pooled_len();
        &self.conv[layer].pooled[sample * n..(sample + 1) * n]
    }

    /// Activated output of hidden dense layer `layer`.
    pub fn hidden_output(&self, layer: usize, sample: usize) -> &[T] {
        let n = self.dense_widths[layer];
        &self.dense_inputs[layer + 1][sample * n..(sample + 1) * n]
    }
}

/// Options for a backward pass.
#[derive(Debug, Clone, Copy)]
pub struct BackwardOptions {
    pub rule: GradientRule,
    pub weight_grads: bool,
    pub input_grad: bool,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        BackwardOptions {
            rule: GradientRule::Standard,
            weight_grads: true,
            input_grad: false,
        }
    }
}

pub struct BackwardResult<T> {
    /// Present when `weight_grads` was requested.
    pub weights: Option<Weights<T>>,
    /// `batch x input_len`, present when `input_grad` was requested.
    pub input: Option<Vec<T>>,
}

/// Architecture plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    arch: Architecture,
    weights: Weights<T>,
}

impl<T: Real> Network<T> {
    pub fn new(arch: Architecture, weights: Weights<T>) -> Result<Self, NetworkError> {
        let expected = arch.param_shapes()?;
        let tensors = weights.tensors();
        if tensors.len() != expected.len() {
            return Err(NetworkError::ShapeMismatch(format!(
                "expected {} tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(tensors) {
            if t.shape() != shape.as_slice() {
                return Err(NetworkError::ShapeMismatch(format!(
                    "{name}: expected {shape:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(Network { arch, weights })
    }

    /// Randomly initialised network.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self, NetworkError> {
        let weights = Weights::init(&arch, rng)?;
        Ok(Network { arch, weights })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self) -> &Weights<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Weights<T> {
        &mut self.weights
    }

    pub fn into_parts(self) -> (Architecture, Weights<T>) {
        (self.arch, self.weights)
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            arch: self.arch.clone(),
            weights: self.weights.cast(),
        }
    }

    fn activate(&self, data: &mut [T]) {
        if self.arch.activation == Activation::Relu {
            relu_in_place(data);
        }
    }

    /// Forward pass over a batch of `input_height x input_width` inputs.
    pub fn forward(&self, inputs: &[&[T]]) -> Result<ForwardCache<T>, NetworkError> {
        let batch = inputs.len();
        let in_len = self.arch.input_len();
        if let Some(bad) = inputs.iter().find(|x| x.len() != in_len) {
            return Err(NetworkError::ShapeMismatch(format!(
                "input has {} values, network expects {}x{} = {in_len}",
                bad.len(),
                self.arch.input_height,
                self.arch.input_width
            )));
        }
        let conv_shapes = self.arch.conv_shapes()?;
        let mut current: Vec<T> = inputs.iter().flat_map(|x| x.iter().copied()).collect();
        let mut conv = Vec::with_capacity(conv_shapes.len());
        for (s, layer) in conv_shapes.iter().zip(&self.weights.conv) {
            let (positions, patch) = (s.positions(), s.patch());
            let mut cols = vec![T::zero(); batch * positions * patch];
            for b in 0..batch {
                im2col(
                    &current[b * s.in_len()..(b + 1) * s.in_len()],
                    s,
                    &mut cols[b * positions * patch..(b + 1) * positions * patch],
                );
            }
            let mut activated = vec![T::zero(); batch * s.out_len()];
            gemm(
                batch * positions,
                patch,
                s.out_channels,
                &cols,
                Op::Plain,
                layer.weight.data(),
                Op::Plain,
                &mut activated,
                false,
            );
            add_bias_rows(&mut activated, layer.bias.data());
            self.activate(&mut activated);
            let mut pooled = vec![T::zero(); batch * s.pooled_len()];
            let mut argmax = vec![0u32; batch * s.pooled_len()];
            for b in 0..batch {
                maxpool(
                    &activated[b * s.out_len()..(b + 1) * s.out_len()],
                    s,
                    self.arch.pool.size,
                    self.arch.pool.stride,
                    &mut pooled[b * s.pooled_len()..(b + 1) * s.pooled_len()],
                    &mut argmax[b * s.pooled_len()..(b + 1) * s.pooled_len()],
                );
            }
            current = pooled.clone();
            conv.push(ConvCache {
                cols,
                activated,
                pooled,
                argmax,
            });
        }

        let n_dense = self.weights.dense.len();
        let mut dense_inputs = Vec::with_capacity(n_dense);
        let mut dense_widths = Vec::with_capacity(n_dense);
        for (i, layer) in self.weights.dense.iter().enumerate() {
            let (fan_in, fan_out) = (layer.weight.shape()[0], layer.weight.shape()[1]);
            let mut out = vec![T::zero(); batch * fan_out];
            gemm(
                batch,
                fan_in,
                fan_out,
                &current,
                Op::Plain,
                layer.weight.data(),
                Op::Plain,
                &mut out,
                false,
            );
            add_bias_rows(&mut out, layer.bias.data());
            if i + 1 < n_dense {
                self.activate(&mut out);
            }
            dense_widths.push(fan_out);
            dense_inputs.push(std::mem::replace(&mut current, out));
        }
        Ok(ForwardCache {
            batch,
            conv_shapes,
            conv,
            dense_inputs,
            dense_widths,
            logits: current,
            classes: self.arch.classes,
        })
    }

    /// Pass a rectifier gradient: zero where the forward output was not
    /// positive, and with the guided rule also where the gradient is negative.
    fn rectify_grad(&self, grad: &mut [T], activated: &[T], rule: GradientRule) {
        if self.arch.activation == Activation::Identity {
            return;
        }
        for (g, &a) in grad.iter_mut().zip(activated) {
            let pass = a > T::zero() && (rule == GradientRule::Standard || *g > T::zero());
            if !pass {
                *g = T::zero();
            }
        }
    }

    /// Backpropagate `grad_logits` (`batch x classes`) through a cached pass.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_logits: &[T],
        opts: BackwardOptions,
    ) -> Result<BackwardResult<T>, NetworkError> {
        let mut grads = if opts.weight_grads {
            Some(Weights::zeros(&self.arch)?)
        } else {
            None
        };
        let input = self.backward_impl(
            cache,
            grad_logits,
            opts.rule,
            grads.as_mut(),
            opts.input_grad,
        )?;
        Ok(BackwardResult {
            weights: grads,
            input,
        })
    }

    /// Weight gradients only, overwriting `grads` in place so training can
    /// reuse one buffer across batches.
    pub fn backward_into(
        &self,
        cache: &ForwardCache<T>,
        grad_logits: &[T],
        rule: GradientRule,
        grads: &mut Weights<T>,
    ) -> Result<(), NetworkError> {
        let same = grads.tensors().len() == self.weights.tensors().len()
            && grads
                .tensors()
                .iter()
                .zip(self.weights.tensors())
                .all(|(g, w)| g.shape() == w.shape());
        if !same {
            return Err(NetworkError::ShapeMismatch(
                "gradient buffer does not match the network".into(),
            ));
        }
        self.backward_impl(cache, grad_logits, rule, Some(grads), false)
            .map(|_| ())
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache<T>,
        grad_logits: &[T],
        rule: GradientRule,
        mut grads: Option<&mut Weights<T>>,
        input_grad: bool,
    ) -> Result<Option<Vec<T>>, NetworkError> {
        let batch = cache.batch;
        if grad_logits.len() != batch * self.arch.classes {
            return Err(NetworkError::ShapeMismatch("gradient length".into()));
        }
        let n_dense = self.weights.dense.len();
        let mut grad: Vec<T> = grad_logits.to_vec();
        for i in (0..n_dense).rev() {
            let layer = &self.weights.dense[i];
            let (fan_in, fan_out) = (layer.weight.shape()[0], layer.weight.shape()[1]);
            if i + 1 < n_dense {
                self.rectify_grad(&mut grad, &cache.dense_inputs[i + 1], rule);
            }
            if let Some(g) = grads.as_mut() {
                let gl = &mut g.dense[i];
                gemm(
                    fan_in,
                    batch,
                    fan_out,
                    &cache.dense_inputs[i],
                    Op::Transposed,
                    &grad,
                    Op::Plain,
                    gl.weight.data_mut(),
                    false,
                );
                gl.bias.data_mut().fill(T::zero());
                accumulate_column_sums(&grad, gl.bias.data_mut());
            }
            let mut below = vec![T::zero(); batch * fan_in];
            gemm(
                batch,
                fan_out,
                fan_in,
                &grad,
                Op::Plain,
                layer.weight.data(),
                Op::Transposed,
                &mut below,
                false,
            );
            grad = below;
        }

        for l in (0..cache.conv_shapes.len()).rev() {
            let s = &cache.conv_shapes[l];
            let cc = &cache.conv[l];
            let mut grad_act = vec![T::zero(); batch * s.out_len()];
            for b in 0..batch {
                maxpool_backward(
                    &grad[b * s.pooled_len()..(b + 1) * s.pooled_len()],
                    &cc.argmax[b * s.pooled_len()..(b + 1) * s.pooled_len()],
                    &mut grad_act[b * s.out_len()..(b + 1) * s.out_len()],
                );
            }
            self.rectify_grad(&mut grad_act, &cc.activated, rule);
            let (positions, patch) = (s.positions(), s.patch());
            if let Some(g) = grads.as_mut() {
                let gl = &mut g.conv[l];
                gemm(
                    patch,
                    batch * positions,
                    s.out_channels,
                    &cc.cols,
                    Op::Transposed,
                    &grad_act,
                    Op::Plain,
                    gl.weight.data_mut(),
                    false,
                );
                gl.bias.data_mut().fill(T::zero());
                accumulate_column_sums(&grad_act, gl.bias.data_mut());
            }
            if l == 0 && !input_grad {
                grad.clear();
                break;
            }
            let mut grad_cols = vec![T::zero(); batch * positions * patch];
            gemm(
                batch * positions,
                s.out_channels,
                patch,
                &grad_act,
                Op::Plain,
                self.weights.conv[l].weight.data(),
                Op::Transposed,
                &mut grad_cols,
                false,
            );
            let mut grad_in = vec![T::zero(); batch * s.in_len()];
            for b in 0..batch {
                col2im_add(
                    &grad_cols[b * positions * patch..(b + 1) * positions * patch],
                    s,
                    &mut grad_in[b * s.in_len()..(b + 1) * s.in_len()],
                );
            }
            grad = grad_in;
        }
        Ok(input_grad.then_some(grad))
    }
}
