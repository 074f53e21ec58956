use super::{BackwardOptions, GradientRule, Network, NetworkError, Real};

/// Input-shaped saliency values in `[0, 1]`, row-major `[mel][frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl SaliencyMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

/// Rescale to `[0, 1]`; a constant map becomes all zeros.
pub fn min_max_normalize(values: &mut [f64]) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    for v in values.iter_mut() {
        *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
    }
}

impl<T: Real> Network<T> {
    /// Pre-softmax score of `class` for one input.
    pub fn class_score(&self, input: &[T], class: usize) -> Result<T, NetworkError> {
        self.check_class(class)?;
        let cache = self.forward(&[input])?;
        Ok(cache.logits(0)[class])
    }

    fn check_class(&self, class: usize) -> Result<(), NetworkError> {
        let classes = self.architecture().classes;
        if class >= classes {
            return Err(NetworkError::InvalidClass {
                index: class,
                classes,
            });
        }
        Ok(())
    }

    /// Gradient of the pre-softmax score of `class` w.r.t. the input.
    pub fn input_gradient(
        &self,
        input: &[T],
        class: usize,
        rule: GradientRule,
    ) -> Result<Vec<T>, NetworkError> {
        self.check_class(class)?;
        let cache = self.forward(&[input])?;
        let mut seed = vec![T::zero(); self.architecture().classes];
        seed[class] = T::one();
        let result = self.backward(
            &cache,
            &seed,
            BackwardOptions {
                rule,
                weight_grads: false,
                input_grad: true,
            },
        )?;
        Ok(result.input.expect("input gradient requested"))
    }

    /// Guided-backpropagation saliency: absolute input gradient of the class
    /// score, min-max normalised.
    pub fn saliency(&self, input: &[T], class: usize) -> Result<SaliencyMap, NetworkError> {
        let grad = self.input_gradient(input, class, GradientRule::Guided)?;
        let mut data: Vec<f64> = grad.iter().map(|g| g.to_f64_lossy().abs()).collect();
        min_max_normalize(&mut data);
        Ok(SaliencyMap {
            height: self.architecture().input_height,
            width: self.architecture().input_width,
            data,
        })
    }
}
