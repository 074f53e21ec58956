use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::posterior::logit_gradient;
use super::{
    batch_loss, Architecture, GradientRule, Network, NetworkError, PosteriorVector, Real, Weights,
};
use crate::features::MelSpectrogram;
use crate::segmenter::WindowMs;

const EVAL_BATCH: usize = 32;

/// One labelled network input. `group` identifies the source utterance, so
/// that batches can be formed from whole sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f32>,
    pub label: usize,
    pub group: usize,
}

impl Example {
    pub fn from_spectrogram(spec: &MelSpectrogram, label: usize, group: usize) -> Self {
        Example {
            input: spec.data().iter().map(|&v| v as f32).collect(),
            label,
            group,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batching {
    /// All examples of this many consecutive utterances form a batch.
    Sentences(usize),
    /// Fixed number of examples per batch.
    Segments(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batching: Batching,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            learning_rate: 1e-3,
            batching: Batching::Sentences(8),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |msg: &str| Err(NetworkError::InvalidConfig(msg.into()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("Adam betas must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        match self.batching {
            Batching::Sentences(0) | Batching::Segments(0) => bad("batch size must be positive"),
            _ => Ok(()),
        }
    }
}

/// Adam optimizer state with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    m: Weights<T>,
    v: Weights<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(arch: &Architecture, config: &TrainConfig) -> Result<Self, NetworkError> {
        Ok(Adam {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            step: 0,
            m: Weights::zeros(arch)?,
            v: Weights::zeros(arch)?,
        })
    }

    pub fn update(&mut self, weights: &mut Weights<T>, grads: &Weights<T>) {
        self.step += 1;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let one = T::one();
        let c1 = T::from_f64_lossy(1.0 - self.beta1.powi(self.step));
        let c2 = T::from_f64_lossy(1.0 - self.beta2.powi(self.step));
        let lr = T::from_f64_lossy(self.lr);
        let eps = T::from_f64_lossy(self.epsilon);
        let params = weights.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        let (one_b1, one_b2) = (one - b1, one - b2);
        for (((w, g), m), v) in params.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
            let lanes = w
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((wi, &gi), (mi, vi)) in lanes {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *wi = *wi - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-example loss over the epoch.
    pub loss: f64,
    pub train_accuracy: f64,
}

/// Example indices of each batch for one epoch.
fn epoch_batches(
    examples: &[Example],
    batching: Batching,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    match batching {
        Batching::Segments(size) => {
            let mut order: Vec<usize> = (0..examples.len()).collect();
            order.shuffle(rng);
            order.chunks(size).map(<[usize]>::to_vec).collect()
        }
        Batching::Sentences(per_batch) => {
            // Groups in order of first appearance.
            let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
            for (i, ex) in examples.iter().enumerate() {
                match groups.iter_mut().find(|(g, _)| *g == ex.group) {
                    Some((_, members)) => members.push(i),
                    None => groups.push((ex.group, vec![i])),
                }
            }
            groups.shuffle(rng);
            groups
                .chunks(per_batch)
                .map(|chunk| chunk.iter().flat_map(|(_, m)| m.iter().copied()).collect())
                .collect()
        }
    }
}

fn check_examples(arch: &Architecture, examples: &[Example]) -> Result<(), NetworkError> {
    for ex in examples {
        if ex.input.len() != arch.input_len() {
            return Err(NetworkError::ShapeMismatch(format!(
                "example has {} values, network expects {}",
                ex.input.len(),
                arch.input_len()
            )));
        }
        if ex.label >= arch.classes {
            return Err(NetworkError::InvalidClass {
                index: ex.label,
                classes: arch.classes,
            });
        }
    }
    Ok(())
}

/// Flush-to-zero and denormals-are-zero for the current thread while alive.
/// Once the training data is fitted, gradients and Adam moments decay into the
/// subnormal range, where x86 arithmetic is orders of magnitude slower.
struct FlushSubnormals {
    #[cfg(target_arch = "x86_64")]
    saved: u32,
}

impl FlushSubnormals {
    #[allow(deprecated)]
    fn enable() -> Self {
        #[cfg(target_arch = "x86_64")]
        {
            use std::arch::x86_64::{_mm_getcsr, _mm_setcsr};
            const FTZ: u32 = 0x8000;
            const DAZ: u32 = 0x0040;
            // SAFETY: SSE is part of the x86_64 baseline; only the two
            // subnormal-handling bits change.
            let saved = unsafe { _mm_getcsr() };
            unsafe { _mm_setcsr(saved | FTZ | DAZ) };
            FlushSubnormals { saved }
        }
        #[cfg(not(target_arch = "x86_64"))]
        FlushSubnormals {}
    }
}

impl Drop for FlushSubnormals {
    #[allow(deprecated)]
    fn drop(&mut self) {
        #[cfg(target_arch = "x86_64")]
        // SAFETY: restores the value read in `enable`.
        unsafe {
            std::arch::x86_64::_mm_setcsr(self.saved)
        };
    }
}

/// Train a freshly initialised network. Deterministic for a given seed.
pub fn train(
    arch: Architecture,
    examples: &[Example],
    config: &TrainConfig,
) -> Result<(Network<f32>, Vec<EpochLog>), NetworkError> {
    config.validate()?;
    arch.validate()?;
    if examples.is_empty() {
        return Err(NetworkError::EmptyTrainingSet);
    }
    check_examples(&arch, examples)?;
    let _flush = FlushSubnormals::enable();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut network = Network::<f32>::init(arch, &mut rng)?;
    let mut adam = Adam::new(network.architecture(), config)?;
    let mut grads = Weights::zeros(network.architecture())?;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let (mut total_loss, mut correct) = (0.0, 0usize);
        for batch in epoch_batches(examples, config.batching, &mut rng) {
            let inputs: Vec<&[f32]> = batch
                .iter()
                .map(|&i| examples[i].input.as_slice())
                .collect();
            let labels: Vec<usize> = batch.iter().map(|&i| examples[i].label).collect();
            let cache = network.forward(&inputs)?;
            let posteriors: Vec<PosteriorVector> = (0..batch.len())
                .map(|b| PosteriorVector::from_logits(cache.logits(b)))
                .collect();
            total_loss += batch_loss(&posteriors, &labels)?;
            correct += posteriors
                .iter()
                .zip(&labels)
                .filter(|(p, &y)| p.argmax() == y)
                .count();
            let grad_logits: Vec<f32> = logit_gradient(&posteriors, &labels);
            network.backward_into(&cache, &grad_logits, GradientRule::Standard, &mut grads)?;
            adam.update(network.weights_mut(), &grads);
        }
        if !network.weights().is_finite() {
            return Err(NetworkError::InvalidConfig(format!(
                "weights diverged in epoch {epoch}"
            )));
        }
        log.push(EpochLog {
            epoch,
            loss: total_loss / examples.len() as f64,
            train_accuracy: correct as f64 / examples.len() as f64,
        });
    }
    Ok((network, log))
}

impl<T: Real> Network<T> {
    /// Posteriors for a list of inputs, processed in fixed-size batches.
    pub fn predict(&self, inputs: &[&[T]]) -> Result<Vec<PosteriorVector>, NetworkError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(EVAL_BATCH) {
            let cache = self.forward(chunk)?;
            out.extend((0..chunk.len()).map(|b| PosteriorVector::from_logits(cache.logits(b))));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate(network: &Network<f32>, examples: &[Example]) -> Result<Evaluation, NetworkError> {
    if examples.is_empty() {
        return Err(NetworkError::EmptyTestSet);
    }
    check_examples(network.architecture(), examples)?;
    let k = network.architecture().classes;
    let inputs: Vec<&[f32]> = examples.iter().map(|e| e.input.as_slice()).collect();
    let posteriors = network.predict(&inputs)?;
    let mut confusion = vec![vec![0usize; k]; k];
    for (p, ex) in posteriors.iter().zip(examples) {
        confusion[ex.label][p.argmax()] += 1;
    }
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / examples.len() as f64,
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub window_ms: u32,
    pub accuracy: f64,
}

/// Train and evaluate one model per window. `data` supplies the
/// `(train, test)` examples for a window; the input width follows the
/// window's frame count.
pub fn sweep_window<E, F>(
    template: &Architecture,
    config: &TrainConfig,
    windows: &[WindowMs],
    mut data: F,
) -> Result<Vec<SweepRow>, E>
where
    E: From<NetworkError>,
    F: FnMut(WindowMs) -> Result<(Vec<Example>, Vec<Example>), E>,
{
    let mut rows = Vec::with_capacity(windows.len());
    for &window in windows {
        let (train_set, test_set) = data(window)?;
        let arch = template.with_input(template.input_height, window.frames());
        let (network, _) = train(arch, &train_set, config)?;
        let eval = evaluate(&network, &test_set)?;
        rows.push(SweepRow {
            window_ms: window.ms(),
            accuracy: eval.accuracy,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, ConvSpec, PoolSpec};

    fn small_arch(classes: usize) -> Architecture {
        Architecture {
            input_height: 8,
            input_width: 6,
            conv: vec![ConvSpec {
                kernel_height: 3,
                kernel_width: 3,
                filters: 4,
            }],
            pool: PoolSpec::default(),
            hidden: vec![16],
            classes,
            activation: Activation::Relu,
        }
    }

    fn examples(n: usize, groups: usize) -> Vec<Example> {
        (0..n)
            .map(|i| Example {
                input: (0..48)
                    .map(|j| ((i * 7 + j) % 11) as f32 / 11.0 - 0.5)
                    .collect(),
                label: i % 3,
                group: i % groups,
            })
            .collect()
    }

    #[test]
    fn sentence_batches_cover_every_example_once() {
        let ex = examples(40, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batches = epoch_batches(&ex, Batching::Sentences(4), &mut rng);
        assert_eq!(batches.len(), 4); // 13 groups in chunks of 4
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..40).collect::<Vec<_>>());
        for b in &batches {
            let mut groups: Vec<usize> = b.iter().map(|&i| ex[i].group).collect();
            groups.dedup();
            assert!(groups.len() <= 4);
        }
    }

    #[test]
    fn segment_batches_fixed_size() {
        let ex = examples(10, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sizes: Vec<usize> = epoch_batches(&ex, Batching::Segments(4), &mut rng)
            .iter()
            .map(Vec::len)
            .collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn overfit_single_batch_loss_decreases() {
        let one = examples(1, 1).remove(0);
        let ex: Vec<Example> = std::iter::repeat_n(one, 50).collect();
        let config = TrainConfig {
            epochs: 5,
            batching: Batching::Segments(50),
            ..TrainConfig::default()
        };
        let (_, log) = train(small_arch(3), &ex, &config).unwrap();
        for w in log.windows(2) {
            assert!(w[1].loss < w[0].loss, "{log:?}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let ex = examples(30, 10);
        let config = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let (a, la) = train(small_arch(3), &ex, &config).unwrap();
        let (b, lb) = train(small_arch(3), &ex, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
    }

    #[test]
    fn empty_and_invalid() {
        let config = TrainConfig::default();
        assert!(matches!(
            train(small_arch(3), &[], &config),
            Err(NetworkError::EmptyTrainingSet)
        ));
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..config.clone()
        };
        assert!(matches!(
            train(small_arch(3), &examples(3, 1), &bad),
            Err(NetworkError::InvalidConfig(_))
        ));
        let mut ex = examples(3, 1);
        ex[0].label = 5;
        assert!(matches!(
            train(small_arch(3), &ex, &config),
            Err(NetworkError::InvalidClass { .. })
        ));
    }

    #[test]
    fn constant_predictor_accuracy_is_chance() {
        let arch = small_arch(3);
        let mut weights = Weights::<f32>::zeros(&arch).unwrap();
        weights.dense.last_mut().unwrap().bias.data_mut()[0] = 1.0;
        let net = Network::new(arch, weights).unwrap();
        let ex = examples(30, 30);
        let eval = evaluate(&net, &ex).unwrap();
        assert!((eval.accuracy - 1.0 / 3.0).abs() < 1e-12);
        let total: usize = eval.confusion.iter().flatten().sum();
        assert_eq!(total, 30);
        for (i, row) in eval.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), 10);
            assert_eq!(row[0], 10, "class {i}");
        }
    }
}
