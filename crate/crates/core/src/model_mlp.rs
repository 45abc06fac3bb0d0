//! Feed-forward binary classifier trained with mini-batch gradient descent on
//! binary cross-entropy.
//!
//! Layout: `layer_sizes = [p, h_1, ..., h_k, 1]`. Layer `l` maps
//! `layer_sizes[l]` inputs to `layer_sizes[l + 1]` outputs with a weight
//! matrix of shape `(out, in)` stored row-major. Hidden layers use the
//! configured activation; the single output unit is always the logistic
//! function, read as the probability of the benign class.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::FlowTable;
use crate::error::{Error, Result};
use crate::predictor::Predictor;
use crate::rng::SeededRng;
use crate::scalar::{sigmoid, Scalar};

/// Hidden layer widths of the reference architecture.
pub const DEFAULT_HIDDEN: [usize; 3] = [23, 15, 10];

/// Probabilities are clamped to `[LOSS_EPS, 1 - LOSS_EPS]` inside the loss.
pub const LOSS_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Logistic,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Logistic => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Logistic => a * (T::one() - a),
            Activation::Identity => T::one(),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "logistic" | "sigmoid" => Ok(Activation::Logistic),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::invalid(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel<T> {
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    weights: Vec<Vec<Vec<T>>>,
    biases: Vec<Vec<T>>,
}

/// Parameter-shaped buffer: one entry per weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<Vec<T>>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    fn zeros_like(model: &MlpModel<T>) -> Self {
        Self {
            weights: model
                .weights
                .iter()
                .map(|w| w.iter().map(|r| vec![T::zero(); r.len()]).collect())
                .collect(),
            biases: model.biases.iter().map(|b| vec![T::zero(); b.len()]).collect(),
        }
    }

    fn scale(&mut self, factor: T) {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().flatten().for_each(|g| *g *= factor);
            b.iter_mut().for_each(|g| *g *= factor);
        }
    }
}

/// Pre-activations and activations of every layer for one input.
struct Trace<T> {
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
}

impl<T: Scalar> MlpModel<T> {
    /// Glorot-uniform weights (bound `sqrt(6 / (fan_in + fan_out))`) and
    /// zero biases. Weights are drawn layer by layer, row by row.
    pub fn init(input_dim: usize, hidden_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_sizes.is_empty() || hidden_sizes.contains(&0) {
            return Err(Error::invalid("network dimensions must be positive and hidden_sizes non-empty"));
        }
        let mut layer_sizes = Vec::with_capacity(hidden_sizes.len() + 2);
        layer_sizes.push(input_dim);
        layer_sizes.extend_from_slice(hidden_sizes);
        layer_sizes.push(1);

        let mut rng = SeededRng::new(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_out)
                .map(|_| {
                    (0..fan_in)
                        .map(|_| T::lit(bound * (2.0 * rng.uniform() - 1.0)))
                        .collect()
                })
                .collect();
            weights.push(w);
            biases.push(vec![T::zero(); fan_out]);
        }
        Ok(Self {
            layer_sizes,
            hidden_activation: activation,
            weights,
            biases,
        })
    }

    /// Builds a model from explicit parameters, checking the shape chain.
    pub fn from_parameters(
        layer_sizes: Vec<usize>,
        hidden_activation: Activation,
        weights: Vec<Vec<Vec<T>>>,
        biases: Vec<Vec<T>>,
    ) -> Result<Self> {
        let model = Self {
            layer_sizes,
            hidden_activation,
            weights,
            biases,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = &self.layer_sizes;
        if sizes.len() < 3 || sizes.contains(&0) {
            return Err(Error::InvalidModel(format!("bad layer_sizes {sizes:?}")));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(Error::InvalidModel("output layer must have one unit".into()));
        }
        if self.weights.len() != sizes.len() - 1 || self.biases.len() != sizes.len() - 1 {
            return Err(Error::InvalidModel("layer count does not match layer_sizes".into()));
        }
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let w = &self.weights[l];
            if w.len() != fan_out || w.iter().any(|r| r.len() != fan_in) {
                return Err(Error::InvalidModel(format!(
                    "layer {l} weights are not {fan_out}x{fan_in}"
                )));
            }
            if self.biases[l].len() != fan_out {
                return Err(Error::InvalidModel(format!("layer {l} bias is not length {fan_out}")));
            }
        }
        let finite = self.weights.iter().flatten().flatten().all(|v| v.is_finite())
            && self.biases.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn weights(&self) -> &[Vec<Vec<T>>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<T>] {
        &self.biases
    }

    pub fn n_parameters(&self) -> usize {
        self.layer_sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model input".into()));
        }
        Ok(())
    }

    /// Probability of the benign class.
    pub fn forward(&self, x: &[T]) -> Result<T> {
        self.check_input(x)?;
        Ok(self.output(x))
    }

    /// Forward pass without input validation.
    pub fn output(&self, x: &[T]) -> T {
        let mut current = x.to_vec();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            current = w
                .iter()
                .zip(b)
                .map(|(row, &bias)| {
                    let z = dot(row, &current) + bias;
                    if l == last {
                        sigmoid(z)
                    } else {
                        self.hidden_activation.apply(z)
                    }
                })
                .collect();
        }
        current[0]
    }

    fn trace(&self, x: &[T]) -> Trace<T> {
        let mut activations = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.weights.len());
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = &activations[l];
            let z: Vec<T> = w.iter().zip(b).map(|(row, &bias)| dot(row, input) + bias).collect();
            let a = z
                .iter()
                .map(|&v| {
                    if l == last {
                        sigmoid(v)
                    } else {
                        self.hidden_activation.apply(v)
                    }
                })
                .collect();
            pre.push(z);
            activations.push(a);
        }
        Trace { activations, pre }
    }

    /// Clamped binary cross-entropy of one sample.
    pub fn loss(&self, x: &[T], label: u8) -> T {
        bce(self.output(x), label)
    }

    /// Adds the gradient of one sample's loss into `grads`, returning the loss.
    fn accumulate(&self, x: &[T], label: u8, grads: &mut Gradients<T>) -> T {
        let trace = self.trace(x);
        let p = trace.activations.last().unwrap()[0];
        let eps = T::lit(LOSS_EPS);
        let y = if label == 1 { T::one() } else { T::zero() };
        // Outside the clamp window the loss is flat in the output.
        let mut delta = if p < eps || p > T::one() - eps {
            vec![T::zero()]
        } else {
            vec![p - y]
        };
        for l in (0..self.weights.len()).rev() {
            let input = &trace.activations[l];
            for (i, &d) in delta.iter().enumerate() {
                grads.biases[l][i] += d;
                for (g, &a) in grads.weights[l][i].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let z_prev = &trace.pre[l - 1];
            let a_prev = &trace.activations[l];
            delta = (0..self.layer_sizes[l])
                .map(|j| {
                    let back: T = delta.iter().zip(w).map(|(&d, row)| d * row[j]).sum();
                    back * self.hidden_activation.derivative(z_prev[j], a_prev[j])
                })
                .collect();
        }
        bce(p, label)
    }

    /// Analytic gradient of one sample's loss.
    pub fn gradient(&self, x: &[T], label: u8) -> Result<Gradients<T>> {
        self.check_input(x)?;
        let mut g = Gradients::zeros_like(self);
        self.accumulate(x, label, &mut g);
        Ok(g)
    }

    pub fn predict_batch(&self, table: &FlowTable<T>) -> Result<Vec<T>> {
        if table.n_features() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: table.n_features(),
            });
        }
        Ok(table.rows().iter().map(|r| self.output(r)).collect())
    }

    /// Mean loss over a table.
    pub fn mean_loss(&self, table: &FlowTable<T>) -> T {
        let total: T = table
            .rows()
            .iter()
            .zip(table.labels())
            .map(|(x, &y)| self.loss(x, y))
            .sum();
        total / T::lit(table.n_rows() as f64)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::dataio::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = crate::dataio::read_json(path)?;
        model.validate()?;
        Ok(model)
    }

    fn apply_update(&mut self, step: &Gradients<T>) {
        for l in 0..self.weights.len() {
            for (row, grow) in self.weights[l].iter_mut().zip(&step.weights[l]) {
                for (w, &g) in row.iter_mut().zip(grow) {
                    *w -= g;
                }
            }
            for (b, &g) in self.biases[l].iter_mut().zip(&step.biases[l]) {
                *b -= g;
            }
        }
    }

    /// Trains a copy of `self`, returning it with the mean training loss
    /// recorded after every epoch.
    pub fn train(&self, data: &FlowTable<T>, config: &TrainConfig) -> Result<(Self, Vec<T>)> {
        config.validate()?;
        if data.n_features() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: data.n_features(),
            });
        }
        if !data.has_both_classes() {
            return Err(Error::SingleClass);
        }
        let mut model = self.clone();
        let mut rng = SeededRng::new(config.seed);
        let mut optimizer = OptimizerState::new(config, &model);
        let mut order: Vec<usize> = (0..data.n_rows()).collect();
        let mut history = Vec::with_capacity(config.epochs);
        let mut grads = Gradients::zeros_like(&model);
        for epoch in 0..config.epochs {
            rng.shuffle(&mut order);
            for batch in order.chunks(config.batch_size) {
                grads.scale(T::zero());
                for &i in batch {
                    model.accumulate(data.row(i), data.labels()[i], &mut grads);
                }
                grads.scale(T::one() / T::lit(batch.len() as f64));
                let step = optimizer.step(&grads);
                model.apply_update(step);
            }
            let loss = model.mean_loss(data);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss diverged at epoch {epoch}")));
            }
            history.push(loss);
        }
        Ok((model, history))
    }

    /// Largest relative error `|a - n| / max(|a| + |n|, 1e-8)` between the
    /// analytic gradient and a central finite difference, over every
    /// parameter.
    pub fn gradient_check(&self, x: &[T], label: u8, epsilon: f64) -> Result<T> {
        if !(1e-7..=1e-3).contains(&epsilon) {
            return Err(Error::invalid(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
        }
        let analytic = self.gradient(x, label)?;
        let eps = T::lit(epsilon);
        let two_eps = eps + eps;
        let floor = T::lit(1e-8);
        let mut probe = self.clone();
        let mut worst = T::zero();
        let mut record = |a: T, n: T| {
            let rel = (a - n).abs() / (a.abs() + n.abs()).max(floor);
            if rel > worst {
                worst = rel;
            }
        };
        for l in 0..self.weights.len() {
            for i in 0..self.weights[l].len() {
                for j in 0..self.weights[l][i].len() {
                    let orig = probe.weights[l][i][j];
                    probe.weights[l][i][j] = orig + eps;
                    let up = probe.loss(x, label);
                    probe.weights[l][i][j] = orig - eps;
                    let down = probe.loss(x, label);
                    probe.weights[l][i][j] = orig;
                    record(analytic.weights[l][i][j], (up - down) / two_eps);
                }
                let orig = probe.biases[l][i];
                probe.biases[l][i] = orig + eps;
                let up = probe.loss(x, label);
                probe.biases[l][i] = orig - eps;
                let down = probe.loss(x, label);
                probe.biases[l][i] = orig;
                record(analytic.biases[l][i], (up - down) / two_eps);
            }
        }
        Ok(worst)
    }
}

impl<T: Scalar> Predictor<T> for MlpModel<T> {
    fn predict(&self, x: &[T]) -> T {
        self.output(x)
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn bce<T: Scalar>(p: T, label: u8) -> T {
    let eps = T::lit(LOSS_EPS);
    let p = p.max(eps).min(T::one() - eps);
    if label == 1 {
        -p.ln()
    } else {
        -(T::one() - p).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.01,
            seed: 0,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }
}

enum OptimizerState<T> {
    Sgd {
        lr: T,
        step: Gradients<T>,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        epsilon: T,
        t: i32,
        m: Gradients<T>,
        v: Gradients<T>,
        step: Gradients<T>,
    },
}

impl<T: Scalar> OptimizerState<T> {
    fn new(config: &TrainConfig, model: &MlpModel<T>) -> Self {
        let zeros = Gradients::zeros_like(model);
        match config.optimizer {
            Optimizer::Sgd => OptimizerState::Sgd {
                lr: T::lit(config.learning_rate),
                step: zeros,
            },
            Optimizer::Adam { beta1, beta2, epsilon } => OptimizerState::Adam {
                lr: config.learning_rate,
                beta1,
                beta2,
                epsilon: T::lit(epsilon),
                t: 0,
                m: zeros.clone(),
                v: zeros.clone(),
                step: zeros,
            },
        }
    }

    fn step(&mut self, grads: &Gradients<T>) -> &Gradients<T> {
        match self {
            OptimizerState::Sgd { lr, step } => {
                for (s, g) in flat_mut(step).zip(flat(grads)) {
                    *s = *lr * g;
                }
                step
            }
            OptimizerState::Adam {
                lr,
                beta1,
                beta2,
                epsilon,
                t,
                m,
                v,
                step,
            } => {
                *t += 1;
                let (b1, b2) = (T::lit(*beta1), T::lit(*beta2));
                let c1 = T::lit(1.0 - beta1.powi(*t));
                let c2 = T::lit(1.0 - beta2.powi(*t));
                let lr = T::lit(*lr);
                let moments = flat_mut(m).zip(flat_mut(v));
                for ((s, (mi, vi)), g) in flat_mut(step).zip(moments).zip(flat(grads)) {
                    *mi = b1 * *mi + (T::one() - b1) * g;
                    *vi = b2 * *vi + (T::one() - b2) * g * g;
                    let m_hat = *mi / c1;
                    let v_hat = *vi / c2;
                    *s = lr * m_hat / (v_hat.sqrt() + *epsilon);
                }
                step
            }
        }
    }
}

fn flat<T: Scalar>(g: &Gradients<T>) -> impl Iterator<Item = T> + '_ {
    g.weights
        .iter()
        .zip(&g.biases)
        .flat_map(|(w, b)| w.iter().flatten().chain(b.iter()).copied())
}

fn flat_mut<T: Scalar>(g: &mut Gradients<T>) -> impl Iterator<Item = &mut T> + '_ {
    g.weights
        .iter_mut()
        .zip(g.biases.iter_mut())
        .flat_map(|(w, b)| w.iter_mut().flatten().chain(b.iter_mut()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate, Distribution, FeatureSpec, SynthSpec};

    fn zero_model(input: usize, hidden: &[usize]) -> MlpModel<f64> {
        let mut m = MlpModel::init(input, hidden, Activation::Relu, 0).unwrap();
        m.weights.iter_mut().flatten().flatten().for_each(|w| *w = 0.0);
        m
    }

    #[test]
    fn init_shapes_follow_architecture() {
        let m = MlpModel::<f64>::init(20, &DEFAULT_HIDDEN, Activation::Relu, 1).unwrap();
        let shapes: Vec<(usize, usize)> = m.weights.iter().map(|w| (w.len(), w[0].len())).collect();
        assert_eq!(shapes, vec![(23, 20), (15, 23), (10, 15), (1, 10)]);
        assert!(m.biases.iter().flatten().all(|&b| b == 0.0));
        for (l, w) in m.weights.iter().enumerate() {
            let bound = (6.0 / (m.layer_sizes[l] + m.layer_sizes[l + 1]) as f64).sqrt();
            assert!(w.iter().flatten().all(|v| v.abs() <= bound));
        }

        let tiny = MlpModel::<f64>::init(1, &[1], Activation::Relu, 1).unwrap();
        let shapes: Vec<(usize, usize)> = tiny.weights.iter().map(|w| (w.len(), w[0].len())).collect();
        assert_eq!(shapes, vec![(1, 1), (1, 1)]);

        assert_eq!(m, MlpModel::init(20, &DEFAULT_HIDDEN, Activation::Relu, 1).unwrap());
        assert!(MlpModel::<f64>::init(0, &[3], Activation::Relu, 1).is_err());
        assert!(MlpModel::<f64>::init(3, &[], Activation::Relu, 1).is_err());
    }

    #[test]
    fn zero_network_outputs_half() {
        let m = zero_model(4, &[3, 2]);
        assert_eq!(m.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn linear_hidden_closed_form() {
        let m = MlpModel::from_parameters(
            vec![1, 1, 1],
            Activation::Identity,
            vec![vec![vec![1.0]], vec![vec![0.0]]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        assert_eq!(m.forward(&[3.7]).unwrap(), 0.5);
        let m = MlpModel::from_parameters(
            vec![1, 1, 1],
            Activation::Identity,
            vec![vec![vec![1.0]], vec![vec![2.0]]],
            vec![vec![0.0], vec![0.0]],
        )
        .unwrap();
        let x = 0.3;
        assert!((m.forward(&[x]).unwrap() - 1.0 / (1.0 + (-2.0f64 * x).exp())).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_two_layer_chain() {
        // 2 inputs -> 2 relu units -> sigmoid.
        let m = MlpModel::from_parameters(
            vec![2, 2, 1],
            Activation::Relu,
            vec![vec![vec![0.5, -1.0], vec![2.0, 0.25]], vec![vec![1.5, -0.75]]],
            vec![vec![0.1, -0.2], vec![0.05]],
        )
        .unwrap();
        let x = [0.8, 0.3];
        // h1 = relu(0.4 - 0.3 + 0.1) = 0.2; h2 = relu(1.6 + 0.075 - 0.2) = 1.475
        // z = 1.5*0.2 - 0.75*1.475 + 0.05 = -0.75625
        let expected = 1.0 / (1.0 + 0.75625f64.exp());
        assert!((m.forward(&x).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let m = zero_model(2, &[2]);
        assert!(matches!(m.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.forward(&[1.0, f64::NAN]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn gradient_check_on_reference_architecture() {
        let m = MlpModel::<f64>::init(20, &DEFAULT_HIDDEN, Activation::Relu, 3).unwrap();
        let mut rng = SeededRng::new(99);
        let x: Vec<f64> = (0..20).map(|_| rng.uniform()).collect();
        let err = m.gradient_check(&x, 1, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
        let err = m.gradient_check(&x, 0, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_check_at_zero_model() {
        let m = zero_model(5, &[4, 3]);
        let err = m.gradient_check(&[0.1, 0.2, 0.3, 0.4, 0.5], 1, 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn gradient_check_logistic_hidden() {
        let m = MlpModel::<f64>::init(6, &[5, 4], Activation::Logistic, 8).unwrap();
        let err = m.gradient_check(&[0.9, 0.1, 0.4, 0.4, 0.0, 1.0], 0, 1e-5).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn gradient_check_epsilon_range() {
        let m = zero_model(2, &[2]);
        assert!(m.gradient_check(&[0.0, 0.0], 1, 1e-2).is_err());
        assert!(m.gradient_check(&[0.0, 0.0], 1, 1e-9).is_err());
    }

    fn separable(n: usize, seed: u64) -> FlowTable<f64> {
        let spec = SynthSpec {
            features: (0..2)
                .map(|j| FeatureSpec {
                    name: format!("x{j}"),
                    benign: Distribution::Normal { mean: 0.0, std: 0.5 },
                    attack: Distribution::Normal { mean: 5.0, std: 0.5 },
                })
                .collect(),
        };
        let raw = generate(&spec, n, n, seed).unwrap();
        let t = crate::dataio::encode_labels(&raw, "BENIGN").unwrap();
        let s = crate::dataio::fit_scaler(&t).unwrap();
        crate::dataio::apply_scaler(&t, &s).unwrap()
    }

    #[test]
    fn trains_on_separable_data() {
        let data = separable(200, 5);
        let m = MlpModel::init(2, &DEFAULT_HIDDEN, Activation::Relu, 7).unwrap();
        let config = TrainConfig {
            epochs: 50,
            seed: 11,
            ..TrainConfig::default()
        };
        let (trained, history) = m.train(&data, &config).unwrap();
        assert_eq!(history.len(), 50);
        let probs = trained.predict_batch(&data).unwrap();
        let correct = probs
            .iter()
            .zip(data.labels())
            .filter(|(&p, &y)| (p >= 0.5) == (y == 1))
            .count();
        assert!(correct as f64 / data.n_rows() as f64 >= 0.99);
        for pair in history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-3, "loss rose: {pair:?}");
        }
        let (again, _) = m.train(&data, &config).unwrap();
        assert_eq!(again, trained);
    }

    #[test]
    fn adam_trains_too() {
        let data = separable(100, 6);
        let m = MlpModel::init(2, &[8], Activation::Relu, 7).unwrap();
        let config = TrainConfig {
            epochs: 20,
            learning_rate: 0.01,
            optimizer: Optimizer::adam(),
            ..TrainConfig::default()
        };
        let (trained, history) = m.train(&data, &config).unwrap();
        assert!(history.last().unwrap() < &history[0]);
        assert!(trained.validate().is_ok());
    }

    #[test]
    fn training_rejects_single_class() {
        let t = FlowTable::new(vec!["a".into()], vec![vec![0.1], vec![0.2]], vec![1, 1]).unwrap();
        let m = MlpModel::init(1, &[2], Activation::Relu, 0).unwrap();
        let err = m.train(&t, &TrainConfig::default()).unwrap_err();
        assert_eq!(err.to_string(), "single-class data");
    }

    #[test]
    fn predict_batch_matches_forward() {
        let m = MlpModel::<f64>::init(3, &[4], Activation::Relu, 2).unwrap();
        let rows = vec![vec![0.1, 0.2, 0.3], vec![1.0, 0.0, 0.5], vec![0.0, 0.0, 0.0]];
        let t = FlowTable::new(vec!["a".into(), "b".into(), "c".into()], rows.clone(), vec![0, 1, 0]).unwrap();
        let batch = m.predict_batch(&t).unwrap();
        assert_eq!(batch.len(), 3);
        for (p, r) in batch.iter().zip(&rows) {
            assert_eq!(*p, m.forward(r).unwrap());
        }
        let empty = FlowTable::<f64>::new(vec!["a".into(), "b".into(), "c".into()], vec![], vec![]).unwrap();
        assert!(m.predict_batch(&empty).unwrap().is_empty());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let m = MlpModel::<f64>::init(5, &DEFAULT_HIDDEN, Activation::Relu, 21).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        m.save(f.path()).unwrap();
        let back = MlpModel::<f64>::load(f.path()).unwrap();
        assert_eq!(back, m);
        let mut rng = SeededRng::new(1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.uniform() * 4.0 - 2.0).collect();
            assert_eq!(back.forward(&x).unwrap().to_bits(), m.forward(&x).unwrap().to_bits());
        }
    }

    #[test]
    fn load_rejects_truncated_and_misshapen_files() {
        let m = MlpModel::<f64>::init(3, &[2], Activation::Relu, 1).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), &json[..json.len() / 2]).unwrap();
        assert!(matches!(MlpModel::<f64>::load(f.path()), Err(Error::Json(_))));

        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["layer_sizes"] = serde_json::json!([4, 2, 1]);
        std::fs::write(f.path(), v.to_string()).unwrap();
        assert!(matches!(MlpModel::<f64>::load(f.path()), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn single_precision_model_trains() {
        let data64 = separable(60, 2);
        let rows: Vec<Vec<f32>> = data64.rows().iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
        let data = FlowTable::new(data64.feature_names().to_vec(), rows, data64.labels().to_vec()).unwrap();
        let m = MlpModel::<f32>::init(2, &[6, 4], Activation::Relu, 3).unwrap();
        let config = TrainConfig { epochs: 40, learning_rate: 0.05, ..TrainConfig::default() };
        let (trained, history) = m.train(&data, &config).unwrap();
        assert!(history.last().unwrap() < &history[0]);
        let p = trained.forward(&[0.0, 0.0]).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }
}
