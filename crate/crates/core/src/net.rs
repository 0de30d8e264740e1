//! Bias-free fully connected ReLU network trained with plain SGD.
//!
//! The network has no biases so that it maps directly onto a spiking network
//! with positive firing rates. Training minimizes softmax cross-entropy on the
//! output pre-activations; reported activations (and everything recorded in
//! [`ActivationStats`]) are ReLU outputs, including the output layer.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Layer widths plus one weight matrix per adjacent layer pair.
///
/// Matrix `l` has shape `(arch[l + 1], arch[l])`: row `j` holds the incoming
/// weights of unit `j` in layer `l + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Vec<usize>,
    weights: Vec<Array2<f64>>,
}

impl Network {
    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(arch: &[usize], seed: u64) -> Result<Self> {
        validate_arch(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = arch
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..=bound))
            })
            .collect();
        Ok(Self {
            arch: arch.to_vec(),
            weights,
        })
    }

    pub fn zeros(arch: &[usize]) -> Result<Self> {
        validate_arch(arch)?;
        let weights = arch
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        Ok(Self {
            arch: arch.to_vec(),
            weights,
        })
    }

    /// Builds a network from explicit matrices, inferring the architecture.
    pub fn from_weights(weights: Vec<Array2<f64>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArchitecture(
                "at least one weight matrix is required".into(),
            ));
        }
        let mut arch = vec![weights[0].ncols()];
        for (l, w) in weights.iter().enumerate() {
            if w.ncols() != arch[l] {
                return Err(Error::DimensionMismatch {
                    expected: arch[l],
                    actual: w.ncols(),
                    context: "weight matrix columns",
                });
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArchitecture(format!(
                    "non-finite weight in layer {l}"
                )));
            }
            arch.push(w.nrows());
        }
        validate_arch(&arch)?;
        Ok(Self { arch, weights })
    }

    pub fn arch(&self) -> &[usize] {
        &self.arch
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn n_inputs(&self) -> usize {
        self.arch[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.arch.last().unwrap()
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
    }

    /// Single-example forward pass. The trace includes the input layer.
    pub fn forward(&self, input: &[f64]) -> Result<ActivationTrace> {
        if input.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                actual: input.len(),
                context: "network input",
            });
        }
        let mut layers = Vec::with_capacity(self.arch.len());
        layers.push(Array1::from(input.to_vec()));
        let mut output_preactivation = Array1::zeros(0);
        for w in &self.weights {
            output_preactivation = w.dot(layers.last().unwrap());
            layers.push(output_preactivation.mapv(relu));
        }
        Ok(ActivationTrace {
            layers,
            output_preactivation,
        })
    }

    /// Batched forward pass returning ReLU activations of every layer
    /// (rows are examples). Element 0 is the input batch itself.
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        if inputs.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                actual: inputs.ncols(),
                context: "network input",
            });
        }
        let mut acts = Vec::with_capacity(self.arch.len());
        acts.push(inputs.to_owned());
        for w in &self.weights {
            let z = acts.last().unwrap().dot(&w.t()).mapv(relu);
            acts.push(z);
        }
        Ok(acts)
    }

    /// Predicted class for every row of `inputs`.
    pub fn predict_batch(&self, inputs: ArrayView2<f64>) -> Result<Vec<usize>> {
        let out = self.output_preactivations(inputs)?;
        Ok(out.rows().into_iter().map(|r| argmax(r)).collect())
    }

    /// Mean softmax cross-entropy over output pre-activations.
    pub fn loss(&self, inputs: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
        let z = self.output_preactivations(inputs)?;
        let mut total = 0.0;
        for (row, &label) in z.rows().into_iter().zip(labels) {
            total += cross_entropy(row, label);
        }
        Ok(total / labels.len().max(1) as f64)
    }

    /// Loss and analytic gradient of [`Network::loss`] with respect to every
    /// weight, without dropout.
    pub fn loss_and_gradients(
        &self,
        inputs: ArrayView2<f64>,
        labels: &[usize],
    ) -> Result<(f64, Vec<Array2<f64>>)> {
        check_labels(labels, self.n_outputs())?;
        let pass = self.train_pass(inputs, labels, 0.0, None)?;
        Ok((pass.loss, pass.grads))
    }

    fn output_preactivations(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if inputs.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                actual: inputs.ncols(),
                context: "network input",
            });
        }
        let mut a = inputs.to_owned();
        let last = self.weights.len() - 1;
        for (l, w) in self.weights.iter().enumerate() {
            let z = a.dot(&w.t());
            a = if l == last { z } else { z.mapv(relu) };
        }
        Ok(a)
    }

    /// Forward + backward on one mini-batch. `dropout` applies inverted
    /// dropout to hidden layers using `rng`.
    fn train_pass(
        &self,
        inputs: ArrayView2<f64>,
        labels: &[usize],
        dropout: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<TrainPass> {
        if inputs.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                actual: inputs.ncols(),
                context: "network input",
            });
        }
        let batch = inputs.nrows();
        let n_layers = self.weights.len();
        let keep = 1.0 - dropout;

        // acts[l] is the (possibly dropped-out) input to weight layer l.
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        // Derivative gates for hidden layers: relu'(z) * mask / keep.
        let mut gates: Vec<Array2<f64>> = Vec::with_capacity(n_layers - 1);
        let mut layer_max = vec![0.0f64; n_layers + 1];
        layer_max[0] = inputs.iter().cloned().fold(0.0, f64::max);

        acts.push(inputs.to_owned());
        let mut out_z = None;
        for (l, w) in self.weights.iter().enumerate() {
            let z = acts[l].dot(&w.t());
            if l + 1 == n_layers {
                layer_max[l + 1] = z.iter().cloned().fold(0.0, f64::max);
                out_z = Some(z);
                break;
            }
            let mut a = z.mapv(relu);
            layer_max[l + 1] = a.iter().cloned().fold(0.0, f64::max);
            let mut gate = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            if dropout > 0.0 {
                let rng = rng.as_deref_mut().expect("dropout requires an rng");
                Zip::from(&mut a).and(&mut gate).for_each(|a, g| {
                    if rng.random::<f64>() < keep {
                        *a /= keep;
                        *g /= keep;
                    } else {
                        *a = 0.0;
                        *g = 0.0;
                    }
                });
            }
            acts.push(a);
            gates.push(gate);
        }
        let out_z = out_z.unwrap();

        // dL/dz for softmax cross-entropy, averaged over the batch.
        let mut loss = 0.0;
        let mut delta = Array2::zeros(out_z.raw_dim());
        for ((z, mut d), &label) in out_z
            .rows()
            .into_iter()
            .zip(delta.rows_mut())
            .zip(labels)
        {
            loss += cross_entropy(z, label);
            let p = softmax(z);
            d.assign(&p);
            d[label] -= 1.0;
        }
        let scale = 1.0 / batch as f64;
        loss *= scale;
        delta.mapv_inplace(|v| v * scale);

        let mut grads = vec![Array2::zeros((0, 0)); n_layers];
        for l in (0..n_layers).rev() {
            grads[l] = delta.t().dot(&acts[l]);
            if l > 0 {
                let mut back = delta.dot(&self.weights[l]);
                back *= &gates[l - 1];
                delta = back;
            }
        }

        Ok(TrainPass {
            loss,
            grads,
            layer_max,
        })
    }
}

struct TrainPass {
    loss: f64,
    grads: Vec<Array2<f64>>,
    layer_max: Vec<f64>,
}

fn validate_arch(arch: &[usize]) -> Result<()> {
    if arch.len() < 2 {
        return Err(Error::InvalidArchitecture(format!(
            "need at least 2 layers, got {}",
            arch.len()
        )));
    }
    if let Some(pos) = arch.iter().position(|&w| w == 0) {
        return Err(Error::InvalidArchitecture(format!(
            "layer {pos} has zero width"
        )));
    }
    Ok(())
}

fn check_labels(labels: &[usize], n_classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= n_classes) {
        Some(&label) => Err(Error::LabelOutOfRange { label, n_classes }),
        None => Ok(()),
    }
}

#[inline]
pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax(z: ArrayView1<f64>) -> Array1<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = z.mapv(|v| (v - m).exp());
    let sum = e.sum();
    e / sum
}

fn cross_entropy(z: ArrayView1<f64>, label: usize) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[label]
}

/// Per-layer activations of one forward pass, input layer first.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub layers: Vec<Array1<f64>>,
    /// Output layer before the ReLU; classification reads this.
    pub output_preactivation: Array1<f64>,
}

impl ActivationTrace {
    pub fn output(&self) -> &Array1<f64> {
        self.layers.last().unwrap()
    }

    pub fn predicted(&self) -> usize {
        argmax(self.output_preactivation.view())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Statistics gathered while training, consumed by conversion and sleep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationStats {
    /// Running max of each layer's activation, input layer included.
    pub max_activation: Vec<f64>,
    /// Running mean of every training input seen so far, across tasks.
    pub mean_input: Vec<f64>,
    pub n_examples_seen: usize,
}

impl ActivationStats {
    pub fn new(arch: &[usize]) -> Self {
        Self {
            max_activation: vec![0.0; arch.len()],
            mean_input: vec![0.0; arch[0]],
            n_examples_seen: 0,
        }
    }

    pub fn check_compatible(&self, net: &Network) -> Result<()> {
        if self.max_activation.len() != net.arch().len() {
            return Err(Error::DimensionMismatch {
                expected: net.arch().len(),
                actual: self.max_activation.len(),
                context: "activation stats layers",
            });
        }
        if self.mean_input.len() != net.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: net.n_inputs(),
                actual: self.mean_input.len(),
                context: "activation stats mean input",
            });
        }
        Ok(())
    }

    /// Folds a batch of inputs into the running mean.
    pub fn fold_inputs(&mut self, inputs: ArrayView2<f64>) {
        let m = inputs.nrows();
        if m == 0 {
            return;
        }
        let n = self.n_examples_seen as f64;
        let sums = inputs.sum_axis(Axis(0));
        let total = n + m as f64;
        for (mean, s) in self.mean_input.iter_mut().zip(sums.iter()) {
            *mean = (*mean * n + s) / total;
        }
        self.n_examples_seen += m;
    }

    fn observe_max(&mut self, layer_max: &[f64]) {
        for (m, &v) in self.max_activation.iter_mut().zip(layer_max) {
            if v > *m {
                *m = v;
            }
        }
    }
}

/// Trains `net` on one task with mini-batch SGD and updates `stats`.
pub fn train_task(
    net: &Network,
    data: &Dataset,
    cfg: &TrainConfig,
    stats: &ActivationStats,
) -> Result<(Network, ActivationStats)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != net.n_inputs() {
        return Err(Error::DimensionMismatch {
            expected: net.n_inputs(),
            actual: data.dim(),
            context: "dataset vectors",
        });
    }
    check_labels(data.labels(), net.n_outputs())?;
    stats.check_compatible(net)?;

    let mut net = net.clone();
    let mut stats = stats.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inputs = data.inputs();
    let labels = data.labels();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch_x = inputs.select(Axis(0), chunk);
            let batch_y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let pass = net.train_pass(batch_x.view(), &batch_y, cfg.dropout, Some(&mut rng))?;
            stats.observe_max(&pass.layer_max);
            if cfg.learning_rate > 0.0 {
                for (w, g) in net.weights.iter_mut().zip(&pass.grads) {
                    w.scaled_add(-cfg.learning_rate, g);
                }
            }
        }
    }
    stats.fold_inputs(inputs);
    debug_assert!(net.is_finite());
    Ok((net, stats))
}

/// Classification summary for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub per_class_accuracy: Vec<f64>,
}

impl Metrics {
    pub fn from_predictions(labels: &[usize], predicted: &[usize], n_classes: usize) -> Self {
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for (&t, &p) in labels.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: usize = row.iter().sum();
                if n == 0 {
                    0.0
                } else {
                    row[c] as f64 / n as f64
                }
            })
            .collect();
        Self {
            accuracy: correct as f64 / labels.len().max(1) as f64,
            confusion,
            per_class_accuracy,
        }
    }

    /// Accuracy restricted to examples whose true class is in `classes`.
    pub fn accuracy_on(&self, classes: &[usize]) -> f64 {
        let (mut correct, mut total) = (0, 0);
        for &c in classes {
            correct += self.confusion[c][c];
            total += self.confusion[c].iter().sum::<usize>();
        }
        if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        }
    }
}

pub fn evaluate(net: &Network, data: &Dataset) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_classes = net.n_outputs();
    check_labels(data.labels(), n_classes)?;
    let mut predicted = Vec::with_capacity(data.len());
    // Chunked so MNIST-sized test sets do not materialize every activation at once.
    let inputs = data.inputs();
    for start in (0..data.len()).step_by(1000) {
        let end = (start + 1000).min(data.len());
        predicted.extend(net.predict_batch(inputs.slice(s![start..end, ..]))?);
    }
    Ok(Metrics::from_predictions(data.labels(), &predicted, n_classes))
}
