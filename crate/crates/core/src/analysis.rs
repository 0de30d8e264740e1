//! Diagnostics: weight spread, class correlations, hidden-unit partitions
//! and the two-pattern forgetting rate.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{gen_binary_patterns, Dataset};
use crate::error::{Error, Result};
use crate::net::{evaluate, train_task, ActivationStats, Network, TrainConfig};

/// Weight statistics for one class of a single-layer patches network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpread {
    pub class: usize,
    pub on_mean: f64,
    pub off_mean: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadReport {
    pub per_class: Vec<ClassSpread>,
    pub mean_spread: f64,
}

/// Mean weight from each class's on-pixels to its output minus the mean from
/// its off-pixels. On-pixels are read from the first example of each class.
pub fn weight_spread(net: &Network, patches: &Dataset) -> Result<SpreadReport> {
    if net.depth() != 1 {
        return Err(Error::InvalidArchitecture(format!(
            "weight spread needs a network without hidden layers, got {:?}",
            net.arch()
        )));
    }
    if net.n_inputs() != patches.dim() || net.n_outputs() != patches.n_classes() {
        return Err(Error::InvalidArchitecture(format!(
            "network {:?} does not match {} pixels / {} classes",
            net.arch(),
            patches.dim(),
            patches.n_classes()
        )));
    }
    let w = &net.weights()[0];
    let inputs = patches.inputs();
    let mut per_class = Vec::new();
    for class in 0..patches.n_classes() {
        let Some(row) = patches.labels().iter().position(|&l| l == class) else {
            continue;
        };
        let image = inputs.row(row);
        let (mut on, mut n_on, mut off, mut n_off) = (0.0, 0usize, 0.0, 0usize);
        for (i, &x) in image.iter().enumerate() {
            if x > 0.0 {
                on += w[(class, i)];
                n_on += 1;
            } else {
                off += w[(class, i)];
                n_off += 1;
            }
        }
        let on_mean = if n_on > 0 { on / n_on as f64 } else { 0.0 };
        let off_mean = if n_off > 0 { off / n_off as f64 } else { 0.0 };
        per_class.push(ClassSpread {
            class,
            on_mean,
            off_mean,
            spread: on_mean - off_mean,
        });
    }
    if per_class.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mean_spread = per_class.iter().map(|c| c.spread).sum::<f64>() / per_class.len() as f64;
    Ok(SpreadReport {
        per_class,
        mean_spread,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    /// Activation layer the vectors came from (0 is the input).
    pub layer: usize,
    /// Mean Pearson correlation between classes; `NaN` where a class has
    /// too few usable examples.
    pub matrix: Vec<Vec<f64>>,
    /// Examples used per class after the cap and the variance filter.
    pub used: Vec<usize>,
    /// Examples dropped because their activation vector was constant.
    pub skipped: usize,
}

impl CorrelationMatrix {
    pub fn mean_diagonal(&self) -> f64 {
        mean_finite((0..self.matrix.len()).map(|i| self.matrix[i][i]))
    }

    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.matrix.len();
        mean_finite(
            (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .map(|(i, j)| self.matrix[i][j]),
        )
    }
}

fn mean_finite(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Class-by-class mean Pearson correlation of activation vectors at `layer`,
/// using at most `cap_per_class` examples of each class (the first ones).
pub fn activation_correlation(
    net: &Network,
    data: &Dataset,
    layer: usize,
    cap_per_class: usize,
) -> Result<CorrelationMatrix> {
    if layer == 0 || layer > net.depth() {
        return Err(Error::InvalidConfig(format!(
            "layer {layer} is not a hidden or output layer of a {}-layer network",
            net.depth()
        )));
    }
    if cap_per_class == 0 {
        return Err(Error::InvalidConfig("cap_per_class must be positive".into()));
    }
    let n_classes = data.n_classes();
    let mut picked: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in data.labels().iter().enumerate() {
        if picked[label].len() < cap_per_class {
            picked[label].push(i);
        }
    }
    let order: Vec<usize> = picked.iter().flatten().copied().collect();
    let acts = net.forward_batch(data.inputs().select(Axis(0), &order).view())?;
    let acts = &acts[layer];

    // Standardize rows to zero mean and unit norm so a dot product is a
    // Pearson correlation.
    let mut rows: Vec<Array1<f64>> = Vec::new();
    let mut class_of = Vec::new();
    let mut skipped = 0;
    for (row, &i) in acts.rows().into_iter().zip(&order) {
        let centered = &row - row.mean().unwrap_or(0.0);
        let norm = centered.dot(&centered).sqrt();
        if norm <= f64::EPSILON * row.len() as f64 {
            skipped += 1;
            continue;
        }
        rows.push(centered / norm);
        class_of.push(data.labels()[i]);
    }
    let width = acts.ncols();
    let mut z = Array2::zeros((rows.len(), width));
    for (mut dst, src) in z.rows_mut().into_iter().zip(&rows) {
        dst.assign(src);
    }
    let gram = z.dot(&z.t());

    let mut sum = vec![vec![0.0; n_classes]; n_classes];
    let mut count = vec![vec![0usize; n_classes]; n_classes];
    for a in 0..rows.len() {
        for b in 0..rows.len() {
            if a == b {
                continue;
            }
            let (i, j) = (class_of[a], class_of[b]);
            sum[i][j] += gram[(a, b)].clamp(-1.0, 1.0);
            count[i][j] += 1;
        }
    }
    let matrix = (0..n_classes)
        .map(|i| {
            (0..n_classes)
                .map(|j| {
                    if count[i][j] == 0 {
                        f64::NAN
                    } else {
                        sum[i][j] / count[i][j] as f64
                    }
                })
                .collect()
        })
        .collect();
    let mut used = vec![0; n_classes];
    for &c in &class_of {
        used[c] += 1;
    }
    Ok(CorrelationMatrix {
        layer,
        matrix,
        used,
        skipped,
    })
}

/// Hidden units of a one-hidden-layer, two-output network split by whether
/// they fire (strictly positive activation) on each of two patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    /// Fire on pattern 1 only.
    pub a_set: Vec<usize>,
    /// Fire on pattern 2 only.
    pub b_set: Vec<usize>,
    /// Fire on both.
    pub c_set: Vec<usize>,
    /// Fire on neither.
    pub d_set: Vec<usize>,
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub q: f64,
    /// Pattern 1 is assigned to output 1, i.e. `a <= p`.
    pub pattern1_to_output1: bool,
    /// Pattern 2 is assigned to output 2, i.e. `q < b`.
    pub pattern2_to_output2: bool,
    /// Predicted output index for each pattern.
    pub predicted: [usize; 2],
}

/// `a = (A2-A1)·A` and `p = (C1-C2)·C` on pattern 1, `b = (B2-B1)·B` and
/// `q = (C1-C2)·C` on pattern 2, where `X1`/`X2` are the weights from units
/// in set X to outputs 1 and 2 and `X` their activations. Output 1 wins on
/// pattern 1 exactly when `a <= p` (ties go to output 1) and output 2 wins
/// on pattern 2 exactly when `q < b`.
pub fn hidden_partition(net: &Network, cat1: &[f64], cat2: &[f64]) -> Result<PartitionReport> {
    if net.depth() != 2 || net.n_outputs() != 2 {
        return Err(Error::InvalidArchitecture(format!(
            "partition needs one hidden layer and two outputs, got {:?}",
            net.arch()
        )));
    }
    let h1 = net.forward(cat1)?.layers[1].clone();
    let h2 = net.forward(cat2)?.layers[1].clone();
    let w = &net.weights()[1];
    let mut report = PartitionReport {
        a_set: Vec::new(),
        b_set: Vec::new(),
        c_set: Vec::new(),
        d_set: Vec::new(),
        a: 0.0,
        b: 0.0,
        p: 0.0,
        q: 0.0,
        pattern1_to_output1: false,
        pattern2_to_output2: false,
        predicted: [0, 0],
    };
    for j in 0..h1.len() {
        let diff = w[(1, j)] - w[(0, j)];
        match (h1[j] > 0.0, h2[j] > 0.0) {
            (true, false) => {
                report.a_set.push(j);
                report.a += diff * h1[j];
            }
            (false, true) => {
                report.b_set.push(j);
                report.b += diff * h2[j];
            }
            (true, true) => {
                report.c_set.push(j);
                report.p -= diff * h1[j];
                report.q -= diff * h2[j];
            }
            (false, false) => report.d_set.push(j),
        }
    }
    report.pattern1_to_output1 = report.a <= report.p;
    report.pattern2_to_output2 = report.q < report.b;
    report.predicted = [
        if report.pattern1_to_output1 { 0 } else { 1 },
        if report.pattern2_to_output2 { 1 } else { 0 },
    ];
    Ok(report)
}

/// Two-category sequential training setup for [`forgetting_rate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingSetup {
    pub arch: Vec<usize>,
    pub overlap: usize,
    /// On-bits per pattern, shared ones included.
    pub on_count: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ForgettingSetup {
    fn default() -> Self {
        Self {
            arch: vec![10, 30, 2],
            overlap: 5,
            on_count: 6,
            learning_rate: 0.1,
            epochs: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    pub n_trials: usize,
    /// Trials where pattern 1 is classified as category 2.
    pub n_forgotten: usize,
    pub rate: f64,
    /// Trials where output 1 on pattern 1 is not positive or not above
    /// output 2, a stricter notion of lost recall.
    pub n_no_recall: usize,
    pub no_recall_rate: f64,
}

/// Pattern 1 is classified as category 2.
pub fn forgets_first(net: &Network, pattern1: &[f64]) -> Result<bool> {
    Ok(net.forward(pattern1)?.predicted() != 0)
}

/// Output 1 does not fire on pattern 1 or does not beat output 2.
pub fn lost_recall(net: &Network, pattern1: &[f64]) -> Result<bool> {
    let z = &net.forward(pattern1)?.output_preactivation;
    Ok(!(z[0] > 0.0 && z[0] > z[1]))
}

/// One trial: fresh net and patterns, train category 1 then category 2.
/// Returns the net after each stage, the two patterns, and the stats.
pub fn forgetting_trial(
    setup: &ForgettingSetup,
    trial_seed: u64,
) -> Result<(Network, Network, Dataset, ActivationStats)> {
    if setup.arch.len() < 2 || *setup.arch.last().unwrap() != 2 {
        return Err(Error::InvalidArchitecture(format!(
            "forgetting setup needs two outputs, got {:?}",
            setup.arch
        )));
    }
    if setup.overlap >= setup.on_count {
        return Err(Error::InvalidConfig(format!(
            "overlap {} leaves the categories identical (on_count {})",
            setup.overlap, setup.on_count
        )));
    }
    let patterns = gen_binary_patterns(setup.arch[0], 2, setup.overlap, setup.on_count, trial_seed)?;
    let net = Network::init(&setup.arch, trial_seed)?;
    let tc = TrainConfig {
        learning_rate: setup.learning_rate,
        dropout: 0.0,
        epochs: setup.epochs,
        batch_size: 1,
        seed: trial_seed,
    };
    let stats = ActivationStats::new(&setup.arch);
    let (after1, stats) = train_task(&net, &patterns.subset(&[0]), &tc, &stats)?;
    let (after2, stats) = train_task(&after1, &patterns.subset(&[1]), &tc, &stats)?;
    Ok((after1, after2, patterns, stats))
}

/// Fraction of trials in which category 1 is forgotten after training on
/// category 2. Trial `t` uses seed `setup.seed + t`.
pub fn forgetting_rate(trials: usize, setup: &ForgettingSetup) -> Result<ForgettingReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be positive".into()));
    }
    let (mut n_forgotten, mut n_no_recall) = (0, 0);
    for t in 0..trials {
        let (_, net, patterns, _) = forgetting_trial(setup, setup.seed + t as u64)?;
        let p1 = patterns.inputs().row(0).to_vec();
        n_forgotten += forgets_first(&net, &p1)? as usize;
        n_no_recall += lost_recall(&net, &p1)? as usize;
    }
    Ok(ForgettingReport {
        n_trials: trials,
        n_forgotten,
        rate: n_forgotten as f64 / trials as f64,
        n_no_recall,
        no_recall_rate: n_no_recall as f64 / trials as f64,
    })
}

/// `confusion[true][predicted]` for `data`.
pub fn confusion_matrix(net: &Network, data: &Dataset) -> Result<Vec<Vec<usize>>> {
    Ok(evaluate(net, data)?.confusion)
}
