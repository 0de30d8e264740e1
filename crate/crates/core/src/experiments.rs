//! Experiment protocols and the genetic parameter search.

use std::collections::BTreeMap;
use std::path::PathBuf;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::{activation_correlation, CorrelationMatrix};
use crate::data::{corrupt, gen_patches, load_mnist_dir, split_tasks, CorruptionKind, CorruptionSpec, Dataset};
use crate::error::{Error, Result};
use crate::net::{evaluate, train_task, ActivationStats, Metrics, Network, TrainConfig};
use crate::snn::{run_sleep, SleepConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    AfterEachTask,
    FinalOnly,
    None,
}

/// Where an experiment's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// A fresh Patches layout per trial; the images are both train and test set.
    Patches {
        n_side: usize,
        n_images: usize,
        overlap: usize,
        on_count: usize,
    },
    /// MNIST IDX files under `root`, optionally truncated.
    Mnist {
        root: PathBuf,
        #[serde(default)]
        n_train: Option<usize>,
        #[serde(default)]
        n_test: Option<usize>,
    },
}

impl DatasetSpec {
    pub fn patches(overlap: usize) -> Self {
        DatasetSpec::Patches {
            n_side: 10,
            n_images: 4,
            overlap,
            on_count: 25,
        }
    }

    fn per_trial(&self) -> bool {
        matches!(self, DatasetSpec::Patches { .. })
    }

    /// `(train, test)` for a trial seed.
    pub fn load(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSpec::Patches {
                n_side,
                n_images,
                overlap,
                on_count,
            } => {
                let d = gen_patches(*n_side, *n_images, *overlap, *on_count, seed)?;
                Ok((d.clone(), d))
            }
            DatasetSpec::Mnist {
                root,
                n_train,
                n_test,
            } => {
                let (train, test) = load_mnist_dir(root)?;
                let cut = |d: Dataset, n: Option<usize>| match n {
                    Some(n) if n < d.len() => d.subset(&(0..n).collect::<Vec<_>>()),
                    _ => d,
                };
                Ok((cut(train, *n_train), cut(test, *n_test)))
            }
        }
    }
}

/// Loads once for file-backed data, per trial for generated data.
struct DataCache<'a> {
    spec: &'a DatasetSpec,
    fixed: Option<(Dataset, Dataset)>,
}

impl<'a> DataCache<'a> {
    fn new(spec: &'a DatasetSpec) -> Result<Self> {
        let fixed = if spec.per_trial() {
            None
        } else {
            Some(spec.load(0)?)
        };
        Ok(Self { spec, fixed })
    }

    fn get(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        match &self.fixed {
            Some(d) => Ok(d.clone()),
            None => self.spec.load(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub arch: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
    pub train: TrainConfig,
    pub sleep: SleepConfig,
    pub n_trials: usize,
    pub schedule: Schedule,
    /// Draw a random task order per trial.
    #[serde(default)]
    pub shuffle_task_order: bool,
    #[serde(default)]
    pub noise_levels: Vec<f64>,
    #[serde(default)]
    pub blur_levels: Vec<f64>,
    #[serde(default)]
    pub overlaps: Vec<usize>,
    /// Activation layers whose class correlations are measured on the test
    /// set around every sleep phase and attached to the report.
    #[serde(default)]
    pub correlation_layers: Vec<usize>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::InvalidConfig("n_trials must be at least 1".into()));
        }
        if self.groups.is_empty() {
            return Err(Error::InvalidGroups("no task groups".into()));
        }
        if self.arch.len() < 2 {
            return Err(Error::InvalidArchitecture(format!("{:?}", self.arch)));
        }
        if let Some(&l) = self.correlation_layers.iter().find(|&&l| l >= self.arch.len()) {
            return Err(Error::InvalidConfig(format!(
                "correlation layer {l} out of range for {:?}",
                self.arch
            )));
        }
        if let Some(&c) = self.groups.iter().flatten().find(|&&c| c >= *self.arch.last().unwrap()) {
            return Err(Error::InvalidGroups(format!(
                "class {c} has no output unit in {:?}",
                self.arch
            )));
        }
        self.train.validate()?;
        self.sleep.validate(self.arch.len() - 1)
    }

    fn all_classes(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.groups.iter().flatten().copied().collect();
        c.sort_unstable();
        c
    }

    /// Root seed of trial `t`. Network init uses it directly; training at
    /// task position `k` uses [`train_seed`] and sleep uses [`sleep_seed`].
    pub fn trial_seed(&self, t: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(t as u64)
    }
}

pub fn train_seed(trial_seed: u64, position: usize) -> u64 {
    trial_seed.wrapping_mul(31).wrapping_add(position as u64)
}

pub fn sleep_seed(trial_seed: u64, position: usize) -> u64 {
    trial_seed.wrapping_mul(37).wrapping_add(position as u64)
}

/// Per-trial record of an incremental run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub task_order: Vec<usize>,
    /// Rows: tasks in config order, then overall. Columns: phases.
    pub accuracy: Vec<Vec<f64>>,
    /// One confusion matrix per phase, `[true][predicted]`.
    pub confusions: Vec<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub schedule: Schedule,
    /// Column labels, e.g. `T1, S1, T2, S2`.
    pub phases: Vec<String>,
    /// Row labels: one per task, then `overall`.
    pub rows: Vec<String>,
    /// Trial-mean accuracy, `accuracy[row][phase]`.
    pub accuracy: Vec<Vec<f64>>,
    pub accuracy_std: Vec<Vec<f64>>,
    pub trials: Vec<TrialRecord>,
    pub config: ExperimentConfig,
    #[serde(default)]
    pub attachments: BTreeMap<String, serde_json::Value>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `row,phase1,phase2,...` with one line per task plus `overall`.
    pub fn accuracy_csv(&self) -> String {
        let mut out = format!("row,{}\n", self.phases.join(","));
        for (name, row) in self.rows.iter().zip(&self.accuracy) {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            out += &format!("{name},{}\n", vals.join(","));
        }
        out
    }

    pub fn final_accuracy(&self, row: usize) -> f64 {
        *self.accuracy[row].last().unwrap()
    }

    pub fn final_overall(&self) -> f64 {
        self.final_accuracy(self.rows.len() - 1)
    }

    pub fn phase_index(&self, name: &str) -> Option<usize> {
        self.phases.iter().position(|p| p == name)
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn sleep_phase(
    net: &Network,
    stats: &ActivationStats,
    sleep: &SleepConfig,
    seed: u64,
) -> Result<Network> {
    run_sleep(
        net,
        stats,
        &SleepConfig {
            seed,
            ..sleep.clone()
        },
    )
}

/// Sequential task training with sleep per `cfg.schedule`.
pub fn run_incremental(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let cache = DataCache::new(&cfg.dataset)?;
    let classes = cfg.all_classes();
    let n_tasks = cfg.groups.len();
    let mut trials = Vec::with_capacity(cfg.n_trials);
    let mut phases = Vec::new();
    let mut correlations = Vec::new();

    for t in 0..cfg.n_trials {
        let seed = cfg.trial_seed(t);
        let (train, test) = cache.get(seed)?;
        let seq = split_tasks(&train, &cfg.groups)?;
        let test = test.filter_classes(&classes);
        let mut order: Vec<usize> = (0..n_tasks).collect();
        if cfg.shuffle_task_order {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0bde));
        }

        let mut net = Network::init(&cfg.arch, seed)?;
        let mut stats = ActivationStats::new(&cfg.arch);
        let mut accuracy = vec![Vec::new(); n_tasks + 1];
        let mut confusions = Vec::new();
        let mut trial_phases = Vec::new();
        let mut record = |net: &Network, label: String, phases: &mut Vec<String>| -> Result<()> {
            let m = evaluate(net, &test)?;
            for (row, group) in cfg.groups.iter().enumerate() {
                accuracy[row].push(m.accuracy_on(group));
            }
            accuracy[n_tasks].push(m.accuracy);
            confusions.push(m.confusion);
            phases.push(label);
            Ok(())
        };

        for (pos, &k) in order.iter().enumerate() {
            let tc = TrainConfig {
                seed: train_seed(seed, pos),
                ..cfg.train.clone()
            };
            (net, stats) = train_task(&net, &seq.tasks[k].data, &tc, &stats)?;
            record(&net, format!("T{}", pos + 1), &mut trial_phases)?;
            let sleep_now = match cfg.schedule {
                Schedule::AfterEachTask => true,
                Schedule::FinalOnly => pos + 1 == n_tasks,
                Schedule::None => false,
            };
            if sleep_now {
                let slept = sleep_phase(&net, &stats, &cfg.sleep, sleep_seed(seed, pos))?;
                for &layer in &cfg.correlation_layers {
                    let before = activation_correlation(&net, &test, layer, CORRELATION_CAP)?;
                    let after = activation_correlation(&slept, &test, layer, CORRELATION_CAP)?;
                    correlations.push(CorrelationProbe {
                        trial: t,
                        phase: format!("S{}", pos + 1),
                        layer,
                        before,
                        after,
                    });
                }
                net = slept;
                record(&net, format!("S{}", pos + 1), &mut trial_phases)?;
            }
        }
        info!("{} trial {t}: final overall {:.3}", cfg.name, accuracy[n_tasks].last().unwrap());
        phases = trial_phases;
        trials.push(TrialRecord {
            seed,
            task_order: order,
            accuracy,
            confusions,
        });
    }

    let n_rows = n_tasks + 1;
    let mut accuracy = vec![vec![0.0; phases.len()]; n_rows];
    let mut accuracy_std = accuracy.clone();
    for r in 0..n_rows {
        for c in 0..phases.len() {
            let (m, s) = mean_std(trials.iter().map(|tr| tr.accuracy[r][c]));
            accuracy[r][c] = m;
            accuracy_std[r][c] = s;
        }
    }
    let mut rows: Vec<String> = (1..=n_tasks).map(|k| format!("task{k}")).collect();
    rows.push("overall".into());
    let mut attachments = BTreeMap::new();
    if !correlations.is_empty() {
        attachments.insert("correlation".to_string(), serde_json::to_value(&correlations)?);
    }
    Ok(RunReport {
        name: cfg.name.clone(),
        schedule: cfg.schedule,
        phases,
        rows,
        accuracy,
        accuracy_std,
        trials,
        config: cfg.clone(),
        attachments,
    })
}

const CORRELATION_CAP: usize = 200;

/// Class correlations at one layer just before and just after a sleep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationProbe {
    pub trial: usize,
    pub phase: String,
    pub layer: usize,
    pub before: CorrelationMatrix,
    pub after: CorrelationMatrix,
}

impl RunReport {
    /// Correlation probes attached by `run_incremental`, if any.
    pub fn correlation_probes(&self) -> Result<Vec<CorrelationProbe>> {
        match self.attachments.get("correlation") {
            Some(v) => Ok(serde_json::from_value(v.clone())?),
            None => Ok(Vec::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub overlap: usize,
    /// Run with the configured schedule.
    pub sleep: RunReport,
    /// Same seeds, no sleep.
    pub baseline: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub skipped: Vec<usize>,
}

impl SweepReport {
    /// `overlap,schedule,row,phase,accuracy` long-format CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("overlap,run,row,phase,accuracy\n");
        for p in &self.points {
            for (run, rep) in [("sleep", &p.sleep), ("baseline", &p.baseline)] {
                for (row, vals) in rep.rows.iter().zip(&rep.accuracy) {
                    for (phase, v) in rep.phases.iter().zip(vals) {
                        out += &format!("{},{run},{row},{phase},{v:.6}\n", p.overlap);
                    }
                }
            }
        }
        out
    }
}

/// Patches incremental runs over `cfg.overlaps`, each with and without
/// sleep. Overlaps the grid cannot hold are skipped with a warning.
pub fn run_overlap_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let DatasetSpec::Patches {
        n_side,
        n_images,
        on_count,
        ..
    } = cfg.dataset
    else {
        return Err(Error::InvalidConfig("overlap sweep needs a patches dataset".into()));
    };
    let mut report = SweepReport {
        points: Vec::new(),
        skipped: Vec::new(),
    };
    for &overlap in &cfg.overlaps {
        let needed = overlap + n_images * on_count.saturating_sub(overlap);
        if overlap > on_count || needed > n_side * n_side {
            warn!("skipping infeasible overlap {overlap}");
            report.skipped.push(overlap);
            continue;
        }
        let point_cfg = ExperimentConfig {
            dataset: DatasetSpec::Patches {
                n_side,
                n_images,
                overlap,
                on_count,
            },
            ..cfg.clone()
        };
        let baseline_cfg = ExperimentConfig {
            schedule: Schedule::None,
            ..point_cfg.clone()
        };
        report.points.push(SweepPoint {
            overlap,
            sleep: run_incremental(&point_cfg)?,
            baseline: run_incremental(&baseline_cfg)?,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationRow {
    pub kind: CorruptionKind,
    pub level: f64,
    pub before: f64,
    pub after: f64,
    pub before_std: f64,
    pub after_std: f64,
    /// Confusion summed over trials.
    pub confusion_before: Vec<Vec<usize>>,
    pub confusion_after: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationReport {
    pub rows: Vec<GeneralizationRow>,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
}

impl GeneralizationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,level,before,after,before_std,after_std\n");
        for r in &self.rows {
            let kind = match r.kind {
                CorruptionKind::GaussianNoise => "gaussian_noise",
                CorruptionKind::GaussianBlur => "gaussian_blur",
            };
            out += &format!(
                "{kind},{},{:.6},{:.6},{:.6},{:.6}\n",
                r.level, r.before, r.after, r.before_std, r.after_std
            );
        }
        out
    }

    pub fn rows_of(&self, kind: CorruptionKind) -> Vec<&GeneralizationRow> {
        self.rows.iter().filter(|r| r.kind == kind).collect()
    }
}

fn add_confusion(acc: &mut Vec<Vec<usize>>, m: &Metrics) {
    if acc.is_empty() {
        *acc = m.confusion.clone();
    } else {
        for (a, b) in acc.iter_mut().flatten().zip(m.confusion.iter().flatten()) {
            *a += b;
        }
    }
}

/// Train once on every class in `cfg.groups`, then compare corrupted-test
/// accuracy before and after a single sleep.
pub fn run_generalization(cfg: &ExperimentConfig) -> Result<GeneralizationReport> {
    cfg.validate()?;
    let cache = DataCache::new(&cfg.dataset)?;
    let classes = cfg.all_classes();
    let sweep: Vec<(CorruptionKind, f64)> = cfg
        .noise_levels
        .iter()
        .map(|&l| (CorruptionKind::GaussianNoise, l))
        .chain(cfg.blur_levels.iter().map(|&l| (CorruptionKind::GaussianBlur, l)))
        .collect();
    let mut before = vec![Vec::new(); sweep.len()];
    let mut after = vec![Vec::new(); sweep.len()];
    let mut conf_before = vec![Vec::new(); sweep.len()];
    let mut conf_after = vec![Vec::new(); sweep.len()];
    let mut seeds = Vec::new();

    for t in 0..cfg.n_trials {
        let seed = cfg.trial_seed(t);
        seeds.push(seed);
        let (train, test) = cache.get(seed)?;
        let train = train.filter_classes(&classes);
        let test = test.filter_classes(&classes);
        let net = Network::init(&cfg.arch, seed)?;
        let tc = TrainConfig {
            seed: train_seed(seed, 0),
            ..cfg.train.clone()
        };
        let (net, stats) = train_task(&net, &train, &tc, &ActivationStats::new(&cfg.arch))?;
        let slept = sleep_phase(&net, &stats, &cfg.sleep, sleep_seed(seed, 0))?;
        for (i, &(kind, level)) in sweep.iter().enumerate() {
            let spec = CorruptionSpec {
                kind,
                level,
                seed: seed.wrapping_add(2 + i as u64),
            };
            let data = corrupt(&test, &spec)?;
            let mb = evaluate(&net, &data)?;
            let ma = evaluate(&slept, &data)?;
            before[i].push(mb.accuracy);
            after[i].push(ma.accuracy);
            add_confusion(&mut conf_before[i], &mb);
            add_confusion(&mut conf_after[i], &ma);
        }
    }

    let rows = sweep
        .iter()
        .enumerate()
        .map(|(i, &(kind, level))| {
            let (b, bs) = mean_std(before[i].iter().copied());
            let (a, as_) = mean_std(after[i].iter().copied());
            GeneralizationRow {
                kind,
                level,
                before: b,
                after: a,
                before_std: bs,
                after_std: as_,
                confusion_before: std::mem::take(&mut conf_before[i]),
                confusion_after: std::mem::take(&mut conf_after[i]),
            }
        })
        .collect();
    Ok(GeneralizationReport {
        rows,
        seeds,
        config: cfg.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// Task-2 accuracy of the untrained network (empirical chance).
    pub chance: f64,
    pub after_training: f64,
    pub after_sleep: f64,
    pub per_trial: Vec<[f64; 3]>,
    pub seeds: Vec<u64>,
}

/// Train task 1, sleep, and measure task 2 before it is ever trained.
pub fn run_forward_transfer(cfg: &ExperimentConfig) -> Result<TransferReport> {
    cfg.validate()?;
    if cfg.groups.len() < 2 {
        return Err(Error::InvalidGroups("forward transfer needs two tasks".into()));
    }
    let cache = DataCache::new(&cfg.dataset)?;
    let mut per_trial = Vec::new();
    let mut seeds = Vec::new();
    for t in 0..cfg.n_trials {
        let seed = cfg.trial_seed(t);
        seeds.push(seed);
        let (train, test) = cache.get(seed)?;
        let seq = split_tasks(&train, &cfg.groups)?;
        let test = test.filter_classes(&cfg.all_classes());
        let task2 = &cfg.groups[1];
        let net = Network::init(&cfg.arch, seed)?;
        let chance = evaluate(&net, &test)?.accuracy_on(task2);
        let tc = TrainConfig {
            seed: train_seed(seed, 0),
            ..cfg.train.clone()
        };
        let (net, stats) = train_task(&net, &seq.tasks[0].data, &tc, &ActivationStats::new(&cfg.arch))?;
        let trained = evaluate(&net, &test)?.accuracy_on(task2);
        let slept = sleep_phase(&net, &stats, &cfg.sleep, sleep_seed(seed, 0))?;
        let after = evaluate(&slept, &test)?.accuracy_on(task2);
        per_trial.push([chance, trained, after]);
    }
    let col = |i: usize| mean_std(per_trial.iter().map(move |r| r[i])).0;
    Ok(TransferReport {
        chance: col(0),
        after_training: col(1),
        after_sleep: col(2),
        per_trial,
        seeds,
    })
}

/// A tunable [`SleepConfig`] field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "field", content = "layer")]
pub enum SleepParam {
    InputRate,
    Dt,
    Threshold(usize),
    SynapticScale(usize),
    IncFactor,
    DecFactor,
    Steps,
    Decay,
    StdpBeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gene {
    pub param: SleepParam,
    pub lo: f64,
    pub hi: f64,
    /// Search in log space (both bounds must be positive).
    #[serde(default)]
    pub log: bool,
}

impl Gene {
    fn to_unit(&self, v: f64) -> f64 {
        if self.log {
            (v.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }

    fn from_unit(&self, u: f64) -> f64 {
        if self.log {
            (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp()
        } else {
            self.lo + u * (self.hi - self.lo)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub base: SleepConfig,
    pub genes: Vec<Gene>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.genes.is_empty() {
            return Err(Error::InvalidSearchSpace("no genes".into()));
        }
        for g in &self.genes {
            if !(g.lo.is_finite() && g.hi.is_finite() && g.lo < g.hi) || (g.log && g.lo <= 0.0) {
                return Err(Error::InvalidSearchSpace(format!(
                    "bad range [{}, {}] for {:?}",
                    g.lo, g.hi, g.param
                )));
            }
            let n_layers = self.base.thresholds.len();
            if let SleepParam::Threshold(l) | SleepParam::SynapticScale(l) = g.param {
                if l >= n_layers {
                    return Err(Error::InvalidSearchSpace(format!(
                        "layer {l} out of range for {n_layers} layers"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `base` with every gene set from `values` (actual parameter values).
    pub fn apply(&self, values: &[f64]) -> SleepConfig {
        let mut c = self.base.clone();
        for (g, &v) in self.genes.iter().zip(values) {
            match g.param {
                SleepParam::InputRate => c.input_rate = v,
                SleepParam::Dt => c.dt = v,
                SleepParam::Threshold(l) => c.thresholds[l] = v,
                SleepParam::SynapticScale(l) => c.synaptic_scales[l] = v,
                SleepParam::IncFactor => c.inc_factor = v,
                SleepParam::DecFactor => c.dec_factor = v,
                SleepParam::Steps => c.n_steps = Some(v.round().max(1.0) as usize),
                SleepParam::Decay => c.decay = v,
                SleepParam::StdpBeta => c.stdp_beta = v,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaOptions {
    pub population: usize,
    pub tournament: usize,
    /// Mutation standard deviation as a fraction of each gene's range.
    pub mutation_sigma: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Best individuals copied unchanged into the next generation.
    pub elites: usize,
    pub seed: u64,
}

impl Default for GaOptions {
    fn default() -> Self {
        Self {
            population: 20,
            tournament: 3,
            mutation_sigma: 0.1,
            mutation_rate: 0.5,
            elites: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult<T> {
    pub best: T,
    pub best_fitness: f64,
    /// Best fitness after each generation.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

/// Generational GA over genes scaled to `[0, 1]`. `budget` counts fitness
/// evaluations and must cover at least one population. Non-finite fitness
/// values rank below every finite one.
pub fn ga_optimize<F>(
    n_genes: usize,
    mut fitness: F,
    budget: usize,
    opts: &GaOptions,
) -> Result<GaResult<Vec<f64>>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if n_genes == 0 {
        return Err(Error::InvalidSearchSpace("no genes".into()));
    }
    if opts.population < 2 || opts.tournament == 0 || opts.elites >= opts.population {
        return Err(Error::InvalidConfig(format!(
            "population {} / tournament {} / elites {} is not usable",
            opts.population, opts.tournament, opts.elites
        )));
    }
    if budget < opts.population {
        return Err(Error::InvalidConfig(format!(
            "budget {budget} is smaller than the population {}",
            opts.population
        )));
    }
    let rank = |f: f64| if f.is_finite() { f } else { f64::NEG_INFINITY };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let noise = Normal::new(0.0, opts.mutation_sigma).expect("sigma is finite");
    let mut pop: Vec<Vec<f64>> = (0..opts.population)
        .map(|_| (0..n_genes).map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut scores = Vec::with_capacity(opts.population);
    for ind in &pop {
        scores.push(rank(fitness(ind)?));
    }
    let mut evaluations = opts.population;
    let best_of = |scores: &[f64]| {
        (0..scores.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b })
    };
    let mut trace = vec![scores[best_of(&scores)]];

    while evaluations + opts.population - opts.elites <= budget {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut next: Vec<Vec<f64>> = order[..opts.elites].iter().map(|&i| pop[i].clone()).collect();
        let mut next_scores: Vec<f64> = order[..opts.elites].iter().map(|&i| scores[i]).collect();
        let pick = |rng: &mut ChaCha8Rng| {
            let mut best = rng.random_range(0..pop.len());
            for _ in 1..opts.tournament {
                let c = rng.random_range(0..pop.len());
                if scores[c] > scores[best] {
                    best = c;
                }
            }
            best
        };
        while next.len() < opts.population {
            let (a, b) = (pick(&mut rng), pick(&mut rng));
            let child: Vec<f64> = (0..n_genes)
                .map(|g| {
                    let v = if rng.random::<bool>() { pop[a][g] } else { pop[b][g] };
                    if rng.random::<f64>() < opts.mutation_rate {
                        (v + noise.sample(&mut rng)).clamp(0.0, 1.0)
                    } else {
                        v
                    }
                })
                .collect();
            next_scores.push(rank(fitness(&child)?));
            evaluations += 1;
            next.push(child);
        }
        pop = next;
        scores = next_scores;
        trace.push(scores[best_of(&scores)]);
    }
    let b = best_of(&scores);
    Ok(GaResult {
        best: pop[b].clone(),
        best_fitness: scores[b],
        trace,
        evaluations,
    })
}

/// GA over the fields named in `space`; `fitness` scores a candidate config.
pub fn ga_search<F>(
    space: &SearchSpace,
    mut fitness: F,
    budget: usize,
    opts: &GaOptions,
) -> Result<GaResult<SleepConfig>>
where
    F: FnMut(&SleepConfig) -> Result<f64>,
{
    space.validate()?;
    let decode = |u: &[f64]| -> Vec<f64> {
        space.genes.iter().zip(u).map(|(g, &x)| g.from_unit(x)).collect()
    };
    let r = ga_optimize(
        space.genes.len(),
        |u| fitness(&space.apply(&decode(u))),
        budget,
        opts,
    )?;
    Ok(GaResult {
        best: space.apply(&decode(&r.best)),
        best_fitness: r.best_fitness,
        trace: r.trace,
        evaluations: r.evaluations,
    })
}

/// Gene values of `cfg` scaled into `[0, 1]`.
pub fn encode_genes(space: &SearchSpace, cfg: &SleepConfig) -> Vec<f64> {
    space
        .genes
        .iter()
        .map(|g| {
            let v = match g.param {
                SleepParam::InputRate => cfg.input_rate,
                SleepParam::Dt => cfg.dt,
                SleepParam::Threshold(l) => cfg.thresholds[l],
                SleepParam::SynapticScale(l) => cfg.synaptic_scales[l],
                SleepParam::IncFactor => cfg.inc_factor,
                SleepParam::DecFactor => cfg.dec_factor,
                SleepParam::Steps => cfg.n_steps.unwrap_or(0) as f64,
                SleepParam::Decay => cfg.decay,
                SleepParam::StdpBeta => cfg.stdp_beta,
            };
            g.to_unit(v).clamp(0.0, 1.0)
        })
        .collect()
}
