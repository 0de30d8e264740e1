//! Spiking twin of a [`Network`] and the sleep phase.
//!
//! A trained network is converted to leaky integrate-and-fire layers by
//! rescaling each weight matrix with the ratio of recorded max activations.
//! The spiking network is driven by Poisson spikes derived from the running
//! mean training input while a weight-dependent STDP rule edits its synapses.
//! Converting back divides the recorded scale out again, so every STDP delta
//! lands in the original weight scale.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{ActivationStats, Network};

/// How the sleep input is derived from the mean training input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// The whole normalized mean image on every step.
    #[default]
    FullMean,
    /// A random contiguous square covering half the image per step; the rest is zeroed.
    MaskedMean,
    /// Binary mask of every unit that was ever active.
    ActiveUnion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SleepConfig {
    /// Spike rate (per unit of time) of an input at full normalized intensity.
    pub input_rate: f64,
    /// Duration of one simulation step, in the same time unit as `input_rate`.
    pub dt: f64,
    /// Firing threshold per non-input layer.
    pub thresholds: Vec<f64>,
    /// Synaptic scaling factor per non-input layer.
    pub synaptic_scales: Vec<f64>,
    pub inc_factor: f64,
    pub dec_factor: f64,
    /// Number of steps; `None` picks [`default_sleep_steps`].
    pub n_steps: Option<usize>,
    /// Membrane potential multiplier applied every step.
    pub decay: f64,
    /// Sharpness of the weight-dependent STDP sigmoid.
    pub stdp_beta: f64,
    /// Soft weight bound of the STDP rule.
    pub w_bound: f64,
    pub input_mode: InputMode,
    pub seed: u64,
}

impl Default for SleepConfig {
    fn default() -> Self {
        Self {
            input_rate: 64.0,
            dt: 0.001,
            thresholds: vec![1.0],
            synaptic_scales: vec![1.0],
            inc_factor: 0.001,
            dec_factor: 0.0001,
            n_steps: None,
            decay: 0.999,
            stdp_beta: 5.0,
            w_bound: 1.0,
            input_mode: InputMode::FullMean,
            seed: 0,
        }
    }
}

/// 100 steps per training example seen, capped at 50 000.
pub fn default_sleep_steps(n_examples_seen: usize) -> usize {
    n_examples_seen.saturating_mul(100).min(50_000)
}

impl SleepConfig {
    pub fn validate(&self, n_weight_layers: usize) -> Result<()> {
        if self.thresholds.len() != n_weight_layers || self.synaptic_scales.len() != n_weight_layers
        {
            return Err(Error::InvalidConfig(format!(
                "need {n_weight_layers} thresholds and synaptic scales, got {} and {}",
                self.thresholds.len(),
                self.synaptic_scales.len()
            )));
        }
        if self
            .thresholds
            .iter()
            .chain(&self.synaptic_scales)
            .any(|&v| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidConfig(
                "thresholds and synaptic scales must be positive".into(),
            ));
        }
        if !(self.inc_factor >= 0.0 && self.dec_factor >= 0.0) {
            return Err(Error::InvalidConfig(
                "STDP factors must be non-negative".into(),
            ));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "decay must lie in (0, 1), got {}",
                self.decay
            )));
        }
        if !(self.input_rate >= 0.0 && self.dt > 0.0) {
            return Err(Error::InvalidConfig(
                "input_rate must be non-negative and dt positive".into(),
            ));
        }
        if !(self.stdp_beta >= 0.0 && self.w_bound > 0.0) {
            return Err(Error::InvalidConfig(
                "stdp_beta must be non-negative and w_bound positive".into(),
            ));
        }
        Ok(())
    }

    pub fn steps_for(&self, stats: &ActivationStats) -> usize {
        self.n_steps
            .unwrap_or_else(|| default_sleep_steps(stats.n_examples_seen))
    }

    /// Potentiation applied to weight `w` when pre and post both spike.
    pub fn potentiation(&self, w: f64) -> f64 {
        self.inc_factor * sigmoid(-self.stdp_beta * (w - self.w_bound))
    }

    /// Magnitude of depression applied to `w` when post spikes without pre.
    pub fn depression(&self, w: f64) -> f64 {
        self.dec_factor * sigmoid(self.stdp_beta * (w + self.w_bound))
    }

    fn upper_clip(&self) -> f64 {
        self.w_bound + self.inc_factor
    }

    fn lower_clip(&self) -> f64 {
        -self.w_bound - self.dec_factor
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Leaky integrate-and-fire network holding rescaled weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikingNetwork {
    pub weights: Vec<Array2<f64>>,
    /// Factor each layer's ANN weights were multiplied by.
    pub scale_record: Vec<f64>,
    /// Membrane potential per non-input layer.
    pub membrane: Vec<Array1<f64>>,
    pub thresholds: Vec<f64>,
    pub synaptic_scales: Vec<f64>,
    /// Spikes of every layer (input first) from the previous step.
    pub last_spikes: Vec<Vec<bool>>,
    pub decay: f64,
}

impl SpikingNetwork {
    pub fn arch(&self) -> Vec<usize> {
        let mut arch = vec![self.weights[0].ncols()];
        arch.extend(self.weights.iter().map(|w| w.nrows()));
        arch
    }

    pub fn reset_membranes(&mut self) {
        for v in &mut self.membrane {
            v.fill(0.0);
        }
    }
}

/// Converts with `W_snn[l] = W[l] * max_act[l] / max_act[l + 1]`.
pub fn ann_to_snn(
    net: &Network,
    stats: &ActivationStats,
    cfg: &SleepConfig,
) -> Result<SpikingNetwork> {
    stats.check_compatible(net)?;
    cfg.validate(net.depth())?;
    if let Some(layer) = stats.max_activation.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::ZeroActivation { layer });
    }
    let scale_record: Vec<f64> = stats
        .max_activation
        .windows(2)
        .map(|m| m[0] / m[1])
        .collect();
    let weights = net
        .weights()
        .iter()
        .zip(&scale_record)
        .map(|(w, &s)| w * s)
        .collect();
    let arch = net.arch();
    Ok(SpikingNetwork {
        weights,
        scale_record,
        membrane: arch[1..].iter().map(|&n| Array1::zeros(n)).collect(),
        thresholds: cfg.thresholds.clone(),
        synaptic_scales: cfg.synaptic_scales.clone(),
        last_spikes: arch.iter().map(|&n| vec![false; n]).collect(),
        decay: cfg.decay,
    })
}

/// Undoes the conversion scaling.
pub fn snn_to_ann(snn: &SpikingNetwork) -> Result<Network> {
    if snn.scale_record.len() != snn.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: snn.weights.len(),
            actual: snn.scale_record.len(),
            context: "scale record",
        });
    }
    if let Some((layer, &value)) = snn
        .scale_record
        .iter()
        .enumerate()
        .find(|(_, &s)| !(s > 0.0 && s.is_finite()))
    {
        return Err(Error::InvalidScale { layer, value });
    }
    let weights = snn
        .weights
        .iter()
        .zip(&snn.scale_record)
        .map(|(w, &s)| w / s)
        .collect();
    Network::from_weights(weights)
}

/// Scales `mean_input` by its maximum so the brightest unit has intensity 1.
pub fn normalize_input(mean_input: &[f64]) -> Result<Vec<f64>> {
    if let Some((index, &value)) = mean_input.iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::NegativeInput { index, value });
    }
    let max = mean_input.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(mean_input.to_vec());
    }
    Ok(mean_input.iter().map(|v| v / max).collect())
}

/// Spike probability of a unit with normalized intensity `x`.
pub fn spike_probability(x: f64, cfg: &SleepConfig) -> f64 {
    (x * cfg.input_rate * cfg.dt).min(1.0)
}

/// One step of independent Bernoulli spikes.
pub fn poisson_encode<R: Rng + ?Sized>(
    intensities: &[f64],
    cfg: &SleepConfig,
    rng: &mut R,
) -> Result<Vec<bool>> {
    if let Some((index, &value)) = intensities.iter().enumerate().find(|(_, &v)| v < 0.0) {
        return Err(Error::NegativeInput { index, value });
    }
    Ok(intensities
        .iter()
        .map(|&x| {
            let p = spike_probability(x, cfg);
            // Always draw so the stream position does not depend on the input.
            let u: f64 = rng.random();
            u < p
        })
        .collect())
}

/// Produces the sleep-input intensities for one step.
pub fn sleep_input<R: Rng + ?Sized>(
    normalized_mean: &[f64],
    mode: InputMode,
    rng: &mut R,
) -> Vec<f64> {
    match mode {
        InputMode::FullMean => normalized_mean.to_vec(),
        InputMode::ActiveUnion => normalized_mean
            .iter()
            .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
            .collect(),
        InputMode::MaskedMean => {
            let n = normalized_mean.len();
            let side = (n as f64).sqrt().round() as usize;
            let mut out = vec![0.0; n];
            if side * side == n {
                let w = ((side * side) as f64 * 0.5).sqrt().round().max(1.0) as usize;
                let y0 = rng.random_range(0..=side - w);
                let x0 = rng.random_range(0..=side - w);
                for y in y0..y0 + w {
                    for x in x0..x0 + w {
                        out[y * side + x] = normalized_mean[y * side + x];
                    }
                }
            } else {
                let w = (n / 2).max(1);
                let start = rng.random_range(0..=n - w);
                out[start..start + w].copy_from_slice(&normalized_mean[start..start + w]);
            }
            out
        }
    }
}

/// Propagates one step through every layer. Returns spikes for all layers,
/// input first.
pub fn lif_step(snn: &mut SpikingNetwork, input_spikes: &[bool]) -> Result<Vec<Vec<bool>>> {
    let n_in = snn.weights[0].ncols();
    if input_spikes.len() != n_in {
        return Err(Error::DimensionMismatch {
            expected: n_in,
            actual: input_spikes.len(),
            context: "input spikes",
        });
    }
    let mut spikes = Vec::with_capacity(snn.weights.len() + 1);
    spikes.push(input_spikes.to_vec());
    for l in 0..snn.weights.len() {
        let active: Vec<usize> = spikes[l]
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(i))
            .collect();
        let w = &snn.weights[l];
        let alpha = snn.synaptic_scales[l];
        let threshold = snn.thresholds[l];
        let v = &mut snn.membrane[l];
        let mut out = vec![false; w.nrows()];
        for (j, row) in w.rows().into_iter().enumerate() {
            let mut drive = 0.0;
            if !active.is_empty() {
                let row = row.as_slice().expect("standard layout");
                for &i in &active {
                    drive += row[i];
                }
            }
            let vj = v[j] * snn.decay + alpha * drive;
            if vj > threshold {
                out[j] = true;
                v[j] = 0.0;
            } else {
                v[j] = vj;
            }
        }
        spikes.push(out);
    }
    snn.last_spikes = spikes.clone();
    Ok(spikes)
}

/// Applies the weight-dependent STDP rule to weight layer `layer` given the
/// spikes of its pre- and post-synaptic layers from the same step.
pub fn stdp_update(
    snn: &mut SpikingNetwork,
    pre: &[bool],
    post: &[bool],
    layer: usize,
    cfg: &SleepConfig,
) {
    let (hi, lo) = (cfg.upper_clip(), cfg.lower_clip());
    let w = &mut snn.weights[layer];
    debug_assert_eq!(w.ncols(), pre.len());
    debug_assert_eq!(w.nrows(), post.len());
    for (j, _) in post.iter().enumerate().filter(|(_, &p)| p) {
        let mut row = w.row_mut(j);
        for (wij, &fired) in row.iter_mut().zip(pre) {
            let old = *wij;
            *wij = if fired {
                (old + cfg.potentiation(old)).min(hi.max(old))
            } else {
                (old - cfg.depression(old)).max(lo.min(old))
            };
        }
    }
}

/// Spike counts and STDP bookkeeping from one sleep run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleepSummary {
    pub n_steps: usize,
    /// Total spikes emitted per layer, input first.
    pub spike_counts: Vec<u64>,
}

/// Converts, sleeps, and converts back. The input network is untouched.
pub fn run_sleep(net: &Network, stats: &ActivationStats, cfg: &SleepConfig) -> Result<Network> {
    Ok(run_sleep_with_summary(net, stats, cfg)?.0)
}

pub fn run_sleep_with_summary(
    net: &Network,
    stats: &ActivationStats,
    cfg: &SleepConfig,
) -> Result<(Network, SleepSummary)> {
    let mut snn = ann_to_snn(net, stats, cfg)?;
    let summary = sleep_snn(&mut snn, stats, cfg)?;
    if summary.n_steps == 0 || (cfg.inc_factor == 0.0 && cfg.dec_factor == 0.0) {
        return Ok((net.clone(), summary));
    }
    Ok((snn_to_ann(&snn)?, summary))
}

/// Runs the sleep loop on an already converted network.
pub fn sleep_snn(
    snn: &mut SpikingNetwork,
    stats: &ActivationStats,
    cfg: &SleepConfig,
) -> Result<SleepSummary> {
    let base = normalize_input(&stats.mean_input)?;
    let n_steps = cfg.steps_for(stats);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut spike_counts = vec![0u64; snn.weights.len() + 1];
    snn.reset_membranes();
    for _ in 0..n_steps {
        let x = sleep_input(&base, cfg.input_mode, &mut rng);
        let input = poisson_encode(&x, cfg, &mut rng)?;
        let spikes = lif_step(snn, &input)?;
        for (count, layer) in spike_counts.iter_mut().zip(&spikes) {
            *count += layer.iter().filter(|&&s| s).count() as u64;
        }
        for l in 0..snn.weights.len() {
            if spikes[l + 1].iter().any(|&s| s) {
                stdp_update(snn, &spikes[l], &spikes[l + 1], l, cfg);
            }
        }
    }
    Ok(SleepSummary {
        n_steps,
        spike_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cfg1() -> SleepConfig {
        SleepConfig {
            thresholds: vec![0.9],
            synaptic_scales: vec![1.0],
            decay: 0.5,
            ..SleepConfig::default()
        }
    }

    fn one_synapse(threshold: f64) -> SpikingNetwork {
        let net = Network::from_weights(vec![array![[1.0]]]).unwrap();
        let stats = ActivationStats {
            max_activation: vec![1.0, 1.0],
            mean_input: vec![1.0],
            n_examples_seen: 1,
        };
        let cfg = SleepConfig {
            thresholds: vec![threshold],
            ..cfg1()
        };
        ann_to_snn(&net, &stats, &cfg).unwrap()
    }

    #[test]
    fn single_synapse_fires_and_resets() {
        let mut snn = one_synapse(0.9);
        let spikes = lif_step(&mut snn, &[true]).unwrap();
        assert_eq!(spikes[1], vec![true]);
        assert_eq!(snn.membrane[0][0], 0.0);
    }

    #[test]
    fn single_synapse_below_threshold_decays() {
        let mut snn = one_synapse(1.1);
        let spikes = lif_step(&mut snn, &[true]).unwrap();
        assert_eq!(spikes[1], vec![false]);
        assert_eq!(snn.membrane[0][0], 1.0);
        lif_step(&mut snn, &[false]).unwrap();
        assert_eq!(snn.membrane[0][0], 0.5);
    }

    #[test]
    fn conversion_uses_activation_ratio() {
        let net = Network::from_weights(vec![array![[0.5, -1.0]]]).unwrap();
        let stats = ActivationStats {
            max_activation: vec![2.0, 1.0],
            mean_input: vec![0.5, 0.5],
            n_examples_seen: 1,
        };
        let snn = ann_to_snn(&net, &stats, &cfg1()).unwrap();
        assert_eq!(snn.weights[0], array![[1.0, -2.0]]);
        assert_eq!(snn.scale_record, vec![2.0]);
        assert_eq!(snn_to_ann(&snn).unwrap(), net);
    }

    #[test]
    fn conversion_rejects_zero_activation() {
        let net = Network::zeros(&[2, 2, 1]).unwrap();
        let stats = ActivationStats {
            max_activation: vec![1.0, 0.0, 1.0],
            mean_input: vec![0.0, 0.0],
            n_examples_seen: 1,
        };
        let cfg = SleepConfig {
            thresholds: vec![1.0, 1.0],
            synaptic_scales: vec![1.0, 1.0],
            ..SleepConfig::default()
        };
        assert!(matches!(
            ann_to_snn(&net, &stats, &cfg),
            Err(Error::ZeroActivation { layer: 1 })
        ));
    }

    #[test]
    fn back_conversion_rejects_bad_scale() {
        let mut snn = one_synapse(1.0);
        snn.scale_record[0] = 0.0;
        assert!(matches!(snn_to_ann(&snn), Err(Error::InvalidScale { layer: 0, .. })));
    }

    #[test]
    fn zero_input_never_spikes() {
        let cfg = SleepConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let s = poisson_encode(&[0.0; 16], &cfg, &mut rng).unwrap();
            assert!(s.iter().all(|&b| !b));
        }
        assert!(poisson_encode(&[-0.1], &cfg, &mut rng).is_err());
    }

    #[test]
    fn active_union_is_binary() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = sleep_input(&[0.0, 0.2, 1.0, 0.0], InputMode::ActiveUnion, &mut rng);
        assert_eq!(x, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn masked_mean_keeps_half_the_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = vec![1.0; 100];
        for _ in 0..20 {
            let x = sleep_input(&base, InputMode::MaskedMean, &mut rng);
            assert_eq!(x.iter().filter(|&&v| v > 0.0).count(), 49);
        }
    }

    #[test]
    fn potentiation_near_one_far_below_bound() {
        let cfg = SleepConfig {
            inc_factor: 0.0035,
            ..SleepConfig::default()
        };
        // sigma(5 * 1) for w = 0.
        let expected = 0.0035 / (1.0 + (-5.0f64).exp());
        assert!((cfg.potentiation(0.0) - expected).abs() < 1e-15);
        assert!((cfg.potentiation(-3.0) - 0.0035).abs() < 1e-10);
    }

    #[test]
    fn default_steps_scale_with_examples() {
        assert_eq!(default_sleep_steps(2), 200);
        assert_eq!(default_sleep_steps(12_000), 50_000);
    }
}
