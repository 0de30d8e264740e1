//! Named experiment configurations.
//!
//! Training and sleep values follow the published per-dataset table; the
//! step size `dt` and sleep lengths are this crate's choices.

use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::{DatasetSpec, ExperimentConfig, Schedule};
use crate::net::TrainConfig;
use crate::snn::SleepConfig;

pub const PRESET_NAMES: &[&str] = &[
    "patches",
    "patches-final",
    "patches-baseline",
    "mnist",
    "mnist-baseline",
    "mnist-generalization",
];

pub fn patches_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.1,
        dropout: 0.0,
        epochs: 1,
        batch_size: 1,
        seed: 0,
    }
}

pub fn patches_sleep() -> SleepConfig {
    SleepConfig {
        input_rate: 64.0,
        dt: 0.0005,
        thresholds: vec![1.045],
        synaptic_scales: vec![4.25],
        inc_factor: 0.0035,
        dec_factor: 0.0002,
        n_steps: Some(50_000),
        decay: 0.999,
        ..SleepConfig::default()
    }
}

pub fn mnist_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.065,
        dropout: 0.2,
        epochs: 2,
        batch_size: 100,
        seed: 0,
    }
}

pub fn mnist_sleep() -> SleepConfig {
    SleepConfig {
        input_rate: 130.0,
        dt: 0.0005,
        thresholds: vec![2.1772, 1.5217, 0.9599],
        synaptic_scales: vec![3.4723, 25.52, 2.4186],
        inc_factor: 0.0197,
        dec_factor: 0.0016,
        n_steps: Some(10_000),
        decay: 0.999,
        ..SleepConfig::default()
    }
}

/// One pass over the data: deliberately short of convergence.
pub fn mnist_suboptimal_train() -> TrainConfig {
    TrainConfig {
        epochs: 1,
        ..mnist_train()
    }
}

/// Found by genetic search on a 2000-example network, scored on noisy
/// copies of held-out training images.
pub fn mnist_generalization_sleep() -> SleepConfig {
    SleepConfig {
        input_rate: 130.0,
        dt: 0.003,
        thresholds: vec![5.5916, 0.2, 0.2335],
        synaptic_scales: vec![0.3, 1.2893, 0.7184],
        inc_factor: 0.000299,
        dec_factor: 0.0000143,
        n_steps: Some(1471),
        decay: 0.999,
        ..SleepConfig::default()
    }
}

/// Sleep for the two-pattern `[10, 30, 2]` network.
pub fn forgetting_sleep() -> SleepConfig {
    SleepConfig {
        input_rate: 64.0,
        dt: 0.0055,
        thresholds: vec![0.906, 0.928],
        synaptic_scales: vec![4.073, 0.577],
        inc_factor: 0.00069,
        dec_factor: 0.0113,
        n_steps: Some(2908),
        decay: 0.999,
        ..SleepConfig::default()
    }
}

pub fn cub200_arch() -> Vec<usize> {
    vec![2048, 350, 300, 200]
}

pub fn cub200_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.1,
        dropout: 0.25,
        epochs: 50,
        batch_size: 100,
        seed: 0,
    }
}

pub fn cub200_sleep() -> SleepConfig {
    SleepConfig {
        input_rate: 32.0,
        dt: 0.0005,
        thresholds: vec![1.0, 1.0, 1.0],
        synaptic_scales: vec![1.0, 1.0, 1.0],
        inc_factor: 0.01,
        dec_factor: 0.001,
        decay: 0.999,
        ..SleepConfig::default()
    }
}

pub fn patches(overlap: usize, schedule: Schedule) -> ExperimentConfig {
    ExperimentConfig {
        name: "patches".into(),
        dataset: DatasetSpec::patches(overlap),
        arch: vec![100, 4],
        groups: vec![vec![0, 1], vec![2, 3]],
        train: patches_train(),
        sleep: patches_sleep(),
        n_trials: 100,
        schedule,
        shuffle_task_order: false,
        noise_levels: Vec::new(),
        blur_levels: Vec::new(),
        overlaps: vec![0, 5, 10, 12, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24],
        correlation_layers: Vec::new(),
        seed: 0,
    }
}

pub fn mnist(root: &Path, schedule: Schedule) -> ExperimentConfig {
    ExperimentConfig {
        name: "mnist".into(),
        dataset: DatasetSpec::Mnist {
            root: root.to_path_buf(),
            n_train: None,
            n_test: None,
        },
        arch: vec![784, 1200, 1200, 10],
        groups: (0..5).map(|k| vec![2 * k, 2 * k + 1]).collect(),
        train: mnist_train(),
        sleep: mnist_sleep(),
        n_trials: 1,
        schedule,
        shuffle_task_order: false,
        noise_levels: Vec::new(),
        blur_levels: Vec::new(),
        overlaps: Vec::new(),
        correlation_layers: Vec::new(),
        seed: 0,
    }
}

pub fn mnist_generalization(root: &Path) -> ExperimentConfig {
    ExperimentConfig {
        name: "mnist-generalization".into(),
        dataset: DatasetSpec::Mnist {
            root: root.to_path_buf(),
            n_train: Some(2000),
            n_test: None,
        },
        groups: vec![(0..10).collect()],
        train: mnist_suboptimal_train(),
        sleep: mnist_generalization_sleep(),
        n_trials: 5,
        schedule: Schedule::FinalOnly,
        noise_levels: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.5],
        blur_levels: vec![0.0, 1.0, 2.0, 3.0, 4.0],
        ..mnist(root, Schedule::FinalOnly)
    }
}

/// Looks up a preset by name. MNIST presets read from `data_root`.
pub fn preset(name: &str, data_root: &Path) -> Result<ExperimentConfig> {
    let mut cfg = match name {
        "patches" => patches(15, Schedule::AfterEachTask),
        "patches-final" => patches(15, Schedule::FinalOnly),
        "patches-baseline" => patches(15, Schedule::None),
        "mnist" => mnist(data_root, Schedule::AfterEachTask),
        "mnist-baseline" => mnist(data_root, Schedule::None),
        "mnist-generalization" => mnist_generalization(data_root),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown preset {other:?}; known: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    cfg.name = name.to_string();
    Ok(cfg)
}
