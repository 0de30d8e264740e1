//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.
//!
//! Run with `cargo test --release -p sleepnet --test acceptance`. MNIST
//! criteria read IDX files from `$SLEEPNET_DATA` (default `/root/data/mnist`).
//! Pass criterion numbers as arguments to run a subset.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sleepnet::analysis::{forgetting_rate, ForgettingSetup};
use sleepnet::data::{gen_patches, CorruptionKind};
use sleepnet::experiments::{
    run_forward_transfer, run_generalization, run_incremental, run_overlap_sweep, Schedule,
};
use sleepnet::io::network_to_bytes;
use sleepnet::net::{train_task, ActivationStats, Network, TrainConfig};
use sleepnet::presets;
use sleepnet::snn::{
    ann_to_snn, poisson_encode, run_sleep, snn_to_ann, stdp_update, SleepConfig,
};

type Outcome = Result<(bool, String), String>;

fn data_root() -> PathBuf {
    std::env::var_os("SLEEPNET_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("/root/data/mnist"))
}

fn mnist_available() -> Result<(), String> {
    let root = data_root();
    if root.join("train-images-idx3-ubyte").exists() {
        Ok(())
    } else {
        Err(format!("MNIST not found under {}", root.display()))
    }
}

fn c1_patches() -> Outcome {
    let sleep = run_incremental(&presets::patches(15, Schedule::AfterEachTask)).map_err(|e| e.to_string())?;
    let base = run_incremental(&presets::patches(15, Schedule::None)).map_err(|e| e.to_string())?;
    let last = sleep.phases.len() - 1;
    let perfect = sleep
        .trials
        .iter()
        .filter(|t| t.accuracy[0][last] == 1.0 && t.accuracy[1][last] == 1.0)
        .count();
    let base_t1 = base.final_accuracy(0);
    Ok((
        perfect >= 95 && base_t1 < 1.0,
        format!("{perfect}/100 trials perfect with sleep; baseline task-1 final {base_t1:.3}"),
    ))
}

fn c2_sweep() -> Outcome {
    let mut cfg = presets::patches(15, Schedule::FinalOnly);
    cfg.n_trials = 5;
    let sweep = run_overlap_sweep(&cfg).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut first_forget = None;
    let mut parts = Vec::new();
    for p in &sweep.points {
        let b = p.baseline.final_accuracy(0);
        let b_all = p.baseline.final_overall();
        let s_all = p.sleep.final_overall();
        if p.overlap <= 15 && b < 1.0 {
            ok = false;
        }
        if b < 1.0 && first_forget.is_none() {
            first_forget = Some(p.overlap);
        }
        if s_all + 1e-12 < b_all {
            ok = false;
        }
        parts.push(format!("{}:{b_all:.2}/{s_all:.2}", p.overlap));
    }
    ok &= first_forget.is_some_and(|o| o > 15);
    Ok((
        ok,
        format!(
            "forgetting starts at overlap {first_forget:?}; overall baseline/sleep {}",
            parts.join(" ")
        ),
    ))
}

fn c3_transfer() -> Outcome {
    let r = run_forward_transfer(&presets::patches(15, Schedule::AfterEachTask)).map_err(|e| e.to_string())?;
    Ok((
        (r.after_sleep - 0.5).abs() <= 0.15,
        format!(
            "task-2 accuracy {:.3} after sleep (chance {:.3}, after training {:.3})",
            r.after_sleep, r.chance, r.after_training
        ),
    ))
}

fn c4_forgetting() -> Outcome {
    let r = forgetting_rate(100, &ForgettingSetup::default()).map_err(|e| e.to_string())?;
    Ok((
        (r.rate - 0.78).abs() <= 0.10,
        format!("category 1 forgotten in {}/100 trials", r.n_forgotten),
    ))
}

fn mnist_with_correlation(schedule: Schedule) -> Result<sleepnet::experiments::RunReport, String> {
    let mut cfg = presets::mnist(&data_root(), schedule);
    if schedule != Schedule::None {
        cfg.correlation_layers = vec![1, 3];
    }
    run_incremental(&cfg).map_err(|e| e.to_string())
}

fn c5_mnist(sleep: &sleepnet::experiments::RunReport, base: &sleepnet::experiments::RunReport) -> Outcome {
    let b = base.final_overall();
    let s = sleep.final_overall();
    let remembered = (0..5).filter(|&k| sleep.final_accuracy(k) > 0.10).count();
    let per_task: Vec<String> = (0..5).map(|k| format!("{:.2}", sleep.final_accuracy(k))).collect();
    Ok((
        b <= 0.25 && s - b >= 0.15 && remembered >= 4,
        format!(
            "overall baseline {b:.3}, sleep {s:.3}; tasks after final sleep [{}]",
            per_task.join(", ")
        ),
    ))
}

fn c6_generalization() -> Outcome {
    mnist_available()?;
    let r = run_generalization(&presets::mnist_generalization(&data_root())).map_err(|e| e.to_string())?;
    let rows = r.rows_of(CorruptionKind::GaussianNoise);
    let best = rows
        .iter()
        .filter(|row| row.level > 0.0)
        .max_by(|a, b| (a.after - a.before).total_cmp(&(b.after - b.before)))
        .ok_or("no noise levels")?;
    // Longest run of consecutive noisy levels where sleep does not hurt.
    let (mut run, mut longest) = (0, 0);
    for row in rows.iter().filter(|row| row.level > 0.0) {
        run = if row.after >= row.before { run + 1 } else { 0 };
        longest = longest.max(run);
    }
    let curve: Vec<String> = rows
        .iter()
        .map(|row| format!("{}:{:.2}->{:.2}", row.level, row.before, row.after))
        .collect();
    Ok((
        (best.before - 0.2).abs() <= 0.10 && (best.after - 0.5).abs() <= 0.10 && longest >= 2,
        format!(
            "best noise {} {:.3} -> {:.3}; after>=before on {longest} consecutive levels; {}",
            best.level,
            best.before,
            best.after,
            curve.join(" ")
        ),
    ))
}

fn c7_correlation(sleep: &sleepnet::experiments::RunReport) -> Outcome {
    let probes = sleep.correlation_probes().map_err(|e| e.to_string())?;
    let last = sleep.phases.last().cloned().unwrap_or_default();
    let mut ok = true;
    let mut parts = Vec::new();
    for layer in [1, 3] {
        let p = probes
            .iter()
            .find(|p| p.layer == layer && p.phase == last)
            .ok_or(format!("no probe for layer {layer}"))?;
        let (ob, oa) = (p.before.mean_off_diagonal(), p.after.mean_off_diagonal());
        let (db, da) = (p.before.mean_diagonal(), p.after.mean_diagonal());
        ok &= oa < ob && (da - db).abs() <= 0.10 * db.abs();
        parts.push(format!(
            "layer {layer}: off-diag {ob:.3}->{oa:.3}, diag {db:.3}->{da:.3}"
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn c8_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    let random_net = |rng: &mut ChaCha8Rng, arch: &[usize]| {
        let w = arch
            .windows(2)
            .map(|p| Array2::from_shape_fn((p[1], p[0]), |_| rng.random_range(-1.0..1.0)))
            .collect();
        Network::from_weights(w).unwrap()
    };
    let stats_for = |arch: &[usize], rng: &mut ChaCha8Rng| {
        let mut s = ActivationStats::new(arch);
        s.max_activation = arch.iter().map(|_| rng.random_range(0.1..20.0)).collect();
        s.mean_input = (0..arch[0]).map(|_| rng.random_range(0.0..1.0)).collect();
        s.n_examples_seen = 10;
        s
    };
    let small = SleepConfig {
        thresholds: vec![0.5; 2],
        synaptic_scales: vec![1.0; 2],
        dt: 0.05,
        input_rate: 10.0,
        n_steps: Some(100),
        ..SleepConfig::default()
    };
    let arch = [6, 5, 3];
    for _ in 0..200 {
        let net = random_net(&mut rng, &arch);
        let stats = stats_for(&arch, &mut rng);
        let back = snn_to_ann(&ann_to_snn(&net, &stats, &small).unwrap()).unwrap();
        let err = net
            .weights()
            .iter()
            .zip(back.weights())
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        if err > 1e-12 {
            failures.push(format!("round trip error {err:e}"));
        }
        let frozen = SleepConfig { inc_factor: 0.0, dec_factor: 0.0, seed: rng.random(), ..small.clone() };
        if run_sleep(&net, &stats, &frozen).unwrap() != net {
            failures.push("zero-plasticity sleep changed weights".into());
        }
    }

    for _ in 0..200 {
        let net = random_net(&mut rng, &[4, 3]);
        let stats = stats_for(&[4, 3], &mut rng);
        let cfg = SleepConfig {
            thresholds: vec![0.5],
            synaptic_scales: vec![1.0],
            inc_factor: rng.random_range(0.0..0.1),
            dec_factor: rng.random_range(0.0..0.1),
            ..SleepConfig::default()
        };
        let mut snn = ann_to_snn(&net, &stats, &cfg).unwrap();
        let before = snn.weights[0].clone();
        let pre: Vec<bool> = (0..4).map(|_| rng.random()).collect();
        let post: Vec<bool> = (0..3).map(|_| rng.random()).collect();
        stdp_update(&mut snn, &pre, &post, 0, &cfg);
        for ((j, i), &b) in before.indexed_iter() {
            let a = snn.weights[0][(j, i)];
            let tol = 1e-12 * (1.0 + b.abs());
            let ok = if !post[j] {
                a == b
            } else if pre[i] {
                a >= b && a - b <= cfg.inc_factor + tol && a <= (cfg.w_bound + cfg.inc_factor).max(b)
            } else {
                a <= b && b - a <= cfg.dec_factor + tol && a >= (-cfg.w_bound - cfg.dec_factor).min(b)
            };
            if !ok {
                failures.push(format!("STDP rule violated at ({j},{i}): {b} -> {a}"));
            }
        }
    }

    let mut worst = 0.0f64;
    for _ in 0..50 {
        let net = random_net(&mut rng, &[4, 3, 2]);
        let x = Array2::from_shape_fn((3, 4), |_| rng.random_range(0.0..1.0));
        let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..2)).collect();
        let (_, grads) = net.loss_and_gradients(x.view(), &labels).unwrap();
        let h = 1e-5;
        for l in 0..2 {
            for ((r, c), &g) in grads[l].indexed_iter() {
                let mut p = net.clone();
                p.weights_mut()[l][(r, c)] += h;
                let mut m = net.clone();
                m.weights_mut()[l][(r, c)] -= h;
                let active = |n: &Network| {
                    n.forward_batch(x.view()).unwrap()[1].mapv(|v| (v > 0.0) as u8)
                };
                if active(&p) != active(&m) {
                    continue;
                }
                let num = (p.loss(x.view(), &labels).unwrap() - m.loss(x.view(), &labels).unwrap()) / (2.0 * h);
                worst = worst.max((num - g).abs() / num.abs().max(g.abs()).max(1e-3));
            }
        }
    }
    if worst >= 1e-4 {
        failures.push(format!("gradient relative error {worst:e}"));
    }

    let cfg = SleepConfig { input_rate: 100.0, dt: 0.004, ..SleepConfig::default() };
    let xs = [0.05, 0.5, 1.0, 2.0];
    let n = 20_000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        for (c, s) in counts.iter_mut().zip(poisson_encode(&xs, &cfg, &mut rng).unwrap()) {
            *c += s as usize;
        }
    }
    for (&x, &c) in xs.iter().zip(&counts) {
        let p = (x * cfg.input_rate * cfg.dt).min(1.0);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        if (c as f64 / n as f64 - p).abs() > 3.0 * se {
            failures.push(format!("Poisson rate for x={x} off by more than 3 SE"));
        }
    }

    let run = || {
        let data = gen_patches(10, 4, 15, 25, 3).unwrap();
        let tc = TrainConfig { seed: 5, dropout: 0.2, ..presets::patches_train() };
        let (net, stats) =
            train_task(&Network::init(&[100, 4], 1).unwrap(), &data, &tc, &ActivationStats::new(&[100, 4])).unwrap();
        let sc = SleepConfig { n_steps: Some(3000), seed: 2, ..presets::patches_sleep() };
        network_to_bytes(&run_sleep(&net, &stats, &sc).unwrap())
    };
    if run() != run() {
        failures.push("train+sleep not deterministic".into());
    }

    let ok = failures.is_empty();
    Ok((
        ok,
        if ok {
            format!("round trip, identity, STDP, gradients (worst rel {worst:.1e}), Poisson, determinism")
        } else {
            failures.into_iter().take(3).collect::<Vec<_>>().join("; ")
        },
    ))
}

fn report(n: usize, name: &str, outcome: Outcome, t0: Instant) -> bool {
    let secs = t0.elapsed().as_secs_f64();
    match outcome {
        Ok((true, detail)) => {
            println!("criterion {n} {name}: PASS ({secs:.1}s) {detail}");
            true
        }
        Ok((false, detail)) => {
            println!("criterion {n} {name}: FAIL ({secs:.1}s) {detail}");
            false
        }
        Err(e) => {
            println!("criterion {n} {name}: FAIL ({secs:.1}s) could not run: {e}");
            false
        }
    }
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: usize| selected.is_empty() || selected.contains(&n);
    let mut all = true;

    if want(8) {
        let t0 = Instant::now();
        all &= report(8, "property suites", c8_properties(), t0);
    }
    if want(1) {
        let t0 = Instant::now();
        all &= report(1, "patches incremental", c1_patches(), t0);
    }
    if want(2) {
        let t0 = Instant::now();
        all &= report(2, "overlap sweep", c2_sweep(), t0);
    }
    if want(3) {
        let t0 = Instant::now();
        all &= report(3, "forward transfer", c3_transfer(), t0);
    }
    if want(4) {
        let t0 = Instant::now();
        all &= report(4, "forgetting rate", c4_forgetting(), t0);
    }
    if want(5) || want(7) {
        let t0 = Instant::now();
        let runs = mnist_available().and_then(|_| {
            Ok((
                mnist_with_correlation(Schedule::AfterEachTask)?,
                mnist_with_correlation(Schedule::None)?,
            ))
        });
        match &runs {
            Ok((sleep, base)) => {
                if want(5) {
                    all &= report(5, "incremental MNIST", c5_mnist(sleep, base), t0);
                }
                if want(7) {
                    all &= report(7, "class correlation", c7_correlation(sleep), t0);
                }
            }
            Err(e) => {
                for (n, name) in [(5, "incremental MNIST"), (7, "class correlation")] {
                    if want(n) {
                        all &= report(n, name, Err(e.clone()), t0);
                    }
                }
            }
        }
    }
    if want(6) {
        let t0 = Instant::now();
        all &= report(6, "noise generalization", c6_generalization(), t0);
    }

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
