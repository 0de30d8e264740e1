mod config;
mod error;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use serde_json::json;
use sleepnet::analysis::{
    activation_correlation, forgetting_rate, forgetting_trial, hidden_partition, weight_spread,
    ForgettingSetup,
};
use sleepnet::data::{corrupt, split_tasks, CorruptionKind, CorruptionSpec, Dataset, PatchesLayout};
use sleepnet::experiments::{
    ga_search, run_forward_transfer, run_generalization, run_incremental, run_overlap_sweep,
    sleep_seed, train_seed, DatasetSpec, ExperimentConfig, GaOptions, Gene, RunReport, Schedule,
    SearchSpace, SleepParam,
};
use sleepnet::io::{load_network, load_stats, save_network, save_stats};
use sleepnet::net::{evaluate, train_task, ActivationStats, Network, TrainConfig};
use sleepnet::presets;
use sleepnet::snn::{run_sleep_with_summary, SleepConfig};

use crate::config::{resolve, Overrides};
use crate::error::{write_err, CliError};
use crate::svg::{line_chart, Series};

#[derive(Parser)]
#[command(name = "sleepnet", version, about = "Train, sleep and evaluate ReLU networks")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; its keys override the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset (see `sleepnet presets`).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, short, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true, value_enum)]
    schedule: Option<ScheduleArg>,
    /// Directory holding the MNIST IDX files.
    #[arg(long, global = true, env = "SLEEPNET_DATA")]
    data_root: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    AfterEachTask,
    FinalOnly,
    None,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::AfterEachTask => Schedule::AfterEachTask,
            ScheduleArg::FinalOnly => Schedule::FinalOnly,
            ScheduleArg::None => Schedule::None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train on every task in order and save the network and its stats.
    Train {
        /// Write the network as JSON instead of binary.
        #[arg(long)]
        json: bool,
    },
    /// Run one sleep phase on a saved network.
    Sleep {
        #[arg(long)]
        network: PathBuf,
        /// Defaults to stats.json next to the network.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Accuracy of a saved network on the configured test set.
    Eval {
        #[arg(long)]
        network: PathBuf,
        /// Patches layout file written by `train`.
        #[arg(long)]
        patches: Option<PathBuf>,
        #[arg(long, conflicts_with = "blur")]
        noise: Option<f64>,
        #[arg(long)]
        blur: Option<f64>,
    },
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// List preset names.
    Presets,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    Incremental,
    Generalization,
    Overlap,
    Transfer,
    /// Genetic search over sleep parameters scored by final overall accuracy.
    Ga {
        #[arg(long, default_value_t = 40)]
        budget: usize,
        #[arg(long, default_value_t = 20)]
        population: usize,
    },
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// On/off-pixel weight spread of a patches network.
    Spread {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        patches: Option<PathBuf>,
    },
    /// Class-by-class activation correlation on the test set.
    Correlation {
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value_t = 1)]
        layer: usize,
        #[arg(long, default_value_t = 200)]
        cap: usize,
    },
    /// Hidden-unit partition of the two-pattern network before and after sleep.
    Partition {
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Rate at which the first of two patterns is forgotten.
    Forgetting {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long)]
        on_count: Option<usize>,
        #[arg(long)]
        overlap: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Ctx {
    cfg: ExperimentConfig,
    out: PathBuf,
    files: Vec<String>,
}

impl Ctx {
    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| write_err(&path, e))?;
        self.files.push(name.to_string());
        Ok(path)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
        self.write(name, text)
    }

    fn manifest(&mut self, command: &str, extra: serde_json::Value) -> Result<(), CliError> {
        let manifest = json!({
            "format": "sleepnet-manifest",
            "version": 1,
            "tool": env!("CARGO_PKG_NAME"),
            "tool_version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "argv": std::env::args().collect::<Vec<_>>(),
            "config": self.cfg,
            "files": self.files,
            "details": extra,
        });
        let path = self.out.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        fs::write(&path, text).map_err(|e| write_err(&path, e))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Presets = cli.command {
        for name in presets::PRESET_NAMES {
            println!("{name}");
        }
        return Ok(());
    }
    let c = &cli.common;
    let flags = Overrides {
        preset: c.preset.clone(),
        data_root: c.data_root.clone(),
        seed: c.seed,
        trials: c.trials,
        schedule: c.schedule.map(Into::into),
    };
    let cfg = resolve(c.config.as_deref(), &flags)?;
    fs::create_dir_all(&c.out).map_err(|e| write_err(&c.out, e))?;
    let mut ctx = Ctx {
        cfg,
        out: c.out.clone(),
        files: Vec::new(),
    };
    match cli.command {
        Command::Train { json } => cmd_train(&mut ctx, json),
        Command::Sleep { network, stats } => cmd_sleep(&mut ctx, &network, stats.as_deref()),
        Command::Eval {
            network,
            patches,
            noise,
            blur,
        } => cmd_eval(&mut ctx, &network, patches.as_deref(), noise, blur),
        Command::Experiment(e) => cmd_experiment(&mut ctx, e),
        Command::Analyze(a) => cmd_analyze(&mut ctx, a),
        Command::Presets => unreachable!(),
    }
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{what} not found: {}", path.display())))
    }
}

fn patches_layout(cfg: &ExperimentConfig, seed: u64) -> Result<Option<PatchesLayout>, CliError> {
    match cfg.dataset {
        DatasetSpec::Patches {
            n_side,
            n_images,
            overlap,
            on_count,
        } => Ok(Some(PatchesLayout::generate(n_side, n_images, overlap, on_count, seed)?)),
        _ => Ok(None),
    }
}

/// Test data for the configured dataset, or the given patches layout.
fn test_data(cfg: &ExperimentConfig, patches: Option<&Path>) -> Result<Dataset, CliError> {
    if let Some(path) = patches {
        require(path, "patches layout")?;
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        return Ok(PatchesLayout::from_json(&text)?.to_dataset());
    }
    let (_, test) = cfg.dataset.load(cfg.trial_seed(0))?;
    let mut classes: Vec<usize> = cfg.groups.iter().flatten().copied().collect();
    classes.sort_unstable();
    Ok(test.filter_classes(&classes))
}

fn cmd_train(ctx: &mut Ctx, json: bool) -> Result<(), CliError> {
    let cfg = ctx.cfg.clone();
    let seed = cfg.trial_seed(0);
    let (train, _) = cfg.dataset.load(seed)?;
    let seq = split_tasks(&train, &cfg.groups)?;
    let mut net = Network::init(&cfg.arch, seed)?;
    let mut stats = ActivationStats::new(&cfg.arch);
    for (pos, task) in seq.tasks.iter().enumerate() {
        let tc = TrainConfig {
            seed: train_seed(seed, pos),
            ..cfg.train.clone()
        };
        (net, stats) = train_task(&net, &task.data, &tc, &stats)?;
        info!("trained task {} ({:?})", pos + 1, task.classes);
    }
    let name = if json { "network.json" } else { "network.bin" };
    let path = ctx.out.join(name);
    save_network(&net, &path)?;
    ctx.files.push(name.into());
    let stats_path = ctx.out.join("stats.json");
    save_stats(&stats, &stats_path)?;
    ctx.files.push("stats.json".into());
    if let Some(layout) = patches_layout(&cfg, seed)? {
        ctx.write("patches.json", layout.to_json()?)?;
    }
    println!("wrote {}", path.display());
    ctx.manifest("train", json!({ "seed": seed }))
}

fn cmd_sleep(ctx: &mut Ctx, network: &Path, stats: Option<&Path>) -> Result<(), CliError> {
    require(network, "network file")?;
    let stats_path = stats
        .map(Path::to_path_buf)
        .unwrap_or_else(|| network.with_file_name("stats.json"));
    if !stats_path.exists() {
        return Err(CliError::Input(format!(
            "sleep needs the activation stats saved by `train`: {} not found",
            stats_path.display()
        )));
    }
    let net = load_network(network)?;
    let stats = load_stats(&stats_path)?;
    let sleep = SleepConfig {
        seed: sleep_seed(ctx.cfg.trial_seed(0), 0),
        ..ctx.cfg.sleep.clone()
    };
    let (slept, summary) = run_sleep_with_summary(&net, &stats, &sleep)?;
    let ext = if network.extension().is_some_and(|e| e == "json") { "json" } else { "bin" };
    let name = format!("network-slept.{ext}");
    let path = ctx.out.join(&name);
    save_network(&slept, &path)?;
    ctx.files.push(name);
    println!("{} steps, spikes per layer {:?}", summary.n_steps, summary.spike_counts);
    println!("wrote {}", path.display());
    ctx.manifest(
        "sleep",
        json!({ "network": network, "stats": stats_path, "sleep": sleep, "summary": summary }),
    )
}

fn cmd_eval(
    ctx: &mut Ctx,
    network: &Path,
    patches: Option<&Path>,
    noise: Option<f64>,
    blur: Option<f64>,
) -> Result<(), CliError> {
    require(network, "network file")?;
    let net = load_network(network)?;
    let mut data = test_data(&ctx.cfg, patches)?;
    let corruption = match (noise, blur) {
        (Some(level), _) => Some((CorruptionKind::GaussianNoise, level)),
        (_, Some(level)) => Some((CorruptionKind::GaussianBlur, level)),
        _ => None,
    };
    if let Some((kind, level)) = corruption {
        data = corrupt(
            &data,
            &CorruptionSpec {
                kind,
                level,
                seed: ctx.cfg.seed,
            },
        )?;
    }
    let m = evaluate(&net, &data)?;
    println!("accuracy {:.4} on {} examples", m.accuracy, data.len());
    ctx.write_json("metrics.json", &m)?;
    ctx.write("confusion.csv", matrix_csv(&m.confusion))?;
    ctx.manifest("eval", json!({ "network": network, "corruption": corruption }))
}

fn matrix_csv<T: std::fmt::Display>(m: &[Vec<T>]) -> String {
    let n = m.first().map_or(0, Vec::len);
    let mut out = format!(
        "row,{}\n",
        (0..n).map(|j| j.to_string()).collect::<Vec<_>>().join(",")
    );
    for (i, row) in m.iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out += &format!("{i},{}\n", vals.join(","));
    }
    out
}

fn report_chart(report: &RunReport) -> String {
    let series: Vec<Series> = report
        .rows
        .iter()
        .zip(&report.accuracy)
        .map(|(name, values)| Series {
            name: name.clone(),
            values: values.clone(),
            dashed: name != "overall",
        })
        .collect();
    line_chart(&report.name, &report.phases, &series)
}

fn print_report(report: &RunReport) {
    print!("{}", report.accuracy_csv());
}

fn cmd_experiment(ctx: &mut Ctx, cmd: ExperimentCmd) -> Result<(), CliError> {
    let cfg = ctx.cfg.clone();
    match cmd {
        ExperimentCmd::Incremental => {
            let report = run_incremental(&cfg)?;
            print_report(&report);
            ctx.write_json("report.json", &report)?;
            ctx.write("accuracy.csv", report.accuracy_csv())?;
            ctx.write("accuracy.svg", report_chart(&report))?;
            ctx.manifest("experiment incremental", json!({ "seeds": report.trials.iter().map(|t| t.seed).collect::<Vec<_>>() }))
        }
        ExperimentCmd::Generalization => {
            if cfg.noise_levels.is_empty() && cfg.blur_levels.is_empty() {
                return Err(CliError::Input("no noise_levels or blur_levels configured".into()));
            }
            let report = run_generalization(&cfg)?;
            print!("{}", report.to_csv());
            ctx.write_json("generalization.json", &report)?;
            ctx.write("generalization.csv", report.to_csv())?;
            for (kind, file, title) in [
                (CorruptionKind::GaussianNoise, "noise.svg", "Gaussian noise"),
                (CorruptionKind::GaussianBlur, "blur.svg", "Gaussian blur"),
            ] {
                let rows = report.rows_of(kind);
                if rows.is_empty() {
                    continue;
                }
                let labels: Vec<String> = rows.iter().map(|r| r.level.to_string()).collect();
                let series = [
                    Series { name: "before sleep".into(), values: rows.iter().map(|r| r.before).collect(), dashed: false },
                    Series { name: "after sleep".into(), values: rows.iter().map(|r| r.after).collect(), dashed: false },
                ];
                ctx.write(file, line_chart(title, &labels, &series))?;
            }
            ctx.manifest("experiment generalization", json!({ "seeds": report.seeds }))
        }
        ExperimentCmd::Overlap => {
            let report = run_overlap_sweep(&cfg)?;
            ctx.write_json("sweep.json", &report)?;
            ctx.write("sweep.csv", report.to_csv())?;
            let labels: Vec<String> = report.points.iter().map(|p| p.overlap.to_string()).collect();
            let mut series = Vec::new();
            if let Some(first) = report.points.first() {
                for (c, phase) in first.sleep.phases.iter().enumerate() {
                    series.push(Series {
                        name: format!("task1 {phase}"),
                        values: report.points.iter().map(|p| p.sleep.accuracy[0][c]).collect(),
                        dashed: phase.starts_with('T'),
                    });
                }
                series.push(Series {
                    name: "task1 no sleep".into(),
                    values: report.points.iter().map(|p| p.baseline.final_accuracy(0)).collect(),
                    dashed: true,
                });
            }
            ctx.write("sweep.svg", line_chart("Accuracy vs overlap", &labels, &series))?;
            println!("overlap,sleep_final_overall,baseline_final_overall");
            for p in &report.points {
                println!("{},{:.4},{:.4}", p.overlap, p.sleep.final_overall(), p.baseline.final_overall());
            }
            ctx.manifest("experiment overlap", json!({ "skipped": report.skipped }))
        }
        ExperimentCmd::Transfer => {
            let report = run_forward_transfer(&cfg)?;
            println!(
                "task 2 accuracy: untrained {:.4}, after task 1 {:.4}, after sleep {:.4}",
                report.chance, report.after_training, report.after_sleep
            );
            ctx.write_json("transfer.json", &report)?;
            ctx.manifest("experiment transfer", json!({ "seeds": report.seeds }))
        }
        ExperimentCmd::Ga { budget, population } => {
            let space = default_space(&cfg.sleep);
            let opts = GaOptions {
                population,
                seed: cfg.seed,
                ..GaOptions::default()
            };
            let result = ga_search(
                &space,
                |sleep| {
                    let c = ExperimentConfig {
                        sleep: sleep.clone(),
                        ..cfg.clone()
                    };
                    Ok(run_incremental(&c)?.final_overall())
                },
                budget,
                &opts,
            )?;
            println!("best final overall accuracy {:.4}", result.best_fitness);
            ctx.write_json("ga.json", &result)?;
            let best = toml::to_string(&json!({ "sleep": result.best }))
                .map_err(|e| CliError::Internal(e.to_string()))?;
            ctx.write("best-sleep.toml", best)?;
            ctx.manifest("experiment ga", json!({ "space": space, "options": opts }))
        }
    }
}

/// Log-scale ranges of a quarter to four times the configured values.
fn default_space(base: &SleepConfig) -> SearchSpace {
    let around = |param, v: f64| Gene {
        param,
        lo: v / 4.0,
        hi: v * 4.0,
        log: true,
    };
    let mut genes = vec![
        around(SleepParam::Dt, base.dt),
        around(SleepParam::IncFactor, base.inc_factor.max(1e-6)),
        around(SleepParam::DecFactor, base.dec_factor.max(1e-7)),
    ];
    for (l, (&t, &a)) in base.thresholds.iter().zip(&base.synaptic_scales).enumerate() {
        genes.push(around(SleepParam::Threshold(l), t));
        genes.push(around(SleepParam::SynapticScale(l), a));
    }
    SearchSpace {
        base: base.clone(),
        genes,
    }
}

fn cmd_analyze(ctx: &mut Ctx, cmd: AnalyzeCmd) -> Result<(), CliError> {
    match cmd {
        AnalyzeCmd::Spread { network, patches } => {
            require(&network, "network file")?;
            let net = load_network(&network)?;
            let data = test_data(&ctx.cfg, patches.as_deref())?;
            let r = weight_spread(&net, &data)?;
            println!("mean spread {:.6}", r.mean_spread);
            ctx.write_json("spread.json", &r)?;
            ctx.manifest("analyze spread", json!({ "network": network }))
        }
        AnalyzeCmd::Correlation { network, layer, cap } => {
            require(&network, "network file")?;
            let net = load_network(&network)?;
            let data = test_data(&ctx.cfg, None)?;
            let c = activation_correlation(&net, &data, layer, cap)?;
            println!(
                "layer {layer}: mean diagonal {:.4}, mean off-diagonal {:.4}, skipped {}",
                c.mean_diagonal(),
                c.mean_off_diagonal(),
                c.skipped
            );
            ctx.write_json("correlation.json", &c)?;
            ctx.write("correlation.csv", matrix_csv(&c.matrix))?;
            ctx.manifest("analyze correlation", json!({ "network": network, "layer": layer, "cap": cap }))
        }
        AnalyzeCmd::Partition { n } => {
            let setup = ForgettingSetup {
                seed: ctx.cfg.seed,
                ..ForgettingSetup::default()
            };
            let sleep = presets::forgetting_sleep();
            let mut rows = Vec::new();
            let (mut c_empty_before, mut c_empty_after, mut skipped) = (0, 0, 0);
            for t in 0..n as u64 {
                let (_, net, patterns, stats) = forgetting_trial(&setup, setup.seed + t)?;
                let p1 = patterns.inputs().row(0).to_vec();
                let p2 = patterns.inputs().row(1).to_vec();
                let before = hidden_partition(&net, &p1, &p2)?;
                let slept = match sleepnet::snn::run_sleep(&net, &stats, &SleepConfig { seed: t, ..sleep.clone() }) {
                    Ok(s) => s,
                    Err(sleepnet::Error::ZeroActivation { layer }) => {
                        info!("trial {t}: layer {layer} never fired, skipped");
                        skipped += 1;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                let after = hidden_partition(&slept, &p1, &p2)?;
                c_empty_before += before.c_set.is_empty() as usize;
                c_empty_after += after.c_set.is_empty() as usize;
                rows.push(json!({ "trial": t, "before": before, "after": after }));
            }
            let slept = n - skipped;
            println!("C empty: {c_empty_before}/{slept} before sleep, {c_empty_after}/{slept} after sleep ({skipped} trials skipped, a layer never fired)");
            ctx.write_json("partition.json", &json!({
                "sleep": sleep,
                "c_empty_before": c_empty_before,
                "c_empty_after": c_empty_after,
                "skipped": skipped,
                "trials": rows,
            }))?;
            ctx.manifest("analyze partition", json!({ "setup": setup }))
        }
        AnalyzeCmd::Forgetting { n, on_count, overlap } => {
            let d = ForgettingSetup::default();
            let setup = ForgettingSetup {
                on_count: on_count.unwrap_or(d.on_count),
                overlap: overlap.unwrap_or(d.overlap),
                seed: ctx.cfg.seed,
                ..d
            };
            let r = forgetting_rate(n, &setup)?;
            println!(
                "category 1 misclassified in {}/{} trials ({:.2}); recall lost in {} ({:.2})",
                r.n_forgotten, r.n_trials, r.rate, r.n_no_recall, r.no_recall_rate
            );
            ctx.write_json("forgetting.json", &json!({ "setup": setup, "report": r }))?;
            ctx.manifest("analyze forgetting", json!({}))
        }
    }
}
