use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};

use asgan_core::asgan::{generate, train_kind, Checkpoint, TrainConfig};
use asgan_core::data::{fit_scaler, read_csv, window, write_csv, write_series_csv, Label, SensorSeries};
use asgan_core::eval::{bench, distance_check, hp_grid, ratio_sweep, replicate_seed, summarize, Benchmark, SweepReport};
use asgan_core::monitor::{evaluate_prepared, prepare, write_metrics, MetricsRow, Prepared};
use asgan_core::ndcore::Rng;
use asgan_core::Error;

use crate::config::{show_layout, RunConfig};
use crate::run::{RunDir, RunLogger, DEFAULT_ROOT};

/// Creates the run directory, snapshots the configuration and runs
/// `command`. Returns the run directory.
pub fn execute(command: &str, cfg: &RunConfig, logger: &RunLogger) -> Result<PathBuf> {
    let root = std::env::var_os("ASGAN_RUN_DIR").map_or_else(|| PathBuf::from(DEFAULT_ROOT), PathBuf::from);
    let dir = RunDir::create(&root, command, cfg.seed)?;
    std::fs::write(dir.file("config.txt"), cfg.render()).context("writing config snapshot")?;
    logger.attach(&dir.file("run.log"))?;
    log::info!("{command} seed={} jobs={} dir={}", cfg.seed, cfg.jobs, dir.path().display());
    let start = Instant::now();
    match command {
        "synth-data" => synth_data(cfg, &dir)?,
        "train" => train(cfg, &dir)?,
        "generate" => generate_windows(cfg, &dir)?,
        "augment-eval" => augment_eval(cfg, &dir)?,
        "sweep-ratio" => sweep_ratio(cfg, &dir)?,
        "sweep-hp" => sweep_hp(cfg, &dir)?,
        "bench" => run_bench(cfg, &dir)?,
        other => unreachable!("unknown subcommand {other}"),
    }
    log::info!("{command} finished in {:.2?}", start.elapsed());
    log::logger().flush();
    Ok(dir.path().to_path_buf())
}

fn load_trials(cfg: &RunConfig) -> Result<(SensorSeries, Vec<SensorSeries>)> {
    match &cfg.train_path {
        Some(path) => {
            let train = read_csv(path).with_context(|| format!("reading training trial {}", path.display()))?;
            let tests = cfg
                .test_paths
                .iter()
                .map(|p| read_csv(p).with_context(|| format!("reading test trial {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            log::info!("training trial {}, {} test trials from CSV", path.display(), tests.len());
            Ok((train, tests))
        }
        None => {
            let b = Benchmark::from_profile(&cfg.synth, cfg.seed, cfg.test_trials)?;
            log::info!(
                "synthetic benchmark: trial 0 trains, trials 1..={} test; layout {}",
                cfg.test_trials,
                show_layout(&cfg.synth.layout)
            );
            Ok((b.train, b.tests))
        }
    }
}

fn prepared(cfg: &RunConfig, need_tests: bool) -> Result<Prepared> {
    let (train, tests) = load_trials(cfg)?;
    if need_tests && tests.is_empty() {
        return Err(Error::Config("evaluation needs at least one test trial (data.tests or synth.test_trials)".into()).into());
    }
    let prep = prepare(&train, &tests, cfg.experiment.n, cfg.experiment.overlap)?;
    log::info!(
        "training windows: {} abnormal, {} normal; clamped test entries {:?}",
        prep.train.count(Label::Abnormal),
        prep.train.count(Label::Normal),
        prep.clamped
    );
    Ok(prep)
}

fn synth_data(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    let b = Benchmark::from_profile(&cfg.synth, cfg.seed, cfg.test_trials)?;
    for (i, trial) in std::iter::once(&b.train).chain(&b.tests).enumerate() {
        let name = format!("trial_{i}.csv");
        write_series_csv(trial, dir.file(&name))?;
        let ws = window(trial, cfg.experiment.n, cfg.experiment.overlap)?;
        log::info!(
            "{name}: {} samples, {} abnormal and {} normal windows",
            trial.len(),
            ws.count(Label::Abnormal),
            ws.count(Label::Normal)
        );
    }
    Ok(())
}

fn train(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    let prep = prepared(cfg, false)?;
    let abnormal = prep.train.with_label(Label::Abnormal);
    let tc = TrainConfig {
        seed: cfg.seed,
        ..cfg.experiment.train.clone()
    };
    let trained = train_kind(cfg.kind, &abnormal, &tc)?;
    let report = &trained.report;
    let mut w = dir.create_file("losses.csv")?;
    writeln!(w, "iteration,gen_loss,critic_loss,real_score")?;
    for (i, ((g, c), r)) in report.gen_loss.iter().zip(&report.critic_loss).zip(&report.real_score).enumerate() {
        writeln!(w, "{i},{g},{c},{r}")?;
    }
    w.flush()?;
    Checkpoint {
        kind: trained.kind,
        generator: trained.generator,
        critic: trained.critic,
        scaler: Some(prep.scaler.clone()),
    }
    .save(dir.file("model.asg"))?;
    log::info!(
        "{} trained for {} iterations in {:.2?}; plateau at {:?}",
        cfg.kind.name(),
        report.gen_loss.len(),
        report.duration,
        report.plateau_at
    );
    Ok(())
}

fn generate_windows(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("generate needs a checkpoint (--checkpoint or generate.checkpoint)".into()))?;
    let (train, _) = load_trials(cfg)?;
    let ck = Checkpoint::load_for(path, cfg.experiment.n, train.channels()).with_context(|| format!("loading {}", path.display()))?;
    let raw = window(&train, cfg.experiment.n, cfg.experiment.overlap)?;
    let scaler = match &ck.scaler {
        Some(s) => s.clone(),
        None => fit_scaler(&raw)?,
    };
    let (scaled, clamped) = scaler.apply(&raw)?;
    if clamped > 0 {
        log::warn!("{clamped} conditioning entries fell outside the checkpoint range and were clamped");
    }
    let abnormal = scaled.with_label(Label::Abnormal);
    let normal = scaled.with_label(Label::Normal);
    let out = generate(&ck.generator, &abnormal, cfg.count, &mut Rng::new(cfg.seed).split("generate"))?;
    write_csv(&out, dir.file("generated.csv"))?;
    write_csv(&scaler.invert(&out)?, dir.file("generated_signal.csv"))?;
    let report = distance_check(&out, &abnormal, &normal)?;
    report.write_pairs(dir.create_file("distances.csv")?)?;
    log::info!(
        "{} windows from a {} checkpoint; {:.3} lie closer to real abnormal than normal windows",
        out.len(),
        ck.kind.name(),
        report.fraction_below
    );
    Ok(())
}

fn augment_eval(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    let prep = prepared(cfg, true)?;
    let seed = replicate_seed(cfg.seed, 0);
    let out = evaluate_prepared(&prep, cfg.augmenter, &cfg.experiment, seed)?;
    let ratio = out.real_abnormal as f64 / out.normal as f64;
    let rows: Vec<MetricsRow> = out
        .metrics
        .iter()
        .enumerate()
        .map(|(t, m)| MetricsRow {
            augmenter: cfg.augmenter.name().into(),
            trial: t + 1,
            replicate: 0,
            ratio,
            metrics: *m,
            seed,
        })
        .collect();
    write_metrics(dir.create_file("metrics.csv")?, &rows)?;
    log::info!(
        "{}: {} synthetic windows added, mean F-score {:.4}",
        cfg.augmenter,
        out.generated,
        out.mean_f_score()
    );
    Ok(())
}

fn write_sweep(report: &SweepReport, augmenter: &str, dir: &RunDir) -> Result<()> {
    report.write_rows(dir.create_file("rows.csv")?, augmenter)?;
    report.write_summary(dir.create_file("summary.csv")?)?;
    for why in &report.skipped {
        log::warn!("skipped {why}");
    }
    for c in &report.cells {
        log::info!("{:?}: mean {:.4} sd {:.4}", c.key, c.mean, c.sd);
    }
    if let Some(best) = report.argmax() {
        log::info!("best cell {:?}", report.cells[best].key);
    }
    Ok(())
}

fn sweep_ratio(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    let prep = prepared(cfg, true)?;
    let report = ratio_sweep(&cfg.ratios, &prep, cfg.augmenter, &cfg.experiment, cfg.replicates, cfg.seed, cfg.jobs)?;
    write_sweep(&report, cfg.augmenter.name(), dir)
}

fn sweep_hp(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    let prep = prepared(cfg, true)?;
    let report = hp_grid(&cfg.he_values, &cfg.hf_values, &prep, &cfg.experiment, cfg.replicates, cfg.seed, cfg.jobs)?;
    write_sweep(&report, "asgan", dir)
}

fn run_bench(cfg: &RunConfig, dir: &RunDir) -> Result<()> {
    if cfg.augmenters.is_empty() {
        return Err(Error::Config("bench needs at least one augmenter".into()).into());
    }
    let prep = prepared(cfg, true)?;
    let rows = bench(&cfg.augmenters, &prep, &cfg.experiment, cfg.replicates, cfg.seed, cfg.jobs)?;
    write_metrics(dir.create_file("metrics.csv")?, &rows)?;
    let mut w = dir.create_file("summary.csv")?;
    writeln!(w, "augmenter,mean_f_score,sd")?;
    for a in &cfg.augmenters {
        let (mean, sd) = summarize(&rows, a.name());
        writeln!(w, "{a},{mean},{sd}")?;
        log::info!("{a}: mean F-score {mean:.4} (sd {sd:.4})");
    }
    w.flush()?;
    Ok(())
}
