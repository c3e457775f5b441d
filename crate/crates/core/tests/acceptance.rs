//! Acceptance suite: one PASS/FAIL line per criterion on stdout, nonzero
//! exit if any criterion fails. Runs as a plain binary (no test harness).

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use asgan_core::asgan::{generate, train, train_observed, ModelKind, TrainConfig};
use asgan_core::attention::{head_forward, multi_head_forward, AttentionConfig, AttentionHead, MultiHeadAttention};
use asgan_core::baselines::{smote_traced, SmoteConfig};
use asgan_core::data::{synth_series, window, window_count, Label, SynthProfile};
use asgan_core::eval::{bench, distance_check, ratio_sweep, summarize, Benchmark, DEFAULT_RATIOS};
use asgan_core::monitor::{f_score, write_metrics, Augmenter, ExperimentConfig, Prepared};
use asgan_core::ndcore::{softmax_rows, Rng, Tensor};

/// Benchmark seed for the synthetic-analog criteria.
const SEED: u64 = 1;
const REPLICATES: usize = 3;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: u64) -> (bool, String) {
    (elapsed.as_secs() < limit_s, format!("{:.1}s of {limit_s}s", elapsed.as_secs_f64()))
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let mut worst = (0.0, "");
    for op in common::GRADIENT_OPS {
        for seed in 0..20 {
            let e = common::gradient_error(op, seed);
            if e > worst.0 {
                worst = (e, op);
            }
        }
    }
    let (fast, time) = within(start.elapsed(), 60);
    verdict(
        worst.0 < 1e-4 && fast,
        format!("7 ops x 20 instances, worst relative error {:.2e} ({}), {time}", worst.0, worst.1),
    )
}

fn attention() -> Verdict {
    let mut rng = Rng::new(2);
    let mut softmax_dev: f64 = 0.0;
    for i in 0..50 {
        let m = rng.normal_tensor(6, 9).map(|x| x * 10f64.powi(i % 4));
        let s = softmax_rows(&m);
        for r in 0..s.rows() {
            softmax_dev = softmax_dev.max((s.row(r).iter().sum::<f64>() - 1.0).abs());
        }
    }
    let mut identical = true;
    for seed in 0..20 {
        let mut r = Rng::new(seed);
        let (n, v) = (12, 3);
        let head = AttentionHead::new(r.normal_tensor(v, v), r.normal_tensor(v, v), r.normal_tensor(v, v)).unwrap();
        let x = r.uniform_tensor(n, v, 0.0, 1.0);
        let single = head_forward(&head, &x, (n * v) as f64).unwrap();
        let multi = MultiHeadAttention::from_parts(vec![head], Tensor::identity(v), n).unwrap();
        identical &= multi_head_forward(&multi, &x).unwrap() == single;
    }
    let cfg = AttentionConfig {
        heads: 3,
        head_width: 8,
        n: 30,
        v: 1,
    };
    let m = MultiHeadAttention::init(cfg, &mut rng).unwrap();
    let shape = multi_head_forward(&m, &rng.uniform_tensor(30, 1, 0.0, 1.0)).unwrap().shape();
    verdict(
        softmax_dev <= 1e-12 && identical && shape == (30, 1),
        format!("softmax row-sum deviation {softmax_dev:.1e}; one head with identity output equal: {identical}; 3-head output {shape:?}"),
    )
}

fn loss_identity(abnormal: &asgan_core::data::WindowSet) -> Verdict {
    let cfg = TrainConfig {
        iterations: 100,
        seed: SEED,
        ..TrainConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    let outcome = train_observed(ModelKind::AsGan, abnormal, &cfg, |_, s| {
        worst = worst.max((s.gen_loss + s.critic_loss + s.real_score).abs());
        steps += 1;
    });
    verdict(
        outcome.is_ok() && steps == 100 && worst <= 1e-12,
        format!("{steps} batches, worst |L_G + L_D + mean(d_real)| = {worst:.1e}"),
    )
}

fn windowing() -> Verdict {
    let mut mismatches = 0;
    let mut cases = 0;
    for n in [5, 10, 30] {
        for len in n..=200 {
            let series = common::one_segment_series(len, Label::Normal);
            for overlap in 0..n {
                let closed = (len - n) / (n - overlap) + 1;
                let emitted = window(&series, n, overlap).unwrap().len();
                cases += 1;
                if emitted != closed || window_count(len, n, overlap) != closed || common::enumerated_window_count(len, n, overlap) != closed {
                    mismatches += 1;
                }
            }
        }
    }
    let ws = window(&synth_series(&SynthProfile::default_with_seed(SEED)).unwrap(), 30, 28).unwrap();
    let (a, n) = (ws.count(Label::Abnormal), ws.count(Label::Normal));
    verdict(
        mismatches == 0 && a.abs_diff(40) <= 2 && n.abs_diff(120) <= 2,
        format!("{cases} sweep cases, {mismatches} mismatches; default profile {a} abnormal / {n} normal"),
    )
}

/// Criteria 4 and 6 share one default-length run.
fn clipping_and_distance(prep: &Prepared) -> (Verdict, Verdict) {
    let start = Instant::now();
    let abnormal = prep.train.with_label(Label::Abnormal);
    let normal = prep.train.with_label(Label::Normal);
    let cfg = TrainConfig {
        seed: SEED,
        ..TrainConfig::default()
    };
    let trained = match train(&abnormal, &cfg) {
        Ok(t) => t,
        Err(e) => return (verdict(false, format!("training failed: {e}")), verdict(false, "no generator")),
    };
    let max_w = trained.critic.max_abs_weight();
    let clip = verdict(
        max_w <= cfg.clip_c,
        format!("{} iterations, max |critic weight| {max_w} vs clip {}", cfg.iterations, cfg.clip_c),
    );
    let generated = generate(&trained.generator, &abnormal, 100, &mut Rng::new(SEED).split("generate")).unwrap();
    let report = distance_check(&generated, &abnormal, &normal).unwrap();
    let (fast, time) = within(start.elapsed(), 300);
    let dist = verdict(
        report.fraction_below >= 0.8 && fast,
        format!("{:.2} of 100 generated windows have d1 < d2 (need 0.80), {time}", report.fraction_below),
    );
    (clip, dist)
}

fn bench_csv(prep: &Prepared, jobs: usize) -> (Vec<asgan_core::monitor::MetricsRow>, Vec<u8>) {
    let augs = [Augmenter::None, Augmenter::Wgan, Augmenter::AsGan];
    let rows = bench(&augs, prep, &ExperimentConfig::default(), REPLICATES, SEED, jobs).unwrap();
    let mut csv = Vec::new();
    write_metrics(&mut csv, &rows).unwrap();
    (rows, csv)
}

fn improvement(rows: &[asgan_core::monitor::MetricsRow], elapsed: Duration) -> Verdict {
    let (none, none_sd) = summarize(rows, "none");
    let (wgan, wgan_sd) = summarize(rows, "wgan");
    let (asgan, asgan_sd) = summarize(rows, "asgan");
    let (fast, time) = within(elapsed, 900);
    verdict(
        asgan >= none + 0.05 && asgan >= wgan && fast,
        format!(
            "mean F (sd): asgan {asgan:.4} ({asgan_sd:.4}), none {none:.4} ({none_sd:.4}), wgan {wgan:.4} ({wgan_sd:.4}); gain {:+.4}, {time}",
            asgan - none
        ),
    )
}

fn ratio_trend(prep: &Prepared) -> Verdict {
    let report = match ratio_sweep(&DEFAULT_RATIOS, prep, Augmenter::AsGan, &ExperimentConfig::default(), REPLICATES, SEED, 1) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("sweep failed: {e}")),
    };
    let means: Vec<f64> = report.cells.iter().map(|c| c.mean).collect();
    let inversions = means.windows(2).filter(|w| w[1] < w[0]).count();
    let shown: Vec<String> = report.cells.iter().map(|c| format!("{}:{:.4}", c.key[0], c.mean)).collect();
    verdict(
        report.cells.len() == DEFAULT_RATIOS.len() && inversions <= 1,
        format!("{}; {inversions} inversion(s)", shown.join(" ")),
    )
}

fn smote_geometry() -> Verdict {
    let minority = common::random_windows(40, 30, &mut Rng::new(3));
    let (out, draws) = smote_traced(&minority, &SmoteConfig { k: 5, count: 1000, seed: 3 }).unwrap();
    let (mut outside, mut collinear): (f64, f64) = (0.0, 0.0);
    for (i, d) in draws.iter().enumerate() {
        let (o, c) = common::smote_residuals(out.row(i), minority.row(d.base), minority.row(d.neighbor));
        outside = outside.max(o);
        collinear = collinear.max(c);
    }
    verdict(
        out.len() == 1000 && outside <= 1e-9 && collinear <= 1e-9,
        format!("1000 samples, worst betweenness excess {outside:.1e}, worst collinearity residual {collinear:.1e}"),
    )
}

fn f_score_oracle() -> Verdict {
    let mut rng = Rng::new(4);
    let mut disagreements = 0;
    for _ in 0..1000 {
        let len = 1 + rng.below(50);
        let rate = rng.uniform();
        let truth: Vec<bool> = (0..len).map(|_| rng.uniform() < rate).collect();
        let pred: Vec<bool> = (0..len).map(|_| rng.uniform() < 0.5).collect();
        let m = f_score(&pred, &truth).unwrap();
        let oracle = common::brute_confusion(&pred, &truth);
        if (m.tp, m.fp, m.tn, m.fn_, m.precision, m.recall, m.f_score) != oracle {
            disagreements += 1;
        }
    }
    verdict(disagreements == 0, format!("1000 random cases, {disagreements} disagreements"))
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |id: u32, name: &'static str, v: Verdict| {
        println!("criterion {id:>2} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };

    report(1, "gradient suite", gradients());
    report(2, "attention invariants", attention());
    let prep = Benchmark::synthetic(SEED, 4).unwrap().prepare(30, 28).unwrap();
    report(3, "loss identity", loss_identity(&prep.train.with_label(Label::Abnormal)));
    let (clip, dist) = clipping_and_distance(&prep);
    report(4, "critic clipping", clip);
    report(5, "windowing", windowing());
    report(6, "generated windows near abnormal class", dist);
    let start = Instant::now();
    let (rows, first) = bench_csv(&prep, 1);
    report(7, "augmentation gain", improvement(&rows, start.elapsed()));
    report(8, "ratio trend", ratio_trend(&prep));
    report(9, "SMOTE geometry", smote_geometry());
    let (_, second) = bench_csv(&prep, 2);
    report(
        10,
        "bench determinism",
        verdict(first == second, format!("two runs ({} bytes, 1 and 2 workers) identical: {}", first.len(), first == second)),
    );
    report(11, "F-score oracle", f_score_oracle());

    let failed: Vec<u32> = results.iter().filter(|(_, _, v)| !v.pass).map(|(id, _, _)| *id).collect();
    println!("acceptance: {} of {} criteria pass", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
