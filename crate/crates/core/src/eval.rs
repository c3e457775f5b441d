//! Quality diagnostics and experiment sweeps: distance of generated windows
//! to each real class, the balanced-ratio sweep, the `{h_e, h_f}` grid and
//! the augmenter benchmark.

use std::io::Write;
use std::thread;

use crate::asgan::TrainConfig;
use crate::data::{synth_series, Label, SensorSeries, SynthProfile, WindowSet};
use crate::error::{Error, Result};
use crate::monitor::{evaluate_prepared, Augmenter, CellOutcome, ExperimentConfig, MetricsRow, Prepared};
use crate::ndcore::Rng;

/// Ratios of abnormal to normal training windows swept by default.
pub const DEFAULT_RATIOS: [f64; 5] = [0.07, 0.13, 0.20, 0.27, 0.33];
/// Values of `h_e` and `h_f` swept by default.
pub const DEFAULT_GRID: [usize; 4] = [1, 3, 5, 10];

/// Mean distances from each generated window to the real classes.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceReport {
    /// `(d2, d1)` per generated window: mean distance to the normal windows,
    /// then to the abnormal windows.
    pub pairs: Vec<(f64, f64)>,
    /// Share of generated windows with `d1 < d2`.
    pub fraction_below: f64,
}

impl DistanceReport {
    /// Two-column `d2,d1` file for scatter plots.
    pub fn write_pairs<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "d2,d1")?;
        for (d2, d1) in &self.pairs {
            writeln!(w, "{d2},{d1}")?;
        }
        Ok(())
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn mean_distance(x: &[f64], set: &WindowSet) -> f64 {
    set.rows().map(|r| euclidean(x, r)).sum::<f64>() / set.len() as f64
}

/// `d1` is the mean Euclidean distance from a flattened generated window to
/// every abnormal window, `d2` the same against normal windows.
pub fn distance_check(generated: &WindowSet, abnormal: &WindowSet, normal: &WindowSet) -> Result<DistanceReport> {
    if abnormal.is_empty() || normal.is_empty() {
        return Err(Error::contract("distance check needs non-empty abnormal and normal sets"));
    }
    if generated.is_empty() {
        return Err(Error::contract("distance check needs at least one generated window"));
    }
    for set in [abnormal, normal] {
        if (set.n(), set.v()) != (generated.n(), generated.v()) {
            return Err(Error::shape("distance_check", (generated.n(), generated.v()), (set.n(), set.v())));
        }
    }
    let pairs: Vec<(f64, f64)> = generated
        .rows()
        .map(|g| (mean_distance(g, normal), mean_distance(g, abnormal)))
        .collect();
    let below = pairs.iter().filter(|(d2, d1)| d1 < d2).count();
    Ok(DistanceReport {
        fraction_below: below as f64 / pairs.len() as f64,
        pairs,
    })
}

/// A training trial plus held-out trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub train: SensorSeries,
    pub tests: Vec<SensorSeries>,
}

impl Benchmark {
    /// Default synthetic profile for every trial; trial `i` (0 = training)
    /// uses the `i`-th split of `seed`.
    pub fn synthetic(seed: u64, test_trials: usize) -> Result<Self> {
        Self::from_profile(&SynthProfile::default_with_seed(seed), seed, test_trials)
    }

    /// Like [`Benchmark::synthetic`] with every setting but the seed taken
    /// from `profile`.
    pub fn from_profile(profile: &SynthProfile, seed: u64, test_trials: usize) -> Result<Self> {
        let root = Rng::new(seed);
        let trial = |i: u64| {
            synth_series(&SynthProfile {
                seed: root.split_index(i).seed(),
                ..profile.clone()
            })
        };
        Ok(Benchmark {
            train: trial(0)?,
            tests: (1..=test_trials as u64).map(trial).collect::<Result<_>>()?,
        })
    }

    pub fn prepare(&self, n: usize, overlap: usize) -> Result<Prepared> {
        crate::monitor::prepare(&self.train, &self.tests, n, overlap)
    }
}

/// Seed of replicate `r`; shared across cells so that cells differ only in
/// the swept factor.
pub fn replicate_seed(base: u64, replicate: usize) -> u64 {
    Rng::new(base).split_index(replicate as u64).seed()
}

/// Runs `f` on every item with at most `jobs` worker threads. Results come
/// back in input order.
pub fn run_cells<T: Sync, R: Send>(jobs: usize, items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let f = &f;
    let results: Vec<Vec<Result<R>>> = thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(f).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    results.into_iter().flatten().collect()
}

/// One replicate of one cell, scored on one test trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub replicate: usize,
    /// Test trial index, starting at 1 (the training trial is 0).
    pub trial: usize,
    pub seed: u64,
    pub metrics: crate::monitor::EvalMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    /// One coordinate per axis.
    pub key: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Mean F-score over every row of the cell, summed in row order.
    pub mean: f64,
    /// Sample standard deviation of the per-replicate mean F-scores.
    pub sd: f64,
    pub generated: usize,
}

impl SweepCell {
    fn from_outcomes(key: Vec<f64>, outcomes: &[(usize, CellOutcome)]) -> Self {
        let mut rows = Vec::new();
        let mut per_rep = Vec::new();
        for (rep, out) in outcomes {
            per_rep.push(out.mean_f_score());
            for (t, m) in out.metrics.iter().enumerate() {
                rows.push(SweepRow {
                    replicate: *rep,
                    trial: t + 1,
                    seed: out.seed,
                    metrics: *m,
                });
            }
        }
        let mean = rows.iter().map(|r| r.metrics.f_score).sum::<f64>() / rows.len().max(1) as f64;
        SweepCell {
            key,
            rows,
            mean,
            sd: sample_sd(&per_rep),
            generated: outcomes.first().map_or(0, |(_, o)| o.generated),
        }
    }
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub axes: Vec<String>,
    /// Axis values, one list per axis.
    pub values: Vec<Vec<f64>>,
    /// Cells in row-major order over the axes.
    pub cells: Vec<SweepCell>,
    /// Axis points dropped with the reason.
    pub skipped: Vec<String>,
}

impl SweepReport {
    /// Index of the first cell with the highest mean.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, c) in self.cells.iter().enumerate() {
            if best.is_none_or(|b| c.mean > self.cells[b].mean) {
                best = Some(i);
            }
        }
        best
    }

    /// One line per (cell, replicate, trial): axis columns, then the
    /// metrics.
    pub fn write_rows<W: Write>(&self, mut w: W, augmenter: &str) -> Result<()> {
        writeln!(
            w,
            "augmenter,{},trial,replicate,tp,fp,tn,fn,precision,recall,f_score,seed",
            self.axes.join(",")
        )?;
        for c in &self.cells {
            let key: Vec<String> = c.key.iter().map(|k| k.to_string()).collect();
            for r in &c.rows {
                let m = &r.metrics;
                writeln!(
                    w,
                    "{augmenter},{},{},{},{},{},{},{},{},{},{},{}",
                    key.join(","),
                    r.trial,
                    r.replicate,
                    m.tp,
                    m.fp,
                    m.tn,
                    m.fn_,
                    m.precision,
                    m.recall,
                    m.f_score,
                    r.seed
                )?;
            }
        }
        Ok(())
    }

    /// One line per cell with mean, sd and an argmax flag.
    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{},mean_f_score,sd,generated,best", self.axes.join(","))?;
        let best = self.argmax();
        for (i, c) in self.cells.iter().enumerate() {
            let key: Vec<String> = c.key.iter().map(|k| k.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{},{}",
                key.join(","),
                c.mean,
                c.sd,
                c.generated,
                u8::from(best == Some(i))
            )?;
        }
        Ok(())
    }
}

/// Keeps the earliest `keep` abnormal windows of `prep.train` (dropping the
/// most recent first) and every normal window.
pub fn subsample_abnormal(prep: &Prepared, keep: usize) -> Prepared {
    let mut abnormal: Vec<usize> = (0..prep.train.len()).filter(|&i| prep.train.label(i) == Label::Abnormal).collect();
    abnormal.sort_by_key(|&i| (prep.train.origin(i), i));
    abnormal.truncate(keep);
    let mut idx: Vec<usize> = (0..prep.train.len())
        .filter(|&i| prep.train.label(i) != Label::Abnormal || abnormal.contains(&i))
        .collect();
    idx.sort_unstable();
    Prepared {
        train: prep.train.subset(&idx),
        ..prep.clone()
    }
}

/// Abnormal windows kept for `ratio` of `normal` windows.
pub fn abnormal_for_ratio(ratio: f64, normal: usize) -> usize {
    (ratio * normal as f64).round() as usize
}

/// For each ratio, subsamples the abnormal training windows to
/// `round(ratio * normal)`, balances with `augmenter` and scores every
/// replicate. Ratios leaving fewer than two abnormal windows, or more than
/// are available, are skipped with a warning.
pub fn ratio_sweep(
    ratios: &[f64],
    prep: &Prepared,
    augmenter: Augmenter,
    cfg: &ExperimentConfig,
    replicates: usize,
    seed: u64,
    jobs: usize,
) -> Result<SweepReport> {
    if replicates == 0 {
        return Err(Error::config("replicates must be at least 1"));
    }
    let normal = prep.train.count(Label::Normal);
    let available = prep.train.count(Label::Abnormal);
    let mut skipped = Vec::new();
    let mut kept = Vec::new();
    for &r in ratios {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::config(format!("ratio must lie in (0, 1], got {r}")));
        }
        let keep = abnormal_for_ratio(r, normal);
        if keep < 2 || keep > available {
            let why = format!("ratio {r} needs {keep} abnormal windows, {available} available (minimum 2)");
            log::warn!("skipping {why}");
            skipped.push(why);
        } else {
            kept.push((r, keep));
        }
    }
    let jobs_list: Vec<(usize, usize)> = (0..kept.len()).flat_map(|c| (0..replicates).map(move |r| (c, r))).collect();
    let preps: Vec<Prepared> = kept.iter().map(|&(_, k)| subsample_abnormal(prep, k)).collect();
    let outcomes = run_cells(jobs, &jobs_list, |&(c, r)| evaluate_prepared(&preps[c], augmenter, cfg, replicate_seed(seed, r)))?;
    let cells = kept
        .iter()
        .enumerate()
        .map(|(c, &(ratio, _))| {
            let outs: Vec<(usize, CellOutcome)> = jobs_list
                .iter()
                .zip(&outcomes)
                .filter(|((cc, _), _)| *cc == c)
                .map(|((_, r), o)| (*r, o.clone()))
                .collect();
            SweepCell::from_outcomes(vec![ratio], &outs)
        })
        .collect();
    Ok(SweepReport {
        axes: vec!["ratio".into()],
        values: vec![kept.iter().map(|&(r, _)| r).collect()],
        cells,
        skipped,
    })
}

/// Trains and scores the attention-stacked augmenter for every
/// `(h_e, h_f)` pair.
pub fn hp_grid(
    he_values: &[usize],
    hf_values: &[usize],
    prep: &Prepared,
    cfg: &ExperimentConfig,
    replicates: usize,
    seed: u64,
    jobs: usize,
) -> Result<SweepReport> {
    if he_values.is_empty() || hf_values.is_empty() || he_values.contains(&0) || hf_values.contains(&0) {
        return Err(Error::config("grid axes must be non-empty lists of positive integers"));
    }
    if replicates == 0 {
        return Err(Error::config("replicates must be at least 1"));
    }
    let pairs: Vec<(usize, usize)> = he_values.iter().flat_map(|&he| hf_values.iter().map(move |&hf| (he, hf))).collect();
    let jobs_list: Vec<(usize, usize)> = (0..pairs.len()).flat_map(|c| (0..replicates).map(move |r| (c, r))).collect();
    let outcomes = run_cells(jobs, &jobs_list, |&(c, r)| {
        let (he, hf) = pairs[c];
        let cell_cfg = ExperimentConfig {
            train: TrainConfig {
                heads: he,
                gen_layers: hf,
                ..cfg.train.clone()
            },
            ..cfg.clone()
        };
        evaluate_prepared(prep, Augmenter::AsGan, &cell_cfg, replicate_seed(seed, r))
    })?;
    let cells = pairs
        .iter()
        .enumerate()
        .map(|(c, &(he, hf))| {
            let outs: Vec<(usize, CellOutcome)> = jobs_list
                .iter()
                .zip(&outcomes)
                .filter(|((cc, _), _)| *cc == c)
                .map(|((_, r), o)| (*r, o.clone()))
                .collect();
            SweepCell::from_outcomes(vec![he as f64, hf as f64], &outs)
        })
        .collect();
    Ok(SweepReport {
        axes: vec!["h_e".into(), "h_f".into()],
        values: vec![
            he_values.iter().map(|&x| x as f64).collect(),
            hf_values.iter().map(|&x| x as f64).collect(),
        ],
        cells,
        skipped: Vec::new(),
    })
}

/// One metrics row per (augmenter, test trial, replicate), in that nesting
/// order with replicates outermost within an augmenter.
pub fn bench(
    augmenters: &[Augmenter],
    prep: &Prepared,
    cfg: &ExperimentConfig,
    replicates: usize,
    seed: u64,
    jobs: usize,
) -> Result<Vec<MetricsRow>> {
    if replicates == 0 {
        return Err(Error::config("replicates must be at least 1"));
    }
    let ratio = prep.train.count(Label::Abnormal) as f64 / prep.train.count(Label::Normal).max(1) as f64;
    let cells: Vec<(Augmenter, usize)> = augmenters.iter().flat_map(|&a| (0..replicates).map(move |r| (a, r))).collect();
    let outcomes = run_cells(jobs, &cells, |&(a, r)| evaluate_prepared(prep, a, cfg, replicate_seed(seed, r)))?;
    let mut rows = Vec::new();
    for (&(a, r), out) in cells.iter().zip(&outcomes) {
        for (t, m) in out.metrics.iter().enumerate() {
            rows.push(MetricsRow {
                augmenter: a.name().to_string(),
                trial: t + 1,
                replicate: r,
                ratio,
                metrics: *m,
                seed: out.seed,
            });
        }
    }
    Ok(rows)
}

/// Mean and sample sd of per-replicate mean F-scores for `augmenter`.
pub fn summarize(rows: &[MetricsRow], augmenter: &str) -> (f64, f64) {
    let mut reps: Vec<usize> = rows.iter().filter(|r| r.augmenter == augmenter).map(|r| r.replicate).collect();
    reps.sort_unstable();
    reps.dedup();
    let per_rep: Vec<f64> = reps
        .iter()
        .map(|&rep| {
            let fs: Vec<f64> = rows
                .iter()
                .filter(|r| r.augmenter == augmenter && r.replicate == rep)
                .map(|r| r.metrics.f_score)
                .collect();
            fs.iter().sum::<f64>() / fs.len() as f64
        })
        .collect();
    if per_rep.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    (per_rep.iter().sum::<f64>() / per_rep.len() as f64, sample_sd(&per_rep))
}
