//! Downstream abnormal-state classifier and the augment-then-classify
//! pipeline: window and scale a training trial, top up its abnormal windows
//! with an augmenter until the classes balance, train the classifier, score
//! held-out trials.

mod classifier;
mod metrics;

use std::fmt;
use std::str::FromStr;

pub use classifier::{train_classifier, ClassifierConfig, Conv, ConvClassifier};
pub use metrics::{f_score, write_metrics, EvalMetrics, MetricsRow, METRICS_HEADER};

use crate::asgan::{generate, train_kind, ModelKind, TrainConfig};
use crate::baselines::{smote, SmoteConfig};
use crate::data::{fit_scaler, window, Label, Scaler, SensorSeries, WindowSet};
use crate::error::{Error, Result};
use crate::ndcore::Rng;

/// Source of synthetic abnormal windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Augmenter {
    /// No synthetic windows.
    None,
    /// Copies of real abnormal windows drawn uniformly.
    Replicate,
    Smote,
    Gan,
    Wgan,
    AsGan,
}

impl Augmenter {
    pub const ALL: [Augmenter; 6] = [
        Augmenter::None,
        Augmenter::Replicate,
        Augmenter::Smote,
        Augmenter::Gan,
        Augmenter::Wgan,
        Augmenter::AsGan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Augmenter::None => "none",
            Augmenter::Replicate => "replicate",
            Augmenter::Smote => "smote",
            Augmenter::Gan => "gan",
            Augmenter::Wgan => "wgan",
            Augmenter::AsGan => "asgan",
        }
    }

    fn model(self) -> Option<ModelKind> {
        match self {
            Augmenter::Gan => Some(ModelKind::Gan),
            Augmenter::Wgan => Some(ModelKind::Wgan),
            Augmenter::AsGan => Some(ModelKind::AsGan),
            _ => None,
        }
    }
}

impl fmt::Display for Augmenter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Augmenter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Augmenter::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::config(format!("unknown augmenter {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub overlap: usize,
    /// Adversarial training settings; the seed is replaced per cell.
    pub train: TrainConfig,
    /// Classifier settings; the seed is replaced per cell.
    pub classifier: ClassifierConfig,
    pub smote_k: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 30,
            overlap: 28,
            train: TrainConfig::default(),
            classifier: ClassifierConfig::default(),
            smote_k: 5,
        }
    }
}

/// Scaled windows of a training trial and its test trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub train: WindowSet,
    pub tests: Vec<WindowSet>,
    pub scaler: Scaler,
    /// Test entries clamped into `[0, 1]`, per test trial.
    pub clamped: Vec<usize>,
}

/// Windows every trial and scales all of them with bounds fitted on the
/// training trial.
pub fn prepare(train_trial: &SensorSeries, test_trials: &[SensorSeries], n: usize, overlap: usize) -> Result<Prepared> {
    let raw = window(train_trial, n, overlap)?;
    if raw.count(Label::Abnormal) == 0 || raw.count(Label::Normal) == 0 {
        return Err(Error::Precondition(format!(
            "training trial needs both labels, got {} abnormal and {} normal windows",
            raw.count(Label::Abnormal),
            raw.count(Label::Normal)
        )));
    }
    let scaler = fit_scaler(&raw)?;
    let (train, _) = scaler.apply(&raw)?;
    let mut tests = Vec::with_capacity(test_trials.len());
    let mut clamped = Vec::with_capacity(test_trials.len());
    for t in test_trials {
        let (ws, c) = scaler.apply(&window(t, n, overlap)?)?;
        if c > 0 {
            log::warn!("{c} test entries fell outside the training range and were clamped");
        }
        tests.push(ws);
        clamped.push(c);
    }
    Ok(Prepared {
        train,
        tests,
        scaler,
        clamped,
    })
}

/// Draws `count` synthetic abnormal windows from `abnormal` with the given
/// augmenter. `Augmenter::None` always returns an empty set.
pub fn augment(abnormal: &WindowSet, count: usize, augmenter: Augmenter, cfg: &ExperimentConfig, seed: u64) -> Result<WindowSet> {
    let mut empty = WindowSet::empty(abnormal.n(), abnormal.v());
    empty.set_scaler(abnormal.scaler().cloned());
    if count == 0 || augmenter == Augmenter::None {
        return Ok(empty);
    }
    if abnormal.is_empty() {
        return Err(Error::contract("augmentation needs at least one abnormal window"));
    }
    let rng = Rng::new(seed);
    match augmenter {
        Augmenter::None => Ok(empty),
        Augmenter::Replicate => {
            let mut r = rng.split("replicate");
            let idx: Vec<usize> = (0..count).map(|_| r.below(abnormal.len())).collect();
            let mut out = abnormal.subset(&idx);
            out.relabel(Label::Abnormal);
            Ok(out)
        }
        Augmenter::Smote => smote(
            abnormal,
            &SmoteConfig {
                k: cfg.smote_k.min(abnormal.len().saturating_sub(1)).max(1),
                count,
                seed: rng.split("smote").seed(),
            },
        ),
        Augmenter::Gan | Augmenter::Wgan | Augmenter::AsGan => {
            let kind = augmenter.model().expect("adversarial augmenter");
            let tc = TrainConfig {
                seed: rng.split("train").seed(),
                ..cfg.train.clone()
            };
            let trained = train_kind(kind, abnormal, &tc)?;
            generate(&trained.generator, abnormal, count, &mut rng.split("generate"))
        }
    }
}

/// Results of one (augmenter, replicate) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub augmenter: Augmenter,
    pub seed: u64,
    pub real_abnormal: usize,
    pub normal: usize,
    pub generated: usize,
    /// One entry per test trial, in order.
    pub metrics: Vec<EvalMetrics>,
}

impl CellOutcome {
    /// F-score averaged over test trials.
    pub fn mean_f_score(&self) -> f64 {
        self.metrics.iter().map(|m| m.f_score).sum::<f64>() / self.metrics.len().max(1) as f64
    }

    /// Abnormal-to-normal count of the classifier's training set.
    pub fn balance(&self) -> f64 {
        (self.real_abnormal + self.generated) as f64 / self.normal as f64
    }
}

/// Balances `prep.train` with `augmenter`, trains the classifier and scores
/// every test set. Cell randomness comes from `seed` alone, so different
/// augmenters with the same seed share classifier initialization and batch
/// order.
pub fn evaluate_prepared(prep: &Prepared, augmenter: Augmenter, cfg: &ExperimentConfig, seed: u64) -> Result<CellOutcome> {
    let abnormal = prep.train.with_label(Label::Abnormal);
    let normal = prep.train.with_label(Label::Normal);
    if abnormal.is_empty() || normal.is_empty() {
        return Err(Error::Precondition("training windows need both labels".into()));
    }
    let rng = Rng::new(seed);
    let deficit = normal.len().saturating_sub(abnormal.len());
    let count = if augmenter == Augmenter::None { 0 } else { deficit };
    let synthetic = augment(&abnormal, count, augmenter, cfg, rng.split("augment").seed())?;

    let mut train = prep.train.clone();
    train.extend(&synthetic)?;
    let clf = train_classifier(
        &train,
        &ClassifierConfig {
            seed: rng.split("classifier").seed(),
            ..cfg.classifier.clone()
        },
    )?;
    let metrics = prep
        .tests
        .iter()
        .map(|ws| {
            let truth: Vec<bool> = ws.labels().iter().map(|l| l.is_positive()).collect();
            f_score(&clf.predict(ws)?, &truth)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellOutcome {
        augmenter,
        seed,
        real_abnormal: abnormal.len(),
        normal: normal.len(),
        generated: synthetic.len(),
        metrics,
    })
}

/// [`prepare`] followed by [`evaluate_prepared`].
pub fn augment_and_evaluate(
    train_trial: &SensorSeries,
    test_trials: &[SensorSeries],
    augmenter: Augmenter,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<CellOutcome> {
    let prep = prepare(train_trial, test_trials, cfg.n, cfg.overlap)?;
    evaluate_prepared(&prep, augmenter, cfg, seed)
}
