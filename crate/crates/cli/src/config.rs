//! Flat `key = value` run configuration.
//!
//! Every tunable has a key. Unknown keys are rejected, and the resolved
//! configuration renders back to a file that reproduces the run.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use asgan_core::asgan::{ModelKind, TrainConfig};
use asgan_core::data::{Label, RegimeParams, SegmentSpec, SynthProfile};
use asgan_core::eval::{DEFAULT_GRID, DEFAULT_RATIOS};
use asgan_core::monitor::{Augmenter, ClassifierConfig, ExperimentConfig};
use asgan_core::ndcore::UpdateRule;
use asgan_core::Error;

type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub replicates: usize,
    pub experiment: ExperimentConfig,
    pub kind: ModelKind,
    pub synth: SynthProfile,
    pub test_trials: usize,
    /// Training trial CSV; synthetic data when absent.
    pub train_path: Option<PathBuf>,
    pub test_paths: Vec<PathBuf>,
    pub augmenter: Augmenter,
    pub augmenters: Vec<Augmenter>,
    pub ratios: Vec<f64>,
    pub he_values: Vec<usize>,
    pub hf_values: Vec<usize>,
    pub checkpoint: Option<PathBuf>,
    pub count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: 1,
            replicates: 3,
            experiment: ExperimentConfig::default(),
            kind: ModelKind::AsGan,
            synth: SynthProfile::default_with_seed(0),
            test_trials: 4,
            train_path: None,
            test_paths: Vec::new(),
            augmenter: Augmenter::AsGan,
            augmenters: Augmenter::ALL.to_vec(),
            ratios: DEFAULT_RATIOS.to_vec(),
            he_values: DEFAULT_GRID.to_vec(),
            hf_values: DEFAULT_GRID.to_vec(),
            checkpoint: None,
            count: 100,
        }
    }
}

const REGIME_KEYS: [&str; 8] = [
    "freq1",
    "amp1",
    "freq2",
    "amp2",
    "burst_amp",
    "burst_freq",
    "burst_period",
    "burst_len",
];

fn bad(key: &str, value: &str, why: impl Display) -> Error {
    Error::Config(format!("{key} = {value:?}: {why}"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.trim().parse().map_err(|e| bad(key, value, e))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| num(key, v)).collect()
}

fn pair(key: &str, value: &str) -> Result<(usize, usize)> {
    match list::<usize>(key, value)?.as_slice() {
        &[a, b] => Ok((a, b)),
        _ => Err(bad(key, value, "expected two comma-separated integers")),
    }
}

/// `auto` or a positive integer.
fn auto(key: &str, value: &str) -> Result<Option<usize>> {
    if value.trim() == "auto" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn show_auto(v: Option<usize>) -> String {
    v.map_or("auto".into(), |x| x.to_string())
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn optional_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or(String::new(), |p| p.display().to_string())
}

/// `sgd`, `rmsprop:DECAY` or `adam:BETA1:BETA2`.
fn update_rule(key: &str, value: &str) -> Result<UpdateRule> {
    let parts: Vec<&str> = value.trim().split(':').collect();
    match parts.as_slice() {
        ["sgd"] => Ok(UpdateRule::Sgd),
        ["rmsprop", d] => Ok(UpdateRule::RmsProp { decay: num(key, d)? }),
        ["adam", b1, b2] => Ok(UpdateRule::Adam {
            beta1: num(key, b1)?,
            beta2: num(key, b2)?,
        }),
        _ => Err(bad(key, value, "expected sgd, rmsprop:DECAY or adam:BETA1:BETA2")),
    }
}

fn show_rule(rule: UpdateRule) -> String {
    match rule {
        UpdateRule::Sgd => "sgd".into(),
        UpdateRule::RmsProp { decay } => format!("rmsprop:{decay}"),
        UpdateRule::Adam { beta1, beta2 } => format!("adam:{beta1}:{beta2}"),
    }
}

fn model_kind(key: &str, value: &str) -> Result<ModelKind> {
    [ModelKind::AsGan, ModelKind::Wgan, ModelKind::Gan]
        .into_iter()
        .find(|k| k.name() == value.trim())
        .ok_or_else(|| bad(key, value, "expected asgan, wgan or gan"))
}

/// `start:end:label` triples separated by commas.
fn layout(key: &str, value: &str) -> Result<Vec<SegmentSpec>> {
    value
        .split(',')
        .map(|seg| {
            let parts: Vec<&str> = seg.trim().split(':').collect();
            let &[start, end, label] = parts.as_slice() else {
                return Err(bad(key, value, "segments are start:end:label"));
            };
            Ok(SegmentSpec {
                start_frac: num(key, start)?,
                end_frac: num(key, end)?,
                label: label.parse::<Label>().map_err(|e| bad(key, value, e))?,
            })
        })
        .collect()
}

pub fn show_layout(specs: &[SegmentSpec]) -> String {
    specs
        .iter()
        .map(|s| format!("{}:{}:{}", s.start_frac, s.end_frac, s.label))
        .collect::<Vec<_>>()
        .join(",")
}

fn set_regime(r: &mut RegimeParams, field: &str, key: &str, value: &str) -> Result<bool> {
    match field {
        "freq1" => r.freq1 = num(key, value)?,
        "amp1" => r.amp1 = num(key, value)?,
        "freq2" => r.freq2 = num(key, value)?,
        "amp2" => r.amp2 = num(key, value)?,
        "burst_amp" => r.burst_amp = num(key, value)?,
        "burst_freq" => r.burst_freq = num(key, value)?,
        "burst_period" => r.burst_period = num(key, value)?,
        "burst_len" => r.burst_len = num(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn show_regime(r: &RegimeParams, field: &str) -> String {
    match field {
        "freq1" => r.freq1.to_string(),
        "amp1" => r.amp1.to_string(),
        "freq2" => r.freq2.to_string(),
        "amp2" => r.amp2.to_string(),
        "burst_amp" => r.burst_amp.to_string(),
        "burst_freq" => r.burst_freq.to_string(),
        "burst_period" => r.burst_period.to_string(),
        "burst_len" => r.burst_len.to_string(),
        _ => unreachable!("regime field list is fixed"),
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t: &mut TrainConfig = &mut self.experiment.train;
        let c: &mut ClassifierConfig = &mut self.experiment.classifier;
        match key {
            "seed" => self.seed = num(key, value)?,
            "jobs" => self.jobs = num(key, value)?,
            "replicates" => self.replicates = num(key, value)?,
            "window.n" => self.experiment.n = num(key, value)?,
            "window.overlap" => self.experiment.overlap = num(key, value)?,
            "train.kind" => self.kind = model_kind(key, value)?,
            "train.heads" => t.heads = num(key, value)?,
            "train.layers" => t.gen_layers = num(key, value)?,
            "train.head_width" => t.head_width = num(key, value)?,
            "train.noise_dim" => t.noise_dim = auto(key, value)?,
            "train.gen_hidden" => t.gen_hidden = auto(key, value)?,
            "train.critic_hidden" => t.critic_hidden = auto(key, value)?,
            "train.iterations" => t.iterations = num(key, value)?,
            "train.batch_size" => t.batch_size = auto(key, value)?,
            "train.critic_steps" => t.critic_steps = num(key, value)?,
            "train.update" => t.update = update_rule(key, value)?,
            "train.step_size" => t.step_size = num(key, value)?,
            "train.clip_c" => t.clip_c = num(key, value)?,
            "train.plateau_window" => t.plateau_window = num(key, value)?,
            "train.plateau_tol" => t.plateau_tol = num(key, value)?,
            "classifier.kernel_width" => c.kernel_width = num(key, value)?,
            "classifier.channels" => c.channels = pair(key, value)?,
            "classifier.stride" => c.stride = num(key, value)?,
            "classifier.hidden" => c.hidden = pair(key, value)?,
            "classifier.epochs" => c.epochs = num(key, value)?,
            "classifier.batch_size" => c.batch_size = num(key, value)?,
            "classifier.update" => c.update = update_rule(key, value)?,
            "classifier.step_size" => c.step_size = num(key, value)?,
            "classifier.threshold" => c.threshold = num(key, value)?,
            "smote.k" => self.experiment.smote_k = num(key, value)?,
            "synth.length" => self.synth.length = num(key, value)?,
            "synth.sample_rate" => self.synth.sample_rate = num(key, value)?,
            "synth.noise_sd" => self.synth.noise_sd = num(key, value)?,
            "synth.layout" => self.synth.layout = layout(key, value)?,
            "synth.test_trials" => self.test_trials = num(key, value)?,
            "data.train" => self.train_path = optional_path(value),
            "data.tests" => self.test_paths = value.split(',').filter_map(optional_path).collect(),
            "augment.augmenter" => self.augmenter = value.parse()?,
            "bench.augmenters" => self.augmenters = list(key, value)?,
            "sweep.ratios" => self.ratios = list(key, value)?,
            "sweep.he" => self.he_values = list(key, value)?,
            "sweep.hf" => self.hf_values = list(key, value)?,
            "generate.checkpoint" => self.checkpoint = optional_path(value),
            "generate.count" => self.count = num(key, value)?,
            _ => {
                let regime = if let Some(f) = key.strip_prefix("synth.normal.") {
                    Some((&mut self.synth.normal, f))
                } else {
                    key.strip_prefix("synth.abnormal.").map(|f| (&mut self.synth.abnormal, f))
                };
                let known = match regime {
                    Some((r, field)) => set_regime(r, field, key, value)?,
                    None => false,
                };
                if !known {
                    return Err(Error::Config(format!("unknown configuration key {key:?}")));
                }
            }
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let t = &self.experiment.train;
        let c = &self.experiment.classifier;
        let fixed: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("jobs", self.jobs.to_string()),
            ("replicates", self.replicates.to_string()),
            ("window.n", self.experiment.n.to_string()),
            ("window.overlap", self.experiment.overlap.to_string()),
            ("train.kind", self.kind.name().into()),
            ("train.heads", t.heads.to_string()),
            ("train.layers", t.gen_layers.to_string()),
            ("train.head_width", t.head_width.to_string()),
            ("train.noise_dim", show_auto(t.noise_dim)),
            ("train.gen_hidden", show_auto(t.gen_hidden)),
            ("train.critic_hidden", show_auto(t.critic_hidden)),
            ("train.iterations", t.iterations.to_string()),
            ("train.batch_size", show_auto(t.batch_size)),
            ("train.critic_steps", t.critic_steps.to_string()),
            ("train.update", show_rule(t.update)),
            ("train.step_size", t.step_size.to_string()),
            ("train.clip_c", t.clip_c.to_string()),
            ("train.plateau_window", t.plateau_window.to_string()),
            ("train.plateau_tol", t.plateau_tol.to_string()),
            ("classifier.kernel_width", c.kernel_width.to_string()),
            ("classifier.channels", format!("{},{}", c.channels.0, c.channels.1)),
            ("classifier.stride", c.stride.to_string()),
            ("classifier.hidden", format!("{},{}", c.hidden.0, c.hidden.1)),
            ("classifier.epochs", c.epochs.to_string()),
            ("classifier.batch_size", c.batch_size.to_string()),
            ("classifier.update", show_rule(c.update)),
            ("classifier.step_size", c.step_size.to_string()),
            ("classifier.threshold", c.threshold.to_string()),
            ("smote.k", self.experiment.smote_k.to_string()),
            ("synth.length", self.synth.length.to_string()),
            ("synth.sample_rate", self.synth.sample_rate.to_string()),
            ("synth.noise_sd", self.synth.noise_sd.to_string()),
            ("synth.layout", show_layout(&self.synth.layout)),
            ("synth.test_trials", self.test_trials.to_string()),
        ];
        let mut out: Vec<(String, String)> = fixed.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        for (name, r) in [("normal", &self.synth.normal), ("abnormal", &self.synth.abnormal)] {
            for field in REGIME_KEYS {
                out.push((format!("synth.{name}.{field}"), show_regime(r, field)));
            }
        }
        out.extend([
            ("data.train".into(), show_path(&self.train_path)),
            ("data.tests".into(), join(&self.test_paths.iter().map(|p| p.display()).collect::<Vec<_>>())),
            ("augment.augmenter".into(), self.augmenter.name().into()),
            ("bench.augmenters".into(), join(&self.augmenters)),
            ("sweep.ratios".into(), join(&self.ratios)),
            ("sweep.he".into(), join(&self.he_values)),
            ("sweep.hf".into(), join(&self.hf_values)),
            ("generate.checkpoint".into(), show_path(&self.checkpoint)),
            ("generate.count".into(), self.count.to_string()),
        ]);
        out
    }

    /// The resolved configuration in the file format read by [`parse_file`].
    pub fn render(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// ignored; a key may appear once.
pub fn parse_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
        let key = key.trim();
        if out.iter().any(|(k, _)| k == key) {
            return Err(Error::Config(format!("line {}: duplicate key {key:?}", i + 1)));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_text(&text)
}

/// Splits a `KEY=VALUE` command-line override.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("train.batch_size", "16").unwrap();
        cfg.set("synth.abnormal.burst_amp", "0.125").unwrap();
        cfg.set("classifier.update", "rmsprop:0.95").unwrap();
        cfg.set("data.tests", "a.csv,b.csv").unwrap();
        let mut back = RunConfig::default();
        for (k, v) in parse_text(&cfg.render()).unwrap() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_rendered_key_is_settable() {
        let mut cfg = RunConfig::default();
        for (k, v) in RunConfig::default().entries() {
            cfg.set(&k, &v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_and_malformed_rejected() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.set("train.heds", "3"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("synth.normal.phase", "1"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("train.heads", "three"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("train.update", "adam:0.9"), Err(Error::Config(_))));
        assert!(matches!(cfg.set("augment.augmenter", "tgan"), Err(Error::Config(_))));
        assert!(parse_text("seed = 1\nseed = 2\n").is_err());
        assert!(parse_text("seed 1\n").is_err());
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let kv = parse_text("# run\n\nseed = 4\n  jobs=2  \n").unwrap();
        assert_eq!(kv, vec![("seed".into(), "4".into()), ("jobs".into(), "2".into())]);
    }
}
