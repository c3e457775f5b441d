//! Attention-stacked generator, Wasserstein critic and their adversarial
//! training loop.
//!
//! The generator maps noise `Z` and a real abnormal window `X` to
//! `G(concat(Z, flat(M(X))))`, where `M` is the multi-head attention score
//! of `X`. The same harness trains attention-free generators for the plain
//! GAN and WGAN baselines.

mod checkpoint;
mod model;

use std::time::{Duration, Instant};

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use model::{Affine, Critic, CriticHead, CriticVars, Generator, GeneratorShape, GeneratorVars};

use crate::data::{Label, WindowSet};
use crate::error::{Error, Result};
use crate::ndcore::{Optimizer, Parameterized, Rng, Tape, Tensor, UpdateRule, Var};

/// Which adversarial model a training run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// Attention-stacked generator with a clipped Wasserstein critic.
    AsGan,
    /// Noise-only generator with a clipped Wasserstein critic.
    Wgan,
    /// Noise-only generator with a sigmoid discriminator and log loss.
    Gan,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::AsGan => "asgan",
            ModelKind::Wgan => "wgan",
            ModelKind::Gan => "gan",
        }
    }

    pub(crate) fn code(self) -> i64 {
        match self {
            ModelKind::AsGan => 0,
            ModelKind::Wgan => 1,
            ModelKind::Gan => 2,
        }
    }

    pub(crate) fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(ModelKind::AsGan),
            1 => Some(ModelKind::Wgan),
            2 => Some(ModelKind::Gan),
            _ => None,
        }
    }

    fn uses_attention(self) -> bool {
        self == ModelKind::AsGan
    }

    fn critic_head(self) -> CriticHead {
        match self {
            ModelKind::Gan => CriticHead::Probability,
            _ => CriticHead::Score,
        }
    }
}

/// Hyperparameters for one adversarial training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Attention heads `h_e`.
    pub heads: usize,
    /// Generator affine layers `h_f`.
    pub gen_layers: usize,
    /// Projection width per attention head.
    pub head_width: usize,
    /// Defaults to `n * v`.
    pub noise_dim: Option<usize>,
    /// Width of interior generator layers; defaults to `n * v`.
    pub gen_hidden: Option<usize>,
    /// Defaults to `n * v`.
    pub critic_hidden: Option<usize>,
    pub iterations: usize,
    /// Defaults to `min(32, dataset size)`.
    pub batch_size: Option<usize>,
    pub critic_steps: usize,
    pub update: UpdateRule,
    pub step_size: f64,
    /// Clip bound for Wasserstein critics.
    pub clip_c: f64,
    /// Moving-average window of the plateau annotation; 0 disables it.
    pub plateau_window: usize,
    pub plateau_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            heads: 3,
            gen_layers: 1,
            head_width: 8,
            noise_dim: None,
            gen_hidden: None,
            critic_hidden: None,
            iterations: 7000,
            batch_size: None,
            critic_steps: 1,
            update: UpdateRule::RmsProp { decay: 0.9 },
            step_size: 5e-5,
            clip_c: 0.01,
            plateau_window: 200,
            plateau_tol: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("heads", self.heads),
            ("gen_layers", self.gen_layers),
            ("head_width", self.head_width),
            ("iterations", self.iterations),
            ("critic_steps", self.critic_steps),
            ("noise_dim", self.noise_dim.unwrap_or(1)),
            ("gen_hidden", self.gen_hidden.unwrap_or(1)),
            ("critic_hidden", self.critic_hidden.unwrap_or(1)),
            ("batch_size", self.batch_size.unwrap_or(1)),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::config(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !(self.clip_c > 0.0) || !self.clip_c.is_finite() {
            return Err(Error::config(format!("clip_c must be positive, got {}", self.clip_c)));
        }
        if !(self.plateau_tol > 0.0) {
            return Err(Error::config(format!("plateau_tol must be positive, got {}", self.plateau_tol)));
        }
        match self.update {
            UpdateRule::RmsProp { decay } if !(decay > 0.0 && decay < 1.0) => {
                Err(Error::config(format!("decay must lie in (0, 1), got {decay}")))
            }
            UpdateRule::Adam { beta1, beta2 } if !(0.0..1.0).contains(&beta1) || !(beta2 > 0.0 && beta2 < 1.0) => {
                Err(Error::config(format!("Adam betas must lie in [0, 1), got {beta1}, {beta2}")))
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn generator_shape(&self, kind: ModelKind, n: usize, v: usize) -> GeneratorShape {
        let width = n * v;
        GeneratorShape {
            n,
            v,
            noise_dim: self.noise_dim.unwrap_or(width),
            layers: self.gen_layers,
            hidden: self.gen_hidden.unwrap_or(width),
            attention: kind.uses_attention().then_some((self.heads, self.head_width)),
        }
    }
}

/// Loss histories and bookkeeping of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub kind: ModelKind,
    /// Generator loss per iteration.
    pub gen_loss: Vec<f64>,
    /// Critic loss per iteration, from the pass shared with the generator
    /// step.
    pub critic_loss: Vec<f64>,
    /// Mean critic output on the real batch per iteration.
    pub real_score: Vec<f64>,
    pub duration: Duration,
    /// First iteration at which both moving averages changed by less than
    /// the plateau tolerance. Annotation only.
    pub plateau_at: Option<usize>,
    pub checkpoint: Option<std::path::PathBuf>,
}

/// A trained adversarial pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub kind: ModelKind,
    pub generator: Generator,
    pub critic: Critic,
    pub report: TrainReport,
}

/// `(L_G, L_D) = (-mean(fake), mean(fake) - mean(real))`.
pub fn losses(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, f64)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::contract("losses need non-empty critic outputs"));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let fake = mean(d_fake);
    Ok((-fake, fake - mean(d_real)))
}

/// Trains the attention-stacked generator against a clipped Wasserstein
/// critic on scaled abnormal windows.
pub fn train(abnormal: &WindowSet, cfg: &TrainConfig) -> Result<Trained> {
    train_kind(ModelKind::AsGan, abnormal, cfg)
}

/// Shared harness for every [`ModelKind`].
pub fn train_kind(kind: ModelKind, windows: &WindowSet, cfg: &TrainConfig) -> Result<Trained> {
    train_observed(kind, windows, cfg, |_, _| {})
}

/// Per-iteration values passed to a training observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub gen_loss: f64,
    pub critic_loss: f64,
    pub real_score: f64,
    pub fake_score: f64,
}

/// [`train_kind`] with a callback after every iteration.
pub fn train_observed(
    kind: ModelKind,
    windows: &WindowSet,
    cfg: &TrainConfig,
    mut observe: impl FnMut(usize, StepStats),
) -> Result<Trained> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::contract("training needs at least one window"));
    }
    if !windows.is_unit_scaled() {
        return Err(Error::Precondition(
            "training windows must be scaled into [0, 1] to match the generator's sigmoid range".into(),
        ));
    }
    let started = Instant::now();
    let (n, v) = (windows.n(), windows.v());
    let width = n * v;
    let batch = cfg.batch_size.unwrap_or(32.min(windows.len()));
    let root = Rng::new(cfg.seed);
    let mut init = root.split("init");
    let mut generator = Generator::init(cfg.generator_shape(kind, n, v), &mut init)?;
    let mut critic = Critic::init(width, cfg.critic_hidden.unwrap_or(width), kind.critic_head(), &mut init)?;
    let clip = kind != ModelKind::Gan;
    if clip {
        critic.clip(cfg.clip_c);
    }
    let mut batches = root.split("batch");
    let mut noise = root.split("noise");
    let mut gen_opt = Optimizer::new(cfg.update, cfg.step_size);
    let mut critic_opt = Optimizer::new(cfg.update, cfg.step_size);

    let mut report = TrainReport {
        kind,
        gen_loss: Vec::with_capacity(cfg.iterations),
        critic_loss: Vec::with_capacity(cfg.iterations),
        real_score: Vec::with_capacity(cfg.iterations),
        duration: Duration::ZERO,
        plateau_at: None,
        checkpoint: None,
    };
    let mut tape = Tape::new();
    for it in 0..cfg.iterations {
        for _ in 1..cfg.critic_steps {
            tape.clear();
            let pass = Pass::record(&mut tape, kind, &generator, &critic, windows, batch, &mut batches, &mut noise)?;
            let grads = tape.backward_wrt(pass.critic_loss, &pass.critic_vars)?;
            apply(&mut critic_opt, &mut critic, &pass.critic_vars, &grads);
            if clip {
                critic.clip(cfg.clip_c);
            }
        }
        tape.clear();
        let pass = Pass::record(&mut tape, kind, &generator, &critic, windows, batch, &mut batches, &mut noise)?;
        let critic_grads = tape.backward_wrt(pass.critic_loss, &pass.critic_vars)?;
        let gen_grads = tape.backward_wrt(pass.gen_loss, &pass.gen_vars)?;
        apply(&mut critic_opt, &mut critic, &pass.critic_vars, &critic_grads);
        if clip {
            critic.clip(cfg.clip_c);
        }
        apply(&mut gen_opt, &mut generator, &pass.gen_vars, &gen_grads);

        let stats = StepStats {
            gen_loss: tape.value(pass.gen_loss).item(),
            critic_loss: tape.value(pass.critic_loss).item(),
            real_score: tape.value(pass.real_mean).item(),
            fake_score: tape.value(pass.fake_mean).item(),
        };
        if !(stats.gen_loss.is_finite() && stats.critic_loss.is_finite()) {
            return Err(Error::contract(format!("non-finite loss at iteration {it}")));
        }
        report.gen_loss.push(stats.gen_loss);
        report.critic_loss.push(stats.critic_loss);
        report.real_score.push(stats.real_score);
        observe(it, stats);
    }
    report.plateau_at = plateau(&report.gen_loss, &report.critic_loss, cfg.plateau_window, cfg.plateau_tol);
    report.duration = started.elapsed();
    log::info!(
        "{} training: {} iterations in {:.1?}, final L_G {:.5}, L_D {:.5}",
        kind.name(),
        cfg.iterations,
        report.duration,
        report.gen_loss.last().copied().unwrap_or(f64::NAN),
        report.critic_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(Trained {
        kind,
        generator,
        critic,
        report,
    })
}

/// One recorded forward pass over a sampled batch.
struct Pass {
    gen_vars: Vec<Var>,
    critic_vars: Vec<Var>,
    gen_loss: Var,
    critic_loss: Var,
    real_mean: Var,
    fake_mean: Var,
}

impl Pass {
    #[allow(clippy::too_many_arguments)]
    fn record(
        tape: &mut Tape,
        kind: ModelKind,
        generator: &Generator,
        critic: &Critic,
        windows: &WindowSet,
        batch: usize,
        batches: &mut Rng,
        noise: &mut Rng,
    ) -> Result<Pass> {
        let indices = if batch <= windows.len() {
            batches.sample_without_replacement(windows.len(), batch)
        } else {
            (0..batch).map(|_| batches.below(windows.len())).collect()
        };
        let real = windows.subset(&indices).as_matrix();
        let z = noise.normal_tensor(batch, generator.noise_dim());

        let gvars = generator.bind(tape);
        let cvars = critic.bind(tape);
        let xs: Vec<Var> = if generator.attention().is_some() {
            indices.iter().map(|&i| tape.constant(windows.window(i))).collect()
        } else {
            Vec::new()
        };
        let zv = tape.constant(z);
        let fake = generator.record(tape, &gvars, zv, &xs)?;
        let real = tape.constant(real);
        let d_real = critic.record(tape, &cvars, real)?;
        let d_fake = critic.record(tape, &cvars, fake)?;
        let real_mean = tape.mean(d_real);
        let fake_mean = tape.mean(d_fake);
        let (gen_loss, critic_loss) = match kind {
            ModelKind::AsGan | ModelKind::Wgan => {
                let g = tape.scale(fake_mean, -1.0);
                let d = tape.sub(fake_mean, real_mean)?;
                (g, d)
            }
            ModelKind::Gan => {
                let ones = vec![1.0; batch];
                let zeros = vec![0.0; batch];
                let real_term = tape.bce_with_logits(d_real, &ones)?;
                let fake_term = tape.bce_with_logits(d_fake, &zeros)?;
                let d = tape.add(real_term, fake_term)?;
                let g = tape.bce_with_logits(d_fake, &ones)?;
                (g, d)
            }
        };
        Ok(Pass {
            gen_vars: gvars.vars(),
            critic_vars: cvars.vars(),
            gen_loss,
            critic_loss,
            real_mean,
            fake_mean,
        })
    }
}

fn apply(opt: &mut Optimizer, model: &mut impl Parameterized, vars: &[Var], grads: &crate::ndcore::Gradients) {
    let mut params = model.parameters_mut();
    let g: Vec<Tensor> = vars
        .iter()
        .zip(params.iter())
        .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
        .collect();
    opt.step(&mut params, &g);
}

/// First index `t` (end of the later window) where the moving averages over
/// the two most recent windows of both series differ by less than `tol`
/// relative to the earlier one.
pub fn plateau(a: &[f64], b: &[f64], window: usize, tol: f64) -> Option<usize> {
    if window == 0 || a.len() < 2 * window {
        return None;
    }
    let settled = |xs: &[f64], end: usize| {
        let prev = xs[end - 2 * window..end - window].iter().sum::<f64>() / window as f64;
        let last = xs[end - window..end].iter().sum::<f64>() / window as f64;
        (last - prev).abs() <= tol * prev.abs().max(f64::EPSILON)
    };
    (2 * window..=a.len()).find(|&end| settled(a, end) && settled(b, end)).map(|end| end - 1)
}

/// Draws `count` windows from `generator`, each conditioned on a real window
/// chosen uniformly with replacement from `conditioning`. Outputs are in the
/// scaled space of `conditioning` and labeled abnormal.
pub fn generate(generator: &Generator, conditioning: &WindowSet, count: usize, rng: &mut Rng) -> Result<WindowSet> {
    if count == 0 {
        return Err(Error::config("generate count must be at least 1"));
    }
    if conditioning.is_empty() {
        return Err(Error::contract("generation needs a non-empty conditioning set"));
    }
    if (conditioning.n(), conditioning.v()) != (generator.n(), generator.v()) {
        return Err(Error::shape(
            "generate",
            (generator.n(), generator.v()),
            (conditioning.n(), conditioning.v()),
        ));
    }
    let mut out = WindowSet::empty(generator.n(), generator.v());
    out.set_scaler(conditioning.scaler().cloned());
    const CHUNK: usize = 64;
    let mut done = 0;
    while done < count {
        let take = CHUNK.min(count - done);
        let mut xs = Vec::with_capacity(take);
        let mut z = Tensor::zeros(take, generator.noise_dim());
        for r in 0..take {
            let pick = rng.below(conditioning.len());
            xs.push(conditioning.window(pick));
            for c in 0..generator.noise_dim() {
                z.set(r, c, rng.normal());
            }
        }
        let batch = generator.forward_batch(&z, &xs)?;
        for r in 0..take {
            out.push(batch.row(r), Label::Abnormal, usize::MAX)?;
        }
        done += take;
    }
    Ok(out)
}
