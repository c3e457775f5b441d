//! Comparison augmenters: SMOTE interpolation and attention-free GAN/WGAN
//! generators trained with the same harness as the attention-stacked model.

use crate::asgan::{train_kind, ModelKind, TrainConfig, Trained};
use crate::data::{Label, WindowSet};
use crate::error::{Error, Result};
use crate::ndcore::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmoteConfig {
    /// Neighbors considered per base window.
    pub k: usize,
    /// Synthetic windows to emit.
    pub count: usize,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig { k: 5, count: 0, seed: 0 }
    }
}

/// One synthetic window and where it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoteDraw {
    pub base: usize,
    pub neighbor: usize,
    /// Interpolation weight in `[0, 1)`.
    pub weight: f64,
}

/// SMOTE oversampling: `x + u (x_nn - x)` for a uniformly chosen window `x`,
/// one of its `k` Euclidean nearest neighbors `x_nn` chosen uniformly, and
/// `u ~ U(0, 1)`.
pub fn smote(minority: &WindowSet, cfg: &SmoteConfig) -> Result<WindowSet> {
    smote_traced(minority, cfg).map(|(ws, _)| ws)
}

/// [`smote`] that also returns the generating pair of every sample.
pub fn smote_traced(minority: &WindowSet, cfg: &SmoteConfig) -> Result<(WindowSet, Vec<SmoteDraw>)> {
    if cfg.k == 0 {
        return Err(Error::config("SMOTE needs k >= 1"));
    }
    if cfg.k >= minority.len() {
        return Err(Error::config(format!(
            "SMOTE k = {} needs more than k minority windows, got {}",
            cfg.k,
            minority.len()
        )));
    }
    let neighbors = nearest_neighbors(minority, cfg.k);
    let mut rng = Rng::new(cfg.seed);
    let mut out = WindowSet::empty(minority.n(), minority.v());
    out.set_scaler(minority.scaler().cloned());
    let mut draws = Vec::with_capacity(cfg.count);
    let mut sample = vec![0.0; minority.width()];
    for _ in 0..cfg.count {
        let base = rng.below(minority.len());
        let neighbor = neighbors[base][rng.below(cfg.k)];
        let weight = rng.uniform();
        let (x, y) = (minority.row(base), minority.row(neighbor));
        for ((s, &a), &b) in sample.iter_mut().zip(x).zip(y) {
            *s = a + weight * (b - a);
        }
        out.push(&sample, Label::Abnormal, usize::MAX)?;
        draws.push(SmoteDraw { base, neighbor, weight });
    }
    Ok((out, draws))
}

/// Indices of the `k` nearest other windows of each window; ties resolve
/// to the lower index.
fn nearest_neighbors(ws: &WindowSet, k: usize) -> Vec<Vec<usize>> {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    (0..ws.len())
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..ws.len())
                .filter(|&j| j != i)
                .map(|j| (dist(ws.row(i), ws.row(j)), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Noise-only generator against a sigmoid discriminator with log loss.
pub fn plain_gan_train(windows: &WindowSet, cfg: &TrainConfig) -> Result<Trained> {
    train_kind(ModelKind::Gan, windows, cfg)
}

/// Noise-only generator against a clipped Wasserstein critic.
pub fn plain_wgan_train(windows: &WindowSet, cfg: &TrainConfig) -> Result<Trained> {
    train_kind(ModelKind::Wgan, windows, cfg)
}
