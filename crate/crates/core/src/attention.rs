//! Multi-head attention producing the overall attention score `M(X)` of an
//! `n x v` window.
//!
//! Each head projects the window to queries, keys and values of width
//! `d_h`, forms `softmax(Q Kᵀ / sqrt(d)) V` with `d = n * v`, and the head
//! outputs are concatenated and projected back to `n x v` by `W_O`. There is
//! no masking and no positional signal.

use crate::error::{Error, Result};
use crate::ndcore::{glorot_uniform, Parameterized, Rng, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
}

impl AttentionHead {
    pub fn new(wq: Tensor, wk: Tensor, wv: Tensor) -> Result<Self> {
        if wq.shape() != wk.shape() || wq.shape() != wv.shape() {
            return Err(Error::shape("attention head", wq.shape(), wk.shape()));
        }
        Ok(AttentionHead { wq, wk, wv })
    }

    pub fn width(&self) -> usize {
        self.wq.cols()
    }

    pub fn channels(&self) -> usize {
        self.wq.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    /// Number of heads `h_e`.
    pub heads: usize,
    /// Projection width per head `d_h`.
    pub head_width: usize,
    /// Window length.
    pub n: usize,
    /// Channels per time step.
    pub v: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    heads: Vec<AttentionHead>,
    wo: Tensor,
    d_scale: f64,
    n: usize,
    v: usize,
}

/// Tape handles for one binding of a [`MultiHeadAttention`].
#[derive(Debug, Clone)]
pub struct AttentionVars {
    heads: Vec<[Var; 3]>,
    wo: Var,
    d_scale: f64,
}

impl MultiHeadAttention {
    /// Random initialization; every weight is drawn uniformly on
    /// `±sqrt(6 / (fan_in + fan_out))`.
    pub fn init(cfg: AttentionConfig, rng: &mut Rng) -> Result<Self> {
        if cfg.heads == 0 || cfg.head_width == 0 || cfg.n == 0 || cfg.v == 0 {
            return Err(Error::config(format!(
                "attention dimensions must be positive, got h_e={} d_h={} n={} v={}",
                cfg.heads, cfg.head_width, cfg.n, cfg.v
            )));
        }
        let heads = (0..cfg.heads)
            .map(|_| AttentionHead {
                wq: glorot_uniform(cfg.v, cfg.head_width, rng),
                wk: glorot_uniform(cfg.v, cfg.head_width, rng),
                wv: glorot_uniform(cfg.v, cfg.head_width, rng),
            })
            .collect();
        let wo = glorot_uniform(cfg.heads * cfg.head_width, cfg.v, rng);
        Ok(MultiHeadAttention {
            heads,
            wo,
            d_scale: (cfg.n * cfg.v) as f64,
            n: cfg.n,
            v: cfg.v,
        })
    }

    /// Assembles a mechanism from explicit weights. `d_scale` defaults to
    /// `n * v`.
    pub fn from_parts(heads: Vec<AttentionHead>, wo: Tensor, n: usize) -> Result<Self> {
        let first = heads
            .first()
            .ok_or_else(|| Error::config("attention needs at least one head"))?;
        let (v, width) = first.wq.shape();
        for h in &heads {
            if h.wq.shape() != (v, width) {
                return Err(Error::shape("attention head", (v, width), h.wq.shape()));
            }
        }
        if wo.shape() != (heads.len() * width, v) {
            return Err(Error::shape("attention W_O", (heads.len() * width, v), wo.shape()));
        }
        if n == 0 {
            return Err(Error::config("window length must be positive"));
        }
        Ok(MultiHeadAttention {
            heads,
            wo,
            d_scale: (n * v) as f64,
            n,
            v,
        })
    }

    /// Overrides the score scaling constant `d`.
    pub fn with_d_scale(mut self, d_scale: f64) -> Result<Self> {
        if !(d_scale > 0.0) {
            return Err(Error::config(format!("d_scale must be positive, got {d_scale}")));
        }
        self.d_scale = d_scale;
        Ok(self)
    }

    pub fn config(&self) -> AttentionConfig {
        AttentionConfig {
            heads: self.heads.len(),
            head_width: self.heads[0].width(),
            n: self.n,
            v: self.v,
        }
    }

    pub fn heads(&self) -> &[AttentionHead] {
        &self.heads
    }

    pub fn wo(&self) -> &Tensor {
        &self.wo
    }

    pub fn d_scale(&self) -> f64 {
        self.d_scale
    }

    pub fn bind(&self, tape: &mut Tape) -> AttentionVars {
        let heads = self
            .heads
            .iter()
            .map(|h| [tape.param(&h.wq), tape.param(&h.wk), tape.param(&h.wv)])
            .collect();
        AttentionVars {
            heads,
            wo: tape.param(&self.wo),
            d_scale: self.d_scale,
        }
    }

    /// Evaluates `M(X)` outside of training.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x.shape())?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let out = vars.forward(&mut tape, xv)?;
        Ok(tape.value(out).clone())
    }

    fn check_input(&self, shape: (usize, usize)) -> Result<()> {
        if shape != (self.n, self.v) {
            return Err(Error::shape("multi_head_forward", (self.n, self.v), shape));
        }
        Ok(())
    }
}

impl AttentionVars {
    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    /// Records `A_i` for head `i` on the tape.
    pub fn head(&self, tape: &mut Tape, i: usize, x: Var) -> Result<Var> {
        let [wq, wk, wv] = self.heads[i];
        head_on_tape(tape, x, wq, wk, wv, self.d_scale)
    }

    /// Records `Concat(A_1..A_h) W_O` on the tape; the result has the shape
    /// of `x`.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let outs = (0..self.heads.len())
            .map(|i| self.head(tape, i, x))
            .collect::<Result<Vec<_>>>()?;
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            tape.concat_cols(&outs)?
        };
        tape.matmul(cat, self.wo)
    }
}

fn head_on_tape(tape: &mut Tape, x: Var, wq: Var, wk: Var, wv: Var, d_scale: f64) -> Result<Var> {
    let q = tape.matmul(x, wq)?;
    let k = tape.matmul(x, wk)?;
    let v = tape.matmul(x, wv)?;
    let scores = tape.matmul_nt(q, k)?;
    let scaled = tape.scale(scores, 1.0 / d_scale.sqrt());
    let weights = tape.softmax_rows(scaled);
    tape.matmul(weights, v)
}

/// Single-head attention score `softmax((X Wq)(X Wk)ᵀ / sqrt(d)) (X Wv)`.
pub fn head_forward(head: &AttentionHead, x: &Tensor, d_scale: f64) -> Result<Tensor> {
    if !(d_scale > 0.0) {
        return Err(Error::config(format!("d_scale must be positive, got {d_scale}")));
    }
    if x.cols() != head.channels() {
        return Err(Error::shape("head_forward", x.shape(), head.wq.shape()));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wq = tape.constant(head.wq.clone());
    let wk = tape.constant(head.wk.clone());
    let wv = tape.constant(head.wv.clone());
    let out = head_on_tape(&mut tape, xv, wq, wk, wv, d_scale)?;
    Ok(tape.value(out).clone())
}

pub fn multi_head_forward(m: &MultiHeadAttention, x: &Tensor) -> Result<Tensor> {
    m.apply(x)
}

impl Parameterized for MultiHeadAttention {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.heads.iter().flat_map(|h| [&h.wq, &h.wk, &h.wv]).collect();
        out.push(&self.wo);
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self
            .heads
            .iter_mut()
            .flat_map(|h| [&mut h.wq, &mut h.wk, &mut h.wv])
            .collect();
        out.push(&mut self.wo);
        out
    }
}

impl AttentionVars {
    /// Handles in [`Parameterized::parameters`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out: Vec<Var> = self.heads.iter().flat_map(|h| h.iter().copied()).collect();
        out.push(self.wo);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::softmax_rows;

    fn selected_cfg() -> AttentionConfig {
        AttentionConfig {
            heads: 3,
            head_width: 8,
            n: 30,
            v: 1,
        }
    }

    #[test]
    fn single_row_attends_only_to_itself() {
        let mut rng = Rng::new(1);
        let head = AttentionHead {
            wq: rng.normal_tensor(3, 4),
            wk: rng.normal_tensor(3, 4),
            wv: rng.normal_tensor(3, 4),
        };
        let x = Tensor::from_rows(&[&[0.2, -0.4, 1.1]]);
        let a = head_forward(&head, &x, 3.0).unwrap();
        let expected = x.matmul(&head.wv).unwrap();
        assert!(a.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn identity_projections_hand_evaluated() {
        let eye = Tensor::identity(2);
        let head = AttentionHead::new(eye.clone(), eye.clone(), eye.clone()).unwrap();
        let a = head_forward(&head, &eye, 4.0).unwrap();
        // softmax([0.5, 0]) = [e^0.5, 1] / (e^0.5 + 1)
        let p = 0.5f64.exp() / (0.5f64.exp() + 1.0);
        let expected = Tensor::from_rows(&[&[p, 1.0 - p], &[1.0 - p, p]]);
        assert!(a.max_abs_diff(&expected) < 1e-15);
        assert!((a.get(0, 0) - 0.6225).abs() < 5e-5);
        assert!((a.get(0, 1) - 0.3775).abs() < 5e-5);
    }

    #[test]
    fn single_head_with_identity_output_matches_head() {
        let mut rng = Rng::new(5);
        let head = AttentionHead {
            wq: rng.normal_tensor(2, 2),
            wk: rng.normal_tensor(2, 2),
            wv: rng.normal_tensor(2, 2),
        };
        let m = MultiHeadAttention::from_parts(vec![head.clone()], Tensor::identity(2), 6).unwrap();
        let x = rng.normal_tensor(6, 2);
        let a = head_forward(&head, &x, 12.0).unwrap();
        let out = multi_head_forward(&m, &x).unwrap();
        assert_eq!(out.max_abs_diff(&a), 0.0);
    }

    #[test]
    fn selected_configuration_preserves_shape() {
        let mut rng = Rng::new(9);
        let m = MultiHeadAttention::init(selected_cfg(), &mut rng).unwrap();
        let x = rng.uniform_tensor(30, 1, 0.0, 1.0);
        assert_eq!(m.apply(&x).unwrap().shape(), (30, 1));
        assert_eq!(m.d_scale(), 30.0);
        assert!(m.apply(&Tensor::zeros(29, 1)).is_err());
    }

    #[test]
    fn zero_output_projection_gives_zero() {
        let mut rng = Rng::new(2);
        let m = MultiHeadAttention::init(selected_cfg(), &mut rng).unwrap();
        let m = MultiHeadAttention::from_parts(m.heads().to_vec(), Tensor::zeros(24, 1), 30).unwrap();
        let out = m.apply(&rng.normal_tensor(30, 1)).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn init_is_deterministic_and_structured() {
        let a = MultiHeadAttention::init(selected_cfg(), &mut Rng::new(77)).unwrap();
        let b = MultiHeadAttention::init(selected_cfg(), &mut Rng::new(77)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.heads().len(), 3);
        assert_eq!(a.parameters().len(), 3 * 3 + 1);
        let bad = AttentionConfig { heads: 0, ..selected_cfg() };
        assert!(matches!(MultiHeadAttention::init(bad, &mut Rng::new(1)), Err(Error::Config(_))));
    }

    #[test]
    fn init_mean_within_three_sigma() {
        // 10,000 entries drawn from the v x d_h law (fan_in=1, fan_out=8).
        let cfg = AttentionConfig {
            heads: 1250,
            head_width: 8,
            n: 4,
            v: 1,
        };
        let m = MultiHeadAttention::init(cfg, &mut Rng::new(123)).unwrap();
        let samples: Vec<f64> = m.heads().iter().flat_map(|h| h.wq.data().to_vec()).collect();
        assert_eq!(samples.len(), 10_000);
        let bound = (6.0f64 / 9.0).sqrt();
        let sigma_of_mean = bound / 3f64.sqrt() / (samples.len() as f64).sqrt();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        assert!(mean.abs() < 3.0 * sigma_of_mean, "mean {mean}");
        assert!(samples.iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn uniform_attention_when_queries_vanish() {
        let mut rng = Rng::new(31);
        let base = MultiHeadAttention::init(selected_cfg(), &mut rng).unwrap();
        let heads = base
            .heads()
            .iter()
            .map(|h| AttentionHead {
                wq: Tensor::zeros(1, 8),
                wk: Tensor::zeros(1, 8),
                wv: h.wv.clone(),
            })
            .collect();
        let m = MultiHeadAttention::from_parts(heads, base.wo().clone(), 30).unwrap();
        let x = rng.uniform_tensor(30, 1, 0.0, 1.0);
        let out = m.apply(&x).unwrap();
        for r in 1..30 {
            assert!((out.get(r, 0) - out.get(0, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_factor_is_row_stochastic_in_every_head() {
        let mut rng = Rng::new(8);
        let m = MultiHeadAttention::init(selected_cfg(), &mut rng).unwrap();
        let x = rng.uniform_tensor(30, 1, 0.0, 1.0);
        for h in m.heads() {
            let q = x.matmul(&h.wq).unwrap();
            let k = x.matmul(&h.wk).unwrap();
            let s = softmax_rows(&q.matmul_nt(&k).unwrap().map(|z| z / 30f64.sqrt()));
            for r in 0..30 {
                assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
