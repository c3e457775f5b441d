use crate::asgan::Affine;
use crate::data::{Label, WindowSet};
use crate::error::{Error, Result};
use crate::ndcore::{glorot_uniform, sigmoid, Optimizer, Parameterized, Rng, Tape, Tensor, UpdateRule, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub kernel_width: usize,
    /// Output channels of the two convolutions.
    pub channels: (usize, usize),
    pub stride: usize,
    /// Widths of the first two affine layers; the third maps to one logit.
    pub hidden: (usize, usize),
    pub epochs: usize,
    pub batch_size: usize,
    pub update: UpdateRule,
    pub step_size: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            kernel_width: 5,
            channels: (4, 8),
            stride: 1,
            hidden: (32, 16),
            epochs: 200,
            batch_size: 32,
            update: UpdateRule::Adam { beta1: 0.9, beta2: 0.999 },
            step_size: 1e-3,
            threshold: 0.5,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.kernel_width,
            self.channels.0,
            self.channels.1,
            self.stride,
            self.hidden.0,
            self.hidden.1,
            self.epochs,
            self.batch_size,
        ];
        if dims.contains(&0) {
            return Err(Error::config(format!("classifier sizes must be positive: {self:?}")));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::config(format!("classifier step_size must be positive, got {}", self.step_size)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    /// `c_out x (c_in * width)`, channel-major rows.
    pub kernels: Tensor,
    /// `1 x c_out`.
    pub bias: Tensor,
}

/// Two valid 1-D convolutions with ReLU, then three affine layers (ReLU,
/// ReLU, sigmoid). The input window's channels are the convolution input
/// channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvClassifier {
    pub conv: [Conv; 2],
    pub dense: [Affine; 3],
    width: usize,
    stride: usize,
    n: usize,
    v: usize,
    threshold: f64,
}

struct Bound {
    conv: [(Var, Var); 2],
    dense: [(Var, Var); 3],
}

impl ConvClassifier {
    pub fn init(n: usize, v: usize, cfg: &ClassifierConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.kernel_width;
        let len1 = conv_len(n, k, cfg.stride).ok_or_else(|| Error::shape("conv1d", (v, n), (v, k)))?;
        let len2 = conv_len(len1, k, cfg.stride).ok_or_else(|| Error::shape("conv1d", (cfg.channels.0, len1), (cfg.channels.0, k)))?;
        let (c1, c2) = cfg.channels;
        let conv = [
            Conv {
                kernels: glorot_uniform(c1, v * k, rng),
                bias: Tensor::zeros(1, c1),
            },
            Conv {
                kernels: glorot_uniform(c2, c1 * k, rng),
                bias: Tensor::zeros(1, c2),
            },
        ];
        let flat = c2 * len2;
        let dense = [
            Affine::init(flat, cfg.hidden.0, rng),
            Affine::init(cfg.hidden.0, cfg.hidden.1, rng),
            Affine::init(cfg.hidden.1, 1, rng),
        ];
        Ok(ConvClassifier {
            conv,
            dense,
            width: k,
            stride: cfg.stride,
            n,
            v,
            threshold: cfg.threshold,
        })
    }

    pub fn window_shape(&self) -> (usize, usize) {
        (self.n, self.v)
    }

    fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            conv: self.conv.each_ref().map(|c| (tape.param(&c.kernels), tape.param(&c.bias))),
            dense: self.dense.each_ref().map(|d| (tape.param(&d.weight), tape.param(&d.bias))),
        }
    }

    /// Records `B x 1` logits for windows `rows` of `ws`.
    fn record(&self, tape: &mut Tape, b: &Bound, ws: &WindowSet, rows: &[usize]) -> Result<Var> {
        let mut feats = Vec::with_capacity(rows.len());
        for &i in rows {
            // Channels become rows: v x n. Centered on the scaled midpoint so
            // that kernels of either sign start with live ReLUs.
            let x = tape.constant(ws.window(i).transpose().map(|x| x - 0.5));
            let mut h = x;
            for (kern, bias) in b.conv {
                let c = tape.conv1d(h, kern, bias, self.width, self.stride)?;
                h = tape.relu(c);
            }
            let (r, c) = tape.shape(h);
            feats.push(tape.reshape(h, 1, r * c)?);
        }
        let mut h = tape.stack_rows(&feats)?;
        for (i, (w, bias)) in b.dense.into_iter().enumerate() {
            let xw = tape.matmul(h, w)?;
            h = tape.add_row(xw, bias)?;
            if i < 2 {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    fn check(&self, ws: &WindowSet) -> Result<()> {
        if (ws.n(), ws.v()) != (self.n, self.v) {
            return Err(Error::shape("classifier input", (self.n, self.v), (ws.n(), ws.v())));
        }
        Ok(())
    }

    /// Probability of abnormal for every window of `ws`.
    pub fn predict_proba(&self, ws: &WindowSet) -> Result<Vec<f64>> {
        self.check(ws)?;
        let mut out = Vec::with_capacity(ws.len());
        let idx: Vec<usize> = (0..ws.len()).collect();
        for chunk in idx.chunks(128) {
            let mut tape = Tape::new();
            let b = self.bind(&mut tape);
            let logits = self.record(&mut tape, &b, ws, chunk)?;
            out.extend(tape.value(logits).data().iter().map(|&z| sigmoid(z)));
        }
        Ok(out)
    }

    /// `true` where the probability of abnormal reaches the threshold.
    pub fn predict(&self, ws: &WindowSet) -> Result<Vec<bool>> {
        Ok(self.predict_proba(ws)?.into_iter().map(|p| p >= self.threshold).collect())
    }
}

fn conv_len(len: usize, width: usize, stride: usize) -> Option<usize> {
    (width <= len).then(|| (len - width) / stride + 1)
}

impl Parameterized for ConvClassifier {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(10);
        for c in &self.conv {
            out.push(&c.kernels);
            out.push(&c.bias);
        }
        for d in &self.dense {
            out.push(&d.weight);
            out.push(&d.bias);
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(10);
        for c in &mut self.conv {
            out.push(&mut c.kernels);
            out.push(&mut c.bias);
        }
        for d in &mut self.dense {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }
}

/// Minimizes mean binary cross-entropy (abnormal = 1) over shuffled
/// mini-batches for a fixed number of epochs.
pub fn train_classifier(train: &WindowSet, cfg: &ClassifierConfig) -> Result<ConvClassifier> {
    cfg.validate()?;
    let positives = train.count(Label::Abnormal);
    let negatives = train.count(Label::Normal);
    if positives == 0 || negatives == 0 {
        return Err(Error::contract(format!(
            "classifier training needs both labels, got {positives} abnormal and {negatives} normal"
        )));
    }
    let rng = Rng::new(cfg.seed);
    let mut clf = ConvClassifier::init(train.n(), train.v(), cfg, &mut rng.split("init"))?;
    let mut order = rng.split("shuffle");
    let mut opt = Optimizer::new(cfg.update, cfg.step_size);
    let usable: Vec<usize> = (0..train.len()).filter(|&i| train.label(i) != Label::Unlabeled).collect();
    let mut tape = Tape::new();
    for _ in 0..cfg.epochs {
        let perm = order.sample_without_replacement(usable.len(), usable.len());
        let shuffled: Vec<usize> = perm.into_iter().map(|p| usable[p]).collect();
        for chunk in shuffled.chunks(cfg.batch_size) {
            tape.clear();
            let b = clf.bind(&mut tape);
            let logits = clf.record(&mut tape, &b, train, chunk)?;
            let targets: Vec<f64> = chunk.iter().map(|&i| f64::from(u8::from(train.label(i).is_positive()))).collect();
            let loss = tape.bce_with_logits(logits, &targets)?;
            let vars: Vec<Var> = b.conv.iter().chain(b.dense.iter()).flat_map(|&(w, bias)| [w, bias]).collect();
            let grads = tape.backward_wrt(loss, &vars)?;
            let mut params = clf.parameters_mut();
            let g: Vec<Tensor> = vars.iter().zip(params.iter()).map(|(&v, p)| grads.get_or_zeros(v, p.shape())).collect();
            opt.step(&mut params, &g);
        }
    }
    Ok(clf)
}
