use crate::attention::{AttentionConfig, AttentionVars, MultiHeadAttention};
use crate::error::{Error, Result};
use crate::ndcore::{glorot_uniform, Parameterized, Rng, Tape, Tensor, Var};

/// `x W + b` with `W` of shape `in x out` and `b` of shape `1 x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Affine {
    /// Glorot-uniform weight, zero bias.
    pub fn init(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Affine {
            weight: glorot_uniform(inputs, outputs, rng),
            bias: Tensor::zeros(1, outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Affine {
            weight: Tensor::zeros(inputs, outputs),
            bias: Tensor::zeros(1, outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AffineVars {
    weight: Var,
    bias: Var,
}

impl AffineVars {
    fn bind(layer: &Affine, tape: &mut Tape) -> Self {
        AffineVars {
            weight: tape.param(&layer.weight),
            bias: tape.param(&layer.bias),
        }
    }

    fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add_row(xw, self.bias)
    }
}

/// MLP generator over `concat(Z, flat(M(X)))`, or over `Z` alone when built
/// without attention. Interior layers use ReLU, the last layer a sigmoid, so
/// every output lies in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    attention: Option<MultiHeadAttention>,
    layers: Vec<Affine>,
    noise_dim: usize,
    n: usize,
    v: usize,
}

/// Shape parameters of a [`Generator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorShape {
    pub n: usize,
    pub v: usize,
    pub noise_dim: usize,
    /// Number of affine layers `h_f`.
    pub layers: usize,
    /// Width of interior layers; unused when `layers == 1`.
    pub hidden: usize,
    /// `None` for an attention-free generator.
    pub attention: Option<(usize, usize)>,
}

impl GeneratorShape {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.v == 0 || self.noise_dim == 0 || self.layers == 0 || self.hidden == 0 {
            return Err(Error::config(format!("generator dimensions must be positive: {self:?}")));
        }
        if let Some((h, d)) = self.attention {
            if h == 0 || d == 0 {
                return Err(Error::config(format!("attention dimensions must be positive: {self:?}")));
            }
        }
        Ok(())
    }

    pub(crate) fn input_width(&self) -> usize {
        self.noise_dim + if self.attention.is_some() { self.n * self.v } else { 0 }
    }

    /// `(inputs, outputs)` of each layer in order.
    pub(crate) fn layer_dims(&self) -> Vec<(usize, usize)> {
        let out = self.n * self.v;
        (0..self.layers)
            .map(|i| {
                let inputs = if i == 0 { self.input_width() } else { self.hidden };
                let outputs = if i + 1 == self.layers { out } else { self.hidden };
                (inputs, outputs)
            })
            .collect()
    }
}

/// Tape handles of one generator binding.
pub struct GeneratorVars {
    attention: Option<AttentionVars>,
    layers: Vec<AffineVars>,
}

impl GeneratorVars {
    /// Handles in [`Parameterized::parameters`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = self.attention.as_ref().map(|a| a.vars()).unwrap_or_default();
        for l in &self.layers {
            out.push(l.weight);
            out.push(l.bias);
        }
        out
    }
}

impl Generator {
    pub fn init(shape: GeneratorShape, rng: &mut Rng) -> Result<Self> {
        shape.validate()?;
        let attention = match shape.attention {
            Some((heads, head_width)) => Some(MultiHeadAttention::init(
                AttentionConfig {
                    heads,
                    head_width,
                    n: shape.n,
                    v: shape.v,
                },
                rng,
            )?),
            None => None,
        };
        let layers = shape.layer_dims().into_iter().map(|(i, o)| Affine::init(i, o, rng)).collect();
        Ok(Generator {
            attention,
            layers,
            noise_dim: shape.noise_dim,
            n: shape.n,
            v: shape.v,
        })
    }

    /// Assembles a generator from explicit parts, checking that every layer
    /// chains.
    pub fn from_parts(attention: Option<MultiHeadAttention>, layers: Vec<Affine>, noise_dim: usize, n: usize, v: usize) -> Result<Self> {
        let g = Generator {
            attention,
            layers,
            noise_dim,
            n,
            v,
        };
        let shape = g.shape();
        shape.validate()?;
        if let Some(a) = &g.attention {
            let c = a.config();
            if (c.n, c.v) != (n, v) {
                return Err(Error::shape("generator attention", (n, v), (c.n, c.v)));
            }
        }
        for (dims, layer) in shape.layer_dims().into_iter().zip(&g.layers) {
            if layer.weight.shape() != dims || layer.bias.shape() != (1, dims.1) {
                return Err(Error::shape("generator layer", dims, layer.weight.shape()));
            }
        }
        Ok(g)
    }

    pub fn shape(&self) -> GeneratorShape {
        GeneratorShape {
            n: self.n,
            v: self.v,
            noise_dim: self.noise_dim,
            layers: self.layers.len(),
            hidden: if self.layers.len() > 1 { self.layers[0].outputs() } else { self.n * self.v },
            attention: self.attention.as_ref().map(|a| {
                let c = a.config();
                (c.heads, c.head_width)
            }),
        }
    }

    pub fn attention(&self) -> Option<&MultiHeadAttention> {
        self.attention.as_ref()
    }

    pub fn layers(&self) -> &[Affine] {
        &self.layers
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn input_width(&self) -> usize {
        self.shape().input_width()
    }

    pub fn bind(&self, tape: &mut Tape) -> GeneratorVars {
        GeneratorVars {
            attention: self.attention.as_ref().map(|a| a.bind(tape)),
            layers: self.layers.iter().map(|l| AffineVars::bind(l, tape)).collect(),
        }
    }

    /// Records the batched forward pass. `z` is `B x noise_dim`; `xs` holds
    /// the `B` conditioning windows (ignored without attention). Returns the
    /// `B x (n * v)` output.
    pub fn record(&self, tape: &mut Tape, vars: &GeneratorVars, z: Var, xs: &[Var]) -> Result<Var> {
        let (batch, zw) = tape.shape(z);
        if zw != self.noise_dim {
            return Err(Error::shape("generator noise", (batch, self.noise_dim), (batch, zw)));
        }
        let mut h = match &vars.attention {
            Some(att) => {
                if xs.len() != batch {
                    return Err(Error::shape("generator conditioning", (batch, self.n), (xs.len(), self.n)));
                }
                let width = self.n * self.v;
                let mut flat = Vec::with_capacity(batch);
                for &x in xs {
                    if tape.shape(x) != (self.n, self.v) {
                        return Err(Error::config(format!(
                            "conditioning window must be {}x{}, got {:?}",
                            self.n,
                            self.v,
                            tape.shape(x)
                        )));
                    }
                    let m = att.forward(tape, x)?;
                    flat.push(tape.reshape(m, 1, width)?);
                }
                let scores = tape.stack_rows(&flat)?;
                tape.concat_cols(&[z, scores])?
            }
            None => z,
        };
        let last = vars.layers.len() - 1;
        for (i, layer) in vars.layers.iter().enumerate() {
            let pre = layer.apply(tape, h)?;
            h = if i == last { tape.sigmoid(pre) } else { tape.relu(pre) };
        }
        Ok(h)
    }

    /// Evaluates `G(Z, M(X))` for one noise row and one window, returning
    /// an `n x v` window.
    pub fn forward(&self, z: &Tensor, x: &Tensor) -> Result<Tensor> {
        if z.shape() != (1, self.noise_dim) {
            return Err(Error::config(format!(
                "noise must be 1x{}, got {:?}",
                self.noise_dim,
                z.shape()
            )));
        }
        let out = self.forward_batch(z, std::slice::from_ref(x))?;
        out.reshape(self.n, self.v)
    }

    /// Batched evaluation; row `j` of the result is the flattened output for
    /// `z` row `j` and window `xs[j]`.
    pub fn forward_batch(&self, z: &Tensor, xs: &[Tensor]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let zv = tape.constant(z.clone());
        let xv: Vec<Var> = if self.attention.is_some() {
            xs.iter().map(|x| tape.constant(x.clone())).collect()
        } else {
            Vec::new()
        };
        let out = self.record(&mut tape, &vars, zv, &xv)?;
        Ok(tape.value(out).clone())
    }
}

impl Parameterized for Generator {
    fn parameters(&self) -> Vec<&Tensor> {
        let mut out = self.attention.as_ref().map(|a| a.parameters()).unwrap_or_default();
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.attention.as_mut().map(|a| a.parameters_mut()).unwrap_or_default();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }
}

/// How the critic's scalar output is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticHead {
    /// Unbounded Wasserstein score.
    Score,
    /// Probability of "real" via a sigmoid.
    Probability,
}

/// Two affine layers with a ReLU between them and a scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub hidden: Affine,
    pub output: Affine,
    pub head: CriticHead,
}

/// Tape handles of one critic binding.
pub struct CriticVars {
    hidden: AffineVars,
    output: AffineVars,
}

impl CriticVars {
    /// Handles in [`Parameterized::parameters`] order.
    pub fn vars(&self) -> Vec<Var> {
        vec![self.hidden.weight, self.hidden.bias, self.output.weight, self.output.bias]
    }
}

impl Critic {
    pub fn init(inputs: usize, hidden: usize, head: CriticHead, rng: &mut Rng) -> Result<Self> {
        if inputs == 0 || hidden == 0 {
            return Err(Error::config(format!("critic widths must be positive, got {inputs} and {hidden}")));
        }
        Ok(Critic {
            hidden: Affine::init(inputs, hidden, rng),
            output: Affine::init(hidden, 1, rng),
            head,
        })
    }

    pub fn input_width(&self) -> usize {
        self.hidden.inputs()
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.outputs()
    }

    pub fn bind(&self, tape: &mut Tape) -> CriticVars {
        CriticVars {
            hidden: AffineVars::bind(&self.hidden, tape),
            output: AffineVars::bind(&self.output, tape),
        }
    }

    /// Records pre-activation outputs (`B x 1`) for a `B x width` batch.
    pub fn record(&self, tape: &mut Tape, vars: &CriticVars, batch: Var) -> Result<Var> {
        let h = vars.hidden.apply(tape, batch)?;
        let h = tape.relu(h);
        vars.output.apply(tape, h)
    }

    /// Output for one window of any shape whose size equals the input width.
    /// Probability heads return a value in `(0, 1)`.
    pub fn forward(&self, window: &Tensor) -> Result<f64> {
        if window.len() != self.input_width() {
            return Err(Error::shape("critic_forward", (1, self.input_width()), window.shape()));
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let x = tape.constant(window.clone().reshape(1, window.len())?);
        let raw = self.record(&mut tape, &vars, x)?;
        let out = match self.head {
            CriticHead::Score => raw,
            CriticHead::Probability => tape.sigmoid(raw),
        };
        Ok(tape.value(out).item())
    }

    /// Clamps every weight and bias into `[-c, c]`.
    pub fn clip(&mut self, c: f64) {
        for p in self.parameters_mut() {
            for x in p.data_mut() {
                *x = x.clamp(-c, c);
            }
        }
    }

    /// Largest absolute parameter.
    pub fn max_abs_weight(&self) -> f64 {
        self.parameters().iter().map(|p| p.max_abs()).fold(0.0, f64::max)
    }

    /// `K` with `|score(a) - score(b)| <= K * |a - b|_1` for the raw score.
    pub fn l1_lipschitz_bound(&self) -> f64 {
        // |h(a) - h(b)|_inf <= max |W1| * |a - b|_1, ReLU is 1-Lipschitz.
        let first = self.hidden.weight.max_abs();
        // |o(a) - o(b)| <= sum |W2| * |h(a) - h(b)|_inf
        let second: f64 = self.output.weight.data().iter().map(|x| x.abs()).sum();
        first * second
    }
}

impl Parameterized for Critic {
    fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.hidden.weight, &self.hidden.bias, &self.output.weight, &self.output.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.output.weight,
            &mut self.output.bias,
        ]
    }
}
