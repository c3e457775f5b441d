use super::tensor::Tensor;

/// Update rule applied to a fixed, ordered list of parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule {
    /// Plain fixed-step descent.
    Sgd,
    /// Step scaled by a running average of squared gradients.
    RmsProp { decay: f64 },
    Adam { beta1: f64, beta2: f64 },
}

impl UpdateRule {
    pub fn name(&self) -> &'static str {
        match self {
            UpdateRule::Sgd => "sgd",
            UpdateRule::RmsProp { .. } => "rmsprop",
            UpdateRule::Adam { .. } => "adam",
        }
    }
}

const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Optimizer {
    rule: UpdateRule,
    step_size: f64,
    steps: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(rule: UpdateRule, step_size: f64) -> Self {
        Optimizer {
            rule,
            step_size,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn rule(&self) -> UpdateRule {
        self.rule
    }

    /// Applies one descent step. `params` and `grads` must keep the same
    /// order and shapes across calls.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count mismatch");
        if self.second.is_empty() {
            self.second = grads.iter().map(|g| Tensor::zeros(g.rows(), g.cols())).collect();
            self.first = self.second.clone();
        }
        self.steps += 1;
        let lr = self.step_size;
        match self.rule {
            UpdateRule::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
            }
            UpdateRule::RmsProp { decay } => {
                for ((p, g), sq) in params.iter_mut().zip(grads).zip(&mut self.second) {
                    for ((w, d), s) in p.data_mut().iter_mut().zip(g.data()).zip(sq.data_mut()) {
                        *s = decay * *s + (1.0 - decay) * d * d;
                        *w -= lr * d / (s.sqrt() + EPS);
                    }
                }
            }
            UpdateRule::Adam { beta1, beta2 } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    let it = p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut());
                    for (((w, d), m), v) in it {
                        *m = beta1 * *m + (1.0 - beta1) * d;
                        *v = beta2 * *v + (1.0 - beta2) * d * d;
                        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}
