//! Dense tensors, reverse-mode differentiation, seeded randomness and
//! parameter updates.

mod optim;
mod rng;
mod tape;
mod tensor;

pub use optim::{Optimizer, UpdateRule};
pub use rng::Rng;
pub use tape::{sigmoid, softmax_rows, Gradients, Tape, Var};
pub use tensor::Tensor;

/// Uniform fan-in/fan-out initialization on `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    rng.uniform_tensor(rows, cols, -bound, bound)
}

/// A model whose trainable tensors can be listed in a stable order.
pub trait Parameterized {
    fn parameters(&self) -> Vec<&Tensor>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    /// Registers every parameter as a differentiable leaf, in
    /// [`Parameterized::parameters`] order.
    fn bind_all(&self, tape: &mut Tape) -> Vec<Var> {
        self.parameters().into_iter().map(|p| tape.param(p)).collect()
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }
}
