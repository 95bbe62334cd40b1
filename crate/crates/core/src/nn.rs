//! Dense layers and the parameter-binding convention shared by all models.
//!
//! A model exposes its tensors in a fixed order through [`Parameterized`].
//! For each training step the parameters are copied onto a fresh tape as
//! leaves (`bind`), the forward pass reads them back by position, and the
//! resulting gradients line up with `params_mut` for the optimizer.

use crate::error::{shape_err, Result};
use crate::numcore::{Rng, Tape, Tensor, Var};
use crate::scalar::Scalar;

pub trait Parameterized<T: Scalar> {
    /// Parameters with stable names, in optimizer and checkpoint order.
    fn named_params(&self) -> Vec<(String, &Tensor<T>)>;

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn params(&self) -> Vec<&Tensor<T>> {
        self.named_params().into_iter().map(|(_, p)| p).collect()
    }

    fn bind(&self, tape: &Tape<T>) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|p| tape.leaf(p.clone()))
            .collect()
    }

    fn n_scalars(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }
}

/// `y = x·W + b` with `W: [in×out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    /// Xavier-uniform weights, zero bias.
    pub fn xavier(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| T::lit(a * (2.0 * rng.uniform() - 1.0)))
            .collect();
        Self {
            weight: Tensor::new([fan_in, fan_out], data).expect("consistent shape"),
            bias: Tensor::zeros([fan_out]),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros([fan_in, fan_out]),
            bias: Tensor::zeros([fan_out]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Plain-value forward pass, `x: [B×in]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = x.matmul(&self.weight)?;
        let c = self.out_dim();
        for row in y.data_mut().chunks_mut(c) {
            for (o, &b) in row.iter_mut().zip(self.bias.data()) {
                *o += b;
            }
        }
        y.ensure_finite("linear")?;
        Ok(y)
    }

    pub(crate) fn named(&self, prefix: &str) -> Vec<(String, &Tensor<T>)> {
        vec![
            (format!("{prefix}.weight"), &self.weight),
            (format!("{prefix}.bias"), &self.bias),
        ]
    }

    /// `vars` = `[weight, bias]` as bound on `tape`.
    pub fn forward_on(&self, tape: &Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        let h = tape.matmul(x, vars[0])?;
        tape.add_row(h, vars[1])
    }
}

/// Multi-layer perceptron with tanh hidden activations and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// `dims` = input, hidden..., output.
    pub fn new(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(shape_err("mlp", format!("invalid layer sizes {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| Linear::xavier(w[0], w[1], rng))
            .collect();
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(Linear::out_dim))
            .collect()
    }

    pub fn n_tensors(&self) -> usize {
        2 * self.layers.len()
    }

    pub fn forward_on(&self, tape: &Tape<T>, vars: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward_on(tape, &vars[2 * i..2 * i + 2], h)?;
            if i < last {
                h = tape.tanh(h)?;
            }
        }
        Ok(h)
    }

    /// Forward pass on plain values.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let vars = self.bind_constants(&tape);
        let xv = tape.constant(x.clone());
        let y = self.forward_on(&tape, &vars, xv)?;
        let out = tape.value(y).clone();
        Ok(out)
    }

    pub(crate) fn bind_constants(&self, tape: &Tape<T>) -> Vec<Var> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.clone(), l.bias.clone()])
            .map(|p| tape.constant(p))
            .collect()
    }

    pub(crate) fn named(&self, prefix: &str) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("{prefix}.{i}.weight"), &l.weight),
                    (format!("{prefix}.{i}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

impl<T: Scalar> Parameterized<T> for Mlp<T> {
    fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        self.named("mlp")
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.tensors_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xavier_bounds_and_zero_bias() {
        let mut rng = Rng::new(1);
        let l = Linear::<f64>::xavier(17, 64, &mut rng);
        let a = (6.0f64 / 81.0).sqrt();
        assert!(l.weight.data().iter().all(|w| w.abs() <= a));
        assert!(l.bias.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn mlp_shapes() {
        let mut rng = Rng::new(2);
        let m = Mlp::<f64>::new(&[3, 8, 8, 2], &mut rng).unwrap();
        assert_eq!(m.dims(), vec![3, 8, 8, 2]);
        let y = m.forward(&Tensor::zeros([5, 3])).unwrap();
        assert_eq!(y.shape(), &[5, 2]);
        assert!(Mlp::<f64>::new(&[3], &mut rng).is_err());
    }
}
