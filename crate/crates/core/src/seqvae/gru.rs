use crate::error::{shape_err, Result};
use crate::numcore::{sigmoid, Rng, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Gated recurrent unit:
///
/// ```text
/// z  = σ(x·Wz + h·Uz + bz)
/// r  = σ(x·Wr + h·Ur + br)
/// h̃  = tanh(x·Wh + (r⊙h)·Uh + bh)
/// h' = (1 − z)⊙h̃ + z⊙h
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell<T> {
    pub wz: Tensor<T>,
    pub uz: Tensor<T>,
    pub bz: Tensor<T>,
    pub wr: Tensor<T>,
    pub ur: Tensor<T>,
    pub br: Tensor<T>,
    pub wh: Tensor<T>,
    pub uh: Tensor<T>,
    pub bh: Tensor<T>,
}

pub const GRU_TENSORS: usize = 9;

impl<T: Scalar> GruCell<T> {
    /// Xavier-uniform weights, zero biases.
    pub fn new(input_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        let mut mat = |r: usize, c: usize| {
            let a = (6.0 / (r + c) as f64).sqrt();
            let d = (0..r * c)
                .map(|_| T::lit(a * (2.0 * rng.uniform() - 1.0)))
                .collect();
            Tensor::new([r, c], d).expect("consistent shape")
        };
        Self {
            wz: mat(input_dim, hidden_dim),
            uz: mat(hidden_dim, hidden_dim),
            bz: Tensor::zeros([hidden_dim]),
            wr: mat(input_dim, hidden_dim),
            ur: mat(hidden_dim, hidden_dim),
            br: Tensor::zeros([hidden_dim]),
            wh: mat(input_dim, hidden_dim),
            uh: mat(hidden_dim, hidden_dim),
            bh: Tensor::zeros([hidden_dim]),
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = Tensor::zeros([input_dim, hidden_dim]);
        let u = Tensor::zeros([hidden_dim, hidden_dim]);
        let b = Tensor::zeros([hidden_dim]);
        Self {
            wz: w.clone(),
            uz: u.clone(),
            bz: b.clone(),
            wr: w.clone(),
            ur: u.clone(),
            br: b.clone(),
            wh: w,
            uh: u,
            bh: b,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.wz.shape()[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.uz.shape()[0]
    }

    pub(crate) fn named(&self, prefix: &str) -> Vec<(String, &Tensor<T>)> {
        [
            ("wz", &self.wz),
            ("uz", &self.uz),
            ("bz", &self.bz),
            ("wr", &self.wr),
            ("ur", &self.ur),
            ("br", &self.br),
            ("wh", &self.wh),
            ("uh", &self.uh),
            ("bh", &self.bh),
        ]
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.wz,
            &mut self.uz,
            &mut self.bz,
            &mut self.wr,
            &mut self.ur,
            &mut self.br,
            &mut self.wh,
            &mut self.uh,
            &mut self.bh,
        ]
    }

    /// One step on the tape. `vars` holds the cell's nine tensors in field order.
    pub fn step_on(&self, tape: &Tape<T>, vars: &[Var], x: Var, h: Var) -> Result<Var> {
        let gate = |w: Var, u: Var, b: Var, hin: Var| -> Result<Var> {
            let a = tape.matmul(x, w)?;
            let c = tape.matmul(hin, u)?;
            let s = tape.add(a, c)?;
            tape.add_row(s, b)
        };
        let z = tape.sigmoid(gate(vars[0], vars[1], vars[2], h)?)?;
        let r = tape.sigmoid(gate(vars[3], vars[4], vars[5], h)?)?;
        let rh = tape.mul(r, h)?;
        let cand = tape.tanh(gate(vars[6], vars[7], vars[8], rh)?)?;
        // (1 − z)⊙h̃ + z⊙h  =  h̃ + z⊙(h − h̃)
        let diff = tape.sub(h, cand)?;
        let keep = tape.mul(z, diff)?;
        tape.add(cand, keep)
    }

    /// One step on plain values; `x: [B×in]`, `h: [B×H]`.
    pub fn step(&self, x: &Tensor<T>, h: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, hd) = h.dims2()?;
        if hd != self.hidden_dim() || x.dims2()? != (b, self.input_dim()) {
            return Err(shape_err(
                "gru_step",
                format!(
                    "x {:?}, h {:?} for cell ({}, {})",
                    x.shape(),
                    h.shape(),
                    self.input_dim(),
                    self.hidden_dim()
                ),
            ));
        }
        let affine = |w: &Tensor<T>,
                      u: &Tensor<T>,
                      bias: &Tensor<T>,
                      hin: &Tensor<T>|
         -> Result<Tensor<T>> {
            let mut s = x.matmul(w)?;
            s.add_assign(&hin.matmul(u)?)?;
            for row in s.data_mut().chunks_mut(hd) {
                for (o, &bb) in row.iter_mut().zip(bias.data()) {
                    *o += bb;
                }
            }
            Ok(s)
        };
        let z = affine(&self.wz, &self.uz, &self.bz, h)?.map(sigmoid);
        let r = affine(&self.wr, &self.ur, &self.br, h)?.map(sigmoid);
        let rh = r.zip_map(h, "gru_step", |a, b| a * b)?;
        let cand = affine(&self.wh, &self.uh, &self.bh, &rh)?.map(|v| v.tanh());
        let mut out = cand.clone();
        for ((o, &zi), &hi) in out.data_mut().iter_mut().zip(z.data()).zip(h.data()) {
            *o += zi * (hi - *o);
        }
        out.ensure_finite("gru_step")?;
        Ok(out)
    }
}

/// Single-sequence convenience wrapper around [`GruCell::step`].
pub fn gru_step<T: Scalar>(
    cell: &GruCell<T>,
    x_t: &Tensor<T>,
    h_prev: &Tensor<T>,
) -> Result<Tensor<T>> {
    let x = x_t.clone().reshape([1, x_t.numel()])?;
    let h = h_prev.clone().reshape([1, h_prev.numel()])?;
    let out = cell.step(&x, &h)?;
    out.reshape(h_prev.shape().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cell_halves_the_state() {
        // z = r = σ(0) = ½, h̃ = tanh(0) = 0 ⇒ h' = ½·h
        let cell = GruCell::<f64>::zeros(3, 4);
        let h = Tensor::from_f64([4], &[1.0, -2.0, 0.5, 3.0]).unwrap();
        let x = Tensor::from_f64([3], &[0.7, 0.1, -0.4]).unwrap();
        let out = gru_step(&cell, &x, &h).unwrap();
        assert_eq!(out.data(), &[0.5, -1.0, 0.25, 1.5]);
    }

    #[test]
    fn tape_and_value_steps_agree() {
        let mut rng = Rng::new(3);
        let cell = GruCell::<f64>::new(3, 5, &mut rng);
        let x: Tensor<f64> = rng.normal_tensor([2, 3]);
        let h: Tensor<f64> = rng.normal_tensor([2, 5]);
        let direct = cell.step(&x, &h).unwrap();
        let tape = Tape::new();
        let vars: Vec<Var> = cell
            .named("c")
            .into_iter()
            .map(|(_, t)| tape.constant(t.clone()))
            .collect();
        let (xv, hv) = (tape.constant(x.clone()), tape.constant(h.clone()));
        let out = cell.step_on(&tape, &vars, xv, hv).unwrap();
        for (a, b) in direct.data().iter().zip(tape.value(out).data()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(direct, cell.step(&x, &h).unwrap());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let cell = GruCell::<f64>::zeros(3, 4);
        assert!(cell
            .step(&Tensor::zeros([1, 2]), &Tensor::zeros([1, 4]))
            .is_err());
        assert!(cell
            .step(&Tensor::zeros([1, 3]), &Tensor::zeros([1, 5]))
            .is_err());
    }
}
