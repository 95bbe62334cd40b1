use crate::error::Result;
use crate::numcore::{Tape, Tensor, Var};

/// Outcome of comparing tape gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Per input: `‖analytic − numeric‖ / (‖analytic‖ + ‖numeric‖)`, or 0
    /// when both vanish.
    pub relative_errors: Vec<f64>,
    pub analytic: Vec<Tensor<f64>>,
    pub numeric: Vec<Tensor<f64>>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Differentiates the scalar `f(tape, inputs)` with respect to every input
/// both on the tape and by central differences with step `h`.
pub fn check_gradients<F>(f: F, inputs: &[Tensor<f64>], h: f64) -> Result<GradCheck>
where
    F: Fn(&Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&tape, &vars)?;
        Ok(tape.scalar(out))
    };
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&tape, &vars)?;
    let analytic = tape.backward(out)?.wrt(&vars);

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for (k, x) in inputs.iter().enumerate() {
        let mut g = Tensor::zeros(x.shape().to_vec());
        for i in 0..x.numel() {
            let orig = x.data()[i];
            work[k].data_mut()[i] = orig + h;
            let up = eval(&work)?;
            work[k].data_mut()[i] = orig - h;
            let down = eval(&work)?;
            work[k].data_mut()[i] = orig;
            g.data_mut()[i] = (up - down) / (2.0 * h);
        }
        numeric.push(g);
    }
    let relative_errors = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| {
            let norm = |t: &Tensor<f64>| t.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            let diff: f64 = a
                .data()
                .iter()
                .zip(n.data())
                .map(|(p, q)| (p - q).powi(2))
                .sum::<f64>()
                .sqrt();
            let scale = norm(a) + norm(n);
            if scale == 0.0 {
                0.0
            } else {
                diff / scale
            }
        })
        .collect();
    Ok(GradCheck {
        relative_errors,
        analytic,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_has_known_gradient() {
        let x = Tensor::from_f64([3], &[0.5, -1.0, 2.0]).unwrap();
        let r = check_gradients(
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                let cube = t.mul(sq, v[0])?;
                t.sum(cube)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert_eq!(r.analytic[0].data(), &[0.75, 3.0, 12.0]);
        assert!(r.max_relative_error() < 1e-9);
    }
}
