use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Difference formula used for the numeric derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`, truncation error `O(h²)`.
    Central,
    /// `(f(x−2h) − 8f(x−h) + 8f(x+h) − f(x+2h)) / 12h`, truncation error `O(h⁴)`.
    ///
    /// Allows a larger `h`, which keeps forward-pass rounding noise below the
    /// smallest gradients of deep compositions.
    FivePoint,
}

/// Outcome of a central-difference gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|a − n| / max(|a|, |n|, 1e-8)` over all checked coordinates.
    pub max_rel_error: f64,
    /// `(input, flat coordinate)` where the worst error occurred.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

fn eval<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if v.len() != 1 {
        return Err(Error::Contract(format!("checked function must return a scalar, got {:?}", v.shape())));
    }
    Ok(v.item())
}

/// Compares reverse-mode gradients of scalar `f` against central differences
/// at every coordinate of every input.
pub fn finite_diff_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    finite_diff_check_with(f, inputs, eps, Stencil::Central)
}

/// [`finite_diff_check`] with an explicit difference formula.
pub fn finite_diff_check_with<F>(f: F, inputs: &[Tensor], eps: f64, stencil: Stencil) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {eps}")));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    if !tape.value(loss).all_finite() {
        return Err(Error::GradCheck("function value is not finite".into()));
    }
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, analytic: 0.0, numeric: 0.0, coordinates: 0 };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("inputs are tracked");
        if !analytic.all_finite() {
            return Err(Error::GradCheck(format!("non-finite analytic gradient for input {i}")));
        }
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            let mut at = |h: f64| -> Result<f64> {
                probe[i].data_mut()[j] = orig + h;
                let v = eval(&f, &probe)?;
                probe[i].data_mut()[j] = orig;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::GradCheck(format!("non-finite value probing input {i}[{j}]")))
                }
            };
            let numeric = match stencil {
                Stencil::Central => (at(eps)? - at(-eps)?) / (2.0 * eps),
                Stencil::FivePoint => {
                    (at(-2.0 * eps)? - 8.0 * at(-eps)? + 8.0 * at(eps)? - at(2.0 * eps)?) / (12.0 * eps)
                }
            };
            let a = analytic.data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((i, j));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
