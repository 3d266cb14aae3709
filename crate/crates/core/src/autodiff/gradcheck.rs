use super::{Bound, ParamSet, Tape, Tensor, Var};
use crate::error::Result;

/// `|a - b| / max(1, |a|, |b|)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Compares the tape gradient of `f` at `x` with central differences of step
/// `h`, coordinate by coordinate, and returns the largest relative error.
///
/// Coordinates sitting on a relu kink are not excluded here; pick `x` away
/// from them (see [`Tape::min_relu_margin`]).
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut params = ParamSet::new();
    params.insert("x", x.clone());
    grad_check_params(|tape, bound| f(tape, bound["x"]), &params, h)
}

/// [`grad_check`] over every entry of a parameter set.
pub fn grad_check_params<F>(f: F, params: &ParamSet, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let loss = f(&mut tape, &bound)?;
    let analytic = tape.backward(loss, &bound)?.flatten();

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = tape.bind_frozen(p);
        let out = f(&mut tape, &bound)?;
        Ok(tape.value(out).item())
    };
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for (i, a) in analytic.iter().enumerate() {
        let orig = *probe.value_mut(i);
        *probe.value_mut(i) = orig + h;
        let plus = eval(&probe)?;
        *probe.value_mut(i) = orig - h;
        let minus = eval(&probe)?;
        *probe.value_mut(i) = orig;
        worst = worst.max(rel_error(*a, (plus - minus) / (2.0 * h)));
    }
    Ok(worst)
}

/// Smallest distance of any relu input from its kink when evaluating `f`.
pub fn relu_margin<F>(f: F, params: &ParamSet) -> Result<f64>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bound = tape.bind_frozen(params);
    f(&mut tape, &bound)?;
    Ok(tape.min_relu_margin())
}
