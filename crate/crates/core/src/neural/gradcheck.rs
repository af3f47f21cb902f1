//! Central finite-difference checks against tape gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`, the
    /// floor being 1e-3 of the largest analytic entry of that input.
    pub max_rel_err: f64,
    pub worst_input: usize,
    pub worst_entry: usize,
    pub checked: usize,
}

/// Builds the scalar function `f` on a fresh tape for every evaluation and
/// compares its reverse-mode gradient to central differences with step `h`.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> GradReport
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    check_gradients_subset(inputs, h, usize::MAX, f)
}

/// As [`check_gradients`], probing at most `per_input` entries of each input
/// (evenly spaced) to bound the cost on large parameter tensors.
pub fn check_gradients_subset<F>(inputs: &[Tensor], h: f64, per_input: usize, f: F) -> GradReport
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.param(v.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.param(v.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out).expect("scalar output");

    let mut report = GradReport {
        max_rel_err: 0.0,
        worst_input: 0,
        worst_entry: 0,
        checked: 0,
    };
    let mut scratch: Vec<Tensor> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], input);
        let floor = 1e-3 * analytic.data().iter().fold(0.0f64, |m, x| m.max(x.abs())) + 1e-8;
        let n = input.len();
        let stride = (n / per_input.min(n).max(1)).max(1);
        for j in (0..n).step_by(stride) {
            let orig = input.data()[j];
            scratch[i].data_mut()[j] = orig + h;
            let plus = eval(&scratch);
            scratch[i].data_mut()[j] = orig - h;
            let minus = eval(&scratch);
            scratch[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[j];
            let scale = a.abs().max(numeric.abs()).max(floor);
            let rel = (a - numeric).abs() / scale;
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_input = i;
                report.worst_entry = j;
            }
        }
    }
    report
}
