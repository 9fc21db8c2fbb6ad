//! Central finite-difference checking of graph gradients.

use crate::error::NnError;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Largest elementwise discrepancy found by [`check_gradients`].
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

/// Compares analytic gradients of the scalar built by `f` with central
/// differences of step `h`, Richardson-extrapolated with step `h/2`. The relative error uses
/// `|a − n| / max(|a|, |n|, floor)`.
///
/// `f` must be deterministic: reseed any randomness inside it.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], h: f64, floor: f64, f: F) -> Result<GradCheck, NnError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, NnError>,
{
    let eval = |ts: &[Tensor<f64>]| -> Result<f64, NnError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.input(t.clone())).collect();
        let y = f(&mut g, &vars)?;
        Ok(g.value(y).data()[0])
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let y = f(&mut g, &vars)?;
    let analytic = g.backward(y, &vars)?;
    let mut report = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    let mut work = inputs.to_vec();
    for (t, grad) in analytic.iter().enumerate() {
        for e in 0..work[t].len() {
            let orig = work[t].data()[e];
            let mut central = |step: f64| -> Result<f64, NnError> {
                work[t].data_mut()[e] = orig + step;
                let plus = eval(&work)?;
                work[t].data_mut()[e] = orig - step;
                let minus = eval(&work)?;
                work[t].data_mut()[e] = orig;
                Ok((plus - minus) / (2.0 * step))
            };
            let coarse = central(h)?;
            let fine = central(h / 2.0)?;
            // Richardson extrapolation cancels the O(h²) truncation term.
            let numeric = (4.0 * fine - coarse) / 3.0;
            let a = grad.data()[e];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(floor);
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}
