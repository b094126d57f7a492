//! Central finite-difference oracle for analytic gradients.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(tensor index, element index)` of the worst element.
    pub worst_param: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub passed: bool,
}

/// Below this magnitude finite differences are dominated by rounding in the loss.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Compares `analytic[i][j]` against `(f(θ+h) - f(θ-h)) / 2h` for every element.
///
/// Relative error uses the denominator `max(|a|, |n|, GRAD_FLOOR)`. `params` are
/// perturbed in place and restored bit-exactly after each probe.
pub fn grad_check<F>(
    params: &mut [Tensor<f64>],
    analytic: &[Vec<f64>],
    mut f: F,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor<f64>]) -> Result<f64>,
{
    let shapes_match =
        params.len() == analytic.len() && params.iter().zip(analytic).all(|(p, a)| p.len() == a.len());
    if !shapes_match {
        return Err(Error::Dimension {
            op: "grad_check",
            detail: "analytic gradients do not match the parameter shapes".into(),
        });
    }
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        passed: true,
    };
    for ti in 0..params.len() {
        for (j, &a) in analytic[ti].iter().enumerate() {
            let orig = params[ti].data()[j];
            params[ti].data_mut()[j] = orig + h;
            let plus = f(params)?;
            params[ti].data_mut()[j] = orig - h;
            let minus = f(params)?;
            params[ti].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let denom = a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_err || rel.is_nan() {
                report.max_rel_err = rel;
                report.worst_param = (ti, j);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report.passed = report.max_rel_err < tol;
    Ok(report)
}
