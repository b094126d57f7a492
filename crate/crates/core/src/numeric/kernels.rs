//! Forward kernels shared by the autodiff graph and the loss/inference code.
//!
//! Every kernel works on row-major slices so the same arithmetic backs both
//! the differentiable path and the plain evaluation helpers.

use super::tensor::Scalar;
use crate::error::{Error, Result};
use crate::model::mask::AttentionMask;

pub fn softmax_rows<T: Scalar>(
    x: &[T],
    rows: usize,
    cols: usize,
    mask: Option<&AttentionMask>,
    out: &mut [T],
) -> Result<()> {
    if let Some(m) = mask {
        if m.rows() != rows || m.cols() != cols {
            return Err(Error::Dimension {
                op: "softmax_rows",
                detail: format!(
                    "mask is {}x{}, scores are {rows}x{cols}",
                    m.rows(),
                    m.cols()
                ),
            });
        }
    }
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let dst = &mut out[r * cols..(r + 1) * cols];
        let allowed = |c: usize| mask.is_none_or(|m| m.allowed(r, c));
        let mut max = T::neg_infinity();
        for (c, &v) in row.iter().enumerate() {
            if allowed(c) && v > max {
                max = v;
            }
        }
        if max == T::neg_infinity() {
            return Err(Error::DegenerateMask { row: r });
        }
        let mut sum = T::zero();
        for (c, (&v, d)) in row.iter().zip(dst.iter_mut()).enumerate() {
            if allowed(c) {
                let e = (v - max).exp();
                *d = e;
                sum = sum + e;
            } else {
                *d = T::zero();
            }
        }
        let inv = sum.recip();
        for d in dst.iter_mut() {
            *d = *d * inv;
        }
    }
    Ok(())
}

/// Normalizes each length-`d` row; returns `(x_hat, rstd)` for the backward pass.
pub fn layer_norm<T: Scalar>(
    x: &[T],
    d: usize,
    gamma: &[T],
    beta: &[T],
    eps: T,
    out: &mut [T],
) -> (Vec<T>, Vec<T>) {
    let rows = x.len() / d;
    let inv_d = T::from_usize(d).unwrap().recip();
    let mut x_hat = vec![T::zero(); x.len()];
    let mut rstd = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().fold(T::zero(), |a, &v| a + v) * inv_d;
        let var = row
            .iter()
            .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
            * inv_d;
        let rs = (var + eps).sqrt().recip();
        rstd.push(rs);
        for c in 0..d {
            let xh = (row[c] - mean) * rs;
            x_hat[r * d + c] = xh;
            out[r * d + c] = gamma[c] * xh + beta[c];
        }
    }
    (x_hat, rstd)
}

/// Sum of `-log softmax(row)[target]` over rows that carry a target.
///
/// Rows with `None` are never read, so their logits cannot influence the result.
pub fn masked_cross_entropy<T: Scalar>(
    logits: &[T],
    cols: usize,
    targets: &[Option<usize>],
) -> Result<T> {
    if logits.len() != targets.len() * cols {
        return Err(Error::Dimension {
            op: "cross_entropy",
            detail: format!(
                "{} logits for {} rows of width {cols}",
                logits.len(),
                targets.len()
            ),
        });
    }
    let mut total = T::zero();
    for (r, t) in targets.iter().enumerate() {
        let Some(t) = *t else { continue };
        if t >= cols {
            return Err(Error::Index {
                index: t,
                extent: cols,
            });
        }
        let row = &logits[r * cols..(r + 1) * cols];
        total = total + row_nll(row, t);
    }
    Ok(total)
}

fn row_nll<T: Scalar>(row: &[T], target: usize) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let sum = row.iter().fold(T::zero(), |a, &v| a + (v - max).exp());
    sum.ln() + max - row[target]
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// `tanh(sqrt(2/pi) (x + 0.044715 x³))`, shared by the GELU value and derivative.
pub fn gelu_tanh<T: Scalar>(x: T) -> T {
    let c = T::from_f64_lossy(GELU_C);
    let k = T::from_f64_lossy(0.044715);
    (c * (x + k * x * x * x)).tanh()
}

pub fn gelu_from_tanh<T: Scalar>(x: T, th: T) -> T {
    T::from_f64_lossy(0.5) * x * (T::one() + th)
}

pub fn gelu_grad_from_tanh<T: Scalar>(x: T, th: T) -> T {
    let c = T::from_f64_lossy(GELU_C);
    let k = T::from_f64_lossy(0.044715);
    let half = T::from_f64_lossy(0.5);
    let du = c * (T::one() + T::from_f64_lossy(3.0) * k * x * x);
    half * (T::one() + th) + half * x * (T::one() - th * th) * du
}

pub fn gelu<T: Scalar>(x: T) -> T {
    gelu_from_tanh(x, gelu_tanh(x))
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    gelu_grad_from_tanh(x, gelu_tanh(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_equal_scores_is_uniform() {
        let mut out = [0.0; 3];
        softmax_rows(&[0.0f64, 0.0, 0.0], 1, 3, None, &mut out).unwrap();
        for v in out {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_scores() {
        let mut out = [0.0; 2];
        softmax_rows(&[1000.0f64, 1000.0], 1, 2, None, &mut out).unwrap();
        assert_eq!(out, [0.5, 0.5]);
    }

    #[test]
    fn masked_entry_is_exactly_zero() {
        let mask = AttentionMask::from_rows(vec![vec![true, false]]).unwrap();
        let mut out = [0.0; 2];
        softmax_rows(&[5.0f64, 9.0], 1, 2, Some(&mask), &mut out).unwrap();
        assert_eq!(out, [1.0, 0.0]);
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let v = 7;
        let loss = masked_cross_entropy(&vec![0.3f64; v], v, &[Some(2)]).unwrap();
        assert!((loss - (v as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_target_has_vanishing_loss() {
        let mut logits = vec![0.0f64; 5];
        logits[3] = 40.0;
        let loss = masked_cross_entropy(&logits, 5, &[Some(3)]).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn target_out_of_range_is_index_error() {
        let err = masked_cross_entropy(&[0.0f64; 4], 4, &[Some(4)]).unwrap_err();
        assert!(matches!(err, Error::Index { index: 4, extent: 4 }));
    }

    #[test]
    fn gelu_derivative_matches_central_difference() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let num = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((num - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }
}
