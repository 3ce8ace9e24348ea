use crate::core_math::Tensor;
use crate::error::{Error, Result};

/// Central-difference step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Largest per-coordinate relative error between `analytic_grad` and a central
/// difference estimate of the gradient of `f` at `point`.
pub fn gradient_check<F>(mut f: F, point: &Tensor, analytic_grad: &Tensor) -> Result<f64>
where
    F: FnMut(&Tensor) -> f64,
{
    if !point.same_shape(analytic_grad) {
        return Err(Error::contract(format!(
            "gradient shape {:?} does not match point shape {:?}",
            analytic_grad.shape(),
            point.shape()
        )));
    }
    let mut probe = point.clone();
    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let x0 = point.data()[i];
        probe.data_mut()[i] = x0 + FD_STEP;
        let plus = f(&probe);
        probe.data_mut()[i] = x0 - FD_STEP;
        let minus = f(&probe);
        probe.data_mut()[i] = x0;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic_grad.data()[i], numeric));
    }
    Ok(worst)
}
