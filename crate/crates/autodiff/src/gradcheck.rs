//! Central finite differences against a forward-only closure.

use crate::error::Result;
use crate::params::{ParamId, ParamStore};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error with a floor on the denominator so that gradients that
/// are both essentially zero compare as equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

/// `(f(θ + h e_k) - f(θ - h e_k)) / 2h` for one coordinate of one parameter.
/// The parameter is restored before returning.
pub fn central_difference<F>(
    store: &mut ParamStore,
    id: ParamId,
    index: usize,
    step: f64,
    mut f: F,
) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let original = store.get(id).data()[index];
    store.get_mut(id).data_mut()[index] = original + step;
    let plus = f(store);
    store.get_mut(id).data_mut()[index] = original - step;
    let minus = f(store);
    store.get_mut(id).data_mut()[index] = original;
    Ok((plus? - minus?) / (2.0 * step))
}

/// Same as [`central_difference`] for a free-standing vector input.
pub fn central_difference_vec<F>(x: &mut [f64], index: usize, step: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let original = x[index];
    x[index] = original + step;
    let plus = f(x);
    x[index] = original - step;
    let minus = f(x);
    x[index] = original;
    Ok((plus? - minus?) / (2.0 * step))
}
