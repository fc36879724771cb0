//! Helpers shared by unit tests.

pub use crate::sampling::band_limited_scalar;
use crate::spectral::RealField;

/// Max-norm difference relative to the max norm of `reference`.
pub fn rel_err(value: &RealField, reference: &RealField) -> f64 {
    let diff = value.combine(1.0, reference, -1.0).unwrap().max_abs();
    diff / reference.max_abs().max(f64::MIN_POSITIVE)
}
