//! Seeded band-limited random fields.
//!
//! Coefficients are drawn over the wavevector box `|k_j| <= band` in a fixed
//! order that does not depend on the grid resolution, so the same seed gives
//! the same continuous function on a grid and on any refinement of it.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spectral::{inverse_unchecked, FourierField, RealField, SpectralGrid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All integer wavevectors in the box `|k_j| <= band`, lexicographic order.
fn wavevector_box(n: usize, band: i64) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    let r = -band..=band;
    let r1 = if n >= 2 { -band..=band } else { 0..=0 };
    let r2 = if n >= 3 { -band..=band } else { 0..=0 };
    for a in r.clone() {
        for b in r1.clone() {
            for c in r2.clone() {
                out.push([a, b, c]);
            }
        }
    }
    out
}

fn is_positive_half(k: &[i64; 3]) -> bool {
    k.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0)
}

/// Mean-zero real Gaussian field with modes in `|k_j| <= band`, normalized to
/// unit mean square (`sum_k |c_k|^2 = 1`).
pub fn band_limited_coefficients(
    grid: &Arc<SpectralGrid>,
    band: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FourierField> {
    let n = grid.ndim();
    if band == 0 {
        return Err(Error::param("band must be at least 1"));
    }
    for &d in grid.dims() {
        if band >= d / 2 {
            return Err(Error::param(format!(
                "band {band} reaches the Nyquist mode of a {d}-node axis"
            )));
        }
    }
    let mut coeffs = vec![Complex64::default(); grid.len()];
    let mut total = 0.0;
    for k in wavevector_box(n, band as i64) {
        if !is_positive_half(&k) {
            continue;
        }
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let c = Complex64::new(re, im);
        let idx = mode_index(grid, &k[..n]);
        let jdx = grid.conjugate_index(idx);
        coeffs[idx] = c;
        coeffs[jdx] = c.conj();
        total += 2.0 * c.norm_sqr();
    }
    let scale = 1.0 / total.sqrt();
    for c in &mut coeffs {
        *c *= scale;
    }
    FourierField::new(grid.clone(), vec![coeffs])
}

fn mode_index(grid: &SpectralGrid, k: &[i64]) -> usize {
    let multi: Vec<usize> = k
        .iter()
        .zip(grid.dims())
        .map(|(&k, &d)| k.rem_euclid(d as i64) as usize)
        .collect();
    grid.flat_index(&multi)
}

/// Scalar field with unit mean square, see [`band_limited_coefficients`].
pub fn band_limited_field(
    grid: &Arc<SpectralGrid>,
    band: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RealField> {
    Ok(inverse_unchecked(&band_limited_coefficients(grid, band, rng)?))
}

/// Convenience: one scalar sample from a fresh generator.
pub fn band_limited_scalar(grid: &Arc<SpectralGrid>, band: usize, seed: u64) -> RealField {
    band_limited_field(grid, band, &mut rng(seed)).expect("valid band")
}

/// `ncomp` independent band-limited components.
pub fn band_limited_vector(
    grid: &Arc<SpectralGrid>,
    ncomp: usize,
    band: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RealField> {
    let comps = (0..ncomp)
        .map(|_| band_limited_field(grid, band, rng).map(|f| f.into_components().remove(0)))
        .collect::<Result<Vec<_>>>()?;
    RealField::new(grid.clone(), comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::forward_transform;

    #[test]
    fn same_seed_same_function_across_refinement() {
        let g = SpectralGrid::cubic(2, 16, 3.0).unwrap();
        let fine = g.refined(2).unwrap();
        let a = band_limited_scalar(&g, 3, 9);
        let b = band_limited_scalar(&fine, 3, 9);
        // coarse node (i, j) coincides with fine node (2i, 2j)
        for i in 0..16 {
            for j in 0..16 {
                let va = a.component(0)[g.flat_index(&[i, j])];
                let vb = b.component(0)[fine.flat_index(&[2 * i, 2 * j])];
                assert!((va - vb).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn unit_mean_square_and_zero_mean() {
        let g = SpectralGrid::cubic(3, 12, 1.0).unwrap();
        let f = band_limited_scalar(&g, 2, 4);
        let ms: f64 = f.component(0).iter().map(|v| v * v).sum::<f64>() / g.len() as f64;
        assert!((ms - 1.0).abs() < 1e-12);
        assert!(forward_transform(&f).component(0)[0].norm() < 1e-15);
    }

    #[test]
    fn band_must_stay_below_nyquist() {
        let g = SpectralGrid::cubic(1, 8, 1.0).unwrap();
        assert!(band_limited_field(&g, 4, &mut rng(0)).is_err());
        assert!(band_limited_field(&g, 0, &mut rng(0)).is_err());
        assert!(band_limited_field(&g, 3, &mut rng(0)).is_ok());
    }
}
