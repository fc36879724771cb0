//! Periodic grids, transforms and Fourier-multiplier operators.
//!
//! All homogeneous multipliers send the zero mode to zero. Multipliers with
//! an odd symbol (`i xi_j`, `-i xi_j / |xi|`) also vanish on the Nyquist
//! plane of their axis, where the sign of `xi_j` is ambiguous.

mod fields;
mod grid;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use fields::{FourierField, RealField};
pub use grid::SpectralGrid;

use crate::error::{Error, Result};

/// Hermitian-symmetry violations above this fraction of the largest
/// coefficient are rejected by [`inverse_transform`].
const SYMMETRY_TOL: f64 = 1e-10;

pub fn forward_transform(f: &RealField) -> FourierField {
    let grid = f.grid();
    let scale = 1.0 / grid.len() as f64;
    let comps = f
        .components()
        .iter()
        .map(|c| {
            let mut buf: Vec<Complex64> = c.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            grid.fft_forward(&mut buf);
            for v in &mut buf {
                *v *= scale;
            }
            buf
        })
        .collect();
    FourierField::new(grid.clone(), comps).expect("shape preserved by transform")
}

/// Inverse transform of Hermitian coefficients.
pub fn inverse_transform(f: &FourierField) -> Result<RealField> {
    let violation = f.hermitian_violation();
    if violation > SYMMETRY_TOL * f.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Symmetry {
            magnitude: violation,
        });
    }
    Ok(inverse_unchecked(f))
}

/// Inverse transform keeping only the real part, without the symmetry check.
pub(crate) fn inverse_unchecked(f: &FourierField) -> RealField {
    let grid = f.grid();
    let comps = f
        .components()
        .iter()
        .map(|c| {
            let mut buf = c.clone();
            grid.fft_inverse(&mut buf);
            buf.into_iter().map(|v| v.re).collect()
        })
        .collect();
    RealField::new(grid.clone(), comps).expect("shape preserved by transform")
}

/// `(-Delta)^s`, multiplier `|xi|^{2s}`.
pub fn fractional_laplacian(f: &FourierField, s: f64) -> Result<FourierField> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::param(format!(
            "fractional order must be positive, got {s}"
        )));
    }
    let sym = laplacian_symbol(f.grid(), s);
    Ok(f.map_modes(|i| Complex64::new(sym[i], 0.0)))
}

/// `|xi|^{2s}` per mode, zero at the zero mode.
pub fn laplacian_symbol(grid: &SpectralGrid, s: f64) -> Vec<f64> {
    grid.xi_squared()
        .iter()
        .map(|&q| if q == 0.0 { 0.0 } else { q.powf(s) })
        .collect()
}

/// Riesz transform along `axis`, multiplier `-i xi_j / |xi|`. In one dimension
/// this is the Hilbert transform.
pub fn riesz_transform(f: &FourierField, axis: usize) -> Result<FourierField> {
    let grid = f.grid().clone();
    if axis >= grid.ndim() {
        return Err(Error::param(format!(
            "Riesz axis {axis} out of range for dimension {}",
            grid.ndim()
        )));
    }
    let xi_sq = grid.xi_squared();
    Ok(f.map_modes(|i| {
        if xi_sq[i] == 0.0 || grid.is_nyquist(i, axis) {
            Complex64::default()
        } else {
            Complex64::new(0.0, -grid.frequency(i, axis) / xi_sq[i].sqrt())
        }
    }))
}

/// Partial derivative along `axis`, multiplier `i xi_j`.
pub fn partial(f: &FourierField, axis: usize) -> Result<FourierField> {
    let grid = f.grid().clone();
    if axis >= grid.ndim() {
        return Err(Error::param(format!(
            "axis {axis} out of range for dimension {}",
            grid.ndim()
        )));
    }
    Ok(f.map_modes(|i| {
        if grid.is_nyquist(i, axis) {
            Complex64::default()
        } else {
            Complex64::new(0.0, grid.frequency(i, axis))
        }
    }))
}

/// One spectral field per axis, the `j`-th carrying `i xi_j` applied to `f`.
pub fn gradient(f: &FourierField) -> Vec<FourierField> {
    (0..f.grid().ndim())
        .map(|j| partial(f, j).expect("axis in range"))
        .collect()
}

/// Sum of `partial_j` applied to the `j`-th entry.
pub fn divergence(v: &[FourierField]) -> Result<FourierField> {
    let first = v
        .first()
        .ok_or_else(|| Error::shape("divergence of an empty vector field"))?;
    if v.len() != first.grid().ndim() {
        return Err(Error::shape(format!(
            "divergence needs {} entries, got {}",
            first.grid().ndim(),
            v.len()
        )));
    }
    let mut acc = partial(first, 0)?;
    for (j, f) in v.iter().enumerate().skip(1) {
        acc = acc.combine(1.0, &partial(f, j)?, 1.0)?;
    }
    Ok(acc)
}

/// Mode truncation protecting polynomial products from aliasing.
///
/// `Quadratic` corresponds to 3/2-padding and `Cubic` to 2x-padding: with
/// inputs restricted to the retained band, the retained modes of a
/// quadratic (resp. cubic) nodal product are exact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DealiasPolicy {
    None,
    Quadratic,
    #[default]
    Cubic,
}

impl DealiasPolicy {
    fn degree(self) -> Option<usize> {
        match self {
            DealiasPolicy::None => None,
            DealiasPolicy::Quadratic => Some(2),
            DealiasPolicy::Cubic => Some(3),
        }
    }

    /// Largest retained `|k|` on an axis with `nodes` points.
    pub fn cutoff(self, nodes: usize) -> usize {
        match self.degree() {
            None => nodes / 2,
            // (degree + 1) |k| < nodes keeps every alias outside the band.
            Some(d) => nodes.div_ceil(d + 1) - 1,
        }
    }

    /// Retention mask over the flattened modes of `grid`.
    pub fn mask(self, grid: &SpectralGrid) -> Vec<bool> {
        let cut: Vec<i64> = grid.dims().iter().map(|&d| self.cutoff(d) as i64).collect();
        (0..grid.len())
            .map(|i| {
                self == DealiasPolicy::None
                    || (0..grid.ndim()).all(|j| grid.wavenumber(i, j).abs() <= cut[j])
            })
            .collect()
    }
}

impl fmt::Display for DealiasPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DealiasPolicy::None => "none",
            DealiasPolicy::Quadratic => "quadratic",
            DealiasPolicy::Cubic => "cubic",
        })
    }
}

impl FromStr for DealiasPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DealiasPolicy::None),
            "quadratic" => Ok(DealiasPolicy::Quadratic),
            "cubic" => Ok(DealiasPolicy::Cubic),
            other => Err(Error::param(format!("unknown dealias policy '{other}'"))),
        }
    }
}

pub fn dealias(f: &FourierField, policy: DealiasPolicy) -> FourierField {
    if policy == DealiasPolicy::None {
        return f.clone();
    }
    let mask = policy.mask(f.grid());
    f.map_modes(|i| {
        if mask[i] {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::default()
        }
    })
}

/// Apply `dealias` to a nodal field through a forward/inverse transform pair.
pub fn dealias_nodal(f: &RealField, policy: DealiasPolicy) -> RealField {
    if policy == DealiasPolicy::None {
        return f.clone();
    }
    inverse_unchecked(&dealias(&forward_transform(f), policy))
}

/// Real-space application of a spectral operator.
pub fn apply_nodal(
    f: &RealField,
    op: impl FnOnce(&FourierField) -> Result<FourierField>,
) -> Result<RealField> {
    Ok(inverse_unchecked(&op(&forward_transform(f))?))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::testing::{band_limited_scalar, rel_err};

    fn grid1(n: usize, l: f64) -> Arc<SpectralGrid> {
        SpectralGrid::new(&[n], &[l]).unwrap()
    }

    #[test]
    fn constant_maps_to_zero_mode() {
        let g = grid1(16, 3.0);
        let f = RealField::constant(g.clone(), &[3.0]);
        let fh = forward_transform(&f);
        for (i, c) in fh.component(0).iter().enumerate() {
            let want = if i == 0 { 3.0 } else { 0.0 };
            assert!((c - Complex64::new(want, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn cosine_has_half_amplitudes() {
        let l = 2.5;
        let g = grid1(32, l);
        let f = RealField::from_fn(g.clone(), |x| (2.0 * PI * x[0] / l).cos());
        let fh = forward_transform(&f);
        for i in 0..g.len() {
            let k = g.wavenumber(i, 0);
            let want = if k.abs() == 1 { 0.5 } else { 0.0 };
            assert!((fh.component(0)[i] - Complex64::new(want, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_and_single_mode_inverse() {
        let l = 4.0;
        let g = grid1(16, l);
        let z = FourierField::zeros(g.clone(), 2);
        let back = inverse_transform(&z).unwrap();
        assert_eq!(back.max_abs(), 0.0);

        let mut c = FourierField::zeros(g.clone(), 1);
        c.component_mut(0)[1] = Complex64::new(0.5, 0.0);
        c.component_mut(0)[15] = Complex64::new(0.5, 0.0);
        let f = inverse_transform(&c).unwrap();
        for i in 0..g.len() {
            let x = g.node_coords(i)[0];
            assert!((f.component(0)[i] - (2.0 * PI * x / l).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let g = grid1(8, 1.0);
        let mut c = FourierField::zeros(g, 1);
        c.component_mut(0)[1] = Complex64::new(1.0, 0.0);
        match inverse_transform(&c) {
            Err(Error::Symmetry { magnitude }) => assert!((magnitude - 1.0).abs() < 1e-15),
            other => panic!("expected symmetry error, got {other:?}"),
        }
    }

    #[test]
    fn half_laplacian_and_hilbert_on_cosine() {
        let l = 7.0;
        let g = grid1(64, l);
        let w = 2.0 * PI / l;
        let f = RealField::from_fn(g.clone(), |x| (w * x[0]).cos());
        let half = apply_nodal(&f, |h| fractional_laplacian(h, 0.5)).unwrap();
        let hil = apply_nodal(&f, |h| riesz_transform(h, 0)).unwrap();
        let grad = apply_nodal(&RealField::from_fn(g.clone(), |x| (w * x[0]).sin()), |h| {
            partial(h, 0)
        })
        .unwrap();
        for i in 0..g.len() {
            let x = g.node_coords(i)[0];
            assert!((half.component(0)[i] - w * (w * x).cos()).abs() < 1e-12);
            assert!((hil.component(0)[i] - (w * x).sin()).abs() < 1e-12);
            assert!((grad.component(0)[i] - w * (w * x).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_errors() {
        let g = SpectralGrid::new(&[8, 8], &[1.0, 1.0]).unwrap();
        let f = FourierField::zeros(g, 1);
        assert!(fractional_laplacian(&f, 0.0).is_err());
        assert!(fractional_laplacian(&f, -0.5).is_err());
        assert!(riesz_transform(&f, 2).is_err());
        assert!(riesz_transform(&f, 1).is_ok());
    }

    #[test]
    fn constant_is_annihilated() {
        let g = SpectralGrid::new(&[8, 6], &[1.0, 2.0]).unwrap();
        let f = forward_transform(&RealField::constant(g, &[2.5]));
        for s in [0.25, 0.5, 1.0, 2.0] {
            assert!(fractional_laplacian(&f, s).unwrap().max_abs() < 1e-11);
        }
        for v in gradient(&f) {
            assert!(v.max_abs() < 1e-12);
        }
    }

    #[test]
    fn nyquist_is_zeroed_by_odd_symbols() {
        let g = grid1(8, 1.0);
        let mut c = FourierField::zeros(g.clone(), 1);
        c.component_mut(0)[4] = Complex64::new(1.0, 0.0);
        assert_eq!(riesz_transform(&c, 0).unwrap().max_abs(), 0.0);
        assert_eq!(partial(&c, 0).unwrap().max_abs(), 0.0);
        assert!(fractional_laplacian(&c, 0.5).unwrap().max_abs() > 0.0);
    }

    #[test]
    fn semigroup_property() {
        for n in 1..=3 {
            let g = SpectralGrid::cubic(n, 16, 5.0).unwrap();
            let f = forward_transform(&band_limited_scalar(&g, 4, 11 + n as u64));
            let twice = fractional_laplacian(&fractional_laplacian(&f, 0.5).unwrap(), 0.5).unwrap();
            let once = fractional_laplacian(&f, 1.0).unwrap();
            assert!(rel_err(&inverse_unchecked(&twice), &inverse_unchecked(&once)) < 1e-12);
            let a = fractional_laplacian(&fractional_laplacian(&f, 0.3).unwrap(), 0.45).unwrap();
            let b = fractional_laplacian(&f, 0.75).unwrap();
            assert!(rel_err(&inverse_unchecked(&a), &inverse_unchecked(&b)) < 1e-12);
        }
    }

    #[test]
    fn riesz_squares_sum_to_minus_identity() {
        for n in 1..=3 {
            let g = SpectralGrid::cubic(n, 16, 3.0).unwrap();
            let f = band_limited_scalar(&g, 5, 3);
            let fh = forward_transform(&f);
            let mut acc = FourierField::zeros(g.clone(), 1);
            for j in 0..n {
                let r = riesz_transform(&riesz_transform(&fh, j).unwrap(), j).unwrap();
                acc = acc.combine(1.0, &r, 1.0).unwrap();
            }
            let back = inverse_unchecked(&acc);
            assert!(rel_err(&back, &f.scaled(-1.0)) < 1e-12);
        }
    }

    #[test]
    fn factorization_riesz_dot_gradient() {
        for n in 1..=3 {
            let g = SpectralGrid::cubic(n, 16, 2.0).unwrap();
            let fh = forward_transform(&band_limited_scalar(&g, 5, 8));
            let mut acc = FourierField::zeros(g.clone(), 1);
            for (j, dj) in gradient(&fh).iter().enumerate() {
                acc = acc.combine(1.0, &riesz_transform(dj, j).unwrap(), 1.0).unwrap();
            }
            let half = fractional_laplacian(&fh, 0.5).unwrap();
            assert!(rel_err(&inverse_unchecked(&acc), &inverse_unchecked(&half)) < 1e-12);
        }
    }

    #[test]
    fn divergence_of_gradient_is_laplacian() {
        for n in 1..=3 {
            let g = SpectralGrid::new(&vec![12; n], &vec![1.5; n]).unwrap();
            let fh = forward_transform(&band_limited_scalar(&g, 4, 21));
            let lap = divergence(&gradient(&fh)).unwrap();
            let neg = fractional_laplacian(&fh, 1.0).unwrap();
            let a = inverse_unchecked(&lap);
            let b = inverse_unchecked(&neg).scaled(-1.0);
            assert!(rel_err(&a, &b) < 1e-12);
        }
    }

    #[test]
    fn dealias_cutoffs() {
        assert_eq!(DealiasPolicy::None.cutoff(512), 256);
        assert_eq!(DealiasPolicy::Quadratic.cutoff(512), 170);
        assert_eq!(DealiasPolicy::Cubic.cutoff(512), 127);
        assert_eq!(DealiasPolicy::Cubic.cutoff(16), 3);
        let g = grid1(16, 1.0);
        let f = forward_transform(&band_limited_scalar(&g, 3, 1));
        for p in [DealiasPolicy::None, DealiasPolicy::Quadratic, DealiasPolicy::Cubic] {
            let d = dealias(&f, p);
            let diff = d.combine(1.0, &f, -1.0).unwrap();
            assert!(diff.max_abs() < 1e-16);
        }
        assert_eq!("cubic".parse::<DealiasPolicy>().unwrap(), DealiasPolicy::Cubic);
        assert!("septic".parse::<DealiasPolicy>().is_err());
    }

    #[test]
    fn cubed_mode_is_alias_free() {
        let l = 2.0 * PI;
        let n = 64;
        let g = grid1(n, l);
        let cut = DealiasPolicy::Cubic.cutoff(n) as i64;
        for k0 in 1..=cut {
            let w = 2.0 * PI * k0 as f64 / l;
            let f = RealField::from_fn(g.clone(), |x| (w * x[0]).cos());
            let fh = dealias(&forward_transform(&f), DealiasPolicy::Cubic);
            let f = inverse_unchecked(&fh);
            let cube = RealField::new(
                g.clone(),
                vec![f.component(0).iter().map(|v| v * v * v).collect()],
            )
            .unwrap();
            let got = dealias(&forward_transform(&cube), DealiasPolicy::Cubic);
            // cos^3 = (3 cos(k x) + cos(3 k x)) / 4
            let mut exact = FourierField::zeros(g.clone(), 1);
            for i in 0..g.len() {
                let k = g.wavenumber(i, 0).abs();
                let mut v = 0.0;
                if k == k0 {
                    v += 3.0 / 8.0;
                }
                if k == 3 * k0 && k <= cut {
                    v += 1.0 / 8.0;
                }
                exact.component_mut(0)[i] = Complex64::new(v, 0.0);
            }
            let diff = got.combine(1.0, &exact, -1.0).unwrap();
            assert!(diff.max_abs() < 1e-12, "k0={k0}: {}", diff.max_abs());
        }
    }
}
