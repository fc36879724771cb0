//! Seminorms, Lebesgue norms, BMO, energies and the commutators built from
//! Riesz transforms and quarter Laplacians.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{cross, SphereField};
use crate::spectral::{
    dealias, forward_transform, fractional_laplacian, gradient, inverse_unchecked, partial,
    riesz_transform, DealiasPolicy, FourierField, RealField,
};
use crate::util::pairwise_sum;

/// One diagnostic sample along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    /// `E(u) = 1/2 ||u||^2_{H^{1/2}}`.
    pub energy: f64,
    /// `E_eps(u) = 1/2 (eps ||grad^nu u||^2 + ||u||^2_{H^{1/2}})`.
    pub energy_eps: f64,
    /// `(s, ||u||_{H^s})` for the configured orders.
    pub seminorms: Vec<(f64, f64)>,
    pub dist_l2: f64,
    pub dist_linf: f64,
    /// Weighted dissipation `c * int_0^t ||d_t u||^2`.
    pub dissipation: f64,
    /// Largest pre-renormalization `| |u| - 1 |` since the previous row.
    pub drift: f64,
    /// `||grad u||_{H^{(n-1)/2}}`.
    pub grad_seminorm: f64,
}

impl DiagnosticsRow {
    pub fn seminorm(&self, s: f64) -> Option<f64> {
        self.seminorms
            .iter()
            .find(|(o, _)| (o - s).abs() < 1e-12)
            .map(|&(_, v)| v)
    }
}

/// `||f||_{H^s}` from spectral coefficients, all components, zero mode excluded.
pub fn seminorm_spectral(f: &FourierField, s: f64) -> f64 {
    seminorm_sq_spectral(f, s).sqrt()
}

pub fn seminorm_sq_spectral(f: &FourierField, s: f64) -> f64 {
    let grid = f.grid();
    let xi_sq = grid.xi_squared();
    let weights: Vec<f64> = xi_sq
        .iter()
        .map(|&q| if q == 0.0 { 0.0 } else { q.powf(s) })
        .collect();
    let terms: Vec<f64> = f
        .components()
        .iter()
        .flat_map(|c| c.iter().zip(&weights).map(|(v, w)| w * v.norm_sqr()))
        .collect();
    pairwise_sum(&terms) * grid.volume()
}

/// Homogeneous Sobolev seminorm `||(-Delta)^{s/2} f||_{L^2}`.
pub fn sobolev_seminorm(f: &RealField, s: f64) -> f64 {
    seminorm_spectral(&forward_transform(f), s)
}

/// Inhomogeneous `H^s` norm, `(||f||^2_{L^2} + ||f||^2_{H^s})^{1/2}`.
pub fn sobolev_norm(f: &RealField, s: f64) -> f64 {
    let fh = forward_transform(f);
    (l2_sq_spectral(&fh) + seminorm_sq_spectral(&fh, s)).sqrt()
}

fn l2_sq_spectral(f: &FourierField) -> f64 {
    let terms: Vec<f64> = f
        .components()
        .iter()
        .flat_map(|c| c.iter().map(|v| v.norm_sqr()))
        .collect();
    pairwise_sum(&terms) * f.grid().volume()
}

/// Nodal-quadrature `L^p` norm of the pointwise Euclidean length; `p` may be
/// `f64::INFINITY`.
pub fn lp_norm(f: &RealField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::param(format!("L^p exponent must be >= 1, got {p}")));
    }
    let mags = f.magnitudes();
    if p.is_infinite() {
        return Ok(mags.iter().fold(0.0f64, |m, v| m.max(*v)));
    }
    let terms: Vec<f64> = if p == 2.0 {
        mags.iter().map(|v| v * v).collect()
    } else {
        mags.iter().map(|v| v.powf(p)).collect()
    };
    Ok((pairwise_sum(&terms) * f.grid().cell_volume()).powf(1.0 / p))
}

fn infinite_or_sum(p: f64, mags: &[f64], cell: f64) -> f64 {
    if p.is_infinite() {
        mags.iter().fold(0.0f64, |m, v| m.max(*v))
    } else {
        let terms: Vec<f64> = mags.iter().map(|v| v.powf(p)).collect();
        (pairwise_sum(&terms) * cell).powf(1.0 / p)
    }
}

/// Pointwise Frobenius norm of the tensor of all `order`-th partial derivatives.
pub fn derivative_magnitude(f: &RealField, order: usize) -> RealField {
    let grid = f.grid().clone();
    let n = grid.ndim();
    let mut acc = vec![0.0; grid.len()];
    let fh = forward_transform(f);
    // every ordered tuple of axes; repeated entries of the symmetric tensor
    // are counted with their multiplicity
    let tuples = n.pow(order as u32);
    for t in 0..tuples {
        let mut d = fh.clone();
        let mut rest = t;
        for _ in 0..order {
            d = partial(&d, rest % n).expect("axis in range");
            rest /= n;
        }
        let nodal = inverse_unchecked(&d);
        for comp in nodal.components() {
            for (a, v) in acc.iter_mut().zip(comp) {
                *a += v * v;
            }
        }
    }
    let mags = acc.into_iter().map(f64::sqrt).collect();
    RealField::new(grid, vec![mags]).expect("grid shape")
}

/// `||grad^order f||_{L^p}`.
pub fn derivative_lp_norm(f: &RealField, order: usize, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::param(format!("L^p exponent must be >= 1, got {p}")));
    }
    let m = derivative_magnitude(f, order);
    Ok(infinite_or_sum(p, m.component(0), f.grid().cell_volume()))
}

/// Largest mean oscillation over the dyadic cube family.
///
/// Level `j` uses cubes with `N_a / 2^j` nodes along axis `a` (at least 4),
/// placed at every multiple of half a side length with periodic wrap-around.
pub fn bmo_norm(f: &RealField) -> Result<f64> {
    if f.ncomp() != 1 {
        return Err(Error::shape("BMO norm is defined for scalar fields"));
    }
    let grid = f.grid();
    let dims = grid.dims();
    let mut best = 0.0f64;
    let mut level = 0u32;
    loop {
        let sides: Vec<usize> = dims.iter().map(|&d| d >> level).collect();
        if sides.iter().any(|&s| s < 4) {
            break;
        }
        let steps: Vec<usize> = sides.iter().map(|&s| (s / 2).max(1)).collect();
        best = best.max(max_oscillation(f, &sides, &steps));
        level += 1;
    }
    Ok(best)
}

/// Largest mean oscillation over boxes with the given side (in nodes) and
/// corner positions on the lattice `steps`, wrapping periodically.
pub fn max_oscillation(f: &RealField, sides: &[usize], steps: &[usize]) -> f64 {
    let grid = f.grid();
    let dims = grid.dims();
    let n = grid.ndim();
    let data = f.component(0);
    let mut d3 = [1usize; 3];
    let mut s3 = [1usize; 3];
    let mut st3 = [1usize; 3];
    d3[..n].copy_from_slice(&dims[..n]);
    s3[..n].copy_from_slice(&sides[..n]);
    st3[..n].copy_from_slice(&steps[..n]);
    let at = |i: [usize; 3]| -> f64 {
        let flat = (i[0] * d3[1] + i[1]) * d3[2] + i[2];
        data[flat]
    };
    let count = (s3[0] * s3[1] * s3[2]) as f64;
    let mut best = 0.0f64;
    let mut vals = Vec::with_capacity(s3[0] * s3[1] * s3[2]);
    for o0 in (0..d3[0]).step_by(st3[0]) {
        for o1 in (0..d3[1]).step_by(st3[1]) {
            for o2 in (0..d3[2]).step_by(st3[2]) {
                vals.clear();
                for a in 0..s3[0] {
                    for b in 0..s3[1] {
                        for c in 0..s3[2] {
                            vals.push(at([
                                (o0 + a) % d3[0],
                                (o1 + b) % d3[1],
                                (o2 + c) % d3[2],
                            ]));
                        }
                    }
                }
                let mean = pairwise_sum(&vals) / count;
                let dev: Vec<f64> = vals.iter().map(|v| (v - mean).abs()).collect();
                best = best.max(pairwise_sum(&dev) / count);
            }
        }
    }
    best
}

/// `E(u) = 1/2 ||u||^2_{H^{1/2}}`.
pub fn energy(u: &SphereField) -> f64 {
    0.5 * seminorm_sq_spectral(&forward_transform(u.values()), 0.5)
}

/// `E_eps(u) = 1/2 (eps ||grad^nu u||^2_{L^2} + ||u||^2_{H^{1/2}})`.
pub fn energy_eps(u: &SphereField, eps: f64, nu: u32) -> Result<f64> {
    let uh = forward_transform(u.values());
    energy_eps_spectral(&uh, eps, nu)
}

pub fn energy_eps_spectral(uh: &FourierField, eps: f64, nu: u32) -> Result<f64> {
    check_regularizer(eps, nu)?;
    let half = seminorm_sq_spectral(uh, 0.5);
    let reg = if eps == 0.0 {
        0.0
    } else {
        eps * seminorm_sq_spectral(uh, nu as f64)
    };
    Ok(0.5 * (reg + half))
}

pub(crate) fn check_regularizer(eps: f64, nu: u32) -> Result<()> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::param(format!("regularization must be >= 0, got {eps}")));
    }
    if !(nu == 1 || nu == 2) {
        return Err(Error::param(format!("regularizer order must be 1 or 2, got {nu}")));
    }
    Ok(())
}

fn product(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn scalar(f: &RealField, data: Vec<f64>) -> RealField {
    RealField::new(f.grid().clone(), vec![data]).expect("grid shape")
}

/// `[R_j, b] g = R_j(b g) - b R_j g` for scalar nodal `b`, `g`.
pub fn riesz_commutator_scalar(
    b: &[f64],
    g: &RealField,
    axis: usize,
    policy: DealiasPolicy,
) -> Result<RealField> {
    let bg = forward_transform(&scalar(g, product(b, g.component(0))));
    let rj_bg = riesz_transform(&bg, axis)?;
    let rj_g = inverse_unchecked(&riesz_transform(&forward_transform(g), axis)?);
    let b_rj_g = forward_transform(&scalar(g, product(b, rj_g.component(0))));
    let diff = rj_bg.combine(1.0, &b_rj_g, -1.0)?;
    Ok(inverse_unchecked(&dealias(&diff, policy)))
}

/// Per-pair terms `[R_j, b_k] partial_j f_k`, indexed `[j][k]`.
pub fn commutator_riesz_pairs(
    b: &RealField,
    f: &RealField,
    policy: DealiasPolicy,
) -> Result<Vec<Vec<RealField>>> {
    b.check_compatible(f)?;
    let n = f.grid().ndim();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let mut row = Vec::with_capacity(f.ncomp());
        for k in 0..f.ncomp() {
            let fk = scalar(f, f.component(k).to_vec());
            let dfk = inverse_unchecked(&partial(&forward_transform(&fk), j)?);
            row.push(riesz_commutator_scalar(b.component(k), &dfk, j, policy)?);
        }
        out.push(row);
    }
    Ok(out)
}

/// Tensorial commutator `[R, b] grad f = sum_{j,k} [R_j, b_k] partial_j f_k`.
pub fn commutator_riesz(b: &RealField, f: &RealField, policy: DealiasPolicy) -> Result<RealField> {
    let pairs = commutator_riesz_pairs(b, f, policy)?;
    let mut acc = vec![0.0; f.len()];
    for term in pairs.iter().flatten() {
        for (a, v) in acc.iter_mut().zip(term.component(0)) {
            *a += v;
        }
    }
    Ok(scalar(f, acc))
}

/// `[(-Delta)^{1/4}, a] f = (-Delta)^{1/4}(a f) - a (-Delta)^{1/4} f` for scalars.
pub fn quarter_commutator_scalar(
    a: &RealField,
    f: &RealField,
    policy: DealiasPolicy,
) -> Result<RealField> {
    let af = forward_transform(&scalar(f, product(a.component(0), f.component(0))));
    let q_af = fractional_laplacian(&af, 0.25)?;
    let qf = inverse_unchecked(&fractional_laplacian(&forward_transform(f), 0.25)?);
    let a_qf = forward_transform(&scalar(f, product(a.component(0), qf.component(0))));
    Ok(inverse_unchecked(&dealias(
        &q_af.combine(1.0, &a_qf, -1.0)?,
        policy,
    )))
}

/// `[(-Delta)^{1/4}, Omega_a] f = (-Delta)^{1/4}(a x f) - a x (-Delta)^{1/4} f`.
pub fn commutator_quarter(
    a: &SphereField,
    f: &RealField,
    policy: DealiasPolicy,
) -> Result<RealField> {
    if a.target_dim() != 2 {
        return Err(Error::UnsupportedTarget { m: a.target_dim() });
    }
    let axf = forward_transform(&cross(a.values(), f)?);
    let q_axf = fractional_laplacian(&axf, 0.25)?;
    let qf = inverse_unchecked(&fractional_laplacian(&forward_transform(f), 0.25)?);
    let a_x_qf = forward_transform(&cross(a.values(), &qf)?);
    Ok(inverse_unchecked(&dealias(
        &q_axf.combine(1.0, &a_x_qf, -1.0)?,
        policy,
    )))
}

/// `u . (-Delta)^{1/2} u`, the normal component of the half-Laplacian.
pub fn normal_half_laplacian(u: &RealField) -> RealField {
    let h = inverse_unchecked(
        &fractional_laplacian(&forward_transform(u), 0.5).expect("positive order"),
    );
    u.dot(&h).expect("same shape")
}

/// Nodal `grad f` for each component, indexed `[axis]`, each with the
/// components of `f`.
pub fn nodal_gradient(f: &RealField) -> Vec<RealField> {
    let fh = forward_transform(f);
    gradient(&fh).iter().map(inverse_unchecked).collect()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::Arc;

    use super::*;
    use crate::field::{make_great_circle, make_perturbation};
    use crate::sampling::{band_limited_vector, rng};
    use crate::spectral::SpectralGrid;
    use crate::testing::{band_limited_scalar, rel_err};

    fn line(n: usize, l: f64) -> Arc<SpectralGrid> {
        SpectralGrid::new(&[n], &[l]).unwrap()
    }

    #[test]
    fn seminorm_of_constant_and_sine() {
        let l = 5.0;
        let g = line(64, l);
        let c = RealField::constant(g.clone(), &[2.0]);
        assert_eq!(sobolev_seminorm(&c, 0.7), 0.0);
        let a = 1.3;
        let f = RealField::from_fn(g.clone(), |x| a * (2.0 * PI * x[0] / l).sin());
        for s in [0.0, 0.5, 1.0, 1.5] {
            let want = (2.0 * PI / l).powf(s) * a * (l / 2.0).sqrt();
            assert!((sobolev_seminorm(&f, s) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn seminorm_matches_quadrature_of_fractional_power() {
        for n in 1..=3 {
            let g = SpectralGrid::new(&vec![16; n], &vec![3.0; n]).unwrap();
            let f = band_limited_scalar(&g, 4, 40 + n as u64);
            let q = inverse_unchecked(&fractional_laplacian(&forward_transform(&f), 0.25).unwrap());
            let quad = lp_norm(&q, 2.0).unwrap();
            let spec = sobolev_seminorm(&f, 0.5);
            assert!((quad - spec).abs() < 1e-10 * spec);
        }
    }

    #[test]
    fn lp_examples() {
        let l = 2.0;
        let g = SpectralGrid::new(&[32, 16], &[l, 3.0]).unwrap();
        let v = g.volume();
        let c = RealField::constant(g.clone(), &[-1.5]);
        for p in [1.0, 2.0, 3.5] {
            let got = lp_norm(&c, p).unwrap();
            assert!((got - 1.5 * v.powf(1.0 / p)).abs() < 1e-12);
        }
        assert_eq!(lp_norm(&c, f64::INFINITY).unwrap(), 1.5);
        assert!(lp_norm(&c, 0.5).is_err());

        let g1 = line(64, l);
        let s = RealField::from_fn(g1.clone(), |x| (2.0 * PI * x[0] / l).sin());
        let want = (3.0 * l / 8.0).powf(0.25);
        assert!((lp_norm(&s, 4.0).unwrap() - want).abs() < 1e-13);

        // p = 2 vs the zero-mode-free seminorm plus the mean
        let f = RealField::from_fn(g1, |x| 0.7 + (2.0 * PI * x[0] / l).cos());
        let l2 = lp_norm(&f, 2.0).unwrap();
        let s0 = sobolev_seminorm(&f, 0.0);
        assert!((l2 * l2 - (s0 * s0 + 0.49 * l)).abs() < 1e-12);
    }

    fn brute_force_bmo(f: &RealField) -> f64 {
        let n = f.len();
        let mut best = 0.0f64;
        for w in 4..=n {
            best = best.max(max_oscillation(f, &[w], &[1]));
        }
        best
    }

    #[test]
    fn bmo_examples() {
        let l = 1.0;
        let g = line(64, l);
        let c = RealField::constant(g.clone(), &[4.0]);
        assert_eq!(bmo_norm(&c).unwrap(), 0.0);

        let s = RealField::from_fn(g.clone(), |x| (2.0 * PI * x[0] / l).sin());
        let dyadic = bmo_norm(&s).unwrap();
        let brute = brute_force_bmo(&s);
        assert!(dyadic <= brute + 1e-15);
        assert!(dyadic >= 0.5 * brute, "dyadic {dyadic} brute {brute}");
        assert!(dyadic <= 2.0 * lp_norm(&s, f64::INFINITY).unwrap());

        for seed in 0..5 {
            let f = band_limited_scalar(&g, 6, seed);
            let b = bmo_norm(&f).unwrap();
            assert!(b <= 2.0 * lp_norm(&f, f64::INFINITY).unwrap());
            assert!(b >= 0.5 * brute_force_bmo(&f));
        }
    }

    #[test]
    fn bmo_in_higher_dimensions() {
        let g = SpectralGrid::cubic(3, 8, 1.0).unwrap();
        let f = band_limited_scalar(&g, 2, 3);
        let b = bmo_norm(&f).unwrap();
        assert!(b > 0.0 && b <= 2.0 * lp_norm(&f, f64::INFINITY).unwrap());
    }

    #[test]
    fn energy_of_small_great_circle() {
        let l = 2.0 * PI * 8.0;
        let g = line(512, l);
        let a = 0.1;
        let theta = RealField::from_fn(g.clone(), |x| a * (2.0 * PI * x[0] / l).sin());
        let u = make_great_circle(&theta).unwrap();
        let e = energy(&u);
        let lin = a * a * PI / 2.0;
        assert!((e - lin).abs() < 0.02 * lin, "E={e}, linearized {lin}");
    }

    #[test]
    fn degree_one_equator_map_has_energy_pi() {
        let l = 10.0;
        let g = line(128, l);
        let theta = RealField::from_fn(g, |x| 2.0 * PI * x[0] / l);
        let e = energy(&make_great_circle(&theta).unwrap());
        assert!((e - PI).abs() < 1e-12);
    }

    #[test]
    fn regularized_energy() {
        let l = 2.0 * PI * 8.0;
        let g = line(512, l);
        let u = make_perturbation(&g, &[0.0, 0.0, 1.0], 0.05, 6, 2).unwrap().field;
        assert_eq!(energy_eps(&u, 0.0, 1).unwrap(), energy(&u));
        assert!(energy_eps(&u, 0.1, 3).is_err());
        assert!(energy_eps(&u, -0.1, 1).is_err());
        let q = SphereField::constant(g.clone(), &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(energy_eps(&q, 0.3, 2).unwrap(), 0.0);

        // eps-term of a small single-mode great circle: eps/2 (2 pi / L)^2 a^2 (L/2)
        let a = 1e-3;
        let eps = 0.2;
        let theta = RealField::from_fn(g.clone(), |x| a * (2.0 * PI * x[0] / l).sin());
        let u = make_great_circle(&theta).unwrap();
        let term = energy_eps(&u, eps, 1).unwrap() - energy(&u);
        let want = eps * 0.5 * (2.0 * PI / l).powi(2) * a * a * (l / 2.0);
        assert!((term - want).abs() < 1e-5 * want);
    }

    #[test]
    fn energy_is_rotation_invariant() {
        let g = SpectralGrid::cubic(2, 16, 4.0).unwrap();
        let u = make_perturbation(&g, &[0.0, 0.0, 1.0], 0.4, 3, 8).unwrap().field;
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rot = [c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0];
        let (c2, s2) = (1.1f64.cos(), 1.1f64.sin());
        let rot2 = [1.0, 0.0, 0.0, 0.0, c2, -s2, 0.0, s2, c2];
        let v = u.rotated(&rot).unwrap().rotated(&rot2).unwrap();
        assert!((energy(&u) - energy(&v)).abs() < 1e-12 * energy(&u));
    }

    #[test]
    fn commutator_with_constant_vanishes() {
        let g = SpectralGrid::cubic(2, 16, 1.0).unwrap();
        let b = RealField::constant(g.clone(), &[0.3, -1.0]);
        let f = band_limited_vector(&g, 2, 3, &mut rng(1)).unwrap();
        let c = commutator_riesz(&b, &f, DealiasPolicy::Quadratic).unwrap();
        assert!(c.max_abs() < 1e-13);

        let a = SphereField::constant(g.clone(), &[0.0, 1.0, 0.0]).unwrap();
        let f3 = band_limited_vector(&g, 3, 3, &mut rng(2)).unwrap();
        assert!(commutator_quarter(&a, &f3, DealiasPolicy::Quadratic).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn hilbert_commutator_two_mode_closed_form() {
        let l = 2.0 * PI;
        let g = line(32, l);
        let b = RealField::from_fn(g.clone(), |x| x[0].cos());
        let f = RealField::from_fn(g.clone(), |x| x[0].sin());
        let got = commutator_riesz(&b, &f, DealiasPolicy::Quadratic).unwrap();
        // b f' = cos^2 = (1 + cos 2x)/2 -> H = sin(2x)/2;  H f' = H cos = sin
        // so [H, b] f' = sin(2x)/2 - cos x sin x = 0
        assert!(got.max_abs() < 1e-13);

        let f2 = RealField::from_fn(g.clone(), |x| (2.0 * x[0]).sin());
        let got = commutator_riesz(&b, &f2, DealiasPolicy::Quadratic).unwrap();
        // b f2' = 2 cos x cos 2x = cos x + cos 3x -> H = sin x + sin 3x
        // b H f2' = cos x * 2 sin 2x = sin x + sin 3x  => commutator 0 again
        assert!(got.max_abs() < 1e-13);

        let b3 = RealField::from_fn(g.clone(), |x| (3.0 * x[0]).cos());
        let got = commutator_riesz(&b3, &f, DealiasPolicy::None).unwrap();
        // b f' = cos 3x cos x = (cos 2x + cos 4x)/2 -> H = (sin 2x + sin 4x)/2
        // b H f' = cos 3x sin x = (sin 4x - sin 2x)/2 => commutator sin 2x
        let want = RealField::from_fn(g.clone(), |x| (2.0 * x[0]).sin());
        assert!(rel_err(&got, &want) < 1e-12);
    }

    #[test]
    fn commutator_structure_identity_on_sphere_maps() {
        let g = line(256, 2.0 * PI * 8.0);
        for seed in 0..5 {
            let u = make_perturbation(&g, &[0.0, 0.0, 1.0], 0.1, 8, seed).unwrap().field;
            let lhs = normal_half_laplacian(u.values());
            let rhs = commutator_riesz(u.values(), u.values(), DealiasPolicy::None).unwrap();
            let sum = lhs.combine(1.0, &rhs, 1.0).unwrap();
            assert!(sum.max_abs() < 1e-10 * lhs.max_abs(), "{}", sum.max_abs() / lhs.max_abs());
        }
    }

    #[test]
    fn quarter_commutator_skew_identity() {
        let g = SpectralGrid::cubic(2, 32, 6.0).unwrap();
        let a = make_perturbation(&g, &[1.0, 0.0, 0.0], 0.3, 3, 4).unwrap().field;
        let v = band_limited_vector(&g, 3, 3, &mut rng(6)).unwrap();
        let half_v = inverse_unchecked(&fractional_laplacian(&forward_transform(&v), 0.5).unwrap());
        let lhs = cross(a.values(), &half_v).unwrap();
        let qv = inverse_unchecked(&fractional_laplacian(&forward_transform(&v), 0.25).unwrap());
        let first = inverse_unchecked(
            &fractional_laplacian(&forward_transform(&cross(a.values(), &qv).unwrap()), 0.25)
                .unwrap(),
        );
        let comm = commutator_quarter(&a, &qv, DealiasPolicy::None).unwrap();
        let rhs = first.combine(1.0, &comm, -1.0).unwrap();
        assert!(rel_err(&rhs, &lhs) < 1e-10);
    }

    #[test]
    fn quarter_commutator_two_mode_closed_form() {
        // a = (cos x, sin x, 0) constant in norm, v = (0, 0, cos 2x).
        let l = 2.0 * PI;
        let g = line(32, l);
        let a = make_great_circle(&RealField::from_fn(g.clone(), |x| x[0])).unwrap();
        let v = RealField::from_vector_fn(g.clone(), 3, |x, out| {
            out[0] = 0.0;
            out[1] = 0.0;
            out[2] = (2.0 * x[0]).cos();
        });
        let got = commutator_quarter(&a, &v, DealiasPolicy::None).unwrap();
        // a x v = (sin x cos 2x, -cos x cos 2x, 0)
        //       = ((sin 3x - sin x)/2, -(cos 3x + cos x)/2, 0)
        // (-Delta)^{1/4} multiplies mode k by sqrt(k); (-Delta)^{1/4} v = sqrt2 v.
        let s3 = 3f64.sqrt();
        let s2 = 2f64.sqrt();
        let want = RealField::from_vector_fn(g.clone(), 3, |x, out| {
            let x = x[0];
            let q0 = (s3 * (3.0 * x).sin() - x.sin()) / 2.0;
            let q1 = -(s3 * (3.0 * x).cos() + x.cos()) / 2.0;
            out[0] = q0 - s2 * x.sin() * (2.0 * x).cos();
            out[1] = q1 + s2 * x.cos() * (2.0 * x).cos();
            out[2] = 0.0;
        });
        assert!(rel_err(&got, &want) < 1e-10);
    }

    #[test]
    fn commutator_is_bilinear() {
        let g = SpectralGrid::cubic(2, 16, 2.0).unwrap();
        let mut r = rng(12);
        let b1 = band_limited_vector(&g, 2, 3, &mut r).unwrap();
        let b2 = band_limited_vector(&g, 2, 3, &mut r).unwrap();
        let f = band_limited_vector(&g, 2, 3, &mut r).unwrap();
        let p = DealiasPolicy::Quadratic;
        let lhs = commutator_riesz(&b1.combine(2.0, &b2, -0.5).unwrap(), &f, p).unwrap();
        let rhs = commutator_riesz(&b1, &f, p)
            .unwrap()
            .combine(2.0, &commutator_riesz(&b2, &f, p).unwrap(), -0.5)
            .unwrap();
        assert!(rel_err(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn derivative_magnitude_matches_seminorm() {
        let g = SpectralGrid::cubic(2, 16, 3.0).unwrap();
        let f = band_limited_scalar(&g, 4, 2);
        for order in 1..=3 {
            let nrm = derivative_lp_norm(&f, order, 2.0).unwrap();
            let s = sobolev_seminorm(&f, order as f64);
            assert!((nrm - s).abs() < 1e-10 * s);
        }
    }

    #[test]
    fn unit_target_on_commutator_quarter() {
        let g = line(16, 1.0);
        let u = SphereField::constant(g.clone(), &[1.0, 0.0]).unwrap();
        let f = RealField::zeros(g, 2);
        assert!(matches!(
            commutator_quarter(&u, &f, DealiasPolicy::None),
            Err(Error::UnsupportedTarget { m: 1 })
        ));
    }
}
