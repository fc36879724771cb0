//! Sphere-valued nodal maps and their pointwise geometry.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::norms;
use crate::sampling::{band_limited_field, rng};
use crate::spectral::{RealField, SpectralGrid};

/// Nodes with `|u| < COLLAPSE_THRESHOLD` abort renormalization.
pub const COLLAPSE_THRESHOLD: f64 = 0.5;

/// Map from the grid into the unit sphere `S^m` of `R^{m+1}`, together with
/// the base point `Q` it is compared against.
#[derive(Clone, Debug)]
pub struct SphereField {
    values: RealField,
    base: Vec<f64>,
}

impl SphereField {
    /// Wrap nodal values that are already unit length (within `1e-10`).
    pub fn new(values: RealField, base: Vec<f64>) -> Result<Self> {
        check_base(&base, values.ncomp())?;
        let worst = values
            .magnitudes()
            .iter()
            .fold(0.0f64, |m, r| m.max((r - 1.0).abs()));
        if worst > 1e-10 || !worst.is_finite() {
            return Err(Error::Data(format!(
                "values are not unit vectors (max | |u| - 1 | = {worst:.3e})"
            )));
        }
        Ok(SphereField { values, base })
    }

    /// Constant map `u = Q`.
    pub fn constant(grid: Arc<SpectralGrid>, base: &[f64]) -> Result<Self> {
        check_base(base, base.len())?;
        Ok(SphereField {
            values: RealField::constant(grid, base),
            base: base.to_vec(),
        })
    }

    pub(crate) fn from_parts_unchecked(values: RealField, base: Vec<f64>) -> Self {
        SphereField { values, base }
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        self.values.grid()
    }

    /// Dimension `m` of the target sphere.
    pub fn target_dim(&self) -> usize {
        self.values.ncomp() - 1
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }

    pub fn values(&self) -> &RealField {
        &self.values
    }

    pub fn into_values(self) -> RealField {
        self.values
    }

    /// `u - Q` as a nodal vector field.
    pub fn deviation(&self) -> RealField {
        let comps = self
            .values
            .components()
            .iter()
            .zip(&self.base)
            .map(|(c, q)| c.iter().map(|v| v - q).collect())
            .collect();
        RealField::new(self.grid().clone(), comps).expect("same shape")
    }

    /// Apply the orthogonal matrix `rot` (row-major, `(m+1)^2` entries) to
    /// every nodal value and to the base point.
    pub fn rotated(&self, rot: &[f64]) -> Result<SphereField> {
        let c = self.values.ncomp();
        if rot.len() != c * c {
            return Err(Error::shape(format!("rotation must be {c}x{c}")));
        }
        let apply = |v: &[f64]| -> Vec<f64> {
            (0..c)
                .map(|r| (0..c).map(|k| rot[r * c + k] * v[k]).sum())
                .collect()
        };
        let mut comps = vec![vec![0.0; self.values.len()]; c];
        for i in 0..self.values.len() {
            let w = apply(&self.values.value(i));
            for (comp, wv) in comps.iter_mut().zip(w) {
                comp[i] = wv;
            }
        }
        Ok(SphereField {
            values: RealField::new(self.grid().clone(), comps)?,
            base: apply(&self.base),
        })
    }
}

fn check_base(base: &[f64], ncomp: usize) -> Result<()> {
    if base.len() != ncomp || ncomp < 2 {
        return Err(Error::shape(format!(
            "base point has {} entries, field has {ncomp} components",
            base.len()
        )));
    }
    let r = base.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (r - 1.0).abs() > 1e-12 {
        return Err(Error::param(format!("base point must be a unit vector, |Q| = {r}")));
    }
    Ok(())
}

fn require_three(f: &RealField) -> Result<()> {
    if f.ncomp() != 3 {
        return Err(Error::UnsupportedTarget {
            m: f.ncomp().saturating_sub(1),
        });
    }
    Ok(())
}

/// Nodal vector product `a x b`; both fields must have three components.
pub fn cross(a: &RealField, b: &RealField) -> Result<RealField> {
    require_three(a)?;
    require_three(b)?;
    a.check_compatible(b)?;
    let [a0, a1, a2] = [a.component(0), a.component(1), a.component(2)];
    let [b0, b1, b2] = [b.component(0), b.component(1), b.component(2)];
    let n = a.len();
    let mut out = vec![vec![0.0; n]; 3];
    for i in 0..n {
        out[0][i] = a1[i] * b2[i] - a2[i] * b1[i];
        out[1][i] = a2[i] * b0[i] - a0[i] * b2[i];
        out[2][i] = a0[i] * b1[i] - a1[i] * b0[i];
    }
    RealField::new(a.grid().clone(), out)
}

/// Normal part `Pi_u xi = (u . xi) u`.
pub fn project_normal(u: &SphereField, xi: &RealField) -> Result<RealField> {
    let s = u.values().dot(xi)?;
    u.values().mul_scalar_field(&s)
}

/// Tangential part `(1 - Pi_u) xi`.
pub fn project_tangent(u: &SphereField, xi: &RealField) -> Result<RealField> {
    xi.combine(1.0, &project_normal(u, xi)?, -1.0)
}

/// Result of [`renormalize`].
#[derive(Clone, Debug)]
pub struct Renormalized {
    pub field: SphereField,
    /// `max_x | |u(x)| - 1 |` before division.
    pub drift: f64,
}

/// Pointwise `u / |u|`.
pub fn renormalize(u: &RealField, base: &[f64]) -> Result<Renormalized> {
    check_base(base, u.ncomp())?;
    let mags = u.magnitudes();
    let mut drift = 0.0f64;
    for (node, &r) in mags.iter().enumerate() {
        if !(r >= COLLAPSE_THRESHOLD) {
            return Err(Error::ConstraintCollapse {
                t: f64::NAN,
                node,
                norm: r,
            });
        }
        drift = drift.max((r - 1.0).abs());
    }
    let comps = u
        .components()
        .iter()
        .map(|c| c.iter().zip(&mags).map(|(v, r)| v / r).collect())
        .collect();
    Ok(Renormalized {
        field: SphereField {
            values: RealField::new(u.grid().clone(), comps)?,
            base: base.to_vec(),
        },
        drift,
    })
}

/// Equator map `u = (cos theta, sin theta, 0)` with base point `(1, 0, 0)`.
pub fn make_great_circle(theta: &RealField) -> Result<SphereField> {
    if theta.ncomp() != 1 {
        return Err(Error::shape("angle profile must be a scalar field"));
    }
    let t = theta.component(0);
    let comps = vec![
        t.iter().map(|v| v.cos()).collect(),
        t.iter().map(|v| v.sin()).collect(),
        vec![0.0; t.len()],
    ];
    Ok(SphereField {
        values: RealField::new(theta.grid().clone(), comps)?,
        base: vec![1.0, 0.0, 0.0],
    })
}

/// Degree of a one-dimensional equator map, from wrapped angle increments.
pub fn winding_number(u: &SphereField) -> Result<i64> {
    if u.grid().ndim() != 1 || u.values().ncomp() < 2 {
        return Err(Error::shape("winding number needs a 1-d map into the equator"));
    }
    let x = u.values().component(0);
    let y = u.values().component(1);
    let n = x.len();
    let mut total = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        let a0 = y[i].atan2(x[i]);
        let a1 = y[j].atan2(x[j]);
        let mut d = a1 - a0;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        total += d;
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

/// Orthonormal basis of the complement of the unit vector `q`.
pub fn tangent_basis(q: &[f64]) -> Vec<Vec<f64>> {
    let c = q.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(c - 1);
    // Gram-Schmidt on the standard basis, skipping the direction closest to q.
    let skip = (0..c)
        .max_by(|&a, &b| q[a].abs().total_cmp(&q[b].abs()))
        .unwrap_or(0);
    for e in (0..c).filter(|&e| e != skip) {
        let mut v = vec![0.0; c];
        v[e] = 1.0;
        let proj: f64 = q[e];
        for (vi, qi) in v.iter_mut().zip(q) {
            *vi -= proj * qi;
        }
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= d * bi;
            }
        }
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= r);
        basis.push(v);
    }
    basis
}

/// Perturbation of the constant map returned by [`make_perturbation`].
#[derive(Clone, Debug)]
pub struct Perturbation {
    pub field: SphereField,
    /// `||u||_{H^{n/2}}` (homogeneous) of the generated map.
    pub critical_seminorm: f64,
}

/// `renormalize(Q + a v)` for tangent Gaussian noise `v` with modes in
/// `|k_j| <= band` and unit mean square per tangent direction.
pub fn make_perturbation(
    grid: &Arc<SpectralGrid>,
    base: &[f64],
    amplitude: f64,
    band: usize,
    seed: u64,
) -> Result<Perturbation> {
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return Err(Error::param(format!("amplitude must be >= 0, got {amplitude}")));
    }
    check_base(base, base.len())?;
    let c = base.len();
    let mut generator = rng(seed);
    let mut comps: Vec<Vec<f64>> = base.iter().map(|&q| vec![q; grid.len()]).collect();
    for dir in tangent_basis(base) {
        let noise = band_limited_field(grid, band, &mut generator)?;
        for (comp, d) in comps.iter_mut().zip(&dir) {
            for (v, s) in comp.iter_mut().zip(noise.component(0)) {
                *v += amplitude * d * s;
            }
        }
    }
    debug_assert_eq!(comps.len(), c);
    let field = renormalize(&RealField::new(grid.clone(), comps)?, base)?.field;
    let critical_seminorm = norms::sobolev_seminorm(field.values(), grid.ndim() as f64 / 2.0);
    Ok(Perturbation {
        field,
        critical_seminorm,
    })
}

/// As [`make_perturbation`], with the amplitude tuned so that
/// `||u||_{H^{n/2}}` hits `target` (relative accuracy `1e-10`).
pub fn make_perturbation_with_seminorm(
    grid: &Arc<SpectralGrid>,
    base: &[f64],
    target: f64,
    band: usize,
    seed: u64,
) -> Result<Perturbation> {
    if target == 0.0 {
        return make_perturbation(grid, base, 0.0, band, seed);
    }
    let probe = 1e-3;
    let slope = make_perturbation(grid, base, probe, band, seed)?.critical_seminorm / probe;
    if !(slope > 0.0) {
        return Err(Error::Data("perturbation has vanishing seminorm".into()));
    }
    // secant iteration on a -> seminorm(a), which is nearly linear
    let mut a0 = 0.0;
    let mut f0 = -target;
    let mut a1 = target / slope;
    let mut p = make_perturbation(grid, base, a1, band, seed)?;
    for _ in 0..50 {
        let f1 = p.critical_seminorm - target;
        if f1.abs() <= 1e-10 * target {
            return Ok(p);
        }
        let a2 = a1 - f1 * (a1 - a0) / (f1 - f0);
        a0 = a1;
        f0 = f1;
        a1 = a2;
        p = make_perturbation(grid, base, a1, band, seed)?;
    }
    Err(Error::Data(format!(
        "could not reach seminorm {target} (got {})",
        p.critical_seminorm
    )))
}
