use std::sync::Arc;

use num_complex::Complex64;

use super::grid::SpectralGrid;
use crate::error::{Error, Result};

/// Real nodal field with `c` components, stored component-major.
#[derive(Clone, Debug)]
pub struct RealField {
    grid: Arc<SpectralGrid>,
    comps: Vec<Vec<f64>>,
}

/// Equal when defined on grids of the same shape with bitwise-equal values.
impl PartialEq for RealField {
    fn eq(&self, other: &Self) -> bool {
        self.grid.dims() == other.grid.dims()
            && self.grid.lengths() == other.grid.lengths()
            && self.comps == other.comps
    }
}

impl RealField {
    pub fn new(grid: Arc<SpectralGrid>, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.is_empty() {
            return Err(Error::shape("field needs at least one component"));
        }
        for (i, c) in comps.iter().enumerate() {
            if c.len() != grid.len() {
                return Err(Error::shape(format!(
                    "component {i} has {} values, grid has {} nodes",
                    c.len(),
                    grid.len()
                )));
            }
        }
        Ok(RealField { grid, comps })
    }

    pub fn zeros(grid: Arc<SpectralGrid>, ncomp: usize) -> Self {
        let comps = vec![vec![0.0; grid.len()]; ncomp];
        RealField { grid, comps }
    }

    /// Scalar field sampled from `f(x)`.
    pub fn from_fn(grid: Arc<SpectralGrid>, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        let data = (0..grid.len()).map(|i| f(&grid.node_coords(i))).collect();
        RealField {
            grid,
            comps: vec![data],
        }
    }

    /// Vector field with `ncomp` components sampled from `f(x, out)`.
    pub fn from_vector_fn(
        grid: Arc<SpectralGrid>,
        ncomp: usize,
        f: impl Fn(&[f64; 3], &mut [f64]),
    ) -> Self {
        let mut comps = vec![vec![0.0; grid.len()]; ncomp];
        let mut buf = vec![0.0; ncomp];
        for i in 0..grid.len() {
            f(&grid.node_coords(i), &mut buf);
            for (c, v) in comps.iter_mut().zip(&buf) {
                c[i] = *v;
            }
        }
        RealField { grid, comps }
    }

    /// Every node holds the same vector.
    pub fn constant(grid: Arc<SpectralGrid>, value: &[f64]) -> Self {
        let comps = value.iter().map(|&v| vec![v; grid.len()]).collect();
        RealField { grid, comps }
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.comps[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.comps[i]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.comps
    }

    /// Vector value at node `i`.
    pub fn value(&self, i: usize) -> Vec<f64> {
        self.comps.iter().map(|c| c[i]).collect()
    }

    pub fn check_compatible(&self, other: &RealField) -> Result<()> {
        if *self.grid != *other.grid {
            return Err(Error::shape("fields live on different grids"));
        }
        if self.ncomp() != other.ncomp() {
            return Err(Error::shape(format!(
                "component count mismatch: {} vs {}",
                self.ncomp(),
                other.ncomp()
            )));
        }
        Ok(())
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &RealField, b: f64) -> Result<RealField> {
        self.check_compatible(other)?;
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(x, y)| x.iter().zip(y).map(|(x, y)| a * x + b * y).collect())
            .collect();
        Ok(RealField {
            grid: self.grid.clone(),
            comps,
        })
    }

    pub fn scaled(&self, a: f64) -> RealField {
        let comps = self
            .comps
            .iter()
            .map(|c| c.iter().map(|v| a * v).collect())
            .collect();
        RealField {
            grid: self.grid.clone(),
            comps,
        }
    }

    /// Pointwise Euclidean length of the nodal vectors.
    pub fn magnitudes(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .collect()
    }

    /// Pointwise inner product, as a scalar field.
    pub fn dot(&self, other: &RealField) -> Result<RealField> {
        self.check_compatible(other)?;
        let data = (0..self.len())
            .map(|i| {
                self.comps
                    .iter()
                    .zip(&other.comps)
                    .map(|(a, b)| a[i] * b[i])
                    .sum()
            })
            .collect();
        Ok(RealField {
            grid: self.grid.clone(),
            comps: vec![data],
        })
    }

    /// Multiply every component by the scalar field `s` pointwise.
    pub fn mul_scalar_field(&self, s: &RealField) -> Result<RealField> {
        if s.ncomp() != 1 || *s.grid != *self.grid {
            return Err(Error::shape("expected a scalar field on the same grid"));
        }
        let w = &s.comps[0];
        let comps = self
            .comps
            .iter()
            .map(|c| c.iter().zip(w).map(|(a, b)| a * b).collect())
            .collect();
        Ok(RealField {
            grid: self.grid.clone(),
            comps,
        })
    }

    /// Largest absolute nodal entry over all components.
    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }
}

/// Complex spectral coefficients for each component of a field.
///
/// Coefficients are mode amplitudes: the forward transform divides by the
/// node count, so `f(x) = sum_k c_k exp(i xi_k . x)`.
#[derive(Clone, Debug)]
pub struct FourierField {
    grid: Arc<SpectralGrid>,
    comps: Vec<Vec<Complex64>>,
}

impl FourierField {
    pub fn new(grid: Arc<SpectralGrid>, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        if comps.is_empty() {
            return Err(Error::shape("field needs at least one component"));
        }
        for (i, c) in comps.iter().enumerate() {
            if c.len() != grid.len() {
                return Err(Error::shape(format!(
                    "component {i} has {} coefficients, grid has {} modes",
                    c.len(),
                    grid.len()
                )));
            }
        }
        Ok(FourierField { grid, comps })
    }

    pub fn zeros(grid: Arc<SpectralGrid>, ncomp: usize) -> Self {
        let comps = vec![vec![Complex64::default(); grid.len()]; ncomp];
        FourierField { grid, comps }
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn component(&self, i: usize) -> &[Complex64] {
        &self.comps[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.comps[i]
    }

    pub fn components_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.comps
    }

    pub fn components(&self) -> &[Vec<Complex64>] {
        &self.comps
    }

    pub fn into_components(self) -> Vec<Vec<Complex64>> {
        self.comps
    }

    /// Coefficient of component `comp` at the mode with the given integer wavevector.
    pub fn coefficient(&self, comp: usize, k: &[i64]) -> Complex64 {
        let multi: Vec<usize> = k
            .iter()
            .zip(self.grid.dims())
            .map(|(&k, &d)| k.rem_euclid(d as i64) as usize)
            .collect();
        self.comps[comp][self.grid.flat_index(&multi)]
    }

    /// Largest `|c_k - conj(c_{-k})|` over all components and modes.
    pub fn hermitian_violation(&self) -> f64 {
        let g = &self.grid;
        let mut worst = 0.0f64;
        for c in &self.comps {
            for (i, v) in c.iter().enumerate() {
                let j = g.conjugate_index(i);
                worst = worst.max((v - c[j].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, v| m.max(v.norm()))
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &FourierField, b: f64) -> Result<FourierField> {
        if *self.grid != *other.grid || self.ncomp() != other.ncomp() {
            return Err(Error::shape("incompatible spectral fields"));
        }
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(x, y)| x.iter().zip(y).map(|(x, y)| x * a + y * b).collect())
            .collect();
        Ok(FourierField {
            grid: self.grid.clone(),
            comps,
        })
    }

    /// Apply a per-mode multiplier to every component.
    pub fn map_modes(&self, symbol: impl Fn(usize) -> Complex64) -> FourierField {
        let sym: Vec<Complex64> = (0..self.grid.len()).map(symbol).collect();
        let comps = self
            .comps
            .iter()
            .map(|c| c.iter().zip(&sym).map(|(a, s)| a * s).collect())
            .collect();
        FourierField {
            grid: self.grid.clone(),
            comps,
        }
    }
}
