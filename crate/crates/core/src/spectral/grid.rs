use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Below this many nodes the multi-dimensional transform runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 13;

/// Periodic box `[0, L_0) x ... x [0, L_{n-1})` with `dims[j]` equispaced nodes per axis.
///
/// Storage is row-major: the last axis varies fastest. Modes use the same
/// layout, with axis index `i` carrying the integer wavenumber `i` for
/// `i < N/2`, the Nyquist wavenumber `N/2` at `i = N/2` and `i - N` above.
pub struct SpectralGrid {
    dims: Vec<usize>,
    lengths: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
    wavenumbers: Vec<Vec<i64>>,
    freqs: Vec<Vec<f64>>,
    xi_sq: Vec<f64>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("dims", &self.dims)
            .field("lengths", &self.lengths)
            .finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.lengths == other.lengths
    }
}

impl SpectralGrid {
    pub fn new(dims: &[usize], lengths: &[f64]) -> Result<Arc<Self>> {
        let n = dims.len();
        if !(1..=3).contains(&n) {
            return Err(Error::param(format!(
                "spatial dimension must be 1, 2 or 3, got {n}"
            )));
        }
        if lengths.len() != n {
            return Err(Error::shape(format!(
                "{} box lengths given for a {n}-dimensional grid",
                lengths.len()
            )));
        }
        for (j, &d) in dims.iter().enumerate() {
            if d < 4 || d % 2 != 0 {
                return Err(Error::param(format!(
                    "axis {j}: node count must be even and >= 4, got {d}"
                )));
            }
        }
        for (j, &l) in lengths.iter().enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::param(format!(
                    "axis {j}: box length must be positive, got {l}"
                )));
            }
        }

        let mut strides = vec![1usize; n];
        for j in (0..n.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * dims[j + 1];
        }
        let len = dims.iter().product();

        let wavenumbers: Vec<Vec<i64>> = dims
            .iter()
            .map(|&d| {
                (0..d)
                    .map(|i| {
                        if i <= d / 2 {
                            i as i64
                        } else {
                            i as i64 - d as i64
                        }
                    })
                    .collect()
            })
            .collect();
        let freqs: Vec<Vec<f64>> = wavenumbers
            .iter()
            .zip(lengths)
            .map(|(ks, &l)| ks.iter().map(|&k| 2.0 * PI * k as f64 / l).collect())
            .collect();

        let mut xi_sq = vec![0.0; len];
        for (idx, v) in xi_sq.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                let i = (idx / strides[j]) % dims[j];
                acc += freqs[j][i] * freqs[j][i];
            }
            *v = acc;
        }

        let mut planner = FftPlanner::new();
        let forward = dims.iter().map(|&d| planner.plan_fft_forward(d)).collect();
        let inverse = dims.iter().map(|&d| planner.plan_fft_inverse(d)).collect();

        Ok(Arc::new(SpectralGrid {
            dims: dims.to_vec(),
            lengths: lengths.to_vec(),
            strides,
            len,
            wavenumbers,
            freqs,
            xi_sq,
            forward,
            inverse,
        }))
    }

    /// Grid with the same node count and box length along every axis.
    pub fn cubic(n: usize, nodes: usize, length: f64) -> Result<Arc<Self>> {
        Self::new(&vec![nodes; n], &vec![length; n])
    }

    /// Same box, `factor` times as many nodes per axis.
    pub fn refined(&self, factor: usize) -> Result<Arc<Self>> {
        let dims: Vec<usize> = self.dims.iter().map(|d| d * factor).collect();
        Self::new(&dims, &self.lengths)
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.len as f64
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.dims[axis] as f64
    }

    /// Index of `flat` along `axis`.
    #[inline]
    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.dims[axis]
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for (j, o) in out.iter_mut().enumerate().take(self.ndim()) {
            *o = self.axis_index(flat, j);
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.strides)
            .map(|(i, s)| i * s)
            .sum()
    }

    /// Physical coordinates of node `flat`; unused trailing entries are zero.
    pub fn node_coords(&self, flat: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        for (j, xj) in x.iter_mut().enumerate().take(self.ndim()) {
            *xj = self.axis_index(flat, j) as f64 * self.spacing(j);
        }
        x
    }

    /// Integer wavenumber of mode `flat` along `axis`.
    #[inline]
    pub fn wavenumber(&self, flat: usize, axis: usize) -> i64 {
        self.wavenumbers[axis][self.axis_index(flat, axis)]
    }

    /// Physical frequency `2 pi k / L` of mode `flat` along `axis`.
    #[inline]
    pub fn frequency(&self, flat: usize, axis: usize) -> f64 {
        self.freqs[axis][self.axis_index(flat, axis)]
    }

    /// `|xi|^2` for every mode, flattened.
    pub fn xi_squared(&self) -> &[f64] {
        &self.xi_sq
    }

    #[inline]
    pub fn is_nyquist(&self, flat: usize, axis: usize) -> bool {
        self.axis_index(flat, axis) * 2 == self.dims[axis]
    }

    pub fn has_nyquist(&self, flat: usize) -> bool {
        (0..self.ndim()).any(|j| self.is_nyquist(flat, j))
    }

    /// Flat index of the mode `-k`.
    pub fn conjugate_index(&self, flat: usize) -> usize {
        let mut out = 0;
        for j in 0..self.ndim() {
            let i = self.axis_index(flat, j);
            let d = self.dims[j];
            out += ((d - i) % d) * self.strides[j];
        }
        out
    }

    pub(crate) fn fft_forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    pub(crate) fn fft_inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        debug_assert_eq!(data.len(), self.len);
        let parallel = self.len >= PAR_THRESHOLD;
        for (axis, plan) in plans.iter().enumerate() {
            let d = self.dims[axis];
            let stride = self.strides[axis];
            if stride == 1 {
                if parallel {
                    data.par_chunks_mut(d).for_each(|line| plan.process(line));
                } else {
                    for line in data.chunks_mut(d) {
                        plan.process(line);
                    }
                }
                continue;
            }
            // Each block of `d * stride` values is a d x stride row-major matrix;
            // transpose so that the lines along `axis` become contiguous.
            let block = d * stride;
            let mut scratch = vec![Complex64::default(); block];
            for chunk in data.chunks_mut(block) {
                if parallel {
                    scratch
                        .par_chunks_mut(d)
                        .enumerate()
                        .for_each(|(r, row)| {
                            for (k, v) in row.iter_mut().enumerate() {
                                *v = chunk[k * stride + r];
                            }
                            plan.process(row);
                        });
                    chunk
                        .par_chunks_mut(stride)
                        .enumerate()
                        .for_each(|(k, row)| {
                            for (r, v) in row.iter_mut().enumerate() {
                                *v = scratch[r * d + k];
                            }
                        });
                } else {
                    for (r, row) in scratch.chunks_mut(d).enumerate() {
                        for (k, v) in row.iter_mut().enumerate() {
                            *v = chunk[k * stride + r];
                        }
                        plan.process(row);
                    }
                    for (k, row) in chunk.chunks_mut(stride).enumerate() {
                        for (r, v) in row.iter_mut().enumerate() {
                            *v = scratch[r * d + k];
                        }
                    }
                }
            }
        }
    }
}
