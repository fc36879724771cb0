//! Right-hand sides of the four flows and their time integration.
//!
//! Every flow is written as `d_t u = -c L u + c (u . L u) u + g u x L u` with
//! `L = eps (-Delta)^nu + (-Delta)^{1/2}`. The linear part `-c L` is diagonal
//! in Fourier space and is integrated exactly by the exponential scheme; the
//! remainder is evaluated pseudospectrally and truncated by the dealias mask.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{cross, renormalize, SphereField};
use crate::norms::{self, check_regularizer, seminorm_sq_spectral, DiagnosticsRow};
use crate::spectral::{
    forward_transform, inverse_unchecked, laplacian_symbol, DealiasPolicy, FourierField,
    RealField, SpectralGrid,
};
use crate::util::pairwise_sum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Equation {
    /// Damped fractional Landau-Lifshitz-Gilbert flow.
    Hllg,
    /// Half-harmonic heat flow, any target sphere.
    Hhhf,
    /// Conservative half-wave map flow.
    Hwm,
    /// Regularized Landau-Lifshitz-Gilbert flow.
    Llgr,
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Equation::Hllg => "HLLG",
            Equation::Hhhf => "HHHF",
            Equation::Hwm => "HWM",
            Equation::Llgr => "LLGR",
        })
    }
}

impl FromStr for Equation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HLLG" => Ok(Equation::Hllg),
            "HHHF" => Ok(Equation::Hhhf),
            "HWM" => Ok(Equation::Hwm),
            "LLGR" => Ok(Equation::Llgr),
            _ => Err(Error::param(format!("unknown equation '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Etdrk2,
    Rk4,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Etdrk2 => "etdrk2",
            Scheme::Rk4 => "rk4",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "etdrk2" => Ok(Scheme::Etdrk2),
            "rk4" => Ok(Scheme::Rk4),
            _ => Err(Error::param(format!("unknown scheme '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub equation: Equation,
    /// Damping `lambda`.
    pub damping: f64,
    /// Regularization weight `eps`.
    pub eps: f64,
    /// Regularizer order `nu`.
    pub nu: u32,
    /// Accept any `nu` for the regularized flow, not only the one matched to
    /// the dimension.
    pub nu_override: bool,
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub dealias: DealiasPolicy,
    pub renormalize: bool,
    /// Steps between diagnostic rows.
    pub sample_every: usize,
    /// Orders `s` of the seminorms recorded in each row (and integrated in time).
    pub seminorm_orders: Vec<f64>,
}

impl SimParams {
    /// Defaults for `equation` on an `n`-dimensional grid.
    pub fn new(equation: Equation, n: usize) -> Self {
        let nu = if n == 1 { 1 } else { 2 };
        let (damping, eps) = match equation {
            Equation::Hwm => (0.0, 0.0),
            Equation::Llgr => (1.0, 1e-2),
            _ => (1.0, 0.0),
        };
        SimParams {
            equation,
            damping,
            eps,
            nu,
            nu_override: false,
            dt: 1e-3,
            horizon: 1.0,
            scheme: Scheme::Etdrk2,
            dealias: DealiasPolicy::Cubic,
            renormalize: true,
            sample_every: 10,
            seminorm_orders: default_orders(n, nu),
        }
    }

    /// `alpha = lambda / (1 + lambda^2)`.
    pub fn alpha(&self) -> f64 {
        self.damping / (1.0 + self.damping * self.damping)
    }

    /// `beta = alpha / lambda`, undefined without damping.
    pub fn beta(&self) -> Option<f64> {
        (self.damping > 0.0).then(|| 1.0 / (1.0 + self.damping * self.damping))
    }

    /// `(c, g)`: weights of the damping and precession parts.
    fn weights(&self) -> (f64, f64) {
        match self.equation {
            Equation::Hllg | Equation::Llgr => (self.damping, 1.0),
            Equation::Hhhf => (1.0, 0.0),
            Equation::Hwm => (0.0, 1.0),
        }
    }

    /// `c` with `d_t E_eps = -c ||d_t u||^2`: `alpha` for the damped
    /// flows, 1 for heat flow and 0 for the half-wave map.
    pub fn dissipation_coefficient(&self) -> f64 {
        let (c, g) = self.weights();
        if c == 0.0 {
            0.0
        } else {
            c / (c * c + g * g)
        }
    }

    /// Regularization actually applied by the flow.
    pub fn effective_eps(&self) -> f64 {
        match self.equation {
            Equation::Llgr | Equation::Hhhf => self.eps,
            _ => 0.0,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    /// Check the parameter invariants for an `n`-dimensional grid.
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::param(m));
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return bad(format!("damping must be >= 0, got {}", self.damping));
        }
        check_regularizer(self.eps, self.nu)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("time step must be > 0, got {}", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be > 0, got {}", self.horizon));
        }
        let steps = self.horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return bad(format!(
                "horizon {} is not a whole number of steps of {}",
                self.horizon, self.dt
            ));
        }
        if self.sample_every == 0 {
            return bad("sample cadence must be >= 1".into());
        }
        if self.seminorm_orders.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("seminorm orders must be >= 0".into());
        }
        match self.equation {
            Equation::Hllg if self.damping == 0.0 => {
                return bad("HLLG needs damping > 0 (use HWM for the conservative flow)".into())
            }
            Equation::Llgr if self.damping == 0.0 => {
                return bad("LLGR needs damping > 0".into())
            }
            Equation::Hwm if self.damping != 0.0 => {
                return bad("HWM requires damping = 0".into())
            }
            Equation::Hllg | Equation::Hwm if self.eps != 0.0 => {
                return bad(format!(
                    "{} carries no regularizer; use LLGR for eps > 0",
                    self.equation
                ))
            }
            Equation::Llgr if self.eps == 0.0 => {
                return bad("LLGR requires eps > 0".into())
            }
            Equation::Llgr if !self.nu_override => {
                let want = if n == 1 { 1 } else { 2 };
                if self.nu != want {
                    return bad(format!(
                        "LLGR in dimension {n} uses nu = {want} (set nu_override to change)"
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// `0.5, 1.0, ...` up to `(n + 1) / 2 + nu`: every order used by the
/// monotone estimates.
pub fn default_orders(n: usize, nu: u32) -> Vec<f64> {
    (1..=n + 1 + 2 * nu as usize).map(|k| k as f64 / 2.0).collect()
}

/// Precomputed symbols for one flow on one grid.
#[derive(Clone, Debug)]
struct Operator {
    grid: Arc<SpectralGrid>,
    /// Symbol of `L = eps |xi|^{2 nu} + |xi|`.
    reg: Vec<f64>,
    /// Symbol of the stiff linear part `-c L`.
    linear: Vec<f64>,
    mask: Option<Vec<bool>>,
    c: f64,
    g: f64,
}

impl Operator {
    fn new(grid: &Arc<SpectralGrid>, eps: f64, nu: u32, c: f64, g: f64, policy: DealiasPolicy) -> Self {
        let half = laplacian_symbol(grid, 0.5);
        let reg: Vec<f64> = if eps == 0.0 {
            half
        } else {
            let hi = laplacian_symbol(grid, nu as f64);
            half.iter().zip(&hi).map(|(h, q)| eps * q + h).collect()
        };
        let linear = reg.iter().map(|l| -c * l).collect();
        let mask = (policy != DealiasPolicy::None).then(|| policy.mask(grid));
        Operator {
            grid: grid.clone(),
            reg,
            linear,
            mask,
            c,
            g,
        }
    }

    fn for_params(grid: &Arc<SpectralGrid>, p: &SimParams) -> Self {
        let (c, g) = p.weights();
        Operator::new(grid, p.effective_eps(), p.nu, c, g, p.dealias)
    }

    /// `L u` in Fourier space.
    fn apply_reg(&self, uh: &FourierField) -> FourierField {
        uh.map_modes(|i| Complex64::new(self.reg[i], 0.0))
    }

    /// Dealiased spectrum of `c (u . L u) u + g u x L u`.
    fn nonlinear(&self, u: &RealField, uh: &FourierField) -> Result<FourierField> {
        let h = inverse_unchecked(&self.apply_reg(uh));
        let mut acc = RealField::zeros(self.grid.clone(), u.ncomp());
        if self.c != 0.0 {
            let normal = u.mul_scalar_field(&u.dot(&h)?)?;
            acc = acc.combine(1.0, &normal, self.c)?;
        }
        if self.g != 0.0 {
            acc = acc.combine(1.0, &cross(u, &h)?, self.g)?;
        }
        let mut nh = forward_transform(&acc);
        if let Some(mask) = &self.mask {
            for comp in nh.components_mut() {
                for (v, keep) in comp.iter_mut().zip(mask) {
                    if !keep {
                        *v = Complex64::default();
                    }
                }
            }
        }
        Ok(nh)
    }

    /// Full right-hand side `-c L u_hat + N_hat`.
    fn full(&self, uh: &FourierField, nh: &FourierField) -> FourierField {
        let comps = uh
            .components()
            .iter()
            .zip(nh.components())
            .map(|(u, n)| {
                u.iter()
                    .zip(n)
                    .zip(&self.linear)
                    .map(|((u, n), l)| u * *l + n)
                    .collect()
            })
            .collect();
        FourierField::new(self.grid.clone(), comps).expect("same shape")
    }

    fn rhs_nodal(&self, u: &RealField) -> Result<RealField> {
        let uh = forward_transform(u);
        let nh = self.nonlinear(u, &uh)?;
        Ok(inverse_unchecked(&self.full(&uh, &nh)))
    }
}

fn require_s2(u: &SphereField) -> Result<()> {
    if u.target_dim() != 2 {
        return Err(Error::UnsupportedTarget { m: u.target_dim() });
    }
    Ok(())
}

/// `u x h + lambda u x (u x h)` with `h = (-Delta)^{1/2} u`.
pub fn rhs_hllg(u: &SphereField, damping: f64, policy: DealiasPolicy) -> Result<RealField> {
    require_s2(u)?;
    Operator::new(u.grid(), 0.0, 1, damping, 1.0, policy).rhs_nodal(u.values())
}

/// `u x h`, the conservative flow.
pub fn rhs_hwm(u: &SphereField, policy: DealiasPolicy) -> Result<RealField> {
    rhs_hllg(u, 0.0, policy)
}

/// `-(1 - Pi_u) h`, for any target sphere.
pub fn rhs_hhhf(u: &SphereField, policy: DealiasPolicy) -> Result<RealField> {
    Operator::new(u.grid(), 0.0, 1, 1.0, 0.0, policy).rhs_nodal(u.values())
}

/// `-lambda L u + (lambda Pi_u + Omega_u) L u` with
/// `L = eps (-Delta)^nu + (-Delta)^{1/2}`.
pub fn rhs_llgr(
    u: &SphereField,
    eps: f64,
    nu: u32,
    damping: f64,
    policy: DealiasPolicy,
) -> Result<RealField> {
    require_s2(u)?;
    check_regularizer(eps, nu)?;
    Operator::new(u.grid(), eps, nu, damping, 1.0, policy).rhs_nodal(u.values())
}

/// Right-hand side selected by `params`.
pub fn rhs(u: &SphereField, params: &SimParams) -> Result<RealField> {
    if params.equation != Equation::Hhhf {
        require_s2(u)?;
    }
    Operator::for_params(u.grid(), params).rhs_nodal(u.values())
}

/// `L u` at the nodes, without dealiasing.
pub fn effective_field(u: &RealField, eps: f64, nu: u32) -> Result<RealField> {
    check_regularizer(eps, nu)?;
    let op = Operator::new(u.grid(), eps, nu, 0.0, 0.0, DealiasPolicy::None);
    Ok(inverse_unchecked(&op.apply_reg(&forward_transform(u))))
}

/// `||beta v - u x (alpha v + L u)||_{L^2}`: how far `v` is from solving the
/// Gilbert form of the regularized flow.
pub fn gilbert_residual(u: &SphereField, v: &RealField, params: &SimParams) -> Result<f64> {
    require_s2(u)?;
    let beta = params
        .beta()
        .ok_or_else(|| Error::param("Gilbert form needs damping > 0"))?;
    let alpha = params.alpha();
    let h = effective_field(u.values(), params.effective_eps(), params.nu)?;
    let inner = v.combine(alpha, &h, 1.0)?;
    let res = v.combine(beta, &cross(u.values(), &inner)?, -1.0)?;
    norms::lp_norm(&res, 2.0)
}

/// `u . (-Delta)^nu u`, assembled directly.
pub fn normal_regularizer(u: &RealField, nu: u32) -> Result<RealField> {
    check_regularizer(0.0, nu)?;
    let uh = forward_transform(u);
    let sym = laplacian_symbol(u.grid(), nu as f64);
    let lu = inverse_unchecked(&uh.map_modes(|i| Complex64::new(sym[i], 0.0)));
    u.dot(&lu)
}

/// Expansion of `u . (-Delta)^nu u` valid for `|u| = 1`: `|grad u|^2` for
/// `nu = 1`, and `-(|Delta u|^2 + 2 |grad grad u|^2 + 4 grad u . grad Delta u)`
/// for `nu = 2`.
pub fn constraint_expansion(u: &RealField, nu: u32) -> Result<RealField> {
    check_regularizer(0.0, nu)?;
    let grid = u.grid().clone();
    let n = grid.ndim();
    let grad = norms::nodal_gradient(u);
    let sq_sum = |fields: &[RealField]| -> Vec<f64> {
        let mut acc = vec![0.0; grid.len()];
        for f in fields {
            for c in f.components() {
                for (a, v) in acc.iter_mut().zip(c) {
                    *a += v * v;
                }
            }
        }
        acc
    };
    let out = if nu == 1 {
        sq_sum(&grad)
    } else {
        let uh = forward_transform(u);
        let lap_sym = laplacian_symbol(&grid, 1.0);
        let lap_h = uh.map_modes(|i| Complex64::new(-lap_sym[i], 0.0));
        let lap = inverse_unchecked(&lap_h);
        let hess: Vec<RealField> = grad
            .iter()
            .flat_map(norms::nodal_gradient)
            .collect();
        let grad_lap = norms::nodal_gradient(&lap);
        let mut cross_term = vec![0.0; grid.len()];
        for j in 0..n {
            for (gc, lc) in grad[j].components().iter().zip(grad_lap[j].components()) {
                for (a, (x, y)) in cross_term.iter_mut().zip(gc.iter().zip(lc)) {
                    *a += x * y;
                }
            }
        }
        let lap_sq = sq_sum(std::slice::from_ref(&lap));
        let hess_sq = sq_sum(&hess);
        (0..grid.len())
            .map(|i| -(lap_sq[i] + 2.0 * hess_sq[i] + 4.0 * cross_term[i]))
            .collect()
    };
    RealField::new(grid, vec![out])
}

/// Outcome of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// Time after the step.
    pub t: f64,
    /// `max | |u| - 1 |` of the raw update, before renormalization.
    pub drift: f64,
    /// `max | |u| - 1 |` of the state kept.
    pub post_drift: f64,
    /// `||d_t u||^2_{L^2}` at the new state.
    pub rate_sq: f64,
}

#[derive(Clone, Debug)]
struct Evaluation {
    uh: FourierField,
    nh: FourierField,
    rate_sq: f64,
}

/// Exponential-integrator weights `phi_1(z) = (e^z - 1)/z` and
/// `phi_2(z) = (e^z - 1 - z)/z^2`.
fn phi(z: f64) -> (f64, f64) {
    if z.abs() < 1e-2 {
        let p1 = 1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)));
        let p2 = 0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z / 720.0)));
        (p1, p2)
    } else {
        let em1 = z.exp_m1();
        (em1 / z, (em1 - z) / (z * z))
    }
}

/// Advances one trajectory. The evaluation at the current state is cached so
/// each step costs two (ETDRK2) or four (RK4) evaluations.
#[derive(Clone, Debug)]
pub struct Stepper {
    params: SimParams,
    op: Operator,
    exp: Vec<f64>,
    phi1: Vec<f64>,
    phi2: Vec<f64>,
    state: SphereField,
    step_index: usize,
    current: Evaluation,
}

impl Stepper {
    pub fn new(u0: &SphereField, params: &SimParams) -> Result<Self> {
        params.validate(u0.grid().ndim())?;
        if params.equation != Equation::Hhhf {
            require_s2(u0)?;
        }
        let op = Operator::for_params(u0.grid(), params);
        let dt = params.dt;
        let mut exp = Vec::with_capacity(op.linear.len());
        let mut phi1 = Vec::with_capacity(op.linear.len());
        let mut phi2 = Vec::with_capacity(op.linear.len());
        for &l in &op.linear {
            let z = l * dt;
            let (p1, p2) = phi(z);
            exp.push(z.exp());
            phi1.push(p1);
            phi2.push(p2);
        }
        let current = evaluate(&op, u0.values())?;
        Ok(Stepper {
            params: params.clone(),
            op,
            exp,
            phi1,
            phi2,
            state: u0.clone(),
            step_index: 0,
            current,
        })
    }

    pub fn state(&self) -> &SphereField {
        &self.state
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.params.dt
    }

    pub fn steps_taken(&self) -> usize {
        self.step_index
    }

    /// `||d_t u||^2_{L^2}` at the current state.
    pub fn rate_sq(&self) -> f64 {
        self.current.rate_sq
    }

    /// Spectrum of the current state.
    pub fn spectrum(&self) -> &FourierField {
        &self.current.uh
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let t_new = (self.step_index + 1) as f64 * self.params.dt;
        let next_h = match self.params.scheme {
            Scheme::Etdrk2 => self.etdrk2()?,
            Scheme::Rk4 => self.rk4()?,
        };
        let raw = inverse_unchecked(&next_h);
        if !raw.all_finite() {
            return Err(Error::Divergence { t: t_new });
        }
        let base = self.state.base().to_vec();
        let (state, drift) = if self.params.renormalize {
            let r = renormalize(&raw, &base).map_err(|e| with_time(e, t_new))?;
            (r.field, r.drift)
        } else {
            let drift = max_drift(&raw);
            (SphereField::from_parts_unchecked(raw, base), drift)
        };
        let post_drift = if self.params.renormalize {
            max_drift(state.values())
        } else {
            drift
        };
        self.current = evaluate(&self.op, state.values())?;
        self.state = state;
        self.step_index += 1;
        Ok(StepReport {
            t: t_new,
            drift,
            post_drift,
            rate_sq: self.current.rate_sq,
        })
    }

    fn etdrk2(&self) -> Result<FourierField> {
        let dt = self.params.dt;
        let Evaluation { uh, nh, .. } = &self.current;
        let a = combine_modes(uh, nh, |i, u, n| self.exp[i] * u + dt * self.phi1[i] * n);
        let a_nodal = inverse_unchecked(&a);
        let na = self.op.nonlinear(&a_nodal, &a)?;
        let mut out = a;
        for ((o, n_a), n_0) in out
            .components_mut()
            .iter_mut()
            .zip(na.components())
            .zip(nh.components())
        {
            for (i, v) in o.iter_mut().enumerate() {
                *v += dt * self.phi2[i] * (n_a[i] - n_0[i]);
            }
        }
        Ok(out)
    }

    fn rk4(&self) -> Result<FourierField> {
        let dt = self.params.dt;
        let uh = &self.current.uh;
        let k1 = self.op.full(uh, &self.current.nh);
        let f = |y: &FourierField| -> Result<FourierField> {
            let nodal = inverse_unchecked(y);
            let nh = self.op.nonlinear(&nodal, y)?;
            Ok(self.op.full(y, &nh))
        };
        let k2 = f(&uh.combine(1.0, &k1, 0.5 * dt)?)?;
        let k3 = f(&uh.combine(1.0, &k2, 0.5 * dt)?)?;
        let k4 = f(&uh.combine(1.0, &k3, dt)?)?;
        let mut out = uh.clone();
        let w = dt / 6.0;
        for (c, o) in out.components_mut().iter_mut().enumerate() {
            let (a, b, d, e) = (k1.component(c), k2.component(c), k3.component(c), k4.component(c));
            for (i, v) in o.iter_mut().enumerate() {
                *v += w * (a[i] + 2.0 * b[i] + 2.0 * d[i] + e[i]);
            }
        }
        Ok(out)
    }
}

fn combine_modes(
    a: &FourierField,
    b: &FourierField,
    f: impl Fn(usize, Complex64, Complex64) -> Complex64,
) -> FourierField {
    let comps = a
        .components()
        .iter()
        .zip(b.components())
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .enumerate()
                .map(|(i, (&x, &y))| f(i, x, y))
                .collect()
        })
        .collect();
    FourierField::new(a.grid().clone(), comps).expect("same shape")
}

fn evaluate(op: &Operator, u: &RealField) -> Result<Evaluation> {
    let uh = forward_transform(u);
    let nh = op.nonlinear(u, &uh)?;
    let full = op.full(&uh, &nh);
    let terms: Vec<f64> = full
        .components()
        .iter()
        .flat_map(|c| c.iter().map(|v| v.norm_sqr()))
        .collect();
    let rate_sq = pairwise_sum(&terms) * op.grid.volume();
    Ok(Evaluation { uh, nh, rate_sq })
}

fn max_drift(u: &RealField) -> f64 {
    u.magnitudes()
        .iter()
        .fold(0.0f64, |m, r| m.max((r - 1.0).abs()))
}

fn with_time(e: Error, t: f64) -> Error {
    match e {
        Error::ConstraintCollapse { node, norm, .. } => Error::ConstraintCollapse { t, node, norm },
        other => other,
    }
}

/// One step from `u`, see [`Stepper`].
pub fn step(u: &SphereField, params: &SimParams) -> Result<(SphereField, StepReport)> {
    let mut s = Stepper::new(u, params)?;
    let report = s.step()?;
    Ok((s.state, report))
}

/// Receives every diagnostic row together with the state it describes.
pub trait Sink {
    fn sample(&mut self, row: &DiagnosticsRow, state: &SphereField) -> Result<()>;
}

/// Discards everything.
pub struct NullSink;

impl Sink for NullSink {
    fn sample(&mut self, _: &DiagnosticsRow, _: &SphereField) -> Result<()> {
        Ok(())
    }
}

/// Keeps a copy of every sampled state.
#[derive(Default)]
pub struct StateRecorder {
    pub states: Vec<(f64, SphereField)>,
}

impl Sink for StateRecorder {
    fn sample(&mut self, row: &DiagnosticsRow, state: &SphereField) -> Result<()> {
        self.states.push((row.t, state.clone()));
        Ok(())
    }
}

impl<S: Sink + ?Sized> Sink for &mut S {
    fn sample(&mut self, row: &DiagnosticsRow, state: &SphereField) -> Result<()> {
        (**self).sample(row, state)
    }
}

/// Record of a completed (or interrupted) run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub params: SimParams,
    pub rows: Vec<DiagnosticsRow>,
    /// `int_0^t ||u||^2_{H^s} dt` at each row, for every order in
    /// `params.seminorm_orders` (same order).
    pub integrals: Vec<Vec<f64>>,
    /// `int_0^t ||d_t u||^2 dt` at each row, without the coefficient.
    pub raw_dissipation: Vec<f64>,
    /// Largest post-renormalization drift over all steps.
    pub max_post_drift: f64,
    /// Last good state.
    pub final_state: SphereField,
}

impl Trajectory {
    pub fn initial(&self) -> &DiagnosticsRow {
        &self.rows[0]
    }

    pub fn last(&self) -> &DiagnosticsRow {
        self.rows.last().expect("a trajectory has at least one row")
    }

    /// Column of `int ||u||^2_{H^s}`, if `s` was recorded.
    pub fn integral_of(&self, s: f64) -> Option<Vec<f64>> {
        let idx = self
            .params
            .seminorm_orders
            .iter()
            .position(|o| (o - s).abs() < 1e-12)?;
        Some(self.integrals.iter().map(|r| r[idx]).collect())
    }
}

/// A run that stopped early; `partial` ends at the last good state.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Box<Trajectory>,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (last good state at t={})",
            self.error,
            self.partial.last().t
        )
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Diagnostics for the state held by `stepper`.
fn diagnostics(
    stepper: &Stepper,
    dissipation: f64,
    drift: f64,
) -> Result<DiagnosticsRow> {
    let p = &stepper.params;
    let u = stepper.state();
    let uh = stepper.spectrum();
    let n = u.grid().ndim() as f64;
    let dev = u.deviation();
    Ok(DiagnosticsRow {
        t: stepper.time(),
        energy: 0.5 * seminorm_sq_spectral(uh, 0.5),
        energy_eps: norms::energy_eps_spectral(uh, p.effective_eps(), p.nu)?,
        seminorms: p
            .seminorm_orders
            .iter()
            .map(|&s| (s, seminorm_sq_spectral(uh, s).sqrt()))
            .collect(),
        dist_l2: norms::lp_norm(&dev, 2.0)?,
        dist_linf: norms::lp_norm(&dev, f64::INFINITY)?,
        dissipation,
        drift,
        grad_seminorm: seminorm_sq_spectral(uh, (n + 1.0) / 2.0).sqrt(),
    })
}

/// Advance `u0` to the horizon, emitting a row every `sample_every` steps
/// and at the final time.
pub fn run<S: Sink>(
    u0: &SphereField,
    params: &SimParams,
    mut sink: S,
) -> std::result::Result<Trajectory, RunFailure> {
    let fail_early = |error: Error| RunFailure {
        error,
        partial: Box::new(Trajectory {
            params: params.clone(),
            rows: Vec::new(),
            integrals: Vec::new(),
            raw_dissipation: Vec::new(),
            max_post_drift: 0.0,
            final_state: u0.clone(),
        }),
    };
    let mut stepper = Stepper::new(u0, params).map_err(fail_early)?;
    let orders = params.seminorm_orders.clone();
    let coeff = params.dissipation_coefficient();
    let dt = params.dt;
    let steps = params.steps();

    let mut traj = Trajectory {
        params: params.clone(),
        rows: Vec::new(),
        integrals: Vec::new(),
        raw_dissipation: Vec::new(),
        max_post_drift: max_drift(u0.values()),
        final_state: u0.clone(),
    };
    let sq = |uh: &FourierField| -> Vec<f64> {
        orders.iter().map(|&s| seminorm_sq_spectral(uh, s)).collect()
    };
    let mut integ = vec![0.0; orders.len()];
    let mut prev_sq = sq(stepper.spectrum());
    let mut raw = 0.0;
    let mut prev_rate = stepper.rate_sq();
    let mut drift_since = 0.0f64;

    let emit = |stepper: &Stepper,
                    traj: &mut Trajectory,
                    integ: &[f64],
                    raw: f64,
                    drift: f64,
                    sink: &mut S|
     -> Result<()> {
        let row = diagnostics(stepper, coeff * raw, drift)?;
        sink.sample(&row, stepper.state())?;
        traj.rows.push(row);
        traj.integrals.push(integ.to_vec());
        traj.raw_dissipation.push(raw);
        Ok(())
    };

    if let Err(e) = emit(&stepper, &mut traj, &integ, raw, 0.0, &mut sink) {
        return Err(RunFailure {
            error: e,
            partial: Box::new(traj),
        });
    }
    for k in 1..=steps {
        let report = match stepper.step() {
            Ok(r) => r,
            Err(error) => {
                traj.final_state = stepper.state().clone();
                return Err(RunFailure {
                    error,
                    partial: Box::new(traj),
                });
            }
        };
        let cur_sq = sq(stepper.spectrum());
        for ((acc, a), b) in integ.iter_mut().zip(&prev_sq).zip(&cur_sq) {
            *acc += 0.5 * dt * (a + b);
        }
        prev_sq = cur_sq;
        raw += 0.5 * dt * (prev_rate + report.rate_sq);
        prev_rate = report.rate_sq;
        drift_since = drift_since.max(report.drift);
        traj.max_post_drift = traj.max_post_drift.max(report.post_drift);
        if k % params.sample_every == 0 || k == steps {
            if let Err(e) = emit(&stepper, &mut traj, &integ, raw, drift_since, &mut sink) {
                traj.final_state = stepper.state().clone();
                return Err(RunFailure {
                    error: e,
                    partial: Box::new(traj),
                });
            }
            drift_since = 0.0;
        }
    }
    traj.final_state = stepper.state;
    Ok(traj)
}
