//! Executable checks: inequality ratio tests, the energy ledger, the
//! small-data estimates, decay and stability of trajectories.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run, SimParams, StateRecorder, Trajectory};
use crate::error::{Error, Result};
use crate::field::{renormalize, tangent_basis, SphereField};
use crate::norms::{
    bmo_norm, derivative_lp_norm, lp_norm, quarter_commutator_scalar, riesz_commutator_scalar,
    sobolev_norm, sobolev_seminorm,
};
use crate::sampling::{band_limited_field, rng};
use crate::spectral::{DealiasPolicy, RealField, SpectralGrid};
use crate::util::observed_order;

/// Samples with a right-hand side below this are skipped as degenerate.
pub const DEGENERATE_RHS: f64 = 1e-14;

/// `||u0||_{H^{n/2}}` up to which the small-data estimates are expected to
/// hold; violations above it are reported as outside the hypothesis.
pub const SMALL_DATA_RADIUS: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InequalityId {
    /// `||[R_1, b] f||_{L^2} <= C ||b||_BMO ||f||_{L^2}`.
    Crw,
    /// `||[(-Delta)^{1/4}, a] f||_{L^2} <= C ||(-Delta)^{1/4} a||_{L^{4n}} ||f||_{L^{4n/(2n-1)}}`.
    KatoPonce,
    /// `||grad^2 f||_{L^p} <= C ||grad f||_{L^n}^{1/2} ||grad^3 f||_{L^2}^{1/2}`, `1/p = 1/4 + 1/(2n)`.
    Gn,
    /// `||f||_{L^{2n/(n-1)}} <= C ||f||_{H^{1/2}}`, `n >= 2`.
    Sob1,
    /// `||f||_{L^{2n}} <= C ||f||_{H^{(n-1)/2}}`.
    Sob2,
    /// `||f||^2_{L^{4n}} <= C ||f||_{L^{2n}} ||grad f||_{L^n}`.
    Gn2,
    /// `||f||^4_{L^{4n/(2n-1)}} <= C ||f||^2_{L^2} ||f||^2_{H^{1/2}}`.
    Gn1,
    /// `||f||_{L^inf} <= C ||f||_{L^2}^{1/(n+1)} ||f||_{H^{(n+1)/2}}^{n/(n+1)}`.
    Agmon,
}

impl InequalityId {
    pub const ALL: [InequalityId; 8] = [
        InequalityId::Crw,
        InequalityId::KatoPonce,
        InequalityId::Gn,
        InequalityId::Sob1,
        InequalityId::Sob2,
        InequalityId::Gn2,
        InequalityId::Gn1,
        InequalityId::Agmon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InequalityId::Crw => "CRW",
            InequalityId::KatoPonce => "KatoPonce",
            InequalityId::Gn => "GN",
            InequalityId::Sob1 => "Sob1",
            InequalityId::Sob2 => "Sob2",
            InequalityId::Gn2 => "GN2",
            InequalityId::Gn1 => "GN1",
            InequalityId::Agmon => "Agmon",
        }
    }

    /// Number of independent fields per sample.
    pub fn arity(self) -> usize {
        match self {
            InequalityId::Crw | InequalityId::KatoPonce => 2,
            _ => 1,
        }
    }

    /// Whether the inequality is meaningful in dimension `n`.
    pub fn supports(self, n: usize) -> bool {
        !(self == InequalityId::Sob1 && n == 1)
    }
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InequalityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InequalityId::ALL
            .into_iter()
            .find(|id| id.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param(format!("unknown inequality '{s}'")))
    }
}

/// `(LHS, RHS)` of inequality `id` without its constant, for explicit fields.
pub fn inequality_sides(id: InequalityId, fields: &[RealField]) -> Result<(f64, f64)> {
    if fields.len() != id.arity() {
        return Err(Error::shape(format!(
            "{id} takes {} field(s), got {}",
            id.arity(),
            fields.len()
        )));
    }
    let f = &fields[0];
    let n = f.grid().ndim();
    let nf = n as f64;
    if !id.supports(n) {
        return Err(Error::param(format!("{id} needs n >= 2 (its exponent is infinite for n = 1)")));
    }
    Ok(match id {
        InequalityId::Crw => {
            let (b, g) = (&fields[0], &fields[1]);
            let comm = riesz_commutator_scalar(b.component(0), g, 0, DealiasPolicy::None)?;
            (lp_norm(&comm, 2.0)?, bmo_norm(b)? * lp_norm(g, 2.0)?)
        }
        InequalityId::KatoPonce => {
            let (a, g) = (&fields[0], &fields[1]);
            let r = 4.0 * nf;
            let p = 4.0 * nf / (2.0 * nf - 1.0);
            let comm = quarter_commutator_scalar(a, g, DealiasPolicy::None)?;
            let qa = crate::spectral::apply_nodal(a, |h| crate::spectral::fractional_laplacian(h, 0.25))?;
            (lp_norm(&comm, 2.0)?, lp_norm(&qa, r)? * lp_norm(g, p)?)
        }
        InequalityId::Gn => {
            let p = 1.0 / (0.25 + 0.5 / nf);
            let lhs = derivative_lp_norm(f, 2, p)?;
            let rhs = derivative_lp_norm(f, 1, nf)?.sqrt() * derivative_lp_norm(f, 3, 2.0)?.sqrt();
            (lhs, rhs)
        }
        InequalityId::Sob1 => (lp_norm(f, 2.0 * nf / (nf - 1.0))?, sobolev_seminorm(f, 0.5)),
        InequalityId::Sob2 => (lp_norm(f, 2.0 * nf)?, sobolev_seminorm(f, (nf - 1.0) / 2.0)),
        InequalityId::Gn2 => (
            lp_norm(f, 4.0 * nf)?.powi(2),
            lp_norm(f, 2.0 * nf)? * derivative_lp_norm(f, 1, nf)?,
        ),
        InequalityId::Gn1 => (
            lp_norm(f, 4.0 * nf / (2.0 * nf - 1.0))?.powi(4),
            lp_norm(f, 2.0)?.powi(2) * sobolev_seminorm(f, 0.5).powi(2),
        ),
        InequalityId::Agmon => {
            let theta = 1.0 / (nf + 1.0);
            (
                lp_norm(f, f64::INFINITY)?,
                lp_norm(f, 2.0)?.powf(theta) * sobolev_seminorm(f, (nf + 1.0) / 2.0).powf(1.0 - theta),
            )
        }
    })
}

/// How the ratio suite draws its samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub n: usize,
    /// Nodes per axis on the base grid.
    pub nodes: usize,
    pub length: f64,
    /// Modes `|k_j| <= band`.
    pub band: usize,
    pub amplitude: f64,
    pub first_seed: u64,
}

impl SamplerSpec {
    /// Reference sampler: `2 pi` box, resolution four times the band.
    pub fn reference(n: usize) -> Self {
        let (nodes, band) = match n {
            1 => (64, 8),
            2 => (32, 4),
            _ => (16, 2),
        };
        SamplerSpec {
            n,
            nodes,
            length: 2.0 * std::f64::consts::PI,
            band,
            amplitude: 1.0,
            first_seed: 0,
        }
    }

    fn grid(&self, refine: usize) -> Result<Arc<SpectralGrid>> {
        SpectralGrid::cubic(self.n, self.nodes * refine, self.length)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub id: InequalityId,
    pub n: usize,
    pub trials: usize,
    /// Samples skipped because the right-hand side vanished.
    pub degenerate: usize,
    /// Degenerate samples whose left-hand side did not vanish.
    pub inconsistent: usize,
    pub max_ratio: f64,
    pub ratio_at_refinement: f64,
    pub band: usize,
    pub amplitude: f64,
    pub seeds: (u64, u64),
}

impl RatioReport {
    /// `|max_ratio(2x) - max_ratio| / max_ratio`.
    pub fn refinement_change(&self) -> f64 {
        if self.max_ratio == 0.0 {
            return 0.0;
        }
        (self.ratio_at_refinement - self.max_ratio).abs() / self.max_ratio
    }
}

fn sample_fields(
    id: InequalityId,
    grid: &Arc<SpectralGrid>,
    spec: &SamplerSpec,
    seed: u64,
) -> Result<Vec<RealField>> {
    let mut r = rng(seed);
    (0..id.arity())
        .map(|_| Ok(band_limited_field(grid, spec.band, &mut r)?.scaled(spec.amplitude)))
        .collect()
}

/// Largest `LHS / RHS` of inequality `id` over `trials` samples, on the
/// sampler grid and on its 2x refinement (same functions).
pub fn verify_ratio(id: InequalityId, spec: &SamplerSpec, trials: usize) -> Result<RatioReport> {
    if trials < 100 {
        return Err(Error::param(format!("ratio tests need >= 100 trials, got {trials}")));
    }
    if !id.supports(spec.n) {
        return Err(Error::param(format!("{id} is not defined for n = {}", spec.n)));
    }
    let base = spec.grid(1)?;
    let fine = spec.grid(2)?;
    let seeds: Vec<u64> = (0..trials as u64).map(|i| spec.first_seed + i).collect();
    let results: Vec<[(f64, f64); 2]> = seeds
        .par_iter()
        .map(|&seed| {
            let a = inequality_sides(id, &sample_fields(id, &base, spec, seed)?)?;
            let b = inequality_sides(id, &sample_fields(id, &fine, spec, seed)?)?;
            Ok([a, b])
        })
        .collect::<Result<_>>()?;
    let mut report = RatioReport {
        id,
        n: spec.n,
        trials,
        degenerate: 0,
        inconsistent: 0,
        max_ratio: 0.0,
        ratio_at_refinement: 0.0,
        band: spec.band,
        amplitude: spec.amplitude,
        seeds: (spec.first_seed, spec.first_seed + trials as u64 - 1),
    };
    for [(l0, r0), (l1, r1)] in results {
        if r0 < DEGENERATE_RHS || r1 < DEGENERATE_RHS {
            report.degenerate += 1;
            if l0 > 1e-12 || l1 > 1e-12 {
                report.inconsistent += 1;
            }
            continue;
        }
        report.max_ratio = report.max_ratio.max(l0 / r0);
        report.ratio_at_refinement = report.ratio_at_refinement.max(l1 / r1);
    }
    Ok(report)
}

/// Energy identity defect along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub trajectory: String,
    /// `sup_t |E_eps(t) + c int_0^t ||d_t u||^2 - E_eps(0)| / E_eps(0)`.
    pub defect: f64,
    /// The same quantity at the final time.
    pub final_defect: f64,
    /// `log2` of the defect ratio against a run with half the step.
    pub order: Option<f64>,
}

/// `E_eps(u(T)) + c int ||d_t u||^2 = E_eps(u0)` with the flow's dissipation
/// coefficient `c` (`alpha` for the damped flows). Relative to `E_eps(u0)`
/// when it is nonzero.
pub fn check_energy_identity(traj: &Trajectory, id: &str) -> Result<LedgerReport> {
    if traj.rows.is_empty() || traj.raw_dissipation.len() != traj.rows.len() {
        return Err(Error::Data("trajectory carries no dissipation ledger".into()));
    }
    let e0 = traj.rows[0].energy_eps;
    let scale = if e0 > 0.0 { e0 } else { 1.0 };
    let defects: Vec<f64> = traj
        .rows
        .iter()
        .map(|r| (r.energy_eps + r.dissipation - e0).abs() / scale)
        .collect();
    Ok(LedgerReport {
        trajectory: id.to_string(),
        defect: defects.iter().cloned().fold(0.0, f64::max),
        final_defect: *defects.last().expect("nonempty"),
        order: None,
    })
}

/// Ledger of `coarse` with the order estimated against `fine` (half step).
pub fn energy_identity_order(coarse: &Trajectory, fine: &Trajectory, id: &str) -> Result<LedgerReport> {
    let mut c = check_energy_identity(coarse, id)?;
    let f = check_energy_identity(fine, id)?;
    if c.final_defect > 0.0 && f.final_defect > 0.0 {
        c.order = Some(observed_order(c.final_defect, f.final_defect));
    }
    Ok(c)
}

/// Cross-check of the ledger: `sum ||u_{k+1} - u_k||^2 / (t_{k+1} - t_k)`
/// over recorded states approximates `int ||d_t u||^2`.
pub fn finite_difference_dissipation(states: &[(f64, SphereField)]) -> Result<f64> {
    let mut total = 0.0;
    for w in states.windows(2) {
        let (t0, a) = &w[0];
        let (t1, b) = &w[1];
        let d = lp_norm(&b.values().combine(1.0, a.values(), -1.0)?, 2.0)?;
        total += d * d / (t1 - t0);
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Violated, but the data are outside the small-data hypothesis.
    OutsideHypothesis,
    /// Not decided on the available horizon.
    Inconclusive,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::OutsideHypothesis => "outside-hypothesis",
            CheckStatus::Inconclusive => "inconclusive",
        })
    }
}

/// `||u(T)||^2_{H^{k/2}} + lambda int (eps ||u||^2_{H^{k/2+nu}} + ||u||^2_{H^{(k+1)/2}})
/// <= ||u0||^2_{H^{k/2}}` at every sampled `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    pub k: usize,
    /// `||u0||^2_{H^{k/2}}`.
    pub rhs: f64,
    /// Largest left-hand side over the sampled times.
    pub max_lhs: f64,
    /// `min_T (RHS - LHS(T))`.
    pub slack: f64,
    pub first_violation: Option<f64>,
    pub critical_seminorm: f64,
    pub status: CheckStatus,
}

fn seminorm_column(traj: &Trajectory, s: f64) -> Result<Vec<f64>> {
    traj.rows
        .iter()
        .map(|r| {
            r.seminorm(s)
                .ok_or_else(|| Error::Data(format!("seminorm of order {s} was not sampled")))
        })
        .collect()
}

fn integral_column(traj: &Trajectory, s: f64) -> Result<Vec<f64>> {
    traj.integral_of(s)
        .ok_or_else(|| Error::Data(format!("seminorm of order {s} was not integrated")))
}

pub fn check_monotone_estimates(traj: &Trajectory, k: usize) -> Result<MonotoneReport> {
    let n = traj.final_state.grid().ndim();
    if k == 0 || k > n + 1 {
        return Err(Error::param(format!("k must lie in 1..={}, got {k}", n + 1)));
    }
    let p = &traj.params;
    let damping = match p.equation {
        crate::dynamics::Equation::Hhhf => 1.0,
        _ => p.damping,
    };
    let eps = p.effective_eps();
    let s = k as f64 / 2.0;
    let norms = seminorm_column(traj, s)?;
    let smooth = integral_column(traj, (k as f64 + 1.0) / 2.0)?;
    let reg = if eps > 0.0 {
        integral_column(traj, s + p.nu as f64)?
    } else {
        vec![0.0; traj.rows.len()]
    };
    let crit = seminorm_column(traj, n as f64 / 2.0)?[0];
    let rhs = norms[0] * norms[0];
    let tol = 1e-6 * rhs;
    let mut max_lhs = 0.0f64;
    let mut slack = f64::INFINITY;
    let mut first_violation = None;
    for (i, row) in traj.rows.iter().enumerate() {
        let lhs = norms[i] * norms[i] + damping * (eps * reg[i] + smooth[i]);
        max_lhs = max_lhs.max(lhs);
        slack = slack.min(rhs - lhs);
        if lhs > rhs + tol && first_violation.is_none() {
            first_violation = Some(row.t);
        }
    }
    let status = match first_violation {
        None => CheckStatus::Pass,
        Some(_) if crit > SMALL_DATA_RADIUS * (1.0 + 1e-9) => CheckStatus::OutsideHypothesis,
        Some(_) => CheckStatus::Fail,
    };
    Ok(MonotoneReport {
        k,
        rhs,
        max_lhs,
        slack,
        first_violation,
        critical_seminorm: crit,
        status,
    })
}

/// Growth of `||u - Q||` along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2GrowthReport {
    pub n: usize,
    /// `n = 1`: smallest `c0 >= 0` with
    /// `||u(t) - Q||^2_{H^{1/2}} <= e^{c0 t} ||u0 - Q||^2_{H^{1/2}}`.
    /// `n >= 2`: smallest `c` with `||u(t) - Q||^2_{L^2} <= c ||u0 - Q||^2_{L^2}`.
    pub fitted_constant: f64,
    /// `sup_t ||u(t) - Q||_{L^2} / ||u0 - Q||_{L^2}`.
    pub sup_ratio: f64,
}

pub fn check_l2_growth(traj: &Trajectory) -> Result<L2GrowthReport> {
    let n = traj.final_state.grid().ndim();
    let rows = &traj.rows;
    if rows.is_empty() {
        return Err(Error::Data("empty trajectory".into()));
    }
    let d0 = rows[0].dist_l2;
    let sup_ratio = if d0 > 0.0 {
        rows.iter().map(|r| r.dist_l2 / d0).fold(0.0, f64::max)
    } else {
        0.0
    };
    let fitted_constant = if n == 1 {
        let half = seminorm_column(traj, 0.5)?;
        let dist = |i: usize| rows[i].dist_l2.powi(2) + half[i].powi(2);
        let base = dist(0);
        if base == 0.0 {
            0.0
        } else {
            (1..rows.len())
                .filter(|&i| rows[i].t > 0.0)
                .map(|i| (dist(i) / base).ln() / rows[i].t)
                .fold(0.0, f64::max)
        }
    } else {
        sup_ratio * sup_ratio
    };
    Ok(L2GrowthReport {
        n,
        fitted_constant,
        sup_ratio,
    })
}

/// `||f||_{L^inf} / (2 ||f||_{L^2}^{1/(n+1)} ||grad f||_{H^{(n-1)/2}}^{n/(n+1)})`
/// for the fluctuation `f = u - mean(u)`.
pub fn agmon_ratio(u: &SphereField) -> Result<f64> {
    let n = u.grid().ndim() as f64;
    let fluct = fluctuation(u.values());
    let top = lp_norm(&fluct, f64::INFINITY)?;
    let bottom = 2.0
        * lp_norm(&fluct, 2.0)?.powf(1.0 / (n + 1.0))
        * sobolev_seminorm(&fluct, (n + 1.0) / 2.0).powf(n / (n + 1.0));
    Ok(if bottom > 0.0 { top / bottom } else { 0.0 })
}

fn fluctuation(f: &RealField) -> RealField {
    let comps = f
        .components()
        .iter()
        .map(|c| {
            let mean = crate::util::pairwise_sum(c) / c.len() as f64;
            c.iter().map(|v| v - mean).collect()
        })
        .collect();
    RealField::new(f.grid().clone(), comps).expect("same shape")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub t0: f64,
    pub t_final: f64,
    /// `||grad u(T)||_{H^{(n-1)/2}} / ||grad u(T0)||_{H^{(n-1)/2}}`.
    pub grad_ratio: f64,
    /// `||grad u(T)||^2 - ||grad u(T0)||^2` minus the time average of
    /// `||grad u||^2` over `[T0, T]`; nonpositive when the averaged bound holds.
    pub averaged_excess: f64,
    pub dist_linf_final: f64,
    /// Largest Agmon ratio over the recorded states.
    pub agmon_max: Option<f64>,
    pub status: CheckStatus,
}

/// Decay of `||grad u||_{H^{(n-1)/2}}` from `t0` to the end. `threshold` is
/// the required reduction factor.
pub fn check_decay(
    traj: &Trajectory,
    states: &[(f64, SphereField)],
    t0: f64,
    threshold: f64,
) -> Result<DecayReport> {
    let rows = &traj.rows;
    let i0 = rows
        .iter()
        .position(|r| r.t >= t0 - 1e-12)
        .ok_or_else(|| Error::Data(format!("no sample at or after t0 = {t0}")))?;
    let first = &rows[i0];
    let last = traj.last();
    let g0 = first.grad_seminorm;
    let grad_ratio = if g0 > 0.0 {
        last.grad_seminorm / g0
    } else {
        0.0
    };
    let window = &rows[i0..];
    let span = last.t - first.t;
    let mean_sq = if span > 0.0 {
        window
            .windows(2)
            .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].grad_seminorm.powi(2) + w[1].grad_seminorm.powi(2)))
            .sum::<f64>()
            / span
    } else {
        g0 * g0
    };
    let averaged_excess = last.grad_seminorm.powi(2) - g0 * g0 - mean_sq;
    let agmon_max = if states.is_empty() {
        None
    } else {
        let mut m = 0.0f64;
        for (_, s) in states {
            m = m.max(agmon_ratio(s)?);
        }
        Some(m)
    };
    let status = if g0 == 0.0 || grad_ratio <= threshold {
        CheckStatus::Pass
    } else {
        CheckStatus::Inconclusive
    };
    Ok(DecayReport {
        t0: first.t,
        t_final: last.t,
        grad_ratio,
        averaged_excess,
        dist_linf_final: last.dist_linf,
        agmon_max,
        status,
    })
}

/// Tangent perturbation of `u0` with `||v0 - u0||_{L^2} ~= delta0` (exact
/// before renormalization).
pub fn perturb(u0: &SphereField, delta0: f64, band: usize, seed: u64) -> Result<SphereField> {
    if delta0 == 0.0 {
        return Ok(u0.clone());
    }
    let grid = u0.grid();
    let c = u0.values().ncomp();
    let mut r = rng(seed);
    let mut w = RealField::zeros(grid.clone(), c);
    for dir in tangent_basis(u0.base()) {
        let s = band_limited_field(grid, band, &mut r)?;
        for (k, d) in dir.iter().enumerate() {
            for (v, x) in w.component_mut(k).iter_mut().zip(s.component(0)) {
                *v += d * x;
            }
        }
    }
    // project onto the tangent space of u0 pointwise
    let w = crate::field::project_tangent(u0, &w)?;
    let scale = delta0 / lp_norm(&w, 2.0)?;
    let raw = u0.values().combine(1.0, &w, scale)?;
    Ok(renormalize(&raw, u0.base())?.field)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub delta0: f64,
    /// `||w(0)||_{L^2}` after renormalization.
    pub initial_gap: f64,
    /// `sup_t ||w(t)||_{L^2} / delta0` (0 when `delta0 = 0`).
    pub sup_ratio: f64,
    pub sup_gap: f64,
    /// Smallest `c` with `||w(t)|| <= ||w(0)|| e^{c t}` at all samples.
    pub envelope_rate: f64,
    /// `||w(t)|| <= 10 delta0 e^{c t}` at all samples.
    pub within_envelope: bool,
    /// Both runs produced bitwise-identical rows and states.
    pub identical: bool,
    /// `(t, ||w(t)||_{L^2})` at the sampled times.
    pub gaps: Vec<(f64, f64)>,
}

/// Run `u0` and a `delta0`-perturbation of it with the same parameters.
pub fn check_stability(
    u0: &SphereField,
    delta0: f64,
    params: &SimParams,
    seed: u64,
) -> Result<StabilityReport> {
    let v0 = perturb(u0, delta0, 4.min(u0.grid().dims()[0] / 2 - 1), seed)?;
    let mut ra = StateRecorder::default();
    let mut rb = StateRecorder::default();
    let ta = run(u0, params, &mut ra).map_err(|f| f.error)?;
    let tb = run(&v0, params, &mut rb).map_err(|f| f.error)?;
    let identical = ta.rows == tb.rows
        && ra
            .states
            .iter()
            .zip(&rb.states)
            .all(|((_, a), (_, b))| a.values() == b.values());
    let mut gaps = Vec::with_capacity(ra.states.len());
    for ((t, a), (_, b)) in ra.states.iter().zip(&rb.states) {
        gaps.push((*t, lp_norm(&a.values().combine(1.0, b.values(), -1.0)?, 2.0)?));
    }
    let initial_gap = gaps.first().map_or(0.0, |g| g.1);
    let sup_gap = gaps.iter().map(|g| g.1).fold(0.0, f64::max);
    let envelope_rate = if initial_gap > 0.0 {
        gaps.iter()
            .filter(|(t, _)| *t > 0.0)
            .map(|(t, w)| (w / initial_gap).ln() / t)
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        0.0
    };
    let envelope_rate = if envelope_rate.is_finite() { envelope_rate } else { 0.0 };
    let within_envelope = gaps
        .iter()
        .all(|(t, w)| *w <= 10.0 * delta0 * (envelope_rate * t).exp() + f64::MIN_POSITIVE);
    Ok(StabilityReport {
        delta0,
        initial_gap,
        sup_ratio: if delta0 > 0.0 { sup_gap / delta0 } else { 0.0 },
        sup_gap,
        envelope_rate,
        within_envelope,
        identical,
        gaps,
    })
}

/// Inhomogeneous `H^{n/2}` distance between two maps on the same grid.
pub fn critical_distance(a: &SphereField, b: &SphereField) -> Result<f64> {
    let n = a.grid().ndim() as f64;
    Ok(sobolev_norm(&a.values().combine(1.0, b.values(), -1.0)?, n / 2.0))
}
