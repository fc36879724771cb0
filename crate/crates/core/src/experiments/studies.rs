use rayon::prelude::*;
use serde::Serialize;

use super::{combine_status, num, opt_num, references, RunArtifact, Setup, Summary, Table};
use crate::analysis::{
    check_decay, check_l2_growth, check_monotone_estimates, check_stability, critical_distance,
    CheckStatus, DecayReport, L2GrowthReport, MonotoneReport, StabilityReport,
};
use crate::dynamics::{run, Equation, NullSink, Scheme, SimParams, StateRecorder, Trajectory};
use crate::error::{Error, Result};
use crate::field::{make_perturbation_with_seminorm, SphereField};
use crate::io::InitialData;
use crate::norms::{energy, lp_norm};
use crate::spectral::forward_transform;

type States = Vec<(f64, SphereField)>;

fn run_recorded(u0: &SphereField, params: &SimParams) -> Result<(Trajectory, States)> {
    let mut rec = StateRecorder::default();
    let traj = run(u0, params, &mut rec).map_err(|f| f.error)?;
    Ok((traj, rec.states))
}

/// `sup_t` of `dist` over the samples two runs share.
fn sup_distance(
    a: &States,
    b: &States,
    dist: impl Fn(&SphereField, &SphereField) -> Result<f64>,
) -> Result<f64> {
    let mut sup = 0.0f64;
    for ((ta, ua), (tb, ub)) in a.iter().zip(b) {
        if (ta - tb).abs() > 1e-9 * ta.abs().max(1.0) {
            return Err(Error::Data(format!("sample times differ: {ta} vs {tb}")));
        }
        sup = sup.max(dist(ua, ub)?);
    }
    Ok(sup)
}

fn l2_distance(a: &SphereField, b: &SphereField) -> Result<f64> {
    lp_norm(&a.values().combine(1.0, b.values(), -1.0)?, 2.0)
}

/// Convergence order between errors `e1` at step `h1` and `e2` at `h2`.
fn order_between(e1: f64, e2: f64, h1: f64, h2: f64) -> Option<f64> {
    (e1 > 0.0 && e2 > 0.0 && h1 != h2).then(|| (e1 / e2).ln() / (h1 / h2).ln())
}

fn relative_change(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Same run with the step divided by `factor` and rows at the same times.
fn refined_in_time(p: &SimParams, factor: usize) -> SimParams {
    let mut q = p.clone();
    q.dt = p.dt / factor as f64;
    q.sample_every = p.sample_every * factor;
    q
}

fn perturbation_parts(initial: &InitialData) -> Result<(&[f64], usize, u64)> {
    match initial {
        InitialData::Perturbation {
            base, band, seed, ..
        } => Ok((base, *band, *seed)),
        _ => Err(Error::param("this study needs perturbation initial data")),
    }
}

// ---- small data ----

#[derive(Clone, Debug, Serialize)]
pub struct SmallDataRow {
    /// Requested `||u0||_{H^{n/2}}`.
    pub target: f64,
    /// Measured `||u0||_{H^{n/2}}`.
    pub critical_seminorm: f64,
    pub monotone: Vec<MonotoneReport>,
    pub l2: Option<L2GrowthReport>,
    pub decay: Option<DecayReport>,
    pub status: CheckStatus,
    pub error: Option<String>,
    #[serde(skip)]
    pub artifact: Option<RunArtifact>,
}

#[derive(Clone, Debug)]
pub struct SmallDataSummary {
    pub n: usize,
    pub rows: Vec<SmallDataRow>,
    /// Rows that pass while a smaller amplitude does not.
    pub anomalies: Vec<String>,
    artifacts: Vec<RunArtifact>,
}

fn small_data_row(setup: &Setup, target: f64, decay_factor: f64, label: String) -> SmallDataRow {
    let n = setup.n();
    let mut row = SmallDataRow {
        target,
        critical_seminorm: f64::NAN,
        monotone: Vec::new(),
        l2: None,
        decay: None,
        status: CheckStatus::Fail,
        error: None,
        artifact: None,
    };
    let result = (|| -> Result<()> {
        let (base, band, seed) = perturbation_parts(&setup.initial)?;
        let u0 = make_perturbation_with_seminorm(&setup.grid, base, target, band, seed)?;
        row.critical_seminorm = u0.critical_seminorm;
        let traj = run(&u0.field, &setup.params, NullSink).map_err(|f| f.error)?;
        row.artifact = Some(RunArtifact::capture(label, &traj)?);
        for k in 1..=n + 1 {
            row.monotone.push(check_monotone_estimates(&traj, k)?);
        }
        let l2 = check_l2_growth(&traj)?;
        let decay = check_decay(&traj, &[], 0.0, decay_factor)?;
        let l2_status = if l2.fitted_constant.is_finite() {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        row.status = combine_status(
            row.monotone
                .iter()
                .map(|m| m.status)
                .chain([l2_status, decay.status]),
        );
        row.l2 = Some(l2);
        row.decay = Some(decay);
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
        row.status = CheckStatus::Fail;
    }
    row
}

/// Runs with `||u0||_{H^{n/2}}` at each of `seminorms` (same noise shape,
/// rescaled) and the small-data checks on each.
pub fn exp_small_data(
    setup: &Setup,
    seminorms: &[f64],
    decay_factor: f64,
) -> Result<SmallDataSummary> {
    perturbation_parts(&setup.initial)?;
    let rows: Vec<SmallDataRow> = seminorms
        .par_iter()
        .enumerate()
        .map(|(i, &s)| small_data_row(setup, s, decay_factor, format!("small_data_{i:03}")))
        .collect();
    let mut anomalies = Vec::new();
    for a in rows.iter().filter(|r| r.status == CheckStatus::Pass) {
        for b in rows.iter().filter(|r| r.target < a.target) {
            if b.status != CheckStatus::Pass {
                anomalies.push(format!(
                    "seminorm {} passes but smaller {} is {}",
                    a.target, b.target, b.status
                ));
            }
        }
    }
    let artifacts = rows.iter().filter_map(|r| r.artifact.clone()).collect();
    Ok(SmallDataSummary {
        n: setup.n(),
        rows,
        anomalies,
        artifacts,
    })
}

impl Summary for SmallDataSummary {
    fn name(&self) -> &'static str {
        "small_data"
    }

    fn table(&self) -> Table {
        let mut header = vec!["target_seminorm".to_string(), "critical_seminorm".into()];
        for k in 1..=self.n + 1 {
            header.push(format!("monotone_k{k}"));
            header.push(format!("slack_k{k}"));
        }
        header.extend(
            [
                "l2_constant",
                "l2_sup_ratio",
                "grad_ratio",
                "decay",
                "status",
                "anomaly",
                "error",
                "artifacts",
            ]
            .map(String::from),
        );
        let mut t = Table {
            header,
            rows: Vec::new(),
        };
        for r in &self.rows {
            let mut rec = vec![num(r.target), num(r.critical_seminorm)];
            for k in 0..=self.n {
                match r.monotone.get(k) {
                    Some(m) => {
                        rec.push(m.status.to_string());
                        rec.push(num(m.slack));
                    }
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            rec.push(opt_num(r.l2.as_ref().map(|l| l.fitted_constant)));
            rec.push(opt_num(r.l2.as_ref().map(|l| l.sup_ratio)));
            rec.push(opt_num(r.decay.as_ref().map(|d| d.grad_ratio)));
            rec.push(r.decay.as_ref().map_or(String::new(), |d| d.status.to_string()));
            rec.push(r.status.to_string());
            let flagged = self
                .anomalies
                .iter()
                .any(|a| a.starts_with(&format!("seminorm {} ", r.target)));
            rec.push(flagged.to_string());
            rec.push(r.error.clone().unwrap_or_default());
            rec.push(references(&r.artifact));
            t.rows.push(rec);
        }
        t
    }

    fn artifacts(&self) -> &[RunArtifact] {
        &self.artifacts
    }

    fn passed(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.error.is_none() && r.status != CheckStatus::Fail)
    }
}

// ---- epsilon continuation ----

#[derive(Clone, Debug)]
pub struct EpsilonSummary {
    pub eps: Vec<f64>,
    /// `sup_t ||u_i - u_{i+1}||_{H^{n/2}}` for consecutive list entries.
    pub pairwise: Vec<f64>,
    /// `sup_t ||u_i - u_last||_{H^{n/2}}` for every entry but the last.
    pub to_last: Vec<f64>,
    /// Least-squares slope of `log to_last` against `log eps` (positive
    /// entries only).
    pub order: Option<f64>,
    pub strictly_decreasing: bool,
    artifacts: Vec<RunArtifact>,
}

/// Parameters of the regularized flow at `eps`; `eps = 0` selects HLLG.
fn with_eps(p: &SimParams, eps: f64) -> SimParams {
    let mut q = p.clone();
    q.eps = eps;
    q.equation = if eps > 0.0 {
        Equation::Llgr
    } else {
        Equation::Hllg
    };
    q
}

fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// The same data under the regularized flow for each `eps` (0 meaning the
/// unregularized flow).
pub fn exp_epsilon_sweep(setup: &Setup, eps: &[f64]) -> Result<EpsilonSummary> {
    if eps.is_empty() {
        return Err(Error::param("empty eps list"));
    }
    let u0 = setup.initial_state()?;
    let n = setup.n();
    for &e in eps {
        with_eps(&setup.params, e).validate(n)?;
    }
    let runs = eps
        .par_iter()
        .enumerate()
        .map(|(i, &e)| {
            let (traj, states) = run_recorded(&u0, &with_eps(&setup.params, e))?;
            Ok((RunArtifact::capture(format!("eps_{i:03}"), &traj)?, states))
        })
        .collect::<Result<Vec<_>>>()?;
    let dist = |i: usize, j: usize| sup_distance(&runs[i].1, &runs[j].1, critical_distance);
    let pairwise = (0..eps.len() - 1)
        .map(|i| dist(i, i + 1))
        .collect::<Result<Vec<_>>>()?;
    let last = eps.len() - 1;
    let to_last = (0..last).map(|i| dist(i, last)).collect::<Result<Vec<_>>>()?;
    let order = log_slope(
        &eps[..last]
            .iter()
            .copied()
            .zip(to_last.iter().copied())
            .collect::<Vec<_>>(),
    );
    Ok(EpsilonSummary {
        eps: eps.to_vec(),
        strictly_decreasing: pairwise.windows(2).all(|w| w[1] < w[0]),
        pairwise,
        to_last,
        order: if eps[last] == 0.0 { order } else { None },
        artifacts: runs.into_iter().map(|r| r.0).collect(),
    })
}

impl Summary for EpsilonSummary {
    fn name(&self) -> &'static str {
        "epsilon"
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&[
            "eps",
            "eps_next",
            "sup_difference_next",
            "sup_difference_last",
            "fitted_order",
            "strictly_decreasing",
            "artifacts",
        ]);
        for i in 0..self.eps.len() {
            t.rows.push(vec![
                num(self.eps[i]),
                opt_num(self.eps.get(i + 1).copied()),
                opt_num(self.pairwise.get(i).copied()),
                opt_num(self.to_last.get(i).copied()),
                opt_num(self.order),
                self.strictly_decreasing.to_string(),
                references(self.artifacts.get(i)),
            ]);
        }
        t
    }

    fn artifacts(&self) -> &[RunArtifact] {
        &self.artifacts
    }

    fn passed(&self) -> bool {
        self.strictly_decreasing
    }
}

// ---- conservative flow ----

#[derive(Clone, Debug)]
pub struct ConservativeSummary {
    pub dts: Vec<f64>,
    pub initial_energy: f64,
    /// `|E(T) - E(0)| / E(0)` per step size (absolute when `E(0) = 0`).
    pub drifts: Vec<f64>,
    /// Observed order between consecutive step sizes.
    pub orders: Vec<Option<f64>>,
    artifacts: Vec<RunArtifact>,
}

/// Half-wave map runs with RK4 at each step size in `dts`.
pub fn exp_conservative(setup: &Setup, dts: &[f64]) -> Result<ConservativeSummary> {
    let u0 = setup.initial_state()?;
    let n = setup.n();
    let params = dts
        .iter()
        .map(|&dt| {
            let mut p = setup.params.clone();
            p.equation = Equation::Hwm;
            p.damping = 0.0;
            p.eps = 0.0;
            p.scheme = Scheme::Rk4;
            p.dt = dt;
            p.sample_every = p.steps().max(1);
            p.validate(n)?;
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let trajs = params
        .par_iter()
        .map(|p| run(&u0, p, NullSink).map_err(|f| f.error))
        .collect::<Result<Vec<_>>>()?;
    let e0 = trajs.first().map_or(0.0, |t| t.initial().energy);
    let drifts: Vec<f64> = trajs
        .iter()
        .map(|t| {
            let d = (t.last().energy - e0).abs();
            if e0 > 0.0 {
                d / e0
            } else {
                d
            }
        })
        .collect();
    let orders = (0..dts.len().saturating_sub(1))
        .map(|i| order_between(drifts[i], drifts[i + 1], dts[i], dts[i + 1]))
        .collect();
    let artifacts = trajs
        .iter()
        .enumerate()
        .map(|(i, t)| RunArtifact::capture(format!("hwm_{i:03}"), t))
        .collect::<Result<_>>()?;
    Ok(ConservativeSummary {
        dts: dts.to_vec(),
        initial_energy: e0,
        drifts,
        orders,
        artifacts,
    })
}

impl Summary for ConservativeSummary {
    fn name(&self) -> &'static str {
        "conservative"
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["dt", "initial_energy", "relative_drift", "order_to_next", "artifacts"]);
        for i in 0..self.dts.len() {
            t.rows.push(vec![
                num(self.dts[i]),
                num(self.initial_energy),
                num(self.drifts[i]),
                opt_num(self.orders.get(i).copied().flatten()),
                references(self.artifacts.get(i)),
            ]);
        }
        t
    }

    fn artifacts(&self) -> &[RunArtifact] {
        &self.artifacts
    }

    fn passed(&self) -> bool {
        self.drifts.iter().all(|d| d.is_finite())
    }
}

// ---- threshold probe ----

/// Largest tolerated share of the `H^{1/2}` energy in the top third of the
/// resolved band.
pub const TAIL_LIMIT: f64 = 1e-8;

/// Share of `sum |xi| |u_k|^2` (nonzero modes) carried by modes with some
/// `|k_j| > N_j / 3`.
pub fn spectral_tail(u: &SphereField) -> f64 {
    let grid = u.grid();
    let uh = forward_transform(u.values());
    let xi2 = grid.xi_squared();
    let (mut total, mut tail) = (0.0, 0.0);
    for i in 0..grid.len() {
        let w = xi2[i].sqrt();
        if w == 0.0 {
            continue;
        }
        let e: f64 = uh.components().iter().map(|c| c[i].norm_sqr()).sum::<f64>() * w;
        total += e;
        let high = (0..grid.ndim())
            .any(|a| 3 * grid.wavenumber(i, a).unsigned_abs() as usize > grid.dims()[a]);
        if high {
            tail += e;
        }
    }
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ThresholdClass {
    Decayed,
    Concentrating,
    Inconclusive,
}

impl std::fmt::Display for ThresholdClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ThresholdClass::Decayed => "decayed",
            ThresholdClass::Concentrating => "concentrating",
            ThresholdClass::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelResult {
    pub nodes: usize,
    /// `||grad u(T)|| / ||grad u(0)||` in `H^{(n-1)/2}`.
    pub grad_ratio: f64,
    pub tail_initial: f64,
    pub tail_final: f64,
    pub tail_max: f64,
    pub class: ThresholdClass,
    #[serde(skip)]
    pub artifact: RunArtifact,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdRow {
    pub energy: f64,
    pub degree: i64,
    /// Angle-profile amplitude giving `energy`.
    pub amplitude: f64,
    pub levels: Vec<LevelResult>,
    pub class: ThresholdClass,
    pub refinement_agreement: bool,
    pub advice: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ThresholdSummary {
    pub rows: Vec<ThresholdRow>,
    /// `(largest decayed energy, smallest concentrating energy)` when the
    /// two classes are separated.
    pub window: Option<(f64, f64)>,
    artifacts: Vec<RunArtifact>,
}

fn classify(grad_ratio: f64, tail_initial: f64, tail_final: f64, tail_max: f64, decay_factor: f64) -> ThresholdClass {
    if tail_max > TAIL_LIMIT {
        ThresholdClass::Inconclusive
    } else if grad_ratio <= decay_factor {
        ThresholdClass::Decayed
    } else if grad_ratio > 1.0 && tail_final > 10.0 * tail_initial.max(1e-20) {
        ThresholdClass::Concentrating
    } else {
        ThresholdClass::Inconclusive
    }
}

/// Amplitude `a` of the profile `2 pi d x / L + a sin(2 pi m x / L)` with
/// energy `target`, by bisection.
fn amplitude_for_energy(
    grid: &std::sync::Arc<crate::spectral::SpectralGrid>,
    degree: i64,
    mode: u32,
    target: f64,
) -> Result<f64> {
    let e = |a: f64| -> Result<f64> {
        let u = InitialData::GreatCircle {
            degree,
            amplitude: a,
            mode,
        }
        .build(grid)?;
        Ok(energy(&u))
    };
    let e0 = e(0.0)?;
    if target < e0 * (1.0 - 1e-12) {
        return Err(Error::param(format!(
            "energy {target} is below the degree-{degree} minimum {e0} of this family"
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while e(hi)? < target {
        hi *= 2.0;
        if hi > 64.0 {
            return Err(Error::param(format!("energy {target} is out of reach of this family")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if e(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn threshold_row(
    setup: &Setup,
    index: usize,
    target: f64,
    levels: usize,
    decay_factor: f64,
) -> ThresholdRow {
    let (degree, mode) = match setup.initial {
        InitialData::GreatCircle { degree, mode, .. } => (degree, mode),
        _ => (0, 1),
    };
    let mut row = ThresholdRow {
        energy: target,
        degree,
        amplitude: f64::NAN,
        levels: Vec::new(),
        class: ThresholdClass::Inconclusive,
        refinement_agreement: false,
        advice: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let grids = (0..levels)
            .map(|l| setup.grid.refined(1 << l))
            .collect::<Result<Vec<_>>>()?;
        let finest = grids.last().expect("at least one level");
        let a = amplitude_for_energy(finest, degree, mode, target)?;
        row.amplitude = a;
        for g in &grids {
            let u0 = InitialData::GreatCircle {
                degree,
                amplitude: a,
                mode,
            }
            .build(g)?;
            let (traj, states) = run_recorded(&u0, &setup.params)?;
            let tails: Vec<f64> = states.iter().map(|(_, s)| spectral_tail(s)).collect();
            let g0 = traj.initial().grad_seminorm;
            let grad_ratio = if g0 > 0.0 {
                traj.last().grad_seminorm / g0
            } else {
                0.0
            };
            let tail_initial = tails[0];
            let tail_final = *tails.last().expect("nonempty");
            let tail_max = tails.iter().cloned().fold(0.0, f64::max);
            row.levels.push(LevelResult {
                nodes: g.dims()[0],
                grad_ratio,
                tail_initial,
                tail_final,
                tail_max,
                class: classify(grad_ratio, tail_initial, tail_final, tail_max, decay_factor),
                artifact: RunArtifact::capture(
                    format!("threshold_{index:03}_n{}", g.dims()[0]),
                    &traj,
                )?,
            });
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
        return row;
    }
    let first = row.levels[0].class;
    row.refinement_agreement = row.levels.iter().all(|l| l.class == first);
    row.class = if row.refinement_agreement {
        first
    } else {
        ThresholdClass::Inconclusive
    };
    let last = row.levels.last().expect("nonempty");
    if last.tail_max > TAIL_LIMIT {
        row.advice = Some(format!(
            "spectral tail {:.1e} reaches the cutoff; refine beyond {} nodes or shorten the horizon",
            last.tail_max, last.nodes
        ));
    } else if !row.refinement_agreement {
        row.advice = Some("levels disagree; add a refinement level".into());
    }
    row
}

/// Heat-flow runs from equator maps with the energies in `energies`, each
/// on `levels` successively doubled grids.
pub fn exp_threshold_probe(
    setup: &Setup,
    energies: &[f64],
    levels: usize,
    decay_factor: f64,
) -> Result<ThresholdSummary> {
    if setup.n() != 1 {
        return Err(Error::param("the threshold probe runs in one dimension"));
    }
    if setup.params.equation != Equation::Hhhf {
        return Err(Error::param("the threshold probe uses the heat flow (HHHF)"));
    }
    if !matches!(setup.initial, InitialData::GreatCircle { .. }) {
        return Err(Error::param("the threshold probe needs great_circle initial data"));
    }
    if levels == 0 {
        return Err(Error::param("need at least one grid level"));
    }
    let rows: Vec<ThresholdRow> = energies
        .par_iter()
        .enumerate()
        .map(|(i, &e)| threshold_row(setup, i, e, levels, decay_factor))
        .collect();
    let decayed = rows
        .iter()
        .filter(|r| r.class == ThresholdClass::Decayed)
        .map(|r| r.energy)
        .fold(f64::NEG_INFINITY, f64::max);
    let concentrating = rows
        .iter()
        .filter(|r| r.class == ThresholdClass::Concentrating)
        .map(|r| r.energy)
        .fold(f64::INFINITY, f64::min);
    let window = (decayed.is_finite() && concentrating.is_finite() && decayed < concentrating)
        .then_some((decayed, concentrating));
    let artifacts = rows
        .iter()
        .flat_map(|r| r.levels.iter().map(|l| l.artifact.clone()))
        .collect();
    Ok(ThresholdSummary {
        rows,
        window,
        artifacts,
    })
}

impl Summary for ThresholdSummary {
    fn name(&self) -> &'static str {
        "threshold"
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&[
            "energy",
            "degree",
            "amplitude",
            "nodes",
            "grad_ratio",
            "tail_initial",
            "tail_final",
            "tail_max",
            "level_class",
            "class",
            "refinement_agreement",
            "window",
            "advice",
            "error",
            "artifacts",
        ]);
        let window = self
            .window
            .map_or(String::new(), |(a, b)| format!("{a:e}..{b:e}"));
        for r in &self.rows {
            let levels = |f: &dyn Fn(&LevelResult) -> String| {
                r.levels.iter().map(f).collect::<Vec<_>>().join(";")
            };
            t.rows.push(vec![
                num(r.energy),
                r.degree.to_string(),
                num(r.amplitude),
                levels(&|l| l.nodes.to_string()),
                levels(&|l| num(l.grad_ratio)),
                levels(&|l| num(l.tail_initial)),
                levels(&|l| num(l.tail_final)),
                levels(&|l| num(l.tail_max)),
                levels(&|l| l.class.to_string()),
                r.class.to_string(),
                r.refinement_agreement.to_string(),
                window.clone(),
                r.advice.clone().unwrap_or_default(),
                r.error.clone().unwrap_or_default(),
                references(r.levels.iter().map(|l| &l.artifact)),
            ]);
        }
        t
    }

    fn artifacts(&self) -> &[RunArtifact] {
        &self.artifacts
    }

    fn passed(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.error.is_none() && r.refinement_agreement)
    }
}

// ---- uniqueness ----

#[derive(Clone, Debug)]
pub struct UniquenessSummary {
    pub deltas: Vec<f64>,
    pub dt: f64,
    /// Two-run comparison per perturbation size at `dt`.
    pub at_dt: Vec<StabilityReport>,
    /// The same at `dt / 2`.
    pub at_half_dt: Vec<StabilityReport>,
    /// Relative change of the envelope rate under step halving, per size.
    pub envelope_change_dt: Vec<f64>,
    /// Relative change of the envelope rate between consecutive sizes.
    pub envelope_change_delta: Vec<f64>,
    /// `(dt, sup_t ||u_etdrk2 - u_rk4||_{L^2})` at `dt`, `dt/2`, `dt/4`.
    pub cross_scheme: Vec<(f64, f64)>,
    pub cross_orders: Vec<Option<f64>>,
    artifacts: Vec<RunArtifact>,
}

/// Stability of the flow of `setup` under perturbations of size `deltas`,
/// plus the ETDRK2/RK4 cross-check.
pub fn exp_uniqueness(setup: &Setup, deltas: &[f64], seed: u64) -> Result<UniquenessSummary> {
    let u0 = setup.initial_state()?;
    let p = &setup.params;
    let half = refined_in_time(p, 2);
    let pairs = deltas
        .par_iter()
        .map(|&d| {
            Ok((
                check_stability(&u0, d, p, seed)?,
                check_stability(&u0, d, &half, seed)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (at_dt, at_half_dt): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let envelope_change_dt = at_dt
        .iter()
        .zip(&at_half_dt)
        .map(|(a, b)| relative_change(a.envelope_rate, b.envelope_rate))
        .collect();
    let envelope_change_delta = at_dt
        .windows(2)
        .map(|w| relative_change(w[0].envelope_rate, w[1].envelope_rate))
        .collect();

    let factors = [1usize, 2, 4];
    let cross_runs = factors
        .par_iter()
        .map(|&f| {
            let mut e = refined_in_time(p, f);
            e.scheme = Scheme::Etdrk2;
            let mut r = e.clone();
            r.scheme = Scheme::Rk4;
            let (te, se) = run_recorded(&u0, &e)?;
            let (tr, sr) = run_recorded(&u0, &r)?;
            let diff = sup_distance(&se, &sr, l2_distance)?;
            Ok((
                (e.dt, diff),
                [
                    RunArtifact::capture(format!("etdrk2_dt{f}"), &te)?,
                    RunArtifact::capture(format!("rk4_dt{f}"), &tr)?,
                ],
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let cross_scheme: Vec<(f64, f64)> = cross_runs.iter().map(|c| c.0).collect();
    let cross_orders = cross_scheme
        .windows(2)
        .map(|w| order_between(w[0].1, w[1].1, w[0].0, w[1].0))
        .collect();
    Ok(UniquenessSummary {
        deltas: deltas.to_vec(),
        dt: p.dt,
        at_dt,
        at_half_dt,
        envelope_change_dt,
        envelope_change_delta,
        cross_scheme,
        cross_orders,
        artifacts: cross_runs.into_iter().flat_map(|c| c.1).collect(),
    })
}

impl Summary for UniquenessSummary {
    fn name(&self) -> &'static str {
        "uniqueness"
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&[
            "delta0",
            "sup_ratio",
            "envelope_rate",
            "envelope_rate_half_dt",
            "envelope_change_dt",
            "envelope_change_next_delta",
            "within_envelope",
            "identical",
            "cross_dt",
            "cross_difference",
            "cross_order_to_next",
            "artifacts",
        ]);
        let rows = self.deltas.len().max(self.cross_scheme.len());
        for i in 0..rows {
            let mut rec = match (self.at_dt.get(i), self.at_half_dt.get(i)) {
                (Some(a), Some(b)) => vec![
                    num(a.delta0),
                    num(a.sup_ratio),
                    num(a.envelope_rate),
                    num(b.envelope_rate),
                    num(self.envelope_change_dt[i]),
                    opt_num(self.envelope_change_delta.get(i).copied()),
                    a.within_envelope.to_string(),
                    a.identical.to_string(),
                ],
                _ => vec![String::new(); 8],
            };
            match self.cross_scheme.get(i) {
                Some(&(dt, d)) => {
                    rec.push(num(dt));
                    rec.push(num(d));
                    rec.push(opt_num(self.cross_orders.get(i).copied().flatten()));
                    rec.push(references(&self.artifacts[2 * i..2 * i + 2]));
                }
                None => rec.extend(vec![String::new(); 4]),
            }
            t.rows.push(rec);
        }
        t
    }

    fn artifacts(&self) -> &[RunArtifact] {
        &self.artifacts
    }

    fn passed(&self) -> bool {
        self.at_dt
            .iter()
            .chain(&self.at_half_dt)
            .all(|r| if r.delta0 == 0.0 { r.identical } else { r.within_envelope })
    }
}
