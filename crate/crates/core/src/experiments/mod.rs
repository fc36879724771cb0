//! Multi-run studies, sweep specs and the run-and-check driver behind the
//! command line.

mod studies;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::analysis::{
    check_decay, check_energy_identity, check_l2_growth, check_monotone_estimates, CheckStatus,
};
use crate::dynamics::{run, Sink, SimParams, Trajectory};
use crate::error::{Error, Result};
use crate::field::SphereField;
use crate::io::{content_hash, encode_snapshot, write_rows, ChecksConfig, Config, InitialData};
use crate::norms::DiagnosticsRow;
use crate::spectral::SpectralGrid;

pub use studies::{
    exp_conservative, exp_epsilon_sweep, exp_small_data, exp_threshold_probe, exp_uniqueness,
    spectral_tail, ConservativeSummary, EpsilonSummary, LevelResult, SmallDataRow,
    SmallDataSummary, ThresholdClass, ThresholdRow, ThresholdSummary, UniquenessSummary,
    TAIL_LIMIT,
};
pub(crate) use sweep::RawSweep;
pub use sweep::{parse_sweep_spec, run_sweep, Study, SweepParameter, SweepSpec};

/// Grid, parameters and initial data of one run.
#[derive(Clone, Debug)]
pub struct Setup {
    pub grid: Arc<SpectralGrid>,
    pub params: SimParams,
    pub initial: InitialData,
}

impl Setup {
    pub fn from_config(c: &Config) -> Result<Self> {
        Ok(Setup {
            grid: c.grid.build()?,
            params: c.params.clone(),
            initial: c.initial_data.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.grid.ndim()
    }

    pub fn initial_state(&self) -> Result<SphereField> {
        self.initial.build(&self.grid)
    }
}

/// Time series and final snapshot of one run, in their on-disk encodings.
#[derive(Clone, Debug)]
pub struct RunArtifact {
    pub label: String,
    pub timeseries: Vec<u8>,
    pub snapshot: Vec<u8>,
    pub timeseries_sha256: String,
    pub snapshot_sha256: String,
}

impl RunArtifact {
    pub fn capture(label: impl Into<String>, traj: &Trajectory) -> Result<Self> {
        let mut timeseries = Vec::new();
        write_rows(&mut timeseries, &traj.params.seminorm_orders, &traj.rows)?;
        let snapshot = encode_snapshot(&traj.final_state, traj.last().t);
        Ok(RunArtifact {
            label: label.into(),
            timeseries_sha256: content_hash(&timeseries),
            snapshot_sha256: content_hash(&snapshot),
            timeseries,
            snapshot,
        })
    }

    pub fn timeseries_name(&self) -> String {
        format!("{}.csv", self.label)
    }

    pub fn snapshot_name(&self) -> String {
        format!("{}.hllg", self.label)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, bytes) in [
            (self.timeseries_name(), &self.timeseries),
            (self.snapshot_name(), &self.snapshot),
        ] {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// `label:csv-hash:snapshot-hash`, the reference written into summaries.
    pub fn reference(&self) -> String {
        format!("{}:{}:{}", self.label, self.timeseries_sha256, self.snapshot_sha256)
    }
}

/// References of several artifacts, `;`-separated.
fn references<'a>(artifacts: impl IntoIterator<Item = &'a RunArtifact>) -> String {
    artifacts
        .into_iter()
        .map(RunArtifact::reference)
        .collect::<Vec<_>>()
        .join(";")
}

/// A plain text table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| Error::Format(format!("csv: {e}"));
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        w.into_inner()
            .map_err(|e| Error::Format(format!("csv: {}", e.error())))
    }
}

pub(crate) fn num(v: f64) -> String {
    format!("{v:e}")
}

pub(crate) fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

/// Result of a study: a table plus the runs it was computed from.
pub trait Summary: Send {
    fn name(&self) -> &'static str;
    fn table(&self) -> Table;
    fn artifacts(&self) -> &[RunArtifact];
    /// Whether every assertable check passed.
    fn passed(&self) -> bool;
}

/// Write every artifact and `summary.csv` into `dir`; returns the summary
/// path.
pub fn write_summary(summary: &dyn Summary, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for a in summary.artifacts() {
        a.write(dir)?;
    }
    let path = dir.join("summary.csv");
    let bytes = summary.table().to_csv()?;
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// One enabled check and its verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

/// Bound on `sup_t ||u - Q||_{L^2} / ||u0 - Q||_{L^2}` used by the `l2_growth`
/// check in dimensions 2 and 3.
pub const L2_GROWTH_BOUND: f64 = 10.0;

/// Evaluate the checks enabled in `checks` on a finished trajectory.
/// `states` feeds the Agmon ratio of the decay check and may be empty.
pub fn evaluate_checks(
    traj: &Trajectory,
    states: &[(f64, SphereField)],
    checks: &ChecksConfig,
) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    if let Some(tol) = checks.energy_identity {
        let r = check_energy_identity(traj, "run")?;
        out.push(CheckOutcome {
            name: "energy_identity".into(),
            status: if r.defect <= tol {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            detail: format!("defect {:e} (tolerance {tol:e})", r.defect),
        });
    }
    for &k in &checks.monotone {
        let r = check_monotone_estimates(traj, k)?;
        out.push(CheckOutcome {
            name: format!("monotone_k{k}"),
            status: r.status,
            detail: format!("slack {:e}, rhs {:e}", r.slack, r.rhs),
        });
    }
    if checks.l2_growth {
        let r = check_l2_growth(traj)?;
        let ok = if r.n == 1 {
            r.fitted_constant.is_finite()
        } else {
            r.sup_ratio < L2_GROWTH_BOUND
        };
        out.push(CheckOutcome {
            name: "l2_growth".into(),
            status: if ok {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            detail: format!(
                "fitted constant {:e}, sup ratio {:e}",
                r.fitted_constant, r.sup_ratio
            ),
        });
    }
    if let Some(factor) = checks.decay {
        let r = check_decay(traj, states, 0.0, factor)?;
        out.push(CheckOutcome {
            name: "decay".into(),
            status: r.status,
            detail: format!(
                "gradient ratio {:e}, final sup distance {:e}",
                r.grad_ratio, r.dist_linf_final
            ),
        });
    }
    Ok(out)
}

/// Worst status in a list: fail, then inconclusive, then outside-hypothesis.
pub fn combine_status(statuses: impl IntoIterator<Item = CheckStatus>) -> CheckStatus {
    let rank = |s: CheckStatus| match s {
        CheckStatus::Pass => 0,
        CheckStatus::OutsideHypothesis => 1,
        CheckStatus::Inconclusive => 2,
        CheckStatus::Fail => 3,
    };
    statuses
        .into_iter()
        .max_by_key(|&s| rank(s))
        .unwrap_or(CheckStatus::Pass)
}

/// Records states for the decay check and writes snapshots every
/// `snapshot_every` rows.
struct SimulationSink<'a> {
    dir: &'a Path,
    snapshot_every: usize,
    keep_states: bool,
    rows_seen: usize,
    states: Vec<(f64, SphereField)>,
    written: Vec<PathBuf>,
}

impl Sink for SimulationSink<'_> {
    fn sample(&mut self, row: &DiagnosticsRow, state: &SphereField) -> Result<()> {
        if self.snapshot_every > 0 && self.rows_seen % self.snapshot_every == 0 {
            let path = self.dir.join(format!("snapshot_{:06}.hllg", self.rows_seen));
            crate::io::write_snapshot(state, row.t, &path)?;
            self.written.push(path);
        }
        if self.keep_states {
            self.states.push((row.t, state.clone()));
        }
        self.rows_seen += 1;
        Ok(())
    }
}

/// Outcome of [`simulate`].
#[derive(Debug)]
pub struct Simulation {
    pub trajectory: Trajectory,
    pub checks: Vec<CheckOutcome>,
    /// Every file written, with its SHA-256.
    pub files: Vec<(PathBuf, String)>,
    /// Set when the run stopped early; `trajectory` then ends at the last
    /// good state.
    pub failure: Option<String>,
}

impl Simulation {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
            && self
                .checks
                .iter()
                .all(|c| matches!(c.status, CheckStatus::Pass | CheckStatus::OutsideHypothesis))
    }
}

/// Run a configuration, writing the time series, snapshots and final state
/// into `dir`.
pub fn simulate(config: &Config, dir: &Path) -> Result<Simulation> {
    let setup = Setup::from_config(config)?;
    let u0 = setup.initial_state()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sink = SimulationSink {
        dir,
        snapshot_every: config.output.snapshot_every,
        keep_states: config.checks.decay.is_some(),
        rows_seen: 0,
        states: Vec::new(),
        written: Vec::new(),
    };
    let (trajectory, failure) = match run(&u0, &setup.params, &mut sink) {
        Ok(t) => (t, None),
        Err(f) => {
            let message = f.to_string();
            (*f.partial, Some(message))
        }
    };
    let ts_path = dir.join(&config.output.timeseries);
    crate::io::write_timeseries(&trajectory.rows, &setup.params.seminorm_orders, &ts_path)?;
    let final_path = dir.join("final.hllg");
    if !trajectory.rows.is_empty() {
        crate::io::write_snapshot(&trajectory.final_state, trajectory.last().t, &final_path)?;
        sink.written.push(final_path);
    }
    let checks = if failure.is_none() {
        evaluate_checks(&trajectory, &sink.states, &config.checks)?
    } else {
        Vec::new()
    };
    let mut files = Vec::new();
    for path in std::iter::once(ts_path).chain(sink.written) {
        let hash = crate::io::file_hash(&path)?;
        files.push((path, hash));
    }
    Ok(Simulation {
        trajectory,
        checks,
        files,
        failure,
    })
}
