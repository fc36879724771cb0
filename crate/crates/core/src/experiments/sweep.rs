//! Sweep specs: a run configuration plus a `[sweep]` section naming the
//! study, the swept parameter and its values.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Deserialize;
use toml::Spanned;

use super::{
    combine_status, evaluate_checks, exp_conservative, exp_epsilon_sweep, exp_small_data,
    exp_threshold_probe, exp_uniqueness, num, references, write_summary, CheckOutcome, RunArtifact,
    Setup, Summary, Table,
};
use crate::analysis::CheckStatus;
use crate::dynamics::{run, Equation, StateRecorder};
use crate::error::{ConfigIssue, Error, Result};
use crate::io::{line_of, parse_document, Config, InitialData};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct RawSweep {
    study: Option<Spanned<String>>,
    parameter: Spanned<String>,
    values: Spanned<Vec<f64>>,
    output: Option<String>,
    seed: Option<u64>,
    levels: Option<Spanned<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Study {
    /// Independent runs with the base config's checks.
    Runs,
    SmallData,
    Epsilon,
    Conservative,
    Threshold,
    Uniqueness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParameter {
    /// Perturbation amplitude (or its seminorm target), or the angle
    /// amplitude of equator data.
    Amplitude,
    Eps,
    Dt,
    /// Box length, applied to every axis.
    Box,
    /// Initial energy (threshold probe).
    Energy,
    /// Perturbation size (uniqueness study).
    Delta,
}

macro_rules! names {
    ($t:ty, $what:literal, $($v:ident => $s:literal),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),+ })
            }
        }

        impl FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(Self::$v),)+
                    _ => Err(Error::param(format!(concat!("unknown ", $what, " '{}'"), s))),
                }
            }
        }
    };
}

names!(Study, "study", Runs => "runs", SmallData => "small_data", Epsilon => "epsilon",
       Conservative => "conservative", Threshold => "threshold", Uniqueness => "uniqueness");
names!(SweepParameter, "sweep parameter", Amplitude => "amplitude", Eps => "eps", Dt => "dt",
       Box => "box", Energy => "energy", Delta => "delta");

impl Study {
    fn accepts(self, p: SweepParameter) -> bool {
        use SweepParameter::*;
        match self {
            Study::Runs => matches!(p, Amplitude | Eps | Dt | Box),
            Study::SmallData => p == Amplitude,
            Study::Epsilon => p == Eps,
            Study::Conservative => p == Dt,
            Study::Threshold => p == Energy,
            Study::Uniqueness => p == Delta,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: Config,
    pub study: Study,
    pub parameter: SweepParameter,
    /// Non-empty, strictly monotone.
    pub values: Vec<f64>,
    /// Output directory key, relative to the output root.
    pub output: String,
    pub seed: u64,
    /// Grid levels of the threshold probe.
    pub levels: usize,
}

impl SweepSpec {
    /// Override the seed of the study and of the initial data.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.base.initial_data.set_seed(seed);
    }

    /// The base config with the swept parameter set to `value`.
    pub fn variant(&self, value: f64) -> Result<Config> {
        apply(&self.base, self.parameter, value)
    }
}

fn apply(base: &Config, parameter: SweepParameter, value: f64) -> Result<Config> {
    let mut c = base.clone();
    match parameter {
        SweepParameter::Amplitude => match &mut c.initial_data {
            InitialData::Perturbation {
                amplitude, seminorm, ..
            } => {
                if seminorm.is_some() {
                    *seminorm = Some(value);
                } else {
                    *amplitude = Some(value);
                }
            }
            InitialData::GreatCircle { amplitude, .. } => *amplitude = value,
            InitialData::Constant { .. } => {
                return Err(Error::param("constant initial data have no amplitude"))
            }
        },
        SweepParameter::Eps => {
            c.params.eps = value;
            c.params.equation = match (c.params.equation, value > 0.0) {
                (Equation::Hllg, true) => Equation::Llgr,
                (Equation::Llgr, false) => Equation::Hllg,
                (e, _) => e,
            };
        }
        SweepParameter::Dt => c.params.dt = value,
        SweepParameter::Box => c.grid.lengths.iter_mut().for_each(|l| *l = value),
        SweepParameter::Energy | SweepParameter::Delta => {}
    }
    c.params.validate(c.grid.dims.len())?;
    if !c.grid.lengths.iter().all(|l| *l > 0.0 && l.is_finite()) {
        return Err(Error::param("box lengths must be positive"));
    }
    Ok(c)
}

/// Parse a sweep spec: a run config with an added `[sweep]` section.
pub fn parse_sweep_spec(text: &str) -> Result<SweepSpec> {
    let (base, raw) = parse_document(text)?;
    let raw = raw.ok_or_else(|| {
        Error::Config(vec![ConfigIssue {
            line: None,
            message: "missing [sweep] section".into(),
        }])
    })?;
    let s = raw.get_ref();
    let mut issues = Vec::new();
    let mut at = |span: std::ops::Range<usize>, message: String| {
        issues.push(ConfigIssue {
            line: Some(line_of(text, span.start)),
            message,
        })
    };
    let study = match &s.study {
        None => Study::Runs,
        Some(v) => v.get_ref().parse().unwrap_or_else(|e: Error| {
            at(v.span(), e.to_string());
            Study::Runs
        }),
    };
    let parameter = s.parameter.get_ref().parse().unwrap_or_else(|e: Error| {
        at(s.parameter.span(), e.to_string());
        SweepParameter::Amplitude
    });
    if !study.accepts(parameter) {
        at(
            s.parameter.span(),
            format!("study '{study}' cannot sweep '{parameter}'"),
        );
    }
    let values = s.values.get_ref().clone();
    let vspan = s.values.span();
    if values.is_empty() {
        at(vspan.clone(), "value list must not be empty".into());
    } else if values.iter().any(|v| !v.is_finite()) {
        at(vspan.clone(), "values must be finite".into());
    } else {
        let up = values.windows(2).all(|w| w[1] > w[0]);
        let down = values.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            at(vspan.clone(), "values must be strictly monotone".into());
        }
    }
    let n = base.grid.dims.len();
    let needs_nonnegative = matches!(
        parameter,
        SweepParameter::Amplitude | SweepParameter::Eps | SweepParameter::Delta
    );
    if needs_nonnegative && values.iter().any(|v| *v < 0.0) {
        at(vspan.clone(), format!("{parameter} values must be >= 0"));
    }
    match study {
        Study::Runs => {
            for &v in &values {
                if let Err(e) = apply(&base, parameter, v) {
                    at(vspan.clone(), format!("value {v}: {e}"));
                }
            }
        }
        Study::SmallData | Study::Uniqueness
            if !matches!(base.initial_data, InitialData::Perturbation { .. }) =>
        {
            at(vspan.clone(), format!("study '{study}' needs perturbation initial data"));
        }
        Study::Epsilon if !matches!(base.params.equation, Equation::Hllg | Equation::Llgr) => {
            at(vspan.clone(), "the epsilon study needs HLLG or LLGR".into());
        }
        Study::Conservative => {
            for &v in &values {
                let mut p = base.params.clone();
                p.equation = Equation::Hwm;
                p.damping = 0.0;
                p.eps = 0.0;
                p.dt = v;
                if let Err(e) = p.validate(n) {
                    at(vspan.clone(), format!("dt {v}: {e}"));
                }
            }
        }
        Study::Threshold => {
            if n != 1
                || base.params.equation != Equation::Hhhf
                || !matches!(base.initial_data, InitialData::GreatCircle { .. })
            {
                at(
                    vspan.clone(),
                    "the threshold probe needs n = 1, HHHF and great_circle data".into(),
                );
            }
            if values.iter().any(|v| *v <= 0.0) {
                at(vspan.clone(), "energies must be > 0".into());
            }
        }
        _ => {}
    }
    let levels = match &s.levels {
        Some(l) => {
            if *l.get_ref() == 0 {
                at(l.span(), "levels must be >= 1".into());
            }
            *l.get_ref()
        }
        None => 2,
    };
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    let seed = s.seed.unwrap_or(match base.initial_data {
        InitialData::Perturbation { seed, .. } => seed,
        _ => 0,
    });
    Ok(SweepSpec {
        study,
        parameter,
        values,
        output: s.output.clone().unwrap_or_else(|| "sweep".into()),
        seed,
        levels,
        base,
    })
}

/// Per-value result of a plain sweep.
#[derive(Clone, Debug)]
pub struct RunRow {
    pub value: f64,
    pub checks: Vec<CheckOutcome>,
    pub status: CheckStatus,
    pub error: Option<String>,
    pub artifact: Option<RunArtifact>,
}

#[derive(Clone, Debug)]
pub struct RunsSummary {
    pub parameter: SweepParameter,
    pub rows: Vec<RunRow>,
    artifacts: Vec<RunArtifact>,
}

fn run_row(spec: &SweepSpec, index: usize, value: f64) -> RunRow {
    let mut row = RunRow {
        value,
        checks: Vec::new(),
        status: CheckStatus::Fail,
        error: None,
        artifact: None,
    };
    let result = (|| -> Result<()> {
        let config = spec.variant(value)?;
        let setup = Setup::from_config(&config)?;
        let u0 = setup.initial_state()?;
        let mut rec = StateRecorder::default();
        let traj = match run(&u0, &setup.params, &mut rec) {
            Ok(t) => t,
            Err(f) => {
                if !f.partial.rows.is_empty() {
                    row.artifact = Some(RunArtifact::capture(format!("run_{index:03}"), &f.partial)?);
                }
                return Err(f.error);
            }
        };
        row.artifact = Some(RunArtifact::capture(format!("run_{index:03}"), &traj)?);
        row.checks = evaluate_checks(&traj, &rec.states, &config.checks)?;
        row.status = combine_status(row.checks.iter().map(|c| c.status));
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
        row.status = CheckStatus::Fail;
    }
    row
}

impl Summary for RunsSummary {
    fn name(&self) -> &'static str {
        "runs"
    }

    fn table(&self) -> Table {
        let names: Vec<String> = self
            .rows
            .iter()
            .find(|r| !r.checks.is_empty())
            .map(|r| r.checks.iter().map(|c| c.name.clone()).collect())
            .unwrap_or_default();
        let mut header = vec![self.parameter.to_string()];
        header.extend(names.iter().cloned());
        header.extend(["status", "error", "artifacts"].map(String::from));
        let mut t = Table {
            header,
            rows: Vec::new(),
        };
        for r in &self.rows {
            let mut rec = vec![num(r.value)];
            for name in &names {
                rec.push(
                    r.checks
                        .iter()
                        .find(|c| &c.name == name)
                        .map_or(String::new(), |c| format!("{} ({})", c.status, c.detail)),
                );
            }
            rec.push(r.status.to_string());
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
        self.rows.iter().all(|r| {
            r.error.is_none()
                && matches!(r.status, CheckStatus::Pass | CheckStatus::OutsideHypothesis)
        })
    }
}

/// Execute a sweep and write its artifacts and summary under
/// `out_root/<output key>`.
pub fn run_sweep(spec: &SweepSpec, out_root: &Path) -> Result<Box<dyn Summary>> {
    let setup = Setup::from_config(&spec.base)?;
    let decay = spec.base.checks.decay;
    let summary: Box<dyn Summary> = match spec.study {
        Study::Runs => {
            let rows: Vec<RunRow> = spec
                .values
                .par_iter()
                .enumerate()
                .map(|(i, &v)| run_row(spec, i, v))
                .collect();
            let artifacts = rows.iter().filter_map(|r| r.artifact.clone()).collect();
            Box::new(RunsSummary {
                parameter: spec.parameter,
                rows,
                artifacts,
            })
        }
        Study::SmallData => Box::new(exp_small_data(&setup, &spec.values, decay.unwrap_or(0.5))?),
        Study::Epsilon => Box::new(exp_epsilon_sweep(&setup, &spec.values)?),
        Study::Conservative => Box::new(exp_conservative(&setup, &spec.values)?),
        Study::Threshold => Box::new(exp_threshold_probe(
            &setup,
            &spec.values,
            spec.levels,
            decay.unwrap_or(1e-2),
        )?),
        Study::Uniqueness => Box::new(exp_uniqueness(&setup, &spec.values, spec.seed)?),
    };
    write_summary(summary.as_ref(), &out_root.join(&spec.output))?;
    Ok(summary)
}
