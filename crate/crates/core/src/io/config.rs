//! Run configuration: a TOML document with sections `[grid]`, `[params]`,
//! `[initial_data]`, `[output]` and `[checks]`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::dynamics::{default_orders, Equation, Scheme, SimParams};
use crate::error::{ConfigIssue, Error, Result};
use crate::experiments::RawSweep;
use crate::field::{make_great_circle, make_perturbation, make_perturbation_with_seminorm, SphereField};
use crate::spectral::{DealiasPolicy, RealField, SpectralGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub dims: Vec<usize>,
    pub lengths: Vec<f64>,
}

impl GridConfig {
    pub fn build(&self) -> Result<Arc<SpectralGrid>> {
        SpectralGrid::new(&self.dims, &self.lengths)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `u = base`.
    Constant { base: Vec<f64> },
    /// Tangent band-limited noise around `base`, scaled either by `amplitude`
    /// or to the critical seminorm `seminorm`.
    Perturbation {
        base: Vec<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        amplitude: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        seminorm: Option<f64>,
        band: usize,
        seed: u64,
    },
    /// Equator map with angle `2 pi degree x / L + amplitude sin(2 pi mode x / L)`
    /// along the first axis.
    GreatCircle { degree: i64, amplitude: f64, mode: u32 },
}

impl InitialData {
    pub fn build(&self, grid: &Arc<SpectralGrid>) -> Result<SphereField> {
        match self {
            InitialData::Constant { base } => SphereField::constant(grid.clone(), base),
            InitialData::Perturbation {
                base,
                amplitude,
                seminorm,
                band,
                seed,
            } => match (amplitude, seminorm) {
                (Some(a), None) => Ok(make_perturbation(grid, base, *a, *band, *seed)?.field),
                (None, Some(s)) => {
                    Ok(make_perturbation_with_seminorm(grid, base, *s, *band, *seed)?.field)
                }
                _ => Err(Error::param("give exactly one of amplitude and seminorm")),
            },
            InitialData::GreatCircle {
                degree,
                amplitude,
                mode,
            } => {
                let l = grid.lengths()[0];
                let (d, a, m) = (*degree as f64, *amplitude, *mode as f64);
                let tau = 2.0 * std::f64::consts::PI;
                let theta = RealField::from_fn(grid.clone(), |x| {
                    tau * d * x[0] / l + a * (tau * m * x[0] / l).sin()
                });
                make_great_circle(&theta)
            }
        }
    }

    pub fn set_seed(&mut self, new_seed: u64) {
        if let InitialData::Perturbation { seed, .. } = self {
            *seed = new_seed;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: String,
    pub timeseries: String,
    /// Write a snapshot every this many diagnostic rows; 0 writes only the
    /// final state.
    pub snapshot_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: ".".into(),
            timeseries: "timeseries.csv".into(),
            snapshot_every: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChecksConfig {
    /// Maximum allowed relative ledger defect.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_identity: Option<f64>,
    /// Orders `k` of the monotone estimates to check.
    pub monotone: Vec<usize>,
    pub l2_growth: bool,
    /// Required reduction of `||grad u||` over the run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub grid: GridConfig,
    pub params: SimParams,
    pub initial_data: InitialData,
    pub output: OutputConfig,
    pub checks: ChecksConfig,
}

// ---- raw, location-carrying form ----

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: Spanned<RawGrid>,
    params: Spanned<RawParams>,
    initial_data: Spanned<RawInitial>,
    #[serde(default)]
    output: Option<RawOutput>,
    #[serde(default)]
    checks: Option<RawChecks>,
    #[serde(default)]
    sweep: Option<Spanned<RawSweep>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dims: Spanned<Vec<usize>>,
    lengths: Spanned<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    equation: Spanned<String>,
    damping: Option<Spanned<f64>>,
    eps: Option<Spanned<f64>>,
    nu: Option<Spanned<u32>>,
    nu_override: Option<bool>,
    dt: Option<Spanned<f64>>,
    horizon: Option<Spanned<f64>>,
    scheme: Option<Spanned<String>>,
    dealias: Option<Spanned<String>>,
    renormalize: Option<bool>,
    sample_every: Option<Spanned<usize>>,
    seminorm_orders: Option<Spanned<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    kind: Spanned<String>,
    base: Option<Spanned<Vec<f64>>>,
    amplitude: Option<Spanned<f64>>,
    seminorm: Option<Spanned<f64>>,
    band: Option<Spanned<usize>>,
    seed: Option<u64>,
    degree: Option<i64>,
    mode: Option<Spanned<u32>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    timeseries: Option<String>,
    snapshot_every: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChecks {
    energy_identity: Option<Spanned<f64>>,
    monotone: Option<Spanned<Vec<usize>>>,
    l2_growth: Option<bool>,
    decay: Option<Spanned<f64>>,
}

/// 1-based line of byte offset `pos`.
pub(crate) fn line_of(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

struct Issues<'a> {
    text: &'a str,
    list: Vec<ConfigIssue>,
}

impl Issues<'_> {
    fn at<T>(&mut self, s: &Spanned<T>, message: impl Into<String>) {
        self.list.push(ConfigIssue {
            line: Some(line_of(self.text, s.span().start)),
            message: message.into(),
        });
    }

    fn nowhere(&mut self, message: impl Into<String>) {
        self.list.push(ConfigIssue {
            line: None,
            message: message.into(),
        });
    }
}

/// Parse and validate a configuration; every problem found is reported with
/// its line number.
pub fn parse_config(text: &str) -> Result<Config> {
    match parse_document(text)? {
        (config, None) => Ok(config),
        (_, Some(sweep)) => Err(Error::Config(vec![ConfigIssue {
            line: Some(line_of(text, sweep.span().start)),
            message: "a [sweep] section belongs in a sweep spec, not a run config".into(),
        }])),
    }
}

/// A configuration plus the raw `[sweep]` section, if any.
pub(crate) fn parse_document(text: &str) -> Result<(Config, Option<Spanned<RawSweep>>)> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        Error::Config(vec![ConfigIssue {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        }])
    })?;
    let mut issues = Issues {
        text,
        list: Vec::new(),
    };

    // [grid]
    let g = raw.grid.get_ref();
    let n = g.dims.get_ref().len();
    if !(1..=3).contains(&n) {
        issues.at(&g.dims, format!("grid must have 1 to 3 axes, got {n}"));
    }
    for &d in g.dims.get_ref() {
        if d < 4 || d % 2 != 0 {
            issues.at(&g.dims, format!("nodes per axis must be even and >= 4, got {d}"));
            break;
        }
    }
    if g.lengths.get_ref().len() != n {
        issues.at(&g.lengths, "lengths must have one entry per axis");
    }
    if g.lengths.get_ref().iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        issues.at(&g.lengths, "box lengths must be positive");
    }
    let grid = GridConfig {
        dims: g.dims.get_ref().clone(),
        lengths: g.lengths.get_ref().clone(),
    };
    let n = n.clamp(1, 3);

    // [params]
    let p = raw.params.get_ref();
    let equation = match p.equation.get_ref().parse::<Equation>() {
        Ok(e) => e,
        Err(_) => {
            issues.at(&p.equation, format!("unknown equation '{}'", p.equation.get_ref()));
            Equation::Hllg
        }
    };
    let mut params = SimParams::new(equation, n);
    if let Some(v) = &p.damping {
        params.damping = *v.get_ref();
        if !(params.damping >= 0.0) {
            issues.at(v, "damping must be >= 0");
        }
    }
    if let Some(v) = &p.eps {
        params.eps = *v.get_ref();
        if !(params.eps >= 0.0) {
            issues.at(v, "regularization eps must be >= 0");
        }
    } else if equation != Equation::Llgr {
        params.eps = 0.0;
    }
    if let Some(v) = &p.nu {
        params.nu = *v.get_ref();
        if !(params.nu == 1 || params.nu == 2) {
            issues.at(v, "regularizer order nu must be 1 or 2");
        }
    }
    params.nu_override = p.nu_override.unwrap_or(false);
    if let Some(v) = &p.dt {
        params.dt = *v.get_ref();
        if !(params.dt > 0.0) {
            issues.at(v, "time step dt must be > 0");
        }
    }
    if let Some(v) = &p.horizon {
        params.horizon = *v.get_ref();
        if !(params.horizon > 0.0) {
            issues.at(v, "horizon must be > 0");
        }
    }
    if let Some(v) = &p.scheme {
        match v.get_ref().parse::<Scheme>() {
            Ok(s) => params.scheme = s,
            Err(_) => issues.at(v, format!("unknown scheme '{}'", v.get_ref())),
        }
    }
    if let Some(v) = &p.dealias {
        match v.get_ref().parse::<DealiasPolicy>() {
            Ok(d) => params.dealias = d,
            Err(_) => issues.at(v, format!("unknown dealias policy '{}'", v.get_ref())),
        }
    }
    params.renormalize = p.renormalize.unwrap_or(true);
    if let Some(v) = &p.sample_every {
        params.sample_every = *v.get_ref();
        if params.sample_every == 0 {
            issues.at(v, "sample_every must be >= 1");
        }
    }
    params.seminorm_orders = match &p.seminorm_orders {
        Some(v) => {
            if v.get_ref().iter().any(|s| !(*s >= 0.0)) {
                issues.at(v, "seminorm orders must be >= 0");
            }
            v.get_ref().clone()
        }
        None => default_orders(n, params.nu),
    };
    if issues.list.is_empty() {
        if let Err(e) = params.validate(n) {
            issues.at(&raw.params, e.to_string());
        }
    }

    // [initial_data]
    let init = raw.initial_data.get_ref();
    let need = |issues: &mut Issues, what: &str| {
        issues.at(&init.kind, format!("initial data of this kind needs '{what}'"));
    };
    let check_base = |issues: &mut Issues, b: &Spanned<Vec<f64>>| {
        let r = b.get_ref().iter().map(|v| v * v).sum::<f64>().sqrt();
        if b.get_ref().len() < 2 || (r - 1.0).abs() > 1e-12 {
            issues.at(b, "base point must be a unit vector with at least 2 entries");
        }
    };
    let initial_data = match init.kind.get_ref().as_str() {
        "constant" => {
            let base = match &init.base {
                Some(b) => {
                    check_base(&mut issues, b);
                    b.get_ref().clone()
                }
                None => {
                    need(&mut issues, "base");
                    vec![0.0, 0.0, 1.0]
                }
            };
            InitialData::Constant { base }
        }
        "perturbation" => {
            let base = match &init.base {
                Some(b) => {
                    check_base(&mut issues, b);
                    b.get_ref().clone()
                }
                None => {
                    need(&mut issues, "base");
                    vec![0.0, 0.0, 1.0]
                }
            };
            let amplitude = init.amplitude.as_ref().map(|a| {
                if !(*a.get_ref() >= 0.0) {
                    issues.at(a, "amplitude must be >= 0");
                }
                *a.get_ref()
            });
            let seminorm = init.seminorm.as_ref().map(|s| {
                if !(*s.get_ref() >= 0.0) {
                    issues.at(s, "seminorm must be >= 0");
                }
                *s.get_ref()
            });
            if amplitude.is_some() == seminorm.is_some() {
                issues.at(&init.kind, "give exactly one of 'amplitude' and 'seminorm'");
            }
            let band = match &init.band {
                Some(b) => {
                    let max_band = grid.dims.iter().map(|d| d / 2).min().unwrap_or(0);
                    if *b.get_ref() == 0 || *b.get_ref() >= max_band {
                        issues.at(b, format!("band must lie in 1..{max_band}"));
                    }
                    *b.get_ref()
                }
                None => {
                    need(&mut issues, "band");
                    1
                }
            };
            InitialData::Perturbation {
                base,
                amplitude,
                seminorm,
                band,
                seed: init.seed.unwrap_or(0),
            }
        }
        "great_circle" => InitialData::GreatCircle {
            degree: init.degree.unwrap_or(0),
            amplitude: init.amplitude.as_ref().map_or(0.0, |a| *a.get_ref()),
            mode: init.mode.as_ref().map_or(1, |m| {
                if *m.get_ref() == 0 {
                    issues.at(m, "mode must be >= 1");
                }
                *m.get_ref()
            }),
        },
        other => {
            issues.at(&init.kind, format!("unknown initial data kind '{other}'"));
            InitialData::Constant {
                base: vec![0.0, 0.0, 1.0],
            }
        }
    };
    if let InitialData::GreatCircle { .. } = initial_data {
        if init.base.is_some() || init.band.is_some() || init.seminorm.is_some() {
            issues.at(&init.kind, "great_circle data take only degree, amplitude and mode");
        }
    }

    // [output]
    let output = match raw.output {
        Some(o) => {
            let d = OutputConfig::default();
            OutputConfig {
                dir: o.dir.unwrap_or(d.dir),
                timeseries: o.timeseries.unwrap_or(d.timeseries),
                snapshot_every: o.snapshot_every.unwrap_or(d.snapshot_every),
            }
        }
        None => OutputConfig::default(),
    };

    // [checks]
    let checks = match raw.checks {
        Some(c) => {
            if let Some(v) = &c.energy_identity {
                if !(*v.get_ref() > 0.0) {
                    issues.at(v, "energy_identity tolerance must be > 0");
                }
            }
            if let Some(v) = &c.monotone {
                if v.get_ref().iter().any(|&k| k == 0 || k > n + 1) {
                    issues.at(v, format!("monotone orders must lie in 1..={}", n + 1));
                }
            }
            if let Some(v) = &c.decay {
                if !(*v.get_ref() > 0.0 && *v.get_ref() < 1.0) {
                    issues.at(v, "decay factor must lie in (0, 1)");
                }
            }
            ChecksConfig {
                energy_identity: c.energy_identity.map(|v| v.into_inner()),
                monotone: c.monotone.map(|v| v.into_inner()).unwrap_or_default(),
                l2_growth: c.l2_growth.unwrap_or(false),
                decay: c.decay.map(|v| v.into_inner()),
            }
        }
        None => ChecksConfig::default(),
    };

    if equation != Equation::Hhhf {
        let m = match &initial_data {
            InitialData::Constant { base } | InitialData::Perturbation { base, .. } => base.len(),
            InitialData::GreatCircle { .. } => 3,
        };
        if m != 3 {
            issues.nowhere(format!("{equation} needs the target sphere S^2 (3-component base)"));
        }
    }

    if !issues.list.is_empty() {
        return Err(Error::Config(issues.list));
    }
    Ok((
        Config {
            grid,
            params,
            initial_data,
            output,
            checks,
        },
        raw.sweep,
    ))
}

#[derive(Serialize)]
struct Document<'a> {
    grid: &'a GridConfig,
    params: ParamsOut<'a>,
    initial_data: &'a InitialData,
    output: &'a OutputConfig,
    checks: &'a ChecksConfig,
}

#[derive(Serialize)]
struct ParamsOut<'a> {
    equation: String,
    damping: f64,
    eps: f64,
    nu: u32,
    nu_override: bool,
    dt: f64,
    horizon: f64,
    scheme: String,
    dealias: String,
    renormalize: bool,
    sample_every: usize,
    seminorm_orders: &'a [f64],
}

/// TOML text that [`parse_config`] maps back to an equal `Config`.
pub fn serialize_config(c: &Config) -> Result<String> {
    let p = &c.params;
    let doc = Document {
        grid: &c.grid,
        params: ParamsOut {
            equation: p.equation.to_string(),
            damping: p.damping,
            eps: p.eps,
            nu: p.nu,
            nu_override: p.nu_override,
            dt: p.dt,
            horizon: p.horizon,
            scheme: p.scheme.to_string(),
            dealias: p.dealias.to_string(),
            renormalize: p.renormalize,
            sample_every: p.sample_every,
            seminorm_orders: &p.seminorm_orders,
        },
        initial_data: &c.initial_data,
        output: &c.output,
        checks: &c.checks,
    };
    toml::to_string(&doc).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[grid]
dims = [64]
lengths = [50.0]

[params]
equation = "LLGR"
damping = 1.0
eps = 0.01
dt = 0.001
horizon = 0.1

[initial_data]
kind = "perturbation"
base = [0.0, 0.0, 1.0]
amplitude = 0.05
band = 4
seed = 3

[checks]
"#;

    #[test]
    fn empty_checks_section_disables_everything() {
        let c = parse_config(BASIC).unwrap();
        assert_eq!(c.checks, ChecksConfig::default());
        assert_eq!(c.params.nu, 1);
        assert_eq!(c.output, OutputConfig::default());
    }

    #[test]
    fn negative_damping_is_located() {
        let text = BASIC.replace("damping = 1.0", "damping = -1.0");
        match parse_config(&text) {
            Err(Error::Config(issues)) => {
                assert_eq!(issues.len(), 1);
                assert_eq!(issues[0].line, Some(8));
                assert!(issues[0].message.contains("damping must be >= 0"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_located() {
        let text = BASIC.replace("horizon = 0.1", "horizon = 0.1\nspeed = 2");
        match parse_config(&text) {
            Err(Error::Config(issues)) => {
                assert_eq!(issues[0].line, Some(12));
                assert!(issues[0].message.contains("speed"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn several_issues_are_collected() {
        let text = BASIC
            .replace("dims = [64]", "dims = [63]")
            .replace("band = 4", "band = 40");
        match parse_config(&text) {
            Err(Error::Config(issues)) => {
                let lines: Vec<_> = issues.iter().map(|i| i.line).collect();
                assert!(lines.contains(&Some(3)), "{issues:?}");
                assert!(lines.contains(&Some(17)), "{issues:?}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn type_mismatch_is_located() {
        let text = BASIC.replace("dt = 0.001", "dt = \"small\"");
        match parse_config(&text) {
            Err(Error::Config(issues)) => assert_eq!(issues[0].line, Some(10)),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let mut c = parse_config(BASIC).unwrap();
        c.checks.monotone = vec![1, 2];
        c.checks.decay = Some(1e-3);
        let text = serialize_config(&c).unwrap();
        assert_eq!(parse_config(&text).unwrap(), c);

        let gc = BASIC
            .replace("kind = \"perturbation\"\nbase = [0.0, 0.0, 1.0]\namplitude = 0.05\nband = 4\nseed = 3",
                     "kind = \"great_circle\"\ndegree = 1\namplitude = 0.2");
        let c = parse_config(&gc).unwrap();
        assert_eq!(parse_config(&serialize_config(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn builds_initial_data() {
        let c = parse_config(BASIC).unwrap();
        let g = c.grid.build().unwrap();
        let u = c.initial_data.build(&g).unwrap();
        assert_eq!(u.target_dim(), 2);
    }
}
