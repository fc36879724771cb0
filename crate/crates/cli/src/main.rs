use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracflow_core::analysis::{verify_ratio, InequalityId, RatioReport, SamplerSpec};
use fracflow_core::experiments::{parse_sweep_spec, run_sweep, simulate, Table};
use fracflow_core::io::{decode_header, decode_snapshot, parse_config};
use fracflow_core::norms::{energy, lp_norm, sobolev_seminorm};
use fracflow_core::Error;

/// Largest tolerated change of a ratio-suite constant under refinement.
const REFINEMENT_TOLERANCE: f64 = 0.1;

#[derive(Parser)]
#[command(name = "fracflow", version, about = "Half-harmonic and fractional Landau-Lifshitz flows on periodic boxes")]
struct Cli {
    /// Seed for initial data and samplers (overrides the file's seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output root (default: the `[output] dir` of the config).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and its enabled checks.
    Simulate { config: PathBuf },
    /// Empirical constant of one inequality (or `all`) in each dimension.
    Verify {
        id: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Restrict to one dimension.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run a sweep spec and write its summary.
    Sweep { spec: PathBuf },
    /// Print the header and basic norms of a snapshot.
    Inspect { snapshot: PathBuf },
}

enum Failure {
    Checks,
    Input(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_simulate(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let mut config = parse_config(&read(path)?)?;
    if let Some(seed) = cli.seed {
        config.initial_data.set_seed(seed);
    }
    let dir = cli
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output.dir));
    let sim = simulate(&config, &dir)?;
    let last = sim.trajectory.last();
    println!(
        "t = {}  E = {:e}  E_eps = {:e}  dist_Linf = {:e}  rows = {}",
        last.t,
        last.energy,
        last.energy_eps,
        last.dist_linf,
        sim.trajectory.rows.len()
    );
    for c in &sim.checks {
        println!("check {:<16} {:<18} {}", c.name, c.status.to_string(), c.detail);
    }
    for (file, hash) in &sim.files {
        println!("wrote {} sha256={hash}", file.display());
    }
    if let Some(f) = &sim.failure {
        eprintln!("run failed: {f}");
    }
    if sim.passed() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn report_row(r: &RatioReport, ok: bool) -> Vec<String> {
    vec![
        r.id.to_string(),
        r.n.to_string(),
        r.trials.to_string(),
        r.degenerate.to_string(),
        r.inconsistent.to_string(),
        format!("{:e}", r.max_ratio),
        format!("{:e}", r.ratio_at_refinement),
        format!("{:e}", r.refinement_change()),
        r.band.to_string(),
        format!("{:e}", r.amplitude),
        format!("{}..{}", r.seeds.0, r.seeds.1),
        if ok { "pass" } else { "fail" }.into(),
    ]
}

fn cmd_verify(cli: &Cli, id: &str, trials: usize, only_n: Option<usize>) -> Result<(), Failure> {
    let ids: Vec<InequalityId> = if id.eq_ignore_ascii_case("all") {
        InequalityId::ALL.to_vec()
    } else {
        vec![id.parse()?]
    };
    let dims: Vec<usize> = match only_n {
        Some(n) if (1..=3).contains(&n) => vec![n],
        Some(n) => return Err(Error::Parameter(format!("n must be 1, 2 or 3, got {n}")).into()),
        None => vec![1, 2, 3],
    };
    let mut table = Table::new(&[
        "id",
        "n",
        "trials",
        "degenerate",
        "inconsistent",
        "max_ratio",
        "ratio_at_refinement",
        "refinement_change",
        "band",
        "amplitude",
        "seeds",
        "status",
    ]);
    let mut all_ok = true;
    for &i in &ids {
        for &n in &dims {
            if !i.supports(n) {
                if ids.len() == 1 && only_n.is_some() {
                    return Err(Error::Parameter(format!("{i} is not defined for n = {n}")).into());
                }
                continue;
            }
            let mut spec = SamplerSpec::reference(n);
            if let Some(seed) = cli.seed {
                spec.first_seed = seed;
            }
            let r = verify_ratio(i, &spec, trials)?;
            let ok = r.max_ratio.is_finite()
                && r.inconsistent == 0
                && r.refinement_change() < REFINEMENT_TOLERANCE;
            all_ok &= ok;
            println!(
                "{:<10} n={n} trials={} max_ratio={:.6e} refined={:.6e} change={:.2}% {}",
                i.name(),
                r.trials,
                r.max_ratio,
                r.ratio_at_refinement,
                100.0 * r.refinement_change(),
                if ok { "pass" } else { "FAIL" }
            );
            table.rows.push(report_row(&r, ok));
        }
    }
    if let Some(dir) = &cli.out_dir {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        let path = dir.join("verify.csv");
        fs::write(&path, table.to_csv()?).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        println!("wrote {}", path.display());
    }
    if all_ok {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_sweep(cli: &Cli, path: &Path) -> Result<(), Failure> {
    let mut spec = parse_sweep_spec(&read(path)?)?;
    if let Some(seed) = cli.seed {
        spec.set_seed(seed);
    }
    let root = cli
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&spec.base.output.dir));
    let summary = run_sweep(&spec, &root)?;
    let table = summary.table();
    println!("{} sweep over {} ({} values)", summary.name(), spec.parameter, spec.values.len());
    let shown: Vec<usize> = (0..table.header.len())
        .filter(|&i| table.header[i] != "artifacts")
        .collect();
    let line = |cells: &[String]| {
        shown
            .iter()
            .map(|&i| cells[i].as_str())
            .collect::<Vec<_>>()
            .join("  ")
    };
    println!("{}", line(&table.header));
    for r in &table.rows {
        println!("{}", line(r));
    }
    println!("wrote {}", root.join(&spec.output).join("summary.csv").display());
    if summary.passed() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_inspect(path: &Path) -> Result<(), Failure> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let h = decode_header(&bytes)?;
    let (u, t) = decode_snapshot(&bytes)?;
    let n = h.n as usize;
    println!("format version {}", h.version);
    println!("n = {n}, target S^{}", h.m);
    println!("dims = {:?}", &h.dims[..n]);
    println!("lengths = {:?}", &h.lengths[..n]);
    println!("t = {t}");
    println!("payload = {} bytes", h.payload_len);
    let unit = u
        .values()
        .magnitudes()
        .iter()
        .map(|m| (m - 1.0).abs())
        .fold(0.0, f64::max);
    println!("max ||u| - 1| = {unit:e}");
    println!("E = {:e}", energy(&u));
    println!(
        "critical seminorm = {:e}",
        sobolev_seminorm(u.values(), n as f64 / 2.0)
    );
    println!("base (mean direction) = {:?}", u.base());
    println!("dist_Linf to base = {:e}", lp_norm(&u.deviation(), f64::INFINITY)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot set up {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Simulate { config } => cmd_simulate(&cli, config),
        Command::Verify { id, trials, n } => cmd_verify(&cli, id, *trials, *n),
        Command::Sweep { spec } => cmd_sweep(&cli, spec),
        Command::Inspect { snapshot } => cmd_inspect(snapshot),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
