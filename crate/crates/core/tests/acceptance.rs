//! End-to-end acceptance checks. Each test prints one `criterion N ... PASS|FAIL`
//! line to stderr and then asserts it.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use fracflow_core::analysis::{
    check_decay, check_energy_identity, verify_ratio, CheckStatus, InequalityId, SamplerSpec,
};
use fracflow_core::dynamics::{
    constraint_expansion, gilbert_residual, normal_regularizer, rhs, run, step, Equation, NullSink,
    Scheme, SimParams, StateRecorder,
};
use fracflow_core::experiments::{
    exp_conservative, exp_epsilon_sweep, exp_small_data, exp_uniqueness, simulate, Setup,
};
use fracflow_core::field::{cross, make_perturbation, make_perturbation_with_seminorm};
use fracflow_core::io::{parse_config, InitialData};
use fracflow_core::norms::{commutator_quarter, commutator_riesz, lp_norm, normal_half_laplacian};
use fracflow_core::sampling::{band_limited_scalar, band_limited_vector, rng};
use fracflow_core::spectral::{
    forward_transform, fractional_laplacian, gradient, inverse_transform, riesz_transform,
};
use fracflow_core::{DealiasPolicy, FourierField, RealField, SpectralGrid, SphereField};

const NORTH: [f64; 3] = [0.0, 0.0, 1.0];

/// Writes straight to stderr so the line survives the test harness capture.
fn report(id: u32, name: &str, pass: bool, detail: String) {
    let _ = writeln!(
        std::io::stderr(),
        "criterion {id:>2} {name:<28} {}  {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn rel_err(value: &RealField, reference: &RealField) -> f64 {
    let diff = value.combine(1.0, reference, -1.0).unwrap().max_abs();
    diff / reference.max_abs().max(f64::MIN_POSITIVE)
}

fn inverse(f: &FourierField) -> RealField {
    inverse_transform(f).unwrap()
}

fn half_laplacian(f: &RealField, s: f64) -> RealField {
    inverse(&fractional_laplacian(&forward_transform(f), s).unwrap())
}

/// Box of side `16 pi` used by the dynamic criteria.
fn box_grid(n: usize, nodes: usize) -> Arc<SpectralGrid> {
    SpectralGrid::cubic(n, nodes, 16.0 * PI).unwrap()
}

fn small_data_setup(n: usize, nodes: usize, equation: Equation) -> Setup {
    Setup {
        grid: box_grid(n, nodes),
        params: SimParams::new(equation, n),
        initial: InitialData::Perturbation {
            base: NORTH.to_vec(),
            amplitude: None,
            seminorm: Some(0.1),
            band: if n == 1 { 8 } else { 4 },
            seed: 1,
        },
    }
}

#[test]
fn criterion_01_spectral_exactness() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for n in 1..=3 {
        let lengths = [3.0, 5.0, 7.0];
        let dims = [16; 3];
        let g = SpectralGrid::new(&dims[..n], &lengths[..n]).unwrap();
        for k in [[1i32, 0, 0], [3, -2, 1], [-5, 4, 7], [7, 7, -7]] {
            let xi: Vec<f64> = (0..n).map(|j| 2.0 * PI * k[j] as f64 / lengths[j]).collect();
            let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
            let phase = |x: &[f64; 3]| (0..n).map(|j| xi[j] * x[j]).sum::<f64>();
            let c = RealField::from_fn(g.clone(), |x| phase(x).cos());
            let s = RealField::from_fn(g.clone(), |x| phase(x).sin());
            worst = worst.max(rel_err(&half_laplacian(&c, 0.5), &c.scaled(norm)));
            // -i xi_j / |xi| maps cos to (xi_j / |xi|) sin
            for (j, xj) in xi.iter().enumerate() {
                if *xj == 0.0 {
                    continue;
                }
                let r = inverse(&riesz_transform(&forward_transform(&c), j).unwrap());
                worst = worst.max(rel_err(&r, &s.scaled(xj / norm)));
            }
        }
        for seed in 0..100 {
            let f = band_limited_scalar(&g, 6, seed);
            let fh = forward_transform(&f);
            let mut acc = FourierField::zeros(g.clone(), 1);
            for (j, dj) in gradient(&fh).iter().enumerate() {
                acc = acc.combine(1.0, &riesz_transform(dj, j).unwrap(), 1.0).unwrap();
            }
            worst = worst.max(rel_err(&inverse(&acc), &half_laplacian(&f, 0.5)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "spectral exactness",
        worst <= 1e-12 && secs < 10.0,
        format!("max relative error {worst:.3e}, {secs:.1} s"),
    );
}

/// Grid and noise amplitude for which renormalized band-2 maps are resolved
/// to round-off, so the pointwise identities hold at the nodes. Smaller
/// amplitudes lose relative accuracy in the normal components.
fn structure_case(n: usize) -> (Arc<SpectralGrid>, f64) {
    match n {
        1 => (SpectralGrid::cubic(1, 256, 16.0 * PI).unwrap(), 0.1),
        2 => (SpectralGrid::cubic(2, 64, 2.0 * PI).unwrap(), 0.05),
        _ => (SpectralGrid::cubic(3, 32, 2.0 * PI).unwrap(), 0.02),
    }
}

fn sphere_sample(g: &Arc<SpectralGrid>, amplitude: f64, seed: u64) -> SphereField {
    let scale = 0.75 + 0.25 * (seed % 5) as f64 / 4.0;
    make_perturbation(g, &NORTH, scale * amplitude, 2, seed).unwrap().field
}

#[test]
fn criterion_02_structural_identities() {
    let start = Instant::now();
    // worst relative error per identity: commutator, skew, constraint, Gilbert
    let mut worst = [0.0f64; 4];
    for n in 1..=3 {
        let (g, amplitude) = structure_case(n);
        let nu = if n == 1 { 1 } else { 2 };
        let mut params = SimParams::new(Equation::Llgr, n);
        params.damping = 1.7;
        params.eps = 0.05;
        params.dealias = DealiasPolicy::None;
        let mut generator = rng(1000 + n as u64);
        for seed in 0..100 {
            let u = sphere_sample(&g, amplitude, seed);

            let lhs = normal_half_laplacian(u.values());
            let comm = commutator_riesz(u.values(), u.values(), DealiasPolicy::None).unwrap();
            let sum = lhs.combine(1.0, &comm, 1.0).unwrap();
            worst[0] = worst[0].max(sum.max_abs() / lhs.max_abs());

            let v = band_limited_vector(&g, 3, 3, &mut generator).unwrap();
            let direct = cross(u.values(), &half_laplacian(&v, 0.5)).unwrap();
            let qv = half_laplacian(&v, 0.25);
            let outer = half_laplacian(&cross(u.values(), &qv).unwrap(), 0.25);
            let split = outer
                .combine(1.0, &commutator_quarter(&u, &qv, DealiasPolicy::None).unwrap(), -1.0)
                .unwrap();
            worst[1] = worst[1].max(rel_err(&split, &direct));

            let normal = normal_regularizer(u.values(), nu).unwrap();
            let expanded = constraint_expansion(u.values(), nu).unwrap();
            worst[2] = worst[2].max(rel_err(&expanded, &normal));

            let velocity = rhs(&u, &params).unwrap();
            let residual = gilbert_residual(&u, &velocity, &params).unwrap();
            worst[3] = worst[3].max(residual / lp_norm(&velocity, 2.0).unwrap());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        "structural identities",
        worst.iter().all(|&w| w <= 1e-8) && secs < 60.0,
        format!(
            "commutator {:.2e}, skew {:.2e}, constraint {:.2e}, gilbert {:.2e}, {secs:.1} s",
            worst[0], worst[1], worst[2], worst[3]
        ),
    );
}

#[test]
fn criterion_03_energy_ledger() {
    let start = Instant::now();
    let g = box_grid(1, 512);
    let u0 = make_perturbation_with_seminorm(&g, &NORTH, 0.1, 8, 1).unwrap().field;
    let defect = |dt: f64| {
        let mut p = SimParams::new(Equation::Llgr, 1);
        p.nu = 1;
        p.damping = 1.0;
        p.eps = 1e-2;
        p.dt = dt;
        p.horizon = 1.0;
        p.sample_every = 50;
        let traj = run(&u0, &p, NullSink).unwrap();
        check_energy_identity(&traj, "ledger").unwrap().defect
    };
    let coarse = defect(1e-3);
    let fine = defect(5e-4);
    let ratio = coarse / fine;
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        "energy dissipation ledger",
        coarse <= 1e-4 && (3.0..=5.0).contains(&ratio) && secs < 60.0,
        format!("defect {coarse:.3e} at dt=1e-3, halving ratio {ratio:.2}, {secs:.1} s"),
    );
}

#[test]
fn criterion_04_half_wave_conservation() {
    let start = Instant::now();
    let mut setup = small_data_setup(1, 512, Equation::Hwm);
    setup.params.dealias = DealiasPolicy::None;
    setup.params.horizon = 1.0;
    let at_1e3 = exp_conservative(&setup, &[1e-3]).unwrap().drifts[0];
    let study = exp_conservative(&setup, &[0.04, 0.02, 0.01]).unwrap();
    let order = study
        .orders
        .iter()
        .map(|o| o.unwrap_or(f64::NAN))
        .fold(f64::INFINITY, f64::min);
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        "half-wave conservation",
        at_1e3 <= 1e-6 && order >= 3.5 && secs < 60.0,
        format!(
            "drift {at_1e3:.3e} at dt=1e-3, drifts {:.2e} at dt=0.04..0.01, min order {order:.2}, {secs:.1} s",
            study.drifts.iter().cloned().fold(0.0, f64::max)
        ),
    );
}

#[test]
fn criterion_05_small_data_monotone() {
    let start = Instant::now();
    let mut all_pass = true;
    let mut details = Vec::new();
    for (n, nodes, dt) in [(1, 512, 1e-3), (2, 128, 1e-2)] {
        let mut setup = small_data_setup(n, nodes, Equation::Llgr);
        setup.params.dt = dt;
        setup.params.horizon = 1.0;
        setup.params.sample_every = 10;
        let summary = exp_small_data(&setup, &[0.1, 0.05, 0.02], 1.0).unwrap();
        for row in &summary.rows {
            all_pass &= row.error.is_none()
                && row.monotone.len() == n + 1
                && row
                    .monotone
                    .iter()
                    .all(|m| m.status == CheckStatus::Pass && m.slack >= -1e-6 * m.rhs);
        }
        let worst = summary
            .rows
            .iter()
            .flat_map(|r| r.monotone.iter().map(|m| m.slack / m.rhs))
            .fold(f64::INFINITY, f64::min);
        details.push(format!("n={n} min slack/rhs {worst:.2e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        5,
        "small-data monotone bounds",
        all_pass && secs < 600.0,
        format!("{}, {secs:.1} s", details.join(", ")),
    );
}

#[test]
fn criterion_06_long_time_decay() {
    let start = Instant::now();
    let mut results = Vec::new();
    for nodes in [128, 256] {
        let mut setup = small_data_setup(2, nodes, Equation::Hllg);
        setup.params.dt = 0.05;
        setup.params.horizon = 50.0;
        setup.params.sample_every = 100;
        let u0 = setup.initial_state().unwrap();
        let mut rec = StateRecorder::default();
        let traj = run(&u0, &setup.params, &mut rec).unwrap();
        results.push(check_decay(&traj, &rec.states, 0.0, 1e-3).unwrap());
    }
    let coarse = &results[0];
    let agmon = [coarse.agmon_max.unwrap(), results[1].agmon_max.unwrap()];
    let variation = (agmon[0] - agmon[1]).abs() / agmon[0].max(agmon[1]);
    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        "long-time asymptotics",
        coarse.grad_ratio <= 1e-3
            && coarse.dist_linf_final <= 1e-3
            && variation < 0.1
            && secs < 900.0,
        format!(
            "gradient ratio {:.2e}, dist_Linf {:.2e}, Agmon {:.4} vs {:.4} ({:.2e}), {secs:.1} s",
            coarse.grad_ratio, coarse.dist_linf_final, agmon[0], agmon[1], variation
        ),
    );
}

#[test]
fn criterion_07_epsilon_continuation() {
    let start = Instant::now();
    let mut setup = small_data_setup(1, 512, Equation::Llgr);
    setup.params.dt = 1e-3;
    setup.params.horizon = 1.0;
    setup.params.sample_every = 50;
    let summary = exp_epsilon_sweep(&setup, &[1e-1, 1e-2, 1e-3, 1e-4, 0.0]).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let listed: Vec<String> = summary.pairwise.iter().map(|d| format!("{d:.2e}")).collect();
    report(
        7,
        "epsilon continuation",
        summary.strictly_decreasing && secs < 300.0,
        format!(
            "sup differences [{}], fitted order {:.2}, {secs:.1} s",
            listed.join(", "),
            summary.order.unwrap_or(f64::NAN)
        ),
    );
}

#[test]
fn criterion_08_uniqueness_stability() {
    let start = Instant::now();
    let mut setup = small_data_setup(1, 512, Equation::Llgr);
    setup.params.dt = 1e-2;
    setup.params.horizon = 1.0;
    setup.params.sample_every = 10;
    let summary = exp_uniqueness(&setup, &[0.0, 1e-6], 3).unwrap();
    let identical = summary.at_dt[0].identical && summary.at_half_dt[0].identical;
    let enveloped = summary.at_dt[1].within_envelope && summary.at_half_dt[1].within_envelope;
    let change = summary.envelope_change_dt[1];
    let orders: Vec<f64> = summary
        .cross_orders
        .iter()
        .map(|o| o.unwrap_or(f64::NAN))
        .collect();
    let second_order = orders.iter().all(|o| (1.8..=2.2).contains(o));
    let secs = start.elapsed().as_secs_f64();
    report(
        8,
        "uniqueness and stability",
        identical && enveloped && change < 0.2 && second_order && secs < 300.0,
        format!(
            "identical {identical}, envelope rate {:.4} (change {change:.2e}), cross orders {orders:.3?}, {secs:.1} s",
            summary.at_dt[1].envelope_rate
        ),
    );
}

#[test]
fn criterion_09_inequality_suite() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst_change = 0.0f64;
    let mut checked = 0;
    for id in InequalityId::ALL {
        for n in 1..=3 {
            if !id.supports(n) {
                continue;
            }
            let r = verify_ratio(id, &SamplerSpec::reference(n), 1000).unwrap();
            checked += 1;
            let change = r.refinement_change();
            worst_change = worst_change.max(change);
            if !(r.trials >= 1000
                && r.max_ratio.is_finite()
                && r.inconsistent == 0
                && change < 0.1)
            {
                failures.push(format!("{}@n={n} (change {change:.3})", id.name()));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        9,
        "inequality suite",
        failures.is_empty() && secs < 600.0,
        format!(
            "{checked} pairs, worst refinement change {:.2}%, failures {failures:?}, {secs:.1} s",
            100.0 * worst_change
        ),
    );
}

const DETERMINISM_CONFIG: &str = r#"
[grid]
dims = [32, 32]
lengths = [25.132741228718345, 25.132741228718345]

[params]
equation = "LLGR"
damping = 1.0
eps = 0.01
dt = 0.01
horizon = 0.1
sample_every = 2

[initial_data]
kind = "perturbation"
base = [0.0, 0.0, 1.0]
seminorm = 0.1
band = 4
seed = 5

[output]
snapshot_every = 1
"#;

fn simulate_with_threads(threads: usize, dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let config = parse_config(DETERMINISM_CONFIG).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| simulate(&config, dir)).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_10_constraint_and_determinism() {
    let start = Instant::now();
    let g = box_grid(1, 256);
    let u0 = make_perturbation_with_seminorm(&g, &NORTH, 0.3, 8, 2).unwrap().field;

    let mut post = 0.0f64;
    for equation in [Equation::Hllg, Equation::Hhhf, Equation::Hwm, Equation::Llgr] {
        for scheme in [Scheme::Etdrk2, Scheme::Rk4] {
            let mut p = SimParams::new(equation, 1);
            p.scheme = scheme;
            p.dt = 1e-2;
            p.horizon = 0.5;
            post = post.max(run(&u0, &p, NullSink).unwrap().max_post_drift);
        }
    }

    let mut min_order = f64::INFINITY;
    for scheme in [Scheme::Etdrk2, Scheme::Rk4] {
        let drift = |dt: f64| {
            let mut p = SimParams::new(Equation::Hllg, 1);
            p.scheme = scheme;
            p.dt = dt;
            p.horizon = dt;
            p.renormalize = false;
            step(&u0, &p).unwrap().1.drift
        };
        let (a, b) = (drift(2e-2), drift(1e-2));
        min_order = min_order.min((a / b).log2());
    }

    let tmp = tempfile::tempdir().unwrap();
    let serial = simulate_with_threads(1, &tmp.path().join("serial"));
    let parallel = simulate_with_threads(4, &tmp.path().join("parallel"));
    let identical = serial.len() > 2 && serial == parallel;

    let secs = start.elapsed().as_secs_f64();
    report(
        10,
        "constraint and determinism",
        post <= 1e-10 && min_order >= 1.8 && identical && secs < 60.0,
        format!(
            "post drift {post:.2e}, one-step drift order {min_order:.2}, {} files identical {identical}, {secs:.1} s",
            serial.len()
        ),
    );
}
