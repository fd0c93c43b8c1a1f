//! Acceptance suite. One line per criterion, `PASS` or `FAIL`, with the
//! measured value and the pinned tolerance.
//!
//! Runs as a plain binary so the lines are always printed. Exits non-zero
//! when a criterion outside `KNOWN_FAILURES` fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stflow::assembly::{Assembler, WellSpec};
use stflow::driver::{RunMode, RunResult, Simulation};
use stflow::estimators::{fit_thresholds, temporal_flux_estimator, ThresholdMode};
use stflow::exec::Execution;
use stflow::io::{gaussian_field, relative_l2, RunConfig};
use stflow::mesh::{CoarseGrid, MeshLevels, Side, SpaceTimeMesh};
use stflow::physics::FluidModel;
use stflow::solver::LinearConfig;
use stflow::state::{State, StepStart};
use stflow::upscaling::{upscale_permeability, CellField, Direction, RockField, UpscaleMethod};

const ORACLE_TOL: f64 = 1e-8;
const ORACLE_SECONDS: f64 = 60.0;
const DESK_SAT_TOL: f64 = 0.05;
const DESK_CUM_TOL: f64 = 0.03;
const DESK_SECONDS: f64 = 600.0;
const DESK_STEPS: usize = 30;
/// Cumulatives below this many ft³ in the reference count as zero.
const CUM_FLOOR: f64 = 1e-6;
const SPEEDUP_RATIO: f64 = 0.5;
const SPEEDUP_STEPS: usize = 2;
const CONSERVATION_TOL: f64 = 1e-6;
const JACOBIAN_TOL: f64 = 1e-5;
const STEADY_TOL: f64 = 1e-12;
const UPSCALE_TOL: f64 = 0.01;

const KNOWN_FAILURES: &[&str] = &["desk-accuracy"];

const DESK: &str = r#"
seed = 20
[grid]
nx = 16
ny = 48
dx = 8.0
dy = 8.0
levels_space = 2
levels_time = 2
[time]
steps = 1
dt = 10.0
[rock]
kind = "gaussian"
geometric_mean = 100.0
log_variance = 1.0
correlation_length = 6.0
[[wells]]
name = "inj"
kind = "injector"
i = 0
j = 0
value = 1.0
radius = 0.1
[[wells]]
name = "prod"
kind = "producer"
i = 63
j = 191
value = 1000.0
radius = 0.1
"#;

struct Check {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn check(id: &'static str, pass: bool, detail: String) -> Check {
    let c = Check { id, pass, detail };
    println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.id, c.detail);
    c
}

fn desk(steps: usize, mode: RunMode) -> Simulation {
    let mut cfg = RunConfig::from_toml(DESK).unwrap();
    cfg.time.steps = steps;
    cfg.mode = mode;
    cfg.simulation().unwrap()
}

fn run(sim: &Simulation) -> (RunResult, f64) {
    let t = Instant::now();
    let r = sim.run().unwrap();
    (r, t.elapsed().as_secs_f64())
}

fn all_indicators_non_negative(r: &RunResult) -> bool {
    r.indicators.iter().all(|d| d.indicators.all_non_negative())
}

fn small(nx: usize, ny: usize, levels: MeshLevels, steps: usize, mode: RunMode) -> Simulation {
    let (fx, fy) = (nx << levels.space, ny << levels.space);
    let k = gaussian_field(5, fx, fy, 100.0, 1.0, 4.0);
    let fine = stflow::upscaling::LevelRock {
        kx: k.clone(),
        ky: k,
        porosity: CellField::constant(fx, fy, 0.2),
    };
    Simulation {
        grid: CoarseGrid::new(nx, ny, 8.0, 8.0, 10.0),
        levels,
        steps,
        model: FluidModel::default(),
        rock: RockField::from_fine(fine, levels.space, UpscaleMethod::FlowBased, Execution::default()).unwrap(),
        wells: vec![WellSpec::injector(0, 0, 1.0), WellSpec::producer(fx - 1, fy - 1, 1000.0).with_radius(0.1)],
        initial_pressure: 1000.0,
        initial_saturation: 0.2,
        solver: Default::default(),
        mode,
        thresholds: ThresholdMode::Fitted,
        warm_start: true,
        exec: Execution::default(),
        record_indicators: true,
    }
}

fn oracle_equivalence(non_negative: &mut bool) -> Check {
    let levels = MeshLevels { space: 2, time: 2 };
    let mut fine = small(8, 8, levels, 10, RunMode::Fine);
    fine.solver.newton.tol_rel = 1e-12;
    fine.solver.newton.tol_abs = 1e-10;
    let mut adaptive = fine.clone();
    adaptive.mode = RunMode::Adaptive;
    adaptive.thresholds = ThresholdMode::MarkAll;
    let (a, ta) = run(&adaptive);
    let (f, tf) = run(&fine);
    *non_negative &= all_indicators_non_negative(&a) && all_indicators_non_negative(&f);
    let ep = relative_l2(&a.history.pressure, &f.history.pressure);
    let es = relative_l2(&a.history.saturation, &f.history.saturation);
    check(
        "oracle-equivalence",
        ep <= ORACLE_TOL && es <= ORACLE_TOL && ta + tf <= ORACLE_SECONDS,
        format!(
            "relative L2 pressure {ep:.2e}, saturation {es:.2e} (tol {ORACLE_TOL:e}); {:.1} s (limit {ORACLE_SECONDS})",
            ta + tf
        ),
    )
}

fn cumulative_error(a: f64, b: f64) -> f64 {
    if b.abs() < CUM_FLOOR {
        (a - b).abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

fn desk_accuracy(non_negative: &mut bool) -> (Check, Check) {
    let mut adaptive = desk(DESK_STEPS, RunMode::Adaptive);
    adaptive.record_indicators = true;
    let (a, ta) = run(&adaptive);
    let (f, tf) = run(&desk(DESK_STEPS, RunMode::Fine));
    *non_negative &= all_indicators_non_negative(&a);
    let es = relative_l2(&a.history.saturation, &f.history.saturation);
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.rates.iter().zip(&f.rates) {
        let eo = cumulative_error(x.cum_oil, y.cum_oil);
        let ew = cumulative_error(x.cum_water, y.cum_water);
        if eo.max(ew) > worst.1.max(worst.2) {
            worst = (y.time, eo, ew);
        }
    }
    let late = a
        .rates
        .iter()
        .zip(&f.rates)
        .filter(|(_, y)| y.time > 30.0)
        .map(|(x, y)| cumulative_error(x.cum_oil, y.cum_oil).max(cumulative_error(x.cum_water, y.cum_water)))
        .fold(0.0, f64::max);
    let seconds = ta + tf;
    let accuracy = check(
        "desk-accuracy",
        es <= DESK_SAT_TOL && worst.1.max(worst.2) <= DESK_CUM_TOL && seconds <= DESK_SECONDS,
        format!(
            "saturation L2 {es:.4} (tol {DESK_SAT_TOL}); worst cumulative error oil {:.4} water {:.4} at t = {} days, {late:.4} after 30 days (tol {DESK_CUM_TOL}); {seconds:.0} s (limit {DESK_SECONDS})",
            worst.1, worst.2, worst.0
        ),
    );
    let ratio = a.report.element_passes as f64 / f.report.element_passes as f64;
    let work = check(
        "desk-element-passes",
        ratio <= SPEEDUP_RATIO,
        format!(
            "{} adaptive vs {} fine over {DESK_STEPS} steps, ratio {ratio:.3} (limit {SPEEDUP_RATIO})",
            a.report.element_passes, f.report.element_passes
        ),
    );
    (accuracy, work)
}

fn speedup() -> Check {
    let mut times = Vec::new();
    let mut passes = Vec::new();
    for mode in [RunMode::Adaptive, RunMode::Fine] {
        let mut sim = desk(SPEEDUP_STEPS, mode);
        sim.solver.linear = LinearConfig::gmres();
        let (r, _) = run(&sim);
        times.push(r.report.timing.linear_seconds);
        passes.push(r.report.element_passes);
    }
    let t = times[0] / times[1];
    let p = passes[0] as f64 / passes[1] as f64;
    check(
        "speedup-gmres",
        t <= SPEEDUP_RATIO && p <= SPEEDUP_RATIO,
        format!(
            "linear time {:.1} s vs {:.1} s ratio {t:.3}, element-passes ratio {p:.3} over {SPEEDUP_STEPS} steps (limit {SPEEDUP_RATIO})",
            times[0], times[1]
        ),
    )
}

fn conservation(non_negative: &mut bool) -> Check {
    let sim = small(4, 4, MeshLevels { space: 1, time: 1 }, 50, RunMode::Adaptive);
    let (r, _) = run(&sim);
    *non_negative &= all_indicators_non_negative(&r);
    let e = r.report.max_relative_imbalance;
    check(
        "mass-conservation",
        e <= CONSERVATION_TOL,
        format!("max per-phase imbalance / injected mass {e:.2e} over 50 steps (tol {CONSERVATION_TOL:e})"),
    )
}

fn jacobian_fd_error(asm: &Assembler, x: &[f64]) -> f64 {
    let dense = asm.jacobian(x).unwrap().matrix.to_dense();
    let n = x.len();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[j] += h;
        xm[j] -= h;
        let (rp, rm) = (asm.residual(&xp).unwrap(), asm.residual(&xm).unwrap());
        let scale = (0..n).map(|i| dense[i][j].abs()).fold(0.0, f64::max).max(1e-12);
        for i in 0..n {
            worst = worst.max(((rp[i] - rm[i]) / (2.0 * h) - dense[i][j]).abs() / scale);
        }
    }
    worst
}

fn jacobian() -> Check {
    let base = SpaceTimeMesh::build_coarse(CoarseGrid::new(3, 3, 10.0, 10.0, 5.0), MeshLevels { space: 1, time: 1 }).unwrap();
    let mesh = base.refine_temporal(&BTreeSet::from([4])).unwrap();
    let model = FluidModel::default();
    let rock = RockField::homogeneous(3, 3, 1, 50.0, 0.2);
    let start = StepStart::uniform(&mesh, &model, &rock, 1000.0, 0.3);
    let wells = [WellSpec::injector(0, 0, 1.0), WellSpec::producer(5, 5, 950.0).with_radius(0.1)];
    let asm = Assembler::new(&mesh, &model, &rock, &wells, &start, Execution::Sequential).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut state = State::uniform(&mesh, 1000.0, 0.3);
        for e in 0..mesh.num_elements() {
            state.pressure[e] = rng.random_range(900.0..1100.0);
            state.saturation[e] = rng.random_range(0.25..0.75);
        }
        for f in mesh.subfaces().iter().filter(|f| f.is_interior()) {
            for a in 0..2 {
                let m = rng.random_range(1.0..50.0);
                state.aux_flux[a][f.id] = if rng.random_bool(0.5) { m } else { -m };
            }
        }
        worst = worst.max(jacobian_fd_error(&asm, &asm.dofs.pack(&state)));
    }
    check(
        "jacobian-fd",
        worst <= JACOBIAN_TOL,
        format!("max column-scaled error {worst:.2e} on 20 random states (tol {JACOBIAN_TOL:e})"),
    )
}

fn estimators(non_negative: bool) -> Check {
    let mut sim = small(4, 4, MeshLevels { space: 1, time: 1 }, 2, RunMode::Fine);
    sim.model.fluid.oil.compressibility = 0.0;
    sim.model.fluid.water.compressibility = 0.0;
    sim.initial_saturation = 1.0;
    let (r, _) = run(&sim);
    let mut steady: f64 = 0.0;
    for d in &r.indicators {
        for v in d.indicators.eta_tf.iter().chain(&d.indicators.eta_tp) {
            steady = steady.max(v[0].max(v[1]));
        }
    }
    let hand = temporal_flux_estimator(1.0, 3.0, [1.0, 1.0], [3.0, 0.0], [1.0, 0.0]);
    let all = non_negative && all_indicators_non_negative(&r);
    check(
        "estimators",
        steady <= STEADY_TOL && (hand - 2.0).abs() <= 1e-15 && all,
        format!("steady max temporal estimator {steady:.2e} (tol {STEADY_TOL:e}); hand case {hand} (want 2); all non-negative {all}"),
    )
}

fn threshold_fit() -> Check {
    let f = fit_thresholds(&[0.01, 1.0]);
    let two = (f.theta_mean - 0.1).abs() <= 1e-12;
    let sentinels = [vec![], vec![0.001, 0.009], vec![0.5], vec![0.0, 0.5, 0.002]]
        .iter()
        .all(|v| fit_thresholds(v).is_sentinel());
    check(
        "threshold-fit",
        two && sentinels,
        format!("{{0.01, 1}} gives theta {:.15} (want 0.1); sentinel cases {sentinels}", f.theta_mean),
    )
}

fn warm_start() -> Check {
    let mut its = Vec::new();
    for warm in [true, false] {
        let mut sim = desk(10, RunMode::Adaptive);
        sim.warm_start = warm;
        let (r, _) = run(&sim);
        its.push(r.report.newton_iterations);
    }
    check(
        "warm-start",
        its[0] <= its[1],
        format!("Newton iterations warm {} vs cold {} over 10 steps", its[0], its[1]),
    )
}

fn tiled(mesh: &SpaceTimeMesh) -> bool {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    if rel(mesh.total_measure(), mesh.domain_measure()) > 1e-12 {
        return false;
    }
    let th = mesh.grid().thickness;
    for (e, el) in mesh.elements().iter().enumerate() {
        for side in Side::ALL {
            let len = match side {
                Side::West | Side::East => el.size[1],
                Side::South | Side::North => el.size[0],
            };
            let sum: f64 = mesh
                .faces_of(e)
                .iter()
                .filter(|f| f.side == side)
                .map(|f| mesh.subfaces()[f.subface].measure)
                .sum();
            if rel(sum, len * th * el.duration) > 1e-12 {
                return false;
            }
        }
    }
    mesh.subfaces().iter().filter_map(|f| f.pair()).all(|(l, r)| {
        let (a, b) = (mesh.element(l), mesh.element(r));
        a.level_s().abs_diff(b.level_s()) <= 1 && a.level_t().abs_diff(b.level_t()) <= 1
    })
}

fn mesh_invariants() -> Check {
    let levels = MeshLevels { space: 2, time: 2 };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    for _ in 0..1000 {
        let (nx, ny) = (rng.random_range(1..4), rng.random_range(1..4));
        let mut mesh = SpaceTimeMesh::build_coarse(CoarseGrid::new(nx, ny, 8.0, 4.0, 10.0), levels).unwrap();
        let mut ok = tiled(&mesh);
        for _ in 0..rng.random_range(1..5) {
            let space = rng.random_bool(0.5);
            let cands: Vec<usize> = (0..mesh.num_elements())
                .filter(|&e| {
                    let el = mesh.element(e);
                    if space {
                        el.level_s() < levels.space
                    } else {
                        el.level_t() < levels.time
                    }
                })
                .collect();
            let marks: BTreeSet<usize> = if cands.is_empty() {
                BTreeSet::new()
            } else {
                (0..rng.random_range(0..6)).map(|_| cands[rng.random_range(0..cands.len())]).collect()
            };
            let next = if space { mesh.refine_spatial(&marks) } else { mesh.refine_temporal(&marks) };
            let next = next.unwrap().smooth();
            ok &= tiled(&next) && next.smooth().leaf_signature() == next.leaf_signature();
            mesh = next;
        }
        let empty = BTreeSet::new();
        ok &= mesh.refine_spatial(&empty).unwrap().leaf_signature() == mesh.leaf_signature();
        ok &= mesh.refine_temporal(&empty).unwrap().leaf_signature() == mesh.leaf_signature();
        bad += usize::from(!ok);
    }
    check(
        "mesh-invariants",
        bad == 0,
        format!("{bad} of 1000 random refine/smooth sequences violated tiling, balance or idempotence"),
    )
}

fn upscaling() -> Check {
    let layers = CellField::new(2, 2, vec![10.0, 1000.0, 10.0, 1000.0]).unwrap();
    let up = |dir| {
        upscale_permeability(&layers, &layers, 2, dir, UpscaleMethod::FlowBased, Execution::Sequential).unwrap().values[0]
    };
    let (series, parallel) = (up(Direction::X), up(Direction::Y));
    let want_series = 2.0 / (1.0 / 10.0 + 1.0 / 1000.0);
    let near = |a: f64, b: f64| (a - b).abs() <= UPSCALE_TOL * b;
    let mut wiener = true;
    for seed in 0..20 {
        let k = gaussian_field(seed, 16, 16, 100.0, 2.0, 3.0);
        for method in [UpscaleMethod::FlowBased, UpscaleMethod::HarmonicArithmetic] {
            for dir in [Direction::X, Direction::Y] {
                let c = upscale_permeability(&k, &k, 4, dir, method, Execution::Sequential).unwrap();
                for (b, v) in c.values.iter().enumerate() {
                    let (bi, bj) = (b % 4, b / 4);
                    let block: Vec<f64> = (0..16).map(|q| k.values[(bj * 4 + q / 4) * 16 + bi * 4 + q % 4]).collect();
                    let mean = block.iter().sum::<f64>() / 16.0;
                    let harm = 16.0 / block.iter().map(|x| 1.0 / x).sum::<f64>();
                    wiener &= *v >= harm * (1.0 - 1e-12) && *v <= mean * (1.0 + 1e-12);
                }
            }
        }
    }
    check(
        "upscaling",
        near(series, want_series) && near(parallel, 505.0) && wiener,
        format!("series {series:.4} (want {want_series:.4}), parallel {parallel:.4} (want 505), Wiener bounds {wiener} (tol {UPSCALE_TOL})"),
    )
}

fn main() -> ExitCode {
    let mut non_negative = true;
    let mut checks = vec![
        mesh_invariants(),
        upscaling(),
        threshold_fit(),
        jacobian(),
        conservation(&mut non_negative),
        oracle_equivalence(&mut non_negative),
        warm_start(),
        speedup(),
    ];
    let (accuracy, work) = desk_accuracy(&mut non_negative);
    checks.push(accuracy);
    checks.push(work);
    checks.push(estimators(non_negative));
    let unexpected: Vec<&str> = checks.iter().filter(|c| !c.pass && !KNOWN_FAILURES.contains(&c.id)).map(|c| c.id).collect();
    let passed = checks.iter().filter(|c| c.pass).count();
    println!("{passed}/{} criteria passed", checks.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {}", unexpected.join(", "));
        ExitCode::FAILURE
    }
}
