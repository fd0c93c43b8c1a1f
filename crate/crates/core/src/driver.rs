//! Time stepping with per-step adaptive passes.
//!
//! Each coarse step starts on the coarsest space-time mesh. Temporal
//! passes refine where the flux estimator and the saturation change agree,
//! then spatial passes refine where saturation varies in space. Each pass
//! is warm-started from the projection of the previous pass.
//!
//! Start-of-step data lives on the finest spatial grid between steps
//! ([`History`]) and is aggregated onto whatever columns the next mesh has.

use std::time::Instant;

use crate::assembly::{Assembler, WellKind, WellSpec};
use crate::error::{Error, Result};
use crate::estimators::{self, CellVector, Indicators, ThresholdFit, ThresholdMode};
use crate::exec::Execution;
use crate::mesh::{CoarseGrid, MeshLevels, SpaceTimeMesh};
use crate::physics::{FluidModel, Phase};
use crate::solver::{newton_solve, NewtonStats, SolverConfig};
use crate::state::{ColumnStart, State, StepStart};
use crate::upscaling::RockField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    #[default]
    Adaptive,
    /// Uniform finest mesh in space and time.
    Fine,
    /// Coarsest mesh only.
    Coarse,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Adaptive => "adaptive",
            RunMode::Fine => "fine",
            RunMode::Coarse => "coarse",
        }
    }
}

/// End-of-step fields on the finest spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub nx: usize,
    pub ny: usize,
    pub pressure: Vec<f64>,
    pub saturation: Vec<f64>,
    /// Phase mass per fine cell, lb.
    pub mass: Vec<[f64; 2]>,
    pub velocity: Vec<CellVector>,
    pub aux_velocity: Vec<CellVector>,
    pub divergence: Vec<[f64; 2]>,
    pub sat_gradient: Vec<Option<f64>>,
}

fn fine_pore_volume(grid: &CoarseGrid, levels: MeshLevels, rock: &RockField, x: usize, y: usize) -> f64 {
    let r = (1usize << levels.space) as f64;
    let v = grid.dx / r * grid.dy / r * grid.thickness;
    rock.level(levels.space).porosity.get(x, y) * v
}

impl History {
    pub fn uniform(grid: &CoarseGrid, levels: MeshLevels, rock: &RockField, model: &FluidModel, pressure: f64, saturation: f64) -> Self {
        let nx = grid.nx << levels.space;
        let ny = grid.ny << levels.space;
        let n = nx * ny;
        let mass = (0..n)
            .map(|c| {
                let pv = fine_pore_volume(grid, levels, rock, c % nx, c / nx);
                Phase::ALL.map(|ph| pv * model.concentration(ph, pressure, saturation))
            })
            .collect();
        Self {
            nx,
            ny,
            pressure: vec![pressure; n],
            saturation: vec![saturation; n],
            mass,
            velocity: vec![[[0.0; 2]; 2]; n],
            aux_velocity: vec![[[0.0; 2]; 2]; n],
            divergence: vec![[0.0; 2]; n],
            sat_gradient: vec![None; n],
        }
    }

    pub fn total_mass(&self) -> [f64; 2] {
        let mut m = [0.0; 2];
        for c in &self.mass {
            m[0] += c[0];
            m[1] += c[1];
        }
        m
    }

    /// Start data aggregated onto the columns of `mesh`.
    pub fn step_start(&self, mesh: &SpaceTimeMesh, model: &FluidModel, rock: &RockField) -> StepStart {
        let ls = mesh.levels().space;
        let columns = mesh
            .columns()
            .iter()
            .map(|col| {
                let ([x0, x1], [y0, y1]) = col.cell.fine_range(ls);
                let mut out = ColumnStart::default();
                let mut grad = Some(0.0);
                let mut count = 0.0;
                for y in y0 as usize..y1 as usize {
                    for x in x0 as usize..x1 as usize {
                        let c = y * self.nx + x;
                        count += 1.0;
                        out.pressure += self.pressure[c];
                        for a in 0..2 {
                            out.mass[a] += self.mass[c][a];
                            out.divergence[a] += self.divergence[c][a];
                            for d in 0..2 {
                                out.velocity[a][d] += self.velocity[c][a][d];
                                out.aux_velocity[a][d] += self.aux_velocity[c][a][d];
                            }
                        }
                        grad = match (grad, self.sat_gradient[c]) {
                            (Some(g), Some(h)) => Some(g + h),
                            _ => None,
                        };
                    }
                }
                out.pressure /= count;
                for a in 0..2 {
                    out.divergence[a] /= count;
                    for d in 0..2 {
                        out.velocity[a][d] /= count;
                        out.aux_velocity[a][d] /= count;
                    }
                }
                out.sat_gradient = grad.map(|g| g / count);
                let pv = rock.level(col.cell.level).porosity.get(col.cell.i as usize, col.cell.j as usize)
                    * mesh.element(col.elements.start).volume;
                out.saturation = water_saturation(model, out.pressure, out.mass[1], pv);
                out
            })
            .collect();
        StepStart { columns }
    }

    /// Stores the end-of-step values of a converged pass.
    pub fn record(&mut self, asm: &Assembler, state: &State) {
        let mesh = asm.mesh;
        let fluxes = asm.phase_fluxes(state);
        let vel = estimators::cell_velocities(asm, state, &fluxes);
        let (_, eps_s) = estimators::saturation_gradients(asm, state);
        let grid = mesh.grid();
        let levels = mesh.levels();
        for y in 0..self.ny {
            for x in 0..self.nx {
                let c = y * self.nx + x;
                let col = mesh.column_at(x as u32, y as u32);
                let e = mesh.columns()[col].elements.end - 1;
                let (p, s) = (state.pressure[e], state.saturation[e]);
                let pv = fine_pore_volume(grid, levels, asm.rock, x, y);
                self.pressure[c] = p;
                self.saturation[c] = s;
                self.mass[c] = Phase::ALL.map(|ph| pv * asm.model.concentration(ph, p, s));
                self.velocity[c] = vel.actual[e];
                self.aux_velocity[c] = vel.aux[e];
                self.divergence[c] = vel.divergence[e];
                self.sat_gradient[c] = Some(eps_s[e]);
            }
        }
    }
}

/// Saturation whose water mass in pore volume `pv` at oil pressure `p`
/// equals `water`.
fn water_saturation(model: &FluidModel, p: f64, water: f64, pv: f64) -> f64 {
    let mut s = water / (pv * model.density(Phase::Water, p, 0.5));
    for _ in 0..50 {
        let next = water / (pv * model.density(Phase::Water, p, s));
        let done = (next - s).abs() <= 1e-15 * s.abs().max(1.0);
        s = next;
        if done {
            break;
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassKind {
    Coarsest,
    Temporal,
    Spatial,
}

impl PassKind {
    pub fn name(self) -> &'static str {
        match self {
            PassKind::Coarsest => "coarsest",
            PassKind::Temporal => "temporal",
            PassKind::Spatial => "spatial",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassLog {
    pub kind: PassKind,
    pub elements: usize,
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    pub marked: usize,
    pub fits: Vec<(&'static str, ThresholdFit)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub t_end: f64,
    pub passes: Vec<PassLog>,
    /// Mass imbalance of the step per phase, lb.
    pub imbalance: [f64; 2],
    pub final_elements: usize,
    pub max_level_s: u8,
    pub max_level_t: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timing {
    /// Residual and Jacobian evaluation, condensation and preconditioner
    /// setup.
    pub assembly_seconds: f64,
    pub linear_seconds: f64,
    /// Estimators, marking, refinement and projection.
    pub adaptivity_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub mode: RunMode,
    pub steps: Vec<StepLog>,
    pub timing: Timing,
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    /// Element count summed over every solved pass.
    pub element_passes: usize,
    /// Cumulative injected mass, lb.
    pub injected_mass: f64,
    /// Largest step imbalance relative to the cumulative injected mass.
    pub max_relative_imbalance: f64,
}

/// Producer surface rates at one output time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub time: f64,
    pub oil_rate: f64,
    pub water_rate: f64,
    pub cum_oil: f64,
    pub cum_water: f64,
}

/// Raw indicators of one pass.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorDump {
    pub step: usize,
    pub pass: usize,
    pub kind: PassKind,
    pub centers: Vec<[f64; 3]>,
    pub indicators: Indicators,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub report: RunReport,
    pub rates: Vec<RateRow>,
    pub history: History,
    /// Last step's mesh and solution; `None` for a zero-step run.
    pub last: Option<(SpaceTimeMesh, State)>,
    pub indicators: Vec<IndicatorDump>,
}

/// Everything a run needs.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub grid: CoarseGrid,
    pub levels: MeshLevels,
    pub steps: usize,
    pub model: FluidModel,
    pub rock: RockField,
    pub wells: Vec<WellSpec>,
    pub initial_pressure: f64,
    pub initial_saturation: f64,
    pub solver: SolverConfig,
    pub mode: RunMode,
    pub thresholds: ThresholdMode,
    /// Project each pass onto the next refinement; otherwise refined
    /// passes start from the start-of-step values.
    pub warm_start: bool,
    pub exec: Execution,
    pub record_indicators: bool,
}

/// Outcome of one coarse step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub mesh: SpaceTimeMesh,
    pub state: State,
    pub log: StepLog,
    pub stats: NewtonStats,
    pub adaptivity_seconds: f64,
    pub element_passes: usize,
    /// Producer surface rates at the step end `[oil, water]`, ft³/day.
    pub end_rates: [f64; 2],
    /// Mass through wells over the step `[oil, water]`, lb, positive out.
    pub well_mass: [f64; 2],
    /// Producer surface volume over the step `[oil, water]`, ft³.
    pub produced: [f64; 2],
    pub injected_mass: f64,
    pub indicators: Vec<IndicatorDump>,
}

fn add_stats(total: &mut NewtonStats, s: &NewtonStats) {
    total.iterations += s.iterations;
    total.linear_iterations += s.linear_iterations;
    total.setup_seconds += s.setup_seconds;
    total.linear_seconds += s.linear_seconds;
}

impl Simulation {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.model.fluid.validate()?;
        self.model.relperm.validate()?;
        self.solver.newton.validate()?;
        self.solver.linear.validate()?;
        if self.rock.max_level() < self.levels.space {
            return Err(Error::config("grid.levels_space", "exceeds the rock field levels"));
        }
        for (k, w) in self.wells.iter().enumerate() {
            w.validate(&format!("wells[{k}]"))?;
        }
        Ok(())
    }

    fn first_mesh(&self, step: usize) -> Result<SpaceTimeMesh> {
        let grid = self.grid.at_step(step);
        match self.mode {
            RunMode::Fine => SpaceTimeMesh::build_uniform_fine(grid, self.levels),
            RunMode::Adaptive | RunMode::Coarse => SpaceTimeMesh::build_coarse(grid, self.levels),
        }
    }

    /// Each element takes the start values of its column.
    fn start_guess(&self, asm: &Assembler) -> State {
        let mut s = State::uniform(asm.mesh, 0.0, 0.0);
        for (c, col) in asm.mesh.columns().iter().enumerate() {
            for e in col.elements.clone() {
                s.pressure[e] = asm.start.columns[c].pressure;
                s.saturation[e] = asm.start.columns[c].saturation;
            }
        }
        asm.consistent_fluxes(&s)
    }

    fn assembler<'a>(&'a self, mesh: &'a SpaceTimeMesh, start: &'a StepStart) -> Result<Assembler<'a>> {
        Assembler::new(mesh, &self.model, &self.rock, &self.wells, start, self.exec)
    }

    /// Solves coarse step `step` from `history`.
    pub fn advance_step(&self, step: usize, history: &History) -> Result<StepOutcome> {
        let mut stats = NewtonStats::default();
        let mut adapt = 0.0;
        let mut passes = Vec::new();
        let mut dumps = Vec::new();
        let mut element_passes = 0;

        let mut mesh = self.first_mesh(step)?;
        let mut start = history.step_start(&mesh, &self.model, &self.rock);
        let (mut state, s) = {
            let asm = self.assembler(&mesh, &start)?;
            let guess = self.start_guess(&asm);
            newton_solve(&asm, &guess, &self.solver)?
        };
        add_stats(&mut stats, &s);
        element_passes += mesh.num_elements();
        passes.push(PassLog {
            kind: PassKind::Coarsest,
            elements: mesh.num_elements(),
            newton_iterations: s.iterations,
            linear_iterations: s.linear_iterations,
            marked: 0,
            fits: Vec::new(),
        });

        if self.mode == RunMode::Adaptive {
            let plan = std::iter::repeat_n(PassKind::Temporal, self.levels.time as usize)
                .chain(std::iter::repeat_n(PassKind::Spatial, self.levels.space as usize));
            let mut current = PassKind::Coarsest;
            let mut skip_temporal = false;
            for next in plan {
                if next == PassKind::Temporal && skip_temporal {
                    continue;
                }
                let t = Instant::now();
                let asm = self.assembler(&mesh, &start)?;
                let raw = estimators::compute_estimators(&asm, &state)?;
                let norm = raw.normalized();
                if self.record_indicators {
                    dumps.push(IndicatorDump {
                        step,
                        pass: passes.len() - 1,
                        kind: current,
                        centers: mesh.elements().iter().map(|el| [el.center[0], el.center[1], el.t_start + 0.5 * el.duration]).collect(),
                        indicators: raw,
                    });
                }
                let decision = match next {
                    PassKind::Temporal => estimators::temporal_marks(&mesh, &norm, self.thresholds, current == PassKind::Coarsest),
                    _ => {
                        let wells: Vec<usize> = asm.wells.columns().collect();
                        estimators::spatial_marks(&mesh, &norm, self.thresholds, &wells)
                    }
                };
                if let Some(last) = passes.last_mut() {
                    last.marked = decision.marked.len();
                    last.fits = decision.fits.clone();
                }
                drop(asm);
                if decision.marked.is_empty() {
                    adapt += t.elapsed().as_secs_f64();
                    if next == PassKind::Temporal {
                        skip_temporal = true;
                        continue;
                    }
                    break;
                }
                let refined = match next {
                    PassKind::Temporal => mesh.refine_temporal(&decision.marked)?,
                    _ => mesh.refine_spatial(&decision.marked)?,
                }
                .smooth();
                if refined.leaf_signature() == mesh.leaf_signature() {
                    adapt += t.elapsed().as_secs_f64();
                    if next == PassKind::Temporal {
                        skip_temporal = true;
                        continue;
                    }
                    break;
                }
                let new_start = history.step_start(&refined, &self.model, &self.rock);
                let warm = if self.warm_start {
                    Some(crate::mesh::project_state(&mesh, &state, &refined)?)
                } else {
                    None
                };
                adapt += t.elapsed().as_secs_f64();
                mesh = refined;
                start = new_start;
                let asm = self.assembler(&mesh, &start)?;
                let guess = match warm {
                    Some(w) => w,
                    None => self.start_guess(&asm),
                };
                let (sol, s) = newton_solve(&asm, &guess, &self.solver)?;
                state = sol;
                add_stats(&mut stats, &s);
                element_passes += mesh.num_elements();
                passes.push(PassLog {
                    kind: next,
                    elements: mesh.num_elements(),
                    newton_iterations: s.iterations,
                    linear_iterations: s.linear_iterations,
                    marked: 0,
                    fits: Vec::new(),
                });
                current = next;
            }
        }

        let asm = self.assembler(&mesh, &start)?;
        let residual = asm.phase_mass_residuals(&asm.dofs.pack(&state))?;
        let mut imbalance = [0.0; 2];
        for r in &residual {
            imbalance[0] += r[0];
            imbalance[1] += r[1];
        }
        let mut well_mass = [0.0; 2];
        let mut injected = 0.0;
        let mut end_rates = [0.0; 2];
        let mut produced = [0.0; 2];
        for e in 0..mesh.num_elements() {
            let el = mesh.element(e);
            let last = e + 1 == mesh.columns()[el.column].elements.end;
            for (w, q) in asm.well_rates(&state, e) {
                let producer = self.wells[w].kind == WellKind::Producer;
                for a in 0..2 {
                    well_mass[a] += q[a] * el.duration;
                    if !producer {
                        injected -= q[a] * el.duration;
                    }
                    if producer {
                        let rho = self.model.fluid.phase(Phase::ALL[a]).rho_ref;
                        produced[a] += q[a] * el.duration / rho;
                        if last {
                            end_rates[a] += q[a] / rho;
                        }
                    }
                }
            }
        }
        Ok(StepOutcome {
            log: StepLog {
                step,
                t_end: mesh.grid().t_start() + mesh.grid().dt,
                passes,
                imbalance,
                final_elements: mesh.num_elements(),
                max_level_s: mesh.max_level_s(),
                max_level_t: mesh.max_level_t(),
            },
            mesh,
            state,
            stats,
            adaptivity_seconds: adapt,
            element_passes,
            end_rates,
            well_mass,
            produced,
            injected_mass: injected,
            indicators: dumps,
        })
    }

    pub fn run(&self) -> Result<RunResult> {
        self.run_with(|_| Ok(()))
    }

    /// Runs every step, handing each outcome to `on_step` before the
    /// next one starts.
    pub fn run_with(&self, mut on_step: impl FnMut(&StepOutcome) -> Result<()>) -> Result<RunResult> {
        self.validate()?;
        let t0 = Instant::now();
        let mut history = History::uniform(&self.grid, self.levels, &self.rock, &self.model, self.initial_pressure, self.initial_saturation);
        let mut report = RunReport {
            mode: self.mode,
            steps: Vec::with_capacity(self.steps),
            timing: Timing::default(),
            newton_iterations: 0,
            linear_iterations: 0,
            element_passes: 0,
            injected_mass: 0.0,
            max_relative_imbalance: 0.0,
        };
        let mut rates = Vec::with_capacity(self.steps);
        let mut indicators = Vec::new();
        let mut prev = RateRow {
            time: 0.0,
            oil_rate: 0.0,
            water_rate: 0.0,
            cum_oil: 0.0,
            cum_water: 0.0,
        };
        let mut last = None;
        for step in 0..self.steps {
            let out = self.advance_step(step, &history).map_err(|e| Error::Step {
                step,
                source: Box::new(e),
            })?;
            on_step(&out)?;
            let t = Instant::now();
            {
                let start = history.step_start(&out.mesh, &self.model, &self.rock);
                let asm = self.assembler(&out.mesh, &start)?;
                history.record(&asm, &out.state);
            }
            report.timing.adaptivity_seconds += out.adaptivity_seconds + t.elapsed().as_secs_f64();
            report.timing.assembly_seconds += out.stats.setup_seconds;
            report.timing.linear_seconds += out.stats.linear_seconds;
            report.newton_iterations += out.stats.iterations;
            report.linear_iterations += out.stats.linear_iterations;
            report.element_passes += out.element_passes;
            report.injected_mass += out.injected_mass;
            let worst = out.log.imbalance[0].abs().max(out.log.imbalance[1].abs());
            if report.injected_mass > 0.0 {
                report.max_relative_imbalance = report.max_relative_imbalance.max(worst / report.injected_mass);
            }
            let row = RateRow {
                time: out.log.t_end,
                oil_rate: out.end_rates[0],
                water_rate: out.end_rates[1],
                cum_oil: prev.cum_oil + out.produced[0],
                cum_water: prev.cum_water + out.produced[1],
            };
            rates.push(row);
            prev = row;
            indicators.extend(out.indicators);
            report.steps.push(out.log);
            last = Some((out.mesh, out.state));
        }
        report.timing.total_seconds = t0.elapsed().as_secs_f64();
        Ok(RunResult {
            report,
            rates,
            history,
            last,
            indicators,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: RunMode) -> Simulation {
        let levels = MeshLevels { space: 1, time: 1 };
        let grid = CoarseGrid::new(4, 4, 8.0, 8.0, 2.0);
        let rock = RockField::homogeneous(4, 4, 1, 100.0, 0.2);
        Simulation {
            grid,
            levels,
            steps: 3,
            model: FluidModel::default(),
            rock,
            wells: vec![
                WellSpec::injector(0, 0, 1.0),
                WellSpec::producer(7, 7, 1000.0).with_radius(0.1),
            ],
            initial_pressure: 1000.0,
            initial_saturation: 0.2,
            solver: SolverConfig::default(),
            mode,
            thresholds: ThresholdMode::Fitted,
            warm_start: true,
            exec: Execution::Sequential,
            record_indicators: false,
        }
    }

    #[test]
    fn all_modes_run_and_conserve() {
        for mode in [RunMode::Coarse, RunMode::Fine, RunMode::Adaptive] {
            let r = small(mode).run().unwrap();
            assert_eq!(r.rates.len(), 3);
            assert!(r.report.max_relative_imbalance < 1e-6, "{mode:?} {}", r.report.max_relative_imbalance);
            assert!(r.history.saturation.iter().all(|s| (0.0..=1.0).contains(s)));
            assert!(r.report.injected_mass > 0.0);
        }
    }

    #[test]
    fn zero_steps_gives_empty_series() {
        let mut sim = small(RunMode::Adaptive);
        sim.steps = 0;
        let r = sim.run().unwrap();
        assert!(r.rates.is_empty());
        assert!(r.last.is_none());
        assert_eq!(r.report.newton_iterations, 0);
    }

    #[test]
    fn history_aggregation_preserves_mass() {
        let sim = small(RunMode::Coarse);
        let h = History::uniform(&sim.grid, sim.levels, &sim.rock, &sim.model, 1000.0, 0.3);
        let mesh = SpaceTimeMesh::build_coarse(sim.grid, sim.levels).unwrap();
        let start = h.step_start(&mesh, &sim.model, &sim.rock);
        let total: f64 = start.columns.iter().map(|c| c.mass[1]).sum();
        assert!((total - h.total_mass()[1]).abs() < 1e-9 * total);
        assert!(start.columns.iter().all(|c| (c.saturation - 0.3).abs() < 1e-12));
    }
}
