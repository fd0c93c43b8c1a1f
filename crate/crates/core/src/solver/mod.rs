//! Newton iteration on the monolithic system.
//!
//! The flux-flux block of the Jacobian is diagonal (`1/T_e` per sub-face
//! and phase), so every Newton step first eliminates the flux updates
//! exactly and solves only for the cell unknowns.

pub mod linear;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{Assembler, SparseSystem};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::sparse::CsrMatrix;
use crate::state::State;

pub use linear::{direct_solve, gmres, linear_solve, Ilu0, LinearBackend, LinearConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonConfig {
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub max_iters: usize,
    pub damping: bool,
    /// Largest saturation change of any cell per iteration when damping
    /// is on.
    pub max_saturation_change: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol_rel: 1e-6,
            tol_abs: 1e-9,
            max_iters: 40,
            damping: true,
            max_saturation_change: 0.2,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rel > 0.0) {
            return Err(Error::config("solver.newton.tol_rel", "must be > 0"));
        }
        if !(self.tol_abs > 0.0) {
            return Err(Error::config("solver.newton.tol_abs", "must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("solver.newton.max_iters", "must be >= 1"));
        }
        if !(self.max_saturation_change > 0.0) {
            return Err(Error::config("solver.newton.max_saturation_change", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub newton: NewtonConfig,
    pub linear: LinearConfig,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonStats {
    pub iterations: usize,
    /// Scaled residual norm before the first and after every iteration.
    pub residual_history: Vec<f64>,
    pub linear_iterations: usize,
    /// Jacobian assembly, condensation and residual evaluation, seconds.
    pub setup_seconds: f64,
    pub linear_seconds: f64,
}

/// Cell-only system left after eliminating the flux unknowns.
#[derive(Debug, Clone)]
pub struct Condensed {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

fn split_flux_row(sys: &SparseSystem, k: usize) -> (f64, &[usize], &[f64]) {
    let (cols, vals) = sys.matrix.row(k);
    let split = cols.partition_point(|&c| c < sys.n_cell);
    debug_assert_eq!(cols.len() - split, 1, "flux row {k} couples to other fluxes");
    debug_assert_eq!(cols[split], k);
    (vals[split], &cols[..split], &vals[..split])
}

/// Forms `S = A − B D⁻¹ C` and `−r_c + B D⁻¹ r_f` for `J δ = −r`, scaling
/// every row by `scales`.
pub fn condense(sys: &SparseSystem, scales: &[f64], exec: Execution) -> Condensed {
    let nc = sys.n_cell;
    let rows = exec.map(nc, |i| {
        let (cols, vals) = sys.matrix.row(i);
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(cols.len() * 2);
        let mut rhs = -sys.residual[i];
        for (&c, &v) in cols.iter().zip(vals) {
            if c < nc {
                row.push((c, v));
                continue;
            }
            let (d, ccols, cvals) = split_flux_row(sys, c);
            let w = v / d;
            rhs += w * sys.residual[c];
            for (&j, &cv) in ccols.iter().zip(cvals) {
                row.push((j, -w * cv));
            }
        }
        for e in &mut row {
            e.1 *= scales[i];
        }
        (row, rhs * scales[i])
    });
    let (rows, rhs): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Condensed {
        matrix: CsrMatrix::from_rows(nc, rows),
        rhs,
    }
}

/// Full Newton update from the cell update.
pub fn back_substitute(sys: &SparseSystem, cell_update: &[f64]) -> Vec<f64> {
    let n = sys.matrix.nrows;
    let mut dx = Vec::with_capacity(n);
    dx.extend_from_slice(cell_update);
    for k in sys.n_cell..n {
        let (d, cols, vals) = split_flux_row(sys, k);
        let cd: f64 = cols.iter().zip(vals).map(|(&j, &v)| v * cell_update[j]).sum();
        dx.push((-sys.residual[k] - cd) / d);
    }
    dx
}

/// Newton update `δ` with `J δ = −r`.
pub fn newton_update(sys: &SparseSystem, scales: &[f64], cfg: &LinearConfig, exec: Execution) -> Result<(Vec<f64>, usize, f64, f64)> {
    let t = Instant::now();
    let cond = condense(sys, scales, exec);
    let setup = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let (dc, its) = linear_solve(&cond.matrix, &cond.rhs, cfg)?;
    let linear = t.elapsed().as_secs_f64();
    Ok((back_substitute(sys, &dc), its, setup, linear))
}

/// Damped update with saturation clipped to `[0, 1]`; fluxes are then
/// re-evaluated from the cell values.
fn apply_step(asm: &Assembler, x: &[f64], dx: &[f64], alpha: f64) -> Vec<f64> {
    let n_cell = asm.dofs.num_cell_dofs();
    let mut y: Vec<f64> = x.iter().zip(dx).map(|(a, d)| a + alpha * d).collect();
    for i in (1..n_cell).step_by(2) {
        y[i] = y[i].clamp(0.0, 1.0);
    }
    asm.refresh_fluxes(&mut y);
    y
}

/// Solves the nonlinear system of `asm` starting from `initial`.
pub fn newton_solve(asm: &Assembler, initial: &State, cfg: &SolverConfig) -> Result<(State, NewtonStats)> {
    initial.check(asm.mesh)?;
    let ncfg = &cfg.newton;
    let mut stats = NewtonStats::default();
    let scales = asm.row_scales();
    let n_cell = asm.dofs.num_cell_dofs();

    let t = Instant::now();
    let mut x = asm.dofs.pack(initial);
    let mut norm = asm.scaled_norm(&asm.residual(&x)?, &scales);
    stats.setup_seconds += t.elapsed().as_secs_f64();
    stats.residual_history.push(norm);
    let target = ncfg.tol_abs.max(ncfg.tol_rel * norm.min(1.0));
    if norm <= ncfg.tol_abs {
        return Ok((asm.dofs.unpack(&x), stats));
    }

    for it in 1..=ncfg.max_iters {
        let t = Instant::now();
        let sys = asm.jacobian(&x)?;
        stats.setup_seconds += t.elapsed().as_secs_f64();
        let (dx, its, setup, linear) = newton_update(&sys, &scales, &cfg.linear, asm.exec).map_err(|e| Error::NewtonLinear {
            iteration: it,
            source: Box::new(e),
        })?;
        stats.setup_seconds += setup;
        stats.linear_seconds += linear;
        stats.linear_iterations += its;

        let t = Instant::now();
        let mut dx = dx;
        if ncfg.damping {
            let m = ncfg.max_saturation_change;
            for i in (1..n_cell).step_by(2) {
                dx[i] = dx[i].clamp(-m, m);
            }
        }
        let mut alpha = 1.0;
        let mut trial = apply_step(asm, &x, &dx, alpha);
        let mut n_trial = asm.scaled_norm(&asm.residual(&trial)?, &scales);
        // the residual norm is allowed to grow while a front moves through
        // the slab; only blow-ups are cut back
        for _ in 0..6 {
            if n_trial.is_finite() {
                break;
            }
            alpha *= 0.5;
            trial = apply_step(asm, &x, &dx, alpha);
            n_trial = asm.scaled_norm(&asm.residual(&trial)?, &scales);
        }
        stats.setup_seconds += t.elapsed().as_secs_f64();
        x = trial;
        norm = n_trial;
        stats.iterations = it;
        stats.residual_history.push(norm);
        if !norm.is_finite() {
            break;
        }
        if norm <= target {
            return Ok((asm.dofs.unpack(&x), stats));
        }
    }
    Err(Error::NewtonNotConverged {
        iterations: stats.iterations,
        history: stats.residual_history,
    })
}
