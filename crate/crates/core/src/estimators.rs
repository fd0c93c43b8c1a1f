//! A posteriori estimators, saturation-gradient indicators, threshold
//! fitting and refinement marking.
//!
//! Cell velocities are the lowest-order Raviart-Thomas reconstruction from
//! the sub-face fluxes: each side's normal density is the time average of
//! its sub-face fluxes, and the cell value is the mean of opposite sides.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::assembly::{Assembler, PhaseFluxes};
use crate::error::Result;
use crate::mesh::{Side, SpaceTimeMesh};
use crate::physics::Phase;
use crate::state::State;

/// Lower edge of the analysis window for threshold fitting.
pub const WINDOW_MIN: f64 = 0.01;

/// Per-element, per-direction velocity `[phase][direction]`.
pub type CellVector = [[f64; 2]; 2];

#[derive(Debug, Clone)]
pub struct CellVelocities {
    /// Centered mobility times auxiliary flux.
    pub actual: Vec<CellVector>,
    /// Upwind mobility times auxiliary flux.
    pub upwind: Vec<CellVector>,
    /// Auxiliary flux.
    pub aux: Vec<CellVector>,
    /// Net outflow mass rate per unit volume `[phase]`, wells included.
    pub divergence: Vec<[f64; 2]>,
}

fn side_average(mesh: &SpaceTimeMesh, e: usize, side: Side, flux: &[f64]) -> f64 {
    let el = mesh.element(e);
    let len = match side {
        Side::West | Side::East => el.size[1],
        Side::South | Side::North => el.size[0],
    };
    let area = len * mesh.grid().thickness;
    let sum: f64 = mesh
        .faces_of(e)
        .iter()
        .filter(|r| r.side == side)
        .map(|r| {
            let f = &mesh.subfaces()[r.subface];
            flux[f.id] * f.duration
        })
        .sum();
    sum / (area * el.duration)
}

fn reconstruct(mesh: &SpaceTimeMesh, e: usize, flux: [&[f64]; 2]) -> CellVector {
    flux.map(|f| {
        [
            0.5 * (side_average(mesh, e, Side::West, f) + side_average(mesh, e, Side::East, f)),
            0.5 * (side_average(mesh, e, Side::South, f) + side_average(mesh, e, Side::North, f)),
        ]
    })
}

pub fn cell_velocities(asm: &Assembler, state: &State, fluxes: &PhaseFluxes) -> CellVelocities {
    let mesh = asm.mesh;
    let n = mesh.num_elements();
    let actual = asm.exec.map(n, |e| reconstruct(mesh, e, [&fluxes.actual[0], &fluxes.actual[1]]));
    let upwind = asm.exec.map(n, |e| reconstruct(mesh, e, [&fluxes.upwind[0], &fluxes.upwind[1]]));
    let aux = asm.exec.map(n, |e| reconstruct(mesh, e, [&state.aux_flux[0], &state.aux_flux[1]]));
    let divergence = asm.exec.map(n, |e| {
        let el = mesh.element(e);
        let mut out = [0.0; 2];
        for r in mesh.faces_of(e) {
            let f = &mesh.subfaces()[r.subface];
            for a in 0..2 {
                out[a] += r.sign * f.duration * fluxes.upwind[a][f.id];
            }
        }
        for a in 0..2 {
            out[a] /= el.duration;
        }
        for (_, q) in asm.well_rates(state, e) {
            for a in 0..2 {
                out[a] += q[a];
            }
        }
        out.map(|v| v / el.volume)
    });
    CellVelocities {
        actual,
        upwind,
        aux,
        divergence,
    }
}

/// One value per element per phase for each estimator, and one value per
/// element for each saturation indicator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Indicators {
    pub eta_tr: Vec<[f64; 2]>,
    pub eta_sr: Vec<[f64; 2]>,
    pub eta_tf: Vec<[f64; 2]>,
    pub eta_sf: Vec<[f64; 2]>,
    pub eta_tp: Vec<[f64; 2]>,
    pub eta_sp: Vec<[f64; 2]>,
    pub eps_t: Vec<f64>,
    pub eps_s: Vec<f64>,
}

impl Indicators {
    pub fn estimators(&self) -> [(&'static str, &Vec<[f64; 2]>); 6] {
        [
            ("eta_tr", &self.eta_tr),
            ("eta_sr", &self.eta_sr),
            ("eta_tf", &self.eta_tf),
            ("eta_sf", &self.eta_sf),
            ("eta_tp", &self.eta_tp),
            ("eta_sp", &self.eta_sp),
        ]
    }

    pub fn all_non_negative(&self) -> bool {
        self.estimators().iter().all(|(_, v)| v.iter().flatten().all(|x| *x >= 0.0))
            && self.eps_t.iter().chain(&self.eps_s).all(|x| *x >= 0.0)
    }

    /// Each estimator divided by its maximum per phase, each saturation
    /// indicator by its maximum.
    pub fn normalized(&self) -> Indicators {
        let per_phase = |v: &Vec<[f64; 2]>| {
            let mut max = [0.0f64; 2];
            for x in v {
                for a in 0..2 {
                    max[a] = max[a].max(x[a]);
                }
            }
            v.iter()
                .map(|x| [0, 1].map(|a| if max[a] > 0.0 { x[a] / max[a] } else { 0.0 }))
                .collect()
        };
        Indicators {
            eta_tr: per_phase(&self.eta_tr),
            eta_sr: per_phase(&self.eta_sr),
            eta_tf: per_phase(&self.eta_tf),
            eta_sf: per_phase(&self.eta_sf),
            eta_tp: per_phase(&self.eta_tp),
            eta_sp: per_phase(&self.eta_sp),
            eps_t: normalize(&self.eps_t),
            eps_s: normalize(&self.eps_s),
        }
    }
}

pub fn normalize(v: &[f64]) -> Vec<f64> {
    let max = v.iter().fold(0.0f64, |m, x| m.max(*x));
    v.iter().map(|x| if max > 0.0 { x / max } else { 0.0 }).collect()
}

/// Larger of the two phase values.
pub fn phase_max(v: &[[f64; 2]]) -> Vec<f64> {
    v.iter().map(|x| x[0].max(x[1])).collect()
}

/// `∫₀¹ (a + b(1 − θ))² dθ`
fn interpolant_square(a: f64, b: f64) -> f64 {
    a * a + a * b + b * b / 3.0
}

/// Closed form of the temporal flux estimator for one element.
pub fn temporal_flux_estimator(volume: f64, duration: f64, perm: [f64; 2], now: [f64; 2], before: [f64; 2]) -> f64 {
    let s: f64 = (0..2).map(|d| (now[d] - before[d]).powi(2) / perm[d]).sum();
    (volume * s * duration / 3.0).sqrt()
}

/// Combines the current spatial saturation gradient with the previous
/// step's: the current value if it is larger, otherwise the mean.
pub fn combine_gradient(current: f64, previous: Option<f64>) -> f64 {
    match previous {
        Some(p) if p > current => 0.5 * (current + p),
        _ => current,
    }
}

/// Max-norm of one-sided saturation differences of element `e` to its
/// neighbours across each side (measure-weighted where non-matching).
fn spatial_gradient(mesh: &SpaceTimeMesh, saturation: &[f64], e: usize) -> f64 {
    let el = mesh.element(e);
    let mut best = 0.0f64;
    for side in Side::ALL {
        let d = side.index() / 2;
        let (mut w, mut s, mut dist) = (0.0, 0.0, 0.0);
        for r in mesh.faces_of(e).iter().filter(|r| r.side == side) {
            let f = &mesh.subfaces()[r.subface];
            let Some((l, rr)) = f.pair() else { continue };
            let n = if l == e { rr } else { l };
            s += f.measure * saturation[n];
            dist += f.measure * (mesh.element(n).center[d] - el.center[d]).abs();
            w += f.measure;
        }
        if w > 0.0 {
            best = best.max((s / w - saturation[e]).abs() / (dist / w));
        }
    }
    best
}

/// `(ε_t, ε_s)` per element.
pub fn saturation_gradients(asm: &Assembler, state: &State) -> (Vec<f64>, Vec<f64>) {
    let mesh = asm.mesh;
    let n = mesh.num_elements();
    let eps_t = asm.exec.map(n, |e| {
        let el = mesh.element(e);
        let before = match mesh.prev_in_column(e) {
            Some(q) => state.saturation[q],
            None => asm.start.columns[el.column].saturation,
        };
        (state.saturation[e] - before).abs() / el.duration
    });
    let eps_s = asm.exec.map(n, |e| {
        let col = mesh.element(e).column;
        combine_gradient(spatial_gradient(mesh, &state.saturation, e), asm.start.columns[col].sat_gradient)
    });
    (eps_t, eps_s)
}

/// Raw estimator and indicator values on a converged state.
pub fn compute_estimators(asm: &Assembler, state: &State) -> Result<Indicators> {
    let mesh = asm.mesh;
    let n = mesh.num_elements();
    let fluxes = asm.phase_fluxes(state);
    let vel = cell_velocities(asm, state, &fluxes);
    let residual = asm.phase_mass_residuals(&asm.dofs.pack(state))?;
    let per = asm.exec.map(n, |e| {
        let el = mesh.element(e);
        let k = asm.perm(e);
        let prev = mesh.prev_in_column(e);
        let start = &asm.start.columns[el.column];
        let (v, dt) = (el.volume, el.duration);
        let mut out = [[0.0; 2]; 6];
        for a in 0..2 {
            let div_prev = prev.map_or(start.divergence[a], |q| vel.divergence[q][a]);
            let ra = residual[e][a] / (v * dt);
            let b = div_prev - vel.divergence[e][a];
            let integral = v * dt * interpolant_square(ra, b).max(0.0);
            out[0][a] = dt * integral.sqrt();
            out[1][a] = v * integral.sqrt();
            let before = prev.map_or(start.velocity[a], |q| vel.actual[q][a]);
            out[2][a] = temporal_flux_estimator(v, dt, k, vel.actual[e][a], before);
            let diff: f64 = (0..2).map(|d| (vel.upwind[e][a][d] - vel.actual[e][a][d]).powi(2) / k[d]).sum();
            out[3][a] = (v * dt * diff).sqrt();
            let before = prev.map_or(start.aux_velocity[a], |q| vel.aux[q][a]);
            out[4][a] = temporal_flux_estimator(v, dt, k, vel.aux[e][a], before);
            let mut jump2 = 0.0;
            for r in mesh.faces_of(e) {
                let f = &mesh.subfaces()[r.subface];
                let Some((l, rr)) = f.pair() else { continue };
                // tangential direction of the face
                let t = 1 - r.side.index() / 2;
                let (kl, kr) = (asm.perm(l)[t], asm.perm(rr)[t]);
                let j = vel.aux[l][a][t] / kl - vel.aux[rr][a][t] / kr;
                jump2 += f.measure * f.measure * j * j;
            }
            out[5][a] = jump2.sqrt();
        }
        out
    });
    let (eps_t, eps_s) = saturation_gradients(asm, state);
    let pick = |k: usize| per.iter().map(|o| o[k]).collect::<Vec<_>>();
    Ok(Indicators {
        eta_tr: pick(0),
        eta_sr: pick(1),
        eta_tf: pick(2),
        eta_sf: pick(3),
        eta_tp: pick(4),
        eta_sp: pick(5),
        eps_t,
        eps_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdFit {
    /// Mean of log₁₀ of the values inside the window.
    pub log_mean: f64,
    /// Population standard deviation of the same.
    pub log_std: f64,
    pub theta_mean: f64,
    pub theta_hi: f64,
    pub count: usize,
}

impl ThresholdFit {
    /// Thresholds that no normalized value exceeds.
    pub fn sentinel(count: usize) -> Self {
        Self {
            log_mean: 0.0,
            log_std: 0.0,
            theta_mean: 1.0,
            theta_hi: 1.0,
            count,
        }
    }

    pub fn is_sentinel(&self) -> bool {
        self.count < 2
    }
}

/// Log-normal fit on normalized values within `[0.01, 1]`.
pub fn fit_thresholds(values: &[f64]) -> ThresholdFit {
    let logs: Vec<f64> = values
        .iter()
        .filter(|v| (WINDOW_MIN..=1.0).contains(*v))
        .map(|v| v.log10())
        .collect();
    if logs.len() < 2 {
        return ThresholdFit::sentinel(logs.len());
    }
    let n = logs.len() as f64;
    let mu = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    ThresholdFit {
        log_mean: mu,
        log_std: sigma,
        theta_mean: 10f64.powf(mu),
        theta_hi: 10f64.powf(mu + sigma),
        count: logs.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Log-normal fits per pass.
    #[default]
    Fitted,
    /// Every eligible element is marked.
    MarkAll,
    /// Nothing is marked.
    MarkNone,
}

/// Temporal marks: `η_t,f > θ_mean AND ε_t > θ_mean`.
pub fn mark_temporal(eta_tf: &[f64], eps_t: &[f64], fit_f: &ThresholdFit, fit_e: &ThresholdFit) -> BTreeSet<usize> {
    (0..eta_tf.len())
        .filter(|&e| eta_tf[e] > fit_f.theta_mean && eps_t[e] > fit_e.theta_mean)
        .collect()
}

/// Spatial marks: `ε_s > θ_mean OR η_s,f > θ_hi`.
pub fn mark_spatial(eta_sf: &[f64], eps_s: &[f64], fit_f: &ThresholdFit, fit_e: &ThresholdFit) -> BTreeSet<usize> {
    (0..eta_sf.len())
        .filter(|&e| eps_s[e] > fit_e.theta_mean || eta_sf[e] > fit_f.theta_hi)
        .collect()
}

/// Marks from the residual region: `η_t,r > θ_mean` of its own fit.
pub fn mark_residual(eta_tr: &[f64], fit: &ThresholdFit) -> BTreeSet<usize> {
    (0..eta_tr.len()).filter(|&e| eta_tr[e] > fit.theta_mean).collect()
}

/// Summary of one marking decision, kept in the pass log.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkDecision {
    pub marked: BTreeSet<usize>,
    pub fits: Vec<(&'static str, ThresholdFit)>,
}

/// Temporal marking of one pass on normalized indicators. On the coarsest
/// pass the residual region is added.
pub fn temporal_marks(mesh: &SpaceTimeMesh, norm: &Indicators, mode: ThresholdMode, coarsest: bool) -> MarkDecision {
    let cap = mesh.levels().time;
    let eligible = |e: &usize| mesh.element(*e).slab.level < cap;
    match mode {
        ThresholdMode::MarkAll => MarkDecision {
            marked: (0..mesh.num_elements()).filter(eligible).collect(),
            fits: Vec::new(),
        },
        ThresholdMode::MarkNone => MarkDecision {
            marked: BTreeSet::new(),
            fits: Vec::new(),
        },
        ThresholdMode::Fitted => {
            let eta_tf = phase_max(&norm.eta_tf);
            let fit_f = fit_thresholds(&eta_tf);
            let fit_e = fit_thresholds(&norm.eps_t);
            let mut marked = mark_temporal(&eta_tf, &norm.eps_t, &fit_f, &fit_e);
            let mut fits = vec![("eta_tf", fit_f), ("eps_t", fit_e)];
            if coarsest {
                let eta_tr = phase_max(&norm.eta_tr);
                let fit_r = fit_thresholds(&eta_tr);
                marked.extend(mark_residual(&eta_tr, &fit_r));
                fits.push(("eta_tr", fit_r));
            }
            marked.retain(eligible);
            MarkDecision { marked, fits }
        }
    }
}

/// Spatial marking of one pass; well columns are always marked.
pub fn spatial_marks(mesh: &SpaceTimeMesh, norm: &Indicators, mode: ThresholdMode, well_columns: &[usize]) -> MarkDecision {
    let cap = mesh.levels().space;
    let eligible = |e: &usize| mesh.element(*e).cell.level < cap;
    let (mut marked, fits) = match mode {
        ThresholdMode::MarkAll => ((0..mesh.num_elements()).collect(), Vec::new()),
        ThresholdMode::MarkNone => (BTreeSet::new(), Vec::new()),
        ThresholdMode::Fitted => {
            let eta_sf = phase_max(&norm.eta_sf);
            let fit_f = fit_thresholds(&eta_sf);
            let fit_e = fit_thresholds(&norm.eps_s);
            (
                mark_spatial(&eta_sf, &norm.eps_s, &fit_f, &fit_e),
                vec![("eta_sf", fit_f), ("eps_s", fit_e)],
            )
        }
    };
    for &c in well_columns {
        marked.extend(mesh.columns()[c].elements.clone());
    }
    marked.retain(eligible);
    MarkDecision { marked, fits }
}

/// Phase label used in dumps.
pub fn phase_name(a: usize) -> &'static str {
    match Phase::ALL[a] {
        Phase::Oil => "oil",
        Phase::Water => "water",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_temporal_flux_estimator() {
        let v = temporal_flux_estimator(1.0, 3.0, [1.0, 1.0], [3.0, 0.0], [1.0, 0.0]);
        assert_eq!(v, 2.0);
        assert_eq!(temporal_flux_estimator(1.0, 3.0, [1.0, 1.0], [3.0, 0.0], [3.0, 0.0]), 0.0);
    }

    #[test]
    fn two_point_fit() {
        let f = fit_thresholds(&[0.01, 1.0]);
        assert_eq!(f.log_mean, -1.0);
        assert_eq!(f.log_std, 1.0);
        assert!((f.theta_mean - 0.1).abs() < 1e-15);
        assert_eq!(f.theta_hi, 1.0);
    }

    #[test]
    fn equal_values_fit() {
        let f = fit_thresholds(&[0.5; 7]);
        assert!((f.theta_mean - 0.5).abs() < 1e-15);
        assert_eq!(f.log_std, 0.0);
        assert_eq!(f.theta_hi, f.theta_mean);
    }

    #[test]
    fn sentinel_fits() {
        for v in [vec![], vec![0.001, 0.009], vec![0.5], vec![0.0, 0.5, 0.002]] {
            let f = fit_thresholds(&v);
            assert!(f.is_sentinel());
            assert_eq!((f.theta_mean, f.theta_hi), (1.0, 1.0));
            assert!(mark_temporal(&v, &v, &f, &f).is_empty());
        }
    }

    #[test]
    fn gradient_combination() {
        assert!((combine_gradient(0.1, Some(0.3)) - 0.2).abs() < 1e-15);
        assert_eq!(combine_gradient(0.3, Some(0.1)), 0.3);
        assert_eq!(combine_gradient(0.3, None), 0.3);
    }

    #[test]
    fn marking_rules() {
        let fit = ThresholdFit {
            log_mean: -1.0,
            log_std: 0.5,
            theta_mean: 0.1,
            theta_hi: 0.3,
            count: 10,
        };
        // large estimator but flat saturation: not marked in time
        assert!(mark_temporal(&[1.0], &[0.0], &fit, &fit).is_empty());
        assert_eq!(mark_temporal(&[1.0], &[0.5], &fit, &fit).len(), 1);
        assert!(mark_temporal(&[0.0], &[0.0], &fit, &fit).is_empty());
        // OR semantics in space
        assert_eq!(mark_spatial(&[0.2], &[0.5], &fit, &fit).len(), 1);
        assert_eq!(mark_spatial(&[0.5], &[0.0], &fit, &fit).len(), 1);
        assert!(mark_spatial(&[0.2], &[0.05], &fit, &fit).is_empty());
    }

    #[test]
    fn normalization_hits_one() {
        let ind = Indicators {
            eta_tf: vec![[2.0, 0.0], [4.0, 0.0]],
            eps_t: vec![0.5, 0.25],
            ..Default::default()
        };
        let n = ind.normalized();
        assert_eq!(n.eta_tf, vec![[0.5, 0.0], [1.0, 0.0]]);
        assert_eq!(n.eps_t, vec![1.0, 0.5]);
    }
}
