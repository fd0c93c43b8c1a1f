//! Residual and Jacobian of the fully implicit space-time system.
//!
//! Unknowns are ordered cells first (`[P_o, S_w]` per element), then one
//! auxiliary flux per phase per interior sub-face. Each element owns a
//! total-mass row and a water-mass row; each interior sub-face owns one
//! constitutive row per phase:
//!
//! ```text
//! mass_α(E) = φV ρ_α s_α |_E − φV ρ_α s_α |_prev
//!           + Σ_e σ_e Δτ_e λ*_α,e Ũ_α,e + Δτ_E q_α(E)
//! flux_α(e) = Ũ_α,e / T_e − (p_α,L − p_α,R) − ρ̄_α G g·(x_R − x_L)
//! ```
//!
//! `prev` is the preceding element of the same column, or the start-of-step
//! mass for the first element. A coarse-in-time element therefore sums the
//! fluxes of every finer-in-time neighbour it touches.

pub mod wells;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mesh::{Orientation, SpaceTimeMesh};
use crate::physics::{CellPhase, FluidModel, Phase, DARCY_FIELD, GRAVITY_HEAD};
use crate::sparse::{norm2, CsrMatrix};
use crate::state::{State, StepStart};
use crate::upscaling::RockField;

pub use wells::{well_index, PlacedWell, WellKind, WellSet, WellSpec};

#[derive(Debug, Clone)]
pub struct DofMap {
    n_elements: usize,
    interior: Vec<usize>,
    face_index: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &SpaceTimeMesh) -> Self {
        let mut interior = Vec::new();
        let face_index = mesh
            .subfaces()
            .iter()
            .map(|f| {
                f.is_interior().then(|| {
                    interior.push(f.id);
                    interior.len() - 1
                })
            })
            .collect();
        Self {
            n_elements: mesh.num_elements(),
            interior,
            face_index,
        }
    }

    pub fn len(&self) -> usize {
        2 * self.n_elements + 2 * self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_cell_dofs(&self) -> usize {
        2 * self.n_elements
    }

    pub fn num_fluxes(&self) -> usize {
        self.interior.len()
    }

    pub fn pressure(&self, e: usize) -> usize {
        2 * e
    }

    pub fn saturation(&self, e: usize) -> usize {
        2 * e + 1
    }

    pub fn flux(&self, m: usize, phase: Phase) -> usize {
        2 * self.n_elements + 2 * m + phase.index()
    }

    /// Interior index of a sub-face.
    pub fn face(&self, subface: usize) -> Option<usize> {
        self.face_index[subface]
    }

    /// Sub-face id of interior index `m`.
    pub fn subface(&self, m: usize) -> usize {
        self.interior[m]
    }

    pub fn pack(&self, state: &State) -> Vec<f64> {
        let mut x = vec![0.0; self.len()];
        for e in 0..self.n_elements {
            x[2 * e] = state.pressure[e];
            x[2 * e + 1] = state.saturation[e];
        }
        for (m, &f) in self.interior.iter().enumerate() {
            for ph in Phase::ALL {
                x[self.flux(m, ph)] = state.aux_flux[ph.index()][f];
            }
        }
        x
    }

    pub fn unpack(&self, x: &[f64]) -> State {
        let n = self.n_elements;
        let nf = self.face_index.len();
        let mut state = State {
            pressure: (0..n).map(|e| x[2 * e]).collect(),
            saturation: (0..n).map(|e| x[2 * e + 1]).collect(),
            aux_flux: [vec![0.0; nf], vec![0.0; nf]],
        };
        for (m, &f) in self.interior.iter().enumerate() {
            for ph in Phase::ALL {
                state.aux_flux[ph.index()][f] = x[self.flux(m, ph)];
            }
        }
        state
    }
}

/// Jacobian and residual at one iterate. The first `n_cell` unknowns and
/// rows belong to cells, the rest to fluxes.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub residual: Vec<f64>,
    pub n_cell: usize,
}

/// Mobility-weighted phase fluxes per sub-face (lb/day): centered
/// `U = λ̄ Ũ` and upwind `U_up = λ* Ũ`.
#[derive(Debug, Clone)]
pub struct PhaseFluxes {
    pub actual: [Vec<f64>; 2],
    pub upwind: [Vec<f64>; 2],
}

type Rows = [Vec<(usize, f64)>; 2];

pub struct Assembler<'a> {
    pub mesh: &'a SpaceTimeMesh,
    pub model: &'a FluidModel,
    pub rock: &'a RockField,
    pub start: &'a StepStart,
    pub wells: WellSet,
    pub dofs: DofMap,
    pub exec: Execution,
    trans: Vec<f64>,
    gravity_dz: Vec<f64>,
    pore_volume: Vec<f64>,
}

impl<'a> Assembler<'a> {
    pub fn new(
        mesh: &'a SpaceTimeMesh,
        model: &'a FluidModel,
        rock: &'a RockField,
        wells: &[WellSpec],
        start: &'a StepStart,
        exec: Execution,
    ) -> Result<Self> {
        if (rock.max_level()) < mesh.levels().space {
            return Err(Error::InvalidGrid(format!(
                "rock field has {} levels, mesh needs {}",
                rock.max_level() + 1,
                mesh.levels().space + 1
            )));
        }
        let (nxf, nyf) = mesh.fine_dims();
        let ls = mesh.levels().space;
        let fine = rock.level(ls);
        if (fine.kx.nx, fine.kx.ny) != (nxf, nyf) {
            return Err(Error::InvalidGrid(format!(
                "rock field is {}x{} at level {ls}, mesh needs {nxf}x{nyf}",
                fine.kx.nx, fine.kx.ny
            )));
        }
        if start.columns.len() != mesh.columns().len() {
            return Err(Error::DofMismatch {
                expected: mesh.columns().len(),
                got: start.columns.len(),
            });
        }
        let dofs = DofMap::new(mesh);
        let pore_volume = mesh
            .elements()
            .iter()
            .map(|el| rock.level(el.cell.level).porosity.get(el.cell.i as usize, el.cell.j as usize) * el.volume)
            .collect();
        let g = model.fluid.gravity;
        let mut trans = Vec::with_capacity(dofs.num_fluxes());
        let mut gravity_dz = Vec::with_capacity(dofs.num_fluxes());
        for m in 0..dofs.num_fluxes() {
            let f = &mesh.subfaces()[dofs.subface(m)];
            let (l, r) = f.pair().expect("interior");
            let (el, er) = (mesh.element(l), mesh.element(r));
            let d = match f.orientation {
                Orientation::X => 0,
                Orientation::Y => 1,
            };
            let kl = rock.level(el.cell.level).perm(el.cell.i as usize, el.cell.j as usize)[d];
            let kr = rock.level(er.cell.level).perm(er.cell.i as usize, er.cell.j as usize)[d];
            if !(kl > 0.0 && kr > 0.0) {
                return Err(Error::InvalidGrid("zero permeability on an interior face".into()));
            }
            let resistance = 0.5 * el.size[d] / kl + 0.5 * er.size[d] / kr;
            trans.push(DARCY_FIELD * f.area / resistance);
            gravity_dz.push(g[0] * (er.center[0] - el.center[0]) + g[1] * (er.center[1] - el.center[1]));
        }
        let wells = WellSet::place(mesh, rock, wells)?;
        Ok(Self {
            mesh,
            model,
            rock,
            start,
            wells,
            dofs,
            exec,
            trans,
            gravity_dz,
            pore_volume,
        })
    }

    pub fn transmissibility(&self, m: usize) -> f64 {
        self.trans[m]
    }

    pub fn pore_volume(&self, e: usize) -> f64 {
        self.pore_volume[e]
    }

    /// Directional permeability `[kx, ky]` of an element.
    pub fn perm(&self, e: usize) -> [f64; 2] {
        let c = self.mesh.element(e).cell;
        self.rock.level(c.level).perm(c.i as usize, c.j as usize)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dofs.len() {
            return Err(Error::DofMismatch {
                expected: self.dofs.len(),
                got: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    /// Phase properties of every element at iterate `x`.
    pub fn cells(&self, x: &[f64]) -> Vec<[CellPhase; 2]> {
        self.exec.map(self.mesh.num_elements(), |e| {
            Phase::ALL.map(|ph| self.model.cell_phase(ph, x[2 * e], x[2 * e + 1]))
        })
    }

    fn has_gravity(&self) -> bool {
        self.model.fluid.has_gravity()
    }

    /// Per-phase mass rows of element `e`, optionally with derivatives.
    fn element_rows(&self, e: usize, x: &[f64], cells: &[[CellPhase; 2]], jac: bool) -> ([f64; 2], Rows) {
        let el = self.mesh.element(e);
        let pv = self.pore_volume[e];
        let prev = self.mesh.prev_in_column(e);
        let d = &self.dofs;
        let mut res = [0.0; 2];
        let mut rows: Rows = [Vec::new(), Vec::new()];
        for ph in Phase::ALL {
            let a = ph.index();
            let row = &mut rows[a];
            let sign = if ph == Phase::Water { 1.0 } else { -1.0 };
            let cp = &cells[e][a];
            let s = FluidModel::saturation(ph, x[2 * e + 1]);
            let (drho_p, drho_s) = cp.density_deriv();
            res[a] += pv * cp.rho * s;
            if jac {
                row.push((d.pressure(e), pv * drho_p * s));
                row.push((d.saturation(e), pv * (drho_s * s + cp.rho * sign)));
            }
            match prev {
                Some(q) => {
                    let cq = &cells[q][a];
                    let sq = FluidModel::saturation(ph, x[2 * q + 1]);
                    res[a] -= pv * cq.rho * sq;
                    if jac {
                        let (dp, ds) = cq.density_deriv();
                        row.push((d.pressure(q), -pv * dp * sq));
                        row.push((d.saturation(q), -pv * (ds * sq + cq.rho * sign)));
                    }
                }
                None => res[a] -= self.start.columns[el.column].mass[a],
            }
            for fr in self.mesh.faces_of(e) {
                let Some(m) = d.face(fr.subface) else { continue };
                let f = &self.mesh.subfaces()[fr.subface];
                let (l, r) = f.pair().expect("interior");
                let u = x[d.flux(m, ph)];
                let (cl, cr) = (&cells[l][a], &cells[r][a]);
                let left_up = u > 0.0;
                let kr_up = if left_up { cl.kr } else { cr.kr };
                let rho_bar = 0.5 * (cl.rho + cr.rho);
                let lam = rho_bar * kr_up / cl.mu;
                let coef = fr.sign * f.duration;
                res[a] += coef * lam * u;
                if jac {
                    row.push((d.flux(m, ph), coef * lam));
                    let (dl_p, dl_s) = cl.density_deriv();
                    let (dr_p, dr_s) = cr.density_deriv();
                    let half = 0.5 * kr_up / cl.mu;
                    let mut dls = half * dl_s;
                    let mut drs = half * dr_s;
                    if left_up {
                        dls += rho_bar * cl.dkr / cl.mu;
                    } else {
                        drs += rho_bar * cr.dkr / cr.mu;
                    }
                    let cu = coef * u;
                    row.push((d.pressure(l), cu * half * dl_p));
                    row.push((d.saturation(l), cu * dls));
                    row.push((d.pressure(r), cu * half * dr_p));
                    row.push((d.saturation(r), cu * drs));
                }
            }
            for w in self.wells.in_column(el.column) {
                let (q, dq_p, dq_s) = w.mass_rate(self.model, ph, x[2 * e], cp);
                res[a] += el.duration * q;
                if jac {
                    row.push((d.pressure(e), el.duration * dq_p));
                    row.push((d.saturation(e), el.duration * dq_s));
                }
            }
        }
        (res, rows)
    }

    /// Constitutive rows of interior sub-face `m`, one per phase.
    fn face_rows(&self, m: usize, x: &[f64], cells: &[[CellPhase; 2]], jac: bool) -> ([f64; 2], Rows) {
        let d = &self.dofs;
        let f = &self.mesh.subfaces()[d.subface(m)];
        let (l, r) = f.pair().expect("interior");
        let t = self.trans[m];
        let gz = if self.has_gravity() { GRAVITY_HEAD * self.gravity_dz[m] } else { 0.0 };
        let mut res = [0.0; 2];
        let mut rows: Rows = [Vec::new(), Vec::new()];
        for ph in Phase::ALL {
            let a = ph.index();
            let (cl, cr) = (&cells[l][a], &cells[r][a]);
            let u = x[d.flux(m, ph)];
            let rho_bar = 0.5 * (cl.rho + cr.rho);
            res[a] = u / t - (cl.pressure.value - cr.pressure.value) - rho_bar * gz;
            if jac {
                let (dl_p, dl_s) = cl.density_deriv();
                let (dr_p, dr_s) = cr.density_deriv();
                let row = &mut rows[a];
                row.push((d.flux(m, ph), 1.0 / t));
                row.push((d.pressure(l), -cl.pressure.d_p - 0.5 * dl_p * gz));
                row.push((d.saturation(l), -cl.pressure.d_s - 0.5 * dl_s * gz));
                row.push((d.pressure(r), cr.pressure.d_p - 0.5 * dr_p * gz));
                row.push((d.saturation(r), cr.pressure.d_s - 0.5 * dr_s * gz));
            }
        }
        (res, rows)
    }

    /// Per-phase mass residual `[oil, water]` of every element.
    pub fn phase_mass_residuals(&self, x: &[f64]) -> Result<Vec<[f64; 2]>> {
        self.check(x)?;
        let cells = self.cells(x);
        Ok(self.exec.map(self.mesh.num_elements(), |e| self.element_rows(e, x, &cells, false).0))
    }

    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let cells = self.cells(x);
        let elems = self.exec.map(self.mesh.num_elements(), |e| self.element_rows(e, x, &cells, false).0);
        let faces = self.exec.map(self.dofs.num_fluxes(), |m| self.face_rows(m, x, &cells, false).0);
        let mut r = Vec::with_capacity(self.dofs.len());
        for [o, w] in elems {
            r.push(o + w);
            r.push(w);
        }
        for [o, w] in faces {
            r.push(o);
            r.push(w);
        }
        Ok(r)
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<SparseSystem> {
        self.check(x)?;
        let cells = self.cells(x);
        let elems = self.exec.map(self.mesh.num_elements(), |e| self.element_rows(e, x, &cells, true));
        let faces = self.exec.map(self.dofs.num_fluxes(), |m| self.face_rows(m, x, &cells, true));
        let n = self.dofs.len();
        let mut residual = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for ([o, w], [ro, rw]) in elems {
            residual.push(o + w);
            residual.push(w);
            let mut total = ro;
            total.extend_from_slice(&rw);
            rows.push(total);
            rows.push(rw);
        }
        for ([o, w], [ro, rw]) in faces {
            residual.push(o);
            residual.push(w);
            rows.push(ro);
            rows.push(rw);
        }
        Ok(SparseSystem {
            matrix: CsrMatrix::from_rows(n, rows),
            residual,
            n_cell: self.dofs.num_cell_dofs(),
        })
    }

    /// Row weights making residual entries dimensionless: mass rows by
    /// pore volume times reference water density, flux rows by the volume
    /// the face transmits per psi over its duration relative to the
    /// smaller adjacent pore volume.
    pub fn row_scales(&self) -> Vec<f64> {
        let rho_w = self.model.fluid.water.rho_ref;
        let mut s = Vec::with_capacity(self.dofs.len());
        for e in 0..self.mesh.num_elements() {
            let w = 1.0 / (self.pore_volume[e] * rho_w);
            s.push(w);
            s.push(w);
        }
        for m in 0..self.dofs.num_fluxes() {
            let f = &self.mesh.subfaces()[self.dofs.subface(m)];
            let (l, r) = f.pair().expect("interior");
            let pv = self.pore_volume[l].min(self.pore_volume[r]);
            for ph in Phase::ALL {
                let mu = self.model.fluid.phase(ph).viscosity;
                s.push(self.trans[m] * f.duration / (mu * pv));
            }
        }
        s
    }

    pub fn scaled_norm(&self, r: &[f64], scales: &[f64]) -> f64 {
        let v: Vec<f64> = r.iter().zip(scales).map(|(a, b)| a * b).collect();
        norm2(&v)
    }

    /// Replaces the fluxes of `state` by the two-point values `T ΔΦ`
    /// implied by its cell values.
    pub fn consistent_fluxes(&self, state: &State) -> State {
        let mut x = self.dofs.pack(state);
        self.refresh_fluxes(&mut x);
        self.dofs.unpack(&x)
    }

    /// Overwrites the flux entries of packed `x` with `T ΔΦ` from its cell
    /// entries, so every flux row holds exactly.
    pub fn refresh_fluxes(&self, x: &mut [f64]) {
        let gz_on = self.has_gravity();
        let values = self.exec.map(self.dofs.num_fluxes(), |m| {
            let (l, r) = self.mesh.subfaces()[self.dofs.subface(m)].pair().expect("interior");
            let (left, right) = ((x[2 * l], x[2 * l + 1]), (x[2 * r], x[2 * r + 1]));
            Phase::ALL.map(|ph| {
                let pl = self.model.phase_pressure(ph, left.0, left.1).value;
                let pr = self.model.phase_pressure(ph, right.0, right.1).value;
                let mut dphi = pl - pr;
                if gz_on {
                    let rho = 0.5 * (self.model.density(ph, left.0, left.1) + self.model.density(ph, right.0, right.1));
                    dphi += rho * GRAVITY_HEAD * self.gravity_dz[m];
                }
                self.trans[m] * dphi
            })
        });
        for (m, v) in values.into_iter().enumerate() {
            for ph in Phase::ALL {
                x[self.dofs.flux(m, ph)] = v[ph.index()];
            }
        }
    }

    pub fn phase_fluxes(&self, state: &State) -> PhaseFluxes {
        let nf = self.mesh.subfaces().len();
        let mut actual = [vec![0.0; nf], vec![0.0; nf]];
        let mut upwind = [vec![0.0; nf], vec![0.0; nf]];
        for m in 0..self.dofs.num_fluxes() {
            let id = self.dofs.subface(m);
            let (l, r) = self.mesh.subfaces()[id].pair().expect("interior");
            let (left, right) = ((state.pressure[l], state.saturation[l]), (state.pressure[r], state.saturation[r]));
            for ph in Phase::ALL {
                let a = ph.index();
                let u = state.aux_flux[a][id];
                let centered = 0.5 * (self.model.mobility(ph, left.0, left.1) + self.model.mobility(ph, right.0, right.1));
                actual[a][id] = centered * u;
                upwind[a][id] = self.model.upwind_mobility(ph, left, right, u) * u;
            }
        }
        PhaseFluxes { actual, upwind }
    }

    /// Mass rate `[oil, water]` leaving element `e` through each of its
    /// wells, as `(well, rates)`.
    pub fn well_rates(&self, state: &State, e: usize) -> Vec<(usize, [f64; 2])> {
        let el = self.mesh.element(e);
        let (p, s) = (state.pressure[e], state.saturation[e]);
        self.wells
            .in_column(el.column)
            .map(|w| {
                let rates = Phase::ALL.map(|ph| {
                    let cp = self.model.cell_phase(ph, p, s);
                    w.mass_rate(self.model, ph, p, &cp).0
                });
                (w.well, rates)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::mesh::{CoarseGrid, MeshLevels};

    fn setup(nx: usize, ny: usize) -> (SpaceTimeMesh, RockField) {
        let mesh = SpaceTimeMesh::build_coarse(CoarseGrid::new(nx, ny, 10.0, 10.0, 10.0), MeshLevels { space: 1, time: 1 }).unwrap();
        let rock = RockField::homogeneous(nx, ny, 1, 100.0, 0.2);
        (mesh, rock)
    }

    #[test]
    fn uniform_state_is_at_equilibrium() {
        let (mesh, rock) = setup(3, 2);
        let model = FluidModel::default();
        let start = StepStart::uniform(&mesh, &model, &rock, 1500.0, 0.45);
        let asm = Assembler::new(&mesh, &model, &rock, &[], &start, Execution::Sequential).unwrap();
        let x = asm.dofs.pack(&State::uniform(&mesh, 1500.0, 0.45));
        let r = asm.residual(&x).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-12), "{r:?}");
    }

    #[test]
    fn pack_unpack_round_trip() {
        let (mesh, rock) = setup(2, 2);
        let model = FluidModel::default();
        let start = StepStart::uniform(&mesh, &model, &rock, 1000.0, 0.2);
        let asm = Assembler::new(&mesh, &model, &rock, &[], &start, Execution::Sequential).unwrap();
        let mut s = State::uniform(&mesh, 1000.0, 0.3);
        for f in mesh.subfaces().iter().filter(|f| f.is_interior()) {
            s.aux_flux[0][f.id] = f.id as f64;
            s.aux_flux[1][f.id] = -2.0 * f.id as f64;
        }
        assert_eq!(asm.dofs.unpack(&asm.dofs.pack(&s)), s);
        assert_eq!(asm.dofs.len(), 2 * 4 + 2 * 4);
    }

    #[test]
    fn dof_mismatch_and_nan_rejected() {
        let (mesh, rock) = setup(2, 1);
        let model = FluidModel::default();
        let start = StepStart::uniform(&mesh, &model, &rock, 1000.0, 0.2);
        let asm = Assembler::new(&mesh, &model, &rock, &[], &start, Execution::Sequential).unwrap();
        assert!(matches!(asm.residual(&[0.0; 3]), Err(Error::DofMismatch { .. })));
        let mut x = asm.dofs.pack(&State::uniform(&mesh, 1000.0, 0.2));
        x[1] = f64::NAN;
        assert!(matches!(asm.residual(&x), Err(Error::NonFinite(1))));
    }

    #[test]
    fn two_point_flux_value() {
        let (mesh, rock) = setup(2, 1);
        let model = FluidModel::default();
        let start = StepStart::uniform(&mesh, &model, &rock, 1000.0, 1.0);
        let asm = Assembler::new(&mesh, &model, &rock, &[], &start, Execution::Sequential).unwrap();
        let mut s = State::uniform(&mesh, 1000.0, 1.0);
        s.pressure[0] = 1100.0;
        let s = asm.consistent_fluxes(&s);
        let id = mesh.subfaces().iter().find(|f| f.is_interior()).unwrap().id;
        // C_d K A Δp / Δx with A = 10 ft², Δx = 10 ft
        assert!((s.aux_flux[1][id] - 6.3283e-3 * 100.0 * 10.0 * 100.0 / 10.0).abs() < 1e-12);
        let r = asm.residual(&asm.dofs.pack(&s)).unwrap();
        assert!(r[asm.dofs.num_cell_dofs()..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn coarse_element_sees_both_fine_time_fluxes() {
        let (mesh, rock) = setup(2, 1);
        let mesh = mesh.refine_temporal(&[1].into_iter().collect::<BTreeSet<_>>()).unwrap();
        let model = FluidModel::default();
        let start = StepStart::uniform(&mesh, &model, &rock, 1000.0, 0.5);
        let asm = Assembler::new(&mesh, &model, &rock, &[], &start, Execution::Sequential).unwrap();
        let mut s = State::uniform(&mesh, 1000.0, 0.5);
        for f in mesh.subfaces().iter().filter(|f| f.is_interior()) {
            s.aux_flux[1][f.id] = 1.0;
        }
        let sys = asm.jacobian(&asm.dofs.pack(&s)).unwrap();
        let water_flux_cols = |row: usize| {
            let (cols, vals) = sys.matrix.row(row);
            cols.iter()
                .zip(vals)
                .filter(|(c, v)| **c >= sys.n_cell && (**c - sys.n_cell) % 2 == 1 && **v != 0.0)
                .map(|(c, v)| (*c, v.signum()))
                .collect::<Vec<_>>()
        };
        assert_eq!(asm.dofs.num_fluxes(), 2);
        let coarse = water_flux_cols(asm.dofs.saturation(0));
        assert_eq!(coarse.len(), 2);
        assert!(coarse.iter().all(|c| c.1 > 0.0));
        for e in [1, 2] {
            let fine = water_flux_cols(asm.dofs.saturation(e));
            assert_eq!(fine.len(), 1);
            assert!(fine[0].1 < 0.0);
        }
    }

    #[test]
    fn parallel_and_sequential_assembly_agree() {
        let (mesh, rock) = setup(4, 3);
        let mesh = mesh.refine_temporal(&[0, 5].into_iter().collect()).unwrap().smooth();
        let model = FluidModel::default();
        let start = StepStart::uniform(&mesh, &model, &rock, 1000.0, 0.3);
        let wells = [WellSpec::injector(0, 0, 1.0), WellSpec::producer(7, 5, 900.0)];
        let mut s = State::uniform(&mesh, 1000.0, 0.3);
        for (e, p) in s.pressure.iter_mut().enumerate() {
            *p += 3.0 * e as f64;
        }
        let a = Assembler::new(&mesh, &model, &rock, &wells, &start, Execution::Sequential).unwrap();
        let b = Assembler::new(&mesh, &model, &rock, &wells, &start, Execution::Parallel).unwrap();
        let s = a.consistent_fluxes(&s);
        let x = a.dofs.pack(&s);
        let (ja, jb) = (a.jacobian(&x).unwrap(), b.jacobian(&x).unwrap());
        assert_eq!(ja.matrix, jb.matrix);
        assert_eq!(ja.residual, jb.residual);
        assert_eq!(a.residual(&x).unwrap(), ja.residual);
    }

    #[test]
    fn phase_flux_definitions() {
        let (mesh, rock) = setup(2, 1);
        let model = FluidModel::default();
        let start = StepStart::uniform(&mesh, &model, &rock, 1000.0, 0.2);
        let asm = Assembler::new(&mesh, &model, &rock, &[], &start, Execution::Sequential).unwrap();
        let mut s = State::uniform(&mesh, 1000.0, 0.2);
        s.saturation[1] = 0.6;
        let id = mesh.subfaces().iter().find(|f| f.is_interior()).unwrap().id;
        let pf = asm.phase_fluxes(&s);
        assert_eq!(pf.actual[1][id], 0.0);
        assert_eq!(pf.upwind[1][id], 0.0);
        s.aux_flux[1][id] = 2.0;
        let pf = asm.phase_fluxes(&s);
        // upstream cell 0 is at s_wirr
        assert_eq!(pf.upwind[1][id], 0.0);
        assert!(pf.actual[1][id] > 0.0);
    }
}
