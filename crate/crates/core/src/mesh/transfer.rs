//! Moving states between meshes.

use super::{Orientation, Side, SpaceTimeMesh};
use crate::error::{Error, Result};
use crate::physics::{FluidModel, Phase};
use crate::state::State;
use crate::upscaling::RockField;

/// Old element containing finest cell `(x, y)` at finest time unit `t`.
fn container(old: &SpaceTimeMesh, x: u32, y: u32, t: u32) -> usize {
    old.element_at_time(old.column_at(x, y), t)
}

/// Time-averaged normal flux density on one side of an element.
fn side_density(mesh: &SpaceTimeMesh, flux: &[f64], e: usize, side: Side) -> f64 {
    let mut sum = 0.0;
    let mut area = 0.0;
    for r in mesh.faces_of(e).iter().filter(|r| r.side == side) {
        let f = &mesh.subfaces()[r.subface];
        sum += flux[f.id] * f.duration;
        area += f.area * f.duration;
    }
    if area > 0.0 {
        sum / area
    } else {
        0.0
    }
}

/// Prolongs a state onto a refinement of its mesh.
///
/// Cell values are injected from the containing old element. A sub-face
/// lying on an old sub-face keeps that face's flux density; a sub-face cut
/// through the interior of an old element takes the linear (lowest-order
/// Raviart-Thomas) interpolation of the old element's side densities.
pub fn project_state(old: &SpaceTimeMesh, state: &State, new: &SpaceTimeMesh) -> Result<State> {
    if old.step() != new.step() {
        return Err(Error::StepMismatch(old.step(), new.step()));
    }
    if old.grid().nx != new.grid().nx || old.grid().ny != new.grid().ny || old.levels() != new.levels() {
        return Err(Error::Transfer("meshes do not share a coarse grid".into()));
    }
    state.check(old)?;
    let ls = new.levels().space;
    let lt = new.levels().time;

    let mut pressure = Vec::with_capacity(new.num_elements());
    let mut saturation = Vec::with_capacity(new.num_elements());
    for el in new.elements() {
        let ([x0, _], [y0, _]) = el.cell.fine_range(ls);
        let [t0, _] = el.slab.fine_range(lt);
        let o = container(old, x0, y0, t0);
        let oe = old.element(o);
        if oe.cell.level > el.cell.level || oe.slab.level > el.slab.level {
            return Err(Error::Transfer("target mesh is not a refinement of the source".into()));
        }
        pressure.push(state.pressure[o]);
        saturation.push(state.saturation[o]);
    }

    let nf = new.subfaces().len();
    let mut aux_flux = [vec![0.0; nf], vec![0.0; nf]];
    for f in new.subfaces() {
        if !f.is_interior() {
            continue;
        }
        let (a, t) = (f.rect.along.0, f.rect.time.0);
        let (cx, cy, hi_side, lo_side) = match f.orientation {
            Orientation::X => (f.position - 1, a, Side::East, Side::West),
            Orientation::Y => (a, f.position - 1, Side::North, Side::South),
        };
        let o = container(old, cx, cy, t);
        let ([ox0, ox1], [oy0, oy1]) = old.element(o).cell.fine_range(ls);
        let (lo, hi) = match f.orientation {
            Orientation::X => (ox0, ox1),
            Orientation::Y => (oy0, oy1),
        };
        if hi == f.position {
            let old_face = old
                .faces_of(o)
                .iter()
                .map(|r| &old.subfaces()[r.subface])
                .find(|of| of.orientation == f.orientation && of.position == f.position && of.rect.contains(&f.rect))
                .ok_or_else(|| Error::Transfer(format!("no source face covers sub-face {}", f.id)))?;
            for p in 0..2 {
                let v = state.aux_flux[p][old_face.id];
                aux_flux[p][f.id] = if old_face.rect.along == f.rect.along { v } else { v / old_face.area * f.area };
            }
        } else {
            let w = (f.position - lo) as f64 / (hi - lo) as f64;
            for p in 0..2 {
                let d_lo = side_density(old, &state.aux_flux[p], o, lo_side);
                let d_hi = side_density(old, &state.aux_flux[p], o, hi_side);
                aux_flux[p][f.id] = ((1.0 - w) * d_lo + w * d_hi) * f.area;
            }
        }
    }
    Ok(State {
        pressure,
        saturation,
        aux_flux,
    })
}

/// Averages the end-of-step values of `fine` onto the single-slab
/// elements of `coarse`: pressure by volume, saturation by water mass so
/// that `Σ φ ρ_w S_w V` is preserved. Fluxes are zeroed.
pub fn restrict_to_coarse(
    fine: &SpaceTimeMesh,
    state: &State,
    coarse: &SpaceTimeMesh,
    model: &FluidModel,
    rock: &RockField,
) -> Result<State> {
    state.check(fine)?;
    let ls = fine.levels().space;
    let (nxf, nyf) = fine.fine_dims();
    if coarse.fine_dims() != (nxf, nyf) {
        return Err(Error::Transfer("meshes do not share a coarse grid".into()));
    }
    let mut out = State::uniform(coarse, 0.0, 0.0);
    for col in coarse.columns() {
        let ([x0, x1], [y0, y1]) = col.cell.fine_range(ls);
        // gather distinct fine end-of-step elements covering this cell
        let mut vol = 0.0;
        let mut p_sum = 0.0;
        let mut water = 0.0;
        let mut pore = 0.0;
        let mut seen = Vec::new();
        for y in y0..y1 {
            for x in x0..x1 {
                let c = fine.column_at(x, y);
                if seen.contains(&c) {
                    continue;
                }
                seen.push(c);
                let e = fine.columns()[c].elements.end - 1;
                let el = fine.element(e);
                let phi = rock.level(el.cell.level).porosity.get(el.cell.i as usize, el.cell.j as usize);
                let (p, s) = (state.pressure[e], state.saturation[e]);
                vol += el.volume;
                p_sum += p * el.volume;
                pore += phi * el.volume;
                water += phi * el.volume * model.density(Phase::Water, p, s) * s;
            }
        }
        let p = p_sum / vol;
        let phi_c = rock.level(col.cell.level).porosity.get(col.cell.i as usize, col.cell.j as usize);
        let pv_c = phi_c * coarse.element(col.elements.start).volume;
        debug_assert!((pv_c - pore).abs() <= 1e-9 * pore);
        // water density depends on s through p_c
        let mut s = water / (pv_c * model.density(Phase::Water, p, 0.5));
        for _ in 0..50 {
            let next = water / (pv_c * model.density(Phase::Water, p, s));
            let done = (next - s).abs() <= 1e-15 * s.abs().max(1.0);
            s = next;
            if done {
                break;
            }
        }
        for e in col.elements.clone() {
            out.pressure[e] = p;
            out.saturation[e] = s;
        }
    }
    Ok(out)
}
