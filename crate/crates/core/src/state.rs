//! Discrete unknowns on one space-time mesh.

use crate::error::{Error, Result};
use crate::mesh::SpaceTimeMesh;
use crate::physics::{FluidModel, Phase};
use crate::upscaling::RockField;

/// Oil pressure and water saturation per element; auxiliary (mobility-free)
/// phase fluxes per sub-face, indexed by sub-face id and phase index.
/// Boundary sub-faces always hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    /// psi
    pub pressure: Vec<f64>,
    pub saturation: Vec<f64>,
    /// ft³·cp/day, positive from `left` to `right`.
    pub aux_flux: [Vec<f64>; 2],
}

impl State {
    pub fn uniform(mesh: &SpaceTimeMesh, pressure: f64, saturation: f64) -> Self {
        let n = mesh.num_elements();
        let f = mesh.subfaces().len();
        Self {
            pressure: vec![pressure; n],
            saturation: vec![saturation; n],
            aux_flux: [vec![0.0; f], vec![0.0; f]],
        }
    }

    pub fn num_elements(&self) -> usize {
        self.pressure.len()
    }

    pub fn check(&self, mesh: &SpaceTimeMesh) -> Result<()> {
        let n = mesh.num_elements();
        let f = mesh.subfaces().len();
        for (len, want) in [
            (self.pressure.len(), n),
            (self.saturation.len(), n),
            (self.aux_flux[0].len(), f),
            (self.aux_flux[1].len(), f),
        ] {
            if len != want {
                return Err(Error::DofMismatch {
                    expected: want,
                    got: len,
                });
            }
        }
        let all = self
            .pressure
            .iter()
            .chain(&self.saturation)
            .chain(&self.aux_flux[0])
            .chain(&self.aux_flux[1]);
        if let Some(i) = all.into_iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }
}

/// Start-of-step values seen by one column of a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ColumnStart {
    pub pressure: f64,
    pub saturation: f64,
    /// Phase mass in the column's footprint, lb.
    pub mass: [f64; 2],
    /// Cell velocity `[phase][direction]` at the start time.
    pub velocity: [[f64; 2]; 2],
    pub aux_velocity: [[f64; 2]; 2],
    /// Net outflow mass rate per unit volume `[phase]`.
    pub divergence: [f64; 2],
    /// Saturation gradient indicator of the previous step, if any.
    pub sat_gradient: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStart {
    pub columns: Vec<ColumnStart>,
}

impl StepStart {
    /// Uniform fluid at rest.
    pub fn uniform(mesh: &SpaceTimeMesh, model: &FluidModel, rock: &RockField, pressure: f64, saturation: f64) -> Self {
        let columns = mesh
            .columns()
            .iter()
            .map(|c| {
                let pv = rock.level(c.cell.level).porosity.get(c.cell.i as usize, c.cell.j as usize)
                    * mesh.element(c.elements.start).volume;
                ColumnStart {
                    pressure,
                    saturation,
                    mass: Phase::ALL.map(|ph| pv * model.concentration(ph, pressure, saturation)),
                    ..Default::default()
                }
            })
            .collect();
        Self { columns }
    }

    /// Start data taken from the end-of-step values of `state` on a mesh
    /// with the same columns (velocities and divergences zero).
    pub fn from_state_end(mesh: &SpaceTimeMesh, state: &State, model: &FluidModel, rock: &RockField) -> Self {
        let columns = mesh
            .columns()
            .iter()
            .map(|c| {
                let e = c.elements.end - 1;
                let pv = rock.level(c.cell.level).porosity.get(c.cell.i as usize, c.cell.j as usize)
                    * mesh.element(e).volume;
                let (p, s) = (state.pressure[e], state.saturation[e]);
                ColumnStart {
                    pressure: p,
                    saturation: s,
                    mass: Phase::ALL.map(|ph| pv * model.concentration(ph, p, s)),
                    ..Default::default()
                }
            })
            .collect();
        Self { columns }
    }
}
