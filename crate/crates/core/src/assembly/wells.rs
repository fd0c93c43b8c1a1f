//! Rate injectors and bottom-hole-pressure producers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::SpaceTimeMesh;
use crate::physics::{CellPhase, FluidModel, Phase, DARCY_FIELD};
use crate::upscaling::RockField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WellKind {
    /// Fixed surface water rate, ft³/day.
    Injector,
    /// Fixed bottom-hole pressure, psi.
    Producer,
}

fn default_radius() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellSpec {
    #[serde(default)]
    pub name: String,
    pub kind: WellKind,
    /// Finest-level cell indices.
    pub i: usize,
    pub j: usize,
    /// Rate (injector) or bottom-hole pressure (producer).
    pub value: f64,
    /// Wellbore radius, ft.
    #[serde(default = "default_radius")]
    pub radius: f64,
}

impl WellSpec {
    pub fn injector(i: usize, j: usize, rate: f64) -> Self {
        Self {
            name: "inj".into(),
            kind: WellKind::Injector,
            i,
            j,
            value: rate,
            radius: default_radius(),
        }
    }

    pub fn producer(i: usize, j: usize, bhp: f64) -> Self {
        Self {
            name: "prod".into(),
            kind: WellKind::Producer,
            i,
            j,
            value: bhp,
            radius: default_radius(),
        }
    }

    pub fn with_radius(mut self, r: f64) -> Self {
        self.radius = r;
        self
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        match self.kind {
            WellKind::Injector if !(self.value >= 0.0) => {
                return Err(Error::config(format!("{key}.value"), "injection rate must be >= 0"))
            }
            WellKind::Producer if !(self.value > 0.0) => {
                return Err(Error::config(format!("{key}.value"), "bottom-hole pressure must be > 0"))
            }
            _ => {}
        }
        if !(self.radius > 0.0) {
            return Err(Error::config(format!("{key}.radius"), "must be > 0"));
        }
        Ok(())
    }
}

/// Isotropic-radius well index `2π C_d √(kx ky) h / ln(r_eq / r_w)` with
/// `r_eq = 0.14 √(Δx² + Δy²)`.
pub fn well_index(kx: f64, ky: f64, dx: f64, dy: f64, thickness: f64, radius: f64) -> Result<f64> {
    if !(kx > 0.0 && ky > 0.0) {
        return Err(Error::Well("well completed in a zero-permeability cell".into()));
    }
    let r_eq = 0.14 * (dx * dx + dy * dy).sqrt();
    if r_eq <= radius {
        return Err(Error::Well(format!(
            "equivalent radius {r_eq:.4} ft does not exceed wellbore radius {radius} ft"
        )));
    }
    Ok(2.0 * std::f64::consts::PI * DARCY_FIELD * (kx * ky).sqrt() * thickness / (r_eq / radius).ln())
}

/// A well attached to the column containing its cell on one mesh.
#[derive(Debug, Clone)]
pub struct PlacedWell {
    pub well: usize,
    pub kind: WellKind,
    pub value: f64,
    pub column: usize,
    pub index: f64,
}

impl PlacedWell {
    /// Mass rate leaving the element for `phase` and its derivatives with
    /// respect to `(p_o, s_w)`.
    pub fn mass_rate(&self, model: &FluidModel, phase: Phase, p_o: f64, cp: &CellPhase) -> (f64, f64, f64) {
        match self.kind {
            WellKind::Injector => match phase {
                Phase::Water => (-model.fluid.water.rho_ref * self.value, 0.0, 0.0),
                Phase::Oil => (0.0, 0.0, 0.0),
            },
            WellKind::Producer => {
                let dp = p_o - self.value;
                let lam = cp.mobility();
                let (dl_p, dl_s) = cp.mobility_deriv();
                (self.index * lam * dp, self.index * (dl_p * dp + lam), self.index * dl_s * dp)
            }
        }
    }
}

/// Wells placed on a mesh, grouped by column.
#[derive(Debug, Clone, Default)]
pub struct WellSet {
    pub placed: Vec<PlacedWell>,
    by_column: Vec<Vec<usize>>,
}

impl WellSet {
    pub fn place(mesh: &SpaceTimeMesh, rock: &RockField, wells: &[WellSpec]) -> Result<Self> {
        let (nxf, nyf) = mesh.fine_dims();
        let mut by_column = vec![Vec::new(); mesh.columns().len()];
        let mut placed = Vec::with_capacity(wells.len());
        for (w, spec) in wells.iter().enumerate() {
            if spec.i >= nxf || spec.j >= nyf {
                return Err(Error::Well(format!(
                    "well `{}` at ({}, {}) lies outside the {nxf}x{nyf} grid",
                    spec.name, spec.i, spec.j
                )));
            }
            let column = mesh.column_at(spec.i as u32, spec.j as u32);
            let cell = mesh.columns()[column].cell;
            let el = mesh.element(mesh.columns()[column].elements.start);
            let [kx, ky] = rock.level(cell.level).perm(cell.i as usize, cell.j as usize);
            let index = match spec.kind {
                WellKind::Producer => well_index(kx, ky, el.size[0], el.size[1], mesh.grid().thickness, spec.radius)?,
                WellKind::Injector => 0.0,
            };
            by_column[column].push(placed.len());
            placed.push(PlacedWell {
                well: w,
                kind: spec.kind,
                value: spec.value,
                column,
                index,
            });
        }
        Ok(Self { placed, by_column })
    }

    pub fn in_column(&self, column: usize) -> impl Iterator<Item = &PlacedWell> {
        self.by_column[column].iter().map(|&k| &self.placed[k])
    }

    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.placed.iter().map(|p| p.column)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_matches_formula() {
        let wi = well_index(100.0, 100.0, 8.0, 8.0, 1.0, 0.25).unwrap();
        let r_eq = 0.14 * 128f64.sqrt();
        let want = 2.0 * std::f64::consts::PI * 6.3283e-3 * 100.0 / (r_eq / 0.25).ln();
        assert!((wi - want).abs() < 1e-14 * want);
    }

    #[test]
    fn bad_completions_rejected() {
        assert!(well_index(0.0, 10.0, 8.0, 8.0, 1.0, 0.25).is_err());
        // 1 ft cells: r_eq = 0.198 < 0.25
        assert!(well_index(10.0, 10.0, 1.0, 1.0, 1.0, 0.25).is_err());
        assert!(well_index(10.0, 10.0, 1.0, 1.0, 1.0, 0.1).is_ok());
    }

    #[test]
    fn producer_at_bhp_has_no_sink_and_splits_by_mobility() {
        let model = FluidModel::default();
        let w = PlacedWell {
            well: 0,
            kind: WellKind::Producer,
            value: 1000.0,
            column: 0,
            index: 2.0,
        };
        let oil = model.cell_phase(Phase::Oil, 1000.0, 0.5);
        assert_eq!(w.mass_rate(&model, Phase::Oil, 1000.0, &oil).0, 0.0);
        let water = model.cell_phase(Phase::Water, 1200.0, 0.5);
        let oil = model.cell_phase(Phase::Oil, 1200.0, 0.5);
        let qo = w.mass_rate(&model, Phase::Oil, 1200.0, &oil).0;
        let qw = w.mass_rate(&model, Phase::Water, 1200.0, &water).0;
        assert!((qo / qw - oil.mobility() / water.mobility()).abs() < 1e-12);
    }

    #[test]
    fn injector_adds_reference_water_mass() {
        let model = FluidModel::default();
        let w = PlacedWell {
            well: 0,
            kind: WellKind::Injector,
            value: 1.0,
            column: 0,
            index: 0.0,
        };
        let cp = model.cell_phase(Phase::Water, 1000.0, 0.2);
        let (q, _, _) = w.mass_rate(&model, Phase::Water, 1000.0, &cp);
        assert_eq!(-q * 10.0, 640.0);
        let cp = model.cell_phase(Phase::Oil, 1000.0, 0.2);
        assert_eq!(w.mass_rate(&model, Phase::Oil, 1000.0, &cp).0, 0.0);
    }
}
