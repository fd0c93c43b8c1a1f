//! Fluid and rock constitutive models.
//!
//! Oil is the non-wetting phase: water pressure is always produced as
//! `p_w = p_o - p_c(s_w)` and oil saturation as `1 - s_w`. Every function
//! that feeds the Jacobian returns its analytic derivative alongside the
//! value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Field-unit Darcy constant: ft³/day from md·ft²·psi/(cp·ft).
pub const DARCY_FIELD: f64 = 6.3283e-3;

/// psi per (lb/ft³ · ft/s² · ft): hydrostatic head conversion.
pub const GRAVITY_HEAD: f64 = 1.0 / (144.0 * 32.174);

/// Width above the irreducible water saturation over which the capillary
/// pressure is replaced by its tangent line; the curve is singular at
/// `s_wirr`.
pub const SAT_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Oil,
    Water,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::Oil, Phase::Water];

    pub fn index(self) -> usize {
        match self {
            Phase::Oil => 0,
            Phase::Water => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseProps {
    /// lb/ft³
    pub rho_ref: f64,
    /// psi
    pub p_ref: f64,
    /// 1/psi
    pub compressibility: f64,
    /// cp
    pub viscosity: f64,
}

impl PhaseProps {
    pub fn density(&self, p: f64) -> f64 {
        self.rho_ref * (self.compressibility * (p - self.p_ref)).exp()
    }

    /// `(ρ, dρ/dp)`
    pub fn density_deriv(&self, p: f64) -> (f64, f64) {
        let rho = self.density(p);
        (rho, self.compressibility * rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidProps {
    pub oil: PhaseProps,
    pub water: PhaseProps,
    /// In-plane gravity vector, ft/s². Zero for areal models.
    pub gravity: [f64; 2],
}

impl Default for FluidProps {
    fn default() -> Self {
        Self {
            oil: PhaseProps {
                rho_ref: 53.0,
                p_ref: 1000.0,
                compressibility: 1e-4,
                viscosity: 3.0,
            },
            water: PhaseProps {
                rho_ref: 64.0,
                p_ref: 1000.0,
                compressibility: 3e-6,
                viscosity: 0.3,
            },
            gravity: [0.0, 0.0],
        }
    }
}

impl FluidProps {
    pub fn phase(&self, phase: Phase) -> &PhaseProps {
        match phase {
            Phase::Oil => &self.oil,
            Phase::Water => &self.water,
        }
    }

    pub fn density(&self, phase: Phase, p: f64) -> f64 {
        self.phase(phase).density(p)
    }

    pub fn has_gravity(&self) -> bool {
        self.gravity.iter().any(|g| *g != 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("oil", &self.oil), ("water", &self.water)] {
            if !(p.rho_ref > 0.0) {
                return Err(Error::config(format!("fluid.{name}.rho_ref"), "must be > 0"));
            }
            if !(p.compressibility >= 0.0) {
                return Err(Error::config(
                    format!("fluid.{name}.compressibility"),
                    "must be >= 0",
                ));
            }
            if !(p.viscosity > 0.0) {
                return Err(Error::config(format!("fluid.{name}.viscosity"), "must be > 0"));
            }
            if !p.p_ref.is_finite() {
                return Err(Error::config(format!("fluid.{name}.p_ref"), "must be finite"));
            }
        }
        Ok(())
    }
}

/// Brooks-Corey relative permeability and capillary pressure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BrooksCorey {
    pub s_wirr: f64,
    pub s_or: f64,
    pub krw0: f64,
    pub kro0: f64,
    pub n_w: f64,
    pub n_o: f64,
    /// Entry pressure, psi.
    pub p_entry: f64,
    pub l_cow: f64,
}

impl Default for BrooksCorey {
    fn default() -> Self {
        Self {
            s_wirr: 0.2,
            s_or: 0.2,
            krw0: 1.0,
            kro0: 1.0,
            n_w: 2.0,
            n_o: 2.0,
            p_entry: 10.0,
            l_cow: 0.2,
        }
    }
}

impl BrooksCorey {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_wirr >= 0.0) {
            return Err(Error::config("relperm.s_wirr", "must be >= 0"));
        }
        if !(self.s_or >= 0.0) {
            return Err(Error::config("relperm.s_or", "must be >= 0"));
        }
        if !(self.s_wirr + self.s_or < 1.0) {
            return Err(Error::config(
                "relperm.s_wirr, relperm.s_or",
                format!(
                    "s_wirr + s_or = {} must be < 1",
                    self.s_wirr + self.s_or
                ),
            ));
        }
        for (key, v) in [("relperm.krw0", self.krw0), ("relperm.kro0", self.kro0)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(key, "must lie in (0, 1]"));
            }
        }
        for (key, v) in [("relperm.n_w", self.n_w), ("relperm.n_o", self.n_o)] {
            if !(v > 0.0) {
                return Err(Error::config(key, "must be > 0"));
            }
        }
        if !(self.p_entry >= 0.0) {
            return Err(Error::config("relperm.p_entry", "must be >= 0"));
        }
        if !(self.l_cow > 0.0) {
            return Err(Error::config("relperm.l_cow", "must be > 0"));
        }
        Ok(())
    }

    fn mobile_range(&self) -> f64 {
        1.0 - self.s_or - self.s_wirr
    }

    /// Relative permeability of `phase` as a function of water saturation,
    /// with its derivative with respect to `s_w`.
    pub fn kr(&self, phase: Phase, s_w: f64) -> (f64, f64) {
        let range = self.mobile_range();
        match phase {
            Phase::Water => {
                let se = (s_w - self.s_wirr) / range;
                if se <= 0.0 {
                    (0.0, 0.0)
                } else if se >= 1.0 {
                    (self.krw0, 0.0)
                } else {
                    let v = self.krw0 * se.powf(self.n_w);
                    (v, self.krw0 * self.n_w * se.powf(self.n_w - 1.0) / range)
                }
            }
            Phase::Oil => {
                let se = (1.0 - s_w - self.s_or) / range;
                if se <= 0.0 {
                    (0.0, 0.0)
                } else if se >= 1.0 {
                    (self.kro0, 0.0)
                } else {
                    let v = self.kro0 * se.powf(self.n_o);
                    (v, -self.kro0 * self.n_o * se.powf(self.n_o - 1.0) / range)
                }
            }
        }
    }

    /// Capillary pressure `p_o - p_w` with derivative. Below
    /// `s_wirr + SAT_FLOOR` the curve continues along its tangent.
    pub fn pc(&self, s_w: f64) -> (f64, f64) {
        if self.p_entry == 0.0 {
            return (0.0, 0.0);
        }
        let floor = self.s_wirr + SAT_FLOOR;
        let x = (s_w.max(floor) - self.s_wirr).min(1.0 - self.s_wirr).max(SAT_FLOOR);
        let v = self.p_entry * ((1.0 - self.s_wirr) / x).powf(self.l_cow);
        let d = -self.l_cow * v / x;
        if s_w < floor {
            (v + d * (s_w - floor), d)
        } else {
            (v, d)
        }
    }
}

/// Phase pressure and its derivatives with respect to `(p_o, s_w)`.
#[derive(Debug, Clone, Copy)]
pub struct PhasePressure {
    pub value: f64,
    pub d_p: f64,
    pub d_s: f64,
}

/// Mobility `λ = kr·ρ/μ` and friends evaluated at one cell state.
#[derive(Debug, Clone, Copy)]
pub struct CellPhase {
    pub pressure: PhasePressure,
    pub rho: f64,
    /// dρ/dp_α
    pub drho: f64,
    pub kr: f64,
    /// dkr/ds_w
    pub dkr: f64,
    pub mu: f64,
}

impl CellPhase {
    pub fn mobility(&self) -> f64 {
        self.kr * self.rho / self.mu
    }

    /// `(dλ/dp_o, dλ/ds_w)`
    pub fn mobility_deriv(&self) -> (f64, f64) {
        let d_p = self.kr * self.drho * self.pressure.d_p / self.mu;
        let d_s = (self.dkr * self.rho + self.kr * self.drho * self.pressure.d_s) / self.mu;
        (d_p, d_s)
    }

    /// dρ/dp_o and dρ/ds_w through the phase pressure.
    pub fn density_deriv(&self) -> (f64, f64) {
        (self.drho * self.pressure.d_p, self.drho * self.pressure.d_s)
    }
}

/// Immutable fluid + relperm parameter set shared by assembly and
/// estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidModel {
    pub fluid: FluidProps,
    pub relperm: BrooksCorey,
}

impl Default for FluidModel {
    fn default() -> Self {
        Self {
            fluid: FluidProps::default(),
            relperm: BrooksCorey::default(),
        }
    }
}

impl FluidModel {
    pub fn phase_pressure(&self, phase: Phase, p_o: f64, s_w: f64) -> PhasePressure {
        match phase {
            Phase::Oil => PhasePressure {
                value: p_o,
                d_p: 1.0,
                d_s: 0.0,
            },
            Phase::Water => {
                let (pc, dpc) = self.relperm.pc(s_w);
                PhasePressure {
                    value: p_o - pc,
                    d_p: 1.0,
                    d_s: -dpc,
                }
            }
        }
    }

    pub fn cell_phase(&self, phase: Phase, p_o: f64, s_w: f64) -> CellPhase {
        let pressure = self.phase_pressure(phase, p_o, s_w);
        let props = self.fluid.phase(phase);
        let (rho, drho) = props.density_deriv(pressure.value);
        let (kr, dkr) = self.relperm.kr(phase, s_w);
        CellPhase {
            pressure,
            rho,
            drho,
            kr,
            dkr,
            mu: props.viscosity,
        }
    }

    pub fn density(&self, phase: Phase, p_o: f64, s_w: f64) -> f64 {
        let p = self.phase_pressure(phase, p_o, s_w).value;
        self.fluid.density(phase, p)
    }

    /// Phase saturation from the water saturation.
    pub fn saturation(phase: Phase, s_w: f64) -> f64 {
        match phase {
            Phase::Water => s_w,
            Phase::Oil => 1.0 - s_w,
        }
    }

    pub fn mobility(&self, phase: Phase, p_o: f64, s_w: f64) -> f64 {
        self.cell_phase(phase, p_o, s_w).mobility()
    }

    /// Phase mass per unit pore volume, `ρ_α s_α`.
    pub fn concentration(&self, phase: Phase, p_o: f64, s_w: f64) -> f64 {
        self.density(phase, p_o, s_w) * Self::saturation(phase, s_w)
    }

    /// Upwind mobility on a face: averaged density, upstream relative
    /// permeability. `aux_flux > 0` means flow from `left` to `right`; ties
    /// take the right (downstream) branch.
    pub fn upwind_mobility(&self, phase: Phase, left: (f64, f64), right: (f64, f64), aux_flux: f64) -> f64 {
        let l = self.cell_phase(phase, left.0, left.1);
        let r = self.cell_phase(phase, right.0, right.1);
        let kr = if aux_flux > 0.0 { l.kr } else { r.kr };
        0.5 * (l.rho + r.rho) * kr / l.mu
    }
}
