//! Run output: VTK snapshots, rate CSV, report, finest-grid fields and
//! indicator dumps.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::field::format_field;
use crate::driver::{IndicatorDump, RateRow, RunReport, RunResult};
use crate::error::{Error, Result};
use crate::estimators::phase_name;
use crate::mesh::SpaceTimeMesh;
use crate::state::State;
use crate::upscaling::CellField;

pub const RATES_HEADER: &str = "time_days,qo_ft3_day,qw_ft3_day,cum_oil_ft3,cum_water_ft3";

pub const RATES_FILE: &str = "rates.csv";
pub const REPORT_FILE: &str = "report.toml";
pub const SATURATION_FILE: &str = "saturation.txt";
pub const PRESSURE_FILE: &str = "pressure.txt";

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Legacy VTK unstructured grid of the end-of-step slice: one quad per
/// column carrying the values of its last element.
pub fn format_vtk(mesh: &SpaceTimeMesh, state: &State) -> String {
    let cols = mesh.columns();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "step {} t = {}", mesh.step(), mesh.grid().t_start() + mesh.grid().dt);
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", 4 * cols.len());
    for col in cols {
        let el = mesh.element(col.elements.start);
        let [cx, cy] = el.center;
        let [hx, hy] = [0.5 * el.size[0], 0.5 * el.size[1]];
        for (x, y) in [(cx - hx, cy - hy), (cx + hx, cy - hy), (cx + hx, cy + hy), (cx - hx, cy + hy)] {
            let _ = writeln!(s, "{x} {y} 0");
        }
    }
    let _ = writeln!(s, "CELLS {} {}", cols.len(), 5 * cols.len());
    for c in 0..cols.len() {
        let b = 4 * c;
        let _ = writeln!(s, "4 {} {} {} {}", b, b + 1, b + 2, b + 3);
    }
    let _ = writeln!(s, "CELL_TYPES {}", cols.len());
    for _ in cols {
        s.push_str("9\n");
    }
    let _ = writeln!(s, "CELL_DATA {}", cols.len());
    let last: Vec<usize> = mesh.last_elements().collect();
    let arrays: [(&str, Box<dyn Fn(usize) -> String>); 4] = [
        ("S_w", Box::new(|e| state.saturation[e].to_string())),
        ("P_o", Box::new(|e| state.pressure[e].to_string())),
        ("level_s", Box::new(|e| mesh.element(e).level_s().to_string())),
        ("level_t", Box::new(|e| mesh.element(e).level_t().to_string())),
    ];
    for (name, f) in arrays {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for &e in &last {
            let _ = writeln!(s, "{}", f(e));
        }
    }
    s
}

pub fn write_vtk(path: &Path, mesh: &SpaceTimeMesh, state: &State) -> Result<()> {
    write(path, &format_vtk(mesh, state))
}

pub fn format_rates(rates: &[RateRow]) -> String {
    let mut s = format!("{RATES_HEADER}\n");
    for r in rates {
        let _ = writeln!(s, "{},{},{},{},{}", r.time, r.oil_rate, r.water_rate, r.cum_oil, r.cum_water);
    }
    s
}

pub fn parse_rates(text: &str, path: &Path) -> Result<Vec<RateRow>> {
    let bad = |message: String| Error::Field {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(RATES_HEADER) {
        return Err(bad("missing rate header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(k, l)| {
            let v: Vec<f64> = l
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(format!("row {}: not a number", k + 1)))?;
            if v.len() != 5 {
                return Err(bad(format!("row {}: expected 5 columns", k + 1)));
            }
            Ok(RateRow {
                time: v[0],
                oil_rate: v[1],
                water_rate: v[2],
                cum_oil: v[3],
                cum_water: v[4],
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSection {
    pub system_setup_seconds: f64,
    pub linear_solve_seconds: f64,
    pub data_handle_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalsSection {
    pub newton_iterations: usize,
    pub linear_iterations: usize,
    pub element_passes: usize,
    pub injected_mass_lb: f64,
    pub max_relative_imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSection {
    pub index: usize,
    pub t_end: f64,
    pub passes: Vec<String>,
    pub elements: Vec<usize>,
    pub newton: Vec<usize>,
    pub marked: Vec<usize>,
    pub max_level_s: u8,
    pub max_level_t: u8,
    pub imbalance_oil_lb: f64,
    pub imbalance_water_lb: f64,
}

/// Report as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub mode: String,
    pub steps: usize,
    pub timing: TimingSection,
    pub totals: TotalsSection,
    #[serde(default)]
    pub step: Vec<StepSection>,
}

impl ReportFile {
    pub fn from_report(r: &RunReport) -> Self {
        Self {
            mode: r.mode.name().into(),
            steps: r.steps.len(),
            timing: TimingSection {
                system_setup_seconds: r.timing.assembly_seconds,
                linear_solve_seconds: r.timing.linear_seconds,
                data_handle_seconds: r.timing.adaptivity_seconds,
                total_seconds: r.timing.total_seconds,
            },
            totals: TotalsSection {
                newton_iterations: r.newton_iterations,
                linear_iterations: r.linear_iterations,
                element_passes: r.element_passes,
                injected_mass_lb: r.injected_mass,
                max_relative_imbalance: r.max_relative_imbalance,
            },
            step: r
                .steps
                .iter()
                .map(|s| StepSection {
                    index: s.step,
                    t_end: s.t_end,
                    passes: s.passes.iter().map(|p| p.kind.name().to_string()).collect(),
                    elements: s.passes.iter().map(|p| p.elements).collect(),
                    newton: s.passes.iter().map(|p| p.newton_iterations).collect(),
                    marked: s.passes.iter().map(|p| p.marked).collect(),
                    max_level_s: s.max_level_s,
                    max_level_t: s.max_level_t,
                    imbalance_oil_lb: s.imbalance[0],
                    imbalance_water_lb: s.imbalance[1],
                })
                .collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Field {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }
}

pub fn format_indicators(dump: &IndicatorDump) -> String {
    let ind = &dump.indicators;
    let mut s = String::from("x,y,t");
    for (name, _) in ind.estimators() {
        for a in 0..2 {
            let _ = write!(s, ",{name}_{}", phase_name(a));
        }
    }
    s.push_str(",eps_t,eps_s\n");
    for (e, c) in dump.centers.iter().enumerate() {
        let _ = write!(s, "{},{},{}", c[0], c[1], c[2]);
        for (_, v) in ind.estimators() {
            let _ = write!(s, ",{},{}", v[e][0], v[e][1]);
        }
        let _ = writeln!(s, ",{},{}", ind.eps_t[e], ind.eps_s[e]);
    }
    s
}

/// Writes rates, report, finest-grid end fields, the last snapshot and any
/// indicator dumps into `dir`.
pub fn export_results(dir: &Path, result: &RunResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join(RATES_FILE), &format_rates(&result.rates))?;
    write(&dir.join(REPORT_FILE), &ReportFile::from_report(&result.report).to_toml())?;
    let h = &result.history;
    let field = |v: &Vec<f64>| CellField {
        nx: h.nx,
        ny: h.ny,
        values: v.clone(),
    };
    write(&dir.join(SATURATION_FILE), &format_field(&field(&h.saturation)))?;
    write(&dir.join(PRESSURE_FILE), &format_field(&field(&h.pressure)))?;
    if let Some((mesh, state)) = &result.last {
        write_vtk(&dir.join("final.vtk"), mesh, state)?;
    }
    if !result.indicators.is_empty() {
        let sub = dir.join("indicators");
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for d in &result.indicators {
            let name = format!("step{:04}_pass{}_{}.csv", d.step, d.pass, d.kind.name());
            write(&sub.join(name), &format_indicators(d))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{CoarseGrid, MeshLevels};

    #[test]
    fn four_cell_vtk() {
        let m = SpaceTimeMesh::build_coarse(CoarseGrid::new(2, 2, 1.0, 1.0, 1.0), MeshLevels { space: 0, time: 0 }).unwrap();
        let s = State::uniform(&m, 1000.0, 0.2);
        let v = format_vtk(&m, &s);
        assert!(v.contains("CELLS 4 20"));
        assert!(v.contains("CELL_TYPES 4"));
        assert_eq!(v.matches("SCALARS").count(), 4);
        for name in ["S_w", "P_o", "level_s", "level_t"] {
            assert!(v.contains(&format!("SCALARS {name} double 1")));
        }
    }

    #[test]
    fn empty_rates_is_header_only() {
        assert_eq!(format_rates(&[]), format!("{RATES_HEADER}\n"));
        assert!(parse_rates(&format_rates(&[]), Path::new("r")).unwrap().is_empty());
    }

    #[test]
    fn rates_round_trip() {
        let rows = vec![
            RateRow {
                time: 10.0,
                oil_rate: 0.5,
                water_rate: 0.0,
                cum_oil: 2.5,
                cum_water: 0.0,
            },
            RateRow {
                time: 20.0,
                oil_rate: 0.75,
                water_rate: 0.125,
                cum_oil: 8.75,
                cum_water: 0.625,
            },
        ];
        assert_eq!(parse_rates(&format_rates(&rows), Path::new("r")).unwrap(), rows);
    }
}
