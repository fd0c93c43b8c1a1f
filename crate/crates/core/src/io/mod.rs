//! Configuration, field files, result export and run comparison.

mod config;
mod export;
mod field;

use std::path::Path;

pub use config::{
    AdaptivityConfig, ExecutionConfig, FieldKind, GridConfig, InitialConfig, OutputConfig, RockConfig, RunConfig, TimeConfig,
    MAX_LEVELS,
};
pub use export::{
    export_results, format_indicators, format_rates, format_vtk, parse_rates, write_vtk, ReportFile, StepSection, TimingSection,
    TotalsSection, PRESSURE_FILE, RATES_FILE, RATES_HEADER, REPORT_FILE, SATURATION_FILE,
};
pub use field::{channel_field, format_field, gaussian_field, load_field, parse_field, write_field, ChannelParams};

use crate::error::{Error, Result};

/// Differences between two run directories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    /// `‖S_a − S_b‖₂ / ‖S_b‖₂` on the finest grid at the end time.
    pub saturation_l2: f64,
    /// Root mean square of rate differences over common output times.
    pub oil_rate_rms: f64,
    pub water_rate_rms: f64,
    /// Total wall time of `b` over that of `a`.
    pub speedup: f64,
    /// Linear-solve time of `b` over that of `a`.
    pub linear_speedup: f64,
}

pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x * x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn compare_runs(a: &Path, b: &Path) -> Result<Comparison> {
    let sat = |d: &Path| -> Result<_> {
        let p = d.join(SATURATION_FILE);
        parse_field(&read(&p)?, &p)
    };
    let (sa, sb) = (sat(a)?, sat(b)?);
    if (sa.nx, sa.ny) != (sb.nx, sb.ny) {
        return Err(Error::Field {
            path: b.join(SATURATION_FILE),
            message: format!("grid {}x{} differs from {}x{}", sb.nx, sb.ny, sa.nx, sa.ny),
        });
    }
    let rates = |d: &Path| -> Result<_> {
        let p = d.join(RATES_FILE);
        parse_rates(&read(&p)?, &p)
    };
    let (ra, rb) = (rates(a)?, rates(b)?);
    let report = |d: &Path| -> Result<_> {
        let p = d.join(REPORT_FILE);
        ReportFile::parse(&read(&p)?, &p)
    };
    let (pa, pb) = (report(a)?, report(b)?);
    let pairs: Vec<_> = ra.iter().zip(&rb).filter(|(x, y)| (x.time - y.time).abs() <= 1e-9 * x.time.abs().max(1.0)).collect();
    let ratio = |x: f64, y: f64| if x > 0.0 { y / x } else { f64::INFINITY };
    Ok(Comparison {
        saturation_l2: relative_l2(&sa.values, &sb.values),
        oil_rate_rms: rms(pairs.iter().map(|(x, y)| x.oil_rate - y.oil_rate)),
        water_rate_rms: rms(pairs.iter().map(|(x, y)| x.water_rate - y.water_rate)),
        speedup: ratio(pa.timing.total_seconds, pb.timing.total_seconds),
        linear_speedup: ratio(pa.timing.linear_solve_seconds, pb.timing.linear_solve_seconds),
    })
}
