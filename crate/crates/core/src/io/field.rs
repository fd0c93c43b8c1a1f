//! Field files and synthetic permeability fields.
//!
//! File format: a first line `nx ny`, then `nx·ny` whitespace-separated
//! values in row-major order (`i` fastest).

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::upscaling::CellField;

pub fn parse_field(text: &str, path: &Path) -> Result<CellField> {
    let bad = |message: String| Error::Field {
        path: path.to_path_buf(),
        message,
    };
    let mut tokens = text.split_whitespace();
    let mut dim = |name: &str| -> Result<usize> {
        let t = tokens.next().ok_or_else(|| bad(format!("missing {name} in header")))?;
        t.parse().map_err(|_| bad(format!("{name} `{t}` is not a cell count")))
    };
    let nx = dim("nx")?;
    let ny = dim("ny")?;
    if nx == 0 || ny == 0 {
        return Err(bad(format!("empty grid {nx}x{ny}")));
    }
    let mut values = Vec::with_capacity(nx * ny);
    for t in tokens {
        let v: f64 = t.parse().map_err(|_| bad(format!("value `{t}` is not a number")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(bad(format!("value {v} at index {} must be > 0", values.len())));
        }
        values.push(v);
    }
    if values.len() != nx * ny {
        return Err(bad(format!("expected {} values for {nx}x{ny}, found {}", nx * ny, values.len())));
    }
    CellField::new(nx, ny, values)
}

pub fn load_field(path: &Path) -> Result<CellField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_field(&text, path)
}

pub fn format_field(f: &CellField) -> String {
    let mut s = format!("{} {}\n", f.nx, f.ny);
    for row in f.values.chunks(f.nx) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn write_field(path: &Path, f: &CellField) -> Result<()> {
    std::fs::write(path, format_field(f)).map_err(|e| Error::io(path, e))
}

/// Separable gaussian smoothing, kernel truncated at three widths and
/// renormalized at the boundary.
fn smooth(values: &[f64], nx: usize, ny: usize, width: f64) -> Vec<f64> {
    if width <= 0.0 {
        return values.to_vec();
    }
    let r = (3.0 * width).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * width * width)).exp()).collect();
    let pass = |src: &[f64], along_x: bool| {
        let mut out = vec![0.0; src.len()];
        for j in 0..ny {
            for i in 0..nx {
                let (mut s, mut w) = (0.0, 0.0);
                for (k, kv) in kernel.iter().enumerate() {
                    let d = k as isize - r;
                    let (a, b) = if along_x { (i as isize + d, j as isize) } else { (i as isize, j as isize + d) };
                    if a < 0 || b < 0 || a >= nx as isize || b >= ny as isize {
                        continue;
                    }
                    s += kv * src[b as usize * nx + a as usize];
                    w += kv;
                }
                out[j * nx + i] = s / w;
            }
        }
        out
    };
    pass(&pass(values, true), false)
}

/// Log-normal field: smoothed white noise rescaled to zero mean and unit
/// variance, then `k = g·exp(σ z)` with `σ² = log_variance`.
pub fn gaussian_field(seed: u64, nx: usize, ny: usize, geometric_mean: f64, log_variance: f64, correlation_length: f64) -> CellField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..nx * ny).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let z = smooth(&noise, nx, ny, correlation_length);
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sigma = log_variance.max(0.0).sqrt();
    let values = z
        .iter()
        .map(|v| {
            if sigma == 0.0 || std == 0.0 {
                geometric_mean
            } else {
                geometric_mean * (sigma * (v - mean) / std).exp()
            }
        })
        .collect();
    CellField { nx, ny, values }
}

/// Sinuous high-permeability band running along `y` over a uniform
/// background; the channel value is `background·contrast`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub background: f64,
    pub contrast: f64,
    /// Cells.
    pub width: f64,
    pub amplitude: f64,
    pub wavelength: f64,
}

pub fn channel_field(seed: u64, nx: usize, ny: usize, p: ChannelParams) -> CellField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase = rng.random::<f64>() * 2.0 * PI;
    let shift = (rng.random::<f64>() - 0.5) * 0.25 * nx as f64;
    let half = 0.5 * p.width.max(1.0);
    let mut values = vec![p.background; nx * ny];
    for j in 0..ny {
        let y = j as f64 + 0.5;
        let xc = 0.5 * nx as f64 + shift + p.amplitude * (2.0 * PI * y / p.wavelength + phase).sin();
        let xc = xc.clamp(half, nx as f64 - half);
        for i in 0..nx {
            if (i as f64 + 0.5 - xc).abs() <= half {
                values[j * nx + i] = p.background * p.contrast;
            }
        }
    }
    CellField { nx, ny, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_cell_file() {
        let f = parse_field("1 1\n100.0", Path::new("k.txt")).unwrap();
        assert_eq!((f.nx, f.ny, f.values.clone()), (1, 1, vec![100.0]));
    }

    #[test]
    fn rejects_bad_files() {
        for text in ["2 2\n1 2 3", "1 1\n0.0", "1 1\n-3", "x 1\n1", "2 1\n1 2 3", "1 1\nabc", ""] {
            assert!(matches!(parse_field(text, Path::new("f")), Err(Error::Field { .. })), "{text}");
        }
    }

    #[test]
    fn round_trip() {
        let f = gaussian_field(3, 5, 4, 50.0, 1.0, 1.5);
        let g = parse_field(&format_field(&f), Path::new("f")).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn gaussian_is_deterministic_and_positive() {
        let a = gaussian_field(11, 32, 16, 100.0, 2.0, 3.0);
        assert_eq!(a, gaussian_field(11, 32, 16, 100.0, 2.0, 3.0));
        assert_ne!(a, gaussian_field(12, 32, 16, 100.0, 2.0, 3.0));
        assert!(a.min() > 0.0);
        assert!(a.max() / a.min() > 10.0);
    }

    #[test]
    fn zero_log_variance_is_homogeneous() {
        let f = gaussian_field(1, 8, 8, 42.0, 0.0, 2.0);
        assert!(f.values.iter().all(|v| *v == 42.0));
    }

    #[test]
    fn channel_contrast() {
        let p = ChannelParams {
            background: 1.0,
            contrast: 1000.0,
            width: 3.0,
            amplitude: 4.0,
            wavelength: 20.0,
        };
        let f = channel_field(5, 32, 64, p);
        assert!(f.max() / f.min() >= 1000.0);
        assert_eq!(f, channel_field(5, 32, 64, p));
    }
}
