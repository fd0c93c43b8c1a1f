//! Per-level permeability and porosity from the finest-level field.
//!
//! Porosity is volume averaged. Permeability is homogenized per coarse block
//! and per direction by a local single-phase problem: unit pressure drop
//! across the block, sealed lateral sides, two-point fluxes. The effective
//! value is `Q·L/(A·Δp)`. Upscaling runs once before time stepping.

use faer::prelude::*;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Row-major cell values on a structured `nx × ny` grid (`i` fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl CellField {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != nx * ny {
            return Err(Error::DofMismatch {
                expected: nx * ny,
                got: values.len(),
            });
        }
        Ok(Self { nx, ny, values })
    }

    pub fn constant(nx: usize, ny: usize, v: f64) -> Self {
        Self {
            nx,
            ny,
            values: vec![v; nx * ny],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpscaleMethod {
    #[default]
    FlowBased,
    HarmonicArithmetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    X,
    Y,
}

/// Permeability (md, per direction) and porosity for one spatial level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRock {
    pub kx: CellField,
    pub ky: CellField,
    pub porosity: CellField,
}

impl LevelRock {
    #[inline]
    pub fn perm(&self, i: usize, j: usize) -> [f64; 2] {
        [self.kx.get(i, j), self.ky.get(i, j)]
    }
}

/// Rock properties for every spatial level, index 0 being the coarsest.
#[derive(Debug, Clone, PartialEq)]
pub struct RockField {
    pub levels: Vec<LevelRock>,
}

impl RockField {
    /// Builds all levels from the finest field. `max_level` is the number of
    /// ratio-2 refinements between the coarse grid and the finest field.
    pub fn from_fine(fine: LevelRock, max_level: u8, method: UpscaleMethod, exec: Execution) -> Result<Self> {
        validate_level(&fine)?;
        let mut levels = Vec::with_capacity(max_level as usize + 1);
        for l in 0..max_level {
            let ratio = 1usize << (max_level - l);
            let kx = upscale_permeability(&fine.kx, &fine.ky, ratio, Direction::X, method, exec)?;
            let ky = upscale_permeability(&fine.kx, &fine.ky, ratio, Direction::Y, method, exec)?;
            let porosity = upscale_porosity(&fine.porosity, ratio)?;
            levels.push(LevelRock { kx, ky, porosity });
        }
        levels.push(fine);
        Ok(Self { levels })
    }

    pub fn homogeneous(nx: usize, ny: usize, max_level: u8, k: f64, phi: f64) -> Self {
        let levels = (0..=max_level)
            .map(|l| {
                let (fx, fy) = (nx << l, ny << l);
                LevelRock {
                    kx: CellField::constant(fx, fy, k),
                    ky: CellField::constant(fx, fy, k),
                    porosity: CellField::constant(fx, fy, phi),
                }
            })
            .collect();
        Self { levels }
    }

    pub fn max_level(&self) -> u8 {
        (self.levels.len() - 1) as u8
    }

    pub fn level(&self, l: u8) -> &LevelRock {
        &self.levels[l as usize]
    }

    pub fn finest(&self) -> &LevelRock {
        self.levels.last().expect("rock field has at least one level")
    }
}

fn validate_level(rock: &LevelRock) -> Result<()> {
    let dims = (rock.kx.nx, rock.kx.ny);
    for f in [&rock.ky, &rock.porosity] {
        if (f.nx, f.ny) != dims {
            return Err(Error::Upscaling("field dimensions differ".into()));
        }
    }
    if rock.kx.values.iter().chain(&rock.ky.values).any(|k| !(*k > 0.0)) {
        return Err(Error::Upscaling("permeability must be > 0 everywhere".into()));
    }
    if rock.porosity.values.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
        return Err(Error::Upscaling("porosity must lie in (0, 1]".into()));
    }
    Ok(())
}

fn check_divisible(f: &CellField, ratio: usize) -> Result<(usize, usize)> {
    if ratio == 0 || f.nx % ratio != 0 || f.ny % ratio != 0 {
        return Err(Error::Upscaling(format!(
            "{}x{} grid not divisible by ratio {ratio}",
            f.nx, f.ny
        )));
    }
    Ok((f.nx / ratio, f.ny / ratio))
}

/// Volume-weighted mean over `ratio × ratio` blocks (equal fine volumes).
pub fn upscale_porosity(fine: &CellField, ratio: usize) -> Result<CellField> {
    let (cx, cy) = check_divisible(fine, ratio)?;
    let mut out = Vec::with_capacity(cx * cy);
    for cj in 0..cy {
        for ci in 0..cx {
            let mut sum = 0.0;
            for j in cj * ratio..(cj + 1) * ratio {
                for i in ci * ratio..(ci + 1) * ratio {
                    sum += fine.get(i, j);
                }
            }
            out.push(sum / (ratio * ratio) as f64);
        }
    }
    CellField::new(cx, cy, out)
}

/// Effective permeability in `dir` for each `ratio × ratio` block.
pub fn upscale_permeability(
    kx: &CellField,
    ky: &CellField,
    ratio: usize,
    dir: Direction,
    method: UpscaleMethod,
    exec: Execution,
) -> Result<CellField> {
    let (cx, cy) = check_divisible(kx, ratio)?;
    if (ky.nx, ky.ny) != (kx.nx, kx.ny) {
        return Err(Error::Upscaling("kx and ky dimensions differ".into()));
    }
    let blocks = exec.map(cx * cy, |b| {
        let (ci, cj) = (b % cx, b / cx);
        let block = Block::extract(kx, ky, ci * ratio, cj * ratio, ratio);
        match method {
            UpscaleMethod::FlowBased => block.flow_based(dir),
            UpscaleMethod::HarmonicArithmetic => block.harmonic_arithmetic(dir),
        }
    });
    let values = blocks.into_iter().collect::<Result<Vec<_>>>()?;
    CellField::new(cx, cy, values)
}

/// A square block with its axes rotated so that flow is along local `a`.
struct Block {
    n: usize,
    kx: Vec<f64>,
    ky: Vec<f64>,
}

impl Block {
    fn extract(kx: &CellField, ky: &CellField, i0: usize, j0: usize, n: usize) -> Self {
        let mut bx = Vec::with_capacity(n * n);
        let mut by = Vec::with_capacity(n * n);
        for j in j0..j0 + n {
            for i in i0..i0 + n {
                bx.push(kx.get(i, j));
                by.push(ky.get(i, j));
            }
        }
        Self { n, kx: bx, ky: by }
    }

    /// (along-flow, transverse) permeability at local (a, b).
    fn local(&self, dir: Direction, a: usize, b: usize) -> (f64, f64) {
        let idx = match dir {
            Direction::X => b * self.n + a,
            Direction::Y => a * self.n + b,
        };
        match dir {
            Direction::X => (self.kx[idx], self.ky[idx]),
            Direction::Y => (self.ky[idx], self.kx[idx]),
        }
    }

    fn harmonic_arithmetic(&self, dir: Direction) -> Result<f64> {
        let n = self.n;
        let mut sum = 0.0;
        for b in 0..n {
            let mut res = 0.0;
            for a in 0..n {
                let k = self.local(dir, a, b).0;
                if !(k > 0.0) {
                    return Err(Error::Upscaling("zero permeability in block".into()));
                }
                res += 1.0 / k;
            }
            sum += n as f64 / res;
        }
        Ok(sum / n as f64)
    }

    /// Square fine cells assumed; the cell size cancels in `Q·L/(A·Δp)`.
    fn flow_based(&self, dir: Direction) -> Result<f64> {
        let n = self.n;
        if (0..n * n).any(|c| {
            let (a, b) = (c % n, c / n);
            let (k, t) = self.local(dir, a, b);
            !(k > 0.0 && t > 0.0)
        }) {
            return Err(Error::Upscaling("singular local problem: zero permeability".into()));
        }
        let id = |a: usize, b: usize| b * n + a;
        let half = |k: f64| 2.0 * k;
        let harm = |k1: f64, k2: f64| 1.0 / (1.0 / half(k1) + 1.0 / half(k2));
        let mut mat = Mat::<f64>::zeros(n * n, n * n);
        let mut rhs = Mat::<f64>::zeros(n * n, 1);
        for b in 0..n {
            for a in 0..n {
                let c = id(a, b);
                let (k, _) = self.local(dir, a, b);
                if a == 0 {
                    // inlet at p = 1
                    mat[(c, c)] += half(k);
                    rhs[(c, 0)] += half(k);
                }
                if a == n - 1 {
                    mat[(c, c)] += half(k);
                }
                if a + 1 < n {
                    let t = harm(k, self.local(dir, a + 1, b).0);
                    let d = id(a + 1, b);
                    mat[(c, c)] += t;
                    mat[(d, d)] += t;
                    mat[(c, d)] -= t;
                    mat[(d, c)] -= t;
                }
                if b + 1 < n {
                    let t = harm(self.local(dir, a, b).1, self.local(dir, a, b + 1).1);
                    let d = id(a, b + 1);
                    mat[(c, c)] += t;
                    mat[(d, d)] += t;
                    mat[(c, d)] -= t;
                    mat[(d, c)] -= t;
                }
            }
        }
        let llt = mat
            .llt(Side::Lower)
            .map_err(|e| Error::Upscaling(format!("local problem not SPD: {e:?}")))?;
        let p = llt.solve(&rhs);
        let q: f64 = (0..n)
            .map(|b| half(self.local(dir, n - 1, b).0) * p[(id(n - 1, b), 0)])
            .sum();
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(nx: usize, ny: usize, v: &[f64]) -> CellField {
        CellField::new(nx, ny, v.to_vec()).unwrap()
    }

    #[test]
    fn porosity_examples() {
        let c = upscale_porosity(&CellField::constant(4, 4, 0.2), 2).unwrap();
        assert!(c.values.iter().all(|v| (v - 0.2).abs() < 1e-15));
        let c = upscale_porosity(&field(2, 2, &[0.1, 0.1, 0.3, 0.3]), 2).unwrap();
        assert!((c.values[0] - 0.2).abs() < 1e-15);
        assert!(upscale_porosity(&CellField::constant(3, 4, 0.2), 2).is_err());
    }

    #[test]
    fn pore_volume_preserved() {
        let vals: Vec<f64> = (0..64).map(|i| 0.05 + 0.01 * (i % 7) as f64).collect();
        let f = field(8, 8, &vals);
        let c = upscale_porosity(&f, 4).unwrap();
        let fine: f64 = f.values.iter().sum();
        let coarse: f64 = c.values.iter().sum::<f64>() * 16.0;
        assert!((fine - coarse).abs() < 1e-12 * fine);
    }

    #[test]
    fn homogeneous_perm_is_preserved() {
        let k = CellField::constant(4, 4, 100.0);
        for dir in [Direction::X, Direction::Y] {
            let c = upscale_permeability(&k, &k, 4, dir, UpscaleMethod::FlowBased, Execution::Sequential).unwrap();
            assert!((c.values[0] - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn series_and_parallel_layers() {
        // left column 10 md, right column 1000 md
        let k = field(2, 2, &[10.0, 1000.0, 10.0, 1000.0]);
        let series = upscale_permeability(&k, &k, 2, Direction::X, UpscaleMethod::FlowBased, Execution::Sequential).unwrap();
        let parallel = upscale_permeability(&k, &k, 2, Direction::Y, UpscaleMethod::FlowBased, Execution::Sequential).unwrap();
        let harmonic = 2.0 / (1.0 / 10.0 + 1.0 / 1000.0);
        assert!((series.values[0] - harmonic).abs() < 1e-9, "{}", series.values[0]);
        assert!((series.values[0] - 19.80).abs() < 0.01);
        assert!((parallel.values[0] - 505.0).abs() < 1e-9, "{}", parallel.values[0]);
    }

    #[test]
    fn zero_perm_rejected() {
        let k = field(2, 2, &[0.0, 1.0, 1.0, 1.0]);
        assert!(upscale_permeability(&k, &k, 2, Direction::X, UpscaleMethod::FlowBased, Execution::Sequential).is_err());
    }

    #[test]
    fn rock_field_levels() {
        let fine = LevelRock {
            kx: CellField::constant(8, 4, 50.0),
            ky: CellField::constant(8, 4, 50.0),
            porosity: CellField::constant(8, 4, 0.25),
        };
        let rock = RockField::from_fine(fine, 2, UpscaleMethod::FlowBased, Execution::Sequential).unwrap();
        assert_eq!(rock.levels.len(), 3);
        assert_eq!((rock.level(0).kx.nx, rock.level(0).kx.ny), (2, 1));
        assert_eq!((rock.level(1).kx.nx, rock.level(1).kx.ny), (4, 2));
        assert!((rock.level(0).kx.values[0] - 50.0).abs() < 1e-9);
    }
}
