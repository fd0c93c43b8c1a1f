//! Sparse linear solvers: LU factorization and ILU(0)-preconditioned
//! restarted GMRES.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use petgraph::algo::kosaraju_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearBackend {
    #[default]
    Direct,
    #[serde(alias = "gmres")]
    GmresIlu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearConfig {
    pub backend: LinearBackend,
    pub restart: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Only level 0 is supported.
    pub fill_level: usize,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            backend: LinearBackend::Direct,
            restart: 200,
            max_iters: 5000,
            tol: 1e-8,
            fill_level: 0,
        }
    }
}

impl LinearConfig {
    pub fn gmres() -> Self {
        Self {
            backend: LinearBackend::GmresIlu,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::config("solver.linear.tol", "must be > 0"));
        }
        if self.restart == 0 {
            return Err(Error::config("solver.linear.restart", "must be >= 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("solver.linear.max_iters", "must be >= 1"));
        }
        if self.fill_level != 0 {
            return Err(Error::config("solver.linear.fill_level", "only ILU(0) is available"));
        }
        Ok(())
    }
}

/// Solves `a x = b`; returns the solution and the iteration count (1 per
/// block for the direct backend).
///
/// The matrix is first split into the diagonal blocks of its block
/// lower-triangular form (strongly connected components of its graph).
/// Space-time systems decompose along time this way; each block is then
/// solved by the chosen backend with the already known values moved to
/// the right-hand side.
pub fn linear_solve(a: &CsrMatrix, b: &[f64], cfg: &LinearConfig) -> Result<(Vec<f64>, usize)> {
    if a.nrows != a.ncols || a.nrows != b.len() {
        return Err(Error::DofMismatch {
            expected: a.nrows,
            got: b.len(),
        });
    }
    let blocks = triangular_blocks(a);
    if blocks.len() <= 1 {
        return solve_block(a, b, cfg);
    }
    let n = a.nrows;
    let mut x = vec![0.0; n];
    let mut block_of = vec![usize::MAX; n];
    let mut local = vec![0usize; n];
    let mut total = 0;
    for (bid, blk) in blocks.iter().enumerate() {
        for (k, &i) in blk.iter().enumerate() {
            block_of[i] = bid;
            local[i] = k;
        }
        let mut rows = Vec::with_capacity(blk.len());
        let mut rhs = Vec::with_capacity(blk.len());
        for &i in blk {
            let (cols, vals) = a.row(i);
            let mut r = b[i];
            let mut row = Vec::with_capacity(cols.len());
            for (&j, &v) in cols.iter().zip(vals) {
                if block_of[j] == bid {
                    row.push((local[j], v));
                } else {
                    r -= v * x[j];
                }
            }
            rows.push(row);
            rhs.push(r);
        }
        let sub = CsrMatrix::from_rows(blk.len(), rows);
        let (xb, its) = if blk.len() == 1 {
            let d = sub.get(0, 0);
            if d == 0.0 {
                return Err(Error::Singular(format!("zero diagonal in row {}", blk[0])));
            }
            (vec![rhs[0] / d], 1)
        } else {
            solve_block(&sub, &rhs, cfg)?
        };
        total += its;
        for (k, &i) in blk.iter().enumerate() {
            x[i] = xb[k];
        }
    }
    Ok((x, total))
}

fn solve_block(a: &CsrMatrix, b: &[f64], cfg: &LinearConfig) -> Result<(Vec<f64>, usize)> {
    match cfg.backend {
        LinearBackend::Direct => direct_solve(a, b).map(|x| (x, 1)),
        LinearBackend::GmresIlu => {
            let ilu = Ilu0::new(a)?;
            gmres(a, b, &ilu, cfg)
        }
    }
}

/// Diagonal blocks of a symmetric permutation to block lower-triangular
/// form, in an order where every block depends only on earlier ones.
pub fn triangular_blocks(a: &CsrMatrix) -> Vec<Vec<usize>> {
    let mut g = DiGraph::<(), (), u32>::with_capacity(a.nrows, a.nnz());
    for _ in 0..a.nrows {
        g.add_node(());
    }
    for i in 0..a.nrows {
        for &j in a.row(i).0 {
            if j != i {
                g.add_edge(NodeIndex::new(i), NodeIndex::new(j), ());
            }
        }
    }
    // post-order of i -> j (row i uses x_j): dependencies come first
    kosaraju_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect()
}

pub fn direct_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.nrows;
    if n == 0 {
        return Ok(Vec::new());
    }
    let triplets: Vec<Triplet<usize, usize, f64>> = a.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::Singular(format!("matrix construction failed: {e:?}")))?;
    let lu = m.sp_lu().map_err(|e| Error::Singular(format!("{e:?}")))?;
    let mut rhs = Col::<f64>::from_fn(n, |i| b[i]);
    lu.solve_in_place(rhs.as_mat_mut());
    let x: Vec<f64> = (0..n).map(|i| rhs[i]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("zero pivot in LU factorization".into()));
    }
    Ok(x)
}

/// Incomplete LU factorization restricted to the pattern of the matrix.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows;
        // make sure every diagonal is stored
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let (c, v) = a.row(i);
                let mut r: Vec<(usize, f64)> = c.iter().copied().zip(v.iter().copied()).collect();
                if c.binary_search(&i).is_err() {
                    r.push((i, 0.0));
                }
                r
            })
            .collect();
        let mut lu = CsrMatrix::from_rows(n, rows);
        let diag: Vec<usize> = (0..n)
            .map(|i| lu.row_ptr[i] + lu.row(i).0.binary_search(&i).expect("diagonal inserted"))
            .collect();
        let scale = lu.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for kk in start..end {
                let k = lu.col_idx[kk];
                if k >= i {
                    break;
                }
                let pivot = lu.values[diag[k]];
                let lik = lu.values[kk] / pivot;
                lu.values[kk] = lik;
                // row i -= lik * row k (upper part), restricted to pattern
                let (ks, ke) = (diag[k] + 1, lu.row_ptr[k + 1]);
                let mut p = kk + 1;
                for q in ks..ke {
                    let j = lu.col_idx[q];
                    while p < end && lu.col_idx[p] < j {
                        p += 1;
                    }
                    if p < end && lu.col_idx[p] == j {
                        lu.values[p] -= lik * lu.values[q];
                    }
                }
            }
            if lu.values[diag[i]].abs() <= 1e-14 * scale {
                let v = lu.values[diag[i]];
                lu.values[diag[i]] = if v < 0.0 { -1e-14 * scale } else { 1e-14 * scale };
            }
            if !lu.values[diag[i]].is_finite() {
                return Err(Error::Singular(format!("ILU(0) breakdown at row {i}")));
            }
        }
        Ok(Self { lu, diag })
    }

    /// `z = (LU)⁻¹ r`
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let mut s = r[i];
            for q in self.lu.row_ptr[i]..self.diag[i] {
                s -= self.lu.values[q] * z[self.lu.col_idx[q]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for q in self.diag[i] + 1..self.lu.row_ptr[i + 1] {
                s -= self.lu.values[q] * z[self.lu.col_idx[q]];
            }
            z[i] = s / self.lu.values[self.diag[i]];
        }
    }
}

/// Right-preconditioned restarted GMRES from a zero initial guess. Stops
/// when `‖b − a x‖ ≤ tol ‖b‖`.
pub fn gmres(a: &CsrMatrix, b: &[f64], m: &Ilu0, cfg: &LinearConfig) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let target = cfg.tol * bnorm;
    let k = cfg.restart.min(n.max(1));
    let mut total = 0;
    let mut r = b.to_vec();
    let mut beta = bnorm;
    let mut tmp = vec![0.0; n];
    while total < cfg.max_iters {
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut h = vec![vec![0.0; k]; k + 1];
        let mut cs = vec![0.0; k];
        let mut sn = vec![0.0; k];
        let mut g = vec![0.0; k + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..k {
            let mut zj = vec![0.0; n];
            m.apply(&v[j], &mut zj);
            a.mul_vec_into(&zj, &mut tmp);
            z.push(zj);
            let mut w = tmp.clone();
            for (i, vi) in v.iter().enumerate() {
                h[i][j] = dot(&w, vi);
                for (wl, vl) in w.iter_mut().zip(vi) {
                    *wl -= h[i][j] * vl;
                }
            }
            let wn = norm2(&w);
            h[j + 1][j] = wn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            if d == 0.0 {
                break;
            }
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            if g[j + 1].abs() <= target || total >= cfg.max_iters || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wi| wi / wn).collect());
        }
        // back-substitute the small triangular system
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for l in i + 1..used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            for (xl, zl) in x.iter_mut().zip(zi) {
                *xl += yi * zl;
            }
        }
        a.mul_vec_into(&x, &mut tmp);
        for i in 0..n {
            r[i] = b[i] - tmp[i];
        }
        beta = norm2(&r);
        if !beta.is_finite() {
            return Err(Error::Singular("GMRES produced a non-finite residual".into()));
        }
        if beta <= target {
            return Ok((x, total));
        }
        if used == 0 {
            break;
        }
    }
    Err(Error::LinearNotConverged {
        iterations: total,
        residual: beta / bnorm,
    })
}
