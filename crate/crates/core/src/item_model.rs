//! Neighborhood-restricted sparse item model: per item, select the C closest
//! columns of R by cosine similarity and solve a nonnegative elastic-net
//! subproblem by cyclic coordinate descent.

use std::io::{BufRead, Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Neighborhood size, either an absolute count or a percentage of the
/// itemspace (resolved as `ceil(percent/100 * I)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeighborhoodSize {
    Count(usize),
    Percent(f64),
}

impl NeighborhoodSize {
    pub fn resolve(&self, n_items: usize) -> usize {
        let c = match *self {
            NeighborhoodSize::Count(c) => c,
            NeighborhoodSize::Percent(p) => (p / 100.0 * n_items as f64).ceil() as usize,
        };
        c.max(1)
    }
}

/// The C nearest neighbors of one item, similarities non-increasing.
#[derive(Debug, Clone)]
pub struct NeighborSet {
    pub item: usize,
    pub neighbors: Vec<usize>,
    pub similarities: Vec<f64>,
}

/// Per-column solver outcome.
#[derive(Debug, Clone, Copy)]
pub struct ColumnFit {
    pub sweeps: usize,
    pub objective: f64,
    pub converged: bool,
}

/// Sparse nonnegative item-to-item weight matrix with zero diagonal, one
/// learned column per item.
#[derive(Debug, Clone)]
pub struct ItemModel {
    pub w: SparseMatrix,
    pub c: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub fit_stats: Vec<ColumnFit>,
}

/// Solver knobs for the per-column subproblem.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-6,
            max_sweeps: 1000,
        }
    }
}

/// Finds the `c` items closest to item `i` by column cosine similarity.
/// Ties break by ascending item index; zero-similarity items pad the set only
/// when fewer than `c` positive-similarity items exist.
pub fn top_c_neighbors(r: &SparseMatrix, i: usize, c: usize) -> Result<NeighborSet> {
    let n_items = r.n_cols();
    if r.col_nnz(i) == 0 {
        return Err(Error::ZeroColumn(i));
    }
    let norm_i = r.col_norm(i);

    // accumulate dot products against every overlapping column
    let mut dots = vec![0.0f64; n_items];
    for (u, v) in r.col(i) {
        for (j, w) in r.row(u) {
            dots[j] += v * w;
        }
    }

    let mut scored: Vec<(usize, f64)> = dots
        .iter()
        .enumerate()
        .filter(|&(j, &d)| j != i && d > 0.0)
        .map(|(j, &d)| (j, d / (norm_i * r.col_norm(j))))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let want = c.min(n_items - 1);
    let mut neighbors: Vec<usize> = Vec::with_capacity(want);
    let mut similarities: Vec<f64> = Vec::with_capacity(want);
    for (j, s) in scored.into_iter().take(want) {
        neighbors.push(j);
        similarities.push(s);
    }
    if neighbors.len() < want {
        // pad with zero-similarity items, ascending index
        let mut taken: Vec<bool> = vec![false; n_items];
        taken[i] = true;
        for &j in &neighbors {
            taken[j] = true;
        }
        for j in 0..n_items {
            if neighbors.len() == want {
                break;
            }
            if !taken[j] {
                neighbors.push(j);
                similarities.push(0.0);
            }
        }
    }

    Ok(NeighborSet {
        item: i,
        neighbors,
        similarities,
    })
}

/// Cyclic coordinate descent on the Gram form of the nonnegative elastic-net
/// subproblem
///
///   min_x >= 0  1/2 x'Gx - b'x + 1/2 rr + g1 ||x||_1 + g2/2 ||x||^2
///
/// where `G = N'N`, `b = N'r` and `rr = r'r`. Warm-starts at zero; converges
/// when the largest coordinate change within a sweep drops below `tol`.
pub fn coordinate_descent_gram(
    gram: &[Vec<f64>],
    b: &[f64],
    rr: f64,
    gamma1: f64,
    gamma2: f64,
    opts: FitOptions,
) -> (Vec<f64>, ColumnFit) {
    let c = b.len();
    let mut x = vec![0.0f64; c];
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for j in 0..c {
            let denom = gram[j][j] + gamma2;
            if denom <= 0.0 {
                continue;
            }
            let mut gx = 0.0;
            for k in 0..c {
                if k != j {
                    gx += gram[j][k] * x[k];
                }
            }
            let new = ((b[j] - gx - gamma1) / denom).max(0.0);
            let delta = (new - x[j]).abs();
            if delta > max_delta {
                max_delta = delta;
            }
            x[j] = new;
        }
        if max_delta < opts.tol {
            converged = true;
            break;
        }
    }
    let objective = gram_objective(gram, b, rr, gamma1, gamma2, &x);
    (
        x,
        ColumnFit {
            sweeps,
            objective,
            converged,
        },
    )
}

/// Objective value of the Gram-form subproblem at `x`.
pub fn gram_objective(
    gram: &[Vec<f64>],
    b: &[f64],
    rr: f64,
    gamma1: f64,
    gamma2: f64,
    x: &[f64],
) -> f64 {
    let c = x.len();
    let mut quad = 0.0;
    for j in 0..c {
        for k in 0..c {
            quad += x[j] * gram[j][k] * x[k];
        }
    }
    let lin: f64 = b.iter().zip(x).map(|(bj, xj)| bj * xj).sum();
    let l1: f64 = x.iter().sum();
    let l2: f64 = x.iter().map(|v| v * v).sum();
    0.5 * quad - lin + 0.5 * rr + gamma1 * l1 + 0.5 * gamma2 * l2
}

/// Maximum violation of the coordinate-wise optimality conditions at `x`:
/// for x_j > 0 the stationarity residual, for x_j = 0 the positive part of
/// the descent direction.
pub fn kkt_residual(
    gram: &[Vec<f64>],
    b: &[f64],
    gamma1: f64,
    gamma2: f64,
    x: &[f64],
) -> f64 {
    let c = x.len();
    let mut worst = 0.0f64;
    for j in 0..c {
        let mut gx = 0.0;
        for k in 0..c {
            gx += gram[j][k] * x[k];
        }
        // gradient of the smooth part: Gx - b + g2 x; subgradient adds g1
        let grad = gx - b[j] + gamma2 * x[j] + gamma1;
        let violation = if x[j] > 0.0 { grad.abs() } else { (-grad).max(0.0) };
        if violation > worst {
            worst = violation;
        }
    }
    worst
}

/// Fits one column given the target column and the selected neighbor columns
/// as dense vectors. Dense entry point used directly by tests and small
/// problems; [`build_item_model`] assembles the same Gram system sparsely.
pub fn fit_column(
    r_i: &[f64],
    neighbor_cols: &[Vec<f64>],
    gamma1: f64,
    gamma2: f64,
    opts: FitOptions,
) -> (Vec<f64>, ColumnFit) {
    let c = neighbor_cols.len();
    let mut gram = vec![vec![0.0; c]; c];
    let mut b = vec![0.0; c];
    for a in 0..c {
        b[a] = dot(&neighbor_cols[a], r_i);
        for bb in a..c {
            let g = dot(&neighbor_cols[a], &neighbor_cols[bb]);
            gram[a][bb] = g;
            gram[bb][a] = g;
        }
    }
    let rr = dot(r_i, r_i);
    coordinate_descent_gram(&gram, &b, rr, gamma1, gamma2, opts)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Learns the full item model: per item, neighbor selection plus the
/// nonnegative elastic-net solve, run in parallel over columns. The result is
/// independent of the parallel schedule.
pub fn build_item_model(
    r: &SparseMatrix,
    c: NeighborhoodSize,
    gamma1: f64,
    gamma2: f64,
    opts: FitOptions,
) -> Result<ItemModel> {
    let n_items = r.n_cols();
    let c_resolved = c.resolve(n_items);
    for j in 0..n_items {
        if r.col_nnz(j) == 0 {
            return Err(Error::ZeroColumn(j));
        }
    }

    let columns: Vec<(Vec<(usize, f64)>, ColumnFit)> = (0..n_items)
        .into_par_iter()
        .map(|i| {
            let nbrs = top_c_neighbors(r, i, c_resolved)
                .expect("columns checked nonzero above");
            let k = nbrs.neighbors.len();
            let mut gram = vec![vec![0.0; k]; k];
            let mut b = vec![0.0; k];
            for a in 0..k {
                b[a] = r.col_dot(nbrs.neighbors[a], i);
                for bb in a..k {
                    let g = r.col_dot(nbrs.neighbors[a], nbrs.neighbors[bb]);
                    gram[a][bb] = g;
                    gram[bb][a] = g;
                }
            }
            let rr = r.col_dot(i, i);
            let (x, fit) = coordinate_descent_gram(&gram, &b, rr, gamma1, gamma2, opts);
            let entries: Vec<(usize, f64)> = nbrs
                .neighbors
                .iter()
                .zip(&x)
                .filter(|&(_, &w)| w > 0.0)
                .map(|(&j, &w)| (j, w))
                .collect();
            (entries, fit)
        })
        .collect();

    let mut triplets = Vec::new();
    let mut fit_stats = Vec::with_capacity(n_items);
    for (i, (entries, fit)) in columns.into_iter().enumerate() {
        for (j, w) in entries {
            triplets.push((j, i, w));
        }
        fit_stats.push(fit);
    }
    let w = SparseMatrix::from_triplets(n_items, n_items, &triplets)
        .expect("fit weights are nonnegative and unique per (neighbor, item)");

    Ok(ItemModel {
        w,
        c: c_resolved,
        gamma1,
        gamma2,
        fit_stats,
    })
}

const BINARY_MAGIC: &[u8; 8] = b"RWITEMW1";

impl ItemModel {
    /// Text serialization: header `W <I> <nnz> <C> <g1> <g2>` then one
    /// `row col weight` triple per line. Floats print in shortest
    /// round-trip form, so read-back is lossless.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "W {} {} {} {} {}",
            self.w.n_rows(),
            self.w.nnz(),
            self.c,
            self.gamma1,
            self.gamma2
        )?;
        for (i, j, v) in self.w.triplets() {
            writeln!(out, "{i} {j} {v}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        // leading '#' lines carry provenance metadata and are ignored
        let mut lines = reader
            .lines()
            .filter(|l| !matches!(l, Ok(s) if s.trim_start().starts_with('#')));
        let header = lines
            .next()
            .ok_or_else(|| Error::BadModelFile("empty file".into()))??;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 6 || parts[0] != "W" {
            return Err(Error::BadModelFile(format!("bad header {header:?}")));
        }
        let bad = |what: &str| Error::BadModelFile(format!("bad {what} in header"));
        let n: usize = parts[1].parse().map_err(|_| bad("order"))?;
        let nnz: usize = parts[2].parse().map_err(|_| bad("nnz"))?;
        let c: usize = parts[3].parse().map_err(|_| bad("C"))?;
        let gamma1: f64 = parts[4].parse().map_err(|_| bad("gamma1"))?;
        let gamma2: f64 = parts[5].parse().map_err(|_| bad("gamma2"))?;
        let mut triplets = Vec::with_capacity(nnz);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            let (Some(i), Some(j), Some(v), None) = (f.next(), f.next(), f.next(), f.next())
            else {
                return Err(Error::BadModelFile(format!("bad triple {line:?}")));
            };
            let i: usize = i.parse().map_err(|_| bad("row"))?;
            let j: usize = j.parse().map_err(|_| bad("col"))?;
            let v: f64 = v.parse().map_err(|_| bad("weight"))?;
            triplets.push((i, j, v));
        }
        if triplets.len() != nnz {
            return Err(Error::BadModelFile(format!(
                "expected {nnz} triples, found {}",
                triplets.len()
            )));
        }
        let w = SparseMatrix::from_triplets(n, n, &triplets)
            .map_err(|e| Error::BadModelFile(e.to_string()))?;
        Ok(ItemModel {
            w,
            c,
            gamma1,
            gamma2,
            fit_stats: Vec::new(),
        })
    }

    /// Compact binary form: magic, little-endian u64 header fields, then
    /// (u64 row, u64 col, f64 bits) per entry. Bit-exact round-trip.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(BINARY_MAGIC)?;
        for v in [self.w.n_rows() as u64, self.w.nnz() as u64, self.c as u64] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.gamma1.to_le_bytes())?;
        out.write_all(&self.gamma2.to_le_bytes())?;
        for (i, j, v) in self.w.triplets() {
            out.write_all(&(i as u64).to_le_bytes())?;
            out.write_all(&(j as u64).to_le_bytes())?;
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut reader: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::BadModelFile("bad magic".into()));
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let n = read_u64(&mut reader)? as usize;
        let nnz = read_u64(&mut reader)? as usize;
        let c = read_u64(&mut reader)? as usize;
        let gamma1 = f64::from_le_bytes({
            let mut b = [0u8; 8];
            reader.read_exact(&mut b)?;
            b
        });
        let gamma2 = f64::from_le_bytes({
            let mut b = [0u8; 8];
            reader.read_exact(&mut b)?;
            b
        });
        let mut triplets = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let mut b = [0u8; 8];
            reader.read_exact(&mut b)?;
            let i = u64::from_le_bytes(b) as usize;
            reader.read_exact(&mut b)?;
            let j = u64::from_le_bytes(b) as usize;
            reader.read_exact(&mut b)?;
            let v = f64::from_le_bytes(b);
            triplets.push((i, j, v));
        }
        let w = SparseMatrix::from_triplets(n, n, &triplets)
            .map_err(|e| Error::BadModelFile(e.to_string()))?;
        Ok(ItemModel {
            w,
            c,
            gamma1,
            gamma2,
            fit_stats: Vec::new(),
        })
    }
}
