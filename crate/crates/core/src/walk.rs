//! Assembly of the walk transition matrix P = alpha*H + (1-alpha)*M over the
//! user-item bipartite graph, where M couples an identity block for users
//! with a stochasticity-adjusted item model block.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::sparse::{SparseMatrix, StochasticMatrix};

/// Node layout: users occupy indices `0..n_users`, items
/// `n_users..n_users+n_items`.
#[derive(Debug, Clone)]
pub struct RecWalkModel {
    pub p: StochasticMatrix,
    pub h: StochasticMatrix,
    pub m_i: StochasticMatrix,
    pub alpha: f64,
    pub n_users: usize,
    pub n_items: usize,
}

impl RecWalkModel {
    pub fn order(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn item_node(&self, item: usize) -> usize {
        self.n_users + item
    }
}

/// Connected-component labeling of the bipartite graph of R.
#[derive(Debug, Clone)]
pub struct ComponentLabels {
    /// Component id per node (users then items).
    pub labels: Vec<usize>,
    /// Size of each component.
    pub sizes: Vec<usize>,
}

impl ComponentLabels {
    pub fn is_connected(&self) -> bool {
        self.sizes.len() <= 1
    }
}

/// BFS labeling of the user-item bipartite graph.
pub fn check_connectivity(r: &SparseMatrix) -> ComponentLabels {
    let n_users = r.n_rows();
    let n_items = r.n_cols();
    let n = n_users + n_items;
    let mut labels = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        let comp = sizes.len();
        let mut size = 0;
        labels[start] = comp;
        queue.push_back(start);
        while let Some(node) = queue.pop_front() {
            size += 1;
            if node < n_users {
                for (j, _) in r.row(node) {
                    let other = n_users + j;
                    if labels[other] == usize::MAX {
                        labels[other] = comp;
                        queue.push_back(other);
                    }
                }
            } else {
                for (u, _) in r.col(node - n_users) {
                    if labels[u] == usize::MAX {
                        labels[u] = comp;
                        queue.push_back(u);
                    }
                }
            }
        }
        sizes.push(size);
    }
    ComponentLabels { labels, sizes }
}

/// Restricts a log's matrix to its largest connected component, returning the
/// reduced matrix plus the kept user and item indices (ascending).
pub fn giant_component(r: &SparseMatrix) -> (SparseMatrix, Vec<usize>, Vec<usize>) {
    let labels = check_connectivity(r);
    if labels.is_connected() {
        let users = (0..r.n_rows()).collect();
        let items = (0..r.n_cols()).collect();
        return (r.clone(), users, items);
    }
    let giant = labels
        .sizes
        .iter()
        .enumerate()
        .max_by_key(|&(c, &s)| (s, std::cmp::Reverse(c)))
        .map(|(c, _)| c)
        .unwrap();
    let n_users = r.n_rows();
    let users: Vec<usize> = (0..n_users).filter(|&u| labels.labels[u] == giant).collect();
    let items: Vec<usize> = (0..r.n_cols())
        .filter(|&i| labels.labels[n_users + i] == giant)
        .collect();
    let mut user_map = vec![usize::MAX; n_users];
    for (new, &old) in users.iter().enumerate() {
        user_map[old] = new;
    }
    let mut item_map = vec![usize::MAX; r.n_cols()];
    for (new, &old) in items.iter().enumerate() {
        item_map[old] = new;
    }
    let triplets: Vec<_> = r
        .triplets()
        .filter(|&(u, i, _)| user_map[u] != usize::MAX && item_map[i] != usize::MAX)
        .map(|(u, i, v)| (user_map[u], item_map[i], v))
        .collect();
    let reduced = SparseMatrix::from_triplets(users.len(), items.len(), &triplets)
        .expect("filtered triplets stay valid");
    (reduced, users, items)
}

/// Transition matrix of the simple random walk on the bipartite graph:
/// row u spreads 1/deg(u) over u's items, row for item i spreads 1/deg(i)
/// over i's users.
pub fn build_h(r: &SparseMatrix) -> Result<StochasticMatrix> {
    let n_users = r.n_rows();
    let n_items = r.n_cols();
    let mut triplets = Vec::with_capacity(2 * r.nnz());
    for u in 0..n_users {
        let deg = r.row_nnz(u);
        if deg == 0 {
            return Err(Error::ZeroRow(u));
        }
        let p = 1.0 / deg as f64;
        for (i, _) in r.row(u) {
            triplets.push((u, n_users + i, p));
        }
    }
    for i in 0..n_items {
        let deg = r.col_nnz(i);
        if deg == 0 {
            return Err(Error::ZeroColumn(i));
        }
        let p = 1.0 / deg as f64;
        for (u, _) in r.col(i) {
            triplets.push((n_users + i, u, p));
        }
    }
    let n = n_users + n_items;
    let h = SparseMatrix::from_triplets(n, n, &triplets).expect("bipartite triplets valid");
    StochasticMatrix::certify(h)
}

/// Turns a nonnegative item model into a row-stochastic matrix by scaling
/// with the maximum row sum and filling diagonal residuals, preserving the
/// relative order of off-diagonal weights.
pub fn stochasticity_adjust(w: &SparseMatrix) -> Result<StochasticMatrix> {
    let n = w.n_rows();
    let max_row_sum = (0..n).map(|i| w.row_sum(i)).fold(0.0f64, f64::max);
    if max_row_sum <= 0.0 {
        return Err(Error::EmptyModel);
    }
    let mut triplets = Vec::with_capacity(w.nnz() + n);
    for i in 0..n {
        let mut sum = 0.0;
        let mut diag = 0.0;
        for (j, v) in w.row(i) {
            let scaled = v / max_row_sum;
            if j == i {
                diag += scaled;
            } else {
                triplets.push((i, j, scaled));
            }
            sum += scaled;
        }
        // residual is nonnegative in exact arithmetic; clamp fp underflow
        let residual = (1.0 - sum).max(0.0) + diag;
        if residual > 0.0 {
            triplets.push((i, i, residual));
        }
    }
    let m = SparseMatrix::from_triplets(n, n, &triplets).expect("adjusted triplets valid");
    StochasticMatrix::certify(m)
}

/// Assembles the full walk model. M is never materialized: user rows take
/// alpha*H plus a (1-alpha) self-loop, item rows take alpha*H plus
/// (1-alpha) times the corresponding M_I row.
pub fn build_p(r: &SparseMatrix, w: &SparseMatrix, alpha: f64) -> Result<RecWalkModel> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if w.n_rows() != r.n_cols() || w.n_cols() != r.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: r.n_cols(),
            found: w.n_rows(),
        });
    }
    let labels = check_connectivity(r);
    if !labels.is_connected() {
        return Err(Error::DisconnectedGraph(labels.sizes));
    }
    let h = build_h(r)?;
    let m_i = stochasticity_adjust(w)?;

    let n_users = r.n_rows();
    let n_items = r.n_cols();
    let n = n_users + n_items;
    let mut triplets = Vec::with_capacity(h.matrix().nnz() + m_i.matrix().nnz() + n_users);
    for u in 0..n_users {
        for (j, v) in h.matrix().row(u) {
            triplets.push((u, j, alpha * v));
        }
        triplets.push((u, u, 1.0 - alpha));
    }
    for i in 0..n_items {
        let node = n_users + i;
        for (j, v) in h.matrix().row(node) {
            triplets.push((node, j, alpha * v));
        }
        for (j, v) in m_i.matrix().row(i) {
            triplets.push((node, n_users + j, (1.0 - alpha) * v));
        }
    }
    let p = SparseMatrix::from_triplets(n, n, &triplets)
        .expect("user rows hit user columns only via the self-loop; no collisions");
    let p = StochasticMatrix::certify(p)?;

    Ok(RecWalkModel {
        p,
        h,
        m_i,
        alpha,
        n_users,
        n_items,
    })
}

impl RecWalkModel {
    /// Serializes the model: a `RECWALK <U> <I> <alpha>` header followed by
    /// the sparsity of P as `row col weight` triples. H and M_I are
    /// recovered from P on load.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "RECWALK {} {} {} {}",
            self.n_users,
            self.n_items,
            self.alpha,
            self.p.matrix().nnz()
        )?;
        for (i, j, v) in self.p.matrix().triplets() {
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
        if parts.len() != 5 || parts[0] != "RECWALK" {
            return Err(Error::BadModelFile(format!("bad header {header:?}")));
        }
        let bad = |what: &str| Error::BadModelFile(format!("bad {what} in header"));
        let n_users: usize = parts[1].parse().map_err(|_| bad("user count"))?;
        let n_items: usize = parts[2].parse().map_err(|_| bad("item count"))?;
        let alpha: f64 = parts[3].parse().map_err(|_| bad("alpha"))?;
        let nnz: usize = parts[4].parse().map_err(|_| bad("nnz"))?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        let n = n_users + n_items;
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
            triplets.push((
                i.parse::<usize>().map_err(|_| bad("row"))?,
                j.parse::<usize>().map_err(|_| bad("col"))?,
                v.parse::<f64>().map_err(|_| bad("weight"))?,
            ));
        }
        if triplets.len() != nnz {
            return Err(Error::BadModelFile(format!(
                "expected {nnz} triples, found {}",
                triplets.len()
            )));
        }
        let p = SparseMatrix::from_triplets(n, n, &triplets)
            .map_err(|e| Error::BadModelFile(e.to_string()))?;
        let p = StochasticMatrix::certify(p)?;

        // recover H over the bipartite edges and M_I from the item block
        let mut h_triplets = Vec::new();
        let mut mi_triplets = Vec::new();
        for (i, j, v) in p.matrix().triplets() {
            let bipartite = (i < n_users) != (j < n_users);
            if bipartite {
                h_triplets.push((i, j, v / alpha));
            } else if i >= n_users && j >= n_users {
                mi_triplets.push((i - n_users, j - n_users, v / (1.0 - alpha)));
            } else if i == j {
                // user self-loop from the identity block; remove the alpha-free part
                // user rows of H have no diagonal, so nothing to record
            } else {
                return Err(Error::BadModelFile(format!(
                    "unexpected within-user entry at ({i}, {j})"
                )));
            }
        }
        // item rows of M_I may carry part of the diagonal inside p's item
        // block already; user diagonal entries belong to M's identity block.
        let h = SparseMatrix::from_triplets(n, n, &h_triplets)
            .map_err(|e| Error::BadModelFile(e.to_string()))?;
        let h = StochasticMatrix::certify(h)?;
        let m_i = SparseMatrix::from_triplets(n_items, n_items, &mi_triplets)
            .map_err(|e| Error::BadModelFile(e.to_string()))?;
        let m_i = StochasticMatrix::certify(m_i)?;

        Ok(RecWalkModel {
            p,
            h,
            m_i,
            alpha,
            n_users,
            n_items,
        })
    }
}
