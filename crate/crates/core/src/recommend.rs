//! Per-user scoring: K-step and restart-based walks on the full model, the
//! item-graph baselines, direct item-model scoring, and candidate ranking.

use crate::error::{Error, Result};
use crate::sparse::{row_normalize, vec_mat, DenseVector, SparseMatrix, StochasticMatrix};
use crate::walk::RecWalkModel;

/// Scoring strategy and its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// K-step landing probabilities on the full walk matrix P.
    KStep { k: usize },
    /// Random walk with restarts on P, teleporting to the user node.
    PageRank { eta: f64, tol: f64 },
    /// K-step walk on the row-normalized item graph S, from the user's
    /// normalized history.
    Srw { k: usize },
    /// Personalized PageRank on S with teleport distribution phi_u.
    PrBase { p: f64, tol: f64 },
    /// Direct item-model scoring r_u' W.
    Base,
    /// K-step walk on the stochasticity-adjusted item block M_I.
    KStepMi { k: usize },
    /// Personalized PageRank on M_I.
    PrMi { p: f64, tol: f64 },
}

impl Strategy {
    pub fn tag(&self) -> &'static str {
        match self {
            Strategy::KStep { .. } => "kstep",
            Strategy::PageRank { .. } => "pr",
            Strategy::Srw { .. } => "srw",
            Strategy::PrBase { .. } => "pr-base",
            Strategy::Base => "base",
            Strategy::KStepMi { .. } => "kstep-mi",
            Strategy::PrMi { .. } => "pr-mi",
        }
    }
}

/// One user's score vector. Walk strategies score all U+I nodes; item-level
/// strategies score the I items directly.
#[derive(Debug, Clone)]
pub struct Recommendation {
    pub user: usize,
    pub scores: DenseVector,
    pub strategy: Strategy,
}

fn power_steps(s: &StochasticMatrix, start: DenseVector, k: usize) -> Result<DenseVector> {
    let mut x = start;
    for _ in 0..k {
        x = vec_mat(&x, s)?;
    }
    Ok(x)
}

/// Power iteration for x' = damping * x' S + (1 - damping) * teleport', with
/// per-step 1-norm renormalization, stopping once successive iterates differ
/// by less than `tol` in 1-norm.
fn restart_walk(
    s: &StochasticMatrix,
    teleport: &DenseVector,
    damping: f64,
    tol: f64,
) -> Result<DenseVector> {
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::DampingOutOfRange(damping));
    }
    // geometric convergence at rate `damping`, doubled as safety margin
    let cap = (2.0 * (tol.ln() / damping.ln()).ceil()).max(0.0) as usize + 16;
    let mut x = teleport.clone();
    for _ in 0..cap {
        let mut next = vec_mat(&x, s)?.into_vec();
        for (n, t) in next.iter_mut().zip(teleport.as_slice()) {
            *n = damping * *n + (1.0 - damping) * t;
        }
        let mut next = DenseVector::new(next);
        next.normalize_l1();
        let delta = next.l1_distance(&x);
        x = next;
        if delta < tol {
            return Ok(x);
        }
    }
    Err(Error::NotConverged(cap))
}

/// Landing distribution after exactly K steps of the full walk, started at
/// the user's node. Costs K sparse vector-matrix products.
pub fn kstep(model: &RecWalkModel, user: usize, k: usize) -> Result<Recommendation> {
    if user >= model.n_users {
        return Err(Error::IndexOutOfRange {
            index: user,
            bound: model.n_users,
        });
    }
    let start = DenseVector::basis(model.order(), user);
    let scores = power_steps(&model.p, start, k)?;
    Ok(Recommendation {
        user,
        scores,
        strategy: Strategy::KStep { k },
    })
}

/// Stationary distribution of the restart walk on P with damping `eta` and
/// teleportation to the user's node.
pub fn pagerank(model: &RecWalkModel, user: usize, eta: f64, tol: f64) -> Result<Recommendation> {
    if user >= model.n_users {
        return Err(Error::IndexOutOfRange {
            index: user,
            bound: model.n_users,
        });
    }
    let teleport = DenseVector::basis(model.order(), user);
    let scores = restart_walk(&model.p, &teleport, eta, tol)?;
    Ok(Recommendation {
        user,
        scores,
        strategy: Strategy::PageRank { eta, tol },
    })
}

/// Normalized interaction history phi_u = r_u / ||r_u||_1 over the items.
pub fn user_history_distribution(r: &SparseMatrix, user: usize) -> Result<DenseVector> {
    if user >= r.n_rows() {
        return Err(Error::IndexOutOfRange {
            index: user,
            bound: r.n_rows(),
        });
    }
    if r.row_nnz(user) == 0 {
        return Err(Error::ZeroHistory(user));
    }
    let mut phi = vec![0.0; r.n_cols()];
    for (j, v) in r.row(user) {
        phi[j] = v;
    }
    let mut phi = DenseVector::new(phi);
    phi.normalize_l1();
    Ok(phi)
}

/// K-step landing probabilities of a simple walk on an item-graph transition
/// matrix, rooted at phi_u.
pub fn srw_baseline(
    s: &StochasticMatrix,
    phi_u: &DenseVector,
    user: usize,
    k: usize,
) -> Result<Recommendation> {
    let scores = power_steps(s, phi_u.clone(), k)?;
    Ok(Recommendation {
        user,
        scores,
        strategy: Strategy::Srw { k },
    })
}

/// Personalized PageRank on an item-graph transition matrix with teleport
/// phi_u and damping p.
pub fn pr_baseline(
    s: &StochasticMatrix,
    phi_u: &DenseVector,
    user: usize,
    p: f64,
    tol: f64,
) -> Result<Recommendation> {
    let scores = restart_walk(s, phi_u, p, tol)?;
    Ok(Recommendation {
        user,
        scores,
        strategy: Strategy::PrBase { p, tol },
    })
}

/// Standard item-based scoring r_u' W over a raw (not necessarily
/// stochastic) item weight matrix.
pub fn base_model_scores(
    w: &SparseMatrix,
    r: &SparseMatrix,
    user: usize,
) -> Result<Recommendation> {
    if r.row_nnz(user) == 0 {
        return Err(Error::ZeroHistory(user));
    }
    let mut r_u = vec![0.0; r.n_cols()];
    for (j, v) in r.row(user) {
        r_u[j] = v;
    }
    let scores = DenseVector::new(w.vec_mul(&r_u)?);
    Ok(Recommendation {
        user,
        scores,
        strategy: Strategy::Base,
    })
}

/// Ranks candidate items by descending score, ties broken by ascending item
/// index. Returns (item, 1-based rank) in ranked order.
pub fn rank_candidates(item_scores: &[f64], candidates: &[usize]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = candidates.to_vec();
    order.sort_by(|&a, &b| {
        item_scores[b]
            .partial_cmp(&item_scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .enumerate()
        .map(|(pos, item)| (item, pos + 1))
        .collect()
}

/// Anything that can produce a per-user score vector over the itemspace.
pub trait ItemScorer: Sync {
    fn n_items(&self) -> usize;
    fn item_scores(&self, user: usize) -> Result<Vec<f64>>;
}

/// Bundles the trained artifacts a [`Strategy`] needs and exposes uniform
/// itemspace scoring for evaluation and the CLI.
pub struct StrategyScorer<'a> {
    strategy: Strategy,
    r_train: &'a SparseMatrix,
    walk: Option<&'a RecWalkModel>,
    w: Option<&'a SparseMatrix>,
    /// Row-normalized item graph, built once when the strategy needs it.
    s: Option<StochasticMatrix>,
    /// Stochasticity-adjusted item block for the M_I variants.
    m_i: Option<StochasticMatrix>,
}

impl<'a> StrategyScorer<'a> {
    pub fn new(
        strategy: Strategy,
        r_train: &'a SparseMatrix,
        walk: Option<&'a RecWalkModel>,
        w: Option<&'a SparseMatrix>,
    ) -> Result<Self> {
        let mut scorer = StrategyScorer {
            strategy,
            r_train,
            walk,
            w,
            s: None,
            m_i: None,
        };
        match strategy {
            Strategy::KStep { .. } | Strategy::PageRank { .. } => {
                if walk.is_none() {
                    return Err(Error::BadModelFile(
                        "walk strategies require a walk model".into(),
                    ));
                }
            }
            Strategy::Srw { .. } | Strategy::PrBase { .. } => {
                let w = w.ok_or_else(|| {
                    Error::BadModelFile("item-graph strategies require an item model".into())
                })?;
                scorer.s = Some(row_normalize(w)?);
            }
            Strategy::KStepMi { .. } | Strategy::PrMi { .. } => {
                if let Some(model) = walk {
                    scorer.m_i = Some(model.m_i.clone());
                } else {
                    let w = w.ok_or_else(|| {
                        Error::BadModelFile("M_I strategies require an item model".into())
                    })?;
                    scorer.m_i = Some(crate::walk::stochasticity_adjust(w)?);
                }
            }
            Strategy::Base => {
                if w.is_none() {
                    return Err(Error::BadModelFile(
                        "base strategy requires an item model".into(),
                    ));
                }
            }
        }
        Ok(scorer)
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }
}

impl ItemScorer for StrategyScorer<'_> {
    fn n_items(&self) -> usize {
        self.r_train.n_cols()
    }

    fn item_scores(&self, user: usize) -> Result<Vec<f64>> {
        match self.strategy {
            Strategy::KStep { k } => {
                let model = self.walk.expect("checked in new");
                let rec = kstep(model, user, k)?;
                Ok(rec.scores.as_slice()[model.n_users..].to_vec())
            }
            Strategy::PageRank { eta, tol } => {
                let model = self.walk.expect("checked in new");
                let rec = pagerank(model, user, eta, tol)?;
                Ok(rec.scores.as_slice()[model.n_users..].to_vec())
            }
            Strategy::Srw { k } => {
                let phi = user_history_distribution(self.r_train, user)?;
                let rec = srw_baseline(self.s.as_ref().unwrap(), &phi, user, k)?;
                Ok(rec.scores.into_vec())
            }
            Strategy::PrBase { p, tol } => {
                let phi = user_history_distribution(self.r_train, user)?;
                let rec = pr_baseline(self.s.as_ref().unwrap(), &phi, user, p, tol)?;
                Ok(rec.scores.into_vec())
            }
            Strategy::Base => {
                let rec = base_model_scores(self.w.expect("checked in new"), self.r_train, user)?;
                Ok(rec.scores.into_vec())
            }
            Strategy::KStepMi { k } => {
                let phi = user_history_distribution(self.r_train, user)?;
                let rec = srw_baseline(self.m_i.as_ref().unwrap(), &phi, user, k)?;
                Ok(rec.scores.into_vec())
            }
            Strategy::PrMi { p, tol } => {
                let phi = user_history_distribution(self.r_train, user)?;
                let rec = pr_baseline(self.m_i.as_ref().unwrap(), &phi, user, p, tol)?;
                Ok(rec.scores.into_vec())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::build_p;

    fn binary(n_rows: usize, n_cols: usize, pairs: &[(usize, usize)]) -> SparseMatrix {
        let t: Vec<_> = pairs.iter().map(|&(u, i)| (u, i, 1.0)).collect();
        SparseMatrix::from_triplets(n_rows, n_cols, &t).unwrap()
    }

    fn toy_model(alpha: f64) -> RecWalkModel {
        let r = binary(
            3,
            4,
            &[(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3), (0, 3)],
        );
        let w = SparseMatrix::from_triplets(
            4,
            4,
            &[(0, 1, 0.5), (1, 0, 0.3), (1, 2, 0.4), (2, 3, 1.0), (3, 2, 0.2)],
        )
        .unwrap();
        build_p(&r, &w, alpha).unwrap()
    }

    fn dense_vec_mat(x: &[f64], a: &[Vec<f64>]) -> Vec<f64> {
        let n = a[0].len();
        let mut out = vec![0.0; n];
        for (i, &xi) in x.iter().enumerate() {
            for j in 0..n {
                out[j] += xi * a[i][j];
            }
        }
        out
    }

    #[test]
    fn zero_steps_returns_point_mass() {
        let model = toy_model(0.2);
        let rec = kstep(&model, 1, 0).unwrap();
        let mut expected = vec![0.0; model.order()];
        expected[1] = 1.0;
        assert_eq!(rec.scores.as_slice(), expected.as_slice());
    }

    #[test]
    fn one_step_single_edge_model() {
        let r = binary(1, 1, &[(0, 0)]);
        let w = SparseMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]).unwrap();
        let model = build_p(&r, &w, 0.3).unwrap();
        let rec = kstep(&model, 0, 1).unwrap();
        assert!((rec.scores[0] - 0.7).abs() < 1e-15);
        assert!((rec.scores[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn kstep_matches_dense_power_oracle() {
        let model = toy_model(0.15);
        let dense = model.p.matrix().to_dense();
        for u in 0..model.n_users {
            let mut x = vec![0.0; model.order()];
            x[u] = 1.0;
            for _ in 0..5 {
                x = dense_vec_mat(&x, &dense);
            }
            let rec = kstep(&model, u, 5).unwrap();
            for (a, b) in rec.scores.as_slice().iter().zip(&x) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn kstep_one_equals_matrix_row() {
        let model = toy_model(0.4);
        let rec = kstep(&model, 2, 1).unwrap();
        for j in 0..model.order() {
            assert!((rec.scores[j] - model.p.matrix().get(2, j)).abs() < 1e-15);
        }
    }

    #[test]
    fn kstep_output_is_distribution() {
        let model = toy_model(0.05);
        for k in [0, 1, 3, 10, 40] {
            let rec = kstep(&model, 0, k).unwrap();
            let sum: f64 = rec.scores.as_slice().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-10, "k={k} sum={sum}");
            assert!(rec.scores.as_slice().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn pagerank_small_eta_stays_near_teleport() {
        let model = toy_model(0.3);
        let rec = pagerank(&model, 0, 1e-6, 1e-12).unwrap();
        assert!(rec.scores[0] > 0.999);
    }

    #[test]
    fn pagerank_satisfies_fixed_point_residual() {
        let model = toy_model(0.2);
        let eta = 0.8;
        let tol = 1e-10;
        let rec = pagerank(&model, 1, eta, tol).unwrap();
        let px = model.p.matrix().vec_mul(rec.scores.as_slice()).unwrap();
        let mut residual = 0.0;
        for j in 0..model.order() {
            let teleport = if j == 1 { 1.0 - eta } else { 0.0 };
            residual += (rec.scores[j] - eta * px[j] - teleport).abs();
        }
        assert!(residual <= 2.0 * tol + 1e-9, "residual {residual}");
    }

    #[test]
    fn pagerank_matches_dense_linear_solve() {
        let model = toy_model(0.25);
        let eta = 0.9;
        let n = model.order();
        let dense = model.p.matrix().to_dense();
        // solve x' (I - eta P) = (1 - eta) e_u' by Gaussian elimination on the
        // transposed system
        for u in 0..model.n_users {
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    // (I - eta P)^T
                    a[i][j] = if i == j { 1.0 } else { 0.0 } - eta * dense[j][i];
                }
            }
            let mut rhs = vec![0.0; n];
            rhs[u] = 1.0 - eta;
            // gaussian elimination with partial pivoting
            for col in 0..n {
                let pivot = (col..n)
                    .max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap())
                    .unwrap();
                a.swap(col, pivot);
                rhs.swap(col, pivot);
                for row in col + 1..n {
                    let f = a[row][col] / a[col][col];
                    for k in col..n {
                        a[row][k] -= f * a[col][k];
                    }
                    rhs[row] -= f * rhs[col];
                }
            }
            let mut x = vec![0.0; n];
            for row in (0..n).rev() {
                let mut acc = rhs[row];
                for k in row + 1..n {
                    acc -= a[row][k] * x[k];
                }
                x[row] = acc / a[row][row];
            }
            let sum: f64 = x.iter().sum();
            for v in &mut x {
                *v /= sum;
            }
            let rec = pagerank(&model, u, eta, 1e-12).unwrap();
            for (a, b) in rec.scores.as_slice().iter().zip(&x) {
                assert!((a - b).abs() <= 1e-8, "user {u}");
            }
        }
    }

    #[test]
    fn pagerank_is_stable_past_convergence() {
        let model = toy_model(0.2);
        let rec = pagerank(&model, 0, 0.85, 1e-10).unwrap();
        // one more damped step moves the converged vector by less than tol
        let px = model.p.matrix().vec_mul(rec.scores.as_slice()).unwrap();
        let mut next: Vec<f64> = px.iter().map(|v| 0.85 * v).collect();
        next[0] += 0.15;
        let delta: f64 = next
            .iter()
            .zip(rec.scores.as_slice())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(delta < 1e-9);
    }

    #[test]
    fn srw_zero_steps_returns_history() {
        let r = binary(2, 3, &[(0, 0), (0, 2), (1, 1)]);
        let w = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)],
        )
        .unwrap();
        let s = row_normalize(&w).unwrap();
        let phi = user_history_distribution(&r, 0).unwrap();
        let rec = srw_baseline(&s, &phi, 0, 0).unwrap();
        assert_eq!(rec.scores.as_slice(), phi.as_slice());
    }

    #[test]
    fn srw_uniform_start_fixed_under_doubly_stochastic() {
        // symmetric circulant, doubly stochastic
        let s = row_normalize(
            &SparseMatrix::from_triplets(
                3,
                3,
                &[(0, 1, 1.0), (0, 2, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 0, 1.0), (2, 1, 1.0)],
            )
            .unwrap(),
        )
        .unwrap();
        let phi = DenseVector::new(vec![1.0 / 3.0; 3]);
        for k in [1, 4, 9] {
            let rec = srw_baseline(&s, &phi, 0, k).unwrap();
            for &v in rec.scores.as_slice() {
                assert!((v - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn srw_matches_dense_power_oracle() {
        let w = SparseMatrix::from_triplets(
            4,
            4,
            &[(0, 1, 2.0), (1, 2, 1.0), (1, 0, 1.0), (2, 3, 3.0), (3, 0, 1.0), (3, 2, 1.0)],
        )
        .unwrap();
        let s = row_normalize(&w).unwrap();
        let phi = DenseVector::new(vec![0.5, 0.0, 0.5, 0.0]);
        let dense = s.matrix().to_dense();
        let mut x = phi.as_slice().to_vec();
        for _ in 0..3 {
            x = dense_vec_mat(&x, &dense);
        }
        let rec = srw_baseline(&s, &phi, 0, 3).unwrap();
        for (a, b) in rec.scores.as_slice().iter().zip(&x) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn pr_baseline_geometric_series_tail() {
        let w = SparseMatrix::from_triplets(
            4,
            4,
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)],
        )
        .unwrap();
        let s = row_normalize(&w).unwrap();
        let phi = DenseVector::new(vec![1.0, 0.0, 0.0, 0.0]);
        let p = 0.5;
        let rec = pr_baseline(&s, &phi, 0, p, 1e-12).unwrap();
        // truncated series sum_{k<50} (1-p) p^k phi S^k
        let dense = s.matrix().to_dense();
        let mut series = vec![0.0; 4];
        let mut term = phi.as_slice().to_vec();
        for k in 0..50 {
            let wgt = (1.0 - p) * p.powi(k);
            for j in 0..4 {
                series[j] += wgt * term[j];
            }
            term = dense_vec_mat(&term, &dense);
        }
        let tail: f64 = p.powi(50);
        for (a, b) in rec.scores.as_slice().iter().zip(&series) {
            assert!((a - b).abs() <= tail + 1e-10);
        }
    }

    #[test]
    fn base_scores_single_entry_product() {
        let r = binary(2, 3, &[(0, 0), (1, 1)]);
        let w = SparseMatrix::from_triplets(3, 3, &[(0, 1, 0.7)]).unwrap();
        let rec = base_model_scores(&w, &r, 0).unwrap();
        assert_eq!(rec.scores.as_slice(), &[0.0, 0.7, 0.0]);

        let empty = SparseMatrix::from_triplets(3, 3, &[]).unwrap();
        let rec = base_model_scores(&empty, &r, 0).unwrap();
        assert!(rec.scores.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ranking_sorts_and_tie_breaks_by_index() {
        let scores = vec![0.1, 0.9, 0.5, 0.9, 0.0];
        let ranked = rank_candidates(&scores, &[0, 1, 2, 3, 4]);
        assert_eq!(ranked, vec![(1, 1), (3, 2), (2, 3), (0, 4), (4, 5)]);

        let flat = vec![0.5; 4];
        let ranked = rank_candidates(&flat, &[3, 1, 0, 2]);
        assert_eq!(ranked, vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
    }

    #[test]
    fn ranking_matches_naive_sort_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let scores: Vec<f64> = (0..10).map(|_| rng.gen::<f64>()).collect();
        let candidates: Vec<usize> = (0..10).collect();
        let ranked = rank_candidates(&scores, &candidates);
        let mut naive = candidates.clone();
        naive.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let expected: Vec<(usize, usize)> =
            naive.into_iter().enumerate().map(|(p, i)| (i, p + 1)).collect();
        assert_eq!(ranked, expected);
    }

    #[test]
    fn kstep_eventually_covers_all_items_on_connected_graph() {
        let model = toy_model(0.5);
        let dense = model.p.matrix().to_dense();
        // dense-power positivity oracle
        for u in 0..model.n_users {
            let mut found = None;
            let mut x = vec![0.0; model.order()];
            x[u] = 1.0;
            for k in 1..=30 {
                x = dense_vec_mat(&x, &dense);
                if x[model.n_users..].iter().all(|&v| v > 0.0) {
                    found = Some(k);
                    break;
                }
            }
            let k0 = found.expect("primitive chain must cover the items");
            let rec = kstep(&model, u, k0).unwrap();
            assert!(rec.scores.as_slice()[model.n_users..].iter().all(|&v| v > 0.0));
        }
    }
}
