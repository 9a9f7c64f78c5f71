//! Leave-one-out evaluation: HR/ARHR/NDCG at a cutoff, itemspace coverage
//! audits, and a grid-search driver for model selection.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::dataset::EvalSplit;
use crate::error::{Error, Result};
use crate::item_model::{build_item_model, FitOptions, NeighborhoodSize};
use crate::recommend::{rank_candidates, ItemScorer, Strategy, StrategyScorer};
use crate::sparse::SparseMatrix;
use crate::walk::{build_p, RecWalkModel};

/// Hit, reciprocal-rank and log-discounted gain of a single held-out item at
/// 1-based `rank` under cutoff `n`. With one relevant item the ideal DCG is
/// 1, so NDCG reduces to the discount itself.
pub fn per_user_metrics(rank: usize, n: usize) -> (f64, f64, f64) {
    assert!(rank >= 1, "ranks are 1-based");
    if rank > n {
        return (0.0, 0.0, 0.0);
    }
    let hr = 1.0;
    let arhr = 1.0 / rank as f64;
    let ndcg = 1.0 / ((rank + 1) as f64).log2();
    (hr, arhr, ndcg)
}

/// Aggregated metrics plus the per-user ranks they are recomputable from.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub n: usize,
    pub hr: f64,
    pub arhr: f64,
    pub ndcg: f64,
    pub per_user_ranks: BTreeMap<usize, usize>,
    pub num_users_evaluated: usize,
    pub seed: u64,
}

impl EvalReport {
    /// Rebuilds the aggregate metrics from the stored ranks. Used by tests
    /// to confirm the aggregates are exactly the means.
    pub fn recompute(&self) -> (f64, f64, f64) {
        aggregate(self.n, &self.per_user_ranks)
    }

    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "users evaluated: {}", self.num_users_evaluated)?;
        writeln!(out, "seed: {}", self.seed)?;
        writeln!(out, "HR@{}:   {:.6}", self.n, self.hr)?;
        writeln!(out, "ARHR@{}: {:.6}", self.n, self.arhr)?;
        writeln!(out, "NDCG@{}: {:.6}", self.n, self.ndcg)?;
        Ok(())
    }

    /// Machine-readable form: one summary line then one line per user rank.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "metric,value")?;
        writeln!(out, "n,{}", self.n)?;
        writeln!(out, "users,{}", self.num_users_evaluated)?;
        writeln!(out, "seed,{}", self.seed)?;
        writeln!(out, "hr,{}", self.hr)?;
        writeln!(out, "arhr,{}", self.arhr)?;
        writeln!(out, "ndcg,{}", self.ndcg)?;
        writeln!(out, "user,rank")?;
        for (u, r) in &self.per_user_ranks {
            writeln!(out, "{u},{r}")?;
        }
        Ok(())
    }
}

fn aggregate(n: usize, ranks: &BTreeMap<usize, usize>) -> (f64, f64, f64) {
    if ranks.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mut hr = 0.0;
    let mut arhr = 0.0;
    let mut ndcg = 0.0;
    for &rank in ranks.values() {
        let (h, a, d) = per_user_metrics(rank, n);
        hr += h;
        arhr += a;
        ndcg += d;
    }
    let m = ranks.len() as f64;
    (hr / m, arhr / m, ndcg / m)
}

/// Scores each evaluated user's candidate list (held-out item plus sampled
/// negatives), ranks it, and aggregates the ranking metrics. Users are
/// processed in parallel; aggregation runs in user-index order so results
/// are bit-stable.
pub fn evaluate(scorer: &dyn ItemScorer, split: &EvalSplit, n: usize) -> Result<EvalReport> {
    let n_items = scorer.n_items();
    for (&u, &h) in &split.heldout {
        if h >= n_items {
            return Err(Error::IndexMapMismatch(format!(
                "held-out item {h} for user {u} outside itemspace {n_items}"
            )));
        }
        if let Some(negs) = split.negatives.get(&u) {
            if negs.iter().any(|&j| j >= n_items) {
                return Err(Error::IndexMapMismatch(format!(
                    "negative sample outside itemspace for user {u}"
                )));
            }
        }
    }

    let users: Vec<usize> = split.heldout.keys().copied().collect();
    let ranks: Vec<(usize, usize)> = users
        .par_iter()
        .map(|&u| -> Result<(usize, usize)> {
            let heldout = split.heldout[&u];
            let mut candidates = vec![heldout];
            if let Some(negs) = split.negatives.get(&u) {
                candidates.extend_from_slice(negs);
            }
            let scores = scorer.item_scores(u)?;
            let ranked = rank_candidates(&scores, &candidates);
            let rank = ranked
                .iter()
                .find(|&&(item, _)| item == heldout)
                .map(|&(_, r)| r)
                .expect("held-out item is always a candidate");
            Ok((u, rank))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_user_ranks = BTreeMap::new();
    for (u, r) in ranks {
        per_user_ranks.insert(u, r);
    }
    let (hr, arhr, ndcg) = aggregate(n, &per_user_ranks);
    Ok(EvalReport {
        n,
        hr,
        arhr,
        ndcg,
        num_users_evaluated: per_user_ranks.len(),
        per_user_ranks,
        seed: split.seed,
    })
}

/// Fraction of users whose score vector supports at least each threshold
/// fraction of the itemspace.
#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub thresholds: Vec<f64>,
    pub fractions: Vec<f64>,
    pub num_users: usize,
}

/// Per user, counts items with strictly positive score (consumed items
/// excluded) and compares the supported fraction of the itemspace against
/// each threshold. Runs over all users of the training matrix.
pub fn coverage_audit(
    scorer: &dyn ItemScorer,
    r_train: &SparseMatrix,
    thresholds: &[f64],
) -> Result<CoverageReport> {
    let n_items = scorer.n_items();
    let n_users = r_train.n_rows();
    let supports: Vec<f64> = (0..n_users)
        .into_par_iter()
        .map(|u| -> Result<f64> {
            let scores = scorer.item_scores(u)?;
            let consumed: Vec<usize> = r_train.row(u).map(|(j, _)| j).collect();
            let mut positive = scores.iter().filter(|&&s| s > 0.0).count();
            for &j in &consumed {
                if scores[j] > 0.0 {
                    positive -= 1;
                }
            }
            Ok(positive as f64 / n_items as f64)
        })
        .collect::<Result<Vec<_>>>()?;

    let fractions = thresholds
        .iter()
        .map(|&t| supports.iter().filter(|&&s| s >= t).count() as f64 / n_users as f64)
        .collect();
    Ok(CoverageReport {
        thresholds: thresholds.to_vec(),
        fractions,
        num_users: n_users,
    })
}

/// Metric maximized during model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Hr,
    Arhr,
    Ndcg,
}

impl Objective {
    pub fn of(&self, report: &EvalReport) -> f64 {
        match self {
            Objective::Hr => report.hr,
            Objective::Arhr => report.arhr,
            Objective::Ndcg => report.ndcg,
        }
    }
}

/// One lattice point: item-model hyperparameters plus the strategy (which
/// carries K or the damping factor).
#[derive(Debug, Clone, Copy)]
pub struct GridPoint {
    pub c: NeighborhoodSize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub strategy: Strategy,
}

/// Outcome of one lattice point; training failures are recorded, not fatal.
#[derive(Debug)]
pub struct GridRow {
    pub index: usize,
    pub point: GridPoint,
    pub outcome: Result<EvalReport>,
}

/// Result of a sweep: the winning index into the grid plus the full log.
#[derive(Debug)]
pub struct GridSearchResult {
    pub best: usize,
    pub rows: Vec<GridRow>,
}

/// Trains and evaluates every lattice point on the validation split and
/// returns the configuration maximizing the objective. Item models are
/// shared across points that differ only in the walk strategy. Ties break
/// by grid order.
pub fn grid_search(
    r_train: &SparseMatrix,
    alpha: f64,
    grid: &[GridPoint],
    validation: &EvalSplit,
    n: usize,
    objective: Objective,
    fit_opts: FitOptions,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::InvalidPartition("empty grid".into()));
    }

    // cache trained models per (C, gamma1, gamma2)
    struct Trained {
        walk: Result<RecWalkModel>,
        w: Option<SparseMatrix>,
    }
    let mut cache: Vec<((usize, u64, u64), Trained)> = Vec::new();
    let key_of = |p: &GridPoint| {
        (
            p.c.resolve(r_train.n_cols()),
            p.gamma1.to_bits(),
            p.gamma2.to_bits(),
        )
    };

    let mut rows = Vec::with_capacity(grid.len());
    for (index, point) in grid.iter().enumerate() {
        let key = key_of(point);
        if !cache.iter().any(|(k, _)| *k == key) {
            let trained = match build_item_model(
                &validation.r_train,
                point.c,
                point.gamma1,
                point.gamma2,
                fit_opts,
            ) {
                Ok(model) => {
                    let walk = build_p(&validation.r_train, &model.w, alpha);
                    Trained {
                        walk,
                        w: Some(model.w),
                    }
                }
                Err(e) => Trained {
                    walk: Err(e),
                    w: None,
                },
            };
            cache.push((key, trained));
        }
        let trained = &cache.iter().find(|(k, _)| *k == key).unwrap().1;

        let outcome = (|| -> Result<EvalReport> {
            let walk_ref = match &trained.walk {
                Ok(m) => Some(m),
                Err(e) => {
                    // strategies that do not need the walk can still run
                    match point.strategy {
                        Strategy::KStep { .. } | Strategy::PageRank { .. } => {
                            return Err(Error::BadModelFile(format!(
                                "walk model unavailable: {e}"
                            )))
                        }
                        _ => None,
                    }
                }
            };
            let scorer = StrategyScorer::new(
                point.strategy,
                &validation.r_train,
                walk_ref,
                trained.w.as_ref(),
            )?;
            evaluate(&scorer, validation, n)
        })();
        rows.push(GridRow {
            index,
            point: *point,
            outcome,
        });
    }

    let mut best = None;
    for row in &rows {
        if let Ok(report) = &row.outcome {
            let score = objective.of(report);
            match best {
                Some((_, current)) if score <= current => {}
                _ => best = Some((row.index, score)),
            }
        }
    }
    let best = best
        .map(|(i, _)| i)
        .ok_or_else(|| Error::BadModelFile("every grid point failed".into()))?;
    Ok(GridSearchResult { best, rows })
}

/// CSV log: one row per lattice point with its objective values or error.
pub fn write_grid_csv<W: Write>(result: &GridSearchResult, mut out: W) -> Result<()> {
    writeln!(out, "index,c,gamma1,gamma2,strategy,hr,arhr,ndcg,error")?;
    for row in &result.rows {
        let c = match row.point.c {
            NeighborhoodSize::Count(c) => c.to_string(),
            NeighborhoodSize::Percent(p) => format!("{p}%"),
        };
        match &row.outcome {
            Ok(r) => writeln!(
                out,
                "{},{},{},{},{:?},{},{},{},",
                row.index, c, row.point.gamma1, row.point.gamma2, row.point.strategy, r.hr, r.arhr, r.ndcg
            )?,
            Err(e) => writeln!(
                out,
                "{},{},{},{},{:?},,,,{}",
                row.index,
                c,
                row.point.gamma1,
                row.point.gamma2,
                row.point.strategy,
                e.to_string().replace(',', ";")
            )?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{leave_one_out, InteractionLog};

    struct OracleScorer {
        n_items: usize,
        heldout: BTreeMap<usize, usize>,
    }

    impl ItemScorer for OracleScorer {
        fn n_items(&self) -> usize {
            self.n_items
        }
        fn item_scores(&self, user: usize) -> Result<Vec<f64>> {
            let mut scores = vec![0.0; self.n_items];
            if let Some(&h) = self.heldout.get(&user) {
                scores[h] = 1.0;
            }
            Ok(scores)
        }
    }

    struct ConstantScorer {
        n_items: usize,
    }

    impl ItemScorer for ConstantScorer {
        fn n_items(&self) -> usize {
            self.n_items
        }
        fn item_scores(&self, _user: usize) -> Result<Vec<f64>> {
            Ok(vec![0.5; self.n_items])
        }
    }

    fn toy_split() -> EvalSplit {
        // circulant bipartite graph: dense enough that the training graph
        // stays connected after holding out one item per user
        let mut pairs = Vec::new();
        for u in 0..5 {
            for t in 0..5 {
                pairs.push((u, (u + t) % 8));
            }
        }
        let log = InteractionLog::from_pairs(5, 8, &pairs).unwrap();
        leave_one_out(&log, 17)
    }

    #[test]
    fn per_user_metric_formulas() {
        assert_eq!(per_user_metrics(1, 10), (1.0, 1.0, 1.0));
        assert_eq!(per_user_metrics(11, 10), (0.0, 0.0, 0.0));
        let (hr, arhr, ndcg) = per_user_metrics(3, 10);
        assert_eq!(hr, 1.0);
        assert!((arhr - 1.0 / 3.0).abs() < 1e-15);
        assert!((ndcg - 0.5).abs() < 1e-15);
    }

    #[test]
    fn metrics_nondecreasing_in_cutoff() {
        for rank in 1..=20 {
            let mut prev = (0.0, 0.0, 0.0);
            for n in 1..=25 {
                let m = per_user_metrics(rank, n);
                assert!(m.0 >= prev.0 && m.1 >= prev.1 && m.2 >= prev.2);
                prev = m;
            }
        }
    }

    #[test]
    fn oracle_scorer_achieves_perfect_metrics() {
        let split = toy_split();
        let scorer = OracleScorer {
            n_items: 8,
            heldout: split.heldout.clone(),
        };
        let report = evaluate(&scorer, &split, 10).unwrap();
        assert_eq!(report.hr, 1.0);
        assert_eq!(report.arhr, 1.0);
        assert_eq!(report.ndcg, 1.0);
    }

    #[test]
    fn constant_scorer_matches_exhaustive_tie_order() {
        let split = toy_split();
        let scorer = ConstantScorer { n_items: 8 };
        let report = evaluate(&scorer, &split, 10).unwrap();
        // all scores equal: rank of held-out item is its position in the
        // ascending-index order of the candidate list
        for (&u, &rank) in &report.per_user_ranks {
            let mut candidates = vec![split.heldout[&u]];
            candidates.extend_from_slice(&split.negatives[&u]);
            candidates.sort_unstable();
            let expected = candidates.iter().position(|&c| c == split.heldout[&u]).unwrap() + 1;
            assert_eq!(rank, expected, "user {u}");
        }
        let (hr, arhr, ndcg) = report.recompute();
        assert_eq!((hr, arhr, ndcg), (report.hr, report.arhr, report.ndcg));
    }

    #[test]
    fn evaluate_is_deterministic() {
        let split = toy_split();
        let scorer = ConstantScorer { n_items: 8 };
        let a = evaluate(&scorer, &split, 10).unwrap();
        let b = evaluate(&scorer, &split, 10).unwrap();
        assert_eq!(a.per_user_ranks, b.per_user_ranks);
        assert_eq!((a.hr, a.arhr, a.ndcg), (b.hr, b.arhr, b.ndcg));
    }

    #[test]
    fn full_candidate_cutoff_always_hits() {
        let split = toy_split();
        let scorer = ConstantScorer { n_items: 8 };
        let report = evaluate(&scorer, &split, 1000).unwrap();
        assert_eq!(report.hr, 1.0);
    }

    #[test]
    fn evaluate_rejects_out_of_range_split() {
        let mut split = toy_split();
        split.heldout.insert(0, 99);
        let scorer = ConstantScorer { n_items: 8 };
        assert!(matches!(
            evaluate(&scorer, &split, 10),
            Err(Error::IndexMapMismatch(_))
        ));
    }

    #[test]
    fn coverage_of_zero_and_constant_scorers() {
        let split = toy_split();
        struct ZeroScorer;
        impl ItemScorer for ZeroScorer {
            fn n_items(&self) -> usize {
                8
            }
            fn item_scores(&self, _: usize) -> Result<Vec<f64>> {
                Ok(vec![0.0; 8])
            }
        }
        let report = coverage_audit(&ZeroScorer, &split.r_train, &[0.5, 0.9]).unwrap();
        assert_eq!(report.fractions, vec![0.0, 0.0]);

        // constant positive scores cover everything unconsumed; with 4 of 8
        // items consumed after the holdout every user supports exactly 1/2
        let full = coverage_audit(&ConstantScorer { n_items: 8 }, &split.r_train, &[0.5, 0.9])
            .unwrap();
        assert_eq!(full.fractions[0], 1.0);
        assert_eq!(full.fractions[1], 0.0);
    }

    #[test]
    fn coverage_fractions_non_increasing_in_threshold() {
        let split = toy_split();
        let report =
            coverage_audit(&ConstantScorer { n_items: 8 }, &split.r_train, &[0.1, 0.5, 0.9])
                .unwrap();
        for w in report.fractions.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn kstep_star_graph_coverage_by_hand() {
        // 1 user rating items 0 and 1 of 2: after 1 step from the user node
        // the walker sits on both items
        let log = InteractionLog::from_pairs(1, 2, &[(0, 0), (0, 1)]).unwrap();
        let r = log.to_matrix();
        let w = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let model = build_p(&r, &w, 0.5).unwrap();
        let scorer =
            StrategyScorer::new(Strategy::KStep { k: 1 }, &r, Some(&model), Some(&w)).unwrap();
        let report = coverage_audit(&scorer, &r, &[0.5, 0.9]).unwrap();
        // both items are consumed by the single user, so support is 0
        assert_eq!(report.fractions, vec![0.0, 0.0]);
    }

    #[test]
    fn sparse_and_dense_walk_paths_agree() {
        use crate::walk::build_p;

        let split = toy_split();
        let model = build_item_model(
            &split.r_train,
            NeighborhoodSize::Count(3),
            0.01,
            0.1,
            FitOptions::default(),
        )
        .unwrap();
        let walk = build_p(&split.r_train, &model.w, 0.1).unwrap();

        // dense oracle: e_u P^k against the densified transition matrix
        struct DenseKStep {
            p: Vec<Vec<f64>>,
            n_users: usize,
            n_items: usize,
            k: usize,
        }
        impl ItemScorer for DenseKStep {
            fn n_items(&self) -> usize {
                self.n_items
            }
            fn item_scores(&self, user: usize) -> crate::error::Result<Vec<f64>> {
                let n = self.p.len();
                let mut x = vec![0.0; n];
                x[user] = 1.0;
                for _ in 0..self.k {
                    let mut next = vec![0.0; n];
                    for (i, xi) in x.iter().enumerate() {
                        for j in 0..n {
                            next[j] += xi * self.p[i][j];
                        }
                    }
                    x = next;
                }
                Ok(x[self.n_users..].to_vec())
            }
        }

        let dense = DenseKStep {
            p: walk.p.matrix().to_dense(),
            n_users: walk.n_users,
            n_items: walk.n_items,
            k: 5,
        };
        let sparse = StrategyScorer::new(
            Strategy::KStep { k: 5 },
            &split.r_train,
            Some(&walk),
            Some(&model.w),
        )
        .unwrap();

        let a = evaluate(&sparse, &split, 10).unwrap();
        let b = evaluate(&dense, &split, 10).unwrap();
        assert_eq!(a.per_user_ranks, b.per_user_ranks);
        assert_eq!((a.hr, a.arhr, a.ndcg), (b.hr, b.arhr, b.ndcg));
    }

    #[test]
    fn grid_search_singleton_and_dominance() {
        let split = toy_split();
        let validation = EvalSplit {
            r_train: split.r_train.clone(),
            heldout: split.heldout.clone(),
            negatives: split.negatives.clone(),
            seed: split.seed,
        };
        let single = [GridPoint {
            c: NeighborhoodSize::Count(3),
            gamma1: 0.01,
            gamma2: 0.1,
            strategy: Strategy::KStep { k: 4 },
        }];
        let result = grid_search(
            &split.r_train,
            0.1,
            &single,
            &validation,
            10,
            Objective::Ndcg,
            FitOptions::default(),
        )
        .unwrap();
        assert_eq!(result.best, 0);

        // two points, second dominated by construction (k = 0 scores the
        // user's own node only, so every item ties at zero)
        let grid = [
            GridPoint {
                c: NeighborhoodSize::Count(3),
                gamma1: 0.01,
                gamma2: 0.1,
                strategy: Strategy::KStep { k: 4 },
            },
            GridPoint {
                c: NeighborhoodSize::Count(3),
                gamma1: 0.01,
                gamma2: 0.1,
                strategy: Strategy::KStep { k: 0 },
            },
        ];
        let result = grid_search(
            &split.r_train,
            0.1,
            &grid,
            &validation,
            10,
            Objective::Ndcg,
            FitOptions::default(),
        )
        .unwrap();
        let ndcg: Vec<f64> = result
            .rows
            .iter()
            .map(|r| r.outcome.as_ref().map(|rep| rep.ndcg).unwrap_or(-1.0))
            .collect();
        // winner must be the first index attaining the maximum
        let mut expected = 0;
        for (i, &v) in ndcg.iter().enumerate() {
            if v > ndcg[expected] {
                expected = i;
            }
        }
        assert_eq!(result.best, expected);
    }

    #[test]
    fn grid_search_matches_sequential_reruns() {
        let split = toy_split();
        let validation = EvalSplit {
            r_train: split.r_train.clone(),
            heldout: split.heldout.clone(),
            negatives: split.negatives.clone(),
            seed: split.seed,
        };
        let grid: Vec<GridPoint> = [(2usize, 0.01), (3, 0.1)]
            .iter()
            .flat_map(|&(c, g1)| {
                [3usize, 5].iter().map(move |&k| GridPoint {
                    c: NeighborhoodSize::Count(c),
                    gamma1: g1,
                    gamma2: 0.5,
                    strategy: Strategy::KStep { k },
                })
            })
            .collect();
        let result = grid_search(
            &split.r_train,
            0.1,
            &grid,
            &validation,
            10,
            Objective::Ndcg,
            FitOptions::default(),
        )
        .unwrap();
        // rerun each point independently and compare
        for row in &result.rows {
            let model = build_item_model(
                &validation.r_train,
                row.point.c,
                row.point.gamma1,
                row.point.gamma2,
                FitOptions::default(),
            )
            .unwrap();
            let walk = build_p(&validation.r_train, &model.w, 0.1).unwrap();
            let scorer = StrategyScorer::new(
                row.point.strategy,
                &validation.r_train,
                Some(&walk),
                Some(&model.w),
            )
            .unwrap();
            let expected = evaluate(&scorer, &validation, 10).unwrap();
            let got = row.outcome.as_ref().unwrap();
            assert_eq!(got.per_user_ranks, expected.per_user_ranks);
        }
        let mut log = Vec::new();
        write_grid_csv(&result, &mut log).unwrap();
        assert_eq!(String::from_utf8(log).unwrap().lines().count(), grid.len() + 1);
    }
}
