//! Subcommand implementations. Every command is a pure function of the
//! config and its input files: reruns write byte-identical artifacts.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use recwalk_core::dataset::{
    load_interactions, make_validation, read_split_lines, replay_split, write_split, EvalSplit,
};
use recwalk_core::eval::{
    coverage_audit, evaluate, grid_search, write_grid_csv, GridPoint, Objective,
};
use recwalk_core::item_model::{build_item_model, ItemModel, NeighborhoodSize};
use recwalk_core::recommend::{ItemScorer, Strategy, StrategyScorer};
use recwalk_core::sparse::SparseMatrix;
use recwalk_core::spectral::{
    coupling_degree, dense_spectrum, landing_drift, structural_eigenpair_residual,
    subdominant_modulus, write_drift_csv, write_spectrum_csv, Partition,
};
use recwalk_core::walk::{build_p, check_connectivity, giant_component, RecWalkModel};

use crate::config::RunConfig;
use crate::CliError;

pub struct Data {
    pub r: SparseMatrix,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Loads and filters the dataset; optionally restricts to the giant
/// component when the graph is disconnected.
pub fn ingest(cfg: &RunConfig) -> Result<Data, CliError> {
    let path = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| usage("no dataset configured (flag --dataset or key dataset=)"))?;
    let log = load_interactions(path, cfg.min_user_deg, cfg.min_item_deg)?;
    let mut r = log.to_matrix();
    let mut user_ids = log.user_ids().to_vec();
    let mut item_ids = log.item_ids().to_vec();
    if cfg.giant_component && !check_connectivity(&r).is_connected() {
        let (reduced, kept_users, kept_items) = giant_component(&r);
        eprintln!(
            "giant component: kept {}/{} users, {}/{} items",
            kept_users.len(),
            user_ids.len(),
            kept_items.len(),
            item_ids.len()
        );
        user_ids = kept_users.iter().map(|&u| user_ids[u].clone()).collect();
        item_ids = kept_items.iter().map(|&i| item_ids[i].clone()).collect();
        r = reduced;
    }
    Ok(Data {
        r,
        user_ids,
        item_ids,
    })
}

fn artifact(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.outdir.join(name)
}

fn create(cfg: &RunConfig, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(&cfg.outdir)
        .map_err(|e| usage(format!("cannot create outdir {}: {e}", cfg.outdir.display())))?;
    let path = artifact(cfg, name);
    let file = File::create(&path)
        .map_err(|e| usage(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    out.write_all(cfg.provenance().as_bytes())
        .map_err(recwalk_core::Error::from)?;
    Ok(out)
}

/// Derives the validation seed from the main seed; kept distinct so the two
/// splits never share RNG streams.
fn validation_seed(seed: u64) -> u64 {
    seed ^ 0xA076_1D64_78BD_642F
}

pub fn cmd_split(cfg: &RunConfig) -> Result<(), CliError> {
    let data = ingest(cfg)?;
    println!(
        "dataset: {} users, {} items, {} interactions",
        data.r.n_rows(),
        data.r.n_cols(),
        data.r.nnz()
    );
    let test = make_validation(&data.r, cfg.seed);
    let validation = make_validation(&test.r_train, validation_seed(cfg.seed));

    let mut out = create(cfg, "test_split.tsv")?;
    write_split(&test, &mut out)?;
    let mut out = create(cfg, "validation_split.tsv")?;
    write_split(&validation, &mut out)?;
    println!(
        "wrote test split ({} users) and validation split ({} users) to {}",
        test.heldout.len(),
        validation.heldout.len(),
        cfg.outdir.display()
    );
    Ok(())
}

/// Reads a previously written split file back against the full matrix.
pub fn load_split(cfg: &RunConfig, data: &Data, which: &str) -> Result<EvalSplit, CliError> {
    let (name, seed, base) = match which {
        "test" => ("test_split.tsv", cfg.seed, data.r.clone()),
        "validation" => {
            // validation lines index into the test training matrix
            let test = load_split(cfg, data, "test")?;
            (
                "validation_split.tsv",
                validation_seed(cfg.seed),
                test.r_train,
            )
        }
        other => return Err(usage(format!("unknown split {other:?} (test|validation)"))),
    };
    let path = artifact(cfg, name);
    let file = File::open(&path).map_err(|e| {
        CliError::Core(recwalk_core::Error::BadModelFile(format!(
            "cannot open split {}: {e}; run `recwalk split` first",
            path.display()
        )))
    })?;
    let (heldout, negatives) = read_split_lines(BufReader::new(file))?;
    Ok(replay_split(&base, heldout, negatives, seed)?)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let data = ingest(cfg)?;
    let split = load_split(cfg, &data, "test")?;

    let start = Instant::now();
    let model = build_item_model(
        &split.r_train,
        cfg.c,
        cfg.gamma1,
        cfg.gamma2,
        cfg.fit_options(),
    )?;
    let fit_elapsed = start.elapsed();

    let walk = build_p(&split.r_train, &model.w, cfg.alpha)?;
    let total_elapsed = start.elapsed();

    let mut out = create(cfg, "item_model.txt")?;
    model.write_text(&mut out)?;
    let mut out = create(cfg, "walk_model.txt")?;
    walk.write_text(&mut out)?;

    let mut out = create(cfg, "fit_stats.csv")?;
    writeln!(out, "column,sweeps,objective,converged").map_err(recwalk_core::Error::from)?;
    for (column, stat) in model.fit_stats.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{}",
            column, stat.sweeps, stat.objective, stat.converged
        )
        .map_err(recwalk_core::Error::from)?;
    }

    println!(
        "item model: {} items, {} weights, fitted in {:.3}s",
        model.w.n_rows(),
        model.w.nnz(),
        fit_elapsed.as_secs_f64()
    );
    println!(
        "walk model: order {}, alpha {}, built in {:.3}s total",
        walk.order(),
        cfg.alpha,
        total_elapsed.as_secs_f64()
    );
    Ok(())
}

pub fn load_models(cfg: &RunConfig) -> Result<(ItemModel, RecWalkModel), CliError> {
    let open = |name: &str| -> Result<BufReader<File>, CliError> {
        let path = artifact(cfg, name);
        File::open(&path)
            .map(BufReader::new)
            .map_err(|e| {
                CliError::Core(recwalk_core::Error::BadModelFile(format!(
                    "cannot open {}: {e}; run `recwalk train` first",
                    path.display()
                )))
            })
    };
    let model = ItemModel::read_text(open("item_model.txt")?)?;
    let walk = RecWalkModel::read_text(open("walk_model.txt")?)?;
    Ok((model, walk))
}

pub fn strategy_from(cfg: &RunConfig, name: &str) -> Result<Strategy, CliError> {
    Ok(match name {
        "kstep" => Strategy::KStep { k: cfg.k },
        "pr" => Strategy::PageRank {
            eta: cfg.eta,
            tol: cfg.walk_tol,
        },
        "srw" => Strategy::Srw { k: cfg.k },
        "pr-base" => Strategy::PrBase {
            p: cfg.eta,
            tol: cfg.walk_tol,
        },
        "base" => Strategy::Base,
        "kstep-mi" => Strategy::KStepMi { k: cfg.k },
        "pr-mi" => Strategy::PrMi {
            p: cfg.eta,
            tol: cfg.walk_tol,
        },
        other => {
            return Err(usage(format!(
                "unknown strategy {other:?} (kstep|pr|srw|pr-base|base|kstep-mi|pr-mi)"
            )))
        }
    })
}

pub fn cmd_evaluate(cfg: &RunConfig, strategy_name: &str, which: &str) -> Result<(), CliError> {
    let data = ingest(cfg)?;
    let split = load_split(cfg, &data, which)?;
    let (model, walk) = load_models(cfg)?;
    let strategy = strategy_from(cfg, strategy_name)?;
    let scorer = StrategyScorer::new(strategy, &split.r_train, Some(&walk), Some(&model.w))?;

    let report = evaluate(&scorer, &split, cfg.n)?;
    report.write_table(std::io::stdout().lock())?;

    let name = format!("eval_{}_{}.csv", strategy.tag(), which);
    let mut out = create(cfg, &name)?;
    report.write_csv(&mut out)?;
    println!("report written to {}", artifact(cfg, &name).display());
    Ok(())
}

pub fn cmd_recommend(
    cfg: &RunConfig,
    strategy_name: &str,
    users: Option<Vec<String>>,
) -> Result<(), CliError> {
    let data = ingest(cfg)?;
    let split = load_split(cfg, &data, "test")?;
    let (model, walk) = load_models(cfg)?;
    let strategy = strategy_from(cfg, strategy_name)?;
    let scorer = StrategyScorer::new(strategy, &split.r_train, Some(&walk), Some(&model.w))?;

    let targets: Vec<usize> = match users {
        Some(ids) => ids
            .iter()
            .map(|id| {
                data.user_ids
                    .iter()
                    .position(|u| u == id)
                    .ok_or_else(|| usage(format!("unknown user id {id:?}")))
            })
            .collect::<Result<_, _>>()?,
        None => (0..split.r_train.n_rows()).collect(),
    };

    let mut out = create(cfg, "recommendations.tsv")?;
    for &u in &targets {
        let scores = scorer.item_scores(u)?;
        let consumed: std::collections::HashSet<usize> =
            split.r_train.row(u).map(|(j, _)| j).collect();
        let mut ranked: Vec<(usize, f64)> = scores
            .iter()
            .copied()
            .enumerate()
            .filter(|(j, _)| !consumed.contains(j))
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        ranked.truncate(cfg.n);
        let line = ranked
            .iter()
            .map(|&(j, s)| format!("{}:{}", data.item_ids[j], s))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{}\t{}", data.user_ids[u], line).map_err(recwalk_core::Error::from)?;
    }
    println!(
        "wrote top-{} lists for {} users to {}",
        cfg.n,
        targets.len(),
        artifact(cfg, "recommendations.tsv").display()
    );
    Ok(())
}

pub fn cmd_spectrum(cfg: &RunConfig, max_order: usize, drift_users: usize) -> Result<(), CliError> {
    let (_, walk) = load_models(cfg)?;

    let residual = structural_eigenpair_residual(&walk);
    let partition = Partition::canonical(walk.n_users, walk.n_items);
    let coupling = coupling_degree(&walk.p, &partition)?;
    println!("structural residual: {residual:.3e}");
    println!("coupling degree epsilon: {}", coupling.epsilon);

    if walk.order() <= max_order {
        let report = dense_spectrum(&walk.p, max_order)?;
        let mut out = create(cfg, "spectrum.csv")?;
        write_spectrum_csv(&report, &mut out)?;
        println!(
            "dense spectrum: {} eigenvalues, {} within 0.1 of 1",
            report.eigenvalues.len(),
            report.near_one_count(0.1)
        );
    } else {
        println!(
            "order {} exceeds dense cap {max_order}; skipping dense spectrum",
            walk.order()
        );
    }

    let sub = subdominant_modulus(&walk.p, 1e-8)?;
    println!("subdominant modulus: {sub:.6}");

    let users: Vec<usize> = (0..walk.n_users.min(drift_users)).collect();
    let drift = landing_drift(&walk, &users, 2 * cfg.k.max(5))?;
    let mut out = create(cfg, "drift.csv")?;
    write_drift_csv(&drift, &mut out)?;
    println!("drift profile written for {} users", users.len());
    Ok(())
}

pub fn cmd_coverage(
    cfg: &RunConfig,
    strategy_name: &str,
    thresholds: &[f64],
) -> Result<(), CliError> {
    let data = ingest(cfg)?;
    let split = load_split(cfg, &data, "test")?;
    let (model, walk) = load_models(cfg)?;
    let strategy = strategy_from(cfg, strategy_name)?;
    let scorer = StrategyScorer::new(strategy, &split.r_train, Some(&walk), Some(&model.w))?;

    let report = coverage_audit(&scorer, &split.r_train, thresholds)?;
    let name = format!("coverage_{}.csv", strategy.tag());
    let mut out = create(cfg, &name)?;
    writeln!(out, "threshold,fraction_of_users").map_err(recwalk_core::Error::from)?;
    for (t, f) in report.thresholds.iter().zip(&report.fractions) {
        writeln!(out, "{t},{f}").map_err(recwalk_core::Error::from)?;
        println!("coverage >= {:.0}% of items: {:.2}% of users", t * 100.0, f * 100.0);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_grid(
    cfg: &RunConfig,
    strategy_name: &str,
    c_list: &[NeighborhoodSize],
    gamma1_list: &[f64],
    gamma2_list: &[f64],
    k_list: &[usize],
    eta_list: &[f64],
    objective: Objective,
) -> Result<(), CliError> {
    let data = ingest(cfg)?;
    let validation = load_split(cfg, &data, "validation")?;

    let mut grid = Vec::new();
    for &c in c_list {
        for &g1 in gamma1_list {
            for &g2 in gamma2_list {
                match strategy_name {
                    "kstep" => {
                        for &k in k_list {
                            grid.push(GridPoint {
                                c,
                                gamma1: g1,
                                gamma2: g2,
                                strategy: Strategy::KStep { k },
                            });
                        }
                    }
                    "pr" => {
                        for &eta in eta_list {
                            grid.push(GridPoint {
                                c,
                                gamma1: g1,
                                gamma2: g2,
                                strategy: Strategy::PageRank {
                                    eta,
                                    tol: cfg.walk_tol,
                                },
                            });
                        }
                    }
                    other => {
                        return Err(usage(format!(
                            "grid supports strategies kstep|pr, got {other:?}"
                        )))
                    }
                }
            }
        }
    }

    let result = grid_search(
        &validation.r_train,
        cfg.alpha,
        &grid,
        &validation,
        cfg.n,
        objective,
        cfg.fit_options(),
    )?;

    let mut out = create(cfg, "grid.csv")?;
    write_grid_csv(&result, &mut out)?;

    let best = &result.rows[result.best];
    let c = match best.point.c {
        NeighborhoodSize::Count(c) => c.to_string(),
        NeighborhoodSize::Percent(p) => format!("{p}%"),
    };
    println!(
        "best of {} configurations: c={} gamma1={} gamma2={} strategy={:?}",
        grid.len(),
        c,
        best.point.gamma1,
        best.point.gamma2,
        best.point.strategy
    );
    if let Ok(report) = &best.outcome {
        println!(
            "validation HR@{n}={:.4} ARHR@{n}={:.4} NDCG@{n}={:.4}",
            report.hr,
            report.arhr,
            report.ndcg,
            n = report.n
        );
    }
    Ok(())
}
