//! Spectral diagnostics: the structural eigenpair check, degree-of-coupling
//! computation, dense spectra for small models, subdominant-modulus
//! estimation, and landing-distribution drift curves.

use std::io::Write;

use nalgebra::{Complex, DMatrix, Schur};

use crate::error::{Error, Result};
use crate::sparse::{DenseVector, StochasticMatrix};
use crate::walk::RecWalkModel;

/// Default order cap for dense eigensolves.
pub const DENSE_MAX_ORDER: usize = 5000;

/// Disjoint, exhaustive, nonempty blocks over a chain's state space.
#[derive(Debug, Clone)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    order: usize,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<usize>>, order: usize) -> Result<Self> {
        let mut seen = vec![false; order];
        let mut covered = 0;
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition(format!("block {b} is empty")));
            }
            for &s in block {
                if s >= order {
                    return Err(Error::InvalidPartition(format!(
                        "state {s} outside order {order}"
                    )));
                }
                if seen[s] {
                    return Err(Error::InvalidPartition(format!("state {s} repeated")));
                }
                seen[s] = true;
                covered += 1;
            }
        }
        if covered != order {
            return Err(Error::InvalidPartition(format!(
                "blocks cover {covered} of {order} states"
            )));
        }
        Ok(Partition { blocks, order })
    }

    /// The partition from the coupling analysis of the walk model: one
    /// singleton per user plus the whole itemspace as one block.
    pub fn canonical(n_users: usize, n_items: usize) -> Self {
        let mut blocks: Vec<Vec<usize>> = (0..n_users).map(|u| vec![u]).collect();
        blocks.push((n_users..n_users + n_items).collect());
        Partition {
            blocks,
            order: n_users + n_items,
        }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Block id per state.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0usize; self.order];
        for (b, block) in self.blocks.iter().enumerate() {
            for &s in block {
                labels[s] = b;
            }
        }
        labels
    }
}

/// Maximum degree of coupling plus the per-row leak probabilities it
/// maximizes over.
#[derive(Debug, Clone)]
pub struct CouplingReport {
    pub epsilon: f64,
    pub row_leaks: Vec<f64>,
}

/// How the eigenvalues were computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumMethod {
    Dense,
    Iterative,
}

/// Eigenvalues sorted by modulus descending (then real part descending).
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex<f64>>,
    pub method: SpectrumMethod,
    pub order: usize,
}

impl SpectrumReport {
    /// Count of eigenvalues within `radius` of 1 in the complex plane.
    pub fn near_one_count(&self, radius: f64) -> usize {
        self.eigenvalues
            .iter()
            .filter(|l| (*l - Complex::new(1.0, 0.0)).norm() <= radius)
            .count()
    }
}

/// Infinity-norm residual of P v = (1 - 2 alpha) v for the sign vector v
/// (+1 on users, -1 on items). Zero up to rounding for every valid model.
pub fn structural_eigenpair_residual(model: &RecWalkModel) -> f64 {
    let n = model.order();
    let lambda = 1.0 - 2.0 * model.alpha;
    let sign = |j: usize| if j < model.n_users { 1.0 } else { -1.0 };
    let mut worst = 0.0f64;
    for i in 0..n {
        let pv: f64 = model.p.matrix().row(i).map(|(j, v)| v * sign(j)).sum();
        let resid = (pv - lambda * sign(i)).abs();
        if resid > worst {
            worst = resid;
        }
    }
    worst
}

/// Per-row probability of leaving the row's block in one step; epsilon is
/// the maximum over rows.
pub fn coupling_degree(p: &StochasticMatrix, partition: &Partition) -> Result<CouplingReport> {
    if partition.order() != p.order() {
        return Err(Error::InvalidPartition(format!(
            "partition order {} does not match matrix order {}",
            partition.order(),
            p.order()
        )));
    }
    let labels = partition.labels();
    let mut row_leaks = vec![0.0; p.order()];
    for i in 0..p.order() {
        let mut leak = 0.0;
        for (j, v) in p.matrix().row(i) {
            if labels[j] != labels[i] {
                leak += v;
            }
        }
        row_leaks[i] = leak;
    }
    let epsilon = row_leaks.iter().copied().fold(0.0, f64::max);
    Ok(CouplingReport { epsilon, row_leaks })
}

/// Full spectrum of the densified matrix via a general eigensolver. Refuses
/// matrices larger than `max_order`.
pub fn dense_spectrum(p: &StochasticMatrix, max_order: usize) -> Result<SpectrumReport> {
    let n = p.order();
    if n > max_order {
        return Err(Error::TooLarge {
            order: n,
            max_order,
        });
    }
    let mut dense = DMatrix::zeros(n, n);
    for (i, j, v) in p.matrix().triplets() {
        dense[(i, j)] = v;
    }
    // bounded Schur iteration: the unbounded eigensolver can stall at
    // machine precision on stochastic matrices with clustered eigenvalues
    let schur = Schur::try_new(dense.clone(), 1e-12, 100_000)
        .or_else(|| Schur::try_new(dense, 1e-9, 100_000))
        .ok_or(Error::NotConverged(100_000))?;
    let mut eigenvalues: Vec<Complex<f64>> =
        schur.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
    });
    Ok(SpectrumReport {
        eigenvalues,
        method: SpectrumMethod::Dense,
        order: n,
    })
}

/// Stationary distribution of a primitive stochastic matrix by left power
/// iteration to 1-norm tolerance `tol`.
pub fn stationary_distribution(p: &StochasticMatrix, tol: f64, max_iters: usize) -> Result<DenseVector> {
    let n = p.order();
    let mut x = DenseVector::new(vec![1.0 / n as f64; n]);
    for _ in 0..max_iters {
        let mut next = DenseVector::new(p.matrix().vec_mul(x.as_slice())?);
        next.normalize_l1();
        let delta = next.l1_distance(&x);
        x = next;
        if delta < tol {
            return Ok(x);
        }
    }
    Err(Error::NotConverged(max_iters))
}

/// Estimates |lambda_2| by power iteration on P deflated by its stationary
/// rank-one component: x -> xP - (sum x) pi. The modulus estimate averages
/// the per-step norm growth over a window so complex pairs converge too.
pub fn subdominant_modulus(p: &StochasticMatrix, tol: f64) -> Result<f64> {
    let n = p.order();
    if n == 1 {
        return Ok(0.0);
    }
    let pi = stationary_distribution(p, 1e-12, 200_000)?;

    // deterministic start, deflated
    let mut x: Vec<f64> = (0..n)
        .map(|i| (i as f64 * 0.754_877_666 + 0.1).sin())
        .collect();
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut y = p.matrix().vec_mul(x).expect("dimensions fixed");
        let mass: f64 = x.iter().sum();
        for (yj, pj) in y.iter_mut().zip(pi.as_slice()) {
            *yj -= mass * pj;
        }
        y
    };
    x = apply(&x);

    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let window = 16usize;
    let max_iters = 200_000usize;
    let mut estimate = f64::NAN;
    let mut log_sum = 0.0f64;
    let mut steps_in_window = 0usize;
    let current = norm(&x);
    if current < 1e-280 {
        return Ok(0.0);
    }
    for v in &mut x {
        *v /= current;
    }
    for _ in 0..max_iters {
        let y = apply(&x);
        let ny = norm(&y);
        if ny < 1e-280 {
            return Ok(0.0);
        }
        log_sum += ny.ln();
        steps_in_window += 1;
        x = y;
        for v in &mut x {
            *v /= ny;
        }
        if steps_in_window == window {
            let new_estimate = (log_sum / window as f64).exp();
            if estimate.is_finite()
                && (new_estimate - estimate).abs() <= tol * estimate.max(1e-12)
            {
                return Ok(new_estimate);
            }
            estimate = new_estimate;
            log_sum = 0.0;
            steps_in_window = 0;
        }
    }
    Err(Error::NotConverged(max_iters))
}

/// One row per walk step: mean pairwise 1-norm distance between the sampled
/// users' landing distributions, and their mean 1-norm distance to the
/// stationary estimate.
#[derive(Debug, Clone)]
pub struct DriftReport {
    pub rows: Vec<DriftRow>,
}

#[derive(Debug, Clone, Copy)]
pub struct DriftRow {
    pub step: usize,
    pub mean_pairwise: f64,
    pub mean_to_stationary: f64,
}

/// Tracks how personalized the k-step distributions of the sampled users
/// remain as k grows.
pub fn landing_drift(model: &RecWalkModel, users: &[usize], k_max: usize) -> Result<DriftReport> {
    if users.is_empty() {
        return Err(Error::InvalidPartition("no users sampled".into()));
    }
    let pi = stationary_distribution(&model.p, 1e-12, 200_000)?;
    let mut current: Vec<DenseVector> = users
        .iter()
        .map(|&u| DenseVector::basis(model.order(), u))
        .collect();
    let mut rows = Vec::with_capacity(k_max + 1);
    for step in 0..=k_max {
        let mut pairwise = 0.0;
        let mut pairs = 0usize;
        for a in 0..current.len() {
            for b in a + 1..current.len() {
                pairwise += current[a].l1_distance(&current[b]);
                pairs += 1;
            }
        }
        let mean_pairwise = if pairs > 0 { pairwise / pairs as f64 } else { 0.0 };
        let mean_to_stationary = current
            .iter()
            .map(|x| x.l1_distance(&pi))
            .sum::<f64>()
            / current.len() as f64;
        rows.push(DriftRow {
            step,
            mean_pairwise,
            mean_to_stationary,
        });
        if step < k_max {
            for x in &mut current {
                *x = DenseVector::new(model.p.matrix().vec_mul(x.as_slice())?);
            }
        }
    }
    Ok(DriftReport { rows })
}

/// CSV with header `re,im,modulus`, one eigenvalue per line.
pub fn write_spectrum_csv<W: Write>(report: &SpectrumReport, mut out: W) -> Result<()> {
    writeln!(out, "re,im,modulus")?;
    for l in &report.eigenvalues {
        writeln!(out, "{},{},{}", l.re, l.im, l.norm())?;
    }
    Ok(())
}

/// CSV with header `k,pairwise,to_stationary`.
pub fn write_drift_csv<W: Write>(report: &DriftReport, mut out: W) -> Result<()> {
    writeln!(out, "k,pairwise,to_stationary")?;
    for row in &report.rows {
        writeln!(out, "{},{},{}", row.step, row.mean_pairwise, row.mean_to_stationary)?;
    }
    Ok(())
}
