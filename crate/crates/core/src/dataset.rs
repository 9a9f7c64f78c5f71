//! Implicit-feedback ingestion, degree filtering and seeded leave-one-out
//! splitting with per-user negative samples.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Number of sampled unseen items per evaluated user.
pub const NEGATIVES_PER_USER: usize = 999;

/// Binarized interaction log with dense user/item index maps.
#[derive(Debug, Clone)]
pub struct InteractionLog {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    /// Deduplicated (user, item) pairs, sorted row-major.
    pairs: Vec<(usize, usize)>,
}

impl InteractionLog {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn nnz(&self) -> usize {
        self.pairs.len()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user_index(&self, external: &str) -> Option<usize> {
        self.user_index.get(external).copied()
    }

    pub fn item_index(&self, external: &str) -> Option<usize> {
        self.item_index.get(external).copied()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// The binary interaction matrix R.
    pub fn to_matrix(&self) -> SparseMatrix {
        let triplets: Vec<_> = self.pairs.iter().map(|&(u, i)| (u, i, 1.0)).collect();
        SparseMatrix::from_triplets(self.n_users(), self.n_items(), &triplets)
            .expect("log pairs are deduplicated and in range")
    }

    /// Builds a log directly from index pairs; ids become the decimal indices.
    /// Intended for synthetic fixtures and tests.
    pub fn from_pairs(n_users: usize, n_items: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut dedup: Vec<(usize, usize)> = pairs.to_vec();
        dedup.sort_unstable();
        dedup.dedup();
        for &(u, i) in &dedup {
            if u >= n_users {
                return Err(Error::IndexOutOfRange { index: u, bound: n_users });
            }
            if i >= n_items {
                return Err(Error::IndexOutOfRange { index: i, bound: n_items });
            }
        }
        let user_ids: Vec<String> = (0..n_users).map(|u| u.to_string()).collect();
        let item_ids: Vec<String> = (0..n_items).map(|i| i.to_string()).collect();
        let user_index = user_ids
            .iter()
            .enumerate()
            .map(|(k, v)| (v.clone(), k))
            .collect();
        let item_index = item_ids
            .iter()
            .enumerate()
            .map(|(k, v)| (v.clone(), k))
            .collect();
        Ok(InteractionLog {
            user_ids,
            item_ids,
            user_index,
            item_index,
            pairs: dedup,
        })
    }
}

/// Leave-one-out evaluation split: the training matrix, one held-out item for
/// each eligible user, and that user's sampled unseen items.
#[derive(Debug, Clone)]
pub struct EvalSplit {
    pub r_train: SparseMatrix,
    pub heldout: BTreeMap<usize, usize>,
    pub negatives: BTreeMap<usize, Vec<usize>>,
    pub seed: u64,
}

fn split_field<'a>(line: &'a str, delim: &str) -> Vec<&'a str> {
    line.split(delim).collect()
}

fn detect_delimiter(line: &str) -> &'static str {
    if line.contains("::") {
        "::"
    } else if line.contains('\t') {
        "\t"
    } else {
        ","
    }
}

/// Loads an interaction file (one interaction per line, delimiter one of
/// tab/comma/`::`, fields `user`, `item` and optional ignored rating and
/// timestamp), binarizes it, and iterates user/item degree filtering until a
/// fixed point.
pub fn load_interactions<P: AsRef<Path>>(
    path: P,
    min_user_deg: usize,
    min_item_deg: usize,
) -> Result<InteractionLog> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);

    let mut raw: Vec<(String, String)> = Vec::new();
    let mut delim: Option<&'static str> = None;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let d = *delim.get_or_insert_with(|| detect_delimiter(trimmed));
        let fields = split_field(trimmed, d);
        if fields.len() < 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                line: line_no + 1,
                message: format!("expected at least user{d}item, got {trimmed:?}"),
            });
        }
        raw.push((fields[0].to_string(), fields[1].to_string()));
    }

    // dedupe while keeping first-appearance order for stable index assignment
    let mut seen = HashSet::new();
    raw.retain(|p| seen.insert(p.clone()));
    if raw.is_empty() {
        return Err(Error::EmptyAfterFiltering);
    }

    // fixed-point degree filtering on external ids
    loop {
        let mut user_deg: HashMap<String, usize> = HashMap::new();
        let mut item_deg: HashMap<String, usize> = HashMap::new();
        for (u, i) in &raw {
            *user_deg.entry(u.clone()).or_default() += 1;
            *item_deg.entry(i.clone()).or_default() += 1;
        }
        let before = raw.len();
        raw.retain(|(u, i)| {
            user_deg[u.as_str()] >= min_user_deg && item_deg[i.as_str()] >= min_item_deg
        });
        if raw.is_empty() {
            return Err(Error::EmptyAfterFiltering);
        }
        if raw.len() == before {
            break;
        }
    }

    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut user_index = HashMap::new();
    let mut item_index = HashMap::new();
    let mut pairs = Vec::with_capacity(raw.len());
    for (u, i) in &raw {
        let ui = *user_index.entry(u.clone()).or_insert_with(|| {
            user_ids.push(u.clone());
            user_ids.len() - 1
        });
        let ii = *item_index.entry(i.clone()).or_insert_with(|| {
            item_ids.push(i.clone());
            item_ids.len() - 1
        });
        pairs.push((ui, ii));
    }
    pairs.sort_unstable();

    Ok(InteractionLog {
        user_ids,
        item_ids,
        user_index,
        item_index,
        pairs,
    })
}

/// Per-user RNG stream: mixes the split seed with the user index so that each
/// user's draws are independent of every other user's.
fn user_rng(seed: u64, user: usize) -> ChaCha8Rng {
    // splitmix64 finalizer over the combined value
    let mut z = seed ^ (user as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// Core leave-one-out splitter over an interaction matrix.
///
/// Users with a single interaction keep it in training and receive no
/// held-out item. A held-out item is never allowed to zero out an item
/// column; if all of a user's items would do so the user is skipped.
fn split_matrix(r: &SparseMatrix, seed: u64) -> EvalSplit {
    let n_users = r.n_rows();
    let n_items = r.n_cols();

    let mut col_deg: Vec<usize> = (0..n_items).map(|j| r.col_nnz(j)).collect();
    let mut heldout = BTreeMap::new();
    let mut negatives = BTreeMap::new();

    for u in 0..n_users {
        let items: Vec<usize> = r.row(u).map(|(j, _)| j).collect();
        if items.len() < 2 {
            continue;
        }
        let mut rng = user_rng(seed, u);
        let mut order = items.clone();
        order.shuffle(&mut rng);
        let Some(&chosen) = order.iter().find(|&&j| col_deg[j] >= 2) else {
            continue;
        };
        col_deg[chosen] -= 1;
        heldout.insert(u, chosen);

        let consumed: HashSet<usize> = items.iter().copied().collect();
        let unseen_count = n_items - consumed.len();
        let wanted = NEGATIVES_PER_USER.min(unseen_count);
        let negs = if wanted * 3 >= unseen_count {
            // dense case: partial Fisher-Yates over the explicit unseen list
            let mut unseen: Vec<usize> =
                (0..n_items).filter(|j| !consumed.contains(j)).collect();
            for k in 0..wanted {
                let pick = rng.gen_range(k..unseen.len());
                unseen.swap(k, pick);
            }
            unseen.truncate(wanted);
            unseen
        } else {
            // sparse case: rejection sampling
            let mut drawn = HashSet::new();
            let mut out = Vec::with_capacity(wanted);
            while out.len() < wanted {
                let j = rng.gen_range(0..n_items);
                if !consumed.contains(&j) && drawn.insert(j) {
                    out.push(j);
                }
            }
            out
        };
        negatives.insert(u, negs);
    }

    let triplets: Vec<_> = r
        .triplets()
        .filter(|&(u, j, _)| heldout.get(&u) != Some(&j))
        .collect();
    let r_train = SparseMatrix::from_triplets(n_users, n_items, &triplets)
        .expect("training triplets come from a valid matrix");

    EvalSplit {
        r_train,
        heldout,
        negatives,
        seed,
    }
}

/// Splits the full log into training data plus one held-out test item per
/// eligible user, with seeded negative samples. Deterministic in `seed`.
pub fn leave_one_out(log: &InteractionLog, seed: u64) -> EvalSplit {
    split_matrix(&log.to_matrix(), seed)
}

/// Repeats the leave-one-out procedure on training data to produce a
/// validation split for model selection.
pub fn make_validation(r_train: &SparseMatrix, seed: u64) -> EvalSplit {
    split_matrix(r_train, seed)
}

/// Writes a split in the replayable text format: one line per evaluated user,
/// `user<TAB>heldout<TAB>neg1,neg2,...`.
pub fn write_split<W: Write>(split: &EvalSplit, mut out: W) -> Result<()> {
    for (&u, &h) in &split.heldout {
        let negs: Vec<String> = split.negatives[&u].iter().map(|j| j.to_string()).collect();
        writeln!(out, "{u}\t{h}\t{}", negs.join(","))?;
    }
    Ok(())
}

/// Reads back the per-user lines written by [`write_split`]. The training
/// matrix is not stored in the file; callers rebuild it from the log and the
/// held-out assignments.
pub fn read_split_lines<R: BufRead>(
    reader: R,
) -> Result<(BTreeMap<usize, usize>, BTreeMap<usize, Vec<usize>>)> {
    let mut heldout = BTreeMap::new();
    let mut negatives = BTreeMap::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let parse = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse {
                line: line_no + 1,
                message: format!("bad index {s:?}"),
            })
        };
        let mut fields = line.split('\t');
        let (u, h, negs) = match (fields.next(), fields.next(), fields.next()) {
            (Some(u), Some(h), Some(n)) => (parse(u)?, parse(h)?, n),
            _ => {
                return Err(Error::Parse {
                    line: line_no + 1,
                    message: "expected user<TAB>heldout<TAB>negatives".into(),
                })
            }
        };
        let negs = negs
            .split(',')
            .filter(|s| !s.is_empty())
            .map(parse)
            .collect::<Result<Vec<_>>>()?;
        heldout.insert(u, h);
        negatives.insert(u, negs);
    }
    Ok((heldout, negatives))
}

/// Rebuilds an [`EvalSplit`] from a full matrix and previously stored
/// held-out/negative assignments.
pub fn replay_split(
    r: &SparseMatrix,
    heldout: BTreeMap<usize, usize>,
    negatives: BTreeMap<usize, Vec<usize>>,
    seed: u64,
) -> Result<EvalSplit> {
    for (&u, &h) in &heldout {
        if u >= r.n_rows() || h >= r.n_cols() {
            return Err(Error::IndexMapMismatch(format!(
                "heldout ({u}, {h}) outside {}x{} matrix",
                r.n_rows(),
                r.n_cols()
            )));
        }
    }
    let triplets: Vec<_> = r
        .triplets()
        .filter(|&(u, j, _)| heldout.get(&u) != Some(&j))
        .collect();
    let r_train = SparseMatrix::from_triplets(r.n_rows(), r.n_cols(), &triplets)
        .expect("triplets from valid matrix");
    Ok(EvalSplit {
        r_train,
        heldout,
        negatives,
        seed,
    })
}
