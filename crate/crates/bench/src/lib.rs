//! Benchmark helpers: synthetic interaction generators shared by the
//! criterion benches.

use recwalk_core::dataset::InteractionLog;

/// Deterministic synthetic interaction log with a power-law-ish item
/// popularity profile. Guaranteed to leave no empty row or column.
pub fn synthetic_log(n_users: usize, n_items: usize, per_user: usize) -> InteractionLog {
    let mut pairs = Vec::with_capacity(n_users * per_user);
    for u in 0..n_users {
        // each user covers its "anchor" item so no column is empty
        let mut state = (u as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1);
        pairs.push((u, u % n_items));
        for _ in 1..per_user {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            // bias toward low item ids
            let r = (state % (n_items * n_items) as u64) as usize;
            let item = (r as f64).sqrt() as usize % n_items;
            pairs.push((u, item));
        }
    }
    for j in 0..n_items {
        pairs.push((j % n_users, j));
    }
    InteractionLog::from_pairs(n_users, n_items, &pairs).expect("synthetic log is valid")
}
