//! Seeded k-fold partitioning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GeniError, Result};
use crate::graph::NodeId;

/// Shuffles `nodes` with `seed` and cuts the result into `k` contiguous folds.
/// The first `len % k` folds receive one extra node.
pub fn split_folds(nodes: &[NodeId], k: usize, seed: u64) -> Result<Vec<Vec<NodeId>>> {
    if k < 2 {
        return Err(GeniError::invalid(format!("need at least 2 folds, got {k}")));
    }
    if k > nodes.len() {
        return Err(GeniError::invalid(format!(
            "cannot split {} nodes into {k} folds",
            nodes.len()
        )));
    }
    let mut shuffled = nodes.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = shuffled.len() / k;
    let extra = shuffled.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut rest = shuffled.as_slice();
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let (head, tail) = rest.split_at(size);
        folds.push(head.to_vec());
        rest = tail;
    }
    Ok(folds)
}
