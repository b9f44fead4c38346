//! Canonical serialization of (tree, occupied set) pairs, invariant under any
//! relabeling that preserves tree structure and occupancy.
//!
//! Rooted AHU encoding with multiset-sorted child codes, applied from the
//! tree centroid; a bicentroidal tree is encoded from both centroids and the
//! lexicographically smaller code wins. Occupancy flags are folded into the
//! per-vertex labels.

use super::address::TreeAddress;
use super::tree::FiniteTree;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalCode(pub Vec<u8>);

impl CanonicalCode {
    pub fn hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl std::fmt::Debug for CanonicalCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "code:{}", String::from_utf8_lossy(&self.0))
    }
}

/// Centroid vertex indices (one, or two adjacent ones).
fn centroids(tree: &FiniteTree) -> Vec<usize> {
    let n = tree.len();
    if n == 1 {
        return vec![0];
    }
    // subtree sizes from an arbitrary root via iterative post-order
    let root = 0usize;
    let mut parent = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![root];
    let mut seen = vec![false; n];
    seen[root] = true;
    while let Some(i) = stack.pop() {
        order.push(i);
        for &j in tree.neighbors_idx(i) {
            let j = j as usize;
            if !seen[j] {
                seen[j] = true;
                parent[j] = i;
                stack.push(j);
            }
        }
    }
    let mut size = vec![1usize; n];
    for &i in order.iter().rev() {
        if parent[i] != usize::MAX {
            size[parent[i]] += size[i];
        }
    }
    let mut best = usize::MAX;
    let mut out = Vec::new();
    for i in 0..n {
        // heaviest component after deleting i
        let mut heavy = n - size[i];
        for &j in tree.neighbors_idx(i) {
            let j = j as usize;
            if parent[j] == i {
                heavy = heavy.max(size[j]);
            }
        }
        if heavy < best {
            best = heavy;
            out.clear();
            out.push(i);
        } else if heavy == best {
            out.push(i);
        }
    }
    debug_assert!(out.len() <= 2);
    out
}

fn encode_rooted(tree: &FiniteTree, occ: &[bool], root: usize) -> Vec<u8> {
    // iterative post-order so deep paths cannot overflow the stack
    let n = tree.len();
    let mut parent = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![root];
    let mut seen = vec![false; n];
    seen[root] = true;
    while let Some(i) = stack.pop() {
        order.push(i);
        for &j in tree.neighbors_idx(i) {
            let j = j as usize;
            if !seen[j] {
                seen[j] = true;
                parent[j] = i;
                stack.push(j);
            }
        }
    }
    let mut codes: Vec<Vec<u8>> = vec![Vec::new(); n];
    for &i in order.iter().rev() {
        let mut children: Vec<Vec<u8>> = tree
            .neighbors_idx(i)
            .iter()
            .map(|&j| j as usize)
            .filter(|&j| parent[j] == i)
            .map(|j| std::mem::take(&mut codes[j]))
            .collect();
        children.sort();
        let mut code = Vec::with_capacity(3 + children.iter().map(Vec::len).sum::<usize>());
        code.push(b'(');
        code.push(if occ[i] { b'*' } else { b'.' });
        for c in children {
            code.extend_from_slice(&c);
        }
        code.push(b')');
        codes[i] = code;
    }
    std::mem::take(&mut codes[root])
}

/// Canonical code of a (tree, occupied) pair. `occupied` must be a subset of
/// the tree's vertices.
pub fn canonical_code(tree: &FiniteTree, occupied: &BTreeSet<TreeAddress>) -> CanonicalCode {
    let occ: Vec<bool> = tree
        .vertices()
        .iter()
        .map(|a| occupied.contains(a))
        .collect();
    debug_assert_eq!(
        occ.iter().filter(|&&b| b).count(),
        occupied.len(),
        "occupied set must lie inside the tree"
    );
    let code = centroids(tree)
        .into_iter()
        .map(|c| encode_rooted(tree, &occ, c))
        .min()
        .unwrap();
    CanonicalCode(code)
}

/// Canonical code of the bare shape (no vertices occupied).
pub fn shape_code(tree: &FiniteTree) -> CanonicalCode {
    canonical_code(tree, &BTreeSet::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree_algebra::tree::{ball, random_reembedding};
    use rand::Rng;

    fn o() -> TreeAddress {
        TreeAddress::root()
    }

    #[test]
    fn leaf_permutation_symmetry() {
        let star = ball(3, 1);
        let c1 = canonical_code(&star, &[o().child(0)].into_iter().collect());
        let c2 = canonical_code(&star, &[o().child(2)].into_iter().collect());
        assert_eq!(c1, c2);
        let center = canonical_code(&star, &[o()].into_iter().collect());
        assert_ne!(center, c1);
    }

    #[test]
    fn automorphism_invariance_fuzz() {
        let mut rng = crate::rng::stream(11, crate::rng::tag::FUZZ, 0);
        for _ in 0..300 {
            // random connected subtree of the radius-3 ball
            let b = ball(3, 3);
            let size = rng.gen_range(1..=b.len());
            let mut verts: BTreeSet<TreeAddress> = [o()].into_iter().collect();
            let mut frontier = vec![o()];
            while verts.len() < size {
                let i = rng.gen_range(0..frontier.len());
                let v = frontier[i].clone();
                let nbs: Vec<_> = v
                    .neighbors(3)
                    .into_iter()
                    .filter(|w| b.contains(w) && !verts.contains(w))
                    .collect();
                if nbs.is_empty() {
                    frontier.swap_remove(i);
                    if frontier.is_empty() {
                        break;
                    }
                    continue;
                }
                let w = nbs[rng.gen_range(0..nbs.len())].clone();
                verts.insert(w.clone());
                frontier.push(w);
            }
            let tree = FiniteTree::from_addresses(3, verts.clone()).unwrap();
            let occupied: BTreeSet<TreeAddress> = verts
                .iter()
                .filter(|_| rng.gen_bool(0.5))
                .cloned()
                .collect();
            let code = canonical_code(&tree, &occupied);
            let (tree2, occ2) = random_reembedding(&tree, &occupied, &mut rng);
            assert_eq!(code, canonical_code(&tree2, &occ2));
        }
    }

    #[test]
    fn occupancy_distinguishes() {
        let b = ball(3, 2);
        let a = canonical_code(&b, &[o()].into_iter().collect());
        let c = canonical_code(&b, &[o(), o().child(0)].into_iter().collect());
        assert_ne!(a, c);
    }
}
