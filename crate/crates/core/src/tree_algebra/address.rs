//! Global addressing of the infinite d-regular tree.
//!
//! A vertex is the sequence of edge-slot labels on the path from a fixed
//! root: the first label picks one of the root's d slots, every later label
//! one of the d-1 non-parent slots. All herd positions share this one
//! address space.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TreeAddress(pub Vec<u8>);

impl TreeAddress {
    pub fn root() -> Self {
        TreeAddress(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn parent(&self) -> Option<TreeAddress> {
        if self.0.is_empty() {
            None
        } else {
            Some(TreeAddress(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// Number of child slots below this vertex (`d` at the root, `d-1`
    /// elsewhere; the remaining slot is the parent edge).
    pub fn child_slots(&self, d: usize) -> usize {
        if self.is_root() {
            d
        } else {
            d - 1
        }
    }

    pub fn child(&self, slot: u8) -> TreeAddress {
        let mut path = self.0.clone();
        path.push(slot);
        TreeAddress(path)
    }

    /// The d neighbors in the infinite tree, parent first (children only for
    /// the root).
    pub fn neighbors(&self, d: usize) -> Vec<TreeAddress> {
        let mut out = Vec::with_capacity(d);
        if let Some(p) = self.parent() {
            out.push(p);
        }
        for slot in 0..self.child_slots(d) {
            out.push(self.child(slot as u8));
        }
        out
    }

    /// Neighbor by uniform slot index in `0..d`: slot 0 is the parent for
    /// non-root vertices.
    pub fn neighbor(&self, d: usize, slot: usize) -> TreeAddress {
        debug_assert!(slot < d);
        if self.is_root() {
            self.child(slot as u8)
        } else if slot == 0 {
            self.parent().unwrap()
        } else {
            self.child((slot - 1) as u8)
        }
    }

    /// Two addresses are adjacent iff one extends the other by one label.
    pub fn is_adjacent(&self, other: &TreeAddress) -> bool {
        let (short, long) = if self.depth() < other.depth() {
            (self, other)
        } else {
            (other, self)
        };
        long.depth() == short.depth() + 1 && long.0[..short.depth()] == short.0[..]
    }

    /// Is `self` an ancestor-or-equal of `other` (i.e. a path prefix)?
    pub fn is_prefix_of(&self, other: &TreeAddress) -> bool {
        self.depth() <= other.depth() && other.0[..self.depth()] == self.0[..]
    }

    fn common_prefix_len(&self, other: &TreeAddress) -> usize {
        self.0
            .iter()
            .zip(other.0.iter())
            .take_while(|(a, b)| a == b)
            .count()
    }

    /// Graph distance in the infinite tree.
    pub fn dist(&self, other: &TreeAddress) -> usize {
        let l = self.common_prefix_len(other);
        (self.depth() - l) + (other.depth() - l)
    }

    /// Vertices on the path from `self` to `other`, inclusive.
    pub fn path_to(&self, other: &TreeAddress) -> Vec<TreeAddress> {
        let l = self.common_prefix_len(other);
        let mut out = Vec::with_capacity(self.dist(other) + 1);
        let mut a = self.clone();
        while a.depth() > l {
            out.push(a.clone());
            a = a.parent().unwrap();
        }
        out.push(a); // the common ancestor
        let mut tail = Vec::new();
        let mut b = other.clone();
        while b.depth() > l {
            tail.push(b.clone());
            b = b.parent().unwrap();
        }
        out.extend(tail.into_iter().rev());
        out
    }
}

impl fmt::Debug for TreeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            write!(f, "o")
        } else {
            write!(f, "o")?;
            for l in &self.0 {
                write!(f, ".{l}")?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacency_is_extension_by_one_label() {
        let o = TreeAddress::root();
        let a = o.child(2);
        let b = a.child(0);
        assert!(o.is_adjacent(&a));
        assert!(a.is_adjacent(&b));
        assert!(!o.is_adjacent(&b));
        assert!(!a.is_adjacent(&o.child(1).child(0)));
    }

    #[test]
    fn distances_and_paths() {
        let o = TreeAddress::root();
        let a = o.child(0).child(1);
        let b = o.child(2);
        assert_eq!(a.dist(&b), 3);
        let path = a.path_to(&b);
        assert_eq!(path.len(), 4);
        assert_eq!(path[0], a);
        assert_eq!(path[3], b);
        for w in path.windows(2) {
            assert!(w[0].is_adjacent(&w[1]));
        }
    }

    #[test]
    fn neighbor_slots_cover_all_neighbors() {
        let d = 3;
        let v = TreeAddress::root().child(1);
        let by_slot: Vec<_> = (0..d).map(|s| v.neighbor(d, s)).collect();
        let listed = v.neighbors(d);
        assert_eq!(by_slot.len(), listed.len());
        for n in &listed {
            assert!(by_slot.contains(n));
            assert!(v.is_adjacent(n));
        }
    }
}
