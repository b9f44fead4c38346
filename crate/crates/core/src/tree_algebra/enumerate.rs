//! Enumeration of the shapes reachable from the radius-h ball by successive
//! h-splittings, and of the occupied-tree isomorphism classes reachable under
//! the h-herds jump dynamics.

use super::address::TreeAddress;
use super::canonical::{canonical_code, shape_code, CanonicalCode};
use super::tree::{active_edges, ball, h_split, Ambient, FiniteTree};
use crate::{Error, Result, CODE_VERSION};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

/// Default cap on enumerated entries; exceeding it is an error, never a
/// silent truncation.
pub const DEFAULT_ENUM_BOUND: usize = 1_000_000;

pub type ShapeId = usize;
pub type TypeId = usize;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HShape {
    pub tree: FiniteTree,
    pub code: CanonicalCode,
}

/// All shapes reachable from the radius-h ball by h-splittings, deduplicated
/// by canonical code. Entry 0 is the ball itself.
#[derive(Clone, Serialize, Deserialize)]
pub struct ShapeTable {
    pub d: usize,
    pub h: usize,
    pub shapes: Vec<HShape>,
    #[serde(skip)]
    by_code: HashMap<CanonicalCode, ShapeId>,
}

impl ShapeTable {
    pub fn enumerate(d: usize, h: usize, bound: usize) -> Result<Self> {
        let mut table = ShapeTable {
            d,
            h,
            shapes: Vec::new(),
            by_code: HashMap::new(),
        };
        table.insert(ball(d, h));
        let mut next = 0;
        while next < table.shapes.len() {
            let tree = table.shapes[next].tree.clone();
            next += 1;
            for (a, b) in tree.edges() {
                for (side, far) in [(&a, &b), (&b, &a)] {
                    let split = h_split(&tree, side, far, h)?;
                    table.insert(split.tree);
                    if table.shapes.len() > bound {
                        return Err(Error::EnumerationOverflow { d, h, bound });
                    }
                }
            }
        }
        Ok(table)
    }

    fn insert(&mut self, tree: FiniteTree) -> ShapeId {
        let code = shape_code(&tree);
        if let Some(&id) = self.by_code.get(&code) {
            return id;
        }
        let id = self.shapes.len();
        self.by_code.insert(code.clone(), id);
        self.shapes.push(HShape { tree, code });
        id
    }

    pub fn lookup(&self, code: &CanonicalCode) -> Option<ShapeId> {
        self.by_code.get(code).copied()
    }

    pub fn contains_tree(&self, tree: &FiniteTree) -> bool {
        self.lookup(&shape_code(tree)).is_some()
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    fn rebuild_index(&mut self) {
        self.by_code = self
            .shapes
            .iter()
            .enumerate()
            .map(|(i, s)| (s.code.clone(), i))
            .collect();
    }
}

/// Jump structure of one occupied-tree class: per-particle death targets
/// (`None` when the herd dies out), birth targets with their occupied-neighbor
/// multiplicities, and per-active-edge split offspring pairs.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TypeJumps {
    pub deaths: Vec<Option<TypeId>>,
    pub births: Vec<(TypeId, u32)>,
    pub splits: Vec<(TypeId, TypeId)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TypeClass {
    pub tree: FiniteTree,
    pub occupied: BTreeSet<TreeAddress>,
    pub code: CanonicalCode,
    pub jumps: TypeJumps,
}

impl TypeClass {
    pub fn particles(&self) -> usize {
        self.occupied.len()
    }
}

/// Isomorphism classes of nonempty occupied trees reachable from the class of
/// (radius-h ball, {root}) under the h-herds jump dynamics, together with the
/// induced type-transition graph.
#[derive(Clone, Serialize, Deserialize)]
pub struct TypeTable {
    pub version: u32,
    pub d: usize,
    pub h: usize,
    pub start: TypeId,
    pub classes: Vec<TypeClass>,
    pub shapes: ShapeTable,
    #[serde(skip)]
    by_code: HashMap<CanonicalCode, TypeId>,
}

impl TypeTable {
    pub fn enumerate(d: usize, h: usize, bound: usize) -> Result<Self> {
        let shapes = ShapeTable::enumerate(d, h, bound)?;
        let mut table = TypeTable {
            version: CODE_VERSION,
            d,
            h,
            start: 0,
            classes: Vec::new(),
            shapes,
            by_code: HashMap::new(),
        };
        let root: BTreeSet<TreeAddress> = [TreeAddress::root()].into_iter().collect();
        let start = table.intern(ball(d, h), root)?;
        table.start = start;

        let mut next = 0;
        while next < table.classes.len() {
            let jumps = table.jumps_of(next)?;
            table.classes[next].jumps = jumps;
            next += 1;
            if table.classes.len() > bound {
                return Err(Error::EnumerationOverflow { d, h, bound });
            }
        }
        Ok(table)
    }

    fn intern(&mut self, tree: FiniteTree, occupied: BTreeSet<TreeAddress>) -> Result<TypeId> {
        debug_assert!(!occupied.is_empty());
        let code = canonical_code(&tree, &occupied);
        if let Some(&id) = self.by_code.get(&code) {
            return Ok(id);
        }
        if self.shapes.lookup(&shape_code(&tree)).is_none() {
            return Err(Error::Consistency(format!(
                "shape of a reachable class is missing from the shape table (d={}, h={})",
                self.d, self.h
            )));
        }
        let id = self.classes.len();
        self.by_code.insert(code.clone(), id);
        self.classes.push(TypeClass {
            tree,
            occupied,
            code,
            jumps: TypeJumps::default(),
        });
        Ok(id)
    }

    fn jumps_of(&mut self, id: TypeId) -> Result<TypeJumps> {
        let tree = self.classes[id].tree.clone();
        let occ = self.classes[id].occupied.clone();
        let mut jumps = TypeJumps::default();

        // deaths: one per particle
        for u in &occ {
            let mut rest = occ.clone();
            rest.remove(u);
            jumps.deaths.push(if rest.is_empty() {
                None
            } else {
                Some(self.intern(tree.clone(), rest)?)
            });
        }

        // births: unoccupied in-shape vertices weighted by occupied-neighbor count
        let mut births: HashMap<TypeId, u32> = HashMap::new();
        for (i, v) in tree.vertices().iter().enumerate() {
            if occ.contains(v) {
                continue;
            }
            let mult = tree
                .neighbors_idx(i)
                .iter()
                .filter(|&&j| occ.contains(tree.address(j as usize)))
                .count() as u32;
            if mult == 0 {
                continue;
            }
            let mut grown = occ.clone();
            grown.insert(v.clone());
            let target = self.intern(tree.clone(), grown)?;
            *births.entry(target).or_insert(0) += mult;
        }
        let mut births: Vec<(TypeId, u32)> = births.into_iter().collect();
        births.sort_unstable();
        jumps.births = births;

        // splits: one per active edge; the offspring occupied sets are the
        // intersections with the original components, not with the regrown
        // trees (the regrown side is fresh, unoccupied space)
        for (a, b) in active_edges(Ambient::Finite(&tree), &occ) {
            let sa = h_split(&tree, &a, &b, self.h)?;
            let sb = h_split(&tree, &b, &a, self.h)?;
            let side_a = tree.side_of_edge(&a, &b)?;
            let side_b = tree.side_of_edge(&b, &a)?;
            let occ_a: BTreeSet<TreeAddress> = occ.intersection(&side_a).cloned().collect();
            let occ_b: BTreeSet<TreeAddress> = occ.intersection(&side_b).cloned().collect();
            debug_assert!(!occ_a.is_empty() && !occ_b.is_empty());
            let ta = self.intern(sa.tree, occ_a)?;
            let tb = self.intern(sb.tree, occ_b)?;
            jumps.splits.push((ta, tb));
        }
        Ok(jumps)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn lookup(&self, code: &CanonicalCode) -> Option<TypeId> {
        self.by_code.get(code).copied()
    }

    /// Class id of a concrete (tree, occupied) pair.
    pub fn class_of(&self, tree: &FiniteTree, occupied: &BTreeSet<TreeAddress>) -> Result<TypeId> {
        self.lookup(&canonical_code(tree, occupied)).ok_or_else(|| {
            Error::Consistency("occupied tree class missing from type table".into())
        })
    }

    /// Successor classes named by the transition graph of `id`.
    pub fn out_neighbors(&self, id: TypeId) -> impl Iterator<Item = TypeId> + '_ {
        let j = &self.classes[id].jumps;
        j.deaths
            .iter()
            .flatten()
            .copied()
            .chain(j.births.iter().map(|&(t, _)| t))
            .chain(j.splits.iter().flat_map(|&(a, b)| [a, b]))
    }

    /// Is the type-transition graph strongly connected on the enumerated
    /// (nonempty) classes?
    pub fn strongly_connected(&self) -> bool {
        self.scc_count() == 1
    }

    /// Number of strongly connected components of the transition graph.
    pub fn scc_count(&self) -> usize {
        // Kosaraju: forward order then reverse reachability.
        let n = self.len();
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        for s in 0..n {
            if seen[s] {
                continue;
            }
            // iterative DFS with explicit post-order
            let mut stack = vec![(s, false)];
            while let Some((v, processed)) = stack.pop() {
                if processed {
                    order.push(v);
                    continue;
                }
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                stack.push((v, true));
                for w in self.out_neighbors(v) {
                    if !seen[w] {
                        stack.push((w, false));
                    }
                }
            }
        }
        let mut radj = vec![Vec::new(); n];
        for v in 0..n {
            for w in self.out_neighbors(v) {
                radj[w].push(v);
            }
        }
        let mut comp = vec![usize::MAX; n];
        let mut ncomp = 0;
        for &v in order.iter().rev() {
            if comp[v] != usize::MAX {
                continue;
            }
            let mut stack = vec![v];
            comp[v] = ncomp;
            while let Some(x) = stack.pop() {
                for &y in &radj[x] {
                    if comp[y] == usize::MAX {
                        comp[y] = ncomp;
                        stack.push(y);
                    }
                }
            }
            ncomp += 1;
        }
        ncomp
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut table: TypeTable = serde_json::from_reader(std::io::BufReader::new(file))?;
        if table.version != CODE_VERSION {
            return Err(Error::Consistency(format!(
                "type table cache version {} != code version {CODE_VERSION}",
                table.version
            )));
        }
        table.by_code = table
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.code.clone(), i))
            .collect();
        table.shapes.rebuild_index();
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_d3_h1_are_star_and_path() {
        let t = ShapeTable::enumerate(3, 1, DEFAULT_ENUM_BOUND).unwrap();
        assert_eq!(t.len(), 2);
        let mut sizes: Vec<usize> = t.shapes.iter().map(|s| s.tree.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 4]);
        // the seed ball is present
        assert!(t.contains_tree(&ball(3, 1)));
    }

    #[test]
    fn shapes_d3_h2_degree_and_diameter_law() {
        let t = ShapeTable::enumerate(3, 2, DEFAULT_ENUM_BOUND).unwrap();
        assert!(t.contains_tree(&ball(3, 2)));
        for s in &t.shapes {
            assert!(s.tree.diameter() <= 4);
            for v in s.tree.vertices() {
                let deg = s.tree.degree(v);
                assert!(deg == 1 || deg == 3, "degree {deg} in shape {:?}", s.code);
            }
        }
    }

    #[test]
    fn closure_under_splits_h2() {
        let t = ShapeTable::enumerate(3, 2, DEFAULT_ENUM_BOUND).unwrap();
        for s in &t.shapes {
            for (a, b) in s.tree.edges() {
                for (side, far) in [(&a, &b), (&b, &a)] {
                    let out = h_split(&s.tree, side, far, 2).unwrap();
                    assert!(t.contains_tree(&out.tree), "split left the table");
                }
            }
        }
    }

    #[test]
    fn types_d3_h1_has_nine_classes() {
        let t = TypeTable::enumerate(3, 1, DEFAULT_ENUM_BOUND).unwrap();
        assert_eq!(t.len(), 9);
        // start class is (star, {center})
        let start = &t.classes[t.start];
        assert_eq!(start.tree.len(), 4);
        assert_eq!(start.occupied.len(), 1);
        assert_eq!(start.tree.degree(start.occupied.iter().next().unwrap()), 3);
    }

    #[test]
    fn tiny_enumeration_bound_overflows() {
        let err = TypeTable::enumerate(3, 1, 3);
        assert!(matches!(err, Err(Error::EnumerationOverflow { bound: 3, .. })));
    }

    #[test]
    fn type_table_roundtrips_through_json() {
        let t = TypeTable::enumerate(3, 1, DEFAULT_ENUM_BOUND).unwrap();
        let dir = std::env::temp_dir().join("herdsim-core-test-cache");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("types_d3_h1.json");
        t.save_json(&path).unwrap();
        let back = TypeTable::load_json(&path).unwrap();
        assert_eq!(back.len(), t.len());
        for (a, b) in t.classes.iter().zip(back.classes.iter()) {
            assert_eq!(a.code, b.code);
        }
        assert_eq!(back.class_of(&t.classes[3].tree, &t.classes[3].occupied).unwrap(), 3);
    }
}
