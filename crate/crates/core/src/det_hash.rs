//! Deterministic hashing for simulation state.
//!
//! The std maps seed SipHash randomly per process, which makes iteration
//! order (and therefore registry layout and event sampling) differ between
//! identical runs. The engines use FNV-1a instead: with identical insertion
//! histories the maps behave identically, keeping runs reproducible from
//! their seeds alone.

use std::collections::{HashMap, HashSet};
use std::hash::{BuildHasherDefault, Hasher};

pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }
}

impl Hasher for Fnv1a {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        let mut h = self.0;
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.0 = h;
    }
}

pub type DetState = BuildHasherDefault<Fnv1a>;
pub type DetHashMap<K, V> = HashMap<K, V, DetState>;
pub type DetHashSet<K> = HashSet<K, DetState>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_order_is_reproducible() {
        let build = || {
            let mut m: DetHashMap<String, u32> = DetHashMap::default();
            for i in 0..100u32 {
                m.insert(format!("key{i}"), i);
            }
            m.remove("key50");
            m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>()
        };
        assert_eq!(build(), build());
    }
}
