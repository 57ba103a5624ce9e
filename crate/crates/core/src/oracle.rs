//! Exhaustive reference search over tree-child cherry-picking sequences.
//!
//! Trees are kept as sets of clusters encoded as `u64` masks, which limits the oracle to 64
//! taxa. It shares no code with the branch-and-bound solver.

use std::collections::HashMap;

use crate::forest::{CherryPickingSequence, Pair};
use crate::tree::{Instance, TaxonId, Tree};

/// Instances above this many taxa take very long; the oracle still runs but logs a warning.
pub const RECOMMENDED_MAX_TAXA: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleResult {
    pub min_weight: Option<u32>,
    pub witness: Option<CherryPickingSequence>,
    /// Number of sequence prefixes examined.
    pub explored: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct MaskTree {
    leaves: u64,
    /// Non-singleton clusters, sorted.
    clusters: Vec<u64>,
}

impl MaskTree {
    fn from_tree(tree: &Tree) -> MaskTree {
        let mut clusters: Vec<u64> =
            tree.clusters().iter().map(|c| c.iter().fold(0u64, |m, t| m | 1 << t.0)).collect();
        let leaves = clusters.iter().fold(0, |a, &c| a | c);
        clusters.retain(|c| c.count_ones() >= 2);
        clusters.sort_unstable();
        clusters.dedup();
        MaskTree { leaves, clusters }
    }

    fn has_cherry(&self, x: u32, y: u32) -> bool {
        self.clusters.binary_search(&(1 << x | 1 << y)).is_ok()
    }

    fn remove(&self, x: u32) -> MaskTree {
        let mask = !(1u64 << x);
        let mut clusters: Vec<u64> =
            self.clusters.iter().map(|c| c & mask).filter(|c| c.count_ones() >= 2).collect();
        clusters.sort_unstable();
        clusters.dedup();
        MaskTree { leaves: self.leaves & mask, clusters }
    }
}

struct Search {
    n: usize,
    explored: u64,
    /// Largest remaining pair budget known to fail from a state.
    failed: HashMap<(Vec<MaskTree>, u64), usize>,
    path: Vec<(u32, u32)>,
}

impl Search {
    /// Depth-first search for a completion using at most `budget` more non-terminal pairs.
    fn dfs(&mut self, trees: &[MaskTree], forbidden: u64, budget: usize) -> Option<u32> {
        self.explored += 1;
        let present = trees.iter().fold(0u64, |a, t| a | t.leaves);
        if present.count_ones() == 1 {
            return Some(present.trailing_zeros());
        }
        if (present.count_ones() as usize) - 1 > budget {
            return None;
        }
        let key = (trees.to_vec(), forbidden);
        if self.failed.get(&key).is_some_and(|&b| b >= budget) {
            return None;
        }
        for x in 0..self.n as u32 {
            if present & 1 << x == 0 {
                continue;
            }
            for y in 0..self.n as u32 {
                if y == x || forbidden & 1 << y != 0 || !trees.iter().any(|t| t.has_cherry(x, y)) {
                    continue;
                }
                let mut next: Vec<MaskTree> =
                    trees.iter().map(|t| if t.has_cherry(x, y) { t.remove(x) } else { t.clone() }).collect();
                next.sort();
                self.path.push((x, y));
                if let Some(last) = self.dfs(&next, forbidden | 1 << x, budget - 1) {
                    return Some(last);
                }
                self.path.pop();
            }
        }
        self.failed.insert(key, budget);
        None
    }
}

/// The minimum weight of a tree-child sequence for `instance`, if it is at most `k_max`.
pub fn brute_force_htc(instance: &Instance, k_max: u32) -> OracleResult {
    let n = instance.num_taxa();
    assert!(n <= 64, "the oracle handles at most 64 taxa");
    if n > RECOMMENDED_MAX_TAXA {
        log::warn!("oracle on {n} taxa may take very long");
    }
    let mut trees: Vec<MaskTree> = instance.trees.iter().map(MaskTree::from_tree).collect();
    trees.sort();
    let mut search = Search { n, explored: 0, failed: HashMap::new(), path: Vec::new() };
    for k in 0..=k_max {
        search.failed.clear();
        search.path.clear();
        if let Some(last) = search.dfs(&trees, 0, n - 1 + k as usize) {
            let mut pairs: Vec<Pair> =
                search.path.iter().map(|&(x, y)| Pair::new(TaxonId(x), TaxonId(y))).collect();
            pairs.push(Pair::terminal(TaxonId(last)));
            let witness = CherryPickingSequence::new(pairs, n);
            return OracleResult {
                min_weight: Some(witness.weight() as u32),
                witness: Some(witness),
                explored: search.explored,
            };
        }
    }
    OracleResult { min_weight: None, witness: None, explored: search.explored }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::apply_sequence;
    use crate::newick::parse_instance;

    #[test]
    fn four_tree_instance_needs_three() {
        let inst =
            parse_instance("(((a,b),e),(c,d)); (((a,b),(c,e)),d); ((a,(e,(b,c))),d); ((a,(e,b)),(c,d));")
                .unwrap();
        let r = brute_force_htc(&inst, 3);
        assert_eq!(r.min_weight, Some(3));
        assert!(apply_sequence(&inst, r.witness.as_ref().unwrap()).is_valid_tree_child_cps());
        assert_eq!(brute_force_htc(&inst, 2).min_weight, None);
    }

    #[test]
    fn single_tree_is_free() {
        let inst = parse_instance("((a,b),(c,d));").unwrap();
        assert_eq!(brute_force_htc(&inst, 0).min_weight, Some(0));
    }

    #[test]
    fn quartet_pair_needs_two() {
        let inst = parse_instance("((a,b),(c,d)); ((a,c),(b,d));").unwrap();
        assert_eq!(brute_force_htc(&inst, 1).min_weight, None);
        let r = brute_force_htc(&inst, 2);
        assert_eq!(r.min_weight, Some(2));
        let w = r.witness.unwrap();
        assert_eq!(w.weight(), 2);
        assert!(apply_sequence(&inst, &w).is_valid_tree_child_cps());
        let given =
            CherryPickingSequence::parse("(b,a)\n(b,d)\n(a,c)\n(c,d)\n(a,d)\n(d,-)", &inst.taxa).unwrap();
        assert!(apply_sequence(&inst, &given).is_valid_tree_child_cps());
        assert_eq!(given.weight(), 2);
    }

    #[test]
    fn larger_budget_keeps_minimum() {
        let inst = parse_instance("((a,b),(c,d)); ((a,c),(b,d));").unwrap();
        for k in 2..5 {
            assert_eq!(brute_force_htc(&inst, k).min_weight, Some(2));
        }
    }
}
