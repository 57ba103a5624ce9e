//! Random tree-child networks and random samples of the trees they display.
//!
//! All randomness comes from [`SplitMix64`] seeded with the caller's seed, so a given seed yields
//! the same network and trees on every platform.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use thiserror::Error;

use crate::network::{extract_tree, NetNode, Network};
use crate::newick::write_tree;
use crate::tree::{Instance, TaxonTable};

/// Number of repeated draws after which [`sample_trees`] gives up looking for new trees.
pub const MAX_DUPLICATES: usize = 100;

const MAX_RESAMPLES: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenParams {
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("no pair of leaves with different parents after {0} draws")]
    Resample(usize),
}

/// Leaf labels `t1..tn`.
pub fn leaf_labels(n: usize) -> TaxonTable {
    TaxonTable::new((1..=n).map(|i| format!("t{i}")))
}

#[derive(Clone)]
struct Growing {
    nodes: Vec<NetNode>,
    /// Leaves in creation order; entries are node ids.
    leaves: Vec<usize>,
    root: usize,
}

impl Growing {
    fn add(&mut self, parent: usize) -> usize {
        self.nodes.push(NetNode { parents: vec![parent], children: vec![], taxon: None });
        let id = self.nodes.len() - 1;
        self.nodes[parent].children.push(id);
        id
    }

    fn sibling(&self, v: usize) -> Option<usize> {
        let p = *self.nodes[v].parents.first()?;
        self.nodes[p].children.iter().copied().find(|&c| c != v)
    }

    /// Leaves whose parent is a tree node and whose sibling is not a reticulation.
    fn mergeable(&self) -> Vec<usize> {
        self.leaves
            .iter()
            .copied()
            .filter(|&v| {
                let p = self.nodes[v].parents[0];
                !self.nodes[p].is_reticulation()
                    && self.sibling(v).is_some_and(|s| !self.nodes[s].is_reticulation())
            })
            .collect()
    }

    fn reticulation_possible(&self, m: &[usize]) -> bool {
        match m.len() {
            0 | 1 => false,
            2 => self.nodes[m[0]].parents[0] != self.nodes[m[1]].parents[0],
            _ => true,
        }
    }

    fn add_tree_node(&mut self, rng: &mut SplitMix64) {
        let i = rng.random_range(0..self.leaves.len());
        let u = self.leaves[i];
        let v = self.add(u);
        let w = self.add(u);
        self.leaves.swap_remove(i);
        self.leaves.push(v);
        self.leaves.push(w);
    }

    fn add_reticulation(&mut self, m: &[usize], rng: &mut SplitMix64) -> Result<(), GenError> {
        let mut draws = 0;
        let (u, v) = loop {
            let u = m[rng.random_range(0..m.len())];
            let v = m[rng.random_range(0..m.len())];
            if self.nodes[u].parents[0] != self.nodes[v].parents[0] {
                break (u, v);
            }
            draws += 1;
            if draws >= MAX_RESAMPLES {
                return Err(GenError::Resample(draws));
            }
        };
        let pv = self.nodes[v].parents[0];
        for c in self.nodes[pv].children.iter_mut() {
            if *c == v {
                *c = u;
            }
        }
        self.nodes[u].parents.push(pv);
        self.nodes[v].parents.clear();
        self.leaves.retain(|&l| l != u && l != v);
        let w = self.add(u);
        self.leaves.push(w);
        Ok(())
    }

    fn is_leaf(&self, v: usize) -> bool {
        self.leaves.contains(&v)
    }

    fn cut(&mut self, p: usize, c: usize) {
        let i = self.nodes[p].children.iter().position(|&x| x == c).unwrap();
        self.nodes[p].children.remove(i);
        let j = self.nodes[c].parents.iter().position(|&x| x == p).unwrap();
        self.nodes[c].parents.remove(j);
    }

    /// Delete `leaf`, then repair the network: drop childless inner nodes, parallel edges and
    /// in-edges of reticulations whose parent has no other kind of child, and suppress nodes with
    /// one parent and one child. Repeats until nothing changes.
    fn remove_leaf(&mut self, leaf: usize) {
        let p = self.nodes[leaf].parents[0];
        self.cut(p, leaf);
        self.leaves.retain(|&l| l != leaf);
        loop {
            let mut changed = false;
            for v in 0..self.nodes.len() {
                let alive = v == self.root || !self.nodes[v].parents.is_empty();
                if !alive || self.is_leaf(v) {
                    continue;
                }
                let n = &self.nodes[v];
                if n.children.is_empty() {
                    for q in n.parents.clone() {
                        self.cut(q, v);
                    }
                } else if n.children.len() == 2 && n.children[0] == n.children[1] {
                    let c = n.children[0];
                    self.cut(v, c);
                } else if v == self.root && n.children.len() == 1 {
                    let c = n.children[0];
                    self.cut(v, c);
                    self.root = c;
                } else if n.parents.len() == 1 && n.children.len() == 1 {
                    let (q, c) = (n.parents[0], n.children[0]);
                    self.cut(q, v);
                    self.cut(v, c);
                    self.nodes[q].children.push(c);
                    self.nodes[c].parents.push(q);
                } else if n.children.iter().all(|&c| self.nodes[c].is_reticulation()) {
                    let c = n.children[0];
                    self.cut(v, c);
                } else {
                    continue;
                }
                changed = true;
            }
            if !changed {
                break;
            }
        }
    }

    fn reticulations(&self) -> usize {
        self.nodes.iter().map(|n| n.parents.len().saturating_sub(1)).sum()
    }

    fn finish(self, taxa: &TaxonTable) -> Network {
        // Keep nodes reachable from the root and label leaves in node order.
        let mut id = vec![usize::MAX; self.nodes.len()];
        let mut order = Vec::new();
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            if id[v] != usize::MAX {
                continue;
            }
            id[v] = order.len();
            order.push(v);
            stack.extend(self.nodes[v].children.iter().rev());
        }
        let mut leaf_rank = vec![usize::MAX; self.nodes.len()];
        let mut sorted_leaves = self.leaves.clone();
        sorted_leaves.sort_unstable();
        for (i, &l) in sorted_leaves.iter().enumerate() {
            leaf_rank[l] = i;
        }
        let nodes = order
            .iter()
            .map(|&v| NetNode {
                parents: self.nodes[v]
                    .parents
                    .iter()
                    .filter(|&&p| id[p] != usize::MAX)
                    .map(|&p| id[p])
                    .collect(),
                children: self.nodes[v].children.iter().map(|&c| id[c]).collect(),
                taxon: (leaf_rank[v] != usize::MAX)
                    .then(|| taxa.id(&format!("t{}", leaf_rank[v] + 1)).unwrap()),
            })
            .collect();
        Network::from_nodes(nodes, 0).expect("generator keeps the network valid")
    }
}

/// A random tree-child network on the leaves `t1..tn` with at most `k` reticulations.
pub fn random_network(params: &GenParams) -> Result<Network, GenError> {
    if params.n < 2 {
        return Err(GenError::Params("n must be at least 2".into()));
    }
    let mut rng = SplitMix64::seed_from_u64(params.seed);
    let mut g = Growing { nodes: vec![NetNode::default()], leaves: Vec::new(), root: 0 };
    let a = g.add(0);
    let b = g.add(0);
    g.leaves.extend([a, b]);

    let mut s_r = params.n + params.k - 2;
    let mut k_r = params.k;
    while s_r > 0 && k_r > 0 {
        let m = g.mergeable();
        let tree_node = !g.reticulation_possible(&m) || rng.random_range(0..s_r + k_r) < s_r;
        if tree_node {
            g.add_tree_node(&mut rng);
            s_r -= 1;
        } else {
            g.add_reticulation(&m, &mut rng)?;
            k_r -= 1;
        }
    }
    while s_r > 0 {
        g.add_tree_node(&mut rng);
        s_r -= 1;
    }
    while k_r > 0 {
        let m = g.mergeable();
        if !g.reticulation_possible(&m) {
            break;
        }
        g.add_reticulation(&m, &mut rng)?;
        k_r -= 1;
    }

    // Generation that stopped early leaves k_r surplus leaves. Prefer removals that keep every
    // reticulation.
    while g.leaves.len() > params.n {
        let mut candidates = g.leaves.clone();
        let start = rng.random_range(0..candidates.len());
        candidates.rotate_left(start);
        let before = g.reticulations();
        let mut fallback = None;
        for &l in &candidates {
            let mut trial = g.clone();
            trial.remove_leaf(l);
            if trial.reticulations() == before {
                fallback = Some(trial);
                break;
            }
            fallback.get_or_insert(trial);
        }
        g = fallback.expect("at least one leaf");
    }
    Ok(g.finish(&leaf_labels(params.n)))
}

/// Up to `t` distinct trees displayed by `net`, each obtained by keeping one random in-edge per
/// reticulation. Stops after [`MAX_DUPLICATES`] repeated draws.
pub fn sample_trees(net: &Network, taxa: &TaxonTable, t: usize, seed: u64) -> Instance {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let indeg: Vec<usize> =
        net.nodes().iter().filter(|n| n.is_reticulation()).map(|n| n.parents.len()).collect();
    let mut keep = fixedbitset::FixedBitSet::with_capacity(taxa.len());
    for leaf in net.leaves() {
        keep.insert(leaf.index());
    }
    let mut seen = HashSet::new();
    let mut trees = Vec::new();
    let mut duplicates = 0;
    while trees.len() < t && duplicates < MAX_DUPLICATES {
        let choice: Vec<usize> = indeg.iter().map(|&d| rng.random_range(0..d)).collect();
        let tree = extract_tree(net, &choice, &keep).expect("network has leaves");
        if seen.insert(write_tree(&tree, taxa)) {
            trees.push(tree);
        } else {
            duplicates += 1;
        }
    }
    Instance { taxa: taxa.clone(), trees }
}

/// A random instance together with the reticulation number of the network it was drawn from.
pub fn generate_instance(params: &GenParams) -> Result<(Instance, Network), GenError> {
    if params.t == 0 {
        return Err(GenError::Params("t must be at least 1".into()));
    }
    let net = random_network(params)?;
    let taxa = leaf_labels(params.n);
    let inst = sample_trees(&net, &taxa, params.t, params.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    Ok((inst, net))
}

/// Newick lines for an instance followed by the generator comment line.
pub fn instance_text(inst: &Instance, reticulations: usize) -> String {
    let mut out = String::new();
    for tree in &inst.trees {
        out.push_str(&write_tree(tree, &inst.taxa));
        out.push('\n');
    }
    out.push_str(&format!("# generator_reticulations: {reticulations}\n"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{displays, Display};
    use crate::newick::{parse_instance, write_network};

    fn check(net: &Network, n: usize, k: usize) {
        net.check().unwrap();
        assert!(net.is_tree_child());
        assert!(!net.has_parallel_edges());
        assert_eq!(net.num_leaves(), n);
        assert!(net.reticulation_number() <= k);
    }

    #[test]
    fn k_zero_gives_tree() {
        for seed in 0..20 {
            let net = random_network(&GenParams { n: 5, k: 0, t: 1, seed }).unwrap();
            check(&net, 5, 0);
            assert_eq!(net.reticulation_number(), 0);
        }
    }

    #[test]
    fn two_leaves() {
        let net = random_network(&GenParams { n: 2, k: 0, t: 1, seed: 1 }).unwrap();
        assert_eq!(write_network(&net, &leaf_labels(2)), "(t1,t2);");
    }

    #[test]
    fn larger_networks_are_valid() {
        check(&random_network(&GenParams { n: 20, k: 5, t: 1, seed: 42 }).unwrap(), 20, 5);
        for seed in 0..200 {
            for (n, k) in [(2, 3), (3, 4), (4, 8), (6, 3), (10, 10), (50, 8)] {
                check(&random_network(&GenParams { n, k, t: 1, seed }).unwrap(), n, k);
            }
        }
    }

    #[test]
    fn seeded_output_is_reproducible() {
        let p = GenParams { n: 20, k: 5, t: 10, seed: 7 };
        let (a, na) = generate_instance(&p).unwrap();
        let (b, nb) = generate_instance(&p).unwrap();
        assert_eq!(instance_text(&a, na.reticulation_number()), instance_text(&b, nb.reticulation_number()));
        assert_eq!(write_network(&na, &a.taxa), write_network(&nb, &b.taxa));
    }

    #[test]
    fn tree_samples_itself_once() {
        let inst = parse_instance("((a,b),(c,d));").unwrap();
        let net = Network::from_tree(&inst.trees[0]);
        let sample = sample_trees(&net, &inst.taxa, 5, 3);
        assert_eq!(sample.trees.len(), 1);
    }

    #[test]
    fn samples_are_displayed() {
        let p = GenParams { n: 12, k: 4, t: 10, seed: 11 };
        let (inst, net) = generate_instance(&p).unwrap();
        assert!(!inst.trees.is_empty() && inst.trees.len() <= 10);
        for tree in &inst.trees {
            assert_eq!(displays(&net, tree), Display::Displayed);
        }
        let text = instance_text(&inst, net.reticulation_number());
        assert_eq!(parse_instance(&text).unwrap().trees.len(), inst.trees.len());
    }
}
