//! Rooted phylogenetic networks: construction from a cherry-picking sequence, structural checks
//! and display testing.

use std::collections::{BTreeSet, HashMap};

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::forest::{CherryPickingSequence, Pair};
use crate::tree::{NodeId, TaxonId, Tree};

/// Upper bound on the number of in-edge combinations [`displays`] enumerates by default.
pub const DEFAULT_DISPLAY_BUDGET: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NetNode {
    pub parents: Vec<usize>,
    pub children: Vec<usize>,
    pub taxon: Option<TaxonId>,
}

impl NetNode {
    pub fn is_reticulation(&self) -> bool {
        self.parents.len() >= 2
    }
}

/// A rooted DAG with labelled leaves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Network {
    nodes: Vec<NetNode>,
    root: usize,
}

impl Network {
    /// Wrap an arena, validating degrees, labels and acyclicity.
    pub fn from_nodes(nodes: Vec<NetNode>, root: usize) -> Result<Network, NetworkError> {
        let net = Network { nodes, root };
        net.check()?;
        Ok(net)
    }

    /// Build from an edge list over nodes `0..num_nodes`; the root is the unique node without
    /// parents.
    pub fn from_edges(
        num_nodes: usize,
        edges: &[(usize, usize)],
        leaves: &[(usize, TaxonId)],
    ) -> Result<Network, NetworkError> {
        let mut nodes = vec![NetNode::default(); num_nodes];
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(NetworkError::Invalid(format!("edge ({u},{v}) out of range")));
            }
            nodes[u].children.push(v);
            nodes[v].parents.push(u);
        }
        for &(v, t) in leaves {
            nodes[v].taxon = Some(t);
        }
        let roots: Vec<usize> = (0..num_nodes).filter(|&v| nodes[v].parents.is_empty()).collect();
        match roots[..] {
            [r] => Network::from_nodes(nodes, r),
            _ => Err(NetworkError::Invalid(format!("{} roots", roots.len()))),
        }
    }

    pub fn from_tree(tree: &Tree) -> Network {
        let nodes = tree
            .nodes()
            .iter()
            .map(|n| NetNode {
                parents: n.parent.into_iter().collect(),
                children: n.children.clone(),
                taxon: n.taxon,
            })
            .collect();
        Network { nodes, root: tree.root() }
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn nodes(&self) -> &[NetNode] {
        &self.nodes
    }

    pub fn node(&self, v: usize) -> &NetNode {
        &self.nodes[v]
    }

    pub fn leaves(&self) -> impl Iterator<Item = TaxonId> + '_ {
        self.nodes.iter().filter_map(|n| n.taxon)
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves().count()
    }

    pub fn num_reticulations(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_reticulation()).count()
    }

    /// Nodes in topological order (parents first), or `None` if there is a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg: Vec<usize> = self.nodes.iter().map(|n| n.parents.len()).collect();
        let mut stack: Vec<usize> = (0..self.nodes.len()).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(v) = stack.pop() {
            order.push(v);
            for &c in self.nodes[v].children.iter().rev() {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    stack.push(c);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    pub fn has_parallel_edges(&self) -> bool {
        self.nodes.iter().any(|n| {
            let set: BTreeSet<usize> = n.children.iter().copied().collect();
            set.len() != n.children.len()
        })
    }

    /// Degree constraints, leaf labels, parent/child symmetry and acyclicity.
    pub fn check(&self) -> Result<(), NetworkError> {
        let bad = |m: String| Err(NetworkError::Invalid(m));
        if self.root >= self.nodes.len() {
            return bad("root out of range".into());
        }
        let mut seen = BTreeSet::new();
        for (v, n) in self.nodes.iter().enumerate() {
            for &c in &n.children {
                if !self.nodes[c].parents.contains(&v) {
                    return bad(format!("edge ({v},{c}) missing from parent list"));
                }
            }
            for &p in &n.parents {
                if !self.nodes[p].children.contains(&v) {
                    return bad(format!("edge ({p},{v}) missing from child list"));
                }
            }
            let (i, o) = (n.parents.len(), n.children.len());
            if v == self.root {
                let single_leaf = self.nodes.len() == 1 && n.taxon.is_some();
                if i != 0 || !(o == 2 || single_leaf) {
                    return bad(format!("root has in-degree {i} and out-degree {o}"));
                }
                continue;
            }
            match (i, o, n.taxon) {
                (0, _, _) => return bad(format!("node {v} is a second root")),
                (1, 0, Some(t)) => {
                    if !seen.insert(t) {
                        return bad(format!("taxon {t} labels two leaves"));
                    }
                }
                (1, 2, None) => {}
                (i, 1, None) if i >= 2 => {}
                _ => return bad(format!("node {v} has in-degree {i}, out-degree {o}")),
            }
        }
        if !self.is_acyclic() {
            return bad("cycle".into());
        }
        Ok(())
    }

    /// Sum over reticulations of in-degree minus one.
    pub fn reticulation_number(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_reticulation()).map(|n| n.parents.len() - 1).sum()
    }

    /// Every non-leaf node has a child that is not a reticulation.
    pub fn is_tree_child(&self) -> bool {
        self.nodes
            .iter()
            .all(|n| n.children.is_empty() || n.children.iter().any(|&c| !self.nodes[c].is_reticulation()))
    }

    /// For every node, the smallest taxon id reachable below it.
    pub fn min_taxon_below(&self) -> Vec<TaxonId> {
        let order = self.topological_order().expect("network is acyclic");
        let mut min = vec![TaxonId(u32::MAX); self.nodes.len()];
        for &v in order.iter().rev() {
            let n = &self.nodes[v];
            min[v] = n
                .taxon
                .into_iter()
                .chain(n.children.iter().map(|&c| min[c]))
                .min()
                .unwrap_or(TaxonId(u32::MAX));
        }
        min
    }

    /// Canonical signature: every node is named by the sorted multiset of its children's names,
    /// so two networks are isomorphic (respecting leaf labels) iff their root names coincide.
    fn signature(&self) -> Vec<String> {
        let order = self.topological_order().expect("network is acyclic");
        let mut name = vec![String::new(); self.nodes.len()];
        for &v in order.iter().rev() {
            let n = &self.nodes[v];
            name[v] = match n.taxon {
                Some(t) => format!("{t}"),
                None => {
                    let mut kids: Vec<&str> = n.children.iter().map(|&c| name[c].as_str()).collect();
                    kids.sort_unstable();
                    format!("({}){}", kids.join(","), if n.is_reticulation() { "#" } else { "" })
                }
            };
        }
        name
    }

    /// Isomorphism respecting leaf labels.
    ///
    /// Nodes are named by the subnetwork below them and the networks are compared through these
    /// names and the multiset of named edges. This is exact whenever distinct nodes have distinct
    /// subnetworks, which holds in every tree-child network.
    pub fn is_isomorphic(&self, other: &Network) -> bool {
        let mine = self.signature();
        let theirs = other.signature();
        if mine[self.root] != theirs[other.root] {
            return false;
        }
        let in_edges = |net: &Network, names: &[String]| {
            let mut m: HashMap<(String, String), usize> = HashMap::new();
            for (v, n) in net.nodes.iter().enumerate() {
                for &c in &n.children {
                    *m.entry((names[v].clone(), names[c].clone())).or_default() += 1;
                }
            }
            m
        };
        in_edges(self, &mine) == in_edges(other, &theirs)
    }
}

//--------------------------------------------------------------------------------------------------
// Construction from a sequence
//--------------------------------------------------------------------------------------------------

struct Builder {
    nodes: Vec<NetNode>,
}

impl Builder {
    fn add(&mut self) -> usize {
        self.nodes.push(NetNode::default());
        self.nodes.len() - 1
    }

    fn add_edge(&mut self, u: usize, v: usize) {
        self.nodes[u].children.push(v);
        self.nodes[v].parents.push(u);
    }

    /// Subdivide the unique in-edge of `v` with a new node and return it.
    fn split_parent_edge(&mut self, v: usize) -> usize {
        let u = self.nodes[v].parents[0];
        let p = self.add();
        let slot = self.nodes[u].children.iter().position(|&c| c == v).unwrap();
        self.nodes[u].children[slot] = p;
        self.nodes[p].parents.push(u);
        self.nodes[p].children.push(v);
        self.nodes[v].parents[0] = p;
        p
    }
}

/// Build the network of a cherry-picking sequence by processing pairs from last to first.
///
/// The sequence must end in a terminal entry. The artificial root is suppressed at the end.
pub fn network_from_sequence(seq: &CherryPickingSequence) -> Result<Network, NetworkError> {
    let pairs = seq.pairs();
    let terminal = match pairs.last() {
        Some(Pair { x, y: None }) => *x,
        _ => return Err(NetworkError::InvalidSequence("missing terminal entry".into())),
    };
    if pairs[..pairs.len() - 1].iter().any(|p| p.y.is_none()) {
        return Err(NetworkError::InvalidSequence("terminal entry before the end".into()));
    }
    let mut b = Builder { nodes: Vec::new() };
    let rho = b.add();
    let first = b.add();
    b.nodes[first].taxon = Some(terminal);
    b.add_edge(rho, first);
    let mut leaf: HashMap<TaxonId, usize> = HashMap::from([(terminal, first)]);

    for pair in pairs[..pairs.len() - 1].iter().rev() {
        let (x, y) = (pair.x, pair.y.unwrap());
        if x == y {
            return Err(NetworkError::InvalidSequence(format!("pair ({x},{y})")));
        }
        let yl = *leaf.get(&y).ok_or_else(|| {
            NetworkError::InvalidSequence(format!("taxon {y} appears as y before it is introduced"))
        })?;
        let p = b.split_parent_edge(yl);
        let q = match leaf.get(&x) {
            Some(&xl) => {
                let px = b.nodes[xl].parents[0];
                if b.nodes[px].is_reticulation() {
                    px
                } else {
                    b.split_parent_edge(xl)
                }
            }
            None => {
                let q = b.add();
                b.nodes[q].taxon = Some(x);
                leaf.insert(x, q);
                q
            }
        };
        b.add_edge(p, q);
    }

    let mut root = rho;
    while b.nodes[root].children.len() == 1 && b.nodes[root].taxon.is_none() {
        let c = b.nodes[root].children[0];
        b.nodes[c].parents.retain(|&u| u != root);
        b.nodes[root].children.clear();
        root = c;
    }
    compact(b.nodes, root)
}

/// Drop unreachable arena slots and renumber.
fn compact(nodes: Vec<NetNode>, root: usize) -> Result<Network, NetworkError> {
    let mut id = vec![usize::MAX; nodes.len()];
    let mut order = Vec::new();
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if id[v] != usize::MAX {
            continue;
        }
        id[v] = order.len();
        order.push(v);
        stack.extend(nodes[v].children.iter().rev());
    }
    let out = order
        .iter()
        .map(|&v| NetNode {
            parents: nodes[v].parents.iter().map(|&p| id[p]).collect(),
            children: nodes[v].children.iter().map(|&c| id[c]).collect(),
            taxon: nodes[v].taxon,
        })
        .collect();
    Network::from_nodes(out, 0)
}

//--------------------------------------------------------------------------------------------------
// Display
//--------------------------------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Display {
    Displayed,
    NotDisplayed,
    /// The number of in-edge combinations exceeds the budget.
    Unverifiable {
        combinations: u128,
    },
}

fn tree_clusters(tree: &Tree, width: usize) -> BTreeSet<Vec<usize>> {
    tree.clusters()
        .into_iter()
        .filter(|c| c.len() >= 2)
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(TaxonId::index).collect();
            v.sort_unstable();
            debug_assert!(v.iter().all(|&i| i < width));
            v
        })
        .collect()
}

/// Choose one parent per reticulation and return the extracted tree restricted to `keep`.
///
/// `choice[i]` is the index into the parent list of the `i`-th reticulation in node order.
pub fn extract_tree(net: &Network, choice: &[usize], keep: &FixedBitSet) -> Option<Tree> {
    let width = keep.len();
    let order = net.topological_order()?;
    let chosen = chosen_parents(net, choice);
    let mut below: Vec<FixedBitSet> = vec![FixedBitSet::with_capacity(width); net.nodes.len()];
    let mut tree_node: Vec<Option<NodeId>> = vec![None; net.nodes.len()];
    let mut nodes: Vec<crate::tree::TreeNode> = Vec::new();
    for &v in order.iter().rev() {
        let n = &net.nodes[v];
        if let Some(t) = n.taxon {
            if keep.contains(t.index()) {
                below[v].insert(t.index());
                nodes.push(crate::tree::TreeNode { parent: None, children: vec![], taxon: Some(t) });
                tree_node[v] = Some(nodes.len() - 1);
            }
            continue;
        }
        let kids: Vec<NodeId> = n
            .children
            .iter()
            .filter(|&&c| chosen[c].is_none_or(|p| p == v))
            .filter_map(|&c| tree_node[c])
            .collect();
        tree_node[v] = match kids.len() {
            0 => None,
            1 => Some(kids[0]),
            _ => {
                let id = nodes.len();
                nodes.push(crate::tree::TreeNode { parent: None, children: kids.clone(), taxon: None });
                for k in kids {
                    nodes[k].parent = Some(id);
                }
                Some(id)
            }
        };
    }
    tree_node[net.root].map(|r| Tree::from_parts(nodes, r))
}

fn chosen_parents(net: &Network, choice: &[usize]) -> Vec<Option<usize>> {
    let mut chosen = vec![None; net.nodes.len()];
    let mut i = 0;
    for (v, n) in net.nodes.iter().enumerate() {
        if n.is_reticulation() {
            chosen[v] = Some(n.parents[choice[i]]);
            i += 1;
        }
    }
    chosen
}

/// Decide whether `net` displays `tree` by trying every choice of one in-edge per reticulation,
/// giving up if there are more than `budget` choices.
pub fn displays_with_budget(net: &Network, tree: &Tree, budget: u64) -> Display {
    let indeg: Vec<usize> =
        net.nodes.iter().filter(|n| n.is_reticulation()).map(|n| n.parents.len()).collect();
    let combinations = indeg.iter().fold(1u128, |acc, &d| acc.saturating_mul(d as u128));
    if combinations > budget as u128 {
        return Display::Unverifiable { combinations };
    }
    let width = net.leaves().chain(tree.leaves()).map(|t| t.index() + 1).max().unwrap_or(0);
    let mut keep = FixedBitSet::with_capacity(width);
    for t in tree.leaves() {
        keep.insert(t.index());
    }
    let net_leaves: BTreeSet<TaxonId> = net.leaves().collect();
    if tree.leaves().any(|t| !net_leaves.contains(&t)) {
        return Display::NotDisplayed;
    }
    let target = tree_clusters(tree, width);
    let mut choice = vec![0usize; indeg.len()];
    loop {
        if let Some(t) = extract_tree(net, &choice, &keep) {
            if tree_clusters(&t, width) == target {
                return Display::Displayed;
            }
        }
        // Advance the mixed-radix counter.
        let mut i = 0;
        loop {
            if i == choice.len() {
                return Display::NotDisplayed;
            }
            choice[i] += 1;
            if choice[i] < indeg[i] {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// [`displays_with_budget`] with [`DEFAULT_DISPLAY_BUDGET`].
pub fn displays(net: &Network, tree: &Tree) -> Display {
    displays_with_budget(net, tree, DEFAULT_DISPLAY_BUDGET)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newick::{parse_instance, parse_network, write_network};
    use crate::tree::TaxonTable;

    fn seq(taxa: &TaxonTable, pairs: &[(&str, Option<&str>)]) -> CherryPickingSequence {
        CherryPickingSequence::new(
            pairs
                .iter()
                .map(|&(x, y)| Pair { x: taxa.id(x).unwrap(), y: y.map(|y| taxa.id(y).unwrap()) })
                .collect(),
            taxa.len(),
        )
    }

    #[test]
    fn weight_zero_sequence_builds_the_tree() {
        let taxa = TaxonTable::new(["a", "b", "c"]);
        let s = seq(&taxa, &[("a", Some("b")), ("b", Some("c")), ("c", None)]);
        let net = network_from_sequence(&s).unwrap();
        assert_eq!(write_network(&net, &taxa), "((a,b),c);");
        assert_eq!(net.reticulation_number(), 0);

        let taxa = TaxonTable::new(["a", "b"]);
        let s = seq(&taxa, &[("a", Some("b")), ("b", None)]);
        assert_eq!(write_network(&network_from_sequence(&s).unwrap(), &taxa), "(a,b);");
    }

    #[test]
    fn single_taxon_sequence() {
        let taxa = TaxonTable::new(["a"]);
        let net = network_from_sequence(&seq(&taxa, &[("a", None)])).unwrap();
        assert_eq!(write_network(&net, &taxa), "a;");
    }

    #[test]
    fn literal_sequence_network() {
        let inst =
            parse_instance("(((a,b),e),(c,d)); (((a,b),(c,e)),d); ((a,(e,(b,c))),d); ((a,(e,b)),(c,d));")
                .unwrap();
        let s = seq(
            &inst.taxa,
            &[
                ("a", Some("b")),
                ("c", Some("d")),
                ("c", Some("b")),
                ("c", Some("e")),
                ("b", Some("e")),
                ("a", Some("e")),
                ("e", Some("d")),
                ("d", None),
            ],
        );
        let net = network_from_sequence(&s).unwrap();
        assert_eq!(net.reticulation_number(), 3);
        assert!(net.is_tree_child());
        for t in &inst.trees {
            assert_eq!(displays(&net, t), Display::Displayed);
        }
        // Taxon c ends up below a single reticulation of in-degree 3.
        assert_eq!(net.num_reticulations(), 2);
        let text = write_network(&net, &inst.taxa);
        assert_eq!(text, "((((((a)#H1,b),(c)#H2),(#H2,e)),#H1),(#H2,d));");
        let again = parse_network(&text, &inst.taxa).unwrap();
        assert!(again.is_isomorphic(&net));
    }

    #[test]
    fn tree_does_not_display_other_tree() {
        let inst = parse_instance("((a,b),c); ((a,c),b);").unwrap();
        let net = Network::from_tree(&inst.trees[0]);
        assert_eq!(displays(&net, &inst.trees[0]), Display::Displayed);
        assert_eq!(displays(&net, &inst.trees[1]), Display::NotDisplayed);
        assert!(net.is_tree_child());
        assert_eq!(net.reticulation_number(), 0);
    }

    #[test]
    fn budget_exceeded_is_unverifiable() {
        let inst = parse_instance("(((a,b),e),(c,d)); (((a,b),(c,e)),d);").unwrap();
        let s = seq(
            &inst.taxa,
            &[
                ("a", Some("b")),
                ("c", Some("d")),
                ("c", Some("b")),
                ("c", Some("e")),
                ("b", Some("e")),
                ("a", Some("e")),
                ("e", Some("d")),
                ("d", None),
            ],
        );
        let net = network_from_sequence(&s).unwrap();
        assert!(matches!(
            displays_with_budget(&net, &inst.trees[0], 4),
            Display::Unverifiable { combinations: 6 }
        ));
    }

    #[test]
    fn rejects_bad_structure() {
        let taxa = TaxonTable::new(["a", "b"]);
        let (a, b) = (taxa.id("a").unwrap(), taxa.id("b").unwrap());
        assert!(Network::from_edges(3, &[(0, 1), (0, 2)], &[(1, a), (2, b)]).is_ok());
        assert!(Network::from_edges(3, &[(0, 1), (0, 2)], &[(1, a), (2, a)]).is_err());
        assert!(Network::from_edges(3, &[(0, 1), (0, 2), (1, 2)], &[(2, b)]).is_err());
    }

    #[test]
    fn isomorphism_distinguishes_reticulation_placement() {
        let taxa = TaxonTable::new(["a", "b", "c"]);
        let n1 = parse_network("((a)#H1,((#H1,b),c));", &taxa).unwrap();
        let n2 = parse_network("((b)#H1,((#H1,a),c));", &taxa).unwrap();
        let n3 = parse_network("((c,(b,#H1)),(a)#H1);", &taxa).unwrap();
        assert!(!n1.is_isomorphic(&n2));
        assert!(n1.is_isomorphic(&n3));
    }
}
