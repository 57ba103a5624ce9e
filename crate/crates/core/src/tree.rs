//! Taxa, rooted binary trees and instances (a collection of trees on one leaf set).

use std::collections::HashMap;
use std::fmt;

/// Dense identifier of a taxon within a [`TaxonTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaxonId(pub u32);

impl TaxonId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TaxonId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bijection between taxon names and dense ids `0..n`.
///
/// Ids are assigned in byte order of the labels, so the id of a taxon does not depend on the
/// order in which the input mentions it.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct TaxonTable {
    labels: Vec<String>,
    index: HashMap<String, TaxonId>,
}

impl TaxonTable {
    /// Build a table from a set of distinct labels. Duplicates are collapsed.
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        labels.sort();
        labels.dedup();
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), TaxonId(i as u32))).collect();
        TaxonTable { labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<TaxonId> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: TaxonId) -> &str {
        &self.labels[id.index()]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn ids(&self) -> impl Iterator<Item = TaxonId> {
        (0..self.labels.len() as u32).map(TaxonId)
    }
}

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub taxon: Option<TaxonId>,
}

/// A rooted binary phylogenetic tree stored as a node arena.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    root: NodeId,
}

impl Tree {
    /// Assemble a tree from an arena. The caller guarantees the structural invariants; they are
    /// checked in debug builds.
    pub fn from_parts(nodes: Vec<TreeNode>, root: NodeId) -> Self {
        let tree = Tree { nodes, root };
        debug_assert!(tree.check().is_ok(), "{:?}", tree.check());
        tree
    }

    /// A tree consisting of a single leaf.
    pub fn leaf(taxon: TaxonId) -> Self {
        Tree { nodes: vec![TreeNode { parent: None, children: vec![], taxon: Some(taxon) }], root: 0 }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.taxon.is_some()).count()
    }

    pub fn leaves(&self) -> impl Iterator<Item = TaxonId> + '_ {
        self.nodes.iter().filter_map(|n| n.taxon)
    }

    /// Nodes in an order where every parent precedes its children.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(self.nodes[v].children.iter().rev());
        }
        order
    }

    /// Unordered pairs of sibling leaves.
    pub fn cherries(&self) -> Vec<(TaxonId, TaxonId)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let [a, b] = node.children[..] {
                if let (Some(x), Some(y)) = (self.nodes[a].taxon, self.nodes[b].taxon) {
                    out.push(if x < y { (x, y) } else { (y, x) });
                }
            }
        }
        out.sort();
        out
    }

    /// Leaf sets below every node, indexed by node id, as sorted taxon lists.
    pub fn clusters(&self) -> Vec<Vec<TaxonId>> {
        let mut sets = vec![Vec::new(); self.nodes.len()];
        for v in self.preorder().into_iter().rev() {
            let node = &self.nodes[v];
            let mut set = Vec::new();
            if let Some(t) = node.taxon {
                set.push(t);
            }
            for &c in &node.children {
                set.extend_from_slice(&sets[c]);
            }
            set.sort();
            sets[v] = set;
        }
        sets
    }

    /// Structural validation: single root, binary internal nodes, labelled distinct leaves.
    pub fn check(&self) -> Result<(), String> {
        if self.root >= self.nodes.len() || self.nodes[self.root].parent.is_some() {
            return Err("root must exist and have no parent".into());
        }
        let mut seen = std::collections::HashSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            match (n.children.len(), n.taxon) {
                (0, Some(t)) => {
                    if !seen.insert(t) {
                        return Err(format!("taxon {t} appears twice"));
                    }
                }
                (2, None) => {}
                _ => return Err(format!("node {i} is neither a labelled leaf nor binary")),
            }
            for &c in &n.children {
                if self.nodes[c].parent != Some(i) {
                    return Err(format!("child {c} of {i} has wrong parent"));
                }
            }
        }
        if self.preorder().len() != self.nodes.len() {
            return Err("unreachable nodes".into());
        }
        Ok(())
    }

    /// Restriction to `keep`: the smallest subtree spanning the kept leaves, with unary nodes
    /// suppressed. Returns `None` if no kept leaf is present.
    pub fn restrict(&self, keep: &dyn Fn(TaxonId) -> bool) -> Option<Tree> {
        let mut nodes = Vec::new();
        let root = self.restrict_rec(self.root, keep, &mut nodes)?;
        nodes[root].parent = None;
        Some(Tree { nodes, root })
    }

    fn restrict_rec(
        &self,
        v: NodeId,
        keep: &dyn Fn(TaxonId) -> bool,
        out: &mut Vec<TreeNode>,
    ) -> Option<NodeId> {
        let node = &self.nodes[v];
        if let Some(t) = node.taxon {
            if !keep(t) {
                return None;
            }
            out.push(TreeNode { parent: None, children: vec![], taxon: Some(t) });
            return Some(out.len() - 1);
        }
        let kids: Vec<NodeId> =
            node.children.iter().filter_map(|&c| self.restrict_rec(c, keep, out)).collect();
        match kids.len() {
            0 => None,
            1 => Some(kids[0]),
            _ => {
                let id = out.len();
                out.push(TreeNode { parent: None, children: kids.clone(), taxon: None });
                for k in kids {
                    out[k].parent = Some(id);
                }
                Some(id)
            }
        }
    }

    /// Replace taxon ids through `map`.
    pub fn relabel(&self, map: &dyn Fn(TaxonId) -> TaxonId) -> Tree {
        let mut t = self.clone();
        for n in &mut t.nodes {
            n.taxon = n.taxon.map(map);
        }
        t
    }
}

/// A collection of binary trees over one shared taxon set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub taxa: TaxonTable,
    pub trees: Vec<Tree>,
}

impl Instance {
    pub fn num_taxa(&self) -> usize {
        self.taxa.len()
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }
}
