//! Cluster reduction.
//!
//! A common cluster is a set of taxa that forms the leaf set of a subtree in every input tree.
//! Each maximal common cluster below a node is solved on its own and then replaced by a single
//! composite taxon in the enclosing instance. Sequences are spliced back together innermost
//! first.

use std::collections::{BTreeSet, HashMap};

use crate::forest::{CherryPickingSequence, Pair};
use crate::search::SolveError;
use crate::tree::{Instance, NodeId, TaxonId, TaxonTable, Tree, TreeNode};

/// Prefix of the synthetic labels that stand for collapsed clusters.
pub const COMPOSITE_PREFIX: &str = "_cluster_";

#[derive(Clone, Debug)]
pub struct ClusterNode {
    /// The taxa of this cluster in the original instance, sorted.
    pub taxa: Vec<TaxonId>,
    pub children: Vec<ClusterNode>,
    /// This cluster with every child collapsed to a composite taxon.
    pub subinstance: Instance,
    /// Label of this cluster's composite taxon in the parent's subinstance.
    pub composite_label: Option<String>,
    /// For each taxon of `subinstance`: the original taxon, or the index of a child cluster.
    origin: Vec<Origin>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Origin {
    Taxon(TaxonId),
    Child(usize),
}

impl ClusterNode {
    /// Number of taxa in each subinstance, in post-order.
    pub fn subinstance_sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_sizes(&mut out);
        out
    }

    fn collect_sizes(&self, out: &mut Vec<usize>) {
        for c in &self.children {
            c.collect_sizes(out);
        }
        out.push(self.subinstance.num_taxa());
    }

    /// All proper clusters in the decomposition, each as a sorted taxon list.
    pub fn proper_clusters(&self) -> BTreeSet<Vec<TaxonId>> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<&ClusterNode> = self.children.iter().collect();
        while let Some(c) = stack.pop() {
            out.insert(c.taxa.clone());
            stack.extend(c.children.iter());
        }
        out
    }
}

/// Leaf sets of subtrees shared by every tree, excluding singletons and the full taxon set.
fn common_clusters(instance: &Instance) -> Vec<Vec<TaxonId>> {
    let n = instance.num_taxa();
    let mut common: Option<BTreeSet<Vec<TaxonId>>> = None;
    for tree in &instance.trees {
        let here: BTreeSet<Vec<TaxonId>> =
            tree.clusters().into_iter().filter(|c| c.len() > 1 && c.len() < n).collect();
        common = Some(match common {
            None => here,
            Some(prev) => prev.intersection(&here).cloned().collect(),
        });
    }
    common.unwrap_or_default().into_iter().collect()
}

/// Nest the common clusters of `instance` into a tree rooted at the full taxon set.
pub fn find_common_clusters(instance: &Instance) -> ClusterNode {
    let mut clusters = common_clusters(instance);
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    let all: Vec<TaxonId> = instance.taxa.ids().collect();
    // parent[i] is the smallest earlier (hence larger) cluster containing cluster i.
    let mut children_of: Vec<Vec<usize>> = vec![Vec::new(); clusters.len() + 1];
    for i in 0..clusters.len() {
        let set: BTreeSet<TaxonId> = clusters[i].iter().copied().collect();
        let parent = (0..i)
            .rev()
            .find(|&j| {
                clusters[j].len() > clusters[i].len()
                    && set.iter().all(|t| clusters[j].binary_search(t).is_ok())
            })
            .map_or(0, |j| j + 1);
        children_of[parent].push(i + 1);
    }
    let mut counter = 0;
    build_node(instance, &all, &clusters, &children_of, 0, None, &mut counter)
}

fn build_node(
    instance: &Instance,
    taxa: &[TaxonId],
    clusters: &[Vec<TaxonId>],
    children_of: &[Vec<usize>],
    index: usize,
    composite_label: Option<String>,
    counter: &mut usize,
) -> ClusterNode {
    let mut children = Vec::new();
    for &c in &children_of[index] {
        *counter += 1;
        let mut label = format!("{COMPOSITE_PREFIX}{counter}");
        while instance.taxa.id(&label).is_some() {
            label.insert(0, '_');
        }
        let child = build_node(instance, &clusters[c - 1], clusters, children_of, c, Some(label), counter);
        children.push(child);
    }

    let mut owner: HashMap<TaxonId, usize> = HashMap::new();
    for (i, c) in children.iter().enumerate() {
        for &t in &c.taxa {
            owner.insert(t, i);
        }
    }
    let mut labels: Vec<String> =
        taxa.iter().filter(|t| !owner.contains_key(t)).map(|&t| instance.taxa.label(t).to_string()).collect();
    labels.extend(children.iter().map(|c| c.composite_label.clone().unwrap()));
    let sub_taxa = TaxonTable::new(labels);
    let mut origin = vec![Origin::Child(usize::MAX); sub_taxa.len()];
    for &t in taxa {
        if !owner.contains_key(&t) {
            origin[sub_taxa.id(instance.taxa.label(t)).unwrap().index()] = Origin::Taxon(t);
        }
    }
    for (i, c) in children.iter().enumerate() {
        origin[sub_taxa.id(c.composite_label.as_ref().unwrap()).unwrap().index()] = Origin::Child(i);
    }

    let trees = instance
        .trees
        .iter()
        .map(|tree| collapse(tree, taxa, &children, &instance.taxa, &sub_taxa))
        .collect();
    ClusterNode {
        taxa: taxa.to_vec(),
        children,
        subinstance: Instance { taxa: sub_taxa, trees },
        composite_label,
        origin,
    }
}

/// The subtree of `tree` spanning `taxa`, with each child cluster replaced by its composite leaf.
fn collapse(
    tree: &Tree,
    taxa: &[TaxonId],
    children: &[ClusterNode],
    orig: &TaxonTable,
    sub: &TaxonTable,
) -> Tree {
    let clusters = tree.clusters();
    let top = (0..tree.nodes().len()).find(|&v| clusters[v] == taxa).expect("common cluster");
    let mut nodes = Vec::new();
    let root = copy(tree, top, &clusters, children, orig, sub, &mut nodes);
    Tree::from_parts(nodes, root)
}

fn copy(
    tree: &Tree,
    v: NodeId,
    clusters: &[Vec<TaxonId>],
    children: &[ClusterNode],
    orig: &TaxonTable,
    sub: &TaxonTable,
    out: &mut Vec<TreeNode>,
) -> NodeId {
    let leaf = |out: &mut Vec<TreeNode>, label: &str| {
        out.push(TreeNode { parent: None, children: vec![], taxon: sub.id(label) });
        out.len() - 1
    };
    if let Some(c) = children.iter().find(|c| c.taxa == clusters[v]) {
        return leaf(out, c.composite_label.as_ref().unwrap());
    }
    let node = tree.node(v);
    if let Some(t) = node.taxon {
        return leaf(out, orig.label(t));
    }
    let kids: Vec<NodeId> =
        node.children.iter().map(|&c| copy(tree, c, clusters, children, orig, sub, out)).collect();
    let id = out.len();
    out.push(TreeNode { parent: None, children: kids.clone(), taxon: None });
    for k in kids {
        out[k].parent = Some(id);
    }
    id
}

/// Solves one subinstance within an optional weight budget.
pub type SubSolver<'a> = dyn FnMut(&Instance, Option<u32>) -> Result<CherryPickingSequence, SolveError> + 'a;

/// Solve every cluster with `solver` and splice the results into one sequence for `instance`.
///
/// `solver` receives a subinstance and the weight budget left under `max_k`.
pub fn solve_clustered(
    instance: &Instance,
    max_k: Option<u32>,
    solver: &mut SubSolver,
) -> Result<CherryPickingSequence, SolveError> {
    let root = find_common_clusters(instance);
    log::debug!("cluster decomposition sizes: {:?}", root.subinstance_sizes());
    let mut pairs = Vec::new();
    let mut spent = 0u32;
    let terminal = solve_node(&root, max_k, &mut spent, solver, &mut pairs)?;
    pairs.push(Pair::terminal(terminal));
    Ok(CherryPickingSequence::new(pairs, instance.num_taxa()))
}

/// Append the non-terminal pairs of `node`'s spliced sequence to `out` and return its terminal
/// taxon.
fn solve_node(
    node: &ClusterNode,
    max_k: Option<u32>,
    spent: &mut u32,
    solver: &mut SubSolver,
    out: &mut Vec<Pair>,
) -> Result<TaxonId, SolveError> {
    let mut reps = Vec::with_capacity(node.children.len());
    for child in &node.children {
        reps.push(solve_node(child, max_k, spent, solver, out)?);
    }
    let budget = max_k.map(|m| m.saturating_sub(*spent));
    let seq = solver(&node.subinstance, budget).map_err(|e| match (e, max_k) {
        (SolveError::NoSolution(_), Some(m)) => SolveError::NoSolution(m),
        (e, _) => e,
    })?;
    *spent += seq.weight() as u32;
    let map = |t: TaxonId| match node.origin[t.index()] {
        Origin::Taxon(orig) => orig,
        Origin::Child(i) => reps[i],
    };
    let (last, body) = seq.pairs().split_last().expect("solver returns a terminal entry");
    out.extend(body.iter().map(|p| Pair { x: map(p.x), y: p.y.map(map) }));
    Ok(map(last.x))
}
