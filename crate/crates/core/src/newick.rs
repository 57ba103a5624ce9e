//! Newick input and output.
//!
//! Input is a sequence of `;`-terminated statements, conventionally one per line. Lines whose
//! first non-blank character is `#` are comments. Labels are runs of `[A-Za-z0-9_.-]`; quoted
//! labels are not supported. Branch lengths and internal node labels are accepted but ignored.
//!
//! Networks are written in extended Newick: a reticulation appears once with its subtree,
//! followed by a `#H<i>` tag, and as a bare `#H<i>` leaf below each of its other parents.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::network::{NetNode, Network};
use crate::tree::{Instance, NodeId, TaxonId, TaxonTable, Tree, TreeNode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NewickError {
    #[error("input contains no trees")]
    Empty,
    #[error("statement {stmt}: unbalanced parentheses near byte {pos}")]
    Unbalanced { stmt: usize, pos: usize },
    #[error("statement {stmt}: empty label near byte {pos}")]
    EmptyLabel { stmt: usize, pos: usize },
    #[error("statement {stmt}: unexpected character {ch:?} at byte {pos}")]
    Unexpected { stmt: usize, pos: usize, ch: char },
    #[error("statement {stmt}: missing terminating ';'")]
    MissingTerminator { stmt: usize },
    #[error("statement {stmt}: label {label:?} occurs more than once")]
    DuplicateLabel { stmt: usize, label: String },
    #[error("statement {stmt}: node with {degree} children; input trees must be binary")]
    Multifurcation { stmt: usize, degree: usize },
    #[error("statement {stmt}: internal node with a single child")]
    UnaryNode { stmt: usize },
    #[error("statement {stmt}: reticulation tag in a tree")]
    HybridInTree { stmt: usize },
    #[error("statement {stmt}: malformed reticulation #H{tag}: {reason}")]
    BadHybrid { stmt: usize, tag: u32, reason: String },
    #[error("statement {stmt}: leaf set differs from the first tree ({detail})")]
    LeafSetMismatch { stmt: usize, detail: String },
    #[error("unknown taxon {0:?}")]
    UnknownTaxon(String),
}

pub type Result<T> = std::result::Result<T, NewickError>;

//--------------------------------------------------------------------------------------------------
// Lexing and raw parsing
//--------------------------------------------------------------------------------------------------

#[derive(Debug)]
struct RawNode {
    label: Option<String>,
    hybrid: Option<u32>,
    children: Vec<usize>,
}

#[derive(Debug)]
struct RawGraph {
    nodes: Vec<RawNode>,
    root: usize,
}

fn is_label_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || b == b'-'
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    stmt: usize,
    nodes: Vec<RawNode>,
    ignored: bool,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, stmt: usize) -> Self {
        Parser { src: src.as_bytes(), pos: 0, stmt, nodes: Vec::new(), ignored: false }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn unexpected(&self) -> NewickError {
        let ch =
            std::str::from_utf8(&self.src[self.pos..]).ok().and_then(|s| s.chars().next()).unwrap_or('?');
        NewickError::Unexpected { stmt: self.stmt, pos: self.pos, ch }
    }

    fn label(&mut self) -> Option<String> {
        let start = self.pos;
        while self.peek().is_some_and(is_label_byte) {
            self.pos += 1;
        }
        (self.pos > start).then(|| String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn hybrid(&mut self) -> Result<Option<u32>> {
        if self.peek() != Some(b'#') {
            return Ok(None);
        }
        self.pos += 1;
        if self.peek() != Some(b'H') {
            return Err(self.unexpected());
        }
        self.pos += 1;
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map(Some)
            .ok_or_else(|| self.unexpected())
    }

    fn branch_length(&mut self) -> Result<()> {
        self.skip_ws();
        if self.peek() != Some(b':') {
            return Ok(());
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'+' | b'-'))
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.unexpected());
        }
        self.ignored = true;
        Ok(())
    }

    fn subtree(&mut self) -> Result<usize> {
        self.skip_ws();
        let node = if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut children = vec![self.subtree()?];
            loop {
                self.skip_ws();
                match self.peek() {
                    Some(b',') => {
                        self.pos += 1;
                        children.push(self.subtree()?);
                    }
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    None => return Err(NewickError::Unbalanced { stmt: self.stmt, pos: self.pos }),
                    Some(_) => return Err(self.unexpected()),
                }
            }
            if self.label().is_some() {
                self.ignored = true;
            }
            let hybrid = self.hybrid()?;
            RawNode { label: None, hybrid, children }
        } else {
            let at = self.pos;
            let label = self.label();
            let hybrid = self.hybrid()?;
            if label.is_none() && hybrid.is_none() {
                return match self.peek() {
                    Some(b')') if self.nodes.is_empty() && at == 0 => {
                        Err(NewickError::Unbalanced { stmt: self.stmt, pos: at })
                    }
                    Some(b',' | b')') | None => Err(NewickError::EmptyLabel { stmt: self.stmt, pos: at }),
                    Some(_) => Err(self.unexpected()),
                };
            }
            RawNode { label, hybrid, children: Vec::new() }
        };
        self.branch_length()?;
        self.nodes.push(node);
        Ok(self.nodes.len() - 1)
    }

    fn statement(mut self) -> Result<(RawGraph, bool)> {
        let root = self.subtree()?;
        self.skip_ws();
        match self.peek() {
            None => Ok((RawGraph { nodes: self.nodes, root }, self.ignored)),
            Some(b')') => Err(NewickError::Unbalanced { stmt: self.stmt, pos: self.pos }),
            Some(_) => Err(self.unexpected()),
        }
    }
}

/// Split input text into `;`-terminated statements, dropping comment lines.
fn statements(text: &str) -> Result<Vec<String>> {
    let mut body = String::with_capacity(text.len());
    for line in text.lines() {
        if line.trim_start().starts_with('#') {
            continue;
        }
        body.push_str(line);
        body.push('\n');
    }
    let mut out = Vec::new();
    let mut rest = body.as_str();
    while let Some(i) = rest.find(';') {
        out.push(rest[..i].to_string());
        rest = &rest[i + 1..];
    }
    if !rest.trim().is_empty() {
        return Err(NewickError::MissingTerminator { stmt: out.len() });
    }
    Ok(out)
}

fn parse_raw(stmt_text: &str, stmt: usize) -> Result<RawGraph> {
    let (graph, ignored) = Parser::new(stmt_text, stmt).statement()?;
    if ignored {
        log::warn!("statement {stmt}: ignoring branch lengths and internal node labels");
    }
    Ok(graph)
}

//--------------------------------------------------------------------------------------------------
// Trees
//--------------------------------------------------------------------------------------------------

/// A parsed tree whose leaves still carry their names.
struct NamedTree {
    nodes: Vec<(Option<usize>, Vec<usize>, Option<String>)>,
    root: usize,
}

fn raw_to_named_tree(raw: RawGraph, stmt: usize) -> Result<NamedTree> {
    let mut seen = HashSet::new();
    let mut nodes: Vec<(Option<usize>, Vec<usize>, Option<String>)> =
        raw.nodes.iter().map(|_| (None, Vec::new(), None)).collect();
    for (i, n) in raw.nodes.into_iter().enumerate() {
        if n.hybrid.is_some() {
            return Err(NewickError::HybridInTree { stmt });
        }
        match n.children.len() {
            0 => {
                let label = n.label.ok_or(NewickError::EmptyLabel { stmt, pos: 0 })?;
                if !seen.insert(label.clone()) {
                    return Err(NewickError::DuplicateLabel { stmt, label });
                }
                nodes[i].2 = Some(label);
            }
            1 => return Err(NewickError::UnaryNode { stmt }),
            2 => {}
            degree => return Err(NewickError::Multifurcation { stmt, degree }),
        }
        for &c in &n.children {
            nodes[c].0 = Some(i);
        }
        nodes[i].1 = n.children;
    }
    Ok(NamedTree { nodes, root: raw.root })
}

impl NamedTree {
    fn labels(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().filter_map(|n| n.2.as_deref())
    }

    fn resolve(self, taxa: &TaxonTable) -> Result<Tree> {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (parent, children, label) in self.nodes {
            let taxon = match label {
                Some(l) => Some(taxa.id(&l).ok_or(NewickError::UnknownTaxon(l))?),
                None => None,
            };
            nodes.push(TreeNode { parent, children, taxon });
        }
        Ok(Tree::from_parts(nodes, self.root))
    }
}

/// Parse an instance: one or more binary trees over an identical leaf set.
pub fn parse_instance(text: &str) -> Result<Instance> {
    let stmts = statements(text)?;
    if stmts.is_empty() {
        return Err(NewickError::Empty);
    }
    let mut named = Vec::with_capacity(stmts.len());
    for (i, s) in stmts.iter().enumerate() {
        named.push(raw_to_named_tree(parse_raw(s, i)?, i)?);
    }
    let first: HashSet<&str> = named[0].labels().collect();
    for (i, t) in named.iter().enumerate().skip(1) {
        let here: HashSet<&str> = t.labels().collect();
        if here != first {
            let mut missing: Vec<&str> = first.difference(&here).copied().collect();
            let mut extra: Vec<&str> = here.difference(&first).copied().collect();
            missing.sort();
            extra.sort();
            return Err(NewickError::LeafSetMismatch {
                stmt: i,
                detail: format!("missing {missing:?}, extra {extra:?}"),
            });
        }
    }
    let taxa = TaxonTable::new(first.iter().copied());
    let trees = named.into_iter().map(|t| t.resolve(&taxa)).collect::<Result<Vec<_>>>()?;
    Ok(Instance { taxa, trees })
}

/// Parse a single tree whose labels must all be in `taxa`.
pub fn parse_tree(text: &str, taxa: &TaxonTable) -> Result<Tree> {
    let stmts = statements(text)?;
    let stmt = stmts.first().ok_or(NewickError::Empty)?;
    raw_to_named_tree(parse_raw(stmt, 0)?, 0)?.resolve(taxa)
}

//--------------------------------------------------------------------------------------------------
// Networks
//--------------------------------------------------------------------------------------------------

/// Parse an extended Newick network whose leaf labels must all be in `taxa`.
pub fn parse_network(text: &str, taxa: &TaxonTable) -> Result<Network> {
    let stmts = statements(text)?;
    let stmt_text = stmts.first().ok_or(NewickError::Empty)?;
    let raw = parse_raw(stmt_text, 0)?;

    // Every raw node maps to a network node; all occurrences of one hybrid tag share a node.
    let mut defining: HashMap<u32, usize> = HashMap::new();
    for (i, n) in raw.nodes.iter().enumerate() {
        if let Some(tag) = n.hybrid {
            if (!n.children.is_empty() || n.label.is_some()) && defining.insert(tag, i).is_some() {
                return Err(NewickError::BadHybrid { stmt: 0, tag, reason: "defined more than once".into() });
            }
        }
    }
    let mut target = vec![usize::MAX; raw.nodes.len()];
    let mut next = 0;
    for (i, n) in raw.nodes.iter().enumerate() {
        if n.hybrid.is_none() || defining.get(&n.hybrid.unwrap()) == Some(&i) {
            target[i] = next;
            next += 1;
        }
    }
    for (i, n) in raw.nodes.iter().enumerate() {
        if target[i] == usize::MAX {
            let tag = n.hybrid.unwrap();
            let def = *defining.get(&tag).ok_or_else(|| NewickError::BadHybrid {
                stmt: 0,
                tag,
                reason: "never defined".into(),
            })?;
            target[i] = target[def];
        }
    }

    let mut nodes: Vec<NetNode> = (0..next).map(|_| NetNode::default()).collect();
    let mut seen = HashSet::new();
    for (i, n) in raw.nodes.iter().enumerate() {
        let v = target[i];
        if n.children.is_empty() {
            if let Some(l) = &n.label {
                if !seen.insert(l.clone()) {
                    return Err(NewickError::DuplicateLabel { stmt: 0, label: l.clone() });
                }
                nodes[v].taxon = Some(taxa.id(l).ok_or(NewickError::UnknownTaxon(l.clone()))?);
            }
        }
        for &c in &n.children {
            let w = target[c];
            nodes[v].children.push(w);
            nodes[w].parents.push(v);
        }
    }
    Network::from_nodes(nodes, target[raw.root]).map_err(|e| NewickError::BadHybrid {
        stmt: 0,
        tag: 0,
        reason: e.to_string(),
    })
}

//--------------------------------------------------------------------------------------------------
// Writers
//--------------------------------------------------------------------------------------------------

fn min_taxa_tree(tree: &Tree) -> Vec<TaxonId> {
    let mut min = vec![TaxonId(u32::MAX); tree.nodes().len()];
    for v in tree.preorder().into_iter().rev() {
        let node = tree.node(v);
        min[v] = node
            .taxon
            .into_iter()
            .chain(node.children.iter().map(|&c| min[c]))
            .min()
            .unwrap_or(TaxonId(u32::MAX));
    }
    min
}

/// Canonical Newick: children ordered by the smallest taxon id below them.
pub fn write_tree(tree: &Tree, taxa: &TaxonTable) -> String {
    let min = min_taxa_tree(tree);
    let mut out = String::new();
    write_tree_rec(tree, tree.root(), taxa, &min, &mut out);
    out.push(';');
    out
}

fn write_tree_rec(tree: &Tree, v: NodeId, taxa: &TaxonTable, min: &[TaxonId], out: &mut String) {
    let node = tree.node(v);
    if let Some(t) = node.taxon {
        out.push_str(taxa.label(t));
        return;
    }
    let mut kids = node.children.clone();
    kids.sort_by_key(|&c| min[c]);
    out.push('(');
    for (i, &c) in kids.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_tree_rec(tree, c, taxa, min, out);
    }
    out.push(')');
}

/// Extended Newick with `#H1..#Hk` numbered in order of first visit by a depth-first traversal
/// that visits children in canonical order.
pub fn write_network(net: &Network, taxa: &TaxonTable) -> String {
    let min = net.min_taxon_below();
    let mut tags = vec![0u32; net.nodes().len()];
    let mut next_tag = 1;
    let mut out = String::new();
    write_net_rec(net, net.root(), taxa, &min, &mut tags, &mut next_tag, &mut out);
    out.push(';');
    out
}

fn write_net_rec(
    net: &Network,
    v: usize,
    taxa: &TaxonTable,
    min: &[TaxonId],
    tags: &mut [u32],
    next_tag: &mut u32,
    out: &mut String,
) {
    let node = net.node(v);
    let hybrid = node.parents.len() >= 2;
    if hybrid {
        if tags[v] != 0 {
            out.push_str(&format!("#H{}", tags[v]));
            return;
        }
        tags[v] = *next_tag;
        *next_tag += 1;
    }
    if let Some(t) = node.taxon {
        out.push_str(taxa.label(t));
    } else {
        let mut kids = node.children.clone();
        kids.sort_by_key(|&c| min[c]);
        out.push('(');
        for (i, &c) in kids.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write_net_rec(net, c, taxa, min, tags, next_tag, out);
        }
        out.push(')');
    }
    if hybrid {
        out.push_str(&format!("#H{}", tags[v]));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOUR_TREES: &str =
        "(((a,b),e),(c,d));\n(((a,b),(c,e)),d);\n((a,(e,(b,c))),d);\n((a,(e,b)),(c,d));\n";

    #[test]
    fn parses_single_tree() {
        let inst = parse_instance("((a,b),(c,d));").unwrap();
        assert_eq!(inst.num_trees(), 1);
        assert_eq!(inst.num_taxa(), 4);
        let t = &inst.taxa;
        let id = |s| t.id(s).unwrap();
        assert_eq!(inst.trees[0].cherries(), vec![(id("a"), id("b")), (id("c"), id("d"))]);
    }

    #[test]
    fn parses_four_trees() {
        let inst = parse_instance(FOUR_TREES).unwrap();
        assert_eq!(inst.num_trees(), 4);
        assert_eq!(inst.num_taxa(), 5);
    }

    #[test]
    fn rejects_multifurcation() {
        assert!(matches!(parse_instance("((a,b,c),d);"), Err(NewickError::Multifurcation { degree: 3, .. })));
    }

    #[test]
    fn error_categories() {
        assert!(matches!(parse_instance("((a,b),c;"), Err(NewickError::Unbalanced { .. })));
        assert!(matches!(parse_instance("(a,b));"), Err(NewickError::Unbalanced { .. })));
        assert!(matches!(parse_instance("((a,),c);"), Err(NewickError::EmptyLabel { .. })));
        assert!(matches!(parse_instance("((a,a),c);"), Err(NewickError::DuplicateLabel { .. })));
        assert!(matches!(
            parse_instance("((a,b),c);((a,b),d);"),
            Err(NewickError::LeafSetMismatch { stmt: 1, .. })
        ));
        assert!(matches!(parse_instance("((a),b);"), Err(NewickError::UnaryNode { .. })));
        assert!(matches!(parse_instance("((a,b),c)"), Err(NewickError::MissingTerminator { .. })));
        assert!(matches!(parse_instance(""), Err(NewickError::Empty)));
        assert!(matches!(parse_instance("((a,b)#H1,c);"), Err(NewickError::HybridInTree { .. })));
        assert!(matches!(parse_instance("((a,'b'),c);"), Err(NewickError::Unexpected { .. })));
    }

    #[test]
    fn ignores_lengths_and_internal_labels() {
        let inst = parse_instance("((a:1.5,b:2e-3)x:0.1,c);").unwrap();
        assert_eq!(write_tree(&inst.trees[0], &inst.taxa), "((a,b),c);");
    }

    #[test]
    fn comments_are_skipped() {
        let inst = parse_instance("# generator_reticulations: 2\n((a,b),c);\n").unwrap();
        assert_eq!(inst.num_trees(), 1);
    }

    #[test]
    fn canonical_child_order() {
        let inst = parse_instance("((b,a),c);").unwrap();
        assert_eq!(write_tree(&inst.trees[0], &inst.taxa), "((a,b),c);");
        let single = parse_instance("a;").unwrap();
        assert_eq!(write_tree(&single.trees[0], &single.taxa), "a;");
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let inst = parse_instance(FOUR_TREES).unwrap();
        for tree in &inst.trees {
            let once = write_tree(tree, &inst.taxa);
            let again = parse_tree(&once, &inst.taxa).unwrap();
            assert_eq!(write_tree(&again, &inst.taxa), once);
        }
    }

    #[test]
    fn tree_as_network_has_no_tags() {
        let inst = parse_instance("((b,a),(d,c));").unwrap();
        let net = Network::from_tree(&inst.trees[0]);
        assert_eq!(write_network(&net, &inst.taxa), "((a,b),(c,d));");
    }

    #[test]
    fn network_round_trip() {
        let taxa = TaxonTable::new(["a", "b", "c"]);
        let net = parse_network("((a)#H1,((#H1,b),c));", &taxa).unwrap();
        assert_eq!(net.reticulation_number(), 1);
        let text = write_network(&net, &taxa);
        let again = parse_network(&text, &taxa).unwrap();
        assert_eq!(write_network(&again, &taxa), text);
        assert!(net.is_isomorphic(&again));
    }

    #[test]
    fn network_rejects_undefined_tag() {
        let taxa = TaxonTable::new(["a", "b"]);
        assert!(matches!(parse_network("(#H1,(a,b));", &taxa), Err(NewickError::BadHybrid { .. })));
    }
}
