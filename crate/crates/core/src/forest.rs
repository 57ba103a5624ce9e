//! Cherry-picking sequences and the reducible search state.
//!
//! [`SearchState`] holds the input trees reduced by the current partial sequence together with
//! the cherry bookkeeping the search needs: occurrence counts per cherry, the set of trivial
//! cherries, forbidden leaves and branch records. Every mutation is logged so that
//! [`SearchState::undo_to`] can roll the state back exactly.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use fixedbitset::FixedBitSet;

use crate::tree::{Instance, TaxonId, TaxonTable, Tree};

const NONE: u32 = u32::MAX;

//--------------------------------------------------------------------------------------------------
// Sequences
//--------------------------------------------------------------------------------------------------

/// One entry of a cherry-picking sequence; `y == None` marks the terminal entry `(x,-)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    pub x: TaxonId,
    pub y: Option<TaxonId>,
}

impl Pair {
    pub fn new(x: TaxonId, y: TaxonId) -> Self {
        Pair { x, y: Some(y) }
    }

    pub fn terminal(x: TaxonId) -> Self {
        Pair { x, y: None }
    }

    pub fn display<'a>(&'a self, taxa: &'a TaxonTable) -> impl fmt::Display + 'a {
        struct D<'a>(&'a Pair, &'a TaxonTable);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let y = self.0.y.map_or("-", |y| self.1.label(y));
                write!(f, "({},{})", self.1.label(self.0.x), y)
            }
        }
        D(self, taxa)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CherryPickingSequence {
    pairs: Vec<Pair>,
    num_taxa: usize,
}

impl CherryPickingSequence {
    pub fn new(pairs: Vec<Pair>, num_taxa: usize) -> Self {
        CherryPickingSequence { pairs, num_taxa }
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn num_taxa(&self) -> usize {
        self.num_taxa
    }

    /// `|S| - |X|`.
    pub fn weight(&self) -> i64 {
        self.pairs.len() as i64 - self.num_taxa as i64
    }

    pub fn terminal(&self) -> Option<TaxonId> {
        match self.pairs.last() {
            Some(Pair { x, y: None }) => Some(*x),
            _ => None,
        }
    }

    /// No second coordinate equals an earlier first coordinate.
    pub fn is_tree_child(&self) -> bool {
        let mut forbidden = BTreeSet::new();
        for p in &self.pairs {
            if p.y.is_some_and(|y| forbidden.contains(&y)) {
                return false;
            }
            forbidden.insert(p.x);
        }
        true
    }

    /// One `(x,y)` per line.
    pub fn to_lines(&self, taxa: &TaxonTable) -> Vec<String> {
        self.pairs.iter().map(|p| p.display(taxa).to_string()).collect()
    }

    /// Parse the format written by [`Self::to_lines`]. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, taxa: &TaxonTable) -> Result<Self, String> {
        let mut pairs = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let inner = line
                .strip_prefix('(')
                .and_then(|l| l.strip_suffix(')'))
                .ok_or_else(|| format!("line {}: expected (x,y)", no + 1))?;
            let (x, y) = inner.split_once(',').ok_or_else(|| format!("line {}: expected (x,y)", no + 1))?;
            let lookup =
                |s: &str| taxa.id(s.trim()).ok_or_else(|| format!("line {}: unknown taxon {:?}", no + 1, s));
            let x = lookup(x)?;
            let y = match y.trim() {
                "-" => None,
                y => Some(lookup(y)?),
            };
            pairs.push(Pair { x, y });
        }
        Ok(CherryPickingSequence::new(pairs, taxa.len()))
    }
}

//--------------------------------------------------------------------------------------------------
// Reduced trees
//--------------------------------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct RNode {
    parent: u32,
    children: [u32; 2],
    taxon: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct RTree {
    nodes: Vec<RNode>,
    root: u32,
    leaf_of: Vec<u32>,
}

impl RTree {
    fn new(tree: &Tree, n: usize) -> Self {
        let mut leaf_of = vec![NONE; n];
        let nodes = tree
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, node)| {
                let mut children = [NONE; 2];
                for (slot, &c) in node.children.iter().enumerate() {
                    children[slot] = c as u32;
                }
                let taxon = node.taxon.map_or(NONE, |t| t.0);
                if taxon != NONE {
                    leaf_of[taxon as usize] = i as u32;
                }
                RNode { parent: node.parent.map_or(NONE, |p| p as u32), children, taxon }
            })
            .collect();
        RTree { nodes, root: tree.root() as u32, leaf_of }
    }

    /// The taxon of the sibling of `leaf` if that sibling is a leaf.
    fn sibling_leaf(&self, leaf: u32) -> Option<u32> {
        let p = self.nodes[leaf as usize].parent;
        if p == NONE {
            return None;
        }
        let [a, b] = self.nodes[p as usize].children;
        let s = if a == leaf { b } else { a };
        let t = self.nodes[s as usize].taxon;
        (t != NONE).then_some(t)
    }

    fn to_tree(&self) -> Tree {
        use crate::tree::TreeNode;
        let mut out: Vec<TreeNode> = Vec::new();
        let mut stack = vec![(self.root, usize::MAX)];
        while let Some((v, parent)) = stack.pop() {
            let node = &self.nodes[v as usize];
            let id = out.len();
            out.push(TreeNode {
                parent: (parent != usize::MAX).then_some(parent),
                children: Vec::new(),
                taxon: (node.taxon != NONE).then_some(TaxonId(node.taxon)),
            });
            if parent != usize::MAX {
                out[parent].children.push(id);
            }
            if node.taxon == NONE {
                stack.push((node.children[1], id));
                stack.push((node.children[0], id));
            }
        }
        Tree::from_parts(out, 0)
    }
}

//--------------------------------------------------------------------------------------------------
// Search state
//--------------------------------------------------------------------------------------------------

/// Which branch records survive the application of a pair `(x,y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RecordRule {
    /// Drop records `(y, _)` and records of every cherry whose count changed.
    #[default]
    Literal,
    /// Keep every record; a record matches while the current count equals the recorded one.
    CountOnly,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Edit {
    Cut { tree: u32, leaf: u32, parent: u32, grand: u32, slot: u8 },
    CcUp { key: u32 },
    CcDown { key: u32, at: u32 },
    Forbid { x: u32 },
    Trivial { key: u32, inserted: bool },
    Record { idx: u32, prev: u32 },
}

/// Marker into the undo log.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Checkpoint {
    pos: usize,
    n_prime: u32,
    dead: u32,
    seq_len: usize,
}

/// Outcome of looking for a trivial cherry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrivialStep {
    /// A pair `(x,y)` whose cherry is trivial and whose `y` is not forbidden.
    Pick(TaxonId, TaxonId),
    /// Some cherry has both taxa forbidden; no tree-child extension exists.
    Dead,
    /// No trivial cherry is available.
    Exhausted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchState {
    n: usize,
    original: Vec<Tree>,
    trees: Vec<RTree>,
    /// Per taxon, the set of trees that still contain it.
    present: Vec<FixedBitSet>,
    occ: Vec<u32>,
    n_prime: u32,
    seq: Vec<Pair>,
    /// Occurrence count per unordered cherry, keyed `min * n + max`.
    cc: Vec<u32>,
    cherries: Vec<u32>,
    cherry_pos: Vec<u32>,
    trivial: BTreeSet<u32>,
    forbidden: Vec<bool>,
    /// Number of cherries with both taxa forbidden.
    dead: u32,
    /// Recorded count per ordered pair, keyed `x * n + y`.
    records: Vec<u32>,
    track_records: bool,
    rule: RecordRule,
    log: Vec<Edit>,
}

impl SearchState {
    pub fn new(instance: &Instance) -> Self {
        Self::with_trees(&instance.trees, instance.num_taxa())
    }

    pub fn with_trees(trees: &[Tree], n: usize) -> Self {
        let t = trees.len();
        let mut present = vec![FixedBitSet::with_capacity(t); n];
        let mut occ = vec![0u32; n];
        for (i, tree) in trees.iter().enumerate() {
            for x in tree.leaves() {
                present[x.index()].insert(i);
                occ[x.index()] += 1;
            }
        }
        let mut state = SearchState {
            n,
            original: trees.to_vec(),
            trees: trees.iter().map(|tree| RTree::new(tree, n)).collect(),
            present,
            n_prime: occ.iter().filter(|&&c| c > 0).count() as u32,
            occ,
            seq: Vec::new(),
            cc: vec![0; n * n],
            cherries: Vec::new(),
            cherry_pos: vec![NONE; n * n],
            trivial: BTreeSet::new(),
            forbidden: vec![false; n],
            dead: 0,
            records: vec![NONE; n * n],
            track_records: true,
            rule: RecordRule::Literal,
            log: Vec::new(),
        };
        for tree in trees {
            for (a, b) in tree.cherries() {
                state.cc_inc(a.0, b.0);
            }
        }
        state.cherries.sort_unstable();
        for (i, &key) in state.cherries.iter().enumerate() {
            state.cherry_pos[key as usize] = i as u32;
        }
        let keys = state.cherries.clone();
        for key in keys {
            state.refresh_trivial(key / n as u32, key % n as u32);
        }
        state.log.clear();
        state
    }

    /// Turn branch-record maintenance on or off and choose the invalidation rule.
    pub fn set_records(&mut self, track: bool, rule: RecordRule) {
        self.track_records = track;
        self.rule = rule;
    }

    pub fn num_taxa(&self) -> usize {
        self.n
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_prime(&self) -> usize {
        self.n_prime as usize
    }

    pub fn seq_len(&self) -> usize {
        self.seq.len()
    }

    pub fn sequence(&self) -> &[Pair] {
        &self.seq
    }

    /// `|S| - |X| + n'`, a lower bound on the weight of any completion of the current sequence.
    pub fn k_prime(&self) -> i64 {
        self.seq.len() as i64 - self.n as i64 + self.n_prime as i64
    }

    pub fn is_forbidden(&self, x: TaxonId) -> bool {
        self.forbidden[x.index()]
    }

    /// Number of reduced trees with `{a,b}` as a cherry.
    pub fn cc(&self, a: TaxonId, b: TaxonId) -> u32 {
        self.cc[self.key(a.0, b.0) as usize]
    }

    pub fn num_unique_cherries(&self) -> usize {
        self.cherries.len()
    }

    /// Unique cherries as `(min,max)`, sorted.
    pub fn cherries(&self) -> Vec<(TaxonId, TaxonId)> {
        let mut out: Vec<(TaxonId, TaxonId)> =
            self.cherries.iter().map(|&k| (TaxonId(k / self.n as u32), TaxonId(k % self.n as u32))).collect();
        out.sort_unstable();
        out
    }

    /// Trivial cherries as `(min,max)`, sorted.
    pub fn trivial_cherries(&self) -> Vec<(TaxonId, TaxonId)> {
        self.trivial.iter().map(|&k| (TaxonId(k / self.n as u32), TaxonId(k % self.n as u32))).collect()
    }

    /// The current reduced trees as ordinary trees.
    pub fn reduced_trees(&self) -> Vec<Tree> {
        self.trees.iter().map(RTree::to_tree).collect()
    }

    #[inline]
    fn key(&self, a: u32, b: u32) -> u32 {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        lo * self.n as u32 + hi
    }

    //----------------------------------------------------------------------------------------------
    // Primitive edits
    //----------------------------------------------------------------------------------------------

    fn cc_inc(&mut self, a: u32, b: u32) {
        let key = self.key(a, b);
        self.cc[key as usize] += 1;
        if self.cc[key as usize] == 1 {
            self.cherry_pos[key as usize] = self.cherries.len() as u32;
            self.cherries.push(key);
            if self.forbidden[a as usize] && self.forbidden[b as usize] {
                self.dead += 1;
            }
        }
        self.log.push(Edit::CcUp { key });
    }

    fn cc_dec(&mut self, a: u32, b: u32) {
        let key = self.key(a, b);
        self.cc[key as usize] -= 1;
        let mut at = NONE;
        if self.cc[key as usize] == 0 {
            at = self.cherry_pos[key as usize];
            self.cherries.swap_remove(at as usize);
            if let Some(&moved) = self.cherries.get(at as usize) {
                self.cherry_pos[moved as usize] = at;
            }
            self.cherry_pos[key as usize] = NONE;
            if self.forbidden[a as usize] && self.forbidden[b as usize] {
                self.dead -= 1;
            }
        }
        self.log.push(Edit::CcDown { key, at });
    }

    fn refresh_trivial(&mut self, a: u32, b: u32) {
        let key = self.key(a, b);
        let cc = self.cc[key as usize] as usize;
        let want = cc > 0 && cc == self.present[a as usize].intersection_count(&self.present[b as usize]);
        let have = self.trivial.contains(&key);
        if want != have {
            if want {
                self.trivial.insert(key);
            } else {
                self.trivial.remove(&key);
            }
            self.log.push(Edit::Trivial { key, inserted: want });
        }
    }

    fn set_record(&mut self, idx: u32, value: u32) {
        let prev = self.records[idx as usize];
        if prev != value {
            self.records[idx as usize] = value;
            self.log.push(Edit::Record { idx, prev });
        }
    }

    //----------------------------------------------------------------------------------------------
    // Apply and undo
    //----------------------------------------------------------------------------------------------

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { pos: self.log.len(), n_prime: self.n_prime, dead: self.dead, seq_len: self.seq.len() }
    }

    /// Append `(x,y)` to the sequence: remove `x` from every reduced tree in which `{x,y}` is a
    /// cherry and forbid `x`. Returns the checkpoint taken before the change.
    pub fn apply_pair(&mut self, x: TaxonId, y: TaxonId) -> Checkpoint {
        assert_ne!(x, y, "pair ({x},{y}) has equal coordinates");
        let cp = self.checkpoint();
        let (xu, yu) = (x.0, y.0);
        let key_xy = self.key(xu, yu);
        let cc_xy_before = self.cc[key_xy as usize];
        let mut new_sibs: Vec<u32> = Vec::new();

        for t in 0..self.trees.len() {
            if !self.present[x.index()].contains(t) || !self.present[y.index()].contains(t) {
                continue;
            }
            let tree = &mut self.trees[t];
            let lx = tree.leaf_of[x.index()];
            let ly = tree.leaf_of[y.index()];
            let p = tree.nodes[lx as usize].parent;
            if p == NONE || p != tree.nodes[ly as usize].parent {
                continue;
            }
            let g = tree.nodes[p as usize].parent;
            let mut slot = 0u8;
            let mut sib = NONE;
            if g == NONE {
                tree.root = ly;
            } else {
                let gc = &mut tree.nodes[g as usize].children;
                slot = if gc[0] == p { 0 } else { 1 };
                gc[slot as usize] = ly;
                sib = gc[1 - slot as usize];
            }
            tree.nodes[ly as usize].parent = g;
            tree.leaf_of[x.index()] = NONE;
            let sib_taxon = if sib == NONE { NONE } else { tree.nodes[sib as usize].taxon };
            self.log.push(Edit::Cut { tree: t as u32, leaf: lx, parent: p, grand: g, slot });
            self.present[x.index()].set(t, false);
            self.occ[x.index()] -= 1;
            if self.occ[x.index()] == 0 {
                self.n_prime -= 1;
            }
            self.cc_dec(xu, yu);
            if sib_taxon != NONE {
                self.cc_inc(yu, sib_taxon);
                new_sibs.push(sib_taxon);
            }
        }
        self.seq.push(Pair::new(x, y));

        let x_cherries = self.cherry_partners(xu);
        if !self.forbidden[x.index()] {
            self.forbidden[x.index()] = true;
            self.log.push(Edit::Forbid { x: xu });
            self.dead += x_cherries.iter().filter(|&&z| self.forbidden[z as usize]).count() as u32;
        }

        self.refresh_trivial(xu, yu);
        for &s in &new_sibs {
            self.refresh_trivial(yu, s);
        }
        for &z in &x_cherries {
            self.refresh_trivial(xu, z);
        }

        if self.track_records && self.rule == RecordRule::Literal {
            let n = self.n as u32;
            for z in 0..n {
                let idx = yu * n + z;
                if self.records[idx as usize] != NONE {
                    self.set_record(idx, NONE);
                }
            }
            if self.cc[key_xy as usize] != cc_xy_before {
                self.set_record(xu * n + yu, NONE);
            }
            for &s in &new_sibs {
                self.set_record(s * n + yu, NONE);
            }
        }
        cp
    }

    /// Distinct taxa forming a cherry with `x` in some reduced tree.
    fn cherry_partners(&self, x: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self.present[x as usize]
            .ones()
            .filter_map(|t| self.trees[t].sibling_leaf(self.trees[t].leaf_of[x as usize]))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Roll back to `cp`.
    pub fn undo_to(&mut self, cp: Checkpoint) {
        assert!(cp.pos <= self.log.len(), "stale checkpoint");
        while self.log.len() > cp.pos {
            match self.log.pop().unwrap() {
                Edit::Cut { tree: t, leaf, parent, grand, slot } => {
                    let tree = &mut self.trees[t as usize];
                    let x = tree.nodes[leaf as usize].taxon;
                    let [a, b] = tree.nodes[parent as usize].children;
                    let ly = if a == leaf { b } else { a };
                    if grand == NONE {
                        tree.root = parent;
                    } else {
                        tree.nodes[grand as usize].children[slot as usize] = parent;
                    }
                    tree.nodes[ly as usize].parent = parent;
                    tree.leaf_of[x as usize] = leaf;
                    self.present[x as usize].insert(t as usize);
                    self.occ[x as usize] += 1;
                }
                Edit::CcUp { key } => {
                    self.cc[key as usize] -= 1;
                    if self.cc[key as usize] == 0 {
                        let last = self.cherries.pop();
                        debug_assert_eq!(last, Some(key));
                        self.cherry_pos[key as usize] = NONE;
                    }
                }
                Edit::CcDown { key, at } => {
                    self.cc[key as usize] += 1;
                    if at != NONE {
                        let len = self.cherries.len() as u32;
                        if at == len {
                            self.cherries.push(key);
                        } else {
                            let moved = self.cherries[at as usize];
                            self.cherries.push(moved);
                            self.cherry_pos[moved as usize] = len;
                            self.cherries[at as usize] = key;
                        }
                        self.cherry_pos[key as usize] = at;
                    }
                }
                Edit::Forbid { x } => self.forbidden[x as usize] = false,
                Edit::Trivial { key, inserted } => {
                    if inserted {
                        self.trivial.remove(&key);
                    } else {
                        self.trivial.insert(key);
                    }
                }
                Edit::Record { idx, prev } => self.records[idx as usize] = prev,
            }
        }
        self.n_prime = cp.n_prime;
        self.dead = cp.dead;
        self.seq.truncate(cp.seq_len);
    }

    //----------------------------------------------------------------------------------------------
    // Queries used by the search
    //----------------------------------------------------------------------------------------------

    /// A trivial cherry to reduce next, oriented so that `y` is not forbidden.
    ///
    /// If neither taxon is forbidden the smaller id is removed.
    pub fn next_trivial(&self) -> TrivialStep {
        if self.dead > 0 {
            return TrivialStep::Dead;
        }
        let n = self.n as u32;
        let Some(&key) = self.trivial.first() else { return TrivialStep::Exhausted };
        let (a, b) = (key / n, key % n);
        match (self.forbidden[a as usize], self.forbidden[b as usize]) {
            (_, false) => TrivialStep::Pick(TaxonId(a), TaxonId(b)),
            (false, true) => TrivialStep::Pick(TaxonId(b), TaxonId(a)),
            (true, true) => TrivialStep::Dead,
        }
    }

    /// Whether some cherry has both taxa forbidden.
    pub fn is_dead(&self) -> bool {
        self.dead > 0
    }

    /// All ordered pairs `(x,y)` with `{x,y}` a cherry of some reduced tree, ascending.
    pub fn branch_candidates(&self) -> Vec<Pair> {
        let mut out = Vec::with_capacity(2 * self.cherries.len());
        for (a, b) in self.cherries() {
            out.push(Pair::new(a, b));
            out.push(Pair::new(b, a));
        }
        out.sort_unstable();
        out
    }

    /// The common leaf of all reduced trees once every tree is a single leaf.
    pub fn final_leaf(&self) -> Option<TaxonId> {
        if !self.cherries.is_empty() {
            return None;
        }
        let mut leaf = None;
        for tree in &self.trees {
            let t = tree.nodes[tree.root as usize].taxon;
            match leaf {
                None => leaf = Some(t),
                Some(l) if l != t => return None,
                _ => {}
            }
        }
        leaf.map(TaxonId)
    }

    /// Record that the branch `(x,y)` has been explored at the current node.
    pub fn record(&mut self, x: TaxonId, y: TaxonId, cc: u32) {
        let idx = x.0 * self.n as u32 + y.0;
        self.set_record(idx, cc);
    }

    /// Whether `(x,y)` has a live record matching the current count of `{x,y}`.
    pub fn is_redundant(&self, x: TaxonId, y: TaxonId) -> bool {
        let r = self.records[x.index() * self.n + y.index()];
        r != NONE && r == self.cc(x, y)
    }

    /// Live records as `(x, y, recorded count)`.
    pub fn records(&self) -> Vec<(TaxonId, TaxonId, u32)> {
        let n = self.n;
        self.records
            .iter()
            .enumerate()
            .filter(|(_, &r)| r != NONE)
            .map(|(i, &r)| (TaxonId((i / n) as u32), TaxonId((i % n) as u32), r))
            .collect()
    }

    /// Live records as they were when `cp` was taken.
    pub fn records_at(&self, cp: Checkpoint) -> Vec<(TaxonId, TaxonId, u32)> {
        let mut records = self.records.clone();
        for edit in self.log[cp.pos..].iter().rev() {
            if let Edit::Record { idx, prev } = *edit {
                records[idx as usize] = prev;
            }
        }
        let n = self.n;
        records
            .iter()
            .enumerate()
            .filter(|(_, &r)| r != NONE)
            .map(|(i, &r)| (TaxonId((i / n) as u32), TaxonId((i % n) as u32), r))
            .collect()
    }

    /// The sequence as it was when `cp` was taken.
    pub fn sequence_at(&self, cp: Checkpoint) -> &[Pair] {
        &self.seq[..cp.seq_len]
    }

    /// Hash of everything determined by the sequence alone (trees, counts, forbidden leaves).
    pub fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.trees.hash(&mut h);
        self.cc.hash(&mut h);
        self.forbidden.hash(&mut h);
        self.occ.hash(&mut h);
        self.n_prime.hash(&mut h);
        self.seq.hash(&mut h);
        self.trivial.hash(&mut h);
        h.finish()
    }

    /// Compare all incremental bookkeeping against a recount from the reduced trees, and the
    /// reduced trees against the original trees restricted to their remaining leaves.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.n;
        let reduced = self.reduced_trees();
        let mut cc = vec![0u32; n * n];
        let mut occ = vec![0u32; n];
        for (t, tree) in reduced.iter().enumerate() {
            tree.check().map_err(|e| format!("tree {t}: {e}"))?;
            for (a, b) in tree.cherries() {
                cc[a.index() * n + b.index()] += 1;
            }
            for x in tree.leaves() {
                occ[x.index()] += 1;
                if !self.present[x.index()].contains(t) {
                    return Err(format!("taxon {x} missing from presence set of tree {t}"));
                }
            }
            let keep = |x: TaxonId| self.present[x.index()].contains(t);
            let expect = self.original[t].restrict(&keep).expect("tree keeps a leaf");
            if crate::newick::write_tree(&expect, &dummy_table(n))
                != crate::newick::write_tree(tree, &dummy_table(n))
            {
                return Err(format!("tree {t} differs from the restricted original"));
            }
        }
        if cc != self.cc {
            return Err("cherry counts differ from recount".into());
        }
        if occ != self.occ {
            return Err("occurrence counts differ from recount".into());
        }
        let n_prime = occ.iter().filter(|&&c| c > 0).count() as u32;
        if n_prime != self.n_prime {
            return Err(format!("n' is {} but recount gives {n_prime}", self.n_prime));
        }
        let mut listed: Vec<u32> = self.cherries.clone();
        listed.sort_unstable();
        let live: Vec<u32> = (0..(n * n) as u32).filter(|&k| cc[k as usize] > 0).collect();
        if listed != live {
            return Err("cherry list differs from recount".into());
        }
        for (i, &k) in self.cherries.iter().enumerate() {
            if self.cherry_pos[k as usize] != i as u32 {
                return Err("cherry position map is stale".into());
            }
        }
        let trivial: BTreeSet<u32> = live
            .iter()
            .copied()
            .filter(|&k| {
                let (a, b) = (k as usize / n, k as usize % n);
                let both = reduced
                    .iter()
                    .filter(|t| {
                        let leaves: Vec<TaxonId> = t.leaves().collect();
                        leaves.contains(&TaxonId(a as u32)) && leaves.contains(&TaxonId(b as u32))
                    })
                    .count();
                cc[k as usize] as usize == both
            })
            .collect();
        if trivial != self.trivial {
            return Err("trivial cherry set differs from recount".into());
        }
        let mut forbidden = vec![false; n];
        for p in &self.seq {
            forbidden[p.x.index()] = true;
        }
        if forbidden != self.forbidden {
            return Err("forbidden set differs from the sequence".into());
        }
        let dead =
            live.iter().filter(|&&k| forbidden[k as usize / n] && forbidden[k as usize % n]).count() as u32;
        if dead != self.dead {
            return Err(format!("dead count {} but recount gives {dead}", self.dead));
        }
        Ok(())
    }
}

fn dummy_table(n: usize) -> TaxonTable {
    TaxonTable::new((0..n).map(|i| format!("{i:08}")))
}

//--------------------------------------------------------------------------------------------------
// Sequence validation
//--------------------------------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SequenceReport {
    pub is_tree_child: bool,
    /// Every tree is reduced to the single leaf named by the terminal entry.
    pub is_cps: bool,
    pub weight: i64,
    /// Pairs that removed a leaf from no tree when applied.
    pub non_essential: usize,
    pub problem: Option<String>,
}

impl SequenceReport {
    pub fn is_valid_tree_child_cps(&self) -> bool {
        self.is_tree_child && self.is_cps
    }
}

/// Replay `seq` on fresh copies of the instance's trees and report what it is.
pub fn apply_sequence(instance: &Instance, seq: &CherryPickingSequence) -> SequenceReport {
    let mut report = SequenceReport {
        is_tree_child: seq.is_tree_child(),
        is_cps: false,
        weight: seq.weight(),
        non_essential: 0,
        problem: None,
    };
    let n = instance.num_taxa();
    let pairs = seq.pairs();
    if pairs.is_empty() {
        report.problem = Some("empty sequence".into());
        return report;
    }
    if pairs.iter().any(|p| p.x.index() >= n || p.y.is_some_and(|y| y.index() >= n)) {
        report.problem = Some("taxon out of range".into());
        return report;
    }
    let mut state = SearchState::new(instance);
    state.set_records(false, RecordRule::Literal);
    let (last, body) = pairs.split_last().unwrap();
    for p in body {
        let Some(y) = p.y else {
            report.problem = Some("terminal entry before the end".into());
            return report;
        };
        if p.x == y {
            report.problem = Some("pair with equal coordinates".into());
            return report;
        }
        let occ_before = state.occ[p.x.index()];
        state.apply_pair(p.x, y);
        if state.occ[p.x.index()] == occ_before {
            report.non_essential += 1;
        }
    }
    match *last {
        Pair { x, y: None } => {
            report.is_cps = state.final_leaf() == Some(x);
            if !report.is_cps {
                report.problem = Some("trees are not all reduced to the terminal leaf".into());
            }
        }
        _ => report.problem = Some("missing terminal entry".into()),
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::newick::{parse_instance, write_tree};

    const FOUR_TREES: &str = "(((a,b),e),(c,d)); (((a,b),(c,e)),d); ((a,(e,(b,c))),d); ((a,(e,b)),(c,d));";

    fn ids(inst: &Instance, s: &str) -> Vec<TaxonId> {
        s.chars().map(|c| inst.taxa.id(&c.to_string()).unwrap()).collect()
    }

    fn pair(inst: &Instance, s: &str) -> (TaxonId, TaxonId) {
        let v = ids(inst, s);
        (v[0], v[1])
    }

    #[test]
    fn fresh_state_counts() {
        let inst = parse_instance(FOUR_TREES).unwrap();
        let st = SearchState::new(&inst);
        assert_eq!(st.n_prime(), 5);
        assert_eq!(st.k_prime(), 0);
        assert_eq!(st.num_unique_cherries(), 5);
        for (c, expect) in [("ab", 2), ("cd", 2), ("ce", 1), ("bc", 1), ("be", 1)] {
            let (a, b) = pair(&inst, c);
            assert_eq!(st.cc(a, b), expect, "{c}");
        }
        assert!(st.trivial_cherries().is_empty());
        assert_eq!(st.next_trivial(), TrivialStep::Exhausted);
        assert_eq!(st.branch_candidates().len(), 10);
        st.check_invariants().unwrap();
    }

    #[test]
    fn single_tree_trivial() {
        let inst = parse_instance("((a,b),c);").unwrap();
        let mut st = SearchState::new(&inst);
        let (a, b) = pair(&inst, "ab");
        assert_eq!(st.cc(a, b), 1);
        assert_eq!(st.trivial_cherries(), vec![(a, b)]);
        st.apply_pair(a, b);
        assert_eq!(st.n_prime(), 2);
        assert_eq!(st.k_prime(), 0);
        assert_eq!(write_tree(&st.reduced_trees()[0], &inst.taxa), "(b,c);");
        st.check_invariants().unwrap();
    }

    #[test]
    fn identical_trees_all_trivial() {
        let inst = parse_instance("((a,b),(c,d)); ((a,b),(c,d));").unwrap();
        let st = SearchState::new(&inst);
        assert_eq!(st.trivial_cherries().len(), 2);
        assert!(matches!(st.next_trivial(), TrivialStep::Pick(..)));
    }

    #[test]
    fn apply_first_pair() {
        let inst = parse_instance(FOUR_TREES).unwrap();
        let mut st = SearchState::new(&inst);
        let (a, b) = pair(&inst, "ab");
        st.apply_pair(a, b);
        let trees = st.reduced_trees();
        let text: Vec<String> = trees.iter().map(|t| write_tree(t, &inst.taxa)).collect();
        assert_eq!(text[0], "((b,e),(c,d));");
        assert_eq!(text[1], "((b,(c,e)),d);");
        assert_eq!(text[2], "((a,((b,c),e)),d);");
        assert_eq!(text[3], "((a,(b,e)),(c,d));");
        assert_eq!(st.n_prime(), 5);
        assert_eq!(st.k_prime(), 1);
        st.check_invariants().unwrap();
    }

    #[test]
    fn non_cherry_pair_only_extends_sequence() {
        let inst = parse_instance("(((a,b),e),(c,d));").unwrap();
        let mut st = SearchState::new(&inst);
        let before = st.reduced_trees();
        let (c, b) = pair(&inst, "cb");
        st.apply_pair(c, b);
        assert_eq!(st.reduced_trees(), before);
        assert_eq!(st.seq_len(), 1);
        assert_eq!(st.k_prime(), 1);
        st.check_invariants().unwrap();
    }

    #[test]
    fn undo_restores_state() {
        let inst = parse_instance(FOUR_TREES).unwrap();
        let mut st = SearchState::new(&inst);
        let fresh = st.clone();
        let (a, b) = pair(&inst, "ab");
        let (c, d) = pair(&inst, "cd");
        let cp = st.apply_pair(a, b);
        let mid = st.clone();
        let cp2 = st.apply_pair(c, d);
        st.undo_to(cp2);
        assert_eq!(st, mid);
        st.apply_pair(c, d);
        st.undo_to(cp);
        assert_eq!(st, fresh);
    }

    #[test]
    fn dead_cherry_detected() {
        let inst = parse_instance("((a,b),c); ((a,c),b);").unwrap();
        let [a, b, c] = ids(&inst, "abc")[..] else { unreachable!() };
        let mut st = SearchState::new(&inst);
        st.apply_pair(a, b);
        assert!(!st.is_dead());
        st.apply_pair(c, b);
        assert!(st.is_dead());
        assert_eq!(st.next_trivial(), TrivialStep::Dead);
        st.check_invariants().unwrap();
    }

    #[test]
    fn records_follow_update_rule() {
        let inst = parse_instance("((a,b),(c,d));").unwrap();
        let [a, b, c, d] = ids(&inst, "abcd")[..] else { unreachable!() };
        let mut st = SearchState::new(&inst);
        st.record(c, d, st.cc(c, d));
        st.apply_pair(a, b);
        assert!(st.is_redundant(c, d));

        let mut st = SearchState::new(&inst);
        st.record(c, d, st.cc(c, d));
        st.apply_pair(b, c);
        assert!(!st.is_redundant(c, d));

        let mut st = SearchState::new(&inst);
        st.record(c, d, 7);
        assert!(!st.is_redundant(c, d));
    }

    #[test]
    fn literal_sequence_validates() {
        let inst = parse_instance(FOUR_TREES).unwrap();
        let p = |s: &str| {
            let v = ids(&inst, &s[..1]);
            let x = v[0];
            if &s[1..] == "-" {
                Pair::terminal(x)
            } else {
                Pair::new(x, ids(&inst, &s[1..])[0])
            }
        };
        let seq = CherryPickingSequence::new(
            ["ab", "cd", "cb", "ce", "be", "ae", "ed", "d-"].iter().map(|s| p(s)).collect(),
            5,
        );
        let r = apply_sequence(&inst, &seq);
        assert!(r.is_tree_child && r.is_cps, "{r:?}");
        assert_eq!(r.weight, 3);
        assert_eq!(r.non_essential, 0);
    }

    #[test]
    fn weight_zero_sequence_and_non_tree_child_flag() {
        let inst = parse_instance("(((a,b),c),d);").unwrap();
        let [a, b, c, d] = ids(&inst, "abcd")[..] else { unreachable!() };
        let seq = CherryPickingSequence::new(
            vec![Pair::new(a, b), Pair::new(b, c), Pair::new(c, d), Pair::terminal(d)],
            4,
        );
        let r = apply_sequence(&inst, &seq);
        assert!(r.is_valid_tree_child_cps());
        assert_eq!(r.weight, 0);

        let seq = CherryPickingSequence::new(
            vec![Pair::new(a, b), Pair::new(c, a), Pair::new(b, d), Pair::terminal(d)],
            4,
        );
        assert!(!apply_sequence(&inst, &seq).is_tree_child);
    }

    #[test]
    fn sequence_text_round_trip() {
        let inst = parse_instance("((a,b),c);").unwrap();
        let [a, b, c] = ids(&inst, "abc")[..] else { unreachable!() };
        let seq = CherryPickingSequence::new(vec![Pair::new(a, b), Pair::new(b, c), Pair::terminal(c)], 3);
        let lines = seq.to_lines(&inst.taxa);
        assert_eq!(lines, vec!["(a,b)", "(b,c)", "(c,-)"]);
        let again = CherryPickingSequence::parse(&lines.join("\n"), &inst.taxa).unwrap();
        assert_eq!(again, seq);
    }
}
