//! Bounded search for a minimum-weight tree-child cherry-picking sequence.
//!
//! [`Engine`] runs the branching procedure for a fixed bound `k` over one [`SearchState`],
//! keeping the recursion on an explicit stack of frames and rolling the state back through its
//! undo log. [`solve`] calls it with `k = 0, 1, 2, ...` until a sequence is found.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::forest::{Checkpoint, CherryPickingSequence, Pair, RecordRule, SearchState, TrivialStep};
use crate::network::{network_from_sequence, Network};
use crate::tree::{Instance, TaxonId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolveOptions {
    pub max_k: Option<u32>,
    pub use_rbe: bool,
    pub use_clusters: bool,
    pub workers: usize,
    pub poll_interval: u64,
    pub time_limit: Option<Duration>,
    pub record_rule: RecordRule,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_k: None,
            use_rbe: true,
            use_clusters: true,
            workers: 1,
            poll_interval: 100,
            time_limit: None,
            record_rule: RecordRule::Literal,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub recursive_calls: u64,
    pub branches_pruned_rbe: u64,
    pub max_depth: usize,
    /// Largest number of unique cherries seen at a node that branched.
    pub max_branch_cherries: usize,
    /// Entries with `k'` outside `0..=k`.
    pub k_prime_violations: u64,
    /// Recursive calls made at each bound `k`, in the order the bounds were tried.
    pub calls_per_k: Vec<(u32, u64)>,
    pub work_transfers: u64,
    pub digest_mismatches: u64,
    pub wall_time: Duration,
}

impl SearchStats {
    pub fn merge(&mut self, other: &SearchStats) {
        self.recursive_calls += other.recursive_calls;
        self.branches_pruned_rbe += other.branches_pruned_rbe;
        self.max_depth = self.max_depth.max(other.max_depth);
        self.max_branch_cherries = self.max_branch_cherries.max(other.max_branch_cherries);
        self.k_prime_violations += other.k_prime_violations;
        self.calls_per_k.extend_from_slice(&other.calls_per_k);
        self.work_transfers += other.work_transfers;
        self.digest_mismatches += other.digest_mismatches;
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub sequence: CherryPickingSequence,
    pub weight: i64,
    pub network: Network,
    pub stats: SearchStats,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("no tree-child solution with k <= {0}")]
    NoSolution(u32),
    #[error("time limit exceeded")]
    TimeLimit,
    #[error("{0}")]
    Internal(String),
}

//--------------------------------------------------------------------------------------------------
// Engine
//--------------------------------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Found(CherryPickingSequence),
    Exhausted,
    Stopped,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Step {
    Solved(CherryPickingSequence),
    Failed,
    Branched,
}

#[derive(Clone, Debug)]
pub(crate) struct Frame {
    pub(crate) cp: Checkpoint,
    /// Branch pairs with the count of their cherry at this node.
    pub(crate) candidates: Vec<(TaxonId, TaxonId, u32)>,
    pub(crate) next: usize,
    pub(crate) recorded: usize,
    pub(crate) digest: u64,
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub use_rbe: bool,
    pub record_rule: RecordRule,
    /// Keep searching after a solution and return the lightest one found.
    pub exhaustive: bool,
    /// Log the sequence at every recursive entry.
    pub trace: bool,
    /// Compute state digests at branch points.
    pub digests: bool,
    pub poll_interval: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            use_rbe: true,
            record_rule: RecordRule::Literal,
            exhaustive: false,
            trace: false,
            digests: cfg!(debug_assertions),
            poll_interval: 100,
        }
    }
}

pub struct Engine {
    pub(crate) state: SearchState,
    base: Checkpoint,
    pub(crate) k: u32,
    pub(crate) config: EngineConfig,
    pub(crate) stack: Vec<Frame>,
    pub stats: SearchStats,
    pub trace: Vec<Vec<Pair>>,
    best: Option<CherryPickingSequence>,
    iterations: u64,
}

impl Engine {
    pub fn new(instance: &Instance, k: u32, config: EngineConfig) -> Self {
        Self::from_state(SearchState::new(instance), k, config)
    }

    pub fn from_state(mut state: SearchState, k: u32, config: EngineConfig) -> Self {
        state.set_records(config.use_rbe, config.record_rule);
        let base = state.checkpoint();
        Engine {
            state,
            base,
            k,
            config,
            stack: Vec::new(),
            stats: SearchStats::default(),
            trace: Vec::new(),
            best: None,
            iterations: 0,
        }
    }

    pub fn state(&self) -> &SearchState {
        &self.state
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Roll back to the initial state and discard the stack.
    pub(crate) fn reset(&mut self) {
        self.state.undo_to(self.base);
        self.stack.clear();
    }

    /// One recursive invocation at the current state: reduce trivial cherries, then either
    /// finish, fail, or push a branching frame.
    pub(crate) fn enter(&mut self) -> Step {
        self.stats.recursive_calls += 1;
        if self.config.trace {
            self.trace.push(self.state.sequence().to_vec());
        }
        let kp = self.state.k_prime();
        if kp < 0 || kp > self.k as i64 {
            self.stats.k_prime_violations += 1;
        }
        loop {
            match self.state.next_trivial() {
                TrivialStep::Pick(x, y) => {
                    if self.config.use_rbe && self.state.is_redundant(x, y) {
                        self.stats.branches_pruned_rbe += 1;
                        return Step::Failed;
                    }
                    self.state.apply_pair(x, y);
                }
                TrivialStep::Dead => return Step::Failed,
                TrivialStep::Exhausted => break,
            }
        }
        if self.state.is_dead() {
            return Step::Failed;
        }
        let unique = self.state.num_unique_cherries();
        if unique == 0 {
            return match self.state.final_leaf() {
                Some(leaf) => {
                    let mut pairs = self.state.sequence().to_vec();
                    pairs.push(Pair::terminal(leaf));
                    Step::Solved(CherryPickingSequence::new(pairs, self.state.num_taxa()))
                }
                None => Step::Failed,
            };
        }
        if 2 * unique > 8 * self.k as usize || self.state.k_prime() >= self.k as i64 {
            return Step::Failed;
        }
        let mut candidates = Vec::with_capacity(2 * unique);
        for p in self.state.branch_candidates() {
            let (x, y) = (p.x, p.y.unwrap());
            if self.state.is_forbidden(y) {
                continue;
            }
            if self.config.use_rbe && self.state.is_redundant(x, y) {
                self.stats.branches_pruned_rbe += 1;
                continue;
            }
            candidates.push((x, y, self.state.cc(x, y)));
        }
        self.stats.max_branch_cherries = self.stats.max_branch_cherries.max(unique);
        let digest = if self.config.digests { self.state.digest() } else { 0 };
        self.stack.push(Frame { cp: self.state.checkpoint(), candidates, next: 0, recorded: 0, digest });
        self.stats.max_depth = self.stats.max_depth.max(self.stack.len());
        Step::Branched
    }

    /// Start a fresh search at the root.
    pub fn start(&mut self) -> Option<Outcome> {
        self.reset();
        self.best = None;
        match self.enter() {
            Step::Solved(seq) => Some(Outcome::Found(seq)),
            Step::Failed => Some(Outcome::Exhausted),
            Step::Branched => None,
        }
    }

    /// Explore the stack until a solution is found, the stack is exhausted or `poll` stops it.
    /// `poll` is called every `poll_interval` iterations.
    pub fn run(&mut self, poll: &mut dyn FnMut(&mut Engine) -> Flow) -> Outcome {
        loop {
            self.iterations += 1;
            if self.iterations.is_multiple_of(self.config.poll_interval.max(1)) && poll(self) == Flow::Stop {
                return Outcome::Stopped;
            }
            if self.stack.is_empty() {
                return match self.best.take() {
                    Some(seq) => Outcome::Found(seq),
                    None => Outcome::Exhausted,
                };
            }
            let use_rbe = self.config.use_rbe;
            let top = self.stack.last_mut().unwrap();
            if top.next == top.candidates.len() {
                let cp = top.cp;
                self.stack.pop();
                self.state.undo_to(cp);
                continue;
            }
            self.state.undo_to(top.cp);
            if use_rbe && top.recorded < top.next {
                for &(x, y, cc) in &top.candidates[top.recorded..top.next] {
                    self.state.record(x, y, cc);
                }
                top.recorded = top.next;
                top.cp = self.state.checkpoint();
            }
            let (x, y, _) = top.candidates[top.next];
            top.next += 1;
            self.state.apply_pair(x, y);
            if let Step::Solved(seq) = self.enter() {
                if !self.config.exhaustive {
                    return Outcome::Found(seq);
                }
                if self.best.as_ref().is_none_or(|b| seq.weight() < b.weight()) {
                    self.best = Some(seq);
                }
            }
        }
    }

    /// Run the whole search for this bound.
    pub fn search(&mut self, poll: &mut dyn FnMut(&mut Engine) -> Flow) -> Outcome {
        match self.start() {
            Some(Outcome::Found(seq)) if self.config.exhaustive => {
                self.best = Some(seq);
                self.run(poll)
            }
            Some(outcome) => outcome,
            None => self.run(poll),
        }
    }
}

/// One bounded search from `state`: an optimal completion of weight at most `k`, if the
/// search finds one.
pub fn tcs2(state: SearchState, k: u32, use_rbe: bool) -> (Option<CherryPickingSequence>, SearchStats) {
    let config = EngineConfig { use_rbe, ..EngineConfig::default() };
    let mut engine = Engine::from_state(state, k, config);
    let outcome = engine.search(&mut |_| Flow::Continue);
    let seq = match outcome {
        Outcome::Found(seq) => Some(seq),
        _ => None,
    };
    (seq, engine.stats)
}

/// Whether `(x,y)` is currently marked redundant in `state`.
pub fn is_redundant(state: &SearchState, x: TaxonId, y: TaxonId) -> bool {
    state.is_redundant(x, y)
}

//--------------------------------------------------------------------------------------------------
// Driver
//--------------------------------------------------------------------------------------------------

/// Search with increasing `k` up to `max_k` without cluster reduction.
pub(crate) fn solve_unclustered(
    instance: &Instance,
    opts: &SolveOptions,
    max_k: Option<u32>,
    deadline: Option<Instant>,
    stats: &mut SearchStats,
) -> Result<CherryPickingSequence, SolveError> {
    let mut k = 0u32;
    loop {
        if max_k.is_some_and(|m| k > m) {
            return Err(SolveError::NoSolution(max_k.unwrap()));
        }
        let (outcome, run_stats) = if opts.workers <= 1 {
            let config = EngineConfig {
                use_rbe: opts.use_rbe,
                record_rule: opts.record_rule,
                poll_interval: opts.poll_interval,
                ..EngineConfig::default()
            };
            let mut engine = Engine::new(instance, k, config);
            let outcome = engine.search(&mut |_| {
                if deadline.is_some_and(|d| Instant::now() >= d) {
                    Flow::Stop
                } else {
                    Flow::Continue
                }
            });
            (outcome, engine.stats)
        } else {
            crate::scheduler::run_parallel_with(instance, k, opts, deadline)
        };
        let calls = run_stats.recursive_calls;
        stats.merge(&run_stats);
        stats.calls_per_k.push((k, calls));
        log::debug!("k = {k}: {calls} recursive calls");
        match outcome {
            Outcome::Found(seq) => return Ok(seq),
            Outcome::Stopped => return Err(SolveError::TimeLimit),
            Outcome::Exhausted => k += 1,
        }
    }
}

/// Find a minimum-weight tree-child cherry-picking sequence and its network.
pub fn solve(instance: &Instance, opts: &SolveOptions) -> Result<Solution, SolveError> {
    let started = Instant::now();
    let deadline = opts.time_limit.map(|d| started + d);
    let mut stats = SearchStats::default();
    let sequence = if opts.use_clusters {
        crate::clusters::solve_clustered(instance, opts.max_k, &mut |sub, budget| {
            solve_unclustered(sub, opts, budget, deadline, &mut stats)
        })?
    } else {
        solve_unclustered(instance, opts, opts.max_k, deadline, &mut stats)?
    };
    let network = network_from_sequence(&sequence).map_err(|e| SolveError::Internal(e.to_string()))?;
    stats.wall_time = started.elapsed();
    Ok(Solution { weight: sequence.weight(), sequence, network, stats })
}
