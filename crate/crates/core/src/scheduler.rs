//! Parallel search by work sharing.
//!
//! Every worker owns an [`Engine`]. Idle workers queue a request; a busy worker checks the queue
//! every `poll_interval` iterations and, if it has an unexplored branch, hands the one closest
//! to the root of its stack to the longest-waiting requester as a [`WorkItem`]. The receiver
//! rebuilds the branch by replaying the prefix on its own state and installing the donor's
//! branch records.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use crate::forest::{CherryPickingSequence, Pair};
use crate::search::{Engine, EngineConfig, Flow, Outcome, SearchStats, SolveOptions, Step};
use crate::tree::{Instance, TaxonId};

/// An unexplored branch: the sequence leading to it, ending with the branch pair, and the branch
/// records live at its parent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WorkItem {
    pub prefix: Vec<Pair>,
    pub records: Vec<(TaxonId, TaxonId, u32)>,
    pub k: u32,
    /// Digest of the parent state, or 0 when digests are off.
    pub digest: u64,
}

impl Engine {
    /// Remove the unexplored branch closest to the root of the stack and describe it.
    ///
    /// The branch stays in its frame's candidate list, so later siblings still record it.
    pub fn split_bottom(&mut self) -> Option<WorkItem> {
        let fi = self.stack.iter().position(|f| f.next < f.candidates.len())?;
        let frame = &mut self.stack[fi];
        let (x, y, _) = frame.candidates[frame.next];
        let mut records = self.state.records_at(frame.cp);
        if self.config.use_rbe {
            records.extend(frame.candidates[frame.recorded..frame.next].iter().copied());
        }
        frame.next += 1;
        let mut prefix = self.state.sequence_at(frame.cp).to_vec();
        prefix.push(Pair::new(x, y));
        Some(WorkItem { prefix, records, k: self.k, digest: frame.digest })
    }

    /// Rebuild the state of a shared branch and enter it. Returns whether the replayed parent
    /// state matched the donor's digest.
    pub(crate) fn load(&mut self, item: &WorkItem) -> (Step, bool) {
        self.reset();
        let (last, parent) = item.prefix.split_last().expect("work item has a branch pair");
        for p in parent {
            self.state.apply_pair(p.x, p.y.expect("prefix pairs are not terminal"));
        }
        let digest_ok = item.digest == 0 || !self.config.digests || self.state.digest() == item.digest;
        for &(x, y, cc) in &item.records {
            self.state.record(x, y, cc);
        }
        self.state.apply_pair(last.x, last.y.expect("branch pair is not terminal"));
        (self.enter(), digest_ok)
    }
}

struct Shared {
    cancel: AtomicBool,
    timed_out: AtomicBool,
    /// Workers holding work, including items sent but not yet picked up.
    active: AtomicUsize,
    queue: Mutex<VecDeque<usize>>,
    mailbox: Vec<Mutex<Option<WorkItem>>>,
    result: Mutex<Option<CherryPickingSequence>>,
    deadline: Option<Instant>,
    exhaustive: bool,
}

impl Shared {
    fn offer(&self, seq: CherryPickingSequence) {
        let mut best = self.result.lock().unwrap();
        if best.as_ref().is_none_or(|b| seq.weight() < b.weight()) {
            *best = Some(seq);
        }
        if !self.exhaustive {
            self.cancel.store(true, Ordering::SeqCst);
        }
    }

    fn poll(&self, engine: &mut Engine) -> Flow {
        if self.cancel.load(Ordering::Relaxed) {
            return Flow::Stop;
        }
        if self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.timed_out.store(true, Ordering::SeqCst);
            self.cancel.store(true, Ordering::SeqCst);
            return Flow::Stop;
        }
        let mut queue = self.queue.lock().unwrap();
        while let Some(&requester) = queue.front() {
            let Some(item) = engine.split_bottom() else { break };
            queue.pop_front();
            self.active.fetch_add(1, Ordering::SeqCst);
            *self.mailbox[requester].lock().unwrap() = Some(item);
            engine.stats.work_transfers += 1;
        }
        Flow::Continue
    }
}

/// Result of a parallel search, including per-entry traces when requested.
#[derive(Clone, Debug)]
pub struct ParallelReport {
    pub outcome: Outcome,
    pub stats: SearchStats,
    pub traces: Vec<Vec<Pair>>,
}

#[derive(Clone, Debug)]
pub struct ParallelConfig {
    pub workers: usize,
    pub poll_interval: u64,
    pub use_rbe: bool,
    pub exhaustive: bool,
    pub trace: bool,
    pub digests: bool,
    pub deadline: Option<Instant>,
}

impl Default for ParallelConfig {
    fn default() -> Self {
        ParallelConfig {
            workers: 1,
            poll_interval: 100,
            use_rbe: true,
            exhaustive: false,
            trace: false,
            digests: cfg!(debug_assertions),
            deadline: None,
        }
    }
}

/// Search at bound `k` with several workers.
pub fn run_parallel(
    instance: &Instance,
    k: u32,
    workers: usize,
    poll_interval: u64,
) -> Option<CherryPickingSequence> {
    let config = ParallelConfig { workers, poll_interval, ..ParallelConfig::default() };
    match run_parallel_report(instance, k, &config).outcome {
        Outcome::Found(seq) => Some(seq),
        _ => None,
    }
}

pub(crate) fn run_parallel_with(
    instance: &Instance,
    k: u32,
    opts: &SolveOptions,
    deadline: Option<Instant>,
) -> (Outcome, SearchStats) {
    let config = ParallelConfig {
        workers: opts.workers,
        poll_interval: opts.poll_interval,
        use_rbe: opts.use_rbe,
        deadline,
        ..ParallelConfig::default()
    };
    let report = run_parallel_report(instance, k, &config);
    (report.outcome, report.stats)
}

/// Search at bound `k` with `config.workers` workers and report stats and traces.
pub fn run_parallel_report(instance: &Instance, k: u32, config: &ParallelConfig) -> ParallelReport {
    let workers = config.workers.max(1);
    let shared = Shared {
        cancel: AtomicBool::new(false),
        timed_out: AtomicBool::new(false),
        active: AtomicUsize::new(1),
        queue: Mutex::new(VecDeque::new()),
        mailbox: (0..workers).map(|_| Mutex::new(None)).collect(),
        result: Mutex::new(None),
        deadline: config.deadline,
        exhaustive: config.exhaustive,
    };
    let engine_config = EngineConfig {
        use_rbe: config.use_rbe,
        exhaustive: config.exhaustive,
        trace: config.trace,
        digests: config.digests,
        poll_interval: config.poll_interval,
        ..EngineConfig::default()
    };

    let per_worker: Vec<(SearchStats, Vec<Vec<Pair>>)> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|id| {
                let shared = &shared;
                let engine = Engine::new(instance, k, engine_config.clone());
                scope.spawn(move || worker(id, engine, shared))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    let mut stats = SearchStats::default();
    let mut traces = Vec::new();
    for (s, t) in per_worker {
        stats.merge(&s);
        traces.extend(t);
    }
    let best = shared.result.into_inner().unwrap();
    let outcome = match best {
        Some(seq) => Outcome::Found(seq),
        None if shared.timed_out.load(Ordering::SeqCst) => Outcome::Stopped,
        None => Outcome::Exhausted,
    };
    ParallelReport { outcome, stats, traces }
}

fn worker(id: usize, mut engine: Engine, shared: &Shared) -> (SearchStats, Vec<Vec<Pair>>) {
    let mut poll = |e: &mut Engine| shared.poll(e);
    if id == 0 {
        let step = engine.start();
        finish_item(&mut engine, shared, step, &mut poll);
    }
    let mut queued = false;
    let mut spins = 0u32;
    loop {
        if shared.cancel.load(Ordering::SeqCst) {
            break;
        }
        let item = shared.mailbox[id].lock().unwrap().take();
        if let Some(item) = item {
            queued = false;
            spins = 0;
            let (step, digest_ok) = engine.load(&item);
            if !digest_ok {
                engine.stats.digest_mismatches += 1;
            }
            let step = match step {
                Step::Solved(seq) => Some(Outcome::Found(seq)),
                Step::Failed => Some(Outcome::Exhausted),
                Step::Branched => None,
            };
            finish_item(&mut engine, shared, step, &mut poll);
            continue;
        }
        if !queued {
            shared.queue.lock().unwrap().push_back(id);
            queued = true;
        }
        if shared.active.load(Ordering::SeqCst) == 0 {
            break;
        }
        if shared.deadline.is_some_and(|d| Instant::now() >= d) {
            shared.timed_out.store(true, Ordering::SeqCst);
            shared.cancel.store(true, Ordering::SeqCst);
            break;
        }
        spins += 1;
        if spins < 64 {
            thread::yield_now();
        } else {
            thread::sleep(Duration::from_micros(50));
        }
    }
    (std::mem::take(&mut engine.stats), std::mem::take(&mut engine.trace))
}

/// Run the remainder of an item whose first step has been taken, then release it.
fn finish_item(
    engine: &mut Engine,
    shared: &Shared,
    first: Option<Outcome>,
    poll: &mut dyn FnMut(&mut Engine) -> Flow,
) {
    let outcome = match first {
        Some(Outcome::Found(seq)) if shared.exhaustive => {
            shared.offer(seq);
            engine.run(poll)
        }
        Some(outcome) => outcome,
        None => engine.run(poll),
    };
    if let Outcome::Found(seq) = outcome {
        shared.offer(seq);
    }
    shared.active.fetch_sub(1, Ordering::SeqCst);
}
