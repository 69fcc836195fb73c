//! Event loop.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use super::config::TonConfig;
use super::cost::{subtxn_cost, CostLedger};
use super::network::{DisableCause, Network, NodeId, Route};
use super::stats::{AbortReason, DeathRecord, RunStats, WindowRecord};
use crate::error::Result;
use crate::experiments::choke::{detect_choke, ChokeCriterion, ChokeOutcome};
use crate::rng::{next_injection_delay, SimRng, Stream};

pub type TxnId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxnStatus {
    InFlight,
    Committed,
    Aborted(AbortReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transaction {
    pub id: TxnId,
    /// 1-based index of the subtransaction currently executing (or last
    /// executed once the transaction is final).
    pub current_index: u32,
    pub current_node: NodeId,
    pub previous_node: Option<NodeId>,
    pub status: TxnStatus,
}

impl Transaction {
    /// Number of subtransactions that ran to completion.
    pub fn completed_subtxns(&self) -> u32 {
        match self.status {
            TxnStatus::Committed => self.current_index,
            TxnStatus::Aborted(AbortReason::AllNeighborsDisabled) => self.current_index,
            TxnStatus::Aborted(AbortReason::NoLiveSource) => 0,
            TxnStatus::Aborted(AbortReason::HostDied) | TxnStatus::InFlight => {
                self.current_index - 1
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Inject,
    SubtxnComplete(TxnId),
    NodeFault(NodeId),
    EndOfSim,
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    /// Reversed `(time, seq)` order so that `BinaryHeap` pops the earliest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Outcome of charging a subtransaction to its host.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeOutcome {
    Accepted,
    NodeDied,
}

/// Decay the node's ledger entry to `now`, add the cost of subtransaction
/// `index`, and disable the node for overload if the capacity is reached.
///
/// Aborting the transactions hosted by a node that died is left to the
/// caller, which owns the hosting table.
///
/// # Panics
///
/// If `node` is already disabled.
pub fn add_subtxn_cost(
    ledger: &mut CostLedger<f64>,
    network: &mut Network,
    node: NodeId,
    index: usize,
    config: &TonConfig,
    now: f64,
) -> Result<ChargeOutcome> {
    assert!(network.is_alive(node), "charging disabled node {node}");
    let cost = subtxn_cost(index, config.txn_length, config.psi0, config.alpha)?;
    let xi = ledger.charge(node as usize, cost, now);
    if xi >= config.capacity {
        network.disable(node, DisableCause::Overload);
        Ok(ChargeOutcome::NodeDied)
    } else {
        Ok(ChargeOutcome::Accepted)
    }
}

/// One fault time per node, exponential with mean `fault_mean_delay`.
/// Empty when faults are disabled.
pub fn schedule_faults(config: &TonConfig, rng: &mut SimRng) -> Vec<(NodeId, f64)> {
    match config.fault_mean_delay {
        None => Vec::new(),
        Some(mean) => (0..config.n_nodes as NodeId)
            .map(|node| (node, rng.exp_mean(mean)))
            .collect(),
    }
}

/// Observable step of a traced run.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceEntry {
    Hop {
        txn: TxnId,
        index: u32,
        from: Option<NodeId>,
        to: NodeId,
    },
    Commit { txn: TxnId },
    Abort { txn: TxnId, reason: AbortReason },
    Death { node: NodeId, cause: DisableCause },
}

struct Windows {
    size: usize,
    stride: usize,
    recent: VecDeque<(f64, bool)>,
    committed: usize,
    since_record: usize,
}

impl Windows {
    fn new(criterion: &ChokeCriterion) -> Self {
        let size = criterion.window.max(1);
        Windows {
            size,
            stride: (size / 10).max(1),
            recent: VecDeque::with_capacity(size + 1),
            committed: 0,
            since_record: 0,
        }
    }

    fn push(&mut self, time: f64, committed: bool, out: &mut Vec<WindowRecord>) {
        self.recent.push_back((time, committed));
        self.committed += committed as usize;
        if self.recent.len() > self.size {
            let (_, c) = self.recent.pop_front().expect("non-empty");
            self.committed -= c as usize;
        }
        self.since_record += 1;
        if self.recent.len() == self.size && self.since_record >= self.stride {
            self.since_record = 0;
            out.push(WindowRecord {
                start_time: self.recent.front().expect("non-empty").0,
                end_time: time,
                finalized: self.size as u32,
                committed: self.committed as u32,
            });
        }
    }

    /// A run too short to fill one window still reports the outcome of
    /// everything it finalized.
    fn flush_partial(&mut self, out: &mut Vec<WindowRecord>) {
        if out.is_empty() && !self.recent.is_empty() {
            out.push(WindowRecord {
                start_time: self.recent.front().expect("non-empty").0,
                end_time: self.recent.back().expect("non-empty").0,
                finalized: self.recent.len() as u32,
                committed: self.committed as u32,
            });
        }
    }
}

/// A single deterministic simulation run.
pub struct Simulation {
    config: TonConfig,
    criterion: ChokeCriterion,
    network: Network,
    ledger: CostLedger<f64>,
    queue: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    txns: Vec<Transaction>,
    hosted: Vec<Vec<TxnId>>,
    injection_rng: SimRng,
    routing_rng: SimRng,
    windows: Windows,
    stats: RunStats,
    finished: bool,
    trace: Option<Vec<TraceEntry>>,
}

impl Simulation {
    pub fn new(config: &TonConfig, criterion: &ChokeCriterion) -> Result<Self> {
        config.validate()?;
        criterion.validate()?;
        let mut graph_rng = SimRng::for_stream(config.seed, Stream::Graph);
        let network = Network::generate(config.n_nodes, config.density, &mut graph_rng);
        Ok(Self::with_network(config, criterion, network))
    }

    /// Run on a caller-supplied network instead of a random one.
    pub fn with_network(config: &TonConfig, criterion: &ChokeCriterion, network: Network) -> Self {
        let n = network.n_nodes();
        let mut sim = Simulation {
            config: config.clone(),
            criterion: criterion.clone(),
            network,
            ledger: CostLedger::new(n, config.decay_time),
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            txns: Vec::new(),
            hosted: vec![Vec::new(); n],
            injection_rng: SimRng::for_stream(config.seed, Stream::Injection),
            routing_rng: SimRng::for_stream(config.seed, Stream::Routing),
            windows: Windows::new(criterion),
            stats: RunStats {
                n_nodes: n,
                ..RunStats::default()
            },
            finished: false,
            trace: None,
        };
        sim.push(config.sim_duration, EventKind::EndOfSim);
        let mut fault_rng = SimRng::for_stream(config.seed, Stream::Faults);
        for (node, t) in schedule_faults(config, &mut fault_rng) {
            if t < config.sim_duration && (node as usize) < n {
                sim.push(t, EventKind::NodeFault(node));
            }
        }
        if config.injection_rate > 0.0 {
            let d = next_injection_delay(config.injection_rate, &mut sim.injection_rng)
                .expect("rate checked positive");
            if d < config.sim_duration {
                sim.push(d, EventKind::Inject);
            }
        }
        sim
    }

    /// Disable `nodes` by fault at the start of the run, before any event.
    ///
    /// # Panics
    ///
    /// If called after the first step.
    pub fn fail_at_start(&mut self, nodes: &[NodeId]) {
        assert!(self.now == 0.0 && self.txns.is_empty(), "run already started");
        for &node in nodes {
            self.kill(node, DisableCause::Fault);
        }
    }

    /// Record every hop, commit, abort and death until [`Self::drain_trace`].
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn drain_trace(&mut self) -> Vec<TraceEntry> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn ledger(&self) -> &CostLedger<f64> {
        &self.ledger
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.txns
    }

    pub fn config(&self) -> &TonConfig {
        &self.config
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Transactions currently hosted by `node`.
    pub fn hosted(&self, node: NodeId) -> &[TxnId] {
        &self.hosted[node as usize]
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Event { time, seq, kind });
    }

    fn record(&mut self, entry: TraceEntry) {
        if let Some(t) = self.trace.as_mut() {
            t.push(entry);
        }
    }

    /// Process the next event. Returns `false` once the run has ended.
    pub fn step(&mut self) -> bool {
        if self.finished {
            return false;
        }
        let Some(ev) = self.queue.pop() else {
            self.finished = true;
            return false;
        };
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        match ev.kind {
            EventKind::EndOfSim => {
                self.finished = true;
                return false;
            }
            EventKind::Inject => self.inject(),
            EventKind::SubtxnComplete(id) => self.complete(id),
            EventKind::NodeFault(node) => {
                if self.network.is_alive(node) {
                    self.kill(node, DisableCause::Fault);
                }
            }
        }
        true
    }

    /// Run to the end and return the collected statistics.
    pub fn run(mut self) -> RunStats {
        while self.step() {}
        self.finish()
    }

    fn finish(mut self) -> RunStats {
        self.windows.flush_partial(&mut self.stats.window_records);
        self.stats.in_flight_at_end = self
            .txns
            .iter()
            .filter(|t| t.status == TxnStatus::InFlight)
            .count() as u64;
        if let ChokeOutcome::ChokedAt(t) =
            detect_choke(&self.stats.window_records, self.stats.all_dead_time, &self.criterion)
        {
            let (any, fault) = self.stats.disabled_fractions_at(t);
            self.stats.choke_time = Some(t);
            self.stats.disabled_fraction_at_choke = Some(any);
            self.stats.fault_fraction_at_choke = Some(fault);
        }
        self.stats
    }

    fn inject(&mut self) {
        let id = self.txns.len() as TxnId;
        self.stats.injected += 1;
        let next = self.now
            + next_injection_delay(self.config.injection_rate, &mut self.injection_rng)
                .expect("rate checked positive");
        if next < self.config.sim_duration {
            self.push(next, EventKind::Inject);
        }
        let source = self.network.random_alive(&mut self.injection_rng);
        self.txns.push(Transaction {
            id,
            current_index: 1,
            current_node: source.unwrap_or(0),
            previous_node: None,
            status: TxnStatus::InFlight,
        });
        match source {
            None => self.abort(id, AbortReason::NoLiveSource),
            Some(node) => self.start_subtxn(id, node),
        }
    }

    /// Host subtransaction `current_index` of `id` at `node`.
    fn start_subtxn(&mut self, id: TxnId, node: NodeId) {
        let (index, from) = {
            let t = &self.txns[id as usize];
            (t.current_index, t.previous_node)
        };
        self.record(TraceEntry::Hop { txn: id, index, from, to: node });
        self.hosted[node as usize].push(id);
        let outcome = add_subtxn_cost(
            &mut self.ledger,
            &mut self.network,
            node,
            index as usize,
            &self.config,
            self.now,
        )
        .expect("subtransaction index within transaction length");
        match outcome {
            ChargeOutcome::NodeDied => self.after_death(node, DisableCause::Overload),
            ChargeOutcome::Accepted => {
                self.push(self.now + self.config.subtxn_time, EventKind::SubtxnComplete(id));
            }
        }
    }

    fn complete(&mut self, id: TxnId) {
        let txn = &self.txns[id as usize];
        if txn.status != TxnStatus::InFlight {
            return;
        }
        let host = txn.current_node;
        let index = txn.current_index;
        let list = &mut self.hosted[host as usize];
        let pos = list.iter().position(|&t| t == id).expect("in-flight txn is hosted");
        list.swap_remove(pos);
        if index as usize >= self.config.txn_length {
            self.txns[id as usize].status = TxnStatus::Committed;
            self.stats.committed += 1;
            self.record(TraceEntry::Commit { txn: id });
            self.windows.push(self.now, true, &mut self.stats.window_records);
            return;
        }
        match self.network.route_next(host, &mut self.routing_rng) {
            Route::NoRoute => self.abort(id, AbortReason::AllNeighborsDisabled),
            Route::NextNode(next) => {
                let t = &mut self.txns[id as usize];
                t.previous_node = Some(host);
                t.current_node = next;
                t.current_index += 1;
                self.start_subtxn(id, next);
            }
        }
    }

    fn abort(&mut self, id: TxnId, reason: AbortReason) {
        self.txns[id as usize].status = TxnStatus::Aborted(reason);
        self.stats.aborted += 1;
        self.stats.aborted_by_reason.bump(reason);
        self.record(TraceEntry::Abort { txn: id, reason });
        self.windows.push(self.now, false, &mut self.stats.window_records);
    }

    fn kill(&mut self, node: NodeId, cause: DisableCause) {
        if self.network.disable(node, cause) {
            self.after_death(node, cause);
        }
    }

    /// Bookkeeping after `node` has been disabled: abort everything it hosts.
    fn after_death(&mut self, node: NodeId, cause: DisableCause) {
        match cause {
            DisableCause::Overload => self.stats.nodes_disabled_overload += 1,
            DisableCause::Fault => self.stats.nodes_disabled_fault += 1,
        }
        self.stats.deaths.push(DeathRecord { time: self.now, node, cause });
        self.record(TraceEntry::Death { node, cause });
        if self.network.alive_count() == 0 {
            self.stats.all_dead_time = Some(self.now);
        }
        let victims = std::mem::take(&mut self.hosted[node as usize]);
        for id in victims {
            self.abort(id, AbortReason::HostDied);
        }
    }
}

/// Run one simulation with the default choke criterion.
pub fn run_simulation(config: &TonConfig) -> Result<RunStats> {
    run_simulation_with(config, &ChokeCriterion::default())
}

pub fn run_simulation_with(config: &TonConfig, criterion: &ChokeCriterion) -> Result<RunStats> {
    Ok(Simulation::new(config, criterion)?.run())
}
