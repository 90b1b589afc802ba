//! Link state updates, TTL-limited flooding and per-node link state
//! databases, driven by a deterministic discrete-event harness.
//!
//! An update leaves its origin with `ttl = r`. A receiver decrements the TTL,
//! stores the update if it is newer than what it holds, and forwards the
//! decremented copy on every up link except the arrival link while the TTL
//! stays positive. With a fixed per-hop latency the first copy to reach a node
//! came along a shortest path and so carries the largest remaining TTL; later
//! copies are duplicates. Each node therefore ends up holding exactly the
//! updates of origins within `r` hops.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::constellation::{ConstellationGraph, Isl, LinkState, Motion, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spf::LocalView;
use crate::sphere::{NodeAddress, UnitVector};

/// Default per-hop propagation delay, seconds.
pub const DEFAULT_HOP_LATENCY: f64 = 0.005;

/// Default origination period, seconds. Aging defaults to three periods.
pub const DEFAULT_REFRESH_PERIOD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    pub neighbor: NodeId,
    pub isl: Isl,
    pub state: LinkState,
}

/// One satellite's advertisement of its links, location and motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct LinkStateUpdate<T = f64> {
    pub origin: NodeId,
    pub seq: u64,
    pub ttl: u32,
    pub adjacencies: Vec<Adjacency>,
    pub position: UnitVector<T>,
    pub motion: Motion<T>,
    pub originated_at: f64,
}

impl<T: Scalar> LinkStateUpdate<T> {
    pub fn address(&self) -> NodeAddress<T> {
        NodeAddress::new(self.origin as u64, self.position)
    }

    fn validate(&self) -> Result<()> {
        let malformed = |detail: String| Error::MalformedLsu {
            origin: self.origin,
            detail,
        };
        if self.ttl == 0 {
            return Err(malformed("ttl exhausted on the wire".into()));
        }
        if self.adjacencies.is_empty() || self.adjacencies.len() > 4 {
            return Err(malformed(format!("{} adjacencies", self.adjacencies.len())));
        }
        let mut seen = [false; 4];
        for adj in &self.adjacencies {
            if !(1..=4).contains(&adj.isl)
                || std::mem::replace(&mut seen[usize::from(adj.isl - 1)], true)
            {
                return Err(malformed(format!("bad or repeated isl {}", adj.isl)));
            }
        }
        Ok(())
    }
}

/// Builds `node`'s update: every link with its current state, plus position
/// and motion, with `ttl = radius`.
pub fn originate_lsu<T: Scalar>(
    node: NodeId,
    graph: &ConstellationGraph<T>,
    radius: u32,
    seq: u64,
    now: f64,
) -> LinkStateUpdate<T> {
    assert!(radius >= 1, "flood radius must be at least one hop");
    LinkStateUpdate {
        origin: node,
        seq,
        ttl: radius,
        adjacencies: graph
            .links(node)
            .map(|(isl, neighbor, state)| Adjacency {
                neighbor,
                isl,
                state,
            })
            .collect(),
        position: graph.position(node),
        motion: graph.motion(node),
        originated_at: now,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsdbEntry<T = f64> {
    pub lsu: LinkStateUpdate<T>,
    pub last_refreshed: f64,
}

/// What a receiver does with an incoming update.
#[derive(Debug, Clone, PartialEq)]
pub enum ForwardDecision<T = f64> {
    /// Already held at this or a newer sequence number.
    Ignore,
    /// Stored; the TTL is spent.
    StoreOnly,
    /// Stored; the contained copy (TTL already decremented) goes out on every
    /// other up link.
    StoreAndForward(LinkStateUpdate<T>),
}

impl<T> ForwardDecision<T> {
    fn label(&self) -> &'static str {
        match self {
            ForwardDecision::Ignore => "IGNORE",
            ForwardDecision::StoreOnly => "STORE",
            ForwardDecision::StoreAndForward(_) => "FORWARD",
        }
    }
}

/// A node's collection of current updates, at most one per origin.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkStateDatabase<T = f64> {
    owner: NodeId,
    entries: BTreeMap<NodeId, LsdbEntry<T>>,
    rejected: u64,
}

impl<T: Scalar> LinkStateDatabase<T> {
    pub fn new(owner: NodeId) -> Self {
        Self {
            owner,
            entries: BTreeMap::new(),
            rejected: 0,
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn get(&self, origin: NodeId) -> Option<&LsdbEntry<T>> {
        self.entries.get(&origin)
    }

    pub fn origins(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.keys().copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = &LsdbEntry<T>> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Malformed updates seen so far.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Installs the owner's own update unconditionally.
    pub fn install_own(&mut self, lsu: LinkStateUpdate<T>, now: f64) {
        self.entries.insert(
            lsu.origin,
            LsdbEntry {
                lsu,
                last_refreshed: now,
            },
        );
    }

    /// Applies an incoming update. Malformed updates are counted and
    /// rejected.
    pub fn handle_lsu(
        &mut self,
        incoming: &LinkStateUpdate<T>,
        now: f64,
    ) -> Result<ForwardDecision<T>> {
        if let Err(err) = incoming.validate() {
            self.rejected += 1;
            return Err(err);
        }
        if self
            .entries
            .get(&incoming.origin)
            .is_some_and(|held| held.lsu.seq >= incoming.seq)
        {
            return Ok(ForwardDecision::Ignore);
        }
        let mut stored = incoming.clone();
        stored.ttl -= 1;
        let decision = if stored.ttl > 0 {
            ForwardDecision::StoreAndForward(stored.clone())
        } else {
            ForwardDecision::StoreOnly
        };
        self.entries.insert(
            stored.origin,
            LsdbEntry {
                lsu: stored,
                last_refreshed: now,
            },
        );
        Ok(decision)
    }

    /// Drops every entry not refreshed for more than `aging` seconds and
    /// returns the evicted origins. The owner's own entry never ages.
    pub fn age_out(&mut self, now: f64, aging: f64) -> Vec<NodeId> {
        assert!(aging > 0.0, "aging period must be positive");
        let owner = self.owner;
        let stale: Vec<NodeId> = self
            .entries
            .iter()
            .filter(|(&origin, e)| origin != owner && now - e.last_refreshed > aging)
            .map(|(&origin, _)| origin)
            .collect();
        for origin in &stale {
            self.entries.remove(origin);
        }
        stale
    }
}

pub fn handle_lsu<T: Scalar>(
    db: &mut LinkStateDatabase<T>,
    incoming: &LinkStateUpdate<T>,
    now: f64,
) -> Result<ForwardDecision<T>> {
    db.handle_lsu(incoming, now)
}

pub fn age_out<T: Scalar>(db: &mut LinkStateDatabase<T>, now: f64, aging: f64) -> Vec<NodeId> {
    db.age_out(now, aging)
}

/// The subgraph a node routes over, assembled from its database and its own
/// update.
///
/// Nodes are the database origins plus the owner. A link between two known
/// nodes is up only if no known endpoint reports it down. Links toward
/// unknown nodes are dropped: their far end has no address.
pub fn local_view<T: Scalar>(db: &LinkStateDatabase<T>, own: &LinkStateUpdate<T>) -> LocalView<T> {
    let mut updates: BTreeMap<NodeId, &LinkStateUpdate<T>> =
        db.entries.iter().map(|(&o, e)| (o, &e.lsu)).collect();
    updates.insert(own.origin, own);

    let mut view = LocalView::new();
    for lsu in updates.values() {
        view.insert_node(lsu.address());
    }
    for (&node, lsu) in &updates {
        for adj in &lsu.adjacencies {
            let Some(far) = updates.get(&adj.neighbor) else {
                continue;
            };
            let far_report = far
                .adjacencies
                .iter()
                .find(|a| a.neighbor == node)
                .map(|a| a.state);
            if adj.state.is_up() && far_report != Some(LinkState::Down) {
                view.insert_link(node, adj.isl, adj.neighbor);
            }
        }
    }
    view
}

/// Time-ordered queue. Events at equal times pop in insertion order.
#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Queued<E>>,
    inserted: u64,
}

#[derive(Debug)]
struct Queued<E> {
    at: f64,
    order: u64,
    event: E,
}

impl<E> PartialEq for Queued<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Queued<E> {}

impl<E> PartialOrd for Queued<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Queued<E> {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .total_cmp(&self.at)
            .then(other.order.cmp(&self.order))
    }
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self {
            heap: BinaryHeap::new(),
            inserted: 0,
        }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, at: f64, event: E) {
        self.heap.push(Queued {
            at,
            order: self.inserted,
            event,
        });
        self.inserted += 1;
    }

    pub fn pop(&mut self) -> Option<(f64, E)> {
        self.heap.pop().map(|q| (q.at, q.event))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone)]
struct Delivery<T> {
    from: NodeId,
    to: NodeId,
    lsu: LinkStateUpdate<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloodConfig {
    pub radius: u32,
    pub hop_latency: f64,
    pub aging: f64,
}

impl FloodConfig {
    pub fn new(radius: u32) -> Self {
        Self {
            radius,
            hop_latency: DEFAULT_HOP_LATENCY,
            aging: 3.0 * DEFAULT_REFRESH_PERIOD,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FloodStats {
    pub originated: u64,
    pub deliveries: u64,
    pub ignored: u64,
    pub stored: u64,
    pub forwarded: u64,
    pub rejected: u64,
    /// Highest number of times one update crossed one link in one direction.
    pub max_copies_per_direction: u32,
}

/// Single-threaded flooding simulation over a static constellation.
#[derive(Debug)]
pub struct FloodSim<'g, T = f64> {
    graph: &'g ConstellationGraph<T>,
    config: FloodConfig,
    now: f64,
    queue: EventQueue<Delivery<T>>,
    databases: Vec<LinkStateDatabase<T>>,
    own: Vec<Option<LinkStateUpdate<T>>>,
    next_seq: Vec<u64>,
    copies: HashMap<(NodeId, u64, NodeId, NodeId), u32>,
    stats: FloodStats,
    trace: Option<String>,
}

impl<'g, T: Scalar> FloodSim<'g, T> {
    pub fn new(graph: &'g ConstellationGraph<T>, config: FloodConfig) -> Self {
        assert!(config.radius >= 1, "flood radius must be at least one hop");
        let n = graph.node_count();
        Self {
            graph,
            config,
            now: 0.0,
            queue: EventQueue::new(),
            databases: (0..n).map(LinkStateDatabase::new).collect(),
            own: vec![None; n],
            next_seq: vec![0; n],
            copies: HashMap::new(),
            stats: FloodStats::default(),
            trace: None,
        }
    }

    /// Records one line per delivery: `time origin seq ttl from to action`.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(String::new());
        self
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn stats(&self) -> &FloodStats {
        &self.stats
    }

    pub fn trace(&self) -> Option<&str> {
        self.trace.as_deref()
    }

    pub fn database(&self, node: NodeId) -> &LinkStateDatabase<T> {
        &self.databases[node]
    }

    pub fn databases(&self) -> &[LinkStateDatabase<T>] {
        &self.databases
    }

    pub fn into_databases(self) -> Vec<LinkStateDatabase<T>> {
        self.databases
    }

    /// The node's most recent own update.
    pub fn own_lsu(&self, node: NodeId) -> Option<&LinkStateUpdate<T>> {
        self.own[node].as_ref()
    }

    /// Local views of every node from its current database.
    pub fn local_views(&self) -> Vec<LocalView<T>> {
        (0..self.graph.node_count())
            .map(|n| {
                let own = self.own[n].clone().unwrap_or_else(|| {
                    originate_lsu(n, self.graph, self.config.radius, 0, self.now)
                });
                local_view(&self.databases[n], &own)
            })
            .collect()
    }

    /// Originates a fresh update at `node` and queues it on every up link.
    pub fn originate(&mut self, node: NodeId) {
        self.next_seq[node] += 1;
        let lsu = originate_lsu(
            node,
            self.graph,
            self.config.radius,
            self.next_seq[node],
            self.now,
        );
        self.databases[node].install_own(lsu.clone(), self.now);
        self.own[node] = Some(lsu.clone());
        self.stats.originated += 1;
        self.send(node, None, &lsu);
    }

    pub fn originate_all(&mut self) {
        for node in 0..self.graph.node_count() {
            self.originate(node);
        }
    }

    fn send(&mut self, from: NodeId, except: Option<NodeId>, lsu: &LinkStateUpdate<T>) {
        let at = self.now + self.config.hop_latency;
        for (_, to, state) in self.graph.links(from) {
            if state.is_up() && Some(to) != except {
                let copies = self
                    .copies
                    .entry((lsu.origin, lsu.seq, from, to))
                    .or_insert(0);
                *copies += 1;
                self.stats.max_copies_per_direction =
                    self.stats.max_copies_per_direction.max(*copies);
                self.queue.push(
                    at,
                    Delivery {
                        from,
                        to,
                        lsu: lsu.clone(),
                    },
                );
            }
        }
    }

    /// Processes one queued delivery. Returns false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some((at, delivery)) = self.queue.pop() else {
            return false;
        };
        debug_assert!(at >= self.now);
        self.now = at;
        self.stats.deliveries += 1;
        let Delivery { from, to, lsu } = delivery;
        let decision = self.databases[to].handle_lsu(&lsu, at);
        if let Some(trace) = &mut self.trace {
            let action = decision.as_ref().map_or("REJECT", ForwardDecision::label);
            let _ = writeln!(
                trace,
                "{:.6} {} {} {} {} {} {}",
                at, lsu.origin, lsu.seq, lsu.ttl, from, to, action
            );
        }
        match decision {
            Err(_) => self.stats.rejected += 1,
            Ok(ForwardDecision::Ignore) => self.stats.ignored += 1,
            Ok(ForwardDecision::StoreOnly) => self.stats.stored += 1,
            Ok(ForwardDecision::StoreAndForward(copy)) => {
                self.stats.stored += 1;
                self.stats.forwarded += 1;
                self.send(to, Some(from), &copy);
            }
        }
        true
    }

    /// Runs until no deliveries remain.
    pub fn run_to_quiescence(&mut self) {
        while self.step() {}
    }

    /// Advances the clock to `t` (processing anything due before it) and
    /// ages every database. Returns the evicted origins per node.
    pub fn advance_to(&mut self, t: f64) -> Vec<Vec<NodeId>> {
        while self.queue.heap.peek().is_some_and(|q| q.at <= t) {
            self.step();
        }
        self.now = self.now.max(t);
        let (now, aging) = (self.now, self.config.aging);
        self.databases
            .iter_mut()
            .map(|db| db.age_out(now, aging))
            .collect()
    }

    /// Injects an arbitrary update as if it arrived at `to` from `from`.
    pub fn inject(&mut self, from: NodeId, to: NodeId, lsu: LinkStateUpdate<T>) {
        self.queue.push(
            self.now + self.config.hop_latency,
            Delivery { from, to, lsu },
        );
    }
}

/// Every node originates once; the flood runs to quiescence. Returns each
/// node's database, indexed by node id.
pub fn run_flood_convergence<T: Scalar>(
    graph: &ConstellationGraph<T>,
    radius: u32,
    aging: f64,
) -> Vec<LinkStateDatabase<T>> {
    let mut sim = FloodSim::new(
        graph,
        FloodConfig {
            aging,
            ..FloodConfig::new(radius)
        },
    );
    sim.originate_all();
    sim.run_to_quiescence();
    let now = sim.now();
    let mut dbs = sim.into_databases();
    for db in &mut dbs {
        db.age_out(now, aging);
    }
    dbs
}

/// Converged local views for every node.
pub fn converged_views<T: Scalar>(graph: &ConstellationGraph<T>, radius: u32) -> Vec<LocalView<T>> {
    let mut sim = FloodSim::new(graph, FloodConfig::new(radius));
    sim.originate_all();
    sim.run_to_quiescence();
    sim.local_views()
}
