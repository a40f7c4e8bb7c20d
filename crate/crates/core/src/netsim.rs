//! Deterministic discrete-event machinery: overlay topology with latencies,
//! timed partition plans abstracting BGP hijacking and ARP spoofing, and the
//! event queue that drives a trial.
//!
//! Partitions are modeled as suspension of the overlay edges crossing the
//! group cut. A bridge node (the man in the middle) keeps receiving from both
//! groups but never relays across the cut.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{BlockId, NodeId, TxId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub as_id: u32,
    pub lan: Option<String>,
}

/// Physical link latency, possibly parametrized by the scenario's delay knob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatencySpec {
    FixedMs(u64),
    /// The per-cell delay value.
    Delay,
    /// Half the per-cell delay, for splitting a budget across two hops.
    HalfDelay,
}

impl LatencySpec {
    pub fn resolve(&self, delay_ms: u64) -> u64 {
        match self {
            LatencySpec::FixedMs(ms) => *ms,
            LatencySpec::Delay => delay_ms,
            LatencySpec::HalfDelay => delay_ms / 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub latency: LatencySpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsEdge {
    pub a: u32,
    pub b: u32,
    pub peering: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<Link>,
    pub as_edges: Vec<AsEdge>,
    pub overlay: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("topology line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("AS {0} referenced by an edge hosts no node")]
    UnknownAs(u32),
    #[error("overlay edge {a}-{b} has no underlying network path")]
    NoPath { a: String, b: String },
    #[error("link {a}-{b} crosses AS {as_a} and AS {as_b} without an AS edge")]
    MissingAsEdge { a: String, b: String, as_a: u32, as_b: u32 },
    #[error("overlay graph is not connected at scenario start")]
    OverlayDisconnected,
    #[error("topology has no nodes")]
    Empty,
}

impl Topology {
    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .map(|i| NodeId(i as u16))
    }

    pub fn node(&self, id: NodeId) -> &NodeSpec {
        &self.nodes[id.0 as usize]
    }

    pub fn as_of(&self, id: NodeId) -> u32 {
        self.nodes[id.0 as usize].as_id
    }

    /// Declarative text form, one directive per line:
    ///
    /// ```text
    /// node <name> as=<asn> [lan=<segment>]
    /// link <a> <b> <latency-ms|delay|delay/2>
    /// asedge <asn> <asn> [peering]
    /// overlay <a> <b>
    /// mesh <a> <b> <c> ...   # overlay edges between all listed pairs
    /// ```
    pub fn parse(source: &str) -> Result<Topology, TopologyError> {
        let mut topo = Topology {
            nodes: Vec::new(),
            links: Vec::new(),
            as_edges: Vec::new(),
            overlay: Vec::new(),
        };
        for (idx, raw) in source.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| TopologyError::BadLine {
                line: idx + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "node" => {
                    if fields.len() < 3 {
                        return Err(bad("expected: node <name> as=<asn> [lan=<segment>]"));
                    }
                    let name = fields[1].to_string();
                    if topo.node_id(&name).is_some() {
                        return Err(bad(&format!("duplicate node {name}")));
                    }
                    let mut as_id = None;
                    let mut lan = None;
                    for field in &fields[2..] {
                        if let Some(v) = field.strip_prefix("as=") {
                            as_id = Some(v.parse().map_err(|_| bad("bad AS number"))?);
                        } else if let Some(v) = field.strip_prefix("lan=") {
                            lan = Some(v.to_string());
                        } else {
                            return Err(bad(&format!("unknown attribute {field:?}")));
                        }
                    }
                    topo.nodes.push(NodeSpec {
                        name,
                        as_id: as_id.ok_or_else(|| bad("missing as= tag"))?,
                        lan,
                    });
                }
                "link" => {
                    if fields.len() != 4 {
                        return Err(bad("expected: link <a> <b> <latency>"));
                    }
                    let a = topo
                        .node_id(fields[1])
                        .ok_or_else(|| TopologyError::UnknownNode(fields[1].into()))?;
                    let b = topo
                        .node_id(fields[2])
                        .ok_or_else(|| TopologyError::UnknownNode(fields[2].into()))?;
                    let latency = match fields[3] {
                        "delay" => LatencySpec::Delay,
                        "delay/2" => LatencySpec::HalfDelay,
                        ms => LatencySpec::FixedMs(ms.parse().map_err(|_| bad("bad latency"))?),
                    };
                    topo.links.push(Link { a, b, latency });
                }
                "asedge" => {
                    if fields.len() < 3 || fields.len() > 4 {
                        return Err(bad("expected: asedge <asn> <asn> [peering]"));
                    }
                    let a = fields[1].parse().map_err(|_| bad("bad AS number"))?;
                    let b = fields[2].parse().map_err(|_| bad("bad AS number"))?;
                    let peering = match fields.get(3) {
                        None => false,
                        Some(&"peering") => true,
                        Some(other) => return Err(bad(&format!("unknown flag {other:?}"))),
                    };
                    topo.as_edges.push(AsEdge { a, b, peering });
                }
                "overlay" => {
                    if fields.len() != 3 {
                        return Err(bad("expected: overlay <a> <b>"));
                    }
                    let a = topo
                        .node_id(fields[1])
                        .ok_or_else(|| TopologyError::UnknownNode(fields[1].into()))?;
                    let b = topo
                        .node_id(fields[2])
                        .ok_or_else(|| TopologyError::UnknownNode(fields[2].into()))?;
                    topo.overlay.push((a, b));
                }
                "mesh" => {
                    let ids: Vec<NodeId> = fields[1..]
                        .iter()
                        .map(|name| {
                            topo.node_id(name)
                                .ok_or_else(|| TopologyError::UnknownNode((*name).into()))
                        })
                        .collect::<Result<_, _>>()?;
                    if ids.len() < 2 {
                        return Err(bad("mesh needs at least two nodes"));
                    }
                    for i in 0..ids.len() {
                        for j in i + 1..ids.len() {
                            topo.overlay.push((ids[i], ids[j]));
                        }
                    }
                }
                other => return Err(bad(&format!("unknown directive {other:?}"))),
            }
        }
        if topo.nodes.is_empty() {
            return Err(TopologyError::Empty);
        }
        Ok(topo)
    }

    /// Validates the declarative form and fixes latencies for one value of
    /// the delay knob. Overlay-edge latency is the sum of constituent link
    /// latencies along the cheapest physical path.
    pub fn resolve(&self, delay_ms: u64) -> Result<ResolvedTopology, TopologyError> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        let as_set: BTreeSet<u32> = self.nodes.iter().map(|s| s.as_id).collect();
        for edge in &self.as_edges {
            for asn in [edge.a, edge.b] {
                if !as_set.contains(&asn) {
                    return Err(TopologyError::UnknownAs(asn));
                }
            }
        }
        for link in &self.links {
            let (as_a, as_b) = (self.as_of(link.a), self.as_of(link.b));
            if as_a != as_b
                && !self.as_edges.iter().any(|e| {
                    (e.a == as_a && e.b == as_b) || (e.a == as_b && e.b == as_a)
                })
            {
                return Err(TopologyError::MissingAsEdge {
                    a: self.node(link.a).name.clone(),
                    b: self.node(link.b).name.clone(),
                    as_a,
                    as_b,
                });
            }
        }

        let mut phys: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
        for link in &self.links {
            let ms = link.latency.resolve(delay_ms);
            phys[link.a.0 as usize].push((link.b.0 as usize, ms));
            phys[link.b.0 as usize].push((link.a.0 as usize, ms));
        }

        let mut overlay_adj: Vec<Vec<(NodeId, u64)>> = vec![Vec::new(); n];
        for (a, b) in &self.overlay {
            let latency = shortest_path_ms(&phys, a.0 as usize, b.0 as usize).ok_or_else(|| {
                TopologyError::NoPath {
                    a: self.node(*a).name.clone(),
                    b: self.node(*b).name.clone(),
                }
            })?;
            overlay_adj[a.0 as usize].push((*b, latency));
            overlay_adj[b.0 as usize].push((*a, latency));
        }
        for adj in &mut overlay_adj {
            adj.sort();
            adj.dedup();
        }

        let overlay_nodes: Vec<NodeId> = (0..n as u16)
            .map(NodeId)
            .filter(|id| !overlay_adj[id.0 as usize].is_empty())
            .collect();
        if !overlay_nodes.is_empty() {
            let mut seen = vec![false; n];
            let mut stack = vec![overlay_nodes[0]];
            seen[overlay_nodes[0].0 as usize] = true;
            while let Some(u) = stack.pop() {
                for (v, _) in &overlay_adj[u.0 as usize] {
                    if !seen[v.0 as usize] {
                        seen[v.0 as usize] = true;
                        stack.push(*v);
                    }
                }
            }
            if overlay_nodes.iter().any(|id| !seen[id.0 as usize]) {
                return Err(TopologyError::OverlayDisconnected);
            }
        }

        Ok(ResolvedTopology {
            topology: self.clone(),
            overlay_adj,
            overlay_nodes,
        })
    }

    /// Connected components of the AS graph restricted to peering edges;
    /// these are the atoms a route-hijack partition cannot split.
    pub fn peering_components(&self) -> BTreeMap<u32, usize> {
        let as_list: Vec<u32> = {
            let set: BTreeSet<u32> = self.nodes.iter().map(|s| s.as_id).collect();
            set.into_iter().collect()
        };
        let index: BTreeMap<u32, usize> = as_list.iter().enumerate().map(|(i, a)| (*a, i)).collect();
        let mut dsu = Dsu::new(as_list.len());
        for e in &self.as_edges {
            if e.peering {
                if let (Some(&i), Some(&j)) = (index.get(&e.a), index.get(&e.b)) {
                    dsu.union(i, j);
                }
            }
        }
        as_list.iter().map(|a| (*a, dsu.find(index[a]))).collect()
    }
}

fn shortest_path_ms(adj: &[Vec<(usize, u64)>], from: usize, to: usize) -> Option<u64> {
    if from == to {
        return Some(0);
    }
    let mut dist = vec![u64::MAX; adj.len()];
    dist[from] = 0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0u64, from)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        if u == to {
            return Some(d);
        }
        for (v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[*v] {
                dist[*v] = nd;
                heap.push(Reverse((nd, *v)));
            }
        }
    }
    None
}

/// Minimal union-find over dense indices.
struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Topology with latencies fixed and overlay adjacency precomputed.
#[derive(Debug, Clone)]
pub struct ResolvedTopology {
    pub topology: Topology,
    overlay_adj: Vec<Vec<(NodeId, u64)>>,
    overlay_nodes: Vec<NodeId>,
}

impl ResolvedTopology {
    pub fn node_count(&self) -> usize {
        self.topology.nodes.len()
    }

    pub fn overlay_neighbors(&self, id: NodeId) -> &[(NodeId, u64)] {
        &self.overlay_adj[id.0 as usize]
    }

    pub fn overlay_nodes(&self) -> &[NodeId] {
        &self.overlay_nodes
    }

    pub fn overlay_latency(&self, a: NodeId, b: NodeId) -> Option<u64> {
        self.overlay_adj[a.0 as usize]
            .iter()
            .find(|(v, _)| *v == b)
            .map(|(_, ms)| *ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackVector {
    BgpHijack,
    ArpSpoof,
    None,
}

impl fmt::Display for AttackVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackVector::BgpHijack => write!(f, "bgp-hijack"),
            AttackVector::ArpSpoof => write!(f, "arp-spoof"),
            AttackVector::None => write!(f, "none"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// A timed two-group partition tagged with its attack vector. Group A is the
/// adversary's side; the bridge node, when set, is the man in the middle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub vector: AttackVector,
    pub group_a: Vec<NodeId>,
    pub group_b: Vec<NodeId>,
    pub bridge: Option<NodeId>,
    pub start_s: u64,
    pub duration_s: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("degenerate partition: a group is empty")]
    EmptyGroup,
    #[error("groups overlap at node {0}")]
    OverlappingGroups(NodeId),
    #[error("node {0} participates in the overlay but belongs to no group")]
    Uncovered(NodeId),
    #[error("bridge {0} must belong to group A")]
    BridgeOutsideGroupA(NodeId),
    #[error("infeasible plan: peering edge AS{a}-AS{b} is un-hijackable")]
    PeeringCut { a: u32, b: u32 },
    #[error("infeasible plan: nodes {a} and {b} share AS{asn}; intra-AS routes cannot be hijacked")]
    SharedAs { a: NodeId, b: NodeId, asn: u32 },
    #[error("infeasible plan: ARP spoofing cannot span LAN segments ({0} vs {1})")]
    LanMismatch(String, String),
    #[error("infeasible plan: node {0} is not on a LAN segment")]
    NoLan(NodeId),
    #[error("partition duration must be positive")]
    ZeroDuration,
}

impl PartitionPlan {
    /// Checks the vector-specific preconditions against a topology. For
    /// route hijacking this is where the peering-immunity result surfaces:
    /// a cut that would have to sever a peering edge, or split a single AS,
    /// is rejected with the offending witness.
    pub fn validate(&self, topo: &Topology) -> Result<(), PlanError> {
        if self.group_a.is_empty() || self.group_b.is_empty() {
            return Err(PlanError::EmptyGroup);
        }
        if self.duration_s == 0 {
            return Err(PlanError::ZeroDuration);
        }
        let set_a: BTreeSet<NodeId> = self.group_a.iter().copied().collect();
        let set_b: BTreeSet<NodeId> = self.group_b.iter().copied().collect();
        if let Some(shared) = set_a.intersection(&set_b).next() {
            return Err(PlanError::OverlappingGroups(*shared));
        }
        if let Some(bridge) = self.bridge {
            if !set_a.contains(&bridge) {
                return Err(PlanError::BridgeOutsideGroupA(bridge));
            }
        }
        match self.vector {
            AttackVector::None => Ok(()),
            AttackVector::ArpSpoof => {
                let mut segment: Option<&str> = None;
                for id in set_a.iter().chain(set_b.iter()) {
                    let lan = topo
                        .node(*id)
                        .lan
                        .as_deref()
                        .ok_or(PlanError::NoLan(*id))?;
                    match segment {
                        None => segment = Some(lan),
                        Some(s) if s == lan => {}
                        Some(s) => {
                            return Err(PlanError::LanMismatch(s.to_string(), lan.to_string()))
                        }
                    }
                }
                Ok(())
            }
            AttackVector::BgpHijack => {
                for a in &set_a {
                    for b in &set_b {
                        if topo.as_of(*a) == topo.as_of(*b) {
                            return Err(PlanError::SharedAs {
                                a: *a,
                                b: *b,
                                asn: topo.as_of(*a),
                            });
                        }
                    }
                }
                let comp = topo.peering_components();
                let comps_a: BTreeSet<usize> =
                    set_a.iter().map(|id| comp[&topo.as_of(*id)]).collect();
                let comps_b: BTreeSet<usize> =
                    set_b.iter().map(|id| comp[&topo.as_of(*id)]).collect();
                if comps_a.intersection(&comps_b).next().is_none() {
                    return Ok(());
                }
                // Witness: walk the peering subgraph from A's ASes and report
                // the edge that first reaches one of B's ASes.
                let as_a: BTreeSet<u32> = set_a.iter().map(|id| topo.as_of(*id)).collect();
                let as_b: BTreeSet<u32> = set_b.iter().map(|id| topo.as_of(*id)).collect();
                let mut frontier: Vec<u32> = as_a.iter().copied().collect();
                let mut seen = as_a.clone();
                while let Some(asn) = frontier.pop() {
                    for e in &topo.as_edges {
                        if !e.peering {
                            continue;
                        }
                        let other = if e.a == asn {
                            e.b
                        } else if e.b == asn {
                            e.a
                        } else {
                            continue;
                        };
                        if as_b.contains(&other) {
                            return Err(PlanError::PeeringCut { a: asn, b: other });
                        }
                        if seen.insert(other) {
                            frontier.push(other);
                        }
                    }
                }
                // Components intersected, so a witness edge must exist.
                unreachable!("peering components intersect but no witness edge found")
            }
        }
    }
}

/// Runtime view of an applied partition.
#[derive(Debug, Clone)]
pub struct PartitionState {
    side: Vec<Option<Side>>,
    bridge: Option<NodeId>,
    suspended: Vec<(NodeId, NodeId)>,
}

impl PartitionState {
    pub fn side_of(&self, id: NodeId) -> Option<Side> {
        self.side.get(id.0 as usize).copied().flatten()
    }

    pub fn bridge(&self) -> Option<NodeId> {
        self.bridge
    }

    /// Overlay edges crossing the cut, suspended for the partition's
    /// lifetime; heal restores exactly these.
    pub fn suspended_edges(&self) -> &[(NodeId, NodeId)] {
        &self.suspended
    }

    /// Whether a message sent now from `from` can reach `to` over this edge.
    /// Deliveries into the bridge are allowed from both sides; the bridge
    /// never relays across (enforced by the sender side of this check).
    pub fn edge_usable(&self, from: NodeId, to: NodeId) -> bool {
        match (self.side_of(from), self.side_of(to)) {
            (Some(a), Some(b)) if a == b => true,
            _ => Some(to) == self.bridge,
        }
    }
}

/// Suspends every overlay edge crossing the group cut. The plan must
/// already satisfy its vector preconditions.
pub fn apply_partition(
    topo: &ResolvedTopology,
    plan: &PartitionPlan,
) -> Result<PartitionState, PlanError> {
    plan.validate(&topo.topology)?;
    for id in topo.overlay_nodes() {
        if !plan.group_a.contains(id) && !plan.group_b.contains(id) {
            return Err(PlanError::Uncovered(*id));
        }
    }
    let mut side = vec![None; topo.node_count()];
    for id in &plan.group_a {
        side[id.0 as usize] = Some(Side::A);
    }
    for id in &plan.group_b {
        side[id.0 as usize] = Some(Side::B);
    }
    let mut suspended = Vec::new();
    for u in topo.overlay_nodes() {
        for (v, _) in topo.overlay_neighbors(*u) {
            if u < v && side[u.0 as usize] != side[v.0 as usize] {
                suspended.push((*u, *v));
            }
        }
    }
    Ok(PartitionState { side, bridge: plan.bridge, suspended })
}

/// Earliest-arrival flood of a block announcement from `from`: every overlay
/// neighbor hears at send time plus path latency, duplicates suppressed, and
/// nothing crosses an active cut except deliveries into the bridge.
pub fn propagate(
    topo: &ResolvedTopology,
    partition: Option<&PartitionState>,
    from: NodeId,
    send_time_ms: u64,
) -> Vec<(NodeId, u64)> {
    let n = topo.node_count();
    let mut dist: Vec<Option<u64>> = vec![None; n];
    dist[from.0 as usize] = Some(send_time_ms);
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((send_time_ms, from)));
    while let Some(Reverse((t, u))) = heap.pop() {
        if dist[u.0 as usize] != Some(t) {
            continue;
        }
        // The bridge hears both sides but does not forward across the cut.
        if let Some(p) = partition {
            if Some(u) == p.bridge() && p.side_of(from) != p.side_of(u) {
                continue;
            }
        }
        for (v, lat) in topo.overlay_neighbors(u) {
            if let Some(p) = partition {
                if !p.edge_usable(u, *v) {
                    continue;
                }
            }
            let arrival = t + lat;
            if dist[v.0 as usize].map_or(true, |d| arrival < d) {
                dist[v.0 as usize] = Some(arrival);
                heap.push(Reverse((arrival, *v)));
            }
        }
    }
    let mut out: Vec<(NodeId, u64)> = (0..n as u16)
        .map(NodeId)
        .filter(|id| *id != from)
        .filter_map(|id| dist[id.0 as usize].map(|t| (id, t)))
        .collect();
    out.sort_by_key(|(id, t)| (*t, *id));
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    BlockFound {
        miner: NodeId,
        session: u64,
    },
    /// Delivery of one or more blocks, ancestor-first. `origin` is the miner
    /// whose announcement started the flood.
    BlockArrival {
        to: NodeId,
        from: NodeId,
        origin: NodeId,
        blocks: Vec<BlockId>,
    },
    TxIssue {
        to: NodeId,
        tx: TxId,
    },
    PartitionStart,
    PartitionEnd,
    Probe {
        to: NodeId,
        origin: NodeId,
        probe: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub time_ms: u64,
    pub kind: EventKind,
}

impl Event {
    /// One-line trace form.
    pub fn trace_line(&self, seq: u64) -> String {
        let body = match &self.kind {
            EventKind::BlockFound { miner, session } => {
                format!("block-found miner={miner} session={session}")
            }
            EventKind::BlockArrival { to, from, origin, blocks } => format!(
                "block-arrival to={to} from={from} origin={origin} blocks={}",
                blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")
            ),
            EventKind::TxIssue { to, tx } => format!("tx-issue to={to} tx={tx}"),
            EventKind::PartitionStart => "partition-start".to_string(),
            EventKind::PartitionEnd => "partition-end".to_string(),
            EventKind::Probe { to, origin, probe } => {
                format!("probe to={to} origin={origin} id={probe}")
            }
        };
        format!("{} {} {}", self.time_ms, seq, body)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("event at {event_ms} ms is in the past (now {now_ms} ms)")]
pub struct PastEvent {
    pub event_ms: u64,
    pub now_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Queued {
    time_ms: u64,
    seq: u64,
    event: Event,
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time_ms, self.seq).cmp(&(other.time_ms, other.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Dispatches in (time, insertion sequence) order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    now_ms: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        EventQueue::default()
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, event: Event) -> Result<u64, PastEvent> {
        if event.time_ms < self.now_ms {
            return Err(PastEvent { event_ms: event.time_ms, now_ms: self.now_ms });
        }
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Reverse(Queued { time_ms: event.time_ms, seq, event }));
        Ok(seq)
    }

    /// Next event; advances the queue clock to its time.
    pub fn pop(&mut self) -> Option<(u64, Event)> {
        let Reverse(q) = self.heap.pop()?;
        self.now_ms = q.time_ms;
        Some((q.seq, q.event))
    }

    /// Dispatch time of the next event without consuming it.
    pub fn peek_time_ms(&self) -> Option<u64> {
        self.heap.peek().map(|Reverse(q)| q.time_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star_topology(latency: &str) -> Topology {
        // Hub h plus four peers, one AS each, transit edges to the hub's AS.
        let mut src = String::from("node h as=1\n");
        for i in 1..=4 {
            src.push_str(&format!("node p{i} as={}\n", i + 1));
            src.push_str(&format!("link h p{i} {latency}\n"));
            src.push_str(&format!("asedge 1 {} \n", i + 1));
            src.push_str(&format!("overlay h p{i}\n"));
        }
        Topology::parse(&src).unwrap()
    }

    #[test]
    fn queue_dispatches_by_time_then_insertion() {
        let mut q = EventQueue::new();
        let late = Event { time_ms: 9, kind: EventKind::PartitionEnd };
        let first = Event { time_ms: 5, kind: EventKind::PartitionStart };
        let second = Event { time_ms: 5, kind: EventKind::PartitionEnd };
        q.schedule(late).unwrap();
        q.schedule(first.clone()).unwrap();
        q.schedule(second.clone()).unwrap();
        assert_eq!(q.pop().unwrap().1, first);
        assert_eq!(q.pop().unwrap().1, second);
        assert_eq!(q.pop().unwrap().1.time_ms, 9);
        assert!(q.pop().is_none());
    }

    #[test]
    fn queue_rejects_past_events() {
        let mut q = EventQueue::new();
        q.schedule(Event { time_ms: 5, kind: EventKind::PartitionStart }).unwrap();
        q.pop();
        let err = q.schedule(Event { time_ms: 4, kind: EventKind::PartitionEnd }).unwrap_err();
        assert_eq!(err, PastEvent { event_ms: 4, now_ms: 5 });
    }

    #[test]
    fn star_flood_reaches_peers_at_link_latency() {
        let topo = star_topology("250").resolve(0).unwrap();
        let hub = topo.topology.node_id("h").unwrap();
        let arrivals = propagate(&topo, None, hub, 1000);
        assert_eq!(arrivals.len(), 4);
        assert!(arrivals.iter().all(|(_, t)| *t == 1250));
    }

    #[test]
    fn zero_latency_flood_arrives_at_send_time() {
        let topo = star_topology("0").resolve(0).unwrap();
        let p1 = topo.topology.node_id("p1").unwrap();
        let arrivals = propagate(&topo, None, p1, 42);
        assert_eq!(arrivals.len(), 4);
        assert!(arrivals.iter().all(|(_, t)| *t == 42));
    }

    #[test]
    fn partition_blocks_cross_cut_delivery() {
        let topo = star_topology("10");
        let r = topo.resolve(0).unwrap();
        let id = |n: &str| topo.node_id(n).unwrap();
        let plan = PartitionPlan {
            vector: AttackVector::None,
            group_a: vec![id("h"), id("p1"), id("p2")],
            group_b: vec![id("p3"), id("p4")],
            bridge: None,
            start_s: 0,
            duration_s: 60,
        };
        let state = apply_partition(&r, &plan).unwrap();
        let arrivals = propagate(&r, Some(&state), id("h"), 0);
        let names: Vec<&str> = arrivals
            .iter()
            .map(|(n, _)| topo.node(*n).name.as_str())
            .collect();
        assert_eq!(names, vec!["p1", "p2"]);
        assert_eq!(state.suspended_edges().len(), 2);
    }

    #[test]
    fn bridge_hears_both_sides_but_does_not_relay() {
        let topo = star_topology("10");
        let r = topo.resolve(0).unwrap();
        let id = |n: &str| topo.node_id(n).unwrap();
        let plan = PartitionPlan {
            vector: AttackVector::None,
            group_a: vec![id("h"), id("p1"), id("p2")],
            group_b: vec![id("p3"), id("p4")],
            bridge: Some(id("h")),
            start_s: 0,
            duration_s: 60,
        };
        let state = apply_partition(&r, &plan).unwrap();
        // From the B side, the hub (bridge) hears but p1/p2 stay deaf even
        // though their only path runs through the bridge.
        let arrivals = propagate(&r, Some(&state), id("p3"), 0);
        let names: Vec<&str> = arrivals
            .iter()
            .map(|(n, _)| topo.node(*n).name.as_str())
            .collect();
        assert_eq!(names, vec!["h"]);
    }

    #[test]
    fn hijack_plan_cutting_peering_edge_is_infeasible() {
        let src = "\
node a as=10
node b as=20
asedge 10 20 peering
overlay a b
";
        let topo = Topology::parse(src).unwrap();
        let plan = PartitionPlan {
            vector: AttackVector::BgpHijack,
            group_a: vec![NodeId(0)],
            group_b: vec![NodeId(1)],
            bridge: None,
            start_s: 0,
            duration_s: 60,
        };
        assert_eq!(plan.validate(&topo), Err(PlanError::PeeringCut { a: 10, b: 20 }));
    }

    #[test]
    fn hijack_plan_on_transit_edge_is_feasible() {
        let src = "\
node a as=10
node b as=20
asedge 10 20
overlay a b
";
        let topo = Topology::parse(src).unwrap();
        let plan = PartitionPlan {
            vector: AttackVector::BgpHijack,
            group_a: vec![NodeId(0)],
            group_b: vec![NodeId(1)],
            bridge: None,
            start_s: 0,
            duration_s: 60,
        };
        assert!(plan.validate(&topo).is_ok());
    }

    #[test]
    fn hijack_cannot_split_one_as() {
        let src = "\
node a as=10
node b as=10
overlay a b
";
        let topo = Topology::parse(src).unwrap();
        let plan = PartitionPlan {
            vector: AttackVector::BgpHijack,
            group_a: vec![NodeId(0)],
            group_b: vec![NodeId(1)],
            bridge: None,
            start_s: 0,
            duration_s: 60,
        };
        assert_eq!(
            plan.validate(&topo),
            Err(PlanError::SharedAs { a: NodeId(0), b: NodeId(1), asn: 10 })
        );
    }

    #[test]
    fn arp_plan_must_stay_on_one_lan() {
        let src = "\
node a as=10 lan=office
node b as=10 lan=office
node c as=10 lan=annex
overlay a b
overlay b c
";
        let topo = Topology::parse(src).unwrap();
        let ok = PartitionPlan {
            vector: AttackVector::ArpSpoof,
            group_a: vec![NodeId(0)],
            group_b: vec![NodeId(1)],
            bridge: None,
            start_s: 0,
            duration_s: 60,
        };
        assert!(ok.validate(&topo).is_ok());
        let bad = PartitionPlan {
            vector: AttackVector::ArpSpoof,
            group_a: vec![NodeId(0)],
            group_b: vec![NodeId(1), NodeId(2)],
            bridge: None,
            start_s: 0,
            duration_s: 60,
        };
        assert_eq!(
            bad.validate(&topo),
            Err(PlanError::LanMismatch("office".into(), "annex".into()))
        );
    }

    #[test]
    fn empty_group_is_degenerate() {
        let topo = star_topology("0");
        let plan = PartitionPlan {
            vector: AttackVector::BgpHijack,
            group_a: (0..5).map(NodeId).collect(),
            group_b: vec![],
            bridge: None,
            start_s: 0,
            duration_s: 60,
        };
        assert_eq!(plan.validate(&topo), Err(PlanError::EmptyGroup));
    }

    #[test]
    fn five_as_row_cut_suspends_cross_edges() {
        // Chain of five ASes with miners on the outer four and the bridge in
        // the middle; the {AS1,AS2} vs {AS4,AS5} cut must suspend exactly
        // the overlay edges crossing the two halves.
        let src = "\
node m1 as=1
node m2 as=2
node adv as=3
node m3 as=4
node m4 as=5
link m1 m2 0
link m2 adv 0
link adv m3 0
link m3 m4 0
asedge 1 2
asedge 2 3
asedge 3 4
asedge 4 5
mesh m1 m2 adv m3 m4
";
        let topo = Topology::parse(src).unwrap();
        let r = topo.resolve(0).unwrap();
        let id = |n: &str| topo.node_id(n).unwrap();
        let plan = PartitionPlan {
            vector: AttackVector::BgpHijack,
            group_a: vec![id("m1"), id("m2"), id("adv")],
            group_b: vec![id("m3"), id("m4")],
            bridge: Some(id("adv")),
            start_s: 0,
            duration_s: 60,
        };
        let state = apply_partition(&r, &plan).unwrap();
        // 3 A-nodes x 2 B-nodes = 6 crossing edges in the full mesh.
        assert_eq!(state.suspended_edges().len(), 6);
    }

    #[test]
    fn overlay_edge_latency_is_path_sum() {
        let src = "\
node a as=1
node r as=2
node b as=3
link a r 100
link r b 150
asedge 1 2
asedge 2 3
overlay a b
";
        let topo = Topology::parse(src).unwrap();
        let r = topo.resolve(0).unwrap();
        assert_eq!(
            r.overlay_latency(topo.node_id("a").unwrap(), topo.node_id("b").unwrap()),
            Some(250)
        );
    }

    #[test]
    fn delay_tokens_resolve_per_cell() {
        let src = "\
node a as=1
node b as=2
link a b delay
asedge 1 2
overlay a b
";
        let topo = Topology::parse(src).unwrap();
        assert_eq!(
            topo.resolve(250).unwrap().overlay_latency(NodeId(0), NodeId(1)),
            Some(250)
        );
        assert_eq!(
            topo.resolve(0).unwrap().overlay_latency(NodeId(0), NodeId(1)),
            Some(0)
        );
    }

    #[test]
    fn disconnected_overlay_is_rejected() {
        let src = "\
node a as=1
node b as=1
node c as=1
node d as=1
link a b 0
link c d 0
overlay a b
overlay c d
";
        let topo = Topology::parse(src).unwrap();
        assert_eq!(topo.resolve(0).unwrap_err(), TopologyError::OverlayDisconnected);
    }

    #[test]
    fn overlay_without_physical_path_is_rejected() {
        let src = "\
node a as=1
node b as=1
overlay a b
";
        let topo = Topology::parse(src).unwrap();
        assert!(matches!(topo.resolve(0).unwrap_err(), TopologyError::NoPath { .. }));
    }
}
