//! Balance-attack orchestration: power-balanced partition planning, the
//! per-trial discrete-event loop, double-spend adjudication, and the
//! merchant's multi-peer status probe.
//!
//! A trial runs warm-up until difficulty settles, partitions the overlay at
//! t0 while two conflicting transactions go out (one per subgroup), lets both
//! sides mine in isolation, heals at t0 + duration, reconciles, and then
//! adjudicates whether the victim-side commit was discarded by fork choice.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Block, BlockId, BlockTree, ChainParams, NodeId, Transaction, TxId};
use crate::mining::{mine_on, next_block_delay, PowerDistribution};
use crate::netsim::{
    apply_partition, propagate, AttackVector, Event, EventKind, EventQueue, PartitionPlan,
    PartitionState, PlanError, ResolvedTopology, Side, Topology,
};
use crate::seed::miner_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub adversary: NodeId,
    pub vector: AttackVector,
    pub duration_s: u64,
    /// Confirmation depth m: a transaction commits once its block has
    /// m - 1 canonical descendants.
    pub confirmation_depth: u32,
    /// Fraction of the adversary balance spent per conflicting transaction;
    /// must exceed 1/2 so the pair conflicts.
    pub spend_fraction: f64,
}

impl AttackSpec {
    pub fn validate(&self) -> Result<(), AttackError> {
        if self.confirmation_depth < 1 {
            return Err(AttackError::BadSpec("confirmation depth must be >= 1".into()));
        }
        if !(self.spend_fraction > 0.5 && self.spend_fraction <= 1.0) {
            return Err(AttackError::BadSpec(format!(
                "spend fraction {} outside (0.5, 1]",
                self.spend_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("invalid attack spec: {0}")]
    BadSpec(String),
    #[error("adversary {0} is not a miner in the power distribution")]
    UnknownAdversary(NodeId),
    #[error("no feasible cut: {0}")]
    NoFeasibleCut(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitStrategy {
    /// Largest-remaining-power-first onto the lighter side; reproduces the
    /// published subgroup assignments for the top-10 pool distribution.
    LargestFirst,
    /// Exact minimization of the non-adversary imbalance over all atom
    /// bipartitions (up to 20 atoms; falls back to largest-first beyond).
    Exhaustive,
}

/// Outcome of balanced-split planning: the two groups, with the adversary
/// and its co-located miners anchored in group A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedSplit {
    pub group_a: Vec<NodeId>,
    pub group_b: Vec<NodeId>,
    pub power_a: f64,
    pub power_b: f64,
    /// |power(A \ {adversary}) - power(B)|, the planning objective.
    pub rest_imbalance: f64,
    /// power(A) - power(B) including the adversary, as reported alongside
    /// success rates.
    pub difference: f64,
}

impl BalancedSplit {
    pub fn into_plan(self, vector: AttackVector, bridge: NodeId, start_s: u64, duration_s: u64) -> PartitionPlan {
        PartitionPlan {
            vector,
            group_a: self.group_a,
            group_b: self.group_b,
            bridge: Some(bridge),
            start_s,
            duration_s,
        }
    }
}

/// A set of miners the chosen attack vector cannot separate: for route
/// hijacking, all miners whose ASes share a peering component; for ARP
/// spoofing (and the unconstrained case), single miners.
struct Atom {
    members: Vec<NodeId>,
    power: f64,
}

/// Plans the two-group partition that minimizes the residual power imbalance
/// |power(A \ {adversary}) - power(B)|, searching only cuts the vector can
/// realize on this topology. The adversary joins the side seeded by the
/// heaviest remaining atom.
pub fn plan_balanced_split(
    dist: &PowerDistribution,
    adversary: NodeId,
    topo: &Topology,
    vector: AttackVector,
    strategy: SplitStrategy,
) -> Result<BalancedSplit, AttackError> {
    let adv = dist
        .miner(adversary)
        .ok_or(AttackError::UnknownAdversary(adversary))?;

    let mut atoms: Vec<Atom> = Vec::new();
    match vector {
        AttackVector::BgpHijack => {
            let comp = topo.peering_components();
            let mut groups: Vec<(usize, Atom)> = Vec::new();
            for m in &dist.entries {
                let c = comp[&topo.as_of(m.node)];
                match groups.iter_mut().find(|(gc, _)| *gc == c) {
                    Some((_, atom)) => {
                        atom.members.push(m.node);
                        atom.power += m.power;
                    }
                    None => groups.push((c, Atom { members: vec![m.node], power: m.power })),
                }
            }
            atoms.extend(groups.into_iter().map(|(_, a)| a));
        }
        AttackVector::ArpSpoof | AttackVector::None => {
            if vector == AttackVector::ArpSpoof {
                let mut segment: Option<&str> = None;
                for m in &dist.entries {
                    let lan = topo.node(m.node).lan.as_deref().ok_or_else(|| {
                        AttackError::NoFeasibleCut(format!(
                            "node {} is not on a LAN segment",
                            topo.node(m.node).name
                        ))
                    })?;
                    match segment {
                        None => segment = Some(lan),
                        Some(s) if s == lan => {}
                        Some(s) => {
                            return Err(AttackError::NoFeasibleCut(format!(
                                "miners span LAN segments {s} and {lan}"
                            )))
                        }
                    }
                }
            }
            atoms.extend(dist.entries.iter().map(|m| Atom {
                members: vec![m.node],
                power: m.power,
            }));
        }
    }

    // The adversary anchors its atom (itself plus anything the vector cannot
    // split away from it) in group A.
    let adv_pos = atoms
        .iter()
        .position(|a| a.members.contains(&adversary))
        .expect("adversary is in some atom");
    let adv_atom = atoms.swap_remove(adv_pos);
    if atoms.is_empty() {
        return Err(AttackError::NoFeasibleCut(
            "every miner sits in the adversary's unsplittable atom".into(),
        ));
    }

    // Deterministic processing order: heaviest first, ties by lowest node id.
    atoms.sort_by(|x, y| {
        y.power
            .partial_cmp(&x.power)
            .unwrap()
            .then_with(|| x.members[0].cmp(&y.members[0]))
    });

    let assignment: Vec<bool> = match strategy {
        SplitStrategy::Exhaustive if atoms.len() <= 20 => {
            let k = atoms.len();
            let total: f64 = atoms.iter().map(|a| a.power).sum();
            let mut best: Option<(f64, Vec<bool>)> = None;
            // Atom 0 pinned to side A kills the mirror symmetry.
            for mask in 0..(1u32 << (k - 1)) {
                let mut sum_a = atoms[0].power;
                let mut assign = vec![false; k];
                assign[0] = true;
                for (i, atom) in atoms.iter().enumerate().skip(1) {
                    if mask & (1 << (i - 1)) != 0 {
                        assign[i] = true;
                        sum_a += atom.power;
                    }
                }
                if sum_a == total {
                    continue; // group B must be non-empty
                }
                let imbalance = (2.0 * sum_a - total).abs();
                if best.as_ref().map_or(true, |(b, _)| imbalance < *b) {
                    best = Some((imbalance, assign));
                }
            }
            best.expect("at least one bipartition exists").1
        }
        _ => {
            // Largest-first onto the lighter side; ties go to side A, which
            // therefore holds the heaviest remaining atom.
            let mut assign = vec![false; atoms.len()];
            let (mut sum_a, mut sum_b) = (0.0f64, 0.0f64);
            for (i, atom) in atoms.iter().enumerate() {
                if sum_a <= sum_b {
                    assign[i] = true;
                    sum_a += atom.power;
                } else {
                    sum_b += atom.power;
                }
            }
            assign
        }
    };

    let mut group_a: Vec<NodeId> = adv_atom.members.clone();
    let mut group_b: Vec<NodeId> = Vec::new();
    let mut rest_a = adv_atom.power - adv.power;
    let mut power_b = 0.0;
    for (atom, to_a) in atoms.iter().zip(&assignment) {
        if *to_a {
            rest_a += atom.power;
            group_a.extend_from_slice(&atom.members);
        } else {
            power_b += atom.power;
            group_b.extend_from_slice(&atom.members);
        }
    }
    group_a.sort();
    group_b.sort();
    let power_a = rest_a + adv.power;
    Ok(BalancedSplit {
        group_a,
        group_b,
        power_a,
        power_b,
        rest_imbalance: (rest_a - power_b).abs(),
        difference: power_a - power_b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadSide {
    Adversary,
    Victim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub success: bool,
    pub victim_committed: bool,
    /// Simulated seconds of the first victim-side commit, if any.
    pub victim_commit_time_s: Option<u64>,
    /// Blocks mined by each side while the partition was active.
    pub blocks_adversary_side: u64,
    pub blocks_victim_side: u64,
    /// Canonical-chain growth per side over the partition window.
    pub chain_growth_adversary: u64,
    pub chain_growth_victim: u64,
    pub final_head_side: HeadSide,
    /// Victim-side head difficulty samples (ms, difficulty).
    pub difficulty_series: Vec<(u64, u64)>,
    pub final_difficulty_victim: u64,
    pub total_blocks_mined: u64,
    pub stale_blocks: u64,
}

/// Everything a single trial needs, already validated.
#[derive(Debug, Clone)]
pub struct TrialSpec<'a> {
    pub topology: &'a ResolvedTopology,
    pub power: &'a PowerDistribution,
    pub params: ChainParams,
    pub initial_difficulty: u64,
    pub attack: AttackSpec,
    /// None runs an unpartitioned baseline (or a zero-duration attack).
    pub plan: Option<PartitionPlan>,
    pub warmup_s: u64,
    pub quiescence_timeout_s: u64,
    /// Adversary account balance backing the conflicting spends.
    pub initial_balance: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub to: NodeId,
    pub block: BlockId,
    pub during_partition: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeOutcome {
    Consistent,
    Inconsistent,
    UnreachableMajority,
}

struct ProbeState {
    tx: TxId,
    expected: usize,
    unreachable: usize,
    responses: Vec<(NodeId, bool)>,
}

struct NodeSim {
    tree: BlockTree,
    pending: Vec<Block>,
    known: HashSet<BlockId>,
    mempool: Vec<TxId>,
    seen_txs: HashSet<TxId>,
    session: u64,
}

impl NodeSim {
    fn head_difficulty(&self) -> u64 {
        self.tree.head_block().difficulty
    }
}

/// One simulation trial. Strictly sequential; run many in parallel with
/// disjoint specs and seeds.
pub struct TrialRunner<'a> {
    spec: TrialSpec<'a>,
    queue: EventQueue,
    nodes: Vec<NodeSim>,
    arena: Vec<Block>,
    block_side: Vec<Option<Side>>,
    txs: Vec<Transaction>,
    miner_rngs: Vec<ChaCha12Rng>,
    miner_index: Vec<Option<usize>>,
    partition: Option<PartitionState>,
    partition_active: bool,
    reconciling: bool,
    stop_mining: bool,
    merchant: NodeId,
    tx_victim: TxId,
    victim_committed: bool,
    victim_commit_time_ms: Option<u64>,
    mined_a: u64,
    mined_b: u64,
    height_a_at_start: u64,
    height_b_at_start: u64,
    growth_a: u64,
    growth_b: u64,
    victim_head_at_heal: BlockId,
    final_difficulty_victim: u64,
    difficulty_series: Vec<(u64, u64)>,
    delivery_log: Vec<DeliveryRecord>,
    probes: Vec<ProbeState>,
    trace: Option<Vec<String>>,
    deadline_ms: u64,
}

impl<'a> TrialRunner<'a> {
    pub fn new(spec: TrialSpec<'a>, seed: u64) -> Result<Self, AttackError> {
        spec.attack.validate()?;
        if spec.power.miner(spec.attack.adversary).is_none() {
            return Err(AttackError::UnknownAdversary(spec.attack.adversary));
        }
        if let Some(plan) = &spec.plan {
            plan.validate(&spec.topology.topology)?;
        }
        let spend = (spec.attack.spend_fraction * spec.initial_balance as f64).floor() as u64;
        if spend.saturating_mul(2) <= spec.initial_balance {
            return Err(AttackError::BadSpec(format!(
                "spend amount {spend} of balance {} does not make the pair conflict",
                spec.initial_balance
            )));
        }

        let n = spec.topology.node_count();
        let genesis = Block {
            id: BlockId(0),
            parent: None,
            number: 0,
            timestamp: 0,
            difficulty: spec.initial_difficulty,
            miner: spec.attack.adversary,
            uncles: vec![],
            transactions: vec![],
        };
        let nodes: Vec<NodeSim> = (0..n)
            .map(|_| NodeSim {
                tree: BlockTree::new(genesis.clone(), spec.params.clone()),
                pending: Vec::new(),
                known: HashSet::from([BlockId(0)]),
                mempool: Vec::new(),
                seen_txs: HashSet::new(),
                session: 0,
            })
            .collect();

        let mut miner_index = vec![None; n];
        let mut miner_rngs = Vec::with_capacity(spec.power.entries.len());
        for (i, m) in spec.power.entries.iter().enumerate() {
            miner_index[m.node.0 as usize] = Some(i);
            miner_rngs.push(ChaCha12Rng::seed_from_u64(miner_seed(seed, i)));
        }

        // Merchant: lowest-id victim-side miner, or lowest non-adversary
        // miner when there is no partition. It doubles as the victim-side
        // difficulty observer.
        let merchant = match &spec.plan {
            Some(plan) => *plan.group_b.iter().min().expect("group B non-empty"),
            None => spec
                .power
                .entries
                .iter()
                .map(|m| m.node)
                .filter(|id| *id != spec.attack.adversary)
                .min()
                .unwrap_or(spec.attack.adversary),
        };

        let adversary = spec.attack.adversary;
        let txs = vec![
            Transaction { id: TxId(0), sender: adversary, recipient: merchant, amount: spend },
            Transaction { id: TxId(1), sender: adversary, recipient: adversary, amount: spend },
        ];

        let warmup_ms = spec.warmup_s * 1000;
        let heal_ms = warmup_ms + spec.attack.duration_s * 1000;
        let deadline_ms = heal_ms + spec.quiescence_timeout_s * 1000;

        let mut runner = TrialRunner {
            spec,
            queue: EventQueue::new(),
            nodes,
            arena: vec![genesis],
            block_side: vec![None],
            txs,
            miner_rngs,
            miner_index,
            partition: None,
            partition_active: false,
            reconciling: false,
            stop_mining: false,
            merchant,
            tx_victim: TxId(0),
            victim_committed: false,
            victim_commit_time_ms: None,
            mined_a: 0,
            mined_b: 0,
            height_a_at_start: 0,
            height_b_at_start: 0,
            growth_a: 0,
            growth_b: 0,
            victim_head_at_heal: BlockId(0),
            final_difficulty_victim: 0,
            difficulty_series: Vec::new(),
            delivery_log: Vec::new(),
            probes: Vec::new(),
            trace: None,
            deadline_ms,
        };

        runner
            .queue
            .schedule(Event { time_ms: warmup_ms, kind: EventKind::PartitionStart })
            .expect("fresh queue");
        runner
            .queue
            .schedule(Event { time_ms: heal_ms, kind: EventKind::PartitionEnd })
            .expect("fresh queue");
        for node in runner.miner_nodes() {
            runner.schedule_mining(node);
        }
        Ok(runner)
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<String> {
        self.trace.take().unwrap_or_default()
    }

    pub fn now_ms(&self) -> u64 {
        self.queue.now_ms()
    }

    pub fn node_tree(&self, id: NodeId) -> &BlockTree {
        &self.nodes[id.0 as usize].tree
    }

    pub fn delivery_log(&self) -> &[DeliveryRecord] {
        &self.delivery_log
    }

    pub fn block_side(&self, id: BlockId) -> Option<Side> {
        self.block_side[id.0 as usize]
    }

    pub fn tx_victim(&self) -> TxId {
        self.tx_victim
    }

    pub fn merchant(&self) -> NodeId {
        self.merchant
    }

    fn miner_nodes(&self) -> Vec<NodeId> {
        self.spec.power.entries.iter().map(|m| m.node).collect()
    }

    fn side_of(&self, id: NodeId) -> Option<Side> {
        self.spec.plan.as_ref().and_then(|p| {
            if p.group_a.contains(&id) {
                Some(Side::A)
            } else if p.group_b.contains(&id) {
                Some(Side::B)
            } else {
                None
            }
        })
    }

    fn schedule_mining(&mut self, node: NodeId) {
        if self.stop_mining {
            return;
        }
        let Some(mi) = self.miner_index[node.0 as usize] else { return };
        let sim = &self.nodes[node.0 as usize];
        let miner = &self.spec.power.entries[mi];
        let delay_s = next_block_delay(
            &mut self.miner_rngs[mi],
            miner.power,
            self.spec.power.total_hashrate,
            sim.head_difficulty(),
        )
        .expect("positive power, hashrate and difficulty");
        let time_ms = self.queue.now_ms() + (delay_s * 1000.0).ceil() as u64;
        let session = self.nodes[node.0 as usize].session;
        self.queue
            .schedule(Event { time_ms, kind: EventKind::BlockFound { miner: node, session } })
            .expect("mining events never scheduled in the past");
    }

    /// Transactions this miner would include: known, not yet on its
    /// canonical chain, and not conflicting with one that is.
    fn eligible_txs(&self, node: NodeId) -> Vec<TxId> {
        let sim = &self.nodes[node.0 as usize];
        let mut out = Vec::new();
        for tx in &sim.mempool {
            if sim.tree.confirmations(*tx) > 0 {
                continue;
            }
            let cand = &self.txs[tx.0 as usize];
            let conflicted = self.txs.iter().any(|other| {
                other.id != *tx
                    && sim.tree.confirmations(other.id) > 0
                    && cand.conflicts_with(other, self.spec.initial_balance)
            });
            if !conflicted {
                out.push(*tx);
            }
        }
        out
    }

    fn edge_usable(&self, from: NodeId, to: NodeId) -> bool {
        if !self.partition_active {
            return true;
        }
        self.partition.as_ref().map_or(true, |p| p.edge_usable(from, to))
    }

    fn announce_blocks(&mut self, from: NodeId, origin: NodeId, ids: &[BlockId]) {
        if ids.is_empty() {
            return;
        }
        let now = self.queue.now_ms();
        let neighbors: Vec<(NodeId, u64)> =
            self.spec.topology.overlay_neighbors(from).to_vec();
        for (to, lat) in neighbors {
            if to == origin || !self.edge_usable(from, to) {
                continue;
            }
            let payload: Vec<BlockId> = if self.reconciling {
                // Post-heal the receiver may lack the whole branch; ship the
                // announced block's ancestry, oldest first.
                let mut anc = self.nodes[from.0 as usize].tree.ancestry(*ids.last().unwrap());
                anc.reverse();
                anc
            } else {
                ids.to_vec()
            };
            self.queue
                .schedule(Event {
                    time_ms: now + lat,
                    kind: EventKind::BlockArrival { to, from, origin, blocks: payload },
                })
                .expect("deliveries are never in the past");
        }
    }

    fn on_block_found(&mut self, miner: NodeId, session: u64) {
        if self.stop_mining || self.nodes[miner.0 as usize].session != session {
            return;
        }
        let now = self.queue.now_ms();
        let id = BlockId(self.arena.len() as u32);
        let pending_txs = self.eligible_txs(miner);
        let block = mine_on(miner, &self.nodes[miner.0 as usize].tree, id, now / 1000, pending_txs);

        let side = if self.partition_active { self.side_of(miner) } else { None };
        self.arena.push(block.clone());
        self.block_side.push(side);
        match side {
            Some(Side::A) => self.mined_a += 1,
            Some(Side::B) => self.mined_b += 1,
            None => {}
        }

        let sim = &mut self.nodes[miner.0 as usize];
        sim.known.insert(id);
        sim.tree.insert(block).expect("self-mined block extends own head");
        sim.session += 1;
        self.after_head_change(miner);
        self.announce_blocks(miner, miner, &[id]);
        self.schedule_mining(miner);
    }

    fn on_block_arrival(&mut self, to: NodeId, origin: NodeId, blocks: Vec<BlockId>) {
        let bridge = self.partition.as_ref().and_then(|p| p.bridge());
        let to_side = self.side_of(to);
        let mut inserted: Vec<BlockId> = Vec::new();
        for id in blocks {
            // The bridge hears the far side but keeps mining on its own
            // subgroup's view; cross-side blocks stay out of its tree until
            // reconciliation.
            if self.partition_active && Some(to) == bridge {
                if let Some(side) = self.block_side[id.0 as usize] {
                    if to_side != Some(side) {
                        self.delivery_log.push(DeliveryRecord {
                            to,
                            block: id,
                            during_partition: true,
                        });
                        continue;
                    }
                }
            }
            let sim = &mut self.nodes[to.0 as usize];
            if sim.known.contains(&id) {
                continue;
            }
            self.delivery_log.push(DeliveryRecord {
                to,
                block: id,
                during_partition: self.partition_active,
            });
            let block = self.arena[id.0 as usize].clone();
            let sim = &mut self.nodes[to.0 as usize];
            sim.known.insert(id);
            if sim.tree.contains(block.parent.expect("non-genesis")) {
                sim.tree.insert(block).expect("arena blocks are structurally valid");
                inserted.push(id);
                // Drain any orphans that were waiting on this subtree.
                loop {
                    let Some(pos) = sim
                        .pending
                        .iter()
                        .position(|b| sim.tree.contains(b.parent.expect("non-genesis")))
                    else {
                        break;
                    };
                    let b = sim.pending.remove(pos);
                    let bid = b.id;
                    sim.tree.insert(b).expect("arena blocks are structurally valid");
                    inserted.push(bid);
                }
            } else {
                sim.pending.push(block);
            }
        }
        if inserted.is_empty() {
            return;
        }
        let old_head_changed = {
            let sim = &mut self.nodes[to.0 as usize];
            let head = sim.tree.canonical_head();
            inserted.contains(&head)
        };
        for id in &inserted {
            self.announce_blocks(to, origin, &[*id]);
        }
        if old_head_changed {
            self.nodes[to.0 as usize].session += 1;
            self.after_head_change(to);
            self.schedule_mining(to);
        }
    }

    fn after_head_change(&mut self, node: NodeId) {
        if node != self.merchant {
            return;
        }
        let head = self.nodes[node.0 as usize].tree.head_block();
        self.difficulty_series.push((self.queue.now_ms(), head.difficulty));
        // The merchant is the committing observer: commitment is evaluated on
        // its local canonical chain at every victim-side block arrival.
        if self.partition_active && !self.victim_committed {
            let confs = self.nodes[node.0 as usize].tree.confirmations(self.tx_victim);
            if confs >= self.spec.attack.confirmation_depth as u64 {
                self.victim_committed = true;
                self.victim_commit_time_ms = Some(self.queue.now_ms());
            }
        }
    }

    fn on_tx_issue(&mut self, to: NodeId, tx: TxId) {
        let sim = &mut self.nodes[to.0 as usize];
        if !sim.seen_txs.insert(tx) {
            return;
        }
        // The man in the middle drops foreign traffic while the cut is up:
        // the payment it issued to the victim group must not leak into its
        // own group's mempools (it is the transaction being double-spent).
        let bridge = self.partition.as_ref().and_then(|p| p.bridge());
        if self.partition_active && Some(to) == bridge && tx != TxId(1) {
            return;
        }
        sim.mempool.push(tx);
        let now = self.queue.now_ms();
        let neighbors: Vec<(NodeId, u64)> = self.spec.topology.overlay_neighbors(to).to_vec();
        for (next, lat) in neighbors {
            if self.edge_usable(to, next) {
                self.queue
                    .schedule(Event { time_ms: now + lat, kind: EventKind::TxIssue { to: next, tx } })
                    .expect("gossip is never in the past");
            }
        }
    }

    fn on_partition_start(&mut self) {
        if let Some(plan) = &self.spec.plan {
            let state = apply_partition(self.spec.topology, plan)
                .expect("plan validated at construction");
            self.partition = Some(state);
            self.partition_active = true;
        }
        self.height_a_at_start = self.nodes[self.spec.attack.adversary.0 as usize]
            .tree
            .head_block()
            .number;
        self.height_b_at_start = self.nodes[self.merchant.0 as usize].tree.head_block().number;
        let head = self.nodes[self.merchant.0 as usize].tree.head_block();
        self.difficulty_series.push((self.queue.now_ms(), head.difficulty));

        // The man in the middle can address both sides directly: the payment
        // goes to the victim group, the conflicting self-transfer to its own.
        let now = self.queue.now_ms();
        let adversary = self.spec.attack.adversary;
        let merchant_lat = propagate(self.spec.topology, None, adversary, 0)
            .into_iter()
            .find(|(n, _)| *n == self.merchant)
            .map(|(_, t)| t)
            .unwrap_or(0);
        self.queue
            .schedule(Event {
                time_ms: now + merchant_lat,
                kind: EventKind::TxIssue { to: self.merchant, tx: TxId(0) },
            })
            .expect("tx issue in the future");
        self.queue
            .schedule(Event { time_ms: now, kind: EventKind::TxIssue { to: adversary, tx: TxId(1) } })
            .expect("tx issue now");
    }

    fn on_partition_end(&mut self) {
        self.stop_mining = true;
        let adv_head = self.nodes[self.spec.attack.adversary.0 as usize].tree.head_block();
        self.growth_a = adv_head.number.saturating_sub(self.height_a_at_start);
        let merchant_head = self.nodes[self.merchant.0 as usize].tree.head_block();
        self.growth_b = merchant_head.number.saturating_sub(self.height_b_at_start);
        self.victim_head_at_heal = merchant_head.id;
        self.final_difficulty_victim = merchant_head.difficulty;

        if !self.partition_active {
            return;
        }
        self.partition_active = false;
        self.reconciling = true;
        // Suspended edges come back up; both endpoints exchange canonical
        // heads with their full ancestry so the other side can adopt.
        let now = self.queue.now_ms();
        let pairs: Vec<(NodeId, NodeId)> = self
            .partition
            .as_ref()
            .expect("partition was applied")
            .suspended_edges()
            .to_vec();
        for (u, v) in pairs {
            let lat = self
                .spec
                .topology
                .overlay_latency(u, v)
                .expect("suspended edges are overlay edges");
            for (from, to) in [(u, v), (v, u)] {
                let mut ancestry = self.nodes[from.0 as usize]
                    .tree
                    .ancestry(self.nodes[from.0 as usize].tree.canonical_head());
                ancestry.reverse();
                self.queue
                    .schedule(Event {
                        time_ms: now + lat,
                        kind: EventKind::BlockArrival { to, from, origin: from, blocks: ancestry },
                    })
                    .expect("reconciliation in the future");
            }
        }
    }

    fn on_probe(&mut self, to: NodeId, probe: u32) {
        let status = self.nodes[to.0 as usize].tree.confirmations(self.probes[probe as usize].tx) > 0;
        self.probes[probe as usize].responses.push((to, status));
    }

    fn dispatch(&mut self, seq: u64, event: Event) {
        if let Some(trace) = &mut self.trace {
            trace.push(event.trace_line(seq));
        }
        match event.kind {
            EventKind::BlockFound { miner, session } => self.on_block_found(miner, session),
            EventKind::BlockArrival { to, origin, blocks, .. } => {
                self.on_block_arrival(to, origin, blocks)
            }
            EventKind::TxIssue { to, tx } => self.on_tx_issue(to, tx),
            EventKind::PartitionStart => self.on_partition_start(),
            EventKind::PartitionEnd => self.on_partition_end(),
            EventKind::Probe { to, probe, .. } => self.on_probe(to, probe),
        }
    }

    /// Dispatches events while their time is at most `until_ms`.
    pub fn run_until_ms(&mut self, until_ms: u64) {
        while let Some(t) = self.queue.peek_time_ms() {
            if t > until_ms {
                return;
            }
            let (seq, event) = self.queue.pop().expect("peeked");
            self.dispatch(seq, event);
        }
    }

    /// Issues the merchant's status query to `query_nodes` at the current
    /// simulation time. Unreachable nodes are counted immediately; reachable
    /// ones answer after the flood latency. Call [`Self::probe_outcome`]
    /// once the queue has drained past the responses.
    pub fn issue_probe(&mut self, origin: NodeId, query_nodes: &[NodeId], tx: TxId) -> u32 {
        let id = self.probes.len() as u32;
        let reachable = propagate(
            self.spec.topology,
            if self.partition_active { self.partition.as_ref() } else { None },
            origin,
            self.queue.now_ms(),
        );
        let mut state = ProbeState {
            tx,
            expected: query_nodes.len(),
            unreachable: 0,
            responses: Vec::new(),
        };
        for node in query_nodes {
            if *node == origin {
                let status = self.nodes[node.0 as usize].tree.confirmations(tx) > 0;
                state.responses.push((*node, status));
                continue;
            }
            match reachable.iter().find(|(n, _)| n == node) {
                Some((_, arrival)) => {
                    self.queue
                        .schedule(Event {
                            time_ms: *arrival,
                            kind: EventKind::Probe { to: *node, origin, probe: id },
                        })
                        .expect("probe in the future");
                }
                None => state.unreachable += 1,
            }
        }
        self.probes.push(state);
        id
    }

    pub fn probe_outcome(&self, probe: u32) -> ProbeOutcome {
        let state = &self.probes[probe as usize];
        if 2 * state.unreachable > state.expected {
            return ProbeOutcome::UnreachableMajority;
        }
        let mut statuses = state.responses.iter().map(|(_, s)| *s);
        match statuses.next() {
            None => ProbeOutcome::UnreachableMajority,
            Some(first) => {
                if statuses.all(|s| s == first) {
                    ProbeOutcome::Consistent
                } else {
                    ProbeOutcome::Inconsistent
                }
            }
        }
    }

    /// Drives the trial to completion and adjudicates.
    pub fn run(mut self) -> TrialResult {
        while let Some((seq, event)) = self.queue.pop() {
            if event.time_ms > self.deadline_ms {
                break;
            }
            self.dispatch(seq, event);
        }
        self.finish()
    }

    /// Runs to completion but also returns the runner for post-mortem
    /// inspection in tests.
    pub fn run_keep(mut self) -> (TrialResult, TrialRunner<'a>) {
        while let Some((seq, event)) = self.queue.pop() {
            if event.time_ms > self.deadline_ms {
                break;
            }
            self.dispatch(seq, event);
        }
        let result = self.finish();
        (result, self)
    }

    /// Tree over every block mined in the trial, regardless of which nodes
    /// saw it.
    pub fn union_tree(&self) -> BlockTree {
        let mut tree = BlockTree::new(self.arena[0].clone(), self.spec.params.clone());
        for block in &self.arena[1..] {
            tree.insert(block.clone()).expect("arena forms a tree");
        }
        tree
    }

    /// All in-tree heads agree after quiescence and match the union tree.
    pub fn verify_quiescence(&self) -> Result<(), String> {
        let union = self.union_tree();
        let expect = union.canonical_head();
        for (i, sim) in self.nodes.iter().enumerate() {
            if self.miner_index[i].is_none() {
                continue;
            }
            if sim.tree.canonical_head() != expect {
                return Err(format!(
                    "node n{} head {} != union head {}",
                    i,
                    sim.tree.canonical_head(),
                    expect
                ));
            }
        }
        Ok(())
    }

    /// Victim-side canonical tip captured when the partition healed.
    pub fn victim_head_at_heal(&self) -> BlockId {
        self.victim_head_at_heal
    }

    fn finish(&mut self) -> TrialResult {
        debug_assert_eq!(self.verify_quiescence(), Ok(()));
        let union = self.union_tree();
        let success = self.victim_committed && union.confirmations(self.tx_victim) == 0;
        let final_head_side = {
            let mut side = HeadSide::Victim;
            for id in union.ancestry(union.canonical_head()) {
                if let Some(s) = self.block_side[id.0 as usize] {
                    side = match s {
                        Side::A => HeadSide::Adversary,
                        Side::B => HeadSide::Victim,
                    };
                    break;
                }
            }
            side
        };
        let total = (self.arena.len() - 1) as u64;
        let result = TrialResult {
            success,
            victim_committed: self.victim_committed,
            victim_commit_time_s: self.victim_commit_time_ms.map(|ms| ms / 1000),
            blocks_adversary_side: self.mined_a,
            blocks_victim_side: self.mined_b,
            chain_growth_adversary: self.growth_a,
            chain_growth_victim: self.growth_b,
            final_head_side,
            difficulty_series: std::mem::take(&mut self.difficulty_series),
            final_difficulty_victim: self.final_difficulty_victim,
            total_blocks_mined: total,
            stale_blocks: (self.mined_a + self.mined_b)
                .saturating_sub(self.growth_a + self.growth_b),
        };
        debug_assert!(
            !result.success || (result.victim_committed && result.final_head_side == HeadSide::Adversary)
        );
        result
    }
}

/// Double-spend verdict on the merged post-heal tree: the victim-side
/// transaction must have had `m` confirmations on the victim branch when the
/// partition healed (the branch tip then being `victim_head_at_heal`) and be
/// absent from the final canonical chain.
pub fn adjudicate(union: &BlockTree, tx_victim: TxId, m: u32, victim_head_at_heal: BlockId) -> bool {
    let Ok(heal_head) = union.block(victim_head_at_heal) else { return false };
    let mut committed = false;
    for id in union.blocks_with_tx(tx_victim) {
        if union.is_ancestor_or_self(*id, victim_head_at_heal) {
            let number = union.block(*id).expect("indexed block exists").number;
            committed = 1 + heal_head.number - number >= m as u64;
            break;
        }
    }
    committed && union.confirmations(tx_victim) == 0
}

/// Convenience wrapper: plan (when the duration is positive), run, return.
pub fn run_trial(spec: TrialSpec<'_>, seed: u64) -> Result<TrialResult, AttackError> {
    Ok(TrialRunner::new(spec, seed)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mining::{load_power_distribution, numeric_node, MinerRole, MinerSpec};
    use crate::netsim::Topology;

    const TABLE1: &str = "\
f2pool 27.02 0 65001
ethermine 23.76 1 65002
miningpoolhub 9.73 2 65003
nanopool 9.70 3 65004
ethfans 9.12 4 65005
dwarfpool 6.24 5 65006
bw 4.45 6 65007
ethpool 3.34 7 65008
coinotron 1.83 8 65009
poolgpu 0.88 9 65010
";

    fn pool_topology() -> Topology {
        // Ten pools, each its own AS, star transit backbone: any pool-level
        // bipartition is hijackable.
        let mut src = String::from("node bb as=65000\n");
        for i in 1..=10 {
            src.push_str(&format!("node p{i} as={}\n", 65000 + i));
            src.push_str(&format!("link p{i} bb 0\n"));
            src.push_str(&format!("asedge {} 65000\n", 65000 + i));
        }
        src.push_str("mesh p1 p2 p3 p4 p5 p6 p7 p8 p9 p10\n");
        Topology::parse(&src).unwrap()
    }

    fn names(dist: &PowerDistribution, ids: &[NodeId]) -> Vec<String> {
        let mut out: Vec<String> = ids
            .iter()
            .map(|id| dist.miner(*id).unwrap().name.clone())
            .collect();
        out.sort();
        out
    }

    #[test]
    fn split_reproduces_published_top10_assignment() {
        let dist = load_power_distribution(TABLE1, 1.0, &numeric_node).unwrap();
        let topo = pool_topology();
        let split = plan_balanced_split(
            &dist,
            NodeId(0),
            &topo,
            AttackVector::BgpHijack,
            SplitStrategy::LargestFirst,
        )
        .unwrap();
        let mut rest_a = names(&dist, &split.group_a);
        rest_a.retain(|n| n != "f2pool");
        assert_eq!(rest_a, vec!["dwarfpool", "ethermine", "ethpool", "poolgpu"]);
        assert_eq!(
            names(&dist, &split.group_b),
            vec!["bw", "coinotron", "ethfans", "miningpoolhub", "nanopool"]
        );
        // Difference between subgroups on the percent scale.
        assert!((split.difference * 96.07 - 26.41).abs() < 0.01);
    }

    #[test]
    fn split_published_differences_for_every_adversary() {
        let dist = load_power_distribution(TABLE1, 1.0, &numeric_node).unwrap();
        let topo = pool_topology();
        let expected = [
            (0u16, 26.41),
            (1, 23.39),
            (2, 9.99),
            (3, 9.93),
            (4, 9.93),
            (5, 5.43),
            (6, 4.17),
            (7, 1.95),
            (8, 1.95),
            (9, 1.95),
        ];
        for (node, diff_pct) in expected {
            let split = plan_balanced_split(
                &dist,
                NodeId(node),
                &topo,
                AttackVector::BgpHijack,
                SplitStrategy::LargestFirst,
            )
            .unwrap();
            assert!(
                (split.difference * 96.07 - diff_pct).abs() < 0.01,
                "adversary {node}: got {}, want {diff_pct}",
                split.difference * 96.07
            );
        }
    }

    #[test]
    fn exhaustive_split_never_worse_than_greedy() {
        let dist = load_power_distribution(TABLE1, 1.0, &numeric_node).unwrap();
        let topo = pool_topology();
        for node in 0..10u16 {
            let greedy = plan_balanced_split(
                &dist,
                NodeId(node),
                &topo,
                AttackVector::BgpHijack,
                SplitStrategy::LargestFirst,
            )
            .unwrap();
            let exact = plan_balanced_split(
                &dist,
                NodeId(node),
                &topo,
                AttackVector::BgpHijack,
                SplitStrategy::Exhaustive,
            )
            .unwrap();
            assert!(exact.rest_imbalance <= greedy.rest_imbalance + 1e-12);
        }
    }

    #[test]
    fn external_adversary_over_two_equal_miners() {
        let entries = vec![
            MinerSpec { name: "adv".into(), node: NodeId(0), power: 0.2, role: MinerRole::Adversary, as_id: 1 },
            MinerSpec { name: "m1".into(), node: NodeId(1), power: 0.4, role: MinerRole::Honest, as_id: 2 },
            MinerSpec { name: "m2".into(), node: NodeId(2), power: 0.4, role: MinerRole::Honest, as_id: 3 },
        ];
        let dist = PowerDistribution::new(entries, 1.0).unwrap();
        let src = "\
node a as=1
node b as=2
node c as=3
link a b 0
link b c 0
asedge 1 2
asedge 2 3
mesh a b c
";
        let topo = Topology::parse(src).unwrap();
        let split = plan_balanced_split(&dist, NodeId(0), &topo, AttackVector::BgpHijack, SplitStrategy::LargestFirst).unwrap();
        assert!((split.rest_imbalance - 0.0).abs() < 1e-12);
        assert!((split.difference - 0.2).abs() < 1e-12);
    }

    #[test]
    fn fully_peered_graph_is_infeasible() {
        let dist = load_power_distribution("a 50 0 1\nb 50 1 2\n", 1.0, &numeric_node).unwrap();
        let src = "\
node a as=1
node b as=2
link a b 0
asedge 1 2 peering
mesh a b
";
        let topo = Topology::parse(src).unwrap();
        let err = plan_balanced_split(&dist, NodeId(0), &topo, AttackVector::BgpHijack, SplitStrategy::LargestFirst)
            .unwrap_err();
        assert!(matches!(err, AttackError::NoFeasibleCut(_)));
    }

    fn consortium() -> (Topology, PowerDistribution) {
        let mut src = String::new();
        for (i, asn) in [(0u16, 1u32), (1, 1), (2, 2), (3, 2), (4, 3), (5, 4), (6, 4), (7, 5), (8, 5)] {
            src.push_str(&format!("node m{i} as={asn}\n"));
        }
        src.push_str("node r1 as=1\nnode r2 as=2\nnode r3 as=3\nnode r4 as=4\nnode r5 as=5\n");
        for (node, router) in [
            ("m0", "r1"), ("m1", "r1"), ("m2", "r2"), ("m3", "r2"), ("m4", "r3"),
            ("m5", "r4"), ("m6", "r4"), ("m7", "r5"), ("m8", "r5"),
        ] {
            src.push_str(&format!("link {node} {router} 0\n"));
        }
        src.push_str("link r1 r2 delay\nlink r2 r3 delay\nlink r3 r4 delay\nlink r4 r5 delay\n");
        src.push_str("asedge 1 2\nasedge 2 3\nasedge 3 4\nasedge 4 5\n");
        src.push_str("mesh m0 m1 m2 m3 m4 m5 m6 m7 m8\n");
        let topo = Topology::parse(&src).unwrap();
        let mut power = String::new();
        for (i, asn) in [(0u16, 1u32), (1, 1), (2, 2), (3, 2), (4, 3), (5, 4), (6, 4), (7, 5), (8, 5)] {
            let role = if i == 4 { "adversary" } else { "honest" };
            power.push_str(&format!("member{i} 11.1111 {i} {asn} {role}\n"));
        }
        let dist = load_power_distribution(&power, 4_200_000.0 / 15.0, &numeric_node).unwrap();
        (topo, dist)
    }

    fn consortium_spec<'a>(
        topo: &'a ResolvedTopology,
        dist: &'a PowerDistribution,
        duration_s: u64,
        m: u32,
        warmup_s: u64,
    ) -> TrialSpec<'a> {
        let adversary = NodeId(4);
        let attack = AttackSpec {
            adversary,
            vector: AttackVector::BgpHijack,
            duration_s,
            confirmation_depth: m,
            spend_fraction: 0.6,
        };
        let plan = if duration_s > 0 {
            Some(
                plan_balanced_split(dist, adversary, &topo.topology, attack.vector, SplitStrategy::LargestFirst)
                    .unwrap()
                    .into_plan(attack.vector, adversary, warmup_s, duration_s),
            )
        } else {
            None
        };
        TrialSpec {
            topology: topo,
            power: dist,
            params: ChainParams::default(),
            initial_difficulty: 4_200_000,
            attack,
            plan,
            warmup_s,
            quiescence_timeout_s: 300,
            initial_balance: 1000,
        }
    }

    #[test]
    fn consortium_split_is_five_to_four() {
        let (topo, dist) = consortium();
        let split = plan_balanced_split(&dist, NodeId(4), &topo, AttackVector::BgpHijack, SplitStrategy::LargestFirst).unwrap();
        assert_eq!(split.group_a.len(), 5);
        assert_eq!(split.group_b.len(), 4);
        assert!((split.power_a - 5.0 / 9.0).abs() < 1e-9);
        assert!((split.power_b - 4.0 / 9.0).abs() < 1e-9);
        assert!(split.group_a.contains(&NodeId(4)));
    }

    #[test]
    fn trial_is_deterministic_and_quiescent() {
        let (topo, dist) = consortium();
        let resolved = topo.resolve(0).unwrap();
        let run = |seed| {
            let mut runner =
                TrialRunner::new(consortium_spec(&resolved, &dist, 120, 12, 300), seed).unwrap();
            runner.enable_trace();
            let (result, mut kept) = runner.run_keep();
            kept.verify_quiescence().unwrap();
            (result, kept.take_trace())
        };
        let (r1, t1) = run(7);
        let (r2, t2) = run(7);
        assert_eq!(r1, r2);
        assert_eq!(t1, t2);
        let (r3, _) = run(8);
        assert!(r1.total_blocks_mined != r3.total_blocks_mined || r1 != r3);
    }

    #[test]
    fn no_cross_side_knowledge_during_partition() {
        let (topo, dist) = consortium();
        let resolved = topo.resolve(250).unwrap();
        let spec = consortium_spec(&resolved, &dist, 300, 12, 300);
        let plan = spec.plan.clone().unwrap();
        let runner = TrialRunner::new(spec, 21).unwrap();
        let (result, kept) = runner.run_keep();
        assert!(result.total_blocks_mined > 0);
        let side_of = |n: NodeId| {
            if plan.group_a.contains(&n) {
                Some(Side::A)
            } else if plan.group_b.contains(&n) {
                Some(Side::B)
            } else {
                None
            }
        };
        for rec in kept.delivery_log() {
            if !rec.during_partition {
                continue;
            }
            if let Some(block_side) = kept.block_side(rec.block) {
                let ok = side_of(rec.to) == Some(block_side) || Some(rec.to) == plan.bridge;
                assert!(ok, "block {} crossed the cut to {}", rec.block, rec.to);
            }
        }
    }

    #[test]
    fn conservation_of_mined_blocks_during_partition() {
        let (topo, dist) = consortium();
        let resolved = topo.resolve(0).unwrap();
        let spec = consortium_spec(&resolved, &dist, 300, 12, 300);
        let runner = TrialRunner::new(spec, 3).unwrap();
        let (result, kept) = runner.run_keep();
        let tagged = (1..kept.arena.len())
            .filter(|i| kept.block_side(BlockId(*i as u32)).is_some())
            .count() as u64;
        assert_eq!(result.blocks_adversary_side + result.blocks_victim_side, tagged);
        assert!(tagged > 0);
    }

    #[test]
    fn zero_duration_attack_never_succeeds() {
        let (topo, dist) = consortium();
        let resolved = topo.resolve(0).unwrap();
        for seed in 0..5 {
            let spec = consortium_spec(&resolved, &dist, 0, 12, 120);
            let result = run_trial(spec, seed).unwrap();
            assert!(!result.success);
            assert!(!result.victim_committed);
        }
    }

    #[test]
    fn long_attack_with_m1_and_dominant_adversary_succeeds() {
        // Two miners: a 70% adversary and a 30% victim, m = 1, long cut.
        let src = "\
node a as=1
node b as=2
link a b 0
asedge 1 2
mesh a b
";
        let topo = Topology::parse(src).unwrap();
        let dist = load_power_distribution("adv 70 0 1 adversary\nvic 30 1 2\n", 4_200_000.0 / 15.0, &numeric_node).unwrap();
        let resolved = topo.resolve(0).unwrap();
        let attack = AttackSpec {
            adversary: NodeId(0),
            vector: AttackVector::BgpHijack,
            duration_s: 1800,
            confirmation_depth: 1,
            spend_fraction: 0.6,
        };
        let plan = PartitionPlan {
            vector: AttackVector::BgpHijack,
            group_a: vec![NodeId(0)],
            group_b: vec![NodeId(1)],
            bridge: Some(NodeId(0)),
            start_s: 120,
            duration_s: 1800,
        };
        let mut successes = 0;
        for seed in 0..20 {
            let spec = TrialSpec {
                topology: &resolved,
                power: &dist,
                params: ChainParams::default(),
                initial_difficulty: 4_200_000,
                attack: attack.clone(),
                plan: Some(plan.clone()),
                warmup_s: 120,
                quiescence_timeout_s: 300,
                initial_balance: 1000,
            };
            if run_trial(spec, seed).unwrap().success {
                successes += 1;
            }
        }
        // Victim commits after one block; 70% power wins the weight race
        // almost always over 30 minutes.
        assert!(successes >= 17, "only {successes}/20 succeeded");
    }

    #[test]
    fn adjudicate_agrees_with_trial_outcomes() {
        let (topo, dist) = consortium();
        let resolved = topo.resolve(0).unwrap();
        let mut saw_success = false;
        let mut saw_failure = false;
        for seed in 0..16 {
            let spec = consortium_spec(&resolved, &dist, 480, 12, 300);
            let (result, kept) = TrialRunner::new(spec, seed).unwrap().run_keep();
            let union = kept.union_tree();
            let verdict = adjudicate(&union, kept.tx_victim(), 12, kept.victim_head_at_heal());
            assert_eq!(verdict, result.success, "seed {seed}");
            if result.success {
                saw_success = true;
                assert!(result.victim_committed);
                assert_eq!(result.final_head_side, HeadSide::Adversary);
                assert_eq!(union.confirmations(kept.tx_victim()), 0);
            } else {
                saw_failure = true;
            }
        }
        // At 8 minutes the cell is genuinely mixed; both verdicts occur.
        assert!(saw_success && saw_failure);
    }

    #[test]
    fn adjudicate_false_when_victim_branch_wins_or_never_commits() {
        let (topo, dist) = consortium();
        let resolved = topo.resolve(0).unwrap();
        // 2 minutes is far too short for 12 confirmations on the victim side.
        for seed in 0..5 {
            let spec = consortium_spec(&resolved, &dist, 120, 12, 300);
            let (result, kept) = TrialRunner::new(spec, seed).unwrap().run_keep();
            assert!(!result.victim_committed);
            assert!(!result.success);
            let union = kept.union_tree();
            assert!(!adjudicate(&union, kept.tx_victim(), 12, kept.victim_head_at_heal()));
        }
    }

    #[test]
    fn probe_spanning_cut_detects_partition_or_unreachable() {
        let (topo, dist) = consortium();
        let resolved = topo.resolve(0).unwrap();
        let spec = consortium_spec(&resolved, &dist, 600, 12, 120);
        let plan = spec.plan.clone().unwrap();
        let mut runner = TrialRunner::new(spec, 5).unwrap();
        // Mid-partition, with the payment already in victim-side blocks.
        runner.run_until_ms(1000 * (120 + 300));
        let merchant = runner.merchant();

        // Spanning both subgroups: the far side is unreachable except for
        // the man in the middle, whose view disagrees with the victims'.
        let all: Vec<NodeId> = plan.group_a.iter().chain(plan.group_b.iter()).copied().collect();
        let probe = runner.issue_probe(merchant, &all, runner.tx_victim());
        runner.run_until_ms(1000 * (120 + 301));
        let outcome = runner.probe_outcome(probe);
        assert!(
            matches!(outcome, ProbeOutcome::Inconsistent | ProbeOutcome::UnreachableMajority),
            "got {outcome:?}"
        );

        // Mostly far-side targets: more than half the queries go dark.
        let mut mostly_far: Vec<NodeId> = plan.group_a.clone();
        mostly_far.push(merchant);
        let probe_far = runner.issue_probe(merchant, &mostly_far, runner.tx_victim());
        runner.run_until_ms(1000 * (120 + 302));
        assert_eq!(runner.probe_outcome(probe_far), ProbeOutcome::UnreachableMajority);

        // Probing only the victim group stays consistent: the blind spot.
        let probe_b = runner.issue_probe(merchant, &plan.group_b, runner.tx_victim());
        runner.run_until_ms(1000 * (120 + 303));
        assert_eq!(runner.probe_outcome(probe_b), ProbeOutcome::Consistent);
    }

    #[test]
    fn probe_without_partition_is_consistent() {
        let (topo, dist) = consortium();
        let resolved = topo.resolve(0).unwrap();
        // Long warmup, no partition yet at probe time.
        let spec = consortium_spec(&resolved, &dist, 60, 12, 3600);
        let miners: Vec<NodeId> = spec.power.entries.iter().map(|m| m.node).collect();
        let mut runner = TrialRunner::new(spec, 5).unwrap();
        runner.run_until_ms(600_000);
        let probe = runner.issue_probe(NodeId(0), &miners, TxId(0));
        runner.run_until_ms(610_000);
        // No one has seen the tx; everyone agrees it is unconfirmed.
        assert_eq!(runner.probe_outcome(probe), ProbeOutcome::Consistent);
    }
}
