//! Block-tree state with Ethereum-Homestead-style difficulty adjustment,
//! total-difficulty fork choice, uncle eligibility and confirmation counting.
//!
//! Weight of a branch is the sum of the `difficulty` field of a leaf and all
//! of its ancestors. Uncle references are carried on blocks but never enter
//! the weight calculation, so a branch with fewer blocks wins whenever its
//! cumulated difficulty is higher.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index into the per-trial block arena. Genesis is always id 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlockId(pub u32);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

/// Overlay node index; miners are a subset of nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u16);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TxId(pub u32);

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    /// Absent only for genesis.
    pub parent: Option<BlockId>,
    pub number: u64,
    /// Simulated seconds, strictly increasing along any chain.
    pub timestamp: u64,
    pub difficulty: u64,
    pub miner: NodeId,
    pub uncles: Vec<BlockId>,
    pub transactions: Vec<TxId>,
}

/// Abstract value transfer. Two transactions conflict iff they share a sender
/// and their combined amount exceeds the sender's balance at the fork point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxId,
    pub sender: NodeId,
    pub recipient: NodeId,
    pub amount: u64,
}

impl Transaction {
    pub fn conflicts_with(&self, other: &Transaction, sender_balance_at_fork: u64) -> bool {
        self.sender == other.sender
            && self.amount.saturating_add(other.amount) > sender_balance_at_fork
    }
}

/// Homestead difficulty/uncle parameters. All knobs are configuration so
/// experiments can vary them; defaults are the mainnet Homestead values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub bound_divisor: u64,
    pub interval_divisor: u64,
    pub factor_floor: i64,
    pub bomb_period: u64,
    pub bomb_offset: u64,
    pub uncle_window: u64,
    pub max_uncles: usize,
    pub min_difficulty: u64,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            bound_divisor: 2048,
            interval_divisor: 10,
            factor_floor: -99,
            bomb_period: 100_000,
            bomb_offset: 2,
            uncle_window: 7,
            max_uncles: 2,
            min_difficulty: 131_072,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("parent {parent} of block {block} not present in tree")]
    MissingParent { block: BlockId, parent: BlockId },
    #[error("duplicate block id {0}")]
    DuplicateBlock(BlockId),
    #[error("block {block}: number {got}, expected {expected}")]
    BadNumber { block: BlockId, got: u64, expected: u64 },
    #[error("block {block}: timestamp {got} not after parent timestamp {parent}")]
    BadTimestamp { block: BlockId, got: u64, parent: u64 },
    #[error("non-positive difficulty")]
    NonPositiveDifficulty,
    #[error("interval {0} violates strictly increasing timestamps")]
    BadInterval(i64),
    #[error("block {block}: {count} uncles exceeds maximum {max}")]
    TooManyUncles { block: BlockId, count: usize, max: usize },
    #[error("block {block}: uncle {uncle} is not an eligible stale block")]
    IneligibleUncle { block: BlockId, uncle: BlockId },
    #[error("block {block}: uncle {uncle} already referenced in ancestor chain")]
    DuplicateUncle { block: BlockId, uncle: BlockId },
    #[error("malformed block line: {0}")]
    MalformedLine(String),
}

/// Difficulty of a child block per the Homestead adjustment rule:
/// `parent + (parent/2048) * max(1 - interval/10, -99) + floor(2^(number/100000 - 2))`,
/// clamped below at `params.min_difficulty`.
pub fn compute_difficulty(
    parent_difficulty: u64,
    interval: i64,
    block_number: u64,
    params: &ChainParams,
) -> Result<u64, ChainError> {
    if parent_difficulty == 0 {
        return Err(ChainError::NonPositiveDifficulty);
    }
    if interval <= 0 {
        return Err(ChainError::BadInterval(interval));
    }
    let fraction = (parent_difficulty / params.bound_divisor) as i128;
    let factor = (1 - interval / params.interval_divisor as i64).max(params.factor_floor) as i128;
    let raw = parent_difficulty as i128 + fraction * factor + bomb_term(block_number, params);
    Ok(raw.max(params.min_difficulty as i128) as u64)
}

/// The difficulty-bomb addend: `floor(2^(number/period - offset))`, which is 0
/// while the exponent is negative.
fn bomb_term(block_number: u64, params: &ChainParams) -> i128 {
    let exponent = (block_number / params.bomb_period) as i128 - params.bomb_offset as i128;
    if exponent < 0 {
        0
    } else {
        // Heights past ~12.7M periods would overflow; saturate rather than wrap.
        1i128.checked_shl(exponent.min(100) as u32).unwrap_or(i128::MAX >> 1)
    }
}

/// Single-trial block tree. One writer per tree; parallelism happens across
/// disjoint trials.
#[derive(Debug, Clone)]
pub struct BlockTree {
    params: ChainParams,
    blocks: HashMap<BlockId, Block>,
    total_difficulty: HashMap<BlockId, u128>,
    children: HashMap<BlockId, Vec<BlockId>>,
    arrival_order: HashMap<BlockId, u64>,
    arrivals: Vec<BlockId>,
    canonical_head: BlockId,
    genesis: BlockId,
    /// txid -> blocks that include it (a tx can sit on both sides of a fork).
    tx_index: HashMap<TxId, Vec<BlockId>>,
    next_arrival: u64,
}

impl BlockTree {
    pub fn new(genesis: Block, params: ChainParams) -> Self {
        assert!(genesis.parent.is_none() && genesis.number == 0, "genesis must be height 0");
        let id = genesis.id;
        let mut tree = BlockTree {
            params,
            blocks: HashMap::new(),
            total_difficulty: HashMap::new(),
            children: HashMap::new(),
            arrival_order: HashMap::new(),
            arrivals: Vec::new(),
            canonical_head: id,
            genesis: id,
            tx_index: HashMap::new(),
            next_arrival: 0,
        };
        tree.total_difficulty.insert(id, genesis.difficulty as u128);
        tree.arrival_order.insert(id, 0);
        tree.arrivals.push(id);
        tree.next_arrival = 1;
        tree.blocks.insert(id, genesis);
        tree
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn genesis(&self) -> BlockId {
        self.genesis
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn contains(&self, id: BlockId) -> bool {
        self.blocks.contains_key(&id)
    }

    pub fn block(&self, id: BlockId) -> Result<&Block, ChainError> {
        self.blocks.get(&id).ok_or(ChainError::UnknownBlock(id))
    }

    pub fn children(&self, id: BlockId) -> &[BlockId] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn arrival_order(&self, id: BlockId) -> Option<u64> {
        self.arrival_order.get(&id).copied()
    }

    /// Blocks in arrival order (the deterministic iteration order).
    pub fn blocks_by_arrival(&self) -> impl Iterator<Item = &Block> {
        self.arrivals.iter().map(move |id| &self.blocks[id])
    }

    /// Memoized cumulated difficulty from `id` up through genesis.
    pub fn total_difficulty(&self, id: BlockId) -> Result<u128, ChainError> {
        self.total_difficulty.get(&id).copied().ok_or(ChainError::UnknownBlock(id))
    }

    /// Leaf with maximal total difficulty; ties broken by earliest arrival.
    pub fn canonical_head(&self) -> BlockId {
        self.canonical_head
    }

    pub fn head_block(&self) -> &Block {
        &self.blocks[&self.canonical_head]
    }

    /// Structural validation and insertion. The parent must already be
    /// present (orphan buffering is the caller's job). Difficulty correctness
    /// against the adjustment rule is the miner's responsibility, so random
    /// trees can be built for fork-choice testing.
    pub fn insert(&mut self, block: Block) -> Result<(), ChainError> {
        if self.blocks.contains_key(&block.id) {
            return Err(ChainError::DuplicateBlock(block.id));
        }
        let parent_id = block.parent.ok_or(ChainError::DuplicateBlock(block.id))?;
        let parent = self
            .blocks
            .get(&parent_id)
            .ok_or(ChainError::MissingParent { block: block.id, parent: parent_id })?;
        if block.number != parent.number + 1 {
            return Err(ChainError::BadNumber {
                block: block.id,
                got: block.number,
                expected: parent.number + 1,
            });
        }
        if block.timestamp <= parent.timestamp {
            return Err(ChainError::BadTimestamp {
                block: block.id,
                got: block.timestamp,
                parent: parent.timestamp,
            });
        }
        if block.difficulty == 0 {
            return Err(ChainError::NonPositiveDifficulty);
        }
        self.validate_uncles(&block, parent_id)?;

        let td = self.total_difficulty[&parent_id] + block.difficulty as u128;
        let order = self.next_arrival;
        self.next_arrival += 1;

        self.total_difficulty.insert(block.id, td);
        self.arrival_order.insert(block.id, order);
        self.arrivals.push(block.id);
        self.children.entry(parent_id).or_default().push(block.id);
        for tx in &block.transactions {
            self.tx_index.entry(*tx).or_default().push(block.id);
        }

        // The previous head stays on an equal-weight tie because it arrived
        // earlier; only a strictly heavier leaf displaces it.
        if td > self.total_difficulty[&self.canonical_head] {
            self.canonical_head = block.id;
        }
        self.blocks.insert(block.id, block);
        Ok(())
    }

    fn validate_uncles(&self, block: &Block, parent_id: BlockId) -> Result<(), ChainError> {
        if block.uncles.len() > self.params.max_uncles {
            return Err(ChainError::TooManyUncles {
                block: block.id,
                count: block.uncles.len(),
                max: self.params.max_uncles,
            });
        }
        if block.uncles.is_empty() {
            return Ok(());
        }
        let window = self.window_ancestors(parent_id);
        let referenced = self.referenced_uncles(parent_id);
        for (i, uncle) in block.uncles.iter().enumerate() {
            if block.uncles[..i].contains(uncle) || referenced.contains(uncle) {
                return Err(ChainError::DuplicateUncle { block: block.id, uncle: *uncle });
            }
            // Uncles unknown to this view (mined on a branch we have not
            // synced) are kept as opaque references; full trees check them.
            if let Some(u) = self.blocks.get(uncle) {
                let on_path = window.contains(uncle);
                let parent_in_window = u.parent.map(|p| window.contains(&p)).unwrap_or(false);
                if on_path || !parent_in_window {
                    return Err(ChainError::IneligibleUncle { block: block.id, uncle: *uncle });
                }
            }
        }
        Ok(())
    }

    /// The new block's `uncle_window` nearest ancestors, starting at the
    /// candidate parent.
    fn window_ancestors(&self, parent_id: BlockId) -> Vec<BlockId> {
        let mut out = Vec::with_capacity(self.params.uncle_window as usize);
        let mut cur = Some(parent_id);
        for _ in 0..self.params.uncle_window {
            let Some(id) = cur else { break };
            out.push(id);
            cur = self.blocks[&id].parent;
        }
        out
    }

    /// Uncle ids referenced anywhere in the ancestor chain that could collide
    /// with a new reference. An uncle eligible here has height within the
    /// window, so only window ancestors can have referenced it before.
    fn referenced_uncles(&self, parent_id: BlockId) -> Vec<BlockId> {
        let mut out = Vec::new();
        for id in self.window_ancestors(parent_id) {
            out.extend_from_slice(&self.blocks[&id].uncles);
        }
        out
    }

    /// All stale blocks whose parent is among the window ancestors of a block
    /// built on `candidate_parent`, minus already-referenced ones. Ordered
    /// oldest-first (height, then arrival) so callers can take a
    /// deterministic prefix.
    pub fn eligible_uncles(&self, candidate_parent: BlockId) -> Result<Vec<BlockId>, ChainError> {
        if !self.blocks.contains_key(&candidate_parent) {
            return Err(ChainError::UnknownBlock(candidate_parent));
        }
        let window = self.window_ancestors(candidate_parent);
        let referenced = self.referenced_uncles(candidate_parent);
        let mut out: Vec<BlockId> = Vec::new();
        for ancestor in &window {
            for child in self.children(*ancestor) {
                if !window.contains(child) && *child != candidate_parent && !referenced.contains(child)
                {
                    out.push(*child);
                }
            }
        }
        out.sort_by_key(|id| (self.blocks[id].number, self.arrival_order[id]));
        Ok(out)
    }

    /// Walks the canonical chain from the head down to `height`.
    pub fn canonical_block_at(&self, height: u64) -> Option<BlockId> {
        let mut cur = self.canonical_head;
        loop {
            let b = &self.blocks[&cur];
            if b.number == height {
                return Some(cur);
            }
            if b.number < height {
                return None;
            }
            cur = b.parent?;
        }
    }

    pub fn is_canonical(&self, id: BlockId) -> bool {
        match self.blocks.get(&id) {
            Some(b) => self.canonical_block_at(b.number) == Some(id),
            None => false,
        }
    }

    /// Confirmation count of a transaction: 0 when it sits on no canonical
    /// block, otherwise the containing block counts as the first
    /// confirmation, so a block followed by `m - 1` canonical descendants
    /// yields `m`.
    pub fn confirmations(&self, tx: TxId) -> u64 {
        let Some(blocks) = self.tx_index.get(&tx) else { return 0 };
        let head_height = self.head_block().number;
        for id in blocks {
            if self.is_canonical(*id) {
                return 1 + head_height - self.blocks[&id].number;
            }
        }
        0
    }

    /// Blocks that include `tx`, in insertion order.
    pub fn blocks_with_tx(&self, tx: TxId) -> &[BlockId] {
        self.tx_index.get(&tx).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Whether `ancestor` lies on the path from `descendant` to genesis
    /// (inclusive).
    pub fn is_ancestor_or_self(&self, ancestor: BlockId, descendant: BlockId) -> bool {
        let (Some(a), Some(mut cur)) = (self.blocks.get(&ancestor), self.blocks.get(&descendant))
        else {
            return false;
        };
        loop {
            if cur.id == ancestor {
                return true;
            }
            if cur.number <= a.number {
                return false;
            }
            match cur.parent {
                Some(p) => cur = &self.blocks[&p],
                None => return false,
            }
        }
    }

    /// Id list from `id` up to genesis, deepest last.
    pub fn ancestry(&self, id: BlockId) -> Vec<BlockId> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            out.push(c);
            cur = self.blocks[&c].parent;
        }
        out
    }

    pub fn leaves(&self) -> Vec<BlockId> {
        let mut out: Vec<BlockId> = self
            .arrivals
            .iter()
            .filter(|id| self.children(**id).is_empty())
            .copied()
            .collect();
        out.sort_by_key(|id| self.arrival_order[id]);
        out
    }

    /// Line-oriented dump for golden files and post-mortems, one block per
    /// line in arrival order:
    /// `id parent number timestamp difficulty miner uncles txs`
    /// with `-` for genesis parent and comma-joined id lists (or `-`).
    pub fn serialize_lines(&self) -> String {
        let mut out = String::new();
        for block in self.blocks_by_arrival() {
            let parent = block
                .parent
                .map(|p| p.0.to_string())
                .unwrap_or_else(|| "-".to_string());
            let uncles = join_ids(block.uncles.iter().map(|u| u.0));
            let txs = join_ids(block.transactions.iter().map(|t| t.0));
            out.push_str(&format!(
                "{} {} {} {} {} {} {} {}\n",
                block.id.0,
                parent,
                block.number,
                block.timestamp,
                block.difficulty,
                block.miner.0,
                uncles,
                txs
            ));
        }
        out
    }

    /// Inverse of [`serialize_lines`](Self::serialize_lines); first line must
    /// be the genesis.
    pub fn parse_lines(input: &str, params: ChainParams) -> Result<Self, ChainError> {
        let mut tree: Option<BlockTree> = None;
        for line in input.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let block = parse_block_line(line)?;
            match tree.as_mut() {
                None => tree = Some(BlockTree::new(block, params.clone())),
                Some(t) => t.insert(block)?,
            }
        }
        tree.ok_or_else(|| ChainError::MalformedLine("empty tree dump".to_string()))
    }
}

fn join_ids(ids: impl Iterator<Item = u32>) -> String {
    let parts: Vec<String> = ids.map(|x| x.to_string()).collect();
    if parts.is_empty() {
        "-".to_string()
    } else {
        parts.join(",")
    }
}

fn parse_id_list(field: &str, line: &str) -> Result<Vec<u32>, ChainError> {
    if field == "-" {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|p| p.parse::<u32>().map_err(|_| ChainError::MalformedLine(line.to_string())))
        .collect()
}

fn parse_block_line(line: &str) -> Result<Block, ChainError> {
    let bad = || ChainError::MalformedLine(line.to_string());
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 8 {
        return Err(bad());
    }
    let id = BlockId(fields[0].parse().map_err(|_| bad())?);
    let parent = if fields[1] == "-" {
        None
    } else {
        Some(BlockId(fields[1].parse().map_err(|_| bad())?))
    };
    Ok(Block {
        id,
        parent,
        number: fields[2].parse().map_err(|_| bad())?,
        timestamp: fields[3].parse().map_err(|_| bad())?,
        difficulty: fields[4].parse().map_err(|_| bad())?,
        miner: NodeId(fields[5].parse().map_err(|_| bad())?),
        uncles: parse_id_list(fields[6], line)?.into_iter().map(BlockId).collect(),
        transactions: parse_id_list(fields[7], line)?.into_iter().map(TxId).collect(),
    })
}

/// Child timestamp rule: strictly after the parent, never behind wall-clock
/// simulation time.
pub fn child_timestamp(parent_timestamp: u64, sim_time_s: u64) -> u64 {
    (parent_timestamp + 1).max(sim_time_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn genesis(difficulty: u64) -> Block {
        Block {
            id: BlockId(0),
            parent: None,
            number: 0,
            timestamp: 0,
            difficulty,
            miner: NodeId(0),
            uncles: vec![],
            transactions: vec![],
        }
    }

    fn child(id: u32, parent: &Block, difficulty: u64) -> Block {
        Block {
            id: BlockId(id),
            parent: Some(parent.id),
            number: parent.number + 1,
            timestamp: parent.timestamp + 15,
            difficulty,
            miner: NodeId(0),
            uncles: vec![],
            transactions: vec![],
        }
    }

    #[test]
    fn difficulty_fast_block_increases() {
        let p = ChainParams::default();
        assert_eq!(compute_difficulty(2_048_000, 5, 100, &p).unwrap(), 2_049_000);
    }

    #[test]
    fn difficulty_target_band_holds() {
        let p = ChainParams::default();
        assert_eq!(compute_difficulty(2_048_000, 15, 100, &p).unwrap(), 2_048_000);
    }

    #[test]
    fn difficulty_slow_block_decreases() {
        let p = ChainParams::default();
        assert_eq!(compute_difficulty(2_048_000, 25, 100, &p).unwrap(), 2_047_000);
    }

    #[test]
    fn difficulty_factor_clamped_at_floor() {
        let p = ChainParams::default();
        assert_eq!(compute_difficulty(2_048_000, 5000, 100, &p).unwrap(), 1_949_000);
    }

    #[test]
    fn difficulty_bomb_kicks_in() {
        let p = ChainParams::default();
        assert_eq!(compute_difficulty(2_048_000, 15, 300_000, &p).unwrap(), 2_048_002);
    }

    #[test]
    fn difficulty_clamps_to_minimum() {
        let p = ChainParams::default();
        // 131073 - 99 * floor(131073/2048) = 124737, below the floor.
        assert_eq!(compute_difficulty(131_073, 5000, 100, &p).unwrap(), p.min_difficulty);
    }

    #[test]
    fn difficulty_rejects_bad_inputs() {
        let p = ChainParams::default();
        assert_eq!(compute_difficulty(2048, 0, 1, &p), Err(ChainError::BadInterval(0)));
        assert_eq!(compute_difficulty(2048, -3, 1, &p), Err(ChainError::BadInterval(-3)));
        assert_eq!(compute_difficulty(0, 5, 1, &p), Err(ChainError::NonPositiveDifficulty));
    }

    #[test]
    fn bomb_zero_below_two_periods_then_grows() {
        let p = ChainParams::default();
        assert_eq!(bomb_term(0, &p), 0);
        assert_eq!(bomb_term(199_999, &p), 0);
        assert_eq!(bomb_term(200_000, &p), 1);
        assert_eq!(bomb_term(300_000, &p), 2);
        assert_eq!(bomb_term(500_000, &p), 8);
    }

    #[test]
    fn total_difficulty_of_genesis() {
        let tree = BlockTree::new(genesis(1000), ChainParams::default());
        assert_eq!(tree.total_difficulty(BlockId(0)).unwrap(), 1000);
    }

    #[test]
    fn total_difficulty_sums_chain() {
        let g = genesis(1000);
        let b1 = child(1, &g, 1100);
        let b2 = child(2, &b1, 1200);
        let mut tree = BlockTree::new(g, ChainParams::default());
        tree.insert(b1).unwrap();
        tree.insert(b2.clone()).unwrap();
        assert_eq!(tree.total_difficulty(b2.id).unwrap(), 3300);
    }

    #[test]
    fn sibling_insert_leaves_parent_total_unchanged() {
        let g = genesis(1000);
        let b1 = child(1, &g, 1100);
        let mut tree = BlockTree::new(g.clone(), ChainParams::default());
        tree.insert(b1.clone()).unwrap();
        let before = tree.total_difficulty(b1.id).unwrap();
        let mut sibling = child(2, &g, 900);
        sibling.timestamp = b1.timestamp + 1;
        tree.insert(sibling).unwrap();
        assert_eq!(tree.total_difficulty(b1.id).unwrap(), before);
    }

    #[test]
    fn heavier_short_branch_wins() {
        // Branch A: 2 extra blocks, total 5000. Branch B: 4 extra blocks, total 4900.
        let g = genesis(1000);
        let a1 = child(1, &g, 2200);
        let a2 = child(2, &a1, 1800);
        let mut tree = BlockTree::new(g.clone(), ChainParams::default());
        tree.insert(a1).unwrap();
        tree.insert(a2.clone()).unwrap();
        let mut prev = g.clone();
        for (i, d) in [(3u32, 975u64), (4, 975), (5, 975), (6, 975)] {
            let mut b = child(i, &prev, d);
            b.timestamp = prev.timestamp + 16;
            tree.insert(b.clone()).unwrap();
            prev = b;
        }
        assert_eq!(tree.total_difficulty(prev.id).unwrap(), 4900);
        assert_eq!(tree.canonical_head(), a2.id);
    }

    #[test]
    fn single_chain_head_is_tip() {
        let g = genesis(1000);
        let b1 = child(1, &g, 1000);
        let b2 = child(2, &b1, 1000);
        let mut tree = BlockTree::new(g, ChainParams::default());
        tree.insert(b1).unwrap();
        tree.insert(b2.clone()).unwrap();
        assert_eq!(tree.canonical_head(), b2.id);
    }

    #[test]
    fn equal_totals_first_arrival_wins() {
        let g = genesis(1000);
        let first = child(1, &g, 1500);
        let mut second = child(2, &g, 1500);
        second.timestamp = first.timestamp + 1;
        let mut tree = BlockTree::new(g, ChainParams::default());
        tree.insert(first.clone()).unwrap();
        tree.insert(second).unwrap();
        assert_eq!(tree.canonical_head(), first.id);
    }

    #[test]
    fn no_orphan_insertion() {
        let g = genesis(1000);
        let b1 = child(1, &g, 1000);
        let b2 = child(2, &b1, 1000);
        let mut tree = BlockTree::new(g, ChainParams::default());
        let err = tree.insert(b2).unwrap_err();
        assert!(matches!(err, ChainError::MissingParent { .. }));
    }

    #[test]
    fn linear_chain_has_no_uncles() {
        let g = genesis(1000);
        let b1 = child(1, &g, 1000);
        let b2 = child(2, &b1, 1000);
        let mut tree = BlockTree::new(g, ChainParams::default());
        tree.insert(b1).unwrap();
        tree.insert(b2.clone()).unwrap();
        assert!(tree.eligible_uncles(b2.id).unwrap().is_empty());
    }

    #[test]
    fn stale_fork_two_back_is_eligible() {
        let g = genesis(1000);
        let b1 = child(1, &g, 1000);
        let mut stale = child(2, &g, 999);
        stale.timestamp = b1.timestamp + 1;
        let b2 = child(3, &b1, 1000);
        let mut tree = BlockTree::new(g, ChainParams::default());
        tree.insert(b1).unwrap();
        tree.insert(stale.clone()).unwrap();
        tree.insert(b2.clone()).unwrap();
        assert_eq!(tree.eligible_uncles(b2.id).unwrap(), vec![stale.id]);
    }

    #[test]
    fn stale_fork_past_window_is_excluded() {
        let g = genesis(1000);
        let mut tree = BlockTree::new(g.clone(), ChainParams::default());
        let b1 = child(1, &g, 1000);
        tree.insert(b1.clone()).unwrap();
        let mut stale = child(100, &g, 999);
        stale.timestamp = b1.timestamp + 1;
        tree.insert(stale.clone()).unwrap();
        // Extend main chain 9 generations past the fork point.
        let mut prev = b1;
        for i in 2..=9 {
            let b = child(i, &prev, 1000);
            tree.insert(b.clone()).unwrap();
            prev = b;
        }
        // The stale block's parent (genesis) is 9 generations above the next
        // block, outside the 7-ancestor window.
        assert!(tree.eligible_uncles(prev.id).unwrap().is_empty());
    }

    #[test]
    fn uncle_referenced_twice_is_rejected() {
        let g = genesis(1000);
        let b1 = child(1, &g, 1000);
        let mut stale = child(2, &g, 999);
        stale.timestamp = b1.timestamp + 1;
        let mut tree = BlockTree::new(g, ChainParams::default());
        tree.insert(b1.clone()).unwrap();
        tree.insert(stale.clone()).unwrap();
        let mut b2 = child(3, &b1, 1000);
        b2.uncles = vec![stale.id];
        tree.insert(b2.clone()).unwrap();
        assert!(tree.eligible_uncles(b2.id).unwrap().is_empty());
        let mut b3 = child(4, &b2, 1000);
        b3.uncles = vec![stale.id];
        let err = tree.insert(b3).unwrap_err();
        assert!(matches!(err, ChainError::DuplicateUncle { .. }));
    }

    #[test]
    fn confirmations_count_containing_block() {
        let g = genesis(1000);
        let tx = TxId(7);
        let mut b1 = child(1, &g, 1000);
        b1.transactions.push(tx);
        let mut tree = BlockTree::new(g, ChainParams::default());
        tree.insert(b1.clone()).unwrap();
        assert_eq!(tree.confirmations(tx), 1);
        let mut prev = b1;
        for i in 2..=12 {
            let b = child(i, &prev, 1000);
            tree.insert(b.clone()).unwrap();
            prev = b;
        }
        // Containing block at height 1, head at height 12.
        assert_eq!(tree.confirmations(tx), 12);
    }

    #[test]
    fn confirmations_zero_off_canonical_or_missing() {
        let g = genesis(1000);
        let tx = TxId(9);
        let b1 = child(1, &g, 1000);
        let mut side = child(2, &g, 500);
        side.timestamp = b1.timestamp + 1;
        side.transactions.push(tx);
        let mut tree = BlockTree::new(g, ChainParams::default());
        tree.insert(b1).unwrap();
        tree.insert(side).unwrap();
        assert_eq!(tree.confirmations(tx), 0);
        assert_eq!(tree.confirmations(TxId(1234)), 0);
    }

    #[test]
    fn confirmations_drop_on_head_switch() {
        let g = genesis(1000);
        let tx = TxId(3);
        let mut b1 = child(1, &g, 1000);
        b1.transactions.push(tx);
        let mut tree = BlockTree::new(g.clone(), ChainParams::default());
        tree.insert(b1.clone()).unwrap();
        assert_eq!(tree.confirmations(tx), 1);
        let mut c1 = child(2, &g, 1500);
        c1.timestamp = b1.timestamp + 1;
        tree.insert(c1).unwrap();
        assert_eq!(tree.confirmations(tx), 0);
    }

    #[test]
    fn serialize_round_trips() {
        let g = genesis(1000);
        let mut b1 = child(1, &g, 1000);
        b1.transactions.push(TxId(5));
        let mut stale = child(2, &g, 999);
        stale.timestamp = b1.timestamp + 1;
        let mut b2 = child(3, &b1, 1001);
        b2.uncles = vec![stale.id];
        let mut tree = BlockTree::new(g, ChainParams::default());
        tree.insert(b1).unwrap();
        tree.insert(stale).unwrap();
        tree.insert(b2).unwrap();

        let text = tree.serialize_lines();
        let parsed = BlockTree::parse_lines(&text, ChainParams::default()).unwrap();
        assert_eq!(parsed.serialize_lines(), text);
        assert_eq!(parsed.canonical_head(), tree.canonical_head());
    }

    #[test]
    fn uncle_references_do_not_change_weight_or_head() {
        let g = genesis(1000);
        let b1 = child(1, &g, 1000);
        let mut stale = child(2, &g, 999);
        stale.timestamp = b1.timestamp + 1;
        let mut tree_with = BlockTree::new(g.clone(), ChainParams::default());
        let mut tree_without = BlockTree::new(g, ChainParams::default());
        for t in [&mut tree_with, &mut tree_without] {
            t.insert(b1.clone()).unwrap();
            t.insert(stale.clone()).unwrap();
        }
        let mut with_uncle = child(3, &b1, 1000);
        with_uncle.uncles = vec![stale.id];
        let plain = child(3, &b1, 1000);
        tree_with.insert(with_uncle.clone()).unwrap();
        tree_without.insert(plain.clone()).unwrap();
        assert_eq!(
            tree_with.total_difficulty(with_uncle.id).unwrap(),
            tree_without.total_difficulty(plain.id).unwrap()
        );
        assert_eq!(tree_with.canonical_head(), tree_without.canonical_head());
    }

    #[test]
    fn child_timestamp_rule() {
        assert_eq!(child_timestamp(100, 90), 101);
        assert_eq!(child_timestamp(100, 114), 114);
    }
}
