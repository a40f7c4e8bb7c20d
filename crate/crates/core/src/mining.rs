//! Power-weighted stochastic block production.
//!
//! Puzzle solving is a memoryless race: each miner's solve time is an
//! exponential draw with rate `power * total_hashrate / difficulty`, so
//! restarting the race on a new head only requires resampling.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{child_timestamp, compute_difficulty, Block, BlockId, BlockTree, NodeId, TxId};

/// Tolerance on the power shares summing to one.
pub const POWER_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinerRole {
    Honest,
    Adversary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinerSpec {
    pub name: String,
    pub node: NodeId,
    /// Fraction of the network hashrate in (0, 1].
    pub power: f64,
    pub role: MinerRole,
    /// AS the miner's node is placed in (mirrors the dataset column).
    pub as_id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDistribution {
    pub entries: Vec<MinerSpec>,
    /// Abstract hash units per second across the whole network.
    pub total_hashrate: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("power file line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("no miners in power file")]
    Empty,
    #[error("duplicate miner name {0}")]
    DuplicateName(String),
    #[error("unknown node {0} in power file")]
    UnknownNode(String),
    #[error("power shares sum to {0}, expected 1")]
    BadSum(f64),
    #[error("total hashrate must be positive")]
    BadHashrate,
}

impl PowerDistribution {
    pub fn new(entries: Vec<MinerSpec>, total_hashrate: f64) -> Result<Self, PowerError> {
        if entries.is_empty() {
            return Err(PowerError::Empty);
        }
        if !(total_hashrate > 0.0) {
            return Err(PowerError::BadHashrate);
        }
        let sum: f64 = entries.iter().map(|m| m.power).sum();
        if (sum - 1.0).abs() > POWER_SUM_TOLERANCE {
            return Err(PowerError::BadSum(sum));
        }
        Ok(PowerDistribution { entries, total_hashrate })
    }

    pub fn miner(&self, node: NodeId) -> Option<&MinerSpec> {
        self.entries.iter().find(|m| m.node == node)
    }

    /// Calibration used throughout: with `total_hashrate = initial_difficulty
    /// / target_block_time`, the whole network finds blocks at the target
    /// cadence while difficulty sits at its initial value.
    pub fn calibrated(entries: Vec<MinerSpec>, initial_difficulty: u64, target_block_time_s: f64) -> Result<Self, PowerError> {
        if !(target_block_time_s > 0.0) {
            return Err(PowerError::BadHashrate);
        }
        Self::new(entries, initial_difficulty as f64 / target_block_time_s)
    }
}

/// Seconds until the miner's next puzzle solution.
pub fn next_block_delay<R: Rng + ?Sized>(
    rng: &mut R,
    miner_power: f64,
    total_hashrate: f64,
    difficulty: u64,
) -> Result<f64, PowerError> {
    if difficulty == 0 || !(miner_power > 0.0) || !(total_hashrate > 0.0) {
        return Err(PowerError::BadHashrate);
    }
    let rate = miner_power * total_hashrate / difficulty as f64;
    let exp = Exp::new(rate).map_err(|_| PowerError::BadHashrate)?;
    Ok(exp.sample(rng))
}

/// Assembles the block a miner would publish on top of its local canonical
/// head: height and timestamp per the chain rules, difficulty from the
/// adjustment algorithm, up to `max_uncles` eligible stale blocks
/// (oldest first), plus the supplied pending transactions.
pub fn mine_on(
    miner: NodeId,
    tree: &BlockTree,
    id: BlockId,
    sim_time_s: u64,
    pending_txs: Vec<TxId>,
) -> Block {
    let head = tree.head_block();
    let timestamp = child_timestamp(head.timestamp, sim_time_s);
    let interval = (timestamp - head.timestamp) as i64;
    let number = head.number + 1;
    let difficulty = compute_difficulty(head.difficulty, interval, number, tree.params())
        .expect("head difficulty positive and interval >= 1 by construction");
    let mut uncles = tree.eligible_uncles(head.id).expect("head exists");
    uncles.truncate(tree.params().max_uncles);
    Block {
        id,
        parent: Some(head.id),
        number,
        timestamp,
        difficulty,
        miner,
        uncles,
        transactions: pending_txs,
    }
}

/// Parses a power-distribution file: one row per miner,
/// `name power_percent node as_id [role]`, `#` comments allowed. The node
/// column is resolved against the topology by the caller-supplied resolver.
/// Percent values are normalized to shares summing to 1, preserving ratios,
/// so the dataset's column may total e.g. 96.07.
pub fn load_power_distribution(
    source: &str,
    total_hashrate: f64,
    resolve_node: &dyn Fn(&str) -> Option<NodeId>,
) -> Result<PowerDistribution, PowerError> {
    let mut rows: Vec<(String, f64, NodeId, u32, MinerRole)> = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(PowerError::BadRow {
                line: idx + 1,
                reason: "expected: name power_percent node as_id [role]".into(),
            });
        }
        let power: f64 = fields[1].parse().map_err(|_| PowerError::BadRow {
            line: idx + 1,
            reason: format!("non-numeric power {:?}", fields[1]),
        })?;
        if !(power > 0.0) {
            return Err(PowerError::BadRow {
                line: idx + 1,
                reason: format!("non-positive power {power}"),
            });
        }
        let node = resolve_node(fields[2]).ok_or_else(|| PowerError::UnknownNode(fields[2].into()))?;
        let as_id: u32 = fields[3].parse().map_err(|_| PowerError::BadRow {
            line: idx + 1,
            reason: format!("bad AS id {:?}", fields[3]),
        })?;
        let role = match fields.get(4) {
            None | Some(&"honest") => MinerRole::Honest,
            Some(&"adversary") => MinerRole::Adversary,
            Some(other) => {
                return Err(PowerError::BadRow {
                    line: idx + 1,
                    reason: format!("unknown role {other:?}"),
                })
            }
        };
        let name = fields[0].to_string();
        if rows.iter().any(|(n, ..)| *n == name) {
            return Err(PowerError::DuplicateName(name));
        }
        rows.push((name, power, node, as_id, role));
    }
    if rows.is_empty() {
        return Err(PowerError::Empty);
    }
    let total: f64 = rows.iter().map(|(_, p, ..)| *p).sum();
    let entries = rows
        .into_iter()
        .map(|(name, power, node, as_id, role)| MinerSpec {
            name,
            node,
            power: power / total,
            role,
            as_id,
        })
        .collect();
    PowerDistribution::new(entries, total_hashrate)
}

/// Node resolver for sources whose node column is already a numeric index.
pub fn numeric_node(name: &str) -> Option<NodeId> {
    name.parse::<u16>().ok().map(NodeId)
}
