//! Public-blockchain feasibility analysis: ingest the pool/stratum/AS
//! dataset, build the peering-aware AS graph, model stratum failover, and
//! compute how much mining power a route-hijack partition could separate.
//!
//! Peering edges are immune to route hijacking, so the atoms of any
//! achievable cut are the peering-connected components of the AS graph.
//! Member locations are hidden behind stratum servers; pool power is spread
//! over a pool's servers by a configurable weight model, which is the main
//! sensitivity knob of the whole analysis.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumServer {
    pub hostname: String,
    pub asn: u32,
    pub location: String,
    pub as_owner: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub name: String,
    /// Observed share of the network, in percent (the dataset column; the
    /// column total need not be 100).
    pub power_pct: f64,
    /// Priority order: members fail over to the next entry when theirs is
    /// unreachable.
    pub servers: Vec<StratumServer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    /// Direct inter-AS link with static mutual knowledge; un-hijackable.
    Peering,
    /// Route through a transit AS; dynamic, hijackable.
    Transit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsGraph {
    pub vertices: Vec<u32>,
    pub edges: Vec<(u32, u32, EdgeKind)>,
    /// AS -> (pool name, hostname) pairs hosted there.
    pub hosting: BTreeMap<u32, Vec<(String, String)>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("dataset line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("duplicate pool name {0}")]
    DuplicatePool(String),
    #[error("pool {0} has no stratum servers")]
    NoServers(String),
    #[error("pool {pool} power {power} must be positive")]
    BadPower { pool: String, power: f64 },
    #[error("peering file references unknown AS {0}")]
    UnknownAs(u32),
    #[error("empty dataset")]
    Empty,
    #[error("AS graph is not connected")]
    Disconnected,
}

/// Parses the pool dataset and its companion peering-edge file.
///
/// Dataset grammar, one directive per line (`#` comments allowed):
///
/// ```text
/// pool <name> <power-percent>
/// server <hostname> <asn> <location> | <as-owner>
/// ```
///
/// Peering grammar:
///
/// ```text
/// edge <asn> <asn> peering|transit
/// ```
pub fn ingest_pool_dataset(
    pools_src: &str,
    peering_src: &str,
) -> Result<(Vec<PoolRecord>, AsGraph), DatasetError> {
    let mut pools: Vec<PoolRecord> = Vec::new();
    for (idx, raw) in pools_src.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| DatasetError::BadLine { line: idx + 1, reason: reason.into() };
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "pool" => {
                if fields.len() != 3 {
                    return Err(bad("expected: pool <name> <power-percent>"));
                }
                let name = fields[1].to_string();
                if pools.iter().any(|p| p.name == name) {
                    return Err(DatasetError::DuplicatePool(name));
                }
                let power: f64 = fields[2].parse().map_err(|_| bad("non-numeric power"))?;
                if !(power > 0.0) {
                    return Err(DatasetError::BadPower { pool: name, power });
                }
                pools.push(PoolRecord { name, power_pct: power, servers: Vec::new() });
            }
            "server" => {
                let pool = pools.last_mut().ok_or_else(|| bad("server before any pool"))?;
                if fields.len() < 3 {
                    return Err(bad("expected: server <hostname> <asn> <location> | <owner>"));
                }
                let hostname = fields[1].to_string();
                let asn: u32 = fields[2].parse().map_err(|_| bad("bad AS number"))?;
                let rest = fields[3..].join(" ");
                let (location, as_owner) = match rest.split_once('|') {
                    Some((l, o)) => (l.trim().to_string(), o.trim().to_string()),
                    None => (rest.trim().to_string(), String::new()),
                };
                pool.servers.push(StratumServer { hostname, asn, location, as_owner });
            }
            other => return Err(bad(&format!("unknown directive {other:?}"))),
        }
    }
    if pools.is_empty() {
        return Err(DatasetError::Empty);
    }
    for pool in &pools {
        if pool.servers.is_empty() {
            return Err(DatasetError::NoServers(pool.name.clone()));
        }
    }

    let mut hosting: BTreeMap<u32, Vec<(String, String)>> = BTreeMap::new();
    for pool in &pools {
        for server in &pool.servers {
            hosting
                .entry(server.asn)
                .or_default()
                .push((pool.name.clone(), server.hostname.clone()));
        }
    }
    let vertices: Vec<u32> = hosting.keys().copied().collect();

    let mut edges: Vec<(u32, u32, EdgeKind)> = Vec::new();
    for (idx, raw) in peering_src.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| DatasetError::BadLine { line: idx + 1, reason: reason.into() };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "edge" {
            return Err(bad("expected: edge <asn> <asn> peering|transit"));
        }
        let a: u32 = fields[1].parse().map_err(|_| bad("bad AS number"))?;
        let b: u32 = fields[2].parse().map_err(|_| bad("bad AS number"))?;
        for asn in [a, b] {
            if !vertices.contains(&asn) {
                return Err(DatasetError::UnknownAs(asn));
            }
        }
        let kind = match fields[3] {
            "peering" => EdgeKind::Peering,
            "transit" => EdgeKind::Transit,
            other => return Err(bad(&format!("unknown edge kind {other:?}"))),
        };
        edges.push((a, b, kind));
    }

    Ok((pools, AsGraph { vertices, edges, hosting }))
}

impl AsGraph {
    fn index_of(&self, asn: u32) -> usize {
        self.vertices.binary_search(&asn).expect("asn is a vertex")
    }

    /// Component label per AS, using only edges accepted by `keep`.
    fn components(&self, keep: impl Fn(EdgeKind) -> bool) -> Vec<usize> {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            if parent[x] != x {
                let root = find(parent, parent[x]);
                parent[x] = root;
            }
            parent[x]
        }
        for (a, b, kind) in &self.edges {
            if keep(*kind) {
                let (ia, ib) = (self.index_of(*a), self.index_of(*b));
                let (ra, rb) = (find(&mut parent, ia), find(&mut parent, ib));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
        (0..n).map(|i| find(&mut parent, i)).collect()
    }

    /// Peering-component label per AS.
    pub fn peering_components(&self) -> BTreeMap<u32, usize> {
        let labels = self.components(|k| k == EdgeKind::Peering);
        self.vertices.iter().enumerate().map(|(i, a)| (*a, labels[i])).collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return true;
        }
        let labels = self.components(|_| true);
        labels.iter().all(|l| *l == labels[0])
    }

    fn subset_connected(&self, subset: &[u32]) -> bool {
        if subset.is_empty() {
            return false;
        }
        let mut seen: Vec<u32> = vec![subset[0]];
        let mut stack = vec![subset[0]];
        while let Some(a) = stack.pop() {
            for (x, y, _) in &self.edges {
                let other = if *x == a {
                    *y
                } else if *y == a {
                    *x
                } else {
                    continue;
                };
                if subset.contains(&other) && !seen.contains(&other) {
                    seen.push(other);
                    stack.push(other);
                }
            }
        }
        seen.len() == subset.len()
    }
}

/// How hidden pool members are spread over their pool's stratum servers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemberWeights {
    /// Equal mass on every server (the default sensitivity assumption).
    Uniform,
    /// All mass behind the first (priority) server.
    PrimaryOnly,
}

impl MemberWeights {
    fn mass(&self, pool: &PoolRecord, server_idx: usize) -> f64 {
        match self {
            MemberWeights::Uniform => pool.power_pct / pool.servers.len() as f64,
            MemberWeights::PrimaryOnly => {
                if server_idx == 0 {
                    pool.power_pct
                } else {
                    0.0
                }
            }
        }
    }
}

/// Result of re-homing pool power after a partition or knock-out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reassignment {
    /// Power mass (percent units) per component label.
    pub per_component: BTreeMap<u32, f64>,
    /// Pools with no reachable server and the power they take offline.
    pub knocked_out: Vec<(String, f64)>,
}

/// Members follow their server; when it is unreachable they reconnect to the
/// first reachable server in the pool's priority order, carrying their mass
/// to that server's component. Pools with no reachable server contribute
/// nothing anywhere.
pub fn failover_reassign(
    pools: &[PoolRecord],
    reach: &dyn Fn(&StratumServer) -> Option<u32>,
    weights: MemberWeights,
) -> Reassignment {
    let mut per_component: BTreeMap<u32, f64> = BTreeMap::new();
    let mut knocked_out = Vec::new();
    for pool in pools {
        let fallback = pool.servers.iter().find_map(|s| reach(s));
        let mut placed = 0.0;
        for (i, server) in pool.servers.iter().enumerate() {
            let mass = weights.mass(pool, i);
            if mass == 0.0 {
                continue;
            }
            match reach(server).or(fallback) {
                Some(comp) => {
                    *per_component.entry(comp).or_insert(0.0) += mass;
                    placed += mass;
                }
                None => {}
            }
        }
        if placed == 0.0 {
            knocked_out.push((pool.name.clone(), pool.power_pct));
        }
    }
    Reassignment { per_component, knocked_out }
}

/// Best achievable split of mining power by hijacking transit routes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparablePower {
    /// min(powerA, powerB) as a fraction of the pools' total power.
    pub fraction: f64,
    /// Transit edges the winning cut severs.
    pub witness: Vec<(u32, u32)>,
    pub side_a: Vec<u32>,
    pub side_b: Vec<u32>,
    pub power_a_pct: f64,
    pub power_b_pct: f64,
}

impl SeparablePower {
    fn none() -> Self {
        SeparablePower {
            fraction: 0.0,
            witness: Vec::new(),
            side_a: Vec::new(),
            side_b: Vec::new(),
            power_a_pct: 0.0,
            power_b_pct: 0.0,
        }
    }
}

/// Searches two-component outcomes over cuts of hijackable (transit) edges:
/// peering components are atoms, each side must stay internally connected,
/// and pool power lands per the member-weight model. Exhaustive over atom
/// bipartitions up to 22 atoms, greedy improvement beyond.
pub fn max_separable_power(
    graph: &AsGraph,
    pools: &[PoolRecord],
    weights: MemberWeights,
) -> Result<SeparablePower, DatasetError> {
    if !graph.is_connected() {
        return Err(DatasetError::Disconnected);
    }
    let total: f64 = pools.iter().map(|p| p.power_pct).sum();
    if total <= 0.0 || graph.vertices.len() < 2 {
        return Ok(SeparablePower::none());
    }

    let comp_of = graph.peering_components();
    let mut atom_ids: Vec<usize> = comp_of.values().copied().collect();
    atom_ids.sort_unstable();
    atom_ids.dedup();
    let k = atom_ids.len();
    if k < 2 {
        return Ok(SeparablePower::none());
    }

    let evaluate = |in_a: &dyn Fn(usize) -> bool| -> Option<SeparablePower> {
        let mut side_a: Vec<u32> = Vec::new();
        let mut side_b: Vec<u32> = Vec::new();
        for asn in &graph.vertices {
            let atom_pos = atom_ids.binary_search(&comp_of[asn]).expect("atom exists");
            if in_a(atom_pos) {
                side_a.push(*asn);
            } else {
                side_b.push(*asn);
            }
        }
        if side_a.is_empty() || side_b.is_empty() {
            return None;
        }
        if !graph.subset_connected(&side_a) || !graph.subset_connected(&side_b) {
            return None;
        }
        let reach = |s: &StratumServer| -> Option<u32> {
            Some(if side_a.contains(&s.asn) { 0 } else { 1 })
        };
        let assignment = failover_reassign(pools, &reach, weights);
        let power_a = assignment.per_component.get(&0).copied().unwrap_or(0.0);
        let power_b = assignment.per_component.get(&1).copied().unwrap_or(0.0);
        let witness: Vec<(u32, u32)> = graph
            .edges
            .iter()
            .filter(|(a, b, kind)| {
                *kind == EdgeKind::Transit && side_a.contains(a) != side_a.contains(b)
            })
            .map(|(a, b, _)| (*a, *b))
            .collect();
        Some(SeparablePower {
            fraction: power_a.min(power_b) / total,
            witness,
            side_a,
            side_b,
            power_a_pct: power_a,
            power_b_pct: power_b,
        })
    };

    let mut best = SeparablePower::none();
    if k <= 22 {
        // Atom 0 pinned to side B: bipartitions are unordered.
        for mask in 1u32..(1 << (k - 1)) {
            if let Some(candidate) = evaluate(&|pos| pos > 0 && mask & (1 << (pos - 1)) != 0) {
                if candidate.fraction > best.fraction {
                    best = candidate;
                }
            }
        }
    } else {
        // Greedy descent on the atom assignment.
        let mut assign: Vec<bool> = (0..k).map(|i| i % 2 == 1).collect();
        loop {
            let current = evaluate(&|pos| assign[pos]).map(|c| c.fraction).unwrap_or(0.0);
            let mut improved = false;
            for i in 0..k {
                assign[i] = !assign[i];
                let flipped = evaluate(&|pos| assign[pos]).map(|c| c.fraction).unwrap_or(0.0);
                if flipped > current {
                    improved = true;
                    break;
                }
                assign[i] = !assign[i];
            }
            if !improved {
                break;
            }
        }
        if let Some(candidate) = evaluate(&|pos| assign[pos]) {
            if candidate.fraction > best.fraction {
                best = candidate;
            }
        }
    }
    if best.fraction == 0.0 {
        best = SeparablePower::none();
    }
    Ok(best)
}

/// Pools whose every stratum server sits inside one shared peering
/// component; route hijacking cannot take any power away from them.
pub fn peering_connected_pools<'a>(graph: &AsGraph, pools: &'a [PoolRecord]) -> Vec<&'a PoolRecord> {
    let comp_of = graph.peering_components();
    // The dominant component: the one hosting the most power.
    let mut weight: BTreeMap<usize, f64> = BTreeMap::new();
    for pool in pools {
        for server in &pool.servers {
            *weight.entry(comp_of[&server.asn]).or_insert(0.0) +=
                pool.power_pct / pool.servers.len() as f64;
        }
    }
    let Some(core) = weight
        .iter()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(c, _)| *c)
    else {
        return Vec::new();
    };
    pools
        .iter()
        .filter(|pool| pool.servers.iter().all(|s| comp_of[&s.asn] == core))
        .collect()
}

/// Full analysis surface for the feasibility command.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub total_power_pct: f64,
    pub pool_count: usize,
    pub peering_connected: Vec<(String, f64)>,
    pub peering_connected_power_pct: f64,
    /// Separable power of the peering-connected core alone (0 when the
    /// peering mesh protects it).
    pub core_separable: SeparablePower,
    /// (weight model, result) rows: the member-location sensitivity table.
    pub sensitivity: Vec<(MemberWeights, SeparablePower)>,
}

pub fn analyze_feasibility(
    graph: &AsGraph,
    pools: &[PoolRecord],
) -> Result<FeasibilityReport, DatasetError> {
    let connected = peering_connected_pools(graph, pools);
    let connected_names: Vec<(String, f64)> =
        connected.iter().map(|p| (p.name.clone(), p.power_pct)).collect();
    let connected_power: f64 = connected.iter().map(|p| p.power_pct).sum();
    let core_pools: Vec<PoolRecord> = connected.iter().map(|p| (*p).clone()).collect();
    let core_separable = max_separable_power(graph, &core_pools, MemberWeights::Uniform)?;
    let sensitivity = vec![
        (MemberWeights::Uniform, max_separable_power(graph, pools, MemberWeights::Uniform)?),
        (MemberWeights::PrimaryOnly, max_separable_power(graph, pools, MemberWeights::PrimaryOnly)?),
    ];
    Ok(FeasibilityReport {
        total_power_pct: pools.iter().map(|p| p.power_pct).sum(),
        pool_count: pools.len(),
        peering_connected: connected_names,
        peering_connected_power_pct: connected_power,
        core_separable,
        sensitivity,
    })
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pools: {} (total power {:.2}%)", self.pool_count, self.total_power_pct)?;
        writeln!(
            f,
            "peering-connected pools: {} ({:.2}% of network, {:.1}% of observed power)",
            self.peering_connected.len(),
            self.peering_connected_power_pct,
            100.0 * self.peering_connected_power_pct / self.total_power_pct
        )?;
        for (name, power) in &self.peering_connected {
            writeln!(f, "  {name} ({power:.2}%)")?;
        }
        writeln!(
            f,
            "separable power within the peering-connected core: {:.4}",
            self.core_separable.fraction
        )?;
        writeln!(f, "member-location sensitivity (full pool set):")?;
        for (weights, result) in &self.sensitivity {
            let model = match weights {
                MemberWeights::Uniform => "uniform",
                MemberWeights::PrimaryOnly => "primary-only",
            };
            writeln!(
                f,
                "  {model:>12}: separable fraction {:.4} (A {:.2}% vs B {:.2}%)",
                result.fraction, result.power_a_pct, result.power_b_pct
            )?;
            if !result.witness.is_empty() {
                let cuts: Vec<String> = result
                    .witness
                    .iter()
                    .map(|(a, b)| format!("AS{a}-AS{b}"))
                    .collect();
                writeln!(f, "               cut: {}", cuts.join(", "))?;
            }
        }
        Ok(())
    }
}
