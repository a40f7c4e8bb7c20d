//! Scenario files: the declarative description of one experiment, binding a
//! topology file and a power file to chain parameters, the attack, and the
//! experiment grid.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::analysis::ExperimentGrid;
use crate::attack::{plan_balanced_split, AttackSpec, BalancedSplit, SplitStrategy, TrialSpec};
use crate::chain::{ChainParams, NodeId};
use crate::error::{Error, Result};
use crate::mining::{load_power_distribution, PowerDistribution};
use crate::netsim::{AttackVector, PartitionPlan, ResolvedTopology, Topology};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    scenario: RawMain,
    #[serde(default)]
    chain: RawChain,
    attack: RawAttack,
    grid: RawGrid,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMain {
    name: Option<String>,
    topology: PathBuf,
    power: PathBuf,
    initial_difficulty: u64,
    target_block_time_s: f64,
    warmup_s: u64,
    quiescence_timeout_s: u64,
    #[serde(default = "default_balance")]
    initial_balance: u64,
}

fn default_balance() -> u64 {
    1000
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    bound_divisor: Option<u64>,
    interval_divisor: Option<u64>,
    factor_floor: Option<i64>,
    bomb_period: Option<u64>,
    bomb_offset: Option<u64>,
    uncle_window: Option<u64>,
    max_uncles: Option<usize>,
    min_difficulty: Option<u64>,
}

impl RawChain {
    fn into_params(self) -> ChainParams {
        let d = ChainParams::default();
        ChainParams {
            bound_divisor: self.bound_divisor.unwrap_or(d.bound_divisor),
            interval_divisor: self.interval_divisor.unwrap_or(d.interval_divisor),
            factor_floor: self.factor_floor.unwrap_or(d.factor_floor),
            bomb_period: self.bomb_period.unwrap_or(d.bomb_period),
            bomb_offset: self.bomb_offset.unwrap_or(d.bomb_offset),
            uncle_window: self.uncle_window.unwrap_or(d.uncle_window),
            max_uncles: self.max_uncles.unwrap_or(d.max_uncles),
            min_difficulty: self.min_difficulty.unwrap_or(d.min_difficulty),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttack {
    adversary: String,
    vector: AttackVector,
    confirmation_depth: u32,
    spend_fraction: f64,
    split_strategy: Option<SplitStrategy>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(default)]
    durations_min: Vec<u64>,
    #[serde(default)]
    durations_s: Vec<u64>,
    delays_ms: Vec<u64>,
    m_values: Option<Vec<u32>>,
    trials_per_cell: u32,
    master_seed: u64,
}

/// A scenario with its referenced files loaded but not yet validated.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub topology: Topology,
    pub power_source: String,
    pub initial_difficulty: u64,
    pub target_block_time_s: f64,
    pub params: ChainParams,
    pub adversary: String,
    pub vector: AttackVector,
    pub confirmation_depth: u32,
    pub spend_fraction: f64,
    pub split_strategy: SplitStrategy,
    pub warmup_s: u64,
    pub quiescence_timeout_s: u64,
    pub initial_balance: u64,
    pub grid: ExperimentGrid,
}

impl ScenarioConfig {
    /// Reads the scenario file and the topology/power files it references
    /// (paths resolved relative to the scenario file's directory).
    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text = fs::read_to_string(path)?;
        let raw: RawScenario = toml::from_str(&text)
            .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let topo_path = base.join(&raw.scenario.topology);
        let topo_text = fs::read_to_string(&topo_path)?;
        let topology = Topology::parse(&topo_text)
            .map_err(|e| Error::parse(format!("{}: {e}", topo_path.display())))?;
        let power_path = base.join(&raw.scenario.power);
        let power_source = fs::read_to_string(&power_path)?;

        let mut durations_s: Vec<u64> = raw
            .grid
            .durations_min
            .iter()
            .map(|m| m * 60)
            .chain(raw.grid.durations_s.iter().copied())
            .collect();
        durations_s.dedup();
        let grid = ExperimentGrid {
            durations_s,
            delays_ms: raw.grid.delays_ms,
            m_values: raw
                .grid
                .m_values
                .unwrap_or_else(|| vec![raw.attack.confirmation_depth]),
            trials_per_cell: raw.grid.trials_per_cell,
            master_seed: raw.grid.master_seed,
        };

        Ok(ScenarioConfig {
            name: raw
                .scenario
                .name
                .unwrap_or_else(|| path.file_stem().unwrap_or_default().to_string_lossy().into_owned()),
            topology,
            power_source,
            initial_difficulty: raw.scenario.initial_difficulty,
            target_block_time_s: raw.scenario.target_block_time_s,
            params: raw.chain.into_params(),
            adversary: raw.attack.adversary,
            vector: raw.attack.vector,
            confirmation_depth: raw.attack.confirmation_depth,
            spend_fraction: raw.attack.spend_fraction,
            split_strategy: raw.attack.split_strategy.unwrap_or(SplitStrategy::LargestFirst),
            warmup_s: raw.scenario.warmup_s,
            quiescence_timeout_s: raw.scenario.quiescence_timeout_s,
            initial_balance: raw.scenario.initial_balance,
            grid,
        })
    }

    /// Validates everything that does not depend on the per-cell delay or
    /// duration: power distribution, adversary, balanced split feasibility,
    /// and one resolved topology per delay value.
    pub fn prepare(self) -> Result<PreparedScenario> {
        if self.initial_difficulty == 0 {
            return Err(Error::validation("initial difficulty must be positive"));
        }
        if !(self.target_block_time_s > 0.0) {
            return Err(Error::validation("target block time must be positive"));
        }
        if self.quiescence_timeout_s == 0 {
            return Err(Error::validation("quiescence timeout must be positive"));
        }
        self.grid.validate()?;

        let hashrate = self.initial_difficulty as f64 / self.target_block_time_s;
        let topology = self.topology.clone();
        let resolve = |name: &str| topology.node_id(name);
        let power = load_power_distribution(&self.power_source, hashrate, &resolve)
            .map_err(|e| Error::validation(e.to_string()))?;
        for miner in &power.entries {
            let actual = topology.as_of(miner.node);
            if actual != miner.as_id {
                return Err(Error::validation(format!(
                    "miner {}: power file says AS{}, topology places node in AS{}",
                    miner.name, miner.as_id, actual
                )));
            }
        }

        let adversary = topology
            .node_id(&self.adversary)
            .ok_or_else(|| Error::validation(format!("unknown adversary node {}", self.adversary)))?;

        let split = if self.vector == AttackVector::None {
            None
        } else {
            Some(
                plan_balanced_split(&power, adversary, &topology, self.vector, self.split_strategy)
                    .map_err(|e| Error::validation(e.to_string()))?,
            )
        };

        let mut resolved = BTreeMap::new();
        for delay in &self.grid.delays_ms {
            let r = self
                .topology
                .resolve(*delay)
                .map_err(|e| Error::validation(format!("delay {delay} ms: {e}")))?;
            resolved.insert(*delay, r);
        }

        // Surface infeasibility now rather than per trial: validate the plan
        // template at the largest duration.
        if let (Some(split), Some(max_duration)) =
            (&split, self.grid.durations_s.iter().max().copied())
        {
            if max_duration > 0 {
                let plan = split.clone().into_plan(self.vector, adversary, self.warmup_s, max_duration);
                plan.validate(&self.topology)
                    .map_err(|e| Error::validation(e.to_string()))?;
            }
        }

        let attack = AttackSpec {
            adversary,
            vector: self.vector,
            duration_s: 0,
            confirmation_depth: self.confirmation_depth,
            spend_fraction: self.spend_fraction,
        };
        attack.validate().map_err(|e| Error::validation(e.to_string()))?;

        Ok(PreparedScenario { cfg: self, power, adversary, split, resolved })
    }
}

/// A validated scenario ready to produce per-cell trial specs.
#[derive(Debug)]
pub struct PreparedScenario {
    cfg: ScenarioConfig,
    power: PowerDistribution,
    adversary: NodeId,
    split: Option<BalancedSplit>,
    resolved: BTreeMap<u64, ResolvedTopology>,
}

impl PreparedScenario {
    pub fn name(&self) -> &str {
        &self.cfg.name
    }

    pub fn grid(&self) -> &ExperimentGrid {
        &self.cfg.grid
    }

    pub fn grid_mut(&mut self) -> &mut ExperimentGrid {
        &mut self.cfg.grid
    }

    pub fn power(&self) -> &PowerDistribution {
        &self.power
    }

    pub fn adversary(&self) -> NodeId {
        self.adversary
    }

    pub fn split(&self) -> Option<&BalancedSplit> {
        self.split.as_ref()
    }

    pub fn plan_for(&self, duration_s: u64) -> Option<PartitionPlan> {
        match (&self.split, duration_s) {
            (Some(split), d) if d > 0 => Some(split.clone().into_plan(
                self.cfg.vector,
                self.adversary,
                self.cfg.warmup_s,
                d,
            )),
            _ => None,
        }
    }

    /// The fully assembled per-cell trial spec.
    pub fn trial_spec(&self, delay_ms: u64, duration_s: u64, m: u32) -> Result<TrialSpec<'_>> {
        let topology = self.resolved.get(&delay_ms).ok_or_else(|| {
            Error::validation(format!("delay {delay_ms} ms is not part of this scenario's grid"))
        })?;
        Ok(TrialSpec {
            topology,
            power: &self.power,
            params: self.cfg.params.clone(),
            initial_difficulty: self.cfg.initial_difficulty,
            attack: AttackSpec {
                adversary: self.adversary,
                vector: self.cfg.vector,
                duration_s,
                confirmation_depth: m,
                spend_fraction: self.cfg.spend_fraction,
            },
            plan: self.plan_for(duration_s),
            warmup_s: self.cfg.warmup_s,
            quiescence_timeout_s: self.cfg.quiescence_timeout_s,
            initial_balance: self.cfg.initial_balance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    const TOPO: &str = "\
node a as=1
node b as=2
node c as=3
link a b delay
link b c delay
asedge 1 2
asedge 2 3
mesh a b c
";
    const POWER: &str = "\
alpha 40 a 1
beta 30 b 2 adversary
gamma 30 c 3
";

    fn scenario_toml() -> String {
        "\
[scenario]
topology = \"t.topo\"
power = \"p.power\"
initial_difficulty = 4200000
target_block_time_s = 15.0
warmup_s = 60
quiescence_timeout_s = 120

[attack]
adversary = \"b\"
vector = \"bgp-hijack\"
confirmation_depth = 2
spend_fraction = 0.6

[grid]
durations_min = [1]
delays_ms = [0, 250]
trials_per_cell = 2
master_seed = 9
"
        .to_string()
    }

    #[test]
    fn scenario_loads_and_prepares() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "t.topo", TOPO);
        write_file(dir.path(), "p.power", POWER);
        let scenario_path = write_file(dir.path(), "s.toml", &scenario_toml());
        let cfg = ScenarioConfig::load(&scenario_path).unwrap();
        assert_eq!(cfg.grid.durations_s, vec![60]);
        let prepared = cfg.prepare().unwrap();
        assert_eq!(prepared.adversary(), NodeId(1));
        let split = prepared.split().unwrap();
        assert_eq!(split.group_a.len(), 2);
        let spec = prepared.trial_spec(250, 60, 2).unwrap();
        assert_eq!(spec.attack.duration_s, 60);
        assert!(spec.plan.is_some());
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = ScenarioConfig::load(Path::new("/nonexistent/s.toml")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn bad_toml_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(dir.path(), "s.toml", "not toml [[");
        assert_eq!(ScenarioConfig::load(&p).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn as_mismatch_is_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "t.topo", TOPO);
        write_file(dir.path(), "p.power", "alpha 40 a 7\nbeta 30 b 2 adversary\ngamma 30 c 3\n");
        let p = write_file(dir.path(), "s.toml", &scenario_toml());
        let err = ScenarioConfig::load(&p).unwrap().prepare().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn peering_everywhere_is_infeasible_at_validation() {
        let dir = tempfile::tempdir().unwrap();
        let topo = TOPO.replace("asedge 1 2", "asedge 1 2 peering").replace("asedge 2 3", "asedge 2 3 peering");
        write_file(dir.path(), "t.topo", &topo);
        write_file(dir.path(), "p.power", POWER);
        let p = write_file(dir.path(), "s.toml", &scenario_toml());
        let err = ScenarioConfig::load(&p).unwrap().prepare().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("no feasible cut"), "{err}");
    }
}
