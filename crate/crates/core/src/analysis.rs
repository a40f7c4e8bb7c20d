//! Monte Carlo experiment harness: runs trial grids, summarizes cells with
//! Wilson intervals, projects compound double-spend gains, and emits the
//! result files.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{HeadSide, TrialResult, TrialRunner};
use crate::error::{Error, Result};
use crate::scenario::PreparedScenario;
use crate::seed::trial_seed;

/// 95% normal quantile used for all reported intervals.
pub const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub durations_s: Vec<u64>,
    pub delays_ms: Vec<u64>,
    pub m_values: Vec<u32>,
    pub trials_per_cell: u32,
    pub master_seed: u64,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.durations_s.is_empty() || self.delays_ms.is_empty() || self.m_values.is_empty() {
            return Err(Error::validation("experiment grid has an empty axis"));
        }
        if self.trials_per_cell < 1 {
            return Err(Error::validation("trials per cell must be at least 1"));
        }
        Ok(())
    }

    /// Cells in emission order: by m, then delay, then duration.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for m in &self.m_values {
            for delay in &self.delays_ms {
                for duration in &self.durations_s {
                    out.push(CellKey { duration_s: *duration, delay_ms: *delay, m: *m });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellKey {
    pub duration_s: u64,
    pub delay_ms: u64,
    pub m: u32,
}

/// One trial's structured record, one JSON line in `trials/trials.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub duration_s: u64,
    pub delay_ms: u64,
    pub m: u32,
    pub trial: u32,
    pub seed: u64,
    pub success: bool,
    pub victim_committed: bool,
    pub victim_commit_time_s: Option<u64>,
    pub blocks_adversary_side: u64,
    pub blocks_victim_side: u64,
    pub chain_growth_adversary: u64,
    pub chain_growth_victim: u64,
    pub final_head_side: HeadSide,
    pub final_difficulty_victim: u64,
    pub total_blocks_mined: u64,
    pub stale_blocks: u64,
    pub difficulty_series: Vec<(u64, u64)>,
}

impl TrialRecord {
    fn from_result(cell: CellKey, trial: u32, seed: u64, r: TrialResult) -> Self {
        TrialRecord {
            duration_s: cell.duration_s,
            delay_ms: cell.delay_ms,
            m: cell.m,
            trial,
            seed,
            success: r.success,
            victim_committed: r.victim_committed,
            victim_commit_time_s: r.victim_commit_time_s,
            blocks_adversary_side: r.blocks_adversary_side,
            blocks_victim_side: r.blocks_victim_side,
            chain_growth_adversary: r.chain_growth_adversary,
            chain_growth_victim: r.chain_growth_victim,
            final_head_side: r.final_head_side,
            final_difficulty_victim: r.final_difficulty_victim,
            total_blocks_mined: r.total_blocks_mined,
            stale_blocks: r.stale_blocks,
            difficulty_series: r.difficulty_series,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: CellKey,
    pub trials: u32,
    pub successes: u32,
    pub success_rate: f64,
    pub commit_rate: f64,
    pub mean_blocks_adversary: f64,
    pub mean_blocks_victim: f64,
    pub mean_growth_adversary: f64,
    pub mean_growth_victim: f64,
    /// Wilson 95% interval on the success rate.
    pub wilson_low: f64,
    pub wilson_high: f64,
}

/// Wilson score interval; always contains the point estimate.
pub fn wilson_interval(successes: u32, trials: u32, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn summarize(cell: CellKey, records: &[TrialRecord]) -> CellSummary {
    let n = records.len() as u32;
    let successes = records.iter().filter(|r| r.success).count() as u32;
    let commits = records.iter().filter(|r| r.victim_committed).count() as u32;
    let mean = |f: &dyn Fn(&TrialRecord) -> u64| -> f64 {
        records.iter().map(|r| f(r) as f64).sum::<f64>() / n.max(1) as f64
    };
    let (wilson_low, wilson_high) = wilson_interval(successes, n, Z_95);
    CellSummary {
        cell,
        trials: n,
        successes,
        success_rate: successes as f64 / n.max(1) as f64,
        commit_rate: commits as f64 / n.max(1) as f64,
        mean_blocks_adversary: mean(&|r| r.blocks_adversary_side),
        mean_blocks_victim: mean(&|r| r.blocks_victim_side),
        mean_growth_adversary: mean(&|r| r.chain_growth_adversary),
        mean_growth_victim: mean(&|r| r.chain_growth_victim),
        wilson_low,
        wilson_high,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOutput {
    pub cells: Vec<CellSummary>,
    pub trials: Vec<TrialRecord>,
}

/// Runs every cell of the scenario's grid. Trials are independent and may
/// run on any number of threads; records are assembled in (cell, trial)
/// order, so the output is identical at any parallelism degree.
///
/// Per-trial seeds depend on the master seed, the attack duration and the
/// trial index; delay rows and confirmation-depth variants of a cell run on
/// common random numbers by construction.
///
/// With `trace_dir` set, each trial's event trace is written there as
/// `trace-d<duration>-l<delay>-m<m>-t<trial>.log`.
pub fn run_grid(
    scenario: &PreparedScenario,
    parallelism: Option<usize>,
    trace_dir: Option<&Path>,
) -> Result<GridOutput> {
    let grid = scenario.grid();
    grid.validate()?;
    let cells = grid.cells();
    let trials_per_cell = grid.trials_per_cell;
    let master = grid.master_seed;
    if let Some(dir) = trace_dir {
        fs::create_dir_all(dir)?;
    }

    let jobs: Vec<(usize, u32)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| (0..trials_per_cell).map(move |t| (ci, t)))
        .collect();

    let run_all = || -> std::result::Result<Vec<TrialRecord>, String> {
        jobs.par_iter()
            .map(|(ci, trial)| {
                let cell = cells[*ci];
                let seed = trial_seed(master, cell.duration_s, *trial);
                let spec = scenario
                    .trial_spec(cell.delay_ms, cell.duration_s, cell.m)
                    .map_err(|e| format!("cell {cell:?}: {e}"))?;
                let mut runner =
                    TrialRunner::new(spec, seed).map_err(|e| format!("cell {cell:?}: {e}"))?;
                if trace_dir.is_some() {
                    runner.enable_trace();
                }
                let (result, mut kept) = runner.run_keep();
                if let Some(dir) = trace_dir {
                    let name = format!(
                        "trace-d{}-l{}-m{}-t{}.log",
                        cell.duration_s, cell.delay_ms, cell.m, trial
                    );
                    let mut body = kept.take_trace().join("\n");
                    body.push('\n');
                    fs::write(dir.join(name), body).map_err(|e| format!("trace: {e}"))?;
                }
                Ok(TrialRecord::from_result(cell, *trial, seed, result))
            })
            .collect()
    };

    let records: Vec<TrialRecord> = match parallelism {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::validation(format!("thread pool: {e}")))?
            .install(run_all),
        None => run_all(),
    }
    .map_err(Error::Validation)?;

    let summaries: Vec<CellSummary> = cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let start = ci * trials_per_cell as usize;
            summarize(*cell, &records[start..start + trials_per_cell as usize])
        })
        .collect();

    Ok(GridOutput { cells: summaries, trials: records })
}

/// Compound gain of repeating the attack: each attempt stakes a third of the
/// balance and wins or loses it with probability `p`, giving
/// `y(t) = (1 + (2p - 1)/3)^(t/T) * y0`. Integral horizons take the exact
/// integer-power path so the discrete and continuous forms agree exactly.
pub fn project_gain(p: f64, attack_duration_s: f64, horizon_s: f64, initial_fund: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("success probability {p} outside [0, 1]")));
    }
    if !(attack_duration_s > 0.0) {
        return Err(Error::validation("attack duration must be positive"));
    }
    if horizon_s < 0.0 {
        return Err(Error::validation("horizon must be non-negative"));
    }
    if !(initial_fund > 0.0) {
        return Err(Error::validation("initial fund must be positive"));
    }
    let base = 1.0 + (2.0 * p - 1.0) / 3.0;
    let exponent = horizon_s / attack_duration_s;
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        Ok(base.powi(exponent as i32) * initial_fund)
    } else {
        Ok(base.powf(exponent) * initial_fund)
    }
}

/// Gain after a whole number of attempts: `y_i = (1 + (2p - 1)/3)^i * y0`.
pub fn project_gain_discrete(p: f64, attempts: u32, initial_fund: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("success probability {p} outside [0, 1]")));
    }
    if !(initial_fund > 0.0) {
        return Err(Error::validation("initial fund must be positive"));
    }
    let base = 1.0 + (2.0 * p - 1.0) / 3.0;
    Ok(base.powi(attempts as i32) * initial_fund)
}

fn duration_label(duration_s: u64) -> String {
    if duration_s % 60 == 0 {
        format!("{}", duration_s / 60)
    } else {
        format!("{duration_s}s")
    }
}

/// Writes the output directory layout:
///
/// ```text
/// tables/success_rate.tsv   rows = delay, columns = duration (min), one
///                           block per confirmation depth
/// tables/cells.tsv          full per-cell summary
/// trials/trials.jsonl       one structured record per trial
/// plotdata/block_counts.tsv duration vs mean canonical growth per side,
///                           with the confirmation-depth reference line
/// ```
pub fn emit_results(out_dir: &Path, output: &GridOutput) -> Result<()> {
    let tables = out_dir.join("tables");
    let trials = out_dir.join("trials");
    let plotdata = out_dir.join("plotdata");
    for dir in [&tables, &trials, &plotdata] {
        fs::create_dir_all(dir)?;
    }

    let mut durations: Vec<u64> = output.cells.iter().map(|c| c.cell.duration_s).collect();
    durations.sort_unstable();
    durations.dedup();
    let mut delays: Vec<u64> = output.cells.iter().map(|c| c.cell.delay_ms).collect();
    delays.sort_unstable();
    delays.dedup();
    let mut ms: Vec<u32> = output.cells.iter().map(|c| c.cell.m).collect();
    ms.sort_unstable();
    ms.dedup();

    let lookup = |duration: u64, delay: u64, m: u32| -> Option<&CellSummary> {
        output.cells.iter().find(|c| {
            c.cell.duration_s == duration && c.cell.delay_ms == delay && c.cell.m == m
        })
    };

    let mut table = String::new();
    for m in &ms {
        table.push_str(&format!("# success rate (%), m = {m}, columns = attack duration (min)\n"));
        table.push_str("delay_ms");
        for d in &durations {
            table.push_str(&format!("\t{}", duration_label(*d)));
        }
        table.push('\n');
        for delay in &delays {
            table.push_str(&format!("{delay}"));
            for d in &durations {
                match lookup(*d, *delay, *m) {
                    Some(cell) => table.push_str(&format!("\t{:.1}", 100.0 * cell.success_rate)),
                    None => table.push_str("\t-"),
                }
            }
            table.push('\n');
        }
    }
    fs::write(tables.join("success_rate.tsv"), table)?;

    let mut cells_tsv = String::from(
        "duration_s\tdelay_ms\tm\ttrials\tsuccesses\tsuccess_rate\twilson_low\twilson_high\tcommit_rate\tmean_blocks_adversary\tmean_blocks_victim\tmean_growth_adversary\tmean_growth_victim\n",
    );
    for c in &output.cells {
        cells_tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\n",
            c.cell.duration_s,
            c.cell.delay_ms,
            c.cell.m,
            c.trials,
            c.successes,
            c.success_rate,
            c.wilson_low,
            c.wilson_high,
            c.commit_rate,
            c.mean_blocks_adversary,
            c.mean_blocks_victim,
            c.mean_growth_adversary,
            c.mean_growth_victim,
        ));
    }
    fs::write(tables.join("cells.tsv"), cells_tsv)?;

    let mut jsonl = fs::File::create(trials.join("trials.jsonl"))?;
    for record in &output.trials {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::validation(format!("serialize trial record: {e}")))?;
        jsonl.write_all(line.as_bytes())?;
        jsonl.write_all(b"\n")?;
    }

    let mut plot = String::from(
        "duration_s\tdelay_ms\tm\tmean_growth_adversary\tmean_growth_victim\tconfirmation_baseline\n",
    );
    for c in &output.cells {
        plot.push_str(&format!(
            "{}\t{}\t{}\t{:.3}\t{:.3}\t{}\n",
            c.cell.duration_s,
            c.cell.delay_ms,
            c.cell.m,
            c.mean_growth_adversary,
            c.mean_growth_victim,
            c.cell.m,
        ));
    }
    fs::write(plotdata.join("block_counts.tsv"), plot)?;
    Ok(())
}

/// Reads back `trials/trials.jsonl`.
pub fn read_trial_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::parse(format!("trial record: {e}")))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn gain_is_flat_at_even_odds() {
        for t in [0.0, 540.0, 36_000.0] {
            assert_eq!(project_gain(0.5, 540.0, t, 1.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn losing_one_attempt_costs_a_third() {
        let y = project_gain(0.0, 540.0, 540.0, 1.0).unwrap();
        assert!((y - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn published_sixty_seven_attempt_projection() {
        let y = project_gain_discrete(0.8, 67, 1.0).unwrap();
        assert!(y > 201_900.0 && y < 201_910.0, "y = {y}");
    }

    #[test]
    fn discrete_and_continuous_agree_exactly_on_integers() {
        for i in 0..=80u32 {
            let cont = project_gain(0.8, 540.0, 540.0 * i as f64, 1.0).unwrap();
            let disc = project_gain_discrete(0.8, i, 1.0).unwrap();
            assert_eq!(cont.to_bits(), disc.to_bits(), "attempt {i}");
        }
    }

    #[test]
    fn gain_monotone_in_success_probability() {
        let mut prev = 0.0;
        for i in 0..=10 {
            let p = i as f64 / 10.0;
            let y = project_gain(p, 540.0, 36_000.0, 1.0).unwrap();
            assert!(y > prev || i == 0);
            prev = y;
        }
        assert_eq!(project_gain(0.5, 540.0, 36_000.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn gain_rejects_bad_arguments() {
        assert!(project_gain(1.5, 540.0, 0.0, 1.0).is_err());
        assert!(project_gain(0.5, 0.0, 0.0, 1.0).is_err());
        assert!(project_gain(0.5, 540.0, -1.0, 1.0).is_err());
        assert!(project_gain(0.5, 540.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn wilson_contains_point_estimate() {
        for (s, n) in [(0u32, 1u32), (1, 1), (3, 30), (77, 100), (200, 200)] {
            let p = s as f64 / n as f64;
            let (lo, hi) = wilson_interval(s, n, Z_95);
            assert!(lo <= p && p <= hi, "s={s} n={n}");
            assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }

    #[test]
    fn wilson_with_one_trial_spans_most_of_the_unit_interval() {
        let (lo, hi) = wilson_interval(0, 1, Z_95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.5);
        let (lo1, hi1) = wilson_interval(1, 1, Z_95);
        assert!(lo1 < 0.5);
        assert_eq!(hi1, 1.0);
    }

    #[test]
    fn wilson_coverage_on_known_generator() {
        // Synthetic success generator with known probability; the 95%
        // interval must cover it at least 93% of the time.
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        let q = 0.55;
        let n = 60u32;
        let repetitions = 200;
        let mut covered = 0;
        for _ in 0..repetitions {
            let successes = (0..n).filter(|_| rng.gen::<f64>() < q).count() as u32;
            let (lo, hi) = wilson_interval(successes, n, Z_95);
            if lo <= q && q <= hi {
                covered += 1;
            }
        }
        assert!(covered >= 186, "covered {covered}/200");
    }
}
