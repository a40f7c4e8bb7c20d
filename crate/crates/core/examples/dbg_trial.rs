use std::path::Path;

use chainsplit::analysis::run_grid;
use chainsplit::scenario::ScenarioConfig;

fn main() {
    let preset = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets/consortium-table-iii.toml");
    let mut cfg = ScenarioConfig::load(&preset).unwrap();
    cfg.grid.trials_per_cell = 200;
    cfg.grid.master_seed = 20260810;
    let prepared = cfg.prepare().unwrap();
    let t0 = std::time::Instant::now();
    let output = run_grid(&prepared, None, None).unwrap();
    eprintln!("grid done in {:?}", t0.elapsed());

    for cell in &output.cells {
        println!(
            "d={:>4} delay={:>3} m={} success={:.3} commit={:.3} minedA={:.2} minedB={:.2} growthA={:.2} growthB={:.2}",
            cell.cell.duration_s,
            cell.cell.delay_ms,
            cell.cell.m,
            cell.success_rate,
            cell.commit_rate,
            cell.mean_blocks_adversary,
            cell.mean_blocks_victim,
            cell.mean_growth_adversary,
            cell.mean_growth_victim,
        );
    }

    let avg = |delay: u64, f: &dyn Fn(&chainsplit::analysis::CellSummary) -> f64| -> f64 {
        let xs: Vec<f64> = output
            .cells
            .iter()
            .filter(|c| c.cell.delay_ms == delay && c.cell.duration_s >= 300)
            .map(f)
            .collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    println!(
        "avg >=5min: rate0={:.4} rate250={:.4} minedA0={:.3} minedA250={:.3} minedB0={:.3} minedB250={:.3}",
        avg(0, &|c| c.success_rate),
        avg(250, &|c| c.success_rate),
        avg(0, &|c| c.mean_blocks_adversary),
        avg(250, &|c| c.mean_blocks_adversary),
        avg(0, &|c| c.mean_blocks_victim),
        avg(250, &|c| c.mean_blocks_victim),
    );
}
