//! Sweeps the population size and writes experiment rows plus a summary.
//!
//! ```text
//! cargo run --release --example gap_sweep -- target/gap.csv
//! ```

use whittle_aoi::cli::{run_experiment, ExperimentSpec, InitialSpec};
use whittle_aoi::model::{ClassSpec, NetworkConfig};

fn main() -> whittle_aoi::Result<()> {
    let out = std::env::args().nth(1).map(Into::into);
    let spec = ExperimentSpec {
        base: NetworkConfig::new(
            20,
            0.5,
            50,
            vec![ClassSpec::new(0.8, 0.5), ClassSpec::new(0.2, 0.5)],
        )?,
        n_sweep: vec![20, 40, 80, 160, 320],
        policies: vec!["whittle".into(), "greedy_max_age".into()],
        replications: 5,
        horizon: 50_000,
        master_seed: 2,
        epsilon: None,
        initial: InitialSpec::AllAt(1),
        out,
    };
    let result = run_experiment(&spec)?;
    println!("{:>5} {:<15} {:>9} {:>10} {:>9}", "N", "policy", "c_rp", "avg age", "gap %");
    for s in &result.summary {
        println!(
            "{:>5} {:<15} {:>9.4} {:>10.4} {:>9.3}",
            s.n,
            s.policy,
            s.c_rp,
            s.mean_avg_age,
            100.0 * s.mean_rel_gap
        );
    }
    if let Some(path) = &result.csv_path {
        println!("rows written to {}", path.display());
    }
    Ok(())
}
