//! Slots until the Whittle-policy occupancy first comes within epsilon of the
//! relaxed fixed point, for several population sizes.

use rayon::prelude::*;
use whittle_aoi::model::{ClassSpec, NetworkConfig};
use whittle_aoi::relaxed::solve_rp;
use whittle_aoi::sim::{hitting_time_to, replication_seed, Initial};

fn main() -> whittle_aoi::Result<()> {
    let eps = 0.05;
    for age in [1, 50] {
        println!("all users start at age {age}");
        for n in [50, 200, 800, 3200] {
            let cfg = NetworkConfig::new(
                n,
                0.5,
                50,
                vec![ClassSpec::new(0.5, 0.5), ClassSpec::new(0.8, 0.5)],
            )?;
            let target = solve_rp(&cfg)?.z_star;
            let times = (0..30)
                .into_par_iter()
                .map(|r| hitting_time_to(&cfg, &target, &Initial::AllAt(age), eps, replication_seed(1, r), 1_000_000))
                .collect::<whittle_aoi::Result<Vec<_>>>()?;
            let hit: Vec<f64> = times.iter().flatten().map(|&t| t as f64).collect();
            let mean = hit.iter().sum::<f64>() / hit.len().max(1) as f64;
            let max = hit.iter().cloned().fold(0.0, f64::max);
            println!("  N = {n:>4}: {} of 30 hit, mean {mean:.1}, max {max}", hit.len());
        }
    }
    Ok(())
}
