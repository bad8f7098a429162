//! Largest distance between the simulated occupancy and the fluid trajectory
//! over a fixed horizon, as the population grows.

use whittle_aoi::model::{ClassSpec, NetworkConfig};
use whittle_aoi::relaxed::solve_rp;
use whittle_aoi::sim::{fluid_deviation, replication_seed, Initial};

fn main() -> whittle_aoi::Result<()> {
    for n in [50, 100, 400, 1000, 4000] {
        let cfg = NetworkConfig::new(
            n,
            0.5,
            50,
            vec![ClassSpec::new(0.5, 0.5), ClassSpec::new(0.8, 0.5)],
        )?;
        let initial = Initial::Occupancy(solve_rp(&cfg)?.z_star);
        let mut devs = (0..20)
            .map(|r| fluid_deviation(&cfg, 100, replication_seed(3, r), &initial))
            .collect::<whittle_aoi::Result<Vec<_>>>()?;
        devs.sort_by(f64::total_cmp);
        println!(
            "N = {n:>4}: median sup deviation {:.4}  (sqrt(N) x median = {:.3})",
            devs[10],
            (n as f64).sqrt() * devs[10]
        );
    }
    Ok(())
}
