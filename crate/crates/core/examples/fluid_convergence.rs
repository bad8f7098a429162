//! Iterates the fluid map from an extreme start and from a point near the
//! fixed point, printing the distance to `z*` as it shrinks.

use whittle_aoi::fluid::{assemble_linear, fluid_trajectory, shrink_into_region, spectral_radius};
use whittle_aoi::model::{ClassSpec, NetworkConfig, OccupancyVector};
use whittle_aoi::relaxed::solve_rp;

fn main() -> whittle_aoi::Result<()> {
    let cfg = NetworkConfig::new(
        100,
        0.5,
        50,
        vec![ClassSpec::new(0.5, 0.5), ClassSpec::new(0.8, 0.5)],
    )?;
    let sol = solve_rp(&cfg)?;
    let rho = spectral_radius(&assemble_linear(&cfg, &sol)?)?;
    println!("spectral radius of the linear region: {rho:.6}");

    let oldest = OccupancyVector::concentrated(&cfg, cfg.l);
    let tr = fluid_trajectory(&oldest, 200, &cfg, &sol);
    let entered = tr.points.iter().find(|p| p.in_region).map(|p| p.t);
    println!("\nfrom all users at age {}: enters the linear region at t = {entered:?}", cfg.l);
    for p in tr.points.iter().step_by(20) {
        println!("  t = {:>3}  distance {:.3e}  in region {}", p.t, p.dist_to_zstar, p.in_region);
    }

    let mid = OccupancyVector::concentrated(&cfg, 3);
    if let Some((s, z0)) = shrink_into_region(&mid, &cfg, &sol, 0.5) {
        let tr = fluid_trajectory(&z0, 10 * cfg.l, &cfg, &sol);
        println!("\nperturbation of weight {s:.4} towards age 3:");
        println!("  below 1e-8 after {:?} steps", tr.first_below(1e-8));
        println!("  tail contraction {:?} (rho {rho:.4})", tr.tail_contraction);
        println!("  stayed in region: {}", tr.always_in_region());
    }
    Ok(())
}
