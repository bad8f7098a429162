//! Solves the relaxed problem: critical index, randomized class, thresholds
//! and the per-user lower bound on average age.

use whittle_aoi::model::{ClassSpec, NetworkConfig};
use whittle_aoi::relaxed::{solution_budget, solve_rp};

fn main() -> whittle_aoi::Result<()> {
    let cfg = NetworkConfig::new(
        100,
        0.3,
        40,
        vec![
            ClassSpec::new(0.9, 0.2),
            ClassSpec::new(0.6, 0.3),
            ClassSpec::new(0.25, 0.5),
        ],
    )?;
    let sol = solve_rp(&cfg)?;

    println!("W*      = {:.6}", sol.w_star);
    println!("class m = {} (uses l2 with probability {:.4})", sol.m, sol.theta_star);
    for (k, (l1, l2)) in sol.thresholds.iter().enumerate() {
        println!("class {k}: thresholds ({}, {})", l1.get(), l2.get());
    }
    println!("budget used = {:.6} of {}", solution_budget(&sol, &cfg)?, cfg.alpha);
    println!("c_rp    = {:.6}", sol.c_rp);

    for k in 0..cfg.num_classes() {
        let row = sol.z_star.row(k);
        let mass = sol.z_star.class_mass(k);
        let mean = row.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum::<f64>() / mass;
        let support = row.iter().rposition(|&v| v > 1e-12).map_or(0, |i| i + 1);
        println!("z*[{k}]: mass {mass:.3}, mean age {mean:.3}, support 1..={support}");
    }
    Ok(())
}
