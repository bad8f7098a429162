//! Closed forms against value iteration, balance equations and the exact
//! joint MDP on a toy instance.

use whittle_aoi::cli::oracle_check;
use whittle_aoi::model::{ClassSpec, NetworkConfig};
use whittle_aoi::oracle::joint_mdp_optimal;
use whittle_aoi::relaxed::solve_rp;

fn main() -> whittle_aoi::Result<()> {
    let cfg = NetworkConfig::new(
        4,
        0.5,
        4,
        vec![ClassSpec::new(0.4, 0.5), ClassSpec::new(0.9, 0.5)],
    )?;
    let report = oracle_check(&cfg)?;
    for c in &report.checks {
        let class = c.class.map_or("all".to_string(), |k| k.to_string());
        println!(
            "{:<20} class {class:<3} {:<4} worst {:.2e} (tol {:.0e})",
            c.name,
            if c.passed { "ok" } else { "FAIL" },
            c.worst,
            c.tolerance
        );
    }

    let joint = joint_mdp_optimal(&cfg)?;
    let c_rp = solve_rp(&cfg)?.c_rp;
    println!(
        "\njoint optimum {:.6} over {} states; relaxed bound {c_rp:.6}",
        joint.avg_age_per_user, joint.states
    );
    Ok(())
}
