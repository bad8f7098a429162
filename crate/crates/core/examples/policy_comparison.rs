//! Simulates every policy on one network and compares against the relaxed bound.

use whittle_aoi::model::{ClassSpec, NetworkConfig};
use whittle_aoi::relaxed::solve_rp;
use whittle_aoi::sim::{simulate_replications, Initial, PolicyKind};

fn main() -> whittle_aoi::Result<()> {
    let cfg = NetworkConfig::new(
        100,
        0.5,
        50,
        vec![ClassSpec::new(0.8, 0.5), ClassSpec::new(0.2, 0.5)],
    )?;
    let c_rp = solve_rp(&cfg)?.c_rp;
    println!("relaxed bound {c_rp:.4}");
    for name in PolicyKind::NAMES {
        let policy = PolicyKind::from_name(name, &cfg)?;
        let recs = simulate_replications(&cfg, &policy, 50_000, 42, 8, &Initial::AllAt(1))?;
        let ages: Vec<f64> = recs.iter().map(|r| r.per_user_avg_age_trimmed).collect();
        let mean = ages.iter().sum::<f64>() / ages.len() as f64;
        let sd = (ages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (ages.len() - 1) as f64).sqrt();
        println!(
            "{name:<15} {mean:.4} +- {:.4}  gap {:>6.2}%",
            sd / (ages.len() as f64).sqrt(),
            100.0 * (mean - c_rp) / c_rp
        );
    }
    Ok(())
}
