//! Spectral certificate for the linear region: exact characteristic
//! polynomial, closed-form factors and a dense eigensolver side by side.

use whittle_aoi::fluid::{assemble_linear, spectral_report};
use whittle_aoi::model::{ClassSpec, NetworkConfig};
use whittle_aoi::relaxed::solve_rp;

fn main() -> whittle_aoi::Result<()> {
    let configs = [
        NetworkConfig::new(100, 0.5, 50, vec![ClassSpec::new(0.5, 0.5), ClassSpec::new(0.8, 0.5)])?,
        NetworkConfig::new(100, 0.5, 50, vec![ClassSpec::new(0.8, 0.5), ClassSpec::new(0.2, 0.5)])?,
        NetworkConfig::new(
            60,
            0.25,
            30,
            vec![ClassSpec::new(0.9, 0.25), ClassSpec::new(0.5, 0.25), ClassSpec::new(0.1, 0.5)],
        )?,
    ];
    for cfg in &configs {
        let sol = solve_rp(cfg)?;
        let sys = assemble_linear(cfg, &sol)?;
        let r = spectral_report(&sys)?;
        let ps: Vec<f64> = cfg.classes.iter().map(|c| c.p).collect();
        println!("p = {ps:?}, alpha = {}, L = {}", cfg.alpha, cfg.l);
        println!("  dimension {}  thresholds {:?}  class m = {}", sys.dim(), sys.thresholds, sys.m);
        println!("  rho = {:.10}  closed form {:.10}", r.rho, r.rho_closed_form);
        println!("  polynomials match: {}  zero eigenvalues: {}", r.polynomials_match, r.zero_multiplicity);
        match r.rho_dense {
            Some(d) => println!("  dense eigensolver: {d:.10}"),
            None => println!("  dense eigensolver did not converge"),
        }
        let mut top = r.eigenvalues.clone();
        top.sort_by(|a, b| b[0].hypot(b[1]).total_cmp(&a[0].hypot(a[1])));
        for z in top.iter().take(4) {
            println!("    {:+.6} {:+.6}i", z[0], z[1]);
        }
    }
    Ok(())
}
