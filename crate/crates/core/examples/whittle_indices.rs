//! Index table for a single class and the cost crossing that defines it.
//!
//! ```text
//! cargo run --example whittle_indices -- 0.3 12
//! ```

use whittle_aoi::index::{cost, indices, optimal_thresholds, stationary_distribution};

fn main() -> whittle_aoi::Result<()> {
    let mut args = std::env::args().skip(1);
    let p: f64 = args.next().map_or(0.3, |a| a.parse().expect("p"));
    let l: usize = args.next().map_or(12, |a| a.parse().expect("L"));

    let w = indices(p, l);
    println!("p = {p}, L = {l}");
    println!("{:>4} {:>12} {:>12} {:>12}", "age", "W_i", "C(i, W_i)", "C(i+1, W_i)");
    for i in 1..=l {
        let here = cost(i, w[i - 1], p, l)?.total;
        let next = cost(i + 1, w[i - 1], p, l)?.total;
        println!("{i:>4} {:>12.6} {here:>12.6} {next:>12.6}", w[i - 1]);
    }

    // At a subsidy strictly between two index values the optimal threshold is unique.
    let sub = 0.5 * (w[2] + w[3]);
    let (l1, l2) = optimal_thresholds(sub, p, l);
    let pi = stationary_distribution(l1.get(), p, l)?;
    println!("\nsubsidy {sub:.4}: thresholds ({}, {})", l1.get(), l2.get());
    println!("stationary age law under that threshold:");
    for (i, v) in pi.iter().enumerate().filter(|(_, v)| **v > 1e-4) {
        println!("  age {:>2}: {v:.4}", i + 1);
    }
    Ok(())
}
