//! Cross-checks of the closed forms against brute-force oracles for one instance.

use serde::Serialize;

use crate::error::Result;
use crate::index::{cost, index_gap, indices, optimal_thresholds, stationary_distribution};
use crate::model::NetworkConfig;
use crate::oracle::{joint_mdp_optimal, rvi_one_dim, stationary_by_balance, JOINT_STATE_CAP};
use crate::relaxed::solve_rp;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub class: Option<usize>,
    pub passed: bool,
    /// Largest observed violation measure (0 when exact).
    pub worst: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn check(name: &str, class: Option<usize>, worst: f64, tolerance: f64) -> Check {
    Check {
        name: name.to_string(),
        class,
        passed: worst <= tolerance,
        worst,
        tolerance,
    }
}

/// Subsidies probed by the value-iteration check: every index value and the
/// midpoints between consecutive ones, plus a point past the largest.
fn probe_subsidies(w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    for pair in w.windows(2) {
        out.push(pair[0]);
        out.push(0.5 * (pair[0] + pair[1]));
    }
    if let Some(&last) = w.last() {
        out.push(last);
        out.push(last + 1.0);
    }
    out
}

pub fn oracle_check(cfg: &NetworkConfig) -> Result<OracleReport> {
    let l = cfg.l;
    let mut checks = Vec::new();
    for (k, c) in cfg.classes.iter().enumerate() {
        let p = c.p;
        let w = indices(p, l);

        let mut crossing: f64 = 0.0;
        for i in 1..l {
            let a = cost(i, w[i - 1], p, l)?.total;
            let b = cost(i + 1, w[i - 1], p, l)?.total;
            crossing = crossing.max((a - b).abs());
        }
        checks.push(check("index_crossing", Some(k), crossing, 1e-9));

        let mut gap: f64 = 0.0;
        for i in 1..l {
            gap = gap.max(-index_gap(i, p, l)?);
        }
        checks.push(check("index_monotone", Some(k), gap, 1e-12));

        let mut stationary: f64 = 0.0;
        for n in 1..=l + 1 {
            let closed = stationary_distribution(n, p, l)?;
            let solved = stationary_by_balance(n, p, l)?;
            for (a, b) in closed.iter().zip(&solved) {
                stationary = stationary.max((a - b).abs());
            }
        }
        checks.push(check("stationary_balance", Some(k), stationary, 1e-10));

        let mut rvi_cost: f64 = 0.0;
        let mut rvi_policy = 0.0;
        for sub in probe_subsidies(&w) {
            let r = rvi_one_dim(p, l, sub)?;
            let (l1, l2) = optimal_thresholds(sub, p, l);
            match r.threshold() {
                Some(t) if t == l1.get() || t == l2.get() => {}
                _ => rvi_policy = 1.0,
            }
            let best = (1..=l + 1)
                .map(|n| cost(n, sub, p, l).map(|c| c.total))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            rvi_cost = rvi_cost.max((r.avg_cost - best).abs());
        }
        checks.push(check("rvi_threshold", Some(k), rvi_policy, 0.0));
        checks.push(check("rvi_average_cost", Some(k), rvi_cost, 1e-6));
    }

    let states = (l as f64).powi(cfg.n as i32);
    if states <= JOINT_STATE_CAP as f64 {
        let sol = solve_rp(cfg)?;
        let joint = joint_mdp_optimal(cfg)?;
        checks.push(check(
            "relaxed_lower_bound",
            None,
            (sol.c_rp - joint.avg_age_per_user).max(0.0),
            1e-9,
        ));
    }

    Ok(OracleReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}
