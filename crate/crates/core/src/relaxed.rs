//! The relaxed problem, where the scheduling budget only has to hold on average.
//!
//! With a common subsidy `W` every user runs its optimal threshold policy, so the
//! scheduled fraction is a step function of `W` that can only change at index
//! values. Sweeping those values in ascending order finds the critical subsidy
//! `W*`, the critical class `m` and the mixing probability `theta*` between the
//! two optimal thresholds of class `m` that spend the budget exactly.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::index::{
    age_cost, indices, optimal_thresholds, same_index, scheduled_mass, stationary_distribution,
    Threshold,
};
use crate::model::{NetworkConfig, OccupancyVector};

#[derive(Debug, Clone, Serialize)]
pub struct RelaxedSolution {
    pub w_star: f64,
    /// Critical class (0-based).
    pub m: usize,
    /// Probability of running the lower threshold `l2` in class `m`.
    pub theta_star: f64,
    /// Per class `(l1, l2)`. Only class `m` can have `l1 != l2`.
    pub thresholds: Vec<(Threshold, Threshold)>,
    pub z_star: OccupancyVector,
    /// Per-user average age of the relaxed optimum.
    pub c_rp: f64,
}

impl RelaxedSolution {
    /// Threshold used for class `k` in the linear region: `l2` for class `m`,
    /// the common threshold otherwise.
    pub fn linear_threshold(&self, k: usize) -> Threshold {
        self.thresholds[k].1
    }
}

/// Long-run fraction of users scheduled when class `k` runs `thresholds[k]`.
pub fn scheduled_fraction(thresholds: &[Threshold], cfg: &NetworkConfig) -> Result<f64> {
    if thresholds.len() != cfg.num_classes() {
        return Err(Error::Shape(format!(
            "{} thresholds for {} classes",
            thresholds.len(),
            cfg.num_classes()
        )));
    }
    thresholds
        .iter()
        .zip(&cfg.classes)
        .map(|(t, c)| Ok(c.gamma * scheduled_mass(t.get(), c.p, cfg.l)?))
        .sum()
}

struct Candidate {
    w: f64,
    class: usize,
}

/// Solves the relaxed problem by sweeping the subsidy over all index values.
///
/// When several classes share the critical index value they are moved from
/// `l2` to `l1` one at a time in class order, and the first class whose move
/// brackets `alpha` becomes `m`; classes before it keep `l1`, later ones `l2`.
pub fn solve_rp(cfg: &NetworkConfig) -> Result<RelaxedSolution> {
    let l = cfg.l;
    let alpha = cfg.alpha;
    let mut candidates: Vec<Candidate> = cfg
        .classes
        .iter()
        .enumerate()
        .flat_map(|(class, c)| indices(c.p, l).into_iter().map(move |w| Candidate { w, class }))
        .collect();
    candidates.sort_by(|a, b| a.w.total_cmp(&b.w).then(a.class.cmp(&b.class)));

    let mut start = 0;
    while start < candidates.len() {
        let w = candidates[start].w;
        let mut end = start + 1;
        while end < candidates.len() && same_index(candidates[end].w, w) {
            end += 1;
        }
        let mut tied: Vec<usize> = candidates[start..end].iter().map(|c| c.class).collect();
        tied.dedup();
        start = end;

        let pairs: Vec<(Threshold, Threshold)> = cfg
            .classes
            .iter()
            .map(|c| optimal_thresholds(w, c.p, l))
            .collect();
        let mut current: Vec<Threshold> = pairs.iter().map(|p| p.1).collect();
        for &k in &tied {
            let upper = scheduled_fraction(&current, cfg)?;
            current[k] = pairs[k].0;
            let lower = scheduled_fraction(&current, cfg)?;
            if lower <= alpha && alpha <= upper {
                let theta_star = if upper > lower {
                    ((alpha - lower) / (upper - lower)).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let thresholds = current
                    .iter()
                    .enumerate()
                    .map(|(h, &t)| if h == k { pairs[k] } else { (t, t) })
                    .collect();
                return finish(cfg, w, k, theta_star, thresholds);
            }
        }
    }
    Err(Error::Infeasible { alpha })
}

fn finish(
    cfg: &NetworkConfig,
    w_star: f64,
    m: usize,
    theta_star: f64,
    thresholds: Vec<(Threshold, Threshold)>,
) -> Result<RelaxedSolution> {
    let mut c_rp = 0.0;
    for (k, (c, &(l1, l2))) in cfg.classes.iter().zip(&thresholds).enumerate() {
        let cost1 = age_cost(l1.get(), c.p, cfg.l)?;
        c_rp += c.gamma
            * if k == m {
                theta_star * age_cost(l2.get(), c.p, cfg.l)? + (1.0 - theta_star) * cost1
            } else {
                cost1
            };
    }
    let mut sol = RelaxedSolution {
        w_star,
        m,
        theta_star,
        thresholds,
        z_star: OccupancyVector::zeros(cfg.num_classes(), cfg.l),
        c_rp,
    };
    sol.z_star = rp_fixed_point(&sol, cfg)?;
    Ok(sol)
}

/// Occupancy reached when every class runs its relaxed-optimal policy.
pub fn rp_fixed_point(sol: &RelaxedSolution, cfg: &NetworkConfig) -> Result<OccupancyVector> {
    let mut z = OccupancyVector::zeros(cfg.num_classes(), cfg.l);
    for (k, (c, &(l1, l2))) in cfg.classes.iter().zip(&sol.thresholds).enumerate() {
        let u1 = stationary_distribution(l1.get(), c.p, cfg.l)?;
        let row = z.row_mut(k);
        if k == sol.m {
            let u2 = stationary_distribution(l2.get(), c.p, cfg.l)?;
            for (cell, (a, b)) in row.iter_mut().zip(u1.iter().zip(&u2)) {
                *cell = c.gamma * (sol.theta_star * b + (1.0 - sol.theta_star) * a);
            }
        } else {
            for (cell, a) in row.iter_mut().zip(&u1) {
                *cell = c.gamma * a;
            }
        }
    }
    Ok(z)
}

/// Scheduled fraction actually spent by the solution, mixing class `m`.
pub fn solution_budget(sol: &RelaxedSolution, cfg: &NetworkConfig) -> Result<f64> {
    let mut total = 0.0;
    for (k, (c, &(l1, l2))) in cfg.classes.iter().zip(&sol.thresholds).enumerate() {
        let a1 = scheduled_mass(l1.get(), c.p, cfg.l)?;
        total += c.gamma
            * if k == sol.m {
                sol.theta_star * scheduled_mass(l2.get(), c.p, cfg.l)? + (1.0 - sol.theta_star) * a1
            } else {
                a1
            };
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize)]
pub struct RelaxedReport {
    pub w_star: f64,
    pub m: usize,
    pub theta_star: f64,
    pub thresholds: Vec<[usize; 2]>,
    pub c_rp: f64,
    pub z_star: Vec<Vec<f64>>,
}

impl From<&RelaxedSolution> for RelaxedReport {
    fn from(sol: &RelaxedSolution) -> Self {
        Self {
            w_star: sol.w_star,
            m: sol.m,
            theta_star: sol.theta_star,
            thresholds: sol.thresholds.iter().map(|(a, b)| [a.get(), b.get()]).collect(),
            c_rp: sol.c_rp,
            z_star: sol.z_star.rows(),
        }
    }
}
