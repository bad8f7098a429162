//! Deterministic fluid limit of the occupancy under the Whittle index policy.
//!
//! Each slot the budget `alpha` is handed out to occupancy cells in decreasing
//! index order, and cells sharing an index value split what is left in
//! proportion to their mass. Near the relaxed fixed point the map is affine
//! (see [`linear`]) and its contraction is certified in [`spectral`].

pub mod charpoly;
pub mod linear;
pub mod spectral;

use serde::Serialize;

use crate::index::{indices, same_index};
use crate::model::{NetworkConfig, OccupancyVector};
use crate::relaxed::RelaxedSolution;

pub use linear::{assemble_linear, LinearRegionSystem};
pub use spectral::{spectral_radius, spectral_report, SpectralReport};

/// Tolerance used when deciding membership of the linear region.
pub const REGION_TOL: f64 = 1e-12;

/// The fluid map of one instance with its index order precomputed.
#[derive(Debug, Clone)]
pub struct FluidMap {
    l: usize,
    alpha: f64,
    p: Vec<f64>,
    /// Flat cell positions, decreasing index then increasing class and age.
    order: Vec<usize>,
    /// Boundaries of tie groups inside `order`.
    groups: Vec<std::ops::Range<usize>>,
}

impl FluidMap {
    pub fn new(cfg: &NetworkConfig) -> Self {
        let l = cfg.l;
        let w: Vec<f64> = cfg.classes.iter().flat_map(|c| indices(c.p, l)).collect();
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
        let mut groups = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let head = w[order[start]];
            let mut end = start + 1;
            while end < order.len() && same_index(w[order[end]], head) {
                end += 1;
            }
            groups.push(start..end);
            start = end;
        }
        Self {
            l,
            alpha: cfg.alpha,
            p: cfg.classes.iter().map(|c| c.p).collect(),
            order,
            groups,
        }
    }

    /// Fraction of each cell's mass that is scheduled (0 for empty cells).
    pub fn selection(&self, z: &OccupancyVector) -> Vec<f64> {
        let cells = z.as_flat();
        let mut share = vec![0.0; cells.len()];
        let mut budget = self.alpha;
        for g in &self.groups {
            let members = &self.order[g.clone()];
            let mass: f64 = members.iter().map(|&c| cells[c]).sum();
            if mass <= 0.0 {
                continue;
            }
            let s = (budget / mass).min(1.0);
            for &c in members {
                if cells[c] > 0.0 {
                    share[c] = s;
                }
            }
            budget = (budget - mass).max(0.0);
        }
        share
    }

    pub fn step(&self, z: &OccupancyVector) -> OccupancyVector {
        let share = self.selection(z);
        let l = self.l;
        let mut next = OccupancyVector::zeros(self.p.len(), l);
        for (k, &p) in self.p.iter().enumerate() {
            let row = z.row(k);
            let s = &share[k * l..(k + 1) * l];
            let out = next.row_mut(k);
            for i in 0..l {
                let moved = p * s[i] * row[i];
                out[0] += moved;
                out[(i + 1).min(l - 1)] += row[i] - moved;
            }
        }
        next
    }
}

/// One application of the fluid map.
pub fn fluid_step(z: &OccupancyVector, cfg: &NetworkConfig) -> OccupancyVector {
    FluidMap::new(cfg).step(z)
}

/// Masses strictly above and exactly at the critical index `W*`.
pub fn critical_masses(z: &OccupancyVector, cfg: &NetworkConfig, sol: &RelaxedSolution) -> (f64, f64) {
    let mut above = 0.0;
    let mut at = 0.0;
    for (k, c) in cfg.classes.iter().enumerate() {
        for (w, mass) in indices(c.p, cfg.l).into_iter().zip(z.row(k)) {
            if same_index(w, sol.w_star) {
                at += mass;
            } else if w > sol.w_star {
                above += mass;
            }
        }
    }
    (above, at)
}

/// Membership of the (closed) region where the budget runs out inside the
/// critical index level.
pub fn in_region(z: &OccupancyVector, cfg: &NetworkConfig, sol: &RelaxedSolution) -> bool {
    let (above, at) = critical_masses(z, cfg, sol);
    above <= cfg.alpha + REGION_TOL && cfg.alpha <= above + at + REGION_TOL
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub dist_to_zstar: f64,
    pub in_region: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub final_state: OccupancyVector,
    /// Geometric mean ratio of successive distances over the tail, if enough
    /// nonzero distances were observed.
    pub tail_contraction: Option<f64>,
}

impl Trajectory {
    pub fn distances(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.dist_to_zstar)
    }

    pub fn always_in_region(&self) -> bool {
        self.points.iter().all(|p| p.in_region)
    }

    /// First step at which the distance drops below `tol`.
    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.points.iter().find(|p| p.dist_to_zstar < tol).map(|p| p.t)
    }
}

/// Distances below this are treated as converged when estimating the tail rate.
const TAIL_FLOOR: f64 = 1e-13;

/// Iterates the fluid map `steps` times from `z0`, recording `t = 0..=steps`.
pub fn fluid_trajectory(
    z0: &OccupancyVector,
    steps: usize,
    cfg: &NetworkConfig,
    sol: &RelaxedSolution,
) -> Trajectory {
    let map = FluidMap::new(cfg);
    let mut z = z0.clone();
    let mut points = Vec::with_capacity(steps + 1);
    for t in 0..=steps {
        points.push(TrajectoryPoint {
            t,
            dist_to_zstar: z.distance(&sol.z_star),
            in_region: in_region(&z, cfg, sol),
        });
        if t < steps {
            z = map.step(&z);
        }
    }
    let live: Vec<f64> = points
        .iter()
        .map(|p| p.dist_to_zstar)
        .take_while(|&d| d > TAIL_FLOOR)
        .collect();
    let tail_contraction = if live.len() >= 3 {
        let from = live.len() / 2;
        let to = live.len() - 1;
        (to > from).then(|| (live[to] / live[from]).powf(1.0 / (to - from) as f64))
    } else {
        None
    };
    Trajectory {
        points,
        final_state: z,
        tail_contraction,
    }
}

/// Pulls `z` towards `z*` until it lies in the linear region, returning the
/// mixing weight used (`z0 = (1 - s) z* + s z`), or `None` if even tiny steps
/// leave the region.
pub fn shrink_into_region(
    z: &OccupancyVector,
    cfg: &NetworkConfig,
    sol: &RelaxedSolution,
    start: f64,
) -> Option<(f64, OccupancyVector)> {
    let mut s = start;
    while s > 1e-9 {
        let cells = z
            .as_flat()
            .iter()
            .zip(sol.z_star.as_flat())
            .map(|(a, b)| (1.0 - s) * b + s * a)
            .collect();
        let candidate = OccupancyVector::from_flat(cfg.l, cells).expect("same shape");
        if in_region(&candidate, cfg, sol) {
            return Some((s, candidate));
        }
        s *= 0.5;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClassSpec;
    use crate::relaxed::solve_rp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference() -> NetworkConfig {
        NetworkConfig::new(
            100,
            0.5,
            50,
            vec![ClassSpec::new(0.5, 0.5), ClassSpec::new(0.8, 0.5)],
        )
        .unwrap()
    }

    pub(crate) fn random_occupancy(cfg: &NetworkConfig, rng: &mut ChaCha8Rng) -> OccupancyVector {
        let rows = cfg
            .classes
            .iter()
            .map(|c| {
                let raw: Vec<f64> = (0..cfg.l).map(|_| -rng.random::<f64>().ln()).collect();
                let total: f64 = raw.iter().sum();
                raw.iter().map(|v| c.gamma * v / total).collect()
            })
            .collect();
        OccupancyVector::from_rows(rows).unwrap()
    }

    #[test]
    fn half_budget_example() {
        let cfg = NetworkConfig::new(2, 0.5, 3, vec![ClassSpec::new(1.0, 1.0)]).unwrap();
        let z = OccupancyVector::from_rows(vec![vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(fluid_step(&z, &cfg).rows(), vec![vec![0.5, 0.5, 0.0]]);
    }

    #[test]
    fn fixed_point_is_preserved() {
        let cfg = reference();
        let sol = solve_rp(&cfg).unwrap();
        let next = fluid_step(&sol.z_star, &cfg);
        assert!(next.distance(&sol.z_star) < 1e-10);
        assert!(in_region(&sol.z_star, &cfg, &sol));
    }

    #[test]
    fn full_budget_resets_everyone() {
        // alpha covers all users when one class holds all the mass above the rest.
        let cfg = NetworkConfig::new(10, 0.6, 5, vec![ClassSpec::new(1.0, 0.4), ClassSpec::new(1.0, 0.6)])
            .unwrap();
        let z = OccupancyVector::from_rows(vec![
            vec![0.0, 0.0, 0.0, 0.0, 0.4],
            vec![0.0, 0.0, 0.0, 0.0, 0.6],
        ])
        .unwrap();
        let map = FluidMap::new(&cfg);
        let share = map.selection(&z);
        let scheduled: f64 = share.iter().zip(z.as_flat()).map(|(s, m)| s * m).sum();
        assert!((scheduled - 0.6).abs() < 1e-12);
    }

    #[test]
    fn mass_and_budget_invariants() {
        let cfg = reference();
        let sol = solve_rp(&cfg).unwrap();
        let map = FluidMap::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut region_hits = 0;
        for _ in 0..500 {
            let z = random_occupancy(&cfg, &mut rng);
            let next = map.step(&z);
            for k in 0..2 {
                assert!((next.class_mass(k) - 0.5).abs() < 1e-12);
            }
            if let Some((_, z)) = shrink_into_region(&z, &cfg, &sol, 1.0) {
                region_hits += 1;
                let share = map.selection(&z);
                let scheduled: f64 = share.iter().zip(z.as_flat()).map(|(s, m)| s * m).sum();
                assert!((scheduled - cfg.alpha).abs() < 1e-12);
            }
        }
        assert!(region_hits > 0);
    }

    #[test]
    fn fixed_point_trajectory_stays_put() {
        let cfg = reference();
        let sol = solve_rp(&cfg).unwrap();
        let tr = fluid_trajectory(&sol.z_star, 20, &cfg, &sol);
        assert!(tr.distances().all(|d| d < 1e-12));
        assert!(tr.tail_contraction.is_none());
    }

    #[test]
    fn extreme_start_stays_on_simplex() {
        let cfg = reference();
        let sol = solve_rp(&cfg).unwrap();
        let z0 = OccupancyVector::concentrated(&cfg, 50);
        let tr = fluid_trajectory(&z0, 2000, &cfg, &sol);
        tr.final_state.check_simplex(&cfg.gammas(), 1e-9).unwrap();
        assert!(tr.points.iter().any(|p| p.in_region));
        assert!(tr.points.last().unwrap().dist_to_zstar < 1e-6);
    }

    #[test]
    fn multistart_reaches_fixed_point() {
        let cfg = NetworkConfig::new(
            100,
            0.3,
            12,
            vec![ClassSpec::new(0.3, 0.5), ClassSpec::new(0.9, 0.5)],
        )
        .unwrap();
        let sol = solve_rp(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let z0 = random_occupancy(&cfg, &mut rng);
            let tr = fluid_trajectory(&z0, 3000, &cfg, &sol);
            assert!(tr.points.last().unwrap().dist_to_zstar < 1e-6);
        }
    }
}
