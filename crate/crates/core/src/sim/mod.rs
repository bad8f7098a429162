//! Monte Carlo simulation of `N` users under a scheduling policy.
//!
//! Users are numbered class by class (all of class 0 first). Every replication
//! owns one ChaCha generator seeded from `(master seed, replication)`, so runs
//! are reproducible and can be executed in any order.

pub mod schedule;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluid::FluidMap;
use crate::model::{NetworkConfig, OccupancyCounts, OccupancyVector};
use crate::relaxed::{solve_rp, RelaxedSolution};

pub use schedule::{class_of_users, whittle_schedule, GroupedSelector, TieBreak};

pub const DEFAULT_HITTING_CAP: u64 = 1_000_000;
/// Share of the horizon dropped by the trimmed average.
pub const WARMUP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Whittle,
    GreedyMaxAge,
    /// Relaxed-optimal thresholds. Each class-`m` user runs `l2` with
    /// probability `theta_star` (drawn once per replication), `l1` otherwise.
    RpThreshold {
        w_star: f64,
        m: usize,
        theta_star: f64,
        thresholds: Vec<(usize, usize)>,
    },
    UniformRandom,
}

impl PolicyKind {
    pub const NAMES: [&'static str; 4] = ["whittle", "greedy_max_age", "rp_threshold", "uniform_random"];

    pub fn rp_threshold(sol: &RelaxedSolution) -> Self {
        Self::RpThreshold {
            w_star: sol.w_star,
            m: sol.m,
            theta_star: sol.theta_star,
            thresholds: sol.thresholds.iter().map(|(a, b)| (a.get(), b.get())).collect(),
        }
    }

    /// Parses a policy name; the threshold policy is solved for `cfg`.
    pub fn from_name(name: &str, cfg: &NetworkConfig) -> Result<Self> {
        match name {
            "whittle" => Ok(Self::Whittle),
            "greedy_max_age" => Ok(Self::GreedyMaxAge),
            "rp_threshold" => Ok(Self::rp_threshold(&solve_rp(cfg)?)),
            "uniform_random" => Ok(Self::UniformRandom),
            other => Err(Error::Validation(format!(
                "unknown policy {other:?}, expected one of {:?}",
                Self::NAMES
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Whittle => "whittle",
            Self::GreedyMaxAge => "greedy_max_age",
            Self::RpThreshold { .. } => "rp_threshold",
            Self::UniformRandom => "uniform_random",
        }
    }
}

/// Starting state of a replication.
#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    /// One age per user, users numbered class by class.
    Ages(Vec<u32>),
    /// Rounded to the `1/N` grid per class by largest remainders.
    Occupancy(OccupancyVector),
    /// Every user at the same age.
    AllAt(u32),
}

impl Initial {
    pub fn ages(&self, cfg: &NetworkConfig) -> Result<Vec<u32>> {
        let l = cfg.l as u32;
        match self {
            Self::Ages(a) => {
                if a.len() != cfg.n {
                    return Err(Error::Shape(format!("{} ages for {} users", a.len(), cfg.n)));
                }
                if let Some(bad) = a.iter().find(|&&x| x == 0 || x > l) {
                    return Err(Error::Range(format!("age {bad} not in 1..={l}")));
                }
                Ok(a.clone())
            }
            Self::Occupancy(z) => Ok(z.apportion(cfg)?.to_ages().concat()),
            Self::AllAt(age) => {
                if *age == 0 || *age > l {
                    return Err(Error::Range(format!("age {age} not in 1..={l}")));
                }
                Ok(vec![*age; cfg.n])
            }
        }
    }
}

/// Channel model; the forced-failure variant exists for recurrence checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Channel {
    #[default]
    Bernoulli,
    AlwaysFail,
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    pub tie_break: TieBreak,
    pub channel: Channel,
    /// Keep the occupancy of every slot.
    pub trace: bool,
    /// Record the first slot within this distance of `z*`.
    pub hitting: Option<(f64, OccupancyVector)>,
    /// Stop as soon as the hitting time is found.
    pub stop_at_hit: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimRecord {
    pub seed: u64,
    pub horizon: u64,
    pub n: usize,
    pub policy: String,
    /// `(1 / TN) sum_{t < T} sum_users S(t)`.
    pub per_user_avg_age: f64,
    /// Same average over the slots after the warm-up share.
    pub per_user_avg_age_trimmed: f64,
    /// Slots actually simulated (less than `horizon` only when stopping at a hit).
    pub slots: u64,
    pub final_occupancy: OccupancyVector,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<OccupancyVector>>,
    pub hitting_time: Option<u64>,
}

/// One slot of the age dynamics: scheduled users succeed with their class
/// probability and restart at age 1, everyone else ages (capped at `L`).
pub fn step<R: Rng + ?Sized>(
    ages: &[u32],
    scheduled: &[usize],
    p_user: &[f64],
    l: u32,
    rng: &mut R,
) -> Vec<u32> {
    let mut next = ages.to_vec();
    let mut success = vec![false; ages.len()];
    for &u in scheduled {
        success[u] = rng.random::<f64>() < p_user[u];
    }
    for (a, ok) in next.iter_mut().zip(success) {
        *a = if ok { 1 } else { (*a + 1).min(l) };
    }
    next
}

/// Per-replication seed derived from a master seed (SplitMix64 finalizer).
pub fn replication_seed(master: u64, replication: u64) -> u64 {
    let mut z = master
        .wrapping_add(replication.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

enum Selector {
    Grouped(GroupedSelector),
    Thresholds(Vec<u32>),
    Uniform,
}

/// A running replication.
pub struct Simulator<'a> {
    cfg: &'a NetworkConfig,
    class_of: Vec<usize>,
    p_user: Vec<f64>,
    selector: Selector,
    ages: Vec<u32>,
    scheduled: Vec<usize>,
    counts: OccupancyCounts,
    rng: ChaCha8Rng,
    options: SimOptions,
}

impl<'a> Simulator<'a> {
    pub fn new(
        cfg: &'a NetworkConfig,
        policy: &PolicyKind,
        seed: u64,
        initial: &Initial,
        options: SimOptions,
    ) -> Result<Self> {
        let ages = initial.ages(cfg)?;
        let class_of = class_of_users(cfg);
        let p_user = class_of.iter().map(|&k| cfg.classes[k].p).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let selector = match policy {
            PolicyKind::Whittle => Selector::Grouped(GroupedSelector::whittle(cfg)),
            PolicyKind::GreedyMaxAge => Selector::Grouped(GroupedSelector::greedy_max_age(cfg)),
            PolicyKind::UniformRandom => Selector::Uniform,
            PolicyKind::RpThreshold {
                m,
                theta_star,
                thresholds,
                ..
            } => {
                if thresholds.len() != cfg.num_classes() {
                    return Err(Error::Shape("threshold policy does not match config".into()));
                }
                Selector::Thresholds(
                    class_of
                        .iter()
                        .map(|&k| {
                            let (l1, l2) = thresholds[k];
                            if k == *m && rng.random::<f64>() < *theta_star {
                                l2 as u32
                            } else {
                                l1 as u32
                            }
                        })
                        .collect(),
                )
            }
        };
        let mut sim = Self {
            cfg,
            class_of,
            p_user,
            selector,
            ages,
            scheduled: Vec::with_capacity(cfg.scheduled_users()),
            counts: OccupancyCounts::new(cfg.n as u64, cfg.num_classes(), cfg.l),
            rng,
            options,
        };
        sim.recount();
        Ok(sim)
    }

    fn recount(&mut self) {
        self.counts.clear();
        for (&a, &k) in self.ages.iter().zip(&self.class_of) {
            self.counts.increment(k, a as usize);
        }
    }

    pub fn ages(&self) -> &[u32] {
        &self.ages
    }

    pub fn occupancy(&self) -> OccupancyVector {
        self.counts.to_occupancy()
    }

    pub fn counts(&self) -> &OccupancyCounts {
        &self.counts
    }

    /// Users scheduled in the last slot.
    pub fn last_scheduled(&self) -> &[usize] {
        &self.scheduled
    }

    /// Chooses the users for the current state.
    fn choose(&mut self) {
        let budget = self.cfg.scheduled_users();
        match &mut self.selector {
            Selector::Grouped(sel) => sel.select(
                &self.ages,
                &self.class_of,
                budget,
                self.options.tie_break,
                &mut self.rng,
                &mut self.scheduled,
            ),
            Selector::Thresholds(t) => {
                self.scheduled.clear();
                self.scheduled
                    .extend((0..self.ages.len()).filter(|&u| self.ages[u] >= t[u]));
            }
            Selector::Uniform => {
                self.scheduled.clear();
                self.scheduled
                    .extend(sample(&mut self.rng, self.ages.len(), budget));
                self.scheduled.sort_unstable();
            }
        }
    }

    /// Advances one slot.
    pub fn advance(&mut self) {
        self.choose();
        let l = self.cfg.l as u32;
        // Scheduled users are moved first, then everyone else ages.
        let mut reset = vec![false; self.ages.len()];
        for &u in &self.scheduled {
            reset[u] = match self.options.channel {
                Channel::Bernoulli => self.rng.random::<f64>() < self.p_user[u],
                Channel::AlwaysFail => false,
            };
        }
        for (a, r) in self.ages.iter_mut().zip(reset) {
            *a = if r { 1 } else { (*a + 1).min(l) };
        }
        self.recount();
    }

    fn age_sum(&self) -> u64 {
        self.ages.iter().map(|&a| a as u64).sum()
    }

    /// Runs `horizon` slots, observing the state at `t = 0..horizon`.
    pub fn run(mut self, horizon: u64, seed: u64, policy: &str) -> SimRecord {
        let warmup = (horizon as f64 * WARMUP_FRACTION).floor() as u64;
        let mut total = 0u128;
        let mut trimmed = 0u128;
        let mut hitting_time = None;
        let mut trace = self.options.trace.then(Vec::new);
        let mut slots = 0;
        for t in 0..horizon {
            let s = self.age_sum() as u128;
            total += s;
            if t >= warmup {
                trimmed += s;
            }
            slots = t + 1;
            if let Some(tr) = trace.as_mut() {
                tr.push(self.occupancy());
            }
            if hitting_time.is_none() {
                if let Some((eps, z)) = &self.options.hitting {
                    if self.counts.distance_to(z) <= *eps {
                        hitting_time = Some(t);
                        if self.options.stop_at_hit {
                            break;
                        }
                    }
                }
            }
            if t + 1 < horizon {
                self.advance();
            }
        }
        let n = self.cfg.n as f64;
        SimRecord {
            seed,
            horizon,
            n: self.cfg.n,
            policy: policy.to_string(),
            per_user_avg_age: total as f64 / (slots as f64 * n),
            per_user_avg_age_trimmed: trimmed as f64 / ((slots - warmup.min(slots - 1)) as f64 * n),
            slots,
            final_occupancy: self.occupancy(),
            trace,
            hitting_time,
        }
    }
}

pub fn simulate(
    cfg: &NetworkConfig,
    policy: &PolicyKind,
    horizon: u64,
    seed: u64,
    initial: &Initial,
) -> Result<SimRecord> {
    simulate_with(cfg, policy, horizon, seed, initial, SimOptions::default())
}

pub fn simulate_with(
    cfg: &NetworkConfig,
    policy: &PolicyKind,
    horizon: u64,
    seed: u64,
    initial: &Initial,
    options: SimOptions,
) -> Result<SimRecord> {
    if horizon == 0 {
        return Err(Error::Range("horizon must be at least 1".into()));
    }
    Ok(Simulator::new(cfg, policy, seed, initial, options)?.run(horizon, seed, policy.name()))
}

/// Independent replications `0..replications`, run in parallel, returned in
/// replication order.
pub fn simulate_replications(
    cfg: &NetworkConfig,
    policy: &PolicyKind,
    horizon: u64,
    master_seed: u64,
    replications: u64,
    initial: &Initial,
) -> Result<Vec<SimRecord>> {
    (0..replications)
        .into_par_iter()
        .map(|r| simulate(cfg, policy, horizon, replication_seed(master_seed, r), initial))
        .collect()
}

/// First slot at which the Whittle-policy occupancy is within `epsilon` of
/// `z*`, or `None` if that does not happen before `cap` slots.
pub fn hitting_time(
    cfg: &NetworkConfig,
    initial: &Initial,
    epsilon: f64,
    seed: u64,
    cap: u64,
) -> Result<Option<u64>> {
    let sol = solve_rp(cfg)?;
    hitting_time_to(cfg, &sol.z_star, initial, epsilon, seed, cap)
}

/// [`hitting_time`] with a precomputed target.
pub fn hitting_time_to(
    cfg: &NetworkConfig,
    z_star: &OccupancyVector,
    initial: &Initial,
    epsilon: f64,
    seed: u64,
    cap: u64,
) -> Result<Option<u64>> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Range(format!("epsilon = {epsilon} must be positive")));
    }
    let options = SimOptions {
        hitting: Some((epsilon, z_star.clone())),
        stop_at_hit: true,
        ..SimOptions::default()
    };
    let record = simulate_with(cfg, &PolicyKind::Whittle, cap, seed, initial, options)?;
    Ok(record.hitting_time)
}

/// Largest distance between the simulated occupancy and the fluid trajectory
/// started from the same point, over slots `0..=horizon`.
pub fn fluid_deviation(cfg: &NetworkConfig, horizon: u64, seed: u64, initial: &Initial) -> Result<f64> {
    let mut sim = Simulator::new(cfg, &PolicyKind::Whittle, seed, initial, SimOptions::default())?;
    let map = FluidMap::new(cfg);
    let mut z = sim.occupancy();
    let mut worst: f64 = 0.0;
    for t in 0..=horizon {
        worst = worst.max(sim.counts().distance_to(&z));
        if t < horizon {
            sim.advance();
            z = map.step(&z);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClassSpec;

    fn single(n: usize, alpha: f64, p: f64, l: usize) -> NetworkConfig {
        NetworkConfig::new(n, alpha, l, vec![ClassSpec::new(p, 1.0)]).unwrap()
    }

    #[test]
    fn step_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(step(&[5], &[0], &[1.0], 10, &mut rng), vec![1]);
        assert_eq!(step(&[10], &[], &[0.5], 10, &mut rng), vec![10]);
        assert_eq!(step(&[2], &[0], &[0.0], 10, &mut rng), vec![3]);
        assert_eq!(step(&[10], &[0], &[0.0], 10, &mut rng), vec![10]);
    }

    #[test]
    fn alternating_pair() {
        let cfg = single(2, 0.5, 1.0, 3);
        let r = simulate(&cfg, &PolicyKind::Whittle, 10_000, 1, &Initial::Ages(vec![1, 2])).unwrap();
        assert!((r.per_user_avg_age - 1.5).abs() < 0.01);
    }

    #[test]
    fn single_slot_from_fresh_start() {
        let cfg = single(10, 0.3, 0.5, 8);
        let r = simulate(&cfg, &PolicyKind::Whittle, 1, 4, &Initial::AllAt(1)).unwrap();
        assert_eq!(r.per_user_avg_age, 1.0);
        assert!(simulate(&cfg, &PolicyKind::Whittle, 0, 4, &Initial::AllAt(1)).is_err());
    }

    #[test]
    fn whittle_and_greedy_schedule_budget() {
        let cfg = NetworkConfig::new(
            20,
            0.5,
            50,
            vec![ClassSpec::new(0.8, 0.5), ClassSpec::new(0.2, 0.5)],
        )
        .unwrap();
        for policy in [PolicyKind::Whittle, PolicyKind::GreedyMaxAge, PolicyKind::UniformRandom] {
            let mut sim = Simulator::new(&cfg, &policy, 9, &Initial::AllAt(1), SimOptions::default()).unwrap();
            for _ in 0..300 {
                sim.advance();
                assert_eq!(sim.last_scheduled().len(), 10);
            }
        }
    }

    #[test]
    fn symmetric_whittle_matches_greedy_up_to_truncation_tie() {
        let l = 6;
        let cfg = single(30, 0.3, 0.35, l);
        let mut sim = Simulator::new(&cfg, &PolicyKind::Whittle, 2, &Initial::AllAt(1), SimOptions::default())
            .unwrap();
        let class_of = class_of_users(&cfg);
        let mut greedy = GroupedSelector::greedy_max_age(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut out = Vec::new();
        for _ in 0..2000 {
            let ages = sim.ages().to_vec();
            greedy.select(&ages, &class_of, 9, TieBreak::Deterministic, &mut rng, &mut out);
            let mut g = out.clone();
            g.sort_unstable();
            sim.advance();
            let mut w = sim.last_scheduled().to_vec();
            w.sort_unstable();
            // Ages L-1 and L share one index value, so the two rules may only
            // disagree on users at those ages.
            for u in w.iter().filter(|u| !g.contains(u)).chain(g.iter().filter(|u| !w.contains(u))) {
                assert!(ages[*u] as usize >= l - 1, "user {u} at age {}", ages[*u]);
            }
        }
    }

    #[test]
    fn reproducible_records() {
        let cfg = single(20, 0.25, 0.6, 10);
        let a = simulate(&cfg, &PolicyKind::UniformRandom, 500, 77, &Initial::AllAt(3)).unwrap();
        let b = simulate(&cfg, &PolicyKind::UniformRandom, 500, 77, &Initial::AllAt(3)).unwrap();
        assert_eq!(a.per_user_avg_age.to_bits(), b.per_user_avg_age.to_bits());
        assert_eq!(a.final_occupancy, b.final_occupancy);
        let c = simulate(&cfg, &PolicyKind::UniformRandom, 500, 78, &Initial::AllAt(3)).unwrap();
        assert_ne!(a.final_occupancy, c.final_occupancy);
    }

    #[test]
    fn forced_failure_reaches_all_max_ages() {
        let cfg = NetworkConfig::new(
            12,
            0.5,
            7,
            vec![ClassSpec::new(0.9, 0.5), ClassSpec::new(0.4, 0.5)],
        )
        .unwrap();
        let starts = [Initial::AllAt(1), Initial::Ages((0..12).map(|u| 1 + u % 7).collect())];
        for initial in starts {
            let options = SimOptions {
                channel: Channel::AlwaysFail,
                ..SimOptions::default()
            };
            let mut sim = Simulator::new(&cfg, &PolicyKind::Whittle, 0, &initial, options).unwrap();
            for _ in 0..cfg.l {
                sim.advance();
            }
            assert!(sim.ages().iter().all(|&a| a == 7));
        }
    }

    #[test]
    fn rp_policy_spends_budget_on_average() {
        let cfg = NetworkConfig::new(
            200,
            0.5,
            20,
            vec![ClassSpec::new(0.8, 0.5), ClassSpec::new(0.2, 0.5)],
        )
        .unwrap();
        let policy = PolicyKind::from_name("rp_threshold", &cfg).unwrap();
        let mut sim = Simulator::new(&cfg, &policy, 5, &Initial::AllAt(1), SimOptions::default()).unwrap();
        let mut total = 0usize;
        for _ in 0..200 {
            sim.advance();
        }
        for _ in 0..2000 {
            sim.advance();
            total += sim.last_scheduled().len();
        }
        let share = total as f64 / (2000.0 * 200.0);
        assert!((share - 0.5).abs() < 0.05, "{share}");
    }

    #[test]
    fn hitting_from_fixed_point_is_immediate() {
        let cfg = single(40, 0.5, 0.5, 6);
        let sol = solve_rp(&cfg).unwrap();
        let t = hitting_time(&cfg, &Initial::Occupancy(sol.z_star.clone()), 0.1, 0, 10).unwrap();
        assert_eq!(t, Some(0));
        assert!(hitting_time(&cfg, &Initial::AllAt(6), -1.0, 0, 10).is_err());
    }

    #[test]
    fn deterministic_fluid_deviation_vanishes() {
        let cfg = single(2, 0.5, 1.0, 3);
        let dev = fluid_deviation(&cfg, 50, 0, &Initial::Ages(vec![1, 2])).unwrap();
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn one_step_deviation_is_bounded() {
        let cfg = NetworkConfig::new(
            100,
            0.5,
            50,
            vec![ClassSpec::new(0.5, 0.5), ClassSpec::new(0.8, 0.5)],
        )
        .unwrap();
        let sol = solve_rp(&cfg).unwrap();
        for seed in 0..20 {
            let dev = fluid_deviation(&cfg, 1, seed, &Initial::Occupancy(sol.z_star.clone())).unwrap();
            assert!(dev < 0.5);
        }
    }

    #[test]
    fn replication_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> = (0..100).map(|r| replication_seed(42, r)).collect();
        assert_eq!(seeds.len(), 100);
    }
}
