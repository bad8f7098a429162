//! Brute-force ground truth used to check the closed forms.
//!
//! Nothing here uses the index or cost formulas: the single-user problem is
//! solved by relative value iteration on its Bellman equation, threshold chains
//! are solved through their balance equations, and tiny multi-user instances
//! are solved exactly over the joint age vector.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::NetworkConfig;

/// Stop when the span of successive value differences falls below this.
pub const RVI_SPAN_TOL: f64 = 1e-9;
pub const RVI_MAX_ITERS: usize = 1_000_000;
/// Largest joint state space `L^N` accepted by [`joint_mdp_optimal`].
pub const JOINT_STATE_CAP: usize = 200_000;

// Aperiodicity transform: mixing each kernel with the identity keeps every
// policy's stationary law (and so the average cost) while making RVI converge
// on periodic chains such as p = 1.
const DAMPING: f64 = 0.5;
const ACTION_TIE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Serialize)]
pub struct RviResult {
    /// Optimal average cost per slot.
    pub avg_cost: f64,
    /// Relative value function over ages `1..=L`, zero at age 1.
    pub value_fn: Vec<f64>,
    /// `policy[i - 1]` is true when age `i` is scheduled.
    pub policy: Vec<bool>,
    pub iterations: usize,
}

impl RviResult {
    /// Threshold of the greedy policy, `L + 1` if it never schedules, or
    /// `None` when the policy is not of threshold form.
    pub fn threshold(&self) -> Option<usize> {
        let first = self
            .policy
            .iter()
            .position(|&a| a)
            .unwrap_or(self.policy.len());
        self.policy[first..].iter().all(|&a| a).then_some(first + 1)
    }
}

/// Relative value iteration for the single-user subsidy problem with reference
/// state 1. Ties between actions are resolved towards idling.
pub fn rvi_one_dim(p: f64, l: usize, w: f64) -> Result<RviResult> {
    if w.is_nan() || w < 0.0 || p.is_nan() || p <= 0.0 || p > 1.0 || l < 2 {
        return Err(Error::Range(format!("invalid RVI input p = {p}, L = {l}, W = {w}")));
    }
    let next = |s: usize| (s + 1).min(l); // ages are 1-based
    let q_values = |h: &[f64], s: usize| {
        let idle = s as f64 + DAMPING * h[next(s) - 1];
        let sched = s as f64 + w + DAMPING * (p * h[0] + (1.0 - p) * h[next(s) - 1]);
        (idle, sched)
    };

    let mut h = vec![0.0; l];
    let mut th = vec![0.0; l];
    for iter in 1..=RVI_MAX_ITERS {
        for s in 1..=l {
            let (idle, sched) = q_values(&h, s);
            th[s - 1] = idle.min(sched) + (1.0 - DAMPING) * h[s - 1];
        }
        let (lo, hi) = th
            .iter()
            .zip(&h)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        let offset = th[0];
        for (hs, ts) in h.iter_mut().zip(&th) {
            *hs = ts - offset;
        }
        if hi - lo < RVI_SPAN_TOL {
            let avg_cost = 0.5 * (lo + hi);
            let value_fn: Vec<f64> = h.iter().map(|v| v * DAMPING).collect();
            let policy = (1..=l)
                .map(|s| {
                    let (idle, sched) = q_values(&h, s);
                    sched < idle - ACTION_TIE_TOL * idle.abs().max(1.0)
                })
                .collect();
            return Ok(RviResult {
                avg_cost,
                value_fn,
                policy,
                iterations: iter,
            });
        }
    }
    Err(Error::Convergence(format!(
        "RVI did not reach span {RVI_SPAN_TOL} within {RVI_MAX_ITERS} iterations"
    )))
}

/// Transition matrix of the age chain under threshold `n` (row = from).
pub fn threshold_chain(n: usize, p: f64, l: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(l, l);
    for s in 1..=l {
        let up = (s + 1).min(l);
        if s >= n {
            m[(s - 1, 0)] += p;
            m[(s - 1, up - 1)] += 1.0 - p;
        } else {
            m[(s - 1, up - 1)] += 1.0;
        }
    }
    m
}

/// Stationary law of the threshold chain from a direct linear solve of
/// `pi P = pi`, `sum pi = 1`.
pub fn stationary_by_balance(n: usize, p: f64, l: usize) -> Result<Vec<f64>> {
    if n == 0 || n > l + 1 {
        return Err(Error::Range(format!("threshold {n} not in 1..={}", l + 1)));
    }
    let chain = threshold_chain(n, p, l);
    // (P^T - I) pi = 0 with the last equation replaced by normalization.
    let mut a = chain.transpose() - DMatrix::identity(l, l);
    let mut b = DVector::zeros(l);
    for j in 0..l {
        a[(l - 1, j)] = 1.0;
    }
    b[l - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularSystem(format!("balance equations n = {n}, p = {p}")))?;
    Ok(pi.iter().map(|v| if v.abs() < 1e-15 { 0.0 } else { *v }).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct JointMdpResult {
    /// Optimal long-run average age per user.
    pub avg_age_per_user: f64,
    pub states: usize,
    pub actions: usize,
    pub iterations: usize,
}

fn subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, m, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, m, &mut Vec::with_capacity(m), &mut out);
    out
}

/// Exact optimum of the scheduling problem for a tiny instance, by relative
/// value iteration over the joint age vector with exactly `M` users scheduled
/// per slot. Actions are enumerated in lexicographic order.
pub fn joint_mdp_optimal(cfg: &NetworkConfig) -> Result<JointMdpResult> {
    let n = cfg.n;
    let l = cfg.l;
    let m = cfg.scheduled_users();
    let states = (l as f64).powi(n as i32);
    if states > JOINT_STATE_CAP as f64 {
        return Err(Error::Size {
            states: states.min(usize::MAX as f64) as usize,
            cap: JOINT_STATE_CAP,
        });
    }
    let states = states as usize;
    let p_user: Vec<f64> = cfg
        .classes
        .iter()
        .zip(cfg.class_sizes())
        .flat_map(|(c, size)| std::iter::repeat_n(c.p, size))
        .collect();
    let actions = subsets(n, m);

    let decode = |mut s: usize| -> Vec<usize> {
        let mut ages = vec![0; n];
        for a in ages.iter_mut() {
            *a = s % l + 1;
            s /= l;
        }
        ages
    };
    let encode = |ages: &[usize]| -> usize { ages.iter().rev().fold(0, |acc, &a| acc * l + a - 1) };

    // transitions[s][a] = list of (probability, next state)
    let mut cost = Vec::with_capacity(states);
    let mut transitions: Vec<Vec<Vec<(f64, usize)>>> = Vec::with_capacity(states);
    for s in 0..states {
        let ages = decode(s);
        cost.push(ages.iter().sum::<usize>() as f64);
        let aged: Vec<usize> = ages.iter().map(|&a| (a + 1).min(l)).collect();
        let per_action = actions
            .iter()
            .map(|subset| {
                (0u32..1 << m)
                    .filter_map(|outcome| {
                        let mut next = aged.clone();
                        let mut prob = 1.0;
                        for (bit, &u) in subset.iter().enumerate() {
                            if outcome >> bit & 1 == 1 {
                                prob *= p_user[u];
                                next[u] = 1;
                            } else {
                                prob *= 1.0 - p_user[u];
                            }
                        }
                        (prob > 0.0).then(|| (prob, encode(&next)))
                    })
                    .collect()
            })
            .collect();
        transitions.push(per_action);
    }

    let mut h = vec![0.0; states];
    let mut th = vec![0.0; states];
    for iter in 1..=RVI_MAX_ITERS {
        for s in 0..states {
            let best = transitions[s]
                .iter()
                .map(|outs| outs.iter().map(|(pr, t)| pr * h[*t]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            th[s] = cost[s] + DAMPING * best + (1.0 - DAMPING) * h[s];
        }
        let (lo, hi) = th
            .iter()
            .zip(&h)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        let offset = th[0];
        for (hs, ts) in h.iter_mut().zip(&th) {
            *hs = ts - offset;
        }
        if hi - lo < RVI_SPAN_TOL {
            return Ok(JointMdpResult {
                avg_age_per_user: 0.5 * (lo + hi) / n as f64,
                states,
                actions: actions.len(),
                iterations: iter,
            });
        }
    }
    Err(Error::Convergence("joint RVI did not converge".into()))
}
