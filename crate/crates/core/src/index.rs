//! Closed-form analysis of the single-user subsidy problem.
//!
//! A user of success probability `p` pays its age every slot plus a subsidy `W`
//! whenever it is scheduled. Under a threshold policy (schedule iff age >= n)
//! the age process is a small DTMC with an explicit stationary law, which
//! yields the average costs, the Whittle index of every age, and the optimal
//! thresholds for any `W`.
//!
//! Thresholds live in `{1, ..., L + 1}`; `L + 1` means "never schedule" and all
//! larger thresholds behave identically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide that two index values are tied.
pub const INDEX_TIE_TOL: f64 = 1e-12;

/// Threshold policy for one user: schedule iff the age is at least `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Threshold(usize);

impl Threshold {
    pub fn new(n: usize, l: usize) -> Result<Self> {
        check_threshold(n, l)?;
        Ok(Self(n))
    }

    /// The "never schedule" threshold `L + 1`.
    pub fn never(l: usize) -> Self {
        Self(l + 1)
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn is_never(self, l: usize) -> bool {
        self.0 > l
    }
}

/// Average per-slot costs of a threshold policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPair {
    pub age_cost: f64,
    pub sched_cost: f64,
    pub total: f64,
}

/// True when two index values should be treated as equal.
pub fn same_index(a: f64, b: f64) -> bool {
    (a - b).abs() <= INDEX_TIE_TOL * a.abs().max(b.abs()).max(1.0)
}

/// `(1 - p)^x`, evaluated through logarithms when the base is tiny so that
/// large exponents underflow smoothly to zero.
pub(crate) fn survival_pow(p: f64, x: usize) -> f64 {
    let q = 1.0 - p;
    if x == 0 {
        1.0
    } else if q == 0.0 {
        0.0
    } else if q < 1e-3 && x > 64 {
        (x as f64 * q.ln()).exp()
    } else {
        q.powi(x as i32)
    }
}

fn check_state(i: usize, l: usize) -> Result<()> {
    if i == 0 || i > l {
        return Err(Error::Range(format!("state {i} not in 1..={l}")));
    }
    Ok(())
}

fn check_threshold(n: usize, l: usize) -> Result<()> {
    if n == 0 || n > l + 1 {
        return Err(Error::Range(format!("threshold {n} not in 1..={}", l + 1)));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Range(format!("p = {p} not in (0,1]")));
    }
    Ok(())
}

/// Whittle index of age `i`: `i(i-1)p/2 + i - i(1-p)^(L-i)`.
pub fn whittle_index(i: usize, p: f64, l: usize) -> Result<f64> {
    check_state(i, l)?;
    let fi = i as f64;
    Ok(fi * (fi - 1.0) * p / 2.0 + fi - fi * survival_pow(p, l - i))
}

/// All indices `W_1, ..., W_L` of a class.
pub fn indices(p: f64, l: usize) -> Vec<f64> {
    (1..=l)
        .map(|i| whittle_index(i, p, l).expect("state in range"))
        .collect()
}

/// `W_{i+1} - W_i = (ip + 1)(1 - (1-p)^(L-i-1))`.
pub fn index_gap(i: usize, p: f64, l: usize) -> Result<f64> {
    if i == 0 || i >= l {
        return Err(Error::Range(format!("gap state {i} not in 1..={}", l - 1)));
    }
    Ok((i as f64 * p + 1.0) * (1.0 - survival_pow(p, l - i - 1)))
}

/// Stationary law of the age under threshold `n`, indexed by age `1..=L`
/// (returned vector position `i - 1`).
pub fn stationary_distribution(n: usize, p: f64, l: usize) -> Result<Vec<f64>> {
    check_threshold(n, l)?;
    check_p(p)?;
    let mut u = vec![0.0; l];
    if n == l + 1 {
        u[l - 1] = 1.0;
        return Ok(u);
    }
    let denom = n as f64 * p + 1.0 - p;
    for i in 1..l {
        u[i - 1] = if i < n {
            p / denom
        } else {
            survival_pow(p, i - n) * p / denom
        };
    }
    // The age-L branch takes precedence over the geometric one.
    u[l - 1] = survival_pow(p, l - n) / denom;
    Ok(u)
}

/// Long-run fraction of slots in which the user is scheduled, `1/(np + 1 - p)`.
pub fn scheduled_mass(n: usize, p: f64, l: usize) -> Result<f64> {
    check_threshold(n, l)?;
    if n == l + 1 {
        return Ok(0.0);
    }
    Ok(1.0 / (n as f64 * p + 1.0 - p))
}

/// Expected age per slot under threshold `n` (closed form).
pub fn age_cost(n: usize, p: f64, l: usize) -> Result<f64> {
    check_threshold(n, l)?;
    check_p(p)?;
    if n == l + 1 {
        return Ok(l as f64);
    }
    let m = (n - 1) as f64;
    let num = (m * m + m) * p * p + 2.0 * p * m + 2.0 * (1.0 - survival_pow(p, l - n + 1));
    Ok(num / (2.0 * p * (m * p + 1.0)))
}

/// Expected subsidy paid per slot under threshold `n`.
pub fn sched_cost(n: usize, w: f64, p: f64, l: usize) -> Result<f64> {
    if w.is_nan() || w < 0.0 {
        return Err(Error::Range(format!("subsidy {w} must be nonnegative")));
    }
    Ok(w * scheduled_mass(n, p, l)?)
}

pub fn cost(n: usize, w: f64, p: f64, l: usize) -> Result<CostPair> {
    let age_cost = age_cost(n, p, l)?;
    let sched_cost = sched_cost(n, w, p, l)?;
    Ok(CostPair {
        age_cost,
        sched_cost,
        total: age_cost + sched_cost,
    })
}

/// Optimal thresholds `(l1, l2)` for subsidy `w`:
/// `l1 = 1 + max{i : W_i <= w}`, `l2 = 1 + max{i : W_i < w}` (an empty set
/// counts as 0). They differ only when `w` equals some index.
pub fn optimal_thresholds(w: f64, p: f64, l: usize) -> (Threshold, Threshold) {
    let mut below_or_equal = 0;
    let mut strictly_below = 0;
    for (pos, wi) in indices(p, l).into_iter().enumerate() {
        let i = pos + 1;
        let tied = same_index(wi, w);
        if wi < w || tied {
            below_or_equal = i;
        }
        if wi < w && !tied {
            strictly_below = i;
        }
    }
    (Threshold(below_or_equal + 1), Threshold(strictly_below + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Crossing subsidy of the cost lines of thresholds `i` and `i + 1`,
    /// solved from the cost formulas alone.
    fn crossing(i: usize, p: f64, l: usize) -> f64 {
        let a = age_cost(i, p, l).unwrap() - age_cost(i + 1, p, l).unwrap();
        let b = scheduled_mass(i + 1, p, l).unwrap() - scheduled_mass(i, p, l).unwrap();
        a / b
    }

    #[test]
    fn index_examples() {
        assert!(close(whittle_index(2, 1.0, 5).unwrap(), 3.0, 1e-15));
        assert!(close(whittle_index(2, 0.5, 3).unwrap(), 1.5, 1e-15));
        assert!(close(whittle_index(1, 0.5, 3).unwrap(), 0.75, 1e-15));
        // crossing-point oracle
        assert!(close(crossing(2, 0.5, 3), 1.5, 1e-12));
        assert!(close(crossing(1, 0.5, 3), 0.75, 1e-12));
        assert!(whittle_index(0, 0.5, 3).is_err());
        assert!(whittle_index(4, 0.5, 3).is_err());
    }

    #[test]
    fn gap_examples() {
        assert!(close(index_gap(2, 0.5, 3).unwrap(), 0.0, 1e-15));
        assert!(close(index_gap(1, 1.0, 5).unwrap(), 2.0, 1e-15));
        assert!(close(index_gap(1, 0.5, 3).unwrap(), 0.75, 1e-15));
        assert!(index_gap(3, 0.5, 3).is_err());
    }

    #[test]
    fn stationary_examples() {
        assert_eq!(stationary_distribution(1, 1.0, 4).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        for (a, b) in stationary_distribution(2, 0.5, 3)
            .unwrap()
            .iter()
            .zip([1.0 / 3.0; 3])
        {
            assert!(close(*a, b, 1e-15));
        }
        assert_eq!(stationary_distribution(5, 0.3, 4).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(stationary_distribution(3, 0.5, 3).unwrap(), vec![0.25, 0.25, 0.5]);
        assert!(stationary_distribution(0, 0.5, 3).is_err());
        assert!(stationary_distribution(5, 0.5, 3).is_err());
    }

    #[test]
    fn cost_examples() {
        assert!(close(age_cost(1, 1.0, 3).unwrap(), 1.0, 1e-15));
        assert!(close(age_cost(2, 0.5, 3).unwrap(), 2.0, 1e-14));
        assert_eq!(age_cost(4, 0.7, 3).unwrap(), 3.0);
        assert!(close(sched_cost(1, 7.0, 0.3, 5).unwrap(), 7.0, 1e-14));
        assert!(close(sched_cost(2, 3.0, 0.5, 3).unwrap(), 2.0, 1e-14));
        assert_eq!(sched_cost(4, 9.0, 0.7, 3).unwrap(), 0.0);
        assert!(sched_cost(1, -1.0, 0.5, 3).is_err());
        let c = cost(2, 1.0, 0.5, 3).unwrap();
        assert!(close(c.total, 2.0 + 1.0 / 1.5, 1e-14));
    }

    #[test]
    fn threshold_examples() {
        let (l1, l2) = optimal_thresholds(1.0, 0.5, 3);
        assert_eq!((l1.get(), l2.get()), (2, 2));
        for p in [0.1, 0.5, 1.0] {
            let (l1, l2) = optimal_thresholds(0.0, p, 7);
            assert_eq!((l1.get(), l2.get()), (1, 1));
        }
        let (l1, l2) = optimal_thresholds(1.5, 0.5, 3);
        assert_eq!((l1.get(), l2.get()), (4, 2));
        // above every index: never schedule
        let (l1, l2) = optimal_thresholds(1e9, 0.5, 3);
        assert_eq!((l1, l2), (Threshold::never(3), Threshold::never(3)));
    }

    #[test]
    fn tiny_survival_base_underflows_smoothly() {
        let u = stationary_distribution(2, 1.0 - 1e-9, 300).unwrap();
        assert!(u.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!(close(u.iter().sum::<f64>(), 1.0, 1e-12));
    }

    proptest! {
        #[test]
        fn distribution_is_normalized(p in 0.01f64..=1.0, l in 2usize..60, n_frac in 0.0f64..1.0) {
            let n = 1 + ((l as f64 + 1.0) * n_frac) as usize;
            let n = n.min(l + 1);
            let u = stationary_distribution(n, p, l).unwrap();
            prop_assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let by_sum: f64 = u.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
            prop_assert!((by_sum - age_cost(n, p, l).unwrap()).abs() < 1e-10 * l as f64);
            let sched: f64 = u[n.min(l + 1) - 1..].iter().sum::<f64>() * (n <= l) as u8 as f64;
            prop_assert!((sched - scheduled_mass(n, p, l).unwrap()).abs() < 1e-10);
        }

        #[test]
        fn index_is_monotone(p in 0.01f64..=1.0, l in 2usize..80) {
            let w = indices(p, l);
            for i in 1..l {
                let gap = index_gap(i, p, l).unwrap();
                prop_assert!(gap >= -1e-12);
                prop_assert!((w[i] - w[i - 1] - gap).abs() < 1e-9 * w[i].abs().max(1.0));
                if i < l - 1 && p > 0.0 {
                    prop_assert!(gap > 0.0);
                }
            }
        }

        #[test]
        fn thresholds_are_ordered(p in 0.01f64..=1.0, l in 2usize..40, w in 0.0f64..500.0) {
            let (l1, l2) = optimal_thresholds(w, p, l);
            prop_assert!(l2 <= l1);
            prop_assert!(l1.get() <= l + 1 && l2.get() >= 1);
            let tied = indices(p, l).iter().any(|&wi| same_index(wi, w));
            if !tied {
                prop_assert_eq!(l1, l2);
            }
        }
    }
}
