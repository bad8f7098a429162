//! Problem instances, age states and population occupancy vectors.
//!
//! A [`NetworkConfig`] describes `N` users split into `K` channel classes, of
//! which `M = alpha * N` may be scheduled per slot, with ages truncated at `L`.
//! Class order is the canonical tie-break order used by every downstream module.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for comparing population fractions.
pub const FRACTION_TOL: f64 = 1e-12;

/// Relative tolerance when checking that `alpha * N` and `gamma_k * N` are integers.
const INTEGRALITY_TOL: f64 = 1e-9;

/// One channel class: transmission success probability and population share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub p: f64,
    pub gamma: f64,
}

impl ClassSpec {
    pub fn new(p: f64, gamma: f64) -> Self {
        Self { p, gamma }
    }
}

/// A full problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n: usize,
    pub alpha: f64,
    pub l: usize,
    pub classes: Vec<ClassSpec>,
}

fn as_integer(x: f64) -> Option<usize> {
    let r = x.round();
    if r >= 0.0 && (x - r).abs() <= INTEGRALITY_TOL * r.max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

impl NetworkConfig {
    /// Builds and validates an instance.
    pub fn new(n: usize, alpha: f64, l: usize, classes: Vec<ClassSpec>) -> Result<Self> {
        Self {
            n,
            alpha,
            l,
            classes,
        }
        .validate()
    }

    /// Returns the config unchanged iff every instance invariant holds.
    pub fn validate(self) -> Result<Self> {
        if self.n == 0 {
            return Err(Error::Range("n must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Range(format!("alpha = {} not in (0,1)", self.alpha)));
        }
        if self.l < 2 {
            return Err(Error::Range(format!("L = {} must be at least 2", self.l)));
        }
        if self.classes.is_empty() {
            return Err(Error::Range("at least one class is required".into()));
        }
        for (k, c) in self.classes.iter().enumerate() {
            if !(c.p > 0.0 && c.p <= 1.0) {
                return Err(Error::Range(format!("class {k}: p = {} not in (0,1]", c.p)));
            }
            if !(c.gamma > 0.0 && c.gamma <= 1.0) {
                return Err(Error::Range(format!(
                    "class {k}: gamma = {} not in (0,1]",
                    c.gamma
                )));
            }
        }
        let sum: f64 = self.classes.iter().map(|c| c.gamma).sum();
        if (sum - 1.0).abs() > FRACTION_TOL {
            return Err(Error::Fraction { sum });
        }
        let nf = self.n as f64;
        let m = as_integer(self.alpha * nf).ok_or_else(|| {
            Error::Integrality(format!("alpha * N = {} is not an integer", self.alpha * nf))
        })?;
        for (k, c) in self.classes.iter().enumerate() {
            as_integer(c.gamma * nf).ok_or_else(|| {
                Error::Integrality(format!(
                    "class {k}: gamma * N = {} is not an integer",
                    c.gamma * nf
                ))
            })?;
        }
        if m == 0 || m >= self.n {
            return Err(Error::Range(format!("M = {m} must satisfy 0 < M < N = {}", self.n)));
        }
        let total: usize = self.class_sizes().iter().sum();
        if total != self.n {
            return Err(Error::Integrality(format!(
                "class sizes sum to {total}, expected N = {}",
                self.n
            )));
        }
        Ok(self)
    }

    /// Number of classes `K`.
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Users that may be scheduled per slot, `M = alpha * N`.
    pub fn scheduled_users(&self) -> usize {
        (self.alpha * self.n as f64).round() as usize
    }

    /// Users per class, `gamma_k * N`.
    pub fn class_sizes(&self) -> Vec<usize> {
        self.classes
            .iter()
            .map(|c| (c.gamma * self.n as f64).round() as usize)
            .collect()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.gamma).collect()
    }

    /// Same instance with a different population size; re-validated.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self {
            n,
            ..self.clone()
        }
        .validate()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

/// A truncated age in `{1, ..., L}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgeState(u32);

impl AgeState {
    pub fn new(value: u32, l: usize) -> Result<Self> {
        if value == 0 || value as usize > l {
            return Err(Error::Range(format!("age {value} not in 1..={l}")));
        }
        Ok(Self(value))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Age one slot later without a successful delivery.
    pub fn aged(self, l: usize) -> Self {
        Self((self.0 + 1).min(l as u32))
    }
}

/// Per-class, per-age population fractions: `z[k][i]` is the share of all `N`
/// users that belong to class `k` and currently have age `i`.
///
/// Stored row-major (`K` rows of `L` ages); ages are 1-based in the accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyVector {
    l: usize,
    cells: Vec<f64>,
}

impl OccupancyVector {
    pub fn zeros(k: usize, l: usize) -> Self {
        Self {
            l,
            cells: vec![0.0; k * l],
        }
    }

    /// Builds from `K` rows of length `L`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let l = rows.first().map(Vec::len).unwrap_or(0);
        if l == 0 || rows.iter().any(|r| r.len() != l) {
            return Err(Error::Shape("occupancy rows must be non-empty and equal length".into()));
        }
        Ok(Self {
            l,
            cells: rows.into_iter().flatten().collect(),
        })
    }

    /// Builds from a flat row-major vector of `K * L` cells.
    pub fn from_flat(l: usize, cells: Vec<f64>) -> Result<Self> {
        if l == 0 || !cells.len().is_multiple_of(l) {
            return Err(Error::Shape(format!(
                "{} cells is not a multiple of L = {l}",
                cells.len()
            )));
        }
        Ok(Self { l, cells })
    }

    /// All users of every class at the same age.
    pub fn concentrated(cfg: &NetworkConfig, age: usize) -> Self {
        let mut z = Self::zeros(cfg.num_classes(), cfg.l);
        for (k, c) in cfg.classes.iter().enumerate() {
            z.set(k, age, c.gamma);
        }
        z
    }

    pub fn num_classes(&self) -> usize {
        self.cells.len() / self.l
    }

    pub fn max_age(&self) -> usize {
        self.l
    }

    /// Fraction in class `k` at age `age` (1-based).
    pub fn get(&self, k: usize, age: usize) -> f64 {
        self.cells[k * self.l + age - 1]
    }

    pub fn set(&mut self, k: usize, age: usize, value: f64) {
        self.cells[k * self.l + age - 1] = value;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.cells[k * self.l..(k + 1) * self.l]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.cells[k * self.l..(k + 1) * self.l]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.cells
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.cells.chunks(self.l).map(<[f64]>::to_vec).collect()
    }

    pub fn class_mass(&self, k: usize) -> f64 {
        self.row(k).iter().sum()
    }

    /// Euclidean distance between two occupancies of the same shape.
    pub fn distance(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.cells.len(), other.cells.len());
        self.cells
            .iter()
            .zip(&other.cells)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Average age per user implied by the occupancy, `sum_k sum_i i * z[k][i]`.
    pub fn mean_age(&self) -> f64 {
        self.cells
            .chunks(self.l)
            .flat_map(|row| row.iter().enumerate().map(|(i, z)| (i + 1) as f64 * z))
            .sum()
    }

    /// Checks nonnegativity and per-class mass `gamma_k` within `tol`.
    pub fn check_simplex(&self, gammas: &[f64], tol: f64) -> Result<()> {
        if gammas.len() != self.num_classes() {
            return Err(Error::Shape(format!(
                "{} classes in occupancy, {} fractions given",
                self.num_classes(),
                gammas.len()
            )));
        }
        if let Some(v) = self.cells.iter().find(|&&v| v < -tol || !v.is_finite()) {
            return Err(Error::Range(format!("negative occupancy {v}")));
        }
        for (k, &g) in gammas.iter().enumerate() {
            let mass = self.class_mass(k);
            if (mass - g).abs() > tol {
                return Err(Error::Fraction { sum: mass });
            }
        }
        Ok(())
    }

    /// Rounds to the `1/N` grid by largest-remainder apportionment within each
    /// class, so class `k` receives exactly `gamma_k * N` users.
    pub fn apportion(&self, cfg: &NetworkConfig) -> Result<OccupancyCounts> {
        if self.num_classes() != cfg.num_classes() || self.l != cfg.l {
            return Err(Error::Shape("occupancy does not match config".into()));
        }
        let n = cfg.n as f64;
        let mut counts = vec![0u64; self.cells.len()];
        for (k, &size) in cfg.class_sizes().iter().enumerate() {
            let row = self.row(k);
            let mass: f64 = row.iter().map(|v| v.max(0.0)).sum();
            let scale = if mass > 0.0 { size as f64 / (mass * n) } else { 0.0 };
            let exact: Vec<f64> = row.iter().map(|v| v.max(0.0) * n * scale).collect();
            let mut assigned = 0u64;
            let mut rema: Vec<(usize, f64)> = Vec::with_capacity(self.l);
            for (i, e) in exact.iter().enumerate() {
                let fl = e.floor();
                counts[k * self.l + i] = fl as u64;
                assigned += fl as u64;
                rema.push((i, e - fl));
            }
            // Largest remainders first; lower age wins exact ties.
            rema.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut missing = size as u64 - assigned.min(size as u64);
            if mass == 0.0 && missing > 0 {
                counts[k * self.l] += missing;
                missing = 0;
            }
            for (i, _) in rema.iter().cycle().take(missing as usize) {
                counts[k * self.l + i] += 1;
            }
        }
        Ok(OccupancyCounts {
            n: cfg.n as u64,
            l: self.l,
            counts,
        })
    }
}

/// Exact integer cell counts of an `N`-user population.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyCounts {
    n: u64,
    l: usize,
    counts: Vec<u64>,
}

impl OccupancyCounts {
    pub fn new(n: u64, k: usize, l: usize) -> Self {
        Self {
            n,
            l,
            counts: vec![0; k * l],
        }
    }

    pub fn count(&self, k: usize, age: usize) -> u64 {
        self.counts[k * self.l + age - 1]
    }

    pub fn increment(&mut self, k: usize, age: usize) {
        self.counts[k * self.l + age - 1] += 1;
    }

    pub fn clear(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len() / self.l
    }

    pub fn class_total(&self, k: usize) -> u64 {
        self.counts[k * self.l..(k + 1) * self.l].iter().sum()
    }

    /// Fractions `count / N`.
    pub fn to_occupancy(&self) -> OccupancyVector {
        let n = self.n as f64;
        OccupancyVector {
            l: self.l,
            cells: self.counts.iter().map(|&c| c as f64 / n).collect(),
        }
    }

    /// Per-user ages per class, users ordered by ascending age.
    pub fn to_ages(&self) -> Vec<Vec<u32>> {
        self.counts
            .chunks(self.l)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .flat_map(|(i, &c)| std::iter::repeat_n(i as u32 + 1, c as usize))
                    .collect()
            })
            .collect()
    }

    /// Euclidean distance of `counts / N` to `z`.
    pub fn distance_to(&self, z: &OccupancyVector) -> f64 {
        let n = self.n as f64;
        self.counts
            .iter()
            .zip(z.as_flat())
            .map(|(&c, &v)| {
                let d = c as f64 / n - v;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Occupancy of a population given per-class lists of user ages.
pub fn empirical_occupancy(ages: &[Vec<AgeState>], cfg: &NetworkConfig) -> Result<OccupancyVector> {
    Ok(empirical_counts(ages, cfg)?.to_occupancy())
}

pub fn empirical_counts(ages: &[Vec<AgeState>], cfg: &NetworkConfig) -> Result<OccupancyCounts> {
    if ages.len() != cfg.num_classes() {
        return Err(Error::Shape(format!(
            "{} age groups for {} classes",
            ages.len(),
            cfg.num_classes()
        )));
    }
    let mut counts = OccupancyCounts::new(cfg.n as u64, cfg.num_classes(), cfg.l);
    for (k, (group, size)) in ages.iter().zip(cfg.class_sizes()).enumerate() {
        if group.len() != size {
            return Err(Error::Shape(format!(
                "class {k} has {} users, expected {size}",
                group.len()
            )));
        }
        for a in group {
            if a.get() as usize > cfg.l {
                return Err(Error::Range(format!("age {} exceeds L = {}", a.get(), cfg.l)));
            }
            counts.increment(k, a.get() as usize);
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class() -> NetworkConfig {
        NetworkConfig::new(
            100,
            0.5,
            50,
            vec![ClassSpec::new(0.5, 0.5), ClassSpec::new(0.8, 0.5)],
        )
        .unwrap()
    }

    #[test]
    fn accepts_reference_instances() {
        let cfg = two_class();
        assert_eq!(cfg.scheduled_users(), 50);
        assert_eq!(cfg.class_sizes(), vec![50, 50]);
        NetworkConfig::new(10, 0.5, 3, vec![ClassSpec::new(1.0, 1.0)]).unwrap();
    }

    #[test]
    fn rejects_bad_fractions() {
        let err = NetworkConfig::new(
            10,
            0.5,
            3,
            vec![ClassSpec::new(0.5, 0.3), ClassSpec::new(0.8, 0.5)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Fraction { .. }), "{err}");
    }

    #[test]
    fn rejects_non_integral_populations() {
        let err = NetworkConfig::new(7, 0.5, 3, vec![ClassSpec::new(1.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::Integrality(_)));
        let err = NetworkConfig::new(
            10,
            0.5,
            3,
            vec![ClassSpec::new(0.5, 0.25), ClassSpec::new(0.8, 0.75)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Integrality(_)));
    }

    #[test]
    fn rejects_out_of_range() {
        let one = vec![ClassSpec::new(1.0, 1.0)];
        for (alpha, l) in [(0.0, 3), (1.0, 3), (0.5, 1)] {
            let err = NetworkConfig::new(10, alpha, l, one.clone()).unwrap_err();
            assert!(matches!(err, Error::Range(_)), "{alpha} {l}: {err}");
        }
        let err = NetworkConfig::new(10, 0.5, 3, vec![ClassSpec::new(0.0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::Range(_)));
        // alpha * N rounds to zero users
        let err = NetworkConfig::new(10, 0.01, 3, one).unwrap_err();
        assert!(matches!(err, Error::Integrality(_) | Error::Range(_)));
    }

    #[test]
    fn validate_is_idempotent() {
        let cfg = two_class();
        assert_eq!(cfg.clone().validate().unwrap(), cfg);
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let ok = r#"{"n": 10, "alpha": 0.5, "l": 3, "classes": [{"p": 1.0, "gamma": 1.0}]}"#;
        NetworkConfig::from_json_str(ok).unwrap();
        let bad = r#"{"n": 10, "alpha": 0.5, "l": 3, "extra": 1, "classes": [{"p": 1.0, "gamma": 1.0}]}"#;
        assert!(NetworkConfig::from_json_str(bad).is_err());
        let bad = r#"{"n": 10, "alpha": 0.5, "l": 3, "classes": [{"p": 1.0, "gamma": 1.0, "q": 2}]}"#;
        assert!(NetworkConfig::from_json_str(bad).is_err());
    }

    #[test]
    fn occupancy_counts_users() {
        let cfg = NetworkConfig::new(4, 0.5, 3, vec![ClassSpec::new(1.0, 1.0)]).unwrap();
        let ages: Vec<AgeState> = [1, 1, 2, 3]
            .iter()
            .map(|&a| AgeState::new(a, 3).unwrap())
            .collect();
        let z = empirical_occupancy(&[ages], &cfg).unwrap();
        assert_eq!(z.row(0), &[0.5, 0.25, 0.25]);
    }

    #[test]
    fn occupancy_extreme_states() {
        let cfg = two_class();
        let ones: Vec<Vec<AgeState>> = cfg
            .class_sizes()
            .iter()
            .map(|&s| vec![AgeState::new(1, cfg.l).unwrap(); s])
            .collect();
        let z = empirical_occupancy(&ones, &cfg).unwrap();
        assert_eq!(z, OccupancyVector::concentrated(&cfg, 1));
        assert_eq!(z.get(0, 1), 0.5);
        assert_eq!(z.get(1, 2), 0.0);

        let top: Vec<Vec<AgeState>> = cfg
            .class_sizes()
            .iter()
            .map(|&s| vec![AgeState::new(cfg.l as u32, cfg.l).unwrap(); s])
            .collect();
        let z = empirical_occupancy(&top, &cfg).unwrap();
        assert_eq!(z.get(0, cfg.l), 0.5);
        assert_eq!(z.get(1, cfg.l), 0.5);
        z.check_simplex(&cfg.gammas(), FRACTION_TOL).unwrap();
    }

    #[test]
    fn occupancy_shape_mismatch() {
        let cfg = two_class();
        let ages = vec![vec![AgeState::new(1, 50).unwrap(); 49], vec![]];
        assert!(matches!(
            empirical_occupancy(&ages, &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn apportion_preserves_class_sizes() {
        let cfg = NetworkConfig::new(
            10,
            0.5,
            4,
            vec![ClassSpec::new(0.5, 0.3), ClassSpec::new(0.9, 0.7)],
        )
        .unwrap();
        let z = OccupancyVector::from_rows(vec![
            vec![0.1, 0.1, 0.05, 0.05],
            vec![0.3, 0.2, 0.15, 0.05],
        ])
        .unwrap();
        let counts = z.apportion(&cfg).unwrap();
        assert_eq!(counts.class_total(0), 3);
        assert_eq!(counts.class_total(1), 7);
        let rounded = counts.to_occupancy();
        rounded.check_simplex(&cfg.gammas(), FRACTION_TOL).unwrap();
        assert!(rounded.distance(&z) < 0.2);
    }

    #[test]
    fn age_state_truncates() {
        let a = AgeState::new(3, 3).unwrap();
        assert_eq!(a.aged(3).get(), 3);
        assert!(AgeState::new(0, 3).is_err());
        assert!(AgeState::new(4, 3).is_err());
    }
}
