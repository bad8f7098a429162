//! The fluid map restricted to the linear region around the fixed point.
//!
//! Inside the region every class other than the critical class `m` is
//! scheduled exactly above its threshold, while class `m` absorbs whatever
//! budget is left. The map is then affine. Dropping one coordinate per class
//! (recoverable from the class mass) gives `z~' = Q z~ + c` with a square `Q`
//! of size `(L - 1) K`.
//!
//! `Q` is also kept exactly as an integer matrix scaled by `2^scale_bits`,
//! which is possible because every finite float is a dyadic rational.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::index::{indices, same_index};
use crate::model::{NetworkConfig, OccupancyVector};
use crate::relaxed::RelaxedSolution;

/// Largest power-of-two denominator accepted for the success probabilities.
const MAX_SCALE_BITS: u32 = 100;

#[derive(Debug, Clone)]
pub struct LinearRegionSystem {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    /// Dropped age per class.
    pub reduction: Vec<usize>,
    /// Critical class.
    pub m: usize,
    /// Threshold per class used inside the region.
    pub thresholds: Vec<usize>,
    pub p: Vec<f64>,
    pub l: usize,
    gammas: Vec<f64>,
    /// `q * 2^scale_bits`, exactly.
    pub(crate) q_exact: Vec<Vec<i128>>,
    pub(crate) scale_bits: u32,
    /// Numerators of the `p_k` over `2^scale_bits`.
    pub(crate) p_exact: Vec<i128>,
}

/// `x = mantissa / 2^bits` with an odd mantissa (or `x = 0`).
pub(crate) fn dyadic(x: f64) -> (i128, u32) {
    if x == 0.0 {
        return (0, 0);
    }
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1 << 52) - 1)) as i128;
    let (mut mant, mut exp) = if raw_exp == 0 {
        (frac, -1074)
    } else {
        (frac | 1 << 52, raw_exp - 1075)
    };
    while mant & 1 == 0 && exp < 0 {
        mant >>= 1;
        exp += 1;
    }
    assert!(exp <= 0, "only values below 2^53 are expected");
    if x < 0.0 {
        mant = -mant;
    }
    (mant, (-exp) as u32)
}

impl LinearRegionSystem {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn kept(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let d = self.reduction[k];
        (1..=self.l).filter(move |&i| i != d)
    }

    /// Drops the reduction coordinate of each class.
    pub fn reduce(&self, z: &OccupancyVector) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for k in 0..self.p.len() {
            out.extend(self.kept(k).map(|i| z.get(k, i)));
        }
        DVector::from_vec(out)
    }

    /// Restores the dropped coordinates from the class masses.
    pub fn expand(&self, v: &DVector<f64>) -> OccupancyVector {
        let l = self.l;
        let mut z = OccupancyVector::zeros(self.p.len(), l);
        let mut pos = 0;
        for k in 0..self.p.len() {
            let mut rest = self.gammas[k];
            for i in self.kept(k) {
                z.set(k, i, v[pos]);
                rest -= v[pos];
                pos += 1;
            }
            z.set(k, self.reduction[k], rest);
        }
        z
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.q * v + &self.c
    }
}

/// Builds the affine system of the linear region of `sol`.
///
/// Fails with a degenerate-threshold error when a class other than `m` has an
/// age whose index equals `W*`, since the region is then not described by a
/// single critical class.
pub fn assemble_linear(cfg: &NetworkConfig, sol: &RelaxedSolution) -> Result<LinearRegionSystem> {
    let l = cfg.l;
    let kk = cfg.num_classes();
    let m = sol.m;
    for (k, c) in cfg.classes.iter().enumerate() {
        if k != m && indices(c.p, l).into_iter().any(|w| same_index(w, sol.w_star)) {
            return Err(Error::DegenerateThreshold(format!(
                "class {k} shares the critical index value {} with class {m}",
                sol.w_star
            )));
        }
    }

    let scale_bits = cfg.classes.iter().map(|c| dyadic(c.p).1).max().unwrap_or(0);
    if scale_bits > MAX_SCALE_BITS {
        return Err(Error::Range(format!(
            "success probabilities need 2^{scale_bits} denominators"
        )));
    }
    let one: i128 = 1 << scale_bits;
    let p_exact: Vec<i128> = cfg
        .classes
        .iter()
        .map(|c| {
            let (mant, bits) = dyadic(c.p);
            mant << (scale_bits - bits)
        })
        .collect();

    let idx = |k: usize, i: usize| k * l + i - 1;
    let dest = |i: usize| (i + 1).min(l);
    let size = kk * l;
    let mut f_num = vec![vec![0i128; size]; size];
    let mut f_const = vec![0.0; size];

    let thresholds: Vec<usize> = (0..kk).map(|k| sol.linear_threshold(k).get()).collect();
    let coupled: Vec<usize> = (0..kk)
        .filter(|&k| k != m)
        .flat_map(|k| (thresholds[k]..=l).map(move |i| idx(k, i)))
        .collect();

    for (k, &p) in p_exact.iter().enumerate() {
        let q = one - p;
        if k != m {
            for i in 1..=l {
                let col = idx(k, i);
                if i >= thresholds[k] {
                    f_num[idx(k, 1)][col] += p;
                    f_num[idx(k, dest(i))][col] += q;
                } else {
                    f_num[idx(k, dest(i))][col] += one;
                }
            }
            continue;
        }
        let (l1, l2) = sol.thresholds[m];
        let (e_lo, e_hi) = (l2.get(), l1.get() - 1);
        if e_lo > e_hi {
            return Err(Error::DegenerateThreshold(format!(
                "critical class {m} has no age at the critical index"
            )));
        }
        let alpha_p = cfg.alpha * cfg.classes[m].p;
        // Scheduled mass of class m: alpha minus what the other classes use.
        let head = idx(m, 1);
        f_const[head] += alpha_p;
        for &s in &coupled {
            f_num[head][s] -= p;
        }
        let tie_dest = idx(m, dest(e_hi));
        f_const[tie_dest] -= alpha_p;
        for &s in &coupled {
            f_num[tie_dest][s] += p;
        }
        for i in 1..=l {
            let col = idx(m, i);
            if i < e_lo {
                f_num[idx(m, dest(i))][col] += one;
            } else if i <= e_hi {
                f_num[tie_dest][col] += one;
            } else {
                f_num[idx(m, dest(i))][col] += q;
                f_num[tie_dest][col] += p;
            }
        }
    }

    let reduction: Vec<usize> = (0..kk)
        .map(|k| {
            if k == m {
                thresholds[k]
            } else {
                thresholds[k].saturating_sub(1).max(1)
            }
        })
        .collect();
    let kept: Vec<(usize, usize)> = (0..kk)
        .flat_map(|k| {
            let d = reduction[k];
            (1..=l).filter(move |&i| i != d).map(move |i| (k, i))
        })
        .collect();
    let n = kept.len();
    let scale = (-(scale_bits as f64)).exp2();
    let mut q_exact = vec![vec![0i128; n]; n];
    let mut q = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for (a, &(ka, ia)) in kept.iter().enumerate() {
        let row = &f_num[idx(ka, ia)];
        for (b, &(kb, ib)) in kept.iter().enumerate() {
            let v = row[idx(kb, ib)] - row[idx(kb, reduction[kb])];
            q_exact[a][b] = v;
            q[(a, b)] = v as f64 * scale;
        }
        c[a] = f_const[idx(ka, ia)]
            + (0..kk)
                .map(|k| row[idx(k, reduction[k])] as f64 * scale * cfg.classes[k].gamma)
                .sum::<f64>();
    }

    Ok(LinearRegionSystem {
        q,
        c,
        reduction,
        m,
        thresholds,
        p: cfg.classes.iter().map(|c| c.p).collect(),
        l,
        gammas: cfg.gammas(),
        q_exact,
        scale_bits,
        p_exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::{in_region, FluidMap};
    use crate::model::ClassSpec;
    use crate::relaxed::solve_rp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn region_points(
        cfg: &NetworkConfig,
        sol: &RelaxedSolution,
        rng: &mut ChaCha8Rng,
        count: usize,
    ) -> Vec<OccupancyVector> {
        let mut out = Vec::new();
        let mut tries = 0;
        while out.len() < count {
            tries += 1;
            assert!(tries < 200_000, "region too thin to sample");
            let s: f64 = rng.random::<f64>().powi(3);
            let cells: Vec<f64> = cfg
                .classes
                .iter()
                .enumerate()
                .flat_map(|(k, c)| {
                    let raw: Vec<f64> = (0..cfg.l).map(|_| -rng.random::<f64>().ln()).collect();
                    let total: f64 = raw.iter().sum();
                    let zs = sol.z_star.row(k).to_vec();
                    raw.into_iter()
                        .zip(zs)
                        .map(move |(v, b)| (1.0 - s) * b + s * c.gamma * v / total)
                })
                .collect();
            let z = OccupancyVector::from_flat(cfg.l, cells).unwrap();
            if in_region(&z, cfg, sol) {
                out.push(z);
            }
        }
        out
    }

    fn check_affine(cfg: &NetworkConfig, seed: u64) {
        let sol = solve_rp(cfg).unwrap();
        let sys = assemble_linear(cfg, &sol).unwrap();
        assert_eq!(sys.dim(), (cfg.l - 1) * cfg.num_classes());
        let map = FluidMap::new(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for z in region_points(cfg, &sol, &mut rng, 100) {
            let expected = sys.reduce(&map.step(&z));
            let got = sys.apply(&sys.reduce(&z));
            assert!((expected - got).amax() < 1e-10);
        }
        let back = sys.expand(&sys.reduce(&sol.z_star));
        assert!(back.distance(&sol.z_star) < 1e-15);
    }

    #[test]
    fn dyadic_decomposition() {
        assert_eq!(dyadic(1.0), (1, 0));
        assert_eq!(dyadic(0.75), (3, 2));
        assert_eq!(dyadic(-0.5), (-1, 1));
        let (m, b) = dyadic(0.7);
        assert_eq!(m as f64 / (b as f64).exp2(), 0.7);
    }

    #[test]
    fn affine_map_matches_fluid_reference() {
        let cfg = NetworkConfig::new(
            100,
            0.5,
            50,
            vec![ClassSpec::new(0.5, 0.5), ClassSpec::new(0.8, 0.5)],
        )
        .unwrap();
        check_affine(&cfg, 1);
    }

    #[test]
    fn affine_map_matches_on_small_instances() {
        let cases = [
            (0.3, 8, vec![(0.3, 0.25), (0.9, 0.5), (0.6, 0.25)]),
            (0.5, 3, vec![(1.0, 1.0)]),
            (0.2, 6, vec![(0.45, 0.5), (0.05, 0.5)]),
            (0.7, 2, vec![(0.4, 0.5), (0.9, 0.5)]),
            (0.1, 15, vec![(0.2, 0.2), (0.4, 0.2), (0.6, 0.2), (0.8, 0.4)]),
        ];
        for (seed, (alpha, l, classes)) in cases.into_iter().enumerate() {
            let classes = classes.into_iter().map(|(p, g)| ClassSpec::new(p, g)).collect();
            let cfg = NetworkConfig::new(100, alpha, l, classes).unwrap();
            check_affine(&cfg, seed as u64);
        }
    }

    #[test]
    fn shared_critical_value_is_degenerate() {
        let cfg = NetworkConfig::new(
            10,
            0.3,
            6,
            vec![ClassSpec::new(0.6, 0.5), ClassSpec::new(0.6, 0.5)],
        )
        .unwrap();
        let sol = solve_rp(&cfg).unwrap();
        assert!(matches!(
            assemble_linear(&cfg, &sol),
            Err(Error::DegenerateThreshold(_))
        ));
    }
}
