//! Exact characteristic polynomials of small integer matrices.
//!
//! The polynomial is computed modulo several 62-bit primes (Hessenberg
//! reduction followed by the usual recurrence) and lifted by Chinese
//! remaindering, with enough primes to cover a coefficient bound.

use num_bigint::{BigInt, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for b in BASES {
        if n.is_multiple_of(b) {
            return n == b;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// The `count` largest primes below `2^62`.
fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut candidate = (1u64 << 62) - 1;
    while out.len() < count {
        if is_prime(candidate) {
            out.push(candidate);
        }
        candidate -= 2;
    }
    out
}

fn inv_mod(a: u64, m: u64) -> u64 {
    pow_mod(a, m - 2, m)
}

/// Coefficients `c[0..=n]` of `det(x I - A) mod prime`, lowest degree first.
fn charpoly_mod(a: &[Vec<i128>], prime: u64) -> Vec<u64> {
    let n = a.len();
    let pm = prime as i128;
    let mut h: Vec<Vec<u64>> = a
        .iter()
        .map(|row| row.iter().map(|&v| v.rem_euclid(pm) as u64).collect())
        .collect();

    // Similarity reduction to upper Hessenberg form.
    for col in 0..n.saturating_sub(2) {
        let Some(piv) = (col + 1..n).find(|&r| h[r][col] != 0) else {
            continue;
        };
        if piv != col + 1 {
            h.swap(piv, col + 1);
            for row in h.iter_mut() {
                row.swap(piv, col + 1);
            }
        }
        let inv = inv_mod(h[col + 1][col], prime);
        for r in col + 2..n {
            if h[r][col] == 0 {
                continue;
            }
            let f = mul_mod(h[r][col], inv, prime);
            // row_r -= f * row_{col+1}
            let (upper, lower) = h.split_at_mut(r);
            for (x, &y) in lower[0].iter_mut().zip(&upper[col + 1]) {
                *x = (*x + prime - mul_mod(f, y, prime)) % prime;
            }
            // col_{col+1} += f * col_r
            for row in h.iter_mut() {
                let t = mul_mod(f, row[r], prime);
                row[col + 1] = (row[col + 1] + t) % prime;
            }
        }
    }

    // p_k(x) = (x - h_kk) p_{k-1}(x) - sum_{i<k} h_ik (prod_{j=i+1..k} h_{j,j-1}) p_{i-1}(x)
    let mut polys: Vec<Vec<u64>> = vec![vec![1]];
    for k in 0..n {
        let prev = &polys[k];
        let mut next = vec![0u64; k + 2];
        for (d, &c) in prev.iter().enumerate() {
            next[d + 1] = (next[d + 1] + c) % prime;
            next[d] = (next[d] + prime - mul_mod(h[k][k], c, prime)) % prime;
        }
        let mut prod = 1u64;
        for i in (0..k).rev() {
            prod = mul_mod(prod, h[i + 1][i], prime);
            if prod == 0 {
                break;
            }
            let coef = mul_mod(h[i][k], prod, prime);
            if coef == 0 {
                continue;
            }
            for (d, &c) in polys[i].iter().enumerate() {
                next[d] = (next[d] + prime - mul_mod(coef, c, prime)) % prime;
            }
        }
        polys.push(next);
    }
    polys.pop().expect("at least the constant polynomial")
}

/// Exact `det(x I - A)` for an integer matrix, lowest degree first.
pub fn charpoly(a: &[Vec<i128>]) -> Vec<BigInt> {
    let n = a.len();
    if n == 0 {
        return vec![BigInt::one()];
    }
    // Every coefficient is bounded by (1 + R)^n with R the largest absolute row sum.
    let r = a
        .iter()
        .map(|row| row.iter().map(|v| v.unsigned_abs() as f64).sum::<f64>())
        .fold(0.0, f64::max);
    let bits = n as f64 * (1.0 + r).log2() + 2.0;
    let count = (bits / 61.0).ceil() as usize + 1;

    let mut modulus = BigInt::one();
    let mut coeffs = vec![BigInt::zero(); n + 1];
    for prime in primes(count) {
        let residues = charpoly_mod(a, prime);
        let bp = BigInt::from(prime);
        let m_inv = inv_mod((&modulus % &bp).to_u64().expect("reduced"), prime);
        for (c, &res) in coeffs.iter_mut().zip(&residues) {
            let cur = (&*c % &bp).to_u64().expect("nonnegative residue");
            let delta = mul_mod((res + prime - cur) % prime, m_inv, prime);
            *c += &modulus * delta;
        }
        modulus *= bp;
    }
    let half = &modulus >> 1;
    for c in coeffs.iter_mut() {
        if *c > half {
            *c -= &modulus;
        }
    }
    coeffs
}

/// `c / 2^shift` as a float without intermediate overflow.
pub fn scaled_to_f64(c: &BigInt, shift: u64) -> f64 {
    if c.is_zero() {
        return 0.0;
    }
    let bits = c.bits();
    let drop = bits.saturating_sub(60);
    let top = (c.abs() >> drop).to_f64().expect("fits in 60 bits");
    let sign = if c.sign() == Sign::Minus { -1.0 } else { 1.0 };
    sign * top * 2f64.powf(drop as f64 - shift as f64)
}

pub fn poly_mul(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn small_primes() {
        let ps: Vec<u64> = (0..30).filter(|&n| is_prime(n)).collect();
        assert_eq!(ps, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        assert!(!is_prime(3_215_031_751)); // strong pseudoprime to bases 2, 3, 5, 7
        assert!(primes(3).iter().all(|&p| p < 1 << 62 && p > 1 << 61));
    }

    #[test]
    fn two_by_two() {
        // [[1,2],[3,4]] -> x^2 - 5x - 2
        let a = vec![vec![1, 2], vec![3, 4]];
        assert_eq!(charpoly(&a), big(&[-2, -5, 1]));
    }

    #[test]
    fn nilpotent_shift() {
        let n = 6;
        let a: Vec<Vec<i128>> = (0..n)
            .map(|i| (0..n).map(|j| i128::from(j == i + 1)).collect())
            .collect();
        let mut expected = vec![0; n + 1];
        expected[n] = 1;
        assert_eq!(charpoly(&a), big(&expected));
    }

    #[test]
    fn large_entries_need_several_primes() {
        // Companion matrix of (x - 2^70)(x + 3) = x^2 + (3 - 2^70) x - 3 * 2^70.
        let t: i128 = 1 << 70;
        let a = vec![vec![0, 3 * t], vec![1, t - 3]];
        let c = charpoly(&a);
        assert_eq!(c[0], BigInt::from(-3 * t));
        assert_eq!(c[1], BigInt::from(3 - t));
        assert_eq!(c[2], BigInt::one());
    }

    #[test]
    fn needs_row_swaps() {
        let a = vec![vec![2, 0, 1], vec![0, 0, 1], vec![5, 1, 3]];
        // det(xI - A) = x^3 - 5x^2 + 0x + 2 (checked by cofactor expansion)
        let c = charpoly(&a);
        let x = |v: i64| -> i64 {
            let m = [[v - 2, 0, -1], [0, v, -1], [-5, -1, v - 3]];
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        for v in -3..4 {
            let eval: BigInt = c
                .iter()
                .enumerate()
                .map(|(d, coef)| coef * BigInt::from(v).pow(d as u32))
                .sum();
            assert_eq!(eval, BigInt::from(x(v)));
        }
    }

    #[test]
    fn scaling_is_exact_for_powers() {
        assert_eq!(scaled_to_f64(&(BigInt::from(3) << 2000u32), 2001), 1.5);
        assert_eq!(scaled_to_f64(&BigInt::from(-5), 1), -2.5);
    }
}
