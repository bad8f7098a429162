//! Spectral radius of the linear-region matrix, computed two ways.
//!
//! The assembled route splits `Q` into strongly connected components (its
//! block-triangular form), takes the exact characteristic polynomial of each
//! block, reads off the multiplicity of the eigenvalue zero exactly and finds
//! the remaining roots numerically. The closed-form route multiplies the known
//! per-class factors. A plain dense eigendecomposition is reported as well,
//! but only as a diagnostic: defective zero eigenvalues make it inaccurate.

use nalgebra::{DMatrix, Schur};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use super::charpoly::{charpoly, poly_mul, scaled_to_f64};
use super::linear::LinearRegionSystem;
use crate::error::{Error, Result};

/// Agreement required between the two routes.
pub const ROUTE_TOL: f64 = 1e-8;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub rho: f64,
    /// Eigenvalues `[re, im]` from the assembled matrix.
    pub eigenvalues: Vec<[f64; 2]>,
    pub rho_closed_form: f64,
    pub closed_form_eigenvalues: Vec<[f64; 2]>,
    /// `|rho - rho_closed_form|`.
    pub route_agreement: f64,
    /// Whether the exact characteristic polynomial of `Q` equals the product
    /// of the closed-form factors.
    pub polynomials_match: bool,
    pub zero_multiplicity: usize,
    /// Spectral radius from a dense floating-point eigensolver, when it
    /// converged.
    pub rho_dense: Option<f64>,
}

impl SpectralReport {
    pub fn routes_agree(&self) -> bool {
        self.polynomials_match && self.route_agreement <= ROUTE_TOL
    }
}

/// Roots of a monic polynomial given lowest degree first (leading 1 implied by
/// the last coefficient).
fn roots(coeffs: &[f64]) -> Result<Vec<[f64; 2]>> {
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[deg];
    let mut companion = DMatrix::zeros(deg, deg);
    for i in 1..deg {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        companion[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let schur = Schur::try_new(companion, SCHUR_EPS, SCHUR_MAX_ITERS)
        .ok_or_else(|| Error::Convergence("companion eigenvalues did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().map(|z| [z.re, z.im]).collect())
}

fn radius(values: &[[f64; 2]]) -> f64 {
    values.iter().map(|[re, im]| re.hypot(*im)).fold(0.0, f64::max)
}

/// Splits off the factor `x^z` and returns `z` and the remaining polynomial.
fn strip_zeros(poly: &[BigInt]) -> (usize, &[BigInt]) {
    let z = poly.iter().take_while(|c| c.is_zero()).count();
    (z, &poly[z..])
}

/// Unscales a factor of `det(x I - 2^s Q)` into float coefficients in `lambda`.
fn unscale(poly: &[BigInt], bits: u32) -> Vec<f64> {
    let deg = poly.len() - 1;
    poly.iter()
        .enumerate()
        .map(|(j, c)| scaled_to_f64(c, bits as u64 * (deg - j) as u64))
        .collect()
}

/// Closed-form characteristic factor of a non-critical class with threshold
/// `l_k`, scaled like the exact matrix.
fn class_factor(l: usize, threshold: usize, p: i128, bits: u32) -> Vec<BigInt> {
    let mut poly = vec![BigInt::zero(); l];
    if threshold <= 1 || threshold > l {
        poly[l - 1] = BigInt::one();
        return poly;
    }
    // x^(L - l) (x^(l-1) + p sum_{i=0}^{l-2} 2^(s(l-2-i)) x^i)
    let shift = l - threshold;
    poly[shift + threshold - 1] = BigInt::one();
    for i in 0..=threshold - 2 {
        poly[shift + i] = BigInt::from(p) << (bits as usize * (threshold - 2 - i));
    }
    poly
}

/// Spectral report of `Q` with both routes.
pub fn spectral_report(sys: &LinearRegionSystem) -> Result<SpectralReport> {
    let n = sys.dim();
    let bits = sys.scale_bits;

    let mut graph = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for a in 0..n {
        for b in 0..n {
            if sys.q_exact[a][b] != 0 {
                graph.add_edge(nodes[a], nodes[b], ());
            }
        }
    }
    let mut total = vec![BigInt::one()];
    let mut eigenvalues = Vec::with_capacity(n);
    let mut zero_multiplicity = 0;
    for comp in tarjan_scc(&graph) {
        let ids: Vec<usize> = comp.iter().map(|v| v.index()).collect();
        let block: Vec<Vec<i128>> = ids
            .iter()
            .map(|&a| ids.iter().map(|&b| sys.q_exact[a][b]).collect())
            .collect();
        let poly = charpoly(&block);
        let (zeros, rest) = strip_zeros(&poly);
        zero_multiplicity += zeros;
        eigenvalues.extend(std::iter::repeat_n([0.0, 0.0], zeros));
        eigenvalues.extend(roots(&unscale(rest, bits))?);
        total = poly_mul(&total, &poly);
    }

    let mut expected = vec![BigInt::one()];
    let mut closed_form_eigenvalues = Vec::with_capacity(n);
    for (k, &threshold) in sys.thresholds.iter().enumerate() {
        let factor = if k == sys.m {
            class_factor(sys.l, 1, 0, bits)
        } else {
            class_factor(sys.l, threshold, sys.p_exact[k], bits)
        };
        let (zeros, rest) = strip_zeros(&factor);
        closed_form_eigenvalues.extend(std::iter::repeat_n([0.0, 0.0], zeros));
        closed_form_eigenvalues.extend(roots(&unscale(rest, bits))?);
        expected = poly_mul(&expected, &factor);
    }

    let rho_dense = Schur::try_new(sys.q.clone(), SCHUR_EPS, SCHUR_MAX_ITERS).map(|s| {
        let values: Vec<[f64; 2]> = s.complex_eigenvalues().iter().map(|z| [z.re, z.im]).collect();
        radius(&values)
    });

    let rho = radius(&eigenvalues);
    let rho_closed_form = radius(&closed_form_eigenvalues);
    Ok(SpectralReport {
        rho,
        eigenvalues,
        rho_closed_form,
        closed_form_eigenvalues,
        route_agreement: (rho - rho_closed_form).abs(),
        polynomials_match: total == expected,
        zero_multiplicity,
        rho_dense,
    })
}

/// Spectral radius of `Q`; fails if the two routes disagree.
pub fn spectral_radius(sys: &LinearRegionSystem) -> Result<f64> {
    let report = spectral_report(sys)?;
    if !report.routes_agree() {
        return Err(Error::Convergence(format!(
            "spectral routes disagree: {} vs {}",
            report.rho, report.rho_closed_form
        )));
    }
    Ok(report.rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::assemble_linear;
    use crate::model::{ClassSpec, NetworkConfig};
    use crate::relaxed::solve_rp;

    fn report(alpha: f64, l: usize, classes: &[(f64, f64)]) -> (SpectralReport, LinearRegionSystem) {
        let classes = classes.iter().map(|&(p, g)| ClassSpec::new(p, g)).collect();
        let cfg = NetworkConfig::new(100, alpha, l, classes).unwrap();
        let sol = solve_rp(&cfg).unwrap();
        let sys = assemble_linear(&cfg, &sol).unwrap();
        (spectral_report(&sys).unwrap(), sys)
    }

    #[test]
    fn single_class_is_nilpotent() {
        for (p, l) in [(0.7, 10), (1.0, 3), (0.2, 30)] {
            let (r, _) = report(0.5, l, &[(p, 1.0)]);
            assert_eq!(r.rho, 0.0);
            assert_eq!(r.zero_multiplicity, l - 1);
            assert!(r.routes_agree());
        }
    }

    #[test]
    fn threshold_two_class_contributes_minus_p() {
        // Class 0 (p = 0.7) is always scheduled from age 2 when the budget is
        // driven by a slow second class.
        let (r, sys) = report(0.7, 8, &[(0.7, 0.5), (0.1, 0.5)]);
        assert_eq!(sys.m, 1);
        assert_eq!(sys.thresholds[0], 2);
        assert!(r.routes_agree());
        assert!(r
            .eigenvalues
            .iter()
            .any(|[re, im]| (re + 0.7).abs() < 1e-12 && im.abs() < 1e-12));
        assert!((r.rho - 0.7).abs() < 1e-12);
    }

    #[test]
    fn reference_instance_contracts() {
        let (r, _) = report(0.5, 50, &[(0.5, 0.5), (0.8, 0.5)]);
        assert!(r.routes_agree());
        assert!(r.rho < 1.0);
        assert_eq!(r.eigenvalues.len(), 98);
    }
}
