//! Gauss–Legendre quadrature on finite intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// User-facing quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Number of Gauss–Legendre nodes.
    pub nodes: usize,
    /// When set, every integral is also evaluated with half the nodes and the
    /// absolute difference must not exceed this tolerance.
    pub error_tolerance: Option<f64>,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes: 64,
            error_tolerance: None,
        }
    }
}

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule by Newton iteration on the Legendre polynomial,
    /// starting from Tricomi's approximation of the roots.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("quadrature needs at least one node"));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        let m = n.div_ceil(2);
        for i in 0..m {
            // i-th root, counted from the right end
            let k = i as f64 + 1.0;
            let mut x = (std::f64::consts::PI * (k - 0.25) / (nf + 0.5)).cos()
                * (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// A prepared integrator: the main rule plus, optionally, a coarser rule used
/// for an error estimate.
#[derive(Debug, Clone)]
pub struct Quadrature {
    rule: GaussLegendre,
    check: Option<(GaussLegendre, f64)>,
}

impl Quadrature {
    pub fn new(config: &QuadratureConfig) -> Result<Self> {
        let rule = GaussLegendre::new(config.nodes)?;
        let check = match config.error_tolerance {
            Some(tol) if tol > 0.0 => Some((GaussLegendre::new((config.nodes / 2).max(1))?, tol)),
            Some(tol) => {
                return Err(Error::config(format!(
                    "quadrature error tolerance must be positive, got {tol}"
                )))
            }
            None => None,
        };
        Ok(Self { rule, check })
    }

    pub fn rule(&self) -> &GaussLegendre {
        &self.rule
    }

    /// Integrates `f` over `[a, b]`, failing if the error estimate exceeds the
    /// configured tolerance.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> Result<f64> {
        let value = self.rule.integrate(a, b, &mut f);
        if let Some((coarse, tol)) = &self.check {
            let estimate = (value - coarse.integrate(a, b, &mut f)).abs();
            if !(estimate <= *tol) {
                return Err(Error::Numerical {
                    message: format!(
                        "quadrature did not converge on [{a}, {b}]: error estimate {estimate:.3e} exceeds {tol:.3e}"
                    ),
                    estimate,
                });
            }
        }
        if !value.is_finite() {
            return Err(Error::Numerical {
                message: format!("quadrature produced a non-finite value on [{a}, {b}]"),
                estimate: f64::INFINITY,
            });
        }
        Ok(value)
    }
}

impl Default for Quadrature {
    fn default() -> Self {
        Self::new(&QuadratureConfig::default()).expect("default quadrature is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 5, 16, 64, 128] {
            let rule = GaussLegendre::new(n).unwrap();
            let s: f64 = rule.weights().iter().sum();
            assert_relative_eq!(s, 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let rule = GaussLegendre::new(8).unwrap();
        // x^15 is odd so 0; x^14 integrates to 2/15
        assert!(rule.integrate(-1.0, 1.0, |x| x.powi(15)).abs() < 1e-14);
        assert_relative_eq!(rule.integrate(-1.0, 1.0, |x| x.powi(14)), 2.0 / 15.0, epsilon = 1e-13);
        assert_relative_eq!(rule.integrate(0.0, 3.0, |x| x * x), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn three_point_rule_matches_tabulated_values() {
        let rule = GaussLegendre::new(3).unwrap();
        let r = (3.0f64 / 5.0).sqrt();
        assert_relative_eq!(rule.nodes()[0], -r, epsilon = 1e-15);
        assert_eq!(rule.nodes()[1], 0.0);
        assert_relative_eq!(rule.weights()[0], 5.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(rule.weights()[1], 8.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn smooth_integrand_converges() {
        let q = Quadrature::new(&QuadratureConfig::default()).unwrap();
        let v = q.integrate(0.0, 5.0, |x| (-x).exp()).unwrap();
        assert_relative_eq!(v, 1.0 - (-5.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn error_check_reports_estimate() {
        let q = Quadrature::new(&QuadratureConfig {
            nodes: 4,
            error_tolerance: Some(1e-12),
        })
        .unwrap();
        match q.integrate(0.0, 1.0, |x| x.sqrt()) {
            Err(Error::Numerical { estimate, .. }) => assert!(estimate > 1e-12),
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }

    #[test]
    fn zero_nodes_rejected() {
        assert!(GaussLegendre::new(0).is_err());
    }
}
