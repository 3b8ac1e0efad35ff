//! Gauss-Legendre rules on the reference interval [-1, 1].

use crate::error::{Error, Result};

pub const MAX_POINTS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Legendre polynomial P_n and its derivative at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

/// Gauss-Legendre rule with `n` points, nodes ascending.
pub fn gauss_rule(n: usize) -> Result<QuadratureRule> {
    if n == 0 || n > MAX_POINTS {
        return Err(Error::QuadratureOrder(n));
    }
    if n == 1 {
        return Ok(QuadratureRule { nodes: vec![0.0], weights: vec![2.0] });
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_point_rule() {
        let q = gauss_rule(1).unwrap();
        assert_eq!(q.nodes(), &[0.0]);
        assert_eq!(q.weights(), &[2.0]);
    }

    #[test]
    fn two_point_rule_closed_form() {
        let q = gauss_rule(2).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert_abs_diff_eq!(q.nodes()[0], -s, epsilon = 1e-15);
        assert_abs_diff_eq!(q.nodes()[1], s, epsilon = 1e-15);
        assert_abs_diff_eq!(q.weights()[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q.weights()[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn three_point_rule_integrates_quartic() {
        let q = gauss_rule(3).unwrap();
        assert_abs_diff_eq!(q.integrate(-1.0, 1.0, |x| x.powi(4)), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn five_point_rule_matches_known_values() {
        let q = gauss_rule(5).unwrap();
        let x2 = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
        let w2 = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
        assert_abs_diff_eq!(q.nodes()[3], x2, epsilon = 1e-15);
        assert_abs_diff_eq!(q.weights()[3], w2, epsilon = 1e-15);
        assert_abs_diff_eq!(q.weights()[2], 128.0 / 225.0, epsilon = 1e-15);
    }

    #[test]
    fn exactness_and_weight_sum_for_all_orders() {
        for n in 1..=MAX_POINTS {
            let q = gauss_rule(n).unwrap();
            let sum: f64 = q.weights().iter().sum();
            assert_abs_diff_eq!(sum, 2.0, epsilon = 1e-13);
            assert!(q.weights().iter().all(|&w| w > 0.0));
            assert!(q.nodes().windows(2).all(|w| w[0] < w[1]));
            // odd top degree integrates to zero, even degree 2n-2 to 2/(2n-1)
            let top = q.integrate(-1.0, 1.0, |x| x.powi(2 * n as i32 - 1));
            assert_abs_diff_eq!(top, 0.0, epsilon = 1e-13);
            let even = q.integrate(-1.0, 1.0, |x| x.powi(2 * n as i32 - 2));
            assert_abs_diff_eq!(even, 2.0 / (2.0 * n as f64 - 1.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn mapped_interval() {
        let q = gauss_rule(4).unwrap();
        assert_abs_diff_eq!(q.integrate(1.0, 3.0, |x| x * x * x), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_out_of_range() {
        assert_eq!(gauss_rule(0), Err(Error::QuadratureOrder(0)));
        assert_eq!(gauss_rule(31), Err(Error::QuadratureOrder(31)));
    }
}
