//! Gauss–Legendre rules and the spherical-product rule on an ellipsoid.

use std::f64::consts::PI;

use nalgebra::Vector3;

/// A quadrature node in the reference configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureNode {
    pub point: Vector3<f64>,
    pub weight: f64,
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// ordered by increasing abscissa.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
    let mut rule = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi's initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
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
        rule[i] = (-x, w);
        rule[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        rule[n / 2].0 = 0.0;
    }
    rule
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Spherical-product rule on the solid ellipsoid with the given semi-axes.
///
/// `order` Gauss–Legendre points are used in the radial coordinate and in
/// `cos θ`, and `2·order` equally spaced points in the azimuth (the periodic
/// Gauss rule). The rule integrates polynomials of total degree `2·order − 3`
/// exactly, and every node lies strictly inside the ellipsoid.
pub fn ellipsoid_rule(semi_axes: &Vector3<f64>, order: usize) -> Vec<QuadratureNode> {
    let radial = gauss_legendre(order);
    let polar = gauss_legendre(order);
    let n_phi = 2 * order;
    let w_phi = 2.0 * PI / n_phi as f64;
    let jac = semi_axes.x * semi_axes.y * semi_axes.z;

    let mut nodes = Vec::with_capacity(order * order * n_phi);
    for &(t, wt) in &radial {
        let rho = 0.5 * (1.0 + t);
        let w_rho = 0.5 * wt * rho * rho;
        for &(u, wu) in &polar {
            let s = (1.0 - u * u).sqrt();
            for j in 0..n_phi {
                let phi = w_phi * (j as f64 + 0.5);
                let point = Vector3::new(
                    semi_axes.x * rho * s * phi.cos(),
                    semi_axes.y * rho * s * phi.sin(),
                    semi_axes.z * rho * u,
                );
                nodes.push(QuadratureNode {
                    point,
                    weight: jac * w_rho * wu * w_phi,
                });
            }
        }
    }
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_monomials() {
        for n in 1..=12 {
            let rule = gauss_legendre(n);
            for k in 0..(2 * n) {
                let quad: f64 = rule.iter().map(|&(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((quad - exact).abs() < 1e-14, "n={n} k={k}: {quad} vs {exact}");
            }
        }
    }

    #[test]
    fn known_three_point_rule() {
        let rule = gauss_legendre(3);
        let x = (0.6f64).sqrt();
        assert!((rule[0].0 + x).abs() < 1e-15);
        assert!((rule[1].0).abs() < 1e-15);
        assert!((rule[1].1 - 8.0 / 9.0).abs() < 1e-15);
        assert!((rule[2].1 - 5.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn nodes_inside_and_weights_sum_to_volume() {
        let axes = Vector3::new(1.3, 0.9, 0.7);
        for order in 2..=8 {
            let nodes = ellipsoid_rule(&axes, order);
            let vol: f64 = nodes.iter().map(|n| n.weight).sum();
            let exact = 4.0 * PI / 3.0 * axes.product();
            assert!((vol - exact).abs() <= 1e-12 * exact);
            for n in &nodes {
                let p = n.point.component_div(&axes);
                assert!(p.norm_squared() < 1.0);
                assert!(n.weight > 0.0);
            }
        }
    }
}
