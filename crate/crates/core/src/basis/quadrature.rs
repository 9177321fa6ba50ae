//! Quadrature on polygons (Duffy-collapsed Gauss on an ear-clipping
//! sub-triangulation) and on straight facets.

use super::legendre::gauss_legendre;
use super::triangulate::triangulate_polygon;
use super::BasisError;
use crate::geometry::Point2;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub points: Vec<Point2>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(Point2) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }
}

/// Gauss points on [0, 1] with weights summing to one.
fn unit_gauss(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (x.iter().map(|t| 0.5 * (t + 1.0)).collect(), w.iter().map(|w| 0.5 * w).collect())
}

/// Rule exact for total degree `q` on the triangle `(v0, v1, v2)`.
pub fn triangle_quadrature(tri: &[Point2; 3], q: usize) -> QuadRule {
    let n = (q + 2).div_ceil(2);
    let (s, ws) = unit_gauss(n);
    let [v0, v1, v2] = *tri;
    let twice_area = (v1 - v0).cross(v2 - v0).abs();
    let mut rule = QuadRule { points: Vec::with_capacity(n * n), weights: Vec::with_capacity(n * n) };
    for (u, wu) in s.iter().zip(&ws) {
        for (v, wv) in s.iter().zip(&ws) {
            // (u, v) in [0,1]^2 -> v0 + u (v1 - v0) + u v (v2 - v1), jacobian u * 2|T|
            rule.points.push(v0 + (v1 - v0) * *u + (v2 - v1) * (u * v));
            rule.weights.push(wu * wv * u * twice_area);
        }
    }
    rule
}

/// Rule exact for total degree `q` on a simple counter-clockwise polygon.
pub fn volume_quadrature(pts: &[Point2], q: usize) -> Result<QuadRule, BasisError> {
    let tris = triangulate_polygon(pts)?;
    let mut rule = QuadRule { points: Vec::new(), weights: Vec::new() };
    for t in &tris {
        let r = triangle_quadrature(t, q);
        rule.points.extend(r.points);
        rule.weights.extend(r.weights);
    }
    Ok(rule)
}

/// Gauss rule with `ceil((q+1)/2)` points on the segment `a -> b`.
pub fn facet_quadrature(a: Point2, b: Point2, q: usize) -> QuadRule {
    let n = (q + 1).div_ceil(2).max(1);
    let (s, w) = unit_gauss(n);
    let len = a.dist(b);
    QuadRule {
        points: s.iter().map(|&t| a.lerp(b, t)).collect(),
        weights: w.iter().map(|w| w * len).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn unit_square_moments() {
        let sq = [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)];
        let r = volume_quadrature(&sq, 0).unwrap();
        assert!((r.measure() - 1.0).abs() < 1e-15);
        let r = volume_quadrature(&sq, 4).unwrap();
        assert!((r.integrate(|x| x.x * x.x * x.y * x.y) - 1.0 / 9.0).abs() < 1e-13);
    }

    #[test]
    fn right_triangle_area() {
        let r = triangle_quadrature(&[p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)], 0);
        assert!((r.measure() - 0.5).abs() < 1e-15);
        assert!(r.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn facet_rules() {
        let r = facet_quadrature(p(0.0, 0.0), p(3.0, 4.0), 0);
        assert!((r.measure() - 5.0).abs() < 1e-14);
        let r = facet_quadrature(p(0.0, 0.0), p(1.0, 0.0), 3);
        assert_eq!(r.len(), 2);
        assert!((r.integrate(|x| x.x.powi(3)) - 0.25).abs() < 1e-14);
    }
}
