//! Gauss-Legendre rules on intervals, squares and triangles.

use crate::error::{Error, Result};

/// A point-weight rule in physical coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }

    pub fn append(&mut self, other: &QuadRule) {
        self.points.extend_from_slice(&other.points);
        self.weights.extend_from_slice(&other.weights);
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]` with `n` points (1..=6).
pub fn gauss_01(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, w): (&[f64], &[f64]) = match n {
        1 => (&[0.0], &[2.0]),
        2 => (&[-0.577_350_269_189_625_8, 0.577_350_269_189_625_8], &[1.0, 1.0]),
        3 => (
            &[-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4],
            &[5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0],
        ),
        4 => (
            &[
                -0.861_136_311_594_052_6,
                -0.339_981_043_584_856_3,
                0.339_981_043_584_856_3,
                0.861_136_311_594_052_6,
            ],
            &[
                0.347_854_845_137_453_85,
                0.652_145_154_862_546_1,
                0.652_145_154_862_546_1,
                0.347_854_845_137_453_85,
            ],
        ),
        5 => (
            &[
                -0.906_179_845_938_664,
                -0.538_469_310_105_683,
                0.0,
                0.538_469_310_105_683,
                0.906_179_845_938_664,
            ],
            &[
                0.236_926_885_056_189_08,
                0.478_628_670_499_366_47,
                0.568_888_888_888_888_9,
                0.478_628_670_499_366_47,
                0.236_926_885_056_189_08,
            ],
        ),
        6 => (
            &[
                -0.932_469_514_203_152,
                -0.661_209_386_466_264_5,
                -0.238_619_186_083_196_9,
                0.238_619_186_083_196_9,
                0.661_209_386_466_264_5,
                0.932_469_514_203_152,
            ],
            &[
                0.171_324_492_379_170_35,
                0.360_761_573_048_138_6,
                0.467_913_934_572_691,
                0.467_913_934_572_691,
                0.360_761_573_048_138_6,
                0.171_324_492_379_170_35,
            ],
        ),
        _ => {
            return Err(Error::Parameter(format!(
                "quadrature order {n} not supported (1..=6)"
            )))
        }
    };
    Ok((
        x.iter().map(|&t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|&t| 0.5 * t).collect(),
    ))
}

/// Tensor rule on the rectangle `[lo, hi]`.
pub fn tensor_rule(n: usize, lo: [f64; 2], hi: [f64; 2]) -> Result<QuadRule> {
    let (x, w) = gauss_01(n)?;
    let (dx, dy) = (hi[0] - lo[0], hi[1] - lo[1]);
    let mut rule = QuadRule::default();
    for (yj, wj) in x.iter().zip(&w) {
        for (xi, wi) in x.iter().zip(&w) {
            rule.points.push([lo[0] + dx * xi, lo[1] + dy * yj]);
            rule.weights.push(wi * wj * dx * dy);
        }
    }
    Ok(rule)
}

/// Collapsed (Duffy) tensor rule on a triangle, exact for polynomials of
/// degree `2n - 2`.
pub fn triangle_rule(n: usize, a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Result<QuadRule> {
    let (x, w) = gauss_01(n)?;
    let e1 = [b[0] - a[0], b[1] - a[1]];
    let e2 = [c[0] - a[0], c[1] - a[1]];
    let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
    let mut rule = QuadRule::default();
    for (u, wu) in x.iter().zip(&w) {
        for (v, wv) in x.iter().zip(&w) {
            // (u, v) in the square -> (s, t) = (u, (1 - u) v) in the reference triangle.
            let s = *u;
            let t = (1.0 - u) * v;
            rule.points.push([a[0] + s * e1[0] + t * e2[0], a[1] + s * e1[1] + t * e2[1]]);
            rule.weights.push(wu * wv * (1.0 - u) * jac);
        }
    }
    Ok(rule)
}

/// Rule on the segment `[a, b]` with arc-length weights.
pub fn segment_rule(n: usize, a: [f64; 2], b: [f64; 2]) -> Result<QuadRule> {
    let (x, w) = gauss_01(n)?;
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    Ok(QuadRule {
        points: x.iter().map(|t| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]).collect(),
        weights: w.iter().map(|wi| wi * len).collect(),
    })
}
