//! Helpers shared by the integration tests.
#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// The harmonic thermal kernel as a normalized density of (x, y).
///
/// In u = (x + y)/√2, v = (x − y)/√2 the endpoints are independent Gaussians
/// with variances coth(β/2) and tanh(β/2).
pub struct HarmonicEndpoints {
    var_u: f64,
    var_v: f64,
}

impl HarmonicEndpoints {
    pub fn new(beta: f64) -> Self {
        let t = (0.5 * beta).tanh();
        Self {
            var_u: 1.0 / t,
            var_v: t,
        }
    }

    pub fn density(&self, x: f64, y: f64) -> f64 {
        let u = (x + y) / 2f64.sqrt();
        let v = (x - y) / 2f64.sqrt();
        (-0.5 * (u * u / self.var_u + v * v / self.var_v)).exp()
            / (2.0 * std::f64::consts::PI * (self.var_u * self.var_v).sqrt())
    }

    /// Standard deviation of either marginal.
    pub fn marginal_sd(&self) -> f64 {
        (0.5 * (self.var_u + self.var_v)).sqrt()
    }
}

/// Composite Simpson rule on [a, b] × [c, d] with `n` (even) panels per side.
pub fn simpson_2d(f: impl Fn(f64, f64) -> f64, (a, b): (f64, f64), (c, d): (f64, f64), n: usize) -> f64 {
    let w = |i: usize| {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let hx = (b - a) / n as f64;
    let hy = (d - c) / n as f64;
    let mut total = 0.0;
    for i in 0..=n {
        let x = a + i as f64 * hx;
        for j in 0..=n {
            total += w(i) * w(j) * f(x, c + j as f64 * hy);
        }
    }
    total * hx * hy / 9.0
}

pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub min_expected: f64,
}

/// χ² of sampled endpoints against the closed-form harmonic kernel on a
/// `k × k` grid whose edges sit at the marginal quantiles i/k. Cell
/// probabilities come from Simpson integration; the outer cells are cut at
/// ±10 marginal standard deviations.
pub fn harmonic_endpoint_chi2(endpoints: &[(f64, f64)], beta: f64, k: usize) -> ChiSquare {
    let target = HarmonicEndpoints::new(beta);
    let sd = target.marginal_sd();
    let marginal = Normal::new(0.0, sd).unwrap();
    let mut edges = vec![-10.0 * sd];
    edges.extend((1..k).map(|i| marginal.inverse_cdf(i as f64 / k as f64)));
    edges.push(10.0 * sd);

    let cell = |x: f64| edges[1..k].partition_point(|&e| e <= x);
    let mut counts = vec![0.0; k * k];
    for &(x, y) in endpoints {
        counts[cell(x) * k + cell(y)] += 1.0;
    }
    let n = endpoints.len() as f64;
    let mut statistic = 0.0;
    let mut min_expected = f64::INFINITY;
    for i in 0..k {
        for j in 0..k {
            let prob = simpson_2d(
                |x, y| target.density(x, y),
                (edges[i], edges[i + 1]),
                (edges[j], edges[j + 1]),
                64,
            );
            let expected = n * prob;
            min_expected = min_expected.min(expected);
            statistic += (counts[i * k + j] - expected).powi(2) / expected;
        }
    }
    let dof = k * k - 1;
    let p_value = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic);
    ChiSquare {
        statistic,
        dof,
        p_value,
        min_expected,
    }
}

/// Eigenvalues of a symmetric 2×2 matrix [[a, b], [b, d]], ascending.
pub fn eigenvalues_2x2(a: f64, b: f64, d: f64) -> [f64; 2] {
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d).powi(2) + b * b).sqrt();
    [mean - r, mean + r]
}

/// Eigenvalues of a symmetric 3×3 matrix by the trigonometric solution of the
/// characteristic cubic, ascending.
pub fn eigenvalues_3x3(m: [[f64; 3]; 3]) -> [f64; 3] {
    let off = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if off == 0.0 {
        let mut d = [m[0][0], m[1][1], m[2][2]];
        d.sort_by(f64::total_cmp);
        return d;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * off;
    let p = (p2 / 6.0).sqrt();
    let b = |i: usize, j: usize| (m[i][j] - if i == j { q } else { 0.0 }) / p;
    let det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1))
        - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
        + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    let phi = (0.5 * det).clamp(-1.0, 1.0).acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [lo, 3.0 * q - hi - lo, hi]
}
