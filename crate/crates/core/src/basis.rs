//! Orthonormal single-particle bases (Hermite functions and Fourier box modes)
//! and the quadrature grids used for their inner products.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Largest Hermite order accepted by [`hermite_function`] (exclusive).
pub const MAX_HERMITE_ORDER: usize = 256;

pub const DEFAULT_FOURIER_RESOLUTION: usize = 2048;
pub const DEFAULT_HERMITE_RESOLUTION: usize = 256;

/// Tolerance on |Gram - I| that the default grids must meet.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

// π^(-1/4)
const PI_M4: f64 = 0.751_125_544_464_942_5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisFamily {
    /// Hermite functions on the real line.
    Hermite,
    /// Sine/cosine modes on the box `[-half_width, half_width]`.
    Fourier { half_width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    pub family: BasisFamily,
    pub size: usize,
}

impl BasisSet {
    pub fn hermite(size: usize) -> Result<Self> {
        Self::new(BasisFamily::Hermite, size)
    }

    pub fn fourier(size: usize, half_width: f64) -> Result<Self> {
        Self::new(BasisFamily::Fourier { half_width }, size)
    }

    pub fn new(family: BasisFamily, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidConfig("basis size must be at least 1".into()));
        }
        match family {
            BasisFamily::Hermite if size >= MAX_HERMITE_ORDER => {
                return Err(Error::BasisOrderOverflow {
                    n: size - 1,
                    max: MAX_HERMITE_ORDER,
                })
            }
            BasisFamily::Fourier { half_width } if !(half_width > 0.0 && half_width.is_finite()) => {
                return Err(Error::InvalidConfig(format!(
                    "Fourier half-width must be positive, got {half_width}"
                )))
            }
            _ => {}
        }
        Ok(Self { family, size })
    }

    /// Natural domain of the functions; `None` for the whole real line.
    pub fn domain(&self) -> Option<(f64, f64)> {
        match self.family {
            BasisFamily::Hermite => None,
            BasisFamily::Fourier { half_width } => Some((-half_width, half_width)),
        }
    }

    /// ψ_j(x). Fourier modes vanish outside their box.
    pub fn eval(&self, j: usize, x: f64) -> f64 {
        match self.family {
            BasisFamily::Hermite => {
                let mut buf = vec![0.0; j + 1];
                hermite_fill(x, &mut buf);
                buf[j]
            }
            BasisFamily::Fourier { half_width } => {
                if x.abs() > half_width {
                    0.0
                } else {
                    fourier_unchecked(j, x, half_width)
                }
            }
        }
    }

    /// Fills `values[j] = ψ_j(x)` for `j < values.len()`.
    pub fn eval_all(&self, x: f64, values: &mut [f64]) {
        match self.family {
            BasisFamily::Hermite => hermite_fill(x, values),
            BasisFamily::Fourier { half_width } => {
                if x.abs() > half_width {
                    values.fill(0.0);
                } else {
                    for (j, v) in values.iter_mut().enumerate() {
                        *v = fourier_unchecked(j, x, half_width);
                    }
                }
            }
        }
    }

    /// Values and first derivatives of ψ_0..ψ_{len-1} at `x`.
    pub fn eval_all_with_derivative(&self, x: f64, values: &mut [f64], derivs: &mut [f64]) {
        debug_assert_eq!(values.len(), derivs.len());
        let m = values.len();
        match self.family {
            BasisFamily::Hermite => {
                let mut ext = vec![0.0; m + 1];
                hermite_fill(x, &mut ext);
                values.copy_from_slice(&ext[..m]);
                hermite_derivatives_from(&ext, derivs);
            }
            BasisFamily::Fourier { half_width } => {
                if x.abs() > half_width {
                    values.fill(0.0);
                    derivs.fill(0.0);
                    return;
                }
                for j in 0..m {
                    let (v, d) = fourier_with_derivative(j, x, half_width);
                    values[j] = v;
                    derivs[j] = d;
                }
            }
        }
    }
}

/// Normalized Hermite function H_n(x) = (2ⁿ n! √π)^(-1/2) e^(-x²/2) h_n(x).
pub fn hermite_function(n: usize, x: f64) -> Result<f64> {
    if n >= MAX_HERMITE_ORDER {
        return Err(Error::BasisOrderOverflow {
            n,
            max: MAX_HERMITE_ORDER,
        });
    }
    let mut buf = vec![0.0; n + 1];
    hermite_fill(x, &mut buf);
    Ok(buf[n])
}

/// H_0..H_{len-1} at `x` by the recurrence on normalized functions
/// H_{n+1} = x √(2/(n+1)) H_n − √(n/(n+1)) H_{n−1}.
pub fn hermite_fill(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = PI_M4 * (-0.5 * x * x).exp();
    if out.len() == 1 {
        return;
    }
    out[1] = std::f64::consts::SQRT_2 * x * out[0];
    for n in 1..out.len() - 1 {
        let nf = n as f64;
        out[n + 1] = x * (2.0 / (nf + 1.0)).sqrt() * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
    }
}

/// dH_n/dx = √(n/2) H_{n−1} − √((n+1)/2) H_{n+1}; `values` must hold one more
/// order than `derivs`.
pub fn hermite_derivatives_from(values: &[f64], derivs: &mut [f64]) {
    assert!(values.len() > derivs.len());
    for (n, d) in derivs.iter_mut().enumerate() {
        let nf = n as f64;
        let down = if n == 0 { 0.0 } else { (nf / 2.0).sqrt() * values[n - 1] };
        *d = down - ((nf + 1.0) / 2.0).sqrt() * values[n + 1];
    }
}

/// Fourier box mode: j = 0 constant, odd j sine, even j cosine.
pub fn fourier_mode(j: usize, x: f64, half_width: f64) -> Result<f64> {
    if x.abs() > half_width {
        return Err(Error::Domain { x, half_width });
    }
    Ok(fourier_unchecked(j, x, half_width))
}

/// Spatial frequency index of mode `j` (mode pair 2k−1, 2k share frequency k).
pub fn fourier_frequency(j: usize) -> usize {
    j.div_ceil(2)
}

fn fourier_unchecked(j: usize, x: f64, l: f64) -> f64 {
    fourier_with_derivative(j, x, l).0
}

fn fourier_with_derivative(j: usize, x: f64, l: f64) -> (f64, f64) {
    if j == 0 {
        return (1.0 / (2.0 * l).sqrt(), 0.0);
    }
    let k = fourier_frequency(j) as f64 * PI / l;
    let norm = 1.0 / l.sqrt();
    let (s, c) = (k * x).sin_cos();
    if j % 2 == 1 {
        (norm * s, norm * k * c)
    } else {
        (norm * c, -norm * k * s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Interval the rule integrates over; infinite ends for Gauss–Hermite.
    pub domain: (f64, f64),
}

impl QuadratureGrid {
    /// Trapezoid rule with `n` equally spaced points including both ends.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 2 || !(b > a) {
            return Err(Error::UnderResolvedGrid(format!(
                "uniform grid needs n >= 2 and b > a (n = {n}, [{a}, {b}])"
            )));
        }
        let h = (b - a) / (n - 1) as f64;
        let nodes = (0..n).map(|i| a + h * i as f64).collect();
        let weights = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
            .collect();
        Ok(Self {
            nodes,
            weights,
            domain: (a, b),
        })
    }

    /// Gauss–Hermite rule with the e^(−x²) weight folded into the weights,
    /// so that Σ w_i g(x_i) ≈ ∫ g(x) dx for g decaying like a Gaussian.
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::UnderResolvedGrid(format!(
                "Gauss-Hermite rule needs at least 2 nodes, got {n}"
            )));
        }
        if n > 600 {
            return Err(Error::BasisOrderOverflow { n, max: 600 });
        }
        let (nodes, weights) = gauss_hermite_nodes(n);
        Ok(Self {
            nodes,
            weights,
            domain: (f64::NEG_INFINITY, f64::INFINITY),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Roots of H_n by Newton iteration from the classical asymptotic starting
/// guesses; weights are 1/(n H_{n−1}(x_i)²), i.e. the Gauss weights times e^{x_i²}.
fn gauss_hermite_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let half = n.div_ceil(2);
    let mut buf = vec![0.0; n + 1];
    let mut z = 0.0;
    for i in 0..half {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        for _ in 0..100 {
            hermite_fill(z, &mut buf);
            // H_n' = √(2n) H_{n−1} − z H_n
            let deriv = (2.0 * nf).sqrt() * buf[n - 1] - z * buf[n];
            let step = buf[n] / deriv;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        hermite_fill(z, &mut buf);
        let weight = 1.0 / (nf * buf[n - 1] * buf[n - 1]);
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    if n % 2 == 1 {
        x[half - 1] = 0.0;
    }
    // Ascending order.
    x.reverse();
    w.reverse();
    (x, w)
}

/// Default quadrature for a basis: trapezoid on the Fourier box, Gauss–Hermite otherwise.
pub fn make_grid(basis: &BasisSet, resolution: usize) -> Result<QuadratureGrid> {
    check_resolution(basis, resolution)?;
    match basis.family {
        BasisFamily::Fourier { half_width } => {
            QuadratureGrid::uniform(-half_width, half_width, resolution)
        }
        BasisFamily::Hermite => QuadratureGrid::gauss_hermite(resolution),
    }
}

pub fn default_grid(basis: &BasisSet) -> Result<QuadratureGrid> {
    let resolution = match basis.family {
        BasisFamily::Fourier { .. } => DEFAULT_FOURIER_RESOLUTION,
        BasisFamily::Hermite => DEFAULT_HERMITE_RESOLUTION.max(2 * basis.size + 8),
    };
    make_grid(basis, resolution)
}

fn check_resolution(basis: &BasisSet, resolution: usize) -> Result<()> {
    if resolution < 2 {
        return Err(Error::UnderResolvedGrid(format!(
            "resolution {resolution} < 2"
        )));
    }
    match basis.family {
        BasisFamily::Fourier { .. } => {
            let freq = fourier_frequency(basis.size - 1);
            // Points per wavelength of the fastest mode: (resolution − 1) / freq.
            if freq > 0 && resolution - 1 < 4 * freq {
                return Err(Error::UnderResolvedGrid(format!(
                    "{resolution} points give fewer than 4 per oscillation of mode {}",
                    basis.size - 1
                )));
            }
        }
        BasisFamily::Hermite => {
            if resolution < 2 * basis.size {
                return Err(Error::UnderResolvedGrid(format!(
                    "{resolution} Gauss-Hermite nodes cannot resolve {} Hermite functions",
                    basis.size
                )));
            }
        }
    }
    Ok(())
}

/// Quadrature estimate of ∫ψ_j ψ_k dx for all j, k < M.
pub fn gram_matrix(basis: &BasisSet, grid: &QuadratureGrid) -> Result<Matrix> {
    if let Some((lo, hi)) = basis.domain() {
        let outside = grid
            .nodes
            .iter()
            .any(|&x| x < lo - 1e-12 || x > hi + 1e-12);
        if outside {
            return Err(Error::GridIncompatible(format!(
                "grid extends beyond the Fourier box [{lo}, {hi}]"
            )));
        }
    }
    let m = basis.size;
    let mut gram = Matrix::zeros(m, m);
    let mut vals = vec![0.0; m];
    for (&x, &w) in grid.nodes.iter().zip(&grid.weights) {
        basis.eval_all(x, &mut vals);
        for j in 0..m {
            let wj = w * vals[j];
            for k in j..m {
                gram[(j, k)] += wj * vals[k];
            }
        }
    }
    for j in 0..m {
        for k in 0..j {
            gram[(j, k)] = gram[(k, j)];
        }
    }
    Ok(gram)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// h_n(x) by the physicists' recurrence, scaled by e^{-x²/2}/√(2ⁿ n! √π)
    /// with the factorial accumulated in log space.
    fn closed_form(n: usize, x: f64) -> f64 {
        let mut h_prev = 1.0f64;
        let mut h = 2.0 * x;
        if n == 0 {
            h = 1.0;
        } else {
            for k in 1..n {
                let next = 2.0 * x * h - 2.0 * k as f64 * h_prev;
                h_prev = h;
                h = next;
            }
        }
        let log_norm = 0.5
            * (n as f64 * 2f64.ln()
                + (1..=n).map(|k| (k as f64).ln()).sum::<f64>()
                + 0.5 * PI.ln());
        h * (-0.5 * x * x - log_norm).exp()
    }

    #[test]
    fn hermite_examples() {
        assert!((hermite_function(0, 0.0).unwrap() - PI.powf(-0.25)).abs() < 1e-15);
        assert!((hermite_function(0, 0.0).unwrap() - 0.751_125_5).abs() < 1e-7);
        assert_eq!(hermite_function(1, 0.0).unwrap(), 0.0);
        // h_5(x) = 32x⁵ − 160x³ + 120x
        let x = 1.3f64;
        let h5 = 32.0 * x.powi(5) - 160.0 * x.powi(3) + 120.0 * x;
        let expected = h5 * (-x * x / 2.0).exp() / (32.0 * 120.0 * PI.sqrt()).sqrt();
        let got = hermite_function(5, x).unwrap();
        assert!((got - expected).abs() < 1e-14 * expected.abs().max(1.0), "{got} vs {expected}");
    }

    #[test]
    fn hermite_overflow_guard() {
        assert!(matches!(
            hermite_function(MAX_HERMITE_ORDER, 0.1),
            Err(Error::BasisOrderOverflow { .. })
        ));
        assert!(hermite_function(MAX_HERMITE_ORDER - 1, 0.1).is_ok());
    }

    #[test]
    fn hermite_recurrence_matches_closed_form() {
        for n in [0usize, 1, 2, 7, 20, 40, 60] {
            for &x in &[-9.5, -3.3, -0.7, 0.0, 0.4, 2.2, 6.1, 10.0] {
                let got = hermite_function(n, x).unwrap();
                let want = closed_form(n, x);
                let scale = want.abs().max(1e-300);
                // Near roots the relative measure is meaningless; compare against the
                // local envelope instead.
                let envelope = (0..=n).map(|k| closed_form(k, x).abs()).fold(0.0, f64::max);
                let err = (got - want).abs() / scale.max(envelope * 1e-3);
                assert!(err < 1e-10, "n={n} x={x} got={got} want={want}");
            }
        }
    }

    #[test]
    fn hermite_parity() {
        for n in 0..30 {
            for &x in &[0.3, 1.7, 4.4] {
                let a = hermite_function(n, x).unwrap();
                let b = hermite_function(n, -x).unwrap();
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                assert!((b - sign * a).abs() <= 1e-15 * a.abs().max(1e-300) + 1e-300);
            }
        }
    }

    #[test]
    fn hermite_derivative_matches_finite_difference() {
        let basis = BasisSet::hermite(12).unwrap();
        let mut v = vec![0.0; 12];
        let mut d = vec![0.0; 12];
        let h = 1e-5;
        for &x in &[-2.3, 0.0, 0.9, 3.1] {
            basis.eval_all_with_derivative(x, &mut v, &mut d);
            for j in 0..12 {
                let fd = (basis.eval(j, x + h) - basis.eval(j, x - h)) / (2.0 * h);
                assert!((fd - d[j]).abs() < 1e-8, "j={j} x={x}");
            }
        }
    }

    #[test]
    fn fourier_examples() {
        assert!((fourier_mode(0, 0.3, 10.0).unwrap() - 1.0 / 20f64.sqrt()).abs() < 1e-15);
        assert!((fourier_mode(0, 0.3, 10.0).unwrap() - 0.223_606_8).abs() < 1e-7);
        assert_eq!(fourier_mode(1, 0.0, 10.0).unwrap(), 0.0);
        assert!((fourier_mode(2, 0.0, 10.0).unwrap() - 1.0 / 10f64.sqrt()).abs() < 1e-15);
        assert!(matches!(fourier_mode(3, 10.5, 10.0), Err(Error::Domain { .. })));
        let b = BasisSet::fourier(5, 10.0).unwrap();
        assert_eq!(b.eval(2, 11.0), 0.0);
    }

    #[test]
    fn fourier_gram_default() {
        let b = BasisSet::fourier(40, 10.0).unwrap();
        let g = gram_matrix(&b, &make_grid(&b, 2048).unwrap()).unwrap();
        assert!(g.max_abs_diff(&Matrix::identity(40)) < 1e-10);
    }

    #[test]
    fn fourier_sine_norm() {
        let b = BasisSet::fourier(3, 10.0).unwrap();
        let g = gram_matrix(&b, &default_grid(&b).unwrap()).unwrap();
        assert!((g[(1, 1)] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn hermite_gram_against_dense_oracle() {
        let b = BasisSet::hermite(10).unwrap();
        let g = gram_matrix(&b, &make_grid(&b, 64).unwrap()).unwrap();
        assert!(g.max_abs_diff(&Matrix::identity(10)) < 1e-8);
        // Independent route: trapezoid at 10x resolution over [-15, 15].
        let dense = QuadratureGrid::uniform(-15.0, 15.0, 640).unwrap();
        let g_dense = gram_matrix(&b, &dense).unwrap();
        assert!(g.max_abs_diff(&g_dense) < 1e-8);
    }

    #[test]
    fn hermite_default_grid_is_orthonormal_for_large_sizes() {
        for m in [10, 40, 60, 140] {
            let b = BasisSet::hermite(m).unwrap();
            let g = gram_matrix(&b, &default_grid(&b).unwrap()).unwrap();
            assert!(
                g.max_abs_diff(&Matrix::identity(m)) < ORTHONORMALITY_TOL,
                "M = {m}"
            );
        }
    }

    #[test]
    fn gauss_hermite_grid_invariants() {
        let g = QuadratureGrid::gauss_hermite(257).unwrap();
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(g.weights.iter().all(|&w| w > 0.0));
        // ∫ e^{-x²} dx = √π
        assert!((g.integrate(|x| (-x * x).exp()) - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn under_resolved() {
        let b = BasisSet::fourier(40, 10.0).unwrap();
        assert!(matches!(make_grid(&b, 2), Err(Error::UnderResolvedGrid(_))));
        let h = BasisSet::hermite(40).unwrap();
        assert!(matches!(make_grid(&h, 20), Err(Error::UnderResolvedGrid(_))));
    }

    #[test]
    fn symmetric_grid_kills_odd_products() {
        let b = BasisSet::hermite(2).unwrap();
        let grid = QuadratureGrid::uniform(-12.0, 12.0, 8).unwrap();
        let g = gram_matrix(&b, &grid).unwrap();
        assert!(g[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn fourier_rejects_wide_grid() {
        let b = BasisSet::fourier(3, 1.0).unwrap();
        let grid = QuadratureGrid::uniform(-2.0, 2.0, 100).unwrap();
        assert!(matches!(gram_matrix(&b, &grid), Err(Error::GridIncompatible(_))));
    }
}
