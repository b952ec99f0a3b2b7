//! Quantum flows: monotone 1-D maps `f` applied to wavefunctions as
//! ψ ↦ ψ(f(x))·√f′(x), which preserves L² inner products whenever `f` is a
//! bijection of the real line.
//!
//! The map is a sum of shifted `tanh` ramps on a uniform sublattice,
//! f(x) = Σ_i C_i tanh(x − x_i), optionally with an identity term added.

use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::error::{Error, Result};

pub const DEFAULT_FLOW_INTERVALS: usize = 400;
pub const DEFAULT_FLOW_RANGE: (f64, f64) = (-10.0, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowVariant {
    /// f(x) = Σ C_i tanh(x − x_i); bounded, so not onto ℝ.
    TanhSum,
    /// f(x) = x + Σ C_i tanh(x − x_i); a strict bijection of ℝ.
    AffinePlusSum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowMap {
    pub variant: FlowVariant,
    pub lower: f64,
    pub upper: f64,
    nodes: Vec<f64>,
    coefficients: Vec<f64>,
}

/// f, f′ and f″ at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowPoint {
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

/// Sensitivities of f and f′ to each C_i at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowParamGradient {
    /// ∂f/∂C_i = tanh(x − x_i)
    pub value: Vec<f64>,
    /// ∂f′/∂C_i = sech²(x − x_i)
    pub slope: Vec<f64>,
}

fn sublattice(lower: f64, upper: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals)
        .map(|i| lower + (upper - lower) * i as f64 / intervals as f64)
        .collect()
}

impl FlowMap {
    /// Flow near the identity: zero coefficients for `AffinePlusSum`; for
    /// `TanhSum`, uniform C_i = (b − a)/(2n), which makes f′ ≈ 1 in the bulk of [a, b].
    pub fn new(lower: f64, upper: f64, intervals: usize, variant: FlowVariant) -> Result<Self> {
        let c = match variant {
            FlowVariant::AffinePlusSum => 0.0,
            FlowVariant::TanhSum => (upper - lower) / (2.0 * intervals as f64),
        };
        Self::with_coefficients(lower, upper, vec![c; intervals + 1], variant)
    }

    pub fn default_tanh_sum() -> Self {
        let (a, b) = DEFAULT_FLOW_RANGE;
        Self::new(a, b, DEFAULT_FLOW_INTERVALS, FlowVariant::TanhSum).expect("valid default flow")
    }

    /// `coefficients.len() − 1` intervals on `[lower, upper]`.
    pub fn with_coefficients(
        lower: f64,
        upper: f64,
        coefficients: Vec<f64>,
        variant: FlowVariant,
    ) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidConfig("flow needs at least one node".into()));
        }
        if coefficients.len() > 1 && !(upper > lower) {
            return Err(Error::InvalidConfig(format!(
                "flow interval [{lower}, {upper}] is empty"
            )));
        }
        if let Some(c) = coefficients.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "flow coefficients must be finite and non-negative, found {c}"
            )));
        }
        let nodes = if coefficients.len() == 1 {
            vec![lower]
        } else {
            sublattice(lower, upper, coefficients.len() - 1)
        };
        Ok(Self {
            variant,
            lower,
            upper,
            nodes,
            coefficients,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn n_params(&self) -> usize {
        self.coefficients.len()
    }

    /// Overwrites the coefficients, projecting negatives to zero.
    pub fn set_coefficients(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.coefficients.len());
        for (c, &v) in self.coefficients.iter_mut().zip(values) {
            *c = v.max(0.0);
        }
    }

    fn identity_slope(&self) -> f64 {
        match self.variant {
            FlowVariant::TanhSum => 0.0,
            FlowVariant::AffinePlusSum => 1.0,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.variant == FlowVariant::TanhSum && self.coefficients.iter().all(|&c| c == 0.0)
    }

    pub fn forward(&self, x: f64) -> f64 {
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.coefficients)
            .map(|(&xi, &c)| c * (x - xi).tanh())
            .sum();
        sum + self.identity_slope() * x
    }

    /// f′(x) = Σ C_i sech²(x − x_i) (+1 for the affine variant).
    pub fn derivative(&self, x: f64) -> Result<f64> {
        if self.is_degenerate() {
            return Err(Error::DegenerateFlow);
        }
        Ok(self.evaluate(x).slope)
    }

    /// f, f′, f″ in a single pass over the nodes.
    pub fn evaluate(&self, x: f64) -> FlowPoint {
        let mut value = self.identity_slope() * x;
        let mut slope = self.identity_slope();
        let mut curvature = 0.0;
        for (&xi, &c) in self.nodes.iter().zip(&self.coefficients) {
            if c == 0.0 {
                continue;
            }
            let t = (x - xi).tanh();
            let s = 1.0 - t * t;
            value += c * t;
            slope += c * s;
            curvature -= 2.0 * c * s * t;
        }
        FlowPoint {
            value,
            slope,
            curvature,
        }
    }

    /// Like [`FlowMap::evaluate`], with tanh(x − x_i) supplied by the caller.
    pub fn evaluate_tabulated(&self, x: f64, tanh_row: &[f64]) -> FlowPoint {
        let mut value = self.identity_slope() * x;
        let mut slope = self.identity_slope();
        let mut curvature = 0.0;
        for (&t, &c) in tanh_row.iter().zip(&self.coefficients) {
            let s = 1.0 - t * t;
            value += c * t;
            slope += c * s;
            curvature -= 2.0 * c * s * t;
        }
        FlowPoint {
            value,
            slope,
            curvature,
        }
    }

    /// tanh(x − x_i) for every node. On the uniform sublattice e^{2(x − x_i)}
    /// is geometric in i, so tanh = (r − 1)/(r + 1) needs one division per node
    /// and one exp per block; restarting every block bounds the rounding drift.
    pub fn tanh_row(&self, x: f64) -> Vec<f64> {
        const BLOCK: usize = 32;
        let n = self.nodes.len();
        let far = |xi: f64| (x - xi).abs() > 300.0;
        if n < 2 || far(self.nodes[0]) || far(self.nodes[n - 1]) {
            return self.nodes.iter().map(|&xi| (x - xi).tanh()).collect();
        }
        let h = (self.upper - self.lower) / (n - 1) as f64;
        let q = (-2.0 * h).exp();
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(BLOCK) {
            let mut r = (2.0 * (x - self.nodes[start])).exp();
            for _ in start..(start + BLOCK).min(n) {
                out.push((r - 1.0) / (r + 1.0));
                r *= q;
            }
        }
        out
    }

    pub fn param_gradient(&self, x: f64) -> FlowParamGradient {
        let value: Vec<f64> = self.nodes.iter().map(|&xi| (x - xi).tanh()).collect();
        let slope = value.iter().map(|t| 1.0 - t * t).collect();
        FlowParamGradient { value, slope }
    }
}

/// ψ(f(x))·√f′(x).
pub fn apply_flow(flow: &FlowMap, psi: impl Fn(f64) -> f64, x: f64) -> Result<f64> {
    if flow.is_degenerate() {
        return Err(Error::DegenerateFlow);
    }
    let p = flow.evaluate(x);
    Ok(psi(p.value) * p.slope.max(0.0).sqrt())
}

/// A basis pushed through a flow: φ_j(x) = ψ_j(f(x))·√f′(x).
///
/// Besides values, this exposes the partial derivatives of φ_j and φ_j′ with
/// respect to the local flow quantities (f, f′, f″), which is what the
/// trainers need to back-propagate into the coefficients C_i.
pub struct FlowedBasis<'a> {
    pub basis: &'a BasisSet,
    pub flow: &'a FlowMap,
}

/// Per-point evaluation of a flowed basis.
#[derive(Clone, Debug, Default)]
pub struct FlowedPoint {
    pub flow: Option<FlowPoint>,
    /// φ_j(x)
    pub values: Vec<f64>,
    /// φ_j′(x)
    pub derivs: Vec<f64>,
    /// ∂φ_j/∂f, ∂φ_j/∂f′
    pub dv_df: Vec<f64>,
    pub dv_dfp: Vec<f64>,
    /// ∂φ_j′/∂f, ∂φ_j′/∂f′, ∂φ_j′/∂f″
    pub dd_df: Vec<f64>,
    pub dd_dfp: Vec<f64>,
    pub dd_dfpp: Vec<f64>,
}

impl FlowedBasis<'_> {
    /// Values only (with the sensitivities needed for value-level gradients).
    pub fn eval_values(&self, x: f64, m: usize, out: &mut FlowedPoint) {
        self.eval_values_at(self.flow.evaluate(x), m, out);
    }

    /// [`FlowedBasis::eval_values`] for an already evaluated flow point.
    pub fn eval_values_at(&self, p: FlowPoint, m: usize, out: &mut FlowedPoint) {
        let g = p.slope.max(1e-300).sqrt();
        resize(out, m);
        let mut psi = vec![0.0; m];
        let mut dpsi = vec![0.0; m];
        self.basis.eval_all_with_derivative(p.value, &mut psi, &mut dpsi);
        for j in 0..m {
            out.values[j] = psi[j] * g;
            out.dv_df[j] = dpsi[j] * g;
            out.dv_dfp[j] = psi[j] / (2.0 * g);
        }
        out.flow = Some(p);
    }

    /// Values, first derivatives and all sensitivities.
    pub fn eval_full(&self, x: f64, m: usize, out: &mut FlowedPoint) {
        self.eval_full_at(self.flow.evaluate(x), m, out);
    }

    /// [`FlowedBasis::eval_full`] for an already evaluated flow point.
    pub fn eval_full_at(&self, p: FlowPoint, m: usize, out: &mut FlowedPoint) {
        let g = p.slope.max(1e-300).sqrt();
        resize(out, m);
        let mut psi = vec![0.0; m];
        let mut dpsi = vec![0.0; m];
        let mut ddpsi = vec![0.0; m];
        eval_second_derivatives(self.basis, p.value, &mut psi, &mut dpsi, &mut ddpsi);
        let fp = p.slope;
        let fpp = p.curvature;
        for j in 0..m {
            out.values[j] = psi[j] * g;
            out.derivs[j] = dpsi[j] * fp * g + psi[j] * fpp / (2.0 * g);
            out.dv_df[j] = dpsi[j] * g;
            out.dv_dfp[j] = psi[j] / (2.0 * g);
            out.dd_df[j] = ddpsi[j] * fp * g + dpsi[j] * fpp / (2.0 * g);
            out.dd_dfp[j] = 1.5 * dpsi[j] * g - psi[j] * fpp / (4.0 * g * g * g);
            out.dd_dfpp[j] = psi[j] / (2.0 * g);
        }
        out.flow = Some(p);
    }
}

fn resize(out: &mut FlowedPoint, m: usize) {
    for v in [
        &mut out.values,
        &mut out.derivs,
        &mut out.dv_df,
        &mut out.dv_dfp,
        &mut out.dd_df,
        &mut out.dd_dfp,
        &mut out.dd_dfpp,
    ] {
        v.resize(m, 0.0);
    }
}

/// ψ, ψ′, ψ″ for the whole basis at `x`.
pub fn eval_second_derivatives(
    basis: &BasisSet,
    x: f64,
    values: &mut [f64],
    derivs: &mut [f64],
    second: &mut [f64],
) {
    use crate::basis::{fourier_frequency, BasisFamily};
    basis.eval_all_with_derivative(x, values, derivs);
    match basis.family {
        // Hermite functions satisfy ψ_n″ = (x² − 2n − 1) ψ_n.
        BasisFamily::Hermite => {
            for (n, (s, v)) in second.iter_mut().zip(values.iter()).enumerate() {
                *s = (x * x - 2.0 * n as f64 - 1.0) * v;
            }
        }
        BasisFamily::Fourier { half_width } => {
            for (j, (s, v)) in second.iter_mut().zip(values.iter()).enumerate() {
                let k = fourier_frequency(j) as f64 * std::f64::consts::PI / half_width;
                *s = -k * k * v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{hermite_function, QuadratureGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tanh_flow(seed: u64) -> FlowMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..=400).map(|_| rng.random_range(0.0..0.1)).collect();
        FlowMap::with_coefficients(-10.0, 10.0, coeffs, FlowVariant::TanhSum).unwrap()
    }

    #[test]
    fn tanh_row_matches_direct_evaluation() {
        let flow = random_tanh_flow(1);
        for x in [-400.0, -35.0, -10.0, -3.21, 0.0, 0.025, 4.9, 10.0, 17.5, 350.0] {
            let row = flow.tanh_row(x);
            for (t, &xi) in row.iter().zip(flow.nodes()) {
                assert!((t - (x - xi).tanh()).abs() < 1e-13, "x = {x}, x_i = {xi}");
            }
        }
    }

    fn random_affine_flow(seed: u64, n: usize) -> FlowMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..=n).map(|_| rng.random_range(0.0..0.5)).collect();
        FlowMap::with_coefficients(-3.0, 3.0, coeffs, FlowVariant::AffinePlusSum).unwrap()
    }

    #[test]
    fn identity_affine() {
        let f = FlowMap::new(-10.0, 10.0, 400, FlowVariant::AffinePlusSum).unwrap();
        assert_eq!(f.forward(1.7), 1.7);
        assert_eq!(f.derivative(-3.2).unwrap(), 1.0);
        let h0 = |x: f64| hermite_function(0, x).unwrap();
        assert_eq!(apply_flow(&f, h0, 0.4).unwrap(), h0(0.4));
    }

    #[test]
    fn single_node_examples() {
        let f = FlowMap::with_coefficients(0.0, 0.0, vec![2.0], FlowVariant::TanhSum).unwrap();
        assert_eq!(f.nodes(), &[0.0]);
        assert_eq!(f.forward(0.0), 0.0);
        assert_eq!(f.derivative(0.0).unwrap(), 2.0);
    }

    #[test]
    fn two_node_derivative_against_finite_difference() {
        let f =
            FlowMap::with_coefficients(-1.0, 1.0, vec![1.0, 1.0], FlowVariant::TanhSum).unwrap();
        let sech1 = 1.0 / 1f64.cosh();
        let expected = 2.0 * sech1 * sech1;
        assert!((f.derivative(0.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.8399).abs() < 1e-4);
        let h = 1e-5;
        let fd = (f.forward(h) - f.forward(-h)) / (2.0 * h);
        assert!((fd - expected).abs() < 1e-9);
    }

    #[test]
    fn degenerate_tanh_flow() {
        let f = FlowMap::with_coefficients(-1.0, 1.0, vec![0.0; 3], FlowVariant::TanhSum).unwrap();
        assert!(matches!(f.derivative(0.0), Err(Error::DegenerateFlow)));
        assert!(matches!(
            apply_flow(&f, |x| x, 0.0),
            Err(Error::DegenerateFlow)
        ));
    }

    #[test]
    fn negative_coefficients_rejected() {
        assert!(FlowMap::with_coefficients(0.0, 1.0, vec![1.0, -0.1], FlowVariant::TanhSum).is_err());
    }

    #[test]
    fn tanh_flow_is_monotone_on_fine_sweep() {
        let f = random_tanh_flow(7);
        let xs: Vec<f64> = (0..10_000).map(|i| -15.0 + 30.0 * i as f64 / 9999.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f.forward(x)).collect();
        assert!(ys.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn param_gradient_examples() {
        let f = random_tanh_flow(3);
        let k = 137;
        let g = f.param_gradient(f.nodes()[k]);
        assert_eq!(g.value[k], 0.0);
        let far = f.param_gradient(f.nodes()[400] + 50.0);
        assert!(far.value.iter().all(|&t| (t - 1.0).abs() < 1e-12));
    }

    #[test]
    fn param_gradient_matches_finite_difference() {
        let f = random_tanh_flow(11);
        let x = 0.731;
        let g = f.param_gradient(x);
        let h = 1e-6;
        for i in [0usize, 50, 199, 200, 201, 400] {
            let mut up = f.coefficients().to_vec();
            let mut dn = up.clone();
            up[i] += h;
            dn[i] -= h;
            let fu = FlowMap::with_coefficients(-10.0, 10.0, up, FlowVariant::TanhSum).unwrap();
            let fdn = FlowMap::with_coefficients(-10.0, 10.0, dn, FlowVariant::TanhSum).unwrap();
            let fd = (fu.forward(x) - fdn.forward(x)) / (2.0 * h);
            assert!((fd - g.value[i]).abs() < 1e-7, "i={i}");
            let fd_slope = (fu.evaluate(x).slope - fdn.evaluate(x).slope) / (2.0 * h);
            assert!((fd_slope - g.slope[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn affine_flow_preserves_inner_products() {
        let f = random_affine_flow(5, 60);
        let grid = QuadratureGrid::uniform(-20.0, 20.0, 8001).unwrap();
        for j in 0..5 {
            for k in 0..5 {
                let hj = |x: f64| hermite_function(j, x).unwrap();
                let hk = |x: f64| hermite_function(k, x).unwrap();
                let ip = grid.integrate(|x| {
                    apply_flow(&f, hj, x).unwrap() * apply_flow(&f, hk, x).unwrap()
                });
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-6, "j={j} k={k} ip={ip}");
            }
        }
    }

    #[test]
    fn tanh_flow_norm_deficit_is_small() {
        let f = random_tanh_flow(21);
        let grid = QuadratureGrid::uniform(-30.0, 30.0, 24001).unwrap();
        for j in 0..5 {
            let hj = |x: f64| hermite_function(j, x).unwrap();
            let norm = grid.integrate(|x| apply_flow(&f, hj, x).unwrap().powi(2));
            assert!(norm <= 1.0 + 1e-9 && norm >= 1.0 - 1e-4, "j={j} norm={norm}");
        }
    }

    #[test]
    fn flowed_states_keep_their_node_count() {
        let f = random_affine_flow(9, 40);
        let xs: Vec<f64> = (0..20_001).map(|i| -8.0 + 16.0 * i as f64 / 20_000.0).collect();
        for n in 0..8 {
            let hn = |x: f64| hermite_function(n, x).unwrap();
            let vals: Vec<f64> = xs.iter().map(|&x| apply_flow(&f, hn, x).unwrap()).collect();
            let changes = vals
                .windows(2)
                .filter(|w| w[0].signum() != w[1].signum() && w[0].abs() > 1e-200)
                .count();
            assert_eq!(changes, n, "n={n}");
        }
    }

    #[test]
    fn flowed_derivative_sensitivities_match_finite_differences() {
        let basis = BasisSet::hermite(6).unwrap();
        let flow = random_affine_flow(13, 12);
        let fb = FlowedBasis {
            basis: &basis,
            flow: &flow,
        };
        let mut pt = FlowedPoint::default();
        let x = 0.37;
        fb.eval_full(x, 6, &mut pt);
        // φ′ against a finite difference of φ.
        let h = 1e-5;
        let mut up = FlowedPoint::default();
        let mut dn = FlowedPoint::default();
        fb.eval_values(x + h, 6, &mut up);
        fb.eval_values(x - h, 6, &mut dn);
        for j in 0..6 {
            let fd = (up.values[j] - dn.values[j]) / (2.0 * h);
            assert!((fd - pt.derivs[j]).abs() < 1e-7, "j={j}");
        }
    }
}
