//! The variational density matrix ρ̃ = Σ_n p̃_n |ñ⟩⟨ñ| with |ñ⟩ = Σ_j ã_{j,n} |j⟩.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::flow::{FlowMap, FlowedBasis, FlowedPoint};
use crate::linalg::{dot, norm, Matrix};

pub const DEFAULT_P_PERP: f64 = 1e-6;
pub const INIT_NOISE_SCALE: f64 = 1e-3;

/// ã_{j,n}: rows are basis functions, columns are variational states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoefficientMatrix(pub Matrix);

impl CoefficientMatrix {
    pub fn n_basis(&self) -> usize {
        self.0.rows()
    }

    pub fn n_states(&self) -> usize {
        self.0.cols()
    }

    /// δ_{j,n}: the first N basis functions.
    pub fn identity_block(m: usize, n: usize) -> Self {
        Self(Matrix::from_fn(m, n, |j, k| if j == k { 1.0 } else { 0.0 }))
    }

    /// δ_{j,n} plus Gaussian noise, columns renormalized.
    pub fn perturbed_identity(m: usize, n: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let noise = Normal::new(0.0, scale.max(0.0)).expect("finite scale");
        let raw = Matrix::from_fn(m, n, |j, k| {
            let base = if j == k { 1.0 } else { 0.0 };
            base + noise.sample(rng)
        });
        normalize_columns(&Self(raw)).expect("perturbed identity has no zero column")
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        self.0.column(n)
    }

    /// ⟨ñ|m̃⟩ for all pairs.
    pub fn overlaps(&self) -> Matrix {
        self.0.transpose().matmul(&self.0).expect("conformable")
    }
}

/// Rescales every column to unit Euclidean norm.
pub fn normalize_columns(coeffs: &CoefficientMatrix) -> Result<CoefficientMatrix> {
    let mut out = coeffs.clone();
    for n in 0..coeffs.n_states() {
        let col = coeffs.column(n);
        let len = norm(&col);
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::CollapsedState(n));
        }
        let scaled: Vec<f64> = col.iter().map(|v| v / len).collect();
        out.0.set_column(n, &scaled);
    }
    Ok(out)
}

/// Euclidean norm of every column.
pub fn column_norms(coeffs: &CoefficientMatrix) -> Vec<f64> {
    (0..coeffs.n_states())
        .map(|n| norm(&coeffs.column(n)))
        .collect()
}

/// Chain rule through u_n = ã_n/|ã_n|: maps ∂L/∂u (evaluated at the unit
/// columns `unit`) to ∂L/∂ã = (I − u_n u_nᵀ) ∂L/∂u_n / |ã_n|.
pub fn tangent_gradient(unit: &Matrix, norms: &[f64], grad_unit: &Matrix) -> Matrix {
    let mut out = grad_unit.clone();
    for n in 0..unit.cols() {
        let u = unit.column(n);
        let g = grad_unit.column(n);
        let radial = dot(&u, &g);
        let col: Vec<f64> = g
            .iter()
            .zip(&u)
            .map(|(gi, ui)| (gi - radial * ui) / norms[n])
            .collect();
        out.set_column(n, &col);
    }
    out
}

/// L_⊥ = Σ_{n<m} ⟨ñ|m̃⟩².
pub fn orthogonality_penalty(coeffs: &CoefficientMatrix) -> f64 {
    let s = coeffs.overlaps();
    let n = s.rows();
    let mut total = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            total += s[(a, b)] * s[(a, b)];
        }
    }
    total
}

/// ∂L_⊥/∂ã_{j,n} = 2 Σ_{m≠n} ⟨ñ|m̃⟩ ã_{j,m}.
pub fn orthogonality_penalty_gradient(coeffs: &CoefficientMatrix) -> Matrix {
    let a = &coeffs.0;
    let mut s = coeffs.overlaps();
    for k in 0..s.rows() {
        s[(k, k)] = 0.0;
    }
    let mut g = a.matmul(&s).expect("conformable");
    for v in g.as_mut_slice() {
        *v *= 2.0;
    }
    g
}

/// Numerically stable softmax.
pub fn softmax_weights(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// log softmax, accurate for tiny probabilities.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

/// Pulls a gradient with respect to p back to the logits:
/// ∂L/∂logit_k = p_k (g_k − Σ_n p_n g_n).
pub fn softmax_backward(p: &[f64], grad_p: &[f64]) -> Vec<f64> {
    let mean: f64 = p.iter().zip(grad_p).map(|(a, b)| a * b).sum();
    p.iter().zip(grad_p).map(|(pk, gk)| pk * (gk - mean)).collect()
}

/// Shannon entropy −Σ p log p with 0·log 0 = 0.
pub fn entropy_diag(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Σ p_n log(p_n / q_n): the relative entropy of commuting density matrices.
pub fn qre_diag(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            what: "qre_diag",
            expected: p.len(),
            found: q.len(),
        });
    }
    let mut total = 0.0;
    for (n, (&pn, &qn)) in p.iter().zip(q).enumerate() {
        if pn > 0.0 {
            if qn <= 0.0 {
                return Err(Error::SupportMismatch(n));
            }
            total += pn * (pn / qn).ln();
        }
    }
    // Rounding can leave a tiny negative value when p ≈ q.
    Ok(total.max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannWeights {
    pub logits: Vec<f64>,
    pub temperature: f64,
    /// Weight given to the orthogonal complement of the modeled states (QML only).
    pub p_perp: f64,
}

impl BoltzmannWeights {
    pub fn new(logits: Vec<f64>, temperature: f64, p_perp: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        if !(p_perp > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "p_perp must be positive, got {p_perp}"
            )));
        }
        Ok(Self {
            logits,
            temperature,
            p_perp,
        })
    }

    /// logit_n = −n: ordered, mildly peaked on the first state.
    pub fn ordered(n: usize, temperature: f64) -> Result<Self> {
        Self::new((0..n).map(|k| -(k as f64)).collect(), temperature, DEFAULT_P_PERP)
    }

    /// Logits reproducing Boltzmann weights for the given energies.
    pub fn from_energies(energies: &[f64], temperature: f64) -> Result<Self> {
        Self::new(
            energies.iter().map(|e| -e / temperature).collect(),
            temperature,
            DEFAULT_P_PERP,
        )
    }

    pub fn probabilities(&self) -> Vec<f64> {
        softmax_weights(&self.logits)
    }

    pub fn log_probabilities(&self) -> Vec<f64> {
        log_softmax(&self.logits)
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }
}

/// Energy gaps λ̃_n − λ̃_0 = −T (log p̃_n − log p̃_0), sorted ascending.
///
/// λ̃ is only identifiable up to an additive constant, so gaps are all that is reported.
pub fn eigenvalue_report(weights: &BoltzmannWeights) -> Vec<f64> {
    let logp = weights.log_probabilities();
    let top = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut gaps: Vec<f64> = logp
        .iter()
        .map(|&l| -weights.temperature * (l - top))
        .collect();
    gaps.sort_by(f64::total_cmp);
    gaps
}

/// Ordering of states by decreasing weight (i.e. increasing λ̃).
pub fn energy_order(weights: &BoltzmannWeights) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights.logits[b].total_cmp(&weights.logits[a]));
    idx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalDensityMatrix {
    pub basis: BasisSet,
    pub coefficients: CoefficientMatrix,
    pub weights: BoltzmannWeights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowMap>,
}

impl VariationalDensityMatrix {
    pub fn new(
        basis: BasisSet,
        coefficients: CoefficientMatrix,
        weights: BoltzmannWeights,
        flow: Option<FlowMap>,
    ) -> Result<Self> {
        if coefficients.n_basis() != basis.size {
            return Err(Error::DimensionMismatch {
                what: "coefficient rows vs basis size",
                expected: basis.size,
                found: coefficients.n_basis(),
            });
        }
        if coefficients.n_states() != weights.len() {
            return Err(Error::DimensionMismatch {
                what: "coefficient columns vs logits",
                expected: weights.len(),
                found: coefficients.n_states(),
            });
        }
        Ok(Self {
            basis,
            coefficients,
            weights,
            flow,
        })
    }

    /// Standard starting point: perturbed identity coefficients and ordered logits.
    pub fn initialized(
        basis: BasisSet,
        n_states: usize,
        temperature: f64,
        p_perp: f64,
        flow: Option<FlowMap>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_states == 0 || n_states > basis.size {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= N <= M, got N = {n_states}, M = {}",
                basis.size
            )));
        }
        let coeffs =
            CoefficientMatrix::perturbed_identity(basis.size, n_states, INIT_NOISE_SCALE, rng);
        let mut weights = BoltzmannWeights::ordered(n_states, temperature)?;
        weights.p_perp = p_perp;
        Self::new(basis, coeffs, weights, flow)
    }

    pub fn n_states(&self) -> usize {
        self.coefficients.n_states()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.weights.probabilities()
    }

    /// ρ̃ in the |j⟩ basis: Σ_n p̃_n ã_{·,n} ã_{·,n}ᵀ.
    pub fn density_matrix(&self) -> Matrix {
        let p = self.probabilities();
        let a = &self.coefficients.0;
        let m = a.rows();
        Matrix::from_fn(m, m, |j, k| {
            (0..a.cols()).map(|n| p[n] * a[(j, n)] * a[(k, n)]).sum()
        })
    }

    /// ψ̃_n(x) for every state: Σ_j ã_{j,n} φ_j(x), with φ the (possibly flowed) basis.
    pub fn state_amplitudes(&self, x: f64) -> Vec<f64> {
        let m = self.basis.size;
        let phi = self.basis_values(x);
        let a = &self.coefficients.0;
        (0..a.cols())
            .map(|n| (0..m).map(|j| a[(j, n)] * phi[j]).sum())
            .collect()
    }

    /// ψ̃_n(x) for one state.
    pub fn state_amplitude(&self, n: usize, x: f64) -> f64 {
        let phi = self.basis_values(x);
        let col = self.coefficients.column(n);
        dot(&col, &phi)
    }

    /// φ_j(x): plain or flowed basis values.
    pub fn basis_values(&self, x: f64) -> Vec<f64> {
        let m = self.basis.size;
        match &self.flow {
            None => {
                let mut v = vec![0.0; m];
                self.basis.eval_all(x, &mut v);
                v
            }
            Some(flow) => {
                let fb = FlowedBasis {
                    basis: &self.basis,
                    flow,
                };
                let mut pt = FlowedPoint::default();
                fb.eval_values(x, m, &mut pt);
                pt.values
            }
        }
    }

    /// Copy with unit-norm coefficient columns, and the original norms.
    pub fn with_unit_columns(&self) -> Result<(Self, Vec<f64>)> {
        let norms = column_norms(&self.coefficients);
        let mut unit = self.clone();
        unit.coefficients = normalize_columns(&self.coefficients)?;
        Ok((unit, norms))
    }

    /// Sorted energy gaps implied by the logits.
    pub fn gaps(&self) -> Vec<f64> {
        eigenvalue_report(&self.weights)
    }

    pub fn n_parameters(&self) -> usize {
        self.coefficients.0.as_slice().len()
            + self.weights.len()
            + self.flow.as_ref().map_or(0, FlowMap::n_params)
    }

    /// Every trainable number, flattened as [ã row-major, logits, C].
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = self.coefficients.0.as_slice().to_vec();
        out.extend_from_slice(&self.weights.logits);
        if let Some(flow) = &self.flow {
            out.extend_from_slice(flow.coefficients());
        }
        out
    }

    /// Inverse of [`VariationalDensityMatrix::parameters`]. Flow coefficients are clamped at zero;
    /// nothing is renormalized.
    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_parameters());
        let na = self.coefficients.0.as_slice().len();
        let nl = self.weights.len();
        self.coefficients.0.as_mut_slice().copy_from_slice(&params[..na]);
        self.weights.logits.copy_from_slice(&params[na..na + nl]);
        if let Some(flow) = &mut self.flow {
            flow.set_coefficients(&params[na + nl..]);
        }
    }
}

/// Gradient of a scalar objective with respect to every parameter of a
/// [`VariationalDensityMatrix`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGradient {
    pub coefficients: Matrix,
    pub logits: Vec<f64>,
    pub flow: Option<Vec<f64>>,
}

impl ParameterGradient {
    /// Same layout as [`VariationalDensityMatrix::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.coefficients.as_slice().to_vec();
        out.extend_from_slice(&self.logits);
        if let Some(f) = &self.flow {
            out.extend_from_slice(f);
        }
        out
    }

    pub fn norm(&self) -> f64 {
        norm(&self.flatten())
    }
}
