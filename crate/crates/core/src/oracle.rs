//! Ground truth: dense diagonalization in a large Hermite basis and closed-form
//! harmonic-oscillator quantities.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::{default_grid, BasisSet};
use crate::error::{Error, Result};
use crate::flow::{FlowMap, FlowedBasis, FlowedPoint};
use crate::hamiltonian::{matrix_elements, Potential};
use crate::linalg::{jacobi_eigen, Matrix};

pub const DEFAULT_REFERENCE_SIZE: usize = 120;
/// Extra basis functions used to certify a reference spectrum.
pub const CERTIFICATION_EXTRA: usize = 20;
pub const CERTIFICATION_STATES: usize = 10;
pub const CERTIFICATION_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Oracle,
    Qvi,
    Qml,
    LatticeGapOnly,
}

/// Wavefunctions ψ_n(x) = Σ_j c_{j,n} φ_j(x), with φ optionally flowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSet {
    pub basis: BasisSet,
    /// One column per state.
    pub coefficients: Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowMap>,
}

impl StateSet {
    pub fn n_states(&self) -> usize {
        self.coefficients.cols()
    }

    /// ψ_n(x) for every state.
    pub fn amplitudes(&self, x: f64) -> Vec<f64> {
        let m = self.basis.size;
        let phi = match &self.flow {
            None => {
                let mut v = vec![0.0; m];
                self.basis.eval_all(x, &mut v);
                v
            }
            Some(flow) => {
                let mut pt = FlowedPoint::default();
                FlowedBasis {
                    basis: &self.basis,
                    flow,
                }
                .eval_values(x, m, &mut pt);
                pt.values
            }
        };
        let c = &self.coefficients;
        (0..c.cols())
            .map(|n| (0..m).map(|j| c[(j, n)] * phi[j]).sum())
            .collect()
    }

    /// Keep only the listed columns, in that order.
    pub fn select(&self, order: &[usize]) -> StateSet {
        let c = &self.coefficients;
        StateSet {
            basis: self.basis,
            coefficients: Matrix::from_fn(c.rows(), order.len(), |j, k| c[(j, order[k])]),
            flow: self.flow.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub method: Method,
    /// Ascending. Absolute energies for the oracle, gaps λ̃_n − λ̃_0 for learned spectra.
    pub eigenvalues: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<StateSet>,
    #[serde(default)]
    pub diagnostics: BTreeMap<String, f64>,
}

impl SpectrumResult {
    /// E_n − E_0.
    pub fn gaps(&self) -> Vec<f64> {
        match self.eigenvalues.first() {
            Some(&e0) => self.eigenvalues.iter().map(|e| e - e0).collect(),
            None => Vec::new(),
        }
    }
}

/// Dense symmetric diagonalization of `h`, expressed as states in `basis`.
pub fn jacobi_diagonalize(h: &Matrix, basis: Option<BasisSet>) -> Result<SpectrumResult> {
    let eig = jacobi_eigen(h)?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("jacobi_sweeps".to_string(), eig.sweeps as f64);
    Ok(SpectrumResult {
        method: Method::Oracle,
        eigenvalues: eig.values,
        states: basis.map(|basis| StateSet {
            basis,
            coefficients: eig.vectors,
            flow: None,
        }),
        diagnostics,
    })
}

fn hermite_spectrum(v: &Potential, m: usize) -> Result<SpectrumResult> {
    let basis = BasisSet::hermite(m)?;
    let grid = default_grid(&basis)?;
    let h = matrix_elements(v, &basis, &grid, None)?;
    jacobi_diagonalize(&h.entries, Some(basis))
}

/// Spectrum of Ĥ in `big_m` Hermite functions, certified against `big_m + 20`.
///
/// The lowest ten eigenvalues (or all of them for tiny bases) must agree
/// between the two sizes within 1e−7.
pub fn reference_spectrum(v: &Potential, big_m: usize) -> Result<SpectrumResult> {
    v.validate()?;
    let mut main = hermite_spectrum(v, big_m)?;
    let check = hermite_spectrum(v, big_m + CERTIFICATION_EXTRA)?;
    let k = CERTIFICATION_STATES.min(big_m);
    let drift = main.eigenvalues[..k]
        .iter()
        .zip(&check.eigenvalues[..k])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if !(drift < CERTIFICATION_TOL) {
        return Err(Error::UnconvergedReference(format!(
            "lowest {k} eigenvalues moved by {drift:.3e} between M = {big_m} and M = {}",
            big_m + CERTIFICATION_EXTRA
        )));
    }
    main.diagnostics
        .insert("certification_drift".to_string(), drift);
    main.diagnostics.insert("basis_size".to_string(), big_m as f64);
    Ok(main)
}

/// Lowest eigenvalues of a reference run, as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFixture {
    pub potential: Potential,
    pub big_m: usize,
    pub eigenvalues: Vec<f64>,
}

impl ReferenceFixture {
    pub fn compute(potential: &Potential, big_m: usize, n_levels: usize) -> Result<Self> {
        let spec = reference_spectrum(potential, big_m)?;
        Ok(Self {
            potential: potential.clone(),
            big_m,
            eigenvalues: spec.eigenvalues.into_iter().take(n_levels).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Harmonic-oscillator thermal density ρ_T(y, x) = ⟨y|e^{−βĤ}|x⟩/Z for V = x²/2.
pub fn harmonic_thermal_density(x: f64, y: f64, beta: f64) -> f64 {
    let sh = beta.sinh();
    let coth = 1.0 / beta.tanh();
    (0.5 * beta).sinh() / (std::f64::consts::FRAC_PI_2 * sh).sqrt()
        * (-(x * x + y * y) * coth / 2.0 + x * y / sh).exp()
}

/// Truncated eigen-expansion Σ_{n<n_terms} e^{−β(n+½)} ψ_n(x)ψ_n(y) / Z, with the exact Z.
pub fn harmonic_mixture_check(x: f64, y: f64, beta: f64, n_terms: usize) -> f64 {
    let n = n_terms.max(1);
    let mut hx = vec![0.0; n];
    let mut hy = vec![0.0; n];
    crate::basis::hermite_fill(x, &mut hx);
    crate::basis::hermite_fill(y, &mut hy);
    // Z = Σ e^{−β(n+½)} = 1 / (2 sinh(β/2)).
    let norm = 2.0 * (0.5 * beta).sinh();
    (0..n)
        .map(|k| (-beta * (k as f64 + 0.5)).exp() * (hx[k] * hy[k]))
        .sum::<f64>()
        * norm
}

/// ⟨x²⟩ in the harmonic thermal state.
pub fn harmonic_position_variance(beta: f64) -> f64 {
    0.5 / (0.5 * beta).tanh()
}

/// ⟨q(0)q(τ)⟩ in the harmonic thermal state.
pub fn harmonic_correlator(tau: f64, beta: f64) -> f64 {
    (0.5 * beta - tau).cosh() / (2.0 * (0.5 * beta).sinh())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::QuadratureGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jacobi_examples() {
        let r = jacobi_diagonalize(&Matrix::diagonal(&[3.0, 1.0, 2.0]), None).unwrap();
        assert_eq!(r.eigenvalues, vec![1.0, 2.0, 3.0]);

        let b = BasisSet::hermite(40).unwrap();
        let h = matrix_elements(&Potential::Harmonic, &b, &default_grid(&b).unwrap(), None)
            .unwrap();
        let r = jacobi_diagonalize(&h.entries, Some(b)).unwrap();
        for (n, e) in r.eigenvalues.iter().enumerate() {
            assert!((e - (n as f64 + 0.5)).abs() < 1e-10);
        }
    }

    /// Roots of det(A − λI) for a symmetric 3×3 via the trigonometric cubic formula.
    fn cubic_eigenvalues(a: &Matrix) -> [f64; 3] {
        let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let q = (a[(0, 0)] + a[(1, 1)] + a[(2, 2)]) / 3.0;
        let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2)
            + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = Matrix::from_fn(3, 3, |i, j| {
            (a[(i, j)] - if i == j { q } else { 0.0 }) / p
        });
        let det = b[(0, 0)] * (b[(1, 1)] * b[(2, 2)] - b[(1, 2)] * b[(2, 1)])
            - b[(0, 1)] * (b[(1, 0)] * b[(2, 2)] - b[(1, 2)] * b[(2, 0)])
            + b[(0, 2)] * (b[(1, 0)] * b[(2, 1)] - b[(1, 1)] * b[(2, 0)]);
        let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
        let l1 = q + 2.0 * p * phi.cos();
        let l3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let mut out = [l1, 3.0 * q - l1 - l3, l3];
        out.sort_by(f64::total_cmp);
        out
    }

    #[test]
    fn jacobi_matches_cubic_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let mut m = Matrix::zeros(3, 3);
            for i in 0..3 {
                for j in i..3 {
                    let v = rng.random_range(-2.0..2.0);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            let got = jacobi_diagonalize(&m, None).unwrap().eigenvalues;
            let want = cubic_eigenvalues(&m);
            for k in 0..3 {
                assert!((got[k] - want[k]).abs() < 1e-10, "{got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn harmonic_reference() {
        let r = reference_spectrum(&Potential::Harmonic, 40).unwrap();
        for n in 0..10 {
            assert!((r.eigenvalues[n] - (n as f64 + 0.5)).abs() < 1e-9);
        }
    }

    #[test]
    fn anharmonic_reference_is_stable() {
        let a = reference_spectrum(&Potential::Anharmonic, 120).unwrap();
        let b = hermite_spectrum(&Potential::Anharmonic, 140).unwrap();
        for n in 0..10 {
            assert!((a.eigenvalues[n] - b.eigenvalues[n]).abs() < 1e-7);
        }
        let gap = a.eigenvalues[1] - a.eigenvalues[0];
        assert!((1.53..1.63).contains(&gap), "gap {gap}");
        let states = a.states.as_ref().unwrap();
        let c = &states.coefficients;
        let gram = c.transpose().matmul(c).unwrap();
        assert!(gram.max_abs_diff(&Matrix::identity(120)) < 1e-8);
    }

    #[test]
    fn pure_quartic_ground_state() {
        // E₀ of H = p²/2 + x⁴ is 0.667986259155777... (standard value, verified by certification).
        let v = Potential::Polynomial {
            coeffs: vec![0.0, 0.0, 0.0, 0.0, 1.0],
        };
        let r = reference_spectrum(&v, 120).unwrap();
        assert!((r.eigenvalues[0] - 0.667_986_259_155_777).abs() < 1e-8);
    }

    #[test]
    fn non_confining_is_rejected() {
        let v = Potential::Polynomial {
            coeffs: vec![0.0, 0.0, -1.0],
        };
        assert!(matches!(
            reference_spectrum(&v, 20),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn harmonic_density_examples() {
        let origin = harmonic_thermal_density(0.0, 0.0, 1.0);
        let want = 0.5f64.sinh() / (std::f64::consts::FRAC_PI_2 * 1f64.sinh()).sqrt();
        assert_eq!(origin, want);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (x, y) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            assert_eq!(
                harmonic_thermal_density(x, y, 1.3),
                harmonic_thermal_density(y, x, 1.3)
            );
        }
        let grid = QuadratureGrid::uniform(-12.0, 12.0, 4801).unwrap();
        let trace = grid.integrate(|x| harmonic_thermal_density(x, x, 1.0));
        assert!((trace - 1.0).abs() < 1e-8);
        let var = grid.integrate(|x| x * x * harmonic_thermal_density(x, x, 2.0));
        assert!((var - harmonic_position_variance(2.0)).abs() < 1e-10);
    }

    #[test]
    fn mixture_converges_to_closed_form() {
        let exact = harmonic_thermal_density(0.3, -0.2, 1.0);
        assert!((harmonic_mixture_check(0.3, -0.2, 1.0, 40) - exact).abs() < 1e-10);
        let cold = harmonic_thermal_density(0.4, 0.1, 20.0);
        assert!((harmonic_mixture_check(0.4, 0.1, 20.0, 1) - cold).abs() < 1e-8);
        assert_eq!(
            harmonic_mixture_check(0.3, -0.2, 1.0, 7),
            harmonic_mixture_check(-0.2, 0.3, 1.0, 7)
        );
        // Integrated diagonal error Σ_{k≥n} e^{−βE_k}/Z shrinks with every added term.
        let grid = QuadratureGrid::uniform(-10.0, 10.0, 2001).unwrap();
        let mut last = f64::INFINITY;
        for n in 1..30 {
            let err = grid.integrate(|x| {
                (harmonic_thermal_density(x, x, 1.0) - harmonic_mixture_check(x, x, 1.0, n)).abs()
            });
            assert!(err < last, "n = {n}: {err} >= {last}");
            last = err;
        }
    }

    #[test]
    fn state_set_selection_and_json() {
        let r = reference_spectrum(&Potential::Harmonic, 12).unwrap();
        let s = r.states.as_ref().unwrap().select(&[1, 0]);
        let full = r.states.as_ref().unwrap().amplitudes(0.4);
        let sel = s.amplitudes(0.4);
        assert_eq!(sel, vec![full[1], full[0]]);
        let text = serde_json::to_string(&r).unwrap();
        let back: SpectrumResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(text.contains("\"oracle\""));
    }
}
