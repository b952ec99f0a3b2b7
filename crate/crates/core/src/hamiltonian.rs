//! Potentials and the matrix elements H_{jk} = ⟨j| −½ d²/dx² + V |k⟩.
//!
//! Units: ħ = m = k_B = 1.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::basis::{fourier_frequency, BasisFamily, BasisSet, QuadratureGrid};
use crate::error::{Error, Result};
use crate::flow::{FlowMap, FlowedBasis, FlowedPoint};
use crate::linalg::Matrix;
use crate::vdm::VariationalDensityMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    /// x²/2
    Harmonic,
    /// x⁴/16 − x²/2 − x
    Anharmonic,
    /// Σ_k coeffs[k] xᵏ
    Polynomial { coeffs: Vec<f64> },
}

impl Potential {
    /// Ascending polynomial coefficients.
    pub fn coefficients(&self) -> Vec<f64> {
        match self {
            Potential::Harmonic => vec![0.0, 0.0, 0.5],
            Potential::Anharmonic => vec![0.0, -1.0, -0.5, 0.0, 1.0 / 16.0],
            Potential::Polynomial { coeffs } => coeffs.clone(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Potential::Harmonic => 0.5 * x * x,
            Potential::Anharmonic => {
                let x2 = x * x;
                x2 * x2 / 16.0 - 0.5 * x2 - x
            }
            Potential::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Potential::Harmonic => x,
            Potential::Anharmonic => x * x * x / 4.0 - x - 1.0,
            Potential::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c),
        }
    }

    /// V → ∞ in both directions: the leading non-zero coefficient has even degree and is positive.
    pub fn is_confining(&self) -> bool {
        let c = self.coefficients();
        match c.iter().rposition(|&v| v != 0.0) {
            Some(deg) => deg >= 2 && deg % 2 == 0 && c[deg] > 0.0,
            None => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_confining() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "potential is not confining (leading coefficient must be even-degree and positive)"
                    .into(),
            ))
        }
    }

    /// Location of the global minimum by a coarse scan over [−10, 10].
    pub fn global_minimum(&self) -> f64 {
        let mut best = (0.0, self.eval(0.0));
        for i in 0..=2000 {
            let x = -10.0 + 0.01 * i as f64;
            let v = self.eval(x);
            if v < best.1 {
                best = (x, v);
            }
        }
        best.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianMatrix {
    pub entries: Matrix,
    pub basis: BasisSet,
}

impl HamiltonianMatrix {
    pub fn size(&self) -> usize {
        self.entries.rows()
    }
}

/// Matrix elements of Ĥ in `basis` (pushed through `flow` when present).
///
/// The kinetic term uses the symmetric form ½∫ψ_j′ψ_k′ dx. Exact shortcuts:
/// harmonic potential in the plain Hermite basis, the Fourier kinetic diagonal,
/// and polynomial potentials against Fourier modes (closed-form moments).
/// Everything else is quadrature on `grid`.
pub fn matrix_elements(
    potential: &Potential,
    basis: &BasisSet,
    grid: &QuadratureGrid,
    flow: Option<&FlowMap>,
) -> Result<HamiltonianMatrix> {
    let m = basis.size;
    if let Some((lo, hi)) = basis.domain() {
        if grid.nodes.iter().any(|&x| x < lo - 1e-12 || x > hi + 1e-12) && flow.is_none() {
            return Err(Error::GridIncompatible(format!(
                "grid extends beyond the Fourier box [{lo}, {hi}]"
            )));
        }
    }
    let entries = match (flow, basis.family) {
        (Some(flow), _) => flowed_quadrature(potential, basis, grid, flow)?,
        (None, BasisFamily::Hermite) if *potential == Potential::Harmonic => {
            Matrix::diagonal(&(0..m).map(|j| j as f64 + 0.5).collect::<Vec<_>>())
        }
        (None, BasisFamily::Fourier { half_width }) => fourier_exact(potential, m, half_width),
        (None, BasisFamily::Hermite) => {
            if grid.len() < 2 * m {
                return Err(Error::UnderResolvedGrid(format!(
                    "{} nodes for {m} Hermite functions",
                    grid.len()
                )));
            }
            plain_quadrature(potential, basis, grid)
        }
    };
    Ok(HamiltonianMatrix {
        entries,
        basis: *basis,
    })
}

fn plain_quadrature(potential: &Potential, basis: &BasisSet, grid: &QuadratureGrid) -> Matrix {
    let m = basis.size;
    let mut h = Matrix::zeros(m, m);
    let mut v = vec![0.0; m];
    let mut d = vec![0.0; m];
    for (&x, &w) in grid.nodes.iter().zip(&grid.weights) {
        basis.eval_all_with_derivative(x, &mut v, &mut d);
        accumulate(&mut h, w, potential.eval(x), &v, &d);
    }
    symmetrize_upper(&mut h);
    h
}

fn flowed_quadrature(
    potential: &Potential,
    basis: &BasisSet,
    grid: &QuadratureGrid,
    flow: &FlowMap,
) -> Result<Matrix> {
    if flow.is_degenerate() {
        return Err(Error::DegenerateFlow);
    }
    let m = basis.size;
    let fb = FlowedBasis { basis, flow };
    let mut h = Matrix::zeros(m, m);
    let mut pt = FlowedPoint::default();
    for (&x, &w) in grid.nodes.iter().zip(&grid.weights) {
        fb.eval_full(x, m, &mut pt);
        accumulate(&mut h, w, potential.eval(x), &pt.values, &pt.derivs);
    }
    symmetrize_upper(&mut h);
    Ok(h)
}

fn accumulate(h: &mut Matrix, w: f64, v: f64, vals: &[f64], ders: &[f64]) {
    let m = vals.len();
    for j in 0..m {
        let kj = 0.5 * w * ders[j];
        let vj = w * v * vals[j];
        for k in j..m {
            h[(j, k)] += kj * ders[k] + vj * vals[k];
        }
    }
}

fn symmetrize_upper(h: &mut Matrix) {
    for j in 0..h.rows() {
        for k in 0..j {
            h[(j, k)] = h[(k, j)];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Trig {
    Cos,
    Sin,
}

/// (kind, integer frequency m, normalization) with ψ = norm·trig(mπx/L).
fn fourier_mode_parts(j: usize, l: f64) -> (Trig, i64, f64) {
    if j == 0 {
        (Trig::Cos, 0, 1.0 / (2.0 * l).sqrt())
    } else if j % 2 == 1 {
        (Trig::Sin, fourier_frequency(j) as i64, 1.0 / l.sqrt())
    } else {
        (Trig::Cos, fourier_frequency(j) as i64, 1.0 / l.sqrt())
    }
}

/// Product of two box modes as a sum of single trig terms (coefficient, kind, m ≥ 0).
fn product_terms(a: (Trig, i64, f64), b: (Trig, i64, f64)) -> Vec<(f64, Trig, i64)> {
    let c = 0.5 * a.2 * b.2;
    let (ma, mb) = (a.1, b.1);
    let raw = match (a.0, b.0) {
        (Trig::Cos, Trig::Cos) => vec![(c, Trig::Cos, ma - mb), (c, Trig::Cos, ma + mb)],
        (Trig::Sin, Trig::Sin) => vec![(c, Trig::Cos, ma - mb), (-c, Trig::Cos, ma + mb)],
        (Trig::Sin, Trig::Cos) => vec![(c, Trig::Sin, ma + mb), (c, Trig::Sin, ma - mb)],
        (Trig::Cos, Trig::Sin) => vec![(c, Trig::Sin, ma + mb), (-c, Trig::Sin, ma - mb)],
    };
    raw.into_iter()
        .map(|(coef, kind, m)| match (kind, m < 0) {
            (Trig::Sin, true) => (-coef, kind, -m),
            (_, true) => (coef, kind, -m),
            _ => (coef, kind, m),
        })
        .collect()
}

/// ∫_{−L}^{L} xᵖ trig(mπx/L) dx for p = 0..=max_p, exactly.
fn trig_moments(max_p: usize, kind: Trig, m: i64, l: f64) -> Vec<f64> {
    let mut cos_m = vec![0.0; max_p + 1];
    let mut sin_m = vec![0.0; max_p + 1];
    if m == 0 {
        for (p, c) in cos_m.iter_mut().enumerate() {
            *c = if p % 2 == 0 {
                2.0 * l.powi(p as i32 + 1) / (p as f64 + 1.0)
            } else {
                0.0
            };
        }
    } else {
        let omega = m as f64 * PI / l;
        let cos_l = if m % 2 == 0 { 1.0 } else { -1.0 };
        // sin(ωL) = 0, so the cosine boundary terms vanish.
        for p in 0..=max_p {
            let pf = p as f64;
            let lp = l.powi(p as i32);
            let odd_boundary = if p % 2 == 1 { 2.0 * lp } else { 0.0 };
            sin_m[p] = -cos_l * odd_boundary / omega
                + if p > 0 { pf / omega * cos_m[p - 1] } else { 0.0 };
            cos_m[p] = if p > 0 { -pf / omega * sin_m[p - 1] } else { 0.0 };
        }
    }
    match kind {
        Trig::Cos => cos_m,
        Trig::Sin => sin_m,
    }
}

fn fourier_exact(potential: &Potential, m: usize, l: f64) -> Matrix {
    let coeffs = potential.coefficients();
    let max_p = coeffs.len().saturating_sub(1);
    let mut h = Matrix::zeros(m, m);
    for j in 0..m {
        let pj = fourier_mode_parts(j, l);
        for k in j..m {
            let pk = fourier_mode_parts(k, l);
            let mut v = 0.0;
            for (coef, kind, freq) in product_terms(pj, pk) {
                let moments = trig_moments(max_p, kind, freq, l);
                v += coef
                    * coeffs
                        .iter()
                        .zip(&moments)
                        .map(|(c, mo)| c * mo)
                        .sum::<f64>();
            }
            h[(j, k)] = v;
        }
        let kin = fourier_frequency(j) as f64 * PI / l;
        h[(j, j)] += 0.5 * kin * kin;
    }
    symmetrize_upper(&mut h);
    h
}

/// Tr[ρ̃Ĥ] = Σ_n p̃_n ã_nᵀ H ã_n.
pub fn variational_energy(h: &HamiltonianMatrix, vdm: &VariationalDensityMatrix) -> Result<f64> {
    let energies = state_energies(&h.entries, vdm)?;
    Ok(vdm
        .probabilities()
        .iter()
        .zip(&energies)
        .map(|(p, e)| p * e)
        .sum())
}

/// Rayleigh quotients ã_nᵀ H ã_n for every state.
pub fn state_energies(h: &Matrix, vdm: &VariationalDensityMatrix) -> Result<Vec<f64>> {
    let a = &vdm.coefficients.0;
    if h.rows() != a.rows() || h.cols() != a.rows() {
        return Err(Error::DimensionMismatch {
            what: "Hamiltonian vs coefficient rows",
            expected: a.rows(),
            found: h.rows(),
        });
    }
    Ok((0..a.cols())
        .map(|n| {
            let col = a.column(n);
            let hc = h.matvec(&col);
            crate::linalg::dot(&col, &hc)
        })
        .collect())
}
