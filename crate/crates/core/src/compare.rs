//! Side-by-side comparison of two spectra: fractional gap differences and
//! sign-aligned L² distances between eigenstates.

use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, QuadratureGrid};
use crate::error::{Error, Result};
use crate::oracle::{SpectrumResult, StateSet};

pub const DEFAULT_COMPARE_RANGE: (f64, f64) = (-10.0, 10.0);
pub const DEFAULT_COMPARE_POINTS: usize = 4001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub n_states: usize,
    /// (g_a − g_b)/g_b for the gaps of states 1..n_states.
    pub fractional_gap_differences: Vec<f64>,
    /// ∫|ψ_a − s ψ_b|² dx with s = sign⟨ψ_a, ψ_b⟩, one per state; empty when
    /// either result carries no states.
    pub l2_distances: Vec<f64>,
    pub grid: (f64, f64, usize),
}

impl CompareReport {
    pub fn max_fractional_gap_difference(&self) -> f64 {
        self.fractional_gap_differences
            .iter()
            .fold(0.0, |m, d| m.max(d.abs()))
    }
}

fn domain(states: &StateSet) -> (f64, f64) {
    match states.basis.family {
        BasisFamily::Fourier { half_width } => (-half_width, half_width),
        BasisFamily::Hermite => (f64::NEG_INFINITY, f64::INFINITY),
    }
}

/// Compares the first `k` states (all common states when `None`) on a uniform
/// grid over `range` clipped to every finite basis box.
pub fn compare_with(
    a: &SpectrumResult,
    b: &SpectrumResult,
    k: Option<usize>,
    range: (f64, f64),
    points: usize,
) -> Result<CompareReport> {
    let common = a.eigenvalues.len().min(b.eigenvalues.len());
    let k = k.unwrap_or(common);
    if k == 0 || k > common {
        return Err(Error::DimensionMismatch {
            what: "states shared by both results",
            expected: k.max(1),
            found: common,
        });
    }
    let (ga, gb) = (a.gaps(), b.gaps());
    let fractional_gap_differences = (1..k).map(|n| (ga[n] - gb[n]) / gb[n]).collect();

    let mut lo = range.0;
    let mut hi = range.1;
    let mut l2_distances = Vec::new();
    if let (Some(sa), Some(sb)) = (&a.states, &b.states) {
        if sa.n_states() < k || sb.n_states() < k {
            return Err(Error::DimensionMismatch {
                what: "wavefunctions shared by both results",
                expected: k,
                found: sa.n_states().min(sb.n_states()),
            });
        }
        for d in [domain(sa), domain(sb)] {
            lo = lo.max(d.0);
            hi = hi.min(d.1);
        }
        let grid = QuadratureGrid::uniform(lo, hi, points)?;
        let mut overlap = vec![0.0; k];
        let mut aa = vec![0.0; k];
        let mut bb = vec![0.0; k];
        for (&x, &w) in grid.nodes.iter().zip(&grid.weights) {
            let (pa, pb) = (sa.amplitudes(x), sb.amplitudes(x));
            for n in 0..k {
                overlap[n] += w * pa[n] * pb[n];
                aa[n] += w * pa[n] * pa[n];
                bb[n] += w * pb[n] * pb[n];
            }
        }
        // ∫(ψ_a − sψ_b)² = ∫ψ_a² + ∫ψ_b² − 2|⟨ψ_a, ψ_b⟩|
        l2_distances = (0..k)
            .map(|n| (aa[n] + bb[n] - 2.0 * overlap[n].abs()).max(0.0))
            .collect();
    }
    Ok(CompareReport {
        n_states: k,
        fractional_gap_differences,
        l2_distances,
        grid: (lo, hi, points),
    })
}

pub fn compare(a: &SpectrumResult, b: &SpectrumResult) -> Result<CompareReport> {
    compare_with(a, b, None, DEFAULT_COMPARE_RANGE, DEFAULT_COMPARE_POINTS)
}
