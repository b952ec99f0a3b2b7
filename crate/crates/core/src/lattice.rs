//! Two-point correlator of q on periodic paths and the single-cosh fit for
//! the lowest gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{run_chain, ActionConfig, Boundary, SamplerConfig, StepStats};

pub const DEFAULT_BLOCKS: usize = 50;
/// Fraction of β excluded from the fit window at each end.
pub const DEFAULT_WINDOW_MARGIN: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorEstimate {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    /// Jackknife standard errors.
    pub errors: Vec<f64>,
    /// Per-block leave-one-out means, kept for jackknifing derived quantities.
    pub jackknife: Vec<Vec<f64>>,
    pub n_samples: usize,
    pub beta: f64,
}

/// Translation-averaged q(τ_0)q(τ_z) of one periodic path, z = 0..N_β−1.
pub fn path_correlator(path: &[f64], out: &mut [f64]) {
    let n = path.len();
    for (z, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for t in 0..n {
            s += path[t] * path[(t + z) % n];
        }
        *o = s / n as f64;
    }
}

/// Same with the path's own mean q̄ removed. Translation averaging makes this
/// exactly path_correlator − q̄², a τ-independent shift absorbed by B, while
/// the q̄ fluctuations that dominate the raw estimator cancel.
pub fn connected_path_correlator(path: &[f64], out: &mut [f64]) {
    let mean = path.iter().sum::<f64>() / path.len() as f64;
    let centered: Vec<f64> = path.iter().map(|q| q - mean).collect();
    path_correlator(&centered, out);
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// ⟨q(τ_0)q(τ_z)⟩ as sampled.
    Raw,
    /// Per-path mean removed before correlating.
    #[default]
    Connected,
}

/// Accumulates per-path correlators into contiguous blocks of MCMC order.
#[derive(Clone, Debug)]
pub struct CorrelatorAccumulator {
    n_slices: usize,
    block_size: usize,
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
    seen: usize,
    scratch: Vec<f64>,
    estimator: Estimator,
}

impl CorrelatorAccumulator {
    /// `expected` is the total number of paths that will be pushed.
    pub fn new(n_slices: usize, expected: usize, n_blocks: usize, estimator: Estimator) -> Result<Self> {
        if n_blocks < 2 || expected < n_blocks {
            return Err(Error::TooFewPaths {
                needed: n_blocks.max(2),
                got: expected,
            });
        }
        Ok(Self {
            n_slices,
            block_size: expected.div_ceil(n_blocks),
            sums: vec![vec![0.0; n_slices]; n_blocks],
            counts: vec![0; n_blocks],
            seen: 0,
            scratch: vec![0.0; n_slices],
            estimator,
        })
    }

    pub fn push(&mut self, path: &[f64]) -> Result<()> {
        if path.len() != self.n_slices {
            return Err(Error::DimensionMismatch {
                what: "periodic path length",
                expected: self.n_slices,
                found: path.len(),
            });
        }
        let b = (self.seen / self.block_size).min(self.sums.len() - 1);
        match self.estimator {
            Estimator::Raw => path_correlator(path, &mut self.scratch),
            Estimator::Connected => connected_path_correlator(path, &mut self.scratch),
        }
        for (s, c) in self.sums[b].iter_mut().zip(&self.scratch) {
            *s += c;
        }
        self.counts[b] += 1;
        self.seen += 1;
        Ok(())
    }

    pub fn finish(&self, beta: f64) -> Result<CorrelatorEstimate> {
        let used: Vec<usize> = (0..self.counts.len()).filter(|&b| self.counts[b] > 0).collect();
        if used.len() < 2 {
            return Err(Error::TooFewPaths {
                needed: 2,
                got: self.seen,
            });
        }
        let n = self.n_slices;
        let total: Vec<f64> = (0..n)
            .map(|z| used.iter().map(|&b| self.sums[b][z]).sum())
            .collect();
        let count = self.seen as f64;
        let values: Vec<f64> = total.iter().map(|t| t / count).collect();
        let jackknife: Vec<Vec<f64>> = used
            .iter()
            .map(|&b| {
                let c = count - self.counts[b] as f64;
                (0..n).map(|z| (total[z] - self.sums[b][z]) / c).collect()
            })
            .collect();
        let errors = jackknife_errors(&jackknife);
        let a = beta / n as f64;
        Ok(CorrelatorEstimate {
            taus: (0..n).map(|z| z as f64 * a).collect(),
            values,
            errors,
            jackknife,
            n_samples: self.seen,
            beta,
        })
    }
}

/// σ² = (K−1)/K Σ_k (θ_k − θ̄)² over leave-one-out replicas θ_k.
pub fn jackknife_errors(replicas: &[Vec<f64>]) -> Vec<f64> {
    let k = replicas.len() as f64;
    let m = replicas[0].len();
    (0..m)
        .map(|i| {
            let mean = replicas.iter().map(|r| r[i]).sum::<f64>() / k;
            let ss: f64 = replicas.iter().map(|r| (r[i] - mean).powi(2)).sum();
            ((k - 1.0) / k * ss).sqrt()
        })
        .collect()
}

/// Samples `n_paths` periodic paths and measures the correlator without storing paths.
pub fn measure_correlator(
    cfg: &ActionConfig,
    sampler: &SamplerConfig,
    n_paths: usize,
    n_blocks: usize,
    estimator: Estimator,
    seed: u64,
) -> Result<(CorrelatorEstimate, StepStats)> {
    if cfg.boundary != Boundary::Periodic {
        return Err(Error::InvalidConfig("correlators need Periodic boundary".into()));
    }
    let w = sampler.walkers_for(cfg.dimension());
    let expected = n_paths.div_ceil(w) * w;
    let mut acc = CorrelatorAccumulator::new(cfg.n_slices, expected, n_blocks, estimator)?;
    let mut err = None;
    let stats = run_chain(cfg, sampler, n_paths, seed, |walkers| {
        for p in walkers {
            if let Err(e) = acc.push(p) {
                err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok((acc.finish(cfg.beta)?, stats))
}

/// C(τ) = A cosh[ΔE(τ − β/2)] + B.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoshFit {
    pub a: f64,
    pub b: f64,
    pub delta_e: f64,
    pub chi2: f64,
    pub dof: usize,
    /// Curvature covariance of (A, B, ΔE) from the weighted least-squares Hessian.
    pub covariance: [[f64; 3]; 3],
    /// Jackknife standard error of ΔE when block replicas were available.
    pub delta_e_jackknife_error: Option<f64>,
    /// Set when the χ² profile has a second local minimum within Δχ² = 1 of the
    /// best, or the best ΔE sits at the edge of the scan.
    pub ambiguous: bool,
    pub window: (f64, f64),
}

impl CoshFit {
    pub fn delta_e_error(&self) -> f64 {
        self.delta_e_jackknife_error
            .unwrap_or_else(|| self.covariance[2][2].sqrt())
    }

    pub fn model(&self, tau: f64, beta: f64) -> f64 {
        self.a * (self.delta_e * (tau - 0.5 * beta)).cosh() + self.b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Window [β·margin, β·(1 − margin)].
    pub margin: f64,
    pub delta_e_range: (f64, f64),
    pub scan_points: usize,
    pub jackknife: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            margin: DEFAULT_WINDOW_MARGIN,
            delta_e_range: (0.02, 6.0),
            scan_points: 600,
            jackknife: true,
        }
    }
}

struct Points<'a> {
    t: Vec<f64>,
    y: &'a [f64],
    w: Vec<f64>,
    half_beta: f64,
}

/// Weighted least squares for (A, B) at fixed ΔE; returns (A, B, χ²).
fn profile(p: &Points, y: &[f64], de: f64) -> (f64, f64, f64) {
    let (mut sw, mut sc, mut scc, mut sy, mut scy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..p.t.len() {
        let c = (de * (p.t[i] - p.half_beta)).cosh();
        let w = p.w[i];
        sw += w;
        sc += w * c;
        scc += w * c * c;
        sy += w * y[i];
        scy += w * c * y[i];
    }
    let det = sw * scc - sc * sc;
    let a = (sw * scy - sc * sy) / det;
    let b = (scc * sy - sc * scy) / det;
    let chi2 = (0..p.t.len())
        .map(|i| {
            let r = y[i] - a * (de * (p.t[i] - p.half_beta)).cosh() - b;
            p.w[i] * r * r
        })
        .sum();
    (a, b, chi2)
}

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo < 1e-12 * (1.0 + lo.abs()) {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Scan + golden-section minimum of the profiled χ²; returns (ΔE, ambiguous).
fn minimize_profile(p: &Points, y: &[f64], opts: &FitOptions) -> (f64, bool) {
    let (lo, hi) = opts.delta_e_range;
    let n = opts.scan_points.max(3);
    let grid: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let chi: Vec<f64> = grid.iter().map(|&d| profile(p, y, d).2).collect();
    let best = (0..n)
        .min_by(|&i, &j| chi[i].total_cmp(&chi[j]))
        .expect("non-empty scan");
    let at_edge = best == 0 || best == n - 1;
    let bracket = (grid[best.saturating_sub(1)], grid[(best + 1).min(n - 1)]);
    let de = golden_min(|d| profile(p, y, d).2, bracket.0, bracket.1);
    let best_chi = profile(p, y, de).2;
    let rival = (1..n - 1).any(|k| {
        k.abs_diff(best) > 1 && chi[k] < chi[k - 1] && chi[k] < chi[k + 1] && chi[k] < best_chi + 1.0
    });
    (de, at_edge || rival)
}

fn invert3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c = |r: usize, s: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (s1, s2) = ((s + 1) % 3, (s + 2) % 3);
        m[r1][s1] * m[r2][s2] - m[r1][s2] * m[r2][s1]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (s, v) in row.iter_mut().enumerate() {
            *v = c(s, r) / det;
        }
    }
    Some(inv)
}

/// χ² fit of A cosh[ΔE(τ − β/2)] + B on the window, with diagonal jackknife
/// weights. Uses the block replicas of `est` for a jackknife ΔE error when
/// `opts.jackknife` is set.
pub fn fit_delta_e(est: &CorrelatorEstimate, opts: &FitOptions) -> Result<CoshFit> {
    let beta = est.beta;
    let window = (beta * opts.margin, beta * (1.0 - opts.margin));
    let idx: Vec<usize> = (0..est.taus.len())
        .filter(|&i| est.taus[i] >= window.0 - 1e-12 && est.taus[i] <= window.1 + 1e-12)
        .collect();
    if idx.len() < 4 {
        return Err(Error::DegenerateWindow(format!(
            "{} points in [{:.3}, {:.3}]",
            idx.len(),
            window.0,
            window.1
        )));
    }
    if let Some(&i) = idx.iter().find(|&&i| !(est.errors[i] > 0.0)) {
        return Err(Error::DegenerateWindow(format!("zero error at τ = {}", est.taus[i])));
    }
    let y: Vec<f64> = idx.iter().map(|&i| est.values[i]).collect();
    let p = Points {
        t: idx.iter().map(|&i| est.taus[i]).collect(),
        y: &y,
        w: idx.iter().map(|&i| est.errors[i].powi(-2)).collect(),
        half_beta: 0.5 * beta,
    };
    let (de, ambiguous) = minimize_profile(&p, p.y, opts);
    let (a, b, chi2) = profile(&p, p.y, de);

    // Gauss–Newton Hessian JᵀWJ with J = (cosh, 1, A (τ − β/2) sinh).
    let mut h = [[0.0; 3]; 3];
    for i in 0..p.t.len() {
        let s = p.t[i] - p.half_beta;
        let j = [(de * s).cosh(), 1.0, a * s * (de * s).sinh()];
        for r in 0..3 {
            for c in 0..3 {
                h[r][c] += p.w[i] * j[r] * j[c];
            }
        }
    }
    let covariance = invert3(h).ok_or_else(|| Error::DegenerateWindow("singular fit Hessian".into()))?;

    let delta_e_jackknife_error = if opts.jackknife && est.jackknife.len() >= 2 {
        let reps: Vec<Vec<f64>> = est
            .jackknife
            .iter()
            .map(|rep| {
                let yr: Vec<f64> = idx.iter().map(|&i| rep[i]).collect();
                let lo = (de * 0.5).max(opts.delta_e_range.0);
                let hi = (de * 1.5).min(opts.delta_e_range.1);
                vec![golden_min(|d| profile(&p, &yr, d).2, lo, hi)]
            })
            .collect();
        Some(jackknife_errors(&reps)[0])
    } else {
        None
    };

    Ok(CoshFit {
        a,
        b,
        delta_e: de,
        chi2,
        dof: p.t.len() - 3,
        covariance,
        delta_e_jackknife_error,
        ambiguous,
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::Potential;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn synthetic(noise: f64, seed: u64) -> CorrelatorEstimate {
        let beta = 10.0;
        let n = 160;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taus: Vec<f64> = (0..n).map(|z| z as f64 * beta / n as f64).collect();
        let truth: Vec<f64> = taus
            .iter()
            .map(|t| 0.5 * (1.6 * (t - 5.0)).cosh() + 0.01)
            .collect();
        let errors: Vec<f64> = truth.iter().map(|c| noise * c.abs()).collect();
        let values = truth
            .iter()
            .zip(&errors)
            .map(|(c, e)| c + Normal::new(0.0, *e).unwrap().sample(&mut rng))
            .collect();
        CorrelatorEstimate {
            taus,
            values,
            errors,
            jackknife: Vec::new(),
            n_samples: 0,
            beta,
        }
    }

    #[test]
    fn exact_model_recovered() {
        let mut est = synthetic(0.01, 0);
        est.values = est.taus.iter().map(|t| 0.5 * (1.6 * (t - 5.0)).cosh() + 0.01).collect();
        let fit = fit_delta_e(&est, &FitOptions::default()).unwrap();
        assert!((fit.delta_e - 1.6).abs() < 1e-8, "{fit:?}");
        assert!((fit.a - 0.5).abs() < 1e-7 && (fit.b - 0.01).abs() < 1e-7);
        assert!(fit.chi2 < 1e-10);
        assert!(!fit.ambiguous);
    }

    #[test]
    fn noisy_synthetic_within_two_sigma() {
        let fit = fit_delta_e(&synthetic(0.01, 7), &FitOptions::default()).unwrap();
        assert!((fit.delta_e - 1.6).abs() < 2.0 * fit.delta_e_error(), "{fit:?}");
        assert!(fit.chi2.is_finite() && fit.delta_e > 0.0);
    }

    #[test]
    fn coverage_is_near_68_percent() {
        let inside = (0..100)
            .filter(|&s| {
                let fit = fit_delta_e(&synthetic(0.01, 1000 + s), &FitOptions::default()).unwrap();
                (fit.delta_e - 1.6).abs() < fit.delta_e_error()
            })
            .count();
        assert!((55..=81).contains(&inside), "{inside}/100 within 1σ");
    }

    #[test]
    fn narrow_window_rejected() {
        let est = synthetic(0.01, 0);
        let opts = FitOptions {
            margin: 0.499,
            ..FitOptions::default()
        };
        assert!(matches!(fit_delta_e(&est, &opts), Err(Error::DegenerateWindow(_))));
    }

    #[test]
    fn path_correlator_brute_force() {
        let path = [0.3, -1.0, 2.0, 0.5, 0.0];
        let mut out = [0.0; 5];
        path_correlator(&path, &mut out);
        for z in 0..5 {
            let mut s = 0.0;
            for t in 0..5 {
                s += path[t] * path[(t + z) % 5];
            }
            assert!((out[z] - s / 5.0).abs() < 1e-15);
            // Reflection symmetry of the translation average.
            assert!((out[z] - out[(5 - z) % 5]).abs() < 1e-14);
        }
        let mean = path.iter().sum::<f64>() / 5.0;
        let mut conn = [0.0; 5];
        connected_path_correlator(&path, &mut conn);
        for z in 0..5 {
            assert!((conn[z] - (out[z] - mean * mean)).abs() < 1e-14);
        }
    }

    #[test]
    fn jackknife_of_constant_blocks_is_zero() {
        let mut acc = CorrelatorAccumulator::new(4, 10, 5, Estimator::Raw).unwrap();
        for _ in 0..10 {
            acc.push(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        }
        let est = acc.finish(1.0).unwrap();
        assert!(est.errors.iter().all(|e| *e == 0.0));
        assert_eq!(est.values, vec![1.0; 4]);
    }

    #[test]
    fn harmonic_correlator_small_lattice() {
        let cfg = ActionConfig::new(4.0, 16, Potential::Harmonic, Boundary::Periodic).unwrap();
        let s = SamplerConfig {
            burn_in: 500,
            ..SamplerConfig::default()
        };
        let (est, _) = measure_correlator(&cfg, &s, 64 * 600, 50, Estimator::Raw, 3).unwrap();
        // Exact discrete-action correlator: the lattice operator is a circulant
        // with eigenvalues 2(1 − cos k)/a + a(1 + cos k)/2 (midpoint potential).
        let n = 16;
        let a = 0.25;
        for z in 0..n {
            let exact: f64 = (0..n)
                .map(|m| {
                    let k = 2.0 * std::f64::consts::PI * m as f64 / n as f64;
                    let lam = 2.0 * (1.0 - k.cos()) / a + a * (1.0 + k.cos()) / 2.0;
                    (k * z as f64).cos() / lam
                })
                .sum::<f64>()
                / n as f64;
            let dev = (est.values[z] - exact).abs() / est.errors[z];
            assert!(dev < 4.0, "τ index {z}: {} vs {exact} ({dev:.1}σ)", est.values[z]);
        }
    }
}
