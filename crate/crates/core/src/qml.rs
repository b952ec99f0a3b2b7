//! Quantum maximum likelihood: fit ρ̃ to endpoint pairs (x_i, y_i) of sampled
//! open paths by minimizing
//! L = −log p̃_⊥ − (1/N_q) Σ_{i,n} log(p̃_n/p̃_⊥) ψ̃_n(y_i)ψ̃_n(x_i) + c_⊥ L_⊥.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::flow::{FlowMap, FlowVariant, FlowedBasis, FlowedPoint, DEFAULT_FLOW_INTERVALS, DEFAULT_FLOW_RANGE};
use crate::hamiltonian::Potential;
use crate::linalg::{norm, Matrix};
use crate::optim::{linear_decay, AdamState};
use crate::oracle::{Method, SpectrumResult, StateSet};
use crate::sampler::{sample_open_paths, ActionConfig, Boundary, PathEnsemble, SamplerConfig};
use crate::vdm::{
    eigenvalue_report, energy_order, normalize_columns, orthogonality_penalty,
    orthogonality_penalty_gradient, tangent_gradient, BoltzmannWeights,
    CoefficientMatrix, ParameterGradient, VariationalDensityMatrix, DEFAULT_P_PERP,
};

/// Below this many pairs per step the projections are too noisy to converge.
pub const MIN_HEALTHY_BATCH: usize = 500;
/// Endpoint pairs per parallel work item; fixed so the reduction order never changes.
const CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QmlFamily {
    /// ψ̃_n = Σ_j ã_{j,n} H_j.
    HermiteMixture,
    /// ψ̃_n = Σ_j ã_{j,n} U[f, H_j] with one shared flow f.
    HermiteMixturePlusFlow,
    /// ψ̃_n = U[f, H_n]: no mixing, coefficients frozen at the identity.
    FlowOnly,
}

impl QmlFamily {
    pub fn has_flow(self) -> bool {
        !matches!(self, QmlFamily::HermiteMixture)
    }

    pub fn mixes(self) -> bool {
        !matches!(self, QmlFamily::FlowOnly)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QmlConfig {
    /// Inverse temperature of the sampled paths; gaps are reported with T = 1/β.
    pub beta: f64,
    pub n_states: usize,
    pub basis: BasisSet,
    pub family: QmlFamily,
    /// Flow template (node layout and initial coefficients) for the flowed families.
    pub flow: FlowMap,
    pub c_perp: f64,
    pub p_perp: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub learning_rate: f64,
    /// Fraction of `max_steps` after which the learning rate falls linearly
    /// to zero; 1 keeps it constant. Annealing removes most of the
    /// mini-batch jitter from the final parameters.
    pub lr_decay_start: f64,
    pub log_every: usize,
    /// Time slices of the open paths.
    pub n_slices: usize,
    /// Endpoint pairs drawn once and cycled (ignored in online mode).
    pub bank_size: usize,
    /// Draw fresh pairs from a running sampler every step instead of cycling a bank.
    pub online: bool,
    pub sampler: SamplerConfig,
}

impl Default for QmlConfig {
    fn default() -> Self {
        let (a, b) = DEFAULT_FLOW_RANGE;
        Self {
            beta: 1.0,
            n_states: 10,
            basis: BasisSet::hermite(10).expect("valid basis"),
            family: QmlFamily::HermiteMixture,
            flow: FlowMap::new(a, b, DEFAULT_FLOW_INTERVALS, FlowVariant::TanhSum)
                .expect("valid flow"),
            c_perp: 1e2,
            p_perp: DEFAULT_P_PERP,
            batch_size: 500,
            max_steps: 20_000,
            learning_rate: 1e-3,
            lr_decay_start: 1.0,
            log_every: 100,
            n_slices: 32,
            bank_size: 1_000_000,
            online: false,
            sampler: SamplerConfig::default(),
        }
    }
}

impl QmlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if self.n_states == 0 || self.n_states > self.basis.size {
            return bad(format!(
                "need 1 <= n_states <= basis size, got {} and {}",
                self.n_states, self.basis.size
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.p_perp > 0.0) {
            return bad(format!("p_perp must be positive, got {}", self.p_perp));
        }
        if !(self.c_perp >= 0.0) {
            return bad(format!("c_perp must be non-negative, got {}", self.c_perp));
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || !(0.0..=1.0).contains(&self.lr_decay_start) {
            return bad(format!(
                "need learning_rate > 0 and lr_decay_start in [0, 1], got {} and {}",
                self.learning_rate, self.lr_decay_start
            ));
        }
        if !self.online && self.bank_size < self.batch_size {
            return bad(format!(
                "bank_size {} is smaller than one batch of {}",
                self.bank_size, self.batch_size
            ));
        }
        self.sampler.validate()
    }

    pub fn action(&self, potential: &Potential) -> Result<ActionConfig> {
        ActionConfig::new(self.beta, self.n_slices, potential.clone(), Boundary::Open)
    }

    /// Starting point: identity coefficients (perturbed when mixing is trained),
    /// ordered logits at T = 1/β, and the flow template when the family has one.
    pub fn initial_state(&self, rng: &mut impl rand::Rng) -> Result<VariationalDensityMatrix> {
        let flow = self.family.has_flow().then(|| self.flow.clone());
        let mut vdm = VariationalDensityMatrix::initialized(
            self.basis,
            self.n_states,
            1.0 / self.beta,
            self.p_perp,
            flow,
            rng,
        )?;
        if !self.family.mixes() {
            vdm.coefficients = CoefficientMatrix::identity_block(self.basis.size, self.n_states);
        }
        Ok(vdm)
    }
}

/// The pieces of the empirical loss; `total` is their sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QmlLoss {
    /// −log p̃_⊥
    pub log_perp_term: f64,
    /// −(1/N_q) Σ_{i,n} log(p̃_n/p̃_⊥) ψ̃_n(y_i)ψ̃_n(x_i)
    pub projection_term: f64,
    /// L_⊥ (unscaled)
    pub orthogonality: f64,
    pub total: f64,
}

/// Basis values at one point, plus what the flow gradient needs.
struct PointEval {
    phi: Vec<f64>,
    dv_df: Vec<f64>,
    dv_dfp: Vec<f64>,
    tanh: Vec<f64>,
}

fn eval_point(vdm: &VariationalDensityMatrix, x: f64, with_flow_grad: bool) -> PointEval {
    let m = vdm.basis.size;
    match &vdm.flow {
        None => {
            let mut phi = vec![0.0; m];
            vdm.basis.eval_all(x, &mut phi);
            PointEval {
                phi,
                dv_df: Vec::new(),
                dv_dfp: Vec::new(),
                tanh: Vec::new(),
            }
        }
        Some(flow) => {
            let tanh = flow.tanh_row(x);
            let fb = FlowedBasis {
                basis: &vdm.basis,
                flow,
            };
            let mut pt = FlowedPoint::default();
            fb.eval_values_at(flow.evaluate_tabulated(x, &tanh), m, &mut pt);
            PointEval {
                phi: pt.values,
                dv_df: if with_flow_grad { pt.dv_df } else { Vec::new() },
                dv_dfp: if with_flow_grad { pt.dv_dfp } else { Vec::new() },
                tanh: if with_flow_grad { tanh } else { Vec::new() },
            }
        }
    }
}

fn amplitudes(a: &Matrix, phi: &[f64]) -> Vec<f64> {
    (0..a.cols())
        .map(|n| (0..a.rows()).map(|j| a[(j, n)] * phi[j]).sum())
        .collect()
}

/// Batch sums accumulated over one chunk of endpoint pairs.
struct Partial {
    /// Σ_i ψ̃_n(y_i)ψ̃_n(x_i)
    proj: Vec<f64>,
    /// Σ_i [φ_j(y_i)ψ̃_n(x_i) + ψ̃_n(y_i)φ_j(x_i)], M × N
    coeff: Option<Matrix>,
    /// ∂(Σ_i Σ_n c_n ψ̃_n(y_i)ψ̃_n(x_i))/∂C
    flow: Option<Vec<f64>>,
}

/// Sums over a chunk. `c` are the per-state weights −log(p̃_n/p̃_⊥)/N_q used in
/// the flow back-propagation.
fn chunk_sums(
    vdm: &VariationalDensityMatrix,
    a: &Matrix,
    pairs: &[(f64, f64)],
    c: Option<&[f64]>,
    want_coeff: bool,
) -> Partial {
    let (m, n_states) = (a.rows(), a.cols());
    let flow_grad = c.is_some() && vdm.flow.is_some();
    let mut proj = vec![0.0; n_states];
    let mut coeff = want_coeff.then(|| Matrix::zeros(m, n_states));
    let mut flow = flow_grad.then(|| vec![0.0; vdm.flow.as_ref().map_or(0, FlowMap::n_params)]);
    for &(x, y) in pairs {
        let px = eval_point(vdm, x, flow_grad);
        let py = eval_point(vdm, y, flow_grad);
        let sx = amplitudes(a, &px.phi);
        let sy = amplitudes(a, &py.phi);
        for n in 0..n_states {
            proj[n] += sy[n] * sx[n];
        }
        if let Some(g) = coeff.as_mut() {
            for j in 0..m {
                for n in 0..n_states {
                    g[(j, n)] += py.phi[j] * sx[n] + sy[n] * px.phi[j];
                }
            }
        }
        if let (Some(fg), Some(c)) = (flow.as_mut(), c) {
            // ∂/∂φ_j(x) = Σ_n c_n ã_{j,n} ψ̃_n(y), and symmetrically for y.
            for (p, partner) in [(&px, &sy), (&py, &sx)] {
                let (mut g_f, mut g_fp) = (0.0, 0.0);
                for j in 0..m {
                    let dl: f64 = (0..n_states).map(|n| c[n] * a[(j, n)] * partner[n]).sum();
                    g_f += dl * p.dv_df[j];
                    g_fp += dl * p.dv_dfp[j];
                }
                for (gi, &t) in fg.iter_mut().zip(&p.tanh) {
                    *gi += g_f * t + g_fp * (1.0 - t * t);
                }
            }
        }
    }
    Partial { proj, coeff, flow }
}

/// Chunked parallel map with a sequential, schedule-independent reduction.
fn batch_sums(
    vdm: &VariationalDensityMatrix,
    a: &Matrix,
    pairs: &[(f64, f64)],
    c: Option<&[f64]>,
    want_coeff: bool,
) -> Partial {
    let parts: Vec<Partial> = pairs
        .par_chunks(CHUNK)
        .map(|ch| chunk_sums(vdm, a, ch, c, want_coeff))
        .collect();
    let mut it = parts.into_iter();
    let mut total = it.next().unwrap_or_else(|| chunk_sums(vdm, a, &[], c, want_coeff));
    for p in it {
        for (t, v) in total.proj.iter_mut().zip(&p.proj) {
            *t += v;
        }
        if let (Some(t), Some(v)) = (total.coeff.as_mut(), p.coeff.as_ref()) {
            for (t, v) in t.as_mut_slice().iter_mut().zip(v.as_slice()) {
                *t += v;
            }
        }
        if let (Some(t), Some(v)) = (total.flow.as_mut(), p.flow.as_ref()) {
            for (t, v) in t.iter_mut().zip(v) {
                *t += v;
            }
        }
    }
    total
}

fn check_flow(vdm: &VariationalDensityMatrix) -> Result<()> {
    match &vdm.flow {
        Some(f) if f.is_degenerate() => Err(Error::DegenerateFlow),
        _ => Ok(()),
    }
}

/// (1/N_q) Σ_i ψ̃_n(y_i)ψ̃_n(x_i) for every state (unit-normalized columns).
pub fn batch_projections(vdm: &VariationalDensityMatrix, pairs: &[(f64, f64)]) -> Result<Vec<f64>> {
    check_flow(vdm)?;
    let a = normalize_columns(&vdm.coefficients)?.0;
    let s = batch_sums(vdm, &a, pairs, None, false);
    let nq = pairs.len().max(1) as f64;
    Ok(s.proj.into_iter().map(|p| p / nq).collect())
}

fn assemble(vdm: &VariationalDensityMatrix, unit: &CoefficientMatrix, proj_mean: &[f64], c_perp: f64) -> QmlLoss {
    let logp = vdm.weights.log_probabilities();
    let lperp = vdm.weights.p_perp.ln();
    let projection_term: f64 = -logp
        .iter()
        .zip(proj_mean)
        .map(|(l, p)| (l - lperp) * p)
        .sum::<f64>();
    let orthogonality = orthogonality_penalty(unit);
    let log_perp_term = -lperp;
    QmlLoss {
        log_perp_term,
        projection_term,
        orthogonality,
        total: log_perp_term + projection_term + c_perp * orthogonality,
    }
}

/// Empirical loss on unit-normalized coefficient columns. An empty batch
/// leaves only −log p̃_⊥ + c_⊥ L_⊥.
pub fn qml_empirical_loss(
    vdm: &VariationalDensityMatrix,
    pairs: &[(f64, f64)],
    c_perp: f64,
) -> Result<QmlLoss> {
    check_flow(vdm)?;
    let unit = normalize_columns(&vdm.coefficients)?;
    let s = batch_sums(vdm, &unit.0, pairs, None, false);
    let nq = pairs.len().max(1) as f64;
    let mean: Vec<f64> = s.proj.iter().map(|p| p / nq).collect();
    let loss = assemble(vdm, &unit, &mean, c_perp);
    if !loss.total.is_finite() {
        return Err(Error::Diverged("non-finite QML loss".into()));
    }
    Ok(loss)
}

/// Loss and its gradient with respect to (ã, logits, C). Endpoints are
/// constants. The coefficient gradient is the sphere-tangent gradient of the
/// loss on normalized columns.
pub fn qml_loss_and_gradient(
    vdm: &VariationalDensityMatrix,
    pairs: &[(f64, f64)],
    c_perp: f64,
) -> Result<(QmlLoss, ParameterGradient)> {
    check_flow(vdm)?;
    let norms = crate::vdm::column_norms(&vdm.coefficients);
    let unit = normalize_columns(&vdm.coefficients)?;
    let nq = pairs.len().max(1) as f64;
    let logp = vdm.weights.log_probabilities();
    let lperp = vdm.weights.p_perp.ln();
    let w: Vec<f64> = logp.iter().map(|l| l - lperp).collect();
    let c: Vec<f64> = w.iter().map(|w| -w / nq).collect();
    let s = batch_sums(vdm, &unit.0, pairs, Some(&c), true);
    let mean: Vec<f64> = s.proj.iter().map(|p| p / nq).collect();
    let loss = assemble(vdm, &unit, &mean, c_perp);
    if !loss.total.is_finite() {
        return Err(Error::Diverged("non-finite QML loss".into()));
    }

    // ∂L/∂log p̃_n = −P̄_n, pushed through log-softmax: −P̄_k + p̃_k Σ_n P̄_n.
    let p = vdm.probabilities();
    let total_proj: f64 = mean.iter().sum();
    let logits: Vec<f64> = (0..p.len()).map(|k| -mean[k] + p[k] * total_proj).collect();

    let mut g_unit = s.coeff.expect("coefficient sums requested");
    let pen = orthogonality_penalty_gradient(&unit);
    for j in 0..g_unit.rows() {
        for n in 0..g_unit.cols() {
            g_unit[(j, n)] = c[n] * g_unit[(j, n)] + c_perp * pen[(j, n)];
        }
    }
    let coefficients = tangent_gradient(&unit.0, &norms, &g_unit);
    Ok((
        loss,
        ParameterGradient {
            coefficients,
            logits,
            flow: s.flow,
        },
    ))
}

/// Where training pairs come from.
pub enum SampleSource {
    /// Pre-drawn pairs, cycled in a fresh shuffled order every pass.
    Bank(Vec<(f64, f64)>),
    /// A running ensemble; every retained sweep contributes all walkers' endpoints.
    Online(Box<OnlineSampler>),
}

pub struct OnlineSampler {
    action: ActionConfig,
    sampler: SamplerConfig,
    ensemble: PathEnsemble,
    buffer: Vec<(f64, f64)>,
}

impl OnlineSampler {
    pub fn new(action: ActionConfig, sampler: SamplerConfig, seed: u64) -> Result<Self> {
        sampler.validate()?;
        let w = sampler.walkers_for(action.dimension());
        let mut ensemble = PathEnsemble::new(&action, w, seed)?;
        for _ in 0..sampler.burn_in {
            ensemble.sweep(&action, &sampler);
        }
        Ok(Self {
            action,
            sampler,
            ensemble,
            buffer: Vec::new(),
        })
    }

    fn next_batch(&mut self, n: usize) -> Vec<(f64, f64)> {
        while self.buffer.len() < n {
            for _ in 0..self.sampler.thin {
                self.ensemble.sweep(&self.action, &self.sampler);
            }
            self.buffer
                .extend(self.ensemble.walkers.iter().map(|w| (w[0], w[w.len() - 1])));
        }
        self.buffer.drain(..n).collect()
    }
}

struct BankCursor {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl BankCursor {
    fn next_batch(&mut self, bank: &[(f64, f64)], n: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(bank[self.order[self.pos]]);
            self.pos += 1;
        }
        out
    }
}

/// Draws `cfg.bank_size` endpoint pairs from open paths at β = `cfg.beta`.
pub fn generate_bank(cfg: &QmlConfig, potential: &Potential, seed: u64) -> Result<Vec<(f64, f64)>> {
    let action = cfg.action(potential)?;
    let mut out = sample_open_paths(&action, &cfg.sampler, cfg.bank_size, seed, false)?;
    out.endpoints.truncate(cfg.bank_size);
    Ok(out.endpoints)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QmlLogRow {
    pub step: usize,
    pub total: f64,
    pub log_perp_term: f64,
    pub projection_term: f64,
    pub orthogonality: f64,
    pub min_p: f64,
    pub gradient_norm: f64,
}

#[derive(Clone, Debug)]
pub struct QmlOutcome {
    pub spectrum: SpectrumResult,
    pub vdm: VariationalDensityMatrix,
    pub optimizer: AdamState,
    pub log: Vec<QmlLogRow>,
    pub steps: usize,
}

pub fn train_qml(
    cfg: &QmlConfig,
    potential: &Potential,
    source: SampleSource,
    seed: u64,
) -> Result<QmlOutcome> {
    train_qml_with(cfg, potential, source, seed, |_, _, _| {})
}

/// Training loop: batch → gradient → Adam → clamp C ≥ 0 → renormalize columns,
/// with the learning rate annealed over the final steps when configured.
/// FlowOnly keeps its identity coefficients by zeroing their gradient.
pub fn train_qml_with(
    cfg: &QmlConfig,
    potential: &Potential,
    mut source: SampleSource,
    seed: u64,
    mut observer: impl FnMut(&QmlLogRow, &VariationalDensityMatrix, &AdamState),
) -> Result<QmlOutcome> {
    cfg.validate()?;
    potential.validate()?;
    if cfg.batch_size < MIN_HEALTHY_BATCH {
        log::warn!(
            "batch size {} is below {MIN_HEALTHY_BATCH}; projection estimates may be too noisy to converge",
            cfg.batch_size
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vdm = cfg.initial_state(&mut rng)?;
    let mut adam = AdamState::new(vdm.n_parameters(), cfg.learning_rate)?;
    let mut params = vdm.parameters();
    let mut cursor = match &source {
        SampleSource::Bank(bank) if bank.is_empty() => {
            return Err(Error::TooFewPaths { needed: 1, got: 0 })
        }
        SampleSource::Bank(bank) => Some(BankCursor {
            order: (0..bank.len()).collect(),
            pos: bank.len(),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba4c),
        }),
        SampleSource::Online(_) => None,
    };
    let mut log = Vec::new();
    let mut perp_warned = false;
    let n_coeff = vdm.coefficients.0.as_slice().len();

    for step in 0..cfg.max_steps {
        adam.learning_rate = linear_decay(cfg.learning_rate, step, cfg.max_steps, cfg.lr_decay_start);
        let batch = match (&mut source, cursor.as_mut()) {
            (SampleSource::Bank(bank), Some(c)) => c.next_batch(bank, cfg.batch_size),
            (SampleSource::Online(s), _) => s.next_batch(cfg.batch_size),
            _ => unreachable!("bank sources always carry a cursor"),
        };
        let (loss, grad) = qml_loss_and_gradient(&vdm, &batch, cfg.c_perp)?;
        let mut flat = grad.flatten();
        if !cfg.family.mixes() {
            flat[..n_coeff].iter_mut().for_each(|g| *g = 0.0);
        }
        let min_p = vdm.probabilities().into_iter().fold(f64::INFINITY, f64::min);
        if min_p <= cfg.p_perp && !perp_warned {
            log::warn!("step {step}: min p̃_n = {min_p:.3e} is not above p̃_⊥ = {:.1e}", cfg.p_perp);
            perp_warned = true;
        }
        if step % cfg.log_every == 0 {
            let row = QmlLogRow {
                step,
                total: loss.total,
                log_perp_term: loss.log_perp_term,
                projection_term: loss.projection_term,
                orthogonality: loss.orthogonality,
                min_p,
                gradient_norm: norm(&flat),
            };
            observer(&row, &vdm, &adam);
            log.push(row);
        }
        adam.step(&mut params, &flat)?;
        vdm.set_parameters(&params);
        vdm.coefficients = normalize_columns(&vdm.coefficients)?;
        params = vdm.parameters();
    }

    let spectrum = summarize(cfg, &vdm, &log)?;
    Ok(QmlOutcome {
        spectrum,
        vdm,
        optimizer: adam,
        log,
        steps: cfg.max_steps,
    })
}

/// Σ_n ã_{n,n}² / Σ_{j,n} ã_{j,n}² with states in energy order: 1 when every
/// state is a single basis function, ≈ N/M for fully spread coefficients.
pub fn diagonal_dominance(coefficients: &Matrix) -> f64 {
    let total: f64 = coefficients.as_slice().iter().map(|v| v * v).sum();
    let k = coefficients.rows().min(coefficients.cols());
    let diag: f64 = (0..k).map(|n| coefficients[(n, n)].powi(2)).sum();
    diag / total
}

fn summarize(cfg: &QmlConfig, vdm: &VariationalDensityMatrix, log: &[QmlLogRow]) -> Result<SpectrumResult> {
    let order = energy_order(&vdm.weights);
    let unit = normalize_columns(&vdm.coefficients)?;
    let coefficients = Matrix::from_fn(vdm.basis.size, order.len(), |j, k| unit.0[(j, order[k])]);
    let p = vdm.probabilities();
    let min_p = p.iter().copied().fold(f64::INFINITY, f64::min);
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("steps".to_string(), cfg.max_steps as f64);
    diagnostics.insert("beta".to_string(), cfg.beta);
    diagnostics.insert("batch_size".to_string(), cfg.batch_size as f64);
    diagnostics.insert("min_p".to_string(), min_p);
    diagnostics.insert(
        "perp_violation".to_string(),
        if min_p <= cfg.p_perp { 1.0 } else { 0.0 },
    );
    diagnostics.insert("orthogonality".to_string(), orthogonality_penalty(&unit));
    diagnostics.insert("diagonal_dominance".to_string(), diagonal_dominance(&coefficients));
    if let Some(last) = log.last() {
        diagnostics.insert("last_logged_loss".to_string(), last.total);
    }
    Ok(SpectrumResult {
        method: Method::Qml,
        eigenvalues: eigenvalue_report(&vdm.weights),
        states: Some(StateSet {
            basis: vdm.basis,
            coefficients,
            flow: vdm.flow.clone(),
        }),
        diagnostics,
    })
}

/// Weights with the given probabilities at T = 1/β (helper for tests and tools).
pub fn weights_from_probabilities(p: &[f64], beta: f64, p_perp: f64) -> Result<BoltzmannWeights> {
    BoltzmannWeights::new(p.iter().map(|q| q.ln()).collect(), 1.0 / beta, p_perp)
}
