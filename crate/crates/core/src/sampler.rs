//! Discretized Euclidean action and affine-invariant ensemble sampling of
//! open-endpoint and periodic paths.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::Potential;

pub const DEFAULT_STRETCH: f64 = 2.0;
pub const DEFAULT_BURN_IN: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// N_β + 1 coordinates; q_0 = x and q_{N_β} = y are free.
    Open,
    /// N_β coordinates with q_{N_β} ≡ q_0.
    Periodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionConfig {
    pub beta: f64,
    pub n_slices: usize,
    pub potential: Potential,
    pub boundary: Boundary,
}

impl ActionConfig {
    pub fn new(beta: f64, n_slices: usize, potential: Potential, boundary: Boundary) -> Result<Self> {
        let cfg = Self {
            beta,
            n_slices,
            potential,
            boundary,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!("beta must be positive, got {}", self.beta)));
        }
        if self.n_slices == 0 {
            return Err(Error::InvalidConfig("n_slices must be positive".into()));
        }
        Ok(())
    }

    /// a = β/N_β.
    pub fn spacing(&self) -> f64 {
        self.beta / self.n_slices as f64
    }

    /// Number of free coordinates in a path.
    pub fn dimension(&self) -> usize {
        match self.boundary {
            Boundary::Open => self.n_slices + 1,
            Boundary::Periodic => self.n_slices,
        }
    }

    fn link(&self, a: f64, b: f64) -> f64 {
        let s = self.spacing();
        let d = b - a;
        d * d / (2.0 * s) + s * self.potential.eval(0.5 * (a + b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EuclideanPath {
    pub positions: Vec<f64>,
}

/// Ŝ_E = Σ_z [(q_z − q_{z−1})²/(2a) + a V((q_z + q_{z−1})/2)], including the
/// wraparound link for periodic paths.
pub fn discrete_action(cfg: &ActionConfig, path: &[f64]) -> Result<f64> {
    if path.len() != cfg.dimension() {
        return Err(Error::DimensionMismatch {
            what: "path length",
            expected: cfg.dimension(),
            found: path.len(),
        });
    }
    Ok(action_unchecked(cfg, path))
}

fn action_unchecked(cfg: &ActionConfig, path: &[f64]) -> f64 {
    let mut s: f64 = path.windows(2).map(|w| cfg.link(w[0], w[1])).sum();
    if cfg.boundary == Boundary::Periodic {
        s += cfg.link(path[path.len() - 1], path[0]);
    }
    s
}

/// Ŝ_E(path with q_z → value) − Ŝ_E(path), touching only the links adjacent to z.
pub fn single_site_delta(cfg: &ActionConfig, path: &[f64], z: usize, value: f64) -> f64 {
    let n = path.len();
    let old = path[z];
    let mut delta = 0.0;
    let mut both = |left: f64, right_is_next: bool| {
        if right_is_next {
            delta += cfg.link(value, left) - cfg.link(old, left);
        } else {
            delta += cfg.link(left, value) - cfg.link(left, old);
        }
    };
    match cfg.boundary {
        Boundary::Open => {
            if z > 0 {
                both(path[z - 1], false);
            }
            if z + 1 < n {
                both(path[z + 1], true);
            }
        }
        Boundary::Periodic => {
            if n == 1 {
                return 0.0;
            }
            both(path[(z + n - 1) % n], false);
            both(path[(z + 1) % n], true);
        }
    }
    delta
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Defaults to 4 × path dimension (rounded up to even).
    pub n_walkers: Option<usize>,
    pub burn_in: usize,
    /// Ensemble sweeps between retained states.
    pub thin: usize,
    pub a_stretch: f64,
    /// Single-site Metropolis sweeps per walker after every stretch sweep (0 = stretch only).
    /// Stretch moves alone barely move the short-wavelength modes of long paths.
    pub local_sweeps: usize,
    /// Proposal width of the single-site moves, in units of √a.
    pub local_step: f64,
    /// Hybrid Monte Carlo trajectories per walker after every stretch sweep.
    /// Long paths decorrelate their slow modes in about one trajectory, against
    /// O((1/a)²) single-site sweeps.
    pub hmc_trajectories: usize,
    /// Leapfrog step in units of √a (stable below 1 for the free part).
    pub hmc_step: f64,
    /// Maximum leapfrog steps; each trajectory draws its length uniformly from
    /// [max/2, max] to avoid resonances.
    pub hmc_leapfrog: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_walkers: None,
            burn_in: DEFAULT_BURN_IN,
            thin: 1,
            a_stretch: DEFAULT_STRETCH,
            local_sweeps: 0,
            local_step: 1.0,
            hmc_trajectories: 1,
            hmc_step: 0.3,
            hmc_leapfrog: 60,
        }
    }
}

impl SamplerConfig {
    pub fn walkers_for(&self, dimension: usize) -> usize {
        self.n_walkers.unwrap_or_else(|| {
            let w = 4 * dimension;
            w + w % 2
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_stretch > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "a_stretch must exceed 1, got {}",
                self.a_stretch
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        if let Some(w) = self.n_walkers {
            if w < 2 || w % 2 == 1 {
                return Err(Error::OddWalkerCount(w));
            }
        }
        if self.local_sweeps > 0 && !(self.local_step > 0.0) {
            return Err(Error::InvalidConfig("local_step must be positive".into()));
        }
        if self.hmc_trajectories > 0 && (!(self.hmc_step > 0.0) || self.hmc_leapfrog < 2) {
            return Err(Error::InvalidConfig(
                "hmc_step must be positive and hmc_leapfrog at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub stretch_proposed: u64,
    pub stretch_accepted: u64,
    pub local_proposed: u64,
    pub local_accepted: u64,
    pub hmc_proposed: u64,
    pub hmc_accepted: u64,
}

impl StepStats {
    pub fn stretch_acceptance(&self) -> f64 {
        self.stretch_accepted as f64 / self.stretch_proposed.max(1) as f64
    }

    pub fn local_acceptance(&self) -> f64 {
        self.local_accepted as f64 / self.local_proposed.max(1) as f64
    }

    pub fn hmc_acceptance(&self) -> f64 {
        self.hmc_accepted as f64 / self.hmc_proposed.max(1) as f64
    }

    fn since(&self, earlier: &StepStats) -> StepStats {
        StepStats {
            stretch_proposed: self.stretch_proposed - earlier.stretch_proposed,
            stretch_accepted: self.stretch_accepted - earlier.stretch_accepted,
            local_proposed: self.local_proposed - earlier.local_proposed,
            local_accepted: self.local_accepted - earlier.local_accepted,
            hmc_proposed: self.hmc_proposed - earlier.hmc_proposed,
            hmc_accepted: self.hmc_accepted - earlier.hmc_accepted,
        }
    }
}

/// Goodman–Weare ensemble of paths.
///
/// Every walker owns a ChaCha stream (stream id = walker index) and every
/// sweep starts at a fixed word offset, so results do not depend on how
/// walkers are scheduled across threads.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub walkers: Vec<Vec<f64>>,
    actions: Vec<f64>,
    pub rng_seed: u64,
    pub sweeps: u64,
    pub stats: StepStats,
}

/// Words reserved per walker per sweep phase; far more than one phase consumes.
const WORDS_PER_PHASE: u128 = 1 << 32;
const PHASES: u128 = 8;
const PHASE_LOCAL: u128 = 2;
const PHASE_HMC: u128 = 3;
const PHASE_INIT: u128 = 4;

/// Phases 0 and 1 are the two stretch halves.
fn walker_rng(seed: u64, walker: usize, sweep: u64, phase: u128) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(walker as u64);
    rng.set_word_pos((sweep as u128 * PHASES + phase) * WORDS_PER_PHASE);
    rng
}

/// ∂Ŝ_E/∂q_z accumulated link by link.
pub fn action_gradient(cfg: &ActionConfig, path: &[f64], out: &mut [f64]) {
    let a = cfg.spacing();
    out.iter_mut().for_each(|g| *g = 0.0);
    let n = path.len();
    let links = match cfg.boundary {
        Boundary::Open => n - 1,
        Boundary::Periodic => n,
    };
    for i in 0..links {
        let j = (i + 1) % n;
        let kin = (path[j] - path[i]) / a;
        let pot = 0.5 * a * cfg.potential.derivative(0.5 * (path[i] + path[j]));
        out[i] += pot - kin;
        out[j] += pot + kin;
    }
}

/// z with density ∝ 1/√z on [1/a, a].
pub fn sample_stretch(a: f64, u: f64) -> f64 {
    let s = 1.0 + (a - 1.0) * u;
    s * s / a
}

#[derive(Clone, Copy)]
enum Half {
    First,
    Second,
}

impl PathEnsemble {
    /// Walkers start as i.i.d. Gaussian paths (unit variance per slice) centered
    /// at the global minimum of the potential.
    pub fn new(cfg: &ActionConfig, n_walkers: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if n_walkers < 2 || n_walkers % 2 == 1 {
            return Err(Error::OddWalkerCount(n_walkers));
        }
        let center = cfg.potential.global_minimum();
        let d = cfg.dimension();
        let walkers: Vec<Vec<f64>> = (0..n_walkers)
            .map(|k| {
                let mut rng = walker_rng(seed, k, 0, PHASE_INIT);
                (0..d)
                    .map(|_| { let g: f64 = StandardNormal.sample(&mut rng); center + g })
                    .collect()
            })
            .collect();
        let actions = walkers.iter().map(|w| action_unchecked(cfg, w)).collect();
        Ok(Self {
            walkers,
            actions,
            rng_seed: seed,
            sweeps: 0,
            stats: StepStats::default(),
        })
    }

    pub fn from_walkers(cfg: &ActionConfig, walkers: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        if walkers.len() < 2 || walkers.len() % 2 == 1 {
            return Err(Error::OddWalkerCount(walkers.len()));
        }
        let mut actions = Vec::with_capacity(walkers.len());
        for w in &walkers {
            actions.push(discrete_action(cfg, w)?);
        }
        Ok(Self {
            walkers,
            actions,
            rng_seed: seed,
            sweeps: 0,
            stats: StepStats::default(),
        })
    }

    pub fn n_walkers(&self) -> usize {
        self.walkers.len()
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    /// One full sweep: both halves take a stretch move, then optional local sweeps.
    pub fn sweep(&mut self, cfg: &ActionConfig, sampler: &SamplerConfig) {
        self.stretch_half(cfg, sampler.a_stretch, Half::First, None);
        self.stretch_half(cfg, sampler.a_stretch, Half::Second, None);
        if sampler.local_sweeps > 0 {
            self.local_moves(cfg, sampler);
        }
        if sampler.hmc_trajectories > 0 {
            self.hmc_moves(cfg, sampler);
        }
        self.sweeps += 1;
    }

    /// Stretch move for both halves with every z forced to `z` (for testing).
    pub fn stretch_sweep_forced(&mut self, cfg: &ActionConfig, a_stretch: f64, z: f64) {
        self.stretch_half(cfg, a_stretch, Half::First, Some(z));
        self.stretch_half(cfg, a_stretch, Half::Second, Some(z));
        self.sweeps += 1;
    }

    fn stretch_half(&mut self, cfg: &ActionConfig, a: f64, half: Half, forced: Option<f64>) {
        let n = self.walkers.len();
        let h = n / 2;
        let (active_range, phase) = match half {
            Half::First => (0..h, 0),
            Half::Second => (h..n, 1),
        };
        let (lo, hi) = self.walkers.split_at_mut(h);
        let (active, frozen): (&mut [Vec<f64>], &[Vec<f64>]) = match half {
            Half::First => (lo, hi),
            Half::Second => (hi, lo),
        };
        let actions = &mut self.actions[active_range.clone()];
        let d = cfg.dimension() as i32;
        let seed = self.rng_seed;
        let sweep = self.sweeps;
        let offset = active_range.start;
        let accepted: u64 = active
            .par_iter_mut()
            .zip(actions.par_iter_mut())
            .enumerate()
            .map(|(i, (walker, action))| {
                let mut rng = walker_rng(seed, offset + i, sweep, phase);
                let partner = &frozen[rng.random_range(0..frozen.len())];
                let z = forced.unwrap_or_else(|| sample_stretch(a, rng.random::<f64>()));
                let proposal: Vec<f64> = walker
                    .iter()
                    .zip(partner)
                    .map(|(q, c)| c + z * (q - c))
                    .collect();
                let new_action = action_unchecked(cfg, &proposal);
                let log_ratio = (d - 1) as f64 * z.ln() - (new_action - *action);
                let u: f64 = rng.random();
                if log_ratio >= 0.0 || u.ln() < log_ratio {
                    *walker = proposal;
                    *action = new_action;
                    1
                } else {
                    0
                }
            })
            .sum();
        self.stats.stretch_proposed += h as u64;
        self.stats.stretch_accepted += accepted;
    }

    fn local_moves(&mut self, cfg: &ActionConfig, sampler: &SamplerConfig) {
        let step = sampler.local_step * cfg.spacing().sqrt();
        let seed = self.rng_seed;
        let sweep = self.sweeps;
        let sweeps = sampler.local_sweeps;
        let (proposed, accepted) = self
            .walkers
            .par_iter_mut()
            .zip(self.actions.par_iter_mut())
            .enumerate()
            .map(|(k, (walker, action))| {
                let mut rng = walker_rng(seed, k, sweep, PHASE_LOCAL);
                let mut acc = 0u64;
                let d = walker.len();
                for _ in 0..sweeps {
                    for z in 0..d {
                        let value = walker[z] + step * (2.0 * rng.random::<f64>() - 1.0);
                        let delta = single_site_delta(cfg, walker, z, value);
                        let u: f64 = rng.random();
                        if delta <= 0.0 || u.ln() < -delta {
                            walker[z] = value;
                            *action += delta;
                            acc += 1;
                        }
                    }
                }
                // Refresh to keep accumulated rounding out of the stretch acceptance test.
                *action = action_unchecked(cfg, walker);
                ((sweeps * d) as u64, acc)
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        self.stats.local_proposed += proposed;
        self.stats.local_accepted += accepted;
    }
}

impl PathEnsemble {
    fn hmc_moves(&mut self, cfg: &ActionConfig, sampler: &SamplerConfig) {
        let eps = sampler.hmc_step * cfg.spacing().sqrt();
        let seed = self.rng_seed;
        let sweep = self.sweeps;
        let (lo, hi) = (sampler.hmc_leapfrog / 2, sampler.hmc_leapfrog);
        let trajectories = sampler.hmc_trajectories;
        let accepted: u64 = self
            .walkers
            .par_iter_mut()
            .zip(self.actions.par_iter_mut())
            .enumerate()
            .map(|(k, (walker, action))| {
                let mut rng = walker_rng(seed, k, sweep, PHASE_HMC);
                let d = walker.len();
                let mut q = walker.clone();
                let mut p = vec![0.0; d];
                let mut g = vec![0.0; d];
                let mut acc = 0;
                for _ in 0..trajectories {
                    q.copy_from_slice(walker);
                    for pi in p.iter_mut() {
                        *pi = StandardNormal.sample(&mut rng);
                    }
                    let steps = rng.random_range(lo..=hi);
                    let h0 = *action + 0.5 * p.iter().map(|x| x * x).sum::<f64>();
                    action_gradient(cfg, &q, &mut g);
                    for _ in 0..steps {
                        for z in 0..d {
                            p[z] -= 0.5 * eps * g[z];
                            q[z] += eps * p[z];
                        }
                        action_gradient(cfg, &q, &mut g);
                        for z in 0..d {
                            p[z] -= 0.5 * eps * g[z];
                        }
                    }
                    let s1 = action_unchecked(cfg, &q);
                    let dh = s1 + 0.5 * p.iter().map(|x| x * x).sum::<f64>() - h0;
                    let u: f64 = rng.random();
                    if dh.is_finite() && (dh <= 0.0 || u.ln() < -dh) {
                        walker.copy_from_slice(&q);
                        *action = s1;
                        acc += 1;
                    }
                }
                acc
            })
            .sum();
        self.stats.hmc_proposed += (trajectories * self.walkers.len()) as u64;
        self.stats.hmc_accepted += accepted;
    }
}

/// Endpoint pairs (x_i, y_i) = (q_0, q_{N_β}) of sampled open paths.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenSamples {
    pub endpoints: Vec<(f64, f64)>,
    pub paths: Option<Vec<Vec<f64>>>,
    pub stats: StepStats,
}

/// Runs burn-in, then hands every retained ensemble state (all walkers) to
/// `keep`, for ⌈n_paths / walkers⌉ rounds. Returns post-burn-in statistics.
pub fn run_chain(
    cfg: &ActionConfig,
    sampler: &SamplerConfig,
    n_paths: usize,
    seed: u64,
    mut keep: impl FnMut(&[Vec<f64>]),
) -> Result<StepStats> {
    sampler.validate()?;
    let w = sampler.walkers_for(cfg.dimension());
    let mut ens = PathEnsemble::new(cfg, w, seed)?;
    for _ in 0..sampler.burn_in {
        ens.sweep(cfg, sampler);
    }
    let burn_stats = ens.stats;
    // Whole sweeps only: n_paths is rounded up to a multiple of the walker count.
    let rounds = n_paths.div_ceil(w);
    for _ in 0..rounds {
        for _ in 0..sampler.thin {
            ens.sweep(cfg, sampler);
        }
        keep(&ens.walkers);
    }
    Ok(ens.stats.since(&burn_stats))
}

/// Draws open paths with density ∝ e^{−Ŝ_E}; `n_paths` is rounded up to a
/// multiple of the walker count.
pub fn sample_open_paths(
    cfg: &ActionConfig,
    sampler: &SamplerConfig,
    n_paths: usize,
    seed: u64,
    keep_paths: bool,
) -> Result<OpenSamples> {
    if cfg.boundary != Boundary::Open {
        return Err(Error::InvalidConfig("open-path sampling needs Open boundary".into()));
    }
    let mut endpoints = Vec::with_capacity(n_paths);
    let mut paths = keep_paths.then(Vec::new);
    let stats = run_chain(cfg, sampler, n_paths, seed, |walkers| {
        for w in walkers {
            endpoints.push((w[0], w[w.len() - 1]));
        }
        if let Some(p) = paths.as_mut() {
            p.extend(walkers.iter().cloned());
        }
    })?;
    Ok(OpenSamples {
        endpoints,
        paths,
        stats,
    })
}

/// Draws periodic paths with density ∝ e^{−Ŝ_E}; `n_paths` is rounded up to a
/// multiple of the walker count.
pub fn sample_periodic_paths(
    cfg: &ActionConfig,
    sampler: &SamplerConfig,
    n_paths: usize,
    seed: u64,
) -> Result<(Vec<EuclideanPath>, StepStats)> {
    if cfg.boundary != Boundary::Periodic {
        return Err(Error::InvalidConfig(
            "periodic-path sampling needs Periodic boundary".into(),
        ));
    }
    let mut out = Vec::with_capacity(n_paths);
    let stats = run_chain(cfg, sampler, n_paths, seed, |walkers| {
        out.extend(walkers.iter().map(|w| EuclideanPath {
            positions: w.clone(),
        }));
    })?;
    Ok((out, stats))
}

const BANK_MAGIC: &[u8; 8] = b"TSBANK01";
const BANK_TAG_LEN: usize = 64;

/// Rows of f64 values dumped as: magic, 64-byte tag (e.g. a config hash,
/// zero padded), rows and columns as u64, then row-major little-endian f64.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBank {
    pub tag: String,
    pub columns: usize,
    pub values: Vec<f64>,
}

impl SampleBank {
    pub fn from_endpoints(tag: &str, endpoints: &[(f64, f64)]) -> Self {
        Self {
            tag: tag.to_string(),
            columns: 2,
            values: endpoints.iter().flat_map(|&(x, y)| [x, y]).collect(),
        }
    }

    pub fn from_paths(tag: &str, paths: &[EuclideanPath]) -> Self {
        Self {
            tag: tag.to_string(),
            columns: paths.first().map_or(0, |p| p.positions.len()),
            values: paths.iter().flat_map(|p| p.positions.iter().copied()).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        if self.columns == 0 {
            0
        } else {
            self.values.len() / self.columns
        }
    }

    pub fn endpoints(&self) -> Result<Vec<(f64, f64)>> {
        if self.columns != 2 {
            return Err(Error::BadBank(format!(
                "expected 2 columns of endpoints, found {}",
                self.columns
            )));
        }
        Ok(self.values.chunks_exact(2).map(|c| (c[0], c[1])).collect())
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        if self.tag.len() > BANK_TAG_LEN {
            return Err(Error::BadBank(format!("tag longer than {BANK_TAG_LEN} bytes")));
        }
        let mut tag = [0u8; BANK_TAG_LEN];
        tag[..self.tag.len()].copy_from_slice(self.tag.as_bytes());
        w.write_all(BANK_MAGIC)?;
        w.write_all(&tag)?;
        w.write_all(&(self.rows() as u64).to_le_bytes())?;
        w.write_all(&(self.columns as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BANK_MAGIC {
            return Err(Error::BadBank("bad magic".into()));
        }
        let mut tag = [0u8; BANK_TAG_LEN];
        r.read_exact(&mut tag)?;
        let end = tag.iter().position(|&b| b == 0).unwrap_or(BANK_TAG_LEN);
        let tag = String::from_utf8(tag[..end].to_vec())
            .map_err(|_| Error::BadBank("tag is not UTF-8".into()))?;
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let rows = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let columns = u64::from_le_bytes(word) as usize;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != rows * columns * 8 {
            return Err(Error::BadBank(format!(
                "header promises {rows}×{columns} values, payload has {} bytes",
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            tag,
            columns,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}
