//! Run configuration: a TOML file plus `--set key=value` overrides, resolved
//! into the core crate's configs. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thermal_spectra::basis::BasisSet;
use thermal_spectra::flow::{FlowMap, FlowVariant, DEFAULT_FLOW_INTERVALS, DEFAULT_FLOW_RANGE};
use thermal_spectra::hamiltonian::Potential;
use thermal_spectra::lattice::{Estimator, FitOptions, DEFAULT_BLOCKS};
use thermal_spectra::oracle::{CERTIFICATION_STATES, DEFAULT_REFERENCE_SIZE};
use thermal_spectra::qml::{QmlConfig, QmlFamily};
use thermal_spectra::qvi::QviConfig;
use thermal_spectra::sampler::{Boundary, SamplerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Qvi,
    Qml,
    Lattice,
    Oracle,
    Sample,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Qvi => "qvi",
            Command::Qml => "qml",
            Command::Lattice => "lattice",
            Command::Oracle => "oracle",
            Command::Sample => "sample",
            Command::Compare => "compare",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialName {
    Harmonic,
    Anharmonic,
    Polynomial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialName,
    /// Ascending coefficients, only for `polynomial`.
    pub coeffs: Vec<f64>,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            kind: PotentialName::Anharmonic,
            coeffs: Vec::new(),
        }
    }
}

impl PotentialSpec {
    pub fn resolve(&self) -> Result<Potential, String> {
        let p = match self.kind {
            PotentialName::Harmonic => Potential::Harmonic,
            PotentialName::Anharmonic => Potential::Anharmonic,
            PotentialName::Polynomial => Potential::Polynomial {
                coeffs: self.coeffs.clone(),
            },
        };
        if self.kind != PotentialName::Polynomial && !self.coeffs.is_empty() {
            return Err("potential.coeffs is only used with kind = \"polynomial\"".into());
        }
        p.validate().map_err(|e| format!("potential: {e}"))?;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Hermite,
    Fourier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub family: FamilyName,
    pub size: usize,
    /// Box half-width for `fourier`.
    #[serde(default)]
    pub half_width: Option<f64>,
}

impl BasisSpec {
    pub fn resolve(&self) -> Result<BasisSet, String> {
        let b = match (self.family, self.half_width) {
            (FamilyName::Hermite, None) => BasisSet::hermite(self.size),
            (FamilyName::Hermite, Some(_)) => {
                return Err("basis.half_width is only used with family = \"fourier\"".into())
            }
            (FamilyName::Fourier, h) => BasisSet::fourier(self.size, h.unwrap_or(10.0)),
        };
        b.map_err(|e| format!("basis: {e}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSpec {
    pub variant: FlowVariant,
    pub lower: f64,
    pub upper: f64,
    pub intervals: usize,
}

impl Default for FlowSpec {
    fn default() -> Self {
        Self {
            variant: FlowVariant::TanhSum,
            lower: DEFAULT_FLOW_RANGE.0,
            upper: DEFAULT_FLOW_RANGE.1,
            intervals: DEFAULT_FLOW_INTERVALS,
        }
    }
}

impl FlowSpec {
    pub fn resolve(&self) -> Result<FlowMap, String> {
        FlowMap::new(self.lower, self.upper, self.intervals, self.variant).map_err(|e| format!("flow: {e}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSpec {
    pub n_walkers: Option<usize>,
    pub burn_in: usize,
    pub thin: usize,
    pub a_stretch: f64,
    pub local_sweeps: usize,
    pub local_step: f64,
    pub hmc_trajectories: usize,
    pub hmc_step: f64,
    pub hmc_leapfrog: usize,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self {
            n_walkers: d.n_walkers,
            burn_in: d.burn_in,
            thin: d.thin,
            a_stretch: d.a_stretch,
            local_sweeps: d.local_sweeps,
            local_step: d.local_step,
            hmc_trajectories: d.hmc_trajectories,
            hmc_step: d.hmc_step,
            hmc_leapfrog: d.hmc_leapfrog,
        }
    }
}

impl SamplerSpec {
    pub fn resolve(&self) -> SamplerConfig {
        SamplerConfig {
            n_walkers: self.n_walkers,
            burn_in: self.burn_in,
            thin: self.thin,
            a_stretch: self.a_stretch,
            local_sweeps: self.local_sweeps,
            local_step: self.local_step,
            hmc_trajectories: self.hmc_trajectories,
            hmc_step: self.hmc_step,
            hmc_leapfrog: self.hmc_leapfrog,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QviSection {
    pub temperature: f64,
    pub n_states: usize,
    pub c_perp: f64,
    pub learning_rate: f64,
    pub lr_decay_start: f64,
    pub max_steps: usize,
    /// Train a flow jointly (configured by the `[flow]` table).
    pub use_flow: bool,
    pub flow_grid: (f64, f64, usize),
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub log_every: usize,
    /// Steps between checkpoints (written at logged steps); 0 disables them.
    pub checkpoint_every: usize,
}

impl Default for QviSection {
    fn default() -> Self {
        let d = QviConfig::default();
        Self {
            temperature: d.temperature,
            n_states: d.n_states,
            c_perp: d.c_perp,
            learning_rate: d.learning_rate,
            lr_decay_start: d.lr_decay_start,
            max_steps: d.max_steps,
            use_flow: false,
            flow_grid: d.flow_grid,
            convergence_tol: d.convergence_tol,
            convergence_window: d.convergence_window,
            log_every: d.log_every,
            checkpoint_every: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QmlSection {
    pub beta: f64,
    pub n_states: usize,
    pub family: QmlFamily,
    pub c_perp: f64,
    pub p_perp: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub learning_rate: f64,
    pub lr_decay_start: f64,
    pub log_every: usize,
    pub n_slices: usize,
    pub bank_size: usize,
    pub online: bool,
    /// Endpoint bank written by `sample`; generated on the fly when absent.
    pub bank: Option<PathBuf>,
    /// Write the generated bank next to the results.
    pub save_bank: bool,
    pub checkpoint_every: usize,
}

impl Default for QmlSection {
    fn default() -> Self {
        let d = QmlConfig::default();
        Self {
            beta: d.beta,
            n_states: d.n_states,
            family: d.family,
            c_perp: d.c_perp,
            p_perp: d.p_perp,
            batch_size: d.batch_size,
            max_steps: d.max_steps,
            learning_rate: d.learning_rate,
            lr_decay_start: d.lr_decay_start,
            log_every: d.log_every,
            n_slices: d.n_slices,
            bank_size: d.bank_size,
            online: d.online,
            bank: None,
            save_bank: false,
            checkpoint_every: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub beta: f64,
    pub n_slices: usize,
    pub n_paths: usize,
    pub n_blocks: usize,
    pub estimator: Estimator,
    pub margin: f64,
    pub delta_e_range: (f64, f64),
    pub scan_points: usize,
    pub jackknife: bool,
}

impl Default for LatticeSection {
    fn default() -> Self {
        let f = FitOptions::default();
        Self {
            beta: 10.0,
            n_slices: 160,
            n_paths: 1_000_000,
            n_blocks: DEFAULT_BLOCKS,
            estimator: Estimator::default(),
            margin: f.margin,
            delta_e_range: f.delta_e_range,
            scan_points: f.scan_points,
            jackknife: f.jackknife,
        }
    }
}

impl LatticeSection {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            margin: self.margin,
            delta_e_range: self.delta_e_range,
            scan_points: self.scan_points,
            jackknife: self.jackknife,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub beta: f64,
    pub n_slices: usize,
    pub n_paths: usize,
    pub boundary: Boundary,
    /// Store whole paths instead of endpoint pairs (open boundary only).
    pub keep_paths: bool,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self {
            beta: 1.0,
            n_slices: 32,
            n_paths: 1_000_000,
            boundary: Boundary::Open,
            keep_paths: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub size: usize,
    pub n_levels: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            size: DEFAULT_REFERENCE_SIZE,
            n_levels: CERTIFICATION_STATES,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    /// Two `spectrum.json` files.
    pub a: Option<PathBuf>,
    pub b: Option<PathBuf>,
    pub states: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub plots: bool,
    /// Uniform grid (lower, upper, points) for wavefunctions.csv and comparisons.
    pub grid: (f64, f64, usize),
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            plots: true,
            grid: (-10.0, 10.0, 1001),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub potential: PotentialSpec,
    /// Defaults to Fourier M = 40, L = 10 for `qvi` and Hermite M = 10 for `qml`.
    #[serde(default)]
    pub basis: Option<BasisSpec>,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub qvi: QviSection,
    #[serde(default)]
    pub qml: QmlSection,
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub sample: SampleSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Problems with the configuration itself (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Parses `key=value`, where `value` is any TOML value; bare words become strings.
fn parse_override(item: &str) -> Result<(Vec<String>, toml::Value), ConfigError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("--set expects key=value, got `{item}`")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(ConfigError(format!("--set: malformed key `{key}`")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok((path, value))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), ConfigError> {
    let (last, parents) = path.split_last().expect("non-empty key path");
    let mut t = table;
    for (i, k) in parents.iter().enumerate() {
        let entry = t
            .entry(k.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry.as_table_mut().ok_or_else(|| {
            ConfigError(format!("--set: `{}` is not a table", path[..=i].join(".")))
        })?;
    }
    t.insert(last.clone(), value);
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides in order, then fills in the
    /// command, seed and output directory given on the command line.
    pub fn load(
        command: Command,
        path: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, value) = parse_override(item)?;
            apply_override(&mut table, &key, value)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(format!("invalid configuration: {}", e.message())))?;
        match cfg.command {
            Some(c) if c != command => {
                return Err(ConfigError(format!(
                    "config file is for `{}` but the `{}` command was run",
                    c.name(),
                    command.name()
                )))
            }
            _ => cfg.command = Some(command),
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if out.is_some() {
            cfg.out = out;
        }
        Ok(cfg)
    }

    pub fn command(&self) -> Command {
        self.command.expect("command filled in by load")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(self.command().name()))
    }

    /// SHA-256 of the resolved configuration, excluding the output directory,
    /// so reruns elsewhere produce identical files.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn potential(&self) -> Result<Potential, ConfigError> {
        self.potential.resolve().map_err(ConfigError)
    }

    fn basis_or(&self, default: BasisSet) -> Result<BasisSet, ConfigError> {
        match &self.basis {
            Some(b) => b.resolve().map_err(ConfigError),
            None => Ok(default),
        }
    }

    fn invalid(e: thermal_spectra::Error) -> ConfigError {
        ConfigError(e.to_string())
    }

    pub fn qvi_config(&self) -> Result<QviConfig, ConfigError> {
        let d = QviConfig::default();
        let s = &self.qvi;
        let flow = if s.use_flow {
            Some(self.flow.resolve().map_err(ConfigError)?)
        } else {
            None
        };
        let cfg = QviConfig {
            temperature: s.temperature,
            n_states: s.n_states,
            c_perp: s.c_perp,
            learning_rate: s.learning_rate,
            lr_decay_start: s.lr_decay_start,
            max_steps: s.max_steps,
            basis: self.basis_or(d.basis)?,
            flow,
            flow_grid: s.flow_grid,
            convergence_tol: s.convergence_tol,
            convergence_window: s.convergence_window,
            log_every: s.log_every,
        };
        cfg.validate().map_err(Self::invalid)?;
        Ok(cfg)
    }

    pub fn qml_config(&self) -> Result<QmlConfig, ConfigError> {
        let d = QmlConfig::default();
        let s = &self.qml;
        let cfg = QmlConfig {
            beta: s.beta,
            n_states: s.n_states,
            basis: self.basis_or(d.basis)?,
            family: s.family,
            flow: self.flow.resolve().map_err(ConfigError)?,
            c_perp: s.c_perp,
            p_perp: s.p_perp,
            batch_size: s.batch_size,
            max_steps: s.max_steps,
            learning_rate: s.learning_rate,
            lr_decay_start: s.lr_decay_start,
            log_every: s.log_every,
            n_slices: s.n_slices,
            bank_size: s.bank_size,
            online: s.online,
            sampler: self.sampler.resolve(),
        };
        cfg.validate().map_err(Self::invalid)?;
        Ok(cfg)
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig, ConfigError> {
        let s = self.sampler.resolve();
        s.validate().map_err(Self::invalid)?;
        Ok(s)
    }

    /// Checks everything the selected command will use, before any work starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError(m.to_string()));
        let (lo, hi, n) = self.output.grid;
        if !(hi > lo) || n < 2 {
            return bad("output.grid needs lower < upper and at least 2 points");
        }
        match self.command() {
            Command::Qvi => {
                self.potential()?;
                self.qvi_config()?;
            }
            Command::Qml => {
                self.potential()?;
                self.qml_config()?;
                if self.qml.online && self.qml.bank.is_some() {
                    return bad("qml.online and qml.bank are mutually exclusive");
                }
            }
            Command::Lattice => {
                self.potential()?;
                self.sampler_config()?;
                let l = &self.lattice;
                if l.n_paths == 0 || l.n_blocks < 2 {
                    return bad("lattice needs n_paths >= 1 and n_blocks >= 2");
                }
                if !(l.margin >= 0.0 && l.margin < 0.5) {
                    return bad("lattice.margin must lie in [0, 0.5)");
                }
            }
            Command::Sample => {
                self.potential()?;
                self.sampler_config()?;
                if self.sample.keep_paths && self.sample.boundary == Boundary::Periodic {
                    return bad("sample.keep_paths only applies to open paths (periodic banks always hold whole paths)");
                }
                if self.sample.n_paths == 0 {
                    return bad("sample.n_paths must be at least 1");
                }
            }
            Command::Oracle => {
                self.potential()?;
                if self.oracle.n_levels == 0 || self.oracle.n_levels > self.oracle.size {
                    return bad("oracle.n_levels must lie in 1..=oracle.size");
                }
            }
            Command::Compare => {
                if self.compare.a.is_none() || self.compare.b.is_none() {
                    return bad("compare needs compare.a and compare.b (paths to spectrum.json files)");
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, sets: &[&str]) -> Result<RunConfig, ConfigError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
        RunConfig::load(Command::Qvi, Some(&path), &sets, None, None)
    }

    #[test]
    fn qvi_defaults() {
        let cfg = load("command = \"qvi\"\n", &[]).unwrap();
        let q = cfg.qvi_config().unwrap();
        assert_eq!(q.basis, BasisSet::fourier(40, 10.0).unwrap());
        assert_eq!((q.c_perp, q.learning_rate, q.n_states), (1e3, 1e-3, 10));
        assert_eq!(cfg.potential().unwrap(), Potential::Anharmonic);
    }

    #[test]
    fn qml_defaults() {
        let cfg = RunConfig::load(Command::Qml, None, &[], None, None).unwrap();
        let q = cfg.qml_config().unwrap();
        assert_eq!((q.batch_size, q.c_perp), (500, 1e2));
        assert_eq!(q.basis, BasisSet::hermite(10).unwrap());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = load("[qvi]\nlearning_rte = 0.1\n", &[]).unwrap_err();
        assert!(err.0.contains("learning_rte"), "{}", err.0);
        let err = load("", &["qvi.learning_rte=0.1"]).unwrap_err();
        assert!(err.0.contains("learning_rte"), "{}", err.0);
    }

    #[test]
    fn overrides_apply_in_order() {
        let cfg = load("[qvi]\nmax_steps = 5\n", &["qvi.max_steps=7", "potential.kind=harmonic"]).unwrap();
        assert_eq!(cfg.qvi.max_steps, 7);
        assert_eq!(cfg.potential().unwrap(), Potential::Harmonic);
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = RunConfig::load(Command::Oracle, None, &[], Some(3), Some("x".into())).unwrap();
        let b = RunConfig::load(Command::Oracle, None, &[], Some(3), Some("y".into())).unwrap();
        let c = RunConfig::load(Command::Oracle, None, &[], Some(4), None).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn mismatched_command_is_rejected() {
        assert!(load("command = \"lattice\"\n", &[]).is_err());
    }
}
