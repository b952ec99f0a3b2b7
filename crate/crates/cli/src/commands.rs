//! One function per subcommand: run the pipeline and write its result files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thermal_spectra::compare::compare_with;
use thermal_spectra::lattice::{fit_delta_e, measure_correlator, CoshFit};
use thermal_spectra::optim::AdamState;
use thermal_spectra::oracle::{reference_spectrum, Method, ReferenceFixture, SpectrumResult};
use thermal_spectra::qml::{generate_bank, train_qml_with, OnlineSampler, SampleSource};
use thermal_spectra::qvi::train_qvi_with;
use thermal_spectra::sampler::{
    sample_open_paths, sample_periodic_paths, ActionConfig, Boundary, EuclideanPath, SampleBank, StepStats,
};
use thermal_spectra::vdm::VariationalDensityMatrix;

use crate::config::{Command, ConfigError, RunConfig};
use crate::output::OutputDir;
use crate::plot::{heatmap, line_plot, Series};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Runtime(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "config error: {e}"),
            RunError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Runtime(format!("i/o: {e}"))
    }
}

impl From<thermal_spectra::Error> for RunError {
    fn from(e: thermal_spectra::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

pub fn run(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), RunError> {
    match cfg.command() {
        Command::Oracle => run_oracle(cfg, out),
        Command::Qvi => run_qvi(cfg, out),
        Command::Qml => run_qml(cfg, out),
        Command::Lattice => run_lattice(cfg, out),
        Command::Sample => run_sample(cfg, out),
        Command::Compare => run_compare(cfg, out),
    }
}

/// spectrum.json, wavefunctions.csv, coefficients.csv and their plots.
fn write_spectrum(cfg: &RunConfig, out: &mut OutputDir, spectrum: &SpectrumResult, title: &str) -> Result<(), RunError> {
    out.json("spectrum.json", spectrum)?;
    let Some(states) = &spectrum.states else {
        return Ok(());
    };
    let n = states.n_states();
    let (lo, hi, points) = cfg.output.grid;
    let xs: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let psi: Vec<Vec<f64>> = xs.iter().map(|&x| states.amplitudes(x)).collect();
    let mut w = out.csv("wavefunctions.csv")?;
    let mut cols = vec!["x".to_string()];
    cols.extend((0..n).map(|k| format!("psi_{k}")));
    w.header(&cols.iter().map(String::as_str).collect::<Vec<_>>())?;
    for (x, row) in xs.iter().zip(&psi) {
        let mut r = vec![*x];
        r.extend_from_slice(row);
        w.row(&r)?;
    }
    w.flush()?;

    let c = &states.coefficients;
    let mut w = out.csv("coefficients.csv")?;
    let mut cols = vec!["j".to_string()];
    cols.extend((0..n).map(|k| format!("state_{k}")));
    w.header(&cols.iter().map(String::as_str).collect::<Vec<_>>())?;
    let mut abs = Vec::with_capacity(c.rows());
    for j in 0..c.rows() {
        let row: Vec<f64> = (0..n).map(|k| c[(j, k)].abs()).collect();
        w.indexed_row(j, &row)?;
        abs.push(row);
    }
    w.flush()?;

    if cfg.output.plots {
        let shown = n.min(5);
        let curves: Vec<Vec<f64>> = (0..shown).map(|k| psi.iter().map(|r| r[k]).collect()).collect();
        let series: Vec<Series> = curves
            .iter()
            .enumerate()
            .map(|(k, y)| Series {
                label: format!("state {k}"),
                x: &xs,
                y,
                errors: None,
            })
            .collect();
        out.svg("wavefunctions.svg", &line_plot(title, "x", "ψ(x)", &series))?;
        out.svg(
            "coefficients.svg",
            &heatmap(&format!("{title}: |coefficients|"), "basis index j", "state n", &abs),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Checkpoint<'a> {
    step: usize,
    vdm: &'a VariationalDensityMatrix,
    optimizer: &'a AdamState,
}

fn loss_plot(cfg: &RunConfig, out: &mut OutputDir, steps: &[f64], loss: &[f64]) -> Result<(), RunError> {
    if cfg.output.plots && !steps.is_empty() {
        let s = Series {
            label: "loss".into(),
            x: steps,
            y: loss,
            errors: None,
        };
        out.svg("training_log.svg", &line_plot("training loss", "step", "loss", &[s]))?;
    }
    Ok(())
}

fn run_oracle(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), RunError> {
    let pot = cfg.potential()?;
    let o = &cfg.oracle;
    let full = reference_spectrum(&pot, o.size)?;
    let keep: Vec<usize> = (0..o.n_levels).collect();
    let spectrum = SpectrumResult {
        method: Method::Oracle,
        eigenvalues: full.eigenvalues[..o.n_levels].to_vec(),
        states: full.states.as_ref().map(|s| s.select(&keep)),
        diagnostics: full.diagnostics.clone(),
    };
    write_spectrum(cfg, out, &spectrum, "reference eigenstates")?;
    let fixture = ReferenceFixture {
        potential: pot,
        big_m: o.size,
        eigenvalues: spectrum.eigenvalues.clone(),
    };
    out.json("fixture.json", &fixture)?;
    log::info!("eigenvalues: {:?}", spectrum.eigenvalues);
    Ok(())
}

fn run_qvi(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), RunError> {
    let pot = cfg.potential()?;
    let qcfg = cfg.qvi_config()?;
    let every = cfg.qvi.checkpoint_every;
    let mut log = out.csv("training_log.csv")?;
    log.header(&["step", "total", "energy", "entropy_term", "orthogonality", "gradient_norm"])?;
    let ckpt_path = out.path("checkpoint.json");
    let hash = out.hash().to_string();
    let mut io: std::io::Result<()> = Ok(());
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let result = train_qvi_with(&qcfg, &pot, cfg.seed, |row, vdm, adam| {
        if io.is_err() {
            return;
        }
        xs.push(row.step as f64);
        ys.push(row.total);
        io = log.indexed_row(
            row.step,
            &[row.total, row.energy, row.entropy_term, row.orthogonality, row.gradient_norm],
        );
        if io.is_ok() && every > 0 && row.step > 0 && row.step % every == 0 {
            io = log.flush().and_then(|_| write_checkpoint(&ckpt_path, &hash, row.step, vdm, adam));
        }
    });
    log.flush()?;
    io?;
    let outcome = result?;
    write_checkpoint(&ckpt_path, &hash, outcome.steps, &outcome.vdm, &outcome.optimizer)?;
    loss_plot(cfg, out, &xs, &ys)?;
    write_spectrum(cfg, out, &outcome.spectrum, "QVI eigenstates")?;
    log::info!("gaps: {:?}", outcome.spectrum.gaps());
    Ok(())
}

fn write_checkpoint(
    path: &Path,
    hash: &str,
    step: usize,
    vdm: &VariationalDensityMatrix,
    optimizer: &AdamState,
) -> std::io::Result<()> {
    let mut v = serde_json::to_value(Checkpoint { step, vdm, optimizer }).map_err(std::io::Error::other)?;
    v["artifact_version"] = crate::output::VERSION.into();
    v["config_hash"] = hash.into();
    let text = serde_json::to_string_pretty(&v).map_err(std::io::Error::other)? + "\n";
    std::fs::write(path, text)
}

fn run_qml(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), RunError> {
    let pot = cfg.potential()?;
    let qcfg = cfg.qml_config()?;
    let source = if let Some(path) = &cfg.qml.bank {
        let bank = SampleBank::load(path)?;
        SampleSource::Bank(bank.endpoints()?)
    } else if qcfg.online {
        SampleSource::Online(Box::new(OnlineSampler::new(
            qcfg.action(&pot)?,
            qcfg.sampler.clone(),
            cfg.seed,
        )?))
    } else {
        let pairs = generate_bank(&qcfg, &pot, cfg.seed)?;
        if cfg.qml.save_bank {
            let mut bytes = Vec::new();
            SampleBank::from_endpoints(out.hash(), &pairs).write_to(&mut bytes)?;
            out.raw("bank.bin", &bytes)?;
        }
        SampleSource::Bank(pairs)
    };

    let every = cfg.qml.checkpoint_every;
    let mut log = out.csv("training_log.csv")?;
    log.header(&[
        "step",
        "total",
        "log_perp_term",
        "projection_term",
        "orthogonality",
        "min_p",
        "gradient_norm",
    ])?;
    let ckpt_path = out.path("checkpoint.json");
    let hash = out.hash().to_string();
    let mut io: std::io::Result<()> = Ok(());
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let result = train_qml_with(&qcfg, &pot, source, cfg.seed, |row, vdm, adam| {
        if io.is_err() {
            return;
        }
        xs.push(row.step as f64);
        ys.push(row.total);
        io = log.indexed_row(
            row.step,
            &[
                row.total,
                row.log_perp_term,
                row.projection_term,
                row.orthogonality,
                row.min_p,
                row.gradient_norm,
            ],
        );
        if io.is_ok() && every > 0 && row.step > 0 && row.step % every == 0 {
            io = log.flush().and_then(|_| write_checkpoint(&ckpt_path, &hash, row.step, vdm, adam));
        }
    });
    log.flush()?;
    io?;
    let outcome = result?;
    write_checkpoint(&ckpt_path, &hash, outcome.steps, &outcome.vdm, &outcome.optimizer)?;
    loss_plot(cfg, out, &xs, &ys)?;
    write_spectrum(cfg, out, &outcome.spectrum, "QML eigenstates")?;
    if outcome.spectrum.diagnostics.get("perp_violation") == Some(&1.0) {
        log::warn!("smallest learned weight is not above p_perp; the highest states are unresolved");
    }
    log::info!("gaps: {:?}", outcome.spectrum.gaps());
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    fit: &'a CoshFit,
    delta_e: f64,
    delta_e_error: f64,
    beta: f64,
    n_slices: usize,
    n_paths: usize,
    sampler_stats: StepStats,
    hmc_acceptance: f64,
    stretch_acceptance: f64,
}

fn run_lattice(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), RunError> {
    let pot = cfg.potential()?;
    let l = &cfg.lattice;
    let action = ActionConfig::new(l.beta, l.n_slices, pot, Boundary::Periodic)?;
    let sampler = cfg.sampler_config()?;
    let (est, stats) = measure_correlator(&action, &sampler, l.n_paths, l.n_blocks, l.estimator, cfg.seed)?;

    let mut w = out.csv("correlator.csv")?;
    w.header(&["tau", "value", "error"])?;
    for ((t, v), e) in est.taus.iter().zip(&est.values).zip(&est.errors) {
        w.row(&[*t, *v, *e])?;
    }
    w.flush()?;

    let fit = fit_delta_e(&est, &l.fit_options());
    if cfg.output.plots {
        let model: Option<Vec<f64>> = fit
            .as_ref()
            .ok()
            .map(|f| est.taus.iter().map(|&t| f.model(t, est.beta)).collect());
        let mut series = vec![Series {
            label: "measured".into(),
            x: &est.taus,
            y: &est.values,
            errors: Some(&est.errors),
        }];
        if let Some(m) = &model {
            series.push(Series {
                label: "cosh fit".into(),
                x: &est.taus,
                y: m,
                errors: None,
            });
        }
        out.svg("correlator.svg", &line_plot("connected correlator", "τ", "G(τ)", &series))?;
    }
    let fit = fit?;
    if fit.ambiguous {
        log::warn!("the cosh fit is ambiguous: the χ² profile has several comparable minima");
    }
    out.json(
        "fit.json",
        &FitReport {
            fit: &fit,
            delta_e: fit.delta_e,
            delta_e_error: fit.delta_e_error(),
            beta: l.beta,
            n_slices: l.n_slices,
            n_paths: est.n_samples,
            sampler_stats: stats,
            hmc_acceptance: stats.hmc_acceptance(),
            stretch_acceptance: stats.stretch_acceptance(),
        },
    )?;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("delta_e_error".to_string(), fit.delta_e_error());
    diagnostics.insert("chi2_per_dof".to_string(), fit.chi2 / fit.dof.max(1) as f64);
    out.json(
        "spectrum.json",
        &SpectrumResult {
            method: Method::LatticeGapOnly,
            eigenvalues: vec![0.0, fit.delta_e],
            states: None,
            diagnostics,
        },
    )?;
    log::info!("ΔE = {} ± {}", fit.delta_e, fit.delta_e_error());
    Ok(())
}

#[derive(Serialize)]
struct SampleSummary {
    boundary: Boundary,
    beta: f64,
    n_slices: usize,
    rows: usize,
    columns: usize,
    sampler_stats: StepStats,
    stretch_acceptance: f64,
    hmc_acceptance: f64,
}

fn run_sample(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), RunError> {
    let pot = cfg.potential()?;
    let s = &cfg.sample;
    let sampler = cfg.sampler_config()?;
    let action = ActionConfig::new(s.beta, s.n_slices, pot, s.boundary)?;
    let (bank, stats) = match s.boundary {
        Boundary::Open => {
            let r = sample_open_paths(&action, &sampler, s.n_paths, cfg.seed, s.keep_paths)?;
            let bank = match r.paths {
                Some(paths) => {
                    let paths: Vec<EuclideanPath> = paths
                        .into_iter()
                        .take(s.n_paths)
                        .map(|positions| EuclideanPath { positions })
                        .collect();
                    SampleBank::from_paths(out.hash(), &paths)
                }
                None => SampleBank::from_endpoints(out.hash(), &r.endpoints[..s.n_paths.min(r.endpoints.len())]),
            };
            (bank, r.stats)
        }
        Boundary::Periodic => {
            let (paths, stats) = sample_periodic_paths(&action, &sampler, s.n_paths, cfg.seed)?;
            let n = s.n_paths.min(paths.len());
            (SampleBank::from_paths(out.hash(), &paths[..n]), stats)
        }
    };
    let mut bytes = Vec::new();
    bank.write_to(&mut bytes)?;
    out.raw("bank.bin", &bytes)?;
    out.json(
        "sample_summary.json",
        &SampleSummary {
            boundary: s.boundary,
            beta: s.beta,
            n_slices: s.n_slices,
            rows: bank.rows(),
            columns: bank.columns,
            sampler_stats: stats,
            stretch_acceptance: stats.stretch_acceptance(),
            hmc_acceptance: stats.hmc_acceptance(),
        },
    )?;
    log::info!("{} rows × {} columns", bank.rows(), bank.columns);
    Ok(())
}

fn load_spectrum(path: &Path) -> Result<SpectrumResult, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| RunError::Runtime(format!("{}: {e}", path.display())))
}

fn run_compare(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), RunError> {
    let c = &cfg.compare;
    let (pa, pb) = (c.a.as_ref().expect("validated"), c.b.as_ref().expect("validated"));
    let (a, b) = (load_spectrum(pa)?, load_spectrum(pb)?);
    let (lo, hi, n) = cfg.output.grid;
    let report = compare_with(&a, &b, c.states, (lo, hi), n)?;
    out.json("compare.json", &report)?;
    let mut w = out.csv("compare.csv")?;
    w.header(&["state", "fractional_gap_difference", "l2_distance"])?;
    for k in 0..report.n_states {
        let gap = if k == 0 { 0.0 } else { report.fractional_gap_differences[k - 1] };
        let l2 = report.l2_distances.get(k).copied().unwrap_or(f64::NAN);
        w.indexed_row(k, &[gap, l2])?;
    }
    w.flush()?;
    log::info!(
        "max fractional gap difference {:.3e}",
        report.max_fractional_gap_difference()
    );
    Ok(())
}
