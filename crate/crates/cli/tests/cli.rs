use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_thermal-spectra"));
    cmd.args(args).env("RUST_LOG", "warn");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn sorted_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn oracle_writes_ten_ascending_levels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let r = run(&["oracle", "--out", out.to_str().unwrap()], &[]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let s = json(&out.join("spectrum.json"));
    let e: Vec<f64> = s["eigenvalues"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(e.len(), 10);
    assert!(e.windows(2).all(|w| w[0] < w[1]));
    assert!((e[1] - e[0] - 1.5720128979445485).abs() < 1e-9);
    assert_eq!(s["config_hash"].as_str().unwrap().len(), 64);
    for f in ["wavefunctions.csv", "coefficients.csv"] {
        let text = std::fs::read_to_string(out.join(f)).unwrap();
        assert!(text.starts_with("# thermal-spectra "));
        assert!(text.contains(s["config_hash"].as_str().unwrap()));
    }
    assert!(out.join("wavefunctions.svg").exists() && out.join("coefficients.svg").exists());
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "seed = 5\n[qml]\nmax_steps = 40\nbank_size = 600\nbatch_size = 100\nlog_every = 10\nn_states = 3\n\
         family = \"hermite_mixture_plus_flow\"\n[flow]\nintervals = 40\n[sampler]\nburn_in = 50\n",
    )
    .unwrap();
    let dirs = ["a", "b"].map(|d| dir.path().join(d));
    for d in &dirs {
        let r = run(&["qml", "--config", config.to_str().unwrap(), "--out", d.to_str().unwrap()], &[]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let files = sorted_files(&dirs[0]);
    assert!(files.contains(&"training_log.csv".to_string()) && files.contains(&"checkpoint.json".to_string()));
    assert_eq!(files, sorted_files(&dirs[1]));
    for f in &files {
        let (a, b) = (std::fs::read(dirs[0].join(f)).unwrap(), std::fs::read(dirs[1].join(f)).unwrap());
        assert!(a == b, "{f} differs between reruns");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let outs = ["1", "3"].map(|t| {
        let d = dir.path().join(t);
        let r = run(
            &["sample", "--out", d.to_str().unwrap(), "--set", "sample.n_paths=500", "--set", "sampler.burn_in=20"],
            &[("THERMAL_SPECTRA_THREADS", t)],
        );
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        std::fs::read(d.join("bank.bin")).unwrap()
    });
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn unknown_key_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "[qvi]\nlearning_rte = 0.01\n").unwrap();
    let r = run(&["qvi", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("learning_rte"));
}

#[test]
fn bad_values_and_thread_settings_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let r = run(&["qml", "--out", o, "--set", "qml.batch_size=0"], &[]);
    assert_eq!(r.status.code(), Some(2));
    let r = run(&["oracle", "--out", o], &[("THERMAL_SPECTRA_THREADS", "zero")]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn runtime_failure_keeps_partial_outputs() {
    // Four slices leave three points in the fit window, too few for a cosh fit.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lat");
    let r = run(
        &[
            "lattice",
            "--out",
            out.to_str().unwrap(),
            "--set",
            "lattice.beta=1.0",
            "--set",
            "lattice.n_slices=4",
            "--set",
            "lattice.n_paths=1000",
            "--set",
            "sampler.burn_in=10",
        ],
        &[],
    );
    assert_eq!(r.status.code(), Some(1));
    assert!(out.join("correlator.csv.partial").exists());
    assert!(!out.join("correlator.csv").exists());
    assert!(!out.join("fit.json").exists());
}

#[test]
fn compare_against_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    assert!(run(&["oracle", "--out", o.to_str().unwrap(), "--set", "oracle.size=60"], &[]).status.success());
    let spec = o.join("spectrum.json");
    let c = dir.path().join("c");
    let set_a = format!("compare.a=\"{}\"", spec.display());
    let set_b = format!("compare.b=\"{}\"", spec.display());
    let r = run(&["compare", "--out", c.to_str().unwrap(), "--set", &set_a, "--set", &set_b], &[]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rep = json(&c.join("compare.json"));
    for key in ["fractional_gap_differences", "l2_distances"] {
        assert!(rep[key].as_array().unwrap().iter().all(|v| v.as_f64().unwrap().abs() < 1e-12));
    }
}

#[test]
fn qml_reads_a_sampled_bank() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    let r = run(
        &["sample", "--out", s.to_str().unwrap(), "--set", "sample.n_paths=800", "--set", "sampler.burn_in=20"],
        &[],
    );
    assert!(r.status.success());
    assert_eq!(json(&s.join("sample_summary.json"))["rows"], 800);
    let q = dir.path().join("q");
    let bank = format!("qml.bank=\"{}\"", s.join("bank.bin").display());
    let r = run(
        &[
            "qml", "--out", q.to_str().unwrap(), "--set", &bank, "--set", "qml.max_steps=20", "--set",
            "qml.bank_size=800", "--set", "qml.n_states=3",
        ],
        &[],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let spec = json(&q.join("spectrum.json"));
    assert_eq!(spec["method"], "qml");
    assert_eq!(spec["eigenvalues"].as_array().unwrap().len(), 3);
}
