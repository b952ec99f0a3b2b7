//! Result files. Every file carries the artifact version and config hash;
//! on failure everything written so far is renamed with a `.partial` suffix.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    artifact_version: &'a str,
    config_hash: &'a str,
    #[serde(flatten)]
    payload: &'a T,
}

pub struct OutputDir {
    root: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path, hash: String) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            hash,
            written: Vec::new(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.root.join(name);
        if !self.written.contains(&p) {
            self.written.push(p.clone());
        }
        p
    }

    pub fn json<T: Serialize>(&mut self, name: &str, payload: &T) -> std::io::Result<()> {
        let env = Envelope {
            artifact_version: VERSION,
            config_hash: &self.hash,
            payload,
        };
        let text = serde_json::to_string_pretty(&env).map_err(std::io::Error::other)? + "\n";
        fs::write(self.path(name), text)
    }

    pub fn csv(&mut self, name: &str) -> std::io::Result<CsvWriter> {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        writeln!(w, "# thermal-spectra {VERSION} config {}", self.hash)?;
        Ok(CsvWriter { w })
    }

    pub fn svg(&mut self, name: &str, body: &str) -> std::io::Result<()> {
        let text = body.replacen(
            "<svg ",
            &format!("<!-- thermal-spectra {VERSION} config {} -->\n<svg ", self.hash),
            1,
        );
        fs::write(self.path(name), text)
    }

    pub fn raw(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        fs::write(self.path(name), bytes)
    }

    /// Renames every file written so far to `<name>.partial`.
    pub fn mark_partial(&self) {
        for p in &self.written {
            if p.exists() {
                let mut target = p.clone().into_os_string();
                target.push(".partial");
                if let Err(e) = fs::rename(p, &target) {
                    log::error!("could not mark {} as partial: {e}", p.display());
                }
            }
        }
    }
}

pub struct CsvWriter {
    w: BufWriter<File>,
}

impl CsvWriter {
    pub fn header(&mut self, cols: &[&str]) -> std::io::Result<()> {
        writeln!(self.w, "{}", cols.join(","))
    }

    pub fn row(&mut self, values: &[f64]) -> std::io::Result<()> {
        let cells: Vec<String> = values.iter().map(|&v| num(v)).collect();
        writeln!(self.w, "{}", cells.join(","))
    }

    /// A row whose first cell is an integer (step, index).
    pub fn indexed_row(&mut self, index: usize, values: &[f64]) -> std::io::Result<()> {
        let mut cells = vec![index.to_string()];
        cells.extend(values.iter().map(|&v| num(v)));
        writeln!(self.w, "{}", cells.join(","))
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-2.0), "-2.0000000000000000e0");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn partial_suffix_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "h".into()).unwrap();
        out.json("a.json", &serde_json::json!({"x": 1.0})).unwrap();
        let mut c = out.csv("b.csv").unwrap();
        c.row(&[1.0]).unwrap();
        c.flush().unwrap();
        out.mark_partial();
        assert!(dir.path().join("a.json.partial").exists());
        assert!(dir.path().join("b.csv.partial").exists());
        assert!(!dir.path().join("a.json").exists());
    }

    #[test]
    fn json_embeds_hash_and_version() {
        #[derive(Serialize)]
        struct P {
            x: f64,
        }
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path(), "abc".into()).unwrap();
        out.json("p.json", &P { x: 1.5 }).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("p.json")).unwrap()).unwrap();
        assert_eq!(v["config_hash"], "abc");
        assert_eq!(v["artifact_version"], VERSION);
        assert_eq!(v["x"], 1.5);
    }
}
