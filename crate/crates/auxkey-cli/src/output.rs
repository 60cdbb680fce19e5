//! Output plumbing shared by every subcommand. Files are staged in memory,
//! written to a temp name, and renamed into place only after the whole run
//! has succeeded — a failed run leaves the output directory untouched.

use auxkey_core::SimConfig;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Collects finished files for one run and commits them in a single pass.
pub struct RunWriter {
    dir: PathBuf,
    started: Instant,
    files: Vec<(String, Vec<u8>)>,
}

impl RunWriter {
    pub fn new(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            started: Instant::now(),
            files: Vec::new(),
        })
    }

    pub fn stage(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Write the manifest, then move everything into place. Temp files use a
    /// dotted prefix so a crash mid-commit cannot be mistaken for output.
    pub fn commit(mut self, command: &str, cfg: &SimConfig) -> io::Result<Vec<String>> {
        let mut manifest = String::new();
        let _ = writeln!(manifest, "command = {command}");
        let _ = writeln!(manifest, "version = auxkey {}", env!("CARGO_PKG_VERSION"));
        manifest.push_str(&crate::config::render(cfg));
        for (name, _) in &self.files {
            let _ = writeln!(manifest, "output = {name}");
        }
        let _ = writeln!(
            manifest,
            "duration_ms = {}",
            self.started.elapsed().as_millis()
        );
        self.files.push(("manifest.txt".into(), manifest.into_bytes()));

        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let tmp = self.dir.join(format!(".{name}.tmp"));
            fs::write(&tmp, bytes)?;
            fs::rename(&tmp, self.dir.join(name))?;
            written.push(name.clone());
        }
        Ok(written)
    }
}

/// Probability / fraction formatting used everywhere: six decimals, `.`
/// separator. Counts stay plain integers.
pub fn prob(x: f64) -> String {
    format!("{x:.6}")
}
