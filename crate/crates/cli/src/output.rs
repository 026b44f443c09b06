//! Atomic file output and gnuplot script emission.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

/// Directory of run outputs. Each file is written to a temporary sibling and
/// renamed into place.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_with<F>(&mut self, name: &str, fill: F) -> io::Result<PathBuf>
    where
        F: FnOnce(&mut dyn Write) -> io::Result<()>,
    {
        let target = self.path(name);
        let mut tmp = NamedTempFile::new_in(&self.root)?;
        {
            let mut buf = io::BufWriter::new(tmp.as_file_mut());
            fill(&mut buf)?;
            buf.flush()?;
        }
        tmp.as_file().sync_all()?;
        tmp.persist(&target).map_err(|e| e.error)?;
        self.written.push(target.clone());
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<PathBuf> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> io::Result<PathBuf> {
        self.write_with(name, |w| w.write_all(text.as_bytes()))
    }
}

/// Nine group entries over time for one phase.
pub fn state_plot(csv: &str, title: &str) -> String {
    let mut s = format!(
        "set datafile separator ','\nset key outside right\nset xlabel 't'\nset ylabel 'g_ij'\nset title '{title}'\nplot \\\n"
    );
    let names = ["g11", "g12", "g13", "g21", "g22", "g23", "g31", "g32", "g33"];
    let lines: Vec<String> = names
        .iter()
        .enumerate()
        .map(|(k, n)| format!("  '{csv}' using 1:{} with lines title '{n}'", k + 2))
        .collect();
    s.push_str(&lines.join(", \\\n"));
    s.push_str("\npause -1\n");
    s
}

/// Costate components over time for one phase.
pub fn adjoint_plot(csv: &str, title: &str) -> String {
    let lines: Vec<String> = (1..=3)
        .map(|i| format!("  '{csv}' using 1:{} with lines title 'lambda{i}'", 10 + i))
        .collect();
    format!(
        "set datafile separator ','\nset key outside right\nset xlabel 't'\nset ylabel 'lambda_i'\nset title '{title}'\nplot \\\n{}\npause -1\n",
        lines.join(", \\\n")
    )
}

/// Value against iteration.
pub fn convergence_plot(csv: &str) -> String {
    format!(
        "set datafile separator ','\nset xlabel 'iteration'\nset ylabel 'v'\nset title 'EG-HMP convergence'\nplot '{csv}' using 1:2 with linespoints title 'v'\npause -1\n"
    )
}
