use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

use recstats::montecarlo::{SCHEMA_VERSION, VERSION};

#[derive(Debug, Serialize)]
struct FileEntry {
    file: String,
    invocation: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    version: &'a str,
    command: &'a str,
    invocation: &'a str,
    seed: u64,
    files: &'a [FileEntry],
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    warnings: &'a [String],
}

/// Collects output files of one command and writes `manifest.json` last.
pub struct Output {
    dir: PathBuf,
    command: &'static str,
    invocation: String,
    seed: u64,
    files: Vec<FileEntry>,
    warnings: Vec<String>,
}

impl Output {
    pub fn new(dir: PathBuf, command: &'static str, invocation: &str, seed: u64) -> Result<Self> {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir,
            command,
            invocation: invocation.to_string(),
            seed,
            files: Vec::new(),
            warnings: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.files.push(FileEntry {
            file: name.to_string(),
            invocation: self.invocation.clone(),
        });
        Ok(BufWriter::new(f))
    }

    pub fn csv<F>(&mut self, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let mut w = self.create(name)?;
        write(&mut w).with_context(|| format!("writing {name}"))?;
        w.flush()?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let m = message.into();
        log::warn!("{m}");
        self.warnings.push(m);
    }

    pub fn warnings(&mut self, messages: &[String]) {
        self.warnings.extend(messages.iter().cloned());
    }

    pub fn finish(self) -> Result<()> {
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            version: VERSION,
            command: self.command,
            invocation: &self.invocation,
            seed: self.seed,
            files: &self.files,
            warnings: &self.warnings,
        };
        let path = self.dir.join("manifest.json");
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        writeln!(w)?;
        w.flush()?;
        for f in &self.files {
            println!("{}", self.dir.join(&f.file).display());
        }
        Ok(())
    }
}
