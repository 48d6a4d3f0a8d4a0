//! Flat `key = value` run configuration: every model setting plus paths and
//! evaluation options.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use kwe::eval::MRR_DOCS;
use kwe::stats::DEFAULT_PERMUTATIONS;
use kwe::{IndexMode, ModelConfig, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub corpus: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub task: Task,
    pub mode: IndexMode,
    pub n_docs: usize,
    pub k: usize,
    pub permutations: usize,
    pub system: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            corpus: None,
            model_path: None,
            out: None,
            task: Task::Map20,
            mode: IndexMode::AllItems,
            n_docs: MRR_DOCS,
            k: 10,
            permutations: DEFAULT_PERMUTATIONS,
            system: String::new(),
        }
    }
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        let num = |v: &str| v.parse::<usize>().map_err(|_| format!("bad value {v:?} for {key}"));
        match key {
            "corpus" => self.corpus = opt_path(v),
            "model" => self.model_path = opt_path(v),
            "out" => self.out = opt_path(v),
            "task" => self.task = v.parse().map_err(|e: kwe::Error| e.to_string())?,
            "mode" => self.mode = v.parse().map_err(|e: kwe::Error| e.to_string())?,
            "n_docs" => self.n_docs = num(v)?,
            "k" => self.k = num(v)?,
            "permutations" => self.permutations = num(v)?,
            "system" => self.system = v.to_owned(),
            _ => self.model.set(key, v).map_err(|e| e.to_string())?,
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<(), String> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("{}:{}: expected key = value", origin.display(), i + 1))?;
            self.set(key.trim(), value)
                .map_err(|e| format!("{}:{}: {e}", origin.display(), i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        self.apply_text(&text, path)
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("corpus", path_text(&self.corpus)),
            ("model", path_text(&self.model_path)),
            ("out", path_text(&self.out)),
            ("task", self.task.to_string()),
            ("mode", self.mode.to_string()),
            ("n_docs", self.n_docs.to_string()),
            ("k", self.k.to_string()),
            ("permutations", self.permutations.to_string()),
            ("system", self.system.clone()),
        ];
        out.extend(self.model.entries());
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_text())
    }
}

/// Where a command writing to `out` stores its resolved configuration.
pub fn config_path_for(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("config.txt")
    } else {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.with_file_name(format!("{stem}.config.txt"))
    }
}
