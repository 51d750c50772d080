//! Run configuration: module defaults, then a `key = value` file, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use shampoo_core::shampoo::ShampooConfig;
use shampoo_core::solver::parse_num;

/// Marks an error as a usage problem (exit code 1).
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub optimizer: ShampooConfig,
    /// Root exponent for `solve`, `bench`, `scalar-sweep` and `cheb-fit`.
    pub p: u32,
    pub task: String,
    pub steps: usize,
    pub batch: usize,
    pub dim: usize,
    pub repeats: usize,
    /// Iteration cap of the scalar sweep.
    pub cap: usize,
    pub grid: String,
    pub cheb_cache: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            optimizer: ShampooConfig::default(),
            p: 2,
            task: "quadratic".into(),
            steps: 200,
            batch: 32,
            dim: 64,
            repeats: 5,
            cap: 100,
            grid: "both".into(),
            cheb_cache: None,
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let usage = |e: shampoo_core::Error| Usage(e.to_string());
        match key {
            "p" => {
                let p: u32 = parse_num(key, v).map_err(usage)?;
                if p != 2 && p != 4 {
                    bail!(Usage(format!("p = {p}: expected 2 or 4")));
                }
                self.p = p;
            }
            "task" => self.task = v.to_string(),
            "steps" => self.steps = parse_num(key, v).map_err(usage)?,
            "batch" => self.batch = parse_num(key, v).map_err(usage)?,
            "dim" => self.dim = parse_num(key, v).map_err(usage)?,
            "repeats" => self.repeats = parse_num(key, v).map_err(usage)?,
            "cap" => self.cap = parse_num(key, v).map_err(usage)?,
            "grid" => match v {
                "log" | "linear" | "both" => self.grid = v.to_string(),
                _ => bail!(Usage(format!("grid = `{v}`: expected log, linear or both"))),
            },
            "cheb_cache" => {
                self.cheb_cache = if v == "none" { None } else { Some(PathBuf::from(v)) }
            }
            _ => {
                if !self.optimizer.set(key, v).map_err(usage)? {
                    bail!(Usage(format!("unknown config key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("p", self.p.to_string()),
            ("task", self.task.clone()),
            ("steps", self.steps.to_string()),
            ("batch", self.batch.to_string()),
            ("dim", self.dim.to_string()),
            ("repeats", self.repeats.to_string()),
            ("cap", self.cap.to_string()),
            ("grid", self.grid.clone()),
            (
                "cheb_cache",
                self.cheb_cache
                    .as_ref()
                    .map_or("none".into(), |p| p.display().to_string()),
            ),
        ];
        out.extend(self.optimizer.pairs());
        out
    }

    /// Applies every `key = value` line; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!(Usage(format!("{origin}:{}: expected `key = value`", ln + 1)));
            };
            self.set(k.trim(), v)
                .with_context(|| format!("{origin}:{}", ln + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn echo(&self) -> String {
        self.pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
