//! Pipeline configuration: defaults, flat `key=value` files and validation.

use std::path::{Path, PathBuf};

use crate::atoms::InitMethod;
use crate::error::{Error, Result};

/// Every tunable of the pipeline. Counts must be positive and `seed` must be set.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Segments per clip.
    pub k: usize,
    /// Codebook size per channel.
    pub codebook_size: usize,
    pub atoms: usize,
    /// Top-set size for phrase scoring; `None` means half the training videos, rounded up.
    pub top: Option<usize>,
    pub window: usize,
    pub max_units: usize,
    pub budget: usize,
    pub epsilon: f64,
    pub c_reg: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub max_iters: usize,
    pub init: InitMethod,
    pub l2: bool,
    pub seed: Option<u64>,
    pub normal_class: Option<String>,
    pub target_class: Option<String>,
    pub descriptors: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub codebooks: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k: 3,
            codebook_size: 64,
            atoms: 8,
            top: None,
            window: 1,
            max_units: 3,
            budget: 10,
            epsilon: 0.1,
            c_reg: 1.0,
            tol: 1e-6,
            max_passes: 10_000,
            max_iters: 20,
            init: InitMethod::KMeans,
            l2: false,
            seed: None,
            normal_class: None,
            target_class: None,
            descriptors: None,
            manifest: None,
            codebooks: None,
            model: None,
            out: None,
        }
    }
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(format!("bad boolean {v:?}")),
    }
}

impl PipelineConfig {
    /// Sets one key. Keys use the long flag names; `_` and `-` are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "k" => self.k = num(&key, v)?,
            "codebook-size" => self.codebook_size = num(&key, v)?,
            "atoms" => self.atoms = num(&key, v)?,
            "top" => self.top = Some(num(&key, v)?),
            "window" => self.window = num(&key, v)?,
            "max-units" => self.max_units = num(&key, v)?,
            "budget" => self.budget = num(&key, v)?,
            "epsilon" => self.epsilon = num(&key, v)?,
            "c-reg" => self.c_reg = num(&key, v)?,
            "tol" => self.tol = num(&key, v)?,
            "max-passes" => self.max_passes = num(&key, v)?,
            "max-iters" => self.max_iters = num(&key, v)?,
            "init" => self.init = v.parse()?,
            "l2" => self.l2 = parse_bool(v)?,
            "seed" => self.seed = Some(num(&key, v)?),
            "normal-class" => self.normal_class = Some(v.to_string()),
            "target-class" => self.target_class = Some(v.to_string()),
            "descriptors" => self.descriptors = Some(v.into()),
            "manifest" => self.manifest = Some(v.into()),
            "codebooks" => self.codebooks = Some(v.into()),
            "model" => self.model = Some(v.into()),
            "out" => self.out = Some(v.into()),
            _ => return Err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    /// Applies a flat `key=value` file; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Parse {
                what: "config",
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, found {line:?}")))?;
            self.set(key, value).map_err(bad)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Usage("a seed is required (--seed or seed= in the config file)".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        let counts = [
            ("k", self.k),
            ("codebook-size", self.codebook_size),
            ("atoms", self.atoms),
            ("max-units", self.max_units),
            ("budget", self.budget),
            ("max-passes", self.max_passes),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Usage(format!("{name} must be positive")));
        }
        if self.top == Some(0) {
            return Err(Error::Usage("top must be positive".into()));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Usage("epsilon must be non-negative".into()));
        }
        if !(self.c_reg > 0.0) || !self.c_reg.is_finite() {
            return Err(Error::Usage("c-reg must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Usage("tol must be positive".into()));
        }
        if self.normal_class.is_some() && self.target_class.is_some() {
            return Err(Error::Usage("normal-class and target-class are mutually exclusive".into()));
        }
        Ok(())
    }

    /// `key=value` lines for every non-path setting, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k}={v}\n"));
        kv("k", self.k.to_string());
        kv("codebook-size", self.codebook_size.to_string());
        kv("atoms", self.atoms.to_string());
        if let Some(t) = self.top {
            kv("top", t.to_string());
        }
        kv("window", self.window.to_string());
        kv("max-units", self.max_units.to_string());
        kv("budget", self.budget.to_string());
        kv("epsilon", format!("{:?}", self.epsilon));
        kv("c-reg", format!("{:?}", self.c_reg));
        kv("tol", format!("{:?}", self.tol));
        kv("max-passes", self.max_passes.to_string());
        kv("max-iters", self.max_iters.to_string());
        kv("init", self.init.to_string());
        kv("l2", u8::from(self.l2).to_string());
        if let Some(s) = self.seed {
            kv("seed", s.to_string());
        }
        if let Some(c) = &self.normal_class {
            kv("normal-class", c.clone());
        }
        if let Some(c) = &self.target_class {
            kv("target-class", c.clone());
        }
        out
    }
}
