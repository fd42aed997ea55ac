use std::path::{Path, PathBuf};

use lafte::bounds::UpperSeMethod;
use lafte::data::{ColumnMapping, Delimiter, MissingPolicy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::{CommandKind, Format, Overrides};
use crate::CliError;

/// Everything a run needs, after merging the config file with the flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub columns: ColumnMapping,
    #[serde(default)]
    pub delimiter: Delimiter,
    #[serde(default)]
    pub missing: MissingPolicy,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub ymin: Option<f64>,
    #[serde(default)]
    pub ymax: Option<f64>,
    #[serde(default)]
    pub upper_se: UpperSeMethod,
    /// Run step 2 of the mover test even after a step-1 rejection.
    #[serde(default)]
    pub force_step2: bool,
    #[serde(default)]
    pub spec: Option<PathBuf>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Draw exact per-arm stratum counts instead of i.i.d. units.
    #[serde(default)]
    pub balanced: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

fn default_level() -> f64 {
    0.05
}
fn default_n() -> usize {
    10_000
}
fn default_tolerance() -> f64 {
    1e-10
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("every key has a default")
    }
}

impl RunConfig {
    /// Reads the config file, if any, resolving its relative paths against
    /// the file's directory, then applies the flags.
    pub fn resolve(overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &overrides.config {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data, &mut cfg.spec, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.data {
            self.data = Some(v.clone());
        }
        if let Some(v) = &o.cluster {
            self.columns.cluster = Some(v.clone()).filter(|c| !c.is_empty());
        }
        if let Some(v) = &o.controls {
            self.columns.controls = v.iter().filter(|c| !c.is_empty()).cloned().collect();
        }
        if let Some(v) = o.level {
            self.level = v;
        }
        if o.ymin.is_some() {
            self.ymin = o.ymin;
        }
        if o.ymax.is_some() {
            self.ymax = o.ymax;
        }
        if let Some(v) = o.n {
            self.n = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = o.format {
            self.format = v;
        }
        if let Some(v) = &o.spec {
            self.spec = Some(v.clone());
        }
    }

    /// Rejects inconsistent settings before any file is read.
    pub fn validate(&self, command: CommandKind) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if !(self.level > 0.0 && self.level < 1.0) {
            return usage(format!("level {} must lie strictly between 0 and 1", self.level));
        }
        for (name, v) in [("ymin", self.ymin), ("ymax", self.ymax)] {
            if v.is_some_and(|v| !v.is_finite()) {
                return usage(format!("{name} must be finite"));
            }
        }
        if let (Some(lo), Some(hi)) = (self.ymin, self.ymax) {
            if lo >= hi {
                return usage(format!("ymin {lo} must be below ymax {hi}"));
            }
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return usage(format!("tolerance {} must lie in (0, 1)", self.tolerance));
        }
        let c = &self.columns;
        let mut names: Vec<&str> = vec![&c.z, &c.d1, &c.d2, &c.y];
        names.extend(c.controls.iter().map(String::as_str));
        names.extend(c.cluster.as_deref());
        for (i, a) in names.iter().enumerate() {
            if a.is_empty() {
                return usage("column names must be nonempty".into());
            }
            if names[..i].contains(a) {
                return usage(format!("column '{a}' is mapped to more than one role"));
            }
        }
        match command {
            k if k.needs_data() && self.data.is_none() => usage(format!("{} needs --data or `data` in the config", k.name())),
            CommandKind::Simulate | CommandKind::Verify if self.spec.is_none() => {
                usage(format!("{} needs --spec or `spec` in the config", command.name()))
            }
            CommandKind::Simulate if self.n < 2 => usage(format!("n = {} is too small to simulate", self.n)),
            _ => Ok(()),
        }
    }

    /// SHA-256 of the resolved config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}
