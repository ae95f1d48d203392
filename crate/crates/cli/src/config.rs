use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use uinv_core::combs::CombMode;

use crate::error::CliError;

pub const THREADS_ENV: &str = "UINV_THREADS";
pub const SIZE_CAP_ENV: &str = "UINV_SIZE_CAP";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format {other:?} (expected json or csv)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
        })
    }
}

/// Everything a run depends on. Echoed verbatim in every report.
///
/// Defaults: `d = 2`, `k = 2`, `mode = adaptive`, `seed = 1`, `trials = 20`,
/// `tol = 1e-7`, `max_iter = 50000`, `format = json`, `size_cap = 729`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub d: usize,
    pub k: usize,
    pub mode: String,
    pub seed: u64,
    pub trials: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub format: Format,
    /// Largest total complex dimension `d^(2k+2)` an optimization may touch.
    pub size_cap: usize,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            d: 2,
            k: 2,
            mode: "adaptive".into(),
            seed: 1,
            trials: 20,
            tol: 1e-7,
            max_iter: 50_000,
            format: Format::Json,
            size_cap: 729,
            threads: None,
        }
    }
}

/// Optional overrides, as read from a TOML file or the command line.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub d: Option<usize>,
    pub k: Option<usize>,
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub format: Option<Format>,
    pub size_cap: Option<usize>,
    pub threads: Option<usize>,
}

impl Overrides {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    fn apply(self, cfg: &mut RunConfig) {
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        take!(d, k, mode, seed, trials, tol, max_iter, format, size_cap);
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
    }
}

fn env_usize(name: &str, lookup: &dyn Fn(&str) -> Option<String>) -> Result<Option<usize>, CliError> {
    match lookup(name) {
        None => Ok(None),
        Some(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{name}={v:?} is not a non-negative integer"))),
    }
}

impl RunConfig {
    /// Defaults, then the config file, then the environment (threads and size
    /// cap only), then flags.
    pub fn resolve(
        file: Option<Overrides>,
        flags: Overrides,
        lookup: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(f) = file {
            f.apply(&mut cfg);
        }
        if let Some(t) = env_usize(THREADS_ENV, lookup)? {
            cfg.threads = Some(t);
        }
        if let Some(c) = env_usize(SIZE_CAP_ENV, lookup)? {
            cfg.size_cap = c;
        }
        flags.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.d < 2 {
            return Err(CliError::Usage(format!("d must be at least 2, got {}", self.d)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CliError::Usage(format!("tol must be positive, got {}", self.tol)));
        }
        if self.trials == 0 {
            return Err(CliError::Usage("trials must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(CliError::Usage("max_iter must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Usage("thread count must be at least 1".into()));
        }
        self.comb_mode()?;
        Ok(())
    }

    pub fn comb_mode(&self) -> Result<CombMode, CliError> {
        self.mode
            .parse()
            .map_err(|e: uinv_core::Error| CliError::Usage(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::resolve(None, Overrides::default(), &no_env).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn flags_beat_file_and_env_beats_file() {
        let file: Overrides = toml::from_str("d = 3\nk = 4\nsize_cap = 10\nformat = \"csv\"").unwrap();
        let flags = Overrides {
            k: Some(1),
            ..Default::default()
        };
        let env = |name: &str| (name == SIZE_CAP_ENV).then(|| "99".to_string());
        let cfg = RunConfig::resolve(Some(file), flags, &env).unwrap();
        assert_eq!((cfg.d, cfg.k, cfg.size_cap, cfg.format), (3, 1, 99, Format::Csv));
    }

    #[test]
    fn invalid_values_are_usage_errors() {
        for flags in [
            Overrides {
                d: Some(1),
                ..Default::default()
            },
            Overrides {
                tol: Some(0.0),
                ..Default::default()
            },
            Overrides {
                mode: Some("serial".into()),
                ..Default::default()
            },
        ] {
            assert!(matches!(
                RunConfig::resolve(None, flags, &no_env),
                Err(CliError::Usage(_))
            ));
        }
        let env = |name: &str| (name == THREADS_ENV).then(|| "many".to_string());
        assert!(RunConfig::resolve(None, Overrides::default(), &env).is_err());
        assert!(toml::from_str::<Overrides>("colour = 1").is_err());
    }
}
