//! Config resolution: flag, then `VRC_*` environment variable, then config file,
//! then built-in default.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use sieve_vrc::SieveConfig;

use crate::args::TuningArgs;
use crate::error::{CliError, Result};

pub const ENV_PREFIX: &str = "VRC_";

#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: SieveConfig,
    /// Keys set by a file, the environment or a flag.
    pub explicit: BTreeSet<&'static str>,
    /// All `--k1` values when a list was given.
    pub k1_list: Vec<usize>,
}

impl Resolved {
    pub fn is_set(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }
}

fn key_of(name: &str) -> Option<&'static str> {
    SieveConfig::KEYS.iter().copied().find(|k| *k == name)
}

pub fn parse_config_file(text: &str, path: &Path, config: &mut SieveConfig, explicit: &mut BTreeSet<&'static str>) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("{}:{}: expected `key = value`", path.display(), i + 1))
        })?;
        let k = k.trim();
        let key = key_of(k)
            .ok_or_else(|| CliError::Usage(format!("{}:{}: unknown config key {k:?}", path.display(), i + 1)))?;
        config
            .set(key, v)
            .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        explicit.insert(key);
    }
    Ok(())
}

fn flag_values(t: &TuningArgs) -> Vec<(&'static str, Option<String>)> {
    fn s<T: ToString>(v: &Option<T>) -> Option<String> {
        v.as_ref().map(|x| x.to_string())
    }
    vec![
        ("k0", s(&t.k0)),
        ("k1", t.k1.first().map(|v| v.to_string())),
        ("sigma_nu", s(&t.sigma_nu)),
        ("nu_nodes", s(&t.nu_nodes)),
        ("x_nodes", s(&t.x_nodes)),
        ("x_bound", s(&t.x_bound)),
        ("eigen_floor", s(&t.eigen_floor)),
        ("grid_lo", s(&t.grid_lo)),
        ("grid_hi", s(&t.grid_hi)),
        ("grid_count", s(&t.grid_count)),
        ("spline_degree", s(&t.spline_degree)),
        ("spline_knots", s(&t.spline_knots)),
        ("boot_draws", s(&t.boot_draws)),
        ("weight_kind", t.weight_kind.clone()),
        ("alpha", s(&t.alpha)),
        ("b1_bound", s(&t.b1_bound)),
        ("b1_nodes", s(&t.b1_nodes)),
    ]
}

/// Resolves with an explicit environment lookup so tests can inject variables.
pub fn resolve_with(
    file: Option<&Path>,
    seed: Option<u64>,
    tuning: &TuningArgs,
    env: impl Fn(&str) -> Option<String>,
) -> Result<Resolved> {
    let mut config = SieveConfig::default();
    let mut explicit = BTreeSet::new();
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        parse_config_file(&text, path, &mut config, &mut explicit)?;
    }
    for key in SieveConfig::KEYS {
        let var = format!("{ENV_PREFIX}{}", key.to_ascii_uppercase());
        if let Some(v) = env(&var) {
            config
                .set(key, &v)
                .map_err(|e| CliError::Usage(format!("environment {var}: {e}")))?;
            explicit.insert(key);
        }
    }
    for (key, value) in flag_values(tuning) {
        if let Some(v) = value {
            config.set(key, &v).map_err(|e| CliError::Usage(e.to_string()))?;
            explicit.insert(key);
        }
    }
    if let Some(s) = seed {
        config.seed = s;
        explicit.insert("seed");
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Resolved {
        config,
        explicit,
        k1_list: tuning.k1.clone(),
    })
}

pub fn resolve(file: Option<&Path>, seed: Option<u64>, tuning: &TuningArgs) -> Result<Resolved> {
    resolve_with(file, seed, tuning, |k| std::env::var(k).ok())
}
