//! Run-configuration files: TOML with a flat top level plus `[train]` and
//! `[precompute]` tables. Unknown keys are rejected; missing keys take the
//! documented defaults.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::federation::FederationConfig;

/// Parses and validates a configuration file.
///
/// An empty file yields the defaults: 100 rounds, 3 local epochs, full
/// participation, strategy fedgta, lp_alpha 0.5, lp_steps 5, moment_order 5,
/// epsilon 0.5, learning rate 0.1, sgc precompute with 2 steps, seed 42.
pub fn parse_config(path: &Path) -> Result<FederationConfig> {
    let text = fs::read_to_string(path)?;
    parse_config_str(&text).map_err(|e| match e {
        Error::Config(message) => Error::Config(format!("{}: {message}", path.display())),
        other => other,
    })
}

/// [`parse_config`] over an in-memory string.
pub fn parse_config_str(text: &str) -> Result<FederationConfig> {
    let cfg: FederationConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
