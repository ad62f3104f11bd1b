//! Optional profile file holding per-user defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::CliError;

pub const PROFILE_ENV: &str = "AIDCHAIN_PROFILE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Table,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub node_url: Option<String>,
    pub key_file: Option<PathBuf>,
    pub display_name: Option<String>,
    pub output: Option<OutputFormat>,
}

impl Profile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("profile {}: {e}", path.display())))?;
        let mut p: Profile =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("profile {}: {e}", path.display())))?;
        // Relative key paths are relative to the profile itself.
        if let (Some(k), Some(dir)) = (&p.key_file, path.parent()) {
            if k.is_relative() {
                p.key_file = Some(dir.join(k));
            }
        }
        Ok(p)
    }
}
