//! Shipped per-dataset refinement presets, addressed as `<setting>/<dataset>`
//! (e.g. `few-shot/cars`, `base-to-new/pets`, `video/ucf101`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LfaError, Result};
use crate::refine::RefineConfig;

pub const DEFAULTS_TOML: &str = include_str!("../presets/defaults.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub steps: usize,
    /// Fixed β; `None` means choose by cross-validation.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub dropout_p: Option<f64>,
}

impl Preset {
    pub fn apply(&self, cfg: &mut RefineConfig) {
        cfg.steps = self.steps;
        if let Some(n) = self.noise_std {
            cfg.noise_std = n;
        }
        if let Some(p) = self.dropout_p {
            cfg.dropout_p = p;
        }
    }
}

type Table = BTreeMap<String, BTreeMap<String, Preset>>;

fn table() -> Table {
    toml::from_str(DEFAULTS_TOML).expect("shipped presets parse")
}

/// All preset names in sorted order.
pub fn preset_names() -> Vec<String> {
    table()
        .into_iter()
        .flat_map(|(setting, sets)| sets.into_keys().map(move |d| format!("{setting}/{d}")))
        .collect()
}

pub fn preset(name: &str) -> Result<Preset> {
    let unknown = || LfaError::InvalidConfig(format!("unknown preset `{name}`"));
    let (setting, dataset) = name.split_once('/').ok_or_else(unknown)?;
    table()
        .get(setting)
        .and_then(|s| s.get(&dataset.to_ascii_lowercase()))
        .copied()
        .ok_or_else(unknown)
}
