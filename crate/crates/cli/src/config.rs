//! Run configuration: one JSON file per experiment, unknown keys rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use strip_spectra::{Profile, ProfileSpec, Resolution};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional guard: must match the subcommand when present.
    #[serde(default)]
    pub command: Option<String>,
    pub profile: ProfileSpec,
    /// Strip lengths for the eigenvalue sweeps.
    #[serde(default)]
    pub n_list: Vec<f64>,
    /// Truncation length of the scattering problem.
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_resolution")]
    pub resolution: Resolution,
    #[serde(default = "default_levels")]
    pub levels: u32,
    #[serde(default = "default_m_count")]
    pub m_count: usize,
    /// Boundary modes of the scattering solve; defaults to `min(8, J - 1)`.
    #[serde(default)]
    pub modes: Option<usize>,
    /// Scales for the first-order law table of `phase`.
    #[serde(default)]
    pub eps_sweep: Vec<f64>,
    /// Added to the scattering phase before the expansion check.
    #[serde(default)]
    pub phase_offset: f64,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub figure2: Option<Figure2Settings>,
    /// Also write `x,y,u` CSV dumps of the finest fields.
    #[serde(default)]
    pub dump_fields: bool,
    #[serde(default = "default_out_dir", skip_serializing)]
    pub out_dir: PathBuf,
}

/// Acceptance thresholds of `verify`; `null` disables a check.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub slope_max: Option<f64>,
    pub min_rows: usize,
    pub c5_rel: Option<f64>,
    pub a_agreement: Option<f64>,
    pub sup_far_order: Option<f64>,
    pub sup_near_spread: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            slope_max: Some(-4.0),
            min_rows: 3,
            c5_rel: Some(0.3),
            a_agreement: Some(2e-3),
            sup_far_order: None,
            sup_near_spread: Some(3.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure2Settings {
    pub eps: f64,
    pub n: f64,
    #[serde(default = "default_figure2_base")]
    pub eigen_resolution: Resolution,
    #[serde(default = "default_levels")]
    pub eigen_levels: u32,
}

fn default_length() -> f64 {
    8.0
}

fn default_resolution() -> Resolution {
    Resolution::new(16)
}

fn default_figure2_base() -> Resolution {
    Resolution::new(16)
}

fn default_levels() -> u32 {
    3
}

fn default_m_count() -> usize {
    2
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn profile(&self) -> Result<Profile, CliError> {
        self.profile.build().map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks everything that can be checked before any compute.
    pub fn validate(&self, command: &str) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if let Some(c) = &self.command {
            if c != command {
                return bad(format!("config is for `{c}`, not `{command}`"));
            }
        }
        self.profile()?;
        if self.n_list.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
            return bad(format!("n_list must hold positive lengths, got {:?}", self.n_list));
        }
        let needs_n = matches!(command, "eigs" | "verify" | "features" | "mesh-dump");
        if needs_n && self.n_list.is_empty() {
            return bad(format!("`{command}` needs a non-empty n_list"));
        }
        if !(self.length.is_finite() && self.length >= 4.0) {
            return bad(format!("length = {} must be at least 4", self.length));
        }
        let r = &self.resolution;
        if r.j < 2 || r.i_cap == 0 || !(r.strip_density > 0.0) || !(0.0..1.0).contains(&r.grading) {
            return bad(format!("invalid resolution {r:?}"));
        }
        if self.levels == 0 || self.levels > 6 {
            return bad(format!("levels = {} outside 1..=6", self.levels));
        }
        if matches!(command, "phase" | "verify") && self.levels < 3 {
            return bad(format!("`{command}` extrapolates and needs levels >= 3"));
        }
        if !(1..=4).contains(&self.m_count) {
            return bad(format!("m_count = {} outside 1..=4", self.m_count));
        }
        if command == "features" && self.m_count < 2 {
            return bad("`features` needs m_count >= 2 for the nodal line".into());
        }
        if let Some(k) = self.modes {
            if k == 0 || k >= r.j {
                return bad(format!("modes = {k} must lie in 1..J"));
            }
        }
        if self.eps_sweep.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return bad(format!("eps_sweep must hold positive scales, got {:?}", self.eps_sweep));
        }
        if let Some(f) = &self.figure2 {
            if !(f.eps > 0.0 && f.eps <= 1.0) || !(f.n >= 4.0) || f.eigen_levels == 0 {
                return bad(format!("invalid figure2 settings {f:?}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig, serde_json::Error> {
        serde_json::from_str(s)
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse(r#"{"profile": {"kind": "hat", "eps": 1.0}, "n_list": [8]}"#).unwrap();
        assert_eq!(c.levels, 3);
        assert_eq!(c.resolution, Resolution::new(16));
        assert_eq!(c.thresholds.slope_max, Some(-4.0));
        c.validate("eigs").unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse(r#"{"profile": {"kind": "hat"}, "n_lsit": [8]}"#).is_err());
        assert!(parse(r#"{"profile": {"kind": "hat", "width": 2}}"#).is_err());
        assert!(parse(r#"{"profile": {"kind": "hat"}, "thresholds": {"slope": -4}}"#).is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let ok = r#"{"profile": {"kind": "slope", "eps": 0.5}, "n_list": [8, 12]}"#;
        let c = parse(ok).unwrap();
        c.validate("verify").unwrap();
        let mut bad = c.clone();
        bad.n_list.clear();
        assert!(bad.validate("eigs").is_err());
        assert!(bad.validate("phase").is_ok());
        let mut bad = c.clone();
        bad.m_count = 1;
        assert!(bad.validate("features").is_err());
        let mut bad = c.clone();
        bad.command = Some("phase".into());
        assert!(bad.validate("eigs").is_err());
        let mut bad = c.clone();
        bad.levels = 2;
        assert!(bad.validate("phase").is_err());
        let mut bad = c;
        bad.profile.eps = -1.0;
        assert!(bad.validate("eigs").is_err());
    }
}
