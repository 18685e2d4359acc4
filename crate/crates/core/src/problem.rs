//! JSON problem files.
//!
//! ```json
//! {
//!   "system":   { "A": [[...]], "B": [[...]], "C": [[...]], "D": [[...]],
//!                 "h_M": 2, "omega_bar": [...], "d_bar": [...],
//!                 "psi_bar": [...], "phi_bar": [...] },
//!   "scenario": { "omega": {...}, "d": {...}, "h1": {...}, "h2": {...},
//!                 "psi": [...], "phi": [...] },
//!   "options":  { "alpha_step": 0.001, "sim_step": 0.001, "t_end": 40,
//!                 "xi": [...] }
//! }
//! ```
//!
//! `scenario` and `options` are optional, as are `psi` and `phi` inside a
//! scenario (they default to `psi_bar` and a constant `phi_bar`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envelope::DEFAULT_ALPHA_STEP;
use crate::linalg::DenseVector;
use crate::model::{validate_structure, SystemSpec};
use crate::simulator::{History, SignalSpec, SimulationScenario, DEFAULT_STEP, DEFAULT_T_END};

#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed problem file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid system:\n{0}")]
    Structure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSection {
    pub omega: SignalSpec,
    pub d: SignalSpec,
    pub h1: SignalSpec,
    pub h2: SignalSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<DenseVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<History>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Options {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<DenseVector>,
}

impl Options {
    pub fn alpha_step(&self) -> f64 {
        self.alpha_step.unwrap_or(DEFAULT_ALPHA_STEP)
    }

    pub fn sim_step(&self) -> f64 {
        self.sim_step.unwrap_or(DEFAULT_STEP)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end.unwrap_or(DEFAULT_T_END)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub system: SystemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSection>,
    #[serde(default)]
    pub options: Options,
}

impl ProblemFile {
    /// Parses, clamps sign round-off, and checks the structure.
    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        let mut file: ProblemFile = serde_json::from_str(text)?;
        file.system.clamp_roundoff();
        let report = validate_structure(&file.system);
        if !report.is_valid() {
            return Err(ProblemError::Structure(report.to_string()));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, ProblemError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// The scenario described in the file, if any.
    pub fn scenario(&self, step: f64, t_end: f64) -> Option<SimulationScenario> {
        let section = self.scenario.as_ref()?;
        Some(SimulationScenario {
            spec: self.system.clone(),
            omega: section.omega.clone(),
            d: section.d.clone(),
            h1: section.h1.clone(),
            h2: section.h2.clone(),
            psi: section
                .psi
                .clone()
                .unwrap_or_else(|| self.system.psi_bar.clone()),
            phi: section
                .phi
                .clone()
                .unwrap_or_else(|| History::Constant(self.system.phi_bar.clone())),
            t_end,
            step,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example_system;

    const EXAMPLE: &str = include_str!("../../../data/benchmark.json");

    #[test]
    fn shipped_example_parses() {
        let file = ProblemFile::from_json(EXAMPLE).unwrap();
        assert_eq!(file.system, example_system());
        assert_eq!(file.options.alpha_step(), 0.001);
        let sc = file.scenario(1e-3, 40.0).unwrap();
        assert_eq!(
            sc,
            SimulationScenario::preset(&example_system(), 1.0, 1.0, 1e-3, 40.0)
        );
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let json = serde_json::json!({ "system": example_system() }).to_string();
        let file = ProblemFile::from_json(&json).unwrap();
        assert!(file.scenario.is_none());
        assert_eq!(file.options.sim_step(), 1e-3);
        assert_eq!(file.options.t_end(), 40.0);
    }

    #[test]
    fn malformed_and_invalid_files() {
        assert!(matches!(
            ProblemFile::from_json("{ not json"),
            Err(ProblemError::Parse(_))
        ));
        let mut spec = example_system();
        spec.b[(0, 0)] = -0.1;
        let json = serde_json::json!({ "system": spec }).to_string();
        match ProblemFile::from_json(&json) {
            Err(ProblemError::Structure(msg)) => assert!(msg.contains("B not nonnegative")),
            other => panic!("unexpected {other:?}"),
        }
        let json = r#"{"system": {"A": [[1, 2], [3]]}}"#;
        assert!(matches!(
            ProblemFile::from_json(json),
            Err(ProblemError::Parse(_))
        ));
    }
}
