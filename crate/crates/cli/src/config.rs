//! Experiment configuration: a JSON document with strict keys (unknown keys
//! are hard errors; silent typos are the main field-experiment hazard).

use serde::{Deserialize, Serialize};

use acs4::error::{Error, Result};
use acs4::grid::GridChart;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    /// Structure under study (most experiment kinds).
    #[serde(default)]
    pub structure: Option<StructureConfig>,
    /// Second structure for intersection experiments.
    #[serde(default)]
    pub structure_b: Option<StructureConfig>,
    /// Path scan data.
    #[serde(default)]
    pub path: Option<PathConfig>,
    /// Invariant model data.
    #[serde(default)]
    pub lie: Option<LieConfig>,
    /// Conformal factor expression for Hermitian diagnostics.
    #[serde(default)]
    pub conformal_factor: Option<String>,
    /// Log volume datum for the type-D solve.
    #[serde(default)]
    pub volume_data: Option<String>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Hminus,
    PathScan,
    Family,
    Lie,
    Hermitian,
    CySolve,
    Intersection,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub resolution: usize,
    pub periods: [f64; 4],
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            resolution: 8,
            periods: [1.0; 4],
        }
    }
}

impl GridConfig {
    pub fn chart(&self) -> Result<GridChart> {
        GridChart::new(self.resolution, self.periods)
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ToleranceConfig {
    /// Relative residual of the inner iterative solves.
    pub solver: f64,
    /// Kernel threshold relative to the largest eigenvalue.
    pub kernel: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            solver: 1e-10,
            kernel: 1e-6,
        }
    }
}

/// A structure on the torus grid, either the standard one or a member of the
/// explicit families. Function fields are expressions over `x1..x4`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case", tag = "family")]
pub enum StructureConfig {
    Standard,
    /// `omega = f omega0 + l beta + s J beta` over the flat base.
    Torus { f: String, l: String, s: String },
    /// The Lee choice with `alpha = a beta + b J beta` (constants).
    Lee {
        a: f64,
        b: f64,
        #[serde(default)]
        negative: bool,
    },
    /// The conformal choice with the same constant `alpha`.
    Conformal {
        a: f64,
        b: f64,
        #[serde(default)]
        negative: bool,
    },
    /// `omega = f omega0 + r alpha` with `alpha = a beta + b J beta`.
    Build {
        a: f64,
        b: f64,
        r: String,
        #[serde(default)]
        negative: bool,
    },
    /// `omega = f omega0 + r J alpha` with `alpha = a beta + b J beta`.
    Twisted { a: f64, b: f64, r: String },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PathConfig {
    pub samples: Vec<f64>,
    /// Expressions scaled by the path parameter.
    pub l: String,
    pub s: String,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct LieConfig {
    /// Preset name (`abelian`, `three-step`, `kodaira`) ...
    #[serde(default)]
    pub preset: Option<String>,
    /// ... or a model file with `de<k> = ...` lines.
    #[serde(default)]
    pub model_file: Option<String>,
    /// Constant family parameters for the Kodaira family formula.
    #[serde(default)]
    pub family: Option<[f64; 3]>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.chart()?;
        match self.kind {
            ExperimentKind::Hminus | ExperimentKind::Family | ExperimentKind::CySolve => {
                if self.structure.is_none() && self.kind != ExperimentKind::CySolve {
                    return Err(Error::Config(format!(
                        "kind {:?} needs a 'structure' section",
                        self.kind
                    )));
                }
            }
            ExperimentKind::PathScan => {
                if self.path.is_none() {
                    return Err(Error::Config("path-scan needs a 'path' section".into()));
                }
            }
            ExperimentKind::Lie => {
                let lie = self
                    .lie
                    .as_ref()
                    .ok_or_else(|| Error::Config("lie needs a 'lie' section".into()))?;
                if lie.preset.is_none() && lie.model_file.is_none() {
                    return Err(Error::Config(
                        "lie needs either 'preset' or 'model-file'".into(),
                    ));
                }
            }
            ExperimentKind::Intersection => {
                if self.structure.is_none() || self.structure_b.is_none() {
                    return Err(Error::Config(
                        "intersection needs 'structure' and 'structure-b'".into(),
                    ));
                }
            }
            ExperimentKind::Hermitian => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_minimal_config() {
        let cfg = ExperimentConfig::from_json(
            r#"{"kind": "hminus", "structure": {"family": "standard"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Hminus);
        assert_eq!(cfg.grid.resolution, 8);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let err = ExperimentConfig::from_json(
            r#"{"kind": "hminus", "structure": {"family": "standard"}, "resolutionn": 8}"#,
        )
        .unwrap_err();
        assert!(format!("{err}").contains("resolutionn"));
    }

    #[test]
    fn missing_sections_are_reported() {
        let err =
            ExperimentConfig::from_json(r#"{"kind": "path-scan"}"#).unwrap_err();
        assert!(format!("{err}").contains("path"));
    }
}
