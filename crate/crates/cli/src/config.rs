//! Run configuration: one JSON document, unknown keys rejected.

use std::fs;
use std::path::{Path, PathBuf};

use qss_core::functional::ConstraintVariant;
use qss_core::io::read_any;
use qss_core::potential::TabulatedPotential;
use qss_core::{Grid, Params, PotentialModel, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    Constant {
        value: f64,
    },
    /// `a_inf − depth/(1 + |x|²/width²)`.
    Lorentzian {
        a_inf: f64,
        depth: f64,
        width: f64,
    },
    /// `a0 + curvature·|x|²`.
    Quadratic {
        a0: f64,
        curvature: f64,
    },
    Tabulated {
        table: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gradient: Option<Vec<PathBuf>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<f64>,
    },
}

impl Default for PotentialSpec {
    fn default() -> Self {
        PotentialSpec::Constant { value: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "L")]
    pub half_extent: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldFormat {
    #[default]
    Text,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub field_format: FieldFormat,
    /// Sign threshold of the PGM slices, relative to `max|f|`.
    pub pgm_threshold: f64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { field_format: FieldFormat::Text, pgm_threshold: qss_core::analysis::DEFAULT_NODAL_THRESHOLD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberScanSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
}

impl Default for FiberScanSpec {
    fn default() -> Self {
        FiberScanSpec { t_min: 0.1, t_max: 10.0, count: 81 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSpec {
    pub count: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for GradcheckSpec {
    fn default() -> Self {
        GradcheckSpec { count: 20, seed: 0, tolerance: 1e-5 }
    }
}

fn one() -> usize {
    1
}

fn nine() -> usize {
    9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: Params,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub grid: GridSpec,
    /// Symmetry order lives in `solver.s`.
    #[serde(default)]
    pub solver: SolverConfig,
    /// Seed widths `[w_u, w_v]` for a multistart solve; absent means a
    /// single solve from `solver.seed_profile`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multistart: Option<Vec<[f64; 2]>>,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub constraint_variant: ConstraintVariant,
    /// Sample points per axis for the potential hypotheses.
    #[serde(default = "nine")]
    pub potential_samples: usize,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub fiber_scan: FiberScanSpec,
    #[serde(default)]
    pub gradcheck: GradcheckSpec,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        cfg.anchor_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Makes table paths absolute so that the embedded copy stays usable.
    fn anchor_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                let joined = base.join(&*p);
                *p = fs::canonicalize(&joined).unwrap_or(joined);
            }
        };
        if let PotentialSpec::Tabulated { table, gradient, .. } = &mut self.potential {
            fix(table);
            gradient.iter_mut().flatten().for_each(fix);
        }
    }

    /// Checks everything that does not need the potential table.
    pub fn validate(&self) -> Result<Grid, CliError> {
        self.params.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.solver.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        if self.workers == 0 {
            return Err(CliError::Validation("workers must be at least 1".into()));
        }
        if let Some(seeds) = &self.multistart {
            if seeds.is_empty() || seeds.iter().flatten().any(|w| !(w.is_finite() && *w > 0.0)) {
                return Err(CliError::Validation("multistart needs at least one pair of positive seed widths".into()));
            }
        }
        let fs = self.fiber_scan;
        if !(fs.t_min > 0.0 && fs.t_max > fs.t_min && fs.count >= 2) {
            return Err(CliError::Validation("fiber_scan needs 0 < t_min < t_max and count ≥ 2".into()));
        }
        if !(self.output.pgm_threshold >= 0.0) {
            return Err(CliError::Validation("output.pgm_threshold must be non-negative".into()));
        }
        Grid::new(self.params.n_dims, self.grid.half_extent, self.grid.n)
            .map_err(|e| CliError::Validation(format!("grid: {e}")))
    }

    pub fn potential_model(&self) -> Result<PotentialModel, CliError> {
        let bad = |e: qss_core::PotentialError| CliError::Validation(format!("potential: {e}"));
        match &self.potential {
            PotentialSpec::Constant { value } => Ok(PotentialModel::constant(*value)),
            PotentialSpec::Lorentzian { a_inf, depth, width } => {
                PotentialModel::lorentzian(*a_inf, *depth, *width).map_err(bad)
            }
            PotentialSpec::Quadratic { a0, curvature } => Ok(PotentialModel::quadratic(*a0, *curvature)),
            PotentialSpec::Tabulated { table, gradient, limit } => {
                let (field, _) = read_any(table)?;
                let gradient = gradient
                    .as_ref()
                    .map(|paths| paths.iter().map(|p| read_any(p).map(|(f, _)| f)).collect::<Result<Vec<_>, _>>())
                    .transpose()?;
                let tab = TabulatedPotential::new(field, gradient).map_err(bad)?;
                Ok(PotentialModel::tabulated(tab, *limit))
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
