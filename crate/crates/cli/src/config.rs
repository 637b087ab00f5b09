use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use livsic_core::livsic::RecoveryMethod;
use livsic_core::vexp::MIN_RESOLUTION;
use livsic_core::{BasisSpec, FunctionRep, MapModel, MapSpec, Tolerances, WeightVariant};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub struct ConfigInvalid(pub String);

impl fmt::Display for ConfigInvalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl std::error::Error for ConfigInvalid {}

/// Symmetric `t` grid, `points` values on `[−t_max, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TGrid {
    pub t_max: f64,
    pub points: usize,
}

impl Default for TGrid {
    fn default() -> Self {
        Self { t_max: 0.5, points: 21 }
    }
}

/// Built-in name, or a list of `[k, a, b]` terms of `Σ a cos 2πkx + b sin 2πkx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    Named(String),
    Coefficients { coefficients: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, Copy)]
enum Observable {
    Cos1,
    Cos2MinusCos1,
    Indicator(f64, f64),
    Constant(f64),
}

impl Observable {
    fn eval(self, x: f64) -> f64 {
        match self {
            Self::Cos1 => (2.0 * PI * x).cos(),
            Self::Cos2MinusCos1 => (4.0 * PI * x).cos() - (2.0 * PI * x).cos(),
            Self::Indicator(a, b) => f64::from(u8::from(a <= x && x < b)),
            Self::Constant(c) => c,
        }
    }
}

fn parse_named(name: &str) -> Result<Observable, ConfigInvalid> {
    let bad = || ConfigInvalid(format!("field `observable`: unknown observable {name:?}"));
    match name {
        "cos1" => return Ok(Observable::Cos1),
        "cos2-minus-cos1" => return Ok(Observable::Cos2MinusCos1),
        _ => {}
    }
    if let Some(c) = name.strip_prefix("constant ") {
        return c.trim().parse().map(Observable::Constant).map_err(|_| bad());
    }
    if let Some(rest) = name.strip_prefix("indicator-") {
        let (a, b) = rest.split_once('-').ok_or_else(bad)?;
        let (a, b): (f64, f64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
        if !(0.0 <= a && a < b && b <= 1.0) {
            return Err(ConfigInvalid(format!(
                "field `observable`: indicator needs 0 <= a < b <= 1, got {a}, {b}"
            )));
        }
        return Ok(Observable::Indicator(a, b));
    }
    Err(bad())
}

impl ObservableSpec {
    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        match self {
            Self::Named(n) => parse_named(n).map(|_| ()),
            Self::Coefficients { coefficients } => {
                if coefficients.iter().flatten().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(ConfigInvalid(
                        "field `observable.coefficients`: non-finite entry".into(),
                    ))
                }
            }
        }
    }

    /// Projection onto `basis`; Ulam cells receive cell averages.
    pub fn project(&self, basis: BasisSpec) -> Result<FunctionRep, ConfigInvalid> {
        match self {
            Self::Named(n) => {
                let obs = parse_named(n)?;
                Ok(FunctionRep::project_real_averaged(basis, move |x| obs.eval(x), 32))
            }
            Self::Coefficients { coefficients } => {
                let terms = coefficients.clone();
                let f = move |x: f64| {
                    terms
                        .iter()
                        .map(|[k, a, b]| a * (2.0 * PI * k * x).cos() + b * (2.0 * PI * k * x).sin())
                        .sum::<f64>()
                };
                Ok(FunctionRep::project_real_averaged(basis, f, 32))
            }
        }
    }
}

fn default_basis() -> BasisSpec {
    BasisSpec::Fourier(32)
}
fn default_n_max() -> usize {
    10
}
fn default_s() -> f64 {
    2.0
}
fn default_n() -> usize {
    2
}
fn default_resolution() -> [usize; 2] {
    [256, 256]
}
fn default_samples() -> usize {
    512
}
fn default_method() -> RecoveryMethod {
    RecoveryMethod::Resolvent
}
fn default_variant() -> WeightVariant {
    WeightVariant::ReciprocalPullback
}

/// Experiment description; every default is filled in before the config is
/// echoed into the provenance block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub map: Option<MapSpec>,
    #[serde(default = "default_basis")]
    pub basis: BasisSpec,
    #[serde(default)]
    pub observable: Option<ObservableSpec>,
    #[serde(default)]
    pub t_grid: TGrid,
    /// Verdict thresholds; basis-dependent defaults when absent.
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_s")]
    pub s: f64,
    /// Word length for the Tsujii scan, upper bound for single-map certificates.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub m_range: Option<[u32; 2]>,
    /// `[x, angle]` grid sizes for the expansion criterion.
    #[serde(default = "default_resolution")]
    pub resolution: [usize; 2],
    #[serde(default = "default_method")]
    pub method: RecoveryMethod,
    #[serde(default = "default_variant")]
    pub variant: WeightVariant,
    /// Sample count for plot-ready function tables.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub criteria: Option<Vec<u8>>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigInvalid> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigInvalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigInvalid> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        if cfg.tolerances.is_none() {
            cfg.tolerances = Some(Tolerances::for_basis(cfg.basis));
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigInvalid> {
        let field = |name: &str, msg: String| Err(ConfigInvalid(format!("field `{name}`: {msg}")));
        match self.basis {
            BasisSpec::Fourier(0) | BasisSpec::Ulam(0) => return field("basis.size", "must be positive".into()),
            _ => {}
        }
        if let Some(map) = &self.map {
            MapModel::from_spec(map).map_err(|e| ConfigInvalid(format!("field `map`: {e}")))?;
        }
        if let Some(obs) = &self.observable {
            obs.validate()?;
        }
        if !(self.t_grid.t_max > 0.0 && self.t_grid.t_max.is_finite()) || self.t_grid.points == 0 {
            return field("t_grid", "need t_max > 0 and points >= 1".into());
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return field("s", format!("must be positive, got {}", self.s));
        }
        if self.n == 0 {
            return field("n", "must be at least 1".into());
        }
        if let Some([lo, hi]) = self.m_range {
            if lo < 2 || hi < lo {
                return field("m_range", format!("need 2 <= lo <= hi, got [{lo}, {hi}]"));
            }
        }
        if self.resolution.iter().any(|&r| r < MIN_RESOLUTION) {
            return field("resolution", format!("grid sizes must be at least {MIN_RESOLUTION}"));
        }
        if self.samples == 0 {
            return field("samples", "must be positive".into());
        }
        if let Some(ids) = &self.criteria {
            if let Some(bad) = ids.iter().find(|i| !(1..=11).contains(*i)) {
                return field("criteria", format!("no criterion {bad}"));
            }
        }
        Ok(())
    }

    pub fn map(&self) -> Result<MapModel, ConfigInvalid> {
        let spec = self
            .map
            .as_ref()
            .ok_or_else(|| ConfigInvalid("field `map` is required".into()))?;
        MapModel::from_spec(spec).map_err(|e| ConfigInvalid(format!("field `map`: {e}")))
    }

    pub fn observable(&self) -> Result<FunctionRep, ConfigInvalid> {
        self.observable
            .as_ref()
            .ok_or_else(|| ConfigInvalid("field `observable` is required".into()))?
            .project(self.basis)
    }

    pub fn t_values(&self) -> Vec<f64> {
        livsic_core::livsic::symmetric_grid(self.t_grid.t_max, self.t_grid.points)
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances.unwrap_or_else(|| Tolerances::for_basis(self.basis))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::parse(r#"{"map": {"type": "circle", "k": 2, "eps": 0.0}}"#).unwrap();
        assert_eq!(cfg.basis, BasisSpec::Fourier(32));
        assert_eq!(cfg.tolerances, Some(Tolerances::FOURIER));
        assert_eq!(cfg.t_grid.points, 21);
    }

    #[test]
    fn unknown_field_is_rejected_with_location() {
        let err = ExperimentConfig::parse("{\n  \"mapp\": 1\n}").unwrap_err();
        assert!(err.0.contains("mapp") && err.0.contains("line 2"), "{err}");
    }

    #[test]
    fn named_observables() {
        assert!(parse_named("cos1").is_ok());
        assert!(parse_named("constant 0.25").is_ok());
        assert!(matches!(parse_named("indicator-0.2-0.5"), Ok(Observable::Indicator(a, b)) if a == 0.2 && b == 0.5));
        assert!(parse_named("indicator-0.5-0.2").is_err());
        assert!(parse_named("sin7").is_err());
    }

    #[test]
    fn coefficient_list_projects() {
        let spec: ObservableSpec = serde_json::from_str(r#"{"coefficients": [[1, 1.0, 0.0]]}"#).unwrap();
        let f = spec.project(BasisSpec::Fourier(4)).unwrap();
        assert!((f.eval(0.0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_m_range() {
        let err = ExperimentConfig::parse(r#"{"m_range": [5, 3]}"#).unwrap_err();
        assert!(err.0.contains("m_range"));
    }
}
