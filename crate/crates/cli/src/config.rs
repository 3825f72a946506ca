//! Instance configuration files.

use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

use robustpath::path::{StepSchedule, StopRule};
use robustpath::{DistanceGenerator, FeasibleRegion, GaugeSet, Matrix, PostComposition, ProblemInstance, Vector};

/// A finite number or one of the strings `"inf"`, `"-inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bound(pub f64);

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Bound;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number, \"inf\" or \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Bound, E> {
                Ok(Bound(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Bound, E> {
                Ok(Bound(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Bound, E> {
                Ok(Bound(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Bound, E> {
                match v {
                    "inf" => Ok(Bound(f64::INFINITY)),
                    "-inf" => Ok(Bound(f64::NEG_INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    LpBall { p: f64 },
    /// `{x : xᵀ M x ≤ 1}`.
    Ellipsoid { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionConfig {
    Hyperplane {
        normal: Vec<f64>,
        offset: f64,
    },
    AffineSubspace {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    EqBox {
        #[serde(default)]
        a: Vec<Vec<f64>>,
        #[serde(default)]
        b: Vec<f64>,
        lb: Vec<Bound>,
        ub: Vec<Bound>,
    },
    NormBall {
        shape: ShapeConfig,
        level: f64,
    },
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GConfig {
    HalfSquare,
    PowerMean { s: f64 },
}

/// Instance, schedule and stopping rule of a run.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub a0: Vec<f64>,
    pub region: RegionConfig,
    /// Shape of the uncertainty set.
    pub shape: ShapeConfig,
    pub g: GConfig,
    #[serde(default)]
    pub schedule: StepSchedule,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default)]
    pub seed: u64,
}

/// Why a configuration was rejected.
#[derive(Debug)]
pub struct ConfigError {
    /// Location inside the document, `.` for the root.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn at(path: &str, e: impl fmt::Display) -> ConfigError {
    ConfigError { path: path.to_string(), message: e.to_string() }
}

/// Parses a configuration document.
pub fn parse_config(text: &str) -> Result<InstanceConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError { path, message: e.into_inner().to_string() }
    })
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path) -> Result<InstanceConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| at(".", format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn matrix(rows: &[Vec<f64>], cols: usize, path: &str) -> Result<Matrix, ConfigError> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(at(&format!("{path}[{i}]"), format!("row has {} entries, expected {cols}", r.len())));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Matrix::from_row_slice(rows.len(), cols, &flat))
}

fn shape(s: &ShapeConfig, n: usize, path: &str) -> Result<GaugeSet, ConfigError> {
    match s {
        ShapeConfig::LpBall { p } => GaugeSet::lp_ball(*p, n).map_err(|e| at(&format!("{path}.p"), e)),
        ShapeConfig::Ellipsoid { matrix: m } => {
            if m.len() != n {
                return Err(at(&format!("{path}.matrix"), format!("{} rows, expected {n}", m.len())));
            }
            GaugeSet::ellipsoid(matrix(m, n, &format!("{path}.matrix"))?).map_err(|e| at(&format!("{path}.matrix"), e))
        }
    }
}

fn bounds(v: &[Bound]) -> Vector {
    Vector::from_iterator(v.len(), v.iter().map(|b| b.0))
}

impl InstanceConfig {
    pub fn dim(&self) -> usize {
        self.a0.len()
    }

    pub fn region(&self) -> Result<FeasibleRegion, ConfigError> {
        let n = self.dim();
        let len = |path: &str, got: usize| {
            if got == n { Ok(()) } else { Err(at(path, format!("length {got}, expected {n} to match a0"))) }
        };
        let r = match &self.region {
            RegionConfig::Hyperplane { normal, offset } => {
                len("region.normal", normal.len())?;
                FeasibleRegion::hyperplane(Vector::from_column_slice(normal), *offset)
            }
            RegionConfig::AffineSubspace { a, b } => {
                if a.len() != b.len() {
                    return Err(at("region.b", format!("length {}, expected {} to match the rows of a", b.len(), a.len())));
                }
                FeasibleRegion::affine(matrix(a, n, "region.a")?, Vector::from_column_slice(b))
            }
            RegionConfig::EqBox { a, b, lb, ub } => {
                if a.len() != b.len() {
                    return Err(at("region.b", format!("length {}, expected {} to match the rows of a", b.len(), a.len())));
                }
                len("region.lb", lb.len())?;
                len("region.ub", ub.len())?;
                FeasibleRegion::eq_box(matrix(a, n, "region.a")?, Vector::from_column_slice(b), bounds(lb), bounds(ub))
            }
            RegionConfig::NormBall { shape: s, level } => FeasibleRegion::norm_ball(shape(s, n, "region.shape")?, *level),
        };
        r.map_err(|e| at("region", e))
    }

    pub fn post(&self) -> PostComposition {
        match self.g {
            GConfig::HalfSquare => PostComposition::HalfSquare,
            GConfig::PowerMean { s } => PostComposition::PowerMean { s },
        }
    }

    /// Validates the document and builds the instance it describes.
    pub fn instance(&self) -> Result<ProblemInstance, ConfigError> {
        let n = self.dim();
        if n == 0 {
            return Err(at("a0", "must be nonempty"));
        }
        let v = shape(&self.shape, n, "shape")?;
        let phi = DistanceGenerator::new(v, self.post()).map_err(|e| at("g", e))?;
        ProblemInstance::with_generator(Vector::from_column_slice(&self.a0), self.region()?, phi).map_err(|e| at("a0", e))
    }
}
