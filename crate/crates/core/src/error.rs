use thiserror::Error;

use crate::material::AshbyClass;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("material {name}: density must be positive and finite, got {density}")]
    NonPositiveDensity { name: String, density: f64 },
    #[error("material {name}: modulus must be positive and finite, got {modulus}")]
    NonPositiveModulus { name: String, modulus: f64 },
    #[error("material {name} lies outside the {class} Ashby bounds")]
    OutsideClass { name: String, class: AshbyClass },
    #[error("invalid Ashby bounds for {0}")]
    InvalidBounds(AshbyClass),
    #[error("particle density must be positive, got {0}")]
    NonPositiveSolidDensity(f64),
    #[error("bulk density {bulk} must lie in [0, {solid}]")]
    BulkExceedsSolid { bulk: f64, solid: f64 },
    #[error("porosity {0} outside [0, 1]")]
    PorosityOutOfRange(f64),
    #[error("segment geometry must be positive (length {length}, radius {radius})")]
    InvalidGeometry { length: f64, radius: f64 },
    #[error("stiffness list is empty")]
    EmptyStiffnessList,
    #[error("stiffness must be positive, got {0}")]
    NonPositiveStiffness(f64),
    #[error("a leg needs at least one segment")]
    EmptyLeg,
    #[error("damping ratio must be non-negative, got {0}")]
    InvalidDampingRatio(f64),
    #[error("invalid lumped element at index {0}")]
    InvalidLumped(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("numerical instability at t = {time:.6} s: {reason}")]
    NumericalInstability { time: f64, reason: String },
    #[error("trace is empty")]
    EmptyTrace,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid timestep {0}")]
    InvalidTimestep(f64),
    #[error("hopper fell at t = {0:.3} s")]
    Fallen(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("foot target at distance {distance:.4} m is outside leg reach {reach:.4} m")]
    Unreachable { distance: f64, reach: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BehaviorError {
    #[error("time {t} outside behavior window [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("invalid behavior: {0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("fewer than two touchdowns after the {cutoff} s cutoff")]
    NoCycles { cutoff: f64 },
    #[error("cycle {index} has {samples} samples; at least 7 are needed")]
    CycleTooShort { index: usize, samples: usize },
    #[error("no metrics to aggregate")]
    EmptyInput,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("every timestep on the ladder failed (smallest tried {smallest} s)")]
    AllUnstable { smallest: f64 },
    #[error("invalid probe: {0}")]
    InvalidProbe(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains non-finite values")]
    NonFinite,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown material '{0}'")]
    UnknownMaterial(String),
    #[error("unknown gradient '{0}'")]
    UnknownGradient(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Material(#[from] MaterialError),
}
