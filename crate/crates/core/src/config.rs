//! Experiment configuration: material catalog, model, controller, behaviors
//! and analysis settings, loaded from TOML.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::behavior::{BehaviorKind, BehaviorSpec, Terrain};
use crate::controller::ControllerGains;
use crate::dynamics::{ActuatorParams, BaseParams, ContactParams, HopperModel, MAX_SEGMENTS};
use crate::error::{ConfigError, StabilityError};
use crate::material::{build_leg, AshbyBounds, AshbyClass, LegGeometry, MaterialSpec};
use crate::sim::SimConfig;
use crate::stability::{max_stable_dt, GridConfig, HoppingTrial, ProbeConfig, ProbeResult};

/// The configuration shipped with the crate.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub controller: ControllerGains,
    pub sim: SimSection,
    pub behaviors: BehaviorSection,
    pub metrics: MetricsSection,
    pub stability: ProbeConfig,
    pub grid: GridConfig,
    pub sweeps: SweepSection,
    pub ashby: AshbySection,
    pub catalog: Vec<CatalogEntry>,
    #[serde(default)]
    pub gradients: Vec<GradientEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "leg_radius_m")]
    pub leg_radius: f64,
    #[serde(rename = "leg_length_m")]
    pub leg_length: f64,
    /// Segments per mono-material leg.
    pub segments: usize,
    /// Axial damping ratio ζ of every spring element.
    pub damping_ratio: f64,
    pub gravity: f64,
    pub base: BaseParams,
    pub actuator: ActuatorParams,
    pub contact: ContactParams,
}

/// Integration timestep: a fixed value or derived from the measured
/// maximum stable step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtSetting {
    Fixed(f64),
    Keyword(DtKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtKeyword {
    Auto,
}

impl std::str::FromStr for DtSetting {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(DtSetting::Keyword(DtKeyword::Auto));
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(DtSetting::Fixed(v)),
            _ => Err(ConfigError::Invalid(format!("dt must be a positive number or 'auto', got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: DtSetting,
    /// Fraction of the measured maximum stable step used under `auto`.
    pub dt_safety_factor: f64,
    /// Upper bound on the `auto` step; keeps several integration steps per
    /// control update.
    pub dt_auto_max: f64,
    pub sample_period: f64,
    pub initial_height: f64,
    pub initial_velocity: [f64; 3],
    pub max_tilt: f64,
    pub min_height: f64,
    /// Every n-th trace sample is written to trace.csv.
    pub trace_stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorSection {
    pub duration: f64,
    pub transient: f64,
    pub forward_speed: f64,
    pub ramp_speed: f64,
    pub ramp_grade: f64,
    pub circle_radius: f64,
    pub circle_speed: f64,
}

impl BehaviorSection {
    pub fn spec(&self, kind: BehaviorKind) -> BehaviorSpec {
        let (speed, grade, radius) = match kind {
            BehaviorKind::Static => (0.0, 0.0, self.circle_radius),
            BehaviorKind::Forward => (self.forward_speed, 0.0, self.circle_radius),
            BehaviorKind::Ramp => (self.ramp_speed, self.ramp_grade, self.circle_radius),
            BehaviorKind::Circular => (self.circle_speed, 0.0, self.circle_radius),
        };
        BehaviorSpec { kind, speed, grade, radius, duration: self.duration, transient: self.transient }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub jerk_cutoff_hz: f64,
    /// Significance level for comparisons.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(rename = "density_values_kg_m3")]
    pub density_values: Vec<f64>,
    #[serde(rename = "density_sweep_modulus_pa")]
    pub density_fixed_modulus: f64,
    #[serde(rename = "modulus_values_pa")]
    pub modulus_values: Vec<f64>,
    #[serde(rename = "modulus_sweep_density_kg_m3")]
    pub modulus_fixed_density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AshbySection {
    pub metal_ceramic: AshbyBounds,
    pub polymer_natural: AshbyBounds,
}

impl AshbySection {
    pub fn bounds(&self, class: AshbyClass) -> &AshbyBounds {
        match class {
            AshbyClass::MetalCeramic => &self.metal_ceramic,
            AshbyClass::PolymerNatural => &self.polymer_natural,
        }
    }

    /// Does any class contain the point?
    pub fn contains(&self, density: f64, modulus: f64) -> bool {
        self.metal_ceramic.contains(density, modulus) || self.polymer_natural.contains(density, modulus)
    }

    /// Bounding box of the union of both classes.
    pub fn union_box(&self) -> (f64, f64, f64, f64) {
        let (a, b) = (&self.metal_ceramic, &self.polymer_natural);
        (
            a.density_min.min(b.density_min),
            a.density_max.max(b.density_max),
            a.modulus_min.min(b.modulus_min),
            a.modulus_max.max(b.modulus_max),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogEntry {
    pub name: String,
    #[serde(rename = "density_kg_m3")]
    pub density: f64,
    /// Omitted for the rigid baseline.
    #[serde(rename = "modulus_pa")]
    pub modulus: Option<f64>,
    pub class: Option<AshbyClass>,
}

/// A segment of a graded leg: a catalog name or an inline material point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SegmentRef {
    Named(String),
    Inline {
        #[serde(rename = "density_kg_m3")]
        density: f64,
        #[serde(rename = "modulus_pa")]
        modulus: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientEntry {
    pub name: String,
    /// Hip to foot.
    pub segments: Vec<SegmentRef>,
}

/// A named leg: one material per segment, hip to foot.
#[derive(Debug, Clone, PartialEq)]
pub struct LegDesign {
    pub name: String,
    pub materials: Vec<MaterialSpec>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn default_config() -> Self {
        Self::from_toml(DEFAULT_CONFIG).expect("bundled default config is valid")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        let m = &self.model;
        if !(m.leg_radius > 0.0 && m.leg_length > 0.0) {
            return invalid("leg radius and length must be positive".into());
        }
        if m.segments == 0 || m.segments > MAX_SEGMENTS {
            return invalid(format!("segments must be in 1..={MAX_SEGMENTS}"));
        }
        self.controller.validate().map_err(ConfigError::Invalid)?;
        let s = &self.sim;
        if let DtSetting::Fixed(dt) = s.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return invalid(format!("dt must be positive, got {dt}"));
            }
        }
        if !(s.dt_safety_factor > 0.0 && s.dt_safety_factor <= 1.0) {
            return invalid("dt_safety_factor must lie in (0, 1]".into());
        }
        if !(s.dt_auto_max > 0.0 && s.dt_auto_max.is_finite()) {
            return invalid("dt_auto_max must be positive".into());
        }
        if !(s.sample_period > 0.0 && s.initial_height > 0.0) || s.trace_stride == 0 {
            return invalid("sample period, initial height and trace stride must be positive".into());
        }
        for kind in BehaviorKind::ALL {
            self.behaviors.spec(kind).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.stability.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let g = &self.grid;
        if g.resolution == 0 || !(g.density_min > 0.0 && g.density_max >= g.density_min)
            || !(g.modulus_min > 0.0 && g.modulus_max >= g.modulus_min)
        {
            return invalid("grid ranges must be positive and ordered".into());
        }
        let (dlo, dhi, elo, ehi) = self.ashby.union_box();
        if g.density_min < dlo || g.density_max > dhi || g.modulus_min < elo || g.modulus_max > ehi {
            return invalid("grid lies outside the Ashby bounds".into());
        }
        let mut names = BTreeSet::new();
        for entry in &self.catalog {
            if !names.insert(entry.name.as_str()) {
                return invalid(format!("duplicate catalog entry '{}'", entry.name));
            }
            self.material(&entry.name)?;
        }
        for gradient in &self.gradients {
            self.gradient(&gradient.name)?;
        }
        for &rho in &self.sweeps.density_values {
            if !self.ashby.contains(rho, self.sweeps.density_fixed_modulus) {
                return invalid(format!("density sweep point {rho} lies outside the Ashby bounds"));
            }
        }
        for &e in &self.sweeps.modulus_values {
            if !self.ashby.contains(self.sweeps.modulus_fixed_density, e) {
                return invalid(format!("modulus sweep point {e} lies outside the Ashby bounds"));
            }
        }
        Ok(())
    }

    /// Catalog material, checked against its Ashby class.
    pub fn material(&self, name: &str) -> Result<MaterialSpec, ConfigError> {
        let entry = self
            .catalog
            .iter()
            .find(|e| e.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| ConfigError::UnknownMaterial(name.to_string()))?;
        let spec = match entry.modulus {
            None => MaterialSpec::rigid(&entry.name, entry.density)?,
            Some(e) => MaterialSpec::new(&entry.name, entry.density, e)?,
        };
        Ok(match entry.class {
            Some(class) => spec.with_class(self.ashby.bounds(class))?,
            None => spec,
        })
    }

    pub fn material_names(&self) -> Vec<String> {
        self.catalog.iter().map(|e| e.name.clone()).collect()
    }

    /// Leg made of one catalog material. Rigid materials form one link;
    /// elastic ones are split into the configured number of segments.
    pub fn mono_design(&self, name: &str) -> Result<LegDesign, ConfigError> {
        let spec = self.material(name)?;
        let count = if spec.is_rigid() { 1 } else { self.model.segments };
        Ok(LegDesign { name: spec.name.clone(), materials: vec![spec; count] })
    }

    /// Leg from a material point that need not be in the catalog.
    pub fn point_design(&self, name: &str, density: f64, modulus: f64) -> Result<LegDesign, ConfigError> {
        let spec = MaterialSpec::new(name, density, modulus)?;
        Ok(LegDesign { name: name.to_string(), materials: vec![spec; self.model.segments] })
    }

    pub fn gradient(&self, name: &str) -> Result<LegDesign, ConfigError> {
        let entry = self
            .gradients
            .iter()
            .find(|g| g.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| ConfigError::UnknownGradient(name.to_string()))?;
        if entry.segments.is_empty() || entry.segments.len() > MAX_SEGMENTS {
            return Err(ConfigError::Invalid(format!("gradient '{name}' needs 1..={MAX_SEGMENTS} segments")));
        }
        let materials = entry
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                SegmentRef::Named(n) => self.material(n),
                // Inline points are hypothetical property combinations and
                // are not held to the Ashby classes.
                SegmentRef::Inline { density, modulus } => {
                    Ok(MaterialSpec::new(format!("{}#{i}", entry.name), *density, *modulus)?)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LegDesign { name: entry.name.clone(), materials })
    }

    /// Catalog material or gradient by name.
    pub fn design(&self, name: &str) -> Result<LegDesign, ConfigError> {
        match self.mono_design(name) {
            Err(ConfigError::UnknownMaterial(_)) => self.gradient(name),
            other => other,
        }
    }

    /// Hopper model for `design` on `terrain`.
    pub fn model(&self, design: &LegDesign, terrain: Terrain) -> Result<HopperModel, ConfigError> {
        let m = &self.model;
        let geometry = LegGeometry { radius: m.leg_radius, total_length: m.leg_length };
        let leg = build_leg(&design.materials, geometry, m.damping_ratio)?;
        let model = HopperModel {
            leg,
            base: m.base,
            actuator: m.actuator,
            gravity: m.gravity,
            contact: m.contact,
            terrain,
            anchored: false,
        };
        model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(model)
    }

    /// Simulation settings at timestep `dt`.
    pub fn sim_config(&self, dt: f64) -> SimConfig {
        let s = &self.sim;
        SimConfig {
            dt,
            sample_period: s.sample_period,
            initial_height: s.initial_height,
            initial_velocity: s.initial_velocity,
            max_tilt: s.max_tilt,
            min_height: s.min_height,
        }
    }

    /// Timestep used under the `auto` policy for a measured maximum stable
    /// step.
    pub fn auto_dt(&self, dt_max: f64) -> f64 {
        (self.sim.dt_safety_factor * dt_max).min(self.sim.dt_auto_max)
    }

    /// Maximum stable timestep of `design` under the standardized static
    /// hopping trial.
    pub fn max_stable_dt(&self, design: &LegDesign) -> Result<ProbeResult, StabilityError> {
        let behavior = self.behaviors.spec(BehaviorKind::Static);
        let model = self
            .model(design, behavior.terrain())
            .map_err(|e| StabilityError::InvalidProbe(e.to_string()))?;
        let trial = HoppingTrial {
            model: &model,
            gains: &self.controller,
            behavior,
            sim: self.sim_config(self.sim.dt_auto_max),
            duration: self.stability.trial_duration,
            apex_limit: self.stability.apex_limit_factor * self.controller.h_des,
        };
        max_stable_dt(&trial, &self.stability)
    }

    /// SHA-256 of the canonical JSON encoding of the resolved config.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_loads() {
        let cfg = Config::default_config();
        for name in ["MD", "PVC", "Al", "Ti", "SS"] {
            cfg.material(name).unwrap();
        }
        assert!(cfg.material("MD").unwrap().is_rigid());
        assert_eq!(cfg.mono_design("MD").unwrap().materials.len(), 1);
        assert_eq!(cfg.mono_design("SS").unwrap().materials.len(), cfg.model.segments);
        for g in ["rho-inc", "rho-dec", "PVC-Ti-SS", "SS-Ti-PVC"] {
            assert_eq!(cfg.gradient(g).unwrap().materials.len(), 3);
        }
        assert_eq!(cfg.fingerprint(), Config::default_config().fingerprint());
        assert_eq!(cfg.fingerprint().len(), 64);
    }

    #[test]
    fn rejects_out_of_class_material() {
        let text = DEFAULT_CONFIG.replace("density_kg_m3 = 1390.0", "density_kg_m3 = 9000.0");
        assert!(matches!(Config::from_toml(&text), Err(ConfigError::Material(_))));
    }

    #[test]
    fn fingerprint_tracks_changes() {
        let mut cfg = Config::default_config();
        let before = cfg.fingerprint();
        cfg.controller.k1 += 0.01;
        assert_ne!(before, cfg.fingerprint());
    }

    #[test]
    fn dt_setting_parses() {
        assert_eq!("auto".parse::<DtSetting>().unwrap(), DtSetting::Keyword(DtKeyword::Auto));
        assert_eq!("2e-4".parse::<DtSetting>().unwrap(), DtSetting::Fixed(2e-4));
        assert!("-1".parse::<DtSetting>().is_err());
    }
}
