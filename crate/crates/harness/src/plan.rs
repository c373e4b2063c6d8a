//! Experiment plans: which designs run on which behaviors, with what
//! timestep, and which pairs are compared.

use std::path::Path;

use hopper_core::behavior::BehaviorKind;
use hopper_core::config::{Config, DtSetting, LegDesign};
use hopper_core::material::MaterialSpec;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// Rigid-leg reference every suite compares against.
pub const BASELINE: &str = "MD";
/// Mono-material reference for gradient designs.
pub const GRADIENT_REFERENCE: &str = "SS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Single,
    MonoMaterial,
    DensitySweep,
    ModulusSweep,
    Gradient,
    StabilityHeatmap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DtPolicy {
    Fixed { dt_s: f64 },
    /// `min(safety_factor · dt_max, cap_s)` per design.
    Auto { safety_factor: f64, cap_s: f64 },
}

impl DtPolicy {
    pub fn from_config(cfg: &Config) -> Self {
        match cfg.sim.dt {
            DtSetting::Fixed(dt_s) => DtPolicy::Fixed { dt_s },
            DtSetting::Keyword(_) => DtPolicy::Auto { safety_factor: cfg.sim.dt_safety_factor, cap_s: cfg.sim.dt_auto_max },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub material: String,
    pub density_kg_m3: f64,
    /// Absent for rigid segments.
    pub modulus_pa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEntry {
    pub name: String,
    /// Hip to foot.
    pub segments: Vec<SegmentEntry>,
    /// Timestep the design's runs use; `None` until resolved or when no
    /// stable step was found.
    pub dt_s: Option<f64>,
    pub dt_max_s: Option<f64>,
    pub dt_max_censored: Option<bool>,
}

impl DesignEntry {
    pub fn from_design(design: &LegDesign) -> Self {
        Self {
            name: design.name.clone(),
            segments: design
                .materials
                .iter()
                .map(|m| SegmentEntry {
                    material: m.name.clone(),
                    density_kg_m3: m.density,
                    modulus_pa: m.modulus.is_finite().then_some(m.modulus),
                })
                .collect(),
            dt_s: None,
            dt_max_s: None,
            dt_max_censored: None,
        }
    }

    pub fn to_design(&self) -> Result<LegDesign, HarnessError> {
        let materials = self
            .segments
            .iter()
            .map(|s| match s.modulus_pa {
                Some(e) => MaterialSpec::new(&s.material, s.density_kg_m3, e),
                None => MaterialSpec::rigid(&s.material, s.density_kg_m3),
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::Plan(format!("design {}: {e}", self.name)))?;
        Ok(LegDesign { name: self.name.clone(), materials })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub design: String,
    pub baseline: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    /// `density_kg_m3` or `modulus_pa`.
    pub property: String,
    pub values: Vec<f64>,
    /// The property held constant and its value.
    pub fixed_property: String,
    pub fixed_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    pub designs: Vec<DesignEntry>,
    pub behaviors: Vec<BehaviorKind>,
    pub dt_policy: DtPolicy,
    pub duration_s: f64,
    pub output_dir: String,
    pub config_fingerprint: String,
    pub seedless: bool,
    pub comparisons: Vec<ComparisonSpec>,
    pub sweep: Option<SweepAxis>,
}

/// One design on one behavior.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedRun {
    pub design: usize,
    pub behavior: BehaviorKind,
    /// Relative to the plan directory.
    pub dir: String,
}

pub const PLAN_FILE: &str = "plan.json";

impl ExperimentPlan {
    fn new(cfg: &Config, kind: ExperimentKind, designs: Vec<LegDesign>, behaviors: &[BehaviorKind], out: &Path) -> Self {
        let mut entries: Vec<DesignEntry> = Vec::new();
        for d in &designs {
            if !entries.iter().any(|e| e.name == d.name) {
                entries.push(DesignEntry::from_design(d));
            }
        }
        let mut behaviors = behaviors.to_vec();
        if behaviors.is_empty() {
            behaviors = BehaviorKind::ALL.to_vec();
        }
        behaviors.dedup();
        Self {
            kind,
            designs: entries,
            behaviors,
            dt_policy: DtPolicy::from_config(cfg),
            duration_s: cfg.behaviors.duration,
            output_dir: out.display().to_string(),
            config_fingerprint: cfg.fingerprint(),
            seedless: false,
            comparisons: Vec::new(),
            sweep: None,
        }
    }

    /// One design on one behavior, no comparisons.
    pub fn single(cfg: &Config, design: &str, behavior: BehaviorKind, out: &Path) -> Result<Self, HarnessError> {
        let d = cfg.design(design)?;
        Ok(Self::new(cfg, ExperimentKind::Single, vec![d], &[behavior], out))
    }

    /// Catalog materials (all of them when `materials` is empty), each
    /// compared against the rigid baseline.
    pub fn mono(cfg: &Config, materials: &[String], behaviors: &[BehaviorKind], out: &Path) -> Result<Self, HarnessError> {
        let names = if materials.is_empty() { cfg.material_names() } else { materials.to_vec() };
        let mut designs = vec![cfg.mono_design(BASELINE)?];
        for n in &names {
            designs.push(cfg.mono_design(n)?);
        }
        let mut plan = Self::new(cfg, ExperimentKind::MonoMaterial, designs, behaviors, out);
        plan.comparisons = plan.against(BASELINE, |_| true);
        Ok(plan)
    }

    /// Gradients (all configured ones when `gradients` is empty) compared
    /// against the rigid baseline, the mono reference and each other.
    /// Names may also be catalog materials.
    pub fn gradient(cfg: &Config, gradients: &[String], behaviors: &[BehaviorKind], out: &Path) -> Result<Self, HarnessError> {
        let names: Vec<String> =
            if gradients.is_empty() { cfg.gradients.iter().map(|g| g.name.clone()).collect() } else { gradients.to_vec() };
        let mut designs = vec![cfg.mono_design(BASELINE)?, cfg.mono_design(GRADIENT_REFERENCE)?];
        let mut own = Vec::new();
        for n in &names {
            let d = cfg.design(n)?;
            own.push(d.name.clone());
            designs.push(d);
        }
        let mut plan = Self::new(cfg, ExperimentKind::Gradient, designs, behaviors, out);
        let mut comparisons = plan.against(BASELINE, |_| true);
        comparisons.extend(plan.against(GRADIENT_REFERENCE, |n| own.iter().any(|o| o == n)));
        let graded: Vec<&String> = own.iter().filter(|n| n.as_str() != BASELINE && n.as_str() != GRADIENT_REFERENCE).collect();
        for (i, a) in graded.iter().enumerate() {
            for b in &graded[i + 1..] {
                if a != b {
                    comparisons.push(ComparisonSpec { design: (*a).clone(), baseline: (*b).clone() });
                }
            }
        }
        plan.comparisons = comparisons;
        Ok(plan)
    }

    /// Density sweep at the configured fixed modulus.
    pub fn density_sweep(cfg: &Config, values: &[f64], behaviors: &[BehaviorKind], out: &Path) -> Result<Self, HarnessError> {
        let values = if values.is_empty() { cfg.sweeps.density_values.clone() } else { values.to_vec() };
        let e = cfg.sweeps.density_fixed_modulus;
        let points: Vec<(f64, f64)> = values.iter().map(|&rho| (rho, e)).collect();
        let mut plan = Self::sweep(cfg, ExperimentKind::DensitySweep, &points, behaviors, out)?;
        plan.sweep = Some(SweepAxis {
            property: "density_kg_m3".into(),
            values,
            fixed_property: "modulus_pa".into(),
            fixed_value: e,
        });
        Ok(plan)
    }

    /// Modulus sweep at the configured fixed density.
    pub fn modulus_sweep(cfg: &Config, values: &[f64], behaviors: &[BehaviorKind], out: &Path) -> Result<Self, HarnessError> {
        let values = if values.is_empty() { cfg.sweeps.modulus_values.clone() } else { values.to_vec() };
        let rho = cfg.sweeps.modulus_fixed_density;
        let points: Vec<(f64, f64)> = values.iter().map(|&e| (rho, e)).collect();
        let mut plan = Self::sweep(cfg, ExperimentKind::ModulusSweep, &points, behaviors, out)?;
        plan.sweep = Some(SweepAxis {
            property: "modulus_pa".into(),
            values,
            fixed_property: "density_kg_m3".into(),
            fixed_value: rho,
        });
        Ok(plan)
    }

    fn sweep(
        cfg: &Config,
        kind: ExperimentKind,
        points: &[(f64, f64)],
        behaviors: &[BehaviorKind],
        out: &Path,
    ) -> Result<Self, HarnessError> {
        let (d_lo, d_hi, e_lo, e_hi) = cfg.ashby.union_box();
        let mut designs = Vec::new();
        for &(rho, e) in points {
            if !(d_lo..=d_hi).contains(&rho) || !(e_lo..=e_hi).contains(&e) {
                return Err(HarnessError::Plan(format!(
                    "sweep point ({rho} kg/m³, {e} Pa) lies outside the material bounds"
                )));
            }
            designs.push(cfg.point_design(&point_name(rho, e), rho, e)?);
        }
        let mut plan = Self::new(cfg, kind, designs, behaviors, out);
        plan.comparisons = plan
            .designs
            .windows(2)
            .map(|w| ComparisonSpec { design: w[1].name.clone(), baseline: w[0].name.clone() })
            .collect();
        Ok(plan)
    }

    fn against(&self, baseline: &str, include: impl Fn(&str) -> bool) -> Vec<ComparisonSpec> {
        self.designs
            .iter()
            .filter(|d| d.name != baseline && include(&d.name))
            .map(|d| ComparisonSpec { design: d.name.clone(), baseline: baseline.to_string() })
            .collect()
    }

    pub fn design_index(&self, name: &str) -> Option<usize> {
        self.designs.iter().position(|d| d.name == name)
    }

    /// Design-major order.
    pub fn runs(&self) -> Vec<PlannedRun> {
        self.designs
            .iter()
            .enumerate()
            .flat_map(|(i, d)| {
                self.behaviors.iter().map(move |&b| PlannedRun { design: i, behavior: b, dir: run_dir(&d.name, b) })
            })
            .collect()
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        let path = dir.join(PLAN_FILE);
        let text = serde_json::to_string_pretty(self).map_err(HarnessError::json(&path))?;
        std::fs::write(&path, text + "\n").map_err(HarnessError::io(&path))
    }

    pub fn read(dir: &Path) -> Result<Self, HarnessError> {
        let path = dir.join(PLAN_FILE);
        let text = std::fs::read_to_string(&path).map_err(HarnessError::io(&path))?;
        serde_json::from_str(&text).map_err(HarnessError::json(&path))
    }
}

/// Name of a sweep design, e.g. `rho2000_E2e11`.
pub fn point_name(density: f64, modulus: f64) -> String {
    format!("rho{density}_E{modulus:e}")
}

pub fn run_dir(design: &str, behavior: BehaviorKind) -> String {
    let safe: String = design
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '+') { c } else { '_' })
        .collect();
    format!("runs/{safe}_{behavior}")
}
