//! Material descriptions and their mapping onto lumped spring-chain legs.
//!
//! A material is a `(density, modulus)` point. A leg link is split into
//! segments; each segment becomes one spring-mass element whose mass comes
//! from `m = ρ·πr²·L` and whose axial stiffness comes from the cantilever
//! relation `k = 3EI/L³` with `I = πr⁴/4`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::MaterialError;

/// Ashby material family used to bound the experiment space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AshbyClass {
    MetalCeramic,
    PolymerNatural,
}

impl fmt::Display for AshbyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AshbyClass::MetalCeramic => f.write_str("metal_ceramic"),
            AshbyClass::PolymerNatural => f.write_str("polymer_natural"),
        }
    }
}

/// Closed density/modulus box of one Ashby class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AshbyBounds {
    pub class: AshbyClass,
    #[serde(rename = "density_min_kg_m3")]
    pub density_min: f64,
    #[serde(rename = "density_max_kg_m3")]
    pub density_max: f64,
    #[serde(rename = "modulus_min_pa")]
    pub modulus_min: f64,
    #[serde(rename = "modulus_max_pa")]
    pub modulus_max: f64,
}

impl AshbyBounds {
    pub fn new(
        class: AshbyClass,
        density: (f64, f64),
        modulus: (f64, f64),
    ) -> Result<Self, MaterialError> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi;
        if !ok(density.0, density.1) || !ok(modulus.0, modulus.1) {
            return Err(MaterialError::InvalidBounds(class));
        }
        Ok(Self {
            class,
            density_min: density.0,
            density_max: density.1,
            modulus_min: modulus.0,
            modulus_max: modulus.1,
        })
    }

    /// Metals and ceramics: ρ ∈ [1.75e3, 2.25e4] kg/m³, E ∈ [11, 1000] GPa.
    pub fn metal_ceramic() -> Self {
        Self {
            class: AshbyClass::MetalCeramic,
            density_min: 1.75e3,
            density_max: 2.25e4,
            modulus_min: 1.1e10,
            modulus_max: 1.0e12,
        }
    }

    /// Polymers and natural materials: ρ ∈ [5e2, 3.5e3] kg/m³, E ∈ [0.1, 9] GPa.
    pub fn polymer_natural() -> Self {
        Self {
            class: AshbyClass::PolymerNatural,
            density_min: 5.0e2,
            density_max: 3.5e3,
            modulus_min: 1.0e8,
            modulus_max: 9.0e9,
        }
    }

    pub fn default_for(class: AshbyClass) -> Self {
        match class {
            AshbyClass::MetalCeramic => Self::metal_ceramic(),
            AshbyClass::PolymerNatural => Self::polymer_natural(),
        }
    }

    /// Closed-interval membership test.
    pub fn contains(&self, density: f64, modulus: f64) -> bool {
        (self.density_min..=self.density_max).contains(&density)
            && (self.modulus_min..=self.modulus_max).contains(&modulus)
    }
}

/// True iff the material lies inside (or on the boundary of) `bounds`.
pub fn validate_ashby(spec: &MaterialSpec, bounds: &AshbyBounds) -> bool {
    bounds.contains(spec.density, spec.modulus)
}

/// A named `(density, modulus)` material point.
///
/// Rigid materials carry an infinite modulus and never produce spring
/// elements; they model the single rigid link baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSpec {
    pub name: String,
    /// Bulk density, kg/m³.
    pub density: f64,
    /// Young's modulus, Pa. `f64::INFINITY` for rigid materials.
    pub modulus: f64,
    pub class: Option<AshbyClass>,
}

impl MaterialSpec {
    pub fn new(name: impl Into<String>, density: f64, modulus: f64) -> Result<Self, MaterialError> {
        let name = name.into();
        if !(density.is_finite() && density > 0.0) {
            return Err(MaterialError::NonPositiveDensity { name, density });
        }
        if !(modulus.is_finite() && modulus > 0.0) {
            return Err(MaterialError::NonPositiveModulus { name, modulus });
        }
        Ok(Self { name, density, modulus, class: None })
    }

    pub fn rigid(name: impl Into<String>, density: f64) -> Result<Self, MaterialError> {
        let name = name.into();
        if !(density.is_finite() && density > 0.0) {
            return Err(MaterialError::NonPositiveDensity { name, density });
        }
        Ok(Self { name, density, modulus: f64::INFINITY, class: None })
    }

    /// Tag the material with an Ashby class, checking membership.
    pub fn with_class(mut self, bounds: &AshbyBounds) -> Result<Self, MaterialError> {
        if !validate_ashby(&self, bounds) {
            return Err(MaterialError::OutsideClass {
                name: self.name,
                class: bounds.class,
            });
        }
        self.class = Some(bounds.class);
        Ok(self)
    }

    pub fn is_rigid(&self) -> bool {
        self.modulus.is_infinite()
    }
}

/// Porosity `Φ = 1 − ρ_b/ρ_s` from bulk and particle (solid) density.
pub fn porosity_from_bulk_density(bulk: f64, solid: f64) -> Result<f64, MaterialError> {
    if !(solid.is_finite() && solid > 0.0) {
        return Err(MaterialError::NonPositiveSolidDensity(solid));
    }
    if !(bulk.is_finite() && bulk >= 0.0 && bulk <= solid) {
        return Err(MaterialError::BulkExceedsSolid { bulk, solid });
    }
    Ok(1.0 - bulk / solid)
}

/// Inverse of [`porosity_from_bulk_density`]: `ρ_b = ρ_s (1 − Φ)`.
pub fn bulk_density_from_porosity(porosity: f64, solid: f64) -> Result<f64, MaterialError> {
    if !(solid.is_finite() && solid > 0.0) {
        return Err(MaterialError::NonPositiveSolidDensity(solid));
    }
    if !(0.0..=1.0).contains(&porosity) {
        return Err(MaterialError::PorosityOutOfRange(porosity));
    }
    Ok(solid * (1.0 - porosity))
}

/// One cylindrical leg segment made of a single material.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSpec {
    pub material: MaterialSpec,
    /// Segment length L, m.
    pub length: f64,
    /// Cross-section radius r, m.
    pub radius: f64,
}

impl SegmentSpec {
    pub fn new(material: MaterialSpec, length: f64, radius: f64) -> Result<Self, MaterialError> {
        if !(length.is_finite() && length > 0.0 && radius.is_finite() && radius > 0.0) {
            return Err(MaterialError::InvalidGeometry { length, radius });
        }
        Ok(Self { material, length, radius })
    }

    pub fn volume(&self) -> f64 {
        PI * self.radius * self.radius * self.length
    }
}

/// Second moment of area of a solid circular section, `πr⁴/4`.
pub fn second_moment_of_area(radius: f64) -> f64 {
    PI * radius.powi(4) / 4.0
}

/// `m = ρ·πr²·L`.
pub fn segment_mass(spec: &SegmentSpec) -> f64 {
    spec.material.density * spec.volume()
}

/// `k = 3EI/L³`. Infinite for rigid materials.
pub fn stiffness_from_modulus(spec: &SegmentSpec) -> f64 {
    3.0 * spec.material.modulus * second_moment_of_area(spec.radius) / spec.length.powi(3)
}

/// Stiffness of springs in series, `(Σ 1/k_i)⁻¹`.
pub fn series_equivalent_stiffness(stiffnesses: &[f64]) -> Result<f64, MaterialError> {
    if stiffnesses.is_empty() {
        return Err(MaterialError::EmptyStiffnessList);
    }
    let mut compliance = 0.0;
    for &k in stiffnesses {
        if !(k > 0.0) || k.is_nan() {
            return Err(MaterialError::NonPositiveStiffness(k));
        }
        compliance += 1.0 / k;
    }
    Ok(1.0 / compliance)
}

/// Radius and total length of a leg link, split equally among its segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegGeometry {
    pub radius: f64,
    pub total_length: f64,
}

impl LegGeometry {
    pub fn segment_lengths(&self, count: usize) -> Vec<f64> {
        vec![self.total_length / count as f64; count]
    }
}

/// A segment with its derived lumped parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LegSegment {
    pub spec: SegmentSpec,
    /// Lumped mass at the distal end of the segment, kg.
    pub mass: f64,
    /// Axial stiffness, N/m; infinite for rigid segments.
    pub stiffness: f64,
    /// Axial damping, N·s/m.
    pub damping: f64,
}

impl LegSegment {
    pub fn is_rigid(&self) -> bool {
        self.stiffness.is_infinite()
    }

    pub fn length(&self) -> f64 {
        self.spec.length
    }
}

/// Ordered chain of leg segments, index 0 nearest the base.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedLeg {
    segments: Vec<LegSegment>,
}

impl SegmentedLeg {
    /// Build a chain from explicit lumped parameters. Mostly for fixtures
    /// where the mass and stiffness are the quantities of interest.
    pub fn from_lumped(elements: &[(f64, f64, f64, f64)]) -> Result<Self, MaterialError> {
        // (mass, stiffness, damping, length)
        if elements.is_empty() {
            return Err(MaterialError::EmptyLeg);
        }
        let mut segments = Vec::with_capacity(elements.len());
        for (i, &(mass, stiffness, damping, length)) in elements.iter().enumerate() {
            if !(mass > 0.0 && mass.is_finite()) || !(stiffness > 0.0) || !(damping >= 0.0) {
                return Err(MaterialError::InvalidLumped(i));
            }
            let radius = 0.01;
            let volume = PI * radius * radius * length;
            let material = MaterialSpec {
                name: format!("lumped{i}"),
                density: mass / volume,
                modulus: stiffness * length.powi(3) / (3.0 * second_moment_of_area(radius)),
                class: None,
            };
            let spec = SegmentSpec::new(material, length, radius)?;
            segments.push(LegSegment { spec, mass, stiffness, damping });
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[LegSegment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.segments.iter().map(|s| s.mass).sum()
    }

    pub fn rest_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length()).sum()
    }

    /// Number of segments that carry an axial deflection coordinate.
    pub fn elastic_count(&self) -> usize {
        self.segments.iter().filter(|s| !s.is_rigid()).count()
    }

    /// Series-equivalent stiffness of the elastic segments, or `None` for a
    /// fully rigid leg.
    pub fn equivalent_stiffness(&self) -> Option<f64> {
        let ks: Vec<f64> = self
            .segments
            .iter()
            .filter(|s| !s.is_rigid())
            .map(|s| s.stiffness)
            .collect();
        series_equivalent_stiffness(&ks).ok()
    }

    pub fn material_names(&self) -> Vec<&str> {
        self.segments.iter().map(|s| s.spec.material.name.as_str()).collect()
    }
}

/// Build a leg from base-to-foot ordered materials. A list holding a single
/// rigid material becomes one rigid link spanning the full length.
pub fn build_leg(
    materials: &[MaterialSpec],
    geometry: LegGeometry,
    damping_ratio: f64,
) -> Result<SegmentedLeg, MaterialError> {
    if materials.is_empty() {
        return Err(MaterialError::EmptyLeg);
    }
    if !(damping_ratio >= 0.0 && damping_ratio.is_finite()) {
        return Err(MaterialError::InvalidDampingRatio(damping_ratio));
    }
    let lengths = geometry.segment_lengths(materials.len());
    let mut segments = Vec::with_capacity(materials.len());
    for (material, length) in materials.iter().zip(lengths) {
        let spec = SegmentSpec::new(material.clone(), length, geometry.radius)?;
        let mass = segment_mass(&spec);
        let stiffness = stiffness_from_modulus(&spec);
        let damping = if stiffness.is_infinite() {
            0.0
        } else {
            2.0 * damping_ratio * (stiffness * mass).sqrt()
        };
        segments.push(LegSegment { spec, mass, stiffness, damping });
    }
    Ok(SegmentedLeg { segments })
}
