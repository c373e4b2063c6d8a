//! Reference trajectories and terrain for the four hopping behaviors.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::BehaviorError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorKind {
    Static,
    Forward,
    Ramp,
    Circular,
}

impl BehaviorKind {
    pub const ALL: [BehaviorKind; 4] = [
        BehaviorKind::Static,
        BehaviorKind::Forward,
        BehaviorKind::Ramp,
        BehaviorKind::Circular,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            BehaviorKind::Static => "static",
            BehaviorKind::Forward => "forward",
            BehaviorKind::Ramp => "ramp",
            BehaviorKind::Circular => "circular",
        }
    }
}

impl fmt::Display for BehaviorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BehaviorKind {
    type Err = BehaviorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(BehaviorKind::Static),
            "forward" => Ok(BehaviorKind::Forward),
            "ramp" => Ok(BehaviorKind::Ramp),
            "circular" | "circle" => Ok(BehaviorKind::Circular),
            other => Err(BehaviorError::Invalid(format!("unknown behavior '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSpec {
    pub kind: BehaviorKind,
    /// Forward/ramp/circular speed along the path, m/s.
    pub speed: f64,
    /// Ramp slope rise/run.
    pub grade: f64,
    /// Circle radius, m.
    pub radius: f64,
    pub duration: f64,
    pub transient: f64,
}

impl BehaviorSpec {
    pub fn validate(&self) -> Result<(), BehaviorError> {
        if !(self.duration > self.transient && self.transient >= 0.0) {
            return Err(BehaviorError::Invalid(format!(
                "duration {} must exceed transient cutoff {} >= 0",
                self.duration, self.transient
            )));
        }
        if self.kind == BehaviorKind::Circular && !(self.radius > 0.0) {
            return Err(BehaviorError::Invalid("circle radius must be positive".into()));
        }
        if !self.speed.is_finite() || !self.grade.is_finite() {
            return Err(BehaviorError::Invalid("non-finite speed or grade".into()));
        }
        Ok(())
    }

    /// Terrain the behavior runs on: an incline for ramp hopping, flat otherwise.
    pub fn terrain(&self) -> Terrain {
        match self.kind {
            BehaviorKind::Ramp => Terrain::incline(self.grade),
            _ => Terrain::flat(),
        }
    }

    /// Period of one lap for circular hopping.
    pub fn lap_period(&self) -> Option<f64> {
        (self.kind == BehaviorKind::Circular && self.speed != 0.0)
            .then(|| 2.0 * PI * self.radius / self.speed.abs())
    }

    /// Unchecked reference evaluation; valid for any `t`.
    pub fn reference_unchecked(&self, t: f64) -> (Vector2<f64>, Vector2<f64>) {
        match self.kind {
            BehaviorKind::Static => (Vector2::zeros(), Vector2::zeros()),
            BehaviorKind::Forward | BehaviorKind::Ramp => {
                (Vector2::new(self.speed * t, 0.0), Vector2::new(self.speed, 0.0))
            }
            BehaviorKind::Circular => {
                let w = self.speed / self.radius;
                let (s, c) = (w * t).sin_cos();
                (
                    Vector2::new(self.radius * c, self.radius * s),
                    Vector2::new(-self.speed * s, self.speed * c),
                )
            }
        }
    }
}

/// Desired planar position and velocity at time `t`.
pub fn reference(
    spec: &BehaviorSpec,
    t: f64,
) -> Result<(Vector2<f64>, Vector2<f64>), BehaviorError> {
    if !(0.0..=spec.duration).contains(&t) {
        return Err(BehaviorError::TimeOutOfRange { t, duration: spec.duration });
    }
    Ok(spec.reference_unchecked(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Flat,
    Incline,
}

/// Ground surface `z = origin_z + grade·(x − origin_x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub kind: TerrainKind,
    pub grade: f64,
    pub origin: [f64; 3],
}

impl Terrain {
    pub fn flat() -> Self {
        Self { kind: TerrainKind::Flat, grade: 0.0, origin: [0.0; 3] }
    }

    pub fn incline(grade: f64) -> Self {
        Self { kind: TerrainKind::Incline, grade, origin: [0.0; 3] }
    }

    pub fn height(&self, x: f64, _y: f64) -> f64 {
        match self.kind {
            TerrainKind::Flat => self.origin[2],
            TerrainKind::Incline => self.origin[2] + self.grade * (x - self.origin[0]),
        }
    }

    /// Upward unit normal.
    pub fn normal(&self) -> Vector3<f64> {
        match self.kind {
            TerrainKind::Flat => Vector3::z(),
            TerrainKind::Incline => Vector3::new(-self.grade, 0.0, 1.0).normalize(),
        }
    }

    /// Signed distance of `point` below the surface (positive when penetrating).
    pub fn penetration(&self, point: &Vector3<f64>) -> f64 {
        let n = self.normal();
        let on_surface = Vector3::new(self.origin[0], self.origin[1], self.origin[2]);
        -(point - on_surface).dot(&n)
    }
}

/// Surface height and upward normal at `(x, y)`.
pub fn terrain_height(terrain: &Terrain, x: f64, y: f64) -> (f64, Vector3<f64>) {
    (terrain.height(x, y), terrain.normal())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(kind: BehaviorKind) -> BehaviorSpec {
        BehaviorSpec {
            kind,
            speed: 0.5,
            grade: 0.035,
            radius: 0.5,
            duration: 60.0,
            transient: 20.0,
        }
    }

    #[test]
    fn static_and_forward() {
        let (x, v) = reference(&spec(BehaviorKind::Static), 13.0).unwrap();
        assert_eq!((x, v), (Vector2::zeros(), Vector2::zeros()));
        let (x, v) = reference(&spec(BehaviorKind::Forward), 10.0).unwrap();
        assert_eq!(x, Vector2::new(5.0, 0.0));
        assert_eq!(v, Vector2::new(0.5, 0.0));
    }

    #[test]
    fn circle_identity() {
        let mut s = spec(BehaviorKind::Circular);
        s.speed = 0.3;
        for i in 0..200 {
            let t = i as f64 * 0.29;
            let (x, v) = reference(&s, t).unwrap();
            assert_relative_eq!(x.norm(), 0.5, epsilon = 1e-12);
            assert_relative_eq!(v.norm(), 0.3, epsilon = 1e-12);
        }
    }

    #[test]
    fn out_of_window() {
        let s = spec(BehaviorKind::Forward);
        assert!(reference(&s, -0.1).is_err());
        assert!(reference(&s, 60.1).is_err());
        assert!(reference(&s, 60.0).is_ok());
    }

    #[test]
    fn terrain_examples() {
        let flat = Terrain::flat();
        assert_eq!(flat.height(3.0, -7.0), 0.0);
        assert_eq!(flat.normal(), Vector3::z());
        let ramp = Terrain::incline(0.035);
        let (h, n) = terrain_height(&ramp, 10.0, 2.0);
        assert_relative_eq!(h, 0.35, epsilon = 1e-12);
        assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-15);
        // normal is orthogonal to the surface tangent (1, 0, grade)
        assert_relative_eq!(n.dot(&Vector3::new(1.0, 0.0, 0.035)), 0.0, epsilon = 1e-15);
        assert!(ramp.penetration(&Vector3::new(10.0, 0.0, 0.30)) > 0.0);
        assert!(ramp.penetration(&Vector3::new(10.0, 0.0, 0.40)) < 0.0);
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(BehaviorKind::Static);
        assert!(s.validate().is_ok());
        s.transient = 60.0;
        assert!(s.validate().is_err());
        assert_eq!("circle".parse::<BehaviorKind>().unwrap(), BehaviorKind::Circular);
        assert!("hover".parse::<BehaviorKind>().is_err());
    }
}
