use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-9;

/// Rigid transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    rotation: Rotation3<f64>,
    pub translation: Vec3,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("pose entries must be finite".into()));
        }
        let gram_err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if gram_err > ORTHO_TOL || (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::InvalidInput(format!(
                "rotation is not proper orthonormal (|RᵀR - I| = {gram_err:.3e}, det = {det})"
            )));
        }
        Ok(Self {
            rotation: Rotation3::from_matrix_unchecked(rotation),
            translation,
        })
    }

    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation,
        }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        Self {
            rotation: Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle),
            translation,
        }
    }

    /// Parses a homogeneous 4×4 matrix given in row-major order. The last
    /// row must be `0 0 0 1`.
    pub fn from_row_major(m: &[f64]) -> Result<Self> {
        if m.len() != 16 {
            return Err(Error::InvalidInput(format!(
                "pose needs 16 values, got {}",
                m.len()
            )));
        }
        let bottom = [m[12], m[13], m[14], m[15]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidInput(format!(
                "pose bottom row must be 0 0 0 1, got {bottom:?}"
            )));
        }
        let r = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Self::new(r, Vec3::new(m[3], m[7], m[11]))
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let r = self.rotation.matrix();
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> &Matrix3<f64> {
        self.rotation.matrix()
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> PoseSE3 {
        let inv = self.rotation.inverse();
        PoseSE3 {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    /// Linear blend of translations and slerp of rotations, `s ∈ [0, 1]`.
    pub fn interpolate(&self, other: &PoseSE3, s: f64) -> PoseSE3 {
        let qa = UnitQuaternion::from_rotation_matrix(&self.rotation);
        let qb = UnitQuaternion::from_rotation_matrix(&other.rotation);
        // Shortest arc; slerp is undefined for exactly antipodal rotations,
        // where any great circle is equally valid.
        let q = qa
            .try_slerp(&qb, s, 1e-12)
            .unwrap_or_else(|| if s < 0.5 { qa } else { qb });
        PoseSE3 {
            rotation: q.to_rotation_matrix(),
            translation: self.translation.lerp(&other.translation, s),
        }
    }
}

impl Serialize for PoseSE3 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PoseSE3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = Vec::<f64>::deserialize(d)?;
        PoseSE3::from_row_major(&m).map_err(serde::de::Error::custom)
    }
}
