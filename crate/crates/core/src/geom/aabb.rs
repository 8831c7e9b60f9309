use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::error::{Error, Result};

/// Axis-aligned box, closed on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// Builds a box, rejecting degenerate or non-finite corners.
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if !(super::is_finite(&min) && super::is_finite(&max)) {
            return Err(Error::InvalidInput("box corners must be finite".into()));
        }
        if (0..3).any(|i| min[i] >= max[i]) {
            return Err(Error::InvalidInput(format!(
                "box min {:?} must be below max {:?} on every axis",
                min.as_slice(),
                max.as_slice()
            )));
        }
        Ok(Self { min, max })
    }

    pub fn from_origin_size(origin: Vec3, size: Vec3) -> Result<Self> {
        Self::new(origin, origin + size)
    }

    /// Tight box around `points`; `None` when empty.
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<(Vec3, Vec3)> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }

    pub fn size(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Grows every axis by `frac` of the largest extent, on both sides.
    pub fn padded(&self, frac: f64) -> Aabb {
        let pad = self.size().max() * frac;
        let d = Vec3::repeat(pad);
        Aabb {
            min: self.min - d,
            max: self.max + d,
        }
    }

    /// Grows (or, for negative `margin`, shrinks) every side by `margin`
    /// meters.
    pub fn inflated(&self, margin: f64) -> Aabb {
        let d = Vec3::repeat(margin);
        Aabb {
            min: self.min - d,
            max: self.max + d,
        }
    }

    /// Box around `points` padded by `frac` of the largest extent. Flat or
    /// single-point inputs still produce a valid box.
    pub fn around_points<'a>(points: impl IntoIterator<Item = &'a Vec3>, frac: f64) -> Result<Aabb> {
        let (lo, hi) = Self::enclosing(points)
            .ok_or_else(|| Error::InvalidInput("cannot bound an empty point set".into()))?;
        let pad = ((hi - lo).max() * frac).max(1e-3);
        Aabb::new(lo - Vec3::repeat(pad), hi + Vec3::repeat(pad))
    }
}
