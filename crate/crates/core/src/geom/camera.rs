use serde::{Deserialize, Serialize};

use super::{PoseSE3, Vec3};
use crate::error::{Error, Result};

/// Pinhole intrinsics. Integer pixel coordinates denote pixel centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "w")]
    pub width: u32,
    #[serde(rename = "h")]
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < f64::from(self.width)) {
            return Err(Error::InvalidInput(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < f64::from(self.height)) {
            return Err(Error::InvalidInput(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`; it must be non-zero.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0 && n.is_finite()) || !super::is_finite(&origin) {
            return Err(Error::InvalidInput("ray needs a finite, non-zero direction".into()));
        }
        Ok(Self {
            origin,
            direction: direction / n,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// World-frame ray through pixel `(u, v)` for a camera-to-world `pose`.
pub fn pixel_to_ray(intr: &CameraIntrinsics, pose: &PoseSE3, u: f64, v: f64) -> Result<Ray> {
    if !(u >= 0.0 && u < f64::from(intr.width) && v >= 0.0 && v < f64::from(intr.height)) {
        return Err(Error::InvalidInput(format!(
            "pixel ({u}, {v}) outside {}x{} image",
            intr.width, intr.height
        )));
    }
    let cam_dir = Vec3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
    Ray::new(pose.translation, pose.transform_vector(&cam_dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn unit_intr() -> CameraIntrinsics {
        CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 4, 4).unwrap()
    }

    #[test]
    fn principal_point_is_optical_axis() {
        let r = pixel_to_ray(&unit_intr(), &PoseSE3::identity(), 0.0, 0.0).unwrap();
        assert_eq!(r.direction, Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn one_pixel_right_is_45_degrees() {
        let r = pixel_to_ray(&unit_intr(), &PoseSE3::identity(), 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(r.direction, Vec3::new(1.0, 0.0, 1.0) / SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn rotated_pose_rotates_axis_and_moves_origin() {
        let t = Vec3::new(1.0, 2.0, 3.0);
        let pose = PoseSE3::from_axis_angle(Vec3::z(), FRAC_PI_2, t);
        let r = pixel_to_ray(&unit_intr(), &pose, 0.0, 0.0).unwrap();
        // Rotation about z leaves the optical axis (+z) unchanged.
        assert_abs_diff_eq!(r.direction, Vec3::z(), epsilon = 1e-12);
        assert_eq!(r.origin, t);

        let tilted = PoseSE3::from_axis_angle(Vec3::y(), FRAC_PI_2, t);
        let r = pixel_to_ray(&unit_intr(), &tilted, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(r.direction, Vec3::x(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let pose = PoseSE3::identity();
        assert!(pixel_to_ray(&unit_intr(), &pose, 4.0, 0.0).is_err());
        assert!(pixel_to_ray(&unit_intr(), &pose, -0.5, 0.0).is_err());
        assert!(pixel_to_ray(&unit_intr(), &pose, 0.0, 4.0).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.5, 3.5, 4, 4).is_ok());
    }
}
