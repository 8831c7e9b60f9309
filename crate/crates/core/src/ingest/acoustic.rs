use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::geom::{PointCloud, PoseSE3, Vec3};

/// Accepted range interval `(min, max]`, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeGate {
    pub min: f64,
    pub max: f64,
}

impl Default for RangeGate {
    fn default() -> Self {
        Self { min: 0.02, max: 4.0 }
    }
}

impl RangeGate {
    pub fn accepts(&self, range: f64) -> bool {
        range > self.min && range <= self.max
    }
}

/// One range return from a point-range acoustic sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcousticPing {
    pub timestamp: f64,
    pub sensor_id: u16,
    pub range: f64,
    /// Sensor-to-camera transform; the sensor looks along its local +z.
    pub extrinsic: PoseSE3,
}

impl AcousticPing {
    /// Sensor origin in the world frame.
    pub fn origin(&self, camera_pose: &PoseSE3) -> Vec3 {
        camera_pose.compose(&self.extrinsic).translation
    }
}

/// Places a ping in the world: `range` along the sensor's +z axis, mapped
/// through the extrinsic and then the camera-to-world pose. `None` when the
/// range falls outside `gate`.
pub fn ping_to_world(ping: &AcousticPing, camera_pose: &PoseSE3, gate: &RangeGate) -> Option<Vec3> {
    if !gate.accepts(ping.range) {
        return None;
    }
    let sensor_to_world = camera_pose.compose(&ping.extrinsic);
    Some(sensor_to_world.transform_point(&Vec3::new(0.0, 0.0, ping.range)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Rejections {
    /// Range outside the gate.
    pub range: usize,
    /// Timestamp outside the trajectory span plus margin.
    pub time: usize,
}

impl Rejections {
    pub fn total(&self) -> usize {
        self.range + self.time
    }
}

/// World-frame acoustic returns, one per accepted ping.
#[derive(Debug, Clone, Default)]
pub struct AcousticPointCloud {
    pub points: PointCloud,
    /// Index of the source ping for each point.
    pub ping_index: Vec<usize>,
    /// World-frame sensor origin for each point.
    pub origins: Vec<Vec3>,
    pub rejected: Rejections,
}

impl AcousticPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn build_apc(
    pings: &[AcousticPing],
    trajectory: &Trajectory,
    gate: &RangeGate,
    time_margin: f64,
) -> Result<AcousticPointCloud> {
    if trajectory.samples().is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let mut apc = AcousticPointCloud::default();
    for (i, ping) in pings.iter().enumerate() {
        let pose = match trajectory.pose_at(ping.timestamp, time_margin) {
            Ok(p) => p,
            Err(Error::OutOfRange { .. }) => {
                apc.rejected.time += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        match ping_to_world(ping, &pose, gate) {
            Some(p) => {
                apc.points.points.push(p);
                apc.ping_index.push(i);
                apc.origins.push(ping.origin(&pose));
            }
            None => apc.rejected.range += 1,
        }
    }
    if apc.rejected.total() > 0 {
        log::warn!(
            "rejected {} of {} pings ({} out of range gate, {} outside trajectory)",
            apc.rejected.total(),
            pings.len(),
            apc.rejected.range,
            apc.rejected.time
        );
    }
    Ok(apc)
}
