use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::PoseSE3;

/// Default slack around the trajectory span for pose queries, seconds.
pub const DEFAULT_TIME_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StampedPose {
    pub t: f64,
    pub pose: PoseSE3,
}

/// Camera-to-world poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<StampedPose>,
}

impl Trajectory {
    pub fn new(samples: Vec<StampedPose>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("trajectory is empty".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.t.is_finite()) {
            return Err(Error::InvalidInput(format!("trajectory entry {i} has a non-finite time")));
        }
        if let Some(w) = samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidInput(format!(
                "trajectory timestamps not strictly increasing at entry {} ({} after {})",
                w + 1,
                samples[w + 1].t,
                samples[w].t
            )));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[StampedPose] {
        &self.samples
    }

    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Pose at time `t`: translation is interpolated linearly and rotation
    /// by slerp between the bracketing samples. Queries up to `margin`
    /// seconds beyond either end clamp to that end.
    pub fn pose_at(&self, t: f64, margin: f64) -> Result<PoseSE3> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start - margin && t <= end + margin) {
            return Err(Error::OutOfRange {
                t,
                start,
                end,
                margin,
            });
        }
        if t <= start {
            return Ok(self.samples[0].pose);
        }
        if t >= end {
            return Ok(self.samples[self.samples.len() - 1].pose);
        }
        // first sample with time > t; t > start so hi >= 1
        let hi = self.samples.partition_point(|s| s.t <= t);
        let (a, b) = (&self.samples[hi - 1], &self.samples[hi]);
        if a.t == t {
            return Ok(a.pose);
        }
        Ok(a.pose.interpolate(&b.pose, (t - a.t) / (b.t - a.t)))
    }
}

/// Free-function form of [`Trajectory::pose_at`] with the default margin.
pub fn pose_at(trajectory: &Trajectory, t: f64) -> Result<PoseSE3> {
    trajectory.pose_at(t, DEFAULT_TIME_MARGIN)
}
