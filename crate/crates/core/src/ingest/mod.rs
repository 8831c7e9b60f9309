//! Multi-sensor capture ingestion and world-frame placement of acoustic
//! returns.

mod acoustic;
mod manifest;
mod mask;
mod trajectory;

pub use acoustic::{build_apc, ping_to_world, AcousticPing, AcousticPointCloud, RangeGate, Rejections};
pub use manifest::{
    load_manifest, read_pings_csv, write_manifest, write_pings_csv, Capture, FrameEntry, FrameRecord,
    ManifestFile, PING_CSV_HEADER,
};
pub use mask::GlassMask;
pub use trajectory::{pose_at, StampedPose, Trajectory, DEFAULT_TIME_MARGIN};
