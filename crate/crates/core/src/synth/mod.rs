//! Analytic test scenes: ray-traced Lambertian views with exact depth and
//! normals, camera rings, per-view exposure distortion and the reference
//! normal oracle.

mod cameras;
mod dataset;
mod oracle;
mod perturb;
mod render;
mod scene;

pub use cameras::{
    azimuth, elevation, make_cameras, FOCAL_FACTOR, HEMISPHERE_ELEVATIONS, ORBIT_RADIUS, RING_ELEVATION,
};
pub use dataset::{normal_image, parse_manifest, Dataset, ManifestView, View, MANIFEST_HEADER};
pub use oracle::OracleNormals;
pub use perturb::{perturb, PerturbDraw, PerturbSpec};
pub use render::{render_gt, GroundTruth};
pub use scene::{facing, Hit, Light, Pattern, SceneKind, SceneSpec, Texture};
