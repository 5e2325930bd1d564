//! Differentiable anisotropic-Gaussian rasterizer: EWA projection, tiled
//! front-to-back compositing of colour, depth, normal and coverage, the exact
//! reverse pass, a depth-reprojection consistency term and Adam.

mod adam;
mod camera;
mod gaussian;
mod mvs;
pub mod ply;
mod project;
mod raster;

pub use adam::{AdamState, LearningRates, BETA1, BETA2, EPSILON};
pub use camera::Camera;
pub use gaussian::{
    logit, quat_from_axis_angle, quat_matrix_backward, quat_to_matrix, sigmoid, CloudGrad, Gaussian, GaussianCloud,
    LOGIT_BOUND, MAX_SCALE, MIN_SCALE,
};
pub use mvs::{mvs_loss, mvs_loss_backward, DepthGrad, MvsLoss, OCCLUSION_GAP};
pub use project::{
    flattest_axis, gaussian_normal, project, project_backward, GaussianGrad, Projected, ProjectedGrad,
    COV2D_DILATION, EXTENT_SIGMAS, MIN_OPACITY, Z_NEAR,
};
pub use raster::{
    rasterize, rasterize_backward, render, RenderGrad, RenderOutput, RenderRecord, ALPHA_MAX, MIN_TRANSMITTANCE,
    NORMAL_ALPHA, TILE_SIZE,
};

/// Checkpoint tags of the Gaussian record.
pub mod checkpoint {
    pub use super::gaussian::{MAGIC, VERSION};
}
