//! Dense image buffers, luminance ranks, per-pixel photometric loss maps and
//! PPM/PFM file I/O.

mod buffers;
pub mod io;
mod resize;
mod ssim;

pub use buffers::{cdf_rank, l1_map, l1_map_backward, luminance, ImageRgb, NormalMap, ScalarMap, UNIT_NORM_TOLERANCE};
pub(crate) use buffers::sign;
pub use io::{read_image, write_image};
pub use resize::Bilinear;
pub use ssim::{ssim_backward, ssim_forward, ssim_map, SsimRecord, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};
