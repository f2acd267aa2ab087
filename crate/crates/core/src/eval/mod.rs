//! Image quality and temporal stability metrics, evaluation reports and
//! latency profiling.

mod metrics;
mod profile;
mod report;

pub use metrics::{gaussian_window, mse, pixel_std, psnr, ssim, SSIM_SIGMA, SSIM_WINDOW};
pub use profile::{profile, Timing};
pub use report::{
    evaluate, evaluate_checkpoint, load_segments, Aggregate, EvalOptions, EvalReport, EvalSegment,
    SegmentRow, Upscaler, REPORT_HEADER, REPORT_NOTES,
};
