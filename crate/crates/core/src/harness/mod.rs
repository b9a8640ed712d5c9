//! Image metrics and the sampler comparison benchmark.

mod bench;
mod metrics;
mod report;

pub use bench::{
    prepare_case, run_benchmark, run_benchmark_subset, run_case, score_maps, BenchmarkSpec, Case, STANDARD_POSES,
};
pub use metrics::{psnr, psnr_capped, ssim, PSNR_CAP, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use report::{CheckpointInfo, Report, RunRecord, SummaryRow, TimingRow};
