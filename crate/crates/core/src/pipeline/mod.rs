//! End-to-end orchestration: image files, block loading, the cost model
//! and detect/eval runs.

mod blocks;
mod cost;
mod ppm;
mod run;

pub use blocks::{plan_blocks, stream_blocks, BlockLoadPlan};
pub use cost::{cost_model, reference_macs, CostReport, MEASURED_LATENCY_MS, MEASURED_POWER_MW};
pub use ppm::{load_image_ppm, parse_ppm, read_ppm, write_ppm, RgbImage};
pub use run::{
    annotate, detect_image, evaluate_model, exit_code, load_dataset, run_detect, run_eval,
    Dataset, DetectConfig, DetectRun, EvalRun, CLASS_COLORS, DEFAULT_BLOCK_SIZE, EXIT_CONSTRAINT,
    EXIT_INPUT, EXIT_OK, GROUND_TRUTH_FILE,
};
