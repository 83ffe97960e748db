use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::blocks::{plan_blocks, stream_blocks, BlockLoadPlan};
use super::ppm::{read_ppm, RgbImage};
use crate::detect::{
    activate_head, decode_grid, mean_average_precision, nms, parse_ground_truth, Detection,
    GroundTruth, ImageDetection, MapReport, DEFAULT_CONF_THRESHOLD, DEFAULT_MATCH_IOU,
    DEFAULT_NMS_IOU, HEAD_SHAPE,
};
use crate::error::{Error, Result};
use crate::infer::{forward_int8, QuantOutput};
use crate::quant::{read_quantized_checkpoint, QuantizedModel};

pub const DEFAULT_BLOCK_SIZE: usize = 16_384;
pub const GROUND_TRUTH_FILE: &str = "ground_truth.txt";

/// Outline colour per class.
pub const CLASS_COLORS: [[u8; 3]; 5] = [
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [255, 255, 0],
    [255, 0, 255],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectConfig {
    pub conf_threshold: f32,
    pub nms_iou: f32,
    pub block_size: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            conf_threshold: DEFAULT_CONF_THRESHOLD,
            nms_iou: DEFAULT_NMS_IOU,
            block_size: DEFAULT_BLOCK_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectRun {
    pub plan: BlockLoadPlan,
    pub output: QuantOutput,
    pub detections: Vec<Detection>,
}

/// Block-loads and quantizes the image, runs the integer engine and decodes
/// the head with NMS.
pub fn detect_image(qmodel: &QuantizedModel, image: &RgbImage, cfg: &DetectConfig) -> Result<DetectRun> {
    if image.shape() != qmodel.input_shape {
        return Err(Error::ShapeMismatch(format!(
            "model expects {}, image is {}",
            qmodel.input_shape,
            image.shape()
        )));
    }
    let head_shape = qmodel.output_shape()?;
    if head_shape != HEAD_SHAPE {
        return Err(Error::ShapeMismatch(format!(
            "model output is {head_shape}, detection needs {HEAD_SHAPE}"
        )));
    }
    let tensor = image.to_tensor();
    let plan = plan_blocks(tensor.data().len(), cfg.block_size)?;
    let x = stream_blocks(&tensor, &plan)?;
    let output = forward_int8(qmodel, &x)?;
    let head = activate_head(&output.dequantize())?;
    let detections = nms(&decode_grid(&head, cfg.conf_threshold)?, cfg.nms_iou);
    Ok(DetectRun {
        plan,
        output,
        detections,
    })
}

/// Copy of `image` with a one-pixel outline per detection.
pub fn annotate(image: &RgbImage, detections: &[Detection]) -> RgbImage {
    let mut out = image.clone();
    let (w, h) = (image.width, image.height);
    let px = |v: f32, limit: usize| (v.max(0.0).round() as usize).min(limit - 1);
    for d in detections {
        let color = CLASS_COLORS[d.class_id % CLASS_COLORS.len()];
        let x0 = px(d.bbox.x_min, w);
        let y0 = px(d.bbox.y_min, h);
        let x1 = px(d.bbox.x_max - 1.0, w).max(x0);
        let y1 = px(d.bbox.y_max - 1.0, h).max(y0);
        for x in x0..=x1 {
            out.set(x, y0, color);
            out.set(x, y1, color);
        }
        for y in y0..=y1 {
            out.set(x0, y, color);
            out.set(x1, y, color);
        }
    }
    out
}

/// Loads a quantized checkpoint and a PPM, returning the detections and
/// the annotated image.
pub fn run_detect(model_path: &Path, image_path: &Path, cfg: &DetectConfig) -> Result<(Vec<Detection>, RgbImage)> {
    let qmodel = read_quantized_checkpoint(&fs::read(model_path)?)?;
    let image = read_ppm(image_path)?;
    let run = detect_image(&qmodel, &image, cfg)?;
    let annotated = annotate(&image, &run.detections);
    Ok((run.detections, annotated))
}

/// Images (`*.ppm`, id = file stem, sorted) and their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<(String, PathBuf)>,
    pub truths: Vec<GroundTruth>,
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let mut images = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "ppm") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                images.push((stem.to_string(), path.clone()));
            }
        }
    }
    if images.is_empty() {
        return Err(Error::EmptyDataset(dir.to_path_buf()));
    }
    images.sort();
    let gt_path = dir.join(GROUND_TRUTH_FILE);
    let truths = if gt_path.exists() {
        parse_ground_truth(&fs::read_to_string(gt_path)?)?
    } else {
        Vec::new()
    };
    Ok(Dataset { images, truths })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub images: usize,
    pub detections: Vec<ImageDetection>,
    pub report: MapReport,
}

impl EvalRun {
    pub fn text_report(&self) -> String {
        format!(
            "images {}\ndetections {}\n{}",
            self.images,
            self.detections.len(),
            self.report
        )
    }
}

/// Detects on every dataset image in parallel, then scores in id order.
pub fn evaluate_model(qmodel: &QuantizedModel, dataset: &Dataset, cfg: &DetectConfig) -> Result<EvalRun> {
    let per_image: Vec<Vec<ImageDetection>> = dataset
        .images
        .par_iter()
        .map(|(id, path)| {
            let run = detect_image(qmodel, &read_ppm(path)?, cfg)?;
            Ok(run
                .detections
                .into_iter()
                .map(|detection| ImageDetection {
                    image_id: id.clone(),
                    detection,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let detections: Vec<ImageDetection> = per_image.into_iter().flatten().collect();
    Ok(EvalRun {
        images: dataset.images.len(),
        report: mean_average_precision(&detections, &dataset.truths, DEFAULT_MATCH_IOU),
        detections,
    })
}

pub fn run_eval(model_path: &Path, dataset_dir: &Path, cfg: &DetectConfig) -> Result<EvalRun> {
    let qmodel = read_quantized_checkpoint(&fs::read(model_path)?)?;
    evaluate_model(&qmodel, &load_dataset(dataset_dir)?, cfg)
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_CONSTRAINT: i32 = 3;

/// Process exit code for a failed run: 3 when the model breaks a structural
/// or arithmetic constraint, 2 for every other input problem.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::ChannelMismatch { .. }
        | Error::OddSpatialDim { .. }
        | Error::UnsupportedLayer { .. }
        | Error::EmptyOutput { .. }
        | Error::AccumulatorOverflow { .. }
        | Error::BlockTooLarge { .. }
        | Error::ImageTooLarge { .. } => EXIT_CONSTRAINT,
        _ => EXIT_INPUT,
    }
}
