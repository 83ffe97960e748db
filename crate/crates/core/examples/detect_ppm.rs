//! End-to-end detection on a PPM image: block loading, the integer
//! engine, decoding and NMS, then an annotated copy of the image.
//!
//! `cargo run --release --example detect_ppm [in.ppm] [out.ppm]`
//!
//! Without arguments a synthetic image is used. The reference weights are
//! random, so the boxes are only plumbing, not meaningful objects.

use tinydet::detect::{format_detections, ImageDetection};
use tinydet::model::build_reference_model;
use tinydet::pipeline::{annotate, detect_image, read_ppm, write_ppm, DetectConfig, RgbImage};
use tinydet::quant::quantize_model;

fn main() -> tinydet::Result<()> {
    let mut args = std::env::args().skip(1);
    let image = match args.next() {
        Some(path) => read_ppm(path.as_ref())?,
        None => {
            let mut img = RgbImage::filled(224, 224, [90, 140, 200]);
            for y in 60..170 {
                for x in 40..120 {
                    img.set(x, y, [200, 60, 40]);
                }
            }
            img
        }
    };
    let out = args.next().unwrap_or_else(|| "detections.ppm".into());

    let model = build_reference_model().fold_batchnorm()?;
    let qmodel = quantize_model(&model, &[image.to_tensor()])?;
    let cfg = DetectConfig { conf_threshold: 0.0, ..DetectConfig::default() };
    let run = detect_image(&qmodel, &image, &cfg)?;

    println!("{} blocks of {} bytes", run.plan.block_count, run.plan.block_size);
    println!("{} detections, top five:", run.detections.len());
    let records: Vec<ImageDetection> = run
        .detections
        .iter()
        .take(5)
        .map(|&detection| ImageDetection { image_id: "image".into(), detection })
        .collect();
    print!("{}", format_detections(&records));
    write_ppm(out.as_ref(), &annotate(&image, &run.detections))?;
    println!("wrote {out}");
    Ok(())
}
