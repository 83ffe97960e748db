//! Scores detection records against ground truth, both in the
//! line-delimited text format.

use tinydet::detect::{mean_average_precision, parse_detections, parse_ground_truth, DEFAULT_MATCH_IOU};

const TRUTH: &str = "\
# image class x_min y_min x_max y_max
img0 0 10 10 60 60
img0 2 100 100 180 200
img1 0 30 40 90 120
img2 0 0 0 40 40
";

const DETECTIONS: &str = "\
img0 0 0.950000 12.00 10.00 60.00 62.00
img0 0 0.800000 14.00 12.00 58.00 60.00
img0 2 0.700000 100.00 104.00 180.00 200.00
img1 0 0.600000 150.00 150.00 200.00 200.00
img1 0 0.550000 30.00 40.00 90.00 118.00
img2 1 0.400000 0.00 0.00 40.00 40.00
";

fn main() -> tinydet::Result<()> {
    let truths = parse_ground_truth(TRUTH)?;
    let dets = parse_detections(DETECTIONS)?;
    print!("{}", mean_average_precision(&dets, &truths, DEFAULT_MATCH_IOU));
    Ok(())
}
