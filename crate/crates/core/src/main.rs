use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tinydet::detect::{format_detections, ImageDetection};
use tinydet::model::{
    build_reference_model_seeded, check_constraints, read_checkpoint, to_manifest,
    write_checkpoint, REFERENCE_SEED,
};
use tinydet::pipeline::{
    cost_model, detect_image, exit_code, load_image_ppm, read_ppm, run_eval, write_ppm,
    DetectConfig, DEFAULT_BLOCK_SIZE, EXIT_CONSTRAINT, EXIT_INPUT,
};
use tinydet::quant::{
    quantize_model, quantize_tensor, read_quantized_checkpoint, write_quantized_checkpoint,
    QuantParams,
};
use tinydet::synth::{emit_headers, emit_test_vector, TestVector};
use tinydet::{infer, Error, Result};

#[derive(Parser)]
#[command(name = "tinydet", version, about = "INT8 grid detector toolchain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Thresholds {
    #[arg(long, default_value_t = 0.1)]
    conf_threshold: f32,
    #[arg(long, default_value_t = 0.5)]
    nms_iou: f32,
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    block_size: usize,
}

impl From<Thresholds> for DetectConfig {
    fn from(t: Thresholds) -> Self {
        DetectConfig {
            conf_threshold: t.conf_threshold,
            nms_iou: t.nms_iou,
            block_size: t.block_size,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a float checkpoint against the accelerator constraints.
    Validate { checkpoint: PathBuf },
    /// Fold batch norm and quantize with a directory of PPM calibration images.
    Quantize {
        checkpoint: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Emit C headers and a manifest for a quantized checkpoint.
    Synthesize {
        qcheckpoint: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "tinydet")]
        name: String,
    },
    /// Run the integer engine on one image and print the raw output.
    Infer {
        qcheckpoint: PathBuf,
        image: PathBuf,
        /// Also write a C test-vector header.
        #[arg(long)]
        test_vector: Option<PathBuf>,
        #[arg(long, default_value = "tinydet")]
        name: String,
    },
    /// Detect objects and write an annotated copy of the image.
    Detect {
        qcheckpoint: PathBuf,
        image: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        thresholds: Thresholds,
    },
    /// Score a quantized model on a directory of PPMs and ground_truth.txt.
    Eval {
        qcheckpoint: PathBuf,
        dataset: PathBuf,
        #[arg(short, long, default_value = "eval_report.txt")]
        output: PathBuf,
        #[command(flatten)]
        thresholds: Thresholds,
    },
    /// Print the modeled latency and energy.
    Cost { qcheckpoint: PathBuf },
    /// Write the seeded reference model and its text manifest.
    MakeRef {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = REFERENCE_SEED)]
        seed: u64,
    },
}

fn image_id(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string()
}

fn ppm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "ppm"));
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyDataset(dir.to_path_buf()));
    }
    Ok(files)
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Validate { checkpoint } => {
            let model = read_checkpoint(&fs::read(&checkpoint)?)?;
            let report = check_constraints(&model)?;
            print!("{report}");
            return Ok(if report.passed { 0 } else { EXIT_CONSTRAINT });
        }
        Command::Quantize {
            checkpoint,
            calib,
            output,
        } => {
            let mut model = read_checkpoint(&fs::read(&checkpoint)?)?;
            if model.has_batchnorm() {
                model = model.fold_batchnorm()?;
            }
            let images = ppm_files(&calib)?
                .iter()
                .map(|p| load_image_ppm(p))
                .collect::<Result<Vec<_>>>()?;
            let qmodel = quantize_model(&model, &images)?;
            fs::write(&output, write_quantized_checkpoint(&qmodel)?)?;
            println!("quantized {} layers with {} calibration images", qmodel.layers.len(), images.len());
        }
        Command::Synthesize {
            qcheckpoint,
            output,
            name,
        } => {
            let qmodel = read_quantized_checkpoint(&fs::read(&qcheckpoint)?)?;
            let bundle = emit_headers(&qmodel, &name)?;
            bundle.write_to(&output)?;
            print!("{}", bundle.manifest());
        }
        Command::Infer {
            qcheckpoint,
            image,
            test_vector,
            name,
        } => {
            let qmodel = read_quantized_checkpoint(&fs::read(&qcheckpoint)?)?;
            let x = quantize_tensor(&load_image_ppm(&image)?, QuantParams::input())?;
            let out = infer::forward_int8(&qmodel, &x)?;
            if let Some(path) = test_vector {
                fs::write(&path, emit_test_vector(&qmodel, &name, &x)?)?;
                eprintln!("wrote {} ({})", path.display(), TestVector::file_name(&name));
            }
            let shape = out.shape();
            println!("shape {shape}");
            println!("scale_exp {}", out.scale_exp);
            let values = out.tensor.values();
            for row in values.chunks(shape.width.max(1)) {
                let row: Vec<String> = row.iter().map(ToString::to_string).collect();
                println!("{}", row.join(" "));
            }
        }
        Command::Detect {
            qcheckpoint,
            image,
            output,
            thresholds,
        } => {
            let qmodel = read_quantized_checkpoint(&fs::read(&qcheckpoint)?)?;
            let picture = read_ppm(&image)?;
            let run = detect_image(&qmodel, &picture, &thresholds.into())?;
            write_ppm(&output, &tinydet::pipeline::annotate(&picture, &run.detections))?;
            let id = image_id(&image);
            let records: Vec<ImageDetection> = run
                .detections
                .into_iter()
                .map(|detection| ImageDetection {
                    image_id: id.clone(),
                    detection,
                })
                .collect();
            print!("{}", format_detections(&records));
        }
        Command::Eval {
            qcheckpoint,
            dataset,
            output,
            thresholds,
        } => {
            let run = run_eval(&qcheckpoint, &dataset, &thresholds.into())?;
            let text = run.text_report();
            fs::write(&output, &text)?;
            print!("{text}");
        }
        Command::Cost { qcheckpoint } => {
            let qmodel = read_quantized_checkpoint(&fs::read(&qcheckpoint)?)?;
            print!("{}", cost_model(&qmodel)?);
        }
        Command::MakeRef { output, seed } => {
            let model = build_reference_model_seeded(seed);
            fs::write(&output, write_checkpoint(&model)?)?;
            let mut manifest = output.clone().into_os_string();
            manifest.push(".txt");
            fs::write(&manifest, to_manifest(&model))?;
            println!("wrote {}", output.display());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            let code = exit_code(&err);
            ExitCode::from(if code == 0 { EXIT_INPUT } else { code } as u8)
        }
    }
}
