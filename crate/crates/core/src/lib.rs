//! Toolchain for a tiny fully-convolutional grid object detector aimed at
//! an INT8 CNN accelerator microcontroller.
//!
//! - [`model`]: layer IR, shape inference, batch-norm folding and the
//!   accelerator's operator and memory constraints.
//! - [`quant`]: power-of-two INT8 post-training quantization and the
//!   float fake-quantization forward pass.
//! - [`infer`]: float reference engine and the bit-exact integer engine.
//! - [`detect`]: 7x7 grid decoding, IoU, NMS, training loss and mAP.
//! - [`synth`]: deterministic C header emission and its round-trip parser.
//! - [`pipeline`]: PPM ingestion, block-wise image loading, the latency and
//!   energy model, and end-to-end detect/eval runs.

pub mod detect;
pub mod error;
pub mod infer;
pub mod model;
pub mod pipeline;
pub mod quant;
pub mod synth;
pub mod tensor;
mod wire;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
