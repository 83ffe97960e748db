//! Block-wise image loading into the device data memory.

use crate::error::{Error, Result};
use crate::model::ACTIVATION_BUDGET_BYTES;
use crate::quant::{quantize_value, QuantParams};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLoadPlan {
    pub image_bytes: usize,
    pub block_size: usize,
    pub block_count: usize,
    pub buffer_capacity: usize,
}

pub fn plan_blocks(image_bytes: usize, block_size: usize) -> Result<BlockLoadPlan> {
    let buffer_capacity = ACTIVATION_BUDGET_BYTES;
    if block_size == 0 {
        return Err(Error::ZeroBlockSize);
    }
    if block_size > buffer_capacity {
        return Err(Error::BlockTooLarge {
            block_size,
            capacity: buffer_capacity,
        });
    }
    if image_bytes > buffer_capacity {
        return Err(Error::ImageTooLarge {
            image_bytes,
            capacity: buffer_capacity,
        });
    }
    Ok(BlockLoadPlan {
        image_bytes,
        block_size,
        block_count: image_bytes.div_ceil(block_size),
        buffer_capacity,
    })
}

/// Quantizes the image one block at a time into the device buffer and
/// returns the reassembled INT8 tensor.
pub fn stream_blocks(image: &Tensor<f32>, plan: &BlockLoadPlan) -> Result<Tensor<i8>> {
    let values = image.data();
    if values.len() != plan.image_bytes {
        return Err(Error::ShapeMismatch(format!(
            "plan is for {} bytes, image has {}",
            plan.image_bytes,
            values.len()
        )));
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { index });
    }
    let p = QuantParams::input();
    let mut buffer: Vec<i8> = Vec::with_capacity(plan.image_bytes);
    let mut loaded = 0;
    for block in values.chunks(plan.block_size) {
        buffer.extend(block.iter().map(|&v| quantize_value(v, p)));
        loaded += 1;
    }
    debug_assert_eq!(loaded, plan.block_count);
    Tensor::new(image.shape(), buffer)
}
