//! Plans the block-wise transfer of a 224x224 RGB image into the device
//! buffer and checks that streaming is byte-identical to quantizing the
//! whole image at once.

use tinydet::pipeline::{plan_blocks, stream_blocks, RgbImage};
use tinydet::quant::{quantize_tensor, QuantParams};

fn main() -> tinydet::Result<()> {
    let pixels = (0..224 * 224 * 3).map(|i| (i * 31 % 251) as u8).collect();
    let image = RgbImage::new(224, 224, pixels)?.to_tensor();
    let direct = quantize_tensor(&image, QuantParams::input())?;

    for block_size in [1, 4096, 16_384, 150_528, 917_504] {
        let plan = plan_blocks(image.data().len(), block_size)?;
        let streamed = stream_blocks(&image, &plan)?;
        println!(
            "block {:>7} B -> {:>6} blocks, identical: {}",
            plan.block_size,
            plan.block_count,
            streamed == direct
        );
    }
    match plan_blocks(150_528, 1 << 20) {
        Err(e) => println!("1 MiB blocks: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
