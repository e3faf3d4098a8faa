//! Saves a U-Net encoder to the binary checkpoint format, reloads it and
//! shows that predictions are unchanged and that corruption is detected.
//!
//! ```bash
//! cargo run --example checkpoint
//! ```

use freqshield::nn::{Checkpoint, ModelKind, UNet};
use freqshield::Tensor;

fn main() -> freqshield::Result<()> {
    let encoder = UNet::<f32>::seeded(3, 4, 11);
    let ckpt = Checkpoint::from_module(ModelKind::Encoder, &encoder);
    let bytes = ckpt.to_bytes();
    println!("{} tensors, {} bytes: {:?}", ckpt.names().count(), bytes.len(), ckpt.names().take(3).collect::<Vec<_>>());

    let restored: UNet<f32> = Checkpoint::from_bytes(&bytes)?.to_unet()?;
    let x = Tensor::<f32>::from_fn(&[1, 3, 16, 16], |i| (i % 17) as f32 / 16.0);
    let same = encoder.predict(&x)?.max_abs_diff(&restored.predict(&x)?);
    println!("max output difference after reload: {same}");

    let mut damaged = bytes.clone();
    let last = damaged.len() - 1;
    damaged[last] ^= 0xff;
    match Checkpoint::from_bytes(&damaged) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("damaged checkpoint rejected: {e}"),
    }
    Ok(())
}
