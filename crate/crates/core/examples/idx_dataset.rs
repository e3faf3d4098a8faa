//! Parses IDX image and label files and derives the parity (utility) versus
//! digit (privacy) tasks. Pass real MNIST-style files, or run without
//! arguments to use a small in-memory pair.
//!
//! ```bash
//! cargo run --example idx_dataset -- train-images-idx3-ubyte train-labels-idx1-ubyte
//! ```

use freqshield::datasets::{derive_tasks, load_idx, parse_idx, TaskScheme};

fn idx_pair(n: usize, side: usize) -> (Vec<u8>, Vec<u8>) {
    let mut images = vec![0, 0, 0x08, 0x03];
    for d in [n, side, side] {
        images.extend((d as u32).to_be_bytes());
    }
    let mut labels = vec![0, 0, 0x08, 0x01];
    labels.extend((n as u32).to_be_bytes());
    for i in 0..n {
        let digit = (i % 10) as u8;
        labels.push(digit);
        images.extend((0..side * side).map(|p| ((p * 13 + digit as usize * 25) % 256) as u8));
    }
    (images, labels)
}

fn main() -> freqshield::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let raw = match args.as_slice() {
        [images, labels] => load_idx(images, labels)?,
        _ => {
            let (images, labels) = idx_pair(200, 28);
            parse_idx(&images, &labels)?
        }
    };
    println!("{} images of shape {:?}", raw.images.len(), raw.images[0].shape());

    let split = derive_tasks(&raw, TaskScheme::ParityVsDigit, 42)?;
    println!(
        "{} train / {} test, padded to {:?}; k_t = {}, k_p = {}",
        split.train.len(),
        split.test.len(),
        split.image_shape(),
        split.k_t,
        split.k_p
    );
    let e = &split.train[0];
    println!("first training example: parity {} digit {}", e.y_t, e.y_p);
    Ok(())
}
