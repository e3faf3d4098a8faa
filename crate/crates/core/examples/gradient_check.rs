//! Reverse-mode gradients through a convolution, the spectral low-pass
//! filter and a cross-entropy loss, compared with central differences.
//!
//! ```bash
//! cargo run --example gradient_check
//! ```

use std::sync::Arc;

use freqshield::spectral::{FilterSpec, SpectralFilter};
use freqshield::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(g: &mut Graph<f64>, x: Var, w: Var, filter: &Arc<SpectralFilter<f64>>) -> Var {
    let y = g.conv2d(x, w, 1, 1).unwrap();
    let y = g.relu(y);
    let y = filter.apply_var(g, y).unwrap();
    let y = g.reshape(y, &[2, 2 * 8 * 8]).unwrap();
    g.softmax_cross_entropy(y, &[3, 100]).unwrap()
}

fn main() -> freqshield::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Tensor::<f64>::from_fn(&[2, 3, 8, 8], |_| rng.gen_range(0.0..1.0));
    let w = Tensor::<f64>::from_fn(&[2, 3, 3, 3], |_| rng.gen_range(-0.5..0.5));
    let filter = Arc::new(SpectralFilter::new(FilterSpec::low_pass(0.3, (8, 8))?)?);

    let mut g = Graph::new();
    let xv = g.constant(&x);
    let wv = g.param(&w);
    let l = loss(&mut g, xv, wv, &filter);
    println!("loss {:.6}", g.scalar(l)?);
    let grads = g.backward(l)?;
    let analytic = grads.get(wv).expect("weight gradient").to_vec();

    let h = 1e-6;
    let eval = |w: &Tensor<f64>| {
        let mut g = Graph::new();
        let (xv, wv) = (g.constant(&x), g.constant(w));
        let l = loss(&mut g, xv, wv, &filter);
        g.scalar(l).unwrap()
    };
    let (mut diff, mut norm) = (0.0f64, 0.0f64);
    for i in 0..w.numel() {
        let (mut plus, mut minus) = (w.clone(), w.clone());
        plus.data_mut()[i] += h;
        minus.data_mut()[i] -= h;
        let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
        diff += (analytic[i] - numeric).powi(2);
        norm += numeric * numeric;
    }
    println!("{} weights, relative L2 gradient error {:.2e}", w.numel(), diff.sqrt() / norm.sqrt());
    Ok(())
}
