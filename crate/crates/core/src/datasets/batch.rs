use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LabeledExample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A stacked mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `N × C × H × W`.
    pub images: Tensor<f32>,
    pub y_t: Vec<usize>,
    pub y_p: Vec<usize>,
    /// Positions of the examples in the source slice.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn gather(examples: &[LabeledExample], indices: &[usize]) -> Result<Self> {
        let first = indices
            .first()
            .and_then(|&i| examples.get(i))
            .ok_or_else(|| Error::Usage("cannot build an empty batch".into()))?;
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(first.image.shape());
        let mut data = Vec::with_capacity(shape.iter().product());
        let (mut y_t, mut y_p) = (Vec::with_capacity(indices.len()), Vec::with_capacity(indices.len()));
        for &i in indices {
            let e = examples
                .get(i)
                .ok_or_else(|| Error::Index(format!("example {i} out of {}", examples.len())))?;
            if e.image.shape() != first.image.shape() {
                return Err(Error::Dimension(format!(
                    "example {i} has shape {:?}, batch has {:?}",
                    e.image.shape(),
                    first.image.shape()
                )));
            }
            data.extend_from_slice(e.image.data());
            y_t.push(e.y_t);
            y_p.push(e.y_p);
        }
        Ok(Self {
            images: Tensor::new(shape, data)?,
            y_t,
            y_p,
            indices: indices.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// The shuffled visiting order for one epoch. The permutation depends only
/// on `(seed, epoch)`: the epoch selects an independent ChaCha stream.
pub fn epoch_order(len: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

/// Shuffled mini-batches for one epoch; the last partial batch is kept.
/// With `seed = None` the examples are visited in their stored order.
pub fn batches<'a>(
    examples: &'a [LabeledExample],
    batch_size: usize,
    seed: Option<u64>,
    epoch: u64,
) -> Result<impl Iterator<Item = Result<Batch>> + 'a> {
    if batch_size == 0 {
        return Err(Error::Usage("batch size must be positive".into()));
    }
    let order = match seed {
        Some(s) => epoch_order(examples.len(), s, epoch),
        None => (0..examples.len()).collect(),
    };
    let chunks: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    Ok(chunks.into_iter().map(move |idx| Batch::gather(examples, &idx)))
}
