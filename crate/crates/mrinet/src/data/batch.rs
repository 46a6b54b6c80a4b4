use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::AugmentParams;
use super::imaging::{decode_and_resize, preprocess, PreprocessMode};
use super::index::DatasetIndex;
use crate::error::{Error, Result};
use crate::seeding::mix_seeds;
use crate::tensor::Tensor;

/// Shuffled batch plan for one epoch: record positions, chunked by batch
/// size. One epoch yields `ceil(N/B)` batches (the last possibly partial)
/// and covers every record exactly once. The permutation is a pure function
/// of `(shuffle_seed, epoch)`.
pub fn epoch_plan(
    index_len: usize,
    batch_size: usize,
    shuffle_seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if index_len == 0 {
        return Err(Error::EmptyIndex { what: "batch iteration" });
    }
    if batch_size == 0 {
        return Err(Error::Config { what: "batch size must be at least 1".into() });
    }
    let mut order: Vec<usize> = (0..index_len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seeds(&[shuffle_seed, epoch, 0xBA7C]));
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Everything a batch stream needs besides the index itself.
#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub batch_size: usize,
    /// `(height, width)` images are resized to before augmentation.
    pub input_size: (usize, usize),
    pub preprocess: PreprocessMode,
    /// `None` disables augmentation (validation/evaluation).
    pub augment: Option<AugmentParams>,
    pub shuffle_seed: u64,
    pub epoch: u64,
}

/// Iterator over `(images [B, H, W, 3], labels [B])` batches for one epoch.
pub struct BatchStream<'a> {
    index: &'a DatasetIndex,
    opts: BatchOptions,
    plan: Vec<Vec<usize>>,
    next: usize,
}

/// Build the epoch stream: decode, resize, optionally augment (keyed by
/// `(seed, epoch, sample_index)`), then preprocess.
pub fn batch_iter<'a>(index: &'a DatasetIndex, opts: &BatchOptions) -> Result<BatchStream<'a>> {
    if let Some(a) = &opts.augment {
        a.validate()?;
    }
    let plan = epoch_plan(index.len(), opts.batch_size, opts.shuffle_seed, opts.epoch)?;
    Ok(BatchStream { index, opts: opts.clone(), plan, next: 0 })
}

impl<'a> BatchStream<'a> {
    pub fn num_batches(&self) -> usize {
        self.plan.len()
    }

    /// Load one batch given record positions (in-plan order).
    pub fn load(&self, positions: &[usize]) -> Result<(Tensor<f32>, Vec<usize>)> {
        let (h, w) = self.opts.input_size;
        let mut images = Tensor::zeros(&[positions.len(), h, w, 3]);
        let mut labels = Vec::with_capacity(positions.len());
        let plane = h * w * 3;
        for (row, &pos) in positions.iter().enumerate() {
            let record = &self.index.records()[pos];
            let path = self.index.abs_path(record);
            let mut img = decode_and_resize(&path, (h, w))?;
            if let Some(params) = &self.opts.augment {
                let seed = AugmentParams::stream_seed(
                    self.opts.shuffle_seed,
                    self.opts.epoch,
                    pos as u64,
                );
                img = super::augment::augment_sample(&img, &params.draw(seed));
            }
            let img = preprocess(&img, self.opts.preprocess);
            images.data_mut()[row * plane..(row + 1) * plane].copy_from_slice(img.data());
            labels.push(record.class_id);
        }
        Ok((images, labels))
    }
}

impl<'a> Iterator for BatchStream<'a> {
    type Item = Result<(Tensor<f32>, Vec<usize>)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.plan.len() {
            return None;
        }
        let positions = self.plan[self.next].clone();
        self.next += 1;
        Some(self.load(&positions))
    }
}
