//! Dataset ingestion, synthetic pairs and batch delivery.

pub mod celeba;
pub mod synth;

use std::path::PathBuf;
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;
use std::thread::JoinHandle;

use image::imageops::FilterType;
use image::DynamicImage;
use ndarray::{s, Array4, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub use celeba::{
    attribute_correlation, make_balanced_training_split, make_test_split, parse_attribute_index, AttributeIndex,
};
pub use synth::{render_sample, synth_generate, AttributeKind, SynthDataset, SynthSample};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::tensor::{from_rgb8, ImageTensor};

/// Stable 64-bit seed from a tag and a list of integers.
pub fn derive_seed(tag: &str, parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Largest centred square, bilinear resize to `target_size`, values in `[-1, 1]`.
pub fn preprocess(raw: &DynamicImage, target_size: usize) -> Result<ImageTensor> {
    let rgb = raw.to_rgb8();
    let (w, h) = rgb.dimensions();
    let side = w.min(h);
    if (side as usize) < target_size || target_size == 0 {
        return Err(Error::Dataset(format!(
            "image {w}x{h} is too small for a {target_size}x{target_size} crop"
        )));
    }
    let crop = image::imageops::crop_imm(&rgb, (w - side) / 2, (h - side) / 2, side, side).to_image();
    let t = target_size as u32;
    let resized = if side == t {
        crop
    } else {
        image::imageops::resize(&crop, t, t, FilterType::Triangle)
    };
    Ok(from_rgb8(&resized))
}

/// Two image classes (0: attribute absent, 1: present) addressed by index.
pub trait PairedSource: Send + Sync {
    fn image_size(&self) -> usize;
    fn class_len(&self, class: usize) -> usize;
    /// Image `index` of `class` as a `(1, 3, H, W)` tensor.
    fn load(&self, class: usize, index: usize) -> Result<ImageTensor>;
}

/// Both classes held in memory as `(n, 3, H, W)` stacks.
pub struct InMemorySource {
    classes: [Array4<f32>; 2],
}

impl InMemorySource {
    pub fn new(neg: Array4<f32>, pos: Array4<f32>) -> Result<Self> {
        let (_, c, h, w) = neg.dim();
        if c != 3 || h != w || (pos.dim().1, pos.dim().2, pos.dim().3) != (c, h, w) {
            return Err(Error::shape(format!(
                "class stacks {:?} and {:?} are not matching square RGB images",
                neg.dim(),
                pos.dim()
            )));
        }
        Ok(InMemorySource { classes: [neg, pos] })
    }

    /// Unpaired training data from synthetic pairs: negatives from even
    /// samples, positives from odd ones, so no face appears in both classes.
    pub fn from_synth(samples: &[SynthSample]) -> Result<Self> {
        let stack = |parity: usize, pos: bool| -> Result<Array4<f32>> {
            let views: Vec<_> = samples
                .iter()
                .skip(parity)
                .step_by(2)
                .map(|s| if pos { s.image_pos.view() } else { s.image_neg.view() })
                .collect();
            if views.is_empty() {
                return Err(Error::Dataset("synthetic training set needs at least two samples".into()));
            }
            ndarray::concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))
        };
        Self::new(stack(0, false)?, stack(1, true)?)
    }
}

impl PairedSource for InMemorySource {
    fn image_size(&self) -> usize {
        self.classes[0].dim().2
    }

    fn class_len(&self, class: usize) -> usize {
        self.classes[class].dim().0
    }

    fn load(&self, class: usize, index: usize) -> Result<ImageTensor> {
        let c = &self.classes[class];
        if index >= c.dim().0 {
            return Err(Error::Dataset(format!("class {class} has no image {index}")));
        }
        Ok(c.slice(s![index..index + 1, .., .., ..]).to_owned())
    }
}

/// Image files decoded and preprocessed on demand.
pub struct FileSource {
    image_size: usize,
    files: [Vec<PathBuf>; 2],
}

impl FileSource {
    pub fn new(image_size: usize, neg: Vec<PathBuf>, pos: Vec<PathBuf>) -> Self {
        FileSource {
            image_size,
            files: [neg, pos],
        }
    }
}

impl PairedSource for FileSource {
    fn image_size(&self) -> usize {
        self.image_size
    }

    fn class_len(&self, class: usize) -> usize {
        self.files[class].len()
    }

    fn load(&self, class: usize, index: usize) -> Result<ImageTensor> {
        let path = self.files[class]
            .get(index)
            .ok_or_else(|| Error::Dataset(format!("class {class} has no image {index}")))?;
        let img = image::open(path).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        preprocess(&img, self.image_size)
    }
}

/// Which images form the batch of one class at one iteration.
///
/// With replacement the draw depends only on `(seed, class, iteration)`.
/// Without, each class is walked through one seeded permutation.
#[derive(Clone, Debug)]
pub struct BatchPlan {
    seed: u64,
    batch_size: usize,
    with_replacement: bool,
    lens: [usize; 2],
    permutations: Option<[Vec<usize>; 2]>,
}

impl BatchPlan {
    pub fn new(config: &TrainConfig, lens: [usize; 2]) -> Result<Self> {
        if lens.contains(&0) {
            return Err(Error::Dataset(format!(
                "dataset must provide both classes, found {} negative and {} positive images",
                lens[0], lens[1]
            )));
        }
        let permutations = (!config.sample_with_replacement).then(|| {
            [0, 1].map(|class| {
                let mut p: Vec<usize> = (0..lens[class]).collect();
                p.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed("permutation", &[config.seed, class as u64])));
                p
            })
        });
        Ok(BatchPlan {
            seed: config.seed,
            batch_size: config.batch_size,
            with_replacement: config.sample_with_replacement,
            lens,
            permutations,
        })
    }

    /// Number of iterations available before a class runs out, if finite.
    pub fn capacity(&self) -> Option<u64> {
        (!self.with_replacement).then(|| (self.lens[0].min(self.lens[1]) / self.batch_size) as u64)
    }

    pub fn indices(&self, class: usize, iteration: u64) -> Result<Vec<usize>> {
        let b = self.batch_size;
        match &self.permutations {
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed("batch", &[self.seed, class as u64, iteration]));
                Ok((0..b).map(|_| rng.random_range(0..self.lens[class])).collect())
            }
            Some(perm) => {
                let start = iteration as usize * b;
                if start + b > perm[class].len() {
                    return Err(Error::Dataset(format!(
                        "class {class} exhausted at iteration {iteration}: {} images, batch {b}, sampling without replacement",
                        perm[class].len()
                    )));
                }
                Ok(perm[class][start..start + b].to_vec())
            }
        }
    }
}

pub struct Batch {
    pub iteration: u64,
    pub neg: Array4<f32>,
    pub pos: Array4<f32>,
}

fn assemble(source: &dyn PairedSource, plan: &BatchPlan, iteration: u64) -> Result<Batch> {
    let mut classes = Vec::with_capacity(2);
    for class in 0..2 {
        let imgs = plan
            .indices(class, iteration)?
            .into_iter()
            .map(|i| source.load(class, i))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = imgs.iter().map(|a| a.view()).collect();
        classes.push(ndarray::concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))?);
    }
    let pos = classes.pop().expect("two classes");
    let neg = classes.pop().expect("two classes");
    Ok(Batch { iteration, neg, pos })
}

/// Background thread that assembles batches ahead of the consumer and hands
/// them over in iteration order.
pub struct BatchLoader {
    rx: Option<Receiver<Result<Batch>>>,
    handle: Option<JoinHandle<()>>,
}

const PREFETCH: usize = 2;

impl BatchLoader {
    /// Batches for iterations `start..end`. Fails up front when sampling
    /// without replacement cannot cover the range.
    pub fn spawn(source: Arc<dyn PairedSource>, config: &TrainConfig, start: u64, end: u64) -> Result<Self> {
        let plan = BatchPlan::new(config, [source.class_len(0), source.class_len(1)])?;
        if let Some(cap) = plan.capacity() {
            if end > cap {
                return Err(Error::Dataset(format!(
                    "sampling without replacement supports {cap} iterations, {end} requested"
                )));
            }
        }
        let (tx, rx) = sync_channel(PREFETCH);
        let handle = std::thread::Builder::new()
            .name("batch-loader".into())
            .spawn(move || {
                for it in start..end {
                    let batch = assemble(source.as_ref(), &plan, it);
                    let failed = batch.is_err();
                    if tx.send(batch).is_err() || failed {
                        break;
                    }
                }
            })?;
        Ok(BatchLoader {
            rx: Some(rx),
            handle: Some(handle),
        })
    }
}

impl Iterator for BatchLoader {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        self.rx.as_ref()?.recv().ok()
    }
}

impl Drop for BatchLoader {
    fn drop(&mut self) {
        // Closing the channel unblocks a producer waiting on a full queue.
        self.rx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AttributeScope;
    use image::{Rgb, RgbImage};

    #[test]
    fn preprocess_celeba_geometry() {
        let img = DynamicImage::ImageRgb8(RgbImage::from_fn(178, 218, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, 7])));
        let t = preprocess(&img, 128).unwrap();
        assert_eq!(t.dim(), (1, 3, 128, 128));
        assert!(t.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn preprocess_extremes() {
        let white = DynamicImage::ImageRgb8(RgbImage::from_pixel(150, 140, Rgb([255; 3])));
        assert!(preprocess(&white, 128).unwrap().iter().all(|&v| v == 1.0));
        let black = DynamicImage::ImageRgb8(RgbImage::from_pixel(150, 140, Rgb([0; 3])));
        assert!(preprocess(&black, 128).unwrap().iter().all(|&v| v == -1.0));
        assert!(preprocess(&black, 141).is_err());
    }

    fn toy_source(n: usize) -> Arc<dyn PairedSource> {
        let neg = Array4::from_shape_fn((n, 3, 32, 32), |(i, _, _, _)| -(i as f32) / n as f32);
        let pos = Array4::from_shape_fn((n, 3, 32, 32), |(i, _, _, _)| i as f32 / n as f32);
        Arc::new(InMemorySource::new(neg, pos).unwrap())
    }

    #[test]
    fn loader_is_ordered_and_stateless() {
        let mut cfg = TrainConfig::desk("t", AttributeScope::Local);
        cfg.batch_size = 3;
        let all: Vec<Batch> = BatchLoader::spawn(toy_source(10), &cfg, 0, 6).unwrap().map(Result::unwrap).collect();
        assert_eq!(all.iter().map(|b| b.iteration).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
        let tail: Vec<Batch> = BatchLoader::spawn(toy_source(10), &cfg, 4, 6).unwrap().map(Result::unwrap).collect();
        assert_eq!(tail[0].neg, all[4].neg);
        assert_eq!(tail[1].pos, all[5].pos);
    }

    #[test]
    fn without_replacement_exhausts() {
        let mut cfg = TrainConfig::desk("t", AttributeScope::Local);
        cfg.batch_size = 4;
        cfg.sample_with_replacement = false;
        assert!(BatchLoader::spawn(toy_source(10), &cfg, 0, 2).is_ok());
        let err = BatchLoader::spawn(toy_source(10), &cfg, 0, 3).err().unwrap();
        assert!(matches!(err, Error::Dataset(_)));
        let plan = BatchPlan::new(&cfg, [10, 10]).unwrap();
        let mut seen: Vec<usize> = (0..2).flat_map(|i| plan.indices(0, i).unwrap()).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn empty_class_rejected() {
        let cfg = TrainConfig::desk("t", AttributeScope::Local);
        assert!(BatchPlan::new(&cfg, [5, 0]).is_err());
    }

    #[test]
    fn dropping_loader_early_does_not_hang() {
        let cfg = TrainConfig::desk("t", AttributeScope::Local);
        let mut l = BatchLoader::spawn(toy_source(4), &cfg, 0, 1000).unwrap();
        l.next().unwrap().unwrap();
        drop(l);
    }
}
