//! The two image transformation networks and the three-class discriminator.
//!
//! Both are plain feed-forward stacks of [`LayerSpec`]s. A training-mode
//! forward pass records a [`Trace`] that [`backward`] consumes; inference
//! uses the running batch-norm statistics and keeps nothing.

use indexmap::IndexMap;
use ndarray::{Array1, Array2, Array4, ArrayD, ArrayView1, ArrayView4, ArrayViewMut1, ArrayViewMut4, Axis, Ix1, Ix4, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, BatchNormCache, BatchStats, ConvGeometry, Padding};
use crate::real::Real;
use crate::tensor::check_image;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const INIT_STD: f64 = 0.02;
/// Weight kept on the old running statistic at each update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Index of the discriminator block whose activation feeds the perceptual loss.
pub const PERCEPTUAL_LAYER: usize = 2;

/// One conv layer, optionally followed by batch-norm, leaky-ReLU and 2x upsampling
/// (in that order). Layers without batch-norm carry a bias.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub conv: ConvGeometry,
    pub batch_norm: bool,
    pub activation: bool,
    pub upsample: bool,
}

impl LayerSpec {
    fn has_bias(&self) -> bool {
        !self.batch_norm
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub channels: [usize; 5],
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            channels: [64, 128, 256, 128, 64],
        }
    }
}

impl GeneratorSpec {
    /// Channel widths divided by `divisor` (at least one channel per layer).
    pub fn scaled(divisor: usize) -> Result<Self> {
        if divisor == 0 {
            return Err(Error::invalid("width divisor must be positive"));
        }
        Ok(GeneratorSpec {
            channels: GeneratorSpec::default().channels.map(|c| (c / divisor).max(1)),
        })
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let c = self.channels;
        let block = |name: &str, conv, upsample| LayerSpec {
            name: name.to_string(),
            conv,
            batch_norm: true,
            activation: true,
            upsample,
        };
        vec![
            block("conv1", ConvGeometry::square(3, c[0], 5, 1, Padding::same(2)), false),
            block("conv2", ConvGeometry::square(c[0], c[1], 4, 2, Padding::same(1)), false),
            block("conv3", ConvGeometry::square(c[1], c[2], 4, 2, Padding::same(1)), false),
            block("conv4", ConvGeometry::square(c[2], c[3], 3, 1, Padding::same(1)), true),
            block("conv5", ConvGeometry::square(c[3], c[4], 3, 1, Padding::same(1)), true),
            LayerSpec {
                name: "conv6".into(),
                conv: ConvGeometry::square(c[4], 3, 4, 1, Padding::asymmetric(1, 2)),
                batch_norm: false,
                activation: false,
                upsample: false,
            },
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub channels: [usize; 5],
    pub image_size: usize,
}

impl DiscriminatorSpec {
    pub fn new(image_size: usize) -> Result<Self> {
        Self::scaled(image_size, 1)
    }

    pub fn scaled(image_size: usize, divisor: usize) -> Result<Self> {
        if image_size == 0 || image_size % 32 != 0 {
            return Err(Error::shape(format!(
                "discriminator input size {image_size} is not a positive multiple of 32"
            )));
        }
        if divisor == 0 {
            return Err(Error::invalid("width divisor must be positive"));
        }
        Ok(DiscriminatorSpec {
            channels: [64, 128, 256, 512, 1024].map(|c| (c / divisor).max(1)),
            image_size,
        })
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let c = self.channels;
        let mut layers = Vec::with_capacity(6);
        let mut prev = 3;
        for (i, &ch) in c.iter().enumerate() {
            layers.push(LayerSpec {
                name: format!("conv{}", i + 1),
                conv: ConvGeometry::square(prev, ch, 4, 2, Padding::same(1)),
                batch_norm: true,
                activation: true,
                upsample: false,
            });
            prev = ch;
        }
        // Final kernel spans the whole remaining map so logits are global.
        layers.push(LayerSpec {
            name: "conv6".into(),
            conv: ConvGeometry::square(prev, 3, self.image_size / 32, 1, Padding::same(0)),
            batch_norm: false,
            activation: false,
            upsample: false,
        });
        layers
    }
}

/// Named learnable arrays plus non-learnable buffers (running statistics).
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T> {
    pub learnable: IndexMap<String, ArrayD<T>>,
    pub buffers: IndexMap<String, ArrayD<T>>,
}

pub type Grads<T> = IndexMap<String, ArrayD<T>>;

impl<T: Real> NetworkParams<T> {
    /// Conv weights from `N(0, 0.02^2)`; biases and shifts 0; scales 1.
    pub fn init(layers: &[LayerSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut learnable = IndexMap::new();
        let mut buffers = IndexMap::new();
        for l in layers {
            let shape = l.conv.weight_shape();
            let w = ArrayD::from_shape_simple_fn(IxDyn(&shape), || T::of(normal.sample(&mut rng)));
            learnable.insert(format!("{}.weight", l.name), w);
            let c = l.conv.out_channels;
            if l.has_bias() {
                learnable.insert(format!("{}.bias", l.name), ArrayD::zeros(IxDyn(&[c])));
            }
            if l.batch_norm {
                learnable.insert(format!("{}.gamma", l.name), ArrayD::ones(IxDyn(&[c])));
                learnable.insert(format!("{}.beta", l.name), ArrayD::zeros(IxDyn(&[c])));
                buffers.insert(format!("{}.running_mean", l.name), ArrayD::zeros(IxDyn(&[c])));
                buffers.insert(format!("{}.running_var", l.name), ArrayD::ones(IxDyn(&[c])));
            }
        }
        NetworkParams { learnable, buffers }
    }

    pub fn zeros_like_learnable(&self) -> Grads<T> {
        self.learnable
            .iter()
            .map(|(k, v)| (k.clone(), ArrayD::zeros(v.raw_dim())))
            .collect()
    }

    /// Zeroes the last layer's weights and bias so the network outputs zeros.
    pub fn zero_final_layer(&mut self, layers: &[LayerSpec]) {
        let last = &layers.last().expect("non-empty network").name;
        for suffix in ["weight", "bias"] {
            if let Some(a) = self.learnable.get_mut(&format!("{last}.{suffix}")) {
                a.fill(T::zero());
            }
        }
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        let conv = |m: &IndexMap<String, ArrayD<T>>| {
            m.iter()
                .map(|(k, v)| (k.clone(), v.mapv(|x| U::of(x.f64()))))
                .collect()
        };
        NetworkParams {
            learnable: conv(&self.learnable),
            buffers: conv(&self.buffers),
        }
    }

    /// SHA-256 over names, shapes and values (as f64) of every array.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (kind, map) in [("param", &self.learnable), ("buffer", &self.buffers)] {
            for (name, a) in map {
                h.update(format!("{kind}/{name}{:?}", a.shape()).as_bytes());
                for v in a.iter() {
                    h.update(v.f64().to_le_bytes());
                }
            }
        }
        crate::checkpoint::hex(&h.finalize())
    }

    pub fn all_finite(&self) -> bool {
        self.learnable
            .values()
            .chain(self.buffers.values())
            .all(|a| a.iter().all(|v| v.is_finite()))
    }

    /// Checks every expected array is present with the expected shape.
    pub fn validate(&self, layers: &[LayerSpec]) -> Result<()> {
        let reference = NetworkParams::<T>::init(layers, 0);
        for (map, expected) in [(&self.learnable, &reference.learnable), (&self.buffers, &reference.buffers)] {
            if map.len() != expected.len() {
                return Err(Error::shape(format!(
                    "expected {} arrays, found {}",
                    expected.len(),
                    map.len()
                )));
            }
            for (name, want) in expected {
                match map.get(name) {
                    Some(a) if a.shape() == want.shape() => {}
                    Some(a) => {
                        return Err(Error::shape(format!(
                            "{name}: shape {:?}, expected {:?}",
                            a.shape(),
                            want.shape()
                        )))
                    }
                    None => return Err(Error::shape(format!("missing array {name}"))),
                }
            }
        }
        Ok(())
    }

    fn array1(&self, name: &str) -> Result<ArrayView1<'_, T>> {
        let a = self
            .learnable
            .get(name)
            .or_else(|| self.buffers.get(name))
            .ok_or_else(|| Error::shape(format!("missing array {name}")))?;
        a.view()
            .into_dimensionality::<Ix1>()
            .map_err(|e| Error::shape(format!("{name}: {e}")))
    }

    fn array4(&self, name: &str) -> Result<ArrayView4<'_, T>> {
        let a = self
            .learnable
            .get(name)
            .ok_or_else(|| Error::shape(format!("missing array {name}")))?;
        a.view()
            .into_dimensionality::<Ix4>()
            .map_err(|e| Error::shape(format!("{name}: {e}")))
    }
}

fn grad1<'a, T: Real>(grads: &'a mut Grads<T>, name: &str) -> Result<ArrayViewMut1<'a, T>> {
    grads
        .get_mut(name)
        .ok_or_else(|| Error::shape(format!("missing gradient {name}")))?
        .view_mut()
        .into_dimensionality::<Ix1>()
        .map_err(|e| Error::shape(format!("{name}: {e}")))
}

fn grad4<'a, T: Real>(grads: &'a mut Grads<T>, name: &str) -> Result<ArrayViewMut4<'a, T>> {
    grads
        .get_mut(name)
        .ok_or_else(|| Error::shape(format!("missing gradient {name}")))?
        .view_mut()
        .into_dimensionality::<Ix4>()
        .map_err(|e| Error::shape(format!("{name}: {e}")))
}

struct LayerTrace<T> {
    input: Array4<T>,
    bn: Option<(BatchNormCache<T>, BatchStats<T>)>,
    /// Post-activation output before any upsampling.
    activated: Option<Array4<T>>,
}

/// Everything a training-mode forward pass keeps for [`backward`].
pub struct Trace<T> {
    layers: Vec<LayerTrace<T>>,
}

impl<T: Real> Trace<T> {
    /// Output of layer `i` (for `i` below the last layer).
    pub fn layer_output(&self, i: usize) -> ArrayView4<'_, T> {
        self.layers[i + 1].input.view()
    }

    /// Folds this pass's batch statistics into the running averages.
    pub fn update_running_stats(&self, layers: &[LayerSpec], params: &mut NetworkParams<T>) {
        let keep = T::of(BN_MOMENTUM);
        let take = T::one() - keep;
        for (spec, lt) in layers.iter().zip(&self.layers) {
            if let Some((_, stats)) = &lt.bn {
                for (suffix, batch) in [("running_mean", &stats.mean), ("running_var", &stats.var)] {
                    let buf = params
                        .buffers
                        .get_mut(&format!("{}.{suffix}", spec.name))
                        .expect("buffer present for batch-norm layer");
                    ndarray::Zip::from(buf).and(batch.view().into_dyn()).for_each(|r, &b| *r = keep * *r + take * b);
                }
            }
        }
    }
}

pub enum NormMode {
    /// Per-batch statistics with a trace for backward.
    Train,
    /// Running statistics, no trace.
    Inference,
}

/// Runs the stack. Returns the final output, the requested intermediate
/// outputs (post-activation, post-upsample), and a trace in `Train` mode.
pub fn forward<T: Real>(
    layers: &[LayerSpec],
    params: &NetworkParams<T>,
    x: &ArrayView4<'_, T>,
    mode: NormMode,
    taps: &[usize],
) -> Result<(Array4<T>, Vec<Array4<T>>, Option<Trace<T>>)> {
    let slope = T::of(LEAKY_SLOPE);
    let training = matches!(mode, NormMode::Train);
    let mut traces = Vec::with_capacity(layers.len());
    let mut tapped = Vec::with_capacity(taps.len());
    let mut h = x.to_owned();
    for (i, l) in layers.iter().enumerate() {
        let w = params.array4(&format!("{}.weight", l.name))?;
        let bias = if l.has_bias() {
            Some(params.array1(&format!("{}.bias", l.name))?)
        } else {
            None
        };
        let mut y = nn::conv2d_forward(&l.conv, &h.view(), &w, bias.as_ref())?;
        let mut bn = None;
        if l.batch_norm {
            let gamma = params.array1(&format!("{}.gamma", l.name))?;
            let beta = params.array1(&format!("{}.beta", l.name))?;
            if training {
                let (out, cache, stats) = nn::batch_norm_train(&y.view(), &gamma, &beta);
                y = out;
                bn = Some((cache, stats));
            } else {
                let rm = params.array1(&format!("{}.running_mean", l.name))?;
                let rv = params.array1(&format!("{}.running_var", l.name))?;
                y = nn::batch_norm_eval(&y.view(), &gamma, &beta, &rm, &rv);
            }
        }
        let mut activated = None;
        if l.activation {
            nn::leaky_relu_inplace(&mut y, slope);
            if training {
                activated = Some(y.clone());
            }
        }
        if l.upsample {
            y = nn::upsample2x(&y.view());
        }
        if taps.contains(&i) {
            tapped.push(y.clone());
        }
        if training {
            traces.push(LayerTrace {
                input: std::mem::replace(&mut h, y),
                bn,
                activated,
            });
        } else {
            h = y;
        }
    }
    let trace = training.then_some(Trace { layers: traces });
    Ok((h, tapped, trace))
}

/// Back-propagates `dy` through a traced pass, accumulating into `grads`.
/// `tap_grads` inject extra gradient at intermediate layer outputs.
/// Returns the input gradient when `need_input_grad` is set.
pub fn backward<T: Real>(
    layers: &[LayerSpec],
    params: &NetworkParams<T>,
    trace: &Trace<T>,
    dy: Array4<T>,
    tap_grads: &[(usize, ArrayView4<'_, T>)],
    grads: &mut Grads<T>,
    need_input_grad: bool,
) -> Result<Option<Array4<T>>> {
    let slope = T::of(LEAKY_SLOPE);
    let mut g = dy;
    for (i, (l, lt)) in layers.iter().zip(&trace.layers).enumerate().rev() {
        for (_, extra) in tap_grads.iter().filter(|(k, _)| *k == i) {
            if extra.dim() != g.dim() {
                return Err(Error::shape(format!("tap gradient at layer {i}: {:?} vs {:?}", extra.dim(), g.dim())));
            }
            g += extra;
        }
        if l.upsample {
            g = nn::upsample2x_backward(&g.view());
        }
        if let Some(act) = &lt.activated {
            nn::leaky_relu_backward(&act.view(), &mut g, slope);
        }
        if let Some((cache, _)) = &lt.bn {
            let gamma = params.array1(&format!("{}.gamma", l.name))?;
            let mut dgamma_beta = (
                grads_take1(grads, &format!("{}.gamma", l.name))?,
                grads_take1(grads, &format!("{}.beta", l.name))?,
            );
            g = nn::batch_norm_backward(cache, &gamma, &g.view(), &mut dgamma_beta.0.view_mut(), &mut dgamma_beta.1.view_mut());
            grads_put1(grads, &format!("{}.gamma", l.name), dgamma_beta.0);
            grads_put1(grads, &format!("{}.beta", l.name), dgamma_beta.1);
        }
        let w = params.array4(&format!("{}.weight", l.name))?;
        let want_dx = i > 0 || need_input_grad;
        let dx = if l.has_bias() {
            let mut db = grads_take1(grads, &format!("{}.bias", l.name))?;
            let dx = nn::conv2d_backward(
                &l.conv,
                &lt.input.view(),
                &w,
                &g.view(),
                &mut grad4(grads, &format!("{}.weight", l.name))?,
                Some(&mut db.view_mut()),
                want_dx,
            )?;
            grads_put1(grads, &format!("{}.bias", l.name), db);
            dx
        } else {
            nn::conv2d_backward(
                &l.conv,
                &lt.input.view(),
                &w,
                &g.view(),
                &mut grad4(grads, &format!("{}.weight", l.name))?,
                None,
                want_dx,
            )?
        };
        match dx {
            Some(dx) => g = dx,
            None => return Ok(None),
        }
    }
    Ok(Some(g))
}

// Small per-channel gradients are moved out and back so two of them can be
// borrowed mutably at once.
fn grads_take1<T: Real>(grads: &mut Grads<T>, name: &str) -> Result<Array1<T>> {
    let v = grad1(grads, name)?;
    Ok(v.to_owned())
}

fn grads_put1<T: Real>(grads: &mut Grads<T>, name: &str, value: Array1<T>) {
    if let Some(slot) = grads.get_mut(name) {
        slot.assign(&value.into_dyn());
    }
}

/// Image transformation network producing a residual image.
#[derive(Clone, Debug)]
pub struct Generator {
    pub spec: GeneratorSpec,
    pub layers: Vec<LayerSpec>,
}

impl Generator {
    pub fn new(spec: GeneratorSpec) -> Self {
        let layers = spec.layers();
        Generator { spec, layers }
    }

    pub fn init_params<T: Real>(&self, seed: u64) -> NetworkParams<T> {
        NetworkParams::init(&self.layers, seed)
    }

    /// Inference-mode residual for `x`; the residual is not clamped.
    pub fn forward<T: Real>(&self, params: &NetworkParams<T>, x: &ArrayView4<'_, T>) -> Result<Array4<T>> {
        check_image(x, 4)?;
        Ok(forward(&self.layers, params, x, NormMode::Inference, &[])?.0)
    }

    pub fn forward_train<T: Real>(
        &self,
        params: &NetworkParams<T>,
        x: &ArrayView4<'_, T>,
    ) -> Result<(Array4<T>, Trace<T>)> {
        check_image(x, 4)?;
        let (r, _, trace) = forward(&self.layers, params, x, NormMode::Train, &[])?;
        Ok((r, trace.expect("train mode keeps a trace")))
    }
}

/// Output of a discriminator pass.
pub struct DiscriminatorOutput<T> {
    pub logits: Array2<T>,
    pub probs: Array2<T>,
    /// Third block's post-activation feature map.
    pub phi: Array4<T>,
}

/// Three-class discriminator over {real negative, real positive, generated}.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    pub layers: Vec<LayerSpec>,
}

impl Discriminator {
    pub fn new(spec: DiscriminatorSpec) -> Self {
        let layers = spec.layers();
        Discriminator { spec, layers }
    }

    pub fn init_params<T: Real>(&self, seed: u64) -> NetworkParams<T> {
        NetworkParams::init(&self.layers, seed)
    }

    fn check<T>(&self, x: &ArrayView4<'_, T>) -> Result<()> {
        check_image(x, 32)?;
        let (_, _, h, w) = x.dim();
        if h != self.spec.image_size || w != self.spec.image_size {
            return Err(Error::shape(format!(
                "discriminator built for {0}x{0} inputs, got {h}x{w}",
                self.spec.image_size
            )));
        }
        Ok(())
    }

    /// Inference-mode pass using running batch-norm statistics.
    pub fn forward<T: Real>(&self, params: &NetworkParams<T>, x: &ArrayView4<'_, T>) -> Result<DiscriminatorOutput<T>> {
        self.check(x)?;
        let (out, mut taps, _) = forward(&self.layers, params, x, NormMode::Inference, &[PERCEPTUAL_LAYER])?;
        let logits = flatten_logits(out);
        Ok(DiscriminatorOutput {
            probs: softmax_rows(&logits),
            logits,
            phi: taps.pop().expect("tap requested"),
        })
    }

    pub fn forward_train<T: Real>(
        &self,
        params: &NetworkParams<T>,
        x: &ArrayView4<'_, T>,
    ) -> Result<(DiscriminatorOutput<T>, Trace<T>)> {
        self.check(x)?;
        let (out, mut taps, trace) = forward(&self.layers, params, x, NormMode::Train, &[PERCEPTUAL_LAYER])?;
        let logits = flatten_logits(out);
        Ok((
            DiscriminatorOutput {
                probs: softmax_rows(&logits),
                logits,
                phi: taps.pop().expect("tap requested"),
            },
            trace.expect("train mode keeps a trace"),
        ))
    }

    /// Back-propagates logit and feature-map gradients; returns the input gradient.
    pub fn backward<T: Real>(
        &self,
        params: &NetworkParams<T>,
        trace: &Trace<T>,
        dlogits: &Array2<T>,
        dphi: Option<&ArrayView4<'_, T>>,
        grads: &mut Grads<T>,
        need_input_grad: bool,
    ) -> Result<Option<Array4<T>>> {
        let (n, k) = dlogits.dim();
        let dy = dlogits
            .clone()
            .into_shape_with_order((n, k, 1, 1))
            .map_err(|e| Error::shape(e.to_string()))?;
        let taps: Vec<(usize, ArrayView4<'_, T>)> = dphi.map(|d| (PERCEPTUAL_LAYER, d.view())).into_iter().collect();
        backward(&self.layers, params, trace, dy, &taps, grads, need_input_grad)
    }
}

fn flatten_logits<T: Real>(out: Array4<T>) -> Array2<T> {
    let (n, k, h, w) = out.dim();
    debug_assert_eq!((h, w), (1, 1));
    out.into_shape_with_order((n, k * h * w)).expect("contiguous output")
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Real>(logits: &Array2<T>) -> Array2<T> {
    let mut p = logits.clone();
    for mut row in p.axis_iter_mut(Axis(0)) {
        let m = row.fold(T::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s: T = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::Rng;

    fn random_image(n: usize, size: usize, seed: u64) -> Array4<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn((n, 3, size, size), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn generator_preserves_shape() {
        let g = Generator::new(GeneratorSpec::scaled(16).unwrap());
        let p = g.init_params::<f32>(1);
        for size in [32, 64, 96, 128] {
            let x = random_image(1, size, 2);
            assert_eq!(g.forward(&p, &x.view()).unwrap().dim(), (1, 3, size, size));
        }
    }

    #[test]
    fn generator_rejects_bad_size() {
        let g = Generator::new(GeneratorSpec::scaled(16).unwrap());
        let p = g.init_params::<f32>(1);
        let x = Array4::<f32>::zeros((1, 3, 30, 30));
        assert!(matches!(g.forward(&p, &x.view()), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_final_layer_gives_zero_residual() {
        let g = Generator::new(GeneratorSpec::scaled(8).unwrap());
        let mut p = g.init_params::<f32>(4);
        p.zero_final_layer(&g.layers);
        let x = random_image(2, 32, 5);
        assert!(g.forward(&p, &x.view()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn discriminator_shapes() {
        let d = Discriminator::new(DiscriminatorSpec::scaled(64, 8).unwrap());
        let p = d.init_params::<f32>(3);
        let x = random_image(2, 64, 6);
        let out = d.forward(&p, &x.view()).unwrap();
        assert_eq!(out.logits.dim(), (2, 3));
        assert_eq!(out.phi.dim(), (2, 32, 8, 8));
        for row in out.probs.axis_iter(Axis(0)) {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
        let bad = random_image(1, 48, 6);
        assert!(d.forward(&p, &bad.view()).is_err());
    }

    #[test]
    fn init_statistics_and_determinism() {
        let d = Discriminator::new(DiscriminatorSpec::new(128).unwrap());
        let p = d.init_params::<f64>(11);
        let w = &p.learnable["conv3.weight"];
        assert!(w.len() >= 10_000);
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let std = (w.mapv(|v| (v - mean) * (v - mean)).sum() / n).sqrt();
        assert!(mean.abs() < 0.002, "mean {mean}");
        assert!((0.018..=0.022).contains(&std), "std {std}");
        assert_eq!(p, d.init_params::<f64>(11));
        assert_ne!(p, d.init_params::<f64>(12));
        assert!(p.learnable["conv1.gamma"].iter().all(|&v| v == 1.0));
        assert!(p.learnable["conv6.bias"].iter().all(|&v| v == 0.0));
    }
}
