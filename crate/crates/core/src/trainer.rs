//! Dual-learning adversarial training.
//!
//! One iteration:
//! 1. first pass `x~_i = clamp(x_i + G_i(x_i))`;
//! 2. discriminator update on `{x_0 -> 0, x_1 -> 1, x~_0, x~_1 -> 2}` with
//!    the generated images held constant;
//! 3. second pass `x^_0 = G_1(x~_0)`, `x^_1 = G_0(x~_1)`;
//! 4. joint update of both generators on
//!    `gan + dual + alpha * pix + beta * per` with the discriminator fixed.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, s, Array2, Array4, ArrayView4, Axis};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{save_checkpoint, Checkpoint, CheckpointMeta, NetworkState};
use crate::config::{AblationMode, DualGradient, TrainConfig};
use crate::data::{BatchLoader, PairedSource};
use crate::error::{Error, Result};
use crate::losses::{self, dual_target, gan_target, ClassSet, GanLossMode, LossReport};
use crate::networks::{Discriminator, Generator, Grads, NetworkParams, Trace};
use crate::optim::{AdamConfig, AdamState};
use crate::real::Real;
use crate::tensor::{compose, compose_backward};

/// The three networks built from one configuration.
#[derive(Clone, Debug)]
pub struct Models {
    pub generator: Generator,
    pub discriminator: Discriminator,
}

impl Models {
    pub fn from_config(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Models {
            generator: Generator::new(config.generator_spec()?),
            discriminator: Discriminator::new(config.discriminator_spec()?),
        })
    }
}

/// Parameters, optimizer moments, iteration counter and root RNG.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T> {
    pub g0: NetworkParams<T>,
    pub g1: NetworkParams<T>,
    pub d: NetworkParams<T>,
    pub adam_g0: AdamState<T>,
    pub adam_g1: AdamState<T>,
    pub adam_d: AdamState<T>,
    pub iteration: u64,
    pub rng: ChaCha8Rng,
}

impl<T: Real> TrainState<T> {
    /// Seeds every network from one root generator.
    pub fn init(models: &Models, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g0 = models.generator.init_params(rng.next_u64());
        let g1 = models.generator.init_params(rng.next_u64());
        let d = models.discriminator.init_params(rng.next_u64());
        TrainState {
            adam_g0: AdamState::new(&g0),
            adam_g1: AdamState::new(&g1),
            adam_d: AdamState::new(&d),
            g0,
            g1,
            d,
            iteration: 0,
            rng,
        }
    }
}

impl TrainState<f32> {
    pub fn to_checkpoint(&self, config: &TrainConfig, mode: AblationMode) -> Checkpoint {
        let net = |p: &NetworkParams<f32>, a: &AdamState<f32>| NetworkState {
            params: p.clone(),
            adam: Some(a.clone()),
        };
        Checkpoint {
            meta: CheckpointMeta::new(
                config.clone(),
                mode,
                self.iteration,
                self.rng.clone(),
                Some([self.adam_g0.step, self.adam_g1.step, self.adam_d.step]),
            ),
            g0: net(&self.g0, &self.adam_g0),
            g1: net(&self.g1, &self.adam_g1),
            d: net(&self.d, &self.adam_d),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let take = |n: &NetworkState| -> Result<(NetworkParams<f32>, AdamState<f32>)> {
            let adam = n
                .adam
                .clone()
                .ok_or_else(|| Error::invalid("checkpoint carries no optimizer state; cannot resume"))?;
            Ok((n.params.clone(), adam))
        };
        let (g0, adam_g0) = take(&ckpt.g0)?;
        let (g1, adam_g1) = take(&ckpt.g1)?;
        let (d, adam_d) = take(&ckpt.d)?;
        Ok(TrainState {
            g0,
            g1,
            d,
            adam_g0,
            adam_g1,
            adam_d,
            iteration: ckpt.meta.iteration,
            rng: ckpt.meta.rng.clone(),
        })
    }
}

/// Loss weights and switches for one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSettings {
    pub alpha: f64,
    pub beta: f64,
    pub gan_mode: GanLossMode,
    pub ablation: AblationMode,
    pub dual_gradient: DualGradient,
    pub cycle_weight: f64,
}

impl StepSettings {
    pub fn new(config: &TrainConfig, ablation: AblationMode) -> Self {
        StepSettings {
            alpha: config.alpha,
            beta: config.beta,
            gan_mode: config.gan_loss_mode,
            ablation,
            dual_gradient: config.dual_gradient,
            cycle_weight: config.cycle_l1_weight,
        }
    }

    fn residual(&self) -> bool {
        self.ablation != AblationMode::NoResidual
    }

    fn dual(&self) -> bool {
        self.ablation != AblationMode::NoDual
    }
}

/// `x~ = clamp(base + out)`, where `base` is the input in residual mode and
/// zero otherwise.
fn transform<T: Real>(x: &ArrayView4<'_, T>, out: &ArrayView4<'_, T>, residual: bool) -> Result<(Array4<T>, Array4<T>)> {
    let base = if residual { x.to_owned() } else { Array4::zeros(x.raw_dim()) };
    let y = compose(&base.view(), out)?;
    Ok((y, base))
}

/// Outputs of both generators on their real inputs.
pub struct FirstPass<T> {
    pub residuals: [Array4<T>; 2],
    pub outputs: [Array4<T>; 2],
    bases: [Array4<T>; 2],
    traces: [Trace<T>; 2],
}

pub fn first_pass<T: Real>(
    models: &Models,
    g0: &NetworkParams<T>,
    g1: &NetworkParams<T>,
    x0: &ArrayView4<'_, T>,
    x1: &ArrayView4<'_, T>,
    settings: &StepSettings,
) -> Result<FirstPass<T>> {
    let (r0, t0) = models.generator.forward_train(g0, x0)?;
    let (r1, t1) = models.generator.forward_train(g1, x1)?;
    let (y0, b0) = transform(x0, &r0.view(), settings.residual())?;
    let (y1, b1) = transform(x1, &r1.view(), settings.residual())?;
    Ok(FirstPass {
        residuals: [r0, r1],
        outputs: [y0, y1],
        bases: [b0, b1],
        traces: [t0, t1],
    })
}

pub struct DiscriminatorStep<T> {
    pub loss: f64,
    pub grads: Grads<T>,
    trace: Trace<T>,
}

fn rows<T: Real>(a: &Array2<T>, start: usize, len: usize) -> ndarray::ArrayView2<'_, T> {
    a.slice(s![start..start + len, ..])
}

/// Three-class loss on real negatives, real positives and generated images,
/// with gradients for the discriminator only.
pub fn discriminator_objective<T: Real>(
    models: &Models,
    d: &NetworkParams<T>,
    x0: &ArrayView4<'_, T>,
    x1: &ArrayView4<'_, T>,
    fake0: &ArrayView4<'_, T>,
    fake1: &ArrayView4<'_, T>,
) -> Result<DiscriminatorStep<T>> {
    let (b0, b1) = (x0.dim().0, x1.dim().0);
    let nf = fake0.dim().0 + fake1.dim().0;
    let input = concatenate(Axis(0), &[x0.view(), x1.view(), fake0.view(), fake1.view()])
        .map_err(|e| Error::shape(e.to_string()))?;
    let (out, trace) = models.discriminator.forward_train(d, &input.view())?;
    let mut dlogits = Array2::<T>::zeros(out.logits.raw_dim());
    let mut loss = 0.0;
    for (start, len, class) in [(0, b0, 0), (b0, b1, 1), (b0 + b1, nf, 2)] {
        let (v, g) = losses::neg_log_mass_logits(&rows(&out.logits, start, len), ClassSet::single(class));
        loss += v / 3.0;
        dlogits.slice_mut(s![start..start + len, ..]).assign(&(g / T::of(3.0)));
    }
    let mut grads = d.zeros_like_learnable();
    models
        .discriminator
        .backward(d, &trace, &dlogits, None, &mut grads, false)?;
    Ok(DiscriminatorStep { loss, grads, trace })
}

/// Generator-side terms, each summed over the two generators.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeneratorTerms {
    pub gan: f64,
    pub dual: f64,
    pub pix: f64,
    pub per: f64,
    pub cycle: f64,
    pub total: f64,
}

pub struct GeneratorStep<T> {
    pub terms: GeneratorTerms,
    pub grads_g0: Grads<T>,
    pub grads_g1: Grads<T>,
}

struct SecondPass<T> {
    out: Array4<T>,
    output: Array4<T>,
    base: Array4<T>,
    trace: Trace<T>,
}

/// Generator objective with the discriminator fixed; gradients flow through
/// both passes into both generators.
pub fn generator_objective<T: Real>(
    models: &Models,
    g0: &NetworkParams<T>,
    g1: &NetworkParams<T>,
    d: &NetworkParams<T>,
    x0: &ArrayView4<'_, T>,
    x1: &ArrayView4<'_, T>,
    first: &FirstPass<T>,
    settings: &StepSettings,
) -> Result<GeneratorStep<T>> {
    let (b0, b1) = (x0.dim().0, x1.dim().0);
    let gen = &models.generator;

    // G_{1-i} applied to x~_i.
    let second = if settings.dual() {
        let mut passes = Vec::with_capacity(2);
        for (i, params) in [(0, g1), (1, g0)] {
            let src = first.outputs[i].view();
            let (out, trace) = gen.forward_train(params, &src)?;
            let (output, base) = transform(&src, &out.view(), settings.residual())?;
            passes.push(SecondPass { out, output, base, trace });
        }
        Some(passes)
    } else {
        None
    };

    let mut groups: Vec<ArrayView4<'_, T>> = vec![x0.view(), x1.view(), first.outputs[0].view(), first.outputs[1].view()];
    if let Some(p) = &second {
        groups.push(p[0].output.view());
        groups.push(p[1].output.view());
    }
    let offsets = {
        let mut o = Vec::with_capacity(groups.len());
        let mut acc = 0;
        for g in &groups {
            o.push(acc);
            acc += g.dim().0;
        }
        o
    };
    let sizes: Vec<usize> = groups.iter().map(|g| g.dim().0).collect();
    let input = concatenate(Axis(0), &groups).map_err(|e| Error::shape(e.to_string()))?;
    let (out, trace) = models.discriminator.forward_train(d, &input.view())?;

    let mut terms = GeneratorTerms::default();
    let mut dlogits = Array2::<T>::zeros(out.logits.raw_dim());
    let mut add_logit_term = |group: usize, set: ClassSet| -> f64 {
        let (v, g) = losses::neg_log_mass_logits(&rows(&out.logits, offsets[group], sizes[group]), set);
        let mut slot = dlogits.slice_mut(s![offsets[group]..offsets[group] + sizes[group], ..]);
        slot += &g;
        v
    };
    terms.gan += add_logit_term(2, gan_target(0, settings.gan_mode)?);
    terms.gan += add_logit_term(3, gan_target(1, settings.gan_mode)?);
    if second.is_some() {
        terms.dual += add_logit_term(4, dual_target(0, settings.gan_mode)?);
        terms.dual += add_logit_term(5, dual_target(1, settings.gan_mode)?);
    }

    // Perceptual term between phi(x_i) and phi(x~_i); both slices carry
    // gradient because batch statistics couple them.
    let mut dphi = Array4::<T>::zeros(out.phi.raw_dim());
    let beta = T::of(settings.beta);
    for i in 0..2 {
        let (rs, fs) = (offsets[i], offsets[i + 2]);
        let phi_real = out.phi.slice(s![rs..rs + sizes[i], .., .., ..]);
        let phi_fake = out.phi.slice(s![fs..fs + sizes[i + 2], .., .., ..]);
        terms.per += losses::perceptual_loss(&phi_real, &phi_fake)?;
        let g = losses::perceptual_grad(&phi_real, &phi_fake) * beta;
        let mut fake_slot = dphi.slice_mut(s![fs..fs + sizes[i + 2], .., .., ..]);
        fake_slot += &g;
        let mut real_slot = dphi.slice_mut(s![rs..rs + sizes[i], .., .., ..]);
        real_slot -= &g;
    }

    let dx = models
        .discriminator
        .backward(d, &trace, &dlogits, Some(&dphi.view()), &mut d.zeros_like_learnable(), true)?
        .expect("input gradient requested");
    let grad_of = |group: usize| dx.slice(s![offsets[group]..offsets[group] + sizes[group], .., .., ..]).to_owned();
    let mut dfirst = [grad_of(2), grad_of(3)];

    let mut grads_g0 = g0.zeros_like_learnable();
    let mut grads_g1 = g1.zeros_like_learnable();

    if let Some(passes) = &second {
        let reals = [x0, x1];
        for (i, pass) in passes.iter().enumerate() {
            let mut dout = grad_of(4 + i);
            if settings.cycle_weight > 0.0 {
                let diff = &pass.output - &reals[i].view();
                terms.cycle += diff.mapv(|v| v.abs().f64()).sum() / diff.len() as f64;
                let k = T::of(settings.cycle_weight / diff.len() as f64);
                dout += &diff.mapv(|v| if v > T::zero() { k } else if v < T::zero() { -k } else { T::zero() });
            }
            let dsum = compose_backward(&pass.base.view(), &pass.out.view(), &dout.view());
            let through = settings.dual_gradient == DualGradient::Through;
            // Second pass of x~_0 runs through G1 and vice versa.
            let (params, grads) = if i == 0 { (g1, &mut grads_g1) } else { (g0, &mut grads_g0) };
            let din = crate::networks::backward(&gen.layers, params, &pass.trace, dsum.clone(), &[], grads, through)?;
            if through {
                if let Some(din) = din {
                    dfirst[i] += &din;
                }
                if settings.residual() {
                    dfirst[i] += &dsum;
                }
            }
        }
    }

    let alpha = T::of(settings.alpha);
    for i in 0..2 {
        let r = &first.residuals[i];
        terms.pix += losses::pixel_sparsity_loss(&r.view())?;
        let mut dr = compose_backward(&first.bases[i].view(), &r.view(), &dfirst[i].view());
        dr += &(losses::pixel_sparsity_grad(&r.view()) * alpha);
        let (params, grads) = if i == 0 { (g0, &mut grads_g0) } else { (g1, &mut grads_g1) };
        crate::networks::backward(&gen.layers, params, &first.traces[i], dr, &[], grads, false)?;
    }

    terms.total = losses::total_generator_loss(terms.gan, terms.dual, terms.pix, terms.per, settings.alpha, settings.beta)
        + settings.cycle_weight * terms.cycle;
    let _ = (b0, b1);
    Ok(GeneratorStep {
        terms,
        grads_g0,
        grads_g1,
    })
}

fn check_batches<T>(x0: &ArrayView4<'_, T>, x1: &ArrayView4<'_, T>, size: usize) -> Result<()> {
    for (name, x) in [("negative", x0), ("positive", x1)] {
        let (n, c, h, w) = x.dim();
        if n == 0 {
            return Err(Error::invalid(format!("empty {name} batch")));
        }
        if (c, h, w) != (3, size, size) {
            return Err(Error::shape(format!(
                "{name} batch has shape {:?}, expected (_, 3, {size}, {size})",
                x.dim()
            )));
        }
    }
    Ok(())
}

/// One alternating update. On a non-finite loss or parameter the state is
/// restored to its value before the call.
pub fn train_step<T: Real>(
    state: &mut TrainState<T>,
    models: &Models,
    x0: &ArrayView4<'_, T>,
    x1: &ArrayView4<'_, T>,
    config: &TrainConfig,
    mode: AblationMode,
) -> Result<LossReport> {
    check_batches(x0, x1, config.image_size)?;
    let snapshot = state.clone();
    let result = step_inner(state, models, x0, x1, config, mode);
    if result.is_err() {
        *state = snapshot;
    }
    result
}

fn step_inner<T: Real>(
    state: &mut TrainState<T>,
    models: &Models,
    x0: &ArrayView4<'_, T>,
    x1: &ArrayView4<'_, T>,
    config: &TrainConfig,
    mode: AblationMode,
) -> Result<LossReport> {
    let settings = StepSettings::new(config, mode);
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        beta1: config.adam_beta1,
        beta2: config.adam_beta2,
    };
    let first = first_pass(models, &state.g0, &state.g1, x0, x1, &settings)?;

    let dstep = discriminator_objective(models, &state.d, x0, x1, &first.outputs[0].view(), &first.outputs[1].view())?;
    if !dstep.loss.is_finite() {
        return Err(Error::NonFinite { term: "cls".into() });
    }
    state.adam_d.update(&mut state.d, &dstep.grads, &adam)?;
    dstep.trace.update_running_stats(&models.discriminator.layers, &mut state.d);

    let gstep = generator_objective(models, &state.g0, &state.g1, &state.d, x0, x1, &first, &settings)?;
    let t = gstep.terms;
    let report = LossReport::new(state.iteration + 1, t.gan, t.dual, t.pix, t.per, dstep.loss, config.alpha, config.beta);
    if let Some(term) = report.non_finite_term() {
        return Err(Error::NonFinite { term: term.into() });
    }
    if !t.total.is_finite() {
        return Err(Error::NonFinite { term: "cycle".into() });
    }
    state.adam_g0.update(&mut state.g0, &gstep.grads_g0, &adam)?;
    state.adam_g1.update(&mut state.g1, &gstep.grads_g1, &adam)?;
    first.traces[0].update_running_stats(&models.generator.layers, &mut state.g0);
    first.traces[1].update_running_stats(&models.generator.layers, &mut state.g1);
    for (name, p) in [("G0", &state.g0), ("G1", &state.g1), ("D", &state.d)] {
        if !p.all_finite() {
            return Err(Error::NonFinite {
                term: format!("{name} parameters"),
            });
        }
    }
    state.iteration += 1;
    Ok(report)
}

/// Where a training run writes its artifacts.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
}

impl RunOutput {
    pub const LOSS_LOG: &'static str = "loss_log.jsonl";
    pub const FINAL: &'static str = "final";

    pub fn loss_log(&self) -> PathBuf {
        self.dir.join(Self::LOSS_LOG)
    }

    pub fn checkpoint_dir(&self, iteration: u64) -> PathBuf {
        self.dir.join(format!("ckpt-{iteration:07}"))
    }

    pub fn final_dir(&self) -> PathBuf {
        self.dir.join(Self::FINAL)
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Reports for the iterations run by this call.
    pub log: Vec<LossReport>,
}

/// Runs training up to `config.iterations`, starting from `resume` when given.
///
/// Batches depend only on the seed and the iteration number, so a resumed run
/// reproduces an uninterrupted one exactly.
pub fn train(
    config: &TrainConfig,
    source: std::sync::Arc<dyn PairedSource>,
    mode: AblationMode,
    resume: Option<&Checkpoint>,
    output: Option<&RunOutput>,
) -> Result<TrainOutcome> {
    let models = Models::from_config(config)?;
    if source.image_size() != config.image_size {
        return Err(Error::shape(format!(
            "dataset images are {0}x{0}, config expects {1}x{1}",
            source.image_size(),
            config.image_size
        )));
    }
    let mut state = match resume {
        Some(c) => {
            if c.meta.mode != mode {
                return Err(Error::invalid(format!("checkpoint was trained in {} mode, not {mode}", c.meta.mode)));
            }
            TrainState::from_checkpoint(c)?
        }
        None => TrainState::<f32>::init(&models, config.seed),
    };
    if state.iteration > config.iterations {
        return Err(Error::invalid(format!(
            "checkpoint is at iteration {}, beyond the configured {}",
            state.iteration, config.iterations
        )));
    }

    let mut log_file = match output {
        Some(out) => {
            std::fs::create_dir_all(&out.dir)?;
            let f = if state.iteration == 0 {
                std::fs::File::create(out.loss_log())?
            } else {
                truncate_log(&out.loss_log(), state.iteration)?
            };
            Some(std::io::BufWriter::new(f))
        }
        None => None,
    };

    let loader = BatchLoader::spawn(source, config, state.iteration, config.iterations)?;
    let mut log = Vec::with_capacity((config.iterations - state.iteration) as usize);
    for batch in loader {
        let batch = batch?;
        debug_assert_eq!(batch.iteration, state.iteration);
        let report = train_step(&mut state, &models, &batch.neg.view(), &batch.pos.view(), config, mode)?;
        if let Some(f) = log_file.as_mut() {
            serde_json::to_writer(&mut *f, &report)?;
            f.write_all(b"\n")?;
        }
        log.push(report);
        if let Some(out) = output {
            if state.iteration % config.checkpoint_every == 0 && state.iteration < config.iterations {
                if let Some(f) = log_file.as_mut() {
                    f.flush()?;
                }
                save_checkpoint(&state.to_checkpoint(config, mode), &out.checkpoint_dir(state.iteration))?;
            }
        }
    }
    if let Some(f) = log_file.as_mut() {
        f.flush()?;
    }
    let checkpoint = state.to_checkpoint(config, mode);
    if let Some(out) = output {
        save_checkpoint(&checkpoint, &out.final_dir())?;
    }
    Ok(TrainOutcome { checkpoint, log })
}

/// Keeps the first `lines` entries of an existing loss log and opens it for appending.
fn truncate_log(path: &Path, lines: u64) -> Result<std::fs::File> {
    let text = std::fs::read_to_string(path).unwrap_or_default();
    let kept: Vec<&str> = text.lines().take(lines as usize).collect();
    let mut f = std::fs::File::create(path)?;
    for l in kept {
        writeln!(f, "{l}")?;
    }
    Ok(f)
}

/// Fraction of images the discriminator assigns to `label`, in inference mode.
pub fn discriminator_accuracy(models: &Models, d: &NetworkParams<f32>, x: &ArrayView4<'_, f32>, label: usize) -> Result<f64> {
    let out = models.discriminator.forward(d, x)?;
    let hits = out
        .probs
        .axis_iter(Axis(0))
        .filter(|row| {
            let best = (0..3).fold(0, |b, k| if row[k] > row[b] { k } else { b });
            best == label
        })
        .count();
    Ok(hits as f64 / out.probs.nrows() as f64)
}
