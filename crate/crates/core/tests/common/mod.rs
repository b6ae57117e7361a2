#![allow(dead_code)]

use ndarray::{Array4, ArrayD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resface_core::config::{AblationMode, AttributeScope, TrainConfig};
use resface_core::losses::GanLossMode;
use resface_core::networks::{Grads, NetworkParams};
use resface_core::trainer::{discriminator_objective, first_pass, generator_objective, Models, StepSettings, TrainState};

pub fn random_images(n: usize, size: usize, seed: u64) -> Array4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array4::from_shape_simple_fn((n, 3, size, size), || rng.random_range(-0.8..0.8))
}

/// Moves every learnable array away from its initial value so that scale,
/// shift and bias gradients are generic.
pub fn perturb(p: &mut NetworkParams<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, a) in p.learnable.iter_mut() {
        let amount = if name.ends_with(".weight") { 0.01 } else { 0.1 };
        a.mapv_inplace(|v| v + rng.random_range(-amount..amount));
    }
}

pub fn tiny_config(mode: GanLossMode) -> TrainConfig {
    let mut c = TrainConfig::desk("check", AttributeScope::Local).with_alpha(0.05);
    c.image_size = 32;
    c.width_divisor = 16;
    c.gan_loss_mode = mode;
    c
}

/// Relative error `|a - n| / max(|a|, |n|)` of one parameter group over the
/// sampled entries.
#[derive(Debug)]
pub struct GroupCheck {
    pub network: &'static str,
    pub name: String,
    pub rel_error: f64,
    pub analytic_norm: f64,
}

const EPS: f64 = 1e-6;
const SAMPLES_PER_GROUP: usize = 16;

fn sampled_indices(len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= SAMPLES_PER_GROUP {
        (0..len).collect()
    } else {
        (0..SAMPLES_PER_GROUP).map(|_| rng.random_range(0..len)).collect()
    }
}

fn check_network(
    network: &'static str,
    params: &NetworkParams<f64>,
    analytic: &Grads<f64>,
    loss: &dyn Fn(&NetworkParams<f64>) -> f64,
    rng: &mut ChaCha8Rng,
) -> Vec<GroupCheck> {
    let mut out = Vec::new();
    for (name, values) in &params.learnable {
        let grad: &ArrayD<f64> = &analytic[name];
        let mut diff = 0.0f64;
        let mut na = 0.0f64;
        let mut nn = 0.0f64;
        for i in sampled_indices(values.len(), rng) {
            let mut p = params.clone();
            let slot = p.learnable.get_mut(name).unwrap();
            let base = slot.as_slice_memory_order().unwrap()[i];
            slot.as_slice_memory_order_mut().unwrap()[i] = base + EPS;
            let up = loss(&p);
            p.learnable.get_mut(name).unwrap().as_slice_memory_order_mut().unwrap()[i] = base - EPS;
            let down = loss(&p);
            let numeric = (up - down) / (2.0 * EPS);
            let a = grad.as_slice_memory_order().unwrap()[i];
            diff += (a - numeric).powi(2);
            na += a * a;
            nn += numeric * numeric;
        }
        let scale = na.sqrt().max(nn.sqrt()).max(1e-12);
        out.push(GroupCheck {
            network,
            name: name.clone(),
            rel_error: diff.sqrt() / scale,
            analytic_norm: na.sqrt(),
        });
    }
    out
}

/// Central finite differences of the generator objective (w.r.t. G0 and G1)
/// and the discriminator objective (w.r.t. D) on a miniature model.
pub fn gradient_check(gan_mode: GanLossMode, ablation: AblationMode) -> Vec<GroupCheck> {
    let cfg = tiny_config(gan_mode);
    let models = Models::from_config(&cfg).unwrap();
    let mut state = TrainState::<f64>::init(&models, 21);
    perturb(&mut state.g0, 1);
    perturb(&mut state.g1, 2);
    perturb(&mut state.d, 3);
    let x0 = random_images(2, 32, 4);
    let x1 = random_images(2, 32, 5);
    let (x0, x1) = (x0.view(), x1.view());
    let mut settings = StepSettings::new(&cfg, ablation);
    settings.cycle_weight = 0.0;

    let gen_loss = |g0: &NetworkParams<f64>, g1: &NetworkParams<f64>| {
        let first = first_pass(&models, g0, g1, &x0, &x1, &settings).unwrap();
        generator_objective(&models, g0, g1, &state.d, &x0, &x1, &first, &settings)
            .unwrap()
            .terms
            .total
    };
    let first = first_pass(&models, &state.g0, &state.g1, &x0, &x1, &settings).unwrap();
    let g = generator_objective(&models, &state.g0, &state.g1, &state.d, &x0, &x1, &first, &settings).unwrap();
    let d = discriminator_objective(&models, &state.d, &x0, &x1, &first.outputs[0].view(), &first.outputs[1].view()).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checks = check_network("G0", &state.g0, &g.grads_g0, &|p| gen_loss(p, &state.g1), &mut rng);
    checks.extend(check_network("G1", &state.g1, &g.grads_g1, &|p| gen_loss(&state.g0, p), &mut rng));
    let (f0, f1) = (first.outputs[0].view(), first.outputs[1].view());
    checks.extend(check_network(
        "D",
        &state.d,
        &d.grads,
        &|p| discriminator_objective(&models, p, &x0, &x1, &f0, &f1).unwrap().loss,
        &mut rng,
    ));
    checks
}
