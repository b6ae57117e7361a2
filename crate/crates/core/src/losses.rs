//! Scalar training objectives.
//!
//! The probability-space functions are the reference definitions. The
//! trainer uses [`neg_log_mass_logits`], which computes the same quantities
//! from logits in log-space together with their gradient.

use ndarray::{Array2, Array4, ArrayView2, ArrayView4, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Floor applied inside every logarithm of a probability.
pub const LOG_FLOOR: f64 = 1e-12;

/// Class indices of the discriminator.
pub const REAL_NEGATIVE: usize = 0;
pub const REAL_POSITIVE: usize = 1;
pub const GENERATED: usize = 2;

/// How the scalar `D(.)` of the generator objectives is read off a
/// three-class discriminator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GanLossMode {
    /// `D(.)` is the probability of the class the generator is meant to produce.
    #[default]
    TargetClass,
    /// `D(.)` is the real-positive probability; `1 - D(.)` therefore also
    /// counts the generated class.
    PaperLiteral,
}

impl std::str::FromStr for GanLossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target-class" => Ok(GanLossMode::TargetClass),
            "paper-literal" => Ok(GanLossMode::PaperLiteral),
            other => Err(Error::invalid(format!("unknown gan loss mode {other:?}"))),
        }
    }
}

/// Set of discriminator classes whose total probability an objective maximizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassSet(u8);

impl ClassSet {
    pub fn single(class: usize) -> Self {
        debug_assert!(class < 3);
        ClassSet(1 << class)
    }

    pub fn pair(a: usize, b: usize) -> Self {
        ClassSet((1 << a) | (1 << b))
    }

    pub fn contains(self, class: usize) -> bool {
        self.0 & (1 << class) != 0
    }
}

fn check_index(index: usize, what: &str) -> Result<()> {
    if index > 1 {
        return Err(Error::invalid(format!("{what} must be 0 or 1, got {index}")));
    }
    Ok(())
}

/// Target set of the adversarial term for generator `index`.
pub fn gan_target(index: usize, mode: GanLossMode) -> Result<ClassSet> {
    check_index(index, "generator index")?;
    Ok(match (index, mode) {
        (0, _) => ClassSet::single(REAL_POSITIVE),
        (_, GanLossMode::TargetClass) => ClassSet::single(REAL_NEGATIVE),
        (_, GanLossMode::PaperLiteral) => ClassSet::pair(REAL_NEGATIVE, GENERATED),
    })
}

/// Target set of the dual term for an image that started in class `origin`.
pub fn dual_target(origin: usize, mode: GanLossMode) -> Result<ClassSet> {
    check_index(origin, "origin index")?;
    Ok(match (origin, mode) {
        (1, _) => ClassSet::single(REAL_POSITIVE),
        (_, GanLossMode::TargetClass) => ClassSet::single(REAL_NEGATIVE),
        (_, GanLossMode::PaperLiteral) => ClassSet::pair(REAL_NEGATIVE, GENERATED),
    })
}

fn check_probs<T: Real>(probs: &ArrayView2<'_, T>) -> Result<()> {
    let (n, k) = probs.dim();
    if n == 0 {
        return Err(Error::invalid("empty probability batch"));
    }
    if k != 3 {
        return Err(Error::shape(format!("expected 3 classes, got {k}")));
    }
    for row in probs.axis_iter(Axis(0)) {
        let mut s = 0.0;
        for &p in row {
            let p = p.f64();
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
            }
            s += p;
        }
        if (s - 1.0).abs() > 1e-4 {
            return Err(Error::invalid(format!("probabilities sum to {s}")));
        }
    }
    Ok(())
}

/// Batch mean of `-log(max(sum_{k in set} p_k, floor))`.
pub fn neg_log_mass<T: Real>(probs: &ArrayView2<'_, T>, set: ClassSet) -> Result<f64> {
    check_probs(probs)?;
    let n = probs.nrows() as f64;
    let total: f64 = probs
        .axis_iter(Axis(0))
        .map(|row| {
            let mass: f64 = (0..3).filter(|&k| set.contains(k)).map(|k| row[k].f64()).sum();
            -mass.max(LOG_FLOOR).ln()
        })
        .sum();
    Ok(total / n)
}

/// Log-space version of [`neg_log_mass`] on logits: returns the batch mean
/// and its gradient w.r.t. the logits.
pub fn neg_log_mass_logits<T: Real>(logits: &ArrayView2<'_, T>, set: ClassSet) -> (f64, Array2<T>) {
    let (n, k) = logits.dim();
    let mut grad = Array2::<T>::zeros((n, k));
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for (row, mut g) in logits.axis_iter(Axis(0)).zip(grad.axis_iter_mut(Axis(0))) {
        let z: Vec<f64> = row.iter().map(|v| v.f64()).collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let all: f64 = e.iter().sum();
        let sub: f64 = (0..k).filter(|&c| set.contains(c)).map(|c| e[c]).sum();
        total += all.ln() - sub.ln();
        for c in 0..k {
            let restricted = if set.contains(c) { e[c] / sub } else { 0.0 };
            g[c] = T::of((e[c] / all - restricted) * inv_n);
        }
    }
    (total * inv_n, grad)
}

/// Mean absolute value of the residual.
pub fn pixel_sparsity_loss<T: Real>(r: &ArrayView4<'_, T>) -> Result<f64> {
    if r.is_empty() {
        return Err(Error::invalid("empty residual"));
    }
    let mut s = 0.0;
    for &v in r {
        if !v.is_finite() {
            return Err(Error::NonFinite { term: "residual".into() });
        }
        s += v.abs().f64();
    }
    Ok(s / r.len() as f64)
}

/// Subgradient of [`pixel_sparsity_loss`] (zero at zero).
pub fn pixel_sparsity_grad<T: Real>(r: &ArrayView4<'_, T>) -> Array4<T> {
    let k = T::of(1.0 / r.len() as f64);
    r.mapv(|v| {
        if v > T::zero() {
            k
        } else if v < T::zero() {
            -k
        } else {
            T::zero()
        }
    })
}

/// `-log p_t` averaged over the batch.
pub fn classification_loss<T: Real>(probs: &ArrayView2<'_, T>, target: usize) -> Result<f64> {
    if target > 2 {
        return Err(Error::invalid(format!("label {target} not in {{0, 1, 2}}")));
    }
    neg_log_mass(probs, ClassSet::single(target))
}

/// Mean absolute difference between two feature maps.
pub fn perceptual_loss<T: Real>(phi_x: &ArrayView4<'_, T>, phi_y: &ArrayView4<'_, T>) -> Result<f64> {
    if phi_x.dim() != phi_y.dim() {
        return Err(Error::shape(format!(
            "perceptual loss: {:?} vs {:?}",
            phi_x.dim(),
            phi_y.dim()
        )));
    }
    if phi_x.is_empty() {
        return Err(Error::invalid("empty feature map"));
    }
    let s = Zip::from(phi_x)
        .and(phi_y)
        .fold(0.0, |acc, &a, &b| acc + (a - b).abs().f64());
    Ok(s / phi_x.len() as f64)
}

/// Gradient of [`perceptual_loss`] w.r.t. its second argument.
pub fn perceptual_grad<T: Real>(phi_x: &ArrayView4<'_, T>, phi_y: &ArrayView4<'_, T>) -> Array4<T> {
    let k = T::of(1.0 / phi_x.len() as f64);
    Zip::from(phi_x).and(phi_y).map_collect(|&a, &b| {
        if b > a {
            k
        } else if b < a {
            -k
        } else {
            T::zero()
        }
    })
}

/// Adversarial term for generator `generator_index` scored on its outputs.
pub fn adversarial_generator_loss<T: Real>(
    probs_of_fake: &ArrayView2<'_, T>,
    generator_index: usize,
    mode: GanLossMode,
) -> Result<f64> {
    neg_log_mass(probs_of_fake, gan_target(generator_index, mode)?)
}

/// Dual term for second-pass outputs of images that started in `origin_index`.
pub fn dual_loss<T: Real>(probs_of_second_pass: &ArrayView2<'_, T>, origin_index: usize, mode: GanLossMode) -> Result<f64> {
    neg_log_mass(probs_of_second_pass, dual_target(origin_index, mode)?)
}

pub fn total_generator_loss(gan: f64, dual: f64, pix: f64, per: f64, alpha: f64, beta: f64) -> f64 {
    gan + dual + alpha * pix + beta * per
}

/// Mean of the three per-group classification losses with targets 0, 1, 2.
pub fn discriminator_loss<T: Real>(
    probs_real_neg: &ArrayView2<'_, T>,
    probs_real_pos: &ArrayView2<'_, T>,
    probs_fake: &ArrayView2<'_, T>,
) -> Result<f64> {
    let groups = [
        (probs_real_neg, REAL_NEGATIVE),
        (probs_real_pos, REAL_POSITIVE),
        (probs_fake, GENERATED),
    ];
    let mut s = 0.0;
    for (p, t) in groups {
        if p.nrows() == 0 {
            return Err(Error::invalid(format!("empty group for label {t}")));
        }
        s += classification_loss(p, t)?;
    }
    Ok(s / 3.0)
}

/// Per-term values of one training step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: u64,
    pub gan: f64,
    pub dual: f64,
    pub pix: f64,
    pub per: f64,
    pub cls: f64,
    pub total_g: f64,
    pub total_d: f64,
}

impl LossReport {
    pub fn new(iteration: u64, gan: f64, dual: f64, pix: f64, per: f64, cls: f64, alpha: f64, beta: f64) -> Self {
        LossReport {
            iteration,
            gan,
            dual,
            pix,
            per,
            cls,
            total_g: total_generator_loss(gan, dual, pix, per, alpha, beta),
            total_d: cls,
        }
    }

    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("gan", self.gan),
            ("dual", self.dual),
            ("pix", self.pix),
            ("per", self.per),
            ("cls", self.cls),
            ("total_g", self.total_g),
            ("total_d", self.total_d),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(k, _)| k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array4};
    use proptest::prelude::*;

    const LN3: f64 = 1.0986122886681098;

    #[test]
    fn sparsity_examples() {
        let z = Array4::<f64>::zeros((1, 3, 2, 2));
        assert_eq!(pixel_sparsity_loss(&z.view()).unwrap(), 0.0);
        let h = Array4::<f64>::from_elem((1, 3, 2, 2), 0.5);
        assert!((pixel_sparsity_loss(&h.view()).unwrap() - 0.5).abs() < 1e-12);
        let r = Array4::from_shape_vec((1, 1, 2, 2), vec![1.0, -1.0, 2.0, 0.0]).unwrap();
        assert!((pixel_sparsity_loss(&r.view()).unwrap() - 1.0).abs() < 1e-12);
        let bad = Array4::from_shape_vec((1, 1, 1, 2), vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(pixel_sparsity_loss(&bad.view()), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn classification_examples() {
        let p = array![[1.0, 0.0, 0.0]];
        assert_eq!(classification_loss(&p.view(), 0).unwrap(), 0.0);
        let u = array![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]];
        for t in 0..3 {
            assert!((classification_loss(&u.view(), t).unwrap() - LN3).abs() < 1e-6);
        }
        let p = array![[0.2, 0.5, 0.3]];
        assert!((classification_loss(&p.view(), 1).unwrap() - 0.5f64.ln().abs()).abs() < 1e-6);
        assert!(classification_loss(&p.view(), 3).is_err());
        // Zero probability hits the floor instead of infinity.
        let p = array![[1.0, 0.0, 0.0]];
        let v = classification_loss(&p.view(), 1).unwrap();
        assert!((v + LOG_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn rejects_invalid_distributions() {
        let p = array![[0.5, 0.2, 0.2]];
        assert!(classification_loss(&p.view(), 0).is_err());
        let p = array![[0.5, 0.5]];
        assert!(classification_loss(&p.view(), 0).is_err());
    }

    #[test]
    fn perceptual_examples() {
        let a = Array4::from_shape_fn((2, 4, 3, 3), |(n, c, h, w)| (n + c * h) as f64 * 0.1 - w as f64);
        assert_eq!(perceptual_loss(&a.view(), &a.view()).unwrap(), 0.0);
        let b = &a + 0.1;
        assert!((perceptual_loss(&a.view(), &b.view()).unwrap() - 0.1).abs() < 1e-9);
        let c = Array4::<f64>::zeros((2, 4, 3, 2));
        assert!(perceptual_loss(&a.view(), &c.view()).is_err());
    }

    #[test]
    fn perceptual_matches_scalar_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let a = Array4::from_shape_fn((3, 5, 4, 4), |_| rng.random_range(-2.0f64..2.0));
        let b = Array4::from_shape_fn((3, 5, 4, 4), |_| rng.random_range(-2.0f64..2.0));
        let av = a.as_slice().unwrap();
        let bv = b.as_slice().unwrap();
        let mut s = 0.0;
        for i in 0..av.len() {
            s += (av[i] - bv[i]).abs();
        }
        let oracle = s / av.len() as f64;
        assert!((perceptual_loss(&a.view(), &b.view()).unwrap() - oracle).abs() < 1e-6);
    }

    #[test]
    fn adversarial_examples() {
        let p = array![[0.0, 1.0, 0.0]];
        for mode in [GanLossMode::TargetClass, GanLossMode::PaperLiteral] {
            assert_eq!(adversarial_generator_loss(&p.view(), 0, mode).unwrap(), 0.0);
        }
        let p = array![[0.25, 0.25, 0.5]];
        let v = adversarial_generator_loss(&p.view(), 0, GanLossMode::TargetClass).unwrap();
        assert!((v - 1.3862943611198906f64).abs() < 1e-6);
        let v = adversarial_generator_loss(&p.view(), 1, GanLossMode::PaperLiteral).unwrap();
        assert!((v - 0.2876820724517809f64).abs() < 1e-6);
        assert!(adversarial_generator_loss(&p.view(), 2, GanLossMode::TargetClass).is_err());
    }

    #[test]
    fn dual_examples() {
        let p = array![[0.0, 1.0, 0.0]];
        for mode in [GanLossMode::TargetClass, GanLossMode::PaperLiteral] {
            assert_eq!(dual_loss(&p.view(), 1, mode).unwrap(), 0.0);
        }
        let p = array![[0.7, 0.2, 0.1]];
        let v = dual_loss(&p.view(), 0, GanLossMode::TargetClass).unwrap();
        assert!((v - 0.35667494393873245f64).abs() < 1e-6);
        let v = dual_loss(&p.view(), 0, GanLossMode::PaperLiteral).unwrap();
        assert!((v - 0.2231435513142097f64).abs() < 1e-6);
        assert!(dual_loss(&p.view(), 5, GanLossMode::PaperLiteral).is_err());
    }

    #[test]
    fn weighted_sum_examples() {
        assert_eq!(total_generator_loss(1.0, 1.0, 0.0, 0.0, 5e-4, 5e-5), 2.0);
        assert!((total_generator_loss(0.0, 0.0, 2.0, 0.0, 5e-4, 5e-5) - 1e-3).abs() < 1e-12);
        assert!((total_generator_loss(0.5, 0.25, 4.0, 10.0, 5e-4, 5e-5) - 0.7525).abs() < 1e-9);
    }

    #[test]
    fn discriminator_examples() {
        let neg = array![[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let pos = array![[0.0, 1.0, 0.0]];
        let fake = array![[0.0, 0.0, 1.0]];
        assert_eq!(discriminator_loss(&neg.view(), &pos.view(), &fake.view()).unwrap(), 0.0);
        let u = array![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]];
        let v = discriminator_loss(&u.view(), &u.view(), &u.view()).unwrap();
        assert!((v - LN3).abs() < 1e-6);
        let empty = Array2::<f64>::zeros((0, 3));
        assert!(discriminator_loss(&empty.view(), &u.view(), &u.view()).is_err());
    }

    #[test]
    fn discriminator_mixed_matches_hand_sum() {
        let neg = array![[0.6, 0.3, 0.1], [0.2, 0.2, 0.6]];
        let pos = array![[0.1, 0.7, 0.2]];
        let fake = array![[0.3, 0.3, 0.4], [0.5, 0.1, 0.4], [0.05, 0.05, 0.9]];
        let oracle = ((-(0.6f64.ln()) - 0.2f64.ln()) / 2.0 + -(0.7f64.ln())
            + (-(0.4f64.ln()) - 0.4f64.ln() - 0.9f64.ln()) / 3.0)
            / 3.0;
        let v = discriminator_loss(&neg.view(), &pos.view(), &fake.view()).unwrap();
        assert!((v - oracle).abs() < 1e-6);
    }

    #[test]
    fn logit_route_matches_probability_route() {
        let logits = array![[0.3, -1.2, 2.0], [1.5, 0.5, -0.5]];
        let probs = crate::networks::softmax_rows(&logits);
        for set in [ClassSet::single(0), ClassSet::single(2), ClassSet::pair(0, 2)] {
            let (v, g) = neg_log_mass_logits(&logits.view(), set);
            assert!((v - neg_log_mass(&probs.view(), set).unwrap()).abs() < 1e-12);
            let h = 1e-6;
            for i in 0..2 {
                for k in 0..3 {
                    let mut lp = logits.clone();
                    lp[[i, k]] += h;
                    let mut lm = logits.clone();
                    lm[[i, k]] -= h;
                    let fd = (neg_log_mass_logits(&lp.view(), set).0 - neg_log_mass_logits(&lm.view(), set).0) / (2.0 * h);
                    assert!((fd - g[[i, k]]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn report_totals() {
        let r = LossReport::new(3, 0.5, 0.25, 4.0, 10.0, 1.1, 5e-4, 5e-5);
        assert!((r.total_g - 0.7525).abs() < 1e-12);
        assert_eq!(r.total_d, r.cls);
        assert_eq!(r.non_finite_term(), None);
        let bad = LossReport { dual: f64::INFINITY, ..r };
        assert_eq!(bad.non_finite_term(), Some("dual"));
    }

    fn dist() -> impl Strategy<Value = [f64; 3]> {
        (0.001f64..1.0, 0.001f64..1.0, 0.001f64..1.0).prop_map(|(a, b, c)| {
            let s = a + b + c;
            [a / s, b / s, c / s]
        })
    }

    proptest! {
        #[test]
        fn losses_non_negative_and_finite(p in dist(), t in 0usize..3, idx in 0usize..2) {
            let probs = Array2::from_shape_vec((1, 3), p.to_vec()).unwrap();
            let vals = [
                classification_loss(&probs.view(), t).unwrap(),
                adversarial_generator_loss(&probs.view(), idx, GanLossMode::TargetClass).unwrap(),
                adversarial_generator_loss(&probs.view(), idx, GanLossMode::PaperLiteral).unwrap(),
                dual_loss(&probs.view(), idx, GanLossMode::TargetClass).unwrap(),
                dual_loss(&probs.view(), idx, GanLossMode::PaperLiteral).unwrap(),
            ];
            for v in vals {
                prop_assert!(v.is_finite() && v >= 0.0);
            }
        }

        #[test]
        fn target_class_generator_loss_ignores_mass_split(p1 in 0.01f64..0.98, split in 0.0f64..1.0) {
            let rest = 1.0 - p1;
            let a = Array2::from_shape_vec((1, 3), vec![rest * split, p1, rest * (1.0 - split)]).unwrap();
            let b = Array2::from_shape_vec((1, 3), vec![rest * (1.0 - split), p1, rest * split]).unwrap();
            let la = adversarial_generator_loss(&a.view(), 0, GanLossMode::TargetClass).unwrap();
            let lb = adversarial_generator_loss(&b.view(), 0, GanLossMode::TargetClass).unwrap();
            prop_assert!((la - lb).abs() < 1e-12);
        }

        #[test]
        fn total_is_linear(g in -5.0f64..5.0, d in -5.0f64..5.0, px in 0.0f64..5.0, pe in 0.0f64..5.0, k in -3.0f64..3.0) {
            let (a, b) = (5e-4, 5e-5);
            let base = total_generator_loss(g, d, px, pe, a, b);
            prop_assert!((total_generator_loss(g + k, d, px, pe, a, b) - base - k).abs() < 1e-9);
            prop_assert!((total_generator_loss(g, d + k, px, pe, a, b) - base - k).abs() < 1e-9);
            prop_assert!((total_generator_loss(g, d, px + k, pe, a, b) - base - a * k).abs() < 1e-9);
            prop_assert!((total_generator_loss(g, d, px, pe + k, a, b) - base - b * k).abs() < 1e-9);
        }
    }

    #[test]
    fn classification_loss_strictly_decreasing_in_target_probability() {
        let mut prev = f64::INFINITY;
        for i in 1..=100 {
            let pt = i as f64 / 100.0;
            let rest = (1.0 - pt) / 2.0;
            let p = Array2::from_shape_vec((1, 3), vec![rest, pt, rest]).unwrap();
            let v = classification_loss(&p.view(), 1).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }
}
