//! Inference, residual inspection, oracle metrics on synthetic pairs and the
//! landmark-detection gain protocol.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use image::RgbImage;
use indexmap::IndexMap;
use ndarray::{concatenate, s, Array2, Array4, ArrayView2, ArrayView4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::AblationMode;
use crate::data::{derive_seed, SynthSample};
use crate::error::{Error, Result};
use crate::landmarks::{distance, LandmarkSet, ALL_POINTS, EYE_POINTS, REST_POINTS};
use crate::networks::Generator;
use crate::tensor::{compose, to_rgb8, unit_to_u8};

/// Which generator to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Attribute-negative to positive, by G0.
    #[serde(rename = "0to1")]
    Add,
    /// Attribute-positive to negative, by G1.
    #[serde(rename = "1to0")]
    Remove,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0to1" | "0->1" | "add" => Ok(Direction::Add),
            "1to0" | "1->0" | "remove" => Ok(Direction::Remove),
            other => Err(Error::invalid(format!("unknown direction {other:?} (expected 0to1 or 1to0)"))),
        }
    }
}

/// Applies the generator for `direction`; returns `(x~, r)`.
///
/// For checkpoints trained without the residual connection, `x~ = clamp(r)`.
pub fn manipulate(ckpt: &Checkpoint, x: &ArrayView4<'_, f32>, direction: Direction) -> Result<(Array4<f32>, Array4<f32>)> {
    let size = ckpt.meta.config.image_size;
    let (_, _, h, w) = x.dim();
    if (h, w) != (size, size) {
        return Err(Error::shape(format!("checkpoint expects {size}x{size} images, got {h}x{w}")));
    }
    let generator = Generator::new(ckpt.meta.config.generator_spec()?);
    let params = match direction {
        Direction::Add => &ckpt.g0.params,
        Direction::Remove => &ckpt.g1.params,
    };
    let r = generator.forward(params, x)?;
    let y = if ckpt.meta.mode == AblationMode::NoResidual {
        compose(&Array4::zeros(x.raw_dim()).view(), &r.view())?
    } else {
        compose(x, &r.view())?
    };
    Ok((y, r))
}

/// `sum |r|` inside `mask` over `sum |r|`; 0 when `r` is all zero.
/// `r` is `(n, c, H, W)` and the mask applies to every image and channel.
pub fn residual_localization(r: &ArrayView4<'_, f32>, mask: &ArrayView2<'_, bool>) -> Result<f64> {
    let (_, _, h, w) = r.dim();
    if mask.dim() != (h, w) {
        return Err(Error::shape(format!("residual is {h}x{w}, mask is {:?}", mask.dim())));
    }
    let (mut inside, mut total) = (0.0f64, 0.0f64);
    for img in r.outer_iter() {
        for plane in img.outer_iter() {
            ndarray::Zip::from(&plane).and(mask).for_each(|&v, &m| {
                let a = v.abs() as f64;
                total += a;
                if m {
                    inside += a;
                }
            });
        }
    }
    Ok(if total > 0.0 { inside / total } else { 0.0 })
}

/// Per-point distance divided by the ground-truth inter-ocular distance.
pub fn normalized_landmark_error(detected: &LandmarkSet, truth: &LandmarkSet) -> Result<IndexMap<String, f64>> {
    let iod = truth.inter_ocular()?;
    if !(iod > 0.0) {
        return Err(Error::invalid("ground-truth inter-ocular distance is zero"));
    }
    truth
        .points
        .iter()
        .map(|(name, &t)| {
            let d = detected
                .points
                .get(name)
                .ok_or_else(|| Error::invalid(format!("detection lacks landmark {name:?}")))?;
            Ok((name.clone(), distance(*d, t) / iod))
        })
        .collect()
}

/// A landmark detector. `id` names the source image so reference-based
/// detectors can look up per-image data; the result must depend only on
/// `id` and the pixels.
pub trait Detector {
    fn detect(&self, id: &str, image: &ArrayView4<'_, f32>) -> Result<LandmarkSet>;

    /// Detects many images; one result per image, failures kept per image.
    fn detect_batch(&self, items: &[(&str, ArrayView4<'_, f32>)]) -> Vec<Result<LandmarkSet>> {
        items.iter().map(|(id, img)| self.detect(id, img)).collect()
    }
}

/// Returns the ground truth regardless of the pixels.
pub struct OracleDetector {
    pub truth: HashMap<String, LandmarkSet>,
}

impl Detector for OracleDetector {
    fn detect(&self, id: &str, _image: &ArrayView4<'_, f32>) -> Result<LandmarkSet> {
        self.truth
            .get(id)
            .cloned()
            .ok_or_else(|| Error::Detector(format!("no ground truth for {id}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyOracleParams {
    /// Noise scale on unoccluded points, in inter-ocular units.
    pub base_sigma: f64,
    /// Extra noise scale at full occlusion, in inter-ocular units.
    pub occlusion_gain: f64,
    /// Neighbourhood radius as a fraction of the image width.
    pub radius: f64,
    /// Per-pixel deviation from the clean reference that counts as occluded.
    pub threshold: f32,
}

impl Default for NoisyOracleParams {
    fn default() -> Self {
        NoisyOracleParams {
            base_sigma: 0.02,
            occlusion_gain: 1.0,
            radius: 0.08,
            threshold: 0.1,
        }
    }
}

/// Ground truth plus zero-mean Gaussian noise whose scale grows with the
/// fraction of a landmark's neighbourhood that deviates from the clean
/// (attribute-free) reference image. The noise direction is fixed per
/// `(id, landmark)`, so two versions of one face differ only in scale.
pub struct NoisyOracleDetector {
    pub truth: HashMap<String, LandmarkSet>,
    pub clean: HashMap<String, Array4<f32>>,
    pub params: NoisyOracleParams,
}

impl NoisyOracleDetector {
    pub fn from_samples(ids_and_samples: &[(String, &SynthSample)], params: NoisyOracleParams) -> Self {
        NoisyOracleDetector {
            truth: ids_and_samples.iter().map(|(id, s)| (id.clone(), s.landmarks.clone())).collect(),
            clean: ids_and_samples.iter().map(|(id, s)| (id.clone(), s.image_neg.clone())).collect(),
            params,
        }
    }

    /// Fraction of pixels within the neighbourhood of `p` that deviate from `clean`.
    pub fn coverage(&self, image: &ArrayView4<'_, f32>, clean: &ArrayView4<'_, f32>, p: [f64; 2]) -> f64 {
        let (_, c, h, w) = image.dim();
        let radius = self.params.radius * w as f64;
        let (mut hit, mut all) = (0usize, 0usize);
        let y0 = (p[1] - radius).floor().max(0.0) as usize;
        let y1 = ((p[1] + radius).ceil() as usize).min(h);
        let x0 = (p[0] - radius).floor().max(0.0) as usize;
        let x1 = ((p[0] + radius).ceil() as usize).min(w);
        for y in y0..y1 {
            for x in x0..x1 {
                if (x as f64 + 0.5 - p[0]).hypot(y as f64 + 0.5 - p[1]) > radius {
                    continue;
                }
                all += 1;
                if (0..c).any(|ch| (image[[0, ch, y, x]] - clean[[0, ch, y, x]]).abs() > self.params.threshold) {
                    hit += 1;
                }
            }
        }
        if all == 0 {
            0.0
        } else {
            hit as f64 / all as f64
        }
    }
}

impl Detector for NoisyOracleDetector {
    fn detect(&self, id: &str, image: &ArrayView4<'_, f32>) -> Result<LandmarkSet> {
        let truth = self.truth.get(id).ok_or_else(|| Error::Detector(format!("no ground truth for {id}")))?;
        let clean = self.clean.get(id).ok_or_else(|| Error::Detector(format!("no reference image for {id}")))?;
        if image.dim() != clean.dim() {
            return Err(Error::Detector(format!("{id}: image {:?} vs reference {:?}", image.dim(), clean.dim())));
        }
        let (_, _, h, w) = image.dim();
        let iod = truth.inter_ocular()?;
        let mut out = LandmarkSet::new();
        for (name, &p) in &truth.points {
            let cover = self.coverage(image, &clean.view(), p);
            let sigma = (self.params.base_sigma + self.params.occlusion_gain * cover) * iod;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&format!("landmark-noise/{id}/{name}"), &[]));
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            out = out.with(
                name,
                (p[0] + sigma * dx).clamp(0.0, w as f64),
                (p[1] + sigma * dy).clamp(0.0, h as f64),
            );
        }
        Ok(out)
    }
}

/// External detector speaking a line protocol: one image path per stdin
/// line; one JSON object per stdout line, either `{"left_eye": [x, y], ...}`
/// or `{"error": "message"}`.
pub struct SubprocessDetector {
    pub program: String,
    pub args: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DetectorReply {
    Failure { error: String },
    Points(IndexMap<String, [f64; 2]>),
}

impl SubprocessDetector {
    fn run(&self, paths: &[std::path::PathBuf]) -> Result<Vec<Result<LandmarkSet>>> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Detector(format!("cannot start {}: {e}", self.program)))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            for p in paths {
                writeln!(stdin, "{}", p.display())?;
            }
        }
        let stdout = child.stdout.take().expect("piped stdout");
        let mut replies = Vec::with_capacity(paths.len());
        for line in BufReader::new(stdout).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            replies.push(match serde_json::from_str::<DetectorReply>(&line) {
                Ok(DetectorReply::Points(points)) => Ok(LandmarkSet { points }),
                Ok(DetectorReply::Failure { error }) => Err(Error::Detector(error)),
                Err(e) => Err(Error::Detector(format!("unparseable reply {line:?}: {e}"))),
            });
        }
        let status = child.wait()?;
        if !status.success() {
            return Err(Error::Detector(format!("{} exited with {status}", self.program)));
        }
        if replies.len() != paths.len() {
            return Err(Error::Detector(format!(
                "{} answered {} of {} images",
                self.program,
                replies.len(),
                paths.len()
            )));
        }
        Ok(replies)
    }
}

impl Detector for SubprocessDetector {
    fn detect(&self, id: &str, image: &ArrayView4<'_, f32>) -> Result<LandmarkSet> {
        self.detect_batch(&[(id, image.view())]).pop().expect("one reply")
    }

    fn detect_batch(&self, items: &[(&str, ArrayView4<'_, f32>)]) -> Vec<Result<LandmarkSet>> {
        let attempt = || -> Result<Vec<Result<LandmarkSet>>> {
            let dir = tempfile::tempdir()?;
            let mut paths = Vec::with_capacity(items.len());
            for (i, (_, img)) in items.iter().enumerate() {
                let p = dir.path().join(format!("{i:06}.png"));
                to_rgb8(img, 0).save(&p)?;
                paths.push(p);
            }
            self.run(&paths)
        };
        match attempt() {
            Ok(r) => r,
            Err(e) => {
                let msg = e.to_string();
                items.iter().map(|_| Err(Error::Detector(msg.clone()))).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    D0,
    D1,
    D1m,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::D0, Group::D1, Group::D1m];

    pub fn name(self) -> &'static str {
        match self {
            Group::D0 => "D0",
            Group::D1 => "D1",
            Group::D1m => "D1m",
        }
    }

    /// Reference errors `(eyes, rest)` reported for the original model on CelebA.
    pub fn reference(self) -> (f64, f64) {
        match self {
            Group::D0 => (0.02341, 0.04424),
            Group::D1 => (0.03570, 0.04605),
            Group::D1m => (0.03048, 0.04608),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub source_id: String,
    pub group: Group,
    pub distances: IndexMap<String, f64>,
}

/// Images with ground-truth landmarks, stacked as `(n, 3, H, W)`.
#[derive(Clone, Debug)]
pub struct EvalSet {
    pub ids: Vec<String>,
    pub images: Array4<f32>,
    pub truth: Vec<LandmarkSet>,
}

impl EvalSet {
    pub fn new(ids: Vec<String>, images: Array4<f32>, truth: Vec<LandmarkSet>) -> Result<Self> {
        if ids.len() != images.dim().0 || ids.len() != truth.len() {
            return Err(Error::invalid(format!(
                "{} ids, {} images, {} landmark sets",
                ids.len(),
                images.dim().0,
                truth.len()
            )));
        }
        if ids.is_empty() {
            return Err(Error::invalid("empty evaluation set"));
        }
        Ok(EvalSet { ids, images, truth })
    }

    /// Negative (`positive = false`) or positive images of synthetic samples, ids `prefix` + index.
    pub fn from_synth(samples: &[SynthSample], positive: bool, prefix: &str) -> Result<Self> {
        let views: Vec<_> = samples
            .iter()
            .map(|s| if positive { s.image_pos.view() } else { s.image_neg.view() })
            .collect();
        let images = concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))?;
        Self::new(
            (0..samples.len()).map(|i| format!("{prefix}{i:06}")).collect(),
            images,
            samples.iter().map(|s| s.landmarks.clone()).collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: Group,
    pub eye_error: f64,
    pub rest_error: f64,
    pub evaluated: usize,
    pub missing: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub rows: Vec<GroupSummary>,
    pub records: Vec<EvalRecord>,
}

impl GainReport {
    pub fn row(&self, group: Group) -> &GroupSummary {
        self.rows.iter().find(|r| r.group == group).expect("all groups present")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("group,eye_error,rest_error,evaluated,missing,reference_eye,reference_rest\n");
        for r in &self.rows {
            let (re, rr) = r.group.reference();
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{},{},{re},{rr}",
                r.group.name(),
                r.eye_error,
                r.rest_error,
                r.evaluated,
                r.missing
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("Average normalized landmark error\n");
        let _ = writeln!(s, "{:<6}{:>12}{:>12}{:>10}{:>9}{:>12}{:>12}", "set", "eyes", "rest", "n", "missing", "ref eyes", "ref rest");
        for r in &self.rows {
            let (re, rr) = r.group.reference();
            let _ = writeln!(
                s,
                "{:<6}{:>12.5}{:>12.5}{:>10}{:>9}{:>12.5}{:>12.5}",
                r.group.name(),
                r.eye_error,
                r.rest_error,
                r.evaluated,
                r.missing,
                re,
                rr
            );
        }
        s.push_str("Reference values come from the original CelebA-scale study and are shown for comparison only.\n");
        s
    }
}

fn mean_of(records: &[&EvalRecord], points: &[&str]) -> f64 {
    let vals: Vec<f64> = records
        .iter()
        .flat_map(|r| points.iter().filter_map(|p| r.distances.get(*p).copied()))
        .collect();
    if vals.is_empty() {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Detects landmarks on `d0`, `d1` and `d1m = manipulate(d1, 1 -> 0)` and
/// averages eye and rest errors per set. Detector failures are counted as
/// missing and excluded from the means.
pub fn landmark_gain_eval(ckpt: &Checkpoint, d0: &EvalSet, d1: &EvalSet, detector: &dyn Detector) -> Result<GainReport> {
    let (d1m, _) = manipulate(ckpt, &d1.images.view(), Direction::Remove)?;
    landmark_gain_from_images(d0, d1, &d1m, detector)
}

/// Same as [`landmark_gain_eval`] with the manipulated images supplied.
pub fn landmark_gain_from_images(d0: &EvalSet, d1: &EvalSet, d1m: &Array4<f32>, detector: &dyn Detector) -> Result<GainReport> {
    if d1m.dim() != d1.images.dim() {
        return Err(Error::shape(format!("D1m {:?} vs D1 {:?}", d1m.dim(), d1.images.dim())));
    }
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for group in Group::ALL {
        let (set, images) = match group {
            Group::D0 => (d0, &d0.images),
            Group::D1 => (d1, &d1.images),
            Group::D1m => (d1, d1m),
        };
        let items: Vec<(&str, ArrayView4<'_, f32>)> = set
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), images.slice(s![i..i + 1, .., .., ..])))
            .collect();
        let detections = detector.detect_batch(&items);
        let mut missing = 0;
        let start = records.len();
        for ((id, det), truth) in set.ids.iter().zip(detections).zip(&set.truth) {
            match det.and_then(|d| normalized_landmark_error(&d, truth)) {
                Ok(distances) => records.push(EvalRecord {
                    source_id: id.clone(),
                    group,
                    distances,
                }),
                Err(_) => missing += 1,
            }
        }
        let mine: Vec<&EvalRecord> = records[start..].iter().collect();
        rows.push(GroupSummary {
            group,
            eye_error: mean_of(&mine, &EYE_POINTS),
            rest_error: mean_of(&mine, &REST_POINTS),
            evaluated: mine.len(),
            missing,
        });
    }
    Ok(GainReport { rows, records })
}

/// Paired-oracle metrics of one direction over synthetic samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub direction: Direction,
    pub samples: usize,
    /// Fraction of samples where the output is closer (mean L1) to the
    /// toggled ground truth than the input is.
    pub improved_fraction: f64,
    pub mean_l1_input: f64,
    pub mean_l1_output: f64,
    pub mean_localization: f64,
}

/// Manipulates each sample's source image and compares with its paired
/// target. Localization uses the network residual, or `x~ - x` for models
/// trained without the residual connection.
pub fn oracle_paired_eval(ckpt: &Checkpoint, samples: &[SynthSample], direction: Direction) -> Result<OracleReport> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples"));
    }
    let (src, dst): (Vec<_>, Vec<_>) = samples
        .iter()
        .map(|s| match direction {
            Direction::Remove => (s.image_pos.view(), s.image_neg.view()),
            Direction::Add => (s.image_neg.view(), s.image_pos.view()),
        })
        .unzip();
    let x = concatenate(Axis(0), &src).map_err(|e| Error::shape(e.to_string()))?;
    let target = concatenate(Axis(0), &dst).map_err(|e| Error::shape(e.to_string()))?;
    let mut outputs = Vec::with_capacity(samples.len());
    let mut residuals = Vec::with_capacity(samples.len());
    const CHUNK: usize = 50;
    for start in (0..samples.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(samples.len());
        let (y, r) = manipulate(ckpt, &x.slice(s![start..end, .., .., ..]), direction)?;
        outputs.push(y);
        residuals.push(r);
    }
    let cat = |v: &[Array4<f32>]| concatenate(Axis(0), &v.iter().map(|a| a.view()).collect::<Vec<_>>()).expect("same shapes");
    let y = cat(&outputs);
    let mut r = cat(&residuals);
    if ckpt.meta.mode == AblationMode::NoResidual {
        r = &y - &x;
    }
    let mut improved = 0usize;
    let (mut l1_in, mut l1_out, mut loc) = (0.0, 0.0, 0.0);
    for (i, s) in samples.iter().enumerate() {
        let one = |a: &Array4<f32>| a.slice(s![i..i + 1, .., .., ..]).to_owned();
        let t = one(&target);
        let din = crate::tensor::mean_abs_diff(&one(&x).view(), &t.view())?;
        let dout = crate::tensor::mean_abs_diff(&one(&y).view(), &t.view())?;
        if dout < din {
            improved += 1;
        }
        l1_in += din;
        l1_out += dout;
        loc += residual_localization(&r.slice(s![i..i + 1, .., .., ..]), &s.mask.view())?;
    }
    let n = samples.len() as f64;
    Ok(OracleReport {
        direction,
        samples: samples.len(),
        improved_fraction: improved as f64 / n,
        mean_l1_input: l1_in / n,
        mean_l1_output: l1_out / n,
        mean_localization: loc / n,
    })
}

/// One tile of a figure grid; both variants hold one `(1, 3, H, W)` image.
pub enum Tile<'a> {
    /// A `[-1, 1]` image.
    Image(ArrayView4<'a, f32>),
    /// A residual, shown with `[-max|r|, max|r|]` stretched to the 8-bit range.
    Residual(ArrayView4<'a, f32>),
}

impl Tile<'_> {
    fn view(&self) -> &ArrayView4<'_, f32> {
        match self {
            Tile::Image(v) | Tile::Residual(v) => v,
        }
    }

    fn render(&self) -> RgbImage {
        match self {
            Tile::Image(v) => to_rgb8(v, 0),
            Tile::Residual(v) => {
                let m = v.iter().fold(0.0f32, |a, &b| a.max(b.abs()));
                let (_, _, h, w) = v.dim();
                RgbImage::from_fn(w as u32, h as u32, |x, y| {
                    let mut px = [0u8; 3];
                    for (c, p) in px.iter_mut().enumerate() {
                        let val = v[[0, c, y as usize, x as usize]];
                        *p = unit_to_u8(if m > 0.0 { (val / m) as f64 } else { 0.0 });
                    }
                    image::Rgb(px)
                })
            }
        }
    }
}

/// Tiles rows of equally sized images into one 8-bit image.
pub fn render_grid(rows: &[Vec<Tile<'_>>]) -> Result<RgbImage> {
    let first = rows
        .iter()
        .flat_map(|r| r.first())
        .next()
        .ok_or_else(|| Error::invalid("grid has no tiles"))?;
    let (_, _, h, w) = first.view().dim();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = RgbImage::from_pixel((cols * w) as u32, (rows.len() * h) as u32, image::Rgb([0, 0, 0]));
    for (ri, row) in rows.iter().enumerate() {
        for (ci, tile) in row.iter().enumerate() {
            let v = tile.view();
            if v.dim() != (1, 3, h, w) {
                return Err(Error::shape(format!("tile ({ri}, {ci}) is {:?}, expected (1, 3, {h}, {w})", v.dim())));
            }
            image::imageops::replace(&mut out, &tile.render(), (ci * w) as i64, (ri * h) as i64);
        }
    }
    Ok(out)
}

pub fn export_grid(rows: &[Vec<Tile<'_>>], path: &Path) -> Result<RgbImage> {
    let img = render_grid(rows)?;
    img.save(path)?;
    Ok(img)
}

/// Boolean mask as a `(H, W)` array from an 8-bit image (non-zero = set).
pub fn mask_from_gray(img: &image::GrayImage) -> Array2<bool> {
    let (w, h) = img.dimensions();
    Array2::from_shape_fn((h as usize, w as usize), |(y, x)| img.get_pixel(x as u32, y as u32)[0] > 0)
}

/// Every point name the detectors report.
pub fn landmark_names() -> [&'static str; 5] {
    ALL_POINTS
}
