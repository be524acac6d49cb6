//! Synthetic scenes with known ground truth, the degradations that turn them
//! into fusion inputs, and a naive reference fusion.
//!
//! [`gen_scene`] draws occluder shapes over a textured background.
//! [`corrupt_to_probmap`] stands in for a coarse semantic network: it blurs
//! and perturbs the one-hot ground truth. [`oversegment`] stands in for a
//! proposal model: it splits each connected region into several pieces that
//! respect class boundaries unless boundary jitter is requested.
//!
//! [`oracle_fuse`] recomputes soft-vote fusion with plain nested loops over
//! dense masks. It shares no code with [`crate::fusion`] beyond the input
//! types and exists to check it.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use crate::augment::Instance;
use crate::error::{Error, Result};
use crate::fusion::{FallbackPolicy, FusionConfig, OverlapPolicy, TiePolicy};
use crate::geometry::{self, Point};
use crate::seeded_rng;
use crate::types::{
    ensure_dims, validate_probmap, ClassId, ClassPlanes, Image, LabelMask, ProbMap,
    RawConfidences, Segment, SegmentSet,
};

/// Image, ground truth and the instances it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: Image,
    pub gt: LabelMask,
    pub instances: Vec<Instance>,
    pub seed: u64,
}

impl Scene {
    /// Builds the ground truth by painting instance masks in order.
    pub fn from_instances(image: Image, instances: Vec<Instance>, seed: u64) -> Result<Self> {
        let (h, w) = image.dims();
        let mut gt = LabelMask::filled(h, w, 0);
        for inst in &instances {
            ensure_dims((h, w), inst.mask.dims())?;
            for p in inst.mask.ones() {
                gt.labels_mut()[p] = inst.class;
            }
        }
        Ok(Self {
            image,
            gt,
            instances,
            seed,
        })
    }

    /// Fraction of pixels labeled with a non-background class.
    pub fn occluded_fraction(&self) -> f64 {
        let occluded = self.gt.labels().iter().filter(|&&l| l != 0).count();
        occluded as f64 / self.gt.labels().len() as f64
    }
}

/// Shape families drawn by [`gen_scene`], stored as the instance `kind`.
pub const KIND_PATCH: u32 = 0;
pub const KIND_SHEET: u32 = 1;
pub const KIND_PIPE: u32 = 2;

const OCCLUSION: ClassId = 1;

fn random_shape<R: Rng>(rng: &mut R, h: usize, w: usize) -> (u32, Vec<Point>) {
    let s = h.min(w) as f64;
    let (hf, wf) = (h as f64, w as f64);
    match rng.random_range(0..3u32) {
        KIND_PATCH => {
            let bw = (rng.random_range(0.08..0.3) * s).round().max(2.0);
            let bh = (rng.random_range(0.08..0.3) * s).round().max(2.0);
            let x0 = rng.random_range(0..=(w as i64 - bw as i64).max(0)) as f64;
            let y0 = rng.random_range(0..=(h as i64 - bh as i64).max(0)) as f64;
            (KIND_PATCH, geometry::rect_polygon(x0, y0, x0 + bw, y0 + bh))
        }
        KIND_SHEET => {
            let rx = rng.random_range(0.06..0.2) * s;
            let ry = rng.random_range(0.06..0.2) * s;
            let cx = rng.random_range(0.0..wf);
            let cy = rng.random_range(0.0..hf);
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            (KIND_SHEET, geometry::ellipse_polygon(cx, cy, rx, ry, angle, 32))
        }
        _ => {
            let width = rng.random_range(1..=3u32) as f64;
            let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
            let mut pt = (rng.random_range(0.0..wf), rng.random_range(0.0..hf));
            let mut points = vec![pt];
            for _ in 0..rng.random_range(1..=3u32) {
                let len = rng.random_range(0.15..0.4) * s;
                pt = (pt.0 + len * heading.cos(), pt.1 + len * heading.sin());
                points.push(pt);
                heading += rng.random_range(-0.5..0.5);
            }
            (KIND_PIPE, geometry::thick_polyline(&points, width))
        }
    }
}

fn jitter_channel<R: Rng>(rng: &mut R, base: f64, spread: f64) -> u8 {
    (base + rng.random_range(-spread..=spread))
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Draws `n_shapes` occluders (rectangles, ellipses and thin bent pipes)
/// over a textured background. Deterministic in `seed`.
pub fn gen_scene(seed: u64, height: usize, width: usize, n_shapes: usize) -> Scene {
    let mut rng = seeded_rng(seed);
    let (h, w) = (height, width);

    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(60.0..180.0));
    let grad: [f64; 2] = std::array::from_fn(|_| rng.random_range(-30.0..30.0));
    let mut image = Image::new(h, w);
    for r in 0..h {
        for c in 0..w {
            let shade = grad[0] * r as f64 / h as f64 + grad[1] * c as f64 / w as f64;
            let px = std::array::from_fn(|k| jitter_channel(&mut rng, base[k] + shade, 12.0));
            image.set(r, c, px);
        }
    }

    let mut instances = Vec::with_capacity(n_shapes);
    while instances.len() < n_shapes {
        let (kind, polygon) = random_shape(&mut rng, h, w);
        let color: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..255.0));
        let Ok(inst) = Instance::from_polygon(OCCLUSION, kind, &polygon, h, w) else {
            continue;
        };
        if inst.area() == 0 {
            continue;
        }
        for p in inst.mask.ones() {
            let px = std::array::from_fn(|k| jitter_channel(&mut rng, color[k], 6.0));
            image.set(p / w, p % w, px);
        }
        instances.push(inst);
    }
    Scene::from_instances(image, instances, seed).expect("instances share the image size")
}

/// How ground truth is degraded into fusion inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionConfig {
    /// Box-blur radius applied to the one-hot map, in pixels.
    pub blur_radius: usize,
    /// Probability that a pixel's confidences are replaced by random ones.
    pub flip_noise: f64,
    /// Maximum displacement, in pixels, of proposal boundaries. Zero keeps
    /// every proposal inside one ground-truth region.
    pub boundary_jitter: usize,
    /// Expected number of proposals per connected ground-truth region.
    pub over_split: f64,
    /// Probability that a proposal is discarded, leaving its pixels
    /// uncovered. Zero gives full coverage.
    pub drop_fraction: f64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        Self {
            blur_radius: 2,
            flip_noise: 0.05,
            boundary_jitter: 0,
            over_split: 3.0,
            drop_fraction: 0.0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("flip_noise", self.flip_noise),
            ("drop_fraction", self.drop_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name}={v} outside [0, 1]")));
            }
        }
        if self.over_split.is_nan() || self.over_split < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "over_split={} must be at least 1",
                self.over_split
            )));
        }
        Ok(())
    }
}

/// Mean over the in-bounds part of a `(2r+1)`-wide window along rows, then
/// along columns.
fn box_blur(plane: &[f64], h: usize, w: usize, r: usize) -> Vec<f64> {
    let pass = |src: &[f64], len: usize, stride: usize, lines: usize, step: usize| {
        let mut out = vec![0.0; src.len()];
        for line in 0..lines {
            let base = line * step;
            for i in 0..len {
                let lo = i.saturating_sub(r);
                let hi = (i + r).min(len - 1);
                let sum: f64 = (lo..=hi).map(|j| src[base + j * stride]).sum();
                out[base + i * stride] = sum / (hi - lo + 1) as f64;
            }
        }
        out
    };
    let horizontal = pass(plane, w, 1, h, w);
    pass(&horizontal, h, w, w, 1)
}

/// Blurs and perturbs the one-hot lift of `gt` into a coarse probability
/// map. The class count is `max(2, max label + 1)`.
pub fn corrupt_to_probmap<R: Rng + ?Sized>(
    gt: &LabelMask,
    cfg: &CorruptionConfig,
    rng: &mut R,
) -> Result<ProbMap> {
    cfg.validate()?;
    let (h, w) = gt.dims();
    let n = (gt.max_label().unwrap_or(0) as usize + 1).max(2);
    let hw = h * w;
    let mut planes: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            gt.labels()
                .iter()
                .map(|&l| if l as usize == c { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    if cfg.blur_radius > 0 {
        planes = planes
            .iter()
            .map(|p| box_blur(p, h, w, cfg.blur_radius))
            .collect();
    }
    if cfg.flip_noise > 0.0 {
        for p in 0..hw {
            if rng.random_bool(cfg.flip_noise) {
                let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
                let total: f64 = weights.iter().sum::<f64>().max(f64::MIN_POSITIVE);
                for (plane, wgt) in planes.iter_mut().zip(&weights) {
                    plane[p] = wgt / total;
                }
            }
        }
    }
    let mut values = Vec::with_capacity(hw * n);
    for plane in &planes {
        values.extend(plane.iter().map(|&v| v as f32));
    }
    validate_probmap(RawConfidences::new(h, w, n, values)?)
}

/// 4-connected components of equal label, each as ascending row-major
/// pixel indices, ordered by first pixel.
pub fn connected_regions(labels: &LabelMask) -> Vec<Vec<usize>> {
    let (h, w) = labels.dims();
    let data = labels.labels();
    let mut seen = vec![false; h * w];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut region = Vec::new();
        while let Some(p) = queue.pop_front() {
            region.push(p);
            let (r, c) = (p / w, p % w);
            let neighbors = [
                (r > 0).then(|| p - w),
                (r + 1 < h).then(|| p + w),
                (c > 0).then(|| p - 1),
                (c + 1 < w).then(|| p + 1),
            ];
            for q in neighbors.into_iter().flatten() {
                if !seen[q] && data[q] == data[p] {
                    seen[q] = true;
                    queue.push_back(q);
                }
            }
        }
        region.sort_unstable();
        regions.push(region);
    }
    regions
}

/// Splits every connected region of `gt` into about `over_split` pieces
/// (nearest-seed partition), optionally jitters piece boundaries, and
/// scores each piece with synthetic confidence/stability values that pass
/// the default proposal filter.
pub fn oversegment<R: Rng + ?Sized>(
    gt: &LabelMask,
    cfg: &CorruptionConfig,
    rng: &mut R,
) -> Result<SegmentSet> {
    cfg.validate()?;
    let (h, w) = gt.dims();
    let mut piece_of = vec![0usize; h * w];
    let mut n_pieces = 0usize;
    for region in connected_regions(gt) {
        let whole = cfg.over_split.floor();
        let extra = rng.random_bool(cfg.over_split - whole);
        let k = (whole as usize + usize::from(extra)).clamp(1, region.len());
        let seeds: Vec<(i64, i64)> = index::sample(rng, region.len(), k)
            .into_iter()
            .map(|i| ((region[i] / w) as i64, (region[i] % w) as i64))
            .collect();
        for &p in &region {
            let (r, c) = ((p / w) as i64, (p % w) as i64);
            let nearest = seeds
                .iter()
                .enumerate()
                .min_by_key(|(_, &(sr, sc))| ((sr - r).pow(2) + (sc - c).pow(2), 0))
                .map(|(i, _)| i)
                .expect("at least one seed");
            piece_of[p] = n_pieces + nearest;
        }
        n_pieces += k;
    }

    if cfg.boundary_jitter > 0 {
        let j = cfg.boundary_jitter as i64;
        let source = piece_of.clone();
        for (p, piece) in piece_of.iter_mut().enumerate() {
            let dr = rng.random_range(-j..=j);
            let dc = rng.random_range(-j..=j);
            let r = ((p / w) as i64 + dr).clamp(0, h as i64 - 1) as usize;
            let c = ((p % w) as i64 + dc).clamp(0, w as i64 - 1) as usize;
            *piece = source[r * w + c];
        }
    }

    let mut pixels: Vec<Vec<u32>> = vec![Vec::new(); n_pieces];
    for (p, &piece) in piece_of.iter().enumerate() {
        pixels[piece].push(p as u32);
    }
    let mut segments = Vec::new();
    for px in pixels {
        if px.is_empty() || rng.random_bool(cfg.drop_fraction) {
            continue;
        }
        let confidence = rng.random_range(0.9..=1.0);
        let stability = rng.random_range(0.85..=1.0);
        let id = segments.len() as u32;
        segments.push(Segment::from_pixels(id, h, w, px, confidence, stability)?);
    }
    SegmentSet::new(h, w, segments)
}

/// A synthetic scene together with its degraded fusion inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub scene: Scene,
    pub sem: ProbMap,
    pub segments: SegmentSet,
}

/// Salt separating the corruption stream from the scene-drawing stream.
const CORRUPTION_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// Scene plus coarse probability map and proposals, all derived from `seed`.
pub fn gen_sample(
    seed: u64,
    size: usize,
    n_shapes: usize,
    cfg: &CorruptionConfig,
) -> Result<SyntheticSample> {
    let scene = gen_scene(seed, size, size, n_shapes);
    let mut rng = seeded_rng(seed ^ CORRUPTION_STREAM);
    let sem = corrupt_to_probmap(&scene.gt, cfg, &mut rng)?;
    let segments = oversegment(&scene.gt, cfg, &mut rng)?;
    Ok(SyntheticSample {
        scene,
        sem,
        segments,
    })
}

/// Reference soft-vote fusion written as literally as possible: dense masks,
/// a full image scan per segment and class, and a scan over all segments per
/// pixel to find its owner.
pub fn oracle_fuse<P: ClassPlanes + ?Sized>(
    sem: &P,
    segs: &SegmentSet,
    cfg: &FusionConfig,
) -> Result<LabelMask> {
    ensure_dims(sem.dims(), segs.dims())?;
    let (h, w) = sem.dims();
    let n = sem.n_classes();
    let masks: Vec<_> = segs.segments().iter().map(Segment::to_mask).collect();

    let mut class_of_segment: Vec<Option<ClassId>> = Vec::new();
    for mask in &masks {
        if mask.count_ones() == 0 {
            class_of_segment.push(None);
            continue;
        }
        let mut votes = vec![0.0f64; n];
        for (k, vote) in votes.iter_mut().enumerate() {
            for r in 0..h {
                for c in 0..w {
                    if mask.get(r, c) {
                        *vote += sem.value(r, c, k) as f64;
                    }
                }
            }
        }
        let mut best = 0;
        for k in 1..n {
            if votes[k] > votes[best] {
                best = k;
            }
        }
        class_of_segment.push(Some(best as ClassId));
    }

    let mut out = LabelMask::filled(h, w, 0);
    for r in 0..h {
        for c in 0..w {
            let mut owner: Option<usize> = None;
            for (i, (seg, mask)) in segs.segments().iter().zip(&masks).enumerate() {
                if !mask.get(r, c) {
                    continue;
                }
                owner = match (cfg.overlap, owner) {
                    (_, None) | (OverlapPolicy::LaterSegmentWins, Some(_)) => Some(i),
                    (OverlapPolicy::SmallerSegmentWins, Some(j)) => {
                        let other = &segs.segments()[j];
                        if (seg.area(), seg.id()) < (other.area(), other.id()) {
                            Some(i)
                        } else {
                            Some(j)
                        }
                    }
                };
            }
            let label = match owner {
                Some(i) => class_of_segment[i].expect("covering segment is non-empty"),
                None => match cfg.fallback {
                    FallbackPolicy::Background => 0,
                    FallbackPolicy::Argmax => {
                        let TiePolicy::LowestClassIndex = cfg.tie;
                        let mut best = 0;
                        for k in 1..n {
                            if sem.value(r, c, k) > sem.value(r, c, best) {
                                best = k;
                            }
                        }
                        best as ClassId
                    }
                },
            };
            out.set(r, c, label);
        }
    }
    Ok(out)
}
