//! Seeded training-time augmentations: horizontal flip, color jitter,
//! brightness/contrast, instance Copy-Paste and crop/pad to a square working
//! size.
//!
//! Every random choice is drawn from the caller's RNG, so a fixed seed gives
//! bit-identical output.

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Point};
use crate::synth::Scene;
use crate::types::{ensure_dims, BinaryMask, ClassId, Image, LabelMask};

/// A labeled object: its polygon annotation and the mask it covers.
///
/// The mask starts as the even-odd rasterization of the polygon. Transforms
/// move both together; after cropping, the polygon is clipped to the canvas
/// and the mask is the authoritative pixel set.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// Label written into the scene's label mask (non-zero).
    pub class: ClassId,
    /// Free-form object type (e.g. tube, patch, sheet).
    pub kind: u32,
    pub polygon: Vec<Point>,
    pub mask: BinaryMask,
}

impl Instance {
    /// Clips `polygon` to the image and rasterizes it.
    pub fn from_polygon(
        class: ClassId,
        kind: u32,
        polygon: &[Point],
        height: usize,
        width: usize,
    ) -> Result<Self> {
        if class == 0 {
            return Err(Error::MalformedScene(
                "instance class 0 is reserved for background".into(),
            ));
        }
        if polygon.len() < 3 {
            return Err(Error::MalformedScene(format!(
                "polygon needs at least 3 vertices, got {}",
                polygon.len()
            )));
        }
        let polygon = geometry::clip_to_rect(polygon, height as f64, width as f64);
        if polygon.len() < 3 {
            return Err(Error::MalformedScene("polygon lies outside the image".into()));
        }
        let mask = geometry::rasterize_polygon(&polygon, height, width);
        Ok(Self {
            class,
            kind,
            polygon,
            mask,
        })
    }

    pub fn area(&self) -> usize {
        self.mask.count_ones()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugConfig {
    pub flip_prob: f64,
    /// Maximum fractional change for brightness, contrast, saturation and
    /// hue in the color jitter.
    pub jitter_max: f64,
    pub jitter_prob: f64,
    /// Maximum fractional change for the separate brightness/contrast step.
    pub bc_max: f64,
    pub copy_paste_fraction: f64,
    pub target_size: usize,
    pub seed: u64,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            jitter_max: 0.2,
            jitter_prob: 0.5,
            bc_max: 0.2,
            copy_paste_fraction: 0.1,
            target_size: 512,
            seed: 0,
        }
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("flip_prob", self.flip_prob),
            ("jitter_max", self.jitter_max),
            ("jitter_prob", self.jitter_prob),
            ("bc_max", self.bc_max),
            ("copy_paste_fraction", self.copy_paste_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name}={v} outside [0, 1]")));
            }
        }
        if self.target_size == 0 {
            return Err(Error::InvalidConfig("target_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> std::result::Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Mirrors image, labels and instances left-to-right.
pub fn mirror(scene: &Scene) -> Scene {
    let (h, w) = scene.image.dims();
    let mut image = Image::new(h, w);
    let mut gt = LabelMask::filled(h, w, 0);
    for r in 0..h {
        for c in 0..w {
            image.set(r, w - 1 - c, scene.image.get(r, c));
            gt.set(r, w - 1 - c, scene.gt.get(r, c));
        }
    }
    let instances = scene
        .instances
        .iter()
        .map(|inst| Instance {
            polygon: geometry::mirror_x(&inst.polygon, w as f64),
            mask: BinaryMask::from_fn(h, w, |r, c| inst.mask.get(r, w - 1 - c)),
            ..inst.clone()
        })
        .collect();
    Scene {
        image,
        gt,
        instances,
        seed: scene.seed,
    }
}

/// Mirrors with probability `prob`, otherwise returns the scene unchanged.
pub fn flip<R: Rng + ?Sized>(scene: &Scene, prob: f64, rng: &mut R) -> Scene {
    if rng.random_bool(prob) {
        mirror(scene)
    } else {
        scene.clone()
    }
}

/// Multiplicative factors for the color jitter. A neutral factor (1.0, or
/// 0.0 for the hue shift) leaves its step out entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterFactors {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    /// Hue rotation as a fraction of the full circle.
    pub hue_shift: f64,
}

impl JitterFactors {
    pub const NEUTRAL: Self = Self {
        brightness: 1.0,
        contrast: 1.0,
        saturation: 1.0,
        hue_shift: 0.0,
    };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, max_change: f64) -> Self {
        let m = max_change;
        Self {
            brightness: rng.random_range(1.0 - m..=1.0 + m),
            contrast: rng.random_range(1.0 - m..=1.0 + m),
            saturation: rng.random_range(1.0 - m..=1.0 + m),
            hue_shift: rng.random_range(-m..=m),
        }
    }
}

fn clamp_channel(v: f64) -> f64 {
    v.clamp(0.0, 255.0)
}

fn luma(px: &[f64]) -> f64 {
    0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
}

fn rgb_to_hsv(px: &[f64]) -> (f64, f64, f64) {
    let (r, g, b) = (px[0], px[1], px[2]);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    } / 6.0;
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    (hue, sat, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6.rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

/// Applies brightness, contrast, saturation and hue in that order, clamping
/// to `[0, 255]` after each step and rounding once at the end.
pub fn apply_jitter(img: &Image, f: &JitterFactors) -> Image {
    let mut buf: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    if f.brightness != 1.0 {
        buf.iter_mut()
            .for_each(|v| *v = clamp_channel(*v * f.brightness));
    }
    if f.contrast != 1.0 && !buf.is_empty() {
        let mean = buf.iter().sum::<f64>() / buf.len() as f64;
        buf.iter_mut()
            .for_each(|v| *v = clamp_channel(mean + f.contrast * (*v - mean)));
    }
    if f.saturation != 1.0 {
        for px in buf.chunks_exact_mut(3) {
            let gray = luma(px);
            px.iter_mut()
                .for_each(|v| *v = clamp_channel(gray + f.saturation * (*v - gray)));
        }
    }
    if f.hue_shift != 0.0 {
        for px in buf.chunks_exact_mut(3) {
            let (h, s, v) = rgb_to_hsv(px);
            let rgb = hsv_to_rgb(h + f.hue_shift, s, v);
            px.iter_mut()
                .zip(rgb)
                .for_each(|(dst, src)| *dst = clamp_channel(src));
        }
    }
    let data = buf.iter().map(|v| v.round() as u8).collect();
    Image::from_raw(img.height(), img.width(), data).expect("same dimensions")
}

/// Random brightness, contrast, saturation and hue jitter, each factor drawn
/// uniformly within `max_change` of neutral.
pub fn color_jitter<R: Rng + ?Sized>(img: &Image, rng: &mut R, max_change: f64) -> Image {
    apply_jitter(img, &JitterFactors::sample(rng, max_change))
}

/// Random brightness and contrast only.
pub fn brightness_contrast<R: Rng + ?Sized>(img: &Image, rng: &mut R, max_change: f64) -> Image {
    let m = max_change;
    let factors = JitterFactors {
        brightness: rng.random_range(1.0 - m..=1.0 + m),
        contrast: rng.random_range(1.0 - m..=1.0 + m),
        ..JitterFactors::NEUTRAL
    };
    apply_jitter(img, &factors)
}

/// Number of instances Copy-Paste moves out of `available`.
pub fn paste_count(available: usize, fraction: f64) -> usize {
    ((fraction * available as f64).round() as usize).clamp(1, available.max(1))
}

/// Copies a random `fraction` (at least one) of `src`'s instances into
/// `dst`. Each pasted instance is independently mirrored within its bounding
/// box with probability 0.5 and moved to a random in-bounds position; its
/// pixels overwrite the destination image and labels and it is appended to
/// the destination's instance list.
pub fn copy_paste<R: Rng + ?Sized>(
    src: &Scene,
    dst: &Scene,
    fraction: f64,
    rng: &mut R,
) -> Result<Scene> {
    ensure_dims(dst.image.dims(), src.image.dims())?;
    if src.instances.is_empty() {
        return Err(Error::NoInstances);
    }
    let (h, w) = dst.image.dims();
    let mut out = dst.clone();
    let k = paste_count(src.instances.len(), fraction);
    let mut picked = index::sample(rng, src.instances.len(), k).into_vec();
    picked.sort_unstable();

    for i in picked {
        let inst = &src.instances[i];
        let Some((r0, c0, r1, c1)) = inst.mask.bbox() else {
            continue;
        };
        let (bh, bw) = (r1 - r0 + 1, c1 - c0 + 1);
        let mirrored = rng.random_bool(0.5);
        let top = rng.random_range(0..=h - bh);
        let left = rng.random_range(0..=w - bw);

        let mut mask = BinaryMask::new(h, w);
        for p in inst.mask.ones() {
            let (r, c) = (p / w, p % w);
            let (lr, mut lc) = (r - r0, c - c0);
            if mirrored {
                lc = bw - 1 - lc;
            }
            let (tr, tc) = (top + lr, left + lc);
            out.image.set(tr, tc, src.image.get(r, c));
            out.gt.set(tr, tc, inst.class);
            mask.set(tr, tc, true);
        }
        let mut polygon = inst.polygon.clone();
        if mirrored {
            polygon = geometry::mirror_x(&polygon, (c0 + c1 + 1) as f64);
        }
        polygon = geometry::translate(
            &polygon,
            left as f64 - c0 as f64,
            top as f64 - r0 as f64,
        );
        out.instances.push(Instance {
            class: inst.class,
            kind: inst.kind,
            polygon: geometry::clip_to_rect(&polygon, h as f64, w as f64),
            mask,
        });
    }
    Ok(out)
}

/// Source start, destination start and copied length along one axis.
fn fit_axis(len: usize, target: usize) -> (usize, usize, usize) {
    if len >= target {
        ((len - target) / 2, 0, target)
    } else {
        (0, (target - len) / 2, len)
    }
}

/// Center-crops or symmetrically zero-pads to `height x width`. Padding is
/// black in the image and class 0 in the labels. Instances that end up
/// without pixels are dropped.
pub fn fit_to(scene: &Scene, height: usize, width: usize) -> Scene {
    let (h, w) = scene.image.dims();
    let (sr, dr, nr) = fit_axis(h, height);
    let (sc, dc, nc) = fit_axis(w, width);
    let mut image = Image::new(height, width);
    let mut gt = LabelMask::filled(height, width, 0);
    for r in 0..nr {
        for c in 0..nc {
            image.set(dr + r, dc + c, scene.image.get(sr + r, sc + c));
            gt.set(dr + r, dc + c, scene.gt.get(sr + r, sc + c));
        }
    }
    let (dy, dx) = (dr as f64 - sr as f64, dc as f64 - sc as f64);
    let instances = scene
        .instances
        .iter()
        .filter_map(|inst| {
            let mut mask = BinaryMask::new(height, width);
            for r in 0..nr {
                for c in 0..nc {
                    if inst.mask.get(sr + r, sc + c) {
                        mask.set(dr + r, dc + c, true);
                    }
                }
            }
            if mask.count_ones() == 0 {
                return None;
            }
            let moved = geometry::translate(&inst.polygon, dx, dy);
            Some(Instance {
                polygon: geometry::clip_to_rect(&moved, height as f64, width as f64),
                mask,
                ..inst.clone()
            })
        })
        .collect();
    Scene {
        image,
        gt,
        instances,
        seed: scene.seed,
    }
}

/// Center-crop / zero-pad to a `target x target` square.
pub fn crop_pad(scene: &Scene, target: usize) -> Scene {
    fit_to(scene, target, target)
}

/// Runs the full chain: Copy-Paste from `donor` (when it has instances),
/// flip, color jitter (with `jitter_prob`), brightness/contrast, crop/pad.
pub fn augment_scene<R: Rng + ?Sized>(
    scene: &Scene,
    donor: Option<&Scene>,
    cfg: &AugConfig,
    rng: &mut R,
) -> Result<Scene> {
    cfg.validate()?;
    let mut out = scene.clone();
    if let Some(donor) = donor.filter(|d| !d.instances.is_empty()) {
        let (h, w) = scene.image.dims();
        let donor = if donor.image.dims() == (h, w) {
            donor.clone()
        } else {
            fit_to(donor, h, w)
        };
        if !donor.instances.is_empty() {
            out = copy_paste(&donor, &out, cfg.copy_paste_fraction, rng)?;
        }
    }
    out = flip(&out, cfg.flip_prob, rng);
    if rng.random_bool(cfg.jitter_prob) {
        out.image = color_jitter(&out.image, rng, cfg.jitter_max);
    }
    out.image = brightness_contrast(&out.image, rng, cfg.bc_max);
    Ok(crop_pad(&out, cfg.target_size))
}
