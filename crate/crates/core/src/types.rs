//! Shared domain types: confidence tensors, binary masks, segment proposals,
//! label masks and RGB images.
//!
//! Every type here is immutable once built and validated. Pixel data is
//! stored row-major; confidence tensors are stored class-major (one
//! contiguous `H*W` plane per class), the same layout as the probability-map
//! file format.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Semantic class index. Class 0 is background, class 1 is occlusion in the
/// binary setting.
pub type ClassId = u32;

/// Maximum deviation of a pixel's class sum from 1.0 that is accepted without
/// renormalization.
pub const SUM_TOLERANCE: f64 = 1e-4;

/// Read access to a class-major `H x W x N` confidence tensor.
///
/// Implemented by [`ProbMap`] (validated probabilities) and
/// [`RawConfidences`] (arbitrary non-negative scores), so that the voting code
/// can consume either.
pub trait ClassPlanes: Sync {
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn n_classes(&self) -> usize;
    /// The `H*W` row-major plane of `class`.
    fn plane(&self, class: usize) -> &[f32];

    fn value(&self, row: usize, col: usize, class: usize) -> f32 {
        self.plane(class)[row * self.width() + col]
    }

    fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }
}

pub(crate) fn ensure_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

fn check_tensor_shape(height: usize, width: usize, n_classes: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::BadShape(format!(
            "height and width must be positive, got {height}x{width}"
        )));
    }
    if n_classes < 2 {
        return Err(Error::BadShape(format!(
            "need at least 2 classes, got {n_classes}"
        )));
    }
    let expected = height
        .checked_mul(width)
        .and_then(|hw| hw.checked_mul(n_classes))
        .ok_or_else(|| Error::BadShape("tensor size overflows".into()))?;
    if len != expected {
        return Err(Error::BadShape(format!(
            "{height}x{width}x{n_classes} needs {expected} values, got {len}"
        )));
    }
    Ok(())
}

/// An unvalidated class-major confidence tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfidences {
    height: usize,
    width: usize,
    n_classes: usize,
    values: Vec<f32>,
}

impl RawConfidences {
    /// Wraps class-major values (plane 0 first, row-major within a plane).
    pub fn new(height: usize, width: usize, n_classes: usize, values: Vec<f32>) -> Result<Self> {
        check_tensor_shape(height, width, n_classes, values.len())?;
        Ok(Self {
            height,
            width,
            n_classes,
            values,
        })
    }

    /// Builds from pixel-interleaved `H x W x N` values (the layout most array
    /// libraries use).
    pub fn from_interleaved(
        height: usize,
        width: usize,
        n_classes: usize,
        values: &[f32],
    ) -> Result<Self> {
        check_tensor_shape(height, width, n_classes, values.len())?;
        let hw = height * width;
        let mut planar = vec![0.0f32; values.len()];
        for (p, pixel) in values.chunks_exact(n_classes).enumerate() {
            for (c, &v) in pixel.iter().enumerate() {
                planar[c * hw + p] = v;
            }
        }
        Ok(Self {
            height,
            width,
            n_classes,
            values: planar,
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Multiplies every entry by `factor` without renormalizing.
    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

impl ClassPlanes for RawConfidences {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn n_classes(&self) -> usize {
        self.n_classes
    }
    fn plane(&self, class: usize) -> &[f32] {
        let hw = self.height * self.width;
        &self.values[class * hw..(class + 1) * hw]
    }
}

/// Per-pixel class probabilities: every value in `[0, 1]` and every pixel's
/// class sum within [`SUM_TOLERANCE`] of one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    n_classes: usize,
    values: Vec<f32>,
}

impl ProbMap {
    /// Validates class-major values; see [`validate_probmap`].
    pub fn from_planes(
        height: usize,
        width: usize,
        n_classes: usize,
        values: Vec<f32>,
    ) -> Result<Self> {
        validate_probmap(RawConfidences::new(height, width, n_classes, values)?)
    }

    /// Class-major values.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn to_raw(&self) -> RawConfidences {
        RawConfidences {
            height: self.height,
            width: self.width,
            n_classes: self.n_classes,
            values: self.values.clone(),
        }
    }

    /// Confidences of pixel `(row, col)` across all classes.
    pub fn pixel(&self, row: usize, col: usize) -> Vec<f32> {
        (0..self.n_classes)
            .map(|c| self.value(row, col, c))
            .collect()
    }
}

impl ClassPlanes for ProbMap {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn n_classes(&self) -> usize {
        self.n_classes
    }
    fn plane(&self, class: usize) -> &[f32] {
        let hw = self.height * self.width;
        &self.values[class * hw..(class + 1) * hw]
    }
}

/// Checks a raw tensor and turns it into a [`ProbMap`].
///
/// Pixels whose class sum is off by more than [`SUM_TOLERANCE`] are divided
/// by that sum; pixels already within tolerance are left bit-identical, which
/// makes the operation idempotent.
pub fn validate_probmap(raw: RawConfidences) -> Result<ProbMap> {
    let RawConfidences {
        height,
        width,
        n_classes,
        mut values,
    } = raw;
    for (index, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { index });
        }
        if v < 0.0 {
            return Err(Error::NegativeValue { index, value: v });
        }
    }
    let hw = height * width;
    for p in 0..hw {
        let sum: f64 = (0..n_classes).map(|c| values[c * hw + p] as f64).sum();
        if (sum - 1.0).abs() <= SUM_TOLERANCE {
            continue;
        }
        if sum == 0.0 {
            return Err(Error::ZeroSumPixel {
                row: p / width,
                col: p % width,
            });
        }
        for c in 0..n_classes {
            let v = &mut values[c * hw + p];
            *v = (*v as f64 / sum) as f32;
        }
    }
    Ok(ProbMap {
        height,
        width,
        n_classes,
        values,
    })
}

/// Lifts a label mask to a one-hot probability map.
pub fn onehot_from_labels(mask: &LabelMask, n_classes: usize) -> Result<ProbMap> {
    if n_classes < 2 {
        return Err(Error::BadShape(format!(
            "need at least 2 classes, got {n_classes}"
        )));
    }
    if let Some(&label) = mask.labels.iter().find(|&&l| l as usize >= n_classes) {
        return Err(Error::LabelOutOfRange { label, n_classes });
    }
    let hw = mask.height * mask.width;
    let mut values = vec![0.0f32; hw * n_classes];
    for (p, &label) in mask.labels.iter().enumerate() {
        values[label as usize * hw + p] = 1.0;
    }
    Ok(ProbMap {
        height: mask.height,
        width: mask.width,
        n_classes,
        values,
    })
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::BadShape(format!(
                "{height}x{width} mask needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Row-major flat indices of set pixels, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    /// Bounding box of set pixels as `(row_min, col_min, row_max, col_max)`,
    /// inclusive.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for i in self.ones() {
            let (r, c) = (i / self.width, i % self.width);
            bbox = Some(match bbox {
                None => (r, c, r, c),
                Some((r0, c0, r1, c1)) => (r0.min(r), c0.min(c), r1.max(r), c1.max(c)),
            });
        }
        bbox
    }
}

/// One class-agnostic segment proposal.
///
/// The mask is held as the sorted row-major indices of its set pixels, so the
/// area is the index count and votes accumulate in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    id: u32,
    height: usize,
    width: usize,
    pixels: Vec<u32>,
    confidence: f64,
    stability: f64,
}

fn check_score(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::ScoreOutOfRange { name, value })
    }
}

impl Segment {
    pub fn from_mask(id: u32, mask: &BinaryMask, confidence: f64, stability: f64) -> Result<Self> {
        check_score("confidence", confidence)?;
        check_score("stability", stability)?;
        if mask.data.len() > u32::MAX as usize {
            return Err(Error::BadShape("mask too large".into()));
        }
        Ok(Self {
            id,
            height: mask.height,
            width: mask.width,
            pixels: mask.ones().map(|i| i as u32).collect(),
            confidence,
            stability,
        })
    }

    /// Builds from row-major pixel indices in any order; duplicates collapse.
    pub fn from_pixels(
        id: u32,
        height: usize,
        width: usize,
        mut pixels: Vec<u32>,
        confidence: f64,
        stability: f64,
    ) -> Result<Self> {
        check_score("confidence", confidence)?;
        check_score("stability", stability)?;
        pixels.sort_unstable();
        pixels.dedup();
        if let Some(&last) = pixels.last() {
            if last as usize >= height * width {
                return Err(Error::PixelOutOfBounds {
                    index: last as usize,
                    height,
                    width,
                });
            }
        }
        Ok(Self {
            id,
            height,
            width,
            pixels,
            confidence,
            stability,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn stability(&self) -> f64 {
        self.stability
    }

    /// Sorted row-major indices of the segment's pixels.
    pub fn pixels(&self) -> &[u32] {
        &self.pixels
    }

    pub fn to_mask(&self) -> BinaryMask {
        let mut mask = BinaryMask::new(self.height, self.width);
        for &p in &self.pixels {
            mask.data[p as usize] = true;
        }
        mask
    }

    pub fn with_id(mut self, id: u32) -> Self {
        self.id = id;
        self
    }

    pub fn with_scores(mut self, confidence: f64, stability: f64) -> Result<Self> {
        check_score("confidence", confidence)?;
        check_score("stability", stability)?;
        self.confidence = confidence;
        self.stability = stability;
        Ok(self)
    }
}

/// Ordered segment proposals over one image. Segments may overlap and may
/// leave pixels uncovered.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSet {
    height: usize,
    width: usize,
    segments: Vec<Segment>,
}

impl SegmentSet {
    pub fn new(height: usize, width: usize, segments: Vec<Segment>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(segments.len());
        for s in &segments {
            ensure_dims((height, width), s.dims())?;
            if !seen.insert(s.id) {
                return Err(Error::DuplicateSegmentId(s.id));
            }
        }
        Ok(Self {
            height,
            width,
            segments,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            segments: Vec::new(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn into_segments(self) -> Vec<Segment> {
        self.segments
    }
}

/// Per-pixel class assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMask {
    height: usize,
    width: usize,
    labels: Vec<ClassId>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, labels: Vec<ClassId>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::BadShape(format!(
                "{height}x{width} label mask needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: ClassId) -> Self {
        Self {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [ClassId] {
        &mut self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> ClassId {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, label: ClassId) {
        self.labels[row * self.width + col] = label;
    }

    pub fn max_label(&self) -> Option<ClassId> {
        self.labels.iter().copied().max()
    }

    /// Number of pixels carrying `class`.
    pub fn count(&self, class: ClassId) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    pub fn class_mask(&self, class: ClassId) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.labels.iter().map(|&l| l == class).collect(),
        }
    }
}

/// 8-bit RGB image, pixel-interleaved, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width * 3],
        }
    }

    pub fn from_raw(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::BadShape(format!(
                "{height}x{width} RGB image needs {} bytes, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}
