//! Soft-voting fusion of a semantic confidence map with segment proposals.
//!
//! Each proposal is assigned the class whose confidences, summed over the
//! proposal's pixels, are largest. The fused mask then paints every pixel
//! with the class of the proposal that owns it; pixels no proposal covers
//! take a fallback label.
//!
//! Votes accumulate in `f64` in row-major pixel order, so a given input
//! always produces the same bits regardless of how many threads compute the
//! per-segment votes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::types::{ensure_dims, ClassId, ClassPlanes, LabelMask, Segment, SegmentSet};

/// Label given to pixels that no segment covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FallbackPolicy {
    /// Per-pixel argmax of the semantic map.
    #[default]
    Argmax,
    /// Class 0.
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TiePolicy {
    /// Equal maxima resolve to the smallest class index.
    #[default]
    LowestClassIndex,
}

/// Which segment owns a pixel covered by several segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapPolicy {
    /// Smallest area wins; equal areas go to the lower segment id.
    #[default]
    SmallerSegmentWins,
    /// The segment latest in list order wins.
    LaterSegmentWins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FusionConfig {
    pub fallback: FallbackPolicy,
    pub tie: TiePolicy,
    pub overlap: OverlapPolicy,
}

impl FusionConfig {
    pub fn new(fallback: FallbackPolicy, overlap: OverlapPolicy) -> Self {
        Self {
            fallback,
            tie: TiePolicy::LowestClassIndex,
            overlap,
        }
    }
}

/// Per-class confidence sums over one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteVector(Vec<f64>);

impl VoteVector {
    pub fn new(sums: Vec<f64>) -> Self {
        Self(sums)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }
}

/// Sums the confidences of every class over the pixels of `seg`.
pub fn segment_vote<P: ClassPlanes + ?Sized>(sem: &P, seg: &Segment) -> Result<VoteVector> {
    ensure_dims(sem.dims(), seg.dims())?;
    if seg.area() == 0 {
        return Err(Error::EmptySegment { id: seg.id() });
    }
    Ok(accumulate(sem, seg))
}

fn accumulate<P: ClassPlanes + ?Sized>(sem: &P, seg: &Segment) -> VoteVector {
    let planes: Vec<&[f32]> = (0..sem.n_classes()).map(|c| sem.plane(c)).collect();
    let mut sums = vec![0.0f64; planes.len()];
    for &p in seg.pixels() {
        let p = p as usize;
        for (sum, plane) in sums.iter_mut().zip(&planes) {
            *sum += plane[p] as f64;
        }
    }
    VoteVector(sums)
}

/// Index of the largest entry.
pub fn vote_winner(votes: &VoteVector, tie: TiePolicy) -> ClassId {
    match tie {
        TiePolicy::LowestClassIndex => first_max(votes.0.iter().copied()),
    }
}

fn first_max<T: PartialOrd>(values: impl Iterator<Item = T>) -> ClassId {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.enumerate() {
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((i, v));
        }
    }
    best.map_or(0, |(i, _)| i as ClassId)
}

fn pixel_argmax(planes: &[&[f32]], p: usize, tie: TiePolicy) -> ClassId {
    match tie {
        TiePolicy::LowestClassIndex => first_max(planes.iter().map(|plane| plane[p])),
    }
}

/// Per-pixel argmax decode of a semantic map.
pub fn fallback_labels<P: ClassPlanes + ?Sized>(sem: &P, tie: TiePolicy) -> LabelMask {
    let (h, w) = sem.dims();
    let planes: Vec<&[f32]> = (0..sem.n_classes()).map(|c| sem.plane(c)).collect();
    let mut labels = vec![0 as ClassId; h * w];
    par::for_each_row_mut(&mut labels, w, |r, row| {
        for (c, label) in row.iter_mut().enumerate() {
            *label = pixel_argmax(&planes, r * w + c, tie);
        }
    });
    LabelMask::new(h, w, labels).expect("dimensions come from the map")
}

/// Owning segment of every pixel, as an index into the segment list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ownership {
    height: usize,
    width: usize,
    owners: Vec<Option<u32>>,
}

impl Ownership {
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// List index of the segment owning `(row, col)`.
    pub fn owner(&self, row: usize, col: usize) -> Option<usize> {
        self.owners[row * self.width + col].map(|i| i as usize)
    }

    /// Row-major owner indices.
    pub fn owners(&self) -> &[Option<u32>] {
        &self.owners
    }

    /// Row-major owner segment ids.
    pub fn owner_ids(&self, segs: &SegmentSet) -> Vec<Option<u32>> {
        self.owners
            .iter()
            .map(|o| o.map(|i| segs.segments()[i as usize].id()))
            .collect()
    }

    pub fn covered(&self) -> usize {
        self.owners.iter().filter(|o| o.is_some()).count()
    }

    /// Number of pixels each segment owns, by list index.
    pub fn owned_counts(&self, n_segments: usize) -> Vec<usize> {
        let mut counts = vec![0; n_segments];
        for i in self.owners.iter().flatten() {
            counts[*i as usize] += 1;
        }
        counts
    }
}

/// Resolves every pixel to at most one covering segment.
pub fn assign_ownership(segs: &SegmentSet, overlap: OverlapPolicy) -> Ownership {
    let (h, w) = segs.dims();
    let list = segs.segments();
    let mut order: Vec<usize> = (0..list.len()).collect();
    if overlap == OverlapPolicy::SmallerSegmentWins {
        // painted last = highest priority: smallest area, then lowest id
        order.sort_by(|&a, &b| {
            let (sa, sb) = (&list[a], &list[b]);
            sb.area().cmp(&sa.area()).then(sb.id().cmp(&sa.id()))
        });
    }
    let mut owners = vec![None; h * w];
    for i in order {
        for &p in list[i].pixels() {
            owners[p as usize] = Some(i as u32);
        }
    }
    Ownership {
        height: h,
        width: w,
        owners,
    }
}

/// Votes of every segment that owns at least one pixel under `ownership`;
/// `None` for the rest.
pub fn owned_segment_votes<P: ClassPlanes + ?Sized>(
    sem: &P,
    segs: &SegmentSet,
    ownership: &Ownership,
) -> Vec<Option<VoteVector>> {
    let counts = ownership.owned_counts(segs.len());
    let indexed: Vec<(usize, &Segment)> = segs.segments().iter().enumerate().collect();
    par::map_slice(&indexed, |&(i, seg)| (counts[i] > 0).then(|| accumulate(sem, seg)))
}

/// Full fusion result: the label mask plus the intermediate ownership and
/// per-segment winners.
#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub labels: LabelMask,
    pub ownership: Ownership,
    /// Winning class per segment (list order); `None` for segments that own
    /// no pixel.
    pub winners: Vec<Option<ClassId>>,
}

/// Like [`soft_vote_fuse`], also returning ownership and segment winners.
pub fn fuse_detailed<P: ClassPlanes + ?Sized>(
    sem: &P,
    segs: &SegmentSet,
    cfg: &FusionConfig,
) -> Result<FusionOutput> {
    ensure_dims(sem.dims(), segs.dims())?;
    let (h, w) = sem.dims();
    let ownership = assign_ownership(segs, cfg.overlap);
    let winners: Vec<Option<ClassId>> = owned_segment_votes(sem, segs, &ownership)
        .into_iter()
        .map(|v| v.map(|v| vote_winner(&v, cfg.tie)))
        .collect();

    let planes: Vec<&[f32]> = (0..sem.n_classes()).map(|c| sem.plane(c)).collect();
    let owners = ownership.owners();
    let mut labels = vec![0 as ClassId; h * w];
    par::for_each_row_mut(&mut labels, w, |r, row| {
        for (c, label) in row.iter_mut().enumerate() {
            let p = r * w + c;
            *label = match owners[p] {
                Some(i) => winners[i as usize].expect("owning segment has a vote"),
                None => match cfg.fallback {
                    FallbackPolicy::Argmax => pixel_argmax(&planes, p, cfg.tie),
                    FallbackPolicy::Background => 0,
                },
            };
        }
    });
    Ok(FusionOutput {
        labels: LabelMask::new(h, w, labels)?,
        ownership,
        winners,
    })
}

/// Fuses a semantic map with segment proposals by confidence soft-voting.
pub fn soft_vote_fuse<P: ClassPlanes + ?Sized>(
    sem: &P,
    segs: &SegmentSet,
    cfg: &FusionConfig,
) -> Result<LabelMask> {
    fuse_detailed(sem, segs, cfg).map(|out| out.labels)
}
