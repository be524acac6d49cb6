//! Random instance generators shared by the integration and acceptance
//! targets.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use soss::{validate_probmap, BinaryMask, LabelMask, ProbMap, RawConfidences, Segment, SegmentSet};

/// Random valid probability map. With `coarse`, raw values come from a
/// small integer set, which makes exact vote ties common.
pub fn random_probmap<R: Rng>(rng: &mut R, h: usize, w: usize, n: usize, coarse: bool) -> ProbMap {
    let mut values = vec![0.0f32; h * w * n];
    for p in 0..h * w {
        loop {
            for k in 0..n {
                values[k * h * w + p] = if coarse {
                    rng.random_range(0..4u8) as f32
                } else {
                    rng.random_range(0.0..1.0f32)
                };
            }
            if (0..n).any(|k| values[k * h * w + p] > 0.0) {
                break;
            }
        }
    }
    validate_probmap(RawConfidences::new(h, w, n, values).unwrap()).unwrap()
}

pub fn random_labels<R: Rng>(rng: &mut R, h: usize, w: usize, n: u32) -> LabelMask {
    LabelMask::new(h, w, (0..h * w).map(|_| rng.random_range(0..n)).collect()).unwrap()
}

pub fn random_mask<R: Rng>(rng: &mut R, h: usize, w: usize) -> BinaryMask {
    let density = match rng.random_range(0..5u8) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random_range(0.0..1.0),
    };
    BinaryMask::from_vec(h, w, (0..h * w).map(|_| rng.random_bool(density)).collect()).unwrap()
}

fn random_region<R: Rng>(rng: &mut R, h: usize, w: usize) -> Vec<u32> {
    if rng.random_bool(0.5) {
        let r0 = rng.random_range(0..h);
        let c0 = rng.random_range(0..w);
        let r1 = rng.random_range(r0..h);
        let c1 = rng.random_range(c0..w);
        (r0..=r1)
            .flat_map(|r| (c0..=c1).map(move |c| (r * w + c) as u32))
            .collect()
    } else {
        let density = rng.random_range(0.05..0.6);
        let mut px: Vec<u32> = (0..(h * w) as u32).filter(|_| rng.random_bool(density)).collect();
        if px.is_empty() {
            px.push(rng.random_range(0..(h * w) as u32));
        }
        px
    }
}

fn shuffled_ids<R: Rng>(rng: &mut R, count: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..(count as u32 * 3).max(1)).collect();
    ids.shuffle(rng);
    ids.truncate(count);
    ids
}

/// Up to `max_segments` possibly overlapping segments with shuffled ids.
pub fn random_segments<R: Rng>(rng: &mut R, h: usize, w: usize, max_segments: usize) -> SegmentSet {
    let count = rng.random_range(0..=max_segments);
    let segs = shuffled_ids(rng, count)
        .into_iter()
        .map(|id| {
            let px = random_region(rng, h, w);
            Segment::from_pixels(id, h, w, px, rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0))
                .unwrap()
        })
        .collect();
    SegmentSet::new(h, w, segs).unwrap()
}

/// Pairwise-disjoint segments: each pixel goes to one of `count` pieces or
/// stays uncovered.
pub fn random_disjoint_segments<R: Rng>(rng: &mut R, h: usize, w: usize, max_segments: usize) -> SegmentSet {
    let count = rng.random_range(1..=max_segments);
    let uncovered = rng.random_range(0.0..0.5);
    let mut pieces: Vec<Vec<u32>> = vec![Vec::new(); count];
    for p in 0..(h * w) as u32 {
        if !rng.random_bool(uncovered) {
            pieces[rng.random_range(0..count)].push(p);
        }
    }
    let segs = pieces
        .into_iter()
        .filter(|px| !px.is_empty())
        .zip(shuffled_ids(rng, count))
        .map(|(px, id)| Segment::from_pixels(id, h, w, px, 1.0, 1.0).unwrap())
        .collect();
    SegmentSet::new(h, w, segs).unwrap()
}

/// Every pixel as its own segment.
pub fn singleton_segments(h: usize, w: usize) -> SegmentSet {
    let segs = (0..(h * w) as u32)
        .map(|p| Segment::from_pixels(p, h, w, vec![p], 1.0, 1.0).unwrap())
        .collect();
    SegmentSet::new(h, w, segs).unwrap()
}
