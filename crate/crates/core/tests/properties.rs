mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use soss::augment::{augment_scene, copy_paste, crop_pad, mirror, AugConfig};
use soss::fusion::{assign_ownership, fuse_detailed};
use soss::io::{rle_decode, rle_encode, RleMask};
use soss::metrics::fused_score_map;
use soss::par;
use soss::synth::{gen_scene, oracle_fuse, Scene};
use soss::types::onehot_from_labels;
use soss::{
    auc, evaluate, fallback_labels, filter_proposals, gen_prompt_grid, seeded_rng, soft_vote_fuse,
    validate_probmap, ClassPlanes, ConfusionMatrix, FallbackPolicy, FilterConfig, FusionConfig,
    LabelMask, OverlapPolicy, RawConfidences, ScoreMap, Segment, SegmentSet,
};

use common::*;

fn any_config() -> impl Strategy<Value = FusionConfig> {
    (
        prop_oneof![Just(FallbackPolicy::Argmax), Just(FallbackPolicy::Background)],
        prop_oneof![
            Just(OverlapPolicy::SmallerSegmentWins),
            Just(OverlapPolicy::LaterSegmentWins)
        ],
    )
        .prop_map(|(f, o)| FusionConfig::new(f, o))
}

/// Seed and dimensions for one randomized fusion instance.
fn instance() -> impl Strategy<Value = (u64, usize, usize, usize, bool)> {
    (any::<u64>(), 1usize..=24, 1usize..=24, 2usize..=4, any::<bool>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fusion_matches_oracle((seed, h, w, n, coarse) in instance(), cfg in any_config()) {
        let mut rng = seeded_rng(seed);
        let sem = random_probmap(&mut rng, h, w, n, coarse);
        let segs = random_segments(&mut rng, h, w, 8);
        prop_assert_eq!(
            soft_vote_fuse(&sem, &segs, &cfg).unwrap(),
            oracle_fuse(&sem, &segs, &cfg).unwrap()
        );
    }

    #[test]
    fn fusion_is_deterministic_across_thread_counts((seed, h, w, n, coarse) in instance(), cfg in any_config()) {
        let mut rng = seeded_rng(seed);
        let sem = random_probmap(&mut rng, h, w, n, coarse);
        let segs = random_segments(&mut rng, h, w, 8);
        let first = soft_vote_fuse(&sem, &segs, &cfg).unwrap();
        prop_assert_eq!(&first, &soft_vote_fuse(&sem, &segs, &cfg).unwrap());
        let single = par::with_threads(1, || soft_vote_fuse(&sem, &segs, &cfg).unwrap());
        prop_assert_eq!(&first, &single);
    }

    #[test]
    fn singleton_segments_reduce_to_argmax((seed, h, w, n, coarse) in instance(), cfg in any_config()) {
        let sem = random_probmap(&mut seeded_rng(seed), h, w, n, coarse);
        prop_assert_eq!(
            soft_vote_fuse(&sem, &singleton_segments(h, w), &cfg).unwrap(),
            fallback_labels(&sem, cfg.tie)
        );
    }

    #[test]
    fn disjoint_segment_order_is_irrelevant((seed, h, w, n, coarse) in instance(), cfg in any_config()) {
        let mut rng = seeded_rng(seed);
        let sem = random_probmap(&mut rng, h, w, n, coarse);
        let segs = random_disjoint_segments(&mut rng, h, w, 8);
        let mut order = segs.segments().to_vec();
        order.shuffle(&mut rng);
        let shuffled = SegmentSet::new(h, w, order).unwrap();
        prop_assert_eq!(
            soft_vote_fuse(&sem, &segs, &cfg).unwrap(),
            soft_vote_fuse(&sem, &shuffled, &cfg).unwrap()
        );
    }

    #[test]
    fn owned_pixels_share_their_segment_label((seed, h, w, n, coarse) in instance(), cfg in any_config()) {
        let mut rng = seeded_rng(seed);
        let sem = random_probmap(&mut rng, h, w, n, coarse);
        let segs = random_segments(&mut rng, h, w, 8);
        let out = fuse_detailed(&sem, &segs, &cfg).unwrap();
        let ownership = assign_ownership(&segs, cfg.overlap);
        for (p, owner) in ownership.owners().iter().enumerate() {
            match owner {
                Some(s) => prop_assert_eq!(Some(out.labels.labels()[p]), out.winners[*s as usize]),
                None if cfg.fallback == FallbackPolicy::Background => {
                    prop_assert_eq!(out.labels.labels()[p], 0)
                }
                None => {}
            }
        }
    }

    #[test]
    fn positive_scaling_keeps_fused_labels(seed in any::<u64>(), h in 1usize..=24, w in 1usize..=24, n in 2usize..=4, exp in -10.0f32..10.0) {
        let mut rng = seeded_rng(seed);
        let sem = random_probmap(&mut rng, h, w, n, false);
        let segs = random_segments(&mut rng, h, w, 8);
        let raw = sem.to_raw().scaled(exp.exp2());
        let cfg = FusionConfig::default();
        prop_assert_eq!(
            soft_vote_fuse(&sem, &segs, &cfg).unwrap(),
            soft_vote_fuse(&raw, &segs, &cfg).unwrap()
        );
    }

    #[test]
    fn f1_and_iou_are_linked(tp in 0u64..10_000, fp in 0u64..10_000, fn_ in 0u64..10_000, tn in 0u64..10_000) {
        let cm = ConfusionMatrix::new(tp, fp, fn_, tn);
        if let (Some(f1), Some(iou)) = (cm.f1(), cm.iou()) {
            prop_assert!((f1 - 2.0 * iou / (1.0 + iou)).abs() <= 1e-9);
        }
        for m in [cm.accuracy(), cm.precision(), cm.recall(), cm.f1(), cm.iou()].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&m));
        }
    }

    #[test]
    fn auc_ignores_increasing_transforms_and_complements(seed in any::<u64>(), len in 2usize..150) {
        let mut rng = seeded_rng(seed);
        let mut labels: Vec<u32> = (0..len).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..len).map(|_| rng.random_range(0..=1000) as f64 / 1000.0).collect();
        let gt = LabelMask::new(1, len, labels).unwrap();
        let map = ScoreMap::new(1, len, scores).unwrap();
        let base = auc(&map, &gt, 1).unwrap();
        let cubic = auc(&map.map(|x| x * x * x + x), &gt, 1).unwrap();
        let negated = auc(&map.map(|x| -x), &gt, 1).unwrap();
        prop_assert!((base - cubic).abs() <= 1e-12);
        prop_assert!((base + negated - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn random_predictions_score_within_unit_range(seed in any::<u64>(), h in 1usize..20, w in 1usize..20) {
        let mut rng = seeded_rng(seed);
        let pred = random_labels(&mut rng, h, w, 2);
        let gt = random_labels(&mut rng, h, w, 2);
        let report = evaluate(&pred, &gt, None, 1).unwrap();
        for m in [report.accuracy, report.precision, report.recall, report.f1, report.iou].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&m));
        }
    }

    #[test]
    fn thresholded_score_map_matches_fusion(seed in any::<u64>(), h in 1usize..=24, w in 1usize..=24) {
        // class-1 confidences are multiples of 1/1024, so both classes sum
        // to exactly 1 and segment means compare exactly against 0.5
        let mut rng = seeded_rng(seed);
        let ones: Vec<f32> = (0..h * w).map(|_| rng.random_range(0..=1024u32) as f32 / 1024.0).collect();
        let mut values: Vec<f32> = ones.iter().map(|v| 1.0 - v).collect();
        values.extend(&ones);
        let sem = validate_probmap(RawConfidences::new(h, w, 2, values).unwrap()).unwrap();
        let segs = random_segments(&mut rng, h, w, 8);
        let cfg = FusionConfig::default();
        let scores = fused_score_map(&sem, &segs, &cfg, 1).unwrap();
        let ownership = assign_ownership(&segs, cfg.overlap);
        let tie = ownership.owners().iter().zip(scores.values()).any(|(o, &s)| o.is_some() && s == 0.5);
        prop_assume!(!tie);
        let fused = soft_vote_fuse(&sem, &segs, &cfg).unwrap();
        for (&label, &score) in fused.labels().iter().zip(scores.values()) {
            prop_assert_eq!(label == 1, score > 0.5);
        }
    }

    #[test]
    fn rle_round_trips_and_canonical_form_decodes_alike(seed in any::<u64>(), h in 1usize..30, w in 1usize..30) {
        let mut rng = seeded_rng(seed);
        let mask = random_mask(&mut rng, h, w);
        let rle = rle_encode(&mask);
        prop_assert_eq!(&rle_decode(&rle).unwrap(), &mask);
        prop_assert_eq!(&rle.canonicalize(), &rle);
        // splice empty runs into the encoding; decoding must not change
        let mut padded = Vec::new();
        for &c in &rle.counts {
            padded.push(c);
            if rng.random_bool(0.3) {
                padded.extend([0, 0]);
            }
        }
        let noisy = RleMask { height: h, width: w, counts: padded };
        prop_assert_eq!(&rle_decode(&noisy).unwrap(), &mask);
        prop_assert_eq!(noisy.canonicalize(), rle);
    }

    #[test]
    fn filtering_is_idempotent_and_monotone(
        seed in any::<u64>(),
        conf in 0.0f64..=1.0, stab in 0.0f64..=1.0, area in 1usize..40,
        loosen in 0.0f64..0.5, shrink in 0usize..10,
    ) {
        let mut rng = seeded_rng(seed);
        let raw = random_segments(&mut rng, 12, 12, 8);
        let cfg = FilterConfig { confidence_min: conf, stability_min: stab, min_area: area };
        let once = filter_proposals(&raw, &cfg);
        prop_assert_eq!(&filter_proposals(&once, &cfg), &once);
        let ids = |s: &SegmentSet| s.segments().iter().map(Segment::id).collect::<Vec<_>>();
        let raw_ids = ids(&raw);
        let mut cursor = raw_ids.iter();
        for id in ids(&once) {
            prop_assert!(cursor.any(|&r| r == id), "output is not a sub-list of the input");
        }
        let looser = FilterConfig {
            confidence_min: (conf - loosen).max(0.0),
            stability_min: (stab - loosen).max(0.0),
            min_area: area.saturating_sub(shrink).max(1),
        };
        let kept_loose = ids(&filter_proposals(&raw, &looser));
        for id in ids(&once) {
            prop_assert!(kept_loose.contains(&id));
        }
    }

    #[test]
    fn prompt_grid_is_strictly_increasing(h in 1usize..600, w in 1usize..600, n in 1usize..60) {
        prop_assume!(n <= h.min(w));
        let g = gen_prompt_grid(h, w, n).unwrap();
        prop_assert_eq!(g.points.len(), n * n);
        for (k, &(r, c)) in g.points.iter().enumerate() {
            prop_assert!(r < h && c < w);
            let (i, j) = (k / n, k % n);
            if j > 0 {
                prop_assert!(c > g.points[k - 1].1);
            }
            if i > 0 {
                prop_assert!(r > g.points[k - n].0);
            }
        }
    }
}

fn composite(scene: &Scene) -> LabelMask {
    let (h, w) = scene.image.dims();
    let mut gt = LabelMask::filled(h, w, 0);
    for inst in &scene.instances {
        for p in inst.mask.ones() {
            gt.labels_mut()[p] = inst.class;
        }
    }
    gt
}

fn scene_strategy() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 8usize..48, 8usize..48, 1usize..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn augmentation_is_seed_deterministic((seed, h, w, k) in scene_strategy(), target in 8usize..64) {
        let scene = gen_scene(seed, h, w, k);
        let donor = gen_scene(seed ^ 1, h, w, k);
        let cfg = AugConfig { target_size: target, ..AugConfig::default() };
        let a = augment_scene(&scene, Some(&donor), &cfg, &mut seeded_rng(seed)).unwrap();
        let b = augment_scene(&scene, Some(&donor), &cfg, &mut seeded_rng(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn augmented_labels_match_instance_masks((seed, h, w, k) in scene_strategy(), target in 8usize..64) {
        let scene = gen_scene(seed, h, w, k);
        let donor = gen_scene(seed ^ 1, 2 * h, w, k);
        let cfg = AugConfig { target_size: target, flip_prob: 0.5, ..AugConfig::default() };
        let out = augment_scene(&scene, Some(&donor), &cfg, &mut seeded_rng(seed)).unwrap();
        prop_assert_eq!(out.gt.dims(), (target, target));
        for inst in &out.instances {
            prop_assert_eq!(inst.mask.dims(), (target, target));
            prop_assert!(inst.area() > 0);
        }
        prop_assert_eq!(composite(&out), out.gt);
    }

    #[test]
    fn copy_paste_never_shrinks_occlusion((seed, h, w, k) in scene_strategy(), fraction in 0.0f64..=1.0) {
        let src = gen_scene(seed, h, w, k);
        let dst = gen_scene(seed.wrapping_add(7), h, w, k);
        let out = copy_paste(&src, &dst, fraction, &mut seeded_rng(seed)).unwrap();
        let occluded = |s: &Scene| s.gt.labels().iter().filter(|&&l| l != 0).count();
        prop_assert!(occluded(&out) >= occluded(&dst));
        prop_assert_eq!(composite(&out), out.gt);
    }

    #[test]
    fn pasted_pixels_are_translated_source_pixels((seed, h, w, _k) in scene_strategy()) {
        let src = gen_scene(seed, h, w, 10);
        let dst = gen_scene(seed.wrapping_add(3), h, w, 2);
        let out = copy_paste(&src, &dst, 0.1, &mut seeded_rng(seed)).unwrap();
        prop_assert_eq!(out.instances.len(), dst.instances.len() + 1);
        let pasted = out.instances.last().unwrap();
        let (pr0, pc0, _, _) = pasted.mask.bbox().unwrap();
        // the source instance is the one whose mask, shifted (and possibly
        // mirrored) onto the pasted bbox, reproduces the pasted mask
        let matches = src.instances.iter().any(|inst| {
            let (r0, c0, _, c1) = inst.mask.bbox().unwrap();
            let bw = c1 - c0 + 1;
            [false, true].into_iter().any(|mirrored| {
                let mut same = inst.area() == pasted.area();
                for p in inst.mask.ones() {
                    let (r, c) = (p / w, p % w);
                    let lc = if mirrored { bw - 1 - (c - c0) } else { c - c0 };
                    let (tr, tc) = (pr0 + r - r0, pc0 + lc);
                    same &= tr < h && tc < w
                        && pasted.mask.get(tr, tc)
                        && out.image.get(tr, tc) == src.image.get(r, c);
                }
                same
            })
        });
        prop_assert!(matches);
        for r in 0..h {
            for c in 0..w {
                let expected = if pasted.mask.get(r, c) { pasted.class } else { dst.gt.get(r, c) };
                prop_assert_eq!(out.gt.get(r, c), expected);
                if !pasted.mask.get(r, c) {
                    prop_assert_eq!(out.image.get(r, c), dst.image.get(r, c));
                }
            }
        }
    }

    #[test]
    fn flip_and_crop_commute_with_onehot((seed, h, w, k) in scene_strategy(), target in 4usize..64) {
        let scene = gen_scene(seed, h, w, k);
        let lift = |gt: &LabelMask| onehot_from_labels(gt, 2).unwrap();
        // each one-hot plane is moved as a 0/1 label image; padding lifts to
        // class 0, so the background plane is carried as its complement
        let transform_planes = |s: &Scene, f: &dyn Fn(&Scene) -> Scene| -> Vec<Vec<f32>> {
            (0..2u32)
                .map(|class| {
                    let indicator = |l: u32| if class == 0 { l != 0 } else { l == class };
                    let labels = s.gt.labels().iter().map(|&l| u32::from(indicator(l))).collect();
                    let plane = Scene { gt: LabelMask::new(h, w, labels).unwrap(), ..s.clone() };
                    f(&plane)
                        .gt
                        .labels()
                        .iter()
                        .map(|&v| if class == 0 { 1.0 - v as f32 } else { v as f32 })
                        .collect()
                })
                .collect()
        };
        let ops: [&dyn Fn(&Scene) -> Scene; 2] = [&mirror, &|s: &Scene| crop_pad(s, target)];
        for op in ops {
            let lifted = lift(&op(&scene).gt);
            let planes = transform_planes(&scene, op);
            prop_assert_eq!(lifted.plane(0), &planes[0][..]);
            prop_assert_eq!(lifted.plane(1), &planes[1][..]);
        }
    }
}
