use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;
use segeval_core::metrics::{self, Confusion, MetricId, Polarity};
use segeval_core::oracle::{GtEchoOracle, GtOracle, GtStore, NoisyOracle};
use segeval_core::perturb::{self, IdealRun, PromptMode, Sample, TrialStats};
use segeval_core::prompt::{BoxPrompt, Label};
use segeval_core::prompt_sim::{box_prompt_run, ideal_boxes, ofs_filter, simulate_clicks};
use segeval_core::raster::{connected_components, Connectivity};
use segeval_core::segmenter::SegmenterHandle;
use segeval_core::sequence::{Frame, SequenceKind};
use segeval_core::temporal::{
    bidirectional_3d, multiframe_schedule, propagate_prompt, run_video, PropagationMode, PropagationState, VideoStrategy,
};
use segeval_core::{BinaryMask, EvalConfig, ImageRef, Prompt, ScoreMap, SequenceRecord};

fn mask(w: usize, h: usize) -> impl Strategy<Value = BinaryMask> {
    proptest::collection::vec(any::<bool>(), w * h).prop_map(move |b| BinaryMask::from_bits(w, h, b).unwrap())
}

fn scores(w: usize, h: usize) -> impl Strategy<Value = ScoreMap> {
    proptest::collection::vec(0u8..=20, w * h)
        .prop_map(move |v| ScoreMap::from_scores(w, h, v.into_iter().map(|s| s as f64 / 20.0).collect()).unwrap())
}

fn disk(w: usize, h: usize, cx: usize, cy: usize, r: usize) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as i64 - cx as i64, y as i64 - cy as i64);
        dx * dx + dy * dy <= (r * r) as i64
    })
}

fn store_of(items: &[(&str, &BinaryMask)]) -> Arc<GtStore> {
    Arc::new(items.iter().map(|(k, m)| (ImageRef::new(*k), (*m).clone())).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn binarize_count_nonincreasing(s in scores(6, 5), a in 0.0f64..0.99, b in 0.0f64..0.99) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(s.binarize(lo).unwrap().count() >= s.binarize(hi).unwrap().count());
    }

    #[test]
    fn dice_iou_identity(p in mask(7, 6), g in mask(7, 6)) {
        let c = Confusion::of(&p, &g).unwrap();
        let (iou, dice) = (c.iou(), c.dice());
        let union = c.tp + c.fp + c.fn_;
        prop_assume!(union > 0);
        // 2I/(1+I) with I = tp/union is exactly 2tp/(tp+union); dice must be
        // that rational correctly rounded.
        prop_assert_eq!(c.tp + union, 2 * c.tp + c.fp + c.fn_);
        prop_assert_eq!(dice, (2 * c.tp) as f64 / (c.tp + union) as f64);
        prop_assert!((dice - 2.0 * iou / (1.0 + iou)).abs() <= 2.0 * f64::EPSILON);
        prop_assert!(iou <= dice);
    }

    #[test]
    fn mae_joint_inversion(s in scores(6, 6), g in mask(6, 6)) {
        let inv = ScoreMap::from_scores(6, 6, s.scores().iter().map(|v| 1.0 - v).collect()).unwrap();
        let a = metrics::mae(&s, &g).unwrap().value;
        let b = metrics::mae(&inv, &g.complement()).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-15);
    }

    #[test]
    fn auroc_monotone_invariance(s in proptest::collection::vec(0u16..200, 30), l in proptest::collection::vec(any::<bool>(), 30)) {
        prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
        let raw: Vec<f64> = s.iter().map(|&v| v as f64 / 200.0).collect();
        let cubed: Vec<f64> = raw.iter().map(|v| v * v * v + 2.0 * v - 7.0).collect();
        let flipped_twice: Vec<f64> = raw.iter().map(|v| (1.0 + v).ln()).collect();
        let a = metrics::auroc(&raw, &l).unwrap();
        prop_assert_eq!(a, metrics::auroc(&cubed, &l).unwrap());
        prop_assert_eq!(a, metrics::auroc(&flipped_twice, &l).unwrap());
    }

    #[test]
    fn metrics_in_unit_interval(s in scores(8, 8), g in mask(8, 8)) {
        let cfg = EvalConfig::default();
        let per: Vec<MetricId> = MetricId::ALL.into_iter().filter(|m| !m.is_dataset_level()).collect();
        for v in metrics::score_sample(&s, &g, &per, &cfg).unwrap() {
            prop_assert!((0.0..=1.0).contains(&v.value), "{:?} = {}", v.metric, v.value);
        }
        let maps = [s.clone(), ScoreMap::zeros(8, 8)];
        let gts = [g.clone(), BinaryMask::new(8, 8)];
        let dl: Vec<MetricId> = MetricId::ALL.into_iter().filter(|m| m.is_dataset_level()).collect();
        if let Ok(vals) = metrics::score_dataset(&maps, &gts, &dl, &cfg) {
            for v in vals {
                prop_assert!((0.0..=1.0).contains(&v.value), "{:?} = {}", v.metric, v.value);
            }
        }
    }

    #[test]
    fn perfect_prediction_is_extremal(g in mask(8, 7)) {
        prop_assume!(!g.is_blank());
        let cfg = EvalConfig::default();
        let per: Vec<MetricId> = MetricId::ALL.into_iter().filter(|m| !m.is_dataset_level()).collect();
        for v in metrics::score_binary(&g, &g, &per, &cfg).unwrap() {
            match v.metric.polarity() {
                Polarity::HigherBetter => prop_assert!(v.value >= 1.0 - 1e-12, "{:?} = {}", v.metric, v.value),
                Polarity::LowerBetter => prop_assert_eq!(v.value, 0.0),
            }
        }
    }

    #[test]
    fn ofs_output_within_entities(es in proptest::collection::vec(mask(6, 6), 0..5), g in mask(6, 6), t in 0.0f64..1.0) {
        let out = ofs_filter(&es, &g, t).unwrap();
        let mut union = BinaryMask::new(6, 6);
        for e in &es {
            union = union.or(e).unwrap();
        }
        prop_assert!(out.is_subset_of(&union));
    }

    // Entities here are separated rectangles, so the components of the
    // filtered union are exactly the kept entities.
    #[test]
    fn ofs_idempotent_on_separate_entities(
        rects in proptest::collection::vec((1usize..5, 1usize..5), 1..5),
        g in mask(30, 6),
        t in 0.0f64..1.0,
    ) {
        let es: Vec<BinaryMask> = rects
            .iter()
            .enumerate()
            .map(|(i, &(w, h))| BinaryMask::from_fn(30, 6, |x, y| x >= i * 6 && x < i * 6 + w && y < h))
            .collect();
        let once = ofs_filter(&es, &g, t).unwrap();
        let parts = connected_components(&once, Connectivity::Eight).masks();
        prop_assert_eq!(ofs_filter(&parts, &g, t).unwrap(), once);
    }

    #[test]
    fn clicks_land_in_error_regions(g in mask(9, 8)) {
        prop_assume!(!g.is_blank());
        let store = store_of(&[("a", &g)]);
        let cfg = EvalConfig::default();
        let mut h = SegmenterHandle::connect(NoisyOracle::new(store, 3)).unwrap();
        let (_, log) = simulate_clicks(&g, &"a".into(), &mut h, &cfg).unwrap();
        let pts = log.points();
        let distinct: BTreeSet<(usize, usize, bool)> = pts.iter().map(|p| (p.x, p.y, p.label == Label::Foreground)).collect();
        prop_assert_eq!(distinct.len(), pts.len());
        for k in 0..pts.len() {
            let before = if k == 0 {
                BinaryMask::new(9, 8)
            } else {
                h.segment_mask(&"a".into(), (9, 8), &Prompt::points(pts[..k].to_vec())).unwrap()
            };
            let p = pts[k];
            prop_assert_ne!(before.get(p.x, p.y), g.get(p.x, p.y));
            prop_assert_eq!(p.label == Label::Foreground, g.get(p.x, p.y));
        }
    }

    #[test]
    fn box_run_calls_once_per_component(g in mask(10, 8)) {
        prop_assume!(!g.is_blank());
        let store = store_of(&[("a", &g)]);
        let mut h = SegmenterHandle::connect(GtOracle::new(store)).unwrap();
        let before = h.calls();
        let pred = box_prompt_run(&g, &"a".into(), &mut h, Connectivity::Eight).unwrap();
        prop_assert_eq!((h.calls() - before) as usize, connected_components(&g, Connectivity::Eight).count());
        prop_assert_eq!(pred, g);
    }

    #[test]
    fn perturbed_prompts_stay_valid(
        seed in any::<u64>(),
        w in 1usize..40, h in 1usize..40,
        px in 0usize..40, py in 0usize..40,
        bx in (0usize..40, 0usize..40, 1usize..40, 1usize..40),
        shift in 0u32..15, pct in 0u32..60, iters in 0u32..6,
    ) {
        let mut rng = perturb::substream(seed, 1, "s");
        let p = segeval_core::PointPrompt::foreground(px % w, py % h);
        let q = perturb::jitter_point(p, (w, h), shift, &mut rng);
        prop_assert!(q.validate(w, h).is_ok());
        prop_assert_eq!(q.label, p.label);
        let x0 = bx.0 % w;
        let y0 = bx.1 % h;
        let b = BoxPrompt::new(x0, y0, (x0 + bx.2).min(w), (y0 + bx.3).min(h));
        prop_assume!(b.validate(w, h).is_ok());
        let j = perturb::jitter_box(&b, (w, h), pct, &mut rng);
        prop_assert!(j.bbox.validate(w, h).is_ok(), "{:?}", j);
        let m = b.to_mask(w, h);
        let mj = perturb::morph_perturb_mask(&m, iters, &mut rng).unwrap();
        prop_assert_eq!(mj.mask.dims(), (w, h));
        prop_assert!(!mj.mask.is_blank());
    }

    #[test]
    fn delta_sign_matches_degradation(ideal in 0.01f64..1.0, mean in 0.0f64..1.0) {
        for metric in [MetricId::Iou, MetricId::Mae] {
            let s = TrialStats {
                metric,
                polarity: metric.polarity(),
                ideal,
                mean,
                std: 0.0,
                n_trials: 1,
                delta: perturb::relative_change(mean, ideal),
            };
            let d = s.delta.unwrap();
            let bad = match metric.polarity() {
                Polarity::HigherBetter => d < 0.0,
                Polarity::LowerBetter => d > 0.0,
            };
            prop_assert_eq!(s.degraded(), bad);
            let text = perturb::format_delta(s.delta);
            prop_assert!(text.starts_with('+') || text.starts_with('-'));
            prop_assert!(text.ends_with('%'));
        }
    }

    #[test]
    fn schedule_k1_and_divisor_inclusion(len in 1usize..300, a in 1usize..6, b in 1usize..6) {
        prop_assert_eq!(multiframe_schedule(len, 1).unwrap(), vec![0]);
        let (k1, k2) = (a, a * b);
        prop_assume!(k2 <= len);
        let s1: BTreeSet<usize> = multiframe_schedule(len, k1).unwrap().into_iter().collect();
        let s2: BTreeSet<usize> = multiframe_schedule(len, k2).unwrap().into_iter().collect();
        prop_assert!(s1.is_subset(&s2));
        prop_assert_eq!(s2.len(), k2);
    }

    #[test]
    fn propagated_prompt_chain_stays_valid(preds in proptest::collection::vec(mask(7, 5), 1..6), box_mode in any::<bool>()) {
        let mode = if box_mode { PropagationMode::Box } else { PropagationMode::Point };
        let initial = Prompt::points(vec![segeval_core::PointPrompt::foreground(3, 2)]);
        let mut state = PropagationState::new(initial);
        for p in &preds {
            let prompt = propagate_prompt(p, mode, Connectivity::Eight, &mut state);
            prop_assert!(prompt.validate(7, 5).is_ok(), "{:?}", prompt);
        }
    }

    #[test]
    fn sequences_get_one_prediction_per_frame(gts in proptest::collection::vec(mask(6, 5), 1..8), k in 1usize..4, strat in 0usize..4) {
        prop_assume!(!gts[0].is_blank());
        let frames: Vec<Frame> = gts.iter().enumerate().map(|(i, g)| Frame { image: ImageRef::new(format!("f{i}")), gt: g.clone() }).collect();
        let store: GtStore = frames.iter().map(|f| (f.image.clone(), f.gt.clone())).collect();
        let cfg = EvalConfig::default();
        let mut h = SegmenterHandle::connect(GtEchoOracle::new(store)).unwrap();
        let video = SequenceRecord::new(SequenceKind::Video, frames.clone()).unwrap();
        let strategy = [
            VideoStrategy::PerFrameGt { mode: PropagationMode::Box },
            VideoStrategy::PropagatedPoint,
            VideoStrategy::PropagatedBox,
            VideoStrategy::Multiframe { k: k.min(gts.len()), mode: PromptMode::Mask },
        ][strat];
        let run = run_video(&video, strategy, &mut h, &cfg).unwrap();
        prop_assert_eq!(run.record.predictions().unwrap().len(), gts.len());
        let vol = SequenceRecord::new(SequenceKind::Volume, frames).unwrap();
        let run = bidirectional_3d(&vol, k.min(gts.len()), PromptMode::Box, &mut h, &cfg).unwrap();
        prop_assert_eq!(run.record.predictions().unwrap(), &gts[..]);
    }

    #[test]
    fn oracle_masks_match_request_dims(g in mask(9, 6), b in (0usize..9, 0usize..6)) {
        let store = store_of(&[("a", &g)]);
        let prompt = Prompt::boxes(vec![BoxPrompt::new(b.0, b.1, 9, 6)]);
        for mut h in [
            SegmenterHandle::connect(Box::new(GtOracle::new(store.clone())) as Box<dyn segeval_core::segmenter::Segmenter>).unwrap(),
            SegmenterHandle::connect(Box::new(NoisyOracle::new(store.clone(), 1)) as Box<dyn segeval_core::segmenter::Segmenter>).unwrap(),
        ] {
            let m = h.segment_mask(&"a".into(), (9, 6), &prompt).unwrap();
            prop_assert_eq!(m.dims(), (9, 6));
            prop_assert_eq!(&m, &h.segment_mask(&"a".into(), (9, 6), &prompt).unwrap());
        }
    }

    #[test]
    fn noisy_oracle_converges_on_disks(r in 8usize..14, seed in any::<u64>(), ox in 0usize..6, oy in 0usize..6) {
        let (w, h) = (2 * r + 12, 2 * r + 12);
        let g = disk(w, h, r + 3 + ox, r + 3 + oy, r);
        let store = store_of(&[("d", &g)]);
        let cfg = EvalConfig::default();
        let mut seg = SegmenterHandle::connect(NoisyOracle::new(store, seed)).unwrap();
        let (_, log) = simulate_clicks(&g, &"d".into(), &mut seg, &cfg).unwrap();
        prop_assert!(log.final_iou() >= 0.9, "{:?}", log);
        prop_assert!(log.clicks.len() <= 6);
    }
}

/// Trial statistics depend only on (seed, trial, sample id), not on which
/// other samples ran or in what order.
#[test]
fn trials_ignore_sample_order() {
    let cfg = EvalConfig { n_trials: 4, rng_seed: 11, ..EvalConfig::default() };
    let gts = [disk(30, 30, 12, 14, 8), disk(30, 30, 15, 15, 10), BinaryMask::from_fn(30, 30, |x, y| x > 4 && y > 6 && x < 20)];
    let ids = ["a", "b", "c"];
    let store = store_of(&[("a", &gts[0]), ("b", &gts[1]), ("c", &gts[2])]);
    let samples: Vec<Sample> =
        ids.iter().zip(&gts).map(|(id, g)| Sample { id: (*id).into(), image: ImageRef::new(*id), gt: g.clone() }).collect();
    for mode in [PromptMode::Point, PromptMode::Box, PromptMode::Mask] {
        let mut per_id: BTreeMap<String, Vec<BinaryMask>> = BTreeMap::new();
        for order in [[0, 1, 2], [2, 0, 1]] {
            let mut h = SegmenterHandle::connect(NoisyOracle::new(store.clone(), 5)).unwrap();
            for &i in &order {
                let s = &samples[i];
                let ideal: IdealRun = perturb::ideal_run(s, mode, &mut h, &cfg).unwrap();
                let t = perturb::sample_trials(s, &ideal, mode, &mut h, &cfg);
                assert!(t.failure.is_none());
                match per_id.get(&s.id) {
                    Some(prev) => assert_eq!(prev, &t.predictions, "{mode:?} {}", s.id),
                    None => {
                        per_id.insert(s.id.clone(), t.predictions);
                    }
                }
            }
        }
    }
}

#[test]
fn ideal_boxes_cover_each_component() {
    let g = BinaryMask::from_ascii(&["##..#", "##..#", ".....", "..###"]).unwrap();
    let boxes = ideal_boxes(&g, Connectivity::Eight);
    assert_eq!(boxes.len(), 3);
    for (x, y) in g.foreground() {
        assert!(boxes.iter().any(|b| b.contains(x, y)));
    }
}
