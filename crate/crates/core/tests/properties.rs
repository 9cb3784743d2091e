//! Property tests over the interval algebra, label conversion and caption
//! alignment.

use proptest::prelude::*;

use repurpose_core::data::{align_captions, CaptionSpan};
use repurpose_core::temporal::{
    clips_to_labels, giou_1d, labels_to_clips, segment_center, tiou, Interval,
};

fn arb_interval() -> impl Strategy<Value = Interval> {
    (0.0f64..500.0, 0.1f64..200.0)
        .prop_map(|(start, len)| Interval::new(start, start + len).unwrap())
}

/// Random set of disjoint (possibly touching) clips snapped to integer
/// segment boundaries inside a fixed 240s video.
fn arb_snapped_clips() -> impl Strategy<Value = Vec<Interval>> {
    proptest::collection::vec((1usize..40, 1usize..30), 0..6).prop_map(|segments| {
        let mut clips = Vec::new();
        let mut cursor = 0usize;
        for (gap, len) in segments {
            let start = cursor + gap;
            let end = start + len;
            if end > 240 {
                break;
            }
            clips.push(Interval::new(start as f64, end as f64).unwrap());
            cursor = end;
        }
        clips
    })
}

proptest! {
    #[test]
    fn tiou_symmetric_bounded_identity(a in arb_interval(), b in arb_interval()) {
        let ab = tiou(&a, &b);
        let ba = tiou(&b, &a);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(tiou(&a, &a), 1.0);
        if ab == 1.0 {
            prop_assert!((a.start() - b.start()).abs() < 1e-9 && (a.end() - b.end()).abs() < 1e-9);
        }
    }

    #[test]
    fn giou_below_tiou_with_equality_iff_hull_is_union(a in arb_interval(), b in arb_interval()) {
        let g = giou_1d(&a, &b);
        let t = tiou(&a, &b);
        prop_assert!(g <= t + 1e-12);
        prop_assert!(g > -1.0 && g <= 1.0);

        let inter = (a.end().min(b.end()) - a.start().max(b.start())).max(0.0);
        let union = a.length() + b.length() - inter;
        let hull = a.end().max(b.end()) - a.start().min(b.start());
        let hull_is_union = (hull - union).abs() < 1e-9;
        prop_assert_eq!((g - t).abs() < 1e-9, hull_is_union);
    }

    #[test]
    fn snapped_clip_sets_round_trip(clips in arb_snapped_clips()) {
        let labels = clips_to_labels(&clips, 240.0, 1.0).unwrap();
        let recovered = labels_to_clips(&labels, 1.0).unwrap();
        prop_assert_eq!(recovered.len(), clips.len());
        for (orig, rec) in clips.iter().zip(&recovered) {
            prop_assert!((orig.start() - rec.start()).abs() < 0.5);
            prop_assert!((orig.end() - rec.end()).abs() < 0.5);
        }
    }

    #[test]
    fn positive_count_matches_bruteforce_membership(clips in arb_snapped_clips()) {
        let labels = clips_to_labels(&clips, 240.0, 1.0).unwrap();
        let brute: usize = (0..240)
            .filter(|&t| {
                let tau = segment_center(t, 1.0);
                clips.iter().any(|c| c.contains(tau))
            })
            .count();
        prop_assert_eq!(labels.num_positive(), brute);
    }

    #[test]
    fn align_captions_always_yields_t_rows(
        spans in proptest::collection::vec((0.0f64..50.0, 0.1f64..30.0), 0..8),
        t in 1usize..40,
    ) {
        let spans: Vec<CaptionSpan> = spans
            .into_iter()
            .enumerate()
            .map(|(i, (start, len))| CaptionSpan {
                interval: Interval::new(start, start + len).unwrap(),
                text: format!("span {i}"),
                embedding: Some(vec![i as f64; 3]),
            })
            .collect();
        let (matrix, flags) = align_captions(&spans, t, 1.0, 3).unwrap();
        prop_assert_eq!(matrix.nrows(), t);
        prop_assert_eq!(flags.len(), t);
    }
}
