//! Alignment of time-stamped caption spans onto fixed-length segments.

use ndarray::Array2;

use super::DataError;
use crate::temporal::Interval;

/// One transcribed sentence with its time span and (optionally) its
/// sentence embedding.
#[derive(Debug, Clone)]
pub struct CaptionSpan {
    pub interval: Interval,
    pub text: String,
    pub embedding: Option<Vec<f64>>,
}

/// Assigns each segment the embedding of the caption span with maximal
/// temporal overlap, duplicating spans across every segment they touch.
///
/// Segments no span overlaps get an all-zero row and an empty flag; the
/// model later substitutes its learned empty-token embedding for flagged
/// rows. Overlap ties break to the span that starts earlier. Spans are
/// clipped to the segmented range `[0, num_segments * segment_length]`.
pub fn align_captions(
    spans: &[CaptionSpan],
    num_segments: usize,
    segment_length: f64,
    caption_dim: usize,
) -> Result<(Array2<f64>, Vec<bool>), DataError> {
    for span in spans {
        match &span.embedding {
            None => {
                return Err(DataError::MissingEmbedding {
                    text: span.text.clone(),
                })
            }
            Some(e) if e.len() != caption_dim => {
                return Err(DataError::EmbeddingDimMismatch {
                    text: span.text.clone(),
                    expected: caption_dim,
                    got: e.len(),
                })
            }
            Some(_) => {}
        }
    }
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by(|&a, &b| {
        spans[a]
            .interval
            .start()
            .total_cmp(&spans[b].interval.start())
            .then(spans[a].interval.end().total_cmp(&spans[b].interval.end()))
    });

    let horizon = num_segments as f64 * segment_length;
    let mut matrix = Array2::zeros((num_segments, caption_dim));
    let mut empty = vec![true; num_segments];

    for t in 0..num_segments {
        let window_start = t as f64 * segment_length;
        let window_end = window_start + segment_length;
        let mut best: Option<(f64, usize)> = None;
        for &idx in &order {
            let span = &spans[idx].interval;
            let s = span.start().max(0.0);
            let e = span.end().min(horizon);
            let overlap = (e.min(window_end) - s.max(window_start)).max(0.0);
            if overlap <= 0.0 {
                continue;
            }
            // strictly-greater keeps the earliest span on ties
            if best.is_none_or(|(b, _)| overlap > b) {
                best = Some((overlap, idx));
            }
        }
        if let Some((_, idx)) = best {
            let emb = spans[idx].embedding.as_ref().unwrap();
            for (j, &v) in emb.iter().enumerate() {
                matrix[(t, j)] = v;
            }
            empty[t] = false;
        }
    }
    Ok((matrix, empty))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(s: f64, e: f64, text: &str, dim: usize, fill: f64) -> CaptionSpan {
        CaptionSpan {
            interval: Interval::new(s, e).unwrap(),
            text: text.into(),
            embedding: Some(vec![fill; dim]),
        }
    }

    #[test]
    fn span_duplicates_across_overlapped_segments() {
        let spans = vec![span(3.2, 7.8, "a", 4, 1.0)];
        let (m, empty) = align_captions(&spans, 10, 1.0, 4).unwrap();
        for t in 0..10 {
            let expect_filled = (3..=7).contains(&t);
            assert_eq!(!empty[t], expect_filled, "segment {t}");
            assert_eq!(m[(t, 0)] != 0.0, expect_filled, "segment {t}");
        }
    }

    #[test]
    fn no_spans_marks_everything_empty() {
        let (m, empty) = align_captions(&[], 5, 1.0, 3).unwrap();
        assert_eq!(m.dim(), (5, 3));
        assert!(empty.iter().all(|&e| e));
        assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maximal_overlap_wins_with_ties_to_earlier_span() {
        // window [1,2): span [0,2] overlaps 1.0, span [1.5,4] overlaps 0.5
        let spans = vec![span(0.0, 2.0, "first", 2, 1.0), span(1.5, 4.0, "second", 2, 2.0)];
        let (m, _) = align_captions(&spans, 5, 1.0, 2).unwrap();
        assert_eq!(m[(1, 0)], 1.0, "higher-overlap span must win");

        // exact tie on window [1,2): spans [0,1.5] and [1.5,3] both overlap 0.5
        let spans = vec![span(0.0, 1.5, "early", 2, 3.0), span(1.5, 3.0, "late", 2, 4.0)];
        let (m, _) = align_captions(&spans, 4, 1.0, 2).unwrap();
        assert_eq!(m[(1, 0)], 3.0, "ties must break to the earlier span");
    }

    #[test]
    fn missing_embedding_is_an_error() {
        let spans = vec![CaptionSpan {
            interval: Interval::new(0.0, 1.0).unwrap(),
            text: "no vector".into(),
            embedding: None,
        }];
        let err = align_captions(&spans, 3, 1.0, 4).unwrap_err();
        assert!(matches!(err, DataError::MissingEmbedding { .. }));
    }

    #[test]
    fn wrong_dimension_is_an_error() {
        let spans = vec![span(0.0, 1.0, "short", 2, 1.0)];
        let err = align_captions(&spans, 3, 1.0, 4).unwrap_err();
        assert!(matches!(err, DataError::EmbeddingDimMismatch { .. }));
    }

    #[test]
    fn row_count_is_always_t_even_for_pathological_spans() {
        // overlapping spans, spans past the horizon, unsorted input
        let spans = vec![
            span(8.0, 50.0, "overlong", 3, 1.0),
            span(0.0, 9.0, "wide", 3, 2.0),
            span(2.0, 3.0, "inner", 3, 3.0),
        ];
        let (m, empty) = align_captions(&spans, 10, 1.0, 3).unwrap();
        assert_eq!(m.dim(), (10, 3));
        assert_eq!(empty.len(), 10);
        assert!(empty.iter().all(|&e| !e));
    }
}
