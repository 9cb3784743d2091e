//! Temporal intervals and their overlap measures.

use super::CoreError;

/// A time interval in seconds with strictly positive length.
///
/// Construction is the only validation point; every function taking an
/// `Interval` may assume `0 <= start < end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    start: f64,
    end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self, CoreError> {
        if !start.is_finite() || !end.is_finite() || start < 0.0 || end <= start {
            return Err(CoreError::InvalidInterval { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    /// Half-open membership test: `start <= t < end`.
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Temporal intersection-over-union of two intervals, in `[0, 1]`.
///
/// Symmetric, and zero for disjoint intervals (touching endpoints count as
/// disjoint: the intersection has measure zero).
pub fn tiou(a: &Interval, b: &Interval) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.length() + b.length() - inter;
    inter / union
}

/// Generalized IoU for intervals, in `(-1, 1]`.
///
/// `IoU - |C \ (a ∪ b)| / |C|` where `C` is the smallest interval enclosing
/// both inputs. Equals plain IoU whenever the enclosing hull has no gap,
/// and goes negative for well-separated intervals.
pub fn giou_1d(a: &Interval, b: &Interval) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.length() + b.length() - inter;
    let hull = a.end.max(b.end) - a.start.min(b.start);
    inter / union - (hull - union) / hull
}
