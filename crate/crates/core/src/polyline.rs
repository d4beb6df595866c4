//! Arc-length utilities for 3D polylines.

use crate::geometry::Point3;

/// Slack on `length / spacing` so that e.g. 0.3 / 0.1 counts as 3 intervals.
const INTERVAL_ROUNDING_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolylineError {
    #[error("resample spacing must be positive and finite, got {0}")]
    NonPositiveSpacing(f64),
    #[error("polyline has zero length or fewer than two points")]
    Degenerate,
}

pub fn polyline_length(points: &[Point3]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Sample count for a polyline of `length` at `spacing`: `floor(length / spacing) + 1`, at least 2.
pub fn sample_count(length: f64, spacing: f64) -> usize {
    let intervals = (length / spacing + INTERVAL_ROUNDING_SLACK).floor();
    (intervals as usize).saturating_add(1).max(2)
}

/// Resample at uniform arc-length intervals.
///
/// The interval is `length / (count - 1)`, so the first and last input
/// points are reproduced bit-for-bit.
pub fn resample(points: &[Point3], spacing: f64) -> Result<Vec<Point3>, PolylineError> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(PolylineError::NonPositiveSpacing(spacing));
    }
    if points.len() < 2 {
        return Err(PolylineError::Degenerate);
    }
    let mut cumulative = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in points.windows(2) {
        acc += w[0].distance(w[1]);
        cumulative.push(acc);
    }
    let length = acc;
    if !(length > 0.0) {
        return Err(PolylineError::Degenerate);
    }

    let count = sample_count(length, spacing);
    let step = length / (count - 1) as f64;
    let mut out = Vec::with_capacity(count);
    out.push(points[0]);
    let mut seg = 0;
    for k in 1..count - 1 {
        let target = k as f64 * step;
        while seg + 2 < cumulative.len() && cumulative[seg + 1] < target {
            seg += 1;
        }
        let seg_len = cumulative[seg + 1] - cumulative[seg];
        let p = if seg_len > 0.0 {
            let t = ((target - cumulative[seg]) / seg_len).clamp(0.0, 1.0);
            points[seg].lerp(points[seg + 1], t)
        } else {
            points[seg + 1]
        };
        out.push(p);
    }
    out.push(points[points.len() - 1]);
    Ok(out)
}

/// Lengths of consecutive segments.
pub fn segment_lengths(points: &[Point3]) -> impl Iterator<Item = f64> + '_ {
    points.windows(2).map(|w| w[0].distance(w[1]))
}
