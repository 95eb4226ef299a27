//! Race-track reference line: piecewise-constant curvature segments with
//! per-segment corridor widths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSegment {
    #[serde(rename = "length_m")]
    pub length: f64,
    #[serde(rename = "curvature_1pm")]
    pub curvature: f64,
    #[serde(rename = "width_left_m")]
    pub width_left: f64,
    #[serde(rename = "width_right_m")]
    pub width_right: f64,
}

impl TrackSegment {
    pub fn new(length: f64, curvature: f64, width_left: f64, width_right: f64) -> Self {
        Self {
            length,
            curvature,
            width_left,
            width_right,
        }
    }

    fn max_width(&self) -> f64 {
        self.width_left.max(self.width_right)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    segments: Vec<TrackSegment>,
    /// Cumulative start arc length of each segment.
    starts: Vec<f64>,
    length: f64,
}

impl Track {
    pub fn new(segments: Vec<TrackSegment>) -> Result<Self> {
        let errors = Self::check_segments(&segments);
        if !errors.is_empty() {
            return Err(Error::Validation(errors));
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for seg in &segments {
            starts.push(acc);
            acc += seg.length;
        }
        Ok(Self {
            segments,
            starts,
            length: acc,
        })
    }

    /// Straight track with a uniform corridor.
    pub fn straight(length: f64, width_left: f64, width_right: f64) -> Result<Self> {
        Self::new(vec![TrackSegment::new(
            length,
            0.0,
            width_left,
            width_right,
        )])
    }

    /// Every violated segment invariant, as `segments[i].field: reason` lines.
    pub fn check_segments(segments: &[TrackSegment]) -> Vec<String> {
        let mut errors = Vec::new();
        if segments.is_empty() {
            errors.push("track.segments: at least one segment is required".to_owned());
        }
        for (i, seg) in segments.iter().enumerate() {
            if !(seg.length > 0.0 && seg.length.is_finite()) {
                errors.push(format!(
                    "track.segments[{i}].length_m: must be > 0, got {}",
                    seg.length
                ));
            }
            if !seg.curvature.is_finite() {
                errors.push(format!("track.segments[{i}].curvature_1pm: must be finite"));
            }
            if !(seg.width_left > 0.0 && seg.width_left.is_finite()) {
                errors.push(format!(
                    "track.segments[{i}].width_left_m: must be > 0, got {}",
                    seg.width_left
                ));
            }
            if !(seg.width_right > 0.0 && seg.width_right.is_finite()) {
                errors.push(format!(
                    "track.segments[{i}].width_right_m: must be > 0, got {}",
                    seg.width_right
                ));
            }
            if seg.curvature.abs() * seg.max_width() >= 1.0 {
                errors.push(format!(
                    "track.segments[{i}]: |curvature| * max width = {} must be < 1",
                    seg.curvature.abs() * seg.max_width()
                ));
            }
        }
        errors
    }

    pub fn segments(&self) -> &[TrackSegment] {
        &self.segments
    }

    pub fn total_length(&self) -> f64 {
        self.length
    }

    /// Segment containing `s`; joints belong to the later segment and
    /// `s == total_length` to the last one.
    fn segment_index(&self, s: f64) -> Result<usize> {
        if !(0.0..=self.length).contains(&s) {
            return Err(Error::OutOfTrack {
                s,
                length: self.length,
            });
        }
        let idx = self.starts.partition_point(|&start| start <= s);
        Ok(idx.saturating_sub(1))
    }

    pub fn curvature_at(&self, s: f64) -> Result<f64> {
        Ok(self.segments[self.segment_index(s)?].curvature)
    }

    /// `(width_left, width_right)` at `s`.
    pub fn width_at(&self, s: f64) -> Result<(f64, f64)> {
        let seg = &self.segments[self.segment_index(s)?];
        Ok((seg.width_left, seg.width_right))
    }

    /// Like [`Track::curvature_at`], but clamps `s` into the domain. Used on
    /// iterates that run past the end of the modelled track.
    pub fn curvature_clamped(&self, s: f64) -> f64 {
        self.segments[self.segment_index(s.clamp(0.0, self.length)).unwrap_or(0)].curvature
    }

    pub fn width_clamped(&self, s: f64) -> (f64, f64) {
        let seg = &self.segments[self.segment_index(s.clamp(0.0, self.length)).unwrap_or(0)];
        (seg.width_left, seg.width_right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_segment() -> Track {
        Track::new(vec![
            TrackSegment::new(50.0, 0.0, 5.0, 3.0),
            TrackSegment::new(50.0, 0.02, 4.0, 4.0),
        ])
        .unwrap()
    }

    #[test]
    fn straight_track_has_zero_curvature() {
        let t = Track::straight(100.0, 4.0, 4.0).unwrap();
        assert_eq!(t.curvature_at(50.0).unwrap(), 0.0);
        assert_eq!(t.width_at(50.0).unwrap(), (4.0, 4.0));
        assert_eq!(t.total_length(), 100.0);
    }

    #[test]
    fn piecewise_lookup_and_joint_tie_break() {
        let t = two_segment();
        assert_eq!(t.curvature_at(75.0).unwrap(), 0.02);
        assert_eq!(t.curvature_at(50.0).unwrap(), 0.02);
        assert_eq!(t.curvature_at(49.999).unwrap(), 0.0);
        assert_eq!(t.width_at(10.0).unwrap(), (5.0, 3.0));
        assert_eq!(t.width_at(60.0).unwrap(), (4.0, 4.0));
        assert_eq!(t.width_at(100.0).unwrap(), (4.0, 4.0));
    }

    #[test]
    fn out_of_range_is_domain_error() {
        let t = two_segment();
        assert!(matches!(
            t.curvature_at(-0.1),
            Err(Error::OutOfTrack { .. })
        ));
        assert!(matches!(t.width_at(100.1), Err(Error::OutOfTrack { .. })));
        assert!(matches!(
            t.curvature_at(f64::NAN),
            Err(Error::OutOfTrack { .. })
        ));
    }

    #[test]
    fn rejects_invalid_segments() {
        let err = Track::new(vec![
            TrackSegment::new(0.0, 0.0, 4.0, 4.0),
            TrackSegment::new(10.0, 0.5, 4.0, -1.0),
        ])
        .unwrap_err();
        match err {
            Error::Validation(lines) => assert_eq!(lines.len(), 3, "{lines:?}"),
            other => panic!("{other}"),
        }
    }

    proptest! {
        #[test]
        fn denominator_positive_inside_corridor(
            kappas in proptest::collection::vec(-0.1f64..0.1, 1..5),
            frac in 0.0f64..1.0,
            lat in -1.0f64..1.0,
        ) {
            let segs: Vec<_> = kappas.iter().map(|&k| TrackSegment::new(20.0, k, 5.0, 6.0)).collect();
            let t = Track::new(segs).unwrap();
            let s = frac * t.total_length();
            let (wl, wr) = t.width_at(s).unwrap();
            let n = lat * wl.max(wr);
            prop_assert!(1.0 - n * t.curvature_at(s).unwrap() > 0.0);
        }

        #[test]
        fn curvature_constant_inside_segment(a in 0.001f64..0.999, b in 0.001f64..0.999) {
            let t = two_segment();
            prop_assert_eq!(t.curvature_at(50.0 * a).unwrap(), t.curvature_at(50.0 * b).unwrap());
            prop_assert_eq!(t.curvature_at(50.0 + 50.0 * a).unwrap(), t.curvature_at(50.0 + 50.0 * b).unwrap());
        }
    }
}
