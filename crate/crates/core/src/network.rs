//! Lane-drop road geometry.
//!
//! Lanes are numbered from the left, starting at 0, within each segment. The
//! simulator works in *absolute* lane coordinates: the numbering of the first
//! (widest) segment. When lanes drop on the left, the surviving lanes keep
//! their absolute index while their per-segment index shifts.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which outer edge of the carriageway loses lanes at a drop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// One homogeneous stretch of road.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentDef {
    pub start: f64,
    pub end: f64,
    pub lane_count: usize,
    /// Per-segment lane index (leftmost = 0) of the restricted lane.
    pub restricted_lane: Option<usize>,
}

impl SegmentDef {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, position: f64) -> bool {
        self.start <= position && position < self.end
    }
}

/// Builder input for one segment: length, lane count and optional restricted lane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub length: f64,
    pub lanes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restricted_lane: Option<usize>,
}

impl SegmentSpec {
    pub fn new(length: f64, lanes: usize, restricted_lane: Option<usize>) -> Self {
        SegmentSpec {
            length,
            lanes,
            restricted_lane,
        }
    }
}

/// A position where one or more lanes end.
#[derive(Clone, Debug, PartialEq)]
pub struct LaneDrop {
    pub position: f64,
    pub side: Side,
    /// Absolute indices of the lanes that end here.
    pub dropped: Range<usize>,
    /// Absolute index of the innermost dropped lane and the lane it zips into.
    pub zipper: (usize, usize),
}

/// The restricted lane in absolute coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestrictedZone {
    pub start: f64,
    pub end: f64,
    pub lane: usize,
}

impl RestrictedZone {
    pub fn contains(&self, lane: usize, position: f64) -> bool {
        lane == self.lane && self.start <= position && position < self.end
    }
}

/// Segmented multi-lane roadway with non-increasing lane count.
#[derive(Clone, Debug, PartialEq)]
pub struct RoadNetwork {
    pub total_length: f64,
    pub segments: Vec<SegmentDef>,
    pub speed_limit: f64,
    /// Position where the lane count reaches its final value.
    pub merge_position: f64,
    pub exit_lane_count: usize,
    offsets: Vec<usize>,
    exit_offset: usize,
    drops: Vec<LaneDrop>,
    restricted: Option<RestrictedZone>,
    width: usize,
    /// `usable[seg * width + lane]` = (end if permitted, end if not permitted).
    usable: Vec<(f64, f64)>,
}

/// The 1 km two-lane road whose left lane is restricted over the last 500 m
/// and ends at the exit.
pub fn default_network() -> RoadNetwork {
    build_lane_drop_network(
        &[SegmentSpec::new(500.0, 2, None), SegmentSpec::new(500.0, 2, Some(0))],
        25.0,
    )
    .expect("reference geometry is valid")
}

/// Builds a lane-drop network; internal drops remove lanes on the right.
pub fn build_lane_drop_network(spec: &[SegmentSpec], speed_limit: f64) -> Result<RoadNetwork> {
    build_lane_drop_network_with(spec, speed_limit, Side::Right)
}

/// Builds a lane-drop network, choosing the side for drops not implied by a
/// restricted lane.
///
/// A drop directly after a restricted segment removes the restricted lane's
/// side. If the last segment carries a restricted lane, that lane ends at the
/// exit; otherwise every lane of the last segment leaves the road.
pub fn build_lane_drop_network_with(
    spec: &[SegmentSpec],
    speed_limit: f64,
    default_drop_side: Side,
) -> Result<RoadNetwork> {
    let geometry = |msg: String| Error::InvalidGeometry(msg);
    if spec.is_empty() {
        return Err(geometry("no segments".into()));
    }
    if !(speed_limit > 0.0 && speed_limit.is_finite()) {
        return Err(geometry(format!("speed limit {speed_limit} must be positive")));
    }

    let mut segments = Vec::with_capacity(spec.len());
    let mut position = 0.0;
    for (i, s) in spec.iter().enumerate() {
        if !(s.length > 0.0 && s.length.is_finite()) {
            return Err(geometry(format!("segment {i} has non-positive length {}", s.length)));
        }
        if s.lanes == 0 {
            return Err(geometry(format!("segment {i} has no lanes")));
        }
        if let Some(prev) = segments.last().map(|p: &SegmentDef| p.lane_count) {
            if s.lanes > prev {
                return Err(geometry(format!(
                    "lane count increases from {prev} to {} at segment {i}",
                    s.lanes
                )));
            }
        }
        if let Some(r) = s.restricted_lane {
            if r >= s.lanes {
                return Err(geometry(format!(
                    "segment {i} restricted lane {r} out of range for {} lanes",
                    s.lanes
                )));
            }
        }
        segments.push(SegmentDef {
            start: position,
            end: position + s.length,
            lane_count: s.lanes,
            restricted_lane: s.restricted_lane,
        });
        position += s.length;
    }

    let restricted_count = segments.iter().filter(|s| s.restricted_lane.is_some()).count();
    if restricted_count > 1 {
        return Err(geometry("more than one restricted segment".into()));
    }

    let restricted_side = |seg: &SegmentDef| -> Result<Option<Side>> {
        match seg.restricted_lane {
            None => Ok(None),
            Some(0) => Ok(Some(Side::Left)),
            Some(r) if r + 1 == seg.lane_count => Ok(Some(Side::Right)),
            Some(r) => Err(Error::InvalidGeometry(format!(
                "restricted lane {r} is not an outer lane and cannot be dropped"
            ))),
        }
    };

    let mut offsets = Vec::with_capacity(segments.len());
    let mut drops = Vec::new();
    let mut offset = 0usize;
    for i in 0..segments.len() {
        offsets.push(offset);
        let here = &segments[i];
        let side = restricted_side(here)?;
        let next_lanes = match segments.get(i + 1) {
            Some(next) => next.lane_count,
            None if side.is_some() => here.lane_count - 1,
            None => here.lane_count,
        };
        let dropped = here.lane_count - next_lanes;
        if dropped == 0 {
            if side.is_some() {
                return Err(geometry(format!(
                    "restricted segment {i} does not end at a lane drop"
                )));
            }
            continue;
        }
        if here.lane_count == 1 || next_lanes == 0 {
            return Err(geometry(format!("segment {i} would drop every lane")));
        }
        let side = side.unwrap_or(default_drop_side);
        let (range, zipper) = match side {
            Side::Left => (offset..offset + dropped, (offset + dropped - 1, offset + dropped)),
            Side::Right => {
                let first = offset + here.lane_count - dropped;
                (first..offset + here.lane_count, (first, first - 1))
            }
        };
        drops.push(LaneDrop {
            position: here.end,
            side,
            dropped: range,
            zipper,
        });
        if side == Side::Left {
            offset += dropped;
        }
    }
    let exit_offset = offset;
    let last = segments.last().expect("non-empty");
    let total_length = last.end;
    let exit_lane_count = match restricted_side(last)? {
        Some(_) => last.lane_count - 1,
        None => last.lane_count,
    };
    let merge_position = drops.last().map_or(total_length, |d| d.position);

    let restricted = segments.iter().zip(&offsets).find_map(|(s, &o)| {
        s.restricted_lane.map(|r| RestrictedZone {
            start: s.start,
            end: s.end,
            lane: o + r,
        })
    });

    let width = segments[0].lane_count;
    let mut network = RoadNetwork {
        total_length,
        segments,
        speed_limit,
        merge_position,
        exit_lane_count,
        offsets,
        exit_offset,
        drops,
        restricted,
        width,
        usable: Vec::new(),
    };
    network.usable = network.compute_usable();
    Ok(network)
}

impl RoadNetwork {
    /// Segment containing `position`; boundaries belong to the downstream segment.
    pub fn segment_at(&self, position: f64) -> Result<&SegmentDef> {
        self.segment_index_at(position)
            .map(|i| &self.segments[i])
            .ok_or(Error::OutOfRange {
                position,
                total_length: self.total_length,
            })
    }

    pub fn segment_index_at(&self, position: f64) -> Option<usize> {
        if !(0.0..self.total_length).contains(&position) {
            return None;
        }
        let idx = self.segments.partition_point(|s| s.start <= position);
        Some(idx - 1)
    }

    /// Number of absolute lanes (lane count of the first segment).
    pub fn width(&self) -> usize {
        self.width
    }

    /// Absolute lane range present in segment `seg`.
    pub fn lane_range(&self, seg: usize) -> Range<usize> {
        let o = self.offsets[seg];
        o..o + self.segments[seg].lane_count
    }

    /// Absolute lane range that continues past the exit.
    pub fn exit_lanes(&self) -> Range<usize> {
        self.exit_offset..self.exit_offset + self.exit_lane_count
    }

    pub fn lane_exists(&self, lane: usize, position: f64) -> bool {
        match self.segment_index_at(position) {
            Some(seg) => self.lane_range(seg).contains(&lane),
            None => false,
        }
    }

    /// Per-segment lane index of absolute lane `lane` at `position`.
    pub fn relative_lane(&self, lane: usize, position: f64) -> Option<usize> {
        let seg = self.segment_index_at(position.max(0.0))?;
        let range = self.lane_range(seg);
        range.contains(&lane).then(|| lane - range.start)
    }

    /// Absolute index of a per-segment lane.
    pub fn absolute_lane(&self, seg: usize, relative: usize) -> usize {
        self.offsets[seg] + relative
    }

    pub fn drops(&self) -> &[LaneDrop] {
        &self.drops
    }

    pub fn restricted_zone(&self) -> Option<RestrictedZone> {
        self.restricted
    }

    /// Position at which `lane` stops being usable for a vehicle at
    /// `position`: where it ends, or where it becomes restricted for a vehicle
    /// that is not permitted. `f64::INFINITY` if it continues past the exit.
    pub fn usable_end(&self, lane: usize, position: f64, permitted: bool) -> f64 {
        let Some(seg) = self.segment_index_at(position.max(0.0)) else {
            return f64::INFINITY;
        };
        if lane >= self.width {
            return position;
        }
        let (p, np) = self.usable[seg * self.width + lane];
        if permitted {
            p
        } else {
            np
        }
    }

    /// A copy of this network with the access restriction removed.
    pub fn without_restriction(&self) -> RoadNetwork {
        let mut n = self.clone();
        for s in &mut n.segments {
            s.restricted_lane = None;
        }
        n.restricted = None;
        n.usable = n.compute_usable();
        n
    }

    fn compute_usable(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(f64::NEG_INFINITY, f64::NEG_INFINITY); self.segments.len() * self.width];
        for seg in 0..self.segments.len() {
            for lane in self.lane_range(seg) {
                let end_for = |permitted: bool| {
                    for later in seg + 1..self.segments.len() {
                        if !self.lane_range(later).contains(&lane) {
                            return self.segments[later].start;
                        }
                        if !permitted {
                            if let Some(z) = self.restricted {
                                if z.lane == lane && z.start == self.segments[later].start {
                                    return z.start;
                                }
                            }
                        }
                    }
                    if self.exit_lanes().contains(&lane) {
                        f64::INFINITY
                    } else {
                        self.total_length
                    }
                };
                out[seg * self.width + lane] = (end_for(true), end_for(false));
            }
        }
        out
    }

    /// Checks every structural invariant; used by tests and after deserialization.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidGeometry(m));
        if !(self.speed_limit > 0.0) {
            return fail("speed limit must be positive".into());
        }
        let mut expected_start = 0.0;
        let mut prev_lanes = usize::MAX;
        for (i, s) in self.segments.iter().enumerate() {
            if s.start != expected_start {
                return fail(format!("segment {i} leaves a gap or overlap at {}", s.start));
            }
            if !(s.start < s.end) || s.lane_count == 0 {
                return fail(format!("segment {i} is degenerate"));
            }
            if s.lane_count > prev_lanes {
                return fail(format!("lane count increases at segment {i}"));
            }
            if let Some(r) = s.restricted_lane {
                if r >= s.lane_count {
                    return fail(format!("restricted lane out of range in segment {i}"));
                }
                let dropped_here = self
                    .drops
                    .iter()
                    .any(|d| d.position == s.end && d.dropped.contains(&self.absolute_lane(i, r)));
                if !dropped_here {
                    return fail(format!("restricted segment {i} does not end at a lane drop"));
                }
            }
            prev_lanes = s.lane_count;
            expected_start = s.end;
        }
        if expected_start != self.total_length {
            return fail("segments do not cover the road".into());
        }
        if self.segments.iter().filter(|s| s.restricted_lane.is_some()).count() > 1 {
            return fail("more than one restricted segment".into());
        }
        Ok(())
    }
}
