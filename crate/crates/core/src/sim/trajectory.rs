use std::io::Write;

use serde::Serialize;

use super::{SimContext, TickObserver, WorldState};
use crate::error::Result;
use crate::network::RoadNetwork;

/// One vehicle at the end of one tick. `lane` is relative to the segment
/// containing `position`, leftmost 0.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct TrajectoryRow {
    pub tick: u64,
    pub vehicle_id: u64,
    pub lane: usize,
    pub position: f64,
    pub speed: f64,
}

/// Rows for every vehicle currently on the road, in id order.
pub fn trajectory_rows(world: &WorldState, network: &RoadNetwork) -> Vec<TrajectoryRow> {
    let mut rows: Vec<TrajectoryRow> = world
        .vehicles()
        .iter()
        .map(|v| TrajectoryRow {
            tick: world.tick(),
            vehicle_id: v.id,
            lane: network.relative_lane(v.lane, v.position).unwrap_or(usize::MAX),
            position: v.position,
            speed: v.speed,
        })
        .collect();
    rows.sort_by_key(|r| r.vehicle_id);
    rows
}

/// Streams trajectory rows as CSV.
pub struct TrajectoryWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(w: W) -> Self {
        TrajectoryWriter {
            out: csv::Writer::from_writer(w),
        }
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| crate::error::Error::io("trajectory", e))?;
        self.out
            .into_inner()
            .map_err(|e| crate::error::Error::io("trajectory", e.into_error()))
    }
}

impl<W: Write> TickObserver for TrajectoryWriter<W> {
    fn observe(&mut self, world: &WorldState, ctx: &SimContext) -> Result<()> {
        for row in trajectory_rows(world, &ctx.network) {
            self.out.serialize(row)?;
        }
        Ok(())
    }
}
