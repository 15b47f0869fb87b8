use super::VehicleState;

/// Vehicle indices per absolute lane, ordered downstream first.
#[derive(Clone, Debug, Default)]
pub(crate) struct LaneIndex {
    lanes: Vec<Vec<usize>>,
}

/// Downstream-first ordering with ties broken by id.
pub(crate) fn ahead_of(a: &VehicleState, b: &VehicleState) -> std::cmp::Ordering {
    b.position
        .partial_cmp(&a.position)
        .expect("finite positions")
        .then(a.id.cmp(&b.id))
}

impl LaneIndex {
    pub(crate) fn rebuild(&mut self, vehicles: &[VehicleState], width: usize) {
        self.lanes.resize_with(width, Vec::new);
        for l in &mut self.lanes {
            l.clear();
        }
        for (i, v) in vehicles.iter().enumerate() {
            self.lanes[v.lane].push(i);
        }
        for l in &mut self.lanes {
            l.sort_by(|&a, &b| ahead_of(&vehicles[a], &vehicles[b]));
        }
    }

    pub(crate) fn lane(&self, lane: usize) -> &[usize] {
        self.lanes.get(lane).map_or(&[], Vec::as_slice)
    }

    /// Nearest vehicle strictly ahead of `position` and nearest at or behind
    /// it, skipping `skip`.
    pub(crate) fn neighbors(
        &self,
        lane: usize,
        position: f64,
        vehicles: &[VehicleState],
        skip: Option<usize>,
    ) -> (Option<usize>, Option<usize>) {
        let list = self.lane(lane);
        let split = list.partition_point(|&j| vehicles[j].position > position);
        let leader = list[..split].iter().rev().copied().find(|&j| Some(j) != skip);
        let follower = list[split..].iter().copied().find(|&j| Some(j) != skip);
        (leader, follower)
    }

    /// Mean speed of vehicles in `(position, position + window]`.
    pub(crate) fn mean_speed_ahead(
        &self,
        lane: usize,
        position: f64,
        window: f64,
        vehicles: &[VehicleState],
    ) -> Option<f64> {
        let list = self.lane(lane);
        let split = list.partition_point(|&j| vehicles[j].position > position);
        let (mut sum, mut n) = (0.0, 0u32);
        for &j in list[..split].iter().rev() {
            let v = &vehicles[j];
            if v.position > position + window {
                break;
            }
            sum += v.speed;
            n += 1;
        }
        (n > 0).then(|| sum / f64::from(n))
    }

    pub(crate) fn remove(&mut self, lane: usize, idx: usize) {
        if let Some(l) = self.lanes.get_mut(lane) {
            if let Some(k) = l.iter().position(|&j| j == idx) {
                l.remove(k);
            }
        }
    }

    pub(crate) fn insert(&mut self, lane: usize, idx: usize, vehicles: &[VehicleState]) {
        let l = &mut self.lanes[lane];
        let at = l.partition_point(|&j| ahead_of(&vehicles[j], &vehicles[idx]).is_lt());
        l.insert(at, idx);
    }
}
