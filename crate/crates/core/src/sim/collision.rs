use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use super::vehicle::{Lane, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CollisionType {
    None,
    /// Ran into the barrier at the end of the merging region without merging.
    RampEndBarrier,
    /// A merge landed on top of a main-road vehicle.
    MergeIntoCar,
    /// Same-lane rear-end contact.
    RearEnd,
}

impl CollisionType {
    pub fn is_collision(self) -> bool {
        self != CollisionType::None
    }

    /// 1, 2 or 3; 0 for no collision.
    pub fn type_number(self) -> usize {
        match self {
            CollisionType::None => 0,
            CollisionType::RampEndBarrier => 1,
            CollisionType::MergeIntoCar => 2,
            CollisionType::RearEnd => 3,
        }
    }

    fn priority(self) -> u8 {
        match self {
            CollisionType::None => 0,
            CollisionType::RearEnd => 1,
            CollisionType::MergeIntoCar => 2,
            CollisionType::RampEndBarrier => 3,
        }
    }

    fn escalate(&mut self, other: CollisionType) {
        if other.priority() > self.priority() {
            *self = other;
        }
    }
}

/// Classifies every vehicle after a simultaneous step. `merged[i]` says
/// whether vehicle `i` changed lanes during the step. Both parties of a
/// merge or rear-end contact are flagged; when several rules apply the
/// barrier outranks a merge collision, which outranks a rear-end.
pub fn detect_collisions(
    vehicles: &[VehicleState],
    merged: &[bool],
    config: &EnvConfig,
) -> Vec<CollisionType> {
    let len = config.geometry.car_length;
    let barrier = config.geometry.merge_end_x;
    let mut out = vec![CollisionType::None; vehicles.len()];

    for (i, v) in vehicles.iter().enumerate() {
        if v.lane == Lane::Ramp && !merged[i] && v.x + len / 2.0 >= barrier {
            out[i].escalate(CollisionType::RampEndBarrier);
        }
    }

    for (i, v) in vehicles.iter().enumerate().filter(|(i, _)| merged[*i]) {
        for (j, w) in vehicles.iter().enumerate() {
            if i != j && w.lane == Lane::Main && (v.x - w.x).abs() < len {
                out[i].escalate(CollisionType::MergeIntoCar);
                out[j].escalate(CollisionType::MergeIntoCar);
            }
        }
    }

    for lane in [Lane::Ramp, Lane::Main] {
        let mut order: Vec<usize> = (0..vehicles.len())
            .filter(|&i| vehicles[i].lane == lane)
            .collect();
        order.sort_by(|&a, &b| vehicles[a].x.total_cmp(&vehicles[b].x));
        for pair in order.windows(2) {
            let (rear, front) = (pair[0], pair[1]);
            if vehicles[front].x - vehicles[rear].x - len <= 0.0 {
                out[rear].escalate(CollisionType::RearEnd);
                out[front].escalate(CollisionType::RearEnd);
            }
        }
    }
    out
}
