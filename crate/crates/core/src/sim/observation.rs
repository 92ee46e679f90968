//! Ego-centric observations.
//!
//! [`Surroundings`] holds the raw metric view (bumper gaps in meters,
//! relative speeds `v_other − v_ego` in m/s, unclipped). Rule-based drivers
//! and the reward read it directly. [`Observation`] is its normalized,
//! clipped 9-feature form fed to the Q-networks.

use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use super::vehicle::{Lane, VehicleState};

pub const OBS_DIM: usize = 9;

/// Metric view of one vehicle's neighborhood. An absent neighbor has an
/// infinite gap; its relative speed is +v_max ahead and −v_max behind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surroundings {
    pub fc_gap: f64,
    pub fc_rel_v: f64,
    pub fs_gap: f64,
    pub fs_rel_v: f64,
    pub rs_gap: f64,
    pub rs_rel_v: f64,
    /// Distance to the end of the merging region, negative past it.
    pub d_end: f64,
    pub speed: f64,
    pub lane: Lane,
    /// On the ramp inside the merging region, so Merge is legal now.
    pub merge_allowed: bool,
}

/// Normalized observation; field ranges are fixed by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub fc_v: f64,
    pub fc_d: f64,
    pub fs_v: f64,
    pub fs_d: f64,
    pub rs_v: f64,
    pub rs_d: f64,
    pub d_e: f64,
    pub v_x: f64,
    pub l: f64,
}

impl Observation {
    /// Feature order matches the network input layout.
    pub fn features(&self) -> [f64; OBS_DIM] {
        [
            self.fc_v, self.fc_d, self.fs_v, self.fs_d, self.rs_v, self.rs_d, self.d_e, self.v_x,
            self.l,
        ]
    }

    pub fn in_range(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let signed = |v: f64| (-1.0..=1.0).contains(&v);
        signed(self.fc_v)
            && signed(self.fs_v)
            && signed(self.rs_v)
            && signed(self.d_e)
            && unit(self.fc_d)
            && unit(self.fs_d)
            && unit(self.rs_d)
            && unit(self.v_x)
            && (self.l == 0.0 || self.l == 1.0)
    }
}

impl Surroundings {
    /// Neighborhood of `vehicles[ego]` given everyone's current state.
    ///
    /// FC is the nearest vehicle ahead in the own lane. The adjacent lane is
    /// only observed while the vehicle is inside the merging region: FS is
    /// the nearest adjacent vehicle ahead or alongside, RS the nearest one
    /// strictly behind.
    pub fn of(vehicles: &[VehicleState], ego: usize, config: &EnvConfig) -> Surroundings {
        let me = &vehicles[ego];
        let g = &config.geometry;
        let len = g.car_length;
        let observe_side = g.in_merging_region(me.x);

        let mut fc: Option<&VehicleState> = None;
        let mut fs: Option<&VehicleState> = None;
        let mut rs: Option<&VehicleState> = None;
        for (i, other) in vehicles.iter().enumerate() {
            if i == ego {
                continue;
            }
            if other.lane == me.lane {
                let ahead = other.x > me.x || (other.x == me.x && other.id > me.id);
                if ahead && fc.is_none_or(|f| other.x < f.x) {
                    fc = Some(other);
                }
            } else if observe_side {
                if other.x >= me.x {
                    if fs.is_none_or(|f| other.x < f.x) {
                        fs = Some(other);
                    }
                } else if rs.is_none_or(|r| other.x > r.x) {
                    rs = Some(other);
                }
            }
        }

        let ahead = |o: Option<&VehicleState>| match o {
            Some(o) => ((o.x - me.x - len).max(0.0), o.v - me.v),
            None => (f64::INFINITY, config.v_max),
        };
        let (fc_gap, fc_rel_v) = ahead(fc);
        let (fs_gap, fs_rel_v) = ahead(fs);
        let (rs_gap, rs_rel_v) = match rs {
            Some(o) => ((me.x - o.x - len).max(0.0), o.v - me.v),
            None => (f64::INFINITY, -config.v_max),
        };
        Surroundings {
            fc_gap,
            fc_rel_v,
            fs_gap,
            fs_rel_v,
            rs_gap,
            rs_rel_v,
            d_end: g.merge_end_x - me.x,
            speed: me.v,
            lane: me.lane,
            merge_allowed: me.can_merge(g),
        }
    }

    pub fn in_merging_region(&self, config: &EnvConfig) -> bool {
        self.d_end >= 0.0 && self.d_end <= config.geometry.merge_length
    }

    /// Normalizes: gaps / d_far into [0, 1], relative speeds / v_max into
    /// [−1, 1], d_e / merge length into [−1, 1], speed / v_max.
    pub fn normalize(&self, config: &EnvConfig) -> Observation {
        let gap = |d: f64| (d / config.d_far).clamp(0.0, 1.0);
        let rel = |v: f64| (v / config.v_max).clamp(-1.0, 1.0);
        Observation {
            fc_v: rel(self.fc_rel_v),
            fc_d: gap(self.fc_gap),
            fs_v: rel(self.fs_rel_v),
            fs_d: gap(self.fs_gap),
            rs_v: rel(self.rs_rel_v),
            rs_d: gap(self.rs_gap),
            d_e: (self.d_end / config.geometry.merge_length).clamp(-1.0, 1.0),
            v_x: (self.speed / config.v_max).clamp(0.0, 1.0),
            l: self.lane.indicator(),
        }
    }
}

pub fn build_observation(vehicles: &[VehicleState], ego: usize, config: &EnvConfig) -> Observation {
    Surroundings::of(vehicles, ego, config).normalize(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyId;

    fn car(id: u64, x: f64, v: f64, lane: Lane) -> VehicleState {
        VehicleState {
            id,
            x,
            v,
            lane,
            policy: PolicyId::Level0,
        }
    }

    #[test]
    fn lone_vehicle_at_merge_end() {
        let cfg = EnvConfig::default();
        let obs = build_observation(&[car(0, 260.0, 10.0, Lane::Main)], 0, &cfg);
        assert_eq!(obs.d_e, 0.0);
        assert_eq!((obs.fc_d, obs.fc_v), (1.0, 1.0));
        assert_eq!((obs.fs_d, obs.fs_v), (1.0, 1.0));
        assert_eq!((obs.rs_d, obs.rs_v), (1.0, -1.0));
        assert_eq!(obs.l, 1.0);
    }

    #[test]
    fn ramp_vehicle_at_merge_start() {
        let cfg = EnvConfig::default();
        let obs = build_observation(&[car(0, 115.0, 8.0, Lane::Ramp)], 0, &cfg);
        assert_eq!(obs.d_e, 1.0);
        assert_eq!(obs.l, 0.0);
        assert!((obs.v_x - 8.0 / 29.16).abs() < 1e-15);
    }

    #[test]
    fn front_car_normalization() {
        let cfg = EnvConfig::default();
        // Centers 16.5 m apart leave an 11.5 m bumper gap.
        let cars = [car(0, 50.0, 10.0, Lane::Main), car(1, 66.5, 8.0, Lane::Main)];
        let obs = build_observation(&cars, 0, &cfg);
        assert!((obs.fc_d - 0.5).abs() < 1e-15);
        assert!((obs.fc_v - (-2.0 / 29.16)).abs() < 1e-15);
        assert!((obs.fc_v + 0.0686).abs() < 1e-4);
    }

    #[test]
    fn side_neighbors_only_inside_merging_region() {
        let cfg = EnvConfig::default();
        let cars = [
            car(0, 150.0, 8.0, Lane::Ramp),
            car(1, 160.0, 10.0, Lane::Main),
            car(2, 130.0, 12.0, Lane::Main),
            car(3, 100.0, 12.0, Lane::Main),
        ];
        let s = Surroundings::of(&cars, 0, &cfg);
        assert_eq!(s.fs_gap, 5.0);
        assert_eq!(s.fs_rel_v, 2.0);
        assert_eq!(s.rs_gap, 15.0);
        assert_eq!(s.rs_rel_v, 4.0);
        assert!(s.fc_gap.is_infinite());

        // A main-road car before the merging region sees no side lane.
        let early = [car(0, 90.0, 8.0, Lane::Main), car(1, 95.0, 9.0, Lane::Ramp)];
        let s = Surroundings::of(&early, 0, &cfg);
        assert!(s.fs_gap.is_infinite() && s.rs_gap.is_infinite());
    }

    #[test]
    fn overlapping_side_car_counts_as_front_side_with_zero_gap() {
        let cfg = EnvConfig::default();
        let cars = [car(0, 150.0, 8.0, Lane::Ramp), car(1, 150.0, 8.0, Lane::Main)];
        let s = Surroundings::of(&cars, 0, &cfg);
        assert_eq!(s.fs_gap, 0.0);
        assert!(s.rs_gap.is_infinite());
    }

    #[test]
    fn d_e_clips_both_ways() {
        let cfg = EnvConfig::default();
        let start = build_observation(&[car(0, 0.0, 5.0, Lane::Main)], 0, &cfg);
        assert_eq!(start.d_e, 1.0);
        let past = build_observation(&[car(0, 300.0, 5.0, Lane::Main)], 0, &cfg);
        assert!((past.d_e - (-40.0 / 145.0)).abs() < 1e-15);
    }
}
