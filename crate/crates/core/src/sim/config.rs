use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Road layout along the longitudinal axis, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoadGeometry {
    pub main_road_length: f64,
    /// Where ramp vehicles enter (and where a ramp ego starts).
    pub ramp_start_x: f64,
    pub merge_start_x: f64,
    pub merge_end_x: f64,
    pub post_merge_length: f64,
    pub merge_length: f64,
    pub lane_width: f64,
    pub car_length: f64,
    pub car_width: f64,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        Self {
            main_road_length: 305.0,
            ramp_start_x: 75.0,
            merge_start_x: 115.0,
            merge_end_x: 260.0,
            post_merge_length: 45.0,
            merge_length: 145.0,
            lane_width: 3.7,
            car_length: 5.0,
            car_width: 2.0,
        }
    }
}

impl RoadGeometry {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            self.main_road_length,
            self.merge_length,
            self.post_merge_length,
            self.lane_width,
            self.car_length,
            self.car_width,
        ];
        if lengths.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::Config("road lengths must be finite and positive".into()));
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        if !close(self.merge_end_x - self.merge_start_x, self.merge_length) {
            return Err(Error::Config("merge_end_x - merge_start_x must equal merge_length".into()));
        }
        if !close(self.merge_end_x + self.post_merge_length, self.main_road_length) {
            return Err(Error::Config(
                "merge_end_x + post_merge_length must equal main_road_length".into(),
            ));
        }
        if !(0.0 <= self.ramp_start_x && self.ramp_start_x <= self.merge_start_x) {
            return Err(Error::Config("ramp must start before the merging region".into()));
        }
        Ok(())
    }

    pub fn in_merging_region(&self, x: f64) -> bool {
        self.merge_start_x <= x && x <= self.merge_end_x
    }
}

/// Weights of the six reward terms (collision, headway, velocity, effort,
/// not-merging, stopping).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub collision: f64,
    pub headway: f64,
    pub velocity: f64,
    pub effort: f64,
    pub not_merging: f64,
    pub stopping: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            collision: 100.0,
            headway: 1.0,
            velocity: 1.0,
            effort: 0.5,
            not_merging: 0.5,
            stopping: 1.0,
        }
    }
}

impl RewardWeights {
    pub fn as_array(&self) -> [f64; 6] {
        [
            self.collision,
            self.headway,
            self.velocity,
            self.effort,
            self.not_merging,
            self.stopping,
        ]
    }
}

/// Environment parameters. Distances in meters, speeds in m/s, times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub geometry: RoadGeometry,
    /// Population including the ego vehicle.
    pub n_vehicles: usize,
    pub dt: f64,
    pub v_nom: f64,
    pub v_max: f64,
    pub d_close: f64,
    pub d_nom: f64,
    pub d_far: f64,
    pub max_ramp_cars: usize,
    pub respawn_prob: f64,
    pub main_lane_prob: f64,
    /// Minimum center-to-center distance between same-lane vehicles at placement.
    pub min_spacing: f64,
    /// Initial speeds outside the merging region are U(v_nom − spread, v_nom + spread).
    pub init_speed_spread: f64,
    /// Closest allowed placement to the end of the merging region.
    pub ramp_standoff: f64,
    pub max_steps: usize,
    /// When false, Maintain realizes exactly zero acceleration.
    pub maintain_noise: bool,
    pub reward_weights: RewardWeights,
    pub rng_seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            geometry: RoadGeometry::default(),
            n_vehicles: 4,
            dt: 0.5,
            v_nom: 9.78,
            v_max: 29.16,
            d_close: 3.0,
            d_nom: 13.0,
            d_far: 23.0,
            max_ramp_cars: 7,
            respawn_prob: 0.7,
            main_lane_prob: 0.7,
            min_spacing: 10.0,
            init_speed_spread: 2.0,
            ramp_standoff: 23.0,
            max_steps: 200,
            maintain_noise: true,
            reward_weights: RewardWeights::default(),
            rng_seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.n_vehicles == 0 {
            return Err(Error::Config("n_vehicles must include the ego".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        if !(0.0 < self.d_close && self.d_close < self.d_nom && self.d_nom < self.d_far) {
            return Err(Error::Config("need 0 < d_close < d_nom < d_far".into()));
        }
        if !(0.0 < self.v_nom && self.v_nom < self.v_max) {
            return Err(Error::Config("need 0 < v_nom < v_max".into()));
        }
        for (name, p) in [
            ("respawn_prob", self.respawn_prob),
            ("main_lane_prob", self.main_lane_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.max_ramp_cars == 0 || self.max_steps == 0 {
            return Err(Error::Config("max_ramp_cars and max_steps must be positive".into()));
        }
        if !(self.min_spacing >= self.geometry.car_length) {
            return Err(Error::Config("min_spacing must be at least one car length".into()));
        }
        if self.reward_weights.as_array().iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("reward weights must be finite".into()));
        }
        let g = &self.geometry;
        if g.merge_end_x - self.ramp_standoff < g.ramp_start_x {
            return Err(Error::Config("ramp standoff leaves no room on the ramp".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        EnvConfig::default().validate().unwrap();
        let w = RewardWeights::default().as_array();
        assert!(w[1..].iter().all(|x| x.abs() < w[0].abs()));
    }

    #[test]
    fn rejects_unordered_headway_parameters() {
        // The (3, 23, 13) ordering makes the third headway branch empty.
        let cfg = EnvConfig {
            d_nom: 23.0,
            d_far: 13.0,
            ..EnvConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_inconsistent_geometry() {
        let cfg = EnvConfig {
            geometry: RoadGeometry {
                merge_length: 100.0,
                ..RoadGeometry::default()
            },
            ..EnvConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn partial_toml_falls_back_to_defaults() {
        let cfg: EnvConfig = toml::from_str("n_vehicles = 12\ndt = 0.25\n").unwrap();
        assert_eq!(cfg.n_vehicles, 12);
        assert_eq!(cfg.dt, 0.25);
        assert_eq!(cfg.geometry, RoadGeometry::default());
    }
}
