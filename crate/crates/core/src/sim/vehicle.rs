use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{EnvConfig, RoadGeometry};
use crate::error::{Error, Result};
use crate::policy::PolicyId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lane {
    Ramp = 0,
    Main = 1,
}

impl Lane {
    pub fn indicator(self) -> f64 {
        match self {
            Lane::Ramp => 0.0,
            Lane::Main => 1.0,
        }
    }

    pub fn other(self) -> Lane {
        match self {
            Lane::Ramp => Lane::Main,
            Lane::Main => Lane::Ramp,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Lane::Ramp => "ramp",
            Lane::Main => "main road",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u64,
    /// Longitudinal position of the vehicle center, m.
    pub x: f64,
    /// Longitudinal speed, m/s, in [0, v_max].
    pub v: f64,
    pub lane: Lane,
    pub policy: PolicyId,
}

/// One step of the point-mass model:
/// x' = x + v·dt + ½·a·dt², v' = clamp(v + a·dt, 0, v_max).
/// A vehicle that would reverse stops where its speed reaches zero.
pub fn step_kinematics(x: f64, v: f64, a: f64, dt: f64, v_max: f64) -> (f64, f64) {
    let v_next = v + a * dt;
    if v_next < 0.0 {
        // a < 0 here; stop after v / |a| seconds.
        return (x - v * v / (2.0 * a), 0.0);
    }
    (x + v * dt + 0.5 * a * dt * dt, v_next.min(v_max))
}

impl VehicleState {
    pub fn stepped(&self, a: f64, config: &EnvConfig) -> VehicleState {
        let (x, v) = step_kinematics(self.x, self.v, a, config.dt, config.v_max);
        VehicleState { x, v, ..*self }
    }

    pub fn can_merge(&self, geometry: &RoadGeometry) -> bool {
        self.lane == Lane::Ramp && geometry.in_merging_region(self.x)
    }

    /// One-step lane change onto the main road, coasting at a = 0.
    pub fn merged(&self, config: &EnvConfig) -> Result<VehicleState> {
        if self.lane != Lane::Ramp {
            return Err(Error::contract(format!("vehicle {} cannot merge from the main road", self.id)));
        }
        if !config.geometry.in_merging_region(self.x) {
            return Err(Error::contract(format!(
                "vehicle {} at x = {} is outside the merging region",
                self.id, self.x
            )));
        }
        Ok(VehicleState {
            lane: Lane::Main,
            ..self.stepped(0.0, config)
        })
    }
}

/// Speed profile for ramp vehicles placed inside the merging region:
/// v = v_nom·(0.5 + 0.5·(x_end − x0)/(x_end − x_start)) + z, floored at 0.
pub fn ramp_velocity_profile(x0: f64, z: f64, geometry: &RoadGeometry, v_nom: f64) -> f64 {
    let frac = (geometry.merge_end_x - x0) / (geometry.merge_end_x - geometry.merge_start_x);
    (v_nom * (0.5 + 0.5 * frac) + z).max(0.0)
}

/// Initial speed of a ramp vehicle placed at `x0` inside the merging region,
/// with z ~ U(−2, 2).
pub fn initial_ramp_velocity<R: Rng + ?Sized>(x0: f64, config: &EnvConfig, rng: &mut R) -> Result<f64> {
    let g = &config.geometry;
    let hi = g.merge_end_x - config.ramp_standoff;
    if !(g.merge_start_x <= x0 && x0 <= hi) {
        return Err(Error::contract(format!(
            "ramp placement x = {x0} outside [{}, {hi}]",
            g.merge_start_x
        )));
    }
    let z = rng.random_range(-config.init_speed_spread..=config.init_speed_spread);
    Ok(ramp_velocity_profile(x0, z, g, config.v_nom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;

    fn car(x: f64, v: f64, lane: Lane) -> VehicleState {
        VehicleState {
            id: 1,
            x,
            v,
            lane,
            policy: PolicyId::Level0,
        }
    }

    #[test]
    fn kinematics_fixtures() {
        assert_eq!(step_kinematics(0.0, 0.0, 0.0, 0.5, 29.16), (0.0, 0.0));
        let (x, v) = step_kinematics(100.0, 10.0, 2.0, 0.5, 29.16);
        assert!((x - 105.25).abs() < 1e-12 && (v - 11.0).abs() < 1e-12);
        let (x, v) = step_kinematics(50.0, 9.78, 0.0, 0.5, 29.16);
        assert!((x - 54.89).abs() < 1e-12 && v == 9.78);
    }

    #[test]
    fn braking_to_a_stop_does_not_reverse() {
        // v = 1, a = −4: stops after 0.25 s having covered 0.125 m.
        let (x, v) = step_kinematics(10.0, 1.0, -4.0, 0.5, 29.16);
        assert_eq!(v, 0.0);
        assert!((x - 10.125).abs() < 1e-12);
        assert_eq!(step_kinematics(10.0, 0.0, -3.0, 0.5, 29.16), (10.0, 0.0));
    }

    #[test]
    fn merge_fixture_and_preconditions() {
        let cfg = EnvConfig::default();
        let m = car(150.0, 8.0, Lane::Ramp).merged(&cfg).unwrap();
        assert_eq!((m.lane, m.x, m.v), (Lane::Main, 154.0, 8.0));
        assert!(car(150.0, 8.0, Lane::Main).merged(&cfg).is_err());
        assert!(car(100.0, 8.0, Lane::Ramp).merged(&cfg).is_err());
    }

    #[test]
    fn ramp_velocity_boundaries() {
        let g = RoadGeometry::default();
        assert!((ramp_velocity_profile(115.0, 0.0, &g, 9.78) - 9.78).abs() < 1e-12);
        assert!((ramp_velocity_profile(260.0, 0.0, &g, 9.78) - 4.89).abs() < 1e-12);
        assert!((ramp_velocity_profile(187.5, 2.0, &g, 9.78) - 9.335).abs() < 1e-12);
        assert_eq!(ramp_velocity_profile(260.0, -100.0, &g, 9.78), 0.0);
    }

    #[test]
    fn initial_ramp_velocity_checks_band() {
        let cfg = EnvConfig::default();
        let mut rng = substream(0, "v", 0);
        assert!(initial_ramp_velocity(250.0, &cfg, &mut rng).is_err());
        assert!(initial_ramp_velocity(100.0, &cfg, &mut rng).is_err());
        for _ in 0..1000 {
            let v = initial_ramp_velocity(200.0, &cfg, &mut rng).unwrap();
            let base = ramp_velocity_profile(200.0, 0.0, &cfg.geometry, cfg.v_nom);
            assert!((v - base).abs() <= 2.0 + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn speed_stays_in_bounds(
            x in -10.0f64..400.0,
            v in 0.0f64..29.16,
            a in -4.5f64..3.0,
        ) {
            let (x2, v2) = step_kinematics(x, v, a, 0.5, 29.16);
            prop_assert!((0.0..=29.16).contains(&v2));
            prop_assert!(x2 >= x);
        }
    }
}
