use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of Q-network outputs of a level-k driver.
pub const N_DRIVE_SLOTS: usize = 5;

/// Network output slot that means Hard-Accelerate on the main road and
/// Merge on the ramp.
pub const GO_SLOT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DriveAction {
    Maintain,
    Accelerate,
    Decelerate,
    HardAccelerate,
    HardDecelerate,
    Merge,
}

impl DriveAction {
    pub const LONGITUDINAL: [DriveAction; 5] = [
        DriveAction::Maintain,
        DriveAction::Accelerate,
        DriveAction::Decelerate,
        DriveAction::HardAccelerate,
        DriveAction::HardDecelerate,
    ];

    /// Decodes a network output slot. Slot 3 becomes Merge when the vehicle
    /// may merge right now, Hard-Accelerate otherwise.
    pub fn from_slot(slot: usize, merge_allowed: bool) -> Result<Self> {
        match slot {
            GO_SLOT if merge_allowed => Ok(DriveAction::Merge),
            s if s < N_DRIVE_SLOTS => Ok(Self::LONGITUDINAL[s]),
            s => Err(Error::contract(format!("drive slot {s} out of range"))),
        }
    }

    /// Inverse of [`DriveAction::from_slot`].
    pub fn slot(self) -> usize {
        match self {
            DriveAction::Maintain => 0,
            DriveAction::Accelerate => 1,
            DriveAction::Decelerate => 2,
            DriveAction::HardAccelerate | DriveAction::Merge => GO_SLOT,
            DriveAction::HardDecelerate => 4,
        }
    }

    /// Admissible acceleration interval in m/s², `None` for Merge.
    pub fn accel_interval(self) -> Option<(f64, f64)> {
        match self {
            DriveAction::Maintain => Some((-0.25, 0.25)),
            DriveAction::Accelerate => Some((0.25, 2.0)),
            DriveAction::Decelerate => Some((-2.0, -0.25)),
            DriveAction::HardAccelerate => Some((2.0, 3.0)),
            DriveAction::HardDecelerate => Some((-4.5, -2.0)),
            DriveAction::Merge => None,
        }
    }
}

/// Rate of the exponential noise on the non-maintain actions.
pub const EXP_RATE: f64 = 0.75;
/// Scale of the Laplace noise on Maintain.
pub const LAPLACE_SCALE: f64 = 0.1;

/// Draws the realized acceleration for a longitudinal action.
///
/// Maintain is Laplace(0, 0.1); the others start at the edge of their
/// interval nearest zero and extend outward by an Exponential(0.75) draw.
/// A single draw is clipped into the action's interval.
pub fn sample_acceleration<R: Rng + ?Sized>(action: DriveAction, rng: &mut R) -> Result<f64> {
    let (lo, hi) = action
        .accel_interval()
        .ok_or_else(|| Error::contract("Merge has no longitudinal acceleration"))?;
    let exp = Exp::new(EXP_RATE).expect("positive rate");
    let a = match action {
        DriveAction::Maintain => sample_laplace(0.0, LAPLACE_SCALE, rng),
        DriveAction::Accelerate | DriveAction::HardAccelerate => lo + exp.sample(rng),
        DriveAction::Decelerate | DriveAction::HardDecelerate => hi - exp.sample(rng),
        DriveAction::Merge => unreachable!(),
    };
    Ok(a.clamp(lo, hi))
}

fn sample_laplace<R: Rng + ?Sized>(mu: f64, b: f64, rng: &mut R) -> f64 {
    // Inverse CDF on u ∈ (−½, ½).
    let u: f64 = rng.random::<f64>() - 0.5;
    mu - b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}
