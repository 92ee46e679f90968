//! Per-step episode traces (one JSON object per line) and a replay verifier
//! that recomputes every transition from the recorded accelerations.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::action::DriveAction;
use super::config::EnvConfig;
use super::env::{EpisodeEnd, StepOutcome, Transition};
use super::reward::RewardTerms;
use super::vehicle::{step_kinematics, VehicleState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: u64,
    /// 1-based index of the step this record closes.
    pub step: usize,
    /// Simulated time at the end of the step, s.
    pub time: f64,
    /// Reasoning level the dynamic ego picked for this step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
    pub reward: f64,
    pub terms: RewardTerms,
    pub done: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<EpisodeEnd>,
    /// Vehicle states at the start of the step.
    pub before: Vec<VehicleState>,
    /// What each of those vehicles did and where it ended up.
    pub vehicles: Vec<Transition>,
    pub spawned: Vec<VehicleState>,
}

impl StepRecord {
    pub fn new(
        episode: u64,
        step: usize,
        time: f64,
        level: Option<u8>,
        before: Vec<VehicleState>,
        outcome: &StepOutcome,
    ) -> Self {
        Self {
            episode,
            step,
            time,
            level,
            reward: outcome.reward,
            terms: outcome.terms,
            done: outcome.done,
            end: outcome.end,
            before,
            vehicles: outcome.transitions.clone(),
            spawned: outcome.spawned.clone(),
        }
    }
}

pub fn write_record<W: Write>(out: &mut W, record: &StepRecord) -> Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<StepRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

/// Checks a trace against the vehicle model: every post-step position and
/// speed must equal the kinematics (or merge) applied to the recorded
/// pre-step state and acceleration, bit for bit, and each step must start
/// where the previous one left off.
pub fn verify_replay(records: &[StepRecord], config: &EnvConfig) -> Result<()> {
    let fail = |r: &StepRecord, msg: String| {
        Err(Error::Contract(format!("episode {} step {}: {msg}", r.episode, r.step)))
    };
    for (i, r) in records.iter().enumerate() {
        if r.before.len() != r.vehicles.len() {
            return fail(r, "vehicle count changed inside a step".into());
        }
        for (b, t) in r.before.iter().zip(&r.vehicles) {
            if b.id != t.id {
                return fail(r, format!("vehicle order differs ({} vs {})", b.id, t.id));
            }
            let expected = if t.action == DriveAction::Merge {
                b.merged(config)?
            } else {
                let (x, v) = step_kinematics(b.x, b.v, t.accel, config.dt, config.v_max);
                VehicleState { x, v, ..*b }
            };
            if (expected.x, expected.v, expected.lane) != (t.x, t.v, t.lane) {
                return fail(
                    r,
                    format!(
                        "vehicle {} recorded ({}, {}, {:?}), model gives ({}, {}, {:?})",
                        t.id, t.x, t.v, t.lane, expected.x, expected.v, expected.lane
                    ),
                );
            }
        }
        if let Some(next) = records.get(i + 1) {
            if next.episode != r.episode || r.done {
                continue;
            }
            let carried: Vec<VehicleState> = r
                .vehicles
                .iter()
                .zip(&r.before)
                .filter(|(t, _)| !t.removed)
                .map(|(t, b)| VehicleState {
                    x: t.x,
                    v: t.v,
                    lane: t.lane,
                    ..*b
                })
                .chain(r.spawned.iter().copied())
                .collect();
            if carried != next.before {
                return fail(next, "start state does not continue the previous step".into());
            }
        }
    }
    Ok(())
}
