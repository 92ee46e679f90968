//! Trajectory-file statistics: headway, velocity, acceleration and
//! per-frame population distributions.
//!
//! Input is delimited text with a header row containing at least the
//! columns `vehicle_id,frame,lane,x,v,a` (any order, extra columns ignored;
//! meters, m/s, m/s², frames at 10 Hz). Frames must increase strictly per
//! vehicle in file order.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TraceError};

pub const COLUMNS: [&str; 6] = ["vehicle_id", "frame", "lane", "x", "v", "a"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub vehicle_id: i64,
    pub frame: i64,
    pub lane: i64,
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

pub fn load_trajectories<R: Read>(input: R) -> Result<Vec<TrajectoryRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| TraceError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| TraceError::MissingColumn(name.to_string()))?;
    }

    let mut out = Vec::new();
    let mut last_frame: HashMap<i64, i64> = HashMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| TraceError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            row.get(idx[i]).ok_or_else(|| {
                TraceError::Malformed {
                    line,
                    message: format!("missing `{}` value", COLUMNS[i]),
                }
                .into()
            })
        };
        let int = |i: usize| -> Result<i64> {
            let s = field(i)?;
            s.parse().map_err(|_| {
                TraceError::Malformed {
                    line,
                    message: format!("`{}` is not an integer: {s:?}", COLUMNS[i]),
                }
                .into()
            })
        };
        let real = |i: usize| -> Result<f64> {
            let s = field(i)?;
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(TraceError::Malformed {
                    line,
                    message: format!("`{}` is not a finite number: {s:?}", COLUMNS[i]),
                }
                .into()),
            }
        };
        let rec = TrajectoryRecord {
            vehicle_id: int(0)?,
            frame: int(1)?,
            lane: int(2)?,
            x: real(3)?,
            v: real(4)?,
            a: real(5)?,
        };
        if let Some(&prev) = last_frame.get(&rec.vehicle_id) {
            if rec.frame <= prev {
                return Err(TraceError::NonMonotoneFrame {
                    line,
                    vehicle: rec.vehicle_id,
                    frame: rec.frame,
                    previous: prev,
                }
                .into());
            }
        }
        last_frame.insert(rec.vehicle_id, rec.frame);
        out.push(rec);
    }
    Ok(out)
}

pub fn load_trajectory_file(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    load_trajectories(fs::File::open(path)?)
}

/// Mean and population standard deviation, computed in two passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Moments {
    pub fn of(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let n = samples.len() as f64;
        let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if min == max {
            return Some(Self { count: samples.len(), mean: min, std: 0.0, min, max });
        }
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some(Self {
            count: samples.len(),
            mean,
            std: var.sqrt(),
            min,
            max,
        })
    }
}

/// Equal-width histogram. Samples outside `[lo, hi]` land in the
/// underflow/overflow counters so the total mass equals the sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    /// `range` defaults to the sample range.
    pub fn build(samples: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        let (lo, hi) = match range {
            Some((lo, hi)) if lo < hi => (lo, hi),
            Some(_) => return Err(Error::Config("histogram range must have lo < hi".into())),
            None => match Moments::of(samples) {
                Some(m) if m.min < m.max => (m.min, m.max),
                Some(m) => (m.min - 0.5, m.max + 0.5),
                None => (0.0, 1.0),
            },
        };
        let mut h = Self {
            lo,
            hi,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        };
        let width = (hi - lo) / bins as f64;
        for &x in samples {
            if x < lo {
                h.underflow += 1;
            } else if x > hi {
                h.overflow += 1;
            } else {
                let b = (((x - lo) / width) as usize).min(bins - 1);
                h.counts[b] += 1;
            }
        }
        Ok(h)
    }

    pub fn mass(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + i as f64 * w, self.lo + (i + 1) as f64 * w)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lo,hi,count\n");
        if self.underflow > 0 {
            s += &format!("-inf,{},{}\n", self.lo, self.underflow);
        }
        for (i, c) in self.counts.iter().enumerate() {
            let (a, b) = self.bin_edges(i);
            s += &format!("{a},{b},{c}\n");
        }
        if self.overflow > 0 {
            s += &format!("{},inf,{}\n", self.hi, self.overflow);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub samples: Vec<f64>,
    pub moments: Option<Moments>,
    pub histogram: Histogram,
}

impl Distribution {
    pub fn from_samples(samples: Vec<f64>, bins: usize, range: Option<(f64, f64)>) -> Result<Self> {
        Ok(Self {
            moments: Moments::of(&samples),
            histogram: Histogram::build(&samples, bins, range)?,
            samples,
        })
    }
}

fn selected<'a>(
    records: &'a [TrajectoryRecord],
    lanes: Option<&'a [i64]>,
) -> impl Iterator<Item = &'a TrajectoryRecord> + 'a {
    records
        .iter()
        .filter(move |r| lanes.is_none_or(|l| l.contains(&r.lane)))
}

/// Bumper-to-bumper gaps to the nearest same-lane vehicle ahead, per frame.
pub fn headway_samples(records: &[TrajectoryRecord], lanes: Option<&[i64]>, car_length: f64) -> Vec<f64> {
    let mut groups: BTreeMap<(i64, i64), Vec<(f64, i64)>> = BTreeMap::new();
    for r in selected(records, lanes) {
        groups.entry((r.frame, r.lane)).or_default().push((r.x, r.vehicle_id));
    }
    let mut out = Vec::new();
    for cars in groups.values_mut() {
        cars.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(cars.windows(2).map(|w| w[1].0 - w[0].0 - car_length));
    }
    out
}

pub fn velocity_samples(records: &[TrajectoryRecord], lanes: Option<&[i64]>) -> Vec<f64> {
    selected(records, lanes).map(|r| r.v).collect()
}

pub fn acceleration_samples(records: &[TrajectoryRecord], lanes: Option<&[i64]>) -> Vec<f64> {
    selected(records, lanes).map(|r| r.a).collect()
}

/// Vehicles present in each frame (restricted to `lanes`).
pub fn population_counts(records: &[TrajectoryRecord], lanes: Option<&[i64]>) -> BTreeMap<i64, usize> {
    let mut per_frame: BTreeMap<i64, usize> = BTreeMap::new();
    for r in selected(records, lanes) {
        *per_frame.entry(r.frame).or_default() += 1;
    }
    per_frame
}

/// How many frames had each vehicle count.
pub fn population_histogram(records: &[TrajectoryRecord], lanes: Option<&[i64]>) -> BTreeMap<usize, u64> {
    let mut h = BTreeMap::new();
    for n in population_counts(records, lanes).into_values() {
        *h.entry(n).or_default() += 1;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsOptions {
    pub bins: usize,
    pub car_length: f64,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            bins: 30,
            car_length: 5.0,
        }
    }
}

/// All distributions for one lane scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneReport {
    pub scope: String,
    pub lanes: Option<Vec<i64>>,
    pub headway: Distribution,
    pub velocity: Distribution,
    pub acceleration: Distribution,
    pub population: BTreeMap<usize, u64>,
    pub population_moments: Option<Moments>,
}

pub fn lane_report(
    records: &[TrajectoryRecord],
    scope: &str,
    lanes: Option<&[i64]>,
    opts: &StatsOptions,
) -> Result<LaneReport> {
    let counts: Vec<f64> = population_counts(records, lanes)
        .into_values()
        .map(|n| n as f64)
        .collect();
    Ok(LaneReport {
        scope: scope.to_string(),
        lanes: lanes.map(<[i64]>::to_vec),
        headway: Distribution::from_samples(headway_samples(records, lanes, opts.car_length), opts.bins, None)?,
        velocity: Distribution::from_samples(velocity_samples(records, lanes), opts.bins, None)?,
        acceleration: Distribution::from_samples(acceleration_samples(records, lanes), opts.bins, None)?,
        population: population_histogram(records, lanes),
        population_moments: Moments::of(&counts),
    })
}

/// Environment parameters suggested by a report: v_nom from the mean
/// speed, (d_close, d_nom, d_far) from headway mean ∓ one standard deviation.
pub fn suggest_env_fragment(report: &LaneReport) -> Option<String> {
    let h = report.headway.moments?;
    let v = report.velocity.moments?;
    Some(format!(
        "[env]\nv_nom = {:.2}\nd_close = {:.2}\nd_nom = {:.2}\nd_far = {:.2}\n",
        v.mean,
        (h.mean - h.std).max(0.0),
        h.mean,
        h.mean + h.std
    ))
}

#[derive(Serialize)]
struct MomentsFile<'a> {
    scope: &'a str,
    lanes: &'a Option<Vec<i64>>,
    headway: Option<Moments>,
    velocity: Option<Moments>,
    acceleration: Option<Moments>,
    population: Option<Moments>,
    population_histogram: &'a BTreeMap<usize, u64>,
}

/// Writes `<scope>_{headway,velocity,acceleration,population}.csv` and
/// `<scope>_moments.json` into `dir`.
pub fn write_lane_report(report: &LaneReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, d) in [
        ("headway", &report.headway),
        ("velocity", &report.velocity),
        ("acceleration", &report.acceleration),
    ] {
        let p = dir.join(format!("{}_{name}.csv", report.scope));
        fs::write(&p, d.histogram.to_csv())?;
        written.push(p);
    }
    let p = dir.join(format!("{}_population.csv", report.scope));
    let mut s = String::from("vehicles,frames\n");
    for (n, f) in &report.population {
        s += &format!("{n},{f}\n");
    }
    fs::write(&p, s)?;
    written.push(p);
    let p = dir.join(format!("{}_moments.json", report.scope));
    let m = MomentsFile {
        scope: &report.scope,
        lanes: &report.lanes,
        headway: report.headway.moments,
        velocity: report.velocity.moments,
        acceleration: report.acceleration.moments,
        population: report.population_moments,
        population_histogram: &report.population,
    };
    fs::write(&p, serde_json::to_vec_pretty(&m)?)?;
    written.push(p);
    Ok(written)
}
