//! HMD mobility traces: ingestion, resampling, decomposition, angular speed
//! and synthetic generation.

mod io;
mod synth;

pub use io::{parse_trace, scan_trace, write_meta_json, write_trace_csv, ScanReport, SchemaOptions, TimeUnit};
pub use synth::{synth_trace, Pattern, SynthSpec};

use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::geometry::{angular_distance, wrap_deg, Orientation, Position, EULER_CONVENTION};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    /// Seconds.
    pub t: f64,
    pub position: Position<f64>,
    pub orientation: Orientation<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    Recorded,
    Synthetic,
    Decomposed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub participant: String,
    pub source: TraceSource,
    pub nominal_rate_hz: f64,
    pub convention: String,
    /// Rows dropped because their timestamp repeated the previous row.
    pub duplicates_dropped: usize,
}

impl TraceMeta {
    pub fn new(participant: impl Into<String>, source: TraceSource, nominal_rate_hz: f64) -> Self {
        Self {
            participant: participant.into(),
            source,
            nominal_rate_hz,
            convention: EULER_CONVENTION.to_string(),
            duplicates_dropped: 0,
        }
    }
}

/// Axis-aligned box positions must stay inside (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for BoundingBox {
    /// 5 m × 5 m play area, head no higher than 3 m.
    fn default() -> Self {
        Self {
            min: [0.0, 0.0, 0.0],
            max: [5.0, 5.0, 3.0],
        }
    }
}

impl BoundingBox {
    /// Name, value and allowed range of the first violated axis.
    pub fn violation(&self, p: &Position<f64>) -> Option<(&'static str, f64, String)> {
        let axes = [("x", p.x), ("y", p.y), ("z", p.z)];
        axes.iter().enumerate().find_map(|(i, &(name, v))| {
            (!(v >= self.min[i] && v <= self.max[i]))
                .then(|| (name, v, format!("[{}, {}]", self.min[i], self.max[i])))
        })
    }
}

/// Validated trace: at least two samples with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    samples: Vec<PoseSample>,
    pub meta: TraceMeta,
}

impl MobilityTrace {
    pub fn new(samples: Vec<PoseSample>, meta: TraceMeta) -> Result<Self, TraceError> {
        if samples.len() < 2 {
            return Err(TraceError::EmptyTrace);
        }
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(TraceError::Monotonicity {
                    row: i + 1,
                    previous: w[0].t,
                    t: w[1].t,
                });
            }
        }
        if let Some(bad) = samples.iter().position(|s| !(s.t.is_finite() && s.t >= 0.0)) {
            return Err(TraceError::Range {
                row: bad,
                field: "time",
                value: samples[bad].t,
                allowed: "[0, inf)".into(),
            });
        }
        Ok(Self { samples, meta })
    }

    pub fn samples(&self) -> &[PoseSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }

    /// Mean sampling rate from the span and count.
    pub fn mean_rate_hz(&self) -> f64 {
        (self.samples.len() - 1) as f64 / self.duration()
    }

    pub fn check_bounds(&self, bounds: &BoundingBox) -> Result<(), TraceError> {
        for (row, s) in self.samples.iter().enumerate() {
            if let Some((field, value, allowed)) = bounds.violation(&s.position) {
                return Err(TraceError::Range {
                    row,
                    field,
                    value,
                    allowed,
                });
            }
        }
        Ok(())
    }
}

/// Resamples onto `t0 + k / target_rate` for every grid point inside the
/// original span. Positions are interpolated linearly, orientations along the
/// shortest rotational arc.
pub fn resample(trace: &MobilityTrace, target_rate: f64) -> Result<MobilityTrace, TraceError> {
    if !(target_rate.is_finite() && target_rate > 0.0) {
        return Err(TraceError::BadArgument(format!(
            "target rate must be positive, got {target_rate}"
        )));
    }
    let src = trace.samples();
    if src.len() < 2 {
        return Err(TraceError::EmptyTrace);
    }
    let t0 = trace.start();
    let steps = (trace.duration() * target_rate + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut seg = 0;
    for k in 0..=steps {
        let t = t0 + k as f64 / target_rate;
        while seg + 2 < src.len() && src[seg + 1].t <= t {
            seg += 1;
        }
        let (a, b) = (&src[seg], &src[seg + 1]);
        let f = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let sample = if f == 0.0 {
            PoseSample { t, ..*a }
        } else if f == 1.0 {
            PoseSample { t, ..*b }
        } else {
            let rot = a.orientation.to_rotation().slerp(&b.orientation.to_rotation(), f);
            PoseSample {
                t,
                position: a.position.lerp(&b.position, f),
                orientation: rot.to_orientation(),
            }
        };
        out.push(sample);
    }
    let mut meta = trace.meta.clone();
    meta.nominal_rate_hz = target_rate;
    MobilityTrace::new(out, meta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecomposeMode {
    /// Keep positions, freeze orientation at the first sample.
    LateralOnly,
    /// Keep orientations, freeze position at the first sample.
    AngularOnly,
}

impl DecomposeMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DecomposeMode::LateralOnly => "lateral_only",
            DecomposeMode::AngularOnly => "angular_only",
        }
    }
}

pub fn decompose(trace: &MobilityTrace, mode: DecomposeMode) -> Result<MobilityTrace, TraceError> {
    let first = *trace.samples().first().ok_or(TraceError::EmptyTrace)?;
    let samples = trace
        .samples()
        .iter()
        .map(|s| match mode {
            DecomposeMode::LateralOnly => PoseSample {
                orientation: first.orientation,
                ..*s
            },
            DecomposeMode::AngularOnly => PoseSample {
                position: first.position,
                ..*s
            },
        })
        .collect();
    let mut meta = trace.meta.clone();
    meta.source = TraceSource::Decomposed;
    MobilityTrace::new(samples, meta)
}

/// Angular speed (deg/s) between consecutive samples, stamped at the interval
/// midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularSpeedSeries {
    pub points: Vec<(f64, f64)>,
}

impl AngularSpeedSeries {
    pub fn speeds(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Geodesic rotation rate between consecutive samples.
pub fn angular_speed(trace: &MobilityTrace) -> Result<AngularSpeedSeries, TraceError> {
    let s = trace.samples();
    if s.len() < 2 {
        return Err(TraceError::EmptyTrace);
    }
    let rotations: Vec<_> = s.iter().map(|p| p.orientation.to_rotation()).collect();
    let mut points = Vec::with_capacity(s.len() - 1);
    for i in 0..s.len() - 1 {
        let dt = s[i + 1].t - s[i].t;
        if !(dt > 0.0) {
            return Err(TraceError::DegenerateTimestep { index: i });
        }
        let deg = angular_distance(&rotations[i], &rotations[i + 1]);
        points.push((0.5 * (s[i].t + s[i + 1].t), deg / dt));
    }
    Ok(AngularSpeedSeries { points })
}

/// Per-axis Euler rates (yaw, pitch, roll) in deg/s with wrap-aware
/// differences. Diagnostic only: it misbehaves near pitch = ±90°.
pub fn per_axis_rates(trace: &MobilityTrace) -> Vec<(f64, [f64; 3])> {
    trace
        .samples()
        .windows(2)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            let (a, b) = (w[0].orientation, w[1].orientation);
            (
                0.5 * (w[0].t + w[1].t),
                [
                    wrap_deg(b.yaw() - a.yaw()) / dt,
                    (b.pitch() - a.pitch()) / dt,
                    wrap_deg(b.roll() - a.roll()) / dt,
                ],
            )
        })
        .collect()
}
