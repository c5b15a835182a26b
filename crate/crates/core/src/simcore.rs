//! One simulation run: trace × scene × codebooks × schedule × link, ticked
//! at a fixed clock, producing per-tick records and exact aggregates.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beammgmt::{misalignment_at, sweep, BeamManager, BeamSchedule, Endpoint, SweepEvent};
use crate::error::SimError;
use crate::geometry::{Orientation, Position, EULER_CONVENTION};
use crate::link::{budget, path_loss, LinkConfig, Shadowing};
use crate::mobility::{angular_speed, resample, BoundingBox, MobilityTrace};
use crate::phasedarray::{build_codebook, Codebook, ElementPattern, Fov, PhasedArray, DEFAULT_SECTOR_GRID};

/// Placement of the access node and of the array on the headset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scene {
    pub an_position: Position<f64>,
    /// Orientation of the access-node array; pitch -90 faces the floor.
    pub an_orientation: Orientation<f64>,
    /// Orientation of the headset array relative to the headset frame.
    pub ue_mount: Orientation<f64>,
    pub bounds: BoundingBox,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            an_position: Position::new(2.5, 2.5, 5.0),
            an_orientation: Orientation::new(0.0, -90.0, 0.0).expect("in range"),
            ue_mount: Orientation::new(0.0, 45.0, 0.0).expect("in range"),
            bounds: BoundingBox::default(),
        }
    }
}

impl Scene {
    pub fn validate(&self) -> Result<(), SimError> {
        let p = self.an_position;
        if !(p.is_valid() && p.z > 0.0) {
            return Err(SimError::Config(format!(
                "access node position {p:?} must be finite and above the floor"
            )));
        }
        Ok(())
    }
}

/// Array geometry plus the codebook layout built on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArraySpec {
    pub n_az: usize,
    pub n_el: usize,
    pub spacing: f64,
    pub element: ElementPattern<f64>,
    pub fov: Fov<f64>,
    pub sector_grid: [usize; 2],
}

impl Default for ArraySpec {
    fn default() -> Self {
        Self::square(8)
    }
}

impl ArraySpec {
    pub fn square(n: usize) -> Self {
        Self {
            n_az: n,
            n_el: n,
            spacing: 0.5,
            element: ElementPattern::default(),
            fov: Fov::default(),
            sector_grid: [DEFAULT_SECTOR_GRID.0, DEFAULT_SECTOR_GRID.1],
        }
    }

    pub fn label(&self) -> String {
        format!("{}x{}", self.n_az, self.n_el)
    }

    pub fn build(&self) -> Result<Codebook<f64>, SimError> {
        let a = PhasedArray::with_element(self.n_az, self.n_el, self.spacing, self.element)?;
        Ok(build_codebook(&a, self.fov, (self.sector_grid[0], self.sector_grid[1]))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub ue_array: ArraySpec,
    pub an_array: ArraySpec,
    pub schedule: BeamSchedule,
    pub link: LinkConfig<f64>,
    pub tick_hz: f64,
    /// Seeds the optional shadowing process.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ue_array: ArraySpec::square(8),
            an_array: ArraySpec::square(64),
            schedule: BeamSchedule::default(),
            link: LinkConfig::default(),
            tick_hz: 1000.0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.link.validate()?;
        self.schedule.validate()?;
        if !(self.tick_hz.is_finite() && self.tick_hz > 0.0) {
            return Err(SimError::Config(format!("tick_hz must be positive, got {}", self.tick_hz)));
        }
        self.schedule.ticks_per_interval(self.tick_hz)?;
        Ok(())
    }
}

/// One tick of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub tick: u64,
    /// Trace timestamp of the pose used for this tick.
    pub t: f64,
    pub ue_misalign_deg: f64,
    pub an_misalign_deg: f64,
    pub snr_db: f64,
    pub outage: bool,
    pub aligning: bool,
    pub blanked: bool,
    pub ue_beam: usize,
    pub an_beam: usize,
    pub angular_speed_deg_s: f64,
    pub distance_m: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: f64,
    pub eirp_dbm: f64,
    pub below_sensitivity: bool,
}

pub const RECORD_COLUMNS: [&str; 16] = [
    "tick",
    "t",
    "ue_misalign_deg",
    "an_misalign_deg",
    "snr_db",
    "outage",
    "aligning",
    "blanked",
    "ue_beam",
    "an_beam",
    "angular_speed_deg_s",
    "distance_m",
    "tx_gain_db",
    "rx_gain_db",
    "eirp_dbm",
    "below_sensitivity",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub ticks: u64,
    pub mean_ue_misalign_deg: f64,
    pub median_ue_misalign_deg: f64,
    pub p95_ue_misalign_deg: f64,
    pub mean_an_misalign_deg: f64,
    /// Mean of dB values over ticks outside alignment windows.
    pub mean_snr_db: f64,
    /// Same ticks, averaged in linear power and converted back to dB.
    pub mean_snr_linear_db: f64,
    pub outage_probability: f64,
    pub outage_ticks: u64,
    pub snr_outage_ticks: u64,
    pub aligning_ticks: u64,
    pub blanked_ticks: u64,
    pub below_sensitivity_ticks: u64,
    pub sweep_count: u64,
    pub switch_count: u64,
    pub max_eirp_dbm: f64,
}

fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    // Linear interpolation between closest ranks.
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Aggregates {
    /// Computes every aggregate from the records and sweep log alone.
    pub fn from_records(records: &[SimRecord], sweeps: &[SweepEvent<f64>]) -> Result<Self, SimError> {
        if records.is_empty() {
            return Err(SimError::Config("run produced no records".into()));
        }
        let n = records.len() as f64;
        let mut ue: Vec<f64> = records.iter().map(|r| r.ue_misalign_deg).collect();
        let mean_ue = ue.iter().sum::<f64>() / n;
        ue.sort_by(f64::total_cmp);
        let mean_an = records.iter().map(|r| r.an_misalign_deg).sum::<f64>() / n;
        let active: Vec<f64> = records.iter().filter(|r| !r.aligning).map(|r| r.snr_db).collect();
        let (mean_snr_db, mean_snr_linear_db) = if active.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let k = active.len() as f64;
            let lin = active.iter().map(|s| 10f64.powf(s / 10.0)).sum::<f64>() / k;
            (active.iter().sum::<f64>() / k, 10.0 * lin.log10())
        };
        let count = |f: fn(&SimRecord) -> bool| records.iter().filter(|r| f(r)).count() as u64;
        let outage_ticks = count(|r| r.outage);
        Ok(Self {
            ticks: records.len() as u64,
            mean_ue_misalign_deg: mean_ue,
            median_ue_misalign_deg: percentile_sorted(&ue, 0.5),
            p95_ue_misalign_deg: percentile_sorted(&ue, 0.95),
            mean_an_misalign_deg: mean_an,
            mean_snr_db,
            mean_snr_linear_db,
            outage_probability: outage_ticks as f64 / n,
            outage_ticks,
            snr_outage_ticks: count(|r| r.outage && !r.blanked),
            aligning_ticks: count(|r| r.aligning),
            blanked_ticks: count(|r| r.blanked),
            below_sensitivity_ticks: count(|r| r.below_sensitivity),
            sweep_count: sweeps.len() as u64,
            switch_count: sweeps.iter().filter(|e| e.switched).count() as u64,
            max_eirp_dbm: records.iter().map(|r| r.eirp_dbm).fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 over the canonical JSON of scene, run config and trace identity.
    pub config_hash: String,
    pub trace_id: String,
    pub seed: u64,
    pub convention: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub records: Vec<SimRecord>,
    pub sweeps: Vec<SweepEvent<f64>>,
    pub aggregates: Aggregates,
    pub provenance: Provenance,
    /// Resampled trace the ticks were driven by.
    pub trace: MobilityTrace,
}

/// Stable identity of a trace: participant, source, sample count and a
/// digest of the samples.
pub fn trace_id(trace: &MobilityTrace) -> String {
    let mut h = Sha256::new();
    for s in trace.samples() {
        for v in [
            s.t,
            s.position.x,
            s.position.y,
            s.position.z,
            s.orientation.yaw(),
            s.orientation.pitch(),
            s.orientation.roll(),
        ] {
            h.update(v.to_le_bytes());
        }
    }
    let digest = hex::encode(h.finalize());
    format!("{}:{}", trace.meta.participant, &digest[..16])
}

pub fn config_hash(scene: &Scene, cfg: &RunConfig, trace_id: &str) -> Result<String, SimError> {
    let canonical = serde_json::to_string(&(scene, cfg, trace_id))?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

/// Runs one simulation. The trace is resampled onto the tick clock; tick `k`
/// sits at `k / tick_hz` after the first sample. One sweep fires before the
/// first tick; later ones follow the schedule policy.
pub fn run(trace: &MobilityTrace, scene: &Scene, cfg: &RunConfig) -> Result<SimResult, SimError> {
    scene.validate()?;
    cfg.validate()?;
    let ue_cb = cfg.ue_array.build()?;
    let an_cb = cfg.an_array.build()?;
    run_with_codebooks(trace, scene, cfg, &ue_cb, &an_cb)
}

/// [`run`] with prebuilt codebooks (which must match `cfg`).
pub fn run_with_codebooks(
    trace: &MobilityTrace,
    scene: &Scene,
    cfg: &RunConfig,
    ue_cb: &Codebook<f64>,
    an_cb: &Codebook<f64>,
) -> Result<SimResult, SimError> {
    scene.validate()?;
    cfg.validate()?;
    let ticked = resample(trace, cfg.tick_hz)?;
    let samples = ticked.samples();
    let speeds: Vec<f64> = angular_speed(&ticked)?.speeds().collect();

    let mount = scene.ue_mount.to_rotation();
    let an = Endpoint {
        codebook: an_cb,
        position: scene.an_position,
        frame: scene.an_orientation.to_rotation(),
    };
    let mut manager = BeamManager::<f64>::new(cfg.schedule, cfg.tick_hz)?;
    let mut shadowing = Shadowing::new(cfg.link.pathloss.shadowing_sigma_db, cfg.seed);
    let mut records = Vec::with_capacity(samples.len());
    let mut prev_snr_outage = false;

    for (k, s) in samples.iter().enumerate() {
        let ue = Endpoint {
            codebook: ue_cb,
            position: s.position,
            frame: s.orientation.to_rotation() * mount,
        };
        let status = manager.step::<SimError, _>(k as u64, prev_snr_outage, || {
            Ok(sweep(&ue, &an, &cfg.link)?)
        })?;
        let serving = *manager.state();
        let (ue_mis, an_mis) = misalignment_at(&ue, &an, serving.ue_beam, serving.an_beam)?;
        let d_ue = ue.los_to(&an.position)?;
        let d_an = an.los_to(&ue.position)?;
        let rx_gain = ue_cb.gain(&ue_cb.refined()[serving.ue_beam], d_ue);
        let tx_gain = an_cb.gain(&an_cb.refined()[serving.an_beam], d_an);
        let distance = s.position.distance(&an.position);
        let extra: f64 = shadowing.sample();
        let b = budget(&cfg.link, tx_gain, rx_gain, path_loss(&cfg.link, distance) + extra);
        let snr_outage = b.snr_db < cfg.link.min_snr_db;
        records.push(SimRecord {
            tick: k as u64,
            t: s.t,
            ue_misalign_deg: ue_mis,
            an_misalign_deg: an_mis,
            snr_db: b.snr_db,
            outage: snr_outage || status.blanked,
            aligning: status.aligning,
            blanked: status.blanked,
            ue_beam: serving.ue_beam,
            an_beam: serving.an_beam,
            angular_speed_deg_s: speeds[k.saturating_sub(1).min(speeds.len() - 1)],
            distance_m: distance,
            tx_gain_db: tx_gain,
            rx_gain_db: rx_gain,
            eirp_dbm: b.eirp_dbm,
            below_sensitivity: b.rx_power_dbm < cfg.link.rx_sensitivity_dbm,
        });
        prev_snr_outage = snr_outage;
    }

    let sweeps = manager.into_events();
    let aggregates = Aggregates::from_records(&records, &sweeps)?;
    let id = trace_id(trace);
    let provenance = Provenance {
        config_hash: config_hash(scene, cfg, &id)?,
        trace_id: id,
        seed: cfg.seed,
        convention: EULER_CONVENTION.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok(SimResult {
        records,
        sweeps,
        aggregates,
        provenance,
        trace: ticked,
    })
}

/// Writes records with the columns of [`RECORD_COLUMNS`].
pub fn write_records_csv<W: Write>(records: &[SimRecord], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RECORD_COLUMNS)?;
    for r in records {
        out.write_record([
            r.tick.to_string(),
            r.t.to_string(),
            r.ue_misalign_deg.to_string(),
            r.an_misalign_deg.to_string(),
            r.snr_db.to_string(),
            (r.outage as u8).to_string(),
            (r.aligning as u8).to_string(),
            (r.blanked as u8).to_string(),
            r.ue_beam.to_string(),
            r.an_beam.to_string(),
            r.angular_speed_deg_s.to_string(),
            r.distance_m.to_string(),
            r.tx_gain_db.to_string(),
            r.rx_gain_db.to_string(),
            r.eirp_dbm.to_string(),
            (r.below_sensitivity as u8).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
