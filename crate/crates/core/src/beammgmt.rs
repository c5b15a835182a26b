//! Beam management: beacon-interval schedule, joint sector/refinement pair
//! sweep and the serving-beam state machine.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{BeamError, GeometryError};
use crate::geometry::{angle_between_directions, los_direction_in_frame, DirectionAzEl, Position, Rotation};
use crate::link::{budget, path_loss, LinkConfig};
use crate::phasedarray::{BeamLevel, Codebook};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Sweep at every beacon-interval boundary.
    Periodic,
    /// Sweep on the tick after an SNR outage.
    OnDemand,
    Hybrid,
}

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Periodic => "periodic",
            Policy::OnDemand => "on_demand",
            Policy::Hybrid => "hybrid",
        }
    }
}

/// Which alignment windows count as outage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Blanking {
    /// Every sweep window.
    Always,
    /// Only windows of sweeps that changed the serving pair.
    OnSwitch,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamSchedule {
    pub beacon_interval_s: f64,
    pub sls_duration_s: f64,
    pub brp_duration_s: f64,
    pub policy: Policy,
    pub blanking: Blanking,
}

impl Default for BeamSchedule {
    fn default() -> Self {
        Self {
            beacon_interval_s: 0.100,
            sls_duration_s: 16e-6,
            brp_duration_s: 1e-6,
            policy: Policy::Periodic,
            blanking: Blanking::OnSwitch,
        }
    }
}

impl BeamSchedule {
    pub fn alignment_s(&self) -> f64 {
        self.sls_duration_s + self.brp_duration_s
    }

    pub fn validate(&self) -> Result<(), BeamError> {
        let all = [self.beacon_interval_s, self.sls_duration_s, self.brp_duration_s];
        if !all.iter().all(|v| v.is_finite() && *v >= 0.0) || self.beacon_interval_s <= 0.0 {
            return Err(BeamError::BadSchedule(
                "durations must be finite, non-negative, with a positive beacon interval".into(),
            ));
        }
        if self.alignment_s() >= self.beacon_interval_s {
            return Err(BeamError::BadSchedule(format!(
                "sls + brp = {} s does not fit in the {} s beacon interval",
                self.alignment_s(),
                self.beacon_interval_s
            )));
        }
        Ok(())
    }

    /// Ticks per beacon interval; the interval must be a whole number of ticks.
    pub fn ticks_per_interval(&self, tick_hz: f64) -> Result<u64, BeamError> {
        let exact = self.beacon_interval_s * tick_hz;
        let rounded = exact.round();
        if rounded < 1.0 || (exact - rounded).abs() > 1e-6 * rounded.max(1.0) {
            return Err(BeamError::BadSchedule(format!(
                "beacon interval {} s is not a whole number of {} Hz ticks",
                self.beacon_interval_s, tick_hz
            )));
        }
        Ok(rounded as u64)
    }

    /// Ticks marked aligning per sweep: the window rounded up, at least one.
    pub fn alignment_ticks(&self, tick_hz: f64) -> u64 {
        ((self.alignment_s() * tick_hz - 1e-9).ceil() as u64).max(1)
    }
}

/// One side of the link: its codebook, where it is and how its array is
/// oriented (array frame to world).
#[derive(Debug, Clone, Copy)]
pub struct Endpoint<'a, T> {
    pub codebook: &'a Codebook<T>,
    pub position: Position<T>,
    pub frame: Rotation<T>,
}

impl<T: Scalar> Endpoint<'_, T> {
    /// Direction toward `other` in this endpoint's array frame.
    pub fn los_to(&self, other: &Position<T>) -> Result<DirectionAzEl<T>, GeometryError> {
        los_direction_in_frame(&self.position, &self.frame, other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOutcome<T> {
    pub ue_beam: usize,
    pub an_beam: usize,
    pub ue_sector: usize,
    pub an_sector: usize,
    pub snr_db: T,
}

/// Best pair by SNR over `an_ids × ue_ids`; ties keep the lowest
/// `(an id, ue id)` because ids are visited in ascending order.
fn best_pair<T: Scalar>(
    cfg: &LinkConfig<T>,
    pl: T,
    an_gains: &[(usize, T)],
    ue_gains: &[(usize, T)],
) -> (usize, usize, T) {
    let mut best: Option<(usize, usize, T)> = None;
    for &(a, ga) in an_gains {
        for &(u, gu) in ue_gains {
            let s = budget(cfg, ga, gu, pl).snr_db;
            if best.is_none_or(|(_, _, b)| s > b) {
                best = Some((a, u, s));
            }
        }
    }
    best.expect("codebooks are never empty")
}

fn gains<T: Scalar>(
    ep: &Endpoint<'_, T>,
    level: BeamLevel,
    ids: impl Iterator<Item = usize>,
    d: DirectionAzEl<T>,
) -> Vec<(usize, T)> {
    let mut v: Vec<(usize, T)> = ids
        .map(|id| (id, ep.codebook.gain(ep.codebook.beam(level, id).expect("valid id"), d)))
        .collect();
    v.sort_by_key(|p| p.0);
    v
}

/// Joint sweep: exhaustive sector-pair search, then exhaustive search over
/// the refined children of both winning sectors. The access node transmits.
pub fn sweep<T: Scalar>(
    ue: &Endpoint<'_, T>,
    an: &Endpoint<'_, T>,
    cfg: &LinkConfig<T>,
) -> Result<SweepOutcome<T>, GeometryError> {
    let d_ue = ue.los_to(&an.position)?;
    let d_an = an.los_to(&ue.position)?;
    let pl = path_loss(cfg, ue.position.distance(&an.position));

    let an_sectors = gains(an, BeamLevel::Sector, 0..an.codebook.sectors().len(), d_an);
    let ue_sectors = gains(ue, BeamLevel::Sector, 0..ue.codebook.sectors().len(), d_ue);
    let (an_sector, ue_sector, _) = best_pair(cfg, pl, &an_sectors, &ue_sectors);

    let an_refined = gains(an, BeamLevel::Refined, an.codebook.children(an_sector).iter().copied(), d_an);
    let ue_refined = gains(ue, BeamLevel::Refined, ue.codebook.children(ue_sector).iter().copied(), d_ue);
    let (an_beam, ue_beam, snr_db) = best_pair(cfg, pl, &an_refined, &ue_refined);
    Ok(SweepOutcome {
        ue_beam,
        an_beam,
        ue_sector,
        an_sector,
        snr_db,
    })
}

/// Brute-force reference: best pair over all refined beams on both sides.
pub fn exhaustive_sweep<T: Scalar>(
    ue: &Endpoint<'_, T>,
    an: &Endpoint<'_, T>,
    cfg: &LinkConfig<T>,
) -> Result<SweepOutcome<T>, GeometryError> {
    let d_ue = ue.los_to(&an.position)?;
    let d_an = an.los_to(&ue.position)?;
    let pl = path_loss(cfg, ue.position.distance(&an.position));
    let an_all = gains(an, BeamLevel::Refined, 0..an.codebook.refined().len(), d_an);
    let ue_all = gains(ue, BeamLevel::Refined, 0..ue.codebook.refined().len(), d_ue);
    let (an_beam, ue_beam, snr_db) = best_pair(cfg, pl, &an_all, &ue_all);
    let parent = |cb: &Codebook<T>, id: usize| cb.refined()[id].parent.expect("refined beams have parents");
    Ok(SweepOutcome {
        ue_beam,
        an_beam,
        ue_sector: parent(ue.codebook, ue_beam),
        an_sector: parent(an.codebook, an_beam),
        snr_db,
    })
}

/// Angle (degrees) between each side's serving refined beam and its true
/// line of sight, both in that side's array frame. Returns `(ue, an)`.
pub fn misalignment_at<T: Scalar>(
    ue: &Endpoint<'_, T>,
    an: &Endpoint<'_, T>,
    ue_beam: usize,
    an_beam: usize,
) -> Result<(T, T), GeometryError> {
    let d_ue = ue.los_to(&an.position)?;
    let d_an = an.los_to(&ue.position)?;
    Ok((
        angle_between_directions(ue.codebook.refined()[ue_beam].boresight, d_ue),
        angle_between_directions(an.codebook.refined()[an_beam].boresight, d_an),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTrigger {
    Initial,
    Periodic,
    OnDemand,
}

impl SweepTrigger {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepTrigger::Initial => "initial",
            SweepTrigger::Periodic => "periodic",
            SweepTrigger::OnDemand => "on_demand",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ServingState {
    pub ue_beam: usize,
    pub an_beam: usize,
    pub selected_at: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepEvent<T> {
    pub tick: u64,
    pub t: f64,
    pub trigger: SweepTrigger,
    pub ue_beam: usize,
    pub an_beam: usize,
    pub ue_sector: usize,
    pub an_sector: usize,
    pub snr_db: T,
    /// The serving pair changed.
    pub switched: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TickStatus {
    pub swept: Option<SweepTrigger>,
    /// Inside an alignment window.
    pub aligning: bool,
    /// Inside an alignment window that counts as outage under the blanking rule.
    pub blanked: bool,
}

/// Serving-beam state machine driven one tick at a time.
#[derive(Debug, Clone)]
pub struct BeamManager<T> {
    schedule: BeamSchedule,
    tick_hz: f64,
    ticks_per_bi: u64,
    align_ticks: u64,
    last_tick: Option<u64>,
    state: ServingState,
    aligning_until: u64,
    blanked_until: u64,
    events: Vec<SweepEvent<T>>,
}

impl<T: Scalar> BeamManager<T> {
    pub fn new(schedule: BeamSchedule, tick_hz: f64) -> Result<Self, BeamError> {
        schedule.validate()?;
        if !(tick_hz.is_finite() && tick_hz > 0.0) {
            return Err(BeamError::BadSchedule(format!("tick rate must be positive, got {tick_hz}")));
        }
        Ok(Self {
            ticks_per_bi: schedule.ticks_per_interval(tick_hz)?,
            align_ticks: schedule.alignment_ticks(tick_hz),
            schedule,
            tick_hz,
            last_tick: None,
            state: ServingState {
                ue_beam: 0,
                an_beam: 0,
                selected_at: 0.0,
                valid: false,
            },
            aligning_until: 0,
            blanked_until: 0,
            events: Vec::new(),
        })
    }

    pub fn schedule(&self) -> &BeamSchedule {
        &self.schedule
    }

    pub fn state(&self) -> &ServingState {
        &self.state
    }

    pub fn events(&self) -> &[SweepEvent<T>] {
        &self.events
    }

    pub fn into_events(self) -> Vec<SweepEvent<T>> {
        self.events
    }

    pub fn sweep_count(&self) -> usize {
        self.events.len()
    }

    pub fn alignment_ticks(&self) -> u64 {
        self.align_ticks
    }

    fn trigger_for(&self, tick: u64, prev_snr_outage: bool) -> Option<SweepTrigger> {
        if !self.state.valid {
            return Some(SweepTrigger::Initial);
        }
        let boundary = tick.is_multiple_of(self.ticks_per_bi);
        match self.schedule.policy {
            Policy::Periodic => boundary.then_some(SweepTrigger::Periodic),
            Policy::OnDemand => prev_snr_outage.then_some(SweepTrigger::OnDemand),
            Policy::Hybrid => {
                if boundary {
                    Some(SweepTrigger::Periodic)
                } else {
                    prev_snr_outage.then_some(SweepTrigger::OnDemand)
                }
            }
        }
    }

    /// Advances to `tick`. `prev_snr_outage` tells whether the previous tick
    /// fell below the SNR threshold (blanking excluded). `do_sweep` runs only
    /// if a sweep fires on this tick.
    pub fn step<E, F>(&mut self, tick: u64, prev_snr_outage: bool, do_sweep: F) -> Result<TickStatus, E>
    where
        E: From<BeamError>,
        F: FnOnce() -> Result<SweepOutcome<T>, E>,
    {
        if let Some(last) = self.last_tick {
            if tick <= last {
                return Err(BeamError::ClockRegression { last, tick }.into());
            }
        }
        self.last_tick = Some(tick);
        let t = tick as f64 / self.tick_hz;
        let swept = self.trigger_for(tick, prev_snr_outage);
        if let Some(trigger) = swept {
            let out = do_sweep()?;
            let switched = self.state.valid
                && (out.ue_beam != self.state.ue_beam || out.an_beam != self.state.an_beam);
            self.state = ServingState {
                ue_beam: out.ue_beam,
                an_beam: out.an_beam,
                selected_at: t,
                valid: true,
            };
            self.aligning_until = tick + self.align_ticks;
            let blank = match self.schedule.blanking {
                Blanking::Always => true,
                Blanking::OnSwitch => switched,
                Blanking::Off => false,
            };
            if blank {
                self.blanked_until = tick + self.align_ticks;
            }
            self.events.push(SweepEvent {
                tick,
                t,
                trigger,
                ue_beam: out.ue_beam,
                an_beam: out.an_beam,
                ue_sector: out.ue_sector,
                an_sector: out.an_sector,
                snr_db: out.snr_db,
                switched,
            });
        }
        Ok(TickStatus {
            swept,
            aligning: tick < self.aligning_until,
            blanked: tick < self.blanked_until,
        })
    }
}

/// Writes the sweep log as `tick,t,trigger,ue_beam,an_beam,ue_sector,an_sector,snr_db,switched`.
pub fn write_sweep_log<T: Scalar, W: Write>(events: &[SweepEvent<T>], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "tick", "t", "trigger", "ue_beam", "an_beam", "ue_sector", "an_sector", "snr_db", "switched",
    ])?;
    for e in events {
        out.write_record([
            e.tick.to_string(),
            e.t.to_string(),
            e.trigger.as_str().to_string(),
            e.ue_beam.to_string(),
            e.an_beam.to_string(),
            e.ue_sector.to_string(),
            e.an_sector.to_string(),
            e.snr_db.to_string(),
            e.switched.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
