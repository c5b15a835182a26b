use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{MobilityTrace, PoseSample, TraceMeta, TraceSource};
use crate::error::TraceError;
use crate::geometry::{wrap_deg, Orientation, Position, Rotation};

/// Motion model for [`synth_trace`]. Angles in degrees, speeds in deg/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pattern {
    Static,
    /// Yaw oscillates across `arc_deg` centred on the base yaw. With zero
    /// phase it starts at the centre moving in the positive direction;
    /// `phase_deg` advances the start along the path (one period is
    /// `2 * arc_deg` of travel).
    YawSweep {
        omega_deg_s: f64,
        #[serde(default = "default_yaw_arc")]
        arc_deg: f64,
        #[serde(default)]
        phase_deg: f64,
    },
    /// Same as the yaw sweep, about the pitch axis.
    PitchSweep {
        omega_deg_s: f64,
        #[serde(default = "default_pitch_arc")]
        arc_deg: f64,
        #[serde(default)]
        phase_deg: f64,
    },
    /// Rotates at constant speed toward orientations drawn uniformly from
    /// the given Euler ranges, one after another.
    RandomWaypoint {
        omega_deg_s: f64,
        #[serde(default = "full_turn")]
        yaw_range: [f64; 2],
        #[serde(default = "half_turn")]
        pitch_range: [f64; 2],
        #[serde(default = "full_turn")]
        roll_range: [f64; 2],
    },
    /// Seated/standing gameplay: gaze targets cluster around the base
    /// orientation, head speed grows with distance from it, and the body
    /// drifts around the base position.
    Gaming(GamingParams),
}

fn default_yaw_arc() -> f64 {
    120.0
}

fn default_pitch_arc() -> f64 {
    60.0
}

fn full_turn() -> [f64; 2] {
    [-180.0, 180.0]
}

fn half_turn() -> [f64; 2] {
    [-90.0, 90.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GamingParams {
    pub yaw_sigma_deg: f64,
    pub pitch_sigma_deg: f64,
    pub roll_sigma_deg: f64,
    pub pitch_limit_deg: f64,
    pub roll_limit_deg: f64,
    /// Head speed while looking straight at the base orientation.
    pub center_speed_deg_s: f64,
    /// Extra speed per degree away from the base orientation.
    pub speed_per_deg: f64,
    pub max_speed_deg_s: f64,
    /// Mean pause after reaching each gaze target.
    pub dwell_mean_s: f64,
    /// Stationary standard deviation of the horizontal drift.
    pub lateral_sigma_m: f64,
    pub vertical_sigma_m: f64,
    /// Correlation time of the drift.
    pub lateral_tau_s: f64,
}

impl Default for GamingParams {
    fn default() -> Self {
        Self {
            yaw_sigma_deg: 40.0,
            pitch_sigma_deg: 12.0,
            roll_sigma_deg: 4.0,
            pitch_limit_deg: 60.0,
            roll_limit_deg: 30.0,
            center_speed_deg_s: 15.0,
            speed_per_deg: 2.0,
            max_speed_deg_s: 250.0,
            dwell_mean_s: 0.3,
            lateral_sigma_m: 0.12,
            vertical_sigma_m: 0.03,
            lateral_tau_s: 2.0,
        }
    }
}

impl Pattern {
    pub fn kind(&self) -> &'static str {
        match self {
            Pattern::Static => "static",
            Pattern::YawSweep { .. } => "yaw_sweep",
            Pattern::PitchSweep { .. } => "pitch_sweep",
            Pattern::RandomWaypoint { .. } => "random_waypoint",
            Pattern::Gaming(_) => "gaming",
        }
    }

    /// Nominal angular speed for constant-speed patterns.
    pub fn omega(&self) -> Option<f64> {
        match self {
            Pattern::Static => Some(0.0),
            Pattern::YawSweep { omega_deg_s, .. }
            | Pattern::PitchSweep { omega_deg_s, .. }
            | Pattern::RandomWaypoint { omega_deg_s, .. } => Some(*omega_deg_s),
            Pattern::Gaming(_) => None,
        }
    }

    /// Copy with the constant speed replaced; `None` for patterns without one.
    pub fn with_omega(&self, omega: f64) -> Option<Pattern> {
        let mut p = self.clone();
        match &mut p {
            Pattern::YawSweep { omega_deg_s, .. }
            | Pattern::PitchSweep { omega_deg_s, .. }
            | Pattern::RandomWaypoint { omega_deg_s, .. } => *omega_deg_s = omega,
            Pattern::Static if omega == 0.0 => {}
            _ => return None,
        }
        Some(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub pattern: Pattern,
    pub duration_s: f64,
    pub rate_hz: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_position")]
    pub position: Position<f64>,
    #[serde(default = "Orientation::identity")]
    pub base: Orientation<f64>,
}

fn default_position() -> Position<f64> {
    Position::new(2.5, 2.5, 1.6)
}

impl SynthSpec {
    pub fn new(pattern: Pattern, duration_s: f64, rate_hz: f64, seed: u64) -> Self {
        Self {
            pattern,
            duration_s,
            rate_hz,
            seed,
            position: default_position(),
            base: Orientation::identity(),
        }
    }
}

fn bad(msg: impl Into<String>) -> TraceError {
    TraceError::BadPattern(msg.into())
}

fn check_finite_nonneg(name: &str, v: f64) -> Result<(), TraceError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(bad(format!("{name} must be finite and non-negative, got {v}")))
    }
}

fn check_range(name: &str, r: [f64; 2], limit: f64) -> Result<(), TraceError> {
    if r[0] <= r[1] && r[0] >= -limit && r[1] <= limit {
        Ok(())
    } else {
        Err(bad(format!("{name} {r:?} must be ordered and within ±{limit}")))
    }
}

/// Triangle wave of amplitude `arc / 2` starting at 0 with positive slope.
fn triangle(travel: f64, arc: f64) -> f64 {
    if arc <= 0.0 {
        return 0.0;
    }
    let u = (travel + 0.5 * arc).rem_euclid(2.0 * arc);
    if u < arc {
        u - 0.5 * arc
    } else {
        1.5 * arc - u
    }
}

/// Generates a deterministic trace sampled at `k / rate` for every `k` with
/// `k / rate < duration`.
pub fn synth_trace(spec: &SynthSpec) -> Result<MobilityTrace, TraceError> {
    let SynthSpec {
        pattern,
        duration_s,
        rate_hz,
        seed,
        position,
        base,
    } = spec;
    if !(duration_s.is_finite() && *duration_s > 0.0) {
        return Err(bad(format!("duration must be positive, got {duration_s}")));
    }
    if !(rate_hz.is_finite() && *rate_hz > 0.0) {
        return Err(bad(format!("rate must be positive, got {rate_hz}")));
    }
    if !position.is_valid() {
        return Err(bad("position must be finite with z >= 0"));
    }
    let n = (duration_s * rate_hz - 1e-9).ceil() as usize;
    if n < 2 {
        return Err(bad("duration × rate yields fewer than 2 samples"));
    }
    let dt = 1.0 / rate_hz;
    let times = (0..n).map(|k| k as f64 / rate_hz);
    let fixed = |orientation| PoseSample {
        t: 0.0,
        position: *position,
        orientation,
    };

    let samples: Vec<PoseSample> = match pattern {
        Pattern::Static => times.map(|t| PoseSample { t, ..fixed(*base) }).collect(),
        Pattern::YawSweep {
            omega_deg_s,
            arc_deg,
            phase_deg,
        } => {
            check_finite_nonneg("omega", *omega_deg_s)?;
            if !phase_deg.is_finite() {
                return Err(bad("phase must be finite"));
            }
            if !(*arc_deg > 0.0 && *arc_deg <= 360.0) {
                return Err(bad(format!("yaw arc must be in (0, 360], got {arc_deg}")));
            }
            times
                .map(|t| {
                    let yaw = wrap_deg(base.yaw() + triangle(omega_deg_s * t + phase_deg, *arc_deg));
                    let o = Orientation::new(yaw, base.pitch(), base.roll()).expect("wrapped yaw");
                    PoseSample { t, ..fixed(o) }
                })
                .collect()
        }
        Pattern::PitchSweep {
            omega_deg_s,
            arc_deg,
            phase_deg,
        } => {
            check_finite_nonneg("omega", *omega_deg_s)?;
            if !phase_deg.is_finite() {
                return Err(bad("phase must be finite"));
            }
            if !(*arc_deg > 0.0 && 0.5 * arc_deg + base.pitch().abs() <= 90.0) {
                return Err(bad(format!(
                    "pitch arc {arc_deg} around base pitch {} leaves [-90, 90]",
                    base.pitch()
                )));
            }
            times
                .map(|t| {
                    let pitch = base.pitch() + triangle(omega_deg_s * t + phase_deg, *arc_deg);
                    let o = Orientation::new(base.yaw(), pitch.clamp(-90.0, 90.0), base.roll())
                        .expect("pitch within range");
                    PoseSample { t, ..fixed(o) }
                })
                .collect()
        }
        Pattern::RandomWaypoint {
            omega_deg_s,
            yaw_range,
            pitch_range,
            roll_range,
        } => {
            check_finite_nonneg("omega", *omega_deg_s)?;
            check_range("yaw_range", *yaw_range, 180.0)?;
            check_range("pitch_range", *pitch_range, 90.0)?;
            check_range("roll_range", *roll_range, 180.0)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let draw = |rng: &mut ChaCha8Rng| {
                let u = |rng: &mut ChaCha8Rng, r: [f64; 2]| {
                    if r[0] == r[1] {
                        r[0]
                    } else {
                        rng.random_range(r[0]..=r[1])
                    }
                };
                let y = u(rng, *yaw_range);
                let p = u(rng, *pitch_range);
                let r = u(rng, *roll_range);
                Orientation::new(y, p, r).expect("ranges checked").to_rotation()
            };
            let mut current = base.to_rotation();
            let mut target = draw(&mut rng);
            let mut out = Vec::with_capacity(n);
            for (k, t) in times.enumerate() {
                if k > 0 {
                    let mut budget = omega_deg_s * dt;
                    // Bounded so a degenerate range cannot spin forever.
                    for _ in 0..64 {
                        if budget <= 0.0 {
                            break;
                        }
                        let dist = current.angle_to(&target);
                        let (next, reached) = current.step_toward(&target, budget);
                        current = next;
                        if !reached {
                            break;
                        }
                        budget -= dist;
                        target = draw(&mut rng);
                    }
                }
                out.push(PoseSample {
                    t,
                    ..fixed(current.to_orientation())
                });
            }
            out
        }
        Pattern::Gaming(g) => gaming(g, n, *rate_hz, *seed, *position, *base)?,
    };

    let meta = TraceMeta::new(
        format!("synth-{}-{}", pattern.kind(), seed),
        TraceSource::Synthetic,
        *rate_hz,
    );
    MobilityTrace::new(samples, meta)
}

fn gaming(
    g: &GamingParams,
    n: usize,
    rate_hz: f64,
    seed: u64,
    home: Position<f64>,
    base: Orientation<f64>,
) -> Result<Vec<PoseSample>, TraceError> {
    for (name, v) in [
        ("yaw_sigma_deg", g.yaw_sigma_deg),
        ("pitch_sigma_deg", g.pitch_sigma_deg),
        ("roll_sigma_deg", g.roll_sigma_deg),
        ("center_speed_deg_s", g.center_speed_deg_s),
        ("speed_per_deg", g.speed_per_deg),
        ("max_speed_deg_s", g.max_speed_deg_s),
        ("dwell_mean_s", g.dwell_mean_s),
        ("lateral_sigma_m", g.lateral_sigma_m),
        ("vertical_sigma_m", g.vertical_sigma_m),
    ] {
        check_finite_nonneg(name, v)?;
    }
    if !(g.pitch_limit_deg > 0.0 && g.pitch_limit_deg <= 90.0) {
        return Err(bad("pitch_limit_deg must be in (0, 90]"));
    }
    if !(g.roll_limit_deg > 0.0 && g.roll_limit_deg <= 180.0) {
        return Err(bad("roll_limit_deg must be in (0, 180]"));
    }
    if !(g.lateral_tau_s > 0.0 && g.lateral_tau_s.is_finite()) {
        return Err(bad("lateral_tau_s must be positive"));
    }
    if !(g.max_speed_deg_s > 0.0) {
        return Err(bad("max_speed_deg_s must be positive"));
    }

    let dt = 1.0 / rate_hz;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let dwell = (g.dwell_mean_s > 0.0).then(|| Exp::new(1.0 / g.dwell_mean_s).expect("positive rate"));
    let center = base.to_rotation();

    let draw_target = |rng: &mut ChaCha8Rng| -> Rotation<f64> {
        let y = wrap_deg(base.yaw() + g.yaw_sigma_deg * std_normal.sample(rng));
        let p = (base.pitch() + g.pitch_sigma_deg * std_normal.sample(rng))
            .clamp(-g.pitch_limit_deg, g.pitch_limit_deg);
        let r = wrap_deg(base.roll() + g.roll_sigma_deg * std_normal.sample(rng))
            .clamp(-g.roll_limit_deg, g.roll_limit_deg);
        Orientation::new(y, p, r).expect("clamped").to_rotation()
    };
    let speed_at = |r: &Rotation<f64>| {
        (g.center_speed_deg_s + g.speed_per_deg * center.angle_to(r)).min(g.max_speed_deg_s)
    };

    // Exact discretisation of an Ornstein-Uhlenbeck process per axis.
    let decay = (-dt / g.lateral_tau_s).exp();
    let diffusion = (1.0 - decay * decay).sqrt();
    let mut offset = [0.0f64; 3];
    let sigma = [g.lateral_sigma_m, g.lateral_sigma_m, g.vertical_sigma_m];

    let mut current = center;
    let mut target = draw_target(&mut rng);
    let mut pause = 0.0_f64;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            let mut time_left = dt;
            for _ in 0..64 {
                if time_left <= 0.0 {
                    break;
                }
                if pause > 0.0 {
                    let used = pause.min(time_left);
                    pause -= used;
                    time_left -= used;
                    continue;
                }
                let speed = speed_at(&current);
                let dist = current.angle_to(&target);
                let (next, reached) = current.step_toward(&target, speed * time_left);
                current = next;
                if !reached {
                    break;
                }
                time_left -= if speed > 0.0 { dist / speed } else { time_left };
                target = draw_target(&mut rng);
                pause = dwell.map(|d| d.sample(&mut rng)).unwrap_or(0.0);
            }
            for (o, s) in offset.iter_mut().zip(sigma) {
                *o = *o * decay + s * diffusion * std_normal.sample(&mut rng);
            }
        }
        let position = Position::new(
            (home.x + offset[0]).max(0.0),
            (home.y + offset[1]).max(0.0),
            (home.z + offset[2]).max(0.0),
        );
        out.push(PoseSample {
            t: k as f64 / rate_hz,
            position,
            orientation: current.to_orientation(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::angular_speed;

    #[test]
    fn static_pattern() {
        let tr = synth_trace(&SynthSpec::new(Pattern::Static, 1.0, 250.0, 0)).unwrap();
        assert_eq!(tr.len(), 250);
        assert!(angular_speed(&tr).unwrap().speeds().all(|v| v == 0.0));
        assert!(tr.samples().iter().all(|s| s.position == tr.samples()[0].position));
    }

    #[test]
    fn yaw_sweep_speed() {
        let spec = SynthSpec::new(
            Pattern::YawSweep {
                omega_deg_s: 45.0,
                arc_deg: 90.0,
                phase_deg: 0.0,
            },
            10.0,
            250.0,
            0,
        );
        let tr = synth_trace(&spec).unwrap();
        let speeds: Vec<f64> = angular_speed(&tr).unwrap().speeds().collect();
        let off = speeds.iter().filter(|v| (**v - 45.0).abs() > 1e-6).count();
        // only intervals straddling one of the 4 reversals in 10 s
        assert!(off <= 5, "{off}");
        let max_yaw = tr.samples().iter().map(|s| s.orientation.yaw().abs()).fold(0.0, f64::max);
        assert!((max_yaw - 45.0).abs() < 0.2);
    }

    #[test]
    fn yaw_sweep_90_at_250() {
        let spec = SynthSpec::new(
            Pattern::YawSweep {
                omega_deg_s: 90.0,
                arc_deg: 360.0,
                phase_deg: 0.0,
            },
            1.0,
            250.0,
            0,
        );
        let tr = synth_trace(&spec).unwrap();
        for v in angular_speed(&tr).unwrap().speeds() {
            assert!((v - 90.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn zero_speed_sweep_is_static() {
        let base = Orientation::new(30.0, -10.0, 5.0).unwrap();
        let mk = |p| SynthSpec {
            base,
            ..SynthSpec::new(p, 2.0, 100.0, 3)
        };
        let a = synth_trace(&mk(Pattern::Static)).unwrap();
        let b = synth_trace(&mk(Pattern::YawSweep {
            omega_deg_s: 0.0,
            arc_deg: 120.0,
            phase_deg: 0.0,
        }))
        .unwrap();
        assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn pitch_sweep_bounds() {
        let spec = SynthSpec {
            base: Orientation::new(0.0, 50.0, 0.0).unwrap(),
            ..SynthSpec::new(
                Pattern::PitchSweep {
                    omega_deg_s: 30.0,
                    arc_deg: 90.0,
                    phase_deg: 0.0,
                },
                1.0,
                100.0,
                0,
            )
        };
        assert!(matches!(synth_trace(&spec), Err(TraceError::BadPattern(_))));
    }

    #[test]
    fn random_waypoint_deterministic_and_bounded() {
        let spec = SynthSpec::new(
            Pattern::RandomWaypoint {
                omega_deg_s: 120.0,
                yaw_range: full_turn(),
                pitch_range: half_turn(),
                roll_range: full_turn(),
            },
            20.0,
            250.0,
            42,
        );
        let a = synth_trace(&spec).unwrap();
        let b = synth_trace(&spec).unwrap();
        assert_eq!(a, b);
        for s in a.samples() {
            let o = s.orientation;
            assert!(o.pitch().abs() <= 90.0 && o.yaw().abs() <= 180.0 && o.roll().abs() <= 180.0);
        }
        let speeds: Vec<f64> = angular_speed(&a).unwrap().speeds().collect();
        let near = speeds.iter().filter(|v| (**v - 120.0).abs() < 1e-6).count();
        assert!(near as f64 > 0.9 * speeds.len() as f64);
        assert!(speeds.iter().all(|v| *v <= 120.0 + 1e-6));
        let other = synth_trace(&SynthSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn gaming_slow_center_fast_periphery() {
        let spec = SynthSpec::new(Pattern::Gaming(GamingParams::default()), 120.0, 250.0, 7);
        let tr = synth_trace(&spec).unwrap();
        assert_eq!(tr, synth_trace(&spec).unwrap());
        let sp = angular_speed(&tr).unwrap();
        let (mut c, mut p) = ((0.0, 0), (0.0, 0));
        for (w, (_, v)) in tr.samples().windows(2).zip(&sp.points) {
            if *v == 0.0 {
                continue;
            }
            let o = w[0].orientation;
            if o.yaw().abs() < 10.0 && o.pitch().abs() < 10.0 {
                c = (c.0 + v, c.1 + 1);
            } else if o.yaw().abs() > 40.0 {
                p = (p.0 + v, p.1 + 1);
            }
        }
        assert!(c.1 > 100 && p.1 > 100);
        assert!(c.0 / c.1 as f64 * 1.5 < p.0 / p.1 as f64);
        let bb = crate::mobility::BoundingBox::default();
        assert!(tr.check_bounds(&bb).is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(synth_trace(&SynthSpec::new(Pattern::Static, 0.0, 250.0, 0)).is_err());
        assert!(synth_trace(&SynthSpec::new(Pattern::Static, 1.0, -1.0, 0)).is_err());
        let neg = Pattern::YawSweep {
            omega_deg_s: -5.0,
            arc_deg: 90.0,
            phase_deg: 0.0,
        };
        assert!(synth_trace(&SynthSpec::new(neg, 1.0, 100.0, 0)).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let spec = SynthSpec::new(
            Pattern::YawSweep {
                omega_deg_s: 60.0,
                arc_deg: 120.0,
                phase_deg: 30.0,
            },
            5.0,
            1000.0,
            1,
        );
        let text = serde_json::to_string(&spec).unwrap();
        let back: SynthSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let p: Pattern = serde_json::from_str(r#"{"kind":"gaming","yaw_sigma_deg":30}"#).unwrap();
        assert!(matches!(p, Pattern::Gaming(GamingParams { yaw_sigma_deg, .. }) if yaw_sigma_deg == 30.0));
    }
}
