//! Acceptance suite. Prints one PASS/FAIL line per criterion:
//!
//!     cargo test -p beamsim --test acceptance -- --nocapture

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use beamsim::beammgmt::{exhaustive_sweep, misalignment_at, sweep, Endpoint, Policy};
use beamsim::experiment::{write_outputs, Experiment, ExperimentSpec, Manifest, MotionMode, RunOutcome, Tables};
use beamsim::geometry::{Orientation, Position};
use beamsim::link::{eirp, noise_power, LinkConfig};
use beamsim::metrics::spearman;
use beamsim::mobility::{synth_trace, Pattern, SynthSpec};
use beamsim::phasedarray::{half_power_beamwidth, Beam, BeamLevel, PhasedArray};
use beamsim::simcore::{run, ArraySpec, RunConfig, Scene};
use beamsim::DirectionAzEl;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: &'static str, pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        id,
        pass,
        detail: detail.into(),
    }
}

fn replication_spec() -> ExperimentSpec {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../cli/specs/replication.toml");
    ExperimentSpec::from_toml_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

struct Replication {
    exp: Experiment,
    outcomes: Vec<RunOutcome>,
    tables: Tables,
    elapsed: Duration,
}

fn replicate(out: &Path) -> Replication {
    let start = Instant::now();
    let exp = Experiment::prepare(replication_spec(), Path::new(".")).unwrap();
    let outcomes = exp.execute(jobs(), Some(out)).unwrap();
    let tables = exp.tables(&outcomes);
    write_outputs(out, &exp, &outcomes, &tables).unwrap();
    Replication {
        exp,
        outcomes,
        tables,
        elapsed: start.elapsed(),
    }
}

fn a1() -> Verdict {
    let link = LinkConfig::<f64>::default();
    let n = noise_power(&link);
    let peak = PhasedArray::<f64>::new(64, 64).unwrap().peak_gain_db();
    let clamped_peak = eirp(&link, peak);

    // Every record of a moving run, at the edge and the centre of the room.
    let (mut records, mut binding, mut over, mut inexact) = (0, 0, 0, 0);
    for (x, y) in [(1.0, 1.0), (2.5, 2.5), (0.5, 4.5)] {
        let mut spec = SynthSpec::new(Pattern::Gaming(Default::default()), 5.0, 250.0, 7);
        spec.position = Position::new(x, y, 1.7);
        let trace = synth_trace(&spec).unwrap();
        let cfg = RunConfig {
            ue_array: ArraySpec::square(16),
            ..RunConfig::default()
        };
        let r = run(&trace, &Scene::default(), &cfg).unwrap();
        for rec in &r.records {
            records += 1;
            binding += (rec.eirp_dbm == link.max_eirp_dbm) as usize;
            over += (rec.eirp_dbm > link.max_eirp_dbm) as usize;
            inexact += (rec.eirp_dbm != (link.tx_power_dbm + rec.tx_gain_db).min(link.max_eirp_dbm)) as usize;
        }
    }
    let noise_ok = (n - (-71.66)).abs() <= 0.01;
    let peak_ok = (peak - 44.12).abs() < 0.005 && clamped_peak == link.max_eirp_dbm;
    verdict(
        "A1",
        noise_ok && peak_ok && over == 0 && inexact == 0 && binding == records,
        format!(
            "noise {n:.4} dBm; 64x64 boresight gain {peak:.2} dBi -> EIRP {clamped_peak} dBm; \
             cap exceeded on {over} and misapplied on {inexact} of {records} records; \
             cap binding on {binding}/{records} records"
        ),
    )
}

/// Tick-weighted mean UE misalignment per `(set, mode, array elements, trace)`.
fn trace_means(rep: &Replication) -> BTreeMap<(String, MotionMode, usize, String), f64> {
    let mut m = BTreeMap::new();
    for (p, o) in rep.exp.plans.iter().zip(&rep.outcomes) {
        if p.omega_deg_s.is_some() {
            continue;
        }
        let s = o.as_ref().expect("run succeeded");
        m.insert(
            (p.trace_set.clone(), p.mode, p.elements, p.trace.clone()),
            s.aggregates.mean_ue_misalign_deg,
        );
    }
    m
}

fn a2(rep: &Replication) -> Verdict {
    let means = trace_means(rep);
    let mut parts = Vec::new();
    let mut any = false;
    for set in ["waypoint", "gaming"] {
        let mut ratios: Vec<(usize, String, f64)> = Vec::new();
        for ((s, mode, n, trace), ang) in &means {
            if s == set && *mode == MotionMode::AngularOnly {
                let lat = means[&(s.clone(), MotionMode::LateralOnly, *n, trace.clone())];
                ratios.push((*n, trace.clone(), ang / lat));
            }
        }
        let traces: std::collections::BTreeSet<&String> = ratios.iter().map(|r| &r.1).collect();
        let min = ratios.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
        let failing: std::collections::BTreeSet<usize> = ratios.iter().filter(|r| r.2 < 2.0).map(|r| r.0).collect();
        let ok = traces.len() >= 5 && failing.is_empty();
        any |= ok;
        parts.push(format!(
            "{set}: {} traces, min angular/lateral ratio {min:.2}{}",
            traces.len(),
            if failing.is_empty() {
                String::new()
            } else {
                format!(" (below 2 for arrays with {failing:?} elements)")
            }
        ));
    }
    verdict("A2", any, parts.join("; "))
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn a3(rep: &Replication) -> Verdict {
    let means = trace_means(rep);
    // Pool traces: runs in a group have equal length, so a plain mean is tick-weighted.
    let mut pooled: BTreeMap<(String, MotionMode), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for ((s, mode, n, _), v) in &means {
        pooled.entry((s.clone(), *mode)).or_default().entry(*n).or_default().push(*v);
    }
    let mut bad = Vec::new();
    for ((s, mode), by_n) in &pooled {
        let curve: Vec<f64> = by_n.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
        if !non_increasing(&curve) {
            bad.push(format!("{s}/{}: {curve:.3?}", mode.as_str()));
        }
    }
    let speed = rep.tables.speed_misalignment.as_ref().unwrap();
    let mut by_omega: BTreeMap<u64, Vec<(usize, f64)>> = BTreeMap::new();
    for r in speed {
        by_omega.entry(r.omega_deg_s.to_bits()).or_default().push((r.elements, r.mean_ue_misalign_deg));
    }
    for (w, mut v) in by_omega {
        v.sort_by_key(|x| x.0);
        let curve: Vec<f64> = v.iter().map(|x| x.1).collect();
        if !non_increasing(&curve) {
            bad.push(format!("sweep at {} deg/s: {curve:.3?}", f64::from_bits(w)));
        }
    }
    let mut widths = Vec::new();
    for n in [2usize, 4, 8, 16, 32, 64] {
        let a = PhasedArray::<f64>::new(n, n).unwrap();
        let b = Beam {
            id: 0,
            level: BeamLevel::Refined,
            boresight: DirectionAzEl::boresight(),
            parent: Some(0),
        };
        widths.push(half_power_beamwidth(&a, &b));
    }
    let hpbw_ok = widths.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1);
    let widths_s: Vec<String> = widths.iter().map(|w| format!("{:.1}", w.0)).collect();
    verdict(
        "A3",
        bad.is_empty() && hpbw_ok,
        format!(
            "{} misalignment curves non-increasing in array size{}; HPBW {} deg for 2..64 per axis",
            pooled.len() + 8,
            if bad.is_empty() { String::new() } else { format!(", violations: {}", bad.join("; ")) },
            widths_s.join(" > ")
        ),
    )
}

fn per_array<T>(rows: &[T], key: impl Fn(&T) -> (usize, String, f64, f64)) -> BTreeMap<(usize, String), Vec<(f64, f64)>> {
    let mut m: BTreeMap<(usize, String), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        let (n, label, w, v) = key(r);
        m.entry((n, label)).or_default().push((w, v));
    }
    for v in m.values_mut() {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    m
}

fn a4(rep: &Replication) -> Verdict {
    let rows = rep.tables.speed_misalignment.as_ref().unwrap();
    let curves = per_array(rows, |r| (r.elements, r.ue_array.clone(), r.omega_deg_s, r.mean_ue_misalign_deg));
    let mut ok = true;
    let mut parts = Vec::new();
    for ((_, label), c) in &curves {
        let w: Vec<f64> = c.iter().map(|p| p.0).collect();
        let v: Vec<f64> = c.iter().map(|p| p.1).collect();
        let strict = v.windows(2).all(|x| x[1] > x[0]);
        let rho = spearman(&w, &v).unwrap_or(f64::NAN);
        ok &= strict && rho == 1.0;
        parts.push(format!("{label} rho={rho:.3} ({:.2}->{:.2} deg)", v[0], v[v.len() - 1]));
    }
    verdict("A4", ok, parts.join(", "))
}

fn a5(rep: &Replication) -> Verdict {
    let rows = rep.tables.fig4.as_ref().unwrap();
    let curves = per_array(rows, |r| (r.elements, r.ue_array.clone(), r.omega_deg_s, r.mean_snr_db));
    let arrays: Vec<&(usize, String)> = curves.keys().collect();
    let first = &curves[arrays[0]];
    let last = &curves[arrays[arrays.len() - 1]];
    let base_ok = last[0].0 == 0.0 && last[0].1 > first[0].1;
    let mut reversals = Vec::new();
    for pair in arrays.windows(2) {
        let (small, big) = (&curves[pair[0]], &curves[pair[1]]);
        if let Some((w, _)) = small.iter().zip(big.iter()).map(|(s, b)| (s.0, b.1 - s.1)).find(|(_, d)| *d < 0.0) {
            reversals.push(format!("{} below {} from {w} deg/s", pair[1].1, pair[0].1));
        }
    }
    let margin: Vec<String> = first.iter().zip(last.iter()).map(|(s, b)| format!("{:.1}", b.1 - s.1)).collect();
    verdict(
        "A5",
        base_ok && !reversals.is_empty(),
        format!(
            "at 0 deg/s {} {:.2} dB vs {} {:.2} dB; reversals: {}; {}-{} margin by speed [{}]",
            arrays[arrays.len() - 1].1,
            last[0].1,
            arrays[0].1,
            first[0].1,
            if reversals.is_empty() { "none".into() } else { reversals.join(", ") },
            arrays[arrays.len() - 1].1,
            arrays[0].1,
            margin.join(", ")
        ),
    )
}

fn a6(rep: &Replication) -> Verdict {
    let rows = rep.tables.fig5.as_ref().unwrap();
    let curves = per_array(rows, |r| (r.elements, r.ue_array.clone(), r.omega_deg_s, r.outage_probability));
    let mut bad = Vec::new();
    for ((_, label), c) in &curves {
        if c[0].0 == 0.0 && c[0].1 != 0.0 {
            bad.push(format!("{label} static outage {}", c[0].1));
        }
        for w in c.windows(2) {
            if w[1].1 < w[0].1 {
                bad.push(format!("{label} drops {:.5}->{:.5} at {} deg/s", w[0].1, w[1].1, w[1].0));
            }
        }
    }
    let top: Vec<f64> = curves.values().map(|c| c[c.len() - 1].1).collect();
    if top.windows(2).any(|w| w[1] < w[0]) {
        bad.push(format!("not non-decreasing in elements at top speed: {top:.5?}"));
    }
    verdict(
        "A6",
        bad.is_empty(),
        if bad.is_empty() {
            format!("outage at top speed by array {top:.5?}; static cells 0")
        } else {
            bad.join("; ")
        },
    )
}

fn a7() -> Verdict {
    let scene = Scene::default();
    let ue_cb = ArraySpec::square(4).build().unwrap();
    let an_cb = ArraySpec::square(4).build().unwrap();
    let link = LinkConfig::default();
    let an = Endpoint {
        codebook: &an_cb,
        position: scene.an_position,
        frame: scene.an_orientation.to_rotation(),
    };
    let mount = scene.ue_mount.to_rotation();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let total = 1000;
    let (mut agree, mut in_fov, mut in_fov_agree, mut within) = (0, 0, 0, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..total {
        let pos = Position::new(rng.random_range(0.5..4.5), rng.random_range(0.5..4.5), rng.random_range(1.2..2.0));
        // Uniform over rotations: sin(pitch) uniform.
        let o = Orientation::new(
            rng.random_range(-180.0..180.0),
            rng.random_range(-1.0f64..1.0).asin().to_degrees(),
            rng.random_range(-180.0..180.0),
        )
        .unwrap();
        let ue = Endpoint {
            codebook: &ue_cb,
            position: pos,
            frame: o.to_rotation() * mount,
        };
        let h = sweep(&ue, &an, &link).unwrap();
        let x = exhaustive_sweep(&ue, &an, &link).unwrap();
        let same = (h.snr_db - x.snr_db).abs() < 1e-9;
        agree += same as usize;
        let fov = ue_cb.fov().contains(ue.los_to(&an.position).unwrap()) && an_cb.fov().contains(an.los_to(&pos).unwrap());
        if fov {
            in_fov += 1;
            in_fov_agree += same as usize;
            let (mu, ma) = misalignment_at(&ue, &an, h.ue_beam, h.an_beam).unwrap();
            let excess = (mu - ue_cb.quantization_bound_deg()).max(ma - an_cb.quantization_bound_deg());
            worst = worst.max(excess);
            within += (excess <= 0.0) as usize;
        }
    }
    let pass = agree * 100 >= total * 95 && within == in_fov && in_fov > 0;
    verdict(
        "A7",
        pass,
        format!(
            "hierarchical = exhaustive on {agree}/{total} poses ({in_fov_agree}/{in_fov} in fov); \
             misalignment within bound on {within}/{in_fov} in-fov poses (UE bound {:.2} deg{})",
            ue_cb.quantization_bound_deg(),
            if within == in_fov { String::new() } else { format!(", worst excess {worst:.2} deg") }
        ),
    )
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn manifest_without_time(p: &Path) -> Manifest {
    let mut m: Manifest = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
    m.created_unix_s = 0;
    m
}

fn a8(rep: &Replication, first: &Path) -> Verdict {
    let second = tempfile::tempdir().unwrap();
    let again = replicate(second.path());
    let (fa, fb) = (files_under(first), files_under(second.path()));
    let mut differing = Vec::new();
    if fa != fb {
        differing.push("file lists".to_string());
    }
    for f in &fa {
        let identical = if f.as_os_str() == "manifest.json" {
            manifest_without_time(&first.join(f)) == manifest_without_time(&second.path().join(f))
        } else {
            fs::read(first.join(f)).unwrap() == fs::read(second.path().join(f)).unwrap()
        };
        if !identical {
            differing.push(f.display().to_string());
        }
    }
    let identical = differing.is_empty() && again.tables == rep.tables;

    // Sweep counts over a range of trace spans, including exact multiples of
    // the beacon interval.
    let mut count_bad = Vec::new();
    for (dur, rate) in [(0.35, 1000.0), (1.0, 1000.0), (1.001, 1000.0), (10.0, 250.0), (10.001, 1000.0), (37.3, 90.0)] {
        let spec = SynthSpec::new(
            Pattern::YawSweep {
                omega_deg_s: 60.0,
                arc_deg: 120.0,
                phase_deg: 0.0,
            },
            dur,
            rate,
            1,
        );
        let trace = synth_trace(&spec).unwrap();
        let r = run(&trace, &Scene::default(), &RunConfig::default()).unwrap();
        let t = trace.duration();
        let expected = (t / 0.1 + 1e-9).floor() as u64 + 1;
        if r.aggregates.sweep_count != expected {
            count_bad.push(format!("T={t}: {} sweeps, expected {expected}", r.aggregates.sweep_count));
        }
    }

    let mut accounting_bad = 0;
    for (p, o) in rep.exp.plans.iter().zip(&rep.outcomes) {
        let a = &o.as_ref().unwrap().aggregates;
        let align = rep.exp.spec.schedule.alignment_ticks(rep.exp.spec.tick_hz);
        if p.policy == Policy::Periodic && a.aligning_ticks != a.sweep_count * align {
            accounting_bad += 1;
        }
    }
    let fast = rep.elapsed < Duration::from_secs(600);
    verdict(
        "A8",
        identical && count_bad.is_empty() && accounting_bad == 0 && fast,
        format!(
            "rerun {} across {} files; sweep counts {}; aligning-tick accounting off on {accounting_bad}/{} runs; \
             replication {:.1} s with {} workers",
            if identical { "bit-identical".to_string() } else { format!("differs in {}", differing.join(", ")) },
            fa.len(),
            if count_bad.is_empty() { "match floor(T/0.1)+1".to_string() } else { count_bad.join("; ") },
            rep.outcomes.len(),
            rep.elapsed.as_secs_f64(),
            jobs()
        ),
    )
}

#[test]
fn acceptance() {
    let mut verdicts = vec![a1()];
    let first = tempfile::tempdir().unwrap();
    let rep = replicate(first.path());
    assert!(rep.outcomes.iter().all(|o| o.is_ok()), "replication runs failed");
    verdicts.push(a2(&rep));
    verdicts.push(a3(&rep));
    verdicts.push(a4(&rep));
    verdicts.push(a5(&rep));
    verdicts.push(a6(&rep));
    verdicts.push(a7());
    verdicts.push(a8(&rep, first.path()));

    for v in &verdicts {
        println!("{} {} {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed: Vec<&str> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
