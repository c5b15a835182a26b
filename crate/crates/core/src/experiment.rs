//! Declarative experiments: a TOML spec expands into a cartesian product of
//! runs, executed on a worker pool and reduced into figure tables.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beammgmt::{BeamSchedule, Policy};
use crate::error::{MetricsError, SimError};
use crate::geometry::{Orientation, Position, EULER_CONVENTION};
use crate::link::LinkConfig;
use crate::metrics::{
    binned_mean_snr, heatmap, mean_yaw_deg, misalignment_table, outage_table, write_fig2, write_fig3, write_fig4,
    write_fig5, CdfCurve, CellResult, HeatQuantity, HeatmapEntry, MisalignRow, OrientationHeatmap, OutageRow,
    SnrRow, StepHistogram,
};
use crate::mobility::{decompose, parse_trace, synth_trace, DecomposeMode, MobilityTrace, Pattern, SchemaOptions, SynthSpec};
use crate::phasedarray::Codebook;
use crate::simcore::{run_with_codebooks, write_records_csv, Aggregates, ArraySpec, Provenance, RunConfig, Scene};

/// Default angular-speed grid in deg/s.
pub const DEFAULT_OMEGA_GRID: [f64; 8] = [0.0, 30.0, 60.0, 90.0, 120.0, 180.0, 240.0, 360.0];

/// Which part of the motion a run keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionMode {
    Full,
    LateralOnly,
    AngularOnly,
}

impl MotionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            MotionMode::Full => "full",
            MotionMode::LateralOnly => "lateral_only",
            MotionMode::AngularOnly => "angular_only",
        }
    }

    pub fn apply(&self, trace: &MobilityTrace) -> Result<MobilityTrace, SimError> {
        Ok(match self {
            MotionMode::Full => trace.clone(),
            MotionMode::LateralOnly => decompose(trace, DecomposeMode::LateralOnly)?,
            MotionMode::AngularOnly => decompose(trace, DecomposeMode::AngularOnly)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileInput {
    /// Relative paths resolve against the spec's directory.
    pub path: PathBuf,
    #[serde(default)]
    pub schema: SchemaOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthInput {
    pub pattern: Pattern,
    pub duration_s: f64,
    #[serde(default = "default_synth_rate")]
    pub rate_hz: f64,
    /// One trace per seed; empty means the experiment seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Position<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Orientation<f64>>,
}

fn default_synth_rate() -> f64 {
    250.0
}

/// A named group of traces, from either `files` or `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSet {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<FileInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthInput>,
    #[serde(default = "default_modes")]
    pub modes: Vec<MotionMode>,
    /// Repeat the synthetic pattern at every speed of the ω grid.
    #[serde(default)]
    pub omega_sweep: bool,
    /// Sweep patterns only: number of start phases spread evenly over one
    /// period. Each speed is averaged over the same orientation range.
    #[serde(default = "one")]
    pub phases: usize,
}

fn default_modes() -> Vec<MotionMode> {
    vec![MotionMode::Full]
}

fn one() -> usize {
    1
}

/// How heatmap yaw is referenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YawReference {
    Absolute,
    /// Relative to the circular mean yaw of each trace.
    #[default]
    MeanYaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    pub heatmap_bin_deg: f64,
    pub heatmap_yaw_reference: YawReference,
    pub cdf_step_deg: f64,
    /// Average SNR in linear power instead of dB.
    pub snr_linear: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            heatmap_bin_deg: 10.0,
            heatmap_yaw_reference: YawReference::MeanYaw,
            cdf_step_deg: 0.25,
            snr_linear: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub tick_hz: f64,
    pub output_dir: PathBuf,
    /// Write one record CSV per run next to its aggregate JSON.
    pub write_records: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    pub omega_grid: Vec<f64>,
    /// Empty means `schedule.policy` alone.
    pub policies: Vec<Policy>,
    pub scene: Scene,
    pub schedule: BeamSchedule,
    pub link: LinkConfig<f64>,
    pub report: ReportOptions,
    pub an_array: ArraySpec,
    pub ue_arrays: Vec<ArraySpec>,
    pub traces: Vec<TraceSet>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seed: 0,
            tick_hz: 1000.0,
            output_dir: "out".into(),
            write_records: true,
            jobs: None,
            omega_grid: DEFAULT_OMEGA_GRID.to_vec(),
            policies: Vec::new(),
            scene: Scene::default(),
            schedule: BeamSchedule::default(),
            link: LinkConfig::default(),
            report: ReportOptions::default(),
            an_array: ArraySpec::square(64),
            ue_arrays: [2, 4, 8, 16].map(ArraySpec::square).to_vec(),
            traces: Vec::new(),
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

impl ExperimentSpec {
    pub fn from_toml_str(s: &str) -> Result<Self, SimError> {
        toml::from_str(s).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, SimError> {
        toml::to_string_pretty(self).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn effective_policies(&self) -> Vec<Policy> {
        if self.policies.is_empty() {
            vec![self.schedule.policy]
        } else {
            self.policies.clone()
        }
    }

    /// Checks everything that does not need file access.
    pub fn validate(&self) -> Result<(), SimError> {
        self.scene.validate()?;
        if self.ue_arrays.is_empty() {
            return Err(cfg_err("ue_arrays: at least one array is required"));
        }
        let policies = self.effective_policies();
        let mut seen = policies.clone();
        seen.sort_by_key(|p| p.as_str());
        seen.dedup();
        if seen.len() != policies.len() {
            return Err(cfg_err("policies: duplicate entry"));
        }
        for p in &policies {
            self.run_config(&self.ue_arrays[0], *p).validate()?;
        }
        let r = &self.report;
        if !(r.heatmap_bin_deg.is_finite() && r.heatmap_bin_deg > 0.0 && r.heatmap_bin_deg <= 180.0) {
            return Err(cfg_err(format!("report.heatmap_bin_deg: {} not in (0, 180]", r.heatmap_bin_deg)));
        }
        if !(r.cdf_step_deg.is_finite() && r.cdf_step_deg > 0.0) {
            return Err(cfg_err(format!("report.cdf_step_deg: {} must be positive", r.cdf_step_deg)));
        }
        if self.jobs == Some(0) {
            return Err(cfg_err("jobs: must be at least 1"));
        }
        if self.traces.is_empty() {
            return Err(cfg_err("traces: at least one trace set is required"));
        }
        let mut names: Vec<&str> = Vec::new();
        for (i, set) in self.traces.iter().enumerate() {
            let at = format!("traces[{i}]");
            if set.name.is_empty() || set.name.contains('/') {
                return Err(cfg_err(format!("{at}.name: must be non-empty without '/'")));
            }
            if names.contains(&set.name.as_str()) {
                return Err(cfg_err(format!("{at}.name: duplicate set name {:?}", set.name)));
            }
            names.push(&set.name);
            if set.modes.is_empty() {
                return Err(cfg_err(format!("{at}.modes: at least one mode is required")));
            }
            let mut m = set.modes.clone();
            m.sort();
            m.dedup();
            if m.len() != set.modes.len() {
                return Err(cfg_err(format!("{at}.modes: duplicate entry")));
            }
            if set.phases == 0 {
                return Err(cfg_err(format!("{at}.phases: must be at least 1")));
            }
            match (&set.synth, set.files.is_empty()) {
                (Some(_), false) | (None, true) => {
                    return Err(cfg_err(format!("{at}: set exactly one of `files` or `synth`")));
                }
                (None, false) => {
                    if set.omega_sweep || set.phases > 1 {
                        return Err(cfg_err(format!("{at}: omega_sweep and phases need a synth pattern")));
                    }
                }
                (Some(s), true) => self.validate_synth(&at, set, s)?,
            }
        }
        Ok(())
    }

    fn validate_synth(&self, at: &str, set: &TraceSet, s: &SynthInput) -> Result<(), SimError> {
        let is_sweep = matches!(s.pattern, Pattern::YawSweep { .. } | Pattern::PitchSweep { .. });
        if set.phases > 1 && !is_sweep {
            return Err(cfg_err(format!("{at}.phases: only yaw_sweep and pitch_sweep have a phase")));
        }
        let omegas: Vec<Option<f64>> = if set.omega_sweep {
            if self.omega_grid.is_empty() {
                return Err(cfg_err("omega_grid: empty grid with an omega_sweep set"));
            }
            if let Some(w) = self.omega_grid.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
                return Err(cfg_err(format!("omega_grid: {w} must be finite and non-negative")));
            }
            let mut g = self.omega_grid.clone();
            g.sort_by(f64::total_cmp);
            g.dedup();
            if g.len() != self.omega_grid.len() {
                return Err(cfg_err("omega_grid: duplicate speed"));
            }
            self.omega_grid.iter().map(|w| Some(*w)).collect()
        } else {
            vec![None]
        };
        for w in omegas {
            let spec = self
                .synth_spec(s, s.seeds.first().copied().unwrap_or(self.seed), w, 0, set.phases)
                .ok_or_else(|| cfg_err(format!("{at}.synth.pattern: {} has no angular speed to sweep", s.pattern.kind())))?;
            synth_trace(&spec).map_err(|e| cfg_err(format!("{at}.synth: {e}")))?;
        }
        Ok(())
    }

    fn synth_spec(&self, s: &SynthInput, seed: u64, omega: Option<f64>, phase: usize, phases: usize) -> Option<SynthSpec> {
        let mut pattern = match omega {
            Some(w) => s.pattern.with_omega(w)?,
            None => s.pattern.clone(),
        };
        match &mut pattern {
            Pattern::YawSweep { arc_deg, phase_deg, .. } | Pattern::PitchSweep { arc_deg, phase_deg, .. } => {
                *phase_deg += 2.0 * *arc_deg * phase as f64 / phases as f64;
            }
            _ => {}
        }
        let mut spec = SynthSpec::new(pattern, s.duration_s, s.rate_hz, seed);
        if let Some(p) = s.position {
            spec.position = p;
        }
        if let Some(b) = s.base {
            spec.base = b;
        }
        Some(spec)
    }

    fn run_config(&self, ue: &ArraySpec, policy: Policy) -> RunConfig {
        RunConfig {
            ue_array: *ue,
            an_array: self.an_array,
            schedule: BeamSchedule { policy, ..self.schedule },
            link: self.link,
            tick_hz: self.tick_hz,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum PlanSource {
    File(usize),
    Synth(SynthSpec),
}

/// One concrete run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunPlan {
    pub index: usize,
    pub label: String,
    pub trace_set: String,
    /// Trace set, suffixed with the policy when several policies run.
    pub series: String,
    pub trace: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_deg_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<usize>,
    pub mode: MotionMode,
    pub ue_array: String,
    pub elements: usize,
    pub policy: Policy,
    #[serde(skip)]
    array: usize,
    #[serde(skip)]
    source: PlanSource,
}

/// A validated spec with loaded traces, built codebooks and its run plan.
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub plans: Vec<RunPlan>,
    files: Vec<MobilityTrace>,
    ue_codebooks: Vec<Codebook<f64>>,
    an_codebook: Codebook<f64>,
}

impl Experiment {
    /// Validates the spec, loads file traces and expands every run. Nothing
    /// is simulated yet.
    pub fn prepare(spec: ExperimentSpec, base_dir: &Path) -> Result<Self, SimError> {
        spec.validate()?;
        let ue_codebooks = spec
            .ue_arrays
            .iter()
            .enumerate()
            .map(|(i, a)| a.build().map_err(|e| cfg_err(format!("ue_arrays[{i}]: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let an_codebook = spec.an_array.build().map_err(|e| cfg_err(format!("an_array: {e}")))?;
        let policies = spec.effective_policies();
        let multi_policy = policies.len() > 1;

        let mut files = Vec::new();
        let mut plans = Vec::new();
        for (si, set) in spec.traces.iter().enumerate() {
            // (trace label, source, ω, phase)
            let mut sources: Vec<(String, PlanSource, Option<f64>, Option<usize>)> = Vec::new();
            for (fi, f) in set.files.iter().enumerate() {
                let path = if f.path.is_absolute() { f.path.clone() } else { base_dir.join(&f.path) };
                let mut schema = f.schema.clone();
                if schema.participant == SchemaOptions::default().participant {
                    schema.participant = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                }
                let file = File::open(&path)
                    .map_err(|e| cfg_err(format!("traces[{si}].files[{fi}]: {}: {e}", path.display())))?;
                let trace = parse_trace(file, &schema)
                    .map_err(|e| cfg_err(format!("traces[{si}].files[{fi}]: {}: {e}", path.display())))?;
                sources.push((schema.participant.clone(), PlanSource::File(files.len()), None, None));
                files.push(trace);
            }
            if let Some(s) = &set.synth {
                let seeds = if s.seeds.is_empty() { vec![spec.seed] } else { s.seeds.clone() };
                let omegas: Vec<Option<f64>> = if set.omega_sweep {
                    spec.omega_grid.iter().map(|w| Some(*w)).collect()
                } else {
                    vec![None]
                };
                for seed in &seeds {
                    for w in &omegas {
                        for p in 0..set.phases {
                            let synth = spec.synth_spec(s, *seed, *w, p, set.phases).expect("validated");
                            let mut label = format!("{}-{seed}", s.pattern.kind());
                            if let Some(w) = w {
                                label += &format!("-w{w}");
                            }
                            if set.phases > 1 {
                                label += &format!("-p{p}");
                            }
                            let phase = (set.phases > 1).then_some(p);
                            sources.push((label, PlanSource::Synth(synth), *w, phase));
                        }
                    }
                }
            }
            for (trace, source, omega, phase) in sources {
                for mode in &set.modes {
                    for (ai, a) in spec.ue_arrays.iter().enumerate() {
                        for policy in &policies {
                            let series = if multi_policy {
                                format!("{}/{}", set.name, policy.as_str())
                            } else {
                                set.name.clone()
                            };
                            plans.push(RunPlan {
                                index: plans.len(),
                                label: format!("{}/{trace}/{}/{}/{}", set.name, mode.as_str(), a.label(), policy.as_str()),
                                trace_set: set.name.clone(),
                                series,
                                trace: trace.clone(),
                                omega_deg_s: omega,
                                phase,
                                mode: *mode,
                                ue_array: a.label(),
                                elements: a.n_az * a.n_el,
                                policy: *policy,
                                array: ai,
                                source: source.clone(),
                            });
                        }
                    }
                }
            }
        }
        Ok(Self {
            spec,
            plans,
            files,
            ue_codebooks,
            an_codebook,
        })
    }

    /// Runs every plan on a pool of `jobs` workers. Results come back in
    /// plan order whatever the completion order. With `out_dir`, each worker
    /// writes its own per-run files under `runs/`.
    pub fn execute(&self, jobs: usize, out_dir: Option<&Path>) -> Result<Vec<RunOutcome>, SimError> {
        if let Some(dir) = out_dir {
            fs::create_dir_all(dir.join("runs"))?;
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| cfg_err(format!("worker pool: {e}")))?;
        Ok(pool.install(|| {
            self.plans
                .par_iter()
                .map(|p| {
                    self.execute_one(p, out_dir).map_err(|e| RunFailure {
                        index: p.index,
                        label: p.label.clone(),
                        error: e.to_string(),
                    })
                })
                .collect()
        }))
    }

    pub fn execute_one(&self, plan: &RunPlan, out_dir: Option<&Path>) -> Result<RunSummary, SimError> {
        let generated;
        let base = match &plan.source {
            PlanSource::File(i) => &self.files[*i],
            PlanSource::Synth(s) => {
                generated = synth_trace(s)?;
                &generated
            }
        };
        let trace = plan.mode.apply(base)?;
        let cfg = self.spec.run_config(&self.spec.ue_arrays[plan.array], plan.policy);
        let result = run_with_codebooks(
            &trace,
            &self.spec.scene,
            &cfg,
            &self.ue_codebooks[plan.array],
            &self.an_codebook,
        )?;

        let report = &self.spec.report;
        let mut misalignment = StepHistogram::new(report.cdf_step_deg);
        result.records.iter().for_each(|r| misalignment.add(r.ue_misalign_deg));
        let heatmaps = if plan.mode == MotionMode::Full && plan.omega_deg_s.is_none() {
            let yaw_ref = match report.heatmap_yaw_reference {
                YawReference::Absolute => 0.0,
                YawReference::MeanYaw => mean_yaw_deg(&result.trace),
            };
            let speed = heatmap(&result.records, &result.trace, HeatQuantity::AngularSpeed, report.heatmap_bin_deg, yaw_ref)?;
            let mis = heatmap(&result.records, &result.trace, HeatQuantity::UeMisalignment, report.heatmap_bin_deg, yaw_ref)?;
            Some([speed, mis])
        } else {
            None
        };
        let cell = plan
            .omega_deg_s
            .map(|w| CellResult::from_result(&plan.series, w, &plan.ue_array, plan.elements, &result));

        if let Some(dir) = out_dir {
            let stem = dir.join("runs").join(format!("run_{:05}", plan.index));
            if self.spec.write_records {
                let f = BufWriter::new(File::create(stem.with_extension("csv"))?);
                write_records_csv(&result.records, f)?;
            }
            let f = BufWriter::new(File::create(stem.with_extension("json"))?);
            serde_json::to_writer_pretty(
                f,
                &serde_json::json!({
                    "plan": plan,
                    "aggregates": result.aggregates,
                    "provenance": result.provenance,
                }),
            )?;
        }

        Ok(RunSummary {
            index: plan.index,
            aggregates: result.aggregates,
            provenance: result.provenance,
            misalignment,
            heatmaps,
            cell,
        })
    }

    /// Reduces successful runs into figure tables. Runs are folded in plan
    /// order, so the tables do not depend on scheduling.
    pub fn tables(&self, outcomes: &[RunOutcome]) -> Tables {
        let ok: Vec<&RunSummary> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();

        let mut cdfs: BTreeMap<(String, MotionMode, usize, String), StepHistogram> = BTreeMap::new();
        let mut maps: BTreeMap<(String, usize, String), [OrientationHeatmap; 2]> = BTreeMap::new();
        let mut cells = Vec::new();
        for s in &ok {
            let p = &self.plans[s.index];
            if let Some(c) = &s.cell {
                cells.push(c.clone());
                continue;
            }
            cdfs.entry((p.series.clone(), p.mode, p.elements, p.ue_array.clone()))
                .or_insert_with(|| StepHistogram::new(self.spec.report.cdf_step_deg))
                .merge(&s.misalignment);
            if let Some(h) = &s.heatmaps {
                match maps.entry((p.series.clone(), p.elements, p.ue_array.clone())) {
                    std::collections::btree_map::Entry::Vacant(v) => {
                        v.insert(h.clone());
                    }
                    std::collections::btree_map::Entry::Occupied(mut o) => {
                        let m = o.get_mut();
                        m[0].merge(&h[0]).expect("same binning");
                        m[1].merge(&h[1]).expect("same binning");
                    }
                }
            }
        }

        let fig2 = cdfs
            .into_iter()
            .map(|((set, mode, _, array), h)| {
                Ok(CdfCurve {
                    trace_set: set,
                    mode: mode.as_str().to_string(),
                    ue_array: array,
                    cdf: h.to_cdf()?,
                })
            })
            .collect::<Result<Vec<_>, MetricsError>>()
            .map_err(|e| e.to_string());
        let fig3 = maps
            .into_iter()
            .flat_map(|((set, _, array), [speed, mis])| {
                [(HeatQuantity::AngularSpeed, speed), (HeatQuantity::UeMisalignment, mis)].map(|(quantity, map)| {
                    HeatmapEntry {
                        trace_set: set.clone(),
                        ue_array: array.clone(),
                        quantity,
                        map,
                    }
                })
            })
            .collect();
        // No sweep runs means no speed tables, which is not an error.
        fn opt<R>(any: bool, r: Result<Vec<R>, MetricsError>) -> Result<Vec<R>, String> {
            if any {
                r.map_err(|e| e.to_string())
            } else {
                Ok(Vec::new())
            }
        }
        let any = !cells.is_empty();
        Tables {
            fig2,
            fig3,
            fig4: opt(any, binned_mean_snr(&cells, self.spec.report.snr_linear)),
            fig5: opt(any, outage_table(&cells)),
            speed_misalignment: opt(any, misalignment_table(&cells)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub index: usize,
    pub label: String,
    pub error: String,
}

/// What is kept from a run once its records are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub index: usize,
    pub aggregates: Aggregates,
    pub provenance: Provenance,
    pub misalignment: StepHistogram,
    /// Angular speed and misalignment maps, for full-motion trace runs.
    pub heatmaps: Option<[OrientationHeatmap; 2]>,
    /// Set for runs of an ω sweep.
    pub cell: Option<CellResult>,
}

pub type RunOutcome = Result<RunSummary, RunFailure>;

/// Figure tables. A table that could not be built carries its error.
#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub fig2: Result<Vec<CdfCurve>, String>,
    pub fig3: Vec<HeatmapEntry>,
    pub fig4: Result<Vec<SnrRow>, String>,
    pub fig5: Result<Vec<OutageRow>, String>,
    pub speed_misalignment: Result<Vec<MisalignRow>, String>,
}

/// Columns of `aggregates.csv`, one row per run.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct AggregateRow<'a> {
    run: usize,
    label: &'a str,
    trace_set: &'a str,
    trace: &'a str,
    mode: &'a str,
    omega_deg_s: Option<f64>,
    phase: Option<usize>,
    ue_array: &'a str,
    policy: &'a str,
    status: &'a str,
    ticks: Option<u64>,
    mean_ue_misalign_deg: Option<f64>,
    median_ue_misalign_deg: Option<f64>,
    p95_ue_misalign_deg: Option<f64>,
    mean_an_misalign_deg: Option<f64>,
    mean_snr_db: Option<f64>,
    mean_snr_linear_db: Option<f64>,
    outage_probability: Option<f64>,
    outage_ticks: Option<u64>,
    aligning_ticks: Option<u64>,
    blanked_ticks: Option<u64>,
    sweep_count: Option<u64>,
    switch_count: Option<u64>,
    max_eirp_dbm: Option<f64>,
    config_hash: &'a str,
    trace_id: &'a str,
    error: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub index: usize,
    pub label: String,
    pub status: String,
    pub config_hash: Option<String>,
    pub trace_id: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTable {
    pub file: String,
    pub rows: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub tool_version: String,
    pub convention: String,
    pub seed: u64,
    /// Seconds since the Unix epoch; the only field that changes on rerun.
    pub created_unix_s: u64,
    pub spec: ExperimentSpec,
    pub runs: Vec<ManifestRun>,
    pub failed: usize,
    pub tables: Vec<ManifestTable>,
}

impl Manifest {
    pub fn is_clean(&self) -> bool {
        self.failed == 0 && self.tables.iter().all(|t| t.error.is_none())
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const AGGREGATES_FILE: &str = "aggregates.csv";

/// Writes the aggregate table, figure tables, spec copy and manifest.
pub fn write_outputs(
    dir: &Path,
    exp: &Experiment,
    outcomes: &[RunOutcome],
    tables: &Tables,
) -> Result<Manifest, SimError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("spec.toml"), exp.spec.to_toml_string()?)?;

    let mut agg = csv::Writer::from_writer(BufWriter::new(File::create(dir.join(AGGREGATES_FILE))?));
    let mut runs = Vec::with_capacity(outcomes.len());
    for (p, o) in exp.plans.iter().zip(outcomes) {
        let (a, prov, err) = match o {
            Ok(s) => (Some(&s.aggregates), Some(&s.provenance), None),
            Err(f) => (None, None, Some(f.error.as_str())),
        };
        agg.serialize(AggregateRow {
            run: p.index,
            label: &p.label,
            trace_set: &p.trace_set,
            trace: &p.trace,
            mode: p.mode.as_str(),
            omega_deg_s: p.omega_deg_s,
            phase: p.phase,
            ue_array: &p.ue_array,
            policy: p.policy.as_str(),
            status: if o.is_ok() { "ok" } else { "failed" },
            ticks: a.map(|a| a.ticks),
            mean_ue_misalign_deg: a.map(|a| a.mean_ue_misalign_deg),
            median_ue_misalign_deg: a.map(|a| a.median_ue_misalign_deg),
            p95_ue_misalign_deg: a.map(|a| a.p95_ue_misalign_deg),
            mean_an_misalign_deg: a.map(|a| a.mean_an_misalign_deg),
            mean_snr_db: a.map(|a| a.mean_snr_db),
            mean_snr_linear_db: a.map(|a| a.mean_snr_linear_db),
            outage_probability: a.map(|a| a.outage_probability),
            outage_ticks: a.map(|a| a.outage_ticks),
            aligning_ticks: a.map(|a| a.aligning_ticks),
            blanked_ticks: a.map(|a| a.blanked_ticks),
            sweep_count: a.map(|a| a.sweep_count),
            switch_count: a.map(|a| a.switch_count),
            max_eirp_dbm: a.map(|a| a.max_eirp_dbm),
            config_hash: prov.map_or("", |p| &p.config_hash),
            trace_id: prov.map_or("", |p| &p.trace_id),
            error: err.unwrap_or(""),
        })?;
        runs.push(ManifestRun {
            index: p.index,
            label: p.label.clone(),
            status: if o.is_ok() { "ok".into() } else { "failed".into() },
            config_hash: prov.map(|p| p.config_hash.clone()),
            trace_id: prov.map(|p| p.trace_id.clone()),
            error: err.map(str::to_string),
        });
    }
    agg.flush()?;
    drop(agg);

    let mut entries = Vec::new();
    let mut emit = |file: &str, rows: Result<usize, &String>, write: &dyn Fn(File) -> Result<(), csv::Error>| {
        match rows {
            Ok(0) => Ok(()),
            Ok(n) => {
                write(File::create(dir.join(file))?)?;
                entries.push(ManifestTable {
                    file: file.into(),
                    rows: n,
                    error: None,
                });
                Ok::<(), SimError>(())
            }
            Err(e) => {
                entries.push(ManifestTable {
                    file: file.into(),
                    rows: 0,
                    error: Some(e.clone()),
                });
                Ok(())
            }
        }
    };
    let step = exp.spec.report.cdf_step_deg;
    emit("fig2_cdf.csv", tables.fig2.as_ref().map(Vec::len), &|f| {
        write_fig2(tables.fig2.as_ref().expect("ok"), step, BufWriter::new(f))
    })?;
    emit("fig3_heatmap.csv", Ok(tables.fig3.len()), &|f| write_fig3(&tables.fig3, BufWriter::new(f)))?;
    emit("fig4_snr.csv", tables.fig4.as_ref().map(Vec::len), &|f| {
        write_fig4(tables.fig4.as_ref().expect("ok"), BufWriter::new(f))
    })?;
    emit("fig5_outage.csv", tables.fig5.as_ref().map(Vec::len), &|f| {
        write_fig5(tables.fig5.as_ref().expect("ok"), BufWriter::new(f))
    })?;
    emit(
        "speed_misalignment.csv",
        tables.speed_misalignment.as_ref().map(Vec::len),
        &|f| {
            let mut w = csv::Writer::from_writer(BufWriter::new(f));
            for r in tables.speed_misalignment.as_ref().expect("ok") {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(())
        },
    )?;

    let manifest = Manifest {
        name: exp.spec.name.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        convention: EULER_CONVENTION.to_string(),
        seed: exp.spec.seed,
        created_unix_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        spec: exp.spec.clone(),
        failed: outcomes.iter().filter(|o| o.is_err()).count(),
        runs,
        tables: entries,
    };
    let f = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(f, &manifest)?;
    Ok(manifest)
}

/// Prepares, runs and reduces a spec in one call, without writing files.
pub fn sweep_experiment(
    spec: ExperimentSpec,
    base_dir: &Path,
    jobs: usize,
) -> Result<(Experiment, Vec<RunOutcome>, Tables), SimError> {
    let exp = Experiment::prepare(spec, base_dir)?;
    let outcomes = exp.execute(jobs, None)?;
    let tables = exp.tables(&outcomes);
    Ok((exp, outcomes, tables))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentSpec {
        ExperimentSpec::from_toml_str(
            r#"
            name = "small"
            omega_grid = [0.0, 90.0, 180.0]
            an_array = { n_az = 8, n_el = 8 }
            ue_arrays = [{ n_az = 2, n_el = 2 }, { n_az = 4, n_el = 4 }]

            [[traces]]
            name = "sweep"
            omega_sweep = true
            synth = { pattern = { kind = "yaw_sweep", omega_deg_s = 0.0 }, duration_s = 0.5, rate_hz = 1000.0 }
            "#,
        )
        .unwrap()
    }

    #[test]
    fn two_arrays_three_speeds_give_six_runs() {
        let (exp, out, tables) = sweep_experiment(small(), Path::new("."), 2).unwrap();
        assert_eq!(exp.plans.len(), 6);
        assert!(out.iter().all(|o| o.is_ok()));
        assert_eq!(tables.fig4.as_ref().unwrap().len(), 6);
        assert_eq!(tables.fig5.as_ref().unwrap().len(), 6);
        assert!(tables.fig2.as_ref().unwrap().is_empty());
    }

    #[test]
    fn job_count_does_not_change_tables() {
        let (_, a, ta) = sweep_experiment(small(), Path::new("."), 1).unwrap();
        let (_, b, tb) = sweep_experiment(small(), Path::new("."), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn phases_spread_over_one_period() {
        let mut spec = small();
        spec.traces[0].phases = 4;
        let exp = Experiment::prepare(spec, Path::new(".")).unwrap();
        assert_eq!(exp.plans.len(), 24);
        let phases: Vec<f64> = exp
            .plans
            .iter()
            .filter(|p| p.ue_array == "2x2" && p.omega_deg_s == Some(90.0))
            .map(|p| match &p.source {
                PlanSource::Synth(SynthSpec {
                    pattern: Pattern::YawSweep { phase_deg, .. },
                    ..
                }) => *phase_deg,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(phases, vec![0.0, 60.0, 120.0, 180.0]);
    }

    #[test]
    fn bad_specs_fail_before_running() {
        let mut s = small();
        s.traces[0].synth.as_mut().unwrap().pattern = Pattern::Static;
        assert!(matches!(s.validate(), Err(SimError::Config(m)) if m.contains("no angular speed")));

        let mut s = small();
        s.traces[0].phases = 2;
        s.traces[0].synth.as_mut().unwrap().pattern = Pattern::RandomWaypoint {
            omega_deg_s: 10.0,
            yaw_range: [-180.0, 180.0],
            pitch_range: [-90.0, 90.0],
            roll_range: [-180.0, 180.0],
        };
        assert!(s.validate().is_err());

        let mut s = small();
        s.tick_hz = 333.0;
        assert!(s.validate().is_err());

        let mut s = small();
        s.traces.push(s.traces[0].clone());
        assert!(matches!(s.validate(), Err(SimError::Config(m)) if m.contains("duplicate set name")));

        let e = ExperimentSpec::from_toml_str("nme = 1").unwrap_err();
        assert!(e.to_string().contains("nme"), "{e}");

        let mut s = small();
        s.traces[0].synth = None;
        s.traces[0].files.push(FileInput {
            path: "does/not/exist.csv".into(),
            schema: SchemaOptions::default(),
        });
        s.traces[0].omega_sweep = false;
        assert!(matches!(Experiment::prepare(s, Path::new(".")), Err(SimError::Config(m)) if m.contains("exist.csv")));
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let s = small();
        let back = ExperimentSpec::from_toml_str(&s.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, s);
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../cli/specs/replication.toml");
        let bundled = ExperimentSpec::from_toml_str(&fs::read_to_string(path).unwrap()).unwrap();
        bundled.validate().unwrap();
        let d = ExperimentSpec::default();
        assert_eq!(ExperimentSpec::from_toml_str(&d.to_toml_string().unwrap()).unwrap(), d);
    }
}
