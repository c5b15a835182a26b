//! `beamsim` command-line front end.
//!
//! Exit codes: 0 success, 1 validation or domain failure, 2 I/O or config
//! failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use beamsim::experiment::{write_outputs, Experiment, ExperimentSpec, Manifest, AGGREGATES_FILE, MANIFEST_FILE};
use beamsim::mobility::{scan_trace, synth_trace, write_meta_json, write_trace_csv, Pattern, SchemaOptions, SynthSpec, TimeUnit};
use beamsim::{Orientation, Position, SimError, TraceError};
use clap::{Args, Parser, Subcommand, ValueEnum};

const REPLICATION_SPEC: &str = include_str!("../specs/replication.toml");

#[derive(Parser)]
#[command(name = "beamsim", version, about = "60 GHz headset beam-tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a pose trace against the 7-column schema.
    Validate(ValidateArgs),
    /// Generate a synthetic pose trace.
    Synth(SynthArgs),
    /// Run an experiment spec.
    Run(RunArgs),
    /// Summarise an experiment output directory.
    Report(ReportArgs),
    /// Print configuration.
    Config(ConfigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitArg {
    Auto,
    S,
    Ms,
}

#[derive(Args)]
struct ValidateArgs {
    path: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    time_unit: UnitArg,
    /// Force header detection on or off.
    #[arg(long)]
    header: Option<bool>,
    /// Skip the play-area position check.
    #[arg(long)]
    no_bounds: bool,
    /// Maximum number of violations to list.
    #[arg(long, default_value_t = 20)]
    max_errors: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PatternArg {
    Static,
    YawSweep,
    PitchSweep,
    RandomWaypoint,
    Gaming,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, conflicts_with = "pattern_json")]
    pattern: Option<PatternArg>,
    /// Full pattern as JSON, e.g. '{"kind":"yaw_sweep","omega_deg_s":90}'.
    #[arg(long)]
    pattern_json: Option<String>,
    /// Angular speed in deg/s for constant-speed patterns.
    #[arg(long, default_value_t = 0.0)]
    omega: f64,
    /// Sweep arc in degrees.
    #[arg(long)]
    arc: Option<f64>,
    /// Sweep start phase in degrees of travel.
    #[arg(long, default_value_t = 0.0)]
    phase: f64,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = 250.0)]
    rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Head position x,y,z in metres.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    position: Option<Vec<f64>>,
    /// Base orientation yaw,pitch,roll in degrees.
    #[arg(long, value_delimiter = ',', num_args = 3, allow_hyphen_values = true)]
    base: Option<Vec<f64>>,
    /// Output CSV; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write the trace metadata as JSON.
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Spec file (TOML).
    #[arg(required_unless_present = "replication")]
    spec: Option<PathBuf>,
    /// Use the bundled replication spec.
    #[arg(long, conflicts_with = "spec")]
    replication: bool,
    /// Output directory (overrides the spec).
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(short, long, env = "BEAMSIM_JOBS")]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tick_hz: Option<f64>,
    /// Comma-separated angular speeds in deg/s.
    #[arg(long, value_delimiter = ',')]
    omega_grid: Option<Vec<f64>>,
    /// Skip per-run record CSVs.
    #[arg(long)]
    no_records: bool,
    /// Print the resolved spec and exit.
    #[arg(long)]
    print_effective_config: bool,
}

#[derive(Args)]
struct ReportArgs {
    dir: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ConfigArgs {
    /// Print every default of an experiment spec.
    #[arg(long)]
    defaults: bool,
    /// Print the bundled replication spec.
    #[arg(long)]
    replication: bool,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn domain(e: impl Into<anyhow::Error>) -> Self {
        Self { code: 1, error: e.into() }
    }

    fn io(e: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: e.into() }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Io(_) | SimError::Csv(_) | SimError::Json(_) => Self::io(e),
            SimError::Trace(TraceError::Io(_) | TraceError::Csv(_)) => Self::io(e),
            _ => Self::domain(e),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Config(a) => config(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        // Output piped into `head` and friends.
        Err(f) if broken_pipe(&f.error) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<csv::Error>()
                .is_some_and(|e| matches!(e.kind(), csv::ErrorKind::Io(e) if e.kind() == io::ErrorKind::BrokenPipe))
    })
}

fn validate(a: ValidateArgs) -> CmdResult {
    let file = File::open(&a.path)
        .with_context(|| format!("cannot open {}", a.path.display()))
        .map_err(Failure::io)?;
    let opts = SchemaOptions {
        header: a.header,
        time_unit: match a.time_unit {
            UnitArg::Auto => TimeUnit::Auto,
            UnitArg::S => TimeUnit::Seconds,
            UnitArg::Ms => TimeUnit::Milliseconds,
        },
        bounds: if a.no_bounds { None } else { SchemaOptions::default().bounds },
        ..SchemaOptions::default()
    };
    let report = scan_trace(file, &opts);
    if report.errors.iter().any(|e| matches!(e, TraceError::EmptyTrace | TraceError::Io(_))) {
        return Err(Failure::io(anyhow!("{}: {}", a.path.display(), report.errors[0])));
    }
    let rate = report.mean_rate_hz().map_or("unknown rate".to_string(), |r| format!("~{r:.0} Hz"));
    if report.is_valid() {
        let dup = if report.duplicates > 0 {
            format!(", {} duplicate timestamps dropped", report.duplicates)
        } else {
            String::new()
        };
        println!("OK, {rate}, {} rows{dup}", report.data_rows);
        Ok(0)
    } else {
        println!("INVALID, {rate}, {} rows, {} violations", report.data_rows, report.errors.len());
        for e in report.errors.iter().take(a.max_errors) {
            println!("  {e}");
        }
        if report.errors.len() > a.max_errors {
            println!("  ... {} more", report.errors.len() - a.max_errors);
        }
        Ok(1)
    }
}

fn triple(v: &Option<Vec<f64>>) -> Option<[f64; 3]> {
    v.as_ref().map(|v| [v[0], v[1], v[2]])
}

fn synth(a: SynthArgs) -> CmdResult {
    let pattern = match (&a.pattern_json, a.pattern) {
        (Some(j), _) => serde_json::from_str::<Pattern>(j)
            .map_err(|e| Failure::domain(anyhow!("bad pattern JSON: {e}")))?,
        (None, p) => match p.unwrap_or(PatternArg::Static) {
            PatternArg::Static => Pattern::Static,
            PatternArg::YawSweep => Pattern::YawSweep {
                omega_deg_s: a.omega,
                arc_deg: a.arc.unwrap_or(120.0),
                phase_deg: a.phase,
            },
            PatternArg::PitchSweep => Pattern::PitchSweep {
                omega_deg_s: a.omega,
                arc_deg: a.arc.unwrap_or(60.0),
                phase_deg: a.phase,
            },
            PatternArg::RandomWaypoint => Pattern::RandomWaypoint {
                omega_deg_s: a.omega,
                yaw_range: [-180.0, 180.0],
                pitch_range: [-90.0, 90.0],
                roll_range: [-180.0, 180.0],
            },
            PatternArg::Gaming => Pattern::Gaming(Default::default()),
        },
    };
    let mut spec = SynthSpec::new(pattern, a.duration, a.rate, a.seed);
    if let Some([x, y, z]) = triple(&a.position) {
        spec.position = Position::new(x, y, z);
    }
    if let Some([y, p, r]) = triple(&a.base) {
        spec.base = Orientation::new(y, p, r).map_err(|e| Failure::domain(anyhow!("--base: {e}")))?;
    }
    let trace = synth_trace(&spec).map_err(Failure::domain)?;
    match &a.output {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display())).map_err(Failure::io)?;
            write_trace_csv(&trace, BufWriter::new(f)).map_err(Failure::io)?;
        }
        None => write_trace_csv(&trace, io::stdout().lock()).map_err(Failure::io)?,
    }
    if let Some(p) = &a.meta {
        let f = File::create(p).with_context(|| format!("cannot create {}", p.display())).map_err(Failure::io)?;
        write_meta_json(&trace, BufWriter::new(f)).map_err(Failure::io)?;
    }
    Ok(0)
}

fn load_spec(a: &RunArgs) -> Result<(ExperimentSpec, PathBuf), Failure> {
    let (text, base) = match &a.spec {
        Some(p) => (
            std::fs::read_to_string(p)
                .with_context(|| format!("cannot read {}", p.display()))
                .map_err(Failure::io)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (REPLICATION_SPEC.to_string(), PathBuf::from(".")),
    };
    let origin = a.spec.as_ref().map_or("bundled replication spec".into(), |p| p.display().to_string());
    let mut spec = ExperimentSpec::from_toml_str(&text)
        .map_err(|e| Failure::io(anyhow!("{origin}: {e}")))?;
    if let Some(o) = &a.out {
        spec.output_dir = o.clone();
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(t) = a.tick_hz {
        spec.tick_hz = t;
    }
    if let Some(g) = &a.omega_grid {
        spec.omega_grid = g.clone();
    }
    if a.no_records {
        spec.write_records = false;
    }
    if a.jobs.is_some() {
        spec.jobs = a.jobs;
    }
    Ok((spec, base))
}

fn run(a: RunArgs) -> CmdResult {
    let (spec, base) = load_spec(&a)?;
    if a.print_effective_config {
        spec.validate()?;
        print!("{}", spec.to_toml_string()?);
        return Ok(0);
    }
    let jobs = spec
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let out = spec.output_dir.clone();
    let exp = Experiment::prepare(spec, &base)?;
    eprintln!("{}: {} runs on {jobs} workers -> {}", exp.spec.name, exp.plans.len(), out.display());
    let outcomes = exp.execute(jobs, Some(&out))?;
    let tables = exp.tables(&outcomes);
    let manifest = write_outputs(&out, &exp, &outcomes, &tables)?;
    for r in manifest.runs.iter().filter(|r| r.status != "ok") {
        eprintln!("run {} ({}) failed: {}", r.index, r.label, r.error.as_deref().unwrap_or(""));
    }
    for t in &manifest.tables {
        match &t.error {
            None => eprintln!("wrote {} ({} entries)", t.file, t.rows),
            Some(e) => eprintln!("table {} not written: {e}", t.file),
        }
    }
    Ok(if manifest.is_clean() { 0 } else { 1 })
}

fn read_csv(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>), Failure> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::io)?;
    let header = r.headers().map_err(Failure::io)?.clone();
    let rows = r.records().collect::<Result<Vec<_>, _>>().map_err(Failure::io)?;
    Ok((header, rows))
}

/// Prints a `series × row-key × column-key` table as a text grid.
fn print_grid(out: &mut impl Write, title: &str, rows: &[csv::StringRecord], series: usize, row: usize, col: usize, val: usize) -> io::Result<()> {
    let mut seen_series: Vec<&str> = Vec::new();
    for r in rows {
        if !seen_series.contains(&&r[series]) {
            seen_series.push(&r[series]);
        }
    }
    for s in seen_series {
        let sel: Vec<&csv::StringRecord> = rows.iter().filter(|r| &r[series] == s).collect();
        let mut cols: Vec<&str> = Vec::new();
        let mut keys: Vec<&str> = Vec::new();
        for r in &sel {
            if !cols.contains(&&r[col]) {
                cols.push(&r[col]);
            }
            if !keys.contains(&&r[row]) {
                keys.push(&r[row]);
            }
        }
        writeln!(out, "\n{title} [{s}]")?;
        write!(out, "{:>10}", "")?;
        for c in &cols {
            write!(out, "{c:>12}")?;
        }
        writeln!(out)?;
        for k in keys {
            write!(out, "{k:>10}")?;
            for c in &cols {
                let v = sel.iter().find(|r| &r[row] == k && &r[col] == *c).map(|r| &r[val]);
                match v.and_then(|v| v.parse::<f64>().ok()) {
                    Some(x) => write!(out, "{x:>12.4}")?,
                    None => write!(out, "{:>12}", "-")?,
                }
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

fn report(a: ReportArgs) -> CmdResult {
    let mpath = a.dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&mpath)
        .with_context(|| format!("cannot read {}", mpath.display()))
        .map_err(Failure::io)?;
    let m: Manifest = serde_json::from_str(&text)
        .with_context(|| format!("malformed {}", mpath.display()))
        .map_err(Failure::io)?;
    let mut out = io::stdout().lock();
    let w = |e: io::Error| Failure::io(e);
    writeln!(out, "experiment {} (tool {}, seed {}, {})", m.name, m.tool_version, m.seed, m.convention).map_err(w)?;
    writeln!(out, "runs: {} ok, {} failed", m.runs.len() - m.failed, m.failed).map_err(w)?;
    for t in &m.tables {
        match &t.error {
            None => writeln!(out, "table {}: {} entries", t.file, t.rows).map_err(w)?,
            Some(e) => writeln!(out, "table {}: missing ({e})", t.file).map_err(w)?,
        }
    }

    let (h, rows) = read_csv(&a.dir.join(AGGREGATES_FILE))?;
    let idx = |name: &str| h.iter().position(|c| c == name).ok_or_else(|| Failure::io(anyhow!("{AGGREGATES_FILE}: no column {name}")));
    let (set, mode, arr, mis, status) = (idx("trace_set")?, idx("mode")?, idx("ue_array")?, idx("mean_ue_misalign_deg")?, idx("status")?);
    let omega = idx("omega_deg_s")?;
    // Mean misalignment per (trace set, mode, array) over trace runs.
    let mut groups: Vec<(String, String, String, f64, usize)> = Vec::new();
    for r in rows.iter().filter(|r| &r[status] == "ok" && r[omega].is_empty()) {
        let v: f64 = r[mis].parse().unwrap_or(f64::NAN);
        match groups.iter_mut().find(|g| g.0 == r[set] && g.1 == r[mode] && g.2 == r[arr]) {
            Some(g) => {
                g.3 += v;
                g.4 += 1;
            }
            None => groups.push((r[set].into(), r[mode].into(), r[arr].into(), v, 1)),
        }
    }
    if !groups.is_empty() {
        writeln!(out, "\nmean UE misalignment (deg) per trace set").map_err(w)?;
        for (s, m, a, sum, n) in &groups {
            writeln!(out, "  {s:<12} {m:<13} {a:>6}  {:>8.3}  ({n} runs)", sum / *n as f64).map_err(w)?;
        }
    }

    let fig4 = a.dir.join("fig4_snr.csv");
    if fig4.exists() {
        let (_, rows) = read_csv(&fig4)?;
        print_grid(&mut out, "mean SNR (dB), rows ω deg/s", &rows, 0, 1, 2, 3).map_err(w)?;
    }
    let fig5 = a.dir.join("fig5_outage.csv");
    if fig5.exists() {
        let (_, rows) = read_csv(&fig5)?;
        print_grid(&mut out, "outage probability, rows ω deg/s", &rows, 0, 2, 1, 3).map_err(w)?;
    }
    Ok(if m.is_clean() { 0 } else { 1 })
}

fn config(a: ConfigArgs) -> CmdResult {
    if a.defaults {
        print!("{}", ExperimentSpec::default().to_toml_string()?);
    } else if a.replication {
        print!("{REPLICATION_SPEC}");
    }
    Ok(0)
}
