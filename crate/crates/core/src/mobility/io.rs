use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{BoundingBox, MobilityTrace, PoseSample, TraceMeta, TraceSource};
use crate::error::TraceError;
use crate::geometry::{Orientation, Position};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    /// Milliseconds when the median step exceeds 0.5, seconds otherwise.
    #[default]
    Auto,
    Seconds,
    Milliseconds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaOptions {
    /// `None` detects a header from the first field of the first row.
    pub header: Option<bool>,
    pub time_unit: TimeUnit,
    /// `None` disables the position check.
    pub bounds: Option<BoundingBox>,
    /// Added to every parsed position, for datasets whose origin is not a
    /// room corner.
    pub position_offset: [f64; 3],
    pub participant: String,
    pub source: TraceSource,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        Self {
            header: None,
            time_unit: TimeUnit::Auto,
            bounds: Some(BoundingBox::default()),
            position_offset: [0.0; 3],
            participant: "unknown".into(),
            source: TraceSource::Recorded,
        }
    }
}

const COLUMNS: [&str; 7] = ["time", "x", "y", "z", "yaw", "pitch", "roll"];

fn column_aliases(col: usize) -> &'static [&'static str] {
    match col {
        0 => &["time", "t", "timestamp", "ts", "time_s", "time_ms", "seconds", "ms"],
        1 => &["x", "pos_x", "position_x", "px"],
        2 => &["y", "pos_y", "position_y", "py"],
        3 => &["z", "pos_z", "position_z", "pz"],
        4 => &["yaw", "heading", "rot_yaw"],
        5 => &["pitch", "rot_pitch"],
        6 => &["roll", "rot_roll", "bank"],
        _ => &[],
    }
}

/// Everything learned from one pass over a trace file. Unlike
/// [`parse_trace`], scanning does not stop at the first problem.
#[derive(Debug, Default)]
pub struct ScanReport {
    /// Accepted samples (duplicates and invalid rows removed).
    pub samples: Vec<PoseSample>,
    pub data_rows: usize,
    pub duplicates: usize,
    pub time_unit: Option<TimeUnit>,
    pub header: bool,
    pub errors: Vec<TraceError>,
}

impl ScanReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn mean_rate_hz(&self) -> Option<f64> {
        let n = self.samples.len();
        (n >= 2).then(|| (n - 1) as f64 / (self.samples[n - 1].t - self.samples[0].t))
    }
}

struct RawRow {
    line: usize,
    values: [f64; 7],
}

pub fn scan_trace<R: Read>(input: R, opts: &SchemaOptions) -> ScanReport {
    let mut report = ScanReport::default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut mapping: [usize; 7] = [0, 1, 2, 3, 4, 5, 6];
    let mut header_hint_ms = false;
    let mut rows: Vec<RawRow> = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.errors.push(TraceError::Csv(e));
                continue;
            }
        };
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(idx + 1);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if idx == 0 {
            let looks_textual = rec.get(0).map(|f| f.parse::<f64>().is_err()).unwrap_or(false);
            if opts.header.unwrap_or(looks_textual) {
                report.header = true;
                let names: Vec<String> = rec.iter().map(|f| f.to_ascii_lowercase()).collect();
                let found: Vec<Option<usize>> = (0..7)
                    .map(|c| names.iter().position(|n| column_aliases(c).contains(&n.as_str())))
                    .collect();
                if found.iter().all(Option::is_some) {
                    for (c, f) in found.iter().enumerate() {
                        mapping[c] = f.unwrap();
                    }
                }
                let time_name = &names[mapping[0].min(names.len() - 1)];
                header_hint_ms = time_name.contains("ms") || time_name.contains("milli");
                continue;
            }
        }
        let mut values = [0.0; 7];
        let mut ok = true;
        for (c, &src) in mapping.iter().enumerate() {
            match rec.get(src) {
                None => {
                    report.errors.push(TraceError::Parse {
                        row: line,
                        column: src + 1,
                        message: format!("missing column '{}' (found {} fields)", COLUMNS[c], rec.len()),
                    });
                    ok = false;
                    break;
                }
                Some(field) => match field.parse::<f64>() {
                    Ok(v) => values[c] = v,
                    Err(_) => {
                        report.errors.push(TraceError::Parse {
                            row: line,
                            column: src + 1,
                            message: format!("'{}' is not a number ({})", field, COLUMNS[c]),
                        });
                        ok = false;
                        break;
                    }
                },
            }
        }
        if ok {
            rows.push(RawRow { line, values });
        }
    }
    report.data_rows = rows.len() + report.errors.len();

    let unit = match opts.time_unit {
        TimeUnit::Auto if header_hint_ms => TimeUnit::Milliseconds,
        TimeUnit::Auto => {
            let mut steps: Vec<f64> = rows
                .windows(2)
                .map(|w| w[1].values[0] - w[0].values[0])
                .filter(|d| *d > 0.0)
                .collect();
            if steps.is_empty() {
                TimeUnit::Seconds
            } else {
                steps.sort_by(f64::total_cmp);
                if steps[steps.len() / 2] > 0.5 {
                    TimeUnit::Milliseconds
                } else {
                    TimeUnit::Seconds
                }
            }
        }
        u => u,
    };
    report.time_unit = Some(unit);
    let time_scale = if unit == TimeUnit::Milliseconds { 1e-3 } else { 1.0 };

    let mut last_t: Option<f64> = None;
    for row in rows {
        let [t, x, y, z, yaw, pitch, roll] = row.values;
        let t = t * time_scale;
        if !(t.is_finite() && t >= 0.0) {
            report.errors.push(TraceError::Range {
                row: row.line,
                field: "time",
                value: t,
                allowed: "[0, inf)".into(),
            });
            continue;
        }
        let orientation = match Orientation::new(yaw, pitch, roll) {
            Ok(o) => o,
            Err(crate::error::GeometryError::OutOfRange { field, value, allowed }) => {
                report.errors.push(TraceError::Range {
                    row: row.line,
                    field,
                    value,
                    allowed: allowed.into(),
                });
                continue;
            }
            Err(_) => continue,
        };
        let [ox, oy, oz] = opts.position_offset;
        let position = Position::new(x + ox, y + oy, z + oz);
        if let Some((field, value, allowed)) = opts.bounds.as_ref().and_then(|b| b.violation(&position)) {
            report.errors.push(TraceError::Range {
                row: row.line,
                field,
                value,
                allowed,
            });
            continue;
        }
        if ![position.x, position.y, position.z].iter().all(|v| v.is_finite()) {
            report.errors.push(TraceError::Range {
                row: row.line,
                field: "position",
                value: f64::NAN,
                allowed: "finite".into(),
            });
            continue;
        }
        match last_t {
            Some(prev) if t == prev => {
                report.duplicates += 1;
                continue;
            }
            Some(prev) if t < prev => {
                report.errors.push(TraceError::Monotonicity {
                    row: row.line,
                    previous: prev,
                    t,
                });
                continue;
            }
            _ => {}
        }
        last_t = Some(t);
        report.samples.push(PoseSample {
            t,
            position,
            orientation,
        });
    }

    // More than 1% duplicated timestamps points at a broken export.
    if report.duplicates * 100 > report.data_rows {
        report.errors.push(TraceError::TooManyDuplicates {
            duplicates: report.duplicates,
            rows: report.data_rows,
        });
    }
    if report.errors.is_empty() && report.samples.len() < 2 {
        report.errors.push(TraceError::EmptyTrace);
    }
    report
}

/// Parses and validates a trace, failing on the first problem found.
pub fn parse_trace<R: Read>(input: R, opts: &SchemaOptions) -> Result<MobilityTrace, TraceError> {
    let mut report = scan_trace(input, opts);
    if !report.errors.is_empty() {
        return Err(report.errors.swap_remove(0));
    }
    let rate = report.mean_rate_hz().unwrap_or(0.0);
    let mut meta = TraceMeta::new(opts.participant.clone(), opts.source, rate);
    meta.duplicates_dropped = report.duplicates;
    MobilityTrace::new(report.samples, meta)
}

/// Writes the 7-column CSV with a header. Values use the shortest decimal
/// form that reads back to the same `f64`.
pub fn write_trace_csv<W: Write>(trace: &MobilityTrace, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", COLUMNS.join(","))?;
    for s in trace.samples() {
        let o = s.orientation;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t,
            s.position.x,
            s.position.y,
            s.position.z,
            o.yaw(),
            o.pitch(),
            o.roll()
        )?;
    }
    out.flush()
}

#[derive(Serialize)]
struct MetaSidecar<'a> {
    #[serde(flatten)]
    meta: &'a TraceMeta,
    samples: usize,
    start_s: f64,
    end_s: f64,
    mean_rate_hz: f64,
}

pub fn write_meta_json<W: Write>(trace: &MobilityTrace, out: W) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(
        out,
        &MetaSidecar {
            meta: &trace.meta,
            samples: trace.len(),
            start_s: trace.start(),
            end_s: trace.end(),
            mean_rate_hz: trace.mean_rate_hz(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SchemaOptions {
        SchemaOptions::default()
    }

    #[test]
    fn two_rows() {
        let src = "time,x,y,z,yaw,pitch,roll\n0.0,1,1,1.6,0,0,0\n0.004,1,1,1.6,1,0,0\n";
        let tr = parse_trace(src.as_bytes(), &opts()).unwrap();
        assert_eq!(tr.len(), 2);
        assert_eq!(tr.samples()[1].orientation.yaw(), 1.0);
    }

    #[test]
    fn headerless() {
        let src = "0.0,1,1,1.6,0,0,0\n0.004,1,1,1.6,1,0,0\n";
        let tr = parse_trace(src.as_bytes(), &opts()).unwrap();
        assert_eq!(tr.len(), 2);
    }

    #[test]
    fn named_columns_reordered() {
        let src = "roll,pitch,yaw,z,y,x,timestamp\n0,1,2,1.5,2.5,3.5,0\n0,1,3,1.5,2.5,3.5,0.01\n";
        let tr = parse_trace(src.as_bytes(), &opts()).unwrap();
        let s = tr.samples()[1];
        assert_eq!((s.t, s.position.x, s.orientation.yaw(), s.orientation.pitch()), (0.01, 3.5, 3.0, 1.0));
    }

    #[test]
    fn pitch_out_of_range() {
        let src = "0.0,1,1,1.6,0,0,0\n0.004,1,1,1.6,0,95,0\n";
        match parse_trace(src.as_bytes(), &opts()) {
            Err(e @ TraceError::Range { field: "pitch", .. }) => {
                assert!(e.to_string().contains("[-90, 90]"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_location() {
        let src = "0.0,1,1,1.6,0,0,0\n0.004,1,abc,1.6,0,0,0\n";
        assert!(matches!(
            parse_trace(src.as_bytes(), &opts()),
            Err(TraceError::Parse { row: 2, column: 3, .. })
        ));
    }

    #[test]
    fn non_monotonic() {
        let src = "0.0,1,1,1.6,0,0,0\n0.01,1,1,1.6,0,0,0\n0.005,1,1,1.6,0,0,0\n";
        assert!(matches!(
            parse_trace(src.as_bytes(), &opts()),
            Err(TraceError::Monotonicity { row: 3, .. })
        ));
    }

    #[test]
    fn duplicates_policy() {
        let mut src = String::new();
        for i in 0..200 {
            src += &format!("{},1,1,1.6,{},0,0\n", i as f64 * 0.004, i % 7);
        }
        // one duplicate in 201 rows: kept first, counted
        src += "0.796,1,1,1.6,99,0,0\n";
        let tr = parse_trace(src.as_bytes(), &opts()).unwrap();
        assert_eq!(tr.len(), 200);
        assert_eq!(tr.meta.duplicates_dropped, 1);
        assert_eq!(tr.samples()[199].orientation.yaw(), (199 % 7) as f64);
        // three in 203 rows is over the limit
        src += "0.796,1,1,1.6,0,0,0\n0.796,1,1,1.6,0,0,0\n";
        assert!(matches!(
            parse_trace(src.as_bytes(), &opts()),
            Err(TraceError::TooManyDuplicates { duplicates: 3, .. })
        ));
    }

    #[test]
    fn millisecond_detection() {
        let src = "0,1,1,1.6,0,0,0\n4,1,1,1.6,0,0,0\n8,1,1,1.6,0,0,0\n";
        let tr = parse_trace(src.as_bytes(), &opts()).unwrap();
        assert!((tr.end() - 0.008).abs() < 1e-15);
        let forced = SchemaOptions {
            time_unit: TimeUnit::Seconds,
            ..opts()
        };
        assert_eq!(parse_trace(src.as_bytes(), &forced).unwrap().end(), 8.0);
    }

    #[test]
    fn long_recording_rate() {
        let mut src = String::from("time,x,y,z,yaw,pitch,roll\n");
        for i in 0..75_000 {
            src += &format!("{},2,2,1.7,0,0,0\n", i as f64 / 250.0);
        }
        let tr = parse_trace(src.as_bytes(), &opts()).unwrap();
        assert_eq!(tr.len(), 75_000);
        assert!((tr.meta.nominal_rate_hz - 250.0).abs() < 1e-6);
    }

    #[test]
    fn bounds_and_offset() {
        let src = "0,-1,1,1.6,0,0,0\n0.01,-1,1,1.6,0,0,0\n";
        assert!(matches!(
            parse_trace(src.as_bytes(), &opts()),
            Err(TraceError::Range { field: "x", .. })
        ));
        let shifted = SchemaOptions {
            position_offset: [2.5, 0.0, 0.0],
            ..opts()
        };
        assert_eq!(parse_trace(src.as_bytes(), &shifted).unwrap().samples()[0].position.x, 1.5);
    }

    #[test]
    fn scan_collects_all() {
        let src = "0,1,1,1.6,0,0,0\n0.01,1,1,1.6,0,99,0\n0.02,1,1,1.6,200,0,0\n0.03,1,1,1.6,0,0,0\n";
        let rep = scan_trace(src.as_bytes(), &opts());
        assert_eq!(rep.errors.len(), 2);
        assert_eq!(rep.samples.len(), 2);
    }

    #[test]
    fn meta_sidecar() {
        let src = "0,1,1,1.6,0,0,0\n0.01,1,1,1.6,0,0,0\n";
        let tr = parse_trace(src.as_bytes(), &opts()).unwrap();
        let mut buf = Vec::new();
        write_meta_json(&tr, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["convention"], "intrinsic-ZYX-deg");
        assert_eq!(v["source"], "recorded");
        assert_eq!(v["samples"], 2);
    }
}
