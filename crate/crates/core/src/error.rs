use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("{field} = {value} outside allowed range {allowed}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        allowed: &'static str,
    },
    #[error("node coincides with the device position")]
    ZeroDistance,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("row {row}: {field} = {value} outside allowed range {allowed}")]
    Range {
        row: usize,
        field: &'static str,
        value: f64,
        allowed: String,
    },
    #[error("row {row}: timestamp {t} does not advance past {previous}")]
    Monotonicity { row: usize, previous: f64, t: f64 },
    #[error("{duplicates} duplicate timestamps out of {rows} rows exceeds the 1% limit")]
    TooManyDuplicates { duplicates: usize, rows: usize },
    #[error("trace is empty or has fewer than 2 samples")]
    EmptyTrace,
    #[error("non-positive time step between samples {index} and {}", index + 1)]
    DegenerateTimestep { index: usize },
    #[error("bad synthetic pattern: {0}")]
    BadPattern(String),
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArrayError {
    #[error("invalid array: {0}")]
    BadArray(String),
    #[error("invalid field of view: {0}")]
    BadFov(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeamError {
    #[error("clock regression: tick {tick} after tick {last}")]
    ClockRegression { last: u64, tick: u64 },
    #[error("invalid beam schedule: {0}")]
    BadSchedule(String),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("record at t = {t} has no trace sample with the same timestamp")]
    JoinError { t: f64 },
    #[error("missing cell: {0}")]
    MissingCell(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
