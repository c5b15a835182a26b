//! Figure-level artifacts: misalignment CDFs, orientation heatmaps,
//! speed-binned SNR and outage tables, and their CSV emitters.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::geometry::wrap_deg;
use crate::mobility::MobilityTrace;
use crate::simcore::{SimRecord, SimResult};

/// Empirical CDF as `(value, cumulative fraction)` steps, ties merged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cdf {
    pub points: Vec<(f64, f64)>,
}

pub fn cdf(values: &[f64]) -> Result<Cdf, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match points.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => points.push((*x, frac)),
        }
    }
    Ok(Cdf { points })
}

impl Cdf {
    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        match self.points.partition_point(|p| p.0 <= x) {
            0 => 0.0,
            k => self.points[k - 1].1,
        }
    }
}

/// Quantity averaged per heatmap cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatQuantity {
    AngularSpeed,
    UeMisalignment,
}

impl HeatQuantity {
    pub fn as_str(&self) -> &'static str {
        match self {
            HeatQuantity::AngularSpeed => "angular_speed",
            HeatQuantity::UeMisalignment => "ue_misalignment",
        }
    }

    fn of(&self, r: &SimRecord) -> f64 {
        match self {
            HeatQuantity::AngularSpeed => r.angular_speed_deg_s,
            HeatQuantity::UeMisalignment => r.ue_misalign_deg,
        }
    }
}

/// Yaw × pitch grid of per-cell sums. Empty cells have `count == 0` and
/// report no mean.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationHeatmap {
    pub bin_deg: f64,
    pub yaw_bins: usize,
    pub pitch_bins: usize,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl OrientationHeatmap {
    pub fn new(bin_deg: f64) -> Result<Self, MetricsError> {
        if !(bin_deg.is_finite() && bin_deg > 0.0 && bin_deg <= 180.0) {
            return Err(MetricsError::MissingCell(format!("bin width {bin_deg} must be in (0, 180]")));
        }
        let yaw_bins = (360.0 / bin_deg).ceil() as usize;
        let pitch_bins = (180.0 / bin_deg).ceil() as usize;
        Ok(Self {
            bin_deg,
            yaw_bins,
            pitch_bins,
            sums: vec![0.0; yaw_bins * pitch_bins],
            counts: vec![0; yaw_bins * pitch_bins],
        })
    }

    fn index(&self, yaw: f64, pitch: f64) -> usize {
        // yaw = 180 folds onto -180; pitch = 90 goes into the top row.
        let y = wrap_deg(yaw);
        let y = if y >= 180.0 { -180.0 } else { y };
        let i = (((y + 180.0) / self.bin_deg).floor() as usize).min(self.yaw_bins - 1);
        let j = (((pitch + 90.0) / self.bin_deg).floor() as usize).min(self.pitch_bins - 1);
        j * self.yaw_bins + i
    }

    pub fn add(&mut self, yaw: f64, pitch: f64, value: f64) {
        let k = self.index(yaw, pitch);
        self.sums[k] += value;
        self.counts[k] += 1;
    }

    /// Adds another map with the same binning.
    pub fn merge(&mut self, other: &Self) -> Result<(), MetricsError> {
        if other.bin_deg != self.bin_deg {
            return Err(MetricsError::MissingCell("heatmaps with different binning".into()));
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Lower edges of cell `(i, j)`.
    pub fn cell_origin(&self, i: usize, j: usize) -> (f64, f64) {
        (-180.0 + i as f64 * self.bin_deg, -90.0 + j as f64 * self.bin_deg)
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[j * self.yaw_bins + i]
    }

    pub fn mean(&self, i: usize, j: usize) -> Option<f64> {
        let k = j * self.yaw_bins + i;
        (self.counts[k] > 0).then(|| self.sums[k] / self.counts[k] as f64)
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Count-weighted mean over all cells.
    pub fn global_mean(&self) -> Option<f64> {
        let n = self.total_count();
        (n > 0).then(|| self.sums.iter().sum::<f64>() / n as f64)
    }

    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.pitch_bins)
            .flat_map(move |j| (0..self.yaw_bins).map(move |i| (i, j)))
            .filter(|&(i, j)| self.count(i, j) > 0)
    }

    /// Mean over cells whose centres lie within `radius_deg` of yaw = pitch = 0
    /// (`inside = true`) or outside it, weighted by sample count.
    pub fn region_mean(&self, radius_deg: f64, inside: bool) -> Option<f64> {
        let (mut s, mut n) = (0.0, 0u64);
        for j in 0..self.pitch_bins {
            for i in 0..self.yaw_bins {
                let (y, p) = self.cell_origin(i, j);
                let (cy, cp) = (y + 0.5 * self.bin_deg, p + 0.5 * self.bin_deg);
                let central = cy.abs() <= radius_deg && cp.abs() <= radius_deg;
                if central == inside {
                    let k = j * self.yaw_bins + i;
                    s += self.sums[k];
                    n += self.counts[k];
                }
            }
        }
        (n > 0).then(|| s / n as f64)
    }
}

/// Bins `quantity` from `records` by the headset orientation of the trace
/// sample with the same timestamp. Yaw is taken relative to `yaw_ref_deg`.
pub fn heatmap(
    records: &[SimRecord],
    trace: &MobilityTrace,
    quantity: HeatQuantity,
    bin_deg: f64,
    yaw_ref_deg: f64,
) -> Result<OrientationHeatmap, MetricsError> {
    let mut map = OrientationHeatmap::new(bin_deg)?;
    let samples = trace.samples();
    let mut cursor = 0;
    for r in records {
        // Records are in time order, so a forward scan joins in linear time.
        while cursor < samples.len() && samples[cursor].t < r.t {
            cursor += 1;
        }
        match samples.get(cursor) {
            Some(s) if s.t == r.t => {
                map.add(s.orientation.yaw() - yaw_ref_deg, s.orientation.pitch(), quantity.of(r));
            }
            _ => return Err(MetricsError::JoinError { t: r.t }),
        }
    }
    Ok(map)
}

/// Circular mean of the trace yaw, in degrees.
pub fn mean_yaw_deg(trace: &MobilityTrace) -> f64 {
    let (s, c) = trace.samples().iter().fold((0.0, 0.0), |(s, c), p| {
        let y = p.orientation.yaw().to_radians();
        (s + y.sin(), c + y.cos())
    });
    if s == 0.0 && c == 0.0 {
        0.0
    } else {
        s.atan2(c).to_degrees()
    }
}

/// Counts of non-negative values by the grid cell `ceil(v / step)`. The
/// derived CDF is exact at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct StepHistogram {
    pub step: f64,
    counts: Vec<u64>,
}

impl StepHistogram {
    pub fn new(step: f64) -> Self {
        assert!(step.is_finite() && step > 0.0, "step must be positive");
        Self { step, counts: Vec::new() }
    }

    pub fn add(&mut self, v: f64) {
        let k = (v.max(0.0) / self.step).ceil() as usize;
        if k >= self.counts.len() {
            self.counts.resize(k + 1, 0);
        }
        self.counts[k] += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CDF of the values rounded up to the grid.
    pub fn to_cdf(&self) -> Result<Cdf, MetricsError> {
        let n = self.total();
        if n == 0 {
            return Err(MetricsError::EmptyInput);
        }
        let mut acc = 0;
        let mut points = Vec::new();
        for (k, c) in self.counts.iter().enumerate() {
            if *c > 0 {
                acc += c;
                points.push((k as f64 * self.step, acc as f64 / n as f64));
            }
        }
        Ok(Cdf { points })
    }
}

/// Per-run summary used by the speed-binned tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    /// Groups cells into independent curves, e.g. one per sweep pattern.
    pub series: String,
    pub omega_deg_s: f64,
    pub ue_array: String,
    /// Element count, used to order array labels.
    pub elements: usize,
    pub mean_snr_db: f64,
    pub mean_snr_linear_db: f64,
    /// Ticks outside alignment windows (the SNR-mean population).
    pub snr_ticks: u64,
    pub outage_ticks: u64,
    pub ticks: u64,
    pub mean_ue_misalign_deg: f64,
}

impl CellResult {
    pub fn from_result(series: &str, omega: f64, ue_array: &str, elements: usize, r: &SimResult) -> Self {
        let a = &r.aggregates;
        Self {
            series: series.to_string(),
            omega_deg_s: omega,
            ue_array: ue_array.to_string(),
            elements,
            mean_snr_db: a.mean_snr_db,
            mean_snr_linear_db: a.mean_snr_linear_db,
            snr_ticks: a.ticks - a.aligning_ticks,
            outage_ticks: a.outage_ticks,
            ticks: a.ticks,
            mean_ue_misalign_deg: a.mean_ue_misalign_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrRow {
    pub series: String,
    pub omega_deg_s: f64,
    pub ue_array: String,
    pub elements: usize,
    pub mean_snr_db: f64,
    pub ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutageRow {
    pub series: String,
    pub ue_array: String,
    pub elements: usize,
    pub omega_deg_s: f64,
    pub outage_probability: f64,
    pub ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MisalignRow {
    pub series: String,
    pub omega_deg_s: f64,
    pub ue_array: String,
    pub elements: usize,
    pub mean_ue_misalign_deg: f64,
    pub ticks: u64,
}

type CellKey = (u64, usize, String);

/// Cells of one series keyed by `(ω bits, elements, label)`; runs in a cell
/// are pooled tick-weighted.
struct Series<'a> {
    name: &'a str,
    omegas: Vec<f64>,
    arrays: Vec<(String, usize)>,
    cells: BTreeMap<CellKey, Vec<&'a CellResult>>,
}

impl<'a> Series<'a> {
    fn cell(&self, w: f64, label: &str, n: usize) -> &[&'a CellResult] {
        &self.cells[&(w.to_bits(), n, label.to_string())]
    }
}

/// Splits results by series, sorting ω and arrays (by element count) and
/// checking that every ω is present for every array.
fn split(results: &[CellResult]) -> Result<Vec<Series<'_>>, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut by_series: BTreeMap<&str, Vec<&CellResult>> = BTreeMap::new();
    for r in results {
        by_series.entry(r.series.as_str()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (name, runs) in by_series {
        let mut omegas: Vec<f64> = runs.iter().map(|r| r.omega_deg_s).collect();
        omegas.sort_by(f64::total_cmp);
        omegas.dedup();
        let mut arrays: Vec<(String, usize)> = runs.iter().map(|r| (r.ue_array.clone(), r.elements)).collect();
        arrays.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        arrays.dedup();
        let mut cells: BTreeMap<CellKey, Vec<&CellResult>> = BTreeMap::new();
        for r in runs {
            cells
                .entry((r.omega_deg_s.to_bits(), r.elements, r.ue_array.clone()))
                .or_default()
                .push(r);
        }
        for w in &omegas {
            for (label, n) in &arrays {
                if !cells.contains_key(&(w.to_bits(), *n, label.clone())) {
                    return Err(MetricsError::MissingCell(format!("{name}: omega {w}, array {label}")));
                }
            }
        }
        out.push(Series {
            name,
            omegas,
            arrays,
            cells,
        });
    }
    Ok(out)
}

/// Mean SNR per `(series, ω, array)` over ticks outside alignment windows.
/// With `linear` the per-run linear means are pooled instead of dB means.
pub fn binned_mean_snr(results: &[CellResult], linear: bool) -> Result<Vec<SnrRow>, MetricsError> {
    let mut rows = Vec::new();
    for s in split(results)? {
        for w in &s.omegas {
            for (label, n) in &s.arrays {
                let runs = s.cell(*w, label, *n);
                let ticks: u64 = runs.iter().map(|r| r.snr_ticks).sum();
                let mean = if linear {
                    let lin: f64 = runs
                        .iter()
                        .map(|r| r.snr_ticks as f64 * 10f64.powf(r.mean_snr_linear_db / 10.0))
                        .sum::<f64>()
                        / ticks as f64;
                    10.0 * lin.log10()
                } else {
                    runs.iter().map(|r| r.snr_ticks as f64 * r.mean_snr_db).sum::<f64>() / ticks as f64
                };
                if !mean.is_finite() {
                    return Err(MetricsError::MissingCell(format!(
                        "{}: no SNR samples at omega {w}, array {label}",
                        s.name
                    )));
                }
                rows.push(SnrRow {
                    series: s.name.to_string(),
                    omega_deg_s: *w,
                    ue_array: label.clone(),
                    elements: *n,
                    mean_snr_db: mean,
                    ticks,
                });
            }
        }
    }
    Ok(rows)
}

/// Outage probability per `(series, array, ω)`, pooled over runs in a cell.
pub fn outage_table(results: &[CellResult]) -> Result<Vec<OutageRow>, MetricsError> {
    let mut rows = Vec::new();
    for s in split(results)? {
        for (label, n) in &s.arrays {
            for w in &s.omegas {
                let runs = s.cell(*w, label, *n);
                let ticks: u64 = runs.iter().map(|r| r.ticks).sum();
                let outage: u64 = runs.iter().map(|r| r.outage_ticks).sum();
                rows.push(OutageRow {
                    series: s.name.to_string(),
                    ue_array: label.clone(),
                    elements: *n,
                    omega_deg_s: *w,
                    outage_probability: outage as f64 / ticks as f64,
                    ticks,
                });
            }
        }
    }
    Ok(rows)
}

/// Mean UE misalignment per `(series, ω, array)`, tick-weighted over runs.
pub fn misalignment_table(results: &[CellResult]) -> Result<Vec<MisalignRow>, MetricsError> {
    let mut rows = Vec::new();
    for s in split(results)? {
        for w in &s.omegas {
            for (label, n) in &s.arrays {
                let runs = s.cell(*w, label, *n);
                let ticks: u64 = runs.iter().map(|r| r.ticks).sum();
                let mean = runs.iter().map(|r| r.ticks as f64 * r.mean_ue_misalign_deg).sum::<f64>() / ticks as f64;
                rows.push(MisalignRow {
                    series: s.name.to_string(),
                    omega_deg_s: *w,
                    ue_array: label.clone(),
                    elements: *n,
                    mean_ue_misalign_deg: mean,
                    ticks,
                });
            }
        }
    }
    Ok(rows)
}

/// Header of `fig2_cdf.csv`.
pub const FIG2_COLUMNS: [&str; 5] = ["trace_set", "mode", "ue_array", "misalignment_deg", "cumulative_fraction"];
/// Header of `fig3_heatmap.csv`.
pub const FIG3_COLUMNS: [&str; 8] = [
    "trace_set", "ue_array", "quantity", "yaw_deg", "pitch_deg", "bin_deg", "mean", "count",
];
/// Header of `fig4_snr.csv`.
pub const FIG4_COLUMNS: [&str; 5] = ["series", "omega_deg_s", "ue_array", "mean_snr_db", "ticks"];
/// Header of `fig5_outage.csv`.
pub const FIG5_COLUMNS: [&str; 5] = ["series", "ue_array", "omega_deg_s", "outage_probability", "ticks"];

/// One labelled CDF curve for `fig2_cdf.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfCurve {
    pub trace_set: String,
    pub mode: String,
    pub ue_array: String,
    pub cdf: Cdf,
}

/// Writes CDF curves evaluated on the grid `0, step, 2·step, …` up to the
/// largest value across curves.
pub fn write_fig2<W: Write>(curves: &[CdfCurve], step_deg: f64, w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FIG2_COLUMNS)?;
    let max = curves
        .iter()
        .filter_map(|c| c.cdf.points.last().map(|p| p.0))
        .fold(0.0, f64::max);
    let steps = (max / step_deg - 1e-9).ceil().max(0.0) as usize;
    for c in curves {
        for k in 0..=steps {
            let x = k as f64 * step_deg;
            out.write_record([
                c.trace_set.clone(),
                c.mode.clone(),
                c.ue_array.clone(),
                format!("{x}"),
                format!("{}", c.cdf.eval(x + 1e-9 * step_deg)),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One labelled heatmap for `fig3_heatmap.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapEntry {
    pub trace_set: String,
    pub ue_array: String,
    pub quantity: HeatQuantity,
    pub map: OrientationHeatmap,
}

/// Writes occupied cells only; empty cells are absent rather than zero.
pub fn write_fig3<W: Write>(maps: &[HeatmapEntry], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FIG3_COLUMNS)?;
    for e in maps {
        let m = &e.map;
        for (i, j) in m.occupied() {
            let (y, p) = m.cell_origin(i, j);
            out.write_record([
                e.trace_set.clone(),
                e.ue_array.clone(),
                e.quantity.as_str().to_string(),
                format!("{y}"),
                format!("{p}"),
                format!("{}", m.bin_deg),
                format!("{}", m.mean(i, j).expect("occupied")),
                m.count(i, j).to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_fig4<W: Write>(rows: &[SnrRow], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FIG4_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.series.clone(),
            format!("{}", r.omega_deg_s),
            r.ue_array.clone(),
            format!("{}", r.mean_snr_db),
            r.ticks.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_fig5<W: Write>(rows: &[OutageRow], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FIG5_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.series.clone(),
            r.ue_array.clone(),
            format!("{}", r.omega_deg_s),
            format!("{}", r.outage_probability),
            r.ticks.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}
