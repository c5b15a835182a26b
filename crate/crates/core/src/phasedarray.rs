//! Uniform planar arrays, the 3GPP element pattern and hierarchical codebooks.
//!
//! The array lies in the local `y`-`z` plane and radiates along local `+x`.
//! `n_az` elements run along `y` (azimuth) and `n_el` along `z` (elevation).
//! A direction (az, el) has steering coordinates `u = cos(el)·sin(az)` and
//! `v = sin(el)`; the array factor separates into one factor per axis.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::ArrayError;
use crate::geometry::DirectionAzEl;
use crate::scalar::Scalar;

/// Per-axis array-factor power is floored here (dB) so exact nulls stay finite.
const ARRAY_FACTOR_FLOOR_DB: f64 = -100.0;

/// 3GPP parabolic element pattern. All quantities in dB / degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ElementPattern<T> {
    pub max_gain_dbi: T,
    pub az_3db_deg: T,
    pub el_3db_deg: T,
    /// Front-to-back ratio `A_max`; also the floor of the combined pattern.
    pub front_back_min_db: T,
    /// Vertical side-lobe limit `SLA_V`.
    pub side_lobe_floor_db: T,
}

impl<T: Scalar> Default for ElementPattern<T> {
    fn default() -> Self {
        Self {
            max_gain_dbi: T::lit(8.0),
            az_3db_deg: T::lit(65.0),
            el_3db_deg: T::lit(65.0),
            front_back_min_db: T::lit(30.0),
            side_lobe_floor_db: T::lit(30.0),
        }
    }
}

impl<T: Scalar> ElementPattern<T> {
    pub fn validate(&self) -> Result<(), ArrayError> {
        let fields = [
            self.max_gain_dbi,
            self.az_3db_deg,
            self.el_3db_deg,
            self.front_back_min_db,
            self.side_lobe_floor_db,
        ];
        if fields.iter().all(|v| v.is_finite() && *v > T::zero()) {
            Ok(())
        } else {
            Err(ArrayError::BadArray(
                "element pattern parameters must be positive and finite".into(),
            ))
        }
    }

    /// Lowest gain the pattern can produce.
    pub fn floor_gain(&self) -> T {
        self.max_gain_dbi - self.front_back_min_db
    }
}

/// Element gain (dBi) toward `d` in the array's local frame.
pub fn element_gain<T: Scalar>(p: &ElementPattern<T>, d: DirectionAzEl<T>) -> T {
    let twelve = T::lit(12.0);
    let vertical = (twelve * (d.elevation / p.el_3db_deg).powi(2)).min(p.side_lobe_floor_db);
    let horizontal = (twelve * (d.azimuth / p.az_3db_deg).powi(2)).min(p.front_back_min_db);
    p.max_gain_dbi - (vertical + horizontal).min(p.front_back_min_db)
}

/// Uniform planar array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PhasedArray<T> {
    pub n_az: usize,
    pub n_el: usize,
    /// Element spacing in wavelengths.
    pub spacing: T,
    pub element: ElementPattern<T>,
}

impl<T: Scalar> PhasedArray<T> {
    /// Half-wavelength array with the default element pattern.
    pub fn new(n_az: usize, n_el: usize) -> Result<Self, ArrayError> {
        Self::with_element(n_az, n_el, T::lit(0.5), ElementPattern::default())
    }

    pub fn with_element(
        n_az: usize,
        n_el: usize,
        spacing: T,
        element: ElementPattern<T>,
    ) -> Result<Self, ArrayError> {
        if n_az == 0 || n_el == 0 {
            return Err(ArrayError::BadArray(format!(
                "element counts must be at least 1, got {n_az}x{n_el}"
            )));
        }
        if !(spacing.is_finite() && spacing > T::zero()) {
            return Err(ArrayError::BadArray("spacing must be positive".into()));
        }
        element.validate()?;
        Ok(Self {
            n_az,
            n_el,
            spacing,
            element,
        })
    }

    pub fn elements(&self) -> usize {
        self.n_az * self.n_el
    }

    /// Coherent gain of the full aperture, `10·log10(N·M)`.
    pub fn coherent_gain_db(&self) -> T {
        T::lit(10.0) * T::from_usize(self.elements()).unwrap().log10()
    }

    /// Peak achievable gain: element maximum plus coherent gain.
    pub fn peak_gain_db(&self) -> T {
        self.element.max_gain_dbi + self.coherent_gain_db()
    }

    /// Virtual sub-array used for sector (wide) beams: a quarter of the
    /// elements per axis with a minimum of two, or a single element when the
    /// axis has fewer than four.
    pub fn sector_subarray(&self) -> Self {
        fn reduce(n: usize) -> usize {
            if n >= 4 {
                (n / 4).max(2)
            } else {
                1
            }
        }
        Self {
            n_az: reduce(self.n_az),
            n_el: reduce(self.n_el),
            ..*self
        }
    }

    /// Array-factor gain (dB, including `10·log10(N·M)`) of the array steered
    /// to `steer`, evaluated toward `d`.
    pub fn array_factor_db(&self, steer: DirectionAzEl<T>, d: DirectionAzEl<T>) -> T {
        let (u0, v0) = steering_coords(steer);
        let (u, v) = steering_coords(d);
        self.coherent_gain_db()
            + axis_factor_db(self.n_az, self.spacing, u - u0)
            + axis_factor_db(self.n_el, self.spacing, v - v0)
    }
}

/// `(u, v) = (cos(el)·sin(az), sin(el))`.
pub fn steering_coords<T: Scalar>(d: DirectionAzEl<T>) -> (T, T) {
    let (sa, _) = d.azimuth.to_radians().sin_cos();
    let (se, ce) = d.elevation.to_radians().sin_cos();
    (ce * sa, se)
}

/// Normalised power of an `n`-element uniform linear factor at steering offset
/// `delta`, in dB (0 at the main lobe).
fn axis_factor_db<T: Scalar>(n: usize, spacing: T, delta: T) -> T {
    if n == 1 {
        return T::zero();
    }
    let nf = T::from_usize(n).unwrap();
    let half_phase = T::PI() * spacing * delta;
    let den = nf * half_phase.sin();
    let ratio = if den.abs() < T::lit(1e-12) {
        T::one()
    } else {
        (nf * half_phase).sin() / den
    };
    let floor = T::lit(ARRAY_FACTOR_FLOOR_DB);
    (T::lit(10.0) * (ratio * ratio).log10()).max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamLevel {
    Sector,
    Refined,
}

impl BeamLevel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BeamLevel::Sector => "sector",
            BeamLevel::Refined => "refined",
        }
    }
}

/// A codebook entry. Sector and refined beams have separate id spaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beam<T> {
    pub id: usize,
    pub level: BeamLevel,
    pub boresight: DirectionAzEl<T>,
    /// Parent sector id for refined beams.
    pub parent: Option<usize>,
}

/// Gain (dBi) of beam `b` of array `a` toward `d`. Sector beams are formed by
/// the virtual sub-array, refined beams by the full aperture.
pub fn beam_gain<T: Scalar>(a: &PhasedArray<T>, b: &Beam<T>, d: DirectionAzEl<T>) -> T {
    let radiating = match b.level {
        BeamLevel::Sector => a.sector_subarray(),
        BeamLevel::Refined => *a,
    };
    element_gain(&a.element, d) + radiating.array_factor_db(b.boresight, d)
}

/// Half-power beamwidths `(az, el)` in degrees, from a numeric scan of
/// [`beam_gain`] along the azimuth and elevation cuts through the boresight.
pub fn half_power_beamwidth<T: Scalar>(a: &PhasedArray<T>, b: &Beam<T>) -> (T, T) {
    let peak = beam_gain(a, b, b.boresight);
    let target = peak - T::lit(3.0);
    let az_cut = |offset: T| {
        beam_gain(
            a,
            b,
            DirectionAzEl::new(b.boresight.azimuth + offset, b.boresight.elevation),
        )
    };
    let el_cut = |offset: T| {
        beam_gain(
            a,
            b,
            DirectionAzEl::new(b.boresight.azimuth, b.boresight.elevation + offset),
        )
    };
    let el_room = |sign: T| {
        if sign > T::zero() {
            T::lit(90.0) - b.boresight.elevation
        } else {
            T::lit(90.0) + b.boresight.elevation
        }
    };
    let az_bw = half_power_edge(&az_cut, target, T::one(), T::lit(180.0))
        + half_power_edge(&az_cut, target, -T::one(), T::lit(180.0));
    let el_bw = half_power_edge(&el_cut, target, T::one(), el_room(T::one()))
        + half_power_edge(&el_cut, target, -T::one(), el_room(-T::one()));
    (az_bw, el_bw)
}

/// Distance from the peak to the first crossing of `target` in direction
/// `sign`, or `limit` if the cut never drops that far.
fn half_power_edge<T: Scalar, F: Fn(T) -> T>(cut: &F, target: T, sign: T, limit: T) -> T {
    let step = T::lit(0.05);
    let mut lo = T::zero();
    let mut hi = None;
    let mut x = step;
    while x <= limit {
        if cut(sign * x) < target {
            hi = Some(x);
            break;
        }
        lo = x;
        x = x + step;
    }
    let Some(mut hi) = hi else {
        return limit;
    };
    for _ in 0..60 {
        let mid = (lo + hi) / T::lit(2.0);
        if cut(sign * mid) < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo + hi) / T::lit(2.0)
}

/// Angular extent a codebook covers, degrees in the array's local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fov<T> {
    pub az_min: T,
    pub az_max: T,
    pub el_min: T,
    pub el_max: T,
}

impl<T: Scalar> Default for Fov<T> {
    fn default() -> Self {
        Self {
            az_min: T::lit(-60.0),
            az_max: T::lit(60.0),
            el_min: T::lit(-60.0),
            el_max: T::lit(60.0),
        }
    }
}

impl<T: Scalar> Fov<T> {
    pub fn validate(&self) -> Result<(), ArrayError> {
        let ninety = T::lit(90.0);
        let ok = [self.az_min, self.az_max, self.el_min, self.el_max]
            .iter()
            .all(|v| v.is_finite() && v.abs() < ninety)
            && self.az_min < self.az_max
            && self.el_min < self.el_max;
        if ok {
            Ok(())
        } else {
            Err(ArrayError::BadFov(format!(
                "need -90 < min < max < 90 on both axes, got az [{}, {}], el [{}, {}]",
                self.az_min, self.az_max, self.el_min, self.el_max
            )))
        }
    }

    pub fn contains(&self, d: DirectionAzEl<T>) -> bool {
        d.azimuth >= self.az_min
            && d.azimuth <= self.az_max
            && d.elevation >= self.el_min
            && d.elevation <= self.el_max
    }
}

/// Two-level codebook. Refined beams form a uniform grid in `sin(az)` and
/// `sin(el)` across the field of view, one beam per element along each axis;
/// sectors group contiguous tiles of refined beams.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    array: PhasedArray<T>,
    fov: Fov<T>,
    sectors: Vec<Beam<T>>,
    refined: Vec<Beam<T>>,
    children: Vec<Vec<usize>>,
    sector_grid: (usize, usize),
}

/// Default sector grid (azimuth × elevation).
pub const DEFAULT_SECTOR_GRID: (usize, usize) = (8, 4);

pub fn build_codebook<T: Scalar>(
    a: &PhasedArray<T>,
    fov: Fov<T>,
    sector_grid: (usize, usize),
) -> Result<Codebook<T>, ArrayError> {
    fov.validate()?;
    if sector_grid.0 == 0 || sector_grid.1 == 0 {
        return Err(ArrayError::BadArray("sector grid must be at least 1x1".into()));
    }
    // At least two refined beams per sector and axis whenever the axis allows it.
    let s_az = sector_grid.0.min(a.n_az / 2).max(1);
    let s_el = sector_grid.1.min(a.n_el / 2).max(1);

    let grid = |lo: T, hi: T, n: usize| -> Vec<T> {
        let (slo, shi) = (lo.to_radians().sin(), hi.to_radians().sin());
        let nf = T::from_usize(n).unwrap();
        (0..n)
            .map(|i| slo + (T::from_usize(i).unwrap() + T::lit(0.5)) * (shi - slo) / nf)
            .collect()
    };
    let az_s = grid(fov.az_min, fov.az_max, a.n_az);
    let el_s = grid(fov.el_min, fov.el_max, a.n_el);

    let sector_of = |i: usize, j: usize| (j * s_el / a.n_el) * s_az + i * s_az / a.n_az;

    let mut refined = Vec::with_capacity(a.elements());
    let mut children = vec![Vec::new(); s_az * s_el];
    for (j, sv) in el_s.iter().enumerate() {
        for (i, su) in az_s.iter().enumerate() {
            let id = j * a.n_az + i;
            let parent = sector_of(i, j);
            children[parent].push(id);
            refined.push(Beam {
                id,
                level: BeamLevel::Refined,
                boresight: DirectionAzEl::new(su.asin().to_degrees(), sv.asin().to_degrees()),
                parent: Some(parent),
            });
        }
    }

    let mut sectors = Vec::with_capacity(s_az * s_el);
    for (id, kids) in children.iter().enumerate() {
        let k = T::from_usize(kids.len()).unwrap();
        let (mut su, mut sv) = (T::zero(), T::zero());
        for &c in kids {
            su = su + az_s[c % a.n_az];
            sv = sv + el_s[c / a.n_az];
        }
        sectors.push(Beam {
            id,
            level: BeamLevel::Sector,
            boresight: DirectionAzEl::new(
                (su / k).asin().to_degrees(),
                (sv / k).asin().to_degrees(),
            ),
            parent: None,
        });
    }

    Ok(Codebook {
        array: *a,
        fov,
        sectors,
        refined,
        children,
        sector_grid: (s_az, s_el),
    })
}

impl<T: Scalar> Codebook<T> {
    pub fn array(&self) -> &PhasedArray<T> {
        &self.array
    }

    pub fn fov(&self) -> &Fov<T> {
        &self.fov
    }

    pub fn sectors(&self) -> &[Beam<T>] {
        &self.sectors
    }

    pub fn refined(&self) -> &[Beam<T>] {
        &self.refined
    }

    /// Effective sector grid after capping to the array size.
    pub fn sector_grid(&self) -> (usize, usize) {
        self.sector_grid
    }

    /// Refined beam ids under `sector`.
    pub fn children(&self, sector: usize) -> &[usize] {
        &self.children[sector]
    }

    pub fn beam(&self, level: BeamLevel, id: usize) -> Option<&Beam<T>> {
        match level {
            BeamLevel::Sector => self.sectors.get(id),
            BeamLevel::Refined => self.refined.get(id),
        }
    }

    /// Spacing of the refined grid in steering coordinates `(Δsin(az), Δsin(el))`.
    pub fn refined_spacing(&self) -> (T, T) {
        let span = |lo: T, hi: T, n: usize| {
            (hi.to_radians().sin() - lo.to_radians().sin()) / T::from_usize(n).unwrap()
        };
        (
            span(self.fov.az_min, self.fov.az_max, self.array.n_az),
            span(self.fov.el_min, self.fov.el_max, self.array.n_el),
        )
    }

    /// Largest angle (degrees) between a direction inside the fov and the
    /// nearest refined boresight: half the diagonal of the widest grid cell.
    pub fn quantization_bound_deg(&self) -> T {
        let (du, dv) = self.refined_spacing();
        let two = T::lit(2.0);
        // A half-step in sine space spans the widest angle at the fov edge.
        let half_cell = |lo: T, hi: T, d: T| {
            let s = lo.to_radians().sin().abs().max(hi.to_radians().sin().abs());
            s.asin() - (s - d / two).max(-T::one()).asin()
        };
        let half_az = half_cell(self.fov.az_min, self.fov.az_max, du);
        let half_el = half_cell(self.fov.el_min, self.fov.el_max, dv);
        let diag = DirectionAzEl::new(half_az.to_degrees(), half_el.to_degrees());
        // Great-circle distance from boresight to a cell corner.
        DirectionAzEl::boresight().angle_to(diag)
    }

    /// Gain of `beam` toward `d` with the fov rule applied: outside the
    /// field of view only the element pattern floor is available.
    pub fn gain(&self, beam: &Beam<T>, d: DirectionAzEl<T>) -> T {
        if self.fov.contains(d) {
            beam_gain(&self.array, beam, d)
        } else {
            self.array.element.floor_gain()
        }
    }

    /// Writes `id,level,parent,azimuth_deg,elevation_deg,bw_az_deg,bw_el_deg`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "id",
            "level",
            "parent",
            "azimuth_deg",
            "elevation_deg",
            "bw_az_deg",
            "bw_el_deg",
        ])?;
        for b in self.sectors.iter().chain(self.refined.iter()) {
            let (bw_az, bw_el) = half_power_beamwidth(&self.array, b);
            out.write_record([
                b.id.to_string(),
                b.level.as_str().to_string(),
                b.parent.map(|p| p.to_string()).unwrap_or_default(),
                format!("{:.6}", b.boresight.azimuth),
                format!("{:.6}", b.boresight.elevation),
                format!("{bw_az:.4}"),
                format!("{bw_el:.4}"),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refined(az: f64, el: f64) -> Beam<f64> {
        Beam {
            id: 0,
            level: BeamLevel::Refined,
            boresight: DirectionAzEl::new(az, el),
            parent: None,
        }
    }

    // Element-by-element coherent sum, independent of the closed form.
    fn summed_array_gain(a: &PhasedArray<f64>, steer: DirectionAzEl<f64>, d: DirectionAzEl<f64>) -> f64 {
        let (u0, v0) = steering_coords(steer);
        let (u, v) = steering_coords(d);
        let (mut re, mut im) = (0.0, 0.0);
        for m in 0..a.n_az {
            for n in 0..a.n_el {
                let phase = 2.0
                    * std::f64::consts::PI
                    * a.spacing
                    * (m as f64 * (u - u0) + n as f64 * (v - v0));
                re += phase.cos();
                im += phase.sin();
            }
        }
        10.0 * ((re * re + im * im) / a.elements() as f64).log10()
    }

    #[test]
    fn element_pattern_examples() {
        let p = ElementPattern::<f64>::default();
        assert_eq!(element_gain(&p, DirectionAzEl::new(0.0, 0.0)), 8.0);
        assert!((element_gain(&p, DirectionAzEl::new(65.0, 0.0)) - (8.0 - 12.0)).abs() < 1e-12);
        assert_eq!(element_gain(&p, DirectionAzEl::new(180.0, 0.0)), 8.0 - 30.0);
        // Combined attenuation is capped at the front-back floor.
        let expected = 8.0 - 2.0 * 12.0 * (60.0_f64 / 65.0).powi(2);
        assert!((element_gain(&p, DirectionAzEl::new(60.0, 60.0)) - expected).abs() < 1e-12);
    }

    #[test]
    fn boresight_gain_is_element_plus_coherent() {
        for &(n, m) in &[(1, 1), (4, 4), (8, 2), (64, 64)] {
            let a = PhasedArray::<f64>::new(n, m).unwrap();
            let g = beam_gain(&a, &refined(0.0, 0.0), DirectionAzEl::new(0.0, 0.0));
            let oracle = 8.0 + summed_array_gain(&a, DirectionAzEl::boresight(), DirectionAzEl::boresight());
            assert!((g - oracle).abs() < 0.01, "{n}x{m}: {g} vs {oracle}");
        }
        let a = PhasedArray::<f64>::new(64, 64).unwrap();
        let g = beam_gain(&a, &refined(0.0, 0.0), DirectionAzEl::boresight());
        assert!((g - 44.12).abs() < 0.01);
    }

    #[test]
    fn closed_form_matches_element_sum() {
        let a = PhasedArray::<f64>::new(8, 4).unwrap();
        let steer = DirectionAzEl::new(20.0, -10.0);
        for &(az, el) in &[(20.0, -10.0), (25.0, -5.0), (-40.0, 30.0), (5.0, 12.0), (59.0, -59.0)] {
            let d = DirectionAzEl::new(az, el);
            let closed = a.array_factor_db(steer, d);
            let summed = summed_array_gain(&a, steer, d);
            if summed > -60.0 {
                assert!((closed - summed).abs() < 1e-6, "({az},{el}): {closed} vs {summed}");
            }
        }
    }

    #[test]
    fn gain_bounded_by_coherent_sum() {
        let a = PhasedArray::<f64>::new(16, 16).unwrap();
        let b = refined(10.0, 5.0);
        for az in (-180..=180).step_by(7) {
            for el in (-90..=90).step_by(5) {
                let g = beam_gain(&a, &b, DirectionAzEl::new(az as f64, el as f64));
                assert!(g <= a.peak_gain_db() + 1e-9);
            }
        }
    }

    #[test]
    fn beamwidth_of_eight_elements() {
        let a = PhasedArray::<f64>::new(8, 8).unwrap();
        let (az, el) = half_power_beamwidth(&a, &refined(0.0, 0.0));
        // Small-angle estimate 0.886·λ/(N·d) = 12.69°.
        assert!((az - 12.8).abs() < 0.5, "{az}");
        assert!((el - 12.8).abs() < 0.5, "{el}");
    }

    #[test]
    fn beamwidth_halves_when_doubling() {
        let b = refined(0.0, 0.0);
        let (w8, _) = half_power_beamwidth(&PhasedArray::<f64>::new(8, 8).unwrap(), &b);
        let (w16, _) = half_power_beamwidth(&PhasedArray::<f64>::new(16, 8).unwrap(), &b);
        assert!(((w8 / 2.0) - w16).abs() / (w8 / 2.0) < 0.15);
    }

    #[test]
    fn single_element_beamwidth_is_element_width() {
        let a = PhasedArray::<f64>::new(1, 1).unwrap();
        let (az, el) = half_power_beamwidth(&a, &refined(0.0, 0.0));
        assert!((az - 65.0).abs() < 1e-6);
        assert!((el - 65.0).abs() < 1e-6);
    }

    #[test]
    fn codebook_counts() {
        let cb4 = build_codebook(&PhasedArray::<f64>::new(4, 4).unwrap(), Fov::default(), DEFAULT_SECTOR_GRID)
            .unwrap();
        assert_eq!(cb4.refined().len(), 16);
        let cb64 = build_codebook(
            &PhasedArray::<f64>::new(64, 64).unwrap(),
            Fov::default(),
            DEFAULT_SECTOR_GRID,
        )
        .unwrap();
        assert_eq!(cb64.refined().len(), 4096);
        assert_eq!(cb64.sectors().len(), 32);
        for s in cb64.sectors() {
            assert_eq!(cb64.children(s.id).len(), 128);
        }
    }

    #[test]
    fn refined_spacing_is_fov_over_n() {
        let cb = build_codebook(&PhasedArray::<f64>::new(8, 4).unwrap(), Fov::default(), DEFAULT_SECTOR_GRID)
            .unwrap();
        let extent = 2.0 * 60f64.to_radians().sin();
        let sin_az: Vec<f64> = cb.refined()[..8]
            .iter()
            .map(|b| b.boresight.azimuth.to_radians().sin())
            .collect();
        for w in sin_az.windows(2) {
            assert!((w[1] - w[0] - extent / 8.0).abs() < 1e-12);
        }
        let sin_el: Vec<f64> = cb
            .refined()
            .iter()
            .step_by(8)
            .map(|b| b.boresight.elevation.to_radians().sin())
            .collect();
        for w in sin_el.windows(2) {
            assert!((w[1] - w[0] - extent / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ordering_is_by_elevation_then_azimuth() {
        let cb = build_codebook(&PhasedArray::<f64>::new(4, 4).unwrap(), Fov::default(), DEFAULT_SECTOR_GRID)
            .unwrap();
        for w in cb.refined().windows(2) {
            let (a, b) = (w[0].boresight, w[1].boresight);
            assert!(a.elevation < b.elevation || (a.elevation == b.elevation && a.azimuth < b.azimuth));
        }
    }

    #[test]
    fn bad_fov_rejected() {
        let a = PhasedArray::<f64>::new(4, 4).unwrap();
        let fov = Fov {
            az_min: -100.0,
            ..Fov::default()
        };
        assert!(matches!(build_codebook(&a, fov, DEFAULT_SECTOR_GRID), Err(ArrayError::BadFov(_))));
        let fov = Fov {
            el_min: 10.0,
            el_max: 0.0,
            ..Fov::default()
        };
        assert!(build_codebook(&a, fov, DEFAULT_SECTOR_GRID).is_err());
    }

    #[test]
    fn bad_arrays_rejected() {
        assert!(PhasedArray::<f64>::new(0, 4).is_err());
        assert!(PhasedArray::<f64>::with_element(4, 4, -0.5, ElementPattern::default()).is_err());
    }

    #[test]
    fn outside_fov_gets_floor() {
        let cb = build_codebook(&PhasedArray::<f64>::new(4, 4).unwrap(), Fov::default(), DEFAULT_SECTOR_GRID)
            .unwrap();
        let g = cb.gain(&cb.refined()[0], DirectionAzEl::new(120.0, 0.0));
        assert_eq!(g, -22.0);
    }

    #[test]
    fn codebook_dump_has_every_beam() {
        let cb = build_codebook(&PhasedArray::<f64>::new(4, 4).unwrap(), Fov::default(), DEFAULT_SECTOR_GRID)
            .unwrap();
        let mut buf = Vec::new();
        cb.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + cb.sectors().len() + cb.refined().len());
        assert!(text.starts_with("id,level,parent"));
    }
}
