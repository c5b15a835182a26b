//! Link budget: path loss, thermal noise, EIRP-capped SNR and outage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::scalar::Scalar;

/// `PL = a·log10(d) + b + c·log10(f_GHz)`, distance clamped below at `d_min_m`.
///
/// Defaults are the mmMAGIC indoor-hotspot LOS fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PathLossModel<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d_min_m: T,
    /// Log-normal shadowing standard deviation; 0 disables it.
    pub shadowing_sigma_db: T,
}

impl<T: Scalar> Default for PathLossModel<T> {
    fn default() -> Self {
        Self {
            a: T::lit(13.8),
            b: T::lit(33.6),
            c: T::lit(20.3),
            d_min_m: T::lit(0.5),
            shadowing_sigma_db: T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct LinkConfig<T> {
    pub carrier_ghz: T,
    pub bandwidth_ghz: T,
    pub tx_power_dbm: T,
    pub noise_figure_db: T,
    /// Thermal noise density. Must be negative (the usual -174 dBm/Hz).
    pub noise_psd_dbm_hz: T,
    pub rx_sensitivity_dbm: T,
    pub max_eirp_dbm: T,
    pub min_snr_db: T,
    pub pathloss: PathLossModel<T>,
}

impl<T: Scalar> Default for LinkConfig<T> {
    fn default() -> Self {
        Self {
            carrier_ghz: T::lit(60.0),
            bandwidth_ghz: T::lit(2.16),
            tx_power_dbm: T::zero(),
            noise_figure_db: T::lit(9.0),
            noise_psd_dbm_hz: T::lit(-174.0),
            rx_sensitivity_dbm: T::lit(-78.0),
            max_eirp_dbm: T::lit(40.0),
            min_snr_db: T::lit(-10.3),
            pathloss: PathLossModel::default(),
        }
    }
}

impl<T: Scalar> LinkConfig<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        let all = [
            self.carrier_ghz,
            self.bandwidth_ghz,
            self.tx_power_dbm,
            self.noise_figure_db,
            self.noise_psd_dbm_hz,
            self.rx_sensitivity_dbm,
            self.max_eirp_dbm,
            self.min_snr_db,
            self.pathloss.a,
            self.pathloss.b,
            self.pathloss.c,
            self.pathloss.d_min_m,
            self.pathloss.shadowing_sigma_db,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(SimError::Config("link parameters must be finite".into()));
        }
        if self.bandwidth_ghz <= T::zero() || self.carrier_ghz <= T::zero() {
            return Err(SimError::Config(
                "carrier and bandwidth must be positive".into(),
            ));
        }
        if self.max_eirp_dbm < self.tx_power_dbm {
            return Err(SimError::Config(format!(
                "max_eirp_dbm ({}) below tx_power_dbm ({})",
                self.max_eirp_dbm, self.tx_power_dbm
            )));
        }
        if self.pathloss.d_min_m <= T::zero() || self.pathloss.shadowing_sigma_db < T::zero() {
            return Err(SimError::Config(
                "d_min_m must be positive and shadowing sigma non-negative".into(),
            ));
        }
        if self.noise_psd_dbm_hz >= T::zero() {
            return Err(SimError::Config(format!(
                "noise_psd_dbm_hz = {} must be negative (e.g. -174)",
                self.noise_psd_dbm_hz
            )));
        }
        Ok(())
    }
}

pub fn path_loss<T: Scalar>(cfg: &LinkConfig<T>, d: T) -> T {
    let pl = &cfg.pathloss;
    let d = d.max(pl.d_min_m);
    pl.a * d.log10() + pl.b + pl.c * cfg.carrier_ghz.log10()
}

/// Noise power in dBm over the carrier bandwidth, including the noise figure.
pub fn noise_power<T: Scalar>(cfg: &LinkConfig<T>) -> T {
    let bw_hz = cfg.bandwidth_ghz * T::lit(1e9);
    cfg.noise_psd_dbm_hz + T::lit(10.0) * bw_hz.log10() + cfg.noise_figure_db
}

/// EIRP after the regulatory cap.
pub fn eirp<T: Scalar>(cfg: &LinkConfig<T>, tx_gain: T) -> T {
    (cfg.tx_power_dbm + tx_gain).min(cfg.max_eirp_dbm)
}

pub fn snr<T: Scalar>(cfg: &LinkConfig<T>, tx_gain: T, rx_gain: T, d: T) -> T {
    budget(cfg, tx_gain, rx_gain, path_loss(cfg, d)).snr_db
}

/// Full budget for one evaluation with an explicit path loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget<T> {
    pub eirp_dbm: T,
    pub eirp_clamped: bool,
    pub rx_power_dbm: T,
    pub snr_db: T,
}

pub fn budget<T: Scalar>(cfg: &LinkConfig<T>, tx_gain: T, rx_gain: T, path_loss_db: T) -> Budget<T> {
    let raw = cfg.tx_power_dbm + tx_gain;
    let eirp_dbm = raw.min(cfg.max_eirp_dbm);
    let rx_power_dbm = eirp_dbm + rx_gain - path_loss_db;
    Budget {
        eirp_dbm,
        eirp_clamped: raw >= cfg.max_eirp_dbm,
        rx_power_dbm,
        snr_db: rx_power_dbm - noise_power(cfg),
    }
}

/// Outage is strictly below the threshold, or any tick blanked for realignment.
pub fn is_outage<T: Scalar>(cfg: &LinkConfig<T>, snr_db: T, aligning: bool) -> bool {
    aligning || snr_db < cfg.min_snr_db
}

/// One evaluated link sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkSample<T> {
    pub t: T,
    pub distance: T,
    pub tx_gain: T,
    pub rx_gain: T,
    pub eirp_dbm: T,
    pub snr: T,
    pub outage: bool,
    pub aligning: bool,
    pub below_sensitivity: bool,
}

impl<T: Scalar> LinkSample<T> {
    pub fn evaluate(
        cfg: &LinkConfig<T>,
        t: T,
        distance: T,
        tx_gain: T,
        rx_gain: T,
        extra_loss_db: T,
        aligning: bool,
    ) -> Self {
        let b = budget(cfg, tx_gain, rx_gain, path_loss(cfg, distance) + extra_loss_db);
        Self {
            t,
            distance,
            tx_gain,
            rx_gain,
            eirp_dbm: b.eirp_dbm,
            snr: b.snr_db,
            outage: is_outage(cfg, b.snr_db, aligning),
            aligning,
            below_sensitivity: b.rx_power_dbm < cfg.rx_sensitivity_dbm,
        }
    }
}

/// Seeded log-normal shadowing source. Yields 0 dB when sigma is 0.
#[derive(Debug, Clone)]
pub struct Shadowing {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

impl Shadowing {
    pub fn new(sigma_db: f64, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal: (sigma_db > 0.0).then(|| Normal::new(0.0, sigma_db).expect("sigma validated")),
        }
    }

    pub fn sample<T: Scalar>(&mut self) -> T {
        match &self.normal {
            Some(n) => T::lit(n.sample(&mut self.rng)),
            None => T::zero(),
        }
    }
}
