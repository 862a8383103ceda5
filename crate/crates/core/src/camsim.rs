//! Lock-in camera model: accumulation of internal exposures into external
//! frames, photon shot and quantization noise, conversion-factor calibration,
//! the shot-noise sensitivity formula and acquisition timing.
//!
//! Signal chain: each internal exposure collects about N photoelectrons and the
//! chip accumulates the difference of successive exposures in two channels
//! (I and Q). With `n_cycles` internal exposures per external frame a frame
//! holds `n_cycles / 4` copies of N * S_norm, so
//!
//! ```text
//! DU per tesla = CF * N * (n_cycles / 4) * dS_norm/dB
//! shot std     = CF * sqrt(N * n_cycles)
//! quant std    = sqrt(channels) * sqrt(0.81 + 0.16 * n_cycles)
//! ```

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QdmError, Result};
use crate::grid::{FieldMap, FrameStack};
use crate::rng::{self, domain};
use crate::spinphys::{self, NvParams};
use crate::stats;

/// Highest external frame rate the sensor supports, Hz.
pub const MAX_EXTERNAL_RATE: f64 = 3.8e3;
/// Highest internal exposure rate, Hz.
pub const MAX_INTERNAL_RATE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotModel {
    #[default]
    Gaussian,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    /// Internal exposure rate, Hz.
    pub internal_rate: f64,
    /// Internal exposures accumulated into one external frame.
    pub n_cycles: u32,
    /// Conversion factor, DU per photoelectron.
    pub cf: f64,
    /// Largest representable |DU|.
    pub du_range: f64,
    pub buffer_frames: u32,
    /// Buffer-to-host transfer per frame set, s.
    pub t_transfer: f64,
    pub t_soft_static: f64,
    pub t_soft_dynamic: f64,
    /// Photoelectrons per internal exposure.
    pub photons_per_exposure: f64,
    pub readout_window: f64,
    /// Readout channels whose quantization noise enters each frame.
    pub channels: u32,
    pub shot_model: ShotModel,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            internal_rate: 122e3,
            n_cycles: 72,
            cf: 1.0 / 446.0,
            du_range: 1023.0,
            buffer_frames: 500,
            t_transfer: 5.0,
            t_soft_static: 2.0,
            t_soft_dynamic: 17.0,
            photons_per_exposure: 4e4,
            readout_window: 2.15e-6,
            channels: 2,
            shot_model: ShotModel::Gaussian,
        }
    }
}

impl CameraConfig {
    /// Internal exposures locked to one Ramsey measurement each.
    pub fn for_sequence(nv: &NvParams, n_cycles: u32) -> Self {
        CameraConfig {
            internal_rate: 1.0 / (nv.t_ir + nv.tau),
            n_cycles,
            ..Default::default()
        }
    }

    /// Same accumulation, internal rate adjusted to hit `rate` external frames/s.
    pub fn with_external_rate(&self, rate: f64) -> Self {
        CameraConfig {
            internal_rate: rate * self.n_cycles as f64,
            ..*self
        }
    }

    pub fn external_rate(&self) -> f64 {
        self.internal_rate / self.n_cycles as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cycles == 0 {
            return Err(QdmError::invalid("n_cycles must be >= 1"));
        }
        if !(self.internal_rate > 0.0 && self.internal_rate <= MAX_INTERNAL_RATE) {
            return Err(QdmError::invalid(format!(
                "internal rate {} Hz outside (0, {MAX_INTERNAL_RATE}]",
                self.internal_rate
            )));
        }
        if self.external_rate() > MAX_EXTERNAL_RATE * (1.0 + 1e-12) {
            return Err(QdmError::invalid(format!(
                "external rate {} Hz exceeds {MAX_EXTERNAL_RATE} Hz",
                self.external_rate()
            )));
        }
        if !(self.cf > 0.0) || !(self.du_range > 0.0) || !(self.photons_per_exposure > 0.0) {
            return Err(QdmError::invalid("cf, du_range and photons_per_exposure must be > 0"));
        }
        if self.buffer_frames == 0 {
            return Err(QdmError::invalid("buffer_frames must be >= 1"));
        }
        Ok(())
    }

    /// Shot-noise standard deviation of one external frame, DU.
    pub fn shot_std_du(&self) -> f64 {
        self.cf * (self.photons_per_exposure * self.n_cycles as f64).sqrt()
    }

    /// Quantization-noise standard deviation of one external frame, DU.
    pub fn quant_std_du(&self) -> f64 {
        (self.channels as f64).sqrt() * quantization_noise_du(self.n_cycles)
    }

    pub fn frame_std_du(&self) -> f64 {
        self.shot_std_du().hypot(self.quant_std_du())
    }

    /// DU per tesla for a normalised-signal slope dS_norm/dB (1/T).
    pub fn du_slope(&self, s_norm_slope: f64) -> f64 {
        self.cf * self.photons_per_exposure * self.n_cycles as f64 / 4.0 * s_norm_slope
    }
}

/// Electronic plus digitisation noise of one channel, DU.
pub fn quantization_noise_du(n_cycles: u32) -> f64 {
    (0.81 + 0.16 * n_cycles as f64).sqrt()
}

/// CF = A_noise / (2 A_signal).
pub fn calibrate_cf(noise_slope: f64, signal_slope: f64) -> Result<f64> {
    if !(noise_slope > 0.0) {
        return Err(QdmError::NonPositiveSlope(noise_slope));
    }
    if !(signal_slope > 0.0) {
        return Err(QdmError::NonPositiveSlope(signal_slope));
    }
    Ok(noise_slope / (2.0 * signal_slope))
}

/// Simulated calibration sweep and the slopes recovered from it.
#[derive(Debug, Clone, PartialEq)]
pub struct CfSweep {
    pub durations: Vec<f64>,
    pub variances: Vec<f64>,
    pub offsets: Vec<f64>,
    pub signals: Vec<f64>,
    pub noise_slope: f64,
    pub signal_slope: f64,
    pub cf: f64,
}

/// Poisson photon-counting simulation of the two calibration measurements.
///
/// Noise: two exposures of equal length `t` (photon rate `rate` per second)
/// are differenced, the DU variance grows as CF^2 * 2 * rate * t.
/// Signal: exposures of length `t0 + dt` and `t0` are differenced, the mean
/// DU grows as CF * rate * dt.
pub fn simulate_cf_sweep(
    true_cf: f64,
    rate: f64,
    durations: &[f64],
    t0: f64,
    draws: usize,
    seed: u64,
) -> Result<CfSweep> {
    if durations.len() < 2 {
        return Err(QdmError::TooShort {
            needed: 2,
            got: durations.len(),
        });
    }
    let pois = |lambda: f64| Poisson::new(lambda).map_err(|e| QdmError::invalid(e.to_string()));
    let mut variances = Vec::with_capacity(durations.len());
    let mut signals = Vec::with_capacity(durations.len());
    for (i, &t) in durations.iter().enumerate() {
        let mut r = rng::stream(seed, domain::CALIBRATION, 2 * i as u64);
        let p = pois(rate * t)?;
        let du: Vec<f64> = (0..draws)
            .map(|_| true_cf * (p.sample(&mut r) - p.sample(&mut r)))
            .collect();
        variances.push(stats::std_sample(&du).powi(2));

        let mut r = rng::stream(seed, domain::CALIBRATION, 2 * i as u64 + 1);
        let long = pois(rate * (t0 + t))?;
        let short = pois(rate * t0)?;
        let du: Vec<f64> = (0..draws)
            .map(|_| true_cf * (long.sample(&mut r) - short.sample(&mut r)))
            .collect();
        signals.push(stats::mean(&du));
    }
    let noise = stats::linear_fit(durations, &variances);
    let signal = stats::linear_fit(durations, &signals);
    Ok(CfSweep {
        durations: durations.to_vec(),
        offsets: vec![t0; durations.len()],
        cf: calibrate_cf(noise.slope, signal.slope)?,
        variances,
        signals,
        noise_slope: noise.slope,
        signal_slope: signal.slope,
    })
}

/// Photon-shot-noise limited sensitivity of a Ramsey measurement, T/sqrt(Hz).
/// `delta_m` is 1 for single-quantum and 2 for double-quantum sensing.
pub fn shot_sensitivity(p: &NvParams, n_photons: f64, delta_m: u8) -> Result<f64> {
    if p.tau == 0.0 {
        return Err(QdmError::UnboundedSensitivity);
    }
    if !(n_photons > 0.0) {
        return Err(QdmError::invalid("photon number must be > 0"));
    }
    if delta_m != 1 && delta_m != 2 {
        return Err(QdmError::invalid("delta_m must be 1 or 2"));
    }
    p.validate()?;
    let pref = 1.0 / (delta_m as f64 * p.gamma);
    Ok(pref / (p.contrast * p.envelope() * n_photons.sqrt()) * (p.t_ir + p.tau).sqrt() / p.tau)
}

/// Field-equivalent sensitivity budget of the camera at a sequence operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityBudget {
    /// dS_norm/dB, 1/T.
    pub s_norm_slope: f64,
    /// DU per tesla.
    pub du_slope: f64,
    pub frame_rate: f64,
    pub quant_std_du: f64,
    pub shot_std_du: f64,
    /// Quantization-limited sensitivity, T/sqrt(Hz).
    pub eta_quant: f64,
    /// Shot-noise limited sensitivity from the closed-form expression.
    pub eta_shot: f64,
    /// Shot-noise limited sensitivity implied by the frame model.
    pub eta_shot_frames: f64,
    pub eta_combined: f64,
}

/// Sensitivity budget with the slope taken from the magnetometry curve.
pub fn sensitivity_budget(nv: &NvParams, cam: &CameraConfig) -> Result<SensitivityBudget> {
    let step = 1.0 / (400.0 * nv.tau.max(1e-9));
    let curve = spinphys::magnetometry_curve(nv, &spinphys::symmetric_grid(50, step))?;
    let du_slope = cam.du_slope(curve.slope.abs());
    if du_slope == 0.0 {
        return Err(QdmError::ZeroSlope);
    }
    let fs = cam.external_rate();
    let eta_quant = cam.quant_std_du() / du_slope / fs.sqrt();
    let eta_shot_frames = cam.shot_std_du() / du_slope / fs.sqrt();
    let eta_shot = shot_sensitivity(nv, cam.photons_per_exposure, 2)?;
    Ok(SensitivityBudget {
        s_norm_slope: curve.slope,
        du_slope,
        frame_rate: fs,
        quant_std_du: cam.quant_std_du(),
        shot_std_du: cam.shot_std_du(),
        eta_quant,
        eta_shot,
        eta_shot_frames,
        eta_combined: eta_quant.hypot(eta_shot),
    })
}

/// |sinc(pi f / F_ext)|, the frame-accumulation low-pass response.
pub fn spectral_attenuation(f: f64, cfg: &CameraConfig) -> f64 {
    let x = std::f64::consts::PI * f / cfg.external_rate();
    if x == 0.0 {
        1.0
    } else {
        (x.sin() / x).abs()
    }
}

/// Projected field at every internal exposure for every pixel.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSeries {
    /// `samples[k * width * height + pixel]` for exposure k.
    Explicit {
        width: usize,
        height: usize,
        samples: Vec<f64>,
    },
    /// field(pixel, k) = pattern[pixel] * modulation[k].
    Separable {
        pattern: FieldMap,
        modulation: Vec<f64>,
    },
}

impl FieldSeries {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            FieldSeries::Explicit { width, height, .. } => (*width, *height),
            FieldSeries::Separable { pattern, .. } => (pattern.width(), pattern.height()),
        }
    }

    pub fn exposures(&self) -> usize {
        match self {
            FieldSeries::Explicit {
                width,
                height,
                samples,
            } => samples.len() / (width * height).max(1),
            FieldSeries::Separable { modulation, .. } => modulation.len(),
        }
    }

    /// A static pattern held for `frames` external frames.
    pub fn constant(pattern: FieldMap, frames: usize, cfg: &CameraConfig) -> Self {
        FieldSeries::Separable {
            pattern,
            modulation: vec![1.0; frames * cfg.n_cycles as usize],
        }
    }
}

/// Noise switches for frame synthesis; `None` in `expose_frames` disables all noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseDraws {
    pub seed: u64,
    pub shot: bool,
    pub quantization: bool,
    /// Multiplies both noise terms; 1 reproduces the camera model.
    pub scale: f64,
}

impl Default for NoiseDraws {
    fn default() -> Self {
        NoiseDraws {
            seed: 0,
            shot: true,
            quantization: true,
            scale: 1.0,
        }
    }
}

impl NoiseDraws {
    pub fn seeded(seed: u64) -> Self {
        NoiseDraws {
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exposure {
    pub frames: FrameStack,
    /// Number of DU values clipped to the representable range.
    pub clamped: usize,
}

impl Exposure {
    pub fn clamp_fraction(&self) -> f64 {
        self.clamped as f64 / self.frames.data().len() as f64
    }
}

/// Accumulate internal exposures into external frames (DU).
pub fn expose_frames(
    series: &FieldSeries,
    slope: f64,
    cfg: &CameraConfig,
    noise: Option<&NoiseDraws>,
) -> Result<Exposure> {
    cfg.validate()?;
    if slope == 0.0 {
        return Err(QdmError::ZeroSlope);
    }
    let nc = cfg.n_cycles as usize;
    let (w, h) = series.dims();
    let npx = w * h;
    if let FieldSeries::Explicit { samples, .. } = series {
        if npx == 0 || samples.len() % npx != 0 {
            return Err(QdmError::DimensionMismatch(format!(
                "{} samples do not form whole {w}x{h} exposures",
                samples.len()
            )));
        }
    }
    let n_exp = series.exposures();
    if n_exp == 0 || !n_exp.is_multiple_of(nc) {
        return Err(QdmError::DimensionMismatch(format!(
            "{n_exp} internal exposures is not a multiple of {nc} cycles"
        )));
    }
    let n_frames = n_exp / nc;

    // Frame-averaged modulation is shared by all pixels of a separable series.
    let block_mod: Option<Vec<f64>> = match series {
        FieldSeries::Separable { modulation, .. } => Some(
            modulation
                .chunks_exact(nc)
                .map(|c| c.iter().sum::<f64>() / nc as f64)
                .collect(),
        ),
        _ => None,
    };

    let shot_std = cfg.shot_std_du();
    let quant_std = cfg.quant_std_du();
    let lambda = cfg.photons_per_exposure * nc as f64 / 2.0;
    let poisson = match cfg.shot_model {
        ShotModel::Poisson => {
            Some(Poisson::new(lambda).map_err(|e| QdmError::invalid(e.to_string()))?)
        }
        ShotModel::Gaussian => None,
    };

    let columns: Vec<(Vec<f64>, usize)> = (0..npx)
        .into_par_iter()
        .map(|px| {
            let mut out = Vec::with_capacity(n_frames);
            let mut clamped = 0;
            let mut shot_rng = noise.map(|n| rng::stream(n.seed, domain::SHOT, px as u64));
            let mut quant_rng = noise.map(|n| rng::stream(n.seed, domain::QUANT, px as u64));
            for f in 0..n_frames {
                let mean_field = match series {
                    FieldSeries::Separable { pattern, .. } => {
                        pattern.values()[px] * block_mod.as_ref().unwrap()[f]
                    }
                    FieldSeries::Explicit { samples, .. } => {
                        let mut acc = 0.0;
                        for k in f * nc..(f + 1) * nc {
                            acc += samples[k * npx + px];
                        }
                        acc / nc as f64
                    }
                };
                let mut du = slope * mean_field;
                if let Some(n) = noise {
                    if n.shot {
                        let r = shot_rng.as_mut().unwrap();
                        let z = match &poisson {
                            Some(p) => cfg.cf * (p.sample(r) - p.sample(r)),
                            None => {
                                let g: f64 = r.sample(StandardNormal);
                                shot_std * g
                            }
                        };
                        du += n.scale * z;
                    }
                    if n.quantization {
                        let g: f64 = quant_rng.as_mut().unwrap().sample(StandardNormal);
                        du += n.scale * quant_std * g;
                    }
                }
                if du.abs() > cfg.du_range {
                    du = du.signum() * cfg.du_range;
                    clamped += 1;
                }
                out.push(du);
            }
            (out, clamped)
        })
        .collect();

    let mut data = vec![0.0; n_frames * npx];
    let mut clamped = 0;
    for (px, (col, c)) in columns.into_iter().enumerate() {
        clamped += c;
        for (f, v) in col.into_iter().enumerate() {
            data[f * npx + px] = v;
        }
    }
    Ok(Exposure {
        frames: FrameStack::new(w, h, cfg.external_rate(), data)?,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionMode {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timing {
    pub t_acq: f64,
    pub t_wall: f64,
}

pub fn timing_model(n_framesets: usize, mode: AcquisitionMode, cfg: &CameraConfig) -> Result<Timing> {
    if n_framesets == 0 {
        return Err(QdmError::invalid("n_framesets must be >= 1"));
    }
    let n = n_framesets as f64;
    let t_acq = n * cfg.buffer_frames as f64 / cfg.external_rate();
    let soft = match mode {
        AcquisitionMode::Static => cfg.t_soft_static,
        AcquisitionMode::Dynamic => cfg.t_soft_dynamic,
    };
    Ok(Timing {
        t_acq,
        t_wall: t_acq + n * (cfg.t_transfer + soft),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn quantization_examples() {
        assert_eq!(quantization_noise_du(0), 0.9);
        assert!((quantization_noise_du(72) - 3.5114).abs() < 1e-4);
        assert!((quantization_noise_du(1) - 0.985).abs() < 1e-3);
    }

    #[test]
    fn cf_arithmetic_and_errors() {
        assert!(rel(calibrate_cf(2.0, 446.0).unwrap(), 1.0 / 446.0) < 1e-15);
        assert!(matches!(calibrate_cf(0.0, 1.0), Err(QdmError::NonPositiveSlope(_))));
        assert!(matches!(calibrate_cf(1.0, -1.0), Err(QdmError::NonPositiveSlope(_))));
    }

    #[test]
    fn cf_monte_carlo_recovery() {
        // 4e4 photons per 2.15 us exposure
        let rate = 4e4 / 2.15e-6;
        let durations: Vec<f64> = (1..=6).map(|k| k as f64 * 0.5e-6).collect();
        let s = simulate_cf_sweep(1.0 / 446.0, rate, &durations, 2.15e-6, 100_000, 1).unwrap();
        assert!(rel(s.cf, 1.0 / 446.0) < 0.02, "{}", s.cf * 446.0);
        let s2 = simulate_cf_sweep(1.0 / 446.0, 2.0 * rate, &durations, 2.15e-6, 100_000, 2).unwrap();
        assert!(rel(s2.cf, s.cf) < 0.03);
    }

    #[test]
    fn shot_sensitivity_examples() {
        let p = NvParams::default();
        let eta = shot_sensitivity(&p, 4e4, 2).unwrap();
        assert!(rel(eta, 1.7e-9) < 0.03, "{eta}");
        let eta4 = shot_sensitivity(&p, 16e4, 2).unwrap();
        assert!(rel(eta4, eta / 2.0) < 1e-15);
        assert!(rel(shot_sensitivity(&p, 4e4, 1).unwrap(), 2.0 * eta) < 1e-15);
        let z = NvParams { tau: 0.0, ..p };
        assert!(matches!(shot_sensitivity(&z, 4e4, 2), Err(QdmError::UnboundedSensitivity)));
    }

    #[test]
    fn budget_is_consistent() {
        let nv = NvParams::default();
        let cam = CameraConfig::for_sequence(&nv, 72);
        let b = sensitivity_budget(&nv, &cam).unwrap();
        // frame-model shot noise agrees with the closed form
        assert!(rel(b.eta_shot_frames, b.eta_shot) < 0.02, "{b:?}");
        assert!(rel(b.eta_quant, 2.7e-9) < 0.25, "{b:?}");
        assert!(rel(b.eta_combined, 3.2e-9) < 0.25, "{b:?}");
    }

    #[test]
    fn attenuation_examples() {
        let c = CameraConfig::default();
        assert_eq!(spectral_attenuation(0.0, &c), 1.0);
        assert!((spectral_attenuation(750.0, &c) - 0.707).abs() < 0.005);
        assert!((spectral_attenuation(200.0, &c) - 0.977).abs() < 0.001);
    }

    fn small_pattern(v: f64) -> FieldMap {
        FieldMap::new(3, 2, 1.9e-6, vec![v; 6]).unwrap()
    }

    #[test]
    fn constant_field_noiseless() {
        let cfg = CameraConfig::default();
        let s = FieldSeries::constant(small_pattern(2e-9), 5, &cfg);
        let e = expose_frames(&s, 5.7e7, &cfg, None).unwrap();
        assert_eq!(e.frames.n_frames(), 5);
        assert!(e.frames.data().iter().all(|&v| v == 5.7e7 * 2e-9));
        assert_eq!(e.clamped, 0);
        assert!(matches!(expose_frames(&s, 0.0, &cfg, None), Err(QdmError::ZeroSlope)));
        let bad = FieldSeries::Separable {
            pattern: small_pattern(1.0),
            modulation: vec![1.0; 73],
        };
        assert!(expose_frames(&bad, 1.0, &cfg, None).is_err());
    }

    #[test]
    fn explicit_matches_separable() {
        let cfg = CameraConfig {
            n_cycles: 4,
            internal_rate: 4000.0,
            ..Default::default()
        };
        let pattern = FieldMap::new(2, 1, 1.0, vec![1e-9, -3e-9]).unwrap();
        let modulation: Vec<f64> = (0..12).map(|k| (k as f64 * 0.3).sin()).collect();
        let samples: Vec<f64> = modulation
            .iter()
            .flat_map(|m| pattern.values().iter().map(move |p| p * m))
            .collect();
        let a = expose_frames(
            &FieldSeries::Separable {
                pattern: pattern.clone(),
                modulation,
            },
            1e8,
            &cfg,
            None,
        )
        .unwrap();
        let b = expose_frames(
            &FieldSeries::Explicit {
                width: 2,
                height: 1,
                samples,
            },
            1e8,
            &cfg,
            None,
        )
        .unwrap();
        for (x, y) in a.frames.data().iter().zip(b.frames.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn clamping_is_counted() {
        let cfg = CameraConfig::default();
        let s = FieldSeries::constant(small_pattern(1e-3), 2, &cfg);
        let e = expose_frames(&s, 5.7e7, &cfg, None).unwrap();
        assert_eq!(e.clamped, 12);
        assert!(e.frames.data().iter().all(|&v| v == 1023.0));
    }

    #[test]
    fn sinc_attenuation_from_fft() {
        let cfg = CameraConfig::default();
        let n_frames = 610;
        let n_exp = n_frames * cfg.n_cycles as usize;
        for &f in &[100.0, 200.0, 500.0, 750.0] {
            let modulation: Vec<f64> = (0..n_exp)
                .map(|k| (2.0 * std::f64::consts::PI * f * k as f64 / cfg.internal_rate).sin())
                .collect();
            let s = FieldSeries::Separable {
                pattern: FieldMap::new(1, 1, 1.0, vec![1e-9]).unwrap(),
                modulation,
            };
            let e = expose_frames(&s, 1e9, &cfg, None).unwrap();
            let mut buf: Vec<Complex<f64>> =
                e.frames.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
            FftPlanner::new().plan_fft_forward(n_frames).process(&mut buf);
            let bin = (f * n_frames as f64 / cfg.external_rate()).round() as usize;
            let amp = 2.0 * buf[bin].norm() / n_frames as f64;
            assert!(rel(amp, spectral_attenuation(f, &cfg)) < 0.02, "{f}: {amp}");
        }
    }

    #[test]
    fn noise_std_matches_model() {
        let cfg = CameraConfig::default();
        let s = FieldSeries::constant(FieldMap::zeros(2, 1, 1.0).unwrap(), 10_000, &cfg);
        let e = expose_frames(&s, 1e8, &cfg, Some(&NoiseDraws::seeded(4))).unwrap();
        let sd = stats::std_sample(&e.frames.pixel_series(0, 0));
        assert!(rel(sd, cfg.frame_std_du()) < 0.03, "{sd}");
        // reproducible
        let again = expose_frames(&s, 1e8, &cfg, Some(&NoiseDraws::seeded(4))).unwrap();
        assert_eq!(e, again);
        let pois = CameraConfig {
            shot_model: ShotModel::Poisson,
            ..cfg
        };
        let p = expose_frames(&s, 1e8, &pois, Some(&NoiseDraws::seeded(4))).unwrap();
        let sd = stats::std_sample(&p.frames.pixel_series(1, 0));
        assert!(rel(sd, cfg.frame_std_du()) < 0.03, "{sd}");
    }

    #[test]
    fn quantization_field_equivalent_scales_inversely() {
        let cfg = CameraConfig::default();
        let s = FieldSeries::constant(FieldMap::zeros(1, 1, 1.0).unwrap(), 4000, &cfg);
        let noise = NoiseDraws {
            shot: false,
            ..NoiseDraws::seeded(8)
        };
        let a = expose_frames(&s, 1e8, &cfg, Some(&noise)).unwrap();
        let b = expose_frames(&s, 2e8, &cfg, Some(&noise)).unwrap();
        // Same DU noise; the field equivalent halves.
        assert_eq!(a.frames.data(), b.frames.data());
        let fa = stats::std_sample(a.frames.data()) / 1e8;
        let fb = stats::std_sample(b.frames.data()) / 2e8;
        assert!(rel(fb, fa / 2.0) < 1e-12);
    }

    #[test]
    fn timing_examples() {
        let cfg = CameraConfig::default().with_external_rate(528.0);
        let t = timing_model(1, AcquisitionMode::Static, &cfg).unwrap();
        assert!((t.t_acq - 0.947).abs() < 1e-3);
        assert!((t.t_wall - 7.947).abs() < 1e-3);
        let t = timing_model(3802, AcquisitionMode::Static, &cfg).unwrap();
        assert!((t.t_acq - 3600.0).abs() < 1.0);
        assert!(timing_model(0, AcquisitionMode::Static, &cfg).is_err());
    }
}
