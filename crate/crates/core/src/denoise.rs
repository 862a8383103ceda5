//! Non-local means and Gaussian smoothing of field maps, and the matched-SNR
//! comparison between them.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QdmError, Result};
use crate::fieldsolve::{self, SensingGeometry, SourceSet, WirePhantom};
use crate::grid::{FieldMap, Roi};
use crate::pipeline;
use crate::rng::{self, domain};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlmParams {
    /// Side of the square search window, pixels (odd).
    pub search_window: usize,
    /// Side of the square template window, pixels (odd).
    pub template_window: usize,
    /// Filtering strength, field units.
    pub h: f64,
    /// Noise level subtracted from template distances, field units.
    pub sigma: f64,
}

impl Default for NlmParams {
    fn default() -> Self {
        NlmParams {
            search_window: 21,
            template_window: 7,
            h: 44e-12,
            sigma: 88e-12,
        }
    }
}

impl NlmParams {
    /// h = 0.5 sigma, with `sigma` the noise level of the input.
    pub fn for_noise(sigma: f64) -> Self {
        NlmParams {
            h: 0.5 * sigma,
            sigma,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.search_window.is_multiple_of(2) || self.template_window.is_multiple_of(2) {
            return Err(QdmError::invalid("NLM windows must be odd"));
        }
        if self.template_window >= self.search_window {
            return Err(QdmError::invalid("template window must be smaller than search window"));
        }
        if !(self.h > 0.0) || !(self.sigma >= 0.0) {
            return Err(QdmError::invalid("NLM needs h > 0 and sigma >= 0"));
        }
        Ok(())
    }
}

/// Direct non-local means with edge-replicated templates.
pub fn nlm_denoise(map: &FieldMap, p: &NlmParams) -> Result<FieldMap> {
    p.validate()?;
    let (w, h) = (map.width(), map.height());
    if w < p.search_window || h < p.search_window {
        return Err(QdmError::invalid(format!(
            "{w}x{h} map is smaller than the {0}x{0} search window",
            p.search_window
        )));
    }
    let sr = (p.search_window / 2) as isize;
    let tr = (p.template_window / 2) as isize;
    let pad = tr;
    let pw = w as isize + 2 * pad;
    let src = map.values();
    let padded: Vec<f64> = (0..(h as isize + 2 * pad))
        .flat_map(|y| {
            let yy = (y - pad).clamp(0, h as isize - 1) as usize;
            (0..pw).map(move |x| {
                let xx = (x - pad).clamp(0, w as isize - 1) as usize;
                src[yy * w + xx]
            })
        })
        .collect();
    let at = |x: isize, y: isize| padded[((y + pad) * pw + x + pad) as usize];
    let n_t = (p.template_window * p.template_window) as f64;
    let floor = 2.0 * p.sigma * p.sigma;
    let inv_h2 = 1.0 / (p.h * p.h);

    let out: Vec<f64> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let (px, py) = ((idx % w) as isize, (idx / w) as isize);
            let vp = at(px, py);
            let mut wsum = 0.0;
            let mut acc = 0.0;
            for qy in (py - sr).max(0)..=(py + sr).min(h as isize - 1) {
                for qx in (px - sr).max(0)..=(px + sr).min(w as isize - 1) {
                    let mut d2 = 0.0;
                    for ty in -tr..=tr {
                        for tx in -tr..=tr {
                            let d = at(px + tx, py + ty) - at(qx + tx, qy + ty);
                            d2 += d * d;
                        }
                    }
                    let wt = (-((d2 / n_t - floor).max(0.0)) * inv_h2).exp();
                    wsum += wt;
                    acc += wt * (at(qx, qy) - vp);
                }
            }
            vp + acc / wsum
        })
        .collect();
    FieldMap::new(w, h, map.pitch(), out)
}

/// Gaussian smoothing with kernel standard deviation sqrt(2) h pixels, so
/// white noise falls by 1/(h sqrt(8 pi)).
pub fn gaussian_smooth(map: &FieldMap, h: f64) -> Result<FieldMap> {
    if !(h > 0.0) {
        return Err(QdmError::invalid(format!("smoothing width must be > 0, got {h}")));
    }
    map.gaussian_blur(std::f64::consts::SQRT_2 * h)
}

/// Predicted white-noise reduction factor of `gaussian_smooth`.
pub fn gaussian_noise_factor(h: f64) -> f64 {
    1.0 / (h * (8.0 * std::f64::consts::PI).sqrt())
}

pub fn mse(a: &FieldMap, b: &FieldMap) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(QdmError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let n = a.values().len() as f64;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// Adds white Gaussian noise drawn from a seeded stream.
pub fn add_white_noise(map: &FieldMap, sigma: f64, seed: u64) -> FieldMap {
    let mut r = rng::stream(seed, domain::DENOISE, 0);
    let vals = map
        .values()
        .iter()
        .map(|v| v + sigma * r.sample::<f64, _>(StandardNormal))
        .collect();
    FieldMap::new(map.width(), map.height(), map.pitch(), vals).expect("same shape")
}

/// Smallest Gaussian width whose output SNR is within `tol` (relative) of
/// `target`. When no width up to a tenth of the map reaches it, returns the
/// width with the highest SNR instead.
pub fn match_gaussian_snr(
    noisy: &FieldMap,
    target: f64,
    signal_roi: &Roi,
    noise_roi: &Roi,
    tol: f64,
) -> Result<(f64, FieldMap)> {
    let eval = |h: f64| -> Result<(f64, FieldMap)> {
        let m = gaussian_smooth(noisy, h)?;
        Ok((pipeline::snr(&m, signal_roi, noise_roi)?, m))
    };
    // SNR is not monotonic in h once the noise ROI decorrelates, so scan for
    // the first crossing and bisect inside it.
    let h_max = 0.1 * noisy.width().min(noisy.height()) as f64;
    let step = 0.25;
    let (mut lo, mut hi) = (0.05, step);
    let mut best = (lo, f64::NEG_INFINITY);
    loop {
        let (s, _) = eval(hi)?;
        if s > best.1 {
            best = (hi, s);
        }
        if s >= target {
            break;
        }
        lo = hi;
        hi += step;
        if hi > h_max {
            // unreachable: fall back to the width with the highest SNR
            let (s, m) = eval(best.0)?;
            debug_assert!(s < target);
            return Ok((best.0, m));
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let (s, m) = eval(mid)?;
        if ((s - target) / target).abs() <= tol || hi - lo < 1e-9 {
            return Ok((mid, m));
        }
        if s < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(QdmError::NoConvergence {
        iterations: 80,
        cost: hi - lo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DenoiseComparison {
    pub snr_input: f64,
    pub snr_nlm: f64,
    pub snr_gaussian: f64,
    /// Matched Gaussian width, pixels.
    pub h_gaussian: f64,
    /// Errors against the noiseless map.
    pub mse_nlm: f64,
    pub mse_gaussian: f64,
}

impl DenoiseComparison {
    pub fn snr_gain(&self) -> f64 {
        self.snr_nlm / self.snr_input
    }

    /// Fractional MSE advantage of NLM over the matched Gaussian.
    pub fn mse_advantage(&self) -> f64 {
        1.0 - self.mse_nlm / self.mse_gaussian
    }
}

/// Maps produced by one denoising comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseRun {
    pub stats: DenoiseComparison,
    pub noisy: FieldMap,
    pub nlm: FieldMap,
    pub gaussian: FieldMap,
}

/// Noisy realisation of `clean`, NLM with `params`, Gaussian matched to the
/// NLM output SNR, both scored against `clean`.
///
/// The input SNR takes its amplitude from the clean map because the
/// peak-to-peak of a noisy map is dominated by noise extremes.
pub fn denoise_experiment(
    clean: &FieldMap,
    noise_sigma: f64,
    params: &NlmParams,
    signal_roi: &Roi,
    noise_roi: &Roi,
    seed: u64,
) -> Result<DenoiseRun> {
    let noisy = add_white_noise(clean, noise_sigma, seed);
    let snr_input = stats_ptp(&clean.region(signal_roi)?) / stats::std_pop(&noisy.region(noise_roi)?);
    let nlm = nlm_denoise(&noisy, params)?;
    let snr_nlm = pipeline::snr(&nlm, signal_roi, noise_roi)?;
    let (h_gaussian, gaussian) =
        match_gaussian_snr(&noisy, snr_nlm, signal_roi, noise_roi, 0.02)?;
    let stats = DenoiseComparison {
        snr_input,
        snr_nlm,
        snr_gaussian: pipeline::snr(&gaussian, signal_roi, noise_roi)?,
        h_gaussian,
        mse_nlm: mse(&nlm, clean)?,
        mse_gaussian: mse(&gaussian, clean)?,
    };
    Ok(DenoiseRun {
        stats,
        noisy,
        nlm,
        gaussian,
    })
}

pub fn compare_denoisers(
    clean: &FieldMap,
    noise_sigma: f64,
    params: &NlmParams,
    signal_roi: &Roi,
    noise_roi: &Roi,
    seed: u64,
) -> Result<DenoiseComparison> {
    denoise_experiment(clean, noise_sigma, params, signal_roi, noise_roi, seed).map(|r| r.stats)
}

/// Peak-to-peak amplitude of the surrogate scene, T.
pub const SURROGATE_PTP: f64 = 300e-12;
/// White-noise level of the surrogate scene, T.
pub const SURROGATE_NOISE: f64 = 100e-12;

/// Meander phantom used as a stand-in for the unpublished imaging pattern.
pub fn surrogate_phantom() -> WirePhantom {
    WirePhantom::new(vec![fieldsolve::serpentine(6, 100e-6, 16e-6, 85e-6)], 9e-9)
        .expect("valid built-in phantom")
}

/// Noiseless surrogate map with its signal and source-free regions.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateScene {
    pub clean: FieldMap,
    pub signal_roi: Roi,
    pub noise_roi: Roi,
}

/// Renders `phantom` on a 142 x 142 grid with the pattern in the lower-left
/// quadrant and rescales it to `SURROGATE_PTP`.
pub fn surrogate_scene(phantom: &WirePhantom) -> Result<SurrogateScene> {
    let g = SensingGeometry {
        center: [50e-6, 50e-6],
        ..Default::default()
    };
    let src = SourceSet {
        phantom: Some(phantom.clone()),
        ..Default::default()
    };
    let map = fieldsolve::render_map(&src, &g)?;
    let ptp = map.peak_to_peak();
    if ptp == 0.0 {
        return Err(QdmError::DegenerateData("phantom produces no field".into()));
    }
    Ok(SurrogateScene {
        clean: map.scale(SURROGATE_PTP / ptp),
        signal_roi: Roi::new(10, 5, 70, 80),
        noise_roi: Roi::new(92, 92, 40, 40),
    })
}

fn stats_ptp(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise(w: usize, sigma: f64, seed: u64) -> FieldMap {
        add_white_noise(&FieldMap::zeros(w, w, 1.0).unwrap(), sigma, seed)
    }

    #[test]
    fn nlm_constant_fixed_point() {
        let c = FieldMap::new(30, 30, 1.0, vec![2.5e-9; 900]).unwrap();
        let out = nlm_denoise(&c, &NlmParams::for_noise(1e-10)).unwrap();
        assert!(out.values().iter().all(|&v| v == 2.5e-9));
    }

    #[test]
    fn nlm_small_h_is_identity() {
        let m = FieldMap::from_fn(25, 25, 1.0, |x, y| ((x * 7 + y * 3) % 11) as f64).unwrap();
        let p = NlmParams {
            h: 1e-6,
            sigma: 0.0,
            ..Default::default()
        };
        let out = nlm_denoise(&m, &p).unwrap();
        for (a, b) in out.values().iter().zip(m.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn nlm_rejects_bad_input() {
        let m = FieldMap::zeros(20, 30, 1.0).unwrap();
        assert!(nlm_denoise(&m, &NlmParams::default()).is_err());
        let m = FieldMap::zeros(30, 30, 1.0).unwrap();
        let even = NlmParams {
            template_window: 6,
            ..Default::default()
        };
        assert!(nlm_denoise(&m, &even).is_err());
        let big = NlmParams {
            template_window: 21,
            ..Default::default()
        };
        assert!(nlm_denoise(&m, &big).is_err());
    }

    #[test]
    fn gaussian_examples() {
        let c = FieldMap::new(20, 20, 1.0, vec![1.0; 400]).unwrap();
        let s = gaussian_smooth(&c, 2.0).unwrap();
        assert!(s.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let mut d = vec![0.0; 41 * 41];
        d[20 * 41 + 20] = 1.0;
        let k = gaussian_smooth(&FieldMap::new(41, 41, 1.0, d).unwrap(), 2.0).unwrap();
        assert!((k.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(gaussian_smooth(&c, 0.0).is_err());
    }

    #[test]
    fn gaussian_noise_reduction() {
        let n = noise(300, 1.0, 3);
        for &h in &[2.0, 2.9, 4.0] {
            let s = gaussian_smooth(&n, h).unwrap().crop_border(20).unwrap();
            let ratio = s.std() / n.std();
            assert!((ratio / gaussian_noise_factor(h) - 1.0).abs() < 0.1, "{h}: {ratio}");
        }
    }

    #[test]
    fn mse_examples() {
        let a = FieldMap::from_fn(5, 4, 1.0, |x, y| (x + y) as f64).unwrap();
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 0.5);
        assert!((mse(&a, &b).unwrap() - 0.25).abs() < 1e-15);
        assert!(mse(&a, &FieldMap::zeros(4, 5, 1.0).unwrap()).is_err());
    }

    #[test]
    fn denoisers_preserve_mean() {
        for seed in 0..20 {
            let base = FieldMap::new(40, 40, 1.0, vec![1e-9; 1600]).unwrap();
            let n = add_white_noise(&base, 1e-10, seed);
            let a = nlm_denoise(&n, &NlmParams::for_noise(1e-10)).unwrap();
            let g = gaussian_smooth(&n, 2.6).unwrap();
            assert!((a.mean() / n.mean() - 1.0).abs() < 0.01);
            assert!((g.mean() / n.mean() - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn surrogate_single_seed() {
        let scene = surrogate_scene(&surrogate_phantom()).unwrap();
        assert!((scene.clean.peak_to_peak() - SURROGATE_PTP).abs() < 1e-18);
        let c = compare_denoisers(
            &scene.clean,
            SURROGATE_NOISE,
            &NlmParams::for_noise(SURROGATE_NOISE),
            &scene.signal_roi,
            &scene.noise_roi,
            7,
        )
        .unwrap();
        assert!((c.snr_input / 3.0 - 1.0).abs() < 0.2, "{c:?}");
        assert!(c.snr_gain() >= 8.0, "{c:?}");
        assert!((c.snr_gaussian / c.snr_nlm - 1.0).abs() <= 0.02);
        assert!(c.mse_advantage() >= 0.05, "{c:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn nlm_is_convex(seed in 0u64..10_000, sigma in 0.1f64..2.0) {
            let n = noise(24, 1.0, seed);
            let out = nlm_denoise(&n, &NlmParams::for_noise(sigma)).unwrap();
            let (lo, hi) = (n.min(), n.max());
            prop_assert!(out.values().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        }
    }
}
