//! NV ground-state spin model: resonances, double-quantum phase, Ramsey fringes
//! with 15N hyperfine beating, fringe fitting, the four-measurement DQ
//! normalisation, the magnetometry calibration curve and the NV-NV limited
//! dephasing estimate.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::constants::GAMMA_NV_HZ_PER_T;
use crate::error::{QdmError, Result};

/// Ensemble spin constants. Angular quantities are rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NvParams {
    /// Zero-field splitting, rad/s.
    pub d: f64,
    /// Longitudinal stress shift, rad/s.
    pub mz: f64,
    /// Gyromagnetic ratio, rad/(s T).
    pub gamma: f64,
    /// 15N hyperfine splitting of the NV resonance, Hz.
    pub a_hf: f64,
    pub t2_star: f64,
    /// Stretched-exponential decay exponent.
    pub p: f64,
    /// Readout contrast at zero evolution time.
    pub contrast: f64,
    /// Combined initialisation and readout time, s.
    pub t_ir: f64,
    /// Free evolution time, s.
    pub tau: f64,
}

impl Default for NvParams {
    fn default() -> Self {
        NvParams {
            d: 2.0 * PI * 2.87e9,
            mz: 0.0,
            gamma: 2.0 * PI * GAMMA_NV_HZ_PER_T,
            a_hf: 3.05e6,
            t2_star: 2.3e-6,
            p: 1.0,
            contrast: 0.03,
            t_ir: 7.04e-6,
            tau: 2.29e-6,
        }
    }
}

impl NvParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(QdmError::invalid(m.to_string()));
        if !(self.t2_star > 0.0) {
            return bad("t2_star must be > 0");
        }
        if !(self.contrast > 0.0 && self.contrast < 1.0) {
            return bad("contrast must lie in (0, 1)");
        }
        if !(self.p > 0.0) {
            return bad("p must be > 0");
        }
        if !(self.tau >= 0.0) {
            return bad("tau must be >= 0");
        }
        if !(self.t_ir >= 0.0) {
            return bad("t_ir must be >= 0");
        }
        if !(self.gamma > 0.0) {
            return bad("gamma must be > 0");
        }
        Ok(())
    }

    pub fn gamma_hz(&self) -> f64 {
        self.gamma / (2.0 * PI)
    }

    /// Decay envelope exp(-(tau/T2*)^p) at the configured evolution time.
    pub fn envelope(&self) -> f64 {
        (-(self.tau / self.t2_star).powf(self.p)).exp()
    }
}

/// Transition frequencies (f_plus, f_minus) in Hz for a longitudinal field.
pub fn nv_resonances(p: &NvParams, bz: f64) -> (f64, f64) {
    let center = (p.d + p.mz) / (2.0 * PI);
    let shift = p.gamma_hz() * bz;
    (center + shift, center - shift)
}

/// Relative phase accumulated by the double-quantum coherence, rad.
pub fn dq_phase(b_sig: f64, tau: f64) -> f64 {
    2.0 * (2.0 * PI * GAMMA_NV_HZ_PER_T) * b_sig * tau
}

/// Ramsey fringe value at one evolution time.
pub fn ramsey_point(t2: f64, detuning: f64, a_hf: f64, contrast: f64, p: f64, tau: f64) -> f64 {
    let env = (-(tau / t2).powf(p)).exp();
    // (1/2)[cos 2pi(d + A/2)t + cos 2pi(d - A/2)t] = cos(2pi d t) cos(pi A t)
    contrast * env * (2.0 * PI * detuning * tau).cos() * (PI * a_hf * tau).cos()
}

pub fn ramsey_signal(p: &NvParams, detuning: f64, taus: &[f64]) -> Vec<f64> {
    taus.iter()
        .map(|&t| ramsey_point(p.t2_star, detuning, p.a_hf, p.contrast, p.p, t))
        .collect()
}

/// Fitted Ramsey parameters and 1-sigma uncertainties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamseyFit {
    pub t2_star: f64,
    pub detuning: f64,
    pub a_hf: f64,
    pub contrast: f64,
    pub p: f64,
    /// Standard errors in the order (t2_star, detuning, a_hf, contrast, p).
    pub sigma: [f64; 5],
    /// Residual sum of squares.
    pub rss: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamseyFitOptions {
    pub max_iterations: usize,
    /// The fringe model is symmetric under detuning <-> A/2; the pairing whose
    /// hyperfine splitting lies closer to this value is reported.
    pub a_hf_hint: f64,
}

impl Default for RamseyFitOptions {
    fn default() -> Self {
        RamseyFitOptions {
            max_iterations: 500,
            a_hf_hint: 3.05e6,
        }
    }
}

// Internal units: microseconds and megahertz keep all parameters O(1).
const T_UNIT: f64 = 1e-6;
const F_UNIT: f64 = 1e6;

fn model_and_jacobian(theta: &[f64; 5], t: f64) -> (f64, [f64; 5]) {
    let [t2, d, a, c, p] = *theta;
    let u = if t > 0.0 { (t / t2).powf(p) } else { 0.0 };
    let e = (-u).exp();
    let (s1, c1) = (2.0 * PI * d * t).sin_cos();
    let (s2, c2) = (PI * a * t).sin_cos();
    let f = c * e * c1 * c2;
    let de_dt2 = e * p * u / t2;
    let de_dp = if t > 0.0 { -e * u * (t / t2).ln() } else { 0.0 };
    (
        f,
        [
            c * de_dt2 * c1 * c2,
            -c * e * 2.0 * PI * t * s1 * c2,
            -c * e * c1 * PI * t * s2,
            e * c1 * c2,
            c * de_dp * c1 * c2,
        ],
    )
}

fn cost(theta: &[f64; 5], t: &[f64], y: &[f64]) -> f64 {
    t.iter()
        .zip(y)
        .map(|(&ti, &yi)| {
            let r = yi - model_and_jacobian(theta, ti).0;
            r * r
        })
        .sum()
}

fn clamp_theta(th: &mut [f64; 5]) {
    th[0] = th[0].max(1e-4);
    th[1] = th[1].abs();
    th[2] = th[2].abs();
    th[3] = th[3].max(1e-12);
    th[4] = th[4].clamp(0.2, 5.0);
}

/// Two dominant fringe frequencies from a zero-padded FFT of the samples
/// (resampled to a uniform grid if needed). Returns (higher, lower) in MHz.
fn fft_peaks(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len();
    let span = t[n - 1] - t[0];
    let dt = span / (n - 1) as f64;
    let uniform: Vec<f64> = (0..n)
        .map(|i| {
            let ti = t[0] + i as f64 * dt;
            let k = t.partition_point(|&x| x <= ti).clamp(1, n - 1);
            let s = (ti - t[k - 1]) / (t[k] - t[k - 1]);
            y[k - 1] + s.clamp(0.0, 1.0) * (y[k] - y[k - 1])
        })
        .collect();
    let m = (16 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = uniform.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(m, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let mag: Vec<f64> = buf[..m / 2].iter().map(|z| z.norm()).collect();
    let df = 1.0 / (m as f64 * dt);
    let mut peaks: Vec<(f64, usize)> = (0..mag.len())
        .filter(|&i| {
            let left = if i == 0 { f64::NEG_INFINITY } else { mag[i - 1] };
            let right = if i + 1 < mag.len() { mag[i + 1] } else { f64::NEG_INFINITY };
            mag[i] >= left && mag[i] > right
        })
        .map(|i| (mag[i], i))
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    let f = |i: usize| {
        // parabolic refinement of the bin position
        if i == 0 || i + 1 >= mag.len() {
            return i as f64 * df;
        }
        let (a, b, c) = (mag[i - 1], mag[i], mag[i + 1]);
        let den = a - 2.0 * b + c;
        let off = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
        (i as f64 + off.clamp(-0.5, 0.5)) * df
    };
    let f1 = peaks.first().map_or(0.0, |p| f(p.1));
    let f2 = peaks.get(1).map_or(0.0, |p| f(p.1));
    (f1.max(f2), f1.min(f2))
}

/// Least-squares fit of the Ramsey fringe model to `(tau, signal)` samples.
pub fn fit_ramsey(taus: &[f64], signal: &[f64], opts: &RamseyFitOptions) -> Result<RamseyFit> {
    if taus.len() != signal.len() {
        return Err(QdmError::DimensionMismatch(format!(
            "{} times vs {} samples",
            taus.len(),
            signal.len()
        )));
    }
    if taus.len() < 8 {
        return Err(QdmError::TooShort {
            needed: 8,
            got: taus.len(),
        });
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) || taus[0] < 0.0 {
        return Err(QdmError::invalid("evolution times must be >= 0 and increasing"));
    }
    let scale = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lo = signal.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = signal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 1e-12 * scale.max(f64::MIN_POSITIVE)) || scale == 0.0 {
        return Err(QdmError::DegenerateData("constant samples".into()));
    }

    let t: Vec<f64> = taus.iter().map(|v| v / T_UNIT).collect();
    let y = signal;

    // Frequencies from the spectrum, pairing chosen by the hyperfine hint.
    let (f1, f2) = fft_peaks(&t, y);
    let hint = opts.a_hf_hint / F_UNIT;
    let (mut d0, mut a0) = if ((f1 - f2) - hint).abs() <= ((f1 + f2) - hint).abs() {
        (0.5 * (f1 + f2), f1 - f2)
    } else {
        (0.5 * (f1 - f2), f1 + f2)
    };
    if a0 <= 0.0 {
        // Start off the symmetric saddle.
        a0 = 0.1 * d0.max(0.1);
    }
    if d0 <= 0.0 {
        d0 = 0.01;
    }
    let c0 = scale;

    // T2 from the log envelope where the carrier is well away from a node.
    let mut num = 0.0;
    let mut den = 0.0;
    for (&ti, &yi) in t.iter().zip(y) {
        let carrier = (2.0 * PI * d0 * ti).cos() * (PI * a0 * ti).cos();
        if carrier.abs() > 0.5 && ti > 0.0 {
            let r = yi / (c0 * carrier);
            if r > 0.0 && r < 1.0 {
                num += ti * ti;
                den -= ti * r.ln();
            }
        }
    }
    let span = t[t.len() - 1] - t[0];
    let mut t2_0 = if den > 0.0 { num / den } else { f64::NAN };
    if !(t2_0.is_finite() && t2_0 > 0.0 && t2_0 < 100.0 * span) {
        // Coarse grid fallback.
        t2_0 = (0..60)
            .map(|k| span * 0.01 * 1.1f64.powi(k))
            .min_by(|a, b| {
                cost(&[*a, d0, a0, c0, 1.0], &t, y).total_cmp(&cost(&[*b, d0, a0, c0, 1.0], &t, y))
            })
            .unwrap();
    }

    let mut theta = [t2_0, d0, a0, c0, 1.0];
    let (theta, iterations, rss) = levenberg_marquardt(&mut theta, &t, y, opts.max_iterations)?;

    let [mut t2, mut d, mut a, c, p] = theta;
    // Canonical labelling of the symmetric pair.
    let alt_a = 2.0 * d;
    if (alt_a - hint).abs() < (a - hint).abs() {
        let tmp = d;
        d = 0.5 * a;
        a = 2.0 * tmp;
    }
    t2 = t2.abs();

    // Covariance s^2 (J^T J)^-1 at the optimum.
    let n = t.len();
    let mut jac = DMatrix::<f64>::zeros(n, 5);
    for (i, &ti) in t.iter().enumerate() {
        let (_, g) = model_and_jacobian(&[t2, d, a, c, p], ti);
        for k in 0..5 {
            jac[(i, k)] = g[k];
        }
    }
    let dof = (n as f64 - 5.0).max(1.0);
    let s2 = rss / dof;
    let jtj = jac.transpose() * &jac;
    let cov = jtj.try_inverse().unwrap_or_else(|| DMatrix::from_element(5, 5, f64::NAN)) * s2;
    let units = [T_UNIT, F_UNIT, F_UNIT, 1.0, 1.0];
    let mut sigma = [0.0; 5];
    for k in 0..5 {
        sigma[k] = cov[(k, k)].max(0.0).sqrt() * units[k];
    }
    Ok(RamseyFit {
        t2_star: t2 * T_UNIT,
        detuning: d * F_UNIT,
        a_hf: a * F_UNIT,
        contrast: c,
        p,
        sigma,
        rss,
        iterations,
    })
}

fn levenberg_marquardt(
    theta: &mut [f64; 5],
    t: &[f64],
    y: &[f64],
    max_iter: usize,
) -> Result<([f64; 5], usize, f64)> {
    let n = t.len();
    let mut lambda = 1e-3;
    let mut c = cost(theta, t, y);
    for iter in 1..=max_iter {
        let mut jtj = DMatrix::<f64>::zeros(5, 5);
        let mut jtr = DVector::<f64>::zeros(5);
        for i in 0..n {
            let (f, g) = model_and_jacobian(theta, t[i]);
            let r = y[i] - f;
            for a in 0..5 {
                jtr[a] += g[a] * r;
                for b in 0..5 {
                    jtj[(a, b)] += g[a] * g[b];
                }
            }
        }
        let grad = jtr.amax();
        if grad <= 1e-15 * (1.0 + c) {
            return Ok((*theta, iter, c));
        }
        loop {
            let mut aug = jtj.clone();
            for k in 0..5 {
                aug[(k, k)] += lambda * jtj[(k, k)].max(1e-30);
            }
            let step = match aug.cholesky() {
                Some(ch) => ch.solve(&jtr),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        return Ok((*theta, iter, c));
                    }
                    continue;
                }
            };
            let mut trial = *theta;
            for k in 0..5 {
                trial[k] += step[k];
            }
            clamp_theta(&mut trial);
            let ct = cost(&trial, t, y);
            if ct <= c {
                let rel_step = (0..5)
                    .map(|k| (trial[k] - theta[k]).abs() / (theta[k].abs() + 1e-12))
                    .fold(0.0, f64::max);
                let rel_cost = (c - ct) / c.max(f64::MIN_POSITIVE);
                *theta = trial;
                c = ct;
                lambda = (lambda / 3.0).max(1e-12);
                if rel_step < 1e-13 || (rel_cost < 1e-15 && rel_step < 1e-9) {
                    return Ok((*theta, iter, c));
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e20 {
                // No downhill step exists at working precision.
                return Ok((*theta, iter, c));
            }
        }
    }
    Err(QdmError::NoConvergence {
        iterations: max_iter,
        cost: c,
    })
}

/// 1/T2* contributions from NV-NV interactions and static background terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NvConcentrations {
    /// NVs aligned with the sensing axis, ppm.
    pub nv_par: f64,
    /// NVs along the other three axes, ppm.
    pub nv_nonpar: f64,
    /// Rate per ppm of aligned NVs, 1/(s ppm).
    pub a_par: f64,
    /// Rate per ppm of non-aligned NVs, 1/(s ppm).
    pub a_nonpar: f64,
    /// Fraction of non-aligned NV dephasing that is not refocused, in [0, 1].
    pub zeta: f64,
    pub c13_t2: f64,
    pub bias_grad_t2: f64,
}

impl Default for NvConcentrations {
    fn default() -> Self {
        NvConcentrations {
            nv_par: 0.59,
            nv_nonpar: 1.77,
            a_par: 0.247e6,
            a_nonpar: 0.165e6,
            zeta: 0.0,
            c13_t2: 200e-6,
            bias_grad_t2: 850e-6,
        }
    }
}

/// NV-NV limited dephasing time; halved for the double-quantum coherence.
pub fn t2star_nv_limit(c: &NvConcentrations, dq: bool) -> f64 {
    let rate = c.a_par * c.nv_par
        + c.zeta * c.a_nonpar * c.nv_nonpar
        + 1.0 / c.c13_t2
        + 1.0 / c.bias_grad_t2;
    let t = 1.0 / rate;
    if dq {
        0.5 * t
    } else {
        t
    }
}

/// Readout channel of a DQ 4-Ramsey measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    I,
    Q,
}

/// Phases of the two microwave tones (+X = +1, -X = -1) in one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dq4Entry {
    pub phase_plus: i8,
    pub phase_minus: i8,
    pub channel: Channel,
}

impl Dq4Entry {
    /// Sign with which the double-quantum signal appears.
    pub fn dq_sign(&self) -> f64 {
        (self.phase_plus * self.phase_minus) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dq4Pattern {
    pub entries: [Dq4Entry; 4],
}

impl Dq4Pattern {
    pub fn i_channel() -> Self {
        let e = |p, m| Dq4Entry {
            phase_plus: p,
            phase_minus: m,
            channel: Channel::I,
        };
        Dq4Pattern {
            entries: [e(1, 1), e(1, -1), e(-1, -1), e(-1, 1)],
        }
    }

    /// Same four measurements read out in the order (M2, M1, M4, M3).
    pub fn q_channel() -> Self {
        let i = Self::i_channel().entries;
        let mut entries = [i[1], i[0], i[3], i[2]];
        entries.iter_mut().for_each(|e| e.channel = Channel::Q);
        Dq4Pattern { entries }
    }

    /// Raw signals for a common-mode level `common`, double-quantum signal `d`
    /// and single-quantum residues carried by each tone.
    pub fn measurements(&self, common: f64, d: f64, sq_plus: f64, sq_minus: f64) -> [f64; 4] {
        self.entries.map(|e| {
            common + e.dq_sign() * d + e.phase_plus as f64 * sq_plus + e.phase_minus as f64 * sq_minus
        })
    }

    pub fn normalized(&self, common: f64, d: f64, sq_plus: f64, sq_minus: f64) -> f64 {
        let [s1, s2, s3, s4] = self.measurements(common, d, sq_plus, sq_minus);
        dq4ramsey_normalize(s1, s2, s3, s4)
    }
}

pub fn dq4ramsey_normalize(s1: f64, s2: f64, s3: f64, s4: f64) -> f64 {
    s1 - s2 + s3 - s4
}

/// Double-quantum fringe for a differential detuning `delta` on each tone.
///
/// The DQ coherence sees twice the per-tone detuning and the 15N hyperfine
/// shift of both levels, so its two components sit at 2 delta +- A_hf. The
/// readout phase puts the fringe in quadrature (odd in delta).
pub fn dq_fringe(p: &NvParams, delta: f64) -> f64 {
    let tau = p.tau;
    let sum: f64 = [-1.0, 1.0]
        .iter()
        .map(|k| (2.0 * PI * (2.0 * delta + k * p.a_hf) * tau).sin())
        .sum();
    p.contrast * p.envelope() * 0.5 * sum
}

/// Normalised signal S1 - S2 + S3 - S4 for a pure DQ fringe.
pub fn s_norm(p: &NvParams, delta: f64) -> f64 {
    Dq4Pattern::i_channel().normalized(0.0, dq_fringe(p, delta), 0.0, 0.0)
}

/// Analytic slope dS_norm/dB at zero detuning, 1/T.
pub fn s_norm_slope_analytic(p: &NvParams) -> f64 {
    4.0 * p.contrast * p.envelope() * 2.0 * p.gamma * p.tau * (2.0 * PI * p.a_hf * p.tau).cos()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnetometryCurve {
    pub delta: Vec<f64>,
    /// Equivalent field for each detuning, T.
    pub field: Vec<f64>,
    pub s_norm: Vec<f64>,
    pub delta_opt: f64,
    /// dS_norm/dB at the optimum, 1/T.
    pub slope: f64,
}

pub fn magnetometry_curve(p: &NvParams, delta_grid: &[f64]) -> Result<MagnetometryCurve> {
    magnetometry_curve_with(p, delta_grid, |d| s_norm(p, d))
}

/// Magnetometry curve for an arbitrary signal model `s(delta)`.
pub fn magnetometry_curve_with(
    p: &NvParams,
    delta_grid: &[f64],
    s: impl Fn(f64) -> f64,
) -> Result<MagnetometryCurve> {
    let n = delta_grid.len();
    if n < 5 {
        return Err(QdmError::GridTooCoarse(format!("{n} points, need at least 5")));
    }
    if delta_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(QdmError::invalid("detuning grid must be increasing"));
    }
    let span = delta_grid[n - 1] - delta_grid[0];
    for i in 0..n / 2 {
        if (delta_grid[i] + delta_grid[n - 1 - i]).abs() > 1e-9 * span {
            return Err(QdmError::invalid("detuning grid must be symmetric about 0"));
        }
    }
    let gamma_hz = p.gamma_hz();
    let field: Vec<f64> = delta_grid.iter().map(|d| d / gamma_hz).collect();
    let values: Vec<f64> = delta_grid.iter().map(|&d| s(d)).collect();
    let (best, slope) = (1..n - 1)
        .map(|i| (i, (values[i + 1] - values[i - 1]) / (field[i + 1] - field[i - 1])))
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap();
    if best == 1 || best == n - 2 {
        return Err(QdmError::GridTooCoarse(
            "steepest point lies at the grid edge".into(),
        ));
    }
    Ok(MagnetometryCurve {
        delta: delta_grid.to_vec(),
        field,
        s_norm: values,
        delta_opt: delta_grid[best],
        slope,
    })
}

/// Symmetric detuning grid of `2 * half + 1` points spaced `step` Hz.
pub fn symmetric_grid(half: usize, step: f64) -> Vec<f64> {
    (0..=2 * half)
        .map(|i| (i as f64 - half as f64) * step)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn resonances_examples() {
        let p = NvParams::default();
        let (fp, fm) = nv_resonances(&p, 0.0);
        assert_eq!(fp, fm);
        assert!(rel(fp, 2.87e9) < 1e-15);
        let (fp, fm) = nv_resonances(&p, 4.3e-3);
        assert!((fp - 2990.5e6).abs() < 0.1e6, "{fp}");
        assert!((fm - 2749.5e6).abs() < 0.1e6, "{fm}");
        let (fp, fm) = nv_resonances(&p, 4.278e-3);
        assert!((fp - fm - 239.78e6).abs() < 0.01e6);
    }

    #[test]
    fn resonances_match_diagonalisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = NvParams::default();
        for _ in 0..100 {
            let p = NvParams {
                mz: 2.0 * PI * rng.random_range(-5e6..5e6),
                ..base
            };
            let bz = rng.random_range(-20e-3..20e-3);
            let (fp, fm) = nv_resonances(&p, bz);
            let (op, om) = oracle::nv_resonances_3x3(p.d, p.mz, p.gamma, bz);
            assert!(rel(fp, op) < 1e-9 && rel(fm, om) < 1e-9);
        }
    }

    #[test]
    fn dq_phase_examples() {
        assert_eq!(dq_phase(0.0, 2.29e-6), 0.0);
        assert!((dq_phase(1e-6, 2.29e-6) - 0.8065).abs() < 1e-4);
        let b = (PI / 2.0) / dq_phase(1.0, 2.29e-6);
        assert!((b - 1.948e-6).abs() < 1e-9);
    }

    #[test]
    fn ramsey_examples() {
        let p = NvParams {
            a_hf: 0.0,
            ..NvParams::default()
        };
        assert_eq!(ramsey_signal(&p, 0.0, &[0.0])[0], p.contrast);
        let s = ramsey_signal(&p, 0.0, &[p.t2_star])[0];
        assert!(rel(s, p.contrast / std::f64::consts::E) < 1e-14);
        // beat node of the two hyperfine lines
        let q = NvParams::default();
        let node = 1.0 / (2.0 * q.a_hf);
        assert!((node - 164e-9).abs() < 0.5e-9);
        assert!(ramsey_signal(&q, 0.0, &[node])[0].abs() < 1e-15);
    }

    #[test]
    fn product_form_matches_sum_form() {
        let p = NvParams::default();
        for &t in &[0.1e-6, 0.77e-6, 3.3e-6] {
            let direct = p.contrast
                * (-(t / p.t2_star)).exp()
                * 0.5
                * ((2.0 * PI * (1.1e6 + p.a_hf / 2.0) * t).cos()
                    + (2.0 * PI * (1.1e6 - p.a_hf / 2.0) * t).cos());
            assert!((ramsey_signal(&p, 1.1e6, &[t])[0] - direct).abs() < 1e-16);
        }
    }

    fn tau_grid() -> Vec<f64> {
        (0..161).map(|i| i as f64 * 50e-9).collect()
    }

    #[test]
    fn fit_round_trip_noiseless() {
        let truth = NvParams {
            t2_star: 2.2e-6,
            ..NvParams::default()
        };
        let taus = tau_grid();
        let s = ramsey_signal(&truth, 1.0e6, &taus);
        let f = fit_ramsey(&taus, &s, &RamseyFitOptions::default()).unwrap();
        assert!(rel(f.t2_star, 2.2e-6) < 1e-6, "{f:?}");
        assert!(rel(f.detuning, 1.0e6) < 1e-6);
        assert!(rel(f.a_hf, 3.05e6) < 1e-6);
        assert!(rel(f.contrast, 0.03) < 1e-6);
        assert!(rel(f.p, 1.0) < 1e-6);
    }

    #[test]
    fn fit_noisy_median() {
        let truth = NvParams {
            t2_star: 2.2e-6,
            ..NvParams::default()
        };
        let taus = tau_grid();
        let clean = ramsey_signal(&truth, 1.0e6, &taus);
        let noise = Normal::new(0.0, 0.02 * truth.contrast).unwrap();
        let mut errs: Vec<f64> = (0..30)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s: Vec<f64> = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
                let f = fit_ramsey(&taus, &s, &RamseyFitOptions::default()).unwrap();
                rel(f.t2_star, 2.2e-6)
            })
            .collect();
        errs.sort_by(|a, b| a.total_cmp(b));
        assert!(errs[15] < 0.05, "median error {}", errs[15]);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let taus = tau_grid();
        let flat = vec![0.01; taus.len()];
        assert!(matches!(
            fit_ramsey(&taus, &flat, &RamseyFitOptions::default()),
            Err(QdmError::DegenerateData(_))
        ));
        assert!(matches!(
            fit_ramsey(&taus[..5], &flat[..5], &RamseyFitOptions::default()),
            Err(QdmError::TooShort { .. })
        ));
    }

    #[test]
    fn t2_limit_values() {
        let mut c = NvConcentrations::default();
        let t0 = t2star_nv_limit(&c, false);
        assert!((t0 - 6.6e-6).abs() <= 0.1e-6, "{t0}");
        c.zeta = 0.5;
        let t5 = t2star_nv_limit(&c, false);
        assert!((t5 - 3.4e-6).abs() <= 0.1e-6, "{t5}");
        let dq = 0.5 * (t2star_nv_limit(&NvConcentrations::default(), true) + t2star_nv_limit(&c, true));
        assert!((dq - 2.5e-6).abs() <= 0.1e-6, "{dq}");
    }

    #[test]
    fn t2_limit_monotone() {
        let base = NvConcentrations {
            zeta: 0.3,
            ..Default::default()
        };
        let t = t2star_nv_limit(&base, false);
        let more_par = NvConcentrations {
            nv_par: base.nv_par * 1.5,
            ..base
        };
        let more_non = NvConcentrations {
            nv_nonpar: base.nv_nonpar * 1.5,
            ..base
        };
        assert!(t2star_nv_limit(&more_par, false) < t);
        assert!(t2star_nv_limit(&more_non, false) < t);
    }

    #[test]
    fn dq4_examples() {
        assert_eq!(dq4ramsey_normalize(10.0, 6.0, 10.0, 6.0), 8.0);
        let i = Dq4Pattern::i_channel();
        assert_eq!(i.normalized(0.7, 0.25, 0.0, 0.0), 1.0);
        assert_eq!(i.normalized(0.0, 0.0, 0.3, -0.8), 0.0);
        let q = Dq4Pattern::q_channel();
        assert_eq!(q.normalized(0.7, 0.25, 0.0, 0.0), -1.0);
    }

    #[test]
    fn curve_odd_and_slope() {
        let p = NvParams::default();
        let grid = symmetric_grid(200, 200.0);
        let c = magnetometry_curve(&p, &grid).unwrap();
        for (i, v) in c.s_norm.iter().enumerate() {
            assert!((v + c.s_norm[grid.len() - 1 - i]).abs() < 1e-12);
        }
        assert_eq!(c.delta_opt, 0.0);
        assert!(rel(c.slope, s_norm_slope_analytic(&p)) < 1e-4);
    }

    #[test]
    fn curve_slope_scales_with_tau() {
        // Long T2 removes the envelope so only the tau prefactor changes.
        let p1 = NvParams {
            a_hf: 0.0,
            t2_star: 1.0,
            tau: 1e-6,
            ..NvParams::default()
        };
        let p2 = NvParams { tau: 2e-6, ..p1 };
        let grid = symmetric_grid(100, 1e3);
        let s1 = magnetometry_curve(&p1, &grid).unwrap().slope;
        let s2 = magnetometry_curve(&p2, &grid).unwrap().slope;
        assert!((s2 / s1 - 2.0).abs() < 0.02);
    }

    #[test]
    fn single_cosine_max_slope() {
        let p = NvParams::default();
        let amp = 0.7;
        // S(B) = A cos(2 gamma B tau) with delta = gamma_hz B
        let model = |d: f64| amp * (2.0 * p.gamma * (d / p.gamma_hz()) * p.tau).cos();
        let quarter = 1.0 / (8.0 * p.tau); // delta of the quadrature point
        let grid = symmetric_grid(150, quarter / 100.0);
        let c = magnetometry_curve_with(&p, &grid, model).unwrap();
        let expected = 2.0 * amp * p.gamma * p.tau;
        assert!(rel(c.slope.abs(), expected) < 1e-4);
        assert!(rel(c.delta_opt.abs(), quarter) < 0.011);
    }

    #[test]
    fn curve_rejects_coarse_grid() {
        let p = NvParams::default();
        assert!(matches!(
            magnetometry_curve(&p, &[-1.0, 0.0, 1.0]),
            Err(QdmError::GridTooCoarse(_))
        ));
    }
}
