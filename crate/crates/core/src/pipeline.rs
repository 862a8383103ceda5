//! Analysis chain: DU to field, differential protocols, background removal,
//! sensitivity maps, spatial noise floor, Allan deviation, SNR and waveform
//! reconstruction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QdmError, Result};
use crate::grid::{FieldMap, FrameStack, ProtocolTag, Roi};
use crate::io::Waveform;
use crate::stats;

/// Kernel width of the background high-pass filter, m.
pub const DEFAULT_HIGHPASS_SIGMA: f64 = 18e-6;

pub fn du_to_field(stack: &FrameStack, slope: f64) -> Result<FrameStack> {
    if slope == 0.0 || !slope.is_finite() {
        return Err(QdmError::ZeroSlope);
    }
    Ok(stack.map_values(|v| v / slope))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffMode {
    /// Source current reversed between sets: (A - B) / 2.
    Polarity,
    /// Source switched off for the second set: A - B.
    Gating,
}

impl DiffMode {
    pub fn tags(self) -> (ProtocolTag, ProtocolTag) {
        match self {
            DiffMode::Polarity => (ProtocolTag::PolarityPlus, ProtocolTag::PolarityMinus),
            DiffMode::Gating => (ProtocolTag::GatedOn, ProtocolTag::GatedOff),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialPair {
    pub set_a: FrameStack,
    pub set_b: FrameStack,
    pub mode: DiffMode,
}

impl DifferentialPair {
    pub fn new(set_a: FrameStack, set_b: FrameStack, mode: DiffMode) -> Result<Self> {
        if set_a.width() != set_b.width()
            || set_a.height() != set_b.height()
            || set_a.n_frames() != set_b.n_frames()
        {
            return Err(QdmError::DimensionMismatch(format!(
                "pair sets are {}x{}x{} and {}x{}x{}",
                set_a.width(),
                set_a.height(),
                set_a.n_frames(),
                set_b.width(),
                set_b.height(),
                set_b.n_frames()
            )));
        }
        let (ta, tb) = mode.tags();
        if set_a.tag != ta || set_b.tag != tb {
            return Err(QdmError::invalid(format!(
                "{mode:?} mode needs tags {ta:?}/{tb:?}, got {:?}/{:?}",
                set_a.tag, set_b.tag
            )));
        }
        Ok(DifferentialPair { set_a, set_b, mode })
    }

    /// Tags both sets for `mode` before validating.
    pub fn tagged(set_a: FrameStack, set_b: FrameStack, mode: DiffMode) -> Result<Self> {
        let (ta, tb) = mode.tags();
        Self::new(set_a.with_tag(ta), set_b.with_tag(tb), mode)
    }

    fn combine(&self, a: f64, b: f64) -> f64 {
        match self.mode {
            DiffMode::Polarity => 0.5 * (a - b),
            DiffMode::Gating => a - b,
        }
    }

    /// Frame-wise differential stack.
    pub fn frames(&self) -> Result<FrameStack> {
        let data = self
            .set_a
            .data()
            .iter()
            .zip(self.set_b.data())
            .map(|(&a, &b)| self.combine(a, b))
            .collect();
        FrameStack::new(
            self.set_a.width(),
            self.set_a.height(),
            self.set_a.frame_rate(),
            data,
        )
    }
}

/// Time-averaged differential map.
pub fn differential_combine(pair: &DifferentialPair, pitch: f64) -> Result<FieldMap> {
    let a = pair.set_a.mean_map(pitch)?;
    let b = pair.set_b.mean_map(pitch)?;
    a.zip_with(&b, |x, y| pair.combine(x, y))
}

/// Removes slowly varying background: map minus its Gaussian blur.
pub fn highpass_gaussian(map: &FieldMap, sigma: f64) -> Result<FieldMap> {
    if !(sigma > 0.0) {
        return Err(QdmError::invalid(format!("high-pass sigma must be > 0, got {sigma}")));
    }
    let blurred = map.gaussian_blur(sigma / map.pitch())?;
    map.zip_with(&blurred, |a, b| a - b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMap {
    /// Per-pixel sensitivity, T/sqrt(Hz).
    pub eta: FieldMap,
    /// Per-pixel standard deviation over frames, T.
    pub sigma_pxl: FieldMap,
    pub frame_rate: f64,
    pub median: f64,
    pub p16: f64,
    pub p84: f64,
}

pub fn per_pixel_sensitivity(stack: &FrameStack, pitch: f64) -> Result<SensitivityMap> {
    let nf = stack.n_frames();
    if nf < 2 {
        return Err(QdmError::TooShort { needed: 2, got: nf });
    }
    let w = stack.width();
    let sigma: Vec<f64> = (0..stack.pixels())
        .into_par_iter()
        .map(|i| stats::std_sample(&stack.pixel_series(i % w, i / w)))
        .collect();
    let rt = stack.frame_rate().sqrt();
    let eta: Vec<f64> = sigma.iter().map(|s| s / rt).collect();
    Ok(SensitivityMap {
        median: stats::median(&eta),
        p16: stats::percentile(&eta, 0.16),
        p84: stats::percentile(&eta, 0.84),
        eta: FieldMap::new(w, stack.height(), pitch, eta)?,
        sigma_pxl: FieldMap::new(w, stack.height(), pitch, sigma)?,
        frame_rate: stack.frame_rate(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseFloorOptions {
    pub n_bin: usize,
    /// High-pass kernel width in metres, `None` to skip background removal.
    pub highpass: Option<f64>,
    /// Pixels excluded at each edge before the statistic.
    pub border: usize,
}

impl Default for NoiseFloorOptions {
    fn default() -> Self {
        NoiseFloorOptions {
            n_bin: 1,
            highpass: Some(DEFAULT_HIGHPASS_SIGMA),
            border: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseFloorPoint {
    pub framesets: usize,
    pub t_acq: f64,
    pub sigma_spatial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseFloorReport {
    pub n_bin: usize,
    pub points: Vec<NoiseFloorPoint>,
    /// Log-log slope of sigma_spatial against T_acq.
    pub slope: f64,
    pub slope_err: f64,
}

impl NoiseFloorReport {
    pub fn last(&self) -> &NoiseFloorPoint {
        self.points.last().expect("report has points")
    }
}

/// Spatial standard deviation of one time-averaged map.
pub fn spatial_sigma(map: &FieldMap, opts: &NoiseFloorOptions) -> Result<f64> {
    let mut m = match opts.highpass {
        Some(s) => highpass_gaussian(map, s)?,
        None => map.clone(),
    };
    if opts.border > 0 {
        m = m.crop_border(opts.border)?;
    }
    if opts.n_bin > 1 {
        m = m.bin_pixels(opts.n_bin)?;
    }
    Ok(m.std())
}

/// Cumulative-average noise floor at octave-spaced frame-set counts.
///
/// `t_set` is the acquisition time of one frame set (transfer gaps excluded).
pub fn spatial_noise_floor(
    maps: &[FieldMap],
    t_set: f64,
    opts: &NoiseFloorOptions,
) -> Result<NoiseFloorReport> {
    if maps.len() < 2 {
        return Err(QdmError::TooShort {
            needed: 2,
            got: maps.len(),
        });
    }
    if let Some(i) = maps.iter().position(|m| !m.same_shape(&maps[0])) {
        return Err(QdmError::DimensionMismatch(format!("map {i} differs in shape")));
    }
    let mut counts: Vec<usize> = std::iter::successors(Some(1usize), |k| Some(k * 2))
        .take_while(|&k| k <= maps.len())
        .collect();
    if *counts.last().unwrap() != maps.len() {
        counts.push(maps.len());
    }
    let mut acc = vec![0.0; maps[0].values().len()];
    let mut done = 0;
    let mut points = Vec::with_capacity(counts.len());
    for &k in &counts {
        for m in &maps[done..k] {
            acc.iter_mut().zip(m.values()).for_each(|(a, v)| *a += v);
        }
        done = k;
        let avg = FieldMap::new(
            maps[0].width(),
            maps[0].height(),
            maps[0].pitch(),
            acc.iter().map(|a| a / k as f64).collect(),
        )?;
        points.push(NoiseFloorPoint {
            framesets: k,
            t_acq: k as f64 * t_set,
            sigma_spatial: spatial_sigma(&avg, opts)?,
        });
    }
    let (slope, slope_err) = if points.iter().all(|p| p.sigma_spatial > 0.0) {
        let lx: Vec<f64> = points.iter().map(|p| p.t_acq.ln()).collect();
        let ly: Vec<f64> = points.iter().map(|p| p.sigma_spatial.ln()).collect();
        let fit = stats::linear_fit(&lx, &ly);
        (fit.slope, fit.slope_err)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(NoiseFloorReport {
        n_bin: opts.n_bin,
        points,
        slope,
        slope_err,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllanCurve {
    pub tau: Vec<f64>,
    pub adev: Vec<f64>,
}

impl AllanCurve {
    pub fn log_slope(&self) -> f64 {
        let lx: Vec<f64> = self.tau.iter().map(|t| t.ln()).collect();
        let ly: Vec<f64> = self.adev.iter().map(|a| a.ln()).collect();
        stats::linear_fit(&lx, &ly).slope
    }
}

/// Overlapping Allan deviation at averaging factors 1, 2, 4, ...
pub fn allan_deviation(series: &[f64], fs: f64) -> Result<AllanCurve> {
    let n = series.len();
    if n < 4 {
        return Err(QdmError::TooShort { needed: 4, got: n });
    }
    if !(fs > 0.0) {
        return Err(QdmError::invalid("sample rate must be > 0"));
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in series {
        prefix.push(prefix.last().unwrap() + v);
    }
    let mut tau = Vec::new();
    let mut adev = Vec::new();
    let mut m = 1;
    while 2 * m < n {
        let terms = n - 2 * m + 1;
        let mut s = 0.0;
        for j in 0..terms {
            let a = prefix[j + m] - prefix[j];
            let b = prefix[j + 2 * m] - prefix[j + m];
            let d = (b - a) / m as f64;
            s += d * d;
        }
        tau.push(m as f64 / fs);
        adev.push((0.5 * s / terms as f64).sqrt());
        m *= 2;
    }
    Ok(AllanCurve { tau, adev })
}

/// Peak-to-peak over `signal_roi` divided by the spread over `noise_roi`.
pub fn snr(map: &FieldMap, signal_roi: &Roi, noise_roi: &Roi) -> Result<f64> {
    if signal_roi.overlaps(noise_roi) {
        return Err(QdmError::Roi("signal and noise regions overlap".into()));
    }
    let s = map.region(signal_roi)?;
    let n = map.region(noise_roi)?;
    let ptp = s.iter().cloned().fold(f64::MIN, f64::max) - s.iter().cloned().fold(f64::MAX, f64::min);
    let sd = stats::std_pop(&n);
    if sd == 0.0 {
        return Err(QdmError::DegenerateData("noise region is constant".into()));
    }
    Ok(ptp / sd)
}

/// SNR computed from a clean signal map and a separate noise-only map, so
/// both regions may cover the same pixels.
pub fn snr_split(signal: &FieldMap, noise: &FieldMap, roi: &Roi) -> Result<f64> {
    let s = signal.region(roi)?;
    let n = noise.region(roi)?;
    let ptp = s.iter().cloned().fold(f64::MIN, f64::max) - s.iter().cloned().fold(f64::MAX, f64::min);
    let sd = stats::std_pop(&n);
    if sd == 0.0 {
        return Err(QdmError::DegenerateData("noise map is constant".into()));
    }
    Ok(ptp / sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    Pixel { x: usize, y: usize },
    /// Pixel inside the region with the largest RMS over time.
    RoiPeak(Roi),
}

#[derive(Debug, Clone, Copy)]
pub struct Stimulus<'a> {
    pub waveform: &'a Waveform,
    /// Field per volt at the probed pixel, T/V.
    pub scale: f64,
    /// Stimulus time at the start of frame 0, s.
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveformTrace {
    pub pixel: (usize, usize),
    /// Frame centre times relative to the first frame, s.
    pub time: Vec<f64>,
    pub trace: Vec<f64>,
    /// Scaled stimulus at frame centres.
    pub reference: Option<Vec<f64>>,
    /// Scaled stimulus averaged over each frame window (the camera's low-pass).
    pub reference_filtered: Option<Vec<f64>>,
}

impl WaveformTrace {
    pub fn correlation(&self) -> Option<f64> {
        self.reference_filtered
            .as_ref()
            .map(|r| stats::correlation(&self.trace, r))
    }
}

pub fn reconstruct_waveform(
    stack: &FrameStack,
    probe: Probe,
    stimulus: Option<Stimulus<'_>>,
) -> Result<WaveformTrace> {
    let (w, h) = (stack.width(), stack.height());
    let (x, y) = match probe {
        Probe::Pixel { x, y } => {
            if x >= w || y >= h {
                return Err(QdmError::Roi(format!("pixel ({x},{y}) outside {w}x{h}")));
            }
            (x, y)
        }
        Probe::RoiPeak(roi) => {
            roi.check_inside(w, h)?;
            let mut best = (roi.x, roi.y, -1.0);
            for yy in roi.y..roi.y + roi.height {
                for xx in roi.x..roi.x + roi.width {
                    let s = stack.pixel_series(xx, yy);
                    let rms = s.iter().map(|v| v * v).sum::<f64>();
                    if rms > best.2 {
                        best = (xx, yy, rms);
                    }
                }
            }
            (best.0, best.1)
        }
    };
    let trace = stack.pixel_series(x, y);
    let fs = stack.frame_rate();
    let n = trace.len();
    let time: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) / fs).collect();
    let (reference, reference_filtered) = match stimulus {
        None => (None, None),
        Some(st) => {
            let wf = st.waveform;
            let start = wf.time[0];
            let end = *wf.time.last().unwrap();
            let span_end = st.t0 + n as f64 / fs;
            if st.t0 < start - 1e-12 || span_end > end + 1e-9 {
                return Err(QdmError::DimensionMismatch(format!(
                    "stimulus covers [{start}, {end}] s but frames span [{}, {span_end}] s",
                    st.t0
                )));
            }
            let point = time.iter().map(|t| st.scale * wf.at(st.t0 + t)).collect();
            let sub = 64;
            let filtered = (0..n)
                .map(|j| {
                    let a = st.t0 + j as f64 / fs;
                    let s: f64 = (0..sub)
                        .map(|k| wf.at(a + (k as f64 + 0.5) / (sub as f64 * fs)))
                        .sum();
                    st.scale * s / sub as f64
                })
                .collect();
            (Some(point), Some(filtered))
        }
    };
    Ok(WaveformTrace {
        pixel: (x, y),
        time,
        trace,
        reference,
        reference_filtered,
    })
}
