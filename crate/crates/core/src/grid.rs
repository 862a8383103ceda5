//! Pixel grids: single field maps, frame stacks, regions of interest and the
//! separable Gaussian blur shared by background removal and denoising.

use serde::{Deserialize, Serialize};

use crate::error::{QdmError, Result};
use crate::stats;

/// Default lateral pixel pitch at the NV layer, m.
pub const DEFAULT_PITCH: f64 = 1.9e-6;

/// One of the four NV symmetry axes of the diamond lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum NvAxis {
    #[default]
    #[serde(rename = "111")]
    A111,
    #[serde(rename = "-111")]
    ABar111,
    #[serde(rename = "1-11")]
    A1Bar11,
    #[serde(rename = "11-1")]
    A11Bar1,
}

impl NvAxis {
    pub const ALL: [NvAxis; 4] = [NvAxis::A111, NvAxis::ABar111, NvAxis::A1Bar11, NvAxis::A11Bar1];

    /// Oriented crystal-frame direction (unnormalised Miller indices).
    ///
    /// The four orientations are the tetrahedral bond directions, so they sum to
    /// zero: [111], [1-1-1], [-11-1], [-1-11] stand for the lines
    /// [111], [-111], [1-11], [11-1] respectively.
    pub fn crystal_direction(self) -> [f64; 3] {
        match self {
            NvAxis::A111 => [1.0, 1.0, 1.0],
            NvAxis::ABar111 => [1.0, -1.0, -1.0],
            NvAxis::A1Bar11 => [-1.0, 1.0, -1.0],
            NvAxis::A11Bar1 => [-1.0, -1.0, 1.0],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            NvAxis::A111 => "[111]",
            NvAxis::ABar111 => "[-111]",
            NvAxis::A1Bar11 => "[1-11]",
            NvAxis::A11Bar1 => "[11-1]",
        }
    }
}

/// Row-major 2D grid of magnetic-field values (tesla) at the NV layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    width: usize,
    height: usize,
    pitch: f64,
    values: Vec<f64>,
    pub axis: NvAxis,
}

impl FieldMap {
    pub fn new(width: usize, height: usize, pitch: f64, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(QdmError::invalid("map dimensions must be non-zero"));
        }
        if width.checked_mul(height) != Some(values.len()) {
            return Err(QdmError::DimensionMismatch(format!(
                "{}x{} map needs {} values, got {}",
                width,
                height,
                width * height,
                values.len()
            )));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(QdmError::invalid(format!("pitch must be > 0, got {pitch}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(QdmError::invalid(format!("non-finite value at index {i}")));
        }
        Ok(FieldMap {
            width,
            height,
            pitch,
            values,
            axis: NvAxis::default(),
        })
    }

    pub fn zeros(width: usize, height: usize, pitch: f64) -> Result<Self> {
        FieldMap::new(width, height, pitch, vec![0.0; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        pitch: f64,
        f: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        FieldMap::new(width, height, pitch, values)
    }

    pub fn with_axis(mut self, axis: NvAxis) -> Self {
        self.axis = axis;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn same_shape(&self, other: &FieldMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn mean(&self) -> f64 {
        stats::mean(&self.values)
    }

    /// Standard deviation across all pixels (population form).
    pub fn std(&self) -> f64 {
        stats::std_pop(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn peak_to_peak(&self) -> f64 {
        self.max() - self.min()
    }

    /// Pixel-wise map with the same geometry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> FieldMap {
        FieldMap {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Pixel-wise combination of two equally sized maps.
    pub fn zip_with(&self, other: &FieldMap, f: impl Fn(f64, f64) -> f64) -> Result<FieldMap> {
        if !self.same_shape(other) {
            return Err(QdmError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(FieldMap {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            ..self.clone()
        })
    }

    pub fn scale(&self, s: f64) -> FieldMap {
        self.map(|v| v * s)
    }

    pub fn region(&self, roi: &Roi) -> Result<Vec<f64>> {
        roi.check_inside(self.width, self.height)?;
        let mut out = Vec::with_capacity(roi.width * roi.height);
        for y in roi.y..roi.y + roi.height {
            let row = y * self.width;
            out.extend_from_slice(&self.values[row + roi.x..row + roi.x + roi.width]);
        }
        Ok(out)
    }

    /// Drop `border` pixels on every side.
    pub fn crop_border(&self, border: usize) -> Result<FieldMap> {
        if 2 * border >= self.width || 2 * border >= self.height {
            return Err(QdmError::invalid(format!(
                "border {border} leaves no pixels in a {}x{} map",
                self.width, self.height
            )));
        }
        let roi = Roi::new(
            border,
            border,
            self.width - 2 * border,
            self.height - 2 * border,
        );
        let values = self.region(&roi)?;
        Ok(FieldMap {
            width: roi.width,
            height: roi.height,
            values,
            ..self.clone()
        })
    }

    /// Average non-overlapping `n_bin` x `n_bin` blocks. Trailing rows and columns
    /// that do not fill a whole block are dropped.
    pub fn bin_pixels(&self, n_bin: usize) -> Result<FieldMap> {
        if n_bin == 0 {
            return Err(QdmError::invalid("n_bin must be >= 1"));
        }
        if n_bin > self.width || n_bin > self.height {
            return Err(QdmError::BinTooLarge {
                n_bin,
                width: self.width,
                height: self.height,
            });
        }
        if n_bin == 1 {
            return Ok(self.clone());
        }
        let w = self.width / n_bin;
        let h = self.height / n_bin;
        let norm = (n_bin * n_bin) as f64;
        let mut values = Vec::with_capacity(w * h);
        for by in 0..h {
            for bx in 0..w {
                let mut acc = 0.0;
                for y in by * n_bin..(by + 1) * n_bin {
                    let row = y * self.width;
                    for x in bx * n_bin..(bx + 1) * n_bin {
                        acc += self.values[row + x];
                    }
                }
                values.push(acc / norm);
            }
        }
        Ok(FieldMap {
            width: w,
            height: h,
            pitch: self.pitch * n_bin as f64,
            values,
            axis: self.axis,
        })
    }

    /// Separable Gaussian blur with standard deviation `sigma_px` pixels,
    /// kernel truncated at 4 sigma, edges replicated.
    pub fn gaussian_blur(&self, sigma_px: f64) -> Result<FieldMap> {
        if !(sigma_px > 0.0 && sigma_px.is_finite()) {
            return Err(QdmError::invalid(format!(
                "blur sigma must be > 0, got {sigma_px}"
            )));
        }
        let kernel = gaussian_kernel(sigma_px);
        let r = (kernel.len() / 2) as isize;
        let (w, h) = (self.width as isize, self.height as isize);
        let mut tmp = vec![0.0; self.values.len()];
        for y in 0..h {
            let row = (y * w) as usize;
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let xx = (x + k as isize - r).clamp(0, w - 1) as usize;
                    acc += kv * self.values[row + xx];
                }
                tmp[row + x as usize] = acc;
            }
        }
        let mut out = vec![0.0; self.values.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let yy = (y + k as isize - r).clamp(0, h - 1) as usize;
                    acc += kv * tmp[yy * self.width + x as usize];
                }
                out[(y * w + x) as usize] = acc;
            }
        }
        Ok(FieldMap {
            values: out,
            ..self.clone()
        })
    }
}

/// Normalised 1D Gaussian kernel of half-width ceil(4 sigma).
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Axis-aligned rectangular region of interest, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    pub const fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Roi {
            x,
            y,
            width,
            height,
        }
    }

    pub fn check_inside(&self, width: usize, height: usize) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(QdmError::Roi("empty region".into()));
        }
        if self.x + self.width > width || self.y + self.height > height {
            return Err(QdmError::Roi(format!(
                "{self:?} exceeds {width}x{height} map"
            )));
        }
        Ok(())
    }

    pub fn overlaps(&self, o: &Roi) -> bool {
        self.x < o.x + o.width
            && o.x < self.x + self.width
            && self.y < o.y + o.height
            && o.y < self.y + self.height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

/// Protocol role of a frame set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolTag {
    PolarityPlus,
    PolarityMinus,
    GatedOn,
    GatedOff,
    #[default]
    Plain,
}

/// Time-ordered camera frames of identical size, stored frame-major.
///
/// Values are device units straight out of the camera model, or tesla after
/// conversion; the DU range is enforced where frames are synthesised.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    width: usize,
    height: usize,
    frame_rate: f64,
    data: Vec<f64>,
    pub tag: ProtocolTag,
}

impl FrameStack {
    pub fn new(width: usize, height: usize, frame_rate: f64, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(QdmError::invalid("frame dimensions must be non-zero"));
        }
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(QdmError::invalid(format!(
                "frame rate must be > 0, got {frame_rate}"
            )));
        }
        let npx = width * height;
        if !data.len().is_multiple_of(npx) {
            return Err(QdmError::DimensionMismatch(format!(
                "{} values do not form whole {}x{} frames",
                data.len(),
                width,
                height
            )));
        }
        Ok(FrameStack {
            width,
            height,
            frame_rate,
            data,
            tag: ProtocolTag::Plain,
        })
    }

    pub fn from_frames(
        width: usize,
        height: usize,
        frame_rate: f64,
        frames: &[Vec<f64>],
    ) -> Result<Self> {
        let npx = width * height;
        if let Some(i) = frames.iter().position(|f| f.len() != npx) {
            return Err(QdmError::DimensionMismatch(format!(
                "frame {i} has {} values, expected {npx}",
                frames[i].len()
            )));
        }
        FrameStack::new(width, height, frame_rate, frames.concat())
    }

    pub fn with_tag(mut self, tag: ProtocolTag) -> Self {
        self.tag = tag;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.pixels()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.pixels())
    }

    /// Time series of one pixel.
    pub fn pixel_series(&self, x: usize, y: usize) -> Vec<f64> {
        let idx = y * self.width + x;
        self.frames().map(|f| f[idx]).collect()
    }

    pub fn frame_map(&self, i: usize, pitch: f64) -> Result<FieldMap> {
        FieldMap::new(self.width, self.height, pitch, self.frame(i).to_vec())
    }

    /// Time-averaged image.
    pub fn mean_map(&self, pitch: f64) -> Result<FieldMap> {
        let n = self.n_frames();
        if n == 0 {
            return Err(QdmError::invalid("empty frame stack"));
        }
        let mut acc = vec![0.0; self.pixels()];
        for f in self.frames() {
            acc.iter_mut().zip(f).for_each(|(a, v)| *a += v);
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        FieldMap::new(self.width, self.height, pitch, acc)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> FrameStack {
        FrameStack {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }
}
