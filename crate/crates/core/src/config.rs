//! TOML experiment configuration. Sections mirror the library modules; every
//! physical quantity is SI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bathspec::{DriveParams, P1Params};
use crate::camsim::{AcquisitionMode, CameraConfig, NoiseDraws};
use crate::denoise::NlmParams;
use crate::error::{QdmError, Result};
use crate::fieldsolve::{self, DipoleSource, SensingGeometry, SourceSet, WirePhantom};
use crate::grid::Roi;
use crate::pipeline::{DiffMode, NoiseFloorOptions, Probe};
use crate::spinphys::{NvConcentrations, NvParams};
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Render the projected field of the configured sources.
    #[default]
    FieldMap,
    /// Per-pixel sensitivity from a simulated frame stack.
    Sensitivity,
    /// Noise floor against acquisition time and binning.
    NoiseScaling,
    /// Differential static image with SNR.
    StaticImage,
    /// NLM against matched Gaussian smoothing.
    Denoise,
    /// P1 bath transitions and DEER spectrum.
    Spectrum,
    /// Waveform through the full chain.
    Dynamic,
    /// Acquisition and wall-clock time.
    Timing,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    pub kind: ScenarioKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinSection {
    #[serde(flatten)]
    pub nv: NvParams,
    pub concentrations: NvConcentrations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BathSection {
    #[serde(flatten)]
    pub p1: P1Params,
    pub drive: DriveParams,
    /// Lorentzian half width of every line, Hz.
    pub line_width: f64,
    pub allowed_weight: f64,
    pub forbidden_weight: f64,
    pub electron_weight: f64,
}

impl Default for BathSection {
    fn default() -> Self {
        BathSection {
            p1: P1Params::default(),
            drive: DriveParams::default(),
            line_width: 0.5e6,
            allowed_weight: 1.0,
            forbidden_weight: 0.3,
            electron_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    /// Phantom CSV, relative to the config file.
    pub phantom_file: Option<PathBuf>,
    /// Overrides the current of the loaded phantom, A.
    pub current: Option<f64>,
    pub dipoles: Vec<DipoleSource>,
    pub uniform: Vec3,
    pub geometry: SensingGeometry,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    #[serde(flatten)]
    pub camera: CameraConfig,
    /// Overrides the external frame rate, Hz.
    pub frame_rate: Option<f64>,
    pub noise: NoiseDraws,
    /// Scale camera noise so the frame-level sensitivity equals this, T/sqrt(Hz).
    pub eta_target: Option<f64>,
    pub mode: Option<AcquisitionMode>,
}

impl CameraSection {
    pub fn resolved(&self) -> CameraConfig {
        match self.frame_rate {
            Some(f) => self.camera.with_external_rate(f),
            None => self.camera,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub mode: DiffMode,
    pub framesets: usize,
    pub frames_per_set: usize,
    pub noise_floor: NoiseFloorOptions,
    /// Extra binning compared against `noise_floor.n_bin`.
    pub compare_bin: usize,
    pub signal_roi: Option<Roi>,
    pub noise_roi: Option<Roi>,
    pub probe: Option<Probe>,
    /// Stimulus CSV, relative to the config file.
    pub waveform_file: Option<PathBuf>,
    /// Field per stimulus volt at the probed pixel, T/V.
    pub waveform_scale: f64,
    /// Per-frame SNR (RMS signal over noise) for dynamic runs.
    pub frame_snr: Option<f64>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            mode: DiffMode::Polarity,
            framesets: 1,
            frames_per_set: 500,
            noise_floor: NoiseFloorOptions::default(),
            compare_bin: 3,
            signal_roi: None,
            noise_roi: None,
            probe: None,
            waveform_file: None,
            waveform_scale: 274.26e-9,
            frame_snr: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseSection {
    pub nlm: Option<NlmParams>,
    /// White noise added to the clean map, T.
    pub noise_sigma: f64,
    pub seeds: usize,
    /// Use the built-in surrogate layout (grid, ROIs and 300 pT scaling).
    pub surrogate: bool,
}

impl Default for DenoiseSection {
    fn default() -> Self {
        DenoiseSection {
            nlm: None,
            noise_sigma: 100e-12,
            seeds: 1,
            surrogate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSection,
    pub spinphys: SpinSection,
    pub bathspec: BathSection,
    pub fieldsolve: FieldSection,
    pub camsim: CameraSection,
    pub pipeline: PipelineSection,
    pub denoise: DenoiseSection,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| QdmError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)
            .map_err(|e| QdmError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for f in [&cfg.fieldsolve.phantom_file, &cfg.pipeline.waveform_file]
            .into_iter()
            .flatten()
        {
            let p = cfg.base_dir.join(f);
            if !p.is_file() {
                return Err(QdmError::Config(format!(
                    "{}: referenced file {} does not exist",
                    path.display(),
                    p.display()
                )));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let schema = |e: QdmError| QdmError::Config(e.to_string());
        self.spinphys.nv.validate().map_err(schema)?;
        self.fieldsolve.geometry.validate().map_err(schema)?;
        self.camsim.resolved().validate().map_err(schema)?;
        if let Some(n) = &self.denoise.nlm {
            n.validate().map_err(schema)?;
        }
        let p = &self.pipeline;
        if p.framesets == 0 || p.frames_per_set == 0 {
            return Err(QdmError::Config("framesets and frames_per_set must be >= 1".into()));
        }
        if p.noise_floor.n_bin == 0 || p.compare_bin == 0 {
            return Err(QdmError::Config("bin sizes must be >= 1".into()));
        }
        if let Some(e) = self.camsim.eta_target {
            if !(e > 0.0) {
                return Err(QdmError::Config("eta_target must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn phantom(&self) -> Result<Option<WirePhantom>> {
        let Some(f) = &self.fieldsolve.phantom_file else {
            return Ok(None);
        };
        let ph = fieldsolve::read_phantom(self.resolve(f))?;
        Ok(Some(match self.fieldsolve.current {
            Some(i) => ph.with_current(i),
            None => ph,
        }))
    }

    pub fn sources(&self) -> Result<SourceSet> {
        Ok(SourceSet {
            phantom: self.phantom()?,
            dipoles: self.fieldsolve.dipoles.clone(),
            uniform: self.fieldsolve.uniform,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn round_trip_through_toml() {
        let mut c = ExperimentConfig::default();
        c.scenario.seed = 42;
        c.pipeline.signal_roi = Some(Roi::new(1, 2, 3, 4));
        c.pipeline.probe = Some(Probe::Pixel { x: 3, y: 4 });
        c.fieldsolve.dipoles.push(DipoleSource {
            moment: Vec3::new(0.0, 0.0, 1e-16),
            position: Vec3::new(0.0, 0.0, 1e-5),
        });
        let back = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            ExperimentConfig::parse("[camsim]\nbogus = 1\n"),
            Err(QdmError::Config(_))
        ));
        assert!(ExperimentConfig::parse("[spinphys]\nt2_star = -1.0\n").is_err());
        assert!(ExperimentConfig::parse("[camsim]\nframe_rate = 5000.0\n").is_err());
    }

    #[test]
    fn sections_parse() {
        let c = ExperimentConfig::parse(
            r#"
            [scenario]
            name = "x"
            kind = "noise_scaling"
            seed = 7
            [spinphys]
            tau = 2.0e-6
            [camsim]
            frame_rate = 528.0
            [camsim.noise]
            quantization = false
            [pipeline]
            mode = "gating"
            probe = { roi_peak = { x = 1, y = 1, width = 4, height = 4 } }
            [pipeline.noise_floor]
            n_bin = 3
            "#,
        )
        .unwrap();
        assert_eq!(c.scenario.kind, ScenarioKind::NoiseScaling);
        assert_eq!(c.spinphys.nv.tau, 2.0e-6);
        assert!((c.camsim.resolved().external_rate() - 528.0).abs() < 1e-9);
        assert!(!c.camsim.noise.quantization);
        assert_eq!(c.pipeline.mode, DiffMode::Gating);
        assert_eq!(c.pipeline.noise_floor.n_bin, 3);
        assert!(matches!(c.pipeline.probe, Some(Probe::RoiPeak(_))));
    }
}
