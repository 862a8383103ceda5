//! Config-driven scenario runs: simulate, analyse, write artifacts and a
//! manifest of their hashes. Identical config and seed give identical bytes.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bathspec;
use crate::camsim::{self, AcquisitionMode, CameraConfig, FieldSeries, NoiseDraws};
use crate::config::{ExperimentConfig, ScenarioKind};
use crate::denoise::{self, NlmParams};
use crate::error::{QdmError, Result};
use crate::fieldsolve;
use crate::grid::{FieldMap, FrameStack, Roi};
use crate::io::{self, Waveform};
use crate::pipeline::{self, DiffMode, DifferentialPair, NoiseFloorOptions, Probe, Stimulus};
use crate::rng::{child_seed, domain};
use crate::stats;
use crate::svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Bin,
    Svg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Collects output files, report lines and checks for one run.
#[derive(Debug)]
pub struct Artifacts {
    out: PathBuf,
    format: OutputFormat,
    files: Vec<PathBuf>,
    report: Vec<(String, String)>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub report: Vec<(String, String)>,
    pub checks: Vec<Check>,
    pub manifest: PathBuf,
}

impl Outcome {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl Artifacts {
    pub fn new(out: impl Into<PathBuf>, format: OutputFormat) -> Result<Self> {
        let out = out.into();
        fs::create_dir_all(&out)?;
        Ok(Artifacts {
            out,
            format,
            files: Vec::new(),
            report: Vec::new(),
            checks: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.files.push(p.clone());
        p
    }

    pub fn kv(&mut self, key: &str, value: impl Display) {
        self.report.push((key.to_string(), value.to_string()));
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn map(&mut self, name: &str, map: &FieldMap) -> Result<()> {
        match self.format {
            OutputFormat::Bin => io::write_field_map(map, self.path(&format!("{name}.qdmf"))),
            OutputFormat::Csv => io::write_field_map_csv(map, self.path(&format!("{name}.csv"))),
            OutputFormat::Svg => {
                io::write_field_map_csv(map, self.path(&format!("{name}.csv")))?;
                fs::write(self.path(&format!("{name}.svg")), svg::heatmap(map, name))?;
                Ok(())
            }
        }
    }

    pub fn stack(&mut self, name: &str, stack: &FrameStack) -> Result<()> {
        io::write_frame_stack(stack, self.path(&format!("{name}.qdms")))
    }

    pub fn table(&mut self, name: &str, headers: &[&str], cols: &[&[f64]], loglog: bool) -> Result<()> {
        io::write_columns_csv(self.path(&format!("{name}.csv")), headers, cols)?;
        if self.format == OutputFormat::Svg && cols.len() >= 2 {
            let series: Vec<(&str, &[f64])> =
                headers[1..].iter().copied().zip(cols[1..].iter().copied()).collect();
            let p = self.path(&format!("{name}.svg"));
            fs::write(p, svg::line_plot(name, cols[0], &series, loglog))?;
        }
        Ok(())
    }

    /// Writes report.txt and manifest.txt.
    pub fn finish(mut self) -> Result<Outcome> {
        let mut text = String::new();
        for (k, v) in &self.report {
            text.push_str(&format!("{k}: {v}\n"));
        }
        for c in &self.checks {
            text.push_str(&format!(
                "check {}: {} ({})\n",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.detail
            ));
        }
        let rp = self.path("report.txt");
        fs::write(rp, text)?;
        let mut files = self.files.clone();
        files.sort();
        files.dedup();
        let mut manifest = String::new();
        for f in &files {
            let digest = Sha256::digest(fs::read(f)?);
            let name = f.strip_prefix(&self.out).unwrap_or(f);
            manifest.push_str(&format!("{}  {}\n", hex::encode(digest), name.display()));
        }
        let mp = self.out.join("manifest.txt");
        fs::write(&mp, manifest)?;
        Ok(Outcome {
            files,
            report: self.report,
            checks: self.checks,
            manifest: mp,
        })
    }
}

/// Step of a scenario selected by a CLI subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    SimulateField,
    SimulateFrames,
    Analyze,
    Denoise,
    Spectrum,
    Timing,
    /// Whatever the config's scenario kind asks for.
    Full,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub format: OutputFormat,
    pub seed: Option<u64>,
    /// Frame stack (analyze) or field map (denoise) to use instead of simulating.
    pub input: Option<PathBuf>,
}

pub fn run(cfg: &ExperimentConfig, step: Step, opts: &RunOptions) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed {
        cfg.scenario.seed = s;
    }
    let mut art = Artifacts::new(&opts.out, opts.format)?;
    art.kv("scenario", &cfg.scenario.name);
    art.kv("seed", cfg.scenario.seed);
    let kind = cfg.scenario.kind;
    match step {
        Step::SimulateField => field_map(&cfg, &mut art)?,
        Step::SimulateFrames => simulate_frames(&cfg, &mut art)?,
        Step::Denoise => denoise_run(&cfg, opts.input.as_deref(), &mut art)?,
        Step::Spectrum => spectrum(&cfg, &mut art)?,
        Step::Timing => timing(&cfg, &mut art)?,
        Step::Analyze => match kind {
            ScenarioKind::NoiseScaling => noise_scaling(&cfg, &mut art)?,
            ScenarioKind::StaticImage => static_image(&cfg, &mut art)?,
            ScenarioKind::Dynamic => dynamic(&cfg, &mut art)?,
            _ => sensitivity(&cfg, opts.input.as_deref(), &mut art)?,
        },
        Step::Full => match kind {
            ScenarioKind::FieldMap => field_map(&cfg, &mut art)?,
            ScenarioKind::Sensitivity => sensitivity(&cfg, opts.input.as_deref(), &mut art)?,
            ScenarioKind::NoiseScaling => noise_scaling(&cfg, &mut art)?,
            ScenarioKind::StaticImage => static_image(&cfg, &mut art)?,
            ScenarioKind::Denoise => denoise_run(&cfg, opts.input.as_deref(), &mut art)?,
            ScenarioKind::Spectrum => spectrum(&cfg, &mut art)?,
            ScenarioKind::Dynamic => dynamic(&cfg, &mut art)?,
            ScenarioKind::Timing => timing(&cfg, &mut art)?,
        },
    }
    art.finish()
}

/// Loads a config file and runs the scenario it describes.
pub fn run_scenario(path: impl AsRef<Path>, opts: &RunOptions) -> Result<Outcome> {
    let cfg = ExperimentConfig::load(path)?;
    run(&cfg, Step::Full, opts)
}

fn has_sources(cfg: &ExperimentConfig) -> bool {
    let f = &cfg.fieldsolve;
    f.phantom_file.is_some() || !f.dipoles.is_empty() || f.uniform.norm() > 0.0
}

/// Projected field of the configured sources, or zeros without sources.
pub fn source_map(cfg: &ExperimentConfig) -> Result<FieldMap> {
    let g = &cfg.fieldsolve.geometry;
    if !has_sources(cfg) {
        return Ok(FieldMap::zeros(g.width, g.height, g.pitch)?.with_axis(g.axis));
    }
    fieldsolve::render_map(&cfg.sources()?, g)
}

/// DU per tesla and the noise switches after applying `eta_target`.
pub fn camera_chain(cfg: &ExperimentConfig) -> Result<(CameraConfig, f64, NoiseDraws)> {
    let cam = cfg.camsim.resolved();
    let budget = camsim::sensitivity_budget(&cfg.spinphys.nv, &cam)?;
    let mut noise = cfg.camsim.noise;
    noise.seed = cfg.scenario.seed;
    if let Some(target) = cfg.camsim.eta_target {
        noise.scale = target / frame_eta(&cam, budget.du_slope, &noise);
    }
    Ok((cam, budget.du_slope, noise))
}

/// Sensitivity implied by the frame noise terms that are switched on.
pub fn frame_eta(cam: &CameraConfig, du_slope: f64, noise: &NoiseDraws) -> f64 {
    let shot = if noise.shot { cam.shot_std_du() } else { 0.0 };
    let quant = if noise.quantization { cam.quant_std_du() } else { 0.0 };
    shot.hypot(quant) / du_slope / cam.external_rate().sqrt()
}

fn field_map(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let m = source_map(cfg)?;
    art.kv("axis", m.axis.label());
    art.kv("peak_to_peak_T", format!("{:e}", m.peak_to_peak()));
    art.kv("min_T", format!("{:e}", m.min()));
    art.kv("max_T", format!("{:e}", m.max()));
    art.map("field_map", &m)
}

fn frames_for(
    cfg: &ExperimentConfig,
    pattern: &FieldMap,
    frames: usize,
    seed_index: u64,
) -> Result<(camsim::Exposure, f64)> {
    let (cam, slope, mut noise) = camera_chain(cfg)?;
    noise.seed = child_seed(cfg.scenario.seed, domain::FRAMESET, seed_index);
    let series = FieldSeries::constant(pattern.clone(), frames, &cam);
    Ok((camsim::expose_frames(&series, slope, &cam, Some(&noise))?, slope))
}

fn simulate_frames(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let pattern = source_map(cfg)?;
    let (e, slope) = frames_for(cfg, &pattern, cfg.pipeline.frames_per_set, 0)?;
    art.kv("frames", e.frames.n_frames());
    art.kv("frame_rate_Hz", e.frames.frame_rate());
    art.kv("du_per_T", format!("{slope:e}"));
    art.kv("clamped_fraction", e.clamp_fraction());
    art.stack("frames_du", &e.frames)?;
    art.map("mean_frame_du", &e.frames.mean_map(pattern.pitch())?)
}

fn sensitivity(cfg: &ExperimentConfig, input: Option<&Path>, art: &mut Artifacts) -> Result<()> {
    let (cam, slope, noise) = camera_chain(cfg)?;
    let pitch = cfg.fieldsolve.geometry.pitch;
    let stack = match input {
        Some(p) => io::read_frame_stack(p)?,
        None => frames_for(cfg, &source_map(cfg)?, cfg.pipeline.frames_per_set, 0)?.0.frames,
    };
    let field = pipeline::du_to_field(&stack, slope)?;
    let s = pipeline::per_pixel_sensitivity(&field, pitch)?;
    let expected = noise.scale * frame_eta(&cam, slope, &noise);
    art.kv("frame_rate_Hz", s.frame_rate);
    art.kv("du_per_T", format!("{slope:e}"));
    art.kv("median_eta_T_per_rtHz", format!("{:e}", s.median));
    art.kv("p16_eta_T_per_rtHz", format!("{:e}", s.p16));
    art.kv("p84_eta_T_per_rtHz", format!("{:e}", s.p84));
    art.kv("model_eta_T_per_rtHz", format!("{expected:e}"));
    let budget = camsim::sensitivity_budget(&cfg.spinphys.nv, &cam)?;
    art.kv("shot_limit_T_per_rtHz", format!("{:e}", budget.eta_shot));
    art.kv("quantization_limit_T_per_rtHz", format!("{:e}", budget.eta_quant));
    if input.is_none() {
        let rel = (s.median / expected - 1.0).abs();
        art.check("median_eta_matches_model", rel < 0.03, format!("relative error {rel:.4}"));
    }
    let mut sorted = s.eta.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    let hist = histogram(&sorted, 40);
    art.table("eta_histogram", &["eta_T_per_rtHz", "count"], &[&hist.0, &hist.1], false)?;
    art.map("sensitivity_map", &s.eta)
}

fn histogram(sorted: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let w = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0.0; bins];
    for v in sorted {
        counts[(((v - lo) / w) as usize).min(bins - 1)] += 1.0;
    }
    ((0..bins).map(|i| lo + (i as f64 + 0.5) * w).collect(), counts)
}

/// Per-frameset time-averaged field maps from independent noise draws.
pub fn frameset_maps(cfg: &ExperimentConfig, pattern: &FieldMap) -> Result<Vec<FieldMap>> {
    (0..cfg.pipeline.framesets)
        .map(|k| {
            let (e, slope) = frames_for(cfg, pattern, cfg.pipeline.frames_per_set, k as u64)?;
            pipeline::du_to_field(&e.frames, slope)?.mean_map(pattern.pitch())
        })
        .collect()
}

fn noise_scaling(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let pattern = source_map(cfg)?;
    let maps = frameset_maps(cfg, &pattern)?;
    let cam = cfg.camsim.resolved();
    let t_set = cfg.pipeline.frames_per_set as f64 / cam.external_rate();
    let opts = cfg.pipeline.noise_floor;
    let base = pipeline::spatial_noise_floor(&maps, t_set, &opts)?;
    let binned = pipeline::spatial_noise_floor(
        &maps,
        t_set,
        &NoiseFloorOptions {
            n_bin: opts.n_bin * cfg.pipeline.compare_bin,
            ..opts
        },
    )?;
    let t: Vec<f64> = base.points.iter().map(|p| p.t_acq).collect();
    let s1: Vec<f64> = base.points.iter().map(|p| p.sigma_spatial).collect();
    let s2: Vec<f64> = binned.points.iter().map(|p| p.sigma_spatial).collect();
    art.table(
        "noise_floor",
        &["t_acq_s", "sigma_spatial_T", "sigma_spatial_binned_T"],
        &[&t, &s1, &s2],
        true,
    )?;
    let ratio = base.last().sigma_spatial / binned.last().sigma_spatial;
    art.kv("framesets", maps.len());
    art.kv("slope", format!("{:.4}", base.slope));
    art.kv("slope_err", format!("{:.4}", base.slope_err));
    art.kv("binned_slope", format!("{:.4}", binned.slope));
    art.kv("bin_ratio", format!("{ratio:.4}"));
    art.kv("sigma_spatial_final_T", format!("{:e}", base.last().sigma_spatial));
    art.check(
        "slope_minus_half",
        (base.slope + 0.5).abs() <= 0.05,
        format!("slope {:.4}", base.slope),
    );
    let want = cfg.pipeline.compare_bin as f64;
    art.check(
        "binning_ratio",
        (ratio / want - 1.0).abs() <= 0.1,
        format!("ratio {ratio:.4} vs {want}"),
    );

    // Allan deviation of one pixel across all frame sets, transfer gaps ignored.
    let (e, slope) = frames_for(cfg, &pattern, cfg.pipeline.frames_per_set * 8, 1 << 20)?;
    let series = pipeline::du_to_field(&e.frames, slope)?.pixel_series(0, 0);
    let a = pipeline::allan_deviation(&series, cam.external_rate())?;
    art.kv("allan_slope", format!("{:.4}", a.log_slope()));
    art.table("allan", &["tau_s", "adev_T"], &[&a.tau, &a.adev], true)
}

fn static_image(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let signal = source_map(cfg)?;
    let pitch = signal.pitch();
    let mode = cfg.pipeline.mode;
    let (cam, slope, mut noise) = camera_chain(cfg)?;
    let n = cfg.pipeline.frames_per_set * cfg.pipeline.framesets;
    let second = match mode {
        DiffMode::Polarity => signal.scale(-1.0),
        DiffMode::Gating => signal.scale(0.0),
    };
    let mut sets = Vec::new();
    for (k, m) in [&signal, &second].into_iter().enumerate() {
        noise.seed = child_seed(cfg.scenario.seed, domain::PROTOCOL, k as u64);
        let e = camsim::expose_frames(&FieldSeries::constant(m.clone(), n, &cam), slope, &cam, Some(&noise))?;
        art.kv(&format!("clamped_fraction_set{k}"), e.clamp_fraction());
        sets.push(pipeline::du_to_field(&e.frames, slope)?);
    }
    let b = sets.pop().unwrap();
    let a = sets.pop().unwrap();
    let pair = DifferentialPair::tagged(a, b, mode)?;
    let combined = pipeline::differential_combine(&pair, pitch)?;
    let image = match cfg.pipeline.noise_floor.highpass {
        Some(s) => pipeline::highpass_gaussian(&combined, s)?,
        None => combined,
    };
    art.kv("mode", format!("{mode:?}").to_lowercase());
    art.kv("frames_per_polarity", n);
    art.kv("clean_peak_to_peak_T", format!("{:e}", signal.peak_to_peak()));
    if let (Some(s), Some(nr)) = (cfg.pipeline.signal_roi, cfg.pipeline.noise_roi) {
        let v = pipeline::snr(&image, &s, &nr)?;
        art.kv("snr", format!("{v:.3}"));
        art.kv("sigma_spatial_noise_roi_T", format!("{:e}", stats::std_pop(&image.region(&nr)?)));
    }
    art.map("clean_field", &signal)?;
    art.map("differential_image", &image)
}

fn denoise_run(cfg: &ExperimentConfig, input: Option<&Path>, art: &mut Artifacts) -> Result<()> {
    let d = &cfg.denoise;
    let (clean, sroi, nroi) = if let Some(p) = input {
        let m = io::read_field_map(p)?;
        let (s, n) = rois(cfg)?;
        (m, s, n)
    } else if d.surrogate {
        let ph = cfg.phantom()?.unwrap_or_else(denoise::surrogate_phantom);
        let scene = denoise::surrogate_scene(&ph)?;
        (scene.clean, scene.signal_roi, scene.noise_roi)
    } else {
        let (s, n) = rois(cfg)?;
        (source_map(cfg)?, s, n)
    };
    let params = d.nlm.unwrap_or_else(|| NlmParams::for_noise(d.noise_sigma));
    let mut rows: Vec<[f64; 7]> = Vec::new();
    let mut first = None;
    for k in 0..d.seeds.max(1) {
        let seed = child_seed(cfg.scenario.seed, domain::DENOISE, k as u64);
        let r = denoise::denoise_experiment(&clean, d.noise_sigma, &params, &sroi, &nroi, seed)?;
        let s = r.stats;
        rows.push([
            k as f64,
            s.snr_input,
            s.snr_nlm,
            s.snr_gaussian,
            s.h_gaussian,
            s.mse_nlm,
            s.mse_gaussian,
        ]);
        if first.is_none() {
            first = Some(r);
        }
    }
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
    let cols: Vec<Vec<f64>> = (0..7).map(col).collect();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    art.table(
        "denoise_runs",
        &["run", "snr_input", "snr_nlm", "snr_gaussian", "h_gaussian_px", "mse_nlm", "mse_gaussian"],
        &refs,
        false,
    )?;
    let snr_in = stats::mean(&cols[1]);
    let gain = stats::mean(&cols[2]) / snr_in;
    let adv = 1.0 - stats::mean(&cols[5]) / stats::mean(&cols[6]);
    art.kv("nlm_h_T", format!("{:e}", params.h));
    art.kv("snr_input", format!("{snr_in:.3}"));
    art.kv("snr_nlm", format!("{:.3}", stats::mean(&cols[2])));
    art.kv("snr_gaussian", format!("{:.3}", stats::mean(&cols[3])));
    art.kv("h_gaussian_px", format!("{:.3}", stats::mean(&cols[4])));
    art.kv("snr_gain", format!("{gain:.3}"));
    art.kv("mse_advantage", format!("{adv:.4}"));
    art.check("nlm_snr_gain", gain >= 8.0, format!("gain {gain:.2}"));
    art.check("nlm_mse_below_gaussian", adv >= 0.05, format!("advantage {adv:.4}"));
    let r = first.expect("at least one run");
    art.map("clean", &clean)?;
    art.map("noisy", &r.noisy)?;
    art.map("nlm", &r.nlm)?;
    art.map("gaussian", &r.gaussian)
}

fn rois(cfg: &ExperimentConfig) -> Result<(Roi, Roi)> {
    match (cfg.pipeline.signal_roi, cfg.pipeline.noise_roi) {
        (Some(s), Some(n)) => Ok((s, n)),
        _ => Err(QdmError::Config("pipeline.signal_roi and pipeline.noise_roi are required".into())),
    }
}

fn spectrum(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let b = &cfg.bathspec;
    let tr = bathspec::p1_transitions(&b.p1);
    let f: Vec<f64> = tr.iter().map(|t| t.frequency).collect();
    let w: Vec<f64> = tr.iter().map(|t| t.weight).collect();
    let a: Vec<f64> = tr.iter().map(|t| if t.allowed { 1.0 } else { 0.0 }).collect();
    art.table("p1_transitions", &["frequency_Hz", "weight", "allowed"], &[&f, &w, &a], false)?;
    let lines = bathspec::bath_lines(&b.p1, b.line_width, b.allowed_weight, b.forbidden_weight, b.electron_weight);
    let spectrum = bathspec::deer_spectrum(&lines, &bathspec::default_grid(&lines))?;
    art.table("deer_spectrum", &["frequency_Hz", "amplitude"], &[&spectrum.frequency, &spectrum.amplitude], false)?;
    let fe = bathspec::electron_line(b.p1.b);
    art.kv("field_T", format!("{:e}", b.p1.b.norm()));
    art.kv("electron_line_Hz", format!("{fe:.6e}"));
    for (i, t) in tr.iter().enumerate() {
        art.kv(
            &format!("transition_{i}_Hz"),
            format!("{:.6e} ({})", t.frequency, if t.allowed { "allowed" } else { "forbidden" }),
        );
    }
    art.kv("driven_t2star_s", format!("{:e}", bathspec::driven_t2star(&b.drive)));
    art.kv("omega_c_Hz", format!("{:e}", b.drive.omega_c));
    let t2 = crate::spinphys::t2star_nv_limit(&cfg.spinphys.concentrations, true);
    art.kv("nv_limited_t2star_dq_s", format!("{t2:e}"));
    Ok(())
}

fn timing(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let cam = cfg.camsim.resolved();
    let mode = cfg.camsim.mode.unwrap_or(AcquisitionMode::Static);
    let n = cfg.pipeline.framesets;
    let t = camsim::timing_model(n, mode, &cam)?;
    art.kv("framesets", n);
    art.kv("frame_rate_Hz", cam.external_rate());
    art.kv("t_acq_s", format!("{:.3}", t.t_acq));
    art.kv("t_wall_s", format!("{:.3}", t.t_wall));
    art.kv("t_wall_h", format!("{:.4}", t.t_wall / 3600.0));
    let counts: Vec<f64> = std::iter::successors(Some(1usize), |k| Some(k * 2))
        .take_while(|&k| k < n)
        .chain(std::iter::once(n))
        .map(|k| k as f64)
        .collect();
    let mut acq = Vec::new();
    let mut wall = Vec::new();
    for &k in &counts {
        let t = camsim::timing_model(k as usize, mode, &cam)?;
        acq.push(t.t_acq);
        wall.push(t.t_wall);
    }
    art.table("timing", &["framesets", "t_acq_s", "t_wall_s"], &[&counts, &acq, &wall], false)
}

/// Result of a dynamic run through the full chain.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicRun {
    pub trace: pipeline::WaveformTrace,
    pub correlation: f64,
    /// Per-frame RMS signal over differential noise, as configured.
    pub frame_snr: f64,
}

/// Waveform -> amplitude-modulated field -> camera -> differential -> trace.
pub fn dynamic_chain(cfg: &ExperimentConfig, waveform: &Waveform, pattern: &FieldMap) -> Result<DynamicRun> {
    let (cam, slope, mut noise) = camera_chain(cfg)?;
    let scale = cfg.pipeline.waveform_scale;
    let peak = pattern.min().abs().max(pattern.max().abs());
    if peak == 0.0 {
        return Err(QdmError::DegenerateData("dynamic pattern has no field".into()));
    }
    // field per volt, peak pixel at `scale`
    let per_volt = pattern.scale(scale / peak);
    let fs = cam.external_rate();
    let frames = ((waveform.duration() * fs).floor() as usize).min(cfg.pipeline.frames_per_set);
    if frames < 2 {
        return Err(QdmError::invalid("waveform shorter than two frames"));
    }
    let t0 = waveform.time[0];
    let n_exp = frames * cam.n_cycles as usize;
    let modulation: Vec<f64> = (0..n_exp)
        .map(|k| waveform.at(t0 + k as f64 / cam.internal_rate))
        .collect();
    let mode = cfg.pipeline.mode;

    // Reference RMS sets the per-frame noise when a frame SNR is requested.
    let ref_rms = {
        let r: Vec<f64> = modulation
            .chunks_exact(cam.n_cycles as usize)
            .map(|c| scale * c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        stats::std_pop(&r)
    };
    let diff_factor = match mode {
        DiffMode::Polarity => std::f64::consts::FRAC_1_SQRT_2,
        DiffMode::Gating => std::f64::consts::SQRT_2,
    };
    if let Some(snr) = cfg.pipeline.frame_snr {
        let per_set = ref_rms / snr / diff_factor;
        noise.scale = per_set * slope / cam.frame_std_du();
    }
    let frame_noise = noise.scale * cam.frame_std_du() / slope * diff_factor;

    let second: Vec<f64> = match mode {
        DiffMode::Polarity => modulation.iter().map(|v| -v).collect(),
        DiffMode::Gating => vec![0.0; n_exp],
    };
    let mut sets = Vec::new();
    for (k, m) in [modulation, second].into_iter().enumerate() {
        noise.seed = child_seed(cfg.scenario.seed, domain::PROTOCOL, k as u64);
        let series = FieldSeries::Separable {
            pattern: per_volt.clone(),
            modulation: m,
        };
        let e = camsim::expose_frames(&series, slope, &cam, Some(&noise))?;
        sets.push(pipeline::du_to_field(&e.frames, slope)?);
    }
    let b = sets.pop().unwrap();
    let a = sets.pop().unwrap();
    let diff = DifferentialPair::tagged(a, b, mode)?.frames()?;
    let probe = cfg
        .pipeline
        .probe
        .unwrap_or(Probe::RoiPeak(Roi::new(0, 0, pattern.width(), pattern.height())));
    let probe = match probe {
        // Choose the pixel from the noiseless pattern so noise cannot move it.
        Probe::RoiPeak(roi) => {
            roi.check_inside(pattern.width(), pattern.height())?;
            let mut best = (roi.x, roi.y, -1.0);
            for y in roi.y..roi.y + roi.height {
                for x in roi.x..roi.x + roi.width {
                    let v = per_volt.get(x, y).abs();
                    if v > best.2 {
                        best = (x, y, v);
                    }
                }
            }
            Probe::Pixel { x: best.0, y: best.1 }
        }
        p => p,
    };
    let (px, py) = match probe {
        Probe::Pixel { x, y } => (x, y),
        Probe::RoiPeak(_) => unreachable!(),
    };
    let pixel_scale = per_volt.get(px, py);
    let trace = pipeline::reconstruct_waveform(
        &diff,
        probe,
        Some(Stimulus {
            waveform,
            scale: pixel_scale,
            t0,
        }),
    )?;
    let correlation = trace.correlation().unwrap_or(f64::NAN);
    Ok(DynamicRun {
        trace,
        correlation,
        frame_snr: ref_rms / frame_noise,
    })
}

fn dynamic(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<()> {
    let path = cfg
        .pipeline
        .waveform_file
        .as_ref()
        .ok_or_else(|| QdmError::Config("pipeline.waveform_file is required".into()))?;
    let wf = io::load_waveform(cfg.resolve(path))?;
    let pattern = source_map(cfg)?;
    let run = dynamic_chain(cfg, &wf, &pattern)?;
    let t = &run.trace;
    art.kv("frames", t.trace.len());
    art.kv("probe_pixel", format!("{},{}", t.pixel.0, t.pixel.1));
    art.kv("frame_snr", format!("{:.2}", run.frame_snr));
    art.kv("correlation", format!("{:.5}", run.correlation));
    art.check(
        "waveform_correlation",
        run.correlation >= 0.99,
        format!("r = {:.5}", run.correlation),
    );
    let empty = Vec::new();
    art.table(
        "waveform",
        &["time_s", "trace_T", "reference_T", "reference_filtered_T"],
        &[
            &t.time,
            &t.trace,
            t.reference.as_ref().unwrap_or(&empty),
            t.reference_filtered.as_ref().unwrap_or(&empty),
        ],
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ScenarioKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.scenario.kind = kind;
        c.scenario.seed = 3;
        c.fieldsolve.geometry.width = 24;
        c.fieldsolve.geometry.height = 24;
        c.pipeline.frames_per_set = 50;
        c
    }

    #[test]
    fn sensitivity_scenario_matches_model() {
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out: dir.path().to_path_buf(),
            ..Default::default()
        };
        let mut c = small(ScenarioKind::Sensitivity);
        c.pipeline.frames_per_set = 400;
        let o = run(&c, Step::Full, &opts).unwrap();
        assert!(o.all_passed(), "{:?}", o.checks);
        assert!(dir.path().join("sensitivity_map.csv").is_file());
        let manifest = fs::read_to_string(&o.manifest).unwrap();
        assert!(manifest.contains("report.txt"));
    }

    #[test]
    fn runs_are_byte_identical() {
        let c = small(ScenarioKind::Sensitivity);
        let hashes: Vec<String> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                let opts = RunOptions {
                    out: dir.path().to_path_buf(),
                    format: OutputFormat::Bin,
                    ..Default::default()
                };
                let o = run(&c, Step::Full, &opts).unwrap();
                fs::read_to_string(o.manifest).unwrap()
            })
            .collect();
        assert_eq!(hashes[0], hashes[1]);
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out: dir.path().to_path_buf(),
            format: OutputFormat::Bin,
            seed: Some(4),
            ..Default::default()
        };
        let other = fs::read_to_string(run(&c, Step::Full, &opts).unwrap().manifest).unwrap();
        assert_ne!(hashes[0], other);
    }

    #[test]
    fn timing_and_spectrum_run() {
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out: dir.path().to_path_buf(),
            format: OutputFormat::Svg,
            ..Default::default()
        };
        let mut c = small(ScenarioKind::Timing);
        c.pipeline.framesets = 3802;
        c.camsim.frame_rate = Some(528.0);
        let o = run(&c, Step::Full, &opts).unwrap();
        let acq = o.report.iter().find(|(k, _)| k == "t_acq_s").unwrap();
        assert!((acq.1.parse::<f64>().unwrap() - 3600.0).abs() < 1.0);
        let o = run(&c, Step::Spectrum, &opts).unwrap();
        assert!(o.files.iter().any(|f| f.ends_with("deer_spectrum.svg")));
    }
}
