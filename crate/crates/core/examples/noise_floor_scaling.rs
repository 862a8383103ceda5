//! Spatial noise floor against acquisition time for repeated frame sets,
//! with and without 3x3 binning, and the Allan deviation of one pixel.

use qdm::config::ExperimentConfig;
use qdm::pipeline::{self, NoiseFloorOptions};
use qdm::{scenario, FieldMap};

fn main() -> qdm::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.seed = 4;
    cfg.camsim.frame_rate = Some(528.0);
    cfg.camsim.eta_target = Some(4.1e-9);
    cfg.fieldsolve.geometry.width = 90;
    cfg.fieldsolve.geometry.height = 90;
    cfg.pipeline.framesets = 64;
    cfg.pipeline.frames_per_set = 100;

    let zero = FieldMap::zeros(90, 90, cfg.fieldsolve.geometry.pitch)?;
    let maps = scenario::frameset_maps(&cfg, &zero)?;
    let t_set = 100.0 / 528.0;
    for n_bin in [1, 3] {
        let r = pipeline::spatial_noise_floor(
            &maps,
            t_set,
            &NoiseFloorOptions {
                n_bin,
                ..Default::default()
            },
        )?;
        println!("bin {n_bin}: slope {:.3} +/- {:.3}", r.slope, r.slope_err);
        for p in &r.points {
            println!("  {:3} sets  {:7.2} s  {:7.3} nT", p.framesets, p.t_acq, p.sigma_spatial * 1e9);
        }
    }

    // Allan deviation averaged over a block of pixels
    let mut mean_adev: Vec<f64> = Vec::new();
    let mut tau = Vec::new();
    for y in 40..50 {
        for x in 40..50 {
            let series: Vec<f64> = maps.iter().map(|m| m.get(x, y)).collect();
            let a = pipeline::allan_deviation(&series, 1.0 / t_set)?;
            mean_adev.resize(a.adev.len(), 0.0);
            for (m, v) in mean_adev.iter_mut().zip(&a.adev) {
                *m += v / 100.0;
            }
            tau = a.tau;
        }
    }
    println!("\nAllan deviation, mean of 100 pixels:");
    for (t, a) in tau.iter().zip(&mean_adev) {
        println!("  tau {t:6.2} s  {:.3} nT", a * 1e9);
    }
    Ok(())
}
