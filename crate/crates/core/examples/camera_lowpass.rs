//! Frame integration acts as a sinc low-pass on time-varying fields. Compare
//! the analytic response with a simulated tone.

use qdm::camsim::{self, CameraConfig, FieldSeries};
use qdm::FieldMap;
use rustfft::{num_complex::Complex, FftPlanner};

fn main() -> qdm::Result<()> {
    let cfg = CameraConfig::default();
    println!("frame rate {:.1} Hz, {} cycles per frame\n", cfg.external_rate(), cfg.n_cycles);
    let frames = 610;
    for f in [50.0, 200.0, 500.0, 750.0, 1200.0] {
        let modulation: Vec<f64> = (0..frames * cfg.n_cycles as usize)
            .map(|k| (2.0 * std::f64::consts::PI * f * k as f64 / cfg.internal_rate).sin())
            .collect();
        let series = FieldSeries::Separable {
            pattern: FieldMap::new(1, 1, 1.9e-6, vec![1e-9])?,
            modulation,
        };
        let e = camsim::expose_frames(&series, 1e11, &cfg, None)?;
        let mut buf: Vec<Complex<f64>> = e.frames.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(frames).process(&mut buf);
        let peak = buf[1..frames / 2].iter().map(|c| c.norm()).fold(0.0, f64::max);
        println!(
            "{f:6.0} Hz: simulated {:.4}, analytic {:.4}",
            2.0 * peak / frames as f64 / 100.0,
            camsim::spectral_attenuation(f, &cfg)
        );
    }
    Ok(())
}
