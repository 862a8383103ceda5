//! Non-local means against Gaussian smoothing tuned to the same SNR on the
//! picotesla surrogate scene.

use qdm::denoise::{self, NlmParams};
use qdm::svg;

fn main() -> qdm::Result<()> {
    let scene = denoise::surrogate_scene(&denoise::surrogate_phantom())?;
    let params = NlmParams::for_noise(denoise::SURROGATE_NOISE);
    let run = denoise::denoise_experiment(
        &scene.clean,
        denoise::SURROGATE_NOISE,
        &params,
        &scene.signal_roi,
        &scene.noise_roi,
        7,
    )?;
    let s = run.stats;
    println!("input SNR       {:.2}", s.snr_input);
    println!("NLM SNR         {:.2} ({:.1}x)", s.snr_nlm, s.snr_gain());
    println!("Gaussian SNR    {:.2} at h = {:.2} px", s.snr_gaussian, s.h_gaussian);
    println!(
        "MSE  NLM {:.2} pT^2, Gaussian {:.2} pT^2 ({:.0}% lower)",
        s.mse_nlm * 1e24,
        s.mse_gaussian * 1e24,
        s.mse_advantage() * 100.0
    );
    let out = std::env::temp_dir();
    for (name, m) in [("noisy", &run.noisy), ("nlm", &run.nlm), ("gaussian", &run.gaussian)] {
        std::fs::write(out.join(format!("qdm_denoise_{name}.svg")), svg::heatmap(m, name))?;
    }
    println!("maps written to {}", out.display());
    Ok(())
}
