//! Fit a noisy Ramsey free-induction decay, then build the magnetometry curve
//! for the fitted dephasing time.

use qdm::rng::{self, domain};
use qdm::spinphys::{self, NvParams, RamseyFitOptions};
use rand_distr::{Distribution, Normal};

fn main() -> qdm::Result<()> {
    let truth = NvParams {
        t2_star: 2.2e-6,
        ..NvParams::default()
    };
    let detuning = 1.0e6;
    let taus: Vec<f64> = (0..161).map(|i| i as f64 * 50e-9).collect();
    let noise = Normal::new(0.0, 0.02 * truth.contrast).unwrap();
    let mut r = rng::stream(1, domain::RAMSEY, 0);
    let signal: Vec<f64> = spinphys::ramsey_signal(&truth, detuning, &taus)
        .into_iter()
        .map(|v| v + noise.sample(&mut r))
        .collect();

    let fit = spinphys::fit_ramsey(&taus, &signal, &RamseyFitOptions::default())?;
    println!("T2*      {:.3} +/- {:.3} us (true 2.200)", fit.t2_star * 1e6, fit.sigma[0] * 1e6);
    println!("detuning {:.4} MHz (true 1.0000)", fit.detuning / 1e6);
    println!("A_hf     {:.4} MHz", fit.a_hf / 1e6);
    println!("contrast {:.4}, p {:.3}, {} iterations", fit.contrast, fit.p, fit.iterations);

    let nv = NvParams {
        t2_star: fit.t2_star,
        ..NvParams::default()
    };
    let curve = spinphys::magnetometry_curve(&nv, &spinphys::symmetric_grid(400, 2e3))?;
    println!(
        "\nmagnetometry curve: steepest at {:.1} kHz, dS/dB = {:.3e} 1/T (analytic {:.3e})",
        curve.delta_opt / 1e3,
        curve.slope,
        spinphys::s_norm_slope_analytic(&nv)
    );
    Ok(())
}
