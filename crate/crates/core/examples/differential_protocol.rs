//! Polarity reversal against on/off gating. Both cancel a static background;
//! for the same frame budget gating ends with twice the equivalent noise.

use qdm::camsim::{self, CameraConfig, FieldSeries, NoiseDraws};
use qdm::pipeline::{self, DiffMode, DifferentialPair};
use qdm::spinphys::NvParams;
use qdm::{stats, FieldMap, Roi};

fn main() -> qdm::Result<()> {
    let (n, pitch, frames) = (40, 1.9e-6, 2000);
    let signal = FieldMap::from_fn(n, n, pitch, |x, _| if (15..25).contains(&x) { 5e-9 } else { 0.0 })?;
    let background = FieldMap::from_fn(n, n, pitch, |x, y| 2e-7 * ((x + y) as f64 * 0.15).sin())?;
    let cam = CameraConfig::default();
    let slope = camsim::sensitivity_budget(&NvParams::default(), &cam)?.du_slope;

    let expose = |m: &FieldMap, seed| -> qdm::Result<qdm::FrameStack> {
        let e = camsim::expose_frames(
            &FieldSeries::constant(m.clone(), frames, &cam),
            slope,
            &cam,
            Some(&NoiseDraws::seeded(seed)),
        )?;
        pipeline::du_to_field(&e.frames, slope)
    };
    let plus = expose(&background.zip_with(&signal, |b, s| b + s)?, 1)?;
    let minus = expose(&background.zip_with(&signal, |b, s| b - s)?, 2)?;
    let off = expose(&background, 3)?;

    let stripe = Roi::new(16, 0, 8, n);
    let empty = Roi::new(0, 0, 12, n);
    for (name, pair) in [
        ("polarity", DifferentialPair::tagged(plus.clone(), minus, DiffMode::Polarity)?),
        ("gating", DifferentialPair::tagged(plus, off, DiffMode::Gating)?),
    ] {
        let img = pipeline::differential_combine(&pair, pitch)?;
        let eta = pipeline::per_pixel_sensitivity(&pair.frames()?, pitch)?.median;
        let bg = img.region(&empty)?;
        println!(
            "{name:9}: stripe {:.2} nT, background mean {:+.3} nT, noise {:.2} nT, eta {:.2} nT/rtHz",
            stats::mean(&img.region(&stripe)?) * 1e9,
            stats::mean(&bg) * 1e9,
            stats::std_pop(&bg) * 1e9,
            eta * 1e9
        );
    }
    Ok(())
}
