//! Shot-noise and quantization-limited sensitivity of the lock-in camera
//! chain, and how it moves with the number of cycles per frame.

use qdm::camsim::{self, CameraConfig};
use qdm::spinphys::NvParams;

fn main() -> qdm::Result<()> {
    let nv = NvParams::default();
    let shot = camsim::shot_sensitivity(&nv, 4e4, 2)?;
    println!("photon shot-noise limit: {:.3} nT/rtHz", shot * 1e9);

    println!("\n{:>8} {:>10} {:>10} {:>10} {:>10}", "cycles", "F_s (Hz)", "shot", "quant", "total");
    for n in [8, 24, 72, 144, 288] {
        let cam = CameraConfig::for_sequence(&nv, n);
        let b = camsim::sensitivity_budget(&nv, &cam)?;
        println!(
            "{n:>8} {:>10.1} {:>10.3} {:>10.3} {:>10.3}",
            b.frame_rate,
            b.eta_shot_frames * 1e9,
            b.eta_quant * 1e9,
            b.eta_combined * 1e9
        );
    }

    let cam = CameraConfig::for_sequence(&nv, 72);
    println!(
        "\nat 72 cycles: quantization {:.3} DU, shot {:.2} DU per frame, slope {:.3e} DU/T",
        cam.quant_std_du(),
        cam.shot_std_du(),
        camsim::sensitivity_budget(&nv, &cam)?.du_slope
    );
    Ok(())
}
