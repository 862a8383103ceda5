//! Field of a single magnetic nanoparticle against standoff, compared with
//! the noise floor reached after an hour of averaging.

use qdm::fieldsolve::{self, DipoleSource};
use qdm::Vec3;

fn main() -> qdm::Result<()> {
    let particle = DipoleSource::encapsulin(Vec3::new(0.0, 0.0, 1.0), Vec3::ZERO);
    println!("moment {:.3e} A m^2", particle.moment.norm());
    // spatial noise after 1 h at 4.1 nT/rtHz, before denoising
    let floor = 4.1e-9 / 3600f64.sqrt();
    println!("1 h noise floor: {:.1} pT\n", floor * 1e12);
    for z in [2e-6, 5e-6, 10e-6, 20e-6, 50e-6] {
        let b = fieldsolve::dipole_field(&particle, Vec3::new(0.0, 0.0, z))?;
        println!(
            "standoff {:5.1} um: {:9.2} pT  (SNR {:.2})",
            z * 1e6,
            b.norm() * 1e12,
            b.norm() / floor
        );
    }
    Ok(())
}
