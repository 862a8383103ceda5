//! P1 bath transitions at the bias field and the DEER spectrum they produce,
//! plus the bath-drive dephasing law.

use qdm::bathspec::{self, DriveParams, P1Params};

fn main() -> qdm::Result<()> {
    let p = P1Params::default();
    println!("bias {:.3} mT along the NV axis", p.b.norm() * 1e3);
    for t in bathspec::p1_transitions(&p) {
        println!(
            "  {:9.3} MHz  weight {:.3}  {}",
            t.frequency / 1e6,
            t.weight,
            if t.allowed { "allowed" } else { "forbidden" }
        );
    }
    println!("  {:9.3} MHz  free electron", bathspec::electron_line(p.b) / 1e6);

    let lines = bathspec::bath_lines(&p, 0.5e6, 1.0, 0.3, 0.5);
    let spectrum = bathspec::deer_spectrum(&lines, &bathspec::default_grid(&lines))?;
    let out = std::env::temp_dir().join("qdm_deer_spectrum.csv");
    spectrum.write_csv(&out)?;
    println!("\n{} spectrum points written to {}", spectrum.frequency.len(), out.display());

    let d = DriveParams::default();
    println!("\ndrive: omega_c = {:.3} MHz", d.omega_c / 1e6);
    for rabi in [0.0, 0.5e6, 1e6, 2e6, 4e6, 8e6] {
        let t2 = bathspec::driven_t2star(&DriveParams { rabi, ..d });
        println!("  Rabi {:4.1} MHz -> T2* {:.3} us", rabi / 1e6, t2 * 1e6);
    }
    Ok(())
}
