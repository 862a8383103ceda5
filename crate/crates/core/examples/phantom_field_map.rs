//! Render the projected field of the bundled serpentine phantom at two drive
//! currents and write heat maps.

use qdm::fieldsolve::{self, SensingGeometry, SourceSet};
use qdm::svg;

fn main() -> qdm::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/serpentine_phantom.csv");
    let phantom = fieldsolve::read_phantom(path)?;
    println!("phantom: {:.0} um of wire", phantom.length() * 1e6);
    let g = SensingGeometry {
        center: [50e-6, 50e-6],
        ..SensingGeometry::default()
    };
    let out = std::env::temp_dir();
    for current in [9e-9, 436e-9] {
        let map = fieldsolve::render_map(
            &SourceSet {
                phantom: Some(phantom.with_current(current)),
                ..Default::default()
            },
            &g,
        )?;
        let file = out.join(format!("qdm_phantom_{:.0}nA.svg", current * 1e9));
        std::fs::write(&file, svg::heatmap(&map, &format!("{:.0} nA", current * 1e9)))?;
        println!(
            "{:5.0} nA: peak-to-peak {:.3} nT -> {}",
            current * 1e9,
            map.peak_to_peak() * 1e9,
            file.display()
        );
    }
    Ok(())
}
