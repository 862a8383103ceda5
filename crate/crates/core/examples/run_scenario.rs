//! Run a scenario file the same way `qdm report` does.
//!
//!     cargo run --example run_scenario -- scenarios/static_phantom.toml

use qdm::scenario::{self, OutputFormat, RunOptions};

fn main() -> qdm::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/sensitivity.toml").into());
    let opts = RunOptions {
        out: std::env::temp_dir().join("qdm-scenario"),
        format: OutputFormat::Svg,
        seed: None,
        input: None,
    };
    let outcome = scenario::run_scenario(&path, &opts)?;
    for (k, v) in &outcome.report {
        println!("{k}: {v}");
    }
    for c in &outcome.checks {
        println!("{}: {} ({})", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    println!("{} files in {}", outcome.files.len(), opts.out.display());
    Ok(())
}
