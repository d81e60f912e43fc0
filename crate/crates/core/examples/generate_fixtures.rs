//! Regenerates the checked-in fixture files.
//!
//! cargo run -p hub-core --example generate_fixtures [-- <dir>]

use hub_core::synth::{write_all, FIXTURE_SEED};

fn main() -> std::io::Result<()> {
    let dir =
        std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures").to_string());
    for name in write_all(&dir, FIXTURE_SEED)? {
        println!("{dir}/{name}");
    }
    Ok(())
}
