//! Regenerates the bundled test corpus: `cargo run --example make_corpus -- <dir>`.

use std::path::PathBuf;

fn main() -> vismix::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("crates/core/tests/data/corpus"));
    let paths = vismix::synth::write_corpus(&dir, 20, 64, 1000)?;
    println!("wrote {} images to {}", paths.len(), dir.display());
    Ok(())
}
