//! Regenerate the bundled synthetic fixture.
//!
//! Usage: `cargo run -p claimcheck --example make_fixture -- <dir>` (default `fixtures`).

#[path = "../tests/common/onnx.rs"]
mod onnx;

use std::path::PathBuf;

use claimcheck_core::synth::{write_case, write_reference, SetOptions, SetSpec};

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    write_reference(&dir.join("reference"), 6, 4, 1000)?;
    let set = |label: &str| SetSpec {
        label: label.into(),
        identity_seed: 7,
        count: 8,
        options: SetOptions::default(),
    };
    write_case(&dir.join("case"), "fixture", [&set("real"), &set("double")], Some("../reference/manifest.json"), 1)?;
    // Red-heavy crops lean toward the positive class.
    onnx::softmax_classifier(
        &dir.join("models/femininity_stub.onnx"),
        [1, 3, 112, 112],
        &[[-2.0, 2.0], [1.0, -1.0], [1.0, -1.0]],
        [0.0, 0.0],
    );
    println!("fixture written to {}", dir.display());
    Ok(())
}
