//! Regenerates `fixtures/goals.json` and `fixtures/scripts/conforming.json`.
//!
//! Run from the workspace root: `cargo run -p proactiva-core --example gen_fixtures`.

#[path = "../tests/support/conforming.rs"]
mod conforming;

use std::path::Path;

fn main() -> std::io::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    std::fs::create_dir_all(root.join("scripts"))?;
    std::fs::write(root.join("goals.json"), conforming::goals_json())?;
    std::fs::write(root.join("scripts/conforming.json"), conforming::script_json())?;
    println!("wrote {} goals and the conforming script under {}", conforming::CASES.len(), root.display());
    Ok(())
}
