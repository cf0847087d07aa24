//! Writes the procedural toy-face datasets: labelled colour faces for
//! attribute training and gray/colour pairs for refinement training.
//!
//! ```text
//! cargo run --release --example make_toy_data -- [out_dir]
//! ```

use std::path::PathBuf;

use attrgan::data::toy::{generate_refinement_dataset, generate_toy_dataset};

fn main() -> attrgan::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "toy_data".into()));
    let faces = generate_toy_dataset(out.join("faces"), 2000, 4, 32, 0)?;
    println!("{} labelled faces in {}", faces.len(), out.join("faces").display());
    for name in faces.vocabulary.names() {
        let count = faces.entries.iter().filter(|e| e.labels.contains(name)).count();
        println!("  {name}: {count}");
    }
    let pairs = generate_refinement_dataset(out.join("refinement"), 1000, 4, 32, 10)?;
    println!("{} gray/colour pairs in {}", pairs.len(), out.join("refinement").display());
    Ok(())
}
