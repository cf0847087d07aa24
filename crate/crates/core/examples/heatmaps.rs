//! Renders the landmark heatmap of one toy face next to the face itself.
//!
//! ```text
//! cargo run --release --example heatmaps -- [out.png]
//! ```

use attrgan::data::toy::{toy_faces, ToyFace};
use attrgan::data::{render_heatmap, HeatmapSpec, Image};
use attrgan::synthesis::grid_row;

fn main() -> attrgan::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "heatmaps.png".into());
    let size = 64;
    let spec = HeatmapSpec::for_size(size);
    let faces: Vec<ToyFace> = toy_faces(4, 4, 3);
    let mut rows = Vec::new();
    for face in &faces {
        let landmarks = face.landmarks(size);
        let heatmap = render_heatmap(&landmarks, size, &spec);
        println!("{:>9}: {} landmarks, sigma {:.2}px", face.expression.name(), landmarks.len(), spec.sigma);
        rows.push(grid_row(&Image::from_rgb8(&face.render(size)), &[heatmap.image]));
    }
    let (w, h) = rows[0].dimensions();
    let mut sheet = image::RgbImage::new(w, h * rows.len() as u32);
    for (i, row) in rows.iter().enumerate() {
        image::imageops::replace(&mut sheet, row, 0, i64::from(h) * i as i64);
    }
    sheet.save(&out)?;
    println!("wrote {out}");
    Ok(())
}
