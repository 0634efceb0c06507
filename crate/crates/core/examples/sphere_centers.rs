//! Class centers on the sphere and cosine distances to them.
use san::nn::Matrix;
use san::rplr::{class_centers, cosine_distance, normalize_to_sphere};

fn main() -> san::Result<()> {
    let raw = [[3.0, 1.0, 0.0], [2.0, 2.0, 0.1], [0.0, 1.0, 4.0], [0.2, 0.0, 1.0]];
    let rows: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| normalize_to_sphere(r, 1.0, "point"))
        .collect::<san::Result<_>>()?;
    let labels = [0, 0, 1, 1];
    let centers = class_centers(&Matrix::from_rows(&rows), &labels, 2, 1.0)?;
    for k in 0..2 {
        let c = centers.center(k).expect("nonempty class");
        println!("center {k}: {c:.4?}");
        for (r, &y) in rows.iter().zip(&labels) {
            println!("  class {y} point, distance {:.4}", cosine_distance(r, c)?);
        }
    }
    Ok(())
}
