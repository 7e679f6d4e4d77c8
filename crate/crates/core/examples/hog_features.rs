//! HOG feature map and pooled descriptor of a synthetic target patch.
//! Pass a PGM/PPM path to use your own image instead.
//!
//!     cargo run --example hog_features [image.pgm]

use memtrack::bench::target_texture;
use memtrack::features::{self, HogParams};
use memtrack::imaging::{self, GrayImage};

fn main() -> memtrack::Result<()> {
    let img = match std::env::args().nth(1) {
        Some(path) => imaging::load_image(path)?,
        None => GrayImage::new(64, 64, target_texture(64, 64, 3, 0))?,
    };
    let params = HogParams::default();
    let fm = features::hog(&img, params)?;
    let (c, h, w) = fm.dims();
    println!("image {}x{} -> {c} orientation channels on a {h}x{w} cell grid", img.width(), img.height());

    // orientation energy summed over the grid, scaled to the strongest bin
    let energy: Vec<f64> = (0..c).map(|ch| fm.channel(ch).iter().sum()).collect();
    let max = energy.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    for (ch, e) in energy.iter().enumerate() {
        let deg = 180.0 * ch as f64 / c as f64;
        println!("  bin {ch} ({deg:5.1} deg) {:8.2} {}", e, "#".repeat((40.0 * e / max).round() as usize));
    }

    let pooled = |img: &GrayImage| -> memtrack::Result<features::Descriptor> {
        let fm = features::hog(img, params)?;
        let win = features::cosine_window(fm.height, fm.width);
        Ok(features::descriptor(&features::apply_window(&fm, &win)?))
    };
    let d = pooled(&img)?;
    println!("descriptor: {} values, unit norm", d.len());
    let dim = pooled(&img.scaled(0.5))?;
    // gradients are normalized per block, so halving the contrast changes nothing
    println!("squared distance to the half-contrast descriptor: {:.3e}", d.distance_sq(&dim));
    Ok(())
}
