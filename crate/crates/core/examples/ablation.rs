//! Runs the four-way ablation on a PGM image and prints the comparison table.
//!
//! `cargo run --release -p despeckle --example ablation -- crates/core/tests/data/camera256.pgm 4 1`

use std::path::PathBuf;

use despeckle::{io, pipeline, Looks, PipelineConfig};

fn main() -> despeckle::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(
        args.next()
            .unwrap_or_else(|| "crates/core/tests/data/camera256.pgm".into()),
    );
    let looks: f64 = args.next().map_or(4.0, |s| s.parse().expect("looks"));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let clean = io::read_raster(&path)?;
    let start = std::time::Instant::now();
    let report = pipeline::run_ablation(&clean, Looks::new(looks)?, seed, &PipelineConfig::default(), None)?;
    print!("{}", report.table());
    for row in &report.rows {
        println!("({}) lambda = {:?}", row.label, row.lambda);
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
