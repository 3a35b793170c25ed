//! Writes plot-ready CSV for one or more figures.
//!
//! `cargo run --release --example figure_data -- [out_dir] [fig7 fig8 ...]`

use std::fs::File;
use std::path::PathBuf;

use railcf::figures::{generate, Figure, Scale};

fn main() -> railcf::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
    let mut figures: Vec<Figure> = args.map(|a| a.parse()).collect::<railcf::Result<_>>()?;
    if figures.is_empty() {
        figures = vec![Figure::Fig7, Figure::Fig8, Figure::Fig10, Figure::Fig11];
    }
    std::fs::create_dir_all(&out)?;
    for fig in figures {
        let start = std::time::Instant::now();
        let data = generate(fig, Scale::Desk)?;
        let path = out.join(fig.file_name());
        data.write_csv(File::create(&path)?)?;
        println!("{} rows -> {} ({:.1} s)", data.rows.len(), path.display(), start.elapsed().as_secs_f64());
    }
    Ok(())
}
