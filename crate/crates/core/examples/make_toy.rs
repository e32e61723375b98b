//! Regenerates the bundled toy dataset under `data/toy/`.
//!
//!     cargo run -p ordsae --example make_toy

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ordsae::rng::{child_seed, stream_rng};
use ordsae::simulation::{pps_poisson_sample, synth_population, PopulationSpec, PpsDesign};
use ordsae::survey::write_records_csv;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy");
    std::fs::create_dir_all(&dir)?;
    let spec = PopulationSpec {
        n_households: 3000,
        grid_rows: 4,
        grid_cols: 4,
        n_basis: None,
        n_times: 3,
        ..PopulationSpec::default()
    };
    let pop = synth_population(&spec, &mut stream_rng(child_seed(2024, 0), 0))?;
    let design = PpsDesign {
        expected_fraction: 0.1,
        ..PpsDesign::default()
    };
    let sample = pps_poisson_sample(
        &pop.household_means(),
        &pop.household_weights(),
        &design,
        &mut stream_rng(child_seed(2024, 1), 0),
    )?;
    let records = pop.sample_records(&sample);
    write_records_csv(&records, File::create(dir.join("toy.csv"))?)?;
    pop.frame.write_csv(File::create(dir.join("frame.csv"))?)?;

    let mut adj = File::create(dir.join("adjacency.txt"))?;
    writeln!(adj, "# 4 x 4 rook grid, areas numbered row by row")?;
    for (a, b) in spec.graph()?.edges() {
        writeln!(adj, "{a} {b}")?;
    }

    let mut truth = File::create(dir.join("truth.csv"))?;
    writeln!(truth, "area,t,category,share")?;
    for ((a, t), pi) in &pop.truth {
        for (k, p) in pi.iter().enumerate() {
            writeln!(truth, "{a},{t},{},{p}", k + 1)?;
        }
    }
    println!(
        "{} respondents from {} households",
        records.len(),
        sample.indices.len()
    );
    Ok(())
}
