//! Runs the bundled demo configuration end to end: compile three KBs, two
//! 2-way joins, one 3-way join and a sample, then validate every output.
//! Outputs go to a temporary copy of the fixture directory.

use std::path::Path;

use flatlink::pipeline::{render_key_values, run_pipeline, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo");
    let work = tempfile::tempdir()?;
    for entry in std::fs::read_dir(&demo)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            std::fs::copy(entry.path(), work.path().join(entry.file_name()))?;
        }
    }
    let mut cfg = PipelineConfig::load(&work.path().join("demo.cfg"))?;
    cfg.exec.spill_dir = work.path().into();
    print!("{}", render_key_values(&cfg.effective()));

    let report = run_pipeline(&cfg, &mut |step| println!("> {step}"))?;
    print!("{report}");

    let three = std::fs::read_to_string(work.path().join("out/dbpedia_freebase_yago.links"))?;
    println!("first 3-way line:\n{}", three.lines().next().unwrap_or(""));
    Ok(())
}
