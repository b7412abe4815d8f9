//! Compiles the bundled DBpedia-style fixture (two N-Triples files) into an
//! entity file: one line per subject URI.
//!
//! cargo run --example compile_kb

use std::path::Path;

use flatlink::compile::{compile_kb, KbSpec};
use flatlink::exec::ExecConfig;
use flatlink::flat_record::parse_record;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo");
    let work = tempfile::tempdir()?;
    let out = work.path().join("dbpedia.ents");
    let spec = KbSpec::new("dbpedia", vec![demo.join("dbpedia_infobox.nt"), demo.join("dbpedia_types.nt")], &out);
    let cfg = ExecConfig { partitions: 4, spill_dir: work.path().into(), ..ExecConfig::default() };

    let report = compile_kb(&spec, &cfg)?;
    println!("{report}");
    for (line, err) in &report.parse.first_errors {
        println!("skipped line {line}: {err}");
    }
    for line in std::fs::read_to_string(&out)?.lines() {
        let rec = parse_record(line)?;
        println!("{} ({} keys, {} values)", rec.uri, rec.properties.len(), rec.value_count());
    }
    Ok(())
}
