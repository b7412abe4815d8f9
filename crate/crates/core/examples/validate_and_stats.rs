//! Validates a linkage file line by line and prints its statistics. A
//! second, damaged copy shows how violations are reported.

use flatlink::synth::{link_line, rng};
use flatlink::tools::{stats, validate, FileMode, RDF_TYPE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let types: Vec<String> = (0..5).map(|i| format!("http://example.org/ontology/T{i}")).collect();
    let mut r = rng(5);
    let lines: Vec<String> = (1..=2_000).map(|i| link_line(&mut r, &format!("yd-{i}"), &["yago", "dbpedia"], &types)).collect();
    let good = dir.path().join("yd.links");
    std::fs::write(&good, lines.join("\n") + "\n")?;

    print!("{}", validate(&good, FileMode::Link2, 10)?);
    print!("{}", stats(&good, FileMode::Link2, 3, RDF_TYPE)?);

    let mut damaged = lines.clone();
    damaged[10] = damaged[10].replacen("dbpedia-instance", "dbpedia_instance", 1);
    damaged[20].push_str("\tdangling-key");
    damaged[30] = damaged[1].clone();
    let bad = dir.path().join("bad.links");
    std::fs::write(&bad, damaged.join("\n") + "\n")?;
    print!("{}", validate(&bad, FileMode::Link2, 10)?);
    Ok(())
}
