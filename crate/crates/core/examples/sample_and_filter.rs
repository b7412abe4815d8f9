//! Draws a seeded reservoir sample from a linkage file, then keeps only
//! lines whose first record carries a given rdf:type.

use flatlink::synth::{link_line, rng};
use flatlink::tools::{filter_by_type, sample_lines, FileMode, SampleSpec, Side, TypeFilterSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let types: Vec<String> = ["Person", "Place", "Organisation"].iter().map(|t| format!("http://dbpedia.org/ontology/{t}")).collect();
    let mut r = rng(11);
    let body: String = (1..=20_000).map(|i| link_line(&mut r, &format!("fd-{i}"), &["freebase", "dbpedia"], &types) + "\n").collect();
    let links = dir.path().join("fd.links");
    std::fs::write(&links, body)?;

    let sample = dir.path().join("fd.sample");
    let s = sample_lines(&links, SampleSpec { n: 1_000, seed: 42 }, &sample)?;
    println!("sampled {} of {} lines", s.lines_written, s.lines_read);
    let again = dir.path().join("fd.sample2");
    sample_lines(&links, SampleSpec { n: 1_000, seed: 42 }, &again)?;
    assert_eq!(std::fs::read(&sample)?, std::fs::read(&again)?);

    for side in [Side::First, Side::Second, Side::Any, Side::All] {
        let spec = TypeFilterSpec::new(types[0].clone(), side);
        let out = dir.path().join("people.links");
        let f = filter_by_type(&sample, FileMode::Link2, &spec, &out)?;
        println!("type=Person side={side:?}: kept {} of {}", f.lines_written, f.lines_read);
    }
    Ok(())
}
