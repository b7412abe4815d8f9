//! Streams N-Triples, keeping every triple and counting what was skipped.
//!
//! cargo run --example parse_ntriples [file.nt[.gz]]

use std::io::Cursor;

use flatlink::rdf_ingest::{parse_ntriples_line, read_triples_file, LineOutcome, TripleReader};

const SAMPLE: &str = r#"# a comment
<http://dbpedia.org/resource/Ada_Lovelace> <http://xmlns.com/foaf/0.1/name> "Ada Lovelace"@en .
<http://dbpedia.org/resource/Ada_Lovelace> <http://dbpedia.org/ontology/birthYear> "1815"^^<http://www.w3.org/2001/XMLSchema#gYear> .
_:b0 <http://example.org/note> "tab\there, café" .
<http://broken.example.org/s> <http://broken.example.org/p>
"#;

fn main() -> std::io::Result<()> {
    let mut reader = match std::env::args().nth(1) {
        Some(path) => read_triples_file(path.as_ref())?,
        None => TripleReader::new(Box::new(Cursor::new(SAMPLE)) as Box<dyn std::io::BufRead + Send>),
    };
    for triple in reader.by_ref() {
        let t = triple?;
        let kind = if t.object.is_literal() { "literal" } else { "uri" };
        println!("{} | {} | {kind}: {:?}", t.subject, t.predicate, t.object.lexical());
    }
    let report = reader.into_report();
    println!("lines={} triples={} skipped={}", report.lines_total, report.triples_ok, report.lines_skipped);
    for (line, err) in &report.first_errors {
        println!("  line {line}: {err}");
    }

    // Single lines can be parsed directly.
    match parse_ntriples_line("<s> <p> <o> .").unwrap() {
        LineOutcome::Triple(t) => println!("round trip: {}", t.to_ntriples()),
        LineOutcome::Skip => unreachable!(),
    }
    Ok(())
}
