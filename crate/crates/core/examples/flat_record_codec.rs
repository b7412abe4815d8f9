//! Builds an entity record, serializes it to one line and parses it back.
//! Tabs, line breaks and sentinel-shaped strings survive the trip.

use flatlink::flat_record::{parse_record, record_from_triples, serialize_record, EntityRecord};
use flatlink::rdf_ingest::{ObjectValue, Triple};

fn main() {
    let rec = EntityRecord::new("http://dbpedia.org/resource/Zürich")
        .with("http://dbpedia.org/ontology/country", ObjectValue::Uri("http://dbpedia.org/resource/Switzerland".into()))
        .with("http://example.org/note", ObjectValue::Literal("line one\nline two".into()))
        .with("http://example.org/odd", ObjectValue::Literal("dbpedia-instance".into()))
        .with("http://www.w3.org/2000/01/rdf-schema#label", ObjectValue::Literal("Zürich".into()))
        .with("http://www.w3.org/2000/01/rdf-schema#label", ObjectValue::Literal("Zurich\tZurigo".into()));
    rec.validate().expect("valid record");

    let line = serialize_record(&rec);
    println!("{line}");
    let back = parse_record(&line).expect("parses");
    assert_eq!(back, rec);
    println!("{} tokens, {} values, round trip ok", line.split('\t').count(), back.value_count());

    // Predicates may arrive in any order and duplicates collapse. Values
    // keep their first-occurrence order.
    let mut triples: Vec<Triple> = rec.triples().collect();
    triples.sort_by(|a, b| b.predicate.cmp(&a.predicate));
    triples.push(triples[0].clone());
    let rebuilt = record_from_triples(&rec.uri, &triples).unwrap();
    assert_eq!(serialize_record(&rebuilt), line);

    for bad in ["uri\tkey", "uri\tkey\t\"\"open", "uri\tkey\tfreebase-instance"] {
        println!("{bad:?} -> {}", parse_record(bad).unwrap_err());
    }
}
