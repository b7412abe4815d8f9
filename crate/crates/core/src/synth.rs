//! Seeded synthetic data: knowledge bases, ground truths and awkward record
//! tokens. Used by the examples, the test suites and for scale runs.
//!
//! Everything here is a pure function of its seed.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::flat_record::EntityRecord;
use crate::link_join::GroundTruthPair;
use crate::rdf_ingest::{ObjectValue, Triple};
use crate::tools::RDF_TYPE;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const AWKWARD: &[&str] = &[
    "",
    "\t",
    "\n",
    "\r\n",
    "\\",
    "\\t",
    "\\s",
    "\"",
    "\"\"",
    "\"\"quoted\"\"",
    "dbpedia-instance",
    "freebase-instance",
    "yago-instance",
    "x-instance",
    "Zürich",
    "東京",
    "🦀",
    " ",
];

/// A token mixing plain text with tabs, line breaks, backslashes, quotes,
/// non-ASCII and sentinel-shaped strings.
pub fn awkward_token(rng: &mut impl Rng) -> String {
    match rng.gen_range(0..4) {
        0 => AWKWARD.choose(rng).unwrap().to_string(),
        1 => {
            let n = rng.gen_range(1..6);
            (0..n).map(|_| *AWKWARD.choose(rng).unwrap()).collect()
        }
        _ => {
            let n = rng.gen_range(0..16);
            (0..n)
                .map(|_| match rng.gen_range(0..20) {
                    0 => '\t',
                    1 => '\n',
                    2 => '\\',
                    3 => '"',
                    4 => 'é',
                    _ => rng.gen_range(b'a'..=b'z') as char,
                })
                .collect()
        }
    }
}

fn uri_value_ok(s: &str) -> bool {
    !s.starts_with('"') && !s.ends_with('"')
}

/// A random valid record: 1 to 6 keys, 1 to 4 distinct values each.
pub fn random_record(rng: &mut impl Rng) -> EntityRecord {
    let uri = loop {
        let u = awkward_token(rng);
        if !u.is_empty() {
            break u;
        }
    };
    let mut rec = EntityRecord::new(uri);
    let mut keys: Vec<String> = Vec::new();
    for _ in 0..rng.gen_range(1..=6) {
        let k = awkward_token(rng);
        if !k.is_empty() && !keys.contains(&k) {
            keys.push(k);
        }
    }
    if keys.is_empty() {
        keys.push("p".into());
    }
    keys.sort();
    for k in keys {
        let mut values: Vec<ObjectValue> = Vec::new();
        for _ in 0..rng.gen_range(1..=4) {
            let lex = awkward_token(rng);
            let v = if rng.gen_bool(0.5) || !uri_value_ok(&lex) {
                ObjectValue::Literal(lex)
            } else {
                ObjectValue::Uri(lex)
            };
            if !values.contains(&v) {
                values.push(v);
            }
        }
        rec.properties.push((k, values));
    }
    rec
}

/// A small record carrying zero to two `rdf:type` values drawn from `types`
/// plus a few awkward properties.
pub fn typed_record(rng: &mut impl Rng, uri: String, types: &[String]) -> EntityRecord {
    let mut rec = EntityRecord::new(uri);
    let k = rng.gen_range(0..=2.min(types.len()));
    let mut chosen: Vec<&String> = types.choose_multiple(rng, k).collect();
    chosen.sort();
    for _ in 0..rng.gen_range(0..3) {
        let lex = awkward_token(rng);
        let key = format!("http://example.org/p{}", rng.gen_range(0..3));
        let v = ObjectValue::Literal(lex);
        match rec.properties.iter_mut().find(|(k, _)| *k == key) {
            Some((_, vs)) if !vs.contains(&v) => vs.push(v),
            Some(_) => {}
            None => rec.properties.push((key, vec![v])),
        }
    }
    if !chosen.is_empty() {
        rec.properties.push((RDF_TYPE.to_string(), chosen.into_iter().map(|t| ObjectValue::Uri(t.clone())).collect()));
    }
    if rec.properties.is_empty() {
        rec.properties.push(("http://example.org/p0".into(), vec![ObjectValue::Literal("x".into())]));
    }
    rec.properties.sort_by(|a, b| a.0.cmp(&b.0));
    rec
}

/// A linkage line with one typed record per label; `id` goes in the first slot.
pub fn link_line(rng: &mut impl Rng, id: &str, labels: &[&str], types: &[String]) -> String {
    let mut line = id.to_string();
    for label in labels {
        let uri = format!("http://{label}.example.org/resource/E{}", rng.gen_range(0..1_000_000));
        line.push('\t');
        line.push_str(&crate::flat_record::sentinel_for(label));
        line.push('\t');
        line.push_str(&crate::flat_record::serialize_record(&typed_record(rng, uri, types)));
    }
    line
}

/// Shape of a synthetic knowledge base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbShape {
    pub label: String,
    pub subjects: usize,
    pub triples: usize,
    /// Size of the `rdf:type` vocabulary.
    pub types: usize,
}

impl KbShape {
    pub fn new(label: impl Into<String>, subjects: usize, triples: usize) -> Self {
        KbShape { label: label.into(), subjects, triples, types: 12 }
    }

    pub fn subject_uri(&self, i: usize) -> String {
        format!("http://{}.example.org/resource/E{i}", self.label)
    }

    pub fn subject_uris(&self) -> Vec<String> {
        (0..self.subjects).map(|i| self.subject_uri(i)).collect()
    }

    pub fn type_uri(&self, i: usize) -> String {
        format!("http://{}.example.org/ontology/T{i}", self.label)
    }
}

/// Streams the triples of a synthetic KB.
///
/// The first `subjects` triples give every subject one triple, so the
/// entity set is exactly `subject_uri(0..subjects)`. The rest picks random
/// subjects and mixes `rdf:type` (skewed towards low type numbers), links to
/// other entities, object-only URIs, awkward literals and exact duplicates.
pub struct KbGenerator {
    shape: KbShape,
    rng: ChaCha8Rng,
    emitted: usize,
    last: Option<Triple>,
}

impl KbGenerator {
    pub fn new(shape: KbShape, seed: u64) -> Self {
        assert!(shape.subjects >= 1 && shape.triples >= shape.subjects, "need triples >= subjects >= 1");
        KbGenerator { shape, rng: rng(seed), emitted: 0, last: None }
    }

    fn object(&mut self) -> (String, ObjectValue) {
        let s = &self.shape;
        let rng = &mut self.rng;
        match rng.gen_range(0..10) {
            0..=2 => {
                let t = rng.gen_range(0..s.types).min(rng.gen_range(0..s.types));
                (RDF_TYPE.to_string(), ObjectValue::Uri(s.type_uri(t)))
            }
            3 => {
                let o = rng.gen_range(0..s.subjects);
                (format!("http://{}.example.org/ontology/related", s.label), ObjectValue::Uri(s.subject_uri(o)))
            }
            4 => {
                let o = rng.gen_range(0..s.subjects * 2);
                (format!("http://{}.example.org/ontology/mentions", s.label), ObjectValue::Uri(format!("http://{}.example.org/external/X{o}", s.label)))
            }
            5 => (format!("http://{}.example.org/ontology/note", s.label), ObjectValue::Literal(awkward_token(rng))),
            _ => {
                let p = rng.gen_range(0..8);
                let v = rng.gen_range(0..1000);
                (format!("http://{}.example.org/ontology/p{p}", s.label), ObjectValue::Literal(format!("value {v}")))
            }
        }
    }
}

impl Iterator for KbGenerator {
    type Item = Triple;

    fn next(&mut self) -> Option<Triple> {
        if self.emitted >= self.shape.triples {
            return None;
        }
        let i = self.emitted;
        self.emitted += 1;
        if i >= self.shape.subjects && self.rng.gen_bool(0.02) {
            if let Some(t) = &self.last {
                return Some(t.clone());
            }
        }
        let subject = if i < self.shape.subjects { i } else { self.rng.gen_range(0..self.shape.subjects) };
        let (predicate, object) = self.object();
        let t = Triple::new(self.shape.subject_uri(subject), predicate, object);
        self.last = Some(t.clone());
        Some(t)
    }
}

/// Writes triples as N-Triples, one per line, splitting them round-robin
/// over `paths`. Every `noise_every`-th line (if nonzero) is preceded by a
/// malformed line.
pub fn write_ntriples<I>(paths: &[&Path], triples: I, noise_every: usize) -> io::Result<u64>
where
    I: IntoIterator<Item = Triple>,
{
    let mut writers: Vec<BufWriter<File>> =
        paths.iter().map(|p| File::create(p).map(BufWriter::new)).collect::<io::Result<_>>()?;
    let mut n = 0u64;
    for (i, t) in triples.into_iter().enumerate() {
        let w = &mut writers[i % paths.len()];
        if noise_every > 0 && i % noise_every == noise_every - 1 {
            writeln!(w, "<http://broken.example.org/s> <http://broken.example.org/p>")?;
        }
        writeln!(w, "{}", t.to_ntriples())?;
        n += 1;
    }
    for mut w in writers {
        w.flush()?;
    }
    Ok(n)
}

/// `n` ground-truth pairs over the given URI sets. A `dangling` fraction
/// refers to a URI missing from one side (or both); about 3% repeat an
/// earlier pair.
pub fn ground_truth(
    rng: &mut impl Rng,
    left: &[String],
    right: &[String],
    n: usize,
    dangling: f64,
) -> Vec<GroundTruthPair> {
    let mut pairs: Vec<GroundTruthPair> = Vec::with_capacity(n);
    for k in 0..n {
        if !pairs.is_empty() && rng.gen_bool(0.03) {
            let p = pairs[rng.gen_range(0..pairs.len())].clone();
            pairs.push(p);
            continue;
        }
        let mut l = left.choose(rng).cloned().unwrap_or_default();
        let mut r = right.choose(rng).cloned().unwrap_or_default();
        if rng.gen_bool(dangling) {
            match rng.gen_range(0..3) {
                0 => l = format!("http://missing.example.org/left/{k}"),
                1 => r = format!("http://missing.example.org/right/{k}"),
                _ => {
                    l = format!("http://missing.example.org/left/{k}");
                    r = format!("http://missing.example.org/right/{k}");
                }
            }
        }
        pairs.push(GroundTruthPair::new(l, r));
    }
    pairs
}

pub fn write_gt_tsv(path: &Path, pairs: &[GroundTruthPair]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in pairs {
        writeln!(w, "{}\t{}", p.left, p.right)?;
    }
    w.flush()
}

pub fn write_gt_ntriples(path: &Path, pairs: &[GroundTruthPair]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in pairs {
        let t = Triple::new(p.left.clone(), crate::link_join::OWL_SAME_AS, ObjectValue::Uri(p.right.clone()));
        writeln!(w, "{}", t.to_ntriples())?;
    }
    w.flush()
}
