//! Shared helpers and brute-force oracles for the integration suites.
//!
//! The oracles here deliberately avoid the library's own parsers and
//! engines: they work on in-memory data with plain std collections.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use flatlink::exec::ExecConfig;
use flatlink::flat_record::{parse_record, EntityRecord};
use flatlink::link_join::GroundTruthPair;
use flatlink::rdf_ingest::{ObjectValue, Triple};
use flatlink::tools::{FileMode, Side, RDF_TYPE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn cfg(spill: &Path, partitions: usize, budget: usize) -> ExecConfig {
    ExecConfig { partitions, memory_budget_bytes: budget, spill_dir: spill.to_path_buf(), parallelism: 4 }
}

pub fn read_lines(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().map(String::from).collect()
}

pub fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

/// Expected entity records of a triple stream: subjects sorted, keys sorted,
/// values in first-occurrence order, exact duplicates dropped.
pub fn group_oracle<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> BTreeMap<String, EntityRecord> {
    let mut by_subject: HashMap<&str, BTreeMap<&str, Vec<&ObjectValue>>> = HashMap::new();
    for t in triples {
        let values = by_subject.entry(&t.subject).or_default().entry(&t.predicate).or_default();
        if !values.contains(&&t.object) {
            values.push(&t.object);
        }
    }
    by_subject
        .into_iter()
        .map(|(s, props)| {
            let mut rec = EntityRecord::new(s);
            for (k, vs) in props {
                rec.properties.push((k.to_string(), vs.into_iter().cloned().collect()));
            }
            (s.to_string(), rec)
        })
        .collect()
}

/// Nested-loop 2-way join: for each distinct pair in file order of first
/// occurrence, scan both entity lists. Returns `(left uri, right uri, left
/// line, right line)` sorted by `(left uri, right uri)`, plus the drop counts.
pub struct Join2Oracle {
    pub rows: Vec<(String, String, String, String)>,
    pub dropped_left: u64,
    pub dropped_right: u64,
}

pub fn join2_oracle(a: &[(String, String)], b: &[(String, String)], gt: &[GroundTruthPair]) -> Join2Oracle {
    let mut seen = HashSet::new();
    let mut out = Join2Oracle { rows: Vec::new(), dropped_left: 0, dropped_right: 0 };
    for p in gt {
        if !seen.insert(p) {
            continue;
        }
        let left = a.iter().find(|(u, _)| *u == p.left);
        let right = b.iter().find(|(u, _)| *u == p.right);
        match (left, right) {
            (None, _) => out.dropped_left += 1,
            (Some(_), None) => out.dropped_right += 1,
            (Some((_, la)), Some((_, lb))) => out.rows.push((p.left.clone(), p.right.clone(), la.clone(), lb.clone())),
        }
    }
    out.rows.sort();
    out
}

/// Splits a linkage line with a scan that is independent of the library:
/// tokens ending in `-instance` made only of `[a-z0-9_]` open a group.
pub fn oracle_split_link(line: &str) -> (String, Vec<(String, String)>) {
    let mut tokens = line.split('\t');
    let id = tokens.next().unwrap().to_string();
    let mut groups: Vec<(String, Vec<&str>)> = Vec::new();
    for tok in tokens {
        let label = tok.strip_suffix("-instance").filter(|l| {
            !l.is_empty() && l.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
        });
        match label {
            Some(l) => groups.push((l.to_string(), Vec::new())),
            None => groups.last_mut().expect("token before first sentinel").1.push(tok),
        }
    }
    (id, groups.into_iter().map(|(l, toks)| (l, toks.join("\t"))).collect())
}

/// Minimal N-Triples reader for the subset the generators produce and a few
/// hand-written extras. Returns `None` for lines that are not a triple.
pub fn oracle_parse_ntriples(line: &str) -> Option<Option<Triple>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Some(None);
    }
    let mut rest = trimmed;
    let subject = oracle_term(&mut rest, false)?;
    let predicate = oracle_term(&mut rest, false)?;
    let object = oracle_term(&mut rest, true)?;
    if rest.trim() != "." {
        return None;
    }
    let as_ref = |t: OracleTerm| match t {
        OracleTerm::Ref(s) => Some(s),
        OracleTerm::Lit(_) => None,
    };
    let object = match object {
        OracleTerm::Ref(s) => ObjectValue::Uri(s),
        OracleTerm::Lit(s) => ObjectValue::Literal(s),
    };
    Some(Some(Triple::new(as_ref(subject)?, as_ref(predicate)?, object)))
}

enum OracleTerm {
    Ref(String),
    Lit(String),
}

fn oracle_term(rest: &mut &str, allow_literal: bool) -> Option<OracleTerm> {
    let s = rest.trim_start_matches([' ', '\t']);
    if let Some(body) = s.strip_prefix('<') {
        let end = body.find('>')?;
        let iri = oracle_unescape(&body[..end])?;
        if iri.is_empty() || iri.contains(['\t', '\n', '\r', '"', ' ']) {
            return None;
        }
        *rest = &body[end + 1..];
        return Some(OracleTerm::Ref(iri));
    }
    if s.starts_with("_:") {
        let end = s.find([' ', '\t']).unwrap_or(s.len());
        let label = s[..end].trim_end_matches('.');
        if label.len() <= 2 {
            return None;
        }
        *rest = &s[label.len()..];
        return Some(OracleTerm::Ref(label.to_string()));
    }
    if allow_literal {
        let body = s.strip_prefix('"')?;
        let mut end = None;
        let mut escaped = false;
        for (i, c) in body.char_indices() {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => {
                    end = Some(i);
                    break;
                }
                _ => {}
            }
        }
        let end = end?;
        let lex = oracle_unescape(&body[..end])?;
        let mut after = &body[end + 1..];
        if let Some(tag) = after.strip_prefix('@') {
            let n = tag.find(|c: char| !(c.is_ascii_alphanumeric() || c == '-')).unwrap_or(tag.len());
            if n == 0 {
                return None;
            }
            after = &tag[n..];
        } else if let Some(dt) = after.strip_prefix("^^<") {
            after = &dt[dt.find('>')? + 1..];
        }
        *rest = after;
        return Some(OracleTerm::Lit(lex));
    }
    None
}

fn oracle_unescape(s: &str) -> Option<String> {
    let mut out = String::new();
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        let hex = |chars: &mut std::str::Chars<'_>, n: usize| {
            let h: String = chars.by_ref().take(n).collect();
            if h.len() != n {
                return None;
            }
            char::from_u32(u32::from_str_radix(&h, 16).ok()?)
        };
        out.push(match chars.next()? {
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            'b' => '\u{8}',
            'f' => '\u{c}',
            '"' => '"',
            '\'' => '\'',
            '\\' => '\\',
            'u' => hex(&mut chars, 4)?,
            'U' => hex(&mut chars, 8)?,
            _ => return None,
        });
    }
    Some(out)
}

/// Algorithm R written out longhand over a materialized line list.
pub fn reference_sample(lines: &[String], n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = Vec::new();
    for i in 0..lines.len() {
        if i < n {
            picked.push(i);
            continue;
        }
        let j = rng.gen_range(0..=i as u64) as usize;
        if j < n {
            picked[j] = i;
        }
    }
    picked.sort();
    picked.into_iter().map(|i| lines[i].clone()).collect()
}

pub fn types() -> Vec<String> {
    (0..4).map(|i| format!("http://example.org/ontology/T{i}")).collect()
}

pub fn has_type(rec: &EntityRecord, ty: &str) -> bool {
    rec.properties.iter().any(|(k, vs)| k == RDF_TYPE && vs.iter().any(|v| !v.is_literal() && v.lexical() == ty))
}

/// Full-parse filter: split with the test's own scanner, decode each record.
pub fn brute_force_filter(lines: &[String], mode: FileMode, ty: &str, side: Side) -> Vec<String> {
    lines
        .iter()
        .filter(|line| {
            let records: Vec<EntityRecord> = match mode {
                FileMode::Entity => vec![parse_record(line).unwrap()],
                _ => oracle_split_link(line).1.iter().map(|(_, r)| parse_record(r).unwrap()).collect(),
            };
            let hits: Vec<bool> = records.iter().map(|r| has_type(r, ty)).collect();
            match side {
                Side::First => hits[0],
                Side::Second => hits[1],
                Side::Third => hits[2],
                Side::Any => hits.iter().any(|&h| h),
                Side::All => hits.iter().all(|&h| h),
            }
        })
        .cloned()
        .collect()
}

pub fn synthetic_links(dir: &Path, name: &str, n: usize, labels: &[&str], seed: u64) -> (PathBuf, Vec<String>) {
    let mut rng = flatlink::synth::rng(seed);
    let lines: Vec<String> = (1..=n).map(|i| flatlink::synth::link_line(&mut rng, &format!("xx-{i}"), labels, &types())).collect();
    let path = write(dir, name, &(lines.join("\n") + "\n"));
    (path, lines)
}
