//! The flat, single-line entity serialization.
//!
//! One entity is one line of tab-separated tokens:
//!
//! ```text
//! uri TAB key TAB value TAB key TAB value ...
//! ```
//!
//! A key with several values is written as adjacent repeated `(key, value)`
//! pairs, so the token stream always alternates and the line splits into an
//! array of key-value pairs with a single `split('\t')`. Literal values are
//! wrapped in two double quotes on each side (`""32""`); anything else is a
//! URI. No nesting, no recursion.
//!
//! Tokens are escaped so they never contain a raw tab, line feed or carriage
//! return, and so they can never be mistaken for a slot sentinel such as
//! `dbpedia-instance` in linkage files:
//!
//! | raw            | escaped            |
//! |----------------|--------------------|
//! | `\`            | `\\`               |
//! | TAB            | `\t`               |
//! | LF             | `\n`               |
//! | CR             | `\r`               |
//! | sentinel-shaped token | `\s` + token |

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::rdf_ingest::{ObjectValue, Triple};

pub const SENTINEL_SUFFIX: &str = "-instance";

const LITERAL_WRAP: &str = "\"\"";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("dangling escape character at end of token")]
    DanglingEscape,
    #[error("unknown escape code '\\{0}'")]
    UnknownEscape(char),
    #[error("'\\s' is only valid as a prefix of a sentinel-shaped token")]
    NonCanonicalSentinelEscape,
    #[error("even token count ({0}); expected uri followed by key/value pairs")]
    EvenTokenCount(usize),
    #[error("empty entity uri")]
    EmptyUri,
    #[error("empty property key")]
    EmptyKey,
    #[error("record has no properties")]
    NoProperties,
    #[error("key {0:?} has an empty value list")]
    EmptyValueList(String),
    #[error("key {0:?} appears in two non-adjacent runs")]
    KeyNotAdjacent(String),
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("duplicate value for key {0:?}")]
    DuplicateValue(String),
    #[error("unbalanced literal quotes in token {0:?}")]
    UnbalancedQuotes(String),
    #[error("URI value {0:?} begins or ends with a double quote")]
    QuotedUri(String),
    #[error("raw sentinel token {0:?} inside a record")]
    SentinelInRecord(String),
    #[error("raw line break inside a token")]
    RawLineBreak,
    #[error("entity needs at least one triple")]
    EmptyTripleList,
    #[error("triple subject {found:?} does not match entity {expected:?}")]
    SubjectMismatch { expected: String, found: String },
}

/// Knowledge-base labels: non-empty, `[a-z0-9_]` only.
pub fn is_valid_label(label: &str) -> bool {
    !label.is_empty() && label.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

/// The slot sentinel used for `label` in linkage files, e.g. `freebase-instance`.
pub fn sentinel_for(label: &str) -> String {
    format!("{label}{SENTINEL_SUFFIX}")
}

/// Returns the label if `token` has the reserved `<label>-instance` shape.
pub fn sentinel_label(token: &str) -> Option<&str> {
    token.strip_suffix(SENTINEL_SUFFIX).filter(|l| is_valid_label(l))
}

pub fn escape_token(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len() + 2);
    escape_into(&mut out, raw);
    out
}

/// Appends the escaped form of `raw` to `out`.
pub fn escape_into(out: &mut String, raw: &str) {
    if sentinel_label(raw).is_some() {
        out.push_str("\\s");
    }
    if !raw.contains(['\\', '\t', '\n', '\r']) {
        out.push_str(raw);
        return;
    }
    for c in raw.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
}

pub fn unescape_token(tok: &str) -> Result<String, CodecError> {
    let (body, sentinel_escaped) = match tok.strip_prefix("\\s") {
        Some(rest) => (rest, true),
        None => (tok, false),
    };
    if body.contains(['\n', '\r']) {
        return Err(CodecError::RawLineBreak);
    }
    let out = if body.contains('\\') {
        let mut out = String::with_capacity(body.len());
        let mut chars = body.chars();
        while let Some(c) = chars.next() {
            if c != '\\' {
                out.push(c);
                continue;
            }
            match chars.next() {
                Some('\\') => out.push('\\'),
                Some('t') => out.push('\t'),
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some('s') => return Err(CodecError::NonCanonicalSentinelEscape),
                Some(other) => return Err(CodecError::UnknownEscape(other)),
                None => return Err(CodecError::DanglingEscape),
            }
        }
        out
    } else {
        body.to_string()
    };
    if sentinel_escaped != sentinel_label(&out).is_some() {
        return Err(CodecError::NonCanonicalSentinelEscape);
    }
    Ok(out)
}

fn is_literal_token(tok: &str) -> bool {
    tok.len() >= 2 * LITERAL_WRAP.len() && tok.starts_with(LITERAL_WRAP) && tok.ends_with(LITERAL_WRAP)
}

/// Decodes a serialized value token into a URI or literal.
pub fn parse_value_token(tok: &str) -> Result<ObjectValue, CodecError> {
    if is_literal_token(tok) {
        let inner = &tok[LITERAL_WRAP.len()..tok.len() - LITERAL_WRAP.len()];
        return Ok(ObjectValue::Literal(unescape_token(inner)?));
    }
    if tok.starts_with('"') || tok.ends_with('"') {
        return Err(CodecError::UnbalancedQuotes(tok.to_string()));
    }
    Ok(ObjectValue::Uri(unescape_token(tok)?))
}

pub fn write_value_token(out: &mut String, value: &ObjectValue) {
    match value {
        ObjectValue::Uri(u) => escape_into(out, u),
        ObjectValue::Literal(l) => {
            out.push_str(LITERAL_WRAP);
            escape_into(out, l);
            out.push_str(LITERAL_WRAP);
        }
    }
}

/// One entity's information set: its URI and every `(predicate, object)`
/// pair it is the subject of, grouped by predicate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EntityRecord {
    pub uri: String,
    pub properties: Vec<(String, Vec<ObjectValue>)>,
}

impl EntityRecord {
    pub fn new(uri: impl Into<String>) -> Self {
        EntityRecord { uri: uri.into(), properties: Vec::new() }
    }

    /// Appends a value, extending the last key's list when the key repeats.
    pub fn push(&mut self, key: impl Into<String>, value: ObjectValue) -> &mut Self {
        let key = key.into();
        match self.properties.last_mut() {
            Some((k, vs)) if *k == key => vs.push(value),
            _ => self.properties.push((key, vec![value])),
        }
        self
    }

    pub fn with(mut self, key: impl Into<String>, value: ObjectValue) -> Self {
        self.push(key, value);
        self
    }

    pub fn values(&self, key: &str) -> Option<&[ObjectValue]> {
        self.properties.iter().find(|(k, _)| k == key).map(|(_, vs)| vs.as_slice())
    }

    pub fn value_count(&self) -> usize {
        self.properties.iter().map(|(_, vs)| vs.len()).sum()
    }

    /// Flattens the record back to triples.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.properties.iter().flat_map(move |(k, vs)| {
            vs.iter().map(move |v| Triple::new(self.uri.clone(), k.clone(), v.clone()))
        })
    }

    /// Checks the structural invariants a serializable record must satisfy.
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.uri.is_empty() {
            return Err(CodecError::EmptyUri);
        }
        if self.properties.is_empty() {
            return Err(CodecError::NoProperties);
        }
        let mut keys = HashSet::with_capacity(self.properties.len());
        for (k, vs) in &self.properties {
            if k.is_empty() {
                return Err(CodecError::EmptyKey);
            }
            if !keys.insert(k.as_str()) {
                return Err(CodecError::DuplicateKey(k.clone()));
            }
            if vs.is_empty() {
                return Err(CodecError::EmptyValueList(k.clone()));
            }
            let mut seen = HashSet::with_capacity(vs.len());
            for v in vs {
                if let ObjectValue::Uri(u) = v {
                    if u.starts_with('"') || u.ends_with('"') {
                        return Err(CodecError::QuotedUri(u.clone()));
                    }
                }
                if !seen.insert(v) {
                    return Err(CodecError::DuplicateValue(k.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        serialize_record(self)
    }
}

/// Serializes a record to one line (no terminator). The record is assumed to
/// satisfy [`EntityRecord::validate`].
pub fn serialize_record(rec: &EntityRecord) -> String {
    let mut out = String::with_capacity(64);
    write_record(&mut out, rec);
    out
}

pub fn write_record(out: &mut String, rec: &EntityRecord) {
    escape_into(out, &rec.uri);
    for (k, vs) in &rec.properties {
        for v in vs {
            out.push('\t');
            escape_into(out, k);
            out.push('\t');
            write_value_token(out, v);
        }
    }
}

/// Parses one serialized entity line.
pub fn parse_record(line: &str) -> Result<EntityRecord, CodecError> {
    let tokens: Vec<&str> = line.split('\t').collect();
    parse_record_tokens(&tokens)
}

/// Parses a record from its already-split tokens. Single pass, no recursion.
pub fn parse_record_tokens(tokens: &[&str]) -> Result<EntityRecord, CodecError> {
    if tokens.len().is_multiple_of(2) {
        return Err(CodecError::EvenTokenCount(tokens.len()));
    }
    if let Some(t) = tokens.iter().find(|t| sentinel_label(t).is_some()) {
        return Err(CodecError::SentinelInRecord(t.to_string()));
    }
    let uri = unescape_token(tokens[0])?;
    if uri.is_empty() {
        return Err(CodecError::EmptyUri);
    }
    let mut rec = EntityRecord::new(uri);
    let mut seen_keys: HashSet<&str> = HashSet::new();
    let mut seen_values: HashSet<ObjectValue> = HashSet::new();
    let mut last_key_tok: Option<&str> = None;
    for pair in tokens[1..].chunks_exact(2) {
        let (ktok, vtok) = (pair[0], pair[1]);
        let value = parse_value_token(vtok)?;
        if last_key_tok == Some(ktok) {
            if !seen_values.insert(value.clone()) {
                return Err(CodecError::DuplicateValue(rec.properties.last().unwrap().0.clone()));
            }
            rec.properties.last_mut().unwrap().1.push(value);
            continue;
        }
        let key = unescape_token(ktok)?;
        if key.is_empty() {
            return Err(CodecError::EmptyKey);
        }
        if !seen_keys.insert(ktok) {
            return Err(CodecError::KeyNotAdjacent(key));
        }
        if let ObjectValue::Uri(u) = &value {
            if u.starts_with('"') || u.ends_with('"') {
                return Err(CodecError::QuotedUri(u.clone()));
            }
        }
        seen_values.clear();
        seen_values.insert(value.clone());
        rec.properties.push((key, vec![value]));
        last_key_tok = Some(ktok);
    }
    if rec.properties.is_empty() {
        return Err(CodecError::NoProperties);
    }
    Ok(rec)
}

/// Accumulates one subject's triples into a record: exact duplicates are
/// dropped, keys come out in byte order, values in first-occurrence order.
#[derive(Debug)]
pub struct RecordBuilder {
    uri: String,
    props: BTreeMap<String, (Vec<ObjectValue>, HashSet<ObjectValue>)>,
    added: usize,
}

impl RecordBuilder {
    pub fn new(uri: impl Into<String>) -> Self {
        RecordBuilder { uri: uri.into(), props: BTreeMap::new(), added: 0 }
    }

    /// Returns false when the pair was an exact duplicate.
    pub fn add(&mut self, predicate: &str, object: ObjectValue) -> bool {
        self.added += 1;
        let entry = match self.props.get_mut(predicate) {
            Some(e) => e,
            None => self.props.entry(predicate.to_string()).or_default(),
        };
        if entry.1.contains(&object) {
            return false;
        }
        entry.1.insert(object.clone());
        entry.0.push(object);
        true
    }

    pub fn build(self) -> Result<EntityRecord, CodecError> {
        if self.added == 0 {
            return Err(CodecError::EmptyTripleList);
        }
        Ok(EntityRecord {
            uri: self.uri,
            properties: self.props.into_iter().map(|(k, (vs, _))| (k, vs)).collect(),
        })
    }
}

/// Builds the record of `subject` from its triples.
pub fn record_from_triples(subject: &str, triples: &[Triple]) -> Result<EntityRecord, CodecError> {
    let mut b = RecordBuilder::new(subject);
    for t in triples {
        if t.subject != subject {
            return Err(CodecError::SubjectMismatch {
                expected: subject.to_string(),
                found: t.subject.clone(),
            });
        }
        b.add(&t.predicate, t.object.clone());
    }
    b.build()
}

/// First token of a serialized entity line, unescaped.
pub fn record_uri(line: &str) -> Result<String, CodecError> {
    let first = line.split('\t').next().unwrap_or_default();
    let uri = unescape_token(first)?;
    if uri.is_empty() {
        return Err(CodecError::EmptyUri);
    }
    Ok(uri)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uri(s: &str) -> ObjectValue {
        ObjectValue::Uri(s.into())
    }

    fn lit(s: &str) -> ObjectValue {
        ObjectValue::Literal(s.into())
    }

    #[test]
    fn escape_table() {
        assert_eq!(escape_token("abc"), "abc");
        assert_eq!(escape_token("a\tb"), "a\\tb");
        assert_eq!(escape_token("a\nb\rc\\d"), "a\\nb\\rc\\\\d");
        assert_eq!(escape_token("freebase-instance"), "\\sfreebase-instance");
        assert_eq!(escape_token("Freebase-instance"), "Freebase-instance");
        assert_eq!(escape_token("-instance"), "-instance");
    }

    #[test]
    fn unescape_errors() {
        assert_eq!(unescape_token("ab\\"), Err(CodecError::DanglingEscape));
        assert_eq!(unescape_token("a\\qb"), Err(CodecError::UnknownEscape('q')));
        assert_eq!(unescape_token("\\sabc"), Err(CodecError::NonCanonicalSentinelEscape));
        assert_eq!(unescape_token("a\\sb-instance"), Err(CodecError::NonCanonicalSentinelEscape));
        assert_eq!(unescape_token("dbpedia-instance"), Err(CodecError::NonCanonicalSentinelEscape));
        assert_eq!(unescape_token("\\sdbpedia-instance").unwrap(), "dbpedia-instance");
    }

    #[test]
    fn serialize_examples() {
        let e1 = EntityRecord::new(":e1").with(":p", uri(":v1"));
        assert_eq!(serialize_record(&e1), ":e1\t:p\t:v1");
        let e2 = EntityRecord::new(":e2").with(":age", lit("32"));
        assert_eq!(serialize_record(&e2), ":e2\t:age\t\"\"32\"\"");
        let e3 = EntityRecord::new(":e3").with(":hasBrother", uri(":b1")).with(":hasBrother", uri(":b2"));
        let line = serialize_record(&e3);
        assert_eq!(line, ":e3\t:hasBrother\t:b1\t:hasBrother\t:b2");
        let back = parse_record(&line).unwrap();
        assert_eq!(back.values(":hasBrother").unwrap(), &[uri(":b1"), uri(":b2")]);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse_record(":e1\t:p"), Err(CodecError::EvenTokenCount(2)));
        assert_eq!(parse_record(":e1"), Err(CodecError::NoProperties));
        assert_eq!(parse_record("\t:p\t:v"), Err(CodecError::EmptyUri));
        assert_eq!(parse_record(":e\t\t:v"), Err(CodecError::EmptyKey));
        assert!(matches!(parse_record(":e\t:p\t:a\t:q\t:b\t:p\t:c"), Err(CodecError::KeyNotAdjacent(_))));
        assert!(matches!(parse_record(":e\t:p\t:a\t:p\t:a"), Err(CodecError::DuplicateValue(_))));
        assert!(matches!(parse_record(":e\t:p\t\"\"32\""), Err(CodecError::UnbalancedQuotes(_))));
        assert!(matches!(parse_record(":e\t:p\t\"x"), Err(CodecError::UnbalancedQuotes(_))));
        assert!(matches!(parse_record(":e\t:p\tyago-instance"), Err(CodecError::SentinelInRecord(_))));
        assert!(matches!(parse_record(":e\t:p\tbad\\"), Err(CodecError::DanglingEscape)));
    }

    #[test]
    fn literal_and_uri_with_same_text_are_distinct() {
        let r = EntityRecord::new("e").with("p", uri("x")).with("p", lit("x"));
        let line = serialize_record(&r);
        assert_eq!(line, "e\tp\tx\tp\t\"\"x\"\"");
        assert_eq!(parse_record(&line).unwrap(), r);
    }

    #[test]
    fn odd_literals_round_trip() {
        for l in ["", "\"", "\"\"", "a\"b", "\"quoted\"", "\t", "dbpedia-instance"] {
            let r = EntityRecord::new("e").with("p", lit(l));
            assert_eq!(parse_record(&serialize_record(&r)).unwrap(), r, "{l:?}");
        }
    }

    #[test]
    fn validate_rejects_quote_edged_uris() {
        let r = EntityRecord::new("e").with("p", uri("\"x"));
        assert!(matches!(r.validate(), Err(CodecError::QuotedUri(_))));
        assert_eq!(EntityRecord::new("e").validate(), Err(CodecError::NoProperties));
    }

    #[test]
    fn from_triples() {
        let t = |p: &str, o: &str| Triple::new("s", p, uri(o));
        let r = record_from_triples("s", &[t("p", "o")]).unwrap();
        assert_eq!(r, EntityRecord::new("s").with("p", uri("o")));
        let r = record_from_triples("s", &[t("p", "o"), t("p", "o")]).unwrap();
        assert_eq!(r.value_count(), 1);
        let r = record_from_triples("s", &[t("p2", "a"), t("p1", "b")]).unwrap();
        let keys: Vec<_> = r.properties.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(keys, ["p1", "p2"]);
        let r = record_from_triples("s", &[t("p", "z"), t("p", "a"), t("p", "z")]).unwrap();
        assert_eq!(r.values("p").unwrap(), &[uri("z"), uri("a")]);
        assert_eq!(record_from_triples("s", &[]), Err(CodecError::EmptyTripleList));
        assert!(matches!(
            record_from_triples("s", &[Triple::new("other", "p", uri("o"))]),
            Err(CodecError::SubjectMismatch { .. })
        ));
    }

    #[test]
    fn record_uri_reads_first_token() {
        assert_eq!(record_uri("a\\tb\tp\tv").unwrap(), "a\tb");
        assert!(record_uri("").is_err());
    }

    fn token_text() -> impl Strategy<Value = String> {
        prop_oneof![
            "[\\PC\t\n\r\\\\\"]{0,12}",
            "[a-z_]{1,6}-instance",
            Just("\\s".to_string()),
        ]
    }

    fn value() -> impl Strategy<Value = ObjectValue> {
        prop_oneof![
            token_text().prop_map(ObjectValue::Literal),
            token_text()
                .prop_filter("uri values cannot carry edge quotes", |s| !s.starts_with('"') && !s.ends_with('"'))
                .prop_map(ObjectValue::Uri),
        ]
    }

    fn record() -> impl Strategy<Value = EntityRecord> {
        let nonempty = || token_text().prop_filter("non-empty", |s| !s.is_empty());
        (nonempty(), prop::collection::btree_map(nonempty(), prop::collection::vec(value(), 1..4), 1..5))
            .prop_map(|(u, props)| {
                let mut rec = EntityRecord::new(u);
                for (k, vs) in props {
                    let mut seen = HashSet::new();
                    let vs: Vec<_> = vs.into_iter().filter(|v| seen.insert(v.clone())).collect();
                    rec.properties.push((k, vs));
                }
                rec
            })
    }

    proptest! {
        #[test]
        fn escape_round_trip(s in "(?s).{0,40}") {
            let e = escape_token(&s);
            prop_assert!(!e.contains(['\t', '\n', '\r']));
            prop_assert!(sentinel_label(&e).is_none());
            prop_assert_eq!(unescape_token(&e).unwrap(), s);
        }

        #[test]
        fn record_round_trip(r in record()) {
            prop_assert!(r.validate().is_ok());
            let line = serialize_record(&r);
            prop_assert!(!line.contains(['\n', '\r']));
            prop_assert_eq!(line.split('\t').count(), 1 + 2 * r.value_count());
            prop_assert_eq!(parse_record(&line).unwrap(), r);
        }
    }
}
