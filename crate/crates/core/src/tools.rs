//! Single-pass utilities over entity and linkage files: seeded sampling,
//! `rdf:type` filtering, statistics and validation.
//!
//! All of them read one line at a time and never consult another line, which
//! is exactly what the flat formats are for.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::flat_record::{parse_record, sentinel_label, parse_value_token, CodecError, EntityRecord};
use crate::link_join::{parse_link_line, split_link_line, LinkFormatError};
use crate::lines::LineReader;

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

/// Which layout a file is expected to have.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileMode {
    Entity,
    Link2,
    Link3,
}

impl FileMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "entity" => Some(FileMode::Entity),
            "link2" => Some(FileMode::Link2),
            "link3" => Some(FileMode::Link3),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FileMode::Entity => "entity",
            FileMode::Link2 => "link2",
            FileMode::Link3 => "link3",
        }
    }

    /// Number of records per line.
    pub fn arity(self) -> usize {
        match self {
            FileMode::Entity => 1,
            FileMode::Link2 => 2,
            FileMode::Link3 => 3,
        }
    }
}

/// A parsed line of any mode: `(label, record)` groups, with an empty label
/// for entity lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedLine {
    pub id: Option<String>,
    pub records: Vec<(String, EntityRecord)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineError {
    InvalidUtf8,
    RawCarriageReturn,
    Record(CodecError),
    Link(LinkFormatError),
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LineError::InvalidUtf8 => f.write_str("invalid UTF-8"),
            LineError::RawCarriageReturn => f.write_str("raw carriage return"),
            LineError::Record(e) => write!(f, "{e}"),
            LineError::Link(e) => write!(f, "{e}"),
        }
    }
}

/// Fully parses one line under `mode`.
pub fn parse_line(bytes: &[u8], mode: FileMode) -> Result<ParsedLine, LineError> {
    let line = std::str::from_utf8(bytes).map_err(|_| LineError::InvalidUtf8)?;
    if line.contains('\r') {
        return Err(LineError::RawCarriageReturn);
    }
    match mode {
        FileMode::Entity => {
            let rec = parse_record(line).map_err(LineError::Record)?;
            Ok(ParsedLine { id: None, records: vec![(String::new(), rec)] })
        }
        FileMode::Link2 | FileMode::Link3 => {
            let l = parse_link_line(line).map_err(LineError::Link)?;
            if l.groups.len() != mode.arity() {
                return Err(LineError::Link(LinkFormatError::Arity { expected: mode.arity(), found: l.groups.len() }));
            }
            Ok(ParsedLine { id: Some(l.id), records: l.groups })
        }
    }
}

// ---------------------------------------------------------------------------
// sampling

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSpec {
    pub n: usize,
    pub seed: u64,
}

/// Picks `min(n, total)` line positions out of a stream with Algorithm R.
///
/// The generator is ChaCha8 seeded with `seed_from_u64(seed)`. The first `n`
/// lines fill the reservoir; line `i` (0-based, `i >= n`) draws
/// `j = gen_range(0..=i)` and replaces slot `j` when `j < n`. The returned
/// positions are sorted.
pub struct Reservoir {
    n: usize,
    seen: u64,
    rng: ChaCha8Rng,
    slots: Vec<(u64, Vec<u8>)>,
}

impl Reservoir {
    pub fn new(spec: SampleSpec) -> Self {
        Reservoir { n: spec.n, seen: 0, rng: ChaCha8Rng::seed_from_u64(spec.seed), slots: Vec::with_capacity(spec.n.min(1 << 20)) }
    }

    pub fn offer(&mut self, line: Vec<u8>) {
        let i = self.seen;
        self.seen += 1;
        if self.slots.len() < self.n {
            self.slots.push((i, line));
        } else if self.n > 0 {
            let j = self.rng.gen_range(0..=i);
            if j < self.n as u64 {
                self.slots[j as usize] = (i, line);
            }
        }
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// `(0-based position, line)` in input order.
    pub fn into_sorted(mut self) -> Vec<(u64, Vec<u8>)> {
        self.slots.sort_unstable_by_key(|(i, _)| *i);
        self.slots
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampleReport {
    pub lines_read: u64,
    pub lines_written: u64,
}

pub fn sample_lines(input: &Path, spec: SampleSpec, output: &Path) -> io::Result<SampleReport> {
    let mut reservoir = Reservoir::new(spec);
    for line in LineReader::open(input)? {
        reservoir.offer(line?.1);
    }
    let lines_read = reservoir.seen();
    let mut w = BufWriter::new(File::create(output)?);
    let mut written = 0;
    for (_, line) in reservoir.into_sorted() {
        w.write_all(&line)?;
        w.write_all(b"\n")?;
        written += 1;
    }
    w.flush()?;
    Ok(SampleReport { lines_read, lines_written: written })
}

// ---------------------------------------------------------------------------
// type filtering

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
    Third,
    Any,
    All,
}

impl Side {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "first" => Some(Side::First),
            "second" => Some(Side::Second),
            "third" => Some(Side::Third),
            "any" => Some(Side::Any),
            "all" => Some(Side::All),
            _ => None,
        }
    }

    fn index(self) -> Option<usize> {
        match self {
            Side::First => Some(0),
            Side::Second => Some(1),
            Side::Third => Some(2),
            Side::Any | Side::All => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeFilterSpec {
    pub type_uri: String,
    pub side: Side,
    pub type_predicate: String,
}

impl TypeFilterSpec {
    pub fn new(type_uri: impl Into<String>, side: Side) -> Self {
        TypeFilterSpec { type_uri: type_uri.into(), side, type_predicate: RDF_TYPE.to_string() }
    }

    pub fn check_mode(&self, mode: FileMode) -> Result<(), String> {
        match self.side.index() {
            Some(i) if i >= mode.arity() => {
                Err(format!("side {:?} does not exist in {} files", self.side, mode.name()))
            }
            _ => Ok(()),
        }
    }

    /// Decides a fully parsed line.
    pub fn matches(&self, records: &[&EntityRecord]) -> bool {
        let has = |r: &EntityRecord| {
            r.values(&self.type_predicate)
                .is_some_and(|vs| vs.iter().any(|v| !v.is_literal() && v.lexical() == self.type_uri))
        };
        match self.side.index() {
            Some(i) => records.get(i).is_some_and(|r| has(r)),
            None if self.side == Side::Any => records.iter().any(|r| has(r)),
            None => !records.is_empty() && records.iter().all(|r| has(r)),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub lines_read: u64,
    pub lines_written: u64,
    pub lines_unparseable: u64,
    pub first_errors: Vec<(u64, String)>,
}

impl FilterReport {
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lines_read", self.lines_read.to_string()),
            ("lines_written", self.lines_written.to_string()),
            ("lines_unparseable", self.lines_unparseable.to_string()),
        ]
    }
}

const REPORT_ERROR_CAP: usize = 20;

/// Copies the lines that pass `spec` byte-for-byte.
pub fn filter_by_type(input: &Path, mode: FileMode, spec: &TypeFilterSpec, output: &Path) -> io::Result<FilterReport> {
    spec.check_mode(mode).map_err(|m| io::Error::new(io::ErrorKind::InvalidInput, m))?;
    let mut report = FilterReport::default();
    let mut w = BufWriter::new(File::create(output)?);
    for line in LineReader::open(input)? {
        let (no, bytes) = line?;
        report.lines_read += 1;
        match parse_line(&bytes, mode) {
            Ok(parsed) => {
                let records: Vec<&EntityRecord> = parsed.records.iter().map(|(_, r)| r).collect();
                if spec.matches(&records) {
                    w.write_all(&bytes)?;
                    w.write_all(b"\n")?;
                    report.lines_written += 1;
                }
            }
            Err(e) => {
                report.lines_unparseable += 1;
                if report.first_errors.len() < REPORT_ERROR_CAP {
                    report.first_errors.push((no, e.to_string()));
                }
            }
        }
    }
    w.flush()?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// statistics

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotStats {
    pub label: String,
    pub records: u64,
    pub distinct_entities: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatsReport {
    pub lines: u64,
    pub bytes: u64,
    pub unparseable: u64,
    pub slots: Vec<SlotStats>,
    /// `(type uri, count)` by descending count, then uri; at most `k` entries.
    pub top_types: Vec<(String, u64)>,
}

impl StatsReport {
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("lines".to_string(), self.lines.to_string()),
            ("bytes".to_string(), self.bytes.to_string()),
            ("unparseable".to_string(), self.unparseable.to_string()),
        ];
        for (i, s) in self.slots.iter().enumerate() {
            kv.push((format!("slot.{i}.label"), s.label.clone()));
            kv.push((format!("slot.{i}.records"), s.records.to_string()));
            kv.push((format!("slot.{i}.distinct_entities"), s.distinct_entities.to_string()));
        }
        for (i, (t, c)) in self.top_types.iter().enumerate() {
            kv.push((format!("type.{i}"), format!("{c} {t}")));
        }
        kv
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lines: {}", self.lines)?;
        writeln!(f, "bytes: {}", self.bytes)?;
        writeln!(f, "unparseable: {}", self.unparseable)?;
        for (i, s) in self.slots.iter().enumerate() {
            let label = if s.label.is_empty() { "entity" } else { &s.label };
            writeln!(f, "slot {i} ({label}): {} records, {} distinct entities", s.records, s.distinct_entities)?;
        }
        if !self.top_types.is_empty() {
            writeln!(f, "top types:")?;
            for (t, c) in &self.top_types {
                writeln!(f, "  {c:>10}  {t}")?;
            }
        }
        Ok(())
    }
}

/// Counts lines, bytes, per-slot entities and the `k` most frequent values of
/// `type_predicate` across all records.
///
/// Distinct-entity counting keeps one set of URIs per slot in memory.
pub fn stats(input: &Path, mode: FileMode, k: usize, type_predicate: &str) -> io::Result<StatsReport> {
    let mut report = StatsReport::default();
    let mut seen: Vec<HashSet<String>> = Vec::new();
    let mut types: HashMap<String, u64> = HashMap::new();
    let mut lines = LineReader::open(input)?;
    for line in lines.by_ref() {
        let (_, bytes) = line?;
        report.lines += 1;
        let parsed = match parse_line(&bytes, mode) {
            Ok(p) => p,
            Err(_) => {
                report.unparseable += 1;
                continue;
            }
        };
        for (i, (label, rec)) in parsed.records.iter().enumerate() {
            if report.slots.len() <= i {
                report.slots.push(SlotStats { label: label.clone(), ..Default::default() });
                seen.push(HashSet::new());
            }
            report.slots[i].records += 1;
            if !seen[i].contains(&rec.uri) {
                seen[i].insert(rec.uri.clone());
            }
            for v in rec.values(type_predicate).unwrap_or_default() {
                *types.entry(v.lexical().to_string()).or_default() += 1;
            }
        }
    }
    report.bytes = lines.bytes_read();
    for (slot, set) in report.slots.iter_mut().zip(&seen) {
        slot.distinct_entities = set.len() as u64;
    }
    let mut top: Vec<(String, u64)> = types.into_iter().collect();
    top.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    top.truncate(k);
    report.top_types = top;
    Ok(report)
}

// ---------------------------------------------------------------------------
// validation

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub lines: u64,
    pub ok_lines: u64,
    pub violation_count: u64,
    /// The first violations, capped.
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violation_count == 0
    }

    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lines", self.lines.to_string()),
            ("ok_lines", self.ok_lines.to_string()),
            ("violations", self.violation_count.to_string()),
        ]
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lines: {}  ok: {}  violations: {}", self.lines, self.ok_lines, self.violation_count)?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        if self.violation_count > self.violations.len() as u64 {
            writeln!(f, "  ... {} more", self.violation_count - self.violations.len() as u64)?;
        }
        Ok(())
    }
}

pub const DEFAULT_VIOLATION_CAP: usize = 100;

/// Checks a single line in isolation, returning the first problem found.
///
/// Beyond a successful parse this looks at the raw token stream: control
/// bytes, literal quote balance on value tokens and sentinel placement.
pub fn check_line(bytes: &[u8], mode: FileMode) -> Result<ParsedLine, String> {
    if let Some(b) = bytes.iter().find(|&&b| b < 0x20 && b != b'\t') {
        return Err(format!("raw control byte 0x{b:02x}"));
    }
    let text = std::str::from_utf8(bytes).map_err(|_| "invalid UTF-8".to_string())?;
    let record_texts: Vec<&str> = match mode {
        FileMode::Entity => {
            if text.split('\t').any(|t| sentinel_label(t).is_some()) {
                return Err("sentinel token inside an entity line".into());
            }
            vec![text]
        }
        FileMode::Link2 | FileMode::Link3 => {
            let raw = split_link_line(text).map_err(|e| e.to_string())?;
            if raw.groups.len() != mode.arity() {
                return Err(format!("expected {} record groups, found {}", mode.arity(), raw.groups.len()));
            }
            if mode == FileMode::Link3 {
                let ok = raw.id.split_once(',').is_some_and(|(a, b)| !a.is_empty() && !b.is_empty() && !b.contains(','));
                if !ok {
                    return Err(format!("3-way id {:?} is not an `idA,idB` pair", raw.id));
                }
            }
            raw.groups.iter().map(|g| g.record).collect()
        }
    };
    for rec in &record_texts {
        let tokens: Vec<&str> = rec.split('\t').collect();
        if tokens.len().is_multiple_of(2) {
            return Err(format!("record has an even token count ({})", tokens.len()));
        }
        for (i, tok) in tokens.iter().enumerate().skip(2).step_by(2) {
            parse_value_token(tok).map_err(|e| format!("token {i}: {e}"))?;
        }
    }
    parse_line(bytes, mode).map_err(|e| e.to_string())
}

/// Validates every line of a file. Link ids must be unique across the file.
pub fn validate(input: &Path, mode: FileMode, cap: usize) -> io::Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let mut ids: HashSet<String> = HashSet::new();
    let mut subjects: HashSet<String> = HashSet::new();
    for line in LineReader::open(input)? {
        let (no, bytes) = line?;
        report.lines += 1;
        let finding = match check_line(&bytes, mode) {
            Err(msg) => Some(msg),
            Ok(parsed) => match (&parsed.id, mode) {
                (Some(id), _) if !ids.insert(id.clone()) => Some(format!("duplicate link id {id:?}")),
                (None, FileMode::Entity) => {
                    let uri = &parsed.records[0].1.uri;
                    (!subjects.insert(uri.clone())).then(|| format!("subject {uri:?} appears on two lines"))
                }
                _ => None,
            },
        };
        match finding {
            None => report.ok_lines += 1,
            Some(message) => {
                report.violation_count += 1;
                if report.violations.len() < cap {
                    report.violations.push(Violation { line: no, message });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdf_ingest::ObjectValue;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn reservoir_edge_cases() {
        let d = tempfile::tempdir().unwrap();
        let body: String = (0..10).map(|i| format!("line{i}\n")).collect();
        let input = write(d.path(), "in", &body);
        let out = d.path().join("out");
        let r = sample_lines(&input, SampleSpec { n: 0, seed: 1 }, &out).unwrap();
        assert_eq!((r.lines_read, r.lines_written), (10, 0));
        assert_eq!(std::fs::read_to_string(&out).unwrap(), "");
        sample_lines(&input, SampleSpec { n: 100, seed: 1 }, &out).unwrap();
        assert_eq!(std::fs::read_to_string(&out).unwrap(), body);
        sample_lines(&input, SampleSpec { n: 3, seed: 42 }, &out).unwrap();
        let first = std::fs::read(&out).unwrap();
        sample_lines(&input, SampleSpec { n: 3, seed: 42 }, &out).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), first);
        assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 3);
    }

    fn typed(uri: &str, ty: &str) -> EntityRecord {
        EntityRecord::new(uri).with(RDF_TYPE, ObjectValue::Uri(ty.into()))
    }

    #[test]
    fn filter_sides() {
        let a = typed("a", "FootballPlayer");
        let b = typed("b", "Person");
        let fp = |side| TypeFilterSpec::new("FootballPlayer", side);
        assert!(fp(Side::First).matches(&[&a]));
        assert!(fp(Side::First).matches(&[&a, &b]));
        assert!(!fp(Side::Second).matches(&[&a, &b]));
        assert!(fp(Side::Any).matches(&[&a, &b]));
        assert!(!fp(Side::All).matches(&[&a, &b]));
        assert!(fp(Side::All).matches(&[&a, &a]));
        let literal = EntityRecord::new("c").with(RDF_TYPE, ObjectValue::Literal("FootballPlayer".into()));
        assert!(!fp(Side::First).matches(&[&literal]));
        assert!(fp(Side::Third).check_mode(FileMode::Link2).is_err());
        assert!(fp(Side::Third).check_mode(FileMode::Link3).is_ok());
    }

    #[test]
    fn filter_copies_bytes() {
        let d = tempfile::tempdir().unwrap();
        let line = format!("a\t{RDF_TYPE}\tFootballPlayer\tname\t\"\"A\\tB\"\"");
        let input = write(d.path(), "in", &format!("{line}\nb\t{RDF_TYPE}\tPerson\nbroken\tline\n"));
        let out = d.path().join("out");
        let r = filter_by_type(&input, FileMode::Entity, &TypeFilterSpec::new("FootballPlayer", Side::First), &out)
            .unwrap();
        assert_eq!((r.lines_read, r.lines_written, r.lines_unparseable), (3, 1, 1));
        assert_eq!(std::fs::read_to_string(&out).unwrap(), format!("{line}\n"));
    }

    #[test]
    fn stats_counts() {
        let d = tempfile::tempdir().unwrap();
        let empty = write(d.path(), "empty", "");
        let r = stats(&empty, FileMode::Entity, 5, RDF_TYPE).unwrap();
        assert_eq!((r.lines, r.bytes), (0, 0));
        let body = format!("a\t{RDF_TYPE}\tT\nb\t{RDF_TYPE}\tT\t{RDF_TYPE}\tU\nc\tp\tv");
        let f = write(d.path(), "three", &body);
        let r = stats(&f, FileMode::Entity, 5, RDF_TYPE).unwrap();
        assert_eq!((r.lines, r.bytes, r.unparseable), (3, body.len() as u64, 0));
        assert_eq!(r.top_types, [("T".to_string(), 2), ("U".to_string(), 1)]);
        assert_eq!(r.slots[0].distinct_entities, 3);
    }

    #[test]
    fn validate_findings() {
        let d = tempfile::tempdir().unwrap();
        let good = write(d.path(), "good", "a\tp\tv\nb\tq\t\"\"lit\"\"\nc\tq\t\"\"\\sdbpedia-instance\"\"\tr\t\\syago-instance\n");
        assert!(validate(&good, FileMode::Entity, 10).unwrap().is_clean());

        let bad = write(d.path(), "bad", "a\tp\tv\nb\tq\nc\tq\t\"\"x\"\na\tp\tw\nd\tfreebase-instance\tv\n");
        let r = validate(&bad, FileMode::Entity, 10).unwrap();
        assert_eq!(r.violation_count, 4);
        let lines: Vec<u64> = r.violations.iter().map(|v| v.line).collect();
        assert_eq!(lines, [2, 3, 4, 5]);
        assert!(r.violations[0].message.contains("even token count"));

        let links = write(
            d.path(),
            "links",
            "fd-1\tfreebase-instance\tf\tp\tv\tdbpedia-instance\td\tp\tv\nfd-1\tfreebase-instance\tf\tp\tv\tdbpedia-instance\td\tp\tv\n",
        );
        let r = validate(&links, FileMode::Link2, 10).unwrap();
        assert_eq!(r.violation_count, 1);
        assert!(r.violations[0].message.contains("duplicate link id"));
        assert_eq!(validate(&links, FileMode::Link3, 10).unwrap().violation_count, 2);
    }
}
