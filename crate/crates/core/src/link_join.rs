//! Self-contained linkage files.
//!
//! A 2-way linkage line has five tab-delimited slots, where each record slot
//! is a complete flat entity record (itself tab-separated):
//!
//! ```text
//! <link id> TAB <labelA>-instance TAB <record A> TAB <labelB>-instance TAB <record B>
//! ```
//!
//! A 3-way line carries a pair of 2-way link ids, `idA,idB`, followed by three
//! `(sentinel, record)` groups in a configured KB order. Sentinels are the only
//! tokens of the shape `<label>-instance` on a line, because the record codec
//! escapes any record token that would look like one, so a line splits into
//! its groups by a single scan for sentinel tokens.
//!
//! Link ids have the form `<prefix>-<n>`: the first letters of the two labels
//! and a 1-based counter assigned in ascending `(left uri, right uri)` order.
//! Output files are ordered by counter.

use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::compile::write_lines_atomically;
use crate::exec::{self, ExecConfig, ExecError, ExternalSorter, KeyedItem, RecordStream};
use crate::flat_record::{
    is_valid_label, parse_record, record_uri, sentinel_for, sentinel_label, serialize_record, CodecError,
    EntityRecord,
};
use crate::lines::{invalid_data, LineReader};
use crate::rdf_ingest::{open_input, parse_ntriples_line, LineOutcome, ObjectValue};

pub const OWL_SAME_AS: &str = "http://www.w3.org/2002/07/owl#sameAs";

#[derive(Debug, Error)]
pub enum JoinError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("invalid join configuration: {0}")]
    Config(String),
}

// ---------------------------------------------------------------------------
// ground truth

/// An ordered `sameAs` pair: `left` is looked up in the left entity file,
/// `right` in the right one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundTruthPair {
    pub left: String,
    pub right: String,
}

impl GroundTruthPair {
    pub fn new(left: impl Into<String>, right: impl Into<String>) -> Self {
        GroundTruthPair { left: left.into(), right: right.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GtFormat {
    /// `left TAB right` per line.
    TsvPairs,
    /// N-Triples whose predicate must equal `predicate`.
    NTriplesSameAs { predicate: String },
}

impl GtFormat {
    pub fn ntriples() -> Self {
        GtFormat::NTriplesSameAs { predicate: OWL_SAME_AS.to_string() }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tsv" | "tsv-pairs" => Some(GtFormat::TsvPairs),
            "ntriples" | "ntriples-sameas" | "nt" => Some(GtFormat::ntriples()),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GtFormat::TsvPairs => "tsv-pairs",
            GtFormat::NTriplesSameAs { .. } => "ntriples-sameas",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GtReport {
    pub lines_total: u64,
    pub pairs_read: u64,
    pub malformed: u64,
    pub first_errors: Vec<(u64, String)>,
}

const GT_ERROR_CAP: usize = 20;

/// Streams the pairs of a ground-truth file. Malformed lines are counted in
/// the report and skipped. Duplicates are *not* removed here.
pub struct GroundTruthReader<R> {
    lines: LineReader<R>,
    format: GtFormat,
    report: GtReport,
}

impl<R: BufRead> GroundTruthReader<R> {
    pub fn new(src: R, format: GtFormat) -> Self {
        GroundTruthReader { lines: LineReader::new(src), format, report: GtReport::default() }
    }

    pub fn report(&self) -> &GtReport {
        &self.report
    }

    fn parse(&self, line: &str) -> Result<Option<GroundTruthPair>, String> {
        match &self.format {
            GtFormat::TsvPairs => {
                if line.trim().is_empty() {
                    return Ok(None);
                }
                let fields: Vec<&str> = line.split('\t').collect();
                match fields[..] {
                    [l, r] if !l.is_empty() && !r.is_empty() => Ok(Some(GroundTruthPair::new(l, r))),
                    [_, _] => Err("empty uri".into()),
                    _ => Err(format!("expected 2 tab-separated fields, found {}", fields.len())),
                }
            }
            GtFormat::NTriplesSameAs { predicate } => match parse_ntriples_line(line) {
                Ok(LineOutcome::Skip) => Ok(None),
                Ok(LineOutcome::Triple(t)) => {
                    if &t.predicate != predicate {
                        return Err(format!("predicate {:?} is not {predicate:?}", t.predicate));
                    }
                    match t.object {
                        ObjectValue::Uri(o) if !t.subject.is_empty() && !o.is_empty() => {
                            Ok(Some(GroundTruthPair::new(t.subject, o)))
                        }
                        _ => Err("sameAs object must be a non-empty URI".into()),
                    }
                }
                Err(e) => Err(e.to_string()),
            },
        }
    }
}

impl GroundTruthReader<Box<dyn BufRead + Send>> {
    pub fn open(path: &Path, format: GtFormat) -> io::Result<Self> {
        Ok(Self::new(open_input(path)?, format))
    }
}

impl<R: BufRead> Iterator for GroundTruthReader<R> {
    type Item = io::Result<GroundTruthPair>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (no, bytes) = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e)),
            };
            self.report.lines_total += 1;
            let mut text = bytes.as_slice();
            if let Some(t) = text.strip_suffix(b"\r") {
                text = t;
            }
            let outcome = match std::str::from_utf8(text) {
                Ok(line) => self.parse(line),
                Err(_) => Err("invalid UTF-8".to_string()),
            };
            match outcome {
                Ok(Some(pair)) => {
                    self.report.pairs_read += 1;
                    return Some(Ok(pair));
                }
                Ok(None) => {}
                Err(msg) => {
                    self.report.malformed += 1;
                    if self.report.first_errors.len() < GT_ERROR_CAP {
                        self.report.first_errors.push((no, msg));
                    }
                }
            }
        }
    }
}

/// Reads a whole ground-truth file, keeping the first occurrence of each pair.
pub fn load_ground_truth(path: &Path, format: GtFormat) -> io::Result<(Vec<GroundTruthPair>, GtReport)> {
    let mut reader = GroundTruthReader::open(path, format)?;
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for pair in reader.by_ref() {
        let pair = pair?;
        if seen.insert(pair.clone()) {
            pairs.push(pair);
        }
    }
    Ok((pairs, reader.report))
}

// ---------------------------------------------------------------------------
// link ids and line structure

pub fn gen_link_id(prefix: &str, n: u64) -> String {
    debug_assert!(n >= 1, "link counters start at 1");
    format!("{prefix}-{n}")
}

/// Splits `fd-12` into `("fd", 12)`.
pub fn split_link_id(id: &str) -> Option<(&str, u64)> {
    let (prefix, n) = id.rsplit_once('-')?;
    if n.is_empty() || !n.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((prefix, n.parse().ok()?))
}

/// Sort key ordering ids by `(prefix, counter)`, so `fd-2 < fd-10`.
fn id_sort_fields(id: &str) -> (Vec<u8>, [u8; 8]) {
    match split_link_id(id) {
        Some((p, n)) => (p.as_bytes().to_vec(), n.to_be_bytes()),
        None => (id.as_bytes().to_vec(), u64::MAX.to_be_bytes()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkFormatError {
    #[error("empty link id slot")]
    MissingId,
    #[error("link id {0:?} has the shape of a sentinel")]
    SentinelId(String),
    #[error("link id contains a line break")]
    LineBreakInId,
    #[error("token after the link id is not a sentinel")]
    MissingSentinel,
    #[error("no record after sentinel {0:?}")]
    EmptyGroup(String),
    #[error("record under {label:?} has an even token count ({tokens})")]
    EvenRecordTokens { label: String, tokens: usize },
    #[error("sentinel for {0:?} appears twice")]
    DuplicateLabel(String),
    #[error("expected {expected} record groups, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("record under {label:?}: {source}")]
    Record { label: String, source: CodecError },
}

/// One `(sentinel, record)` group of a linkage line, borrowed from the line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawGroup<'a> {
    pub label: &'a str,
    /// The serialized record, byte-identical to its entity-file line.
    pub record: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLinkLine<'a> {
    pub id: &'a str,
    pub groups: Vec<RawGroup<'a>>,
}

impl<'a> RawLinkLine<'a> {
    pub fn group(&self, label: &str) -> Option<&RawGroup<'a>> {
        self.groups.iter().find(|g| g.label == label)
    }
}

/// Splits a linkage line into its id and sentinel-delimited record groups
/// without decoding the records.
pub fn split_link_line<'a>(line: &'a str) -> Result<RawLinkLine<'a>, LinkFormatError> {
    let mut tokens = line.split('\t');
    let id = tokens.next().unwrap_or_default();
    if id.is_empty() {
        return Err(LinkFormatError::MissingId);
    }
    if sentinel_label(id).is_some() {
        return Err(LinkFormatError::SentinelId(id.to_string()));
    }
    if id.contains(['\n', '\r']) {
        return Err(LinkFormatError::LineBreakInId);
    }
    let mut groups: Vec<RawGroup<'_>> = Vec::with_capacity(3);
    // (label, byte offset of first record token, token count)
    let mut open: Option<(&str, usize, usize)> = None;
    let mut pos = id.len() + 1;
    let close = |open: Option<(&'a str, usize, usize)>, end: usize, groups: &mut Vec<RawGroup<'a>>| {
        if let Some((label, start, count)) = open {
            if count == 0 {
                return Err(LinkFormatError::EmptyGroup(label.to_string()));
            }
            if count % 2 == 0 {
                return Err(LinkFormatError::EvenRecordTokens { label: label.to_string(), tokens: count });
            }
            if groups.iter().any(|g| g.label == label) {
                return Err(LinkFormatError::DuplicateLabel(label.to_string()));
            }
            groups.push(RawGroup { label, record: &line[start..end] });
        }
        Ok(())
    };
    for tok in tokens {
        let start = pos;
        pos += tok.len() + 1;
        if let Some(label) = sentinel_label(tok) {
            close(open.take(), start.saturating_sub(1), &mut groups)?;
            open = Some((label, pos, 0));
        } else {
            match open.as_mut() {
                Some((_, _, count)) => *count += 1,
                None => return Err(LinkFormatError::MissingSentinel),
            }
        }
    }
    if open.is_none() {
        return Err(LinkFormatError::MissingSentinel);
    }
    close(open.take(), line.len(), &mut groups)?;
    Ok(RawLinkLine { id, groups })
}

/// A fully decoded linkage line of any arity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkLine {
    pub id: String,
    pub groups: Vec<(String, EntityRecord)>,
}

impl LinkLine {
    /// For 3-way lines: the two source link ids.
    pub fn id_pair(&self) -> Option<(&str, &str)> {
        self.id.split_once(',')
    }

    pub fn record(&self, label: &str) -> Option<&EntityRecord> {
        self.groups.iter().find(|(l, _)| l == label).map(|(_, r)| r)
    }

    pub fn to_line(&self) -> String {
        let mut out = self.id.clone();
        for (label, rec) in &self.groups {
            out.push('\t');
            out.push_str(&sentinel_for(label));
            out.push('\t');
            out.push_str(&serialize_record(rec));
        }
        out
    }
}

impl fmt::Display for LinkLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

/// Parses and decodes a linkage line.
pub fn parse_link_line(line: &str) -> Result<LinkLine, LinkFormatError> {
    let raw = split_link_line(line)?;
    let groups = raw
        .groups
        .iter()
        .map(|g| {
            parse_record(g.record)
                .map(|r| (g.label.to_string(), r))
                .map_err(|source| LinkFormatError::Record { label: g.label.to_string(), source })
        })
        .collect::<Result<_, _>>()?;
    Ok(LinkLine { id: raw.id.to_string(), groups })
}

/// Like [`parse_link_line`], additionally checking the number of groups.
pub fn parse_link_line_arity(line: &str, arity: usize) -> Result<LinkLine, LinkFormatError> {
    let l = parse_link_line(line)?;
    if l.groups.len() != arity {
        return Err(LinkFormatError::Arity { expected: arity, found: l.groups.len() });
    }
    Ok(l)
}

// ---------------------------------------------------------------------------
// 2-way join

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Join2Job {
    pub left_entities: PathBuf,
    pub right_entities: PathBuf,
    pub ground_truth: PathBuf,
    pub gt_format: GtFormat,
    pub left_label: String,
    pub right_label: String,
    pub output: PathBuf,
}

impl Join2Job {
    /// `fd` for `(freebase, dbpedia)`.
    pub fn id_prefix(&self) -> String {
        let first = |s: &str| s.chars().next().map(String::from).unwrap_or_default();
        format!("{}{}", first(&self.left_label), first(&self.right_label))
    }

    fn validate(&self) -> Result<(), JoinError> {
        for l in [&self.left_label, &self.right_label] {
            if !is_valid_label(l) {
                return Err(JoinError::Config(format!("label {l:?} must be non-empty lowercase [a-z0-9_]")));
            }
        }
        if self.left_label == self.right_label {
            return Err(JoinError::Config("labels must be distinct".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Join2Report {
    /// Well-formed ground-truth pairs, duplicates included.
    pub pairs_read: u64,
    pub duplicate_pairs: u64,
    pub malformed_gt_lines: u64,
    /// Distinct pairs whose left URI has no record in the left file.
    pub pairs_dropped_left: u64,
    /// Distinct pairs with a left record whose right URI has no record.
    pub pairs_dropped_right: u64,
    pub lines_emitted: u64,
    pub spilled_runs: u64,
    pub gt_first_errors: Vec<(u64, String)>,
}

impl Join2Report {
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("pairs_read", self.pairs_read.to_string()),
            ("duplicate_pairs", self.duplicate_pairs.to_string()),
            ("malformed_gt_lines", self.malformed_gt_lines.to_string()),
            ("pairs_dropped_left", self.pairs_dropped_left.to_string()),
            ("pairs_dropped_right", self.pairs_dropped_right.to_string()),
            ("lines_emitted", self.lines_emitted.to_string()),
            ("spilled_runs", self.spilled_runs.to_string()),
        ]
    }
}

impl fmt::Display for Join2Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "join2: pairs_read={} duplicate_pairs={} malformed_gt_lines={} pairs_dropped_left={} pairs_dropped_right={} lines_emitted={}",
            self.pairs_read,
            self.duplicate_pairs,
            self.malformed_gt_lines,
            self.pairs_dropped_left,
            self.pairs_dropped_right,
            self.lines_emitted
        )
    }
}

/// Entity lines as shuffle records `[uri, line]`.
fn entity_records(path: &Path) -> io::Result<RecordStream<'static>> {
    let name = path.display().to_string();
    let lines = LineReader::open(path)?;
    Ok(Box::new(lines.map(move |r| {
        let (no, line) = r?;
        let text = std::str::from_utf8(&line).map_err(|_| invalid_data(format!("{name}:{no}: invalid UTF-8")))?;
        let uri = record_uri(text).map_err(|e| invalid_data(format!("{name}:{no}: {e}")))?;
        Ok(exec::pack(&[uri.as_bytes(), &line]))
    })))
}

fn key_of(_: u16, rec: &[u8]) -> Result<Vec<u8>, String> {
    exec::first_field(rec).map(<[u8]>::to_vec).map_err(|e| e.to_string())
}

fn take_single(
    values: &mut exec::GroupValues<'_>,
    key: &[u8],
    which: &str,
) -> Result<Option<Vec<u8>>, exec::ReduceError> {
    let first = values.next_if_tag(0);
    if values.next_if_tag(0).is_some() {
        return Err(format!("duplicate subject {:?} in {which} entity file", String::from_utf8_lossy(key)).into());
    }
    Ok(first)
}

fn field<'a>(fields: &[&'a [u8]], i: usize) -> Result<&'a [u8], exec::ReduceError> {
    fields.get(i).copied().ok_or_else(|| "truncated shuffle record".into())
}

/// Joins two entity files with a ground truth into a 2-way linkage file.
pub fn join2(job: &Join2Job, cfg: &ExecConfig) -> Result<Join2Report, JoinError> {
    job.validate()?;
    cfg.validate()?;

    // Stage 1: group left records with the pairs of the same left URI.
    let gt_reader = RefCell::new(GroundTruthReader::open(&job.ground_truth, job.gt_format.clone())?);
    let gt_stream: RecordStream<'_> = Box::new(std::iter::from_fn(|| {
        let next = gt_reader.borrow_mut().next();
        next.map(|p| p.map(|p| exec::pack(&[p.left.as_bytes(), p.right.as_bytes()])))
    }));
    let duplicates = AtomicU64::new(0);
    let dropped_left = AtomicU64::new(0);
    let stage1 = exec::run_group_by(
        vec![(0, entity_records(&job.left_entities)?), (1, gt_stream)],
        key_of,
        |key, values, out| {
            let left_line = take_single(values, key, "left")?;
            let mut prev: Option<Vec<u8>> = None;
            for (_, v) in values {
                if prev.as_deref() == Some(&v[..]) {
                    duplicates.fetch_add(1, Ordering::Relaxed);
                    continue;
                }
                match &left_line {
                    Some(line) => {
                        let f = exec::unpack(&v)?;
                        let l = exec::unpack(line)?;
                        out.emit(&exec::pack(&[field(&f, 1)?, key, field(&l, 1)?]))?;
                    }
                    None => {
                        dropped_left.fetch_add(1, Ordering::Relaxed);
                    }
                }
                prev = Some(v);
            }
            Ok(())
        },
        cfg,
    )?;
    let gt_report = gt_reader.into_inner().report;
    let mut spilled = stage1.stats().spilled_runs;

    // Stage 2: attach the right record, keyed by right URI.
    let dropped_right = AtomicU64::new(0);
    let stage2 = exec::run_group_by(
        vec![(0, entity_records(&job.right_entities)?), (1, Box::new(stage1.records()))],
        key_of,
        |key, values, out| {
            let right_line = take_single(values, key, "right")?;
            let right_line = right_line.as_deref().map(exec::unpack).transpose()?;
            for (_, v) in values {
                match &right_line {
                    Some(r) => {
                        let f = exec::unpack(&v)?;
                        let left_uri = field(&f, 1)?;
                        let sort_key = exec::order_key(&[left_uri, key]);
                        out.emit(&exec::pack(&[&sort_key, field(&f, 2)?, field(r, 1)?]))?;
                    }
                    None => {
                        dropped_right.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
            Ok(())
        },
        cfg,
    )?;
    spilled += stage2.stats().spilled_runs;

    // Stage 3: order by (left uri, right uri) and number the links.
    let mut sorter = ExternalSorter::new(cfg.memory_budget_bytes, &cfg.spill_dir)?;
    for rec in stage2.records() {
        let rec = rec?;
        let f = exec::unpack(&rec)?;
        let [key, left, right] = f[..] else {
            return Err(invalid_data("truncated shuffle record".into()).into());
        };
        sorter.push(KeyedItem::new(key, 0, exec::pack(&[left, right])))?;
    }
    let sorted = sorter.finish()?;
    spilled += sorted.stats().spilled_runs;

    let prefix = job.id_prefix();
    let (left_sentinel, right_sentinel) = (sentinel_for(&job.left_label), sentinel_for(&job.right_label));
    let mut n = 0u64;
    let lines = sorted.map(|item| {
        let item = item?;
        let f = exec::unpack(&item.value)?;
        n += 1;
        let id = gen_link_id(&prefix, n);
        let mut line = Vec::with_capacity(item.value.len() + id.len() + 48);
        for part in [id.as_bytes(), left_sentinel.as_bytes(), f[0], right_sentinel.as_bytes(), f[1]] {
            if !line.is_empty() {
                line.push(b'\t');
            }
            line.extend_from_slice(part);
        }
        Ok(line)
    });
    let lines_emitted = write_lines_atomically(&job.output, lines)?;

    Ok(Join2Report {
        pairs_read: gt_report.pairs_read,
        duplicate_pairs: duplicates.into_inner(),
        malformed_gt_lines: gt_report.malformed,
        pairs_dropped_left: dropped_left.into_inner(),
        pairs_dropped_right: dropped_right.into_inner(),
        lines_emitted,
        spilled_runs: spilled,
        gt_first_errors: gt_report.first_errors,
    })
}

// ---------------------------------------------------------------------------
// 3-way join

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Join3Job {
    /// 2-way file whose shared record is copied into the output (ids become `idA`).
    pub left_links: PathBuf,
    /// 2-way file supplying `idB` and its non-shared record.
    pub right_links: PathBuf,
    /// Label of the KB present in both inputs.
    pub shared_label: String,
    /// Output slot order; defaults to `[shared, left other, right other]`.
    pub order: Option<Vec<String>>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Join3Report {
    pub left_lines: u64,
    pub right_lines: u64,
    /// Shared URIs present in both inputs.
    pub shared_uris_matched: u64,
    pub left_lines_unmatched: u64,
    pub right_lines_unmatched: u64,
    pub lines_emitted: u64,
    pub spilled_runs: u64,
    pub order: Vec<String>,
}

impl Join3Report {
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("left_lines", self.left_lines.to_string()),
            ("right_lines", self.right_lines.to_string()),
            ("shared_uris_matched", self.shared_uris_matched.to_string()),
            ("left_lines_unmatched", self.left_lines_unmatched.to_string()),
            ("right_lines_unmatched", self.right_lines_unmatched.to_string()),
            ("lines_emitted", self.lines_emitted.to_string()),
            ("spilled_runs", self.spilled_runs.to_string()),
            ("order", self.order.join(",")),
        ]
    }
}

impl fmt::Display for Join3Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "join3: left_lines={} right_lines={} shared_uris_matched={} lines_emitted={} order={}",
            self.left_lines,
            self.right_lines,
            self.shared_uris_matched,
            self.lines_emitted,
            self.order.join(",")
        )
    }
}

/// 2-way lines as shuffle records `[shared uri, id, shared record, other record]`.
/// The non-shared label must be the same on every line and is reported
/// through `other_label`.
fn link_records<'a>(
    path: &Path,
    shared: &'a str,
    other_label: &'a RefCell<Option<String>>,
    count: &'a Cell<u64>,
) -> io::Result<RecordStream<'a>> {
    let name = path.display().to_string();
    let lines = LineReader::open(path)?;
    Ok(Box::new(lines.map(move |r| {
        let (no, line) = r?;
        let bad = |msg: String| invalid_data(format!("{name}:{no}: {msg}"));
        let text = std::str::from_utf8(&line).map_err(|_| bad("invalid UTF-8".into()))?;
        let raw = split_link_line(text).map_err(|e| bad(e.to_string()))?;
        if raw.groups.len() != 2 {
            return Err(bad(format!("expected a 2-way line, found {} groups", raw.groups.len())));
        }
        let shared_group = raw.group(shared).ok_or_else(|| bad(format!("no {shared:?} record on line")))?;
        let other = raw.groups.iter().find(|g| g.label != shared).unwrap();
        let mut known = other_label.borrow_mut();
        match known.as_deref() {
            None => *known = Some(other.label.to_string()),
            Some(l) if l == other.label => {}
            Some(l) => return Err(bad(format!("mixed labels {l:?} and {:?} in one 2-way file", other.label))),
        }
        let uri = record_uri(shared_group.record).map_err(|e| bad(e.to_string()))?;
        count.set(count.get() + 1);
        Ok(exec::pack(&[uri.as_bytes(), raw.id.as_bytes(), shared_group.record.as_bytes(), other.record.as_bytes()]))
    })))
}

/// Joins two 2-way linkage files on their shared KB into a 3-way file.
///
/// Every left line mentioning shared URI `u` pairs with every right line
/// mentioning `u`, so the output has `Σ_u m_u · n_u` lines.
pub fn join3(job: &Join3Job, cfg: &ExecConfig) -> Result<Join3Report, JoinError> {
    cfg.validate()?;
    let shared = job.shared_label.as_str();
    if !is_valid_label(shared) {
        return Err(JoinError::Config(format!("shared label {shared:?} must be non-empty lowercase [a-z0-9_]")));
    }
    let (left_other, right_other) = (RefCell::new(None), RefCell::new(None));
    let (left_count, right_count) = (Cell::new(0u64), Cell::new(0u64));
    let matched = AtomicU64::new(0);
    let (left_unmatched, right_unmatched) = (AtomicU64::new(0), AtomicU64::new(0));

    let left = link_records(&job.left_links, shared, &left_other, &left_count)?;
    let right = link_records(&job.right_links, shared, &right_other, &right_count)?;

    // The slot layout is only known once both inputs have been read, so the
    // reduce phase emits `[sort key, idA, idB, shared rec, left rec, right rec]`
    // and the lines are assembled afterwards.
    let stage1 = exec::run_group_by(
        vec![(0, left), (1, right)],
        key_of,
        |key, values, out| {
            let mut lefts = Vec::new();
            while let Some(v) = values.next_if_tag(0) {
                lefts.push(v);
            }
            let lefts: Vec<Vec<&[u8]>> = lefts.iter().map(|v| exec::unpack(v)).collect::<io::Result<_>>()?;
            let mut rights = 0u64;
            for (_, v) in values {
                rights += 1;
                let r = exec::unpack(&v)?;
                let right_id = std::str::from_utf8(field(&r, 1)?)?;
                let (rp, rn) = id_sort_fields(right_id);
                for l in &lefts {
                    let left_id = std::str::from_utf8(field(l, 1)?)?;
                    let (lp, ln) = id_sort_fields(left_id);
                    let sort_key = exec::order_key(&[&lp, &ln, &rp, &rn]);
                    out.emit(&exec::pack(&[
                        &sort_key,
                        left_id.as_bytes(),
                        right_id.as_bytes(),
                        field(l, 2)?,
                        field(l, 3)?,
                        field(&r, 3)?,
                    ]))?;
                }
            }
            let _ = key;
            match (lefts.is_empty(), rights == 0) {
                (false, false) => {
                    matched.fetch_add(1, Ordering::Relaxed);
                }
                (false, true) => {
                    left_unmatched.fetch_add(lefts.len() as u64, Ordering::Relaxed);
                }
                (true, false) => {
                    right_unmatched.fetch_add(rights, Ordering::Relaxed);
                }
                (true, true) => {}
            }
            Ok(())
        },
        cfg,
    )?;
    let mut spilled = stage1.stats().spilled_runs;

    let left_other = left_other.into_inner();
    let right_other = right_other.into_inner();
    let order = resolve_order(shared, left_other.as_deref(), right_other.as_deref(), job.order.as_deref())?;
    // Position of (shared, left other, right other) in the output.
    let slot = |label: Option<&str>| label.and_then(|l| order.iter().position(|o| o == l));
    let positions = [slot(Some(shared)), slot(left_other.as_deref()), slot(right_other.as_deref())];
    let sentinels: Vec<String> = order.iter().map(|l| sentinel_for(l)).collect();

    let mut sorter = ExternalSorter::new(cfg.memory_budget_bytes, &cfg.spill_dir)?;
    for rec in stage1.records() {
        let rec = rec?;
        let f = exec::unpack(&rec)?;
        let [key, left_id, right_id, shared_rec, left_rec, right_rec] = f[..] else {
            return Err(invalid_data("truncated shuffle record".into()).into());
        };
        let mut slots: [&[u8]; 3] = [&[], &[], &[]];
        for (pos, rec) in positions.iter().zip([shared_rec, left_rec, right_rec]) {
            slots[pos.expect("labels resolved when any line exists")] = rec;
        }
        let mut line = Vec::with_capacity(rec.len() + 64);
        line.extend_from_slice(left_id);
        line.push(b',');
        line.extend_from_slice(right_id);
        for (sentinel, rec) in sentinels.iter().zip(slots) {
            line.push(b'\t');
            line.extend_from_slice(sentinel.as_bytes());
            line.push(b'\t');
            line.extend_from_slice(rec);
        }
        sorter.push(KeyedItem::new(key, 0, line))?;
    }
    let sorted = sorter.finish()?;
    spilled += sorted.stats().spilled_runs;
    let lines_emitted = write_lines_atomically(&job.output, sorted.map(|i| i.map(|i| i.value)))?;

    Ok(Join3Report {
        left_lines: left_count.get(),
        right_lines: right_count.get(),
        shared_uris_matched: matched.into_inner(),
        left_lines_unmatched: left_unmatched.into_inner(),
        right_lines_unmatched: right_unmatched.into_inner(),
        lines_emitted,
        spilled_runs: spilled,
        order,
    })
}

fn resolve_order(
    shared: &str,
    left_other: Option<&str>,
    right_other: Option<&str>,
    requested: Option<&[String]>,
) -> Result<Vec<String>, JoinError> {
    if let (Some(l), Some(r)) = (left_other, right_other) {
        if l == r {
            return Err(JoinError::Config(format!("both 2-way files link {shared:?} to {l:?}; nothing to join")));
        }
    }
    let present: Vec<&str> = [Some(shared), left_other, right_other].into_iter().flatten().collect();
    match requested {
        None => Ok(present.iter().map(|s| s.to_string()).collect()),
        Some(order) => {
            let distinct: HashSet<&str> = order.iter().map(String::as_str).collect();
            if order.len() != 3 || distinct.len() != 3 || order.iter().any(|l| !is_valid_label(l)) {
                return Err(JoinError::Config(format!("order must list three distinct labels, got {order:?}")));
            }
            if let Some(missing) = present.iter().find(|l| !distinct.contains(**l)) {
                return Err(JoinError::Config(format!("order {order:?} does not mention {missing:?}")));
            }
            Ok(order.to_vec())
        }
    }
}
