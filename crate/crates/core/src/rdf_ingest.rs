//! Streaming, fault-tolerant N-Triples ingest.
//!
//! The accepted grammar is the line-oriented subset found in the big public
//! dumps:
//!
//! ```text
//! (<iri> | _:bnode) <iri> (<iri> | _:bnode | "literal"(@lang | ^^<iri>)?) .
//! ```
//!
//! Language tags and datatype IRIs are dropped; only the lexical form of a
//! literal is retained. `\uXXXX` / `\UXXXXXXXX` escapes are decoded in IRIs and
//! literals, and the usual string escapes (`\t`, `\n`, `\"`, ...) in literals.
//! Malformed lines are reported and skipped, never fatal.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use thiserror::Error;

/// The object position of a triple. Only two kinds are distinguished: a
/// reference (IRI or blank node label) and a literal lexical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectValue {
    /// IRI without angle brackets, or a blank node label such as `_:b0`.
    Uri(String),
    /// Literal lexical form without quotes, language tag or datatype.
    Literal(String),
}

impl ObjectValue {
    pub fn lexical(&self) -> &str {
        match self {
            ObjectValue::Uri(s) | ObjectValue::Literal(s) => s,
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, ObjectValue::Literal(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: ObjectValue,
}

impl Triple {
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: ObjectValue) -> Self {
        Triple { subject: subject.into(), predicate: predicate.into(), object }
    }

    /// Renders the triple as one N-Triples line (no terminator).
    ///
    /// Terms beginning with `_:` are written as blank nodes, everything else
    /// as `<iri>`. Literals are written as plain strings.
    pub fn to_ntriples(&self) -> String {
        let mut out = String::with_capacity(self.subject.len() + self.predicate.len() + 16);
        render_reference(&mut out, &self.subject);
        out.push(' ');
        render_iri(&mut out, &self.predicate);
        out.push(' ');
        match &self.object {
            ObjectValue::Uri(u) => render_reference(&mut out, u),
            ObjectValue::Literal(l) => render_literal(&mut out, l),
        }
        out.push_str(" .");
        out
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_ntriples())
    }
}

fn render_reference(out: &mut String, term: &str) {
    if term.starts_with("_:") && is_plain_bnode(term) {
        out.push_str(term);
    } else {
        render_iri(out, term);
    }
}

fn is_plain_bnode(term: &str) -> bool {
    term.len() > 2 && !term.chars().any(|c| c.is_whitespace() || c == '"' || c == '<' || c == '>')
}

fn render_iri(out: &mut String, iri: &str) {
    out.push('<');
    for c in iri.chars() {
        match c {
            '>' | '\\' | '<' | '"' | '{' | '}' | '|' | '^' | '`' => push_uchar(out, c),
            c if (c as u32) <= 0x20 => push_uchar(out, c),
            c => out.push(c),
        }
    }
    out.push('>');
}

fn render_literal(out: &mut String, lex: &str) {
    out.push('"');
    for c in lex.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => push_uchar(out, c),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn push_uchar(out: &mut String, c: char) {
    use std::fmt::Write;
    let cp = c as u32;
    if cp <= 0xFFFF {
        let _ = write!(out, "\\u{cp:04X}");
    } else {
        let _ = write!(out, "\\U{cp:08X}");
    }
}

/// Why a line was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("column {column}: {reason}")]
pub struct ParseError {
    /// 1-based character column where the problem was detected.
    pub column: usize,
    pub reason: String,
}

/// Result of parsing one physical line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineOutcome {
    Triple(Triple),
    /// Blank line or comment.
    Skip,
}

/// Parses one physical N-Triples line (without its terminator).
pub fn parse_ntriples_line(line: &str) -> Result<LineOutcome, ParseError> {
    let mut p = LineParser { chars: line.chars().collect(), pos: 0 };
    p.skip_ws();
    match p.peek() {
        None | Some('#') => return Ok(LineOutcome::Skip),
        _ => {}
    }
    let subject = p.reference_term("subject")?;
    p.require_ws("after subject")?;
    let predicate = match p.peek() {
        Some('<') => p.iri()?,
        _ => return Err(p.err("predicate must be an IRI")),
    };
    p.require_ws("after predicate")?;
    let object = match p.peek() {
        Some('"') => ObjectValue::Literal(p.literal()?),
        Some(_) => ObjectValue::Uri(p.reference_term("object")?),
        None => return Err(p.err("missing object")),
    };
    p.skip_ws();
    match p.bump() {
        Some('.') => {}
        Some(_) => return Err(p.err_at(p.pos - 1, "expected terminal '.'")),
        None => return Err(p.err("missing terminal '.'")),
    }
    p.skip_ws();
    match p.peek() {
        None | Some('#') => {}
        Some(_) => return Err(p.err("trailing characters after '.'")),
    }
    Ok(LineOutcome::Triple(Triple { subject, predicate, object }))
}

struct LineParser {
    chars: Vec<char>,
    pos: usize,
}

impl LineParser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn err(&self, reason: &str) -> ParseError {
        self.err_at(self.pos, reason)
    }

    fn err_at(&self, pos: usize, reason: &str) -> ParseError {
        ParseError { column: pos + 1, reason: reason.to_string() }
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(' ') | Some('\t')) {
            self.pos += 1;
        }
    }

    fn require_ws(&mut self, ctx: &str) -> Result<(), ParseError> {
        if !matches!(self.peek(), Some(' ') | Some('\t')) {
            return Err(self.err(&format!("expected whitespace {ctx}")));
        }
        self.skip_ws();
        Ok(())
    }

    fn reference_term(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some('<') => self.iri(),
            Some('_') => self.bnode(),
            Some(_) => Err(self.err(&format!("{what} must be an IRI or blank node"))),
            None => Err(self.err(&format!("missing {what}"))),
        }
    }

    fn iri(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.err_at(start, "unterminated IRI")),
                Some('>') => break,
                Some('\t') => return Err(self.err_at(self.pos - 1, "raw tab inside IRI")),
                Some('\\') => {
                    let c = match self.bump() {
                        Some('u') => self.hex_escape(4)?,
                        Some('U') => self.hex_escape(8)?,
                        _ => return Err(self.err_at(self.pos - 1, "invalid escape in IRI")),
                    };
                    out.push(c);
                }
                Some(c) => out.push(c),
            }
        }
        check_reference(&out).map_err(|r| self.err_at(start, r))?;
        Ok(out)
    }

    fn bnode(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c == ' ' || c == '\t' {
                break;
            }
            out.push(c);
            self.pos += 1;
        }
        if !out.starts_with("_:") || out.len() == 2 {
            return Err(self.err_at(start, "malformed blank node"));
        }
        // A blank node directly followed by the terminator, as in `_:b1.`
        if out.ends_with('.') && self.peek().is_none() {
            out.pop();
            self.pos -= 1;
            if out.len() == 2 {
                return Err(self.err_at(start, "malformed blank node"));
            }
        }
        if out.contains(['"', '<', '>']) {
            return Err(self.err_at(start, "illegal character in blank node"));
        }
        Ok(out)
    }

    fn literal(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.err_at(start, "unterminated literal")),
                Some('"') => break,
                Some('\t') => return Err(self.err_at(self.pos - 1, "raw tab inside literal")),
                Some('\\') => {
                    let c = match self.bump() {
                        Some('t') => '\t',
                        Some('b') => '\u{8}',
                        Some('n') => '\n',
                        Some('r') => '\r',
                        Some('f') => '\u{c}',
                        Some('"') => '"',
                        Some('\'') => '\'',
                        Some('\\') => '\\',
                        Some('u') => self.hex_escape(4)?,
                        Some('U') => self.hex_escape(8)?,
                        _ => return Err(self.err_at(self.pos - 1, "invalid escape in literal")),
                    };
                    out.push(c);
                }
                Some(c) => out.push(c),
            }
        }
        match self.peek() {
            Some('@') => {
                self.bump();
                let tag_start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '-') {
                    self.pos += 1;
                }
                if self.pos == tag_start {
                    return Err(self.err("empty language tag"));
                }
            }
            Some('^') => {
                self.bump();
                if self.bump() != Some('^') || self.peek() != Some('<') {
                    return Err(self.err("malformed datatype suffix"));
                }
                self.iri()?;
            }
            _ => {}
        }
        Ok(out)
    }

    fn hex_escape(&mut self, digits: usize) -> Result<char, ParseError> {
        let start = self.pos;
        let mut cp: u32 = 0;
        for _ in 0..digits {
            let d = self
                .bump()
                .and_then(|c| c.to_digit(16))
                .ok_or_else(|| self.err_at(start, "bad hex escape"))?;
            cp = cp * 16 + d;
        }
        char::from_u32(cp).ok_or_else(|| self.err_at(start, "escape is not a Unicode scalar value"))
    }
}

// Decoded references must stay representable as single flat-record tokens
// whose kind is unambiguous.
fn check_reference(term: &str) -> Result<(), &'static str> {
    if term.contains(['\t', '\n', '\r']) {
        return Err("IRI decodes to a tab or line break");
    }
    if term.contains('"') {
        return Err("IRI contains a double quote");
    }
    Ok(())
}

/// Counters for one ingest run.
///
/// `lines_total == triples_ok + lines_skipped + blank_or_comment` always holds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub lines_total: u64,
    pub triples_ok: u64,
    pub lines_skipped: u64,
    pub blank_or_comment: u64,
    /// `(1-based line number, reason)` for the first few malformed lines.
    pub first_errors: Vec<(u64, String)>,
    pub error_cap: usize,
}

impl ParseReport {
    pub fn with_error_cap(error_cap: usize) -> Self {
        ParseReport { error_cap, ..Default::default() }
    }

    fn record_error(&mut self, line_no: u64, reason: String) {
        self.lines_skipped += 1;
        if self.first_errors.len() < self.error_cap {
            self.first_errors.push((line_no, reason));
        }
    }

    /// Folds the counters of another (later) input into this one.
    pub fn merge(&mut self, other: &ParseReport) {
        self.lines_total += other.lines_total;
        self.triples_ok += other.triples_ok;
        self.lines_skipped += other.lines_skipped;
        self.blank_or_comment += other.blank_or_comment;
        for e in &other.first_errors {
            if self.first_errors.len() >= self.error_cap {
                break;
            }
            self.first_errors.push(e.clone());
        }
    }
}

pub const DEFAULT_ERROR_CAP: usize = 20;

/// Pull-based triple reader over any buffered byte source. Only one line is
/// held in memory at a time.
pub struct TripleReader<R> {
    source: R,
    buf: Vec<u8>,
    report: ParseReport,
}

impl<R: BufRead> TripleReader<R> {
    pub fn new(source: R) -> Self {
        Self::with_error_cap(source, DEFAULT_ERROR_CAP)
    }

    pub fn with_error_cap(source: R, error_cap: usize) -> Self {
        TripleReader { source, buf: Vec::new(), report: ParseReport::with_error_cap(error_cap) }
    }

    pub fn report(&self) -> &ParseReport {
        &self.report
    }

    pub fn into_report(self) -> ParseReport {
        self.report
    }

    /// Capacity of the internal line buffer; grows only with the longest line.
    pub fn line_buffer_capacity(&self) -> usize {
        self.buf.capacity()
    }
}

impl<R: BufRead> Iterator for TripleReader<R> {
    type Item = io::Result<Triple>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.source.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e)),
            }
            self.report.lines_total += 1;
            let line_no = self.report.lines_total;
            let mut bytes = &self.buf[..];
            if let Some(b) = bytes.strip_suffix(b"\n") {
                bytes = b;
            }
            if let Some(b) = bytes.strip_suffix(b"\r") {
                bytes = b;
            }
            let line = match std::str::from_utf8(bytes) {
                Ok(l) => l,
                Err(_) => {
                    self.report.record_error(line_no, "invalid UTF-8".to_string());
                    continue;
                }
            };
            match parse_ntriples_line(line) {
                Ok(LineOutcome::Triple(t)) => {
                    self.report.triples_ok += 1;
                    return Some(Ok(t));
                }
                Ok(LineOutcome::Skip) => self.report.blank_or_comment += 1,
                Err(e) => self.report.record_error(line_no, e.to_string()),
            }
        }
    }
}

/// Push-style driver: delivers every well-formed triple to `on_triple`, in
/// input order, and returns the counters. Only I/O failures abort.
pub fn stream_triples<R, F>(source: R, mut on_triple: F) -> io::Result<ParseReport>
where
    R: BufRead,
    F: FnMut(Triple),
{
    let mut reader = TripleReader::new(source);
    for t in reader.by_ref() {
        on_triple(t?);
    }
    Ok(reader.into_report())
}

/// Opens a plain or gzip-compressed input. Compression is detected from the
/// magic bytes, not the file name.
pub fn open_input(path: &Path) -> io::Result<Box<dyn BufRead + Send>> {
    let mut file = BufReader::with_capacity(1 << 16, File::open(path)?);
    let head = file.fill_buf()?;
    if head.starts_with(&[0x1f, 0x8b]) {
        Ok(Box::new(BufReader::with_capacity(1 << 16, MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(file))
    }
}

/// Opens `path` and returns a triple reader over it.
pub fn read_triples_file(path: &Path) -> io::Result<TripleReader<Box<dyn BufRead + Send>>> {
    Ok(TripleReader::new(open_input(path)?))
}
