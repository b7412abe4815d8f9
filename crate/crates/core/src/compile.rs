//! The wrapper stage: all raw triple files of one knowledge base become one
//! entity file with exactly one flat record per distinct subject, sorted by
//! subject URI.
//!
//! A URI is an entity iff it is the subject of at least one triple; URIs that
//! only occur as objects get no line.

use std::cell::RefCell;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::exec::{self, ExecConfig, ExecError, RecordStream};
use crate::flat_record::{is_valid_label, write_record, RecordBuilder};
use crate::rdf_ingest::{open_input, ObjectValue, ParseReport, TripleReader, DEFAULT_ERROR_CAP};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("invalid kb spec: {0}")]
    InvalidSpec(String),
    #[error("knowledge base {0:?} has no parseable triples")]
    EmptyKb(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbSpec {
    /// Short lowercase name such as `dbpedia`; also the linkage sentinel prefix.
    pub label: String,
    pub input_paths: Vec<PathBuf>,
    pub output_path: PathBuf,
}

impl KbSpec {
    pub fn new(label: impl Into<String>, input_paths: Vec<PathBuf>, output_path: impl Into<PathBuf>) -> Self {
        KbSpec { label: label.into(), input_paths, output_path: output_path.into() }
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        if !is_valid_label(&self.label) {
            return Err(CompileError::InvalidSpec(format!(
                "label {:?} must be non-empty lowercase [a-z0-9_]",
                self.label
            )));
        }
        if self.input_paths.is_empty() {
            return Err(CompileError::InvalidSpec(format!("kb {:?} has no input files", self.label)));
        }
        if self.input_paths.iter().any(|p| p == &self.output_path) {
            return Err(CompileError::InvalidSpec("output path is also an input".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompileReport {
    pub label: String,
    pub entities: u64,
    /// Well-formed triples read, duplicates included.
    pub triples: u64,
    pub distinct_triples: u64,
    pub skipped_lines: u64,
    pub spilled_runs: u64,
    pub parse: ParseReport,
}

impl CompileReport {
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("label", self.label.clone()),
            ("entities", self.entities.to_string()),
            ("triples", self.triples.to_string()),
            ("distinct_triples", self.distinct_triples.to_string()),
            ("skipped_lines", self.skipped_lines.to_string()),
            ("lines_total", self.parse.lines_total.to_string()),
            ("spilled_runs", self.spilled_runs.to_string()),
        ]
    }
}

impl fmt::Display for CompileReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "compile {}: entities={} triples={} distinct_triples={} skipped_lines={}",
            self.label, self.entities, self.triples, self.distinct_triples, self.skipped_lines
        )
    }
}

const KIND_URI: &[u8] = b"U";
const KIND_LITERAL: &[u8] = b"L";

/// Triples of several files as packed shuffle records
/// `[subject, seq, predicate, kind, lexical]`. `seq` (big-endian) keeps the
/// original input order inside each subject group.
struct TripleRecords<'a> {
    paths: std::slice::Iter<'a, PathBuf>,
    current: Option<TripleReader<Box<dyn BufRead + Send>>>,
    report: &'a RefCell<ParseReport>,
    seq: u64,
}

impl TripleRecords<'_> {
    fn close_current(&mut self) {
        if let Some(r) = self.current.take() {
            self.report.borrow_mut().merge(r.report());
        }
    }
}

impl Iterator for TripleRecords<'_> {
    type Item = io::Result<Vec<u8>>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(reader) = self.current.as_mut() {
                match reader.next() {
                    Some(Ok(t)) => {
                        self.seq += 1;
                        let (kind, lex) = match &t.object {
                            ObjectValue::Uri(u) => (KIND_URI, u),
                            ObjectValue::Literal(l) => (KIND_LITERAL, l),
                        };
                        return Some(Ok(exec::pack(&[
                            t.subject.as_bytes(),
                            &self.seq.to_be_bytes(),
                            t.predicate.as_bytes(),
                            kind,
                            lex.as_bytes(),
                        ])));
                    }
                    Some(Err(e)) => return Some(Err(e)),
                    None => self.close_current(),
                }
            }
            let path = self.paths.next()?;
            match open_input(path) {
                Ok(src) => self.current = Some(TripleReader::with_error_cap(src, DEFAULT_ERROR_CAP)),
                Err(e) => return Some(Err(io::Error::new(e.kind(), format!("{}: {e}", path.display())))),
            }
        }
    }
}

fn utf8(b: &[u8]) -> Result<&str, exec::ReduceError> {
    Ok(std::str::from_utf8(b)?)
}

/// Compiles the triple files of `spec` into its entity file.
pub fn compile_kb(spec: &KbSpec, cfg: &ExecConfig) -> Result<CompileReport, CompileError> {
    spec.validate()?;
    let parse_report = RefCell::new(ParseReport::with_error_cap(DEFAULT_ERROR_CAP));
    let distinct = AtomicU64::new(0);
    let input: RecordStream<'_> = Box::new(TripleRecords {
        paths: spec.input_paths.iter(),
        current: None,
        report: &parse_report,
        seq: 0,
    });

    let output = exec::run_group_by(
        vec![(0, input)],
        |_, rec| exec::first_field(rec).map(<[u8]>::to_vec).map_err(|e| e.to_string()),
        |key, values, out| {
            let mut builder = RecordBuilder::new(utf8(key)?);
            let mut added = 0;
            for (_, v) in values {
                let f = exec::unpack(&v)?;
                let [_, _, predicate, kind, lexical] = f[..] else {
                    return Err("malformed triple record".into());
                };
                let lexical = utf8(lexical)?.to_string();
                let object = if kind == KIND_LITERAL { ObjectValue::Literal(lexical) } else { ObjectValue::Uri(lexical) };
                if builder.add(utf8(predicate)?, object) {
                    added += 1;
                }
            }
            distinct.fetch_add(added, Ordering::Relaxed);
            let mut line = String::new();
            write_record(&mut line, &builder.build()?);
            out.emit(line.as_bytes())?;
            Ok(())
        },
        cfg,
    )?;

    let parse = parse_report.into_inner();
    if parse.triples_ok == 0 {
        return Err(CompileError::EmptyKb(spec.label.clone()));
    }
    let spilled_runs = output.stats().spilled_runs;
    let entities = write_lines_atomically(&spec.output_path, output.records_by_key()?.map(|r| r.map(|(_, rec)| rec)))?;

    Ok(CompileReport {
        label: spec.label.clone(),
        entities,
        triples: parse.triples_ok,
        distinct_triples: distinct.into_inner(),
        skipped_lines: parse.lines_skipped,
        spilled_runs,
        parse,
    })
}

/// Writes `\n`-terminated lines to a sibling temporary file and renames it
/// into place. Returns the number of lines.
pub(crate) fn write_lines_atomically<I>(path: &Path, lines: I) -> io::Result<u64>
where
    I: IntoIterator<Item = io::Result<Vec<u8>>>,
{
    let tmp = tmp_sibling(path);
    let result = (|| {
        let mut w = BufWriter::with_capacity(1 << 16, File::create(&tmp)?);
        let mut n = 0u64;
        for line in lines {
            w.write_all(&line?)?;
            w.write_all(b"\n")?;
            n += 1;
        }
        w.flush()?;
        Ok(n)
    })();
    match result {
        Ok(n) => {
            std::fs::rename(&tmp, path)?;
            Ok(n)
        }
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flat_record::parse_record;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn cfg(dir: &Path) -> ExecConfig {
        ExecConfig { partitions: 4, memory_budget_bytes: 1 << 20, spill_dir: dir.to_path_buf(), parallelism: 2 }
    }

    #[test]
    fn two_entities_sorted() {
        let d = tempfile::tempdir().unwrap();
        let input = write(d.path(), "kb.nt", "<b> <q> \"y\" .\n<a> <p> <x> .\n");
        let out = d.path().join("kb.ents");
        let report = compile_kb(&KbSpec::new("kb", vec![input], &out), &cfg(d.path())).unwrap();
        assert_eq!(report.entities, 2);
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text, "a\tp\tx\nb\tq\t\"\"y\"\"\n");
    }

    #[test]
    fn multi_file_entity_is_merged() {
        let d = tempfile::tempdir().unwrap();
        let a = write(d.path(), "infobox.nt", "<a> <p> <x> .\n");
        let b = write(d.path(), "types.nt", "<a> <rdf:type> <T> .\n");
        let out = d.path().join("kb.ents");
        let report = compile_kb(&KbSpec::new("dbpedia", vec![a, b], &out), &cfg(d.path())).unwrap();
        assert_eq!(report.entities, 1);
        let text = std::fs::read_to_string(&out).unwrap();
        let rec = parse_record(text.trim_end_matches('\n')).unwrap();
        assert_eq!(rec.properties.len(), 2);
    }

    #[test]
    fn objects_only_are_not_entities_and_duplicates_collapse() {
        let d = tempfile::tempdir().unwrap();
        let input = write(d.path(), "kb.nt", "<a> <p> <x> .\n<a> <p> <x> .\nbroken\n<a> <p> <y> .\n");
        let out = d.path().join("kb.ents");
        let report = compile_kb(&KbSpec::new("kb", vec![input], &out), &cfg(d.path())).unwrap();
        assert_eq!((report.entities, report.triples, report.distinct_triples, report.skipped_lines), (1, 3, 2, 1));
        assert_eq!(std::fs::read_to_string(&out).unwrap(), "a\tp\tx\tp\ty\n");
    }

    #[test]
    fn empty_kb_is_an_error() {
        let d = tempfile::tempdir().unwrap();
        let input = write(d.path(), "kb.nt", "# nothing\n");
        let err = compile_kb(&KbSpec::new("kb", vec![input], d.path().join("o")), &cfg(d.path())).unwrap_err();
        assert!(matches!(err, CompileError::EmptyKb(_)));
    }

    #[test]
    fn spec_validation() {
        let s = KbSpec::new("DBpedia", vec!["a".into()], "o");
        assert!(s.validate().is_err());
        let s = KbSpec::new("db", vec![], "o");
        assert!(s.validate().is_err());
        let s = KbSpec::new("db", vec!["o".into()], "o");
        assert!(s.validate().is_err());
    }

    #[test]
    fn missing_input_is_io_error() {
        let d = tempfile::tempdir().unwrap();
        let err = compile_kb(&KbSpec::new("kb", vec![d.path().join("nope.nt")], d.path().join("o")), &cfg(d.path()))
            .unwrap_err();
        assert!(matches!(err, CompileError::Exec(ExecError::Io(_))), "{err}");
    }
}
