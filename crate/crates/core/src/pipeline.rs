//! Flat `key = value` pipeline configuration and the end-to-end run:
//! compile every knowledge base, build each 2-way linkage file, optionally
//! the 3-way file and a sample, then validate every output.
//!
//! ```text
//! # exec settings (all optional)
//! partitions    = 8
//! memory_budget = 64MiB          # bytes, or with KiB / MiB / GiB suffix
//! spill_dir     = /tmp
//! parallelism   = 4
//! seed          = 42
//!
//! kb.freebase.in  = freebase.nt
//! kb.freebase.out = out/freebase.ents
//! kb.dbpedia.in   = dbpedia_infobox.nt, dbpedia_types.nt
//! kb.dbpedia.out  = out/dbpedia.ents
//!
//! link.fd.left      = freebase    # kb labels
//! link.fd.right     = dbpedia
//! link.fd.gt        = fd.tsv
//! link.fd.gt_format = tsv-pairs   # or ntriples-sameas
//! link.fd.out       = out/fd.links
//!
//! join3.left   = fd               # link names
//! join3.right  = yd
//! join3.shared = dbpedia
//! join3.order  = dbpedia,freebase,yago
//! join3.out    = out/dfy.links
//!
//! sample.from = fd                # a link name, or `join3`
//! sample.n    = 10
//! sample.out  = out/fd.sample
//! ```
//!
//! Relative paths resolve against the directory holding the config file.
//! Blank lines and `#` comments are ignored; unknown or repeated keys are
//! errors.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::compile::{compile_kb, CompileError, CompileReport, KbSpec};
use crate::exec::ExecConfig;
use crate::flat_record::is_valid_label;
use crate::link_join::{join2, join3, GtFormat, Join2Job, Join2Report, Join3Job, Join3Report, JoinError};
use crate::tools::{sample_lines, validate, FileMode, SampleReport, SampleSpec, ValidationReport, DEFAULT_VIOLATION_CAP};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Join(#[from] JoinError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkSpec {
    pub name: String,
    pub left: String,
    pub right: String,
    pub gt: PathBuf,
    pub gt_format: GtFormat,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Join3Spec {
    pub left: String,
    pub right: String,
    pub shared: String,
    pub order: Option<Vec<String>>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleStage {
    pub from: String,
    pub n: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub exec: ExecConfig,
    pub seed: u64,
    pub kbs: Vec<KbSpec>,
    pub links: Vec<LinkSpec>,
    pub join3: Option<Join3Spec>,
    pub sample: Option<SampleStage>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            exec: ExecConfig::default(),
            seed: DEFAULT_SEED,
            kbs: Vec::new(),
            links: Vec::new(),
            join3: None,
            sample: None,
        }
    }
}

/// Parses `64MiB`, `512 KiB`, `1GiB` or a plain byte count.
pub fn parse_size(s: &str) -> Option<usize> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (digits, unit) = s.split_at(split);
    let n: usize = digits.parse().ok()?;
    let mult = match unit.trim() {
        "" | "B" => 1,
        "KiB" | "K" => 1 << 10,
        "MiB" | "M" => 1 << 20,
        "GiB" | "G" => 1 << 30,
        _ => return None,
    };
    n.checked_mul(mult)
}

fn format_size(n: usize) -> String {
    for (unit, shift) in [("GiB", 30), ("MiB", 20), ("KiB", 10)] {
        if n >= 1 << shift && n.is_multiple_of(1 << shift) {
            return format!("{}{unit}", n >> shift);
        }
    }
    n.to_string()
}

fn list(value: &str) -> Vec<String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        // Labels and link names in order of first appearance.
        let mut kb_order: Vec<String> = Vec::new();
        let mut link_order: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { line: line_no, message };
            let (k, v) = line.split_once('=').ok_or_else(|| syntax(format!("expected key = value, got {line:?}")))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            let mut parts = k.split('.');
            match (parts.next(), parts.next()) {
                (Some("kb"), Some(label)) if !kb_order.iter().any(|l| l == label) => kb_order.push(label.into()),
                (Some("link"), Some(name)) if !link_order.iter().any(|l| l == name) => link_order.push(name.into()),
                _ => {}
            }
            if entries.insert(k.clone(), (line_no, v)).is_some() {
                return Err(syntax(format!("key {k:?} is set twice")));
            }
        }

        let mut cfg = PipelineConfig::default();
        let mut take = |key: &str| entries.remove(key).map(|(_, v)| v);
        let resolve = |p: String| {
            let p = PathBuf::from(p);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };
        let invalid = |m: String| ConfigError::Invalid(m);
        let count = |key: &str, v: String| v.parse::<usize>().map_err(|_| invalid(format!("{key} = {v:?} is not a count")));

        if let Some(v) = take("partitions") {
            cfg.exec.partitions = count("partitions", v)?;
        }
        if let Some(v) = take("parallelism") {
            cfg.exec.parallelism = count("parallelism", v)?;
        }
        if let Some(v) = take("memory_budget") {
            cfg.exec.memory_budget_bytes =
                parse_size(&v).ok_or_else(|| invalid(format!("memory_budget = {v:?} is not a size")))?;
        }
        if let Some(v) = take("spill_dir") {
            cfg.exec.spill_dir = resolve(v);
        }
        if let Some(v) = take("seed") {
            cfg.seed = v.parse().map_err(|_| invalid(format!("seed = {v:?} is not an unsigned integer")))?;
        }
        for label in &kb_order {
            let inputs = take(&format!("kb.{label}.in")).ok_or_else(|| invalid(format!("kb.{label}.in is missing")))?;
            let out = take(&format!("kb.{label}.out")).ok_or_else(|| invalid(format!("kb.{label}.out is missing")))?;
            cfg.kbs.push(KbSpec::new(label.clone(), list(&inputs).into_iter().map(resolve).collect(), resolve(out)));
        }
        for name in &link_order {
            let mut need = |field: &str| {
                take(&format!("link.{name}.{field}")).ok_or_else(|| invalid(format!("link.{name}.{field} is missing")))
            };
            let (left, right, gt, out) = (need("left")?, need("right")?, need("gt")?, need("out")?);
            let gt_format = match take(&format!("link.{name}.gt_format")) {
                None => GtFormat::TsvPairs,
                Some(f) => GtFormat::parse(&f).ok_or_else(|| invalid(format!("link.{name}.gt_format = {f:?} is unknown")))?,
            };
            cfg.links.push(LinkSpec { name: name.clone(), left, right, gt: resolve(gt), gt_format, out: resolve(out) });
        }
        let j3: Vec<Option<String>> = ["left", "right", "shared", "order", "out"].iter().map(|f| take(&format!("join3.{f}"))).collect();
        if j3.iter().any(Option::is_some) {
            let get = |i: usize, f: &str| j3[i].clone().ok_or_else(|| invalid(format!("join3.{f} is missing")));
            cfg.join3 = Some(Join3Spec {
                left: get(0, "left")?,
                right: get(1, "right")?,
                shared: get(2, "shared")?,
                order: j3[3].as_deref().map(list),
                out: resolve(get(4, "out")?),
            });
        }
        let s: Vec<Option<String>> = ["from", "n", "out"].iter().map(|f| take(&format!("sample.{f}"))).collect();
        if s.iter().any(Option::is_some) {
            let get = |i: usize, f: &str| s[i].clone().ok_or_else(|| invalid(format!("sample.{f} is missing")));
            cfg.sample = Some(SampleStage { from: get(0, "from")?, n: count("sample.n", get(1, "n")?)?, out: resolve(get(2, "out")?) });
        }
        if let Some((key, (line, _))) = entries.into_iter().next() {
            return Err(ConfigError::Syntax { line, message: format!("unknown key {key:?}") });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if let Err(e) = self.exec.validate() {
            return invalid(e.to_string());
        }
        let mut labels = HashSet::new();
        for kb in &self.kbs {
            if !is_valid_label(&kb.label) {
                return invalid(format!("kb label {:?} must be lowercase [a-z0-9_]", kb.label));
            }
            if !labels.insert(kb.label.as_str()) {
                return invalid(format!("kb label {:?} used twice", kb.label));
            }
        }
        let mut names = HashSet::new();
        for l in &self.links {
            if !names.insert(l.name.as_str()) || l.name == "join3" {
                return invalid(format!("link name {:?} is reserved or used twice", l.name));
            }
            for side in [&l.left, &l.right] {
                if !labels.contains(side.as_str()) {
                    return invalid(format!("link {:?} refers to unknown kb {side:?}", l.name));
                }
            }
            if l.left == l.right {
                return invalid(format!("link {:?} joins {:?} with itself", l.name, l.left));
            }
        }
        if let Some(j) = &self.join3 {
            let link = |n: &str| self.links.iter().find(|l| l.name == n);
            let (Some(a), Some(b)) = (link(&j.left), link(&j.right)) else {
                return invalid(format!("join3 refers to unknown links {:?} / {:?}", j.left, j.right));
            };
            for l in [a, b] {
                if l.left != j.shared && l.right != j.shared {
                    return invalid(format!("link {:?} does not contain shared kb {:?}", l.name, j.shared));
                }
            }
        }
        if let Some(s) = &self.sample {
            if s.from != "join3" && !self.links.iter().any(|l| l.name == s.from) {
                return invalid(format!("sample.from {:?} is not a link name or `join3`", s.from));
            }
            if s.from == "join3" && self.join3.is_none() {
                return invalid("sample.from = join3 but no join3 is configured".into());
            }
        }

        let mut outputs: HashSet<&Path> = HashSet::new();
        let all_outputs = self
            .kbs
            .iter()
            .map(|k| k.output_path.as_path())
            .chain(self.links.iter().map(|l| l.out.as_path()))
            .chain(self.join3.iter().map(|j| j.out.as_path()))
            .chain(self.sample.iter().map(|s| s.out.as_path()));
        for out in all_outputs {
            if !outputs.insert(out) {
                return invalid(format!("output path {} is used twice", out.display()));
            }
        }
        let inputs = self.kbs.iter().flat_map(|k| k.input_paths.iter()).chain(self.links.iter().map(|l| &l.gt));
        for input in inputs {
            if outputs.contains(input.as_path()) {
                return invalid(format!("{} is both an input and an output", input.display()));
            }
        }
        Ok(())
    }

    /// The configuration as canonical `key = value` lines, every default
    /// spelled out and every path resolved.
    pub fn effective(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("partitions".to_string(), self.exec.partitions.to_string()),
            ("memory_budget".to_string(), format_size(self.exec.memory_budget_bytes)),
            ("spill_dir".to_string(), self.exec.spill_dir.display().to_string()),
            ("parallelism".to_string(), self.exec.parallelism.to_string()),
            ("seed".to_string(), self.seed.to_string()),
        ];
        let path = |p: &Path| p.display().to_string();
        for kb in &self.kbs {
            let ins: Vec<String> = kb.input_paths.iter().map(|p| path(p)).collect();
            kv.push((format!("kb.{}.in", kb.label), ins.join(",")));
            kv.push((format!("kb.{}.out", kb.label), path(&kb.output_path)));
        }
        for l in &self.links {
            kv.push((format!("link.{}.left", l.name), l.left.clone()));
            kv.push((format!("link.{}.right", l.name), l.right.clone()));
            kv.push((format!("link.{}.gt", l.name), path(&l.gt)));
            kv.push((format!("link.{}.gt_format", l.name), l.gt_format.name().to_string()));
            kv.push((format!("link.{}.out", l.name), path(&l.out)));
        }
        if let Some(j) = &self.join3 {
            kv.push(("join3.left".into(), j.left.clone()));
            kv.push(("join3.right".into(), j.right.clone()));
            kv.push(("join3.shared".into(), j.shared.clone()));
            if let Some(o) = &j.order {
                kv.push(("join3.order".into(), o.join(",")));
            }
            kv.push(("join3.out".into(), path(&j.out)));
        }
        if let Some(s) = &self.sample {
            kv.push(("sample.from".into(), s.from.clone()));
            kv.push(("sample.n".into(), s.n.to_string()));
            kv.push(("sample.out".into(), path(&s.out)));
        }
        kv
    }

    fn kb(&self, label: &str) -> &KbSpec {
        self.kbs.iter().find(|k| k.label == label).expect("validated kb reference")
    }

    fn link(&self, name: &str) -> &LinkSpec {
        self.links.iter().find(|l| l.name == name).expect("validated link reference")
    }
}

/// Formats key/value pairs one per line as `key = value`.
pub fn render_key_values<K: AsRef<str>, V: AsRef<str>>(kv: &[(K, V)]) -> String {
    kv.iter().map(|(k, v)| format!("{} = {}\n", k.as_ref(), v.as_ref())).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineReport {
    pub compiles: Vec<CompileReport>,
    pub joins: Vec<(String, Join2Report)>,
    pub join3: Option<Join3Report>,
    pub sample: Option<SampleReport>,
    /// Every output file with its validation result.
    pub validations: Vec<(PathBuf, ValidationReport)>,
}

impl PipelineReport {
    pub fn total_violations(&self) -> u64 {
        self.validations.iter().map(|(_, v)| v.violation_count).sum()
    }
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.compiles {
            writeln!(f, "{c}")?;
        }
        for (name, j) in &self.joins {
            writeln!(f, "[{name}] {j}")?;
        }
        if let Some(j) = &self.join3 {
            writeln!(f, "{j}")?;
        }
        if let Some(s) = &self.sample {
            writeln!(f, "sample: lines_read={} lines_written={}", s.lines_read, s.lines_written)?;
        }
        for (path, v) in &self.validations {
            writeln!(f, "validate {}: lines={} violations={}", path.display(), v.lines, v.violation_count)?;
        }
        Ok(())
    }
}

/// Runs every configured stage in order. `progress` receives one line per
/// finished stage.
pub fn run_pipeline(cfg: &PipelineConfig, progress: &mut dyn FnMut(&str)) -> Result<PipelineReport, PipelineError> {
    cfg.validate()?;
    let mut report = PipelineReport::default();
    let check = |path: &Path, mode: FileMode, report: &mut PipelineReport| -> Result<(), PipelineError> {
        let v = validate(path, mode, DEFAULT_VIOLATION_CAP)?;
        report.validations.push((path.to_path_buf(), v));
        Ok(())
    };

    for kb in &cfg.kbs {
        if let Some(dir) = kb.output_path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let r = compile_kb(kb, &cfg.exec)?;
        progress(&r.to_string());
        report.compiles.push(r);
        check(&kb.output_path, FileMode::Entity, &mut report)?;
    }
    for l in &cfg.links {
        let job = Join2Job {
            left_entities: cfg.kb(&l.left).output_path.clone(),
            right_entities: cfg.kb(&l.right).output_path.clone(),
            ground_truth: l.gt.clone(),
            gt_format: l.gt_format.clone(),
            left_label: l.left.clone(),
            right_label: l.right.clone(),
            output: l.out.clone(),
        };
        if let Some(dir) = l.out.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let r = join2(&job, &cfg.exec)?;
        progress(&format!("[{}] {r}", l.name));
        report.joins.push((l.name.clone(), r));
        check(&l.out, FileMode::Link2, &mut report)?;
    }
    if let Some(j) = &cfg.join3 {
        let job = Join3Job {
            left_links: cfg.link(&j.left).out.clone(),
            right_links: cfg.link(&j.right).out.clone(),
            shared_label: j.shared.clone(),
            order: j.order.clone(),
            output: j.out.clone(),
        };
        if let Some(dir) = j.out.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let r = join3(&job, &cfg.exec)?;
        progress(&r.to_string());
        report.join3 = Some(r);
        check(&j.out, FileMode::Link3, &mut report)?;
    }
    if let Some(s) = &cfg.sample {
        let (from, mode) = match s.from.as_str() {
            "join3" => (&cfg.join3.as_ref().expect("validated").out, FileMode::Link3),
            name => (&cfg.link(name).out, FileMode::Link2),
        };
        let r = sample_lines(from, SampleSpec { n: s.n, seed: cfg.seed }, &s.out)?;
        progress(&format!("sample: lines_read={} lines_written={}", r.lines_read, r.lines_written));
        report.sample = Some(r);
        check(&s.out, mode, &mut report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = "\
# demo
partitions = 4
memory_budget = 8MiB   # small
kb.freebase.in = fb.nt
kb.freebase.out = out/fb.ents
kb.dbpedia.in = a.nt, b.nt
kb.dbpedia.out = out/db.ents
link.fd.left = freebase
link.fd.right = dbpedia
link.fd.gt = fd.tsv
link.fd.out = out/fd.links
";

    #[test]
    fn parses_and_resolves() {
        let cfg = PipelineConfig::parse(CFG, Path::new("/data")).unwrap();
        assert_eq!(cfg.exec.partitions, 4);
        assert_eq!(cfg.exec.memory_budget_bytes, 8 << 20);
        assert_eq!(cfg.kbs[1].label, "dbpedia");
        assert_eq!(cfg.kbs[1].input_paths, [PathBuf::from("/data/a.nt"), PathBuf::from("/data/b.nt")]);
        assert_eq!(cfg.links[0].gt_format, GtFormat::TsvPairs);
        let kv = cfg.effective();
        assert!(kv.contains(&("memory_budget".into(), "8MiB".into())));
        assert!(kv.contains(&("link.fd.out".into(), "/data/out/fd.links".into())));
        let again = PipelineConfig::parse(&render_key_values(&kv), Path::new("/elsewhere")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            "partitions = x",
            "nonsense = 1",
            "partitions = 1\npartitions = 2",
            "just a line",
            "kb.a.in = x",
            "kb.A.in = x\nkb.A.out = y",
            "kb.a.in = x\nkb.a.out = x",
            "kb.a.in = x\nkb.a.out = o\nkb.b.in = y\nkb.b.out = o",
            "kb.a.in = x\nkb.a.out = o\nlink.l.left = a\nlink.l.right = z\nlink.l.gt = g\nlink.l.out = lo",
            "memory_budget = 12 parsecs",
            "sample.n = 3",
        ];
        for text in bad {
            assert!(PipelineConfig::parse(text, Path::new(".")).is_err(), "{text:?}");
        }
    }

    #[test]
    fn sizes() {
        assert_eq!(parse_size("64MiB"), Some(64 << 20));
        assert_eq!(parse_size("512 KiB"), Some(512 << 10));
        assert_eq!(parse_size("1000"), Some(1000));
        assert_eq!(parse_size("MiB"), None);
        assert_eq!(format_size(64 << 20), "64MiB");
        assert_eq!(format_size(1000), "1000");
    }
}
