//! Command-line front end. Each subcommand is a thin wrapper over one
//! library call; `pipeline` runs a whole configuration file.
//!
//! Failures end with a single stderr line
//! `error kind=<kind> message="<text>"` and a nonzero exit status.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flatlink::compile::{compile_kb, CompileError, KbSpec};
use flatlink::exec::{ExecConfig, ExecError, ENV_PARALLELISM, ENV_SPILL_DIR};
use flatlink::link_join::{join2, join3, GtFormat, Join2Job, Join3Job, JoinError};
use flatlink::pipeline::{parse_size, render_key_values, run_pipeline, ConfigError, PipelineConfig, PipelineError};
use flatlink::tools::{
    filter_by_type, sample_lines, stats, validate, FileMode, SampleSpec, Side, TypeFilterSpec, RDF_TYPE,
};

#[derive(Parser)]
#[command(name = "flatlink", version, about = "Flat entity records and self-contained sameAs linkage files")]
struct Cli {
    #[command(flatten)]
    exec: ExecFlags,
    /// Print reports as key=value lines.
    #[arg(long, global = true)]
    kv: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ExecFlags {
    /// Pipeline config file; its exec settings apply to every subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    partitions: Option<usize>,
    /// Total sort buffer per job, e.g. 64MiB.
    #[arg(long, global = true)]
    memory_budget: Option<String>,
    #[arg(long, global = true, env = ENV_SPILL_DIR)]
    spill_dir: Option<PathBuf>,
    #[arg(long, global = true, env = ENV_PARALLELISM)]
    parallelism: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Compile N-Triples files into one entity file.
    Compile {
        #[arg(long)]
        label: String,
        /// Comma-separated input files (plain or gzip).
        #[arg(long = "in", value_delimiter = ',', required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Join two entity files with a ground truth into a 2-way linkage file.
    Join2 {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// tsv-pairs or ntriples-sameas.
        #[arg(long, default_value = "tsv-pairs")]
        gt_format: String,
        /// Predicate accepted by ntriples-sameas ground truths.
        #[arg(long)]
        same_as: Option<String>,
        /// Left and right kb labels, e.g. freebase,dbpedia.
        #[arg(long, value_delimiter = ',', num_args = 1, required = true)]
        labels: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Join two 2-way linkage files on their shared kb into a 3-way file.
    Join3 {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        shared: String,
        /// Output kb order, e.g. dbpedia,freebase,yago.
        #[arg(long, value_delimiter = ',')]
        order: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reservoir-sample lines of any file.
    Sample {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = flatlink::pipeline::DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep lines whose records carry a given type.
    FilterType {
        #[arg(long = "in")]
        input: PathBuf,
        /// entity, link2 or link3.
        #[arg(long)]
        mode: String,
        #[arg(long = "type")]
        type_uri: String,
        /// first, second, third, any or all.
        #[arg(long, default_value = "first")]
        side: String,
        #[arg(long, default_value = RDF_TYPE)]
        type_predicate: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Line, byte, entity and type counts.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        mode: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value = RDF_TYPE)]
        type_predicate: String,
    },
    /// Check every line; exits nonzero iff violations are found.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        mode: String,
        #[arg(long, default_value_t = flatlink::tools::DEFAULT_VIOLATION_CAP)]
        max_violations: usize,
    },
    /// Run the stages listed in a config file (requires --config).
    Pipeline,
}

struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl Failure {
    fn new(kind: &'static str, message: impl ToString) -> Self {
        Failure { kind, message: message.to_string(), code: 1 }
    }

    fn usage(message: impl ToString) -> Self {
        Failure { kind: "usage", message: message.to_string(), code: 2 }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        let kind = match e.kind() {
            std::io::ErrorKind::NotFound => "missing-input",
            std::io::ErrorKind::InvalidData => "invalid-input",
            std::io::ErrorKind::InvalidInput => "usage",
            _ => "io",
        };
        Failure::new(kind, e)
    }
}

impl From<ExecError> for Failure {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::Io(io) => io.into(),
            ExecError::Config(_) => Failure::usage(e),
            ExecError::Map { .. } => Failure::new("invalid-input", e),
            ExecError::Reduce { .. } => Failure::new("invalid-input", e),
        }
    }
}

impl From<CompileError> for Failure {
    fn from(e: CompileError) -> Self {
        match e {
            CompileError::Io(io) => io.into(),
            CompileError::Exec(x) => x.into(),
            CompileError::InvalidSpec(_) => Failure::usage(e),
            CompileError::EmptyKb(_) => Failure::new("empty-kb", e),
        }
    }
}

impl From<JoinError> for Failure {
    fn from(e: JoinError) -> Self {
        match e {
            JoinError::Io(io) => io.into(),
            JoinError::Exec(x) => x.into(),
            JoinError::Config(_) => Failure::usage(e),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure { kind: "config", message: e.to_string(), code: 2 }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => c.into(),
            PipelineError::Compile(c) => c.into(),
            PipelineError::Join(j) => j.into(),
            PipelineError::Io(io) => io.into(),
        }
    }
}

fn mode(s: &str) -> Result<FileMode, Failure> {
    FileMode::parse(s).ok_or_else(|| Failure::usage(format!("--mode {s:?}: expected entity, link2 or link3")))
}

/// Exec settings: defaults, then the config file, then env / flags.
fn resolve_exec(flags: &ExecFlags, config: Option<&PipelineConfig>) -> Result<ExecConfig, Failure> {
    let mut exec = config.map(|c| c.exec.clone()).unwrap_or_default();
    if let Some(p) = flags.partitions {
        exec.partitions = p;
    }
    if let Some(b) = &flags.memory_budget {
        exec.memory_budget_bytes = parse_size(b).ok_or_else(|| Failure::usage(format!("--memory-budget {b:?} is not a size")))?;
    }
    if let Some(d) = &flags.spill_dir {
        exec.spill_dir = d.clone();
    }
    if let Some(p) = flags.parallelism {
        exec.parallelism = p;
    }
    exec.validate()?;
    Ok(exec)
}

struct Out {
    kv: bool,
}

impl Out {
    fn config(&self, pairs: &[(String, String)]) {
        if self.kv {
            for (k, v) in pairs {
                println!("config.{k}={v}");
            }
        } else {
            println!("# effective config");
            for line in render_key_values(pairs).lines() {
                println!("# {line}");
            }
        }
    }

    fn report<K: AsRef<str>>(&self, text: &dyn std::fmt::Display, pairs: &[(K, String)]) {
        if self.kv {
            for (k, v) in pairs {
                println!("{}={v}", k.as_ref());
            }
        } else {
            let text = text.to_string();
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
        }
    }
}

fn exec_pairs(exec: &ExecConfig) -> Vec<(String, String)> {
    let cfg = PipelineConfig { exec: exec.clone(), ..PipelineConfig::default() };
    cfg.effective().into_iter().filter(|(k, _)| k != "seed").collect()
}

fn path_kv(k: &str, p: &Path) -> (String, String) {
    (k.to_string(), p.display().to_string())
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    let out = Out { kv: cli.kv };
    let config = cli.exec.config.as_deref().map(PipelineConfig::load).transpose()?;
    let exec = resolve_exec(&cli.exec, config.as_ref())?;

    match cli.command {
        Command::Compile { label, inputs, out: output } => {
            let mut eff = exec_pairs(&exec);
            eff.push(("label".into(), label.clone()));
            let ins: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
            eff.push(("in".into(), ins.join(",")));
            eff.push(path_kv("out", &output));
            out.config(&eff);
            let report = compile_kb(&KbSpec::new(label, inputs, output), &exec)?;
            out.report(&report, &report.key_values());
        }
        Command::Join2 { left, right, gt, gt_format, same_as, labels, out: output } => {
            let [left_label, right_label] = <[String; 2]>::try_from(labels)
                .map_err(|l| Failure::usage(format!("--labels needs exactly two labels, got {}", l.len())))?;
            let mut format = GtFormat::parse(&gt_format)
                .ok_or_else(|| Failure::usage(format!("--gt-format {gt_format:?}: expected tsv-pairs or ntriples-sameas")))?;
            if let (GtFormat::NTriplesSameAs { predicate }, Some(p)) = (&mut format, same_as) {
                *predicate = p;
            }
            let mut eff = exec_pairs(&exec);
            eff.extend([
                path_kv("left", &left),
                path_kv("right", &right),
                path_kv("gt", &gt),
                ("gt_format".into(), format.name().into()),
                ("labels".into(), format!("{left_label},{right_label}")),
                path_kv("out", &output),
            ]);
            out.config(&eff);
            let job = Join2Job {
                left_entities: left,
                right_entities: right,
                ground_truth: gt,
                gt_format: format,
                left_label,
                right_label,
                output,
            };
            let report = join2(&job, &exec)?;
            out.report(&report, &report.key_values());
            for (line, msg) in &report.gt_first_errors {
                eprintln!("warning: ground truth line {line}: {msg}");
            }
        }
        Command::Join3 { left, right, shared, order, out: output } => {
            let mut eff = exec_pairs(&exec);
            eff.extend([path_kv("left", &left), path_kv("right", &right), ("shared".into(), shared.clone())]);
            if let Some(o) = &order {
                eff.push(("order".into(), o.join(",")));
            }
            eff.push(path_kv("out", &output));
            out.config(&eff);
            let job = Join3Job { left_links: left, right_links: right, shared_label: shared, order, output };
            let report = join3(&job, &exec)?;
            out.report(&report, &report.key_values());
        }
        Command::Sample { input, n, seed, out: output } => {
            out.config(&[
                path_kv("in", &input),
                ("n".into(), n.to_string()),
                ("seed".into(), seed.to_string()),
                path_kv("out", &output),
            ]);
            let r = sample_lines(&input, SampleSpec { n, seed }, &output)?;
            let text = format!("sample: lines_read={} lines_written={}", r.lines_read, r.lines_written);
            out.report(&text, &[("lines_read", r.lines_read.to_string()), ("lines_written", r.lines_written.to_string())]);
        }
        Command::FilterType { input, mode: m, type_uri, side, type_predicate, out: output } => {
            let file_mode = mode(&m)?;
            let side_v = Side::parse(&side)
                .ok_or_else(|| Failure::usage(format!("--side {side:?}: expected first, second, third, any or all")))?;
            out.config(&[
                path_kv("in", &input),
                ("mode".into(), m),
                ("type".into(), type_uri.clone()),
                ("side".into(), side),
                ("type_predicate".into(), type_predicate.clone()),
                path_kv("out", &output),
            ]);
            let spec = TypeFilterSpec { type_uri, side: side_v, type_predicate };
            let r = filter_by_type(&input, file_mode, &spec, &output)?;
            let text = format!(
                "filter-type: lines_read={} lines_written={} lines_unparseable={}",
                r.lines_read, r.lines_written, r.lines_unparseable
            );
            out.report(&text, &r.key_values());
            for (line, msg) in &r.first_errors {
                eprintln!("warning: line {line}: {msg}");
            }
        }
        Command::Stats { input, mode: m, top, type_predicate } => {
            let file_mode = mode(&m)?;
            out.config(&[
                path_kv("in", &input),
                ("mode".into(), m),
                ("top".into(), top.to_string()),
                ("type_predicate".into(), type_predicate.clone()),
            ]);
            let r = stats(&input, file_mode, top, &type_predicate)?;
            out.report(&r, &r.key_values());
        }
        Command::Validate { input, mode: m, max_violations } => {
            let file_mode = mode(&m)?;
            out.config(&[path_kv("in", &input), ("mode".into(), m)]);
            let r = validate(&input, file_mode, max_violations)?;
            out.report(&r, &r.key_values());
            if !r.is_clean() {
                eprintln!("error kind=violations message=\"{} violation(s) in {}\"", r.violation_count, input.display());
                return Ok(ExitCode::from(1));
            }
        }
        Command::Pipeline => {
            let Some(mut cfg) = config else {
                return Err(Failure::usage("pipeline needs --config <file>"));
            };
            cfg.exec = exec;
            out.config(&cfg.effective());
            let report = run_pipeline(&cfg, &mut |line| eprintln!("{line}"))?;
            let mut kv: Vec<(String, String)> = Vec::new();
            for c in &report.compiles {
                kv.extend(c.key_values().into_iter().map(|(k, v)| (format!("compile.{}.{k}", c.label), v)));
            }
            for (name, j) in &report.joins {
                kv.extend(j.key_values().into_iter().map(|(k, v)| (format!("join2.{name}.{k}"), v)));
            }
            if let Some(j) = &report.join3 {
                kv.extend(j.key_values().into_iter().map(|(k, v)| (format!("join3.{k}"), v)));
            }
            if let Some(s) = &report.sample {
                kv.push(("sample.lines_written".into(), s.lines_written.to_string()));
            }
            kv.push(("violations".into(), report.total_violations().to_string()));
            out.report(&report, &kv);
            if report.total_violations() > 0 {
                eprintln!("error kind=violations message=\"{} violation(s) in pipeline outputs\"", report.total_violations());
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error kind=usage message={first:?}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(f) => {
            let message = f.message.replace(['\n', '\r'], " ");
            eprintln!("error kind={} message={message:?}", f.kind);
            ExitCode::from(f.code)
        }
    }
}
