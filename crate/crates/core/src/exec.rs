//! A local, deterministic map / shuffle / reduce engine with bounded memory.
//!
//! Records flow through three phases:
//!
//! 1. **map**: every input record is tagged with its input number and keyed by
//!    `key_fn`; the key picks a partition with [`partition_of`];
//! 2. **shuffle**: each partition owns an [`ExternalSorter`] that buffers items
//!    in memory and spills sorted runs to disk once its share of
//!    `memory_budget_bytes` is exhausted;
//! 3. **reduce**: partitions are merged and reduced independently (on up to
//!    `parallelism` threads); `reduce_fn` sees each distinct key exactly once,
//!    with its values streamed in `(tag, value)` order.
//!
//! Item order is `(key, tag, value)` bytewise, and the partition hash is FNV-1a
//! 64, so a run is byte-for-byte reproducible for a fixed configuration.
//!
//! # Spill file format
//!
//! Sorted runs are private files under a per-job temporary directory inside
//! `spill_dir`, removed when the job's output is dropped. Each item is one
//! frame of little-endian length-prefixed fields:
//!
//! ```text
//! u32 key_len | key | u16 tag | u32 value_len | value
//! ```
//!
//! Reduce output files use `u32 key_len | key | u32 record_len | record`.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fs::{self, File};
use std::hash::Hasher;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::mem;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fnv::FnvHasher;
use rayon::prelude::*;
use tempfile::TempDir;
use thiserror::Error;

pub const DEFAULT_PARTITIONS: usize = 16;
pub const DEFAULT_MEMORY_BUDGET: usize = 256 << 20;
/// Maximum number of runs merged in one pass.
pub const MAX_MERGE_FAN_IN: usize = 64;

pub const ENV_SPILL_DIR: &str = "FLATLINK_SPILL_DIR";
pub const ENV_PARALLELISM: &str = "FLATLINK_PARALLELISM";

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("invalid exec config: {0}")]
    Config(String),
    #[error("map failed on input {tag}: {message}")]
    Map { tag: u16, message: String },
    #[error("reduce failed for key {key:?}: {message}")]
    Reduce { key: String, message: String },
}

pub type ReduceError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecConfig {
    pub partitions: usize,
    /// Total in-memory sort buffer for one job, shared evenly by its
    /// partition sorters.
    pub memory_budget_bytes: usize,
    pub spill_dir: PathBuf,
    pub parallelism: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            partitions: DEFAULT_PARTITIONS,
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET,
            spill_dir: std::env::temp_dir(),
            parallelism: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }
    }
}

impl ExecConfig {
    pub fn validate(&self) -> Result<(), ExecError> {
        if self.partitions == 0 {
            return Err(ExecError::Config("partitions must be >= 1".into()));
        }
        if self.parallelism == 0 {
            return Err(ExecError::Config("parallelism must be >= 1".into()));
        }
        if self.memory_budget_bytes == 0 {
            return Err(ExecError::Config("memory budget must be > 0".into()));
        }
        Ok(())
    }

    /// Applies `FLATLINK_SPILL_DIR` / `FLATLINK_PARALLELISM` when set.
    pub fn apply_env(&mut self) -> Result<(), ExecError> {
        if let Some(dir) = std::env::var_os(ENV_SPILL_DIR) {
            self.spill_dir = PathBuf::from(dir);
        }
        if let Ok(p) = std::env::var(ENV_PARALLELISM) {
            self.parallelism = p
                .trim()
                .parse()
                .map_err(|_| ExecError::Config(format!("{ENV_PARALLELISM}={p:?} is not a count")))?;
        }
        Ok(())
    }

    fn per_sorter_budget(&self) -> usize {
        (self.memory_budget_bytes / self.partitions).max(1)
    }
}

/// The unit the shuffle sorts: ordered by `(key, tag, value)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyedItem {
    pub key: Vec<u8>,
    pub tag: u16,
    pub value: Vec<u8>,
}

impl KeyedItem {
    pub fn new(key: impl Into<Vec<u8>>, tag: u16, value: impl Into<Vec<u8>>) -> Self {
        KeyedItem { key: key.into(), tag, value: value.into() }
    }

    /// Bytes this item occupies while buffered.
    pub fn mem_size(&self) -> usize {
        mem::size_of::<Self>() + self.key.len() + self.value.len()
    }
}

/// FNV-1a 64 of `key`, reduced modulo `partitions`.
pub fn partition_of(key: &[u8], partitions: usize) -> usize {
    assert!(partitions >= 1, "partitions must be >= 1");
    let mut h = FnvHasher::default();
    h.write(key);
    (h.finish() % partitions as u64) as usize
}

// ---------------------------------------------------------------------------
// record packing helpers

/// Packs fields as `u32 LE length | bytes` frames.
pub fn pack(fields: &[&[u8]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(fields.iter().map(|f| f.len() + 4).sum());
    for f in fields {
        out.extend_from_slice(&(f.len() as u32).to_le_bytes());
        out.extend_from_slice(f);
    }
    out
}

/// Inverse of [`pack`].
pub fn unpack(mut buf: &[u8]) -> io::Result<Vec<&[u8]>> {
    let mut out = Vec::new();
    while !buf.is_empty() {
        if buf.len() < 4 {
            return Err(corrupt("truncated field header"));
        }
        let len = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
        if buf.len() < 4 + len {
            return Err(corrupt("truncated field"));
        }
        out.push(&buf[4..4 + len]);
        buf = &buf[4 + len..];
    }
    Ok(out)
}

/// First packed field, without unpacking the rest.
pub fn first_field(buf: &[u8]) -> io::Result<&[u8]> {
    if buf.len() < 4 {
        return Err(corrupt("truncated field header"));
    }
    let len = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
    buf.get(4..4 + len).ok_or_else(|| corrupt("truncated field"))
}

/// Order-preserving encoding of a field tuple: comparing encodings bytewise
/// compares the tuples field by field. `0x00` is written as `0x00 0xFF` and
/// each field ends with `0x00 0x01`.
pub fn order_key(fields: &[&[u8]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(fields.iter().map(|f| f.len() + 2).sum());
    for f in fields {
        for &b in *f {
            out.push(b);
            if b == 0 {
                out.push(0xFF);
            }
        }
        out.extend_from_slice(&[0x00, 0x01]);
    }
    out
}

fn corrupt(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

// ---------------------------------------------------------------------------
// run files

fn write_item<W: Write>(w: &mut W, item: &KeyedItem) -> io::Result<()> {
    w.write_all(&(item.key.len() as u32).to_le_bytes())?;
    w.write_all(&item.key)?;
    w.write_all(&item.tag.to_le_bytes())?;
    w.write_all(&(item.value.len() as u32).to_le_bytes())?;
    w.write_all(&item.value)
}

/// Reads a `u32`-length-prefixed blob; `Ok(None)` on a clean end of file.
fn read_blob<R: Read>(r: &mut R, first: bool) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    if first {
        let mut filled = 0;
        while filled < 4 {
            match r.read(&mut len[filled..])? {
                0 if filled == 0 => return Ok(None),
                0 => return Err(corrupt("truncated frame")),
                n => filled += n,
            }
        }
    } else {
        r.read_exact(&mut len)?;
    }
    let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

struct RunReader {
    r: BufReader<File>,
}

impl RunReader {
    fn open(path: &Path) -> io::Result<Self> {
        Ok(RunReader { r: BufReader::with_capacity(1 << 16, File::open(path)?) })
    }

    fn next_item(&mut self) -> io::Result<Option<KeyedItem>> {
        let Some(key) = read_blob(&mut self.r, true)? else {
            return Ok(None);
        };
        let mut tag = [0u8; 2];
        self.r.read_exact(&mut tag)?;
        let value = read_blob(&mut self.r, false)?.unwrap_or_default();
        Ok(Some(KeyedItem { key, tag: u16::from_le_bytes(tag), value }))
    }
}

enum MergeSource {
    Run(RunReader),
    Memory(std::vec::IntoIter<KeyedItem>),
}

impl MergeSource {
    fn next_item(&mut self) -> io::Result<Option<KeyedItem>> {
        match self {
            MergeSource::Run(r) => r.next_item(),
            MergeSource::Memory(it) => Ok(it.next()),
        }
    }
}

struct Merger {
    sources: Vec<MergeSource>,
    heap: BinaryHeap<Reverse<(KeyedItem, usize)>>,
}

impl Merger {
    fn new(mut sources: Vec<MergeSource>) -> io::Result<Self> {
        let mut heap = BinaryHeap::with_capacity(sources.len());
        for (i, s) in sources.iter_mut().enumerate() {
            if let Some(item) = s.next_item()? {
                heap.push(Reverse((item, i)));
            }
        }
        Ok(Merger { sources, heap })
    }

    fn next_item(&mut self) -> io::Result<Option<KeyedItem>> {
        let Some(Reverse((item, i))) = self.heap.pop() else {
            return Ok(None);
        };
        if let Some(next) = self.sources[i].next_item()? {
            self.heap.push(Reverse((next, i)));
        }
        Ok(Some(item))
    }
}

// ---------------------------------------------------------------------------
// external sorter

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SortStats {
    pub items: u64,
    pub spilled_runs: u64,
    pub merge_passes: u64,
    /// Largest buffered byte count observed (see [`KeyedItem::mem_size`]).
    pub peak_buffer_bytes: usize,
}

/// Sorts [`KeyedItem`]s, spilling sorted runs whenever the buffer would grow
/// past `budget` bytes.
pub struct ExternalSorter {
    budget: usize,
    dir: Arc<TempDir>,
    name: String,
    buffer: Vec<KeyedItem>,
    buffered_bytes: usize,
    runs: VecDeque<PathBuf>,
    next_run: u64,
    stats: SortStats,
}

impl ExternalSorter {
    /// A sorter writing its runs into a fresh temporary directory under `spill_dir`.
    pub fn new(budget: usize, spill_dir: &Path) -> io::Result<Self> {
        Ok(Self::in_dir(budget, Arc::new(job_dir(spill_dir)?), "sort"))
    }

    fn in_dir(budget: usize, dir: Arc<TempDir>, name: &str) -> Self {
        ExternalSorter {
            budget: budget.max(1),
            dir,
            name: name.to_string(),
            buffer: Vec::new(),
            buffered_bytes: 0,
            runs: VecDeque::new(),
            next_run: 0,
            stats: SortStats::default(),
        }
    }

    pub fn buffered_bytes(&self) -> usize {
        self.buffered_bytes
    }

    pub fn stats(&self) -> SortStats {
        self.stats
    }

    pub fn push(&mut self, item: KeyedItem) -> io::Result<()> {
        let size = item.mem_size();
        if !self.buffer.is_empty() && self.buffered_bytes + size > self.budget {
            self.spill()?;
        }
        self.buffer.push(item);
        self.buffered_bytes += size;
        self.stats.items += 1;
        self.stats.peak_buffer_bytes = self.stats.peak_buffer_bytes.max(self.buffered_bytes);
        Ok(())
    }

    fn run_path(&mut self) -> PathBuf {
        let p = self.dir.path().join(format!("{}-run-{:06}", self.name, self.next_run));
        self.next_run += 1;
        p
    }

    fn spill(&mut self) -> io::Result<()> {
        self.buffer.sort_unstable();
        let path = self.run_path();
        let mut w = BufWriter::with_capacity(1 << 16, File::create(&path)?);
        for item in self.buffer.drain(..) {
            write_item(&mut w, &item)?;
        }
        w.flush()?;
        self.buffered_bytes = 0;
        self.runs.push_back(path);
        self.stats.spilled_runs += 1;
        Ok(())
    }

    /// Merges groups of runs until one final merge can cover them all.
    fn reduce_fan_in(&mut self) -> io::Result<()> {
        while self.runs.len() + 1 > MAX_MERGE_FAN_IN {
            let group: Vec<PathBuf> = self.runs.drain(..MAX_MERGE_FAN_IN).collect();
            let sources = group.iter().map(|p| RunReader::open(p).map(MergeSource::Run)).collect::<io::Result<_>>()?;
            let mut merger = Merger::new(sources)?;
            let path = self.run_path();
            let mut w = BufWriter::with_capacity(1 << 16, File::create(&path)?);
            while let Some(item) = merger.next_item()? {
                write_item(&mut w, &item)?;
            }
            w.flush()?;
            drop(merger);
            for p in &group {
                fs::remove_file(p)?;
            }
            self.runs.push_back(path);
            self.stats.merge_passes += 1;
        }
        Ok(())
    }

    /// Finishes input and returns the items in sorted order.
    pub fn finish(mut self) -> io::Result<SortedStream> {
        self.buffer.sort_unstable();
        let buffer = mem::take(&mut self.buffer);
        let inner = if self.runs.is_empty() {
            SortedInner::Memory(buffer.into_iter())
        } else {
            self.reduce_fan_in()?;
            let mut sources: Vec<MergeSource> =
                self.runs.iter().map(|p| RunReader::open(p).map(MergeSource::Run)).collect::<io::Result<_>>()?;
            sources.push(MergeSource::Memory(buffer.into_iter()));
            self.stats.merge_passes += 1;
            SortedInner::Merge(Box::new(Merger::new(sources)?))
        };
        Ok(SortedStream { inner, stats: self.stats, _dir: self.dir, failed: false })
    }
}

fn job_dir(spill_dir: &Path) -> io::Result<TempDir> {
    fs::create_dir_all(spill_dir)?;
    tempfile::Builder::new().prefix("flatlink-").tempdir_in(spill_dir)
}

enum SortedInner {
    Memory(std::vec::IntoIter<KeyedItem>),
    Merge(Box<Merger>),
}

/// Sorted output of an [`ExternalSorter`]. Keeps the spill directory alive
/// until dropped.
pub struct SortedStream {
    inner: SortedInner,
    stats: SortStats,
    _dir: Arc<TempDir>,
    failed: bool,
}

impl SortedStream {
    pub fn stats(&self) -> SortStats {
        self.stats
    }
}

impl Iterator for SortedStream {
    type Item = io::Result<KeyedItem>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match &mut self.inner {
            SortedInner::Memory(it) => it.next().map(Ok),
            SortedInner::Merge(m) => match m.next_item() {
                Ok(item) => item.map(Ok),
                Err(e) => {
                    self.failed = true;
                    Some(Err(e))
                }
            },
        }
    }
}

/// Sorts `items` by `(key, tag, value)` using the whole memory budget of `cfg`.
pub fn external_sort<I>(items: I, cfg: &ExecConfig) -> Result<SortedStream, ExecError>
where
    I: IntoIterator<Item = KeyedItem>,
{
    cfg.validate()?;
    let mut sorter = ExternalSorter::new(cfg.memory_budget_bytes, &cfg.spill_dir)?;
    for item in items {
        sorter.push(item)?;
    }
    Ok(sorter.finish()?)
}

// ---------------------------------------------------------------------------
// group-by

/// The values of one key, streamed in `(tag, value)` order.
pub struct GroupValues<'a> {
    key: &'a [u8],
    stream: &'a mut SortedStream,
    carry: &'a mut Option<KeyedItem>,
    error: Option<io::Error>,
    ended: bool,
}

impl GroupValues<'_> {
    pub fn key(&self) -> &[u8] {
        self.key
    }

    fn fill(&mut self) {
        if self.ended || self.carry.is_some() {
            return;
        }
        match self.stream.next() {
            Some(Ok(item)) => *self.carry = Some(item),
            Some(Err(e)) => {
                self.error = Some(e);
                self.ended = true;
            }
            None => self.ended = true,
        }
    }

    /// Tag of the next value of this key, without consuming it.
    pub fn peek_tag(&mut self) -> Option<u16> {
        self.fill();
        match self.carry.as_ref() {
            Some(item) if item.key == self.key => Some(item.tag),
            _ => None,
        }
    }

    /// Next value, if it belongs to input `tag`.
    pub fn next_if_tag(&mut self, tag: u16) -> Option<Vec<u8>> {
        if self.peek_tag() == Some(tag) {
            self.next().map(|(_, v)| v)
        } else {
            None
        }
    }
}

impl Iterator for GroupValues<'_> {
    type Item = (u16, Vec<u8>);

    fn next(&mut self) -> Option<Self::Item> {
        self.fill();
        match self.carry.take() {
            Some(item) if item.key == self.key => Some((item.tag, item.value)),
            other => {
                *self.carry = other;
                None
            }
        }
    }
}

/// Sink for reduce output records of one key.
pub struct Emitter<'a> {
    out: &'a mut BufWriter<File>,
    key: &'a [u8],
    records: u64,
}

impl Emitter<'_> {
    pub fn emit(&mut self, record: &[u8]) -> io::Result<()> {
        self.out.write_all(&(self.key.len() as u32).to_le_bytes())?;
        self.out.write_all(self.key)?;
        self.out.write_all(&(record.len() as u32).to_le_bytes())?;
        self.out.write_all(record)?;
        self.records += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JobStats {
    pub items_in: u64,
    pub groups: u64,
    pub records_out: u64,
    pub spilled_runs: u64,
    /// Peak of the summed sorter buffers during the map phase.
    pub peak_buffer_bytes: usize,
    pub per_sorter_budget: usize,
}

struct PartitionOutput {
    path: PathBuf,
    groups: u64,
    records: u64,
    sort: SortStats,
}

/// Reduce output of a [`run_group_by`] job, held in private files until read.
pub struct GroupByOutput {
    dir: Arc<TempDir>,
    paths: Vec<PathBuf>,
    stats: JobStats,
}

impl GroupByOutput {
    pub fn stats(&self) -> &JobStats {
        &self.stats
    }

    /// Records in ascending `(partition, key)` order, emission order within a key.
    pub fn records(self) -> OutputRecords {
        OutputRecords { _dir: self.dir, pending: self.paths.into(), current: None }
    }

    /// Records in ascending key order across all partitions.
    pub fn records_by_key(self) -> io::Result<KeyOrderedRecords> {
        let mut readers = Vec::with_capacity(self.paths.len());
        let mut heap = BinaryHeap::new();
        for (i, p) in self.paths.iter().enumerate() {
            let mut r = BufReader::with_capacity(1 << 16, File::open(p)?);
            if let Some((k, rec)) = read_output_frame(&mut r)? {
                heap.push(Reverse((k, i, rec)));
            }
            readers.push(r);
        }
        Ok(KeyOrderedRecords { _dir: self.dir, readers, heap })
    }
}

fn read_output_frame<R: Read>(r: &mut R) -> io::Result<Option<(Vec<u8>, Vec<u8>)>> {
    let Some(key) = read_blob(r, true)? else {
        return Ok(None);
    };
    let rec = read_blob(r, false)?.unwrap_or_default();
    Ok(Some((key, rec)))
}

pub struct OutputRecords {
    _dir: Arc<TempDir>,
    pending: VecDeque<PathBuf>,
    current: Option<BufReader<File>>,
}

impl Iterator for OutputRecords {
    type Item = io::Result<Vec<u8>>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(r) = self.current.as_mut() {
                match read_output_frame(r) {
                    Ok(Some((_, rec))) => return Some(Ok(rec)),
                    Ok(None) => self.current = None,
                    Err(e) => {
                        self.pending.clear();
                        self.current = None;
                        return Some(Err(e));
                    }
                }
            }
            let path = self.pending.pop_front()?;
            match File::open(&path) {
                Ok(f) => self.current = Some(BufReader::with_capacity(1 << 16, f)),
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// `(key, reader index, record)`, smallest first.
type MergeEntry = Reverse<(Vec<u8>, usize, Vec<u8>)>;

pub struct KeyOrderedRecords {
    _dir: Arc<TempDir>,
    readers: Vec<BufReader<File>>,
    heap: BinaryHeap<MergeEntry>,
}

impl Iterator for KeyOrderedRecords {
    /// `(group key, record)`
    type Item = io::Result<(Vec<u8>, Vec<u8>)>;

    fn next(&mut self) -> Option<Self::Item> {
        let Reverse((key, i, rec)) = self.heap.pop()?;
        match read_output_frame(&mut self.readers[i]) {
            Ok(Some((k, r))) => self.heap.push(Reverse((k, i, r))),
            Ok(None) => {}
            Err(e) => {
                self.heap.clear();
                return Some(Err(e));
            }
        }
        Some(Ok((key, rec)))
    }
}

/// One tagged input of a group-by job.
pub type RecordStream<'a> = Box<dyn Iterator<Item = io::Result<Vec<u8>>> + 'a>;

/// Groups the records of all `inputs` by `key_fn` and reduces each group.
///
/// `reduce_fn` is called exactly once per distinct key. Its values arrive
/// ordered by input tag, then by value bytes, and are streamed from the merged
/// runs, so a reducer that does not collect them never holds a whole group in
/// memory.
pub fn run_group_by<K, R>(
    inputs: Vec<(u16, RecordStream<'_>)>,
    mut key_fn: K,
    reduce_fn: R,
    cfg: &ExecConfig,
) -> Result<GroupByOutput, ExecError>
where
    K: FnMut(u16, &[u8]) -> Result<Vec<u8>, String>,
    R: Fn(&[u8], &mut GroupValues<'_>, &mut Emitter<'_>) -> Result<(), ReduceError> + Sync,
{
    cfg.validate()?;
    let dir = Arc::new(job_dir(&cfg.spill_dir)?);
    let budget = cfg.per_sorter_budget();
    let mut sorters: Vec<ExternalSorter> = (0..cfg.partitions)
        .map(|p| ExternalSorter::in_dir(budget, Arc::clone(&dir), &format!("p{p:04}")))
        .collect();

    let mut stats = JobStats { per_sorter_budget: budget, ..Default::default() };
    let mut buffered_total = 0usize;
    for (tag, records) in inputs {
        for rec in records {
            let rec = rec?;
            let key = key_fn(tag, &rec).map_err(|message| ExecError::Map { tag, message })?;
            if key.is_empty() {
                return Err(ExecError::Map { tag, message: "empty key".into() });
            }
            let sorter = &mut sorters[partition_of(&key, cfg.partitions)];
            let before = sorter.buffered_bytes();
            sorter.push(KeyedItem { key, tag, value: rec })?;
            buffered_total = buffered_total - before + sorter.buffered_bytes();
            stats.peak_buffer_bytes = stats.peak_buffer_bytes.max(buffered_total);
            stats.items_in += 1;
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| ExecError::Config(e.to_string()))?;
    let results: Vec<Result<PartitionOutput, ExecError>> = pool.install(|| {
        sorters
            .into_par_iter()
            .enumerate()
            .map(|(p, sorter)| reduce_partition(p, sorter, &reduce_fn, dir.path()))
            .collect()
    });

    let mut paths = Vec::with_capacity(results.len());
    for r in results {
        let part = r?;
        stats.groups += part.groups;
        stats.records_out += part.records;
        stats.spilled_runs += part.sort.spilled_runs;
        paths.push(part.path);
    }
    Ok(GroupByOutput { dir, paths, stats })
}

fn reduce_partition<R>(p: usize, sorter: ExternalSorter, reduce_fn: &R, dir: &Path) -> Result<PartitionOutput, ExecError>
where
    R: Fn(&[u8], &mut GroupValues<'_>, &mut Emitter<'_>) -> Result<(), ReduceError> + Sync,
{
    let mut stream = sorter.finish()?;
    let path = dir.join(format!("p{p:04}.out"));
    let mut out = BufWriter::with_capacity(1 << 16, File::create(&path)?);
    let mut carry: Option<KeyedItem> = None;
    let (mut groups, mut records) = (0u64, 0u64);
    loop {
        if carry.is_none() {
            match stream.next() {
                Some(item) => carry = Some(item?),
                None => break,
            }
        }
        let key = carry.as_ref().map(|i| i.key.clone()).unwrap();
        let mut values = GroupValues { key: &key, stream: &mut stream, carry: &mut carry, error: None, ended: false };
        let mut emitter = Emitter { out: &mut out, key: &key, records: 0 };
        reduce_fn(&key, &mut values, &mut emitter).map_err(|e| ExecError::Reduce {
            key: String::from_utf8_lossy(&key).into_owned(),
            message: e.to_string(),
        })?;
        values.by_ref().for_each(drop);
        if let Some(e) = values.error.take() {
            return Err(e.into());
        }
        groups += 1;
        records += emitter.records;
    }
    out.flush()?;
    Ok(PartitionOutput { path, groups, records, sort: stream.stats() })
}
