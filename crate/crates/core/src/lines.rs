use std::io::{self, BufRead};
use std::path::Path;

use crate::rdf_ingest::open_input;

/// Numbered physical lines of a file, terminator stripped. A final line
/// without `\n` is still yielded.
pub struct LineReader<R> {
    src: R,
    line_no: u64,
    bytes: u64,
}

impl<R: BufRead> LineReader<R> {
    pub fn new(src: R) -> Self {
        LineReader { src, line_no: 0, bytes: 0 }
    }

    /// Bytes consumed so far, terminators included.
    pub fn bytes_read(&self) -> u64 {
        self.bytes
    }
}

impl LineReader<Box<dyn BufRead + Send>> {
    pub fn open(path: &Path) -> io::Result<Self> {
        open_input(path)
            .map(LineReader::new)
            .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    }
}

impl<R: BufRead> Iterator for LineReader<R> {
    /// `(1-based line number, line bytes)`
    type Item = io::Result<(u64, Vec<u8>)>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut buf = Vec::new();
        match self.src.read_until(b'\n', &mut buf) {
            Ok(0) => None,
            Ok(n) => {
                self.bytes += n as u64;
                if buf.last() == Some(&b'\n') {
                    buf.pop();
                }
                self.line_no += 1;
                Some(Ok((self.line_no, buf)))
            }
            Err(e) => Some(Err(e)),
        }
    }
}

pub fn invalid_data(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}
