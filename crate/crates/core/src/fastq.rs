//! Streaming FASTQ reader and writer (4-line records, Phred+33 qualities).
//!
//! Input may be gzip-compressed; [`open_fastq`] sniffs the magic bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;

use crate::error::{Error, Result};

pub const PHRED_OFFSET: u8 = 33;
/// Clip applied to basecall probabilities so that no log ever sees 0 or 1.
pub const PROB_EPS: f64 = 1e-12;
/// Highest quality character accepted (`~`).
pub const MAX_Q: u8 = 93;

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ReadRecord {
    /// Header text after the `@`.
    pub id: String,
    /// ASCII basecalls over `ACGTN`.
    pub bases: Vec<u8>,
    /// Phred scores, one per base.
    pub qscores: Vec<u8>,
}

impl ReadRecord {
    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn has_n(&self) -> bool {
        self.bases.contains(&b'N')
    }

    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(b"@")?;
        out.write_all(self.id.as_bytes())?;
        out.write_all(b"\n")?;
        out.write_all(&self.bases)?;
        out.write_all(b"\n+\n")?;
        let qual: Vec<u8> = self.qscores.iter().map(|q| q + PHRED_OFFSET).collect();
        out.write_all(&qual)?;
        out.write_all(b"\n")
    }
}

static PROB_TABLE: std::sync::OnceLock<[f64; MAX_Q as usize + 1]> = std::sync::OnceLock::new();

fn prob_table() -> &'static [f64; MAX_Q as usize + 1] {
    PROB_TABLE.get_or_init(|| {
        let mut t = [0.0; MAX_Q as usize + 1];
        for (q, slot) in t.iter_mut().enumerate() {
            *slot = raw_phred_prob(q as f64);
        }
        t
    })
}

fn raw_phred_prob(q: f64) -> f64 {
    (1.0 - 10f64.powf(-q / 10.0)).clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Probability that a basecall with quality `q` is correct, `1 - 10^(-q/10)`,
/// clipped to `[PROB_EPS, 1 - PROB_EPS]`.
pub fn phred_to_prob(q: f64) -> Result<f64> {
    if !(q >= 0.0) {
        return Err(Error::Param(format!("negative Q-score {q}")));
    }
    Ok(raw_phred_prob(q))
}

/// Table-backed [`phred_to_prob`] for integer scores.
#[inline]
pub fn phred_prob(q: u8) -> f64 {
    prob_table()[q.min(MAX_Q) as usize]
}

/// Iterator over the records of a FASTQ stream.
pub struct FastqReader<R> {
    inner: R,
    line: u64,
    header: String,
    seq: String,
    plus: String,
    qual: String,
}

impl<R: BufRead> FastqReader<R> {
    pub fn new(inner: R) -> Self {
        FastqReader {
            inner,
            line: 0,
            header: String::new(),
            seq: String::new(),
            plus: String::new(),
            qual: String::new(),
        }
    }

    fn read_line(&mut self, which: u8) -> Result<usize> {
        let buf = match which {
            0 => &mut self.header,
            1 => &mut self.seq,
            2 => &mut self.plus,
            _ => &mut self.qual,
        };
        buf.clear();
        let n = self.inner.read_line(buf)?;
        if buf.ends_with('\n') {
            buf.pop();
            if buf.ends_with('\r') {
                buf.pop();
            }
        }
        self.line += 1;
        Ok(n)
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Fastq {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next_record(&mut self) -> Result<Option<ReadRecord>> {
        // Skip blank lines between records.
        loop {
            if self.read_line(0)? == 0 {
                return Ok(None);
            }
            if !self.header.is_empty() {
                break;
            }
        }
        let Some(id) = self.header.strip_prefix('@') else {
            return Err(self.err(format!("expected '@' header, found {:?}", self.header)));
        };
        let id = id.to_string();
        if self.read_line(1)? == 0 {
            return Err(self.err("truncated record: missing sequence line"));
        }
        if self.read_line(2)? == 0 {
            return Err(self.err("truncated record: missing '+' line"));
        }
        if !self.plus.starts_with('+') {
            return Err(self.err(format!("expected '+' separator, found {:?}", self.plus)));
        }
        if self.read_line(3)? == 0 {
            return Err(self.err("truncated record: missing quality line"));
        }
        if self.seq.len() != self.qual.len() {
            return Err(self.err(format!(
                "sequence length {} != quality length {}",
                self.seq.len(),
                self.qual.len()
            )));
        }
        let bases = self.seq.as_bytes().to_vec();
        if let Some(bad) = bases.iter().find(|c| !matches!(c, b'A' | b'C' | b'G' | b'T' | b'N')) {
            return Err(self.err(format!("invalid base {:?}", *bad as char)));
        }
        let mut qscores = Vec::with_capacity(bases.len());
        for &c in self.qual.as_bytes() {
            if !(PHRED_OFFSET..=PHRED_OFFSET + MAX_Q).contains(&c) {
                return Err(self.err(format!("quality character {:?} out of Phred+33 range", c as char)));
            }
            qscores.push(c - PHRED_OFFSET);
        }
        Ok(Some(ReadRecord { id, bases, qscores }))
    }
}

impl<R: BufRead> Iterator for FastqReader<R> {
    type Item = Result<ReadRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

pub fn parse_fastq<R: BufRead>(input: R) -> FastqReader<R> {
    FastqReader::new(input)
}

/// Opens a FASTQ file, decompressing transparently if it is gzipped.
pub fn open_fastq(path: &Path) -> Result<FastqReader<Box<dyn BufRead>>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader: Box<dyn BufRead> = if n == 2 && magic == [0x1f, 0x8b] {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(BufReader::with_capacity(1 << 16, file))
    };
    Ok(FastqReader::new(reader))
}

pub fn read_fastq_file(path: &Path) -> Result<Vec<ReadRecord>> {
    open_fastq(path)?.collect()
}

pub fn write_fastq<'a, W: Write>(
    out: &mut W,
    records: impl IntoIterator<Item = &'a ReadRecord>,
) -> std::io::Result<()> {
    for r in records {
        r.write(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_all(text: &str) -> Result<Vec<ReadRecord>> {
        parse_fastq(text.as_bytes()).collect()
    }

    #[test]
    fn quality_characters_decode_to_phred() {
        let recs = parse_all("@r1\nAC\n+\n+I\n").unwrap();
        assert_eq!(recs[0].qscores, vec![10, 40]);
    }

    #[test]
    fn phred_probabilities() {
        assert!((phred_to_prob(10.0).unwrap() - 0.9).abs() < 1e-15);
        assert!((phred_to_prob(30.0).unwrap() - 0.999).abs() < 1e-15);
        assert_eq!(phred_to_prob(0.0).unwrap(), PROB_EPS);
        assert!(phred_to_prob(-1.0).is_err());
        assert_eq!(phred_prob(10), phred_to_prob(10.0).unwrap());
        for q in 1..=MAX_Q {
            assert!(phred_prob(q) > phred_prob(q - 1) || phred_prob(q) == 1.0 - PROB_EPS);
        }
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let text = "@read/1 extra words\nACGTN\n+\nII#+5\n@r2\nTTTT\n+\n!!!!\n";
        let recs = parse_all(text).unwrap();
        let mut out = Vec::new();
        write_fastq(&mut out, &recs).unwrap();
        assert_eq!(std::str::from_utf8(&out).unwrap(), text);
    }

    #[test]
    fn malformed_records_report_line_numbers() {
        let e = parse_all("@r1\nACG\n+\nII\n").unwrap_err();
        assert!(matches!(e, Error::Fastq { line: 4, .. }), "{e}");
        let e = parse_all("@r1\nACG\n+\nIII\nr2\nA\n+\nI\n").unwrap_err();
        assert!(matches!(e, Error::Fastq { line: 5, .. }), "{e}");
        let e = parse_all("@r1\nACG\n-\nIII\n").unwrap_err();
        assert!(matches!(e, Error::Fastq { line: 3, .. }), "{e}");
        let e = parse_all("@r1\nACG\n").unwrap_err();
        assert!(e.to_string().contains("truncated"), "{e}");
        assert!(parse_all("@r1\nAXG\n+\nIII\n").is_err());
    }

    #[test]
    fn crlf_and_blank_lines_are_tolerated() {
        let recs = parse_all("@r1\r\nAC\r\n+\r\nII\r\n\n").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].bases, b"AC");
    }
}
