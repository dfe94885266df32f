//! Bit/base mapping and the 152-nt oligo layout (16-nt seed, 128-nt payload,
//! 8-nt Reed-Solomon parity).
//!
//! Two bits form one base with the first bit as the high bit:
//! `00 = A, 01 = C, 10 = G, 11 = T`. Bytes are written MSB-first, so one byte
//! is four bases and one RS symbol.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rs::{rs_decode_bytes, rs_encode_bytes, RsDecodeOutcome, RS_K, RS_N};

pub const SEED_NT: usize = 16;
pub const PAYLOAD_NT: usize = 128;
pub const PARITY_NT: usize = 8;
pub const OLIGO_NT: usize = SEED_NT + PAYLOAD_NT + PARITY_NT;
pub const PAYLOAD_BYTES: usize = PAYLOAD_NT / 4;
pub const PAYLOAD_BITS: usize = PAYLOAD_NT * 2;

pub const PAYLOAD_RANGE: std::ops::Range<usize> = SEED_NT..SEED_NT + PAYLOAD_NT;
pub const PARITY_RANGE: std::ops::Range<usize> = SEED_NT + PAYLOAD_NT..OLIGO_NT;

pub const PRIMER_5P: &str = "GTTCAGAGTTCTACAGTCCGACGATC";
pub const PRIMER_3P: &str = "TGGAATTCTCGGGTGCCAAGG";

/// One payload packet (256 bits).
pub type Payload = [u8; PAYLOAD_BYTES];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Base {
    A = 0,
    C = 1,
    G = 2,
    T = 3,
}

impl Base {
    pub const ALL: [Base; 4] = [Base::A, Base::C, Base::G, Base::T];

    pub fn from_bits(bits: u8) -> Base {
        Base::ALL[(bits & 3) as usize]
    }

    pub fn bits(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_ascii(c: u8) -> Option<Base> {
        match c {
            b'A' => Some(Base::A),
            b'C' => Some(Base::C),
            b'G' => Some(Base::G),
            b'T' => Some(Base::T),
            _ => None,
        }
    }

    pub fn to_ascii(self) -> u8 {
        b"ACGT"[self as usize]
    }
}

impl fmt::Display for Base {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_ascii() as char)
    }
}

/// Maps a bit string (`b'0'`/`b'1'` or `0`/`1` values) to bases.
pub fn bits_to_bases(bits: &[u8]) -> Result<Vec<Base>> {
    if bits.len() % 2 != 0 {
        return Err(Error::Param(format!(
            "bit string length {} is odd",
            bits.len()
        )));
    }
    let bit = |b: u8| -> Result<u8> {
        match b {
            0 | b'0' => Ok(0),
            1 | b'1' => Ok(1),
            other => Err(Error::Param(format!("not a bit: {other:#x}"))),
        }
    };
    bits.chunks_exact(2)
        .map(|p| Ok(Base::from_bits(bit(p[0])? << 1 | bit(p[1])?)))
        .collect()
}

/// Inverse of [`bits_to_bases`], yielding `0`/`1` values.
pub fn bases_to_bits(bases: &[Base]) -> Vec<u8> {
    bases
        .iter()
        .flat_map(|b| [b.bits() >> 1, b.bits() & 1])
        .collect()
}

pub fn bytes_to_bases(bytes: &[u8]) -> Vec<Base> {
    bytes
        .iter()
        .flat_map(|&byte| (0..4).map(move |i| Base::from_bits(byte >> (6 - 2 * i))))
        .collect()
}

/// Packs bases into bytes; `bases.len()` must be a multiple of 4.
pub fn bases_to_bytes(bases: &[Base]) -> Vec<u8> {
    bases
        .chunks_exact(4)
        .map(|c| c.iter().fold(0u8, |acc, b| acc << 2 | b.bits()))
        .collect()
}

pub fn bases_to_string(bases: &[Base]) -> String {
    bases.iter().map(|b| b.to_ascii() as char).collect()
}

pub fn parse_bases(s: &str) -> Result<Vec<Base>> {
    s.bytes()
        .map(|c| Base::from_ascii(c).ok_or_else(|| Error::Parse(format!("invalid base {:?}", c as char))))
        .collect()
}

/// A full-length encoded oligo.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Oligo {
    bases: [Base; OLIGO_NT],
}

impl Oligo {
    pub fn from_bases(bases: &[Base]) -> Result<Oligo> {
        let arr: [Base; OLIGO_NT] = bases.try_into().map_err(|_| Error::Length {
            what: "oligo bases",
            expected: OLIGO_NT,
            got: bases.len(),
        })?;
        Ok(Oligo { bases: arr })
    }

    pub fn bases(&self) -> &[Base; OLIGO_NT] {
        &self.bases
    }

    pub fn seed_nt(&self) -> &[Base] {
        &self.bases[..SEED_NT]
    }

    pub fn payload_nt(&self) -> &[Base] {
        &self.bases[PAYLOAD_RANGE]
    }

    pub fn parity_nt(&self) -> &[Base] {
        &self.bases[PARITY_RANGE]
    }

    /// The oligo viewed as an RS word (38 bytes).
    pub fn to_rs_word(&self) -> [u8; RS_N] {
        bases_to_bytes(&self.bases).try_into().expect("152 nt = 38 bytes")
    }

    pub fn from_rs_word(word: &[u8; RS_N]) -> Oligo {
        Oligo::from_bases(&bytes_to_bases(word)).expect("38 bytes = 152 nt")
    }

    pub fn to_string_ascii(&self) -> String {
        bases_to_string(&self.bases)
    }
}

/// The seed value and payload carried by an oligo.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OligoFields {
    pub seed: u32,
    pub payload: Payload,
    pub parity: [u8; 2],
}

pub fn seed_to_bases(seed: u32) -> Vec<Base> {
    bytes_to_bases(&seed.to_be_bytes())
}

pub fn bases_to_seed(bases: &[Base]) -> Option<u32> {
    if bases.len() != SEED_NT {
        return None;
    }
    let b = bases_to_bytes(bases);
    Some(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn assemble_oligo(seed: u32, payload: &Payload) -> Oligo {
    let mut msg = [0u8; RS_K];
    msg[..4].copy_from_slice(&seed.to_be_bytes());
    msg[4..].copy_from_slice(payload);
    Oligo::from_rs_word(&rs_encode_bytes(&msg))
}

/// Bit-string form of [`assemble_oligo`]: 32 seed bits and 256 payload bits.
pub fn assemble_oligo_bits(seed_bits: &[u8], payload_bits: &[u8]) -> Result<Oligo> {
    if seed_bits.len() != 32 {
        return Err(Error::Length {
            what: "seed bits",
            expected: 32,
            got: seed_bits.len(),
        });
    }
    if payload_bits.len() != PAYLOAD_BITS {
        return Err(Error::Length {
            what: "payload bits",
            expected: PAYLOAD_BITS,
            got: payload_bits.len(),
        });
    }
    let seed_bytes = bases_to_bytes(&bits_to_bases(seed_bits)?);
    let payload_bytes = bases_to_bytes(&bits_to_bases(payload_bits)?);
    let seed = u32::from_be_bytes(seed_bytes.try_into().unwrap());
    Ok(assemble_oligo(seed, &payload_bytes.try_into().unwrap()))
}

pub fn parse_oligo(oligo: &Oligo) -> OligoFields {
    let word = oligo.to_rs_word();
    OligoFields {
        seed: u32::from_be_bytes([word[0], word[1], word[2], word[3]]),
        payload: word[4..RS_K].try_into().unwrap(),
        parity: [word[RS_K], word[RS_K + 1]],
    }
}

/// RS-decodes a 152-base sequence.
pub fn rs_check_bases(bases: &[Base; OLIGO_NT]) -> RsDecodeOutcome {
    let word: [u8; RS_N] = bases_to_bytes(bases).try_into().unwrap();
    rs_decode_bytes(&word)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolBounds {
    pub gc_min: f64,
    pub gc_max: f64,
    pub max_homopolymer: usize,
}

impl Default for PoolBounds {
    fn default() -> Self {
        PoolBounds {
            gc_min: 0.3289,
            gc_max: 0.6842,
            max_homopolymer: 13,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub gc_ratio: f64,
    pub max_homopolymer: usize,
    pub within_pool_bounds: bool,
}

pub fn constraint_report(oligo: &Oligo, bounds: &PoolBounds) -> ConstraintReport {
    let bases = oligo.bases();
    let gc = bases.iter().filter(|b| matches!(b, Base::G | Base::C)).count();
    let gc_ratio = gc as f64 / OLIGO_NT as f64;
    let mut longest = 1;
    let mut run = 1;
    for w in bases.windows(2) {
        if w[0] == w[1] {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 1;
        }
    }
    ConstraintReport {
        gc_ratio,
        max_homopolymer: longest,
        within_pool_bounds: gc_ratio >= bounds.gc_min
            && gc_ratio <= bounds.gc_max
            && longest <= bounds.max_homopolymer,
    }
}

/// Writes one FASTA record per oligo, id = 8-hex-digit seed.
pub fn write_fasta<W: Write>(
    mut out: W,
    pool: &[(u32, Oligo)],
    with_primers: bool,
) -> std::io::Result<()> {
    for (seed, oligo) in pool {
        writeln!(out, ">{seed:08x}")?;
        if with_primers {
            writeln!(out, "{PRIMER_5P}{}{PRIMER_3P}", oligo.to_string_ascii())?;
        } else {
            writeln!(out, "{}", oligo.to_string_ascii())?;
        }
    }
    Ok(())
}

/// Reads a FASTA pool written by [`write_fasta`], stripping primers if present.
pub fn read_fasta(text: &str) -> Result<Vec<(u32, Oligo)>> {
    let mut pool = Vec::new();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    while let Some(header) = lines.next() {
        let id = header
            .strip_prefix('>')
            .ok_or_else(|| Error::Parse(format!("expected FASTA header, got {header:?}")))?;
        let seed = u32::from_str_radix(id.split_whitespace().next().unwrap_or(""), 16)
            .map_err(|e| Error::Parse(format!("bad seed id {id:?}: {e}")))?;
        let seq = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("record {id} has no sequence")))?
            .trim();
        let seq = seq
            .strip_prefix(PRIMER_5P)
            .and_then(|s| s.strip_suffix(PRIMER_3P))
            .unwrap_or(seq);
        pool.push((seed, Oligo::from_bases(&parse_bases(seq)?)?));
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rs::RsStatus;
    use proptest::prelude::*;

    #[test]
    fn mapping_matches_table() {
        let b = bits_to_bases(b"00011011").unwrap();
        assert_eq!(bases_to_string(&b), "ACGT");
        assert!(bits_to_bases(b"").unwrap().is_empty());
        assert!(bits_to_bases(b"010").is_err());
    }

    #[test]
    fn zero_oligo_is_all_a() {
        let o = assemble_oligo(0, &[0u8; PAYLOAD_BYTES]);
        assert!(o.bases().iter().all(|&b| b == Base::A));
        assert_eq!(rs_check_bases(o.bases()).status, RsStatus::Clean);
    }

    #[test]
    fn constraint_report_extremes() {
        let bounds = PoolBounds::default();
        let all_a = Oligo::from_bases(&[Base::A; OLIGO_NT]).unwrap();
        let r = constraint_report(&all_a, &bounds);
        assert_eq!(r.gc_ratio, 0.0);
        assert_eq!(r.max_homopolymer, 152);
        assert!(!r.within_pool_bounds);

        let acgt: Vec<Base> = Base::ALL.iter().copied().cycle().take(OLIGO_NT).collect();
        let r = constraint_report(&Oligo::from_bases(&acgt).unwrap(), &bounds);
        assert_eq!(r.gc_ratio, 0.5);
        assert_eq!(r.max_homopolymer, 1);
        assert!(r.within_pool_bounds);
    }

    #[test]
    fn single_base_corruption_is_corrected_anywhere() {
        let payload: Payload = std::array::from_fn(|i| (i * 37 + 11) as u8);
        let oligo = assemble_oligo(0xdead_beef, &payload);
        for pos in 0..OLIGO_NT {
            for sub in Base::ALL {
                if sub == oligo.bases()[pos] {
                    continue;
                }
                let mut bases = *oligo.bases();
                bases[pos] = sub;
                let out = rs_check_bases(&bases);
                assert_eq!(out.status, RsStatus::Corrected);
                assert_eq!(out.corrected_positions, vec![pos / 4]);
                let fixed = Oligo::from_rs_word(&out.codeword.unwrap().to_bytes());
                assert_eq!(fixed, oligo);
            }
        }
    }

    #[test]
    fn bit_level_assembly_matches_byte_level() {
        let seed_bits: Vec<u8> = (0..32).map(|i| (i % 3 == 0) as u8).collect();
        let payload_bits: Vec<u8> = (0..256).map(|i| (i % 5 == 1) as u8).collect();
        let o = assemble_oligo_bits(&seed_bits, &payload_bits).unwrap();
        assert_eq!(bases_to_bits(o.seed_nt()), seed_bits);
        assert_eq!(bases_to_bits(o.payload_nt()), payload_bits);
        assert!(assemble_oligo_bits(&seed_bits[1..], &payload_bits).is_err());
    }

    #[test]
    fn fasta_roundtrip_with_and_without_primers() {
        let pool: Vec<(u32, Oligo)> = (0..3u32)
            .map(|s| (s, assemble_oligo(s, &[s as u8; PAYLOAD_BYTES])))
            .collect();
        for primers in [false, true] {
            let mut buf = Vec::new();
            write_fasta(&mut buf, &pool, primers).unwrap();
            let back = read_fasta(std::str::from_utf8(&buf).unwrap()).unwrap();
            assert_eq!(back, pool);
        }
    }

    proptest! {
        #[test]
        fn bits_roundtrip(bits in proptest::collection::vec(0u8..2, 0..64)) {
            let even = &bits[..bits.len() / 2 * 2];
            let bases = bits_to_bases(even).unwrap();
            prop_assert_eq!(bases_to_bits(&bases), even.to_vec());
        }

        #[test]
        fn oligo_roundtrip(seed: u32, payload in proptest::array::uniform32(any::<u8>())) {
            let o = assemble_oligo(seed, &payload);
            let f = parse_oligo(&o);
            prop_assert_eq!(f.seed, seed);
            prop_assert_eq!(f.payload, payload);
            prop_assert_eq!(rs_check_bases(o.bases()).status, RsStatus::Clean);
        }
    }
}
