//! The (38, 36) Reed-Solomon intra-oligo code over GF(2^8).
//!
//! Codeword symbol `i` is the coefficient of `x^(37 - i)`, so the 36 message
//! symbols come first and the two parity symbols last. The generator polynomial
//! is `(x - 1)(x - alpha)`, giving minimum distance 3: one symbol error is
//! corrected, two are always detected or (rarely) miscorrected, never reported
//! as clean.

use crate::error::{Error, Result};
use crate::gf256::Gf;

pub const RS_N: usize = 38;
pub const RS_K: usize = 36;
pub const RS_PARITY: usize = RS_N - RS_K;

/// Symbols 0..4 carry the 16-nt seed.
pub const SEED_SYMBOLS: std::ops::Range<usize> = 0..4;

// g(x) = x^2 + g1 x + g0 with g1 = 1 + alpha, g0 = alpha.
const G1: Gf = Gf(3);
const G0: Gf = Gf(2);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RsCodeword(pub [Gf; RS_N]);

impl RsCodeword {
    pub fn symbols(&self) -> &[Gf; RS_N] {
        &self.0
    }

    pub fn to_bytes(&self) -> [u8; RS_N] {
        self.0.map(|g| g.0)
    }

    pub fn from_bytes(bytes: &[u8; RS_N]) -> Self {
        RsCodeword(bytes.map(Gf))
    }

    pub fn message(&self) -> &[Gf] {
        &self.0[..RS_K]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RsStatus {
    Clean,
    Corrected,
    DetectedUncorrectable,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RsDecodeOutcome {
    pub status: RsStatus,
    /// Codeword indices that were changed; one entry when `Corrected`.
    pub corrected_positions: Vec<usize>,
    pub codeword: Option<RsCodeword>,
}

impl RsDecodeOutcome {
    pub fn is_ok(&self) -> bool {
        self.status != RsStatus::DetectedUncorrectable
    }

    pub fn touched_seed(&self) -> bool {
        self.corrected_positions
            .iter()
            .any(|p| SEED_SYMBOLS.contains(p))
    }
}

/// Parity symbols for a 36-symbol message.
fn parity(message: &[Gf]) -> [Gf; RS_PARITY] {
    // LFSR division of m(x) * x^2 by g(x).
    let (mut r1, mut r0) = (Gf::ZERO, Gf::ZERO);
    for &m in message {
        let fb = m + r1;
        r1 = r0 + fb * G1;
        r0 = fb * G0;
    }
    [r1, r0]
}

pub fn rs_encode(message: &[Gf]) -> Result<RsCodeword> {
    if message.len() != RS_K {
        return Err(Error::Length {
            what: "RS message symbols",
            expected: RS_K,
            got: message.len(),
        });
    }
    let mut cw = [Gf::ZERO; RS_N];
    cw[..RS_K].copy_from_slice(message);
    cw[RS_K..].copy_from_slice(&parity(message));
    Ok(RsCodeword(cw))
}

/// Byte-level convenience over [`rs_encode`].
pub fn rs_encode_bytes(message: &[u8; RS_K]) -> [u8; RS_N] {
    let msg = message.map(Gf);
    let p = parity(&msg);
    let mut out = [0u8; RS_N];
    out[..RS_K].copy_from_slice(message);
    out[RS_K] = p[0].0;
    out[RS_K + 1] = p[1].0;
    out
}

/// Syndromes `(r(1), r(alpha))`.
pub fn syndromes(word: &[Gf]) -> (Gf, Gf) {
    let mut s0 = Gf::ZERO;
    let mut s1 = Gf::ZERO;
    for &c in word {
        s0 = s0 + c;
        s1 = s1 * Gf(2) + c;
    }
    (s0, s1)
}

pub fn rs_decode(word: &[Gf]) -> Result<RsDecodeOutcome> {
    if word.len() != RS_N {
        return Err(Error::Length {
            what: "RS codeword symbols",
            expected: RS_N,
            got: word.len(),
        });
    }
    let mut cw = [Gf::ZERO; RS_N];
    cw.copy_from_slice(word);
    let (s0, s1) = syndromes(&cw);
    let detected = RsDecodeOutcome {
        status: RsStatus::DetectedUncorrectable,
        corrected_positions: Vec::new(),
        codeword: None,
    };
    match (s0.log(), s1.log()) {
        (None, None) => Ok(RsDecodeOutcome {
            status: RsStatus::Clean,
            corrected_positions: Vec::new(),
            codeword: Some(RsCodeword(cw)),
        }),
        // A single error makes both syndromes nonzero.
        (None, Some(_)) | (Some(_), None) => Ok(detected),
        (Some(l0), Some(l1)) => {
            let degree = (l1 + 255 - l0) % 255;
            if degree >= RS_N {
                return Ok(detected);
            }
            let idx = RS_N - 1 - degree;
            cw[idx] = cw[idx] + s0;
            Ok(RsDecodeOutcome {
                status: RsStatus::Corrected,
                corrected_positions: vec![idx],
                codeword: Some(RsCodeword(cw)),
            })
        }
    }
}

pub fn rs_decode_bytes(word: &[u8; RS_N]) -> RsDecodeOutcome {
    rs_decode(&word.map(Gf)).expect("fixed-length input")
}
