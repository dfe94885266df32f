//! File-level encoding: bytes -> padded source packets -> LT coded packets ->
//! RS-protected oligos, and the reverse for recovered packets.

use serde::{Deserialize, Serialize};

use crate::dna::{assemble_oligo, constraint_report, ConstraintReport, Oligo, Payload, PoolBounds, PAYLOAD_BYTES};
use crate::error::{Error, Result};
use crate::fountain::{lt_encode, LtCode, SeedSchedule, SolitonParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeParams {
    pub soliton: SolitonParams,
    /// Coded oligos in the pool.
    pub n_oligos: usize,
}

impl CodeParams {
    pub fn capacity_bytes(&self) -> usize {
        self.soliton.k * PAYLOAD_BYTES
    }

    pub fn validate(&self) -> Result<()> {
        self.soliton.validate()?;
        if self.n_oligos < self.soliton.k {
            return Err(Error::Config(format!(
                "{} oligos cannot carry {} information packets",
                self.n_oligos, self.soliton.k
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EncodedPool {
    pub seeds: SeedSchedule,
    pub source: Vec<Payload>,
    pub oligos: Vec<Oligo>,
    pub data_len: usize,
    /// Zero bytes appended to fill the last packet and the unused ones.
    pub pad_len: usize,
}

impl EncodedPool {
    pub fn constraint_reports(&self, bounds: &PoolBounds) -> Vec<ConstraintReport> {
        self.oligos.iter().map(|o| constraint_report(o, bounds)).collect()
    }

    pub fn seeded_oligos(&self) -> Vec<(u32, Oligo)> {
        self.seeds.seeds.iter().copied().zip(self.oligos.iter().cloned()).collect()
    }
}

pub fn packets_from_bytes(data: &[u8], k: usize) -> Result<Vec<Payload>> {
    if data.len() > k * PAYLOAD_BYTES {
        return Err(Error::Param(format!(
            "input of {} bytes exceeds the {} byte capacity",
            data.len(),
            k * PAYLOAD_BYTES
        )));
    }
    let mut packets = vec![[0u8; PAYLOAD_BYTES]; k];
    for (i, chunk) in data.chunks(PAYLOAD_BYTES).enumerate() {
        packets[i][..chunk.len()].copy_from_slice(chunk);
    }
    Ok(packets)
}

pub fn bytes_from_packets(packets: &[Payload], data_len: usize) -> Result<Vec<u8>> {
    let mut out: Vec<u8> = packets.iter().flatten().copied().collect();
    if data_len > out.len() {
        return Err(Error::Param(format!("data length {data_len} exceeds {} recovered bytes", out.len())));
    }
    out.truncate(data_len);
    Ok(out)
}

/// Deterministic: the pool depends only on the data and the parameters.
pub fn encode_bytes(data: &[u8], params: &CodeParams) -> Result<EncodedPool> {
    params.validate()?;
    let code = LtCode::new(params.soliton)?;
    let source = packets_from_bytes(data, params.soliton.k)?;
    let seeds = SeedSchedule::first(params.n_oligos);
    let coded = lt_encode(&code, &source, &seeds)?;
    let oligos = seeds.seeds.iter().zip(&coded).map(|(&s, p)| assemble_oligo(s, p)).collect();
    Ok(EncodedPool {
        seeds,
        source,
        oligos,
        data_len: data.len(),
        pad_len: params.capacity_bytes() - data.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padding_roundtrip() {
        let params = CodeParams {
            soliton: SolitonParams::new(10, 0.2, 0.5).unwrap(),
            n_oligos: 14,
        };
        let data: Vec<u8> = (0..70u8).collect();
        let pool = encode_bytes(&data, &params).unwrap();
        assert_eq!(pool.oligos.len(), 14);
        assert_eq!(pool.pad_len, 320 - 70);
        assert_eq!(bytes_from_packets(&pool.source, pool.data_len).unwrap(), data);
        let empty = encode_bytes(&[], &params).unwrap();
        assert_eq!(empty.oligos.len(), 14);
        assert!(empty.source.iter().all(|p| p == &[0u8; 32]));
        assert!(encode_bytes(&[0; 321], &params).is_err());
        assert_eq!(encode_bytes(&data, &params).unwrap().oligos, pool.oligos);
    }
}
