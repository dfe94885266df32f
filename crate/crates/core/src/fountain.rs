//! LT inter-oligo code: robust-soliton degree distribution, deterministic
//! seed expansion, encoding, and the required-symbol count.
//!
//! A seed expands through a SplitMix64 stream initialised with the seed value:
//! the first draw picks the degree by inverse CDF over the degree distribution,
//! the following draws pick distinct source indices with a partial
//! Fisher-Yates shuffle of `0..k`. Encoder and decoder must agree on this
//! exactly, so the procedure is pinned by golden-vector tests.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dna::{Payload, PAYLOAD_BYTES};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub k: usize,
    pub c: f64,
    pub delta: f64,
}

impl SolitonParams {
    pub fn new(k: usize, c: f64, delta: f64) -> Result<Self> {
        let p = SolitonParams { k, c, delta };
        p.validate()?;
        Ok(p)
    }

    /// `R = c * ln(k / delta) * sqrt(k)`.
    pub fn r(&self) -> f64 {
        self.c * (self.k as f64 / self.delta).ln() * (self.k as f64).sqrt()
    }

    /// Degree carrying the robust-soliton spike, `round(k / R)`.
    pub fn spike(&self) -> usize {
        (self.k as f64 / self.r()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Param("k must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Param(format!("delta {} outside (0, 1)", self.delta)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Param(format!("c {} must be positive", self.c)));
        }
        let r = self.r();
        if !(r > 0.0) || r >= self.k as f64 {
            return Err(Error::Param(format!(
                "degenerate soliton parameters: R = {r:.4} with k = {}",
                self.k
            )));
        }
        let spike = self.spike();
        if spike == 0 || spike > self.k {
            return Err(Error::Param(format!("spike degree {spike} outside 1..={}", self.k)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DegreeDistribution {
    /// `probabilities[d - 1]` is the probability of degree `d`.
    probabilities: Vec<f64>,
    cdf: Vec<f64>,
    beta: f64,
}

impl DegreeDistribution {
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, degree: usize) -> f64 {
        self.probabilities.get(degree.wrapping_sub(1)).copied().unwrap_or(0.0)
    }

    /// Normaliser `sum(rho + tau)`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn max_degree(&self) -> usize {
        self.probabilities.len()
    }

    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    /// Inverse-CDF lookup for `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> usize {
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) + 1
    }
}

/// Ideal soliton term.
pub fn rho(k: usize, d: usize) -> f64 {
    match d {
        1 => 1.0 / k as f64,
        d if d <= k => 1.0 / (d as f64 * (d as f64 - 1.0)),
        _ => 0.0,
    }
}

/// Robust correction term.
pub fn tau(params: &SolitonParams, d: usize) -> f64 {
    let r = params.r();
    let k = params.k as f64;
    let spike = params.spike();
    if d >= 1 && d < spike {
        r / (d as f64 * k)
    } else if d == spike {
        r * (r / params.delta).ln() / k
    } else {
        0.0
    }
}

pub fn robust_soliton(params: &SolitonParams) -> Result<DegreeDistribution> {
    params.validate()?;
    let raw: Vec<f64> = (1..=params.k).map(|d| rho(params.k, d) + tau(params, d)).collect();
    let beta: f64 = raw.iter().sum();
    let probabilities: Vec<f64> = raw.iter().map(|v| v / beta).collect();
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = probabilities
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    *cdf.last_mut().unwrap() = 1.0;
    Ok(DegreeDistribution {
        probabilities,
        cdf,
        beta,
    })
}

/// `K = k + sum_{i=1}^{k/R - 1} R/i + R ln(R/delta)`, rounded up.
pub fn required_symbols(params: &SolitonParams) -> Result<usize> {
    params.validate()?;
    let r = params.r();
    let harmonic: f64 = (1..params.spike()).map(|i| r / i as f64).sum();
    let k = params.k as f64 + harmonic + r * (r / params.delta).ln();
    Ok(k.ceil() as usize)
}

/// SplitMix64, used as the seed-expansion generator.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `0..n` by multiply-shift.
    pub fn next_below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

/// An LT code: its parameters and degree distribution.
#[derive(Clone, Debug)]
pub struct LtCode {
    pub params: SolitonParams,
    pub dist: DegreeDistribution,
}

impl LtCode {
    pub fn new(params: SolitonParams) -> Result<Self> {
        Ok(LtCode {
            dist: robust_soliton(&params)?,
            params,
        })
    }

    pub fn k(&self) -> usize {
        self.params.k
    }

    /// Neighbour set of a seed, sorted ascending (0-based source indices).
    pub fn neighbors(&self, seed: u32) -> Vec<u32> {
        seed_expand(seed, &self.params, &self.dist)
    }
}

pub fn seed_expand(seed: u32, params: &SolitonParams, dist: &DegreeDistribution) -> Vec<u32> {
    let k = params.k;
    let mut rng = SplitMix64::new(seed as u64);
    let degree = dist.sample(rng.next_f64()).min(k);
    // Partial Fisher-Yates over a virtual identity array; only displaced
    // entries are stored.
    let mut displaced: HashMap<u32, u32> = HashMap::with_capacity(degree * 2);
    let mut picked = Vec::with_capacity(degree);
    for i in 0..degree as u32 {
        let j = i + rng.next_below((k as u32 - i) as u64) as u32;
        let at_j = *displaced.get(&j).unwrap_or(&j);
        let at_i = *displaced.get(&i).unwrap_or(&i);
        displaced.insert(j, at_i);
        picked.push(at_j);
    }
    picked.sort_unstable();
    picked
}

/// Ordered seed list; by convention the first `count` integers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSchedule {
    pub seeds: Vec<u32>,
}

impl SeedSchedule {
    pub fn first(count: usize) -> Self {
        SeedSchedule {
            seeds: (0..count as u32).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.seeds {
            writeln!(out, "{s:08x}")?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let seeds = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                u32::from_str_radix(l, 16).map_err(|e| Error::Parse(format!("bad seed {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parse("seed table has duplicate seeds".into()));
        }
        Ok(SeedSchedule { seeds })
    }
}

pub fn xor_into(acc: &mut Payload, other: &Payload) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a ^= b;
    }
}

/// Encodes `source` (k packets) into one coded packet per scheduled seed.
pub fn lt_encode(code: &LtCode, source: &[Payload], schedule: &SeedSchedule) -> Result<Vec<Payload>> {
    if schedule.is_empty() {
        return Err(Error::Param("empty seed schedule".into()));
    }
    if source.len() != code.k() {
        return Err(Error::Length {
            what: "source packets",
            expected: code.k(),
            got: source.len(),
        });
    }
    Ok(schedule
        .seeds
        .iter()
        .map(|&seed| {
            let mut packet = [0u8; PAYLOAD_BYTES];
            for &n in &code.neighbors(seed) {
                xor_into(&mut packet, &source[n as usize]);
            }
            packet
        })
        .collect())
}
