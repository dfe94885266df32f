//! Seed-exact clustering of reads and per-cluster soft information.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dna::{bases_to_seed, Base, OLIGO_NT, PARITY_NT, PARITY_RANGE, PAYLOAD_BITS, PAYLOAD_RANGE, SEED_NT};
use crate::error::{Error, Result};
use crate::fastq::{phred_prob, ReadRecord, PROB_EPS};
use crate::fountain::SeedSchedule;
use crate::stats::TransitionTable;

/// Clip applied to summed cluster LLRs.
pub const LLR_MAX: f64 = 30.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cluster {
    pub seed: u32,
    /// Position of `seed` in the seed table.
    pub seed_index: usize,
    pub members: Vec<ReadRecord>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub reads_in: u64,
    pub discarded_length: u64,
    pub discarded_n: u64,
    /// Length-152, N-free reads whose seed region is not in the table.
    pub discarded_seed: u64,
    /// Reads kept in some cluster.
    pub retained: u64,
    pub clusters: usize,
}

#[derive(Clone, Debug, Default)]
pub struct ClusterSet {
    /// Sorted by seed-table position.
    pub clusters: Vec<Cluster>,
    pub report: ClusterReport,
}

/// Lookup from seed value to its position in the table.
pub fn seed_lookup(seeds: &SeedSchedule) -> HashMap<u32, usize> {
    seeds.seeds.iter().enumerate().map(|(i, &s)| (s, i)).collect()
}

/// Groups reads whose first 16 nt exactly spell a table seed. Reads that are
/// not 152 nt or contain `N` are filtered here and counted separately.
pub fn cluster_by_seed<I>(reads: I, seeds: &SeedSchedule) -> ClusterSet
where
    I: IntoIterator<Item = ReadRecord>,
{
    let lookup = seed_lookup(seeds);
    let mut report = ClusterReport::default();
    let mut groups: HashMap<usize, Vec<ReadRecord>> = HashMap::new();
    for read in reads {
        report.reads_in += 1;
        if read.len() != OLIGO_NT {
            report.discarded_length += 1;
            continue;
        }
        if read.has_n() {
            report.discarded_n += 1;
            continue;
        }
        let seed_bases: Vec<Base> = read.bases[..SEED_NT].iter().map(|&c| Base::from_ascii(c).unwrap()).collect();
        match bases_to_seed(&seed_bases).and_then(|s| lookup.get(&s).copied()) {
            Some(idx) => {
                report.retained += 1;
                groups.entry(idx).or_default().push(read);
            }
            None => report.discarded_seed += 1,
        }
    }
    let mut clusters: Vec<Cluster> = groups
        .into_iter()
        .map(|(seed_index, members)| Cluster {
            seed: seeds.seeds[seed_index],
            seed_index,
            members,
        })
        .collect();
    clusters.sort_by_key(|c| c.seed_index);
    report.clusters = clusters.len();
    ClusterSet { clusters, report }
}

/// Per-cluster multiplier on summed LLRs, by member count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeWeights {
    pub size1: f64,
    pub size2: f64,
    pub size3_plus: f64,
}

impl SizeWeights {
    pub fn weight(&self, members: usize) -> f64 {
        match members {
            0 | 1 => self.size1,
            2 => self.size2,
            _ => self.size3_plus,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterLlr {
    pub seed: u32,
    pub seed_index: usize,
    /// `(y1, y2)` per payload position, `ln P(0)/P(1)`.
    pub payload_llrs: Vec<f64>,
    pub rs_parity_hard: [Base; PARITY_NT],
    pub member_count: usize,
}

impl ClusterLlr {
    /// Hard payload decision of the soft input alone (LLR >= 0 -> 0).
    pub fn hard_payload_bits(&self) -> Vec<u8> {
        self.payload_llrs.iter().map(|&l| (l < 0.0) as u8).collect()
    }
}

/// The four base probabilities of one basecall: the call itself gets the
/// Q-score probability, the rest share the remainder by the table. Floored
/// at `PROB_EPS` so that a transition never seen in the table cannot make a
/// single read's LLR infinite.
#[inline]
pub fn base_probabilities(table: &TransitionTable, pos: usize, call: Base, q: u8) -> [f64; 4] {
    let p = phred_prob(q);
    let row = table.row(pos, call);
    let mut out = [0.0; 4];
    for (b, slot) in out.iter_mut().enumerate() {
        *slot = if b == call.index() { p } else { ((1.0 - p) * row[b]).max(PROB_EPS) };
    }
    out
}

/// `(LLR(y1), LLR(y2))` of a 4-base probability vector.
#[inline]
pub fn bit_llrs(p: &[f64; 4]) -> (f64, f64) {
    let [a, c, g, t] = *p;
    (((a + c) / (g + t)).ln(), ((a + g) / (c + t)).ln())
}

fn call(read: &ReadRecord, pos: usize) -> Base {
    Base::from_ascii(read.bases[pos]).expect("clustered reads are N-free")
}

fn clip(x: f64) -> f64 {
    x.clamp(-LLR_MAX, LLR_MAX)
}

/// Sums each member's Q-score/transition-table LLRs. The optional size
/// weight multiplies the sum before clipping.
pub fn llr_proposed(cluster: &Cluster, table: &TransitionTable, weights: Option<&SizeWeights>) -> ClusterLlr {
    let mut llrs = vec![0.0; PAYLOAD_BITS];
    for read in &cluster.members {
        for (i, pos) in PAYLOAD_RANGE.enumerate() {
            let p = base_probabilities(table, pos, call(read, pos), read.qscores[pos]);
            let (y1, y2) = bit_llrs(&p);
            llrs[2 * i] += y1;
            llrs[2 * i + 1] += y2;
        }
    }
    let w = weights.map_or(1.0, |w| w.weight(cluster.members.len()));
    llrs.iter_mut().for_each(|l| *l = clip(*l * w));
    ClusterLlr {
        seed: cluster.seed,
        seed_index: cluster.seed_index,
        payload_llrs: llrs,
        rs_parity_hard: rs_part_hard(cluster, table),
        member_count: cluster.members.len(),
    }
}

/// Bit-count LLRs with a fixed crossover probability; parity by majority.
pub fn llr_chandak(cluster: &Cluster, crossover_p: f64, weights: Option<&SizeWeights>) -> Result<ClusterLlr> {
    if !(crossover_p > 0.0 && crossover_p < 0.5) {
        return Err(Error::Param(format!("crossover probability {crossover_p} outside (0, 0.5)")));
    }
    let unit = ((1.0 - crossover_p) / crossover_p).ln();
    let mut diff = vec![0i64; PAYLOAD_BITS];
    for read in &cluster.members {
        for (i, pos) in PAYLOAD_RANGE.enumerate() {
            let bits = call(read, pos).bits();
            diff[2 * i] += if bits & 2 == 0 { 1 } else { -1 };
            diff[2 * i + 1] += if bits & 1 == 0 { 1 } else { -1 };
        }
    }
    let w = weights.map_or(1.0, |w| w.weight(cluster.members.len()));
    let majority = majority_vote(cluster);
    Ok(ClusterLlr {
        seed: cluster.seed,
        seed_index: cluster.seed_index,
        payload_llrs: diff.into_iter().map(|d| clip(d as f64 * unit * w)).collect(),
        rs_parity_hard: majority[PARITY_RANGE].try_into().unwrap(),
        member_count: cluster.members.len(),
    })
}

fn argmax_lexicographic(scores: &[f64; 4]) -> Base {
    let mut best = 0;
    for b in 1..4 {
        if scores[b] > scores[best] {
            best = b;
        }
    }
    Base::ALL[best]
}

/// Per parity position, the base maximising the product of member
/// probabilities (computed as a log-sum).
pub fn rs_part_hard(cluster: &Cluster, table: &TransitionTable) -> [Base; PARITY_NT] {
    std::array::from_fn(|i| {
        let pos = PARITY_RANGE.start + i;
        let mut score = [0.0; 4];
        for read in &cluster.members {
            let p = base_probabilities(table, pos, call(read, pos), read.qscores[pos]);
            for b in 0..4 {
                score[b] += p[b].ln();
            }
        }
        argmax_lexicographic(&score)
    })
}

/// Per-position majority basecall over all 152 positions; ties go to the
/// lexicographically smallest base.
pub fn majority_vote(cluster: &Cluster) -> [Base; OLIGO_NT] {
    std::array::from_fn(|pos| {
        let mut counts = [0.0; 4];
        for read in &cluster.members {
            counts[call(read, pos).index()] += 1.0;
        }
        argmax_lexicographic(&counts)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LlrMode {
    Proposed,
    Chandak,
}

/// Soft input for every cluster, in cluster order.
pub fn compute_llrs(
    clusters: &[Cluster],
    mode: &LlrMode,
    table: &TransitionTable,
    crossover_p: f64,
    weights: Option<&SizeWeights>,
) -> Result<Vec<ClusterLlr>> {
    clusters
        .par_iter()
        .map(|c| match mode {
            LlrMode::Proposed => Ok(llr_proposed(c, table, weights)),
            LlrMode::Chandak => llr_chandak(c, crossover_p, weights),
        })
        .collect()
}

/// Debug dump: one line per cluster with seed, member count, parity hard
/// decision and the 256 payload LLRs.
pub fn write_llr_tsv<W: Write>(mut out: W, llrs: &[ClusterLlr]) -> std::io::Result<()> {
    writeln!(out, "#seed\tmembers\tparity\tllrs")?;
    for c in llrs {
        let parity: String = c.rs_parity_hard.iter().map(|b| b.to_ascii() as char).collect();
        write!(out, "{:08x}\t{}\t{}\t", c.seed, c.member_count, parity)?;
        for (i, l) in c.payload_llrs.iter().enumerate() {
            if i > 0 {
                out.write_all(b",")?;
            }
            write!(out, "{l:.6}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
