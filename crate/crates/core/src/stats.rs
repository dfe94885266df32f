//! Channel statistics estimated from reads aligned back to the encoded pool:
//! the per-position conditional base-transition table and the read quality
//! product diagnostic.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::ForwardKernel;
use crate::dna::{Base, Oligo, OLIGO_NT, SEED_NT};
use crate::error::{Error, Result};
use crate::fastq::{phred_prob, ReadRecord};

pub const TABLE_HEADER: &str = "#dnacode-transition-table\tv1";

/// `P_pos(x = source | y = observed)` for every ordered pair of distinct
/// bases, plus the raw counts it was estimated from.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionTable {
    /// `probs[pos][observed][source]`; zero on the diagonal.
    probs: Vec<[[f64; 4]; 4]>,
    /// `counts[pos][source][observed]`: f_pos(source -> observed).
    counts: Vec<[[u64; 4]; 4]>,
    /// `totals[pos][source]`: N_pos(source).
    totals: Vec<[u64; 4]>,
    /// Set where no error was observed for that called base.
    fallback: Vec<[bool; 4]>,
}

impl TransitionTable {
    /// Every conditional is 1/3 and flagged as fallback.
    pub fn uniform() -> Self {
        Self::from_counts(vec![[[0; 4]; 4]; OLIGO_NT], vec![[0; 4]; OLIGO_NT])
    }

    pub fn from_probabilities(probs: Vec<[[f64; 4]; 4]>) -> Self {
        let n = probs.len();
        TransitionTable {
            probs,
            counts: vec![[[0; 4]; 4]; n],
            totals: vec![[0; 4]; n],
            fallback: vec![[false; 4]; n],
        }
    }

    /// Normalises `(f / N)` ratios over the three candidate sources of each
    /// observed base.
    pub fn from_counts(counts: Vec<[[u64; 4]; 4]>, totals: Vec<[u64; 4]>) -> Self {
        let mut probs = Vec::with_capacity(counts.len());
        let mut fallback = Vec::with_capacity(counts.len());
        for (f, n) in counts.iter().zip(&totals) {
            let mut p = [[0.0; 4]; 4];
            let mut fb = [false; 4];
            for obs in 0..4 {
                let rate = |src: usize| {
                    if n[src] == 0 {
                        0.0
                    } else {
                        f[src][obs] as f64 / n[src] as f64
                    }
                };
                let denom: f64 = (0..4).filter(|&s| s != obs).map(rate).sum();
                for src in (0..4).filter(|&s| s != obs) {
                    p[obs][src] = if denom > 0.0 { rate(src) / denom } else { 1.0 / 3.0 };
                }
                fb[obs] = denom == 0.0;
            }
            probs.push(p);
            fallback.push(fb);
        }
        TransitionTable {
            probs,
            counts,
            totals,
            fallback,
        }
    }

    pub fn positions(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn cond(&self, pos: usize, observed: Base, source: Base) -> f64 {
        self.probs[pos][observed.index()][source.index()]
    }

    /// The three conditionals for a called base, indexed by source base.
    #[inline]
    pub fn row(&self, pos: usize, observed: Base) -> &[f64; 4] {
        &self.probs[pos][observed.index()]
    }

    pub fn count(&self, pos: usize, source: Base, observed: Base) -> u64 {
        self.counts[pos][source.index()][observed.index()]
    }

    pub fn total(&self, pos: usize, source: Base) -> u64 {
        self.totals[pos][source.index()]
    }

    pub fn is_fallback(&self, pos: usize, observed: Base) -> bool {
        self.fallback[pos][observed.index()]
    }

    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().flatten().filter(|&&b| b).count()
    }

    /// Largest absolute difference between the conditionals of two tables.
    pub fn max_abs_diff(&self, other: &TransitionTable, skip_fallback: bool) -> f64 {
        let mut worst: f64 = 0.0;
        for pos in 0..self.positions().min(other.positions()) {
            for obs in 0..4 {
                if skip_fallback && (self.fallback[pos][obs] || other.fallback[pos][obs]) {
                    continue;
                }
                for src in 0..4 {
                    worst = worst.max((self.probs[pos][obs][src] - other.probs[pos][obs][src]).abs());
                }
            }
        }
        worst
    }

    /// Forward substitution kernel reproducing this table under a
    /// base-independent substitution rate.
    ///
    /// Finds per-observed-base weights with `sum_{o != s} T(s | o) w(o) = 1`
    /// and sets `q(o | s) = T(s | o) w(o)`. The system is often singular, so
    /// it is solved as a nonnegative least-squares problem by multiplicative
    /// updates; any residual is absorbed by a final row normalisation.
    pub fn to_forward_kernel(&self) -> ForwardKernel {
        let rows = self
            .probs
            .iter()
            .map(|t| {
                let m = |s: usize, o: usize| if s == o { 0.0 } else { t[o][s] };
                let mut w = [1.0f64; 4];
                for _ in 0..2000 {
                    let mw: [f64; 4] = std::array::from_fn(|s| (0..4).map(|o| m(s, o) * w[o]).sum());
                    for o in 0..4 {
                        let num: f64 = (0..4).map(|s| m(s, o)).sum();
                        let den: f64 = (0..4).map(|s| m(s, o) * mw[s]).sum();
                        if den > 0.0 {
                            w[o] *= num / den;
                        }
                    }
                }
                let mut q = [[0.0; 4]; 4];
                for src in 0..4 {
                    for obs in (0..4).filter(|&o| o != src) {
                        q[src][obs] = m(src, obs) * w[obs];
                    }
                    let s: f64 = q[src].iter().sum();
                    if s > 0.0 {
                        q[src].iter_mut().for_each(|v| *v /= s);
                    } else {
                        for obs in (0..4).filter(|&o| o != src) {
                            q[src][obs] = 1.0 / 3.0;
                        }
                    }
                }
                q
            })
            .collect();
        ForwardKernel::from_rows(rows).expect("normalised rows")
    }

    /// Columns: position (1-based), source base, observed base, count
    /// f(source -> observed), N(source), P(source | observed), fallback flag.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TABLE_HEADER}")?;
        writeln!(out, "position\tfrom\tto\tcount\tfrom_total\tprobability\tfallback")?;
        for pos in 0..self.positions() {
            for src in Base::ALL {
                for obs in Base::ALL {
                    if src == obs {
                        continue;
                    }
                    writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{:.17e}\t{}",
                        pos + 1,
                        src,
                        obs,
                        self.count(pos, src, obs),
                        self.total(pos, src),
                        self.cond(pos, obs, src),
                        self.is_fallback(pos, obs) as u8
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim_end) != Some(TABLE_HEADER) {
            return Err(Error::Parse("missing transition table header".into()));
        }
        let mut probs = Vec::new();
        let mut counts = Vec::new();
        let mut totals = Vec::new();
        let mut fallback = Vec::new();
        for line in lines.filter(|l| !l.is_empty() && !l.starts_with("position")) {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Parse(format!("bad transition table line {line:?}"));
            if f.len() != 7 {
                return Err(bad());
            }
            let pos: usize = f[0].parse::<usize>().map_err(|_| bad())?.checked_sub(1).ok_or_else(bad)?;
            let src = Base::from_ascii(f[1].as_bytes()[0]).ok_or_else(bad)?.index();
            let obs = Base::from_ascii(f[2].as_bytes()[0]).ok_or_else(bad)?.index();
            while probs.len() <= pos {
                probs.push([[0.0; 4]; 4]);
                counts.push([[0; 4]; 4]);
                totals.push([0; 4]);
                fallback.push([false; 4]);
            }
            counts[pos][src][obs] = f[3].parse().map_err(|_| bad())?;
            totals[pos][src] = f[4].parse().map_err(|_| bad())?;
            probs[pos][obs][src] = f[5].parse().map_err(|_| bad())?;
            fallback[pos][obs] = f[6] == "1";
        }
        Ok(TransitionTable {
            probs,
            counts,
            totals,
            fallback,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_tsv(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }
}

/// Levenshtein distance, restricted to a diagonal band of half-width `limit`.
/// Returns `None` when the distance exceeds `limit`.
pub fn edit_distance_within(a: &[u8], b: &[u8], limit: usize) -> Option<usize> {
    let (n, m) = (a.len(), b.len());
    if n.abs_diff(m) > limit {
        return None;
    }
    const INF: usize = usize::MAX / 2;
    let mut prev = vec![INF; m + 1];
    let mut cur = vec![INF; m + 1];
    for (j, slot) in prev.iter_mut().enumerate().take(limit.min(m) + 1) {
        *slot = j;
    }
    for i in 1..=n {
        let lo = i.saturating_sub(limit).max(1);
        let hi = (i + limit).min(m);
        cur.iter_mut().for_each(|v| *v = INF);
        if i <= limit {
            cur[0] = i;
        }
        let mut row_min = cur[0];
        for j in lo..=hi {
            let sub = prev[j - 1] + (a[i - 1] != b[j - 1]) as usize;
            let v = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
            cur[j] = v;
            row_min = row_min.min(v);
        }
        if row_min > limit {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    (prev[m] <= limit).then_some(prev[m])
}

pub fn edit_distance(a: &[u8], b: &[u8]) -> usize {
    edit_distance_within(a, b, a.len().max(b.len())).expect("unbounded band")
}

const Q: usize = 4;

fn qgram_profile(seq: &[u8]) -> [u8; 256] {
    let code = |c: u8| match c {
        b'A' => Some(0u8),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    };
    let mut prof = [0u8; 256];
    for w in seq.windows(Q) {
        if let Some(idx) = w.iter().try_fold(0u8, |acc, &c| code(c).map(|v| acc << 2 | v)) {
            prof[idx as usize] = prof[idx as usize].saturating_add(1);
        }
    }
    prof
}

/// Lower bound on edit distance: one edit changes at most `Q` q-grams on each
/// side, so `ed >= L1 / (2Q)`. Ns drop q-grams, so the bound uses the total.
fn qgram_bound(a: &[u8; 256], b: &[u8; 256]) -> usize {
    let l1: u32 = a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y) as u32).sum();
    (l1 as usize).div_ceil(2 * Q)
}

const KMER: usize = 12;
const BLOCKS: usize = OLIGO_NT / KMER;
/// Block keys shared by more oligos than this are not looked up; each
/// oligo's count of such blocks is credited instead.
const RARE: usize = 16;

/// 2-bit packed k-mers of `seq`, skipping any window with a non-ACGT byte.
fn kmers(seq: &[u8]) -> impl Iterator<Item = u32> + '_ {
    seq.windows(KMER)
        .filter_map(|w| w.iter().try_fold(0u32, |acc, &c| Base::from_ascii(c).map(|b| acc << 2 | b.bits() as u32)))
}

/// Nearest-oligo lookup over an encoded pool.
pub struct PoolIndex {
    oligos: Vec<Vec<u8>>,
    profiles: Vec<[u8; 256]>,
    by_seed: HashMap<[u8; SEED_NT], usize>,
    /// Disjoint `KMER`-blocks -> (oligo, block) pairs, for rare keys only.
    by_block: HashMap<u32, Vec<(u32, u8)>>,
    /// Per oligo, the number of its blocks left out of `by_block`.
    common_blocks: Vec<u8>,
    /// Oligos ordered by `common_blocks`, descending.
    by_common: Vec<u32>,
    /// Lower bound on the distance from each oligo to any other.
    isolation: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub oligo_index: usize,
    pub distance: usize,
}

impl PoolIndex {
    pub fn new(pool: &[Oligo]) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::Param("empty oligo pool".into()));
        }
        let oligos: Vec<Vec<u8>> = pool.iter().map(|o| o.to_string_ascii().into_bytes()).collect();
        let profiles: Vec<[u8; 256]> = oligos.iter().map(|o| qgram_profile(o)).collect();
        let mut by_seed = HashMap::with_capacity(pool.len());
        for (i, o) in oligos.iter().enumerate() {
            by_seed.entry(o[..SEED_NT].try_into().unwrap()).or_insert(i);
        }
        let mut by_block: HashMap<u32, Vec<(u32, u8)>> = HashMap::new();
        for (i, o) in oligos.iter().enumerate() {
            for b in 0..BLOCKS {
                if let Some(key) = kmers(&o[b * KMER..(b + 1) * KMER]).next() {
                    by_block.entry(key).or_default().push((i as u32, b as u8));
                }
            }
        }
        let mut common_blocks = vec![0u8; oligos.len()];
        by_block.retain(|_, list| {
            let rare = list.len() <= RARE;
            if !rare {
                for &(i, _) in list.iter() {
                    common_blocks[i as usize] += 1;
                }
            }
            rare
        });
        let mut by_common: Vec<u32> = (0..oligos.len() as u32).collect();
        by_common.sort_by_key(|&i| std::cmp::Reverse(common_blocks[i as usize]));
        let isolation = (0..profiles.len())
            .into_par_iter()
            .map(|i| {
                profiles
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, p)| qgram_bound(&profiles[i], p))
                    .min()
                    .unwrap_or(usize::MAX)
            })
            .collect();
        Ok(PoolIndex {
            oligos,
            profiles,
            by_seed,
            by_block,
            common_blocks,
            by_common,
            isolation,
        })
    }

    pub fn len(&self) -> usize {
        self.oligos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.oligos.is_empty()
    }

    pub fn oligo(&self, i: usize) -> &[u8] {
        &self.oligos[i]
    }

    /// Scores oligo `i` against the current best, pruning by q-grams and a
    /// banded bound.
    fn improve(&self, read: &[u8], prof: &[u8; 256], i: usize, best: Option<Alignment>) -> Option<Alignment> {
        let limit = match best {
            Some(b) if i < b.oligo_index => b.distance,
            Some(b) if i == b.oligo_index => return best,
            Some(b) => match b.distance.checked_sub(1) {
                Some(l) => l,
                None => return best,
            },
            None => return Some(Alignment {
                oligo_index: i,
                distance: edit_distance(read, &self.oligos[i]),
            }),
        };
        if qgram_bound(prof, &self.profiles[i]) > limit {
            return best;
        }
        match edit_distance_within(read, &self.oligos[i], limit) {
            Some(d) => Some(Alignment {
                oligo_index: i,
                distance: d,
            }),
            None => best,
        }
    }

    /// Nearest oligo by edit distance; ties go to the lowest index.
    pub fn align(&self, read: &[u8]) -> Alignment {
        let mut best: Option<Alignment> = None;
        if read.len() >= SEED_NT {
            if let Some(&c) = self.by_seed.get(&read[..SEED_NT]) {
                let hamming = if read.len() == OLIGO_NT {
                    read.iter().zip(&self.oligos[c]).filter(|(a, b)| a != b).count()
                } else {
                    OLIGO_NT.max(read.len())
                };
                let d = edit_distance_within(read, &self.oligos[c], hamming).unwrap_or_else(|| edit_distance(read, &self.oligos[c]));
                // Any other oligo is at least isolation - d away.
                if self.isolation[c] > 2 * d {
                    return Alignment {
                        oligo_index: c,
                        distance: d,
                    };
                }
                best = Some(Alignment {
                    oligo_index: c,
                    distance: d,
                });
            }
        }
        let prof = qgram_profile(read);
        // An oligo within e < BLOCKS edits of the read keeps BLOCKS - e of
        // its disjoint blocks intact, each a substring of the read. Count
        // the intact blocks seen per oligo.
        let mut hits: HashMap<u32, u16> = HashMap::new();
        for key in kmers(read) {
            if let Some(list) = self.by_block.get(&key) {
                for &(i, b) in list {
                    *hits.entry(i).or_default() |= 1 << b;
                }
            }
        }
        let mut candidates: Vec<(u32, usize)> = hits
            .into_iter()
            .map(|(i, mask)| (i, mask.count_ones() as usize + self.common_blocks[i as usize] as usize))
            .collect();
        candidates.sort_unstable_by_key(|&(i, h)| (std::cmp::Reverse(h), i));
        // Anything at distance <= d needs at least BLOCKS - d intact blocks.
        let needed = |best: Option<Alignment>| best.map_or(1, |b| BLOCKS.saturating_sub(b.distance).max(1));
        for &(i, h) in &candidates {
            if h >= needed(best) {
                best = self.improve(read, &prof, i as usize, best);
            }
        }
        if let Some(b) = best {
            if b.distance < BLOCKS {
                // Oligos with no rare block in the read.
                for &i in &self.by_common {
                    if (self.common_blocks[i as usize] as usize) < needed(best) {
                        break;
                    }
                    best = self.improve(read, &prof, i as usize, best);
                }
                return best.expect("set above");
            }
        }
        for i in 0..self.oligos.len() {
            best = self.improve(read, &prof, i, best);
        }
        best.expect("nonempty pool")
    }
}

pub fn align_read(read: &ReadRecord, index: &PoolIndex) -> Alignment {
    index.align(&read.bases)
}

/// Raw counters; merged associatively across shards.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionCounts {
    pub counts: Vec<[[u64; 4]; 4]>,
    pub totals: Vec<[u64; 4]>,
    pub reads_used: u64,
    pub reads_error_free: u64,
    pub reads_skipped: u64,
    /// Histogram of alignment edit distances.
    pub distance_histogram: Vec<u64>,
}

impl Default for TransitionCounts {
    fn default() -> Self {
        TransitionCounts {
            counts: vec![[[0; 4]; 4]; OLIGO_NT],
            totals: vec![[0; 4]; OLIGO_NT],
            reads_used: 0,
            reads_error_free: 0,
            reads_skipped: 0,
            distance_histogram: Vec::new(),
        }
    }
}

impl TransitionCounts {
    /// Adds one read against its aligned source. Only reads with at least
    /// one mismatch contribute, to the denominators as well as the counts.
    pub fn add(&mut self, read: &[u8], source: &[u8], distance: usize) {
        if self.distance_histogram.len() <= distance {
            self.distance_histogram.resize(distance + 1, 0);
        }
        self.distance_histogram[distance] += 1;
        if read.len() != OLIGO_NT || source.len() != OLIGO_NT {
            self.reads_skipped += 1;
            return;
        }
        self.reads_used += 1;
        let called = |r: u8| Base::from_ascii(r).is_some();
        if !source.iter().zip(read).any(|(&s, &r)| s != r && called(r)) {
            self.reads_error_free += 1;
            return;
        }
        for (pos, (&s, &r)) in source.iter().zip(read).enumerate() {
            let src = Base::from_ascii(s).expect("pool base");
            let Some(obs) = Base::from_ascii(r) else { continue };
            self.totals[pos][src.index()] += 1;
            if obs != src {
                self.counts[pos][src.index()][obs.index()] += 1;
            }
        }
    }

    pub fn merge(mut self, other: TransitionCounts) -> TransitionCounts {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
        }
        for (a, b) in self.totals.iter_mut().zip(&other.totals) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.reads_used += other.reads_used;
        self.reads_error_free += other.reads_error_free;
        self.reads_skipped += other.reads_skipped;
        if self.distance_histogram.len() < other.distance_histogram.len() {
            self.distance_histogram.resize(other.distance_histogram.len(), 0);
        }
        for (x, y) in self.distance_histogram.iter_mut().zip(&other.distance_histogram) {
            *x += y;
        }
        self
    }

    pub fn into_table(self) -> TransitionTable {
        TransitionTable::from_counts(self.counts, self.totals)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StatsSummary {
    pub reads_used: u64,
    pub reads_error_free: u64,
    pub reads_skipped: u64,
    pub fallback_entries: usize,
    pub distance_histogram: Vec<u64>,
}

/// Aligns every 152-nt read to its nearest pool oligo and counts
/// transitions over the reads that differ from it.
pub fn estimate_transitions(reads: &[ReadRecord], index: &PoolIndex) -> (TransitionTable, StatsSummary) {
    let counts = reads
        .par_iter()
        .filter(|r| r.len() == OLIGO_NT)
        .fold(TransitionCounts::default, |mut acc, r| {
            let a = index.align(&r.bases);
            acc.add(&r.bases, index.oligo(a.oligo_index), a.distance);
            acc
        })
        .reduce(TransitionCounts::default, TransitionCounts::merge);
    let summary = StatsSummary {
        reads_used: counts.reads_used,
        reads_error_free: counts.reads_error_free,
        reads_skipped: counts.reads_skipped,
        fallback_entries: 0,
        distance_histogram: counts.distance_histogram.clone(),
    };
    let table = counts.into_table();
    let summary = StatsSummary {
        fallback_entries: table.fallback_count(),
        ..summary
    };
    (table, summary)
}

/// Product of per-base correct-call probabilities over the read.
pub fn quality_product(read: &ReadRecord) -> f64 {
    read.qscores.iter().map(|&q| phred_prob(q)).product()
}
