//! Statistical sequencing channel: per-oligo abundance, substitution /
//! insertion / deletion injection with a positional transition kernel, and a
//! two-component Q-score model.
//!
//! Reads are emitted post-stitch: indels simply change the read length, and an
//! insertion/deletion pair inside one read leaves the length at 152 while
//! shifting the bases between them.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dna::{Base, Oligo, OLIGO_NT};
use crate::error::{Error, Result};
use crate::fastq::ReadRecord;
use crate::stats::TransitionTable;

/// `kernel[pos][from][to]`: probability that a substitution at `pos` turns
/// `from` into `to`. Diagonal entries are zero and rows sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardKernel {
    rows: Vec<[[f64; 4]; 4]>,
}

impl ForwardKernel {
    pub fn uniform() -> Self {
        let mut m = [[1.0 / 3.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        ForwardKernel {
            rows: vec![m; OLIGO_NT],
        }
    }

    /// Default stand-in for measured positional curves: transitions (A<->G,
    /// C<->T) twice as likely as transversions, with a linear tilt along the
    /// read that moves weight from A/C targets to G/T targets.
    pub fn synthetic(tilt: f64) -> Self {
        let rows = (0..OLIGO_NT)
            .map(|pos| {
                let x = pos as f64 / (OLIGO_NT - 1) as f64 - 0.5;
                let mut m = [[0.0; 4]; 4];
                for from in 0..4 {
                    for to in 0..4 {
                        if from == to {
                            continue;
                        }
                        let transition = (from ^ to) == 2;
                        let base = if transition { 2.0 } else { 1.0 };
                        let sign = if to >= 2 { 1.0 } else { -1.0 };
                        m[from][to] = base * (1.0 + tilt * x * sign);
                    }
                    let s: f64 = m[from].iter().sum();
                    m[from].iter_mut().for_each(|v| *v /= s);
                }
                m
            })
            .collect();
        ForwardKernel { rows }
    }

    pub fn from_rows(rows: Vec<[[f64; 4]; 4]>) -> Result<Self> {
        if rows.len() != OLIGO_NT {
            return Err(Error::Length {
                what: "kernel positions",
                expected: OLIGO_NT,
                got: rows.len(),
            });
        }
        for m in &rows {
            for (from, row) in m.iter().enumerate() {
                let s: f64 = row.iter().sum();
                if row[from] != 0.0 || (s - 1.0).abs() > 1e-9 || row.iter().any(|&v| v < 0.0) {
                    return Err(Error::Param(format!("invalid kernel row {row:?}")));
                }
            }
        }
        Ok(ForwardKernel { rows })
    }

    pub fn prob(&self, pos: usize, from: Base, to: Base) -> f64 {
        self.rows[pos.min(OLIGO_NT - 1)][from.index()][to.index()]
    }

    fn sample(&self, pos: usize, from: Base, u: f64) -> Base {
        let row = &self.rows[pos.min(OLIGO_NT - 1)][from.index()];
        let mut acc = 0.0;
        for (to, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc && p > 0.0 {
                return Base::ALL[to];
            }
        }
        // Rounding at the top of the CDF.
        Base::ALL[(0..4).rev().find(|&t| row[t] > 0.0).unwrap()]
    }

    /// The table an ideal estimator would recover from this kernel when the
    /// per-base substitution rate does not depend on the stored base:
    /// `P(x = src | y = obs) = q(obs | src) / sum_s q(obs | s)`.
    pub fn expected_table(&self) -> TransitionTable {
        let probs = self
            .rows
            .iter()
            .map(|m| {
                let mut p = [[0.0; 4]; 4];
                for obs in 0..4 {
                    let denom: f64 = (0..4).filter(|&s| s != obs).map(|s| m[s][obs]).sum();
                    for src in 0..4 {
                        if src != obs {
                            p[obs][src] = m[src][obs] / denom;
                        }
                    }
                }
                p
            })
            .collect();
        TransitionTable::from_probabilities(probs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QModel {
    pub q_correct_mean: f64,
    pub q_error_mean: f64,
    pub q_spread: f64,
    /// Chance that an erroneous base is given a correct-looking score.
    pub p_err_high_q: f64,
    pub q_min: u8,
    pub q_max: u8,
}

impl Default for QModel {
    fn default() -> Self {
        QModel {
            q_correct_mean: 37.0,
            q_error_mean: 15.0,
            q_spread: 3.0,
            p_err_high_q: 0.02,
            q_min: 2,
            q_max: 41,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionBias {
    Uniform,
    Synthetic { tilt: f64 },
    /// A measured table file, inverted into a forward kernel.
    Table { path: String },
}

impl Default for TransitionBias {
    fn default() -> Self {
        TransitionBias::Synthetic { tilt: 0.6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub sub_rate: f64,
    pub ins_rate: f64,
    pub del_rate: f64,
    pub abundance_sigma: f64,
    pub transition_bias: TransitionBias,
    pub qmodel: QModel,
    pub rng_seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig::data_b()
    }
}

impl ChannelConfig {
    /// Error profile of the first sequencing run.
    pub fn data_a() -> Self {
        ChannelConfig {
            sub_rate: 9.858e-4,
            ins_rate: 1.237e-5 / 2.0,
            del_rate: 1.237e-5 / 2.0,
            ..ChannelConfig::data_b()
        }
    }

    /// Error profile of the second sequencing run (default).
    pub fn data_b() -> Self {
        ChannelConfig {
            sub_rate: 8.352e-4,
            ins_rate: 1.744e-5 / 2.0,
            del_rate: 1.744e-5 / 2.0,
            abundance_sigma: 0.6,
            transition_bias: TransitionBias::default(),
            qmodel: QModel::default(),
            rng_seed: 1,
        }
    }

    pub fn noiseless() -> Self {
        ChannelConfig {
            sub_rate: 0.0,
            ins_rate: 0.0,
            del_rate: 0.0,
            ..ChannelConfig::data_b()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sub_rate", self.sub_rate),
            ("ins_rate", self.ins_rate),
            ("del_rate", self.del_rate),
            ("p_err_high_q", self.qmodel.p_err_high_q),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.sub_rate + self.ins_rate + self.del_rate > 1.0 {
            return Err(Error::Config("error rates sum above 1".into()));
        }
        if self.abundance_sigma < 0.0 || self.qmodel.q_spread < 0.0 {
            return Err(Error::Config("negative spread parameter".into()));
        }
        if self.qmodel.q_min > self.qmodel.q_max {
            return Err(Error::Config("q_min above q_max".into()));
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<ForwardKernel> {
        match &self.transition_bias {
            TransitionBias::Uniform => Ok(ForwardKernel::uniform()),
            TransitionBias::Synthetic { tilt } => Ok(ForwardKernel::synthetic(*tilt)),
            TransitionBias::Table { path } => {
                Ok(TransitionTable::load(Path::new(path))?.to_forward_kernel())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Sub { from: Base, to: Base },
    /// A base inserted before the source position.
    Ins(Base),
    Del,
}

/// One injected event, indexed by source-oligo position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InjectedError {
    pub pos: usize,
    pub kind: ErrorKind,
}

impl InjectedError {
    fn encode(&self, out: &mut String) {
        match self.kind {
            ErrorKind::Sub { from, to } => write!(out, "S{}:{}>{}", self.pos, from, to),
            ErrorKind::Ins(b) => write!(out, "I{}:{}", self.pos, b),
            ErrorKind::Del => write!(out, "D{}", self.pos),
        }
        .unwrap();
    }

    fn decode(tok: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad error token {tok:?}"));
        let (tag, rest) = tok.split_at(1);
        let (pos, tail) = rest.split_once(':').unwrap_or((rest, ""));
        let pos: usize = pos.parse().map_err(|_| bad())?;
        let base = |c: Option<u8>| c.and_then(Base::from_ascii).ok_or_else(bad);
        let kind = match tag {
            "S" => {
                let t = tail.as_bytes();
                if t.len() != 3 || t[1] != b'>' {
                    return Err(bad());
                }
                ErrorKind::Sub {
                    from: base(t.first().copied())?,
                    to: base(t.get(2).copied())?,
                }
            }
            "I" => ErrorKind::Ins(base(tail.as_bytes().first().copied())?),
            "D" => ErrorKind::Del,
            _ => return Err(bad()),
        };
        Ok(InjectedError { pos, kind })
    }
}

/// Ground truth for one simulated read.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReadTruth {
    pub read_id: String,
    pub oligo_index: usize,
    pub errors: Vec<InjectedError>,
}

impl ReadTruth {
    pub fn has_indel(&self) -> bool {
        self.errors
            .iter()
            .any(|e| !matches!(e.kind, ErrorKind::Sub { .. }))
    }
}

/// Rebuilds a read's bases from its source oligo and injected events.
pub fn replay(oligo: &Oligo, errors: &[InjectedError]) -> Vec<u8> {
    let mut out = Vec::with_capacity(OLIGO_NT + 4);
    let mut it = errors.iter().peekable();
    for (pos, &b) in oligo.bases().iter().enumerate() {
        let mut base = Some(b);
        while let Some(e) = it.next_if(|e| e.pos == pos) {
            match e.kind {
                ErrorKind::Ins(x) => out.push(x.to_ascii()),
                ErrorKind::Del => base = None,
                ErrorKind::Sub { to, .. } => base = Some(to),
            }
        }
        if let Some(b) = base {
            out.push(b.to_ascii());
        }
    }
    out
}

/// Per-oligo read counts: lognormal weights, then an exact multinomial split
/// of `total_reads`.
pub fn sample_abundances<R: Rng>(
    n_oligos: usize,
    total_reads: u64,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if n_oligos == 0 {
        return Err(Error::Param("no oligos to sample".into()));
    }
    let weights: Vec<f64> = if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Param(e.to_string()))?;
        (0..n_oligos).map(|_| normal.sample(rng).exp()).collect()
    } else {
        vec![1.0; n_oligos]
    };
    let mut remaining_weight: f64 = weights.iter().sum();
    let mut remaining = total_reads;
    let mut counts = Vec::with_capacity(n_oligos);
    for (i, w) in weights.iter().enumerate() {
        if i + 1 == n_oligos {
            counts.push(remaining);
            break;
        }
        let p = (w / remaining_weight).clamp(0.0, 1.0);
        let c = if remaining == 0 || p == 0.0 {
            0
        } else {
            Binomial::new(remaining, p)
                .map_err(|e| Error::Param(e.to_string()))?
                .sample(rng)
        };
        counts.push(c);
        remaining -= c;
        remaining_weight -= w;
    }
    Ok(counts)
}

/// Sampler state shared by every read of a simulation.
pub struct Corrupter {
    kernel: ForwardKernel,
    sub: f64,
    ins: f64,
    del: f64,
    q: QModel,
    q_ok: Normal<f64>,
    q_err: Normal<f64>,
}

impl Corrupter {
    pub fn new(config: &ChannelConfig) -> Result<Self> {
        config.validate()?;
        let qm = &config.qmodel;
        let normal = |m| Normal::new(m, qm.q_spread).map_err(|e| Error::Param(e.to_string()));
        Ok(Corrupter {
            kernel: config.kernel()?,
            sub: config.sub_rate,
            ins: config.ins_rate,
            del: config.del_rate,
            q_ok: normal(qm.q_correct_mean)?,
            q_err: normal(qm.q_error_mean)?,
            q: qm.clone(),
        })
    }

    pub fn kernel(&self) -> &ForwardKernel {
        &self.kernel
    }

    fn draw_q<R: Rng>(&self, erroneous: bool, rng: &mut R) -> u8 {
        let dist = if erroneous && !rng.random_bool(self.q.p_err_high_q) {
            &self.q_err
        } else {
            &self.q_ok
        };
        dist.sample(rng)
            .round()
            .clamp(self.q.q_min as f64, self.q.q_max as f64) as u8
    }

    /// Sequences one copy of `oligo`.
    pub fn corrupt<R: Rng>(&self, oligo: &Oligo, rng: &mut R) -> (ReadRecord, Vec<InjectedError>) {
        let mut bases = Vec::with_capacity(OLIGO_NT + 2);
        let mut qscores = Vec::with_capacity(OLIGO_NT + 2);
        let mut errors = Vec::new();
        let (t_sub, t_ins, t_del) = (self.sub, self.sub + self.ins, self.sub + self.ins + self.del);
        for (pos, &b) in oligo.bases().iter().enumerate() {
            let u: f64 = if t_del > 0.0 { rng.random() } else { 1.0 };
            if u < t_sub {
                let to = self.kernel.sample(pos, b, rng.random());
                errors.push(InjectedError {
                    pos,
                    kind: ErrorKind::Sub { from: b, to },
                });
                bases.push(to.to_ascii());
                qscores.push(self.draw_q(true, rng));
            } else if u < t_ins {
                let x = Base::ALL[rng.random_range(0..4)];
                errors.push(InjectedError {
                    pos,
                    kind: ErrorKind::Ins(x),
                });
                bases.push(x.to_ascii());
                qscores.push(self.draw_q(true, rng));
                bases.push(b.to_ascii());
                qscores.push(self.draw_q(false, rng));
            } else if u < t_del {
                errors.push(InjectedError {
                    pos,
                    kind: ErrorKind::Del,
                });
            } else {
                bases.push(b.to_ascii());
                qscores.push(self.draw_q(false, rng));
            }
        }
        (
            ReadRecord {
                id: String::new(),
                bases,
                qscores,
            },
            errors,
        )
    }
}

pub fn corrupt_read<R: Rng>(
    oligo: &Oligo,
    config: &ChannelConfig,
    rng: &mut R,
) -> Result<(ReadRecord, Vec<InjectedError>)> {
    Ok(Corrupter::new(config)?.corrupt(oligo, rng))
}

#[derive(Clone, Debug, Default)]
pub struct SimulatedPool {
    pub reads: Vec<ReadRecord>,
    pub truth: Vec<ReadTruth>,
}

const PARTITION: usize = 256;

/// Derives an independent stream of the run's generator.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates `total_reads` reads of the pool in shuffled order. Deterministic
/// in `config.rng_seed` regardless of thread count.
pub fn simulate_pool(oligos: &[Oligo], total_reads: u64, config: &ChannelConfig) -> Result<SimulatedPool> {
    if oligos.is_empty() {
        return Err(Error::Param("empty oligo pool".into()));
    }
    let corrupter = Corrupter::new(config)?;
    let mut master = stream_rng(config.rng_seed, 0);
    let counts = sample_abundances(oligos.len(), total_reads, config.abundance_sigma, &mut master)?;

    let chunks: Vec<(usize, &[Oligo])> = oligos.chunks(PARTITION).enumerate().collect();
    let parts: Vec<Vec<(ReadRecord, ReadTruth)>> = chunks
        .par_iter()
        .map(|&(ci, chunk)| {
            let mut rng = stream_rng(config.rng_seed, ci as u64 + 1);
            let mut out = Vec::new();
            for (off, oligo) in chunk.iter().enumerate() {
                let idx = ci * PARTITION + off;
                for _ in 0..counts[idx] {
                    let (read, errors) = corrupter.corrupt(oligo, &mut rng);
                    out.push((
                        read,
                        ReadTruth {
                            read_id: String::new(),
                            oligo_index: idx,
                            errors,
                        },
                    ));
                }
            }
            out
        })
        .collect();
    let mut all: Vec<(ReadRecord, ReadTruth)> = parts.into_iter().flatten().collect();
    all.shuffle(&mut master);
    let mut pool = SimulatedPool {
        reads: Vec::with_capacity(all.len()),
        truth: Vec::with_capacity(all.len()),
    };
    for (i, (mut read, mut truth)) in all.into_iter().enumerate() {
        read.id = format!("sim{i:09}");
        truth.read_id = read.id.clone();
        pool.reads.push(read);
        pool.truth.push(truth);
    }
    Ok(pool)
}

/// Tab-separated sidecar: read id, oligo index, comma-separated events.
pub fn write_truth<W: Write>(mut out: W, truth: &[ReadTruth]) -> std::io::Result<()> {
    writeln!(out, "#read_id\toligo_index\terrors")?;
    let mut buf = String::new();
    for t in truth {
        buf.clear();
        for (i, e) in t.errors.iter().enumerate() {
            if i > 0 {
                buf.push(',');
            }
            e.encode(&mut buf);
        }
        writeln!(out, "{}\t{}\t{}", t.read_id, t.oligo_index, buf)?;
    }
    Ok(())
}

pub fn read_truth(text: &str) -> Result<Vec<ReadTruth>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| {
            let mut f = l.split('\t');
            let read_id = f.next().unwrap_or("").to_string();
            let oligo_index = f
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad truth line {l:?}")))?;
            let errors = match f.next() {
                Some(s) if !s.is_empty() => s.split(',').map(InjectedError::decode).collect::<Result<_>>()?,
                _ => Vec::new(),
            };
            Ok(ReadTruth {
                read_id,
                oligo_index,
                errors,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dna::{assemble_oligo, PAYLOAD_BYTES};

    fn oligo(seed: u32) -> Oligo {
        let payload: [u8; PAYLOAD_BYTES] = std::array::from_fn(|i| (i as u32 * 31 + seed * 7) as u8);
        assemble_oligo(seed, &payload)
    }

    #[test]
    fn zero_rates_reproduce_the_oligo() {
        let o = oligo(3);
        let mut rng = stream_rng(1, 0);
        let (read, errs) = corrupt_read(&o, &ChannelConfig::noiseless(), &mut rng).unwrap();
        assert!(errs.is_empty());
        assert_eq!(read.bases, o.to_string_ascii().into_bytes());
        assert_eq!(read.qscores.len(), OLIGO_NT);
    }

    #[test]
    fn deletions_change_length() {
        let cfg = ChannelConfig {
            del_rate: 0.01,
            ..ChannelConfig::noiseless()
        };
        let c = Corrupter::new(&cfg).unwrap();
        let mut rng = stream_rng(2, 0);
        let o = oligo(4);
        let off = (0..200).filter(|_| c.corrupt(&o, &mut rng).0.len() != OLIGO_NT).count();
        assert!(off > 0);
    }

    #[test]
    fn abundances_sum_exactly() {
        let mut rng = stream_rng(3, 0);
        for sigma in [0.0, 0.6, 1.5] {
            let c = sample_abundances(977, 12_345, sigma, &mut rng).unwrap();
            assert_eq!(c.iter().sum::<u64>(), 12_345);
        }
        assert!(sample_abundances(0, 10, 0.6, &mut rng).is_err());
    }

    #[test]
    fn zero_sigma_counts_are_near_uniform() {
        let mut rng = stream_rng(4, 0);
        let c = sample_abundances(100, 100_000, 0.0, &mut rng).unwrap();
        // Binomial(100000, 0.01): sd ~ 31.5.
        assert!(c.iter().all(|&x| (x as f64 - 1000.0).abs() < 200.0));
    }

    #[test]
    fn truth_replays_to_read_and_roundtrips() {
        let cfg = ChannelConfig {
            sub_rate: 0.02,
            ins_rate: 0.01,
            del_rate: 0.01,
            ..ChannelConfig::noiseless()
        };
        let pool: Vec<Oligo> = (0..20).map(oligo).collect();
        let sim = simulate_pool(&pool, 500, &cfg).unwrap();
        assert_eq!(sim.reads.len(), 500);
        for (r, t) in sim.reads.iter().zip(&sim.truth) {
            assert_eq!(r.id, t.read_id);
            assert_eq!(replay(&pool[t.oligo_index], &t.errors), r.bases);
        }
        let mut buf = Vec::new();
        write_truth(&mut buf, &sim.truth).unwrap();
        assert_eq!(read_truth(std::str::from_utf8(&buf).unwrap()).unwrap(), sim.truth);
    }

    #[test]
    fn kernels_are_row_stochastic() {
        for k in [ForwardKernel::uniform(), ForwardKernel::synthetic(0.6)] {
            for pos in 0..OLIGO_NT {
                for from in Base::ALL {
                    let s: f64 = Base::ALL.iter().map(|&to| k.prob(pos, from, to)).sum();
                    assert!((s - 1.0).abs() < 1e-12);
                    assert_eq!(k.prob(pos, from, from), 0.0);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_rates() {
        let cfg = ChannelConfig {
            sub_rate: 1.5,
            ..ChannelConfig::noiseless()
        };
        assert!(cfg.validate().is_err());
    }
}
