//! Soft decoding with RS-driven redecoding, and the RS-first hard baseline.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::{build_h, BpConfig, BpGraph};
use crate::cluster::{compute_llrs, majority_vote, Cluster, ClusterLlr, LlrMode, SizeWeights};
use crate::dna::{bases_to_bytes, Payload, PAYLOAD_BITS, PAYLOAD_BYTES};
use crate::erasure;
use crate::error::{Error, Result};
use crate::fountain::{required_symbols, LtCode, SolitonParams};
use crate::rs::{rs_decode_bytes, RsStatus, RS_K, RS_N};
use crate::stats::TransitionTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub soliton: SolitonParams,
    /// Maximum number of redecoding rounds.
    pub n_re: usize,
    pub llr_mode: LlrMode,
    pub redecoding: bool,
    pub bp: BpConfig,
    /// Bit crossover probability for the count-based LLR.
    pub crossover_p: f64,
    pub size_weights: Option<SizeWeights>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            soliton: SolitonParams {
                k: 16050,
                c: 0.025,
                delta: 0.001,
            },
            n_re: 3,
            llr_mode: LlrMode::Proposed,
            redecoding: true,
            bp: BpConfig::default(),
            crossover_p: 2.0 / 3.0 * 8.352e-4,
            size_weights: None,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        self.soliton.validate()?;
        if !(self.crossover_p > 0.0 && self.crossover_p < 0.5) {
            return Err(Error::Config(format!("crossover_p {} outside (0, 0.5)", self.crossover_p)));
        }
        if self.bp.max_iter == 0 {
            return Err(Error::Config("bp.max_iter must be positive".into()));
        }
        Ok(())
    }

    /// Redecoding rounds actually allowed.
    pub fn rounds_allowed(&self) -> usize {
        if self.redecoding {
            self.n_re
        } else {
            0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemovalReason {
    RsFailure,
    SeedCorrection,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub seed: u32,
    pub round: usize,
    pub reason: RemovalReason,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub active: usize,
    pub planes_converged: usize,
    pub mean_bp_iterations: f64,
    pub undetermined_info_bits: usize,
    pub rs_failures: usize,
    pub seed_corrections: usize,
    #[serde(skip)]
    pub millis: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub success: bool,
    pub reason: Option<String>,
    /// Outcome had the decode stopped after the first BP phase.
    pub success_first_round: bool,
    /// BP phases run.
    pub iterations_performed: usize,
    pub rounds: Vec<RoundReport>,
    pub clusters_discarded_per_round: Vec<usize>,
    pub clusters_with_seed_corrections_removed: usize,
    pub removals: Vec<Removal>,
    /// Clusters (soft) or surviving oligos (hard) entering the final solve.
    pub active_final: usize,
    /// Reads retained by clustering.
    pub reads_retained: u64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub recovered: Option<Vec<Payload>>,
    /// Wall time; kept out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub millis: f64,
}

struct PlaneOutcome {
    coded_bits: Vec<u8>,
    info_bits: Vec<u8>,
    converged: bool,
    iterations: usize,
}

fn payload_from_bits(bits: impl Iterator<Item = u8>) -> Payload {
    let mut p = [0u8; PAYLOAD_BYTES];
    for (i, b) in bits.enumerate() {
        p[i / 8] |= (b & 1) << (7 - i % 8);
    }
    p
}

fn rs_word(seed: u32, payload: &Payload, parity: &[u8]) -> [u8; RS_N] {
    let mut w = [0u8; RS_N];
    w[..4].copy_from_slice(&seed.to_be_bytes());
    w[4..RS_K].copy_from_slice(payload);
    w[RS_K..].copy_from_slice(parity);
    w
}

fn message_payload(word: &[u8; RS_N]) -> Payload {
    word[4..RS_K].try_into().unwrap()
}

fn solve_info(code: &LtCode, seeds: &[u32], payloads: &[Payload]) -> std::result::Result<Vec<Payload>, erasure::SolveError> {
    let rows: Vec<Vec<u32>> = seeds.iter().map(|&s| code.neighbors(s)).collect();
    erasure::solve(code.k(), &rows, payloads).map(|(x, _)| x)
}

/// Runs the soft decoder on precomputed cluster LLRs.
pub fn soft_decode_llrs(llrs: &[ClusterLlr], params: &PipelineParams) -> Result<DecodeReport> {
    let start = Instant::now();
    let code = LtCode::new(params.soliton)?;
    let required = required_symbols(&params.soliton)?;
    let mut report = DecodeReport {
        reads_retained: llrs.iter().map(|c| c.member_count as u64).sum(),
        ..Default::default()
    };
    let mut active: Vec<usize> = (0..llrs.len()).collect();
    let allowed = params.rounds_allowed();
    let mut round = 0;
    loop {
        let t0 = Instant::now();
        let seeds: Vec<u32> = active.iter().map(|&i| llrs[i].seed).collect();
        let h = build_h(&seeds, &code)?;
        if let Some(w) = &h.warning {
            report.warnings.push(format!("round {round}: {w}"));
        }
        let graph = BpGraph::new(&h, None);
        let zeros = vec![0.0; h.k()];
        let planes: Vec<PlaneOutcome> = (0..PAYLOAD_BITS)
            .into_par_iter()
            .map(|p| {
                let plane: Vec<f64> = active.iter().map(|&i| llrs[i].payload_llrs[p]).collect();
                graph.decode(&zeros, &plane, &params.bp).map(|res| PlaneOutcome {
                    coded_bits: res.coded_bits,
                    info_bits: res.info_bits,
                    converged: res.converged,
                    iterations: res.iterations,
                })
            })
            .collect::<Result<_>>()?;
        let converged = planes.iter().filter(|p| p.converged).count();
        let iter_sum: usize = planes.iter().map(|p| p.iterations).sum();

        let mut bad = Vec::new();
        // (seed, payload, clean) of every cluster that passed the RS check.
        let mut passed = Vec::with_capacity(active.len());
        let (mut rs_failures, mut seed_corrections) = (0, 0);
        for (r, &i) in active.iter().enumerate() {
            let c = &llrs[i];
            let payload = payload_from_bits(planes.iter().map(|p| p.coded_bits[r]));
            let parity = bases_to_bytes(&c.rs_parity_hard);
            let out = rs_decode_bytes(&rs_word(c.seed, &payload, &parity));
            if !out.is_ok() {
                rs_failures += 1;
                bad.push((r, RemovalReason::RsFailure));
            } else if out.touched_seed() {
                seed_corrections += 1;
                bad.push((r, RemovalReason::SeedCorrection));
            } else {
                let clean = out.status == RsStatus::Clean;
                passed.push((c.seed, message_payload(&out.codeword.expect("decoded").to_bytes()), clean));
            }
        }
        report.rounds.push(RoundReport {
            active: active.len(),
            planes_converged: converged,
            mean_bp_iterations: iter_sum as f64 / PAYLOAD_BITS as f64,
            undetermined_info_bits: graph.undetermined(),
            rs_failures,
            seed_corrections,
            millis: t0.elapsed().as_secs_f64() * 1e3,
        });
        report.iterations_performed = round + 1;

        if bad.is_empty() {
            // Converged planes carry their information bits; otherwise they
            // are solved from the RS-checked coded packets, preferring the
            // clean ones: a two-symbol error is "corrected" to a wrong word
            // far more often than it lands on a codeword.
            let info = if converged == PAYLOAD_BITS {
                Ok((0..h.k())
                    .map(|v| payload_from_bits(planes.iter().map(|p| p.info_bits[v])))
                    .collect())
            } else {
                let (clean_seeds, clean_payloads): (Vec<u32>, Vec<Payload>) =
                    passed.iter().filter(|p| p.2).map(|p| (p.0, p.1)).unzip();
                match solve_info(&code, &clean_seeds, &clean_payloads) {
                    Err(erasure::SolveError::RankDeficient { .. }) => {
                        let (s, p): (Vec<u32>, Vec<Payload>) = passed.iter().map(|p| (p.0, p.1)).unzip();
                        solve_info(&code, &s, &p)
                    }
                    other => other,
                }
            };
            match info {
                Ok(x) => {
                    report.success = true;
                    report.recovered = Some(x);
                }
                Err(e) => report.reason = Some(format!("round {round}: information solve failed: {e}")),
            }
            report.success_first_round = round == 0 && report.success;
            report.active_final = active.len();
            break;
        }
        if round >= allowed {
            report.reason = Some(format!(
                "round {round}: {rs_failures} RS failures and {seed_corrections} seed corrections with no redecoding left"
            ));
            report.active_final = active.len();
            break;
        }
        report.clusters_discarded_per_round.push(bad.len());
        report.clusters_with_seed_corrections_removed += seed_corrections;
        for &(r, reason) in &bad {
            report.removals.push(Removal {
                seed: llrs[active[r]].seed,
                round,
                reason,
            });
        }
        let mut drop = vec![false; active.len()];
        for &(r, _) in &bad {
            drop[r] = true;
        }
        active = active.into_iter().zip(drop).filter(|&(_, d)| !d).map(|(i, _)| i).collect();
        round += 1;
        if active.len() < required {
            report.reason = Some(format!(
                "round {round}: {} active clusters after removals, below the {required} required",
                active.len()
            ));
            report.active_final = active.len();
            break;
        }
    }
    report.millis = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

/// Soft decoding of clustered reads with RS-driven cluster removal.
pub fn iterative_soft_decode(clusters: &[Cluster], table: &TransitionTable, params: &PipelineParams) -> Result<DecodeReport> {
    params.validate()?;
    let llrs = compute_llrs(clusters, &params.llr_mode, table, params.crossover_p, params.size_weights.as_ref())?;
    soft_decode_llrs(&llrs, params)
}

/// Majority vote and RS decode per cluster, then erasure recovery of the
/// information packets from the surviving oligos.
pub fn hard_decode_baseline(clusters: &[Cluster], params: &PipelineParams) -> Result<DecodeReport> {
    let start = Instant::now();
    params.soliton.validate()?;
    let code = LtCode::new(params.soliton)?;
    let mut report = DecodeReport {
        reads_retained: clusters.iter().map(|c| c.members.len() as u64).sum(),
        iterations_performed: 1,
        ..Default::default()
    };
    let mut seeds = Vec::new();
    let mut payloads = Vec::new();
    let mut discarded = 0;
    for c in clusters {
        let word: [u8; RS_N] = bases_to_bytes(&majority_vote(c)).try_into().unwrap();
        let out = rs_decode_bytes(&word);
        let reason = if !out.is_ok() {
            Some(RemovalReason::RsFailure)
        } else if out.touched_seed() {
            Some(RemovalReason::SeedCorrection)
        } else {
            None
        };
        match reason {
            Some(reason) => {
                discarded += 1;
                if reason == RemovalReason::SeedCorrection {
                    report.clusters_with_seed_corrections_removed += 1;
                }
                report.removals.push(Removal { seed: c.seed, round: 0, reason });
            }
            None => {
                seeds.push(c.seed);
                payloads.push(message_payload(&out.codeword.expect("decoded").to_bytes()));
            }
        }
    }
    report.clusters_discarded_per_round.push(discarded);
    report.active_final = seeds.len();
    if seeds.len() < code.k() {
        report.reason = Some(format!("{} surviving oligos for {} information packets", seeds.len(), code.k()));
    } else {
        match solve_info(&code, &seeds, &payloads) {
            Ok(x) => {
                report.success = true;
                report.recovered = Some(x);
            }
            Err(e) => report.reason = Some(format!("information solve failed: {e}")),
        }
    }
    report.success_first_round = report.success;
    report.millis = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dna::{assemble_oligo, rs_check_bases, Base};
    use crate::rs::RsStatus;
    use crate::fastq::ReadRecord;
    use crate::fountain::{lt_encode, SeedSchedule};
    use rand::{Rng, SeedableRng};

    fn setup(k: usize, n: usize) -> (PipelineParams, Vec<Payload>, SeedSchedule, Vec<Cluster>) {
        let params = PipelineParams {
            soliton: SolitonParams::new(k, 0.025, 0.001).unwrap(),
            ..Default::default()
        };
        let code = LtCode::new(params.soliton).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let source: Vec<Payload> = (0..k).map(|_| rng.random()).collect();
        let seeds = SeedSchedule::first(n);
        let coded = lt_encode(&code, &source, &seeds).unwrap();
        let clusters = seeds
            .seeds
            .iter()
            .zip(&coded)
            .enumerate()
            .map(|(i, (&s, p))| Cluster {
                seed: s,
                seed_index: i,
                members: vec![ReadRecord {
                    id: format!("r{i}"),
                    bases: assemble_oligo(s, p).to_string_ascii().into_bytes(),
                    qscores: vec![35; 152],
                }],
            })
            .collect();
        (params, source, seeds, clusters)
    }

    #[test]
    fn noiseless_soft_and_hard_succeed() {
        let (params, source, _, clusters) = setup(100, 150);
        let t = TransitionTable::uniform();
        let soft = iterative_soft_decode(&clusters, &t, &params).unwrap();
        assert!(soft.success, "{:?}", soft.reason);
        assert!(soft.success_first_round);
        assert_eq!(soft.recovered.as_deref(), Some(&source[..]));
        assert!(soft.removals.is_empty());
        let hard = hard_decode_baseline(&clusters, &params).unwrap();
        assert!(hard.success);
        assert_eq!(hard.recovered.as_deref(), Some(&source[..]));
    }

    #[test]
    fn poisoned_cluster_needs_redecoding() {
        let (mut params, source, _, mut clusters) = setup(100, 150);
        let t = TransitionTable::uniform();
        // Corrupt one base in each parity symbol, picking replacements the RS
        // check flags as uncorrectable.
        let m = &mut clusters[17].members[0];
        let orig = m.bases.clone();
        'search: for a in b"ACGT" {
            for b in b"ACGT" {
                m.bases[144] = *a;
                m.bases[148] = *b;
                let bases: Vec<Base> = m.bases.iter().map(|&c| Base::from_ascii(c).unwrap()).collect();
                if rs_check_bases(&bases.try_into().unwrap()).status == RsStatus::DetectedUncorrectable {
                    break 'search;
                }
                m.bases = orig.clone();
            }
        }
        assert_ne!(m.bases, orig);
        m.qscores[144] = 41;
        m.qscores[148] = 41;
        params.n_re = 0;
        let once = iterative_soft_decode(&clusters, &t, &params).unwrap();
        assert!(!once.success);
        params.n_re = 3;
        let re = iterative_soft_decode(&clusters, &t, &params).unwrap();
        assert!(re.success, "{:?}", re.reason);
        assert!(!re.success_first_round);
        assert_eq!(re.recovered.as_deref(), Some(&source[..]));
        assert!(re.removals.iter().any(|r| r.seed == clusters[17].seed));
        let hard = hard_decode_baseline(&clusters, &params).unwrap();
        assert_eq!(hard.clusters_discarded_per_round, vec![1]);
    }

    #[test]
    fn too_few_clusters_fail() {
        let (params, _, _, clusters) = setup(100, 150);
        let r = iterative_soft_decode(&clusters[..60], &TransitionTable::uniform(), &params).unwrap();
        assert!(!r.success);
        assert!(!r.warnings.is_empty());
        let h = hard_decode_baseline(&clusters[..60], &params).unwrap();
        assert!(!h.success && h.reason.is_some());
    }
}
