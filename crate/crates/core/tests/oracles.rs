//! Statistical and hand-evaluated oracles for the channel, the degree
//! distribution and the per-cluster LLRs.

mod common;

use dnacode::channel::{sample_abundances, simulate_pool, ChannelConfig, ErrorKind};
use dnacode::cluster::{cluster_by_seed, llr_chandak, llr_proposed, Cluster};
use dnacode::dna::{Base, OLIGO_NT, PAYLOAD_RANGE, SEED_NT};
use dnacode::experiment::spearman;
use dnacode::fastq::ReadRecord;
use dnacode::fountain::{LtCode, SolitonParams};
use dnacode::stats::{edit_distance, quality_product, PoolIndex, TransitionTable};
use rand::Rng;
use rand_distr::{Distribution, LogNormal};

#[test]
fn degree_histogram_fits_robust_soliton() {
    let code = LtCode::new(SolitonParams::new(1000, 0.03, 0.5).unwrap()).unwrap();
    const SEEDS: u32 = 100_000;
    let mut hist = vec![0u64; code.dist.max_degree() + 1];
    for seed in 0..SEEDS {
        let nb = code.neighbors(seed);
        let mut dedup = nb.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), nb.len(), "seed {seed} repeats a neighbour");
        hist[nb.len()] += 1;
    }
    // Bins with expected count >= 5; the rest pooled.
    let (mut chi2, mut bins) = (0.0, 0);
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for d in 1..hist.len() {
        let e = code.dist.probability(d) * SEEDS as f64;
        if e >= 5.0 {
            chi2 += (hist[d] as f64 - e).powi(2) / e;
            bins += 1;
        } else {
            pooled_obs += hist[d] as f64;
            pooled_exp += e;
        }
    }
    if pooled_exp > 0.0 {
        chi2 += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        bins += 1;
    }
    let df = (bins - 1) as f64;
    // Roughly the 1e-4 tail of a chi-square with df degrees of freedom.
    let critical = df + 4.0 * (2.0 * df).sqrt();
    assert!(chi2 < critical, "chi2 {chi2:.1} over {df} dof exceeds {critical:.1}");
}

#[test]
fn dropout_fraction_matches_independent_monte_carlo() {
    const N: usize = 1000;
    const READS: u64 = 2000;
    const DRAWS: usize = 60;
    let mut rng = common::rng(11);
    let simulated: f64 = (0..DRAWS)
        .map(|_| {
            let c = sample_abundances(N, READS, 1.0, &mut rng).unwrap();
            assert_eq!(c.iter().sum::<u64>(), READS);
            c.iter().filter(|&&x| x == 0).count() as f64 / N as f64
        })
        .sum::<f64>()
        / DRAWS as f64;
    // Given the weights, oligo i is missed with probability (1 - p_i)^READS.
    let lognormal = LogNormal::new(0.0, 1.0).unwrap();
    let mut oracle_rng = common::rng(12);
    let oracle: f64 = (0..DRAWS)
        .map(|_| {
            let w: Vec<f64> = (0..N).map(|_| lognormal.sample(&mut oracle_rng)).collect();
            let total: f64 = w.iter().sum();
            w.iter().map(|x| (1.0 - x / total).powf(READS as f64)).sum::<f64>() / N as f64
        })
        .sum::<f64>()
        / DRAWS as f64;
    assert!(simulated > 0.0);
    assert!((simulated - oracle).abs() < 0.02, "simulated {simulated:.4} vs oracle {oracle:.4}");
}

/// Exact probability that a read keeps length 152: as many insertions as
/// deletions over the 152 positions.
fn length_preserved_probability(ins: f64, del: f64) -> f64 {
    // dist[j + OLIGO_NT] = P(insertions - deletions = j) so far.
    let mut dist = vec![0.0; 2 * OLIGO_NT + 1];
    dist[OLIGO_NT] = 1.0;
    for _ in 0..OLIGO_NT {
        let mut next = vec![0.0; dist.len()];
        for (j, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            next[j] += p * (1.0 - ins - del);
            next[j + 1] += p * ins;
            next[j - 1] += p * del;
        }
        dist = next;
    }
    dist[OLIGO_NT]
}

#[test]
fn correct_length_fraction_matches_indel_rates() {
    let (_, _, pool) = common::desk_pool(13);
    let channel = ChannelConfig {
        ins_rate: 0.002,
        del_rate: 0.002,
        rng_seed: 13,
        ..ChannelConfig::data_b()
    };
    let sim = simulate_pool(&pool.oligos, 60_000, &channel).unwrap();
    let n = sim.reads.len() as f64;
    let observed = sim.reads.iter().filter(|r| r.len() == OLIGO_NT).count() as f64 / n;
    let expected = length_preserved_probability(channel.ins_rate, channel.del_rate);
    let sd = (expected * (1.0 - expected) / n).sqrt();
    assert!((observed - expected).abs() < 4.0 * sd, "observed {observed:.4} expected {expected:.4}");
    for (r, t) in sim.reads.iter().zip(&sim.truth) {
        let ins = t.errors.iter().filter(|e| matches!(e.kind, ErrorKind::Ins(_))).count();
        let del = t.errors.iter().filter(|e| e.kind == ErrorKind::Del).count();
        assert_eq!(r.len() + del, OLIGO_NT + ins);
    }
}

#[test]
fn retained_fraction_follows_seed_error_probability() {
    let (_, _, pool) = common::desk_pool(14);
    let channel = ChannelConfig {
        sub_rate: 0.01,
        ins_rate: 0.0,
        del_rate: 0.0,
        rng_seed: 14,
        ..ChannelConfig::data_b()
    };
    let sim = simulate_pool(&pool.oligos, 40_000, &channel).unwrap();
    let n = sim.reads.len() as f64;
    let set = cluster_by_seed(sim.reads.iter().cloned(), &pool.seeds);
    let source_of: std::collections::HashMap<&str, usize> =
        sim.truth.iter().map(|t| (t.read_id.as_str(), t.oligo_index)).collect();
    let correctly_clustered = set
        .clusters
        .iter()
        .flat_map(|c| c.members.iter().map(move |m| (c.seed_index, m)))
        .filter(|(idx, m)| source_of[m.id.as_str()] == *idx)
        .count() as f64;
    let expected = (1.0 - channel.sub_rate).powi(SEED_NT as i32);
    let sd = (expected * (1.0 - expected) / n).sqrt();
    let observed = correctly_clustered / n;
    assert!((observed - expected).abs() < 4.0 * sd, "observed {observed:.4} expected {expected:.4}");
    // A seed substitution can land on another valid seed, never the reverse.
    assert!(set.report.retained as f64 >= correctly_clustered);
    assert_eq!(set.report.discarded_length, 0);
}

#[test]
fn quality_product_falls_with_error_count() {
    let (cfg, _, pool) = common::desk_pool(15);
    let sim = simulate_pool(&pool.oligos, 20_000, &cfg.channel).unwrap();
    let (q, e): (Vec<f64>, Vec<f64>) = sim
        .reads
        .iter()
        .zip(&sim.truth)
        .map(|(r, t)| (quality_product(r), t.errors.len() as f64))
        .unzip();
    let rho = spearman(&q, &e);
    assert!(rho < -0.1, "rank correlation {rho}");
}

fn single_cluster(reads: Vec<(Vec<u8>, Vec<u8>)>) -> Cluster {
    Cluster {
        seed: 0,
        seed_index: 0,
        members: reads
            .into_iter()
            .enumerate()
            .map(|(i, (bases, qscores))| ReadRecord {
                id: format!("r{i}"),
                bases,
                qscores,
            })
            .collect(),
    }
}

#[test]
fn single_read_count_llrs_are_log_nine() {
    let mut rng = common::rng(16);
    let bases: Vec<u8> = (0..OLIGO_NT).map(|_| Base::ALL[rng.random_range(0..4)].to_ascii()).collect();
    let c = single_cluster(vec![(bases.clone(), vec![30; OLIGO_NT])]);
    let llr = llr_chandak(&c, 0.1, None).unwrap();
    for (i, pos) in PAYLOAD_RANGE.enumerate() {
        let bits = Base::from_ascii(bases[pos]).unwrap().bits();
        for (j, mask) in [(0, 2), (1, 1)] {
            let expected = if bits & mask == 0 { 9f64.ln() } else { -9f64.ln() };
            assert!((llr.payload_llrs[2 * i + j] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn high_quality_call_outweighs_low_quality_disagreement() {
    let pos = PAYLOAD_RANGE.start + 10;
    let i = pos - PAYLOAD_RANGE.start;
    let mut a = vec![b'C'; OLIGO_NT];
    a[pos] = b'A';
    let mut g = a.clone();
    g[pos] = b'G';
    let table = TransitionTable::uniform();
    for (hi, lo, sign) in [(&a, &g, 1.0), (&g, &a, -1.0)] {
        let mut q_hi = vec![30; OLIGO_NT];
        q_hi[pos] = 40;
        let mut q_lo = vec![30; OLIGO_NT];
        q_lo[pos] = 10;
        let c = single_cluster(vec![(hi.clone(), q_hi), (lo.clone(), q_lo)]);
        let llr = llr_proposed(&c, &table, None);
        // A and G differ in the first bit only.
        assert!(sign * llr.payload_llrs[2 * i] > 0.0);
        assert!(llr.payload_llrs[2 * i + 1] > 0.0);
    }
}

#[test]
fn nearest_oligo_matches_brute_force_on_shared_seed_prefixes() {
    let (_, _, pool) = common::desk_pool(17);
    // Consecutive seeds share most of the seed region, so many blocks are
    // common to large groups of oligos.
    let oligos = &pool.oligos[..400];
    let index = PoolIndex::new(oligos).unwrap();
    let mut rng = common::rng(17);
    for _ in 0..150 {
        let t = rng.random_range(0..oligos.len());
        let mut read = oligos[t].to_string_ascii().into_bytes();
        for _ in 0..rng.random_range(0..18) {
            let pos = rng.random_range(0..read.len());
            match rng.random_range(0..3) {
                0 => read[pos] = b"ACGT"[rng.random_range(0..4)],
                1 => read.insert(pos, b"ACGT"[rng.random_range(0..4)]),
                _ => {
                    read.remove(pos);
                }
            }
        }
        let (bi, bd) = oligos
            .iter()
            .enumerate()
            .map(|(i, o)| (i, edit_distance(&read, o.to_string_ascii().as_bytes())))
            .min_by_key(|&(i, d)| (d, i))
            .unwrap();
        let a = index.align(&read);
        assert_eq!((a.oligo_index, a.distance), (bi, bd));
    }
}
