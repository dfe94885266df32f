//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use dnacode::bp::{BpConfig, BpGraph, SparseParityMatrix};
use dnacode::codec::{encode_bytes, CodeParams, EncodedPool};
use dnacode::config::RunConfig;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random bytes filling the desk-scale capacity, and their encoded pool.
pub fn desk_pool(seed: u64) -> (RunConfig, Vec<u8>, EncodedPool) {
    let cfg = RunConfig::desk_scale();
    let params: CodeParams = cfg.code.params().unwrap();
    let mut data = vec![0u8; params.capacity_bytes()];
    rng(seed).fill_bytes(&mut data);
    let pool = encode_bytes(&data, &params).unwrap();
    (cfg, data, pool)
}

/// A parity structure whose Tanner graph is a forest.
pub struct TreeInstance {
    pub k: usize,
    pub rows: Vec<Vec<u32>>,
    pub info_llrs: Vec<f64>,
    pub coded_llrs: Vec<f64>,
}

/// Grows a tree by attaching each new check to one existing variable plus
/// fresh ones; single-variable leaf checks are sprinkled in.
pub fn tree_instance(rng: &mut impl Rng, k: usize, with_priors: bool) -> TreeInstance {
    let mut rows: Vec<Vec<u32>> = Vec::new();
    let mut attached = 1;
    while attached < k {
        if rng.random_bool(0.3) {
            rows.push(vec![rng.random_range(0..attached) as u32]);
            continue;
        }
        let fresh = rng.random_range(1..=3usize).min(k - attached);
        let mut row = vec![rng.random_range(0..attached) as u32];
        row.extend((attached..attached + fresh).map(|v| v as u32));
        attached += fresh;
        rows.push(row);
    }
    for _ in 0..rng.random_range(1..=3) {
        rows.push(vec![rng.random_range(0..k) as u32]);
    }
    let coded_llrs = (0..rows.len()).map(|_| rng.random_range(-4.0..4.0)).collect();
    let info_llrs = (0..k)
        .map(|_| if with_priors { rng.random_range(-2.0..2.0) } else { 0.0 })
        .collect();
    TreeInstance {
        k,
        rows,
        info_llrs,
        coded_llrs,
    }
}

/// Exact posterior LLRs of every information and coded bit by summing over
/// all 2^k assignments.
pub fn exhaustive_marginals(t: &TreeInstance) -> (Vec<f64>, Vec<f64>) {
    let mut info = vec![[0.0f64; 2]; t.k];
    let mut coded = vec![[0.0f64; 2]; t.rows.len()];
    for x in 0u32..(1 << t.k) {
        let bit = |v: u32| (x >> v) & 1;
        let mut log_w = 0.0;
        for (v, &l) in t.info_llrs.iter().enumerate() {
            log_w += if bit(v as u32) == 0 { l / 2.0 } else { -l / 2.0 };
        }
        let parities: Vec<u32> = t.rows.iter().map(|r| r.iter().fold(0, |a, &v| a ^ bit(v))).collect();
        for (c, &l) in parities.iter().zip(&t.coded_llrs) {
            log_w += if *c == 0 { l / 2.0 } else { -l / 2.0 };
        }
        let w = log_w.exp();
        for (v, acc) in info.iter_mut().enumerate() {
            acc[bit(v as u32) as usize] += w;
        }
        for (c, acc) in parities.iter().zip(coded.iter_mut()) {
            acc[*c as usize] += w;
        }
    }
    let llr = |a: &[f64; 2]| (a[0] / a[1]).ln();
    (info.iter().map(llr).collect(), coded.iter().map(llr).collect())
}

/// Largest posterior deviation between BP and the exhaustive oracle.
pub fn bp_oracle_error(t: &TreeInstance) -> f64 {
    let h = SparseParityMatrix::from_rows(t.k, &t.rows).unwrap();
    let known: Vec<bool> = t.info_llrs.iter().map(|&l| l != 0.0).collect();
    let graph = BpGraph::new(&h, Some(&known));
    let config = BpConfig {
        max_iter: 200,
        early_stop: false,
    };
    let res = graph.decode(&t.info_llrs, &t.coded_llrs, &config).unwrap();
    let (info, coded) = exhaustive_marginals(t);
    info.iter()
        .zip(&res.info_posteriors)
        .chain(coded.iter().zip(&res.coded_posteriors))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
