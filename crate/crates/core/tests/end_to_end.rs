mod common;

use dnacode::channel::simulate_pool;
use dnacode::cluster::cluster_by_seed;
use dnacode::codec::bytes_from_packets;
use dnacode::fastq::ReadRecord;
use dnacode::fountain::required_symbols;
use dnacode::pipeline::{hard_decode_baseline, iterative_soft_decode};
use dnacode::stats::{estimate_transitions, PoolIndex, TransitionTable};

#[test]
fn noiseless_reads_of_k_distinct_oligos_decode() {
    let (cfg, data, pool) = common::desk_pool(21);
    let params = cfg.pipeline_params().unwrap();
    let k_req = required_symbols(&params.soliton).unwrap();
    let reads: Vec<ReadRecord> = pool.oligos[..k_req]
        .iter()
        .enumerate()
        .map(|(i, o)| ReadRecord {
            id: format!("r{i}"),
            bases: o.to_string_ascii().into_bytes(),
            qscores: vec![40; o.bases().len()],
        })
        .collect();
    let set = cluster_by_seed(reads, &pool.seeds);
    assert_eq!(set.clusters.len(), k_req);
    for report in [
        iterative_soft_decode(&set.clusters, &TransitionTable::uniform(), &params).unwrap(),
        hard_decode_baseline(&set.clusters, &params).unwrap(),
    ] {
        assert!(report.success, "{:?}", report.reason);
        assert!(report.removals.is_empty());
        let bytes = bytes_from_packets(report.recovered.as_ref().unwrap(), data.len()).unwrap();
        assert_eq!(bytes, data);
    }
}

#[test]
fn generous_budget_decodes_on_the_default_channel() {
    let (cfg, data, pool) = common::desk_pool(22);
    let params = cfg.pipeline_params().unwrap();
    let sim = simulate_pool(&pool.oligos, 20_000, &cfg.channel).unwrap();
    let (table, summary) = estimate_transitions(&sim.reads, &PoolIndex::new(&pool.oligos).unwrap());
    assert!(summary.reads_used > 19_000);
    let set = cluster_by_seed(sim.reads, &pool.seeds);
    for report in [
        iterative_soft_decode(&set.clusters, &table, &params).unwrap(),
        hard_decode_baseline(&set.clusters, &params).unwrap(),
    ] {
        assert!(report.success, "{:?}", report.reason);
        let bytes = bytes_from_packets(report.recovered.as_ref().unwrap(), data.len()).unwrap();
        assert_eq!(bytes, data);
    }
}

#[test]
fn simulation_is_reproducible() {
    let (cfg, _, pool) = common::desk_pool(23);
    let a = simulate_pool(&pool.oligos, 3000, &cfg.channel).unwrap();
    let b = simulate_pool(&pool.oligos, 3000, &cfg.channel).unwrap();
    assert_eq!(a.reads, b.reads);
    assert_eq!(a.truth, b.truth);
}
