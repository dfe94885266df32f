//! Monte-Carlo success-rate sweep over random read subsets.
//!
//! Every decoder column sees the same subset in a given trial, so columns are
//! paired. A soft column with redecoding off is read off the first BP phase of
//! the matching redecoding run: both start from identical inputs and a run
//! with no rounds left stops exactly there.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::stream_rng;
use crate::cluster::{cluster_by_seed, compute_llrs, LlrMode};
use crate::dna::Payload;
use crate::error::{Error, Result};
use crate::fastq::ReadRecord;
use crate::fountain::SeedSchedule;
use crate::pipeline::{hard_decode_baseline, soft_decode_llrs, DecodeReport, PipelineParams};
use crate::stats::TransitionTable;

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decoder", rename_all = "kebab-case")]
pub enum DecoderSpec {
    Soft { llr_mode: LlrMode, redecoding: bool },
    Hard,
}

impl DecoderSpec {
    pub fn name(&self) -> String {
        match self {
            DecoderSpec::Soft { llr_mode, redecoding } => format!(
                "soft-{}-{}",
                match llr_mode {
                    LlrMode::Proposed => "proposed",
                    LlrMode::Chandak => "chandak",
                },
                if *redecoding { "redecode" } else { "single" }
            ),
            DecoderSpec::Hard => "hard".into(),
        }
    }

    /// Both LLR modes with and without redecoding, plus the hard baseline.
    pub fn full_grid() -> Vec<DecoderSpec> {
        let mut v = Vec::new();
        for llr_mode in [LlrMode::Proposed, LlrMode::Chandak] {
            for redecoding in [true, false] {
                v.push(DecoderSpec::Soft {
                    llr_mode: llr_mode.clone(),
                    redecoding,
                });
            }
        }
        v.push(DecoderSpec::Hard);
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Raw read counts drawn per trial.
    pub sampling_points: Vec<usize>,
    pub trials: usize,
    pub rng_seed: u64,
    pub decoders: Vec<DecoderSpec>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sampling_points: vec![5000, 6000, 7000, 8000, 9000, 10000],
            trials: 20,
            rng_seed: 7,
            decoders: DecoderSpec::full_grid(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub success: bool,
    /// Claimed success whose payload disagrees with the ground truth.
    pub false_success: bool,
    pub bp_phases: usize,
    pub clusters_removed: usize,
    pub reads_retained: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub successes: usize,
    pub trials: usize,
    pub false_successes: usize,
    pub mean_rounds: f64,
    pub mean_clusters_removed: f64,
    pub mean_reads_retained: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub reads: usize,
    pub results: BTreeMap<String, ColumnSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub version: u32,
    pub columns: Vec<String>,
    pub points: Vec<PointSummary>,
    /// Spearman rank correlation of success count against read budget.
    pub trend: BTreeMap<String, f64>,
    /// Per point and trial, per column.
    pub trials: Vec<Vec<BTreeMap<String, TrialOutcome>>>,
    /// Effective configuration of the run, filled in by the caller.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// Wall-clock data kept apart from the report so that reports stay
/// byte-reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTiming {
    /// `[point][column]` total milliseconds over trials.
    pub wall_ms: Vec<BTreeMap<String, f64>>,
    pub total_ms: f64,
}

impl SweepReport {
    pub fn successes(&self, column: &str) -> Vec<usize> {
        self.points.iter().map(|p| p.results.get(column).map_or(0, |c| c.successes)).collect()
    }

    /// Smallest budget with every trial succeeding.
    pub fn first_full_success(&self, column: &str) -> Option<usize> {
        self.points
            .iter()
            .find(|p| p.results.get(column).is_some_and(|c| c.successes == c.trials && c.trials > 0))
            .map(|p| p.reads)
    }

    pub fn write_plot_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "reads\tdecoder\tsuccesses\ttrials\tsuccess_rate")?;
        for p in &self.points {
            for (name, c) in &p.results {
                let rate = if c.trials == 0 { 0.0 } else { c.successes as f64 / c.trials as f64 };
                writeln!(out, "{}\t{}\t{}\t{}\t{:.4}", p.reads, name, c.successes, c.trials, rate)?;
            }
        }
        Ok(())
    }
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman's rho with average ranks for ties; 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

fn outcome(r: &DecodeReport, truth: Option<&[Payload]>, first_round_only: bool) -> TrialOutcome {
    let claimed = if first_round_only { r.success_first_round } else { r.success };
    let correct = match (truth, &r.recovered) {
        (Some(t), Some(x)) => x.as_slice() == t,
        (Some(_), None) => false,
        (None, _) => true,
    };
    TrialOutcome {
        success: claimed && correct,
        false_success: claimed && !correct,
        bp_phases: if first_round_only { 1 } else { r.iterations_performed },
        clusters_removed: if first_round_only { 0 } else { r.removals.len() },
        reads_retained: r.reads_retained,
    }
}

/// Runs every decoder column on the same random read subsets.
pub fn run_trial(
    reads: &[ReadRecord],
    subset: &[usize],
    seeds: &SeedSchedule,
    table: &TransitionTable,
    params: &PipelineParams,
    decoders: &[DecoderSpec],
    truth: Option<&[Payload]>,
) -> Result<(BTreeMap<String, TrialOutcome>, BTreeMap<String, f64>)> {
    let set = cluster_by_seed(subset.iter().map(|&i| reads[i].clone()), seeds);
    let mut out = BTreeMap::new();
    let mut timing = BTreeMap::new();
    let mut soft_runs: Vec<(LlrMode, DecodeReport, f64)> = Vec::new();
    for d in decoders {
        match d {
            DecoderSpec::Hard => {
                let t0 = Instant::now();
                let r = hard_decode_baseline(&set.clusters, params)?;
                timing.insert(d.name(), t0.elapsed().as_secs_f64() * 1e3);
                out.insert(d.name(), outcome(&r, truth, false));
            }
            DecoderSpec::Soft { llr_mode, redecoding } => {
                let cached = soft_runs.iter().position(|(m, _, _)| m == llr_mode);
                let idx = match cached {
                    Some(i) => i,
                    None => {
                        let t0 = Instant::now();
                        let p = PipelineParams {
                            llr_mode: llr_mode.clone(),
                            redecoding: true,
                            ..params.clone()
                        };
                        let llrs = compute_llrs(&set.clusters, llr_mode, table, p.crossover_p, p.size_weights.as_ref())?;
                        let r = soft_decode_llrs(&llrs, &p)?;
                        soft_runs.push((llr_mode.clone(), r, t0.elapsed().as_secs_f64() * 1e3));
                        soft_runs.len() - 1
                    }
                };
                let (_, r, ms) = &soft_runs[idx];
                timing.insert(d.name(), *ms);
                out.insert(d.name(), outcome(r, truth, !redecoding || params.n_re == 0));
            }
        }
    }
    Ok((out, timing))
}

pub fn experiment_sweep(
    reads: &[ReadRecord],
    seeds: &SeedSchedule,
    table: &TransitionTable,
    params: &PipelineParams,
    sweep: &SweepConfig,
    truth: Option<&[Payload]>,
) -> Result<(SweepReport, SweepTiming)> {
    let start = Instant::now();
    params.validate()?;
    if sweep.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if sweep.decoders.is_empty() {
        return Err(Error::Config("no decoders selected".into()));
    }
    if let Some(&p) = sweep.sampling_points.iter().find(|&&p| p > reads.len()) {
        return Err(Error::Param(format!("sampling point {p} exceeds the {} available reads", reads.len())));
    }
    let jobs: Vec<(usize, usize)> = (0..sweep.sampling_points.len())
        .flat_map(|pi| (0..sweep.trials).map(move |t| (pi, t)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(pi, t)| {
            let mut rng = stream_rng(sweep.rng_seed, ((pi as u64) << 32) | t as u64);
            let subset = sample(&mut rng, reads.len(), sweep.sampling_points[pi]).into_vec();
            run_trial(reads, &subset, seeds, table, params, &sweep.decoders, truth)
        })
        .collect::<Result<Vec<_>>>()?;

    let columns: Vec<String> = sweep.decoders.iter().map(DecoderSpec::name).collect();
    let mut points = Vec::new();
    let mut trials = Vec::new();
    let mut timing = SweepTiming::default();
    for (pi, &reads_n) in sweep.sampling_points.iter().enumerate() {
        let chunk = &results[pi * sweep.trials..(pi + 1) * sweep.trials];
        let mut summary = BTreeMap::new();
        let mut wall = BTreeMap::new();
        for name in &columns {
            let outs: Vec<&TrialOutcome> = chunk.iter().map(|(o, _)| &o[name]).collect();
            let n = outs.len() as f64;
            summary.insert(
                name.clone(),
                ColumnSummary {
                    successes: outs.iter().filter(|o| o.success).count(),
                    trials: outs.len(),
                    false_successes: outs.iter().filter(|o| o.false_success).count(),
                    mean_rounds: outs.iter().map(|o| o.bp_phases as f64).sum::<f64>() / n,
                    mean_clusters_removed: outs.iter().map(|o| o.clusters_removed as f64).sum::<f64>() / n,
                    mean_reads_retained: outs.iter().map(|o| o.reads_retained as f64).sum::<f64>() / n,
                },
            );
            wall.insert(name.clone(), chunk.iter().map(|(_, t)| t[name]).sum());
        }
        points.push(PointSummary {
            reads: reads_n,
            results: summary,
        });
        trials.push(chunk.iter().map(|(o, _)| o.clone()).collect());
        timing.wall_ms.push(wall);
    }
    let xs: Vec<f64> = sweep.sampling_points.iter().map(|&p| p as f64).collect();
    let trend = columns
        .iter()
        .map(|c| {
            let ys: Vec<f64> = points.iter().map(|p| p.results[c].successes as f64).collect();
            (c.clone(), spearman(&xs, &ys))
        })
        .collect();
    timing.total_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((
        SweepReport {
            version: REPORT_VERSION,
            columns,
            points,
            trend,
            trials,
            config: None,
        },
        timing,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[2.0, 4.0, 9.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), 0.0);
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn column_names() {
        let names: Vec<String> = DecoderSpec::full_grid().iter().map(DecoderSpec::name).collect();
        assert_eq!(
            names,
            ["soft-proposed-redecode", "soft-proposed-single", "soft-chandak-redecode", "soft-chandak-single", "hard"]
        );
    }
}
