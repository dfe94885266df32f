use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::RngCore;
use serde_json::{json, Value};

use dnacode::channel::{simulate_pool, stream_rng, write_truth};
use dnacode::cluster::{cluster_by_seed, LlrMode};
use dnacode::codec::{bytes_from_packets, encode_bytes};
use dnacode::config::RunConfig;
use dnacode::dna::{read_fasta, write_fasta, PoolBounds, OLIGO_NT};
use dnacode::experiment::{experiment_sweep, spearman, REPORT_VERSION};
use dnacode::fastq::{open_fastq, read_fastq_file, write_fastq};
use dnacode::fountain::SeedSchedule;
use dnacode::pipeline::{hard_decode_baseline, iterative_soft_decode};
use dnacode::stats::{estimate_transitions, quality_product, PoolIndex, TransitionTable};
use dnacode::Error;

const EXIT_DECODE_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "dnacode", version, about = "Fountain/RS DNA storage encoder, channel simulator and soft decoder")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Built-in profile (`paper-scale`, `desk-scale`) or a TOML file.
    #[arg(long, default_value = "desk-scale")]
    config: String,
    /// Override any config key, e.g. `--set decoder.n_re=1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a file into an oligo pool.
    Encode {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Flank each oligo with the amplification primers.
        #[arg(long)]
        primers: bool,
    },
    /// Sample noisy reads from an encoded pool.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        reads: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Ground-truth sidecar (default: `<out>.truth.tsv`).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Estimate per-position transition probabilities from reads and a pool.
    Stats {
        #[arg(long)]
        fastq: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Recover a file from sequencing reads.
    Decode {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        fastq: PathBuf,
        #[arg(long)]
        seeds: PathBuf,
        /// Transition table from `stats` (default: config path, else uniform).
        #[arg(long)]
        table: Option<PathBuf>,
        /// Encoder manifest; supplies the unpadded length.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_parser = parse_llr_mode)]
        llr_mode: Option<LlrMode>,
        #[arg(long)]
        n_re: Option<usize>,
        #[arg(long)]
        no_redecoding: bool,
        /// Majority-vote baseline instead of the soft decoder.
        #[arg(long)]
        hard: bool,
    },
    /// Success-rate sweep over read counts.
    Experiment {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
        /// Use these reads instead of simulating a pool (needs --input).
        #[arg(long, requires = "input")]
        fastq: Option<PathBuf>,
        /// Original file, re-encoded to obtain the seed table and ground truth.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        points: Option<Vec<usize>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_llr_mode(s: &str) -> Result<LlrMode, String> {
    match s {
        "proposed" => Ok(LlrMode::Proposed),
        "chandak" => Ok(LlrMode::Chandak),
        _ => Err(format!("unknown LLR mode {s:?} (proposed|chandak)")),
    }
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Stream(_) | Error::Fastq { .. } | Error::Parse(_) => EXIT_IO,
            _ => EXIT_USAGE,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        msg: msg.into(),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Error::io(path, e).into()
}

type CliResult<T> = Result<T, Failure>;

fn load_config(args: &ConfigArgs) -> CliResult<RunConfig> {
    let cfg = RunConfig::resolve(&args.config)?;
    if args.overrides.is_empty() {
        return Ok(cfg);
    }
    let mut doc: toml::Table = toml::from_str(&cfg.to_toml()).map_err(|e| usage(e.to_string()))?;
    for o in &args.overrides {
        let (key, raw) = o.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let parts: Vec<&str> = key.trim().split('.').collect();
        let (last, parents) = parts.split_last().expect("split yields one part");
        let mut table = &mut doc;
        for p in parents {
            table = table
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()))
                .as_table_mut()
                .ok_or_else(|| usage(format!("{key}: {p} is not a section")))?;
        }
        table.insert(last.to_string(), value);
    }
    Ok(RunConfig::parse(&toml::to_string(&doc).map_err(|e| usage(e.to_string()))?)?)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_with<F>(path: &Path, f: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn timing_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".timing.json");
    PathBuf::from(s)
}

fn read_to_string(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn encode(cfg: &RunConfig, input: &Path, out_dir: &Path, primers: bool) -> CliResult<u8> {
    let t0 = Instant::now();
    let data = fs::read(input).map_err(|e| io_err(input, e))?;
    let pool = encode_bytes(&data, &cfg.code.params()?)?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    write_with(&out_dir.join("pool.fasta"), |w| write_fasta(w, &pool.seeded_oligos(), primers))?;
    write_with(&out_dir.join("seeds.txt"), |w| pool.seeds.write(w))?;
    let reports = pool.constraint_reports(&PoolBounds::default());
    let gc = reports.iter().map(|r| r.gc_ratio);
    let manifest = json!({
        "version": REPORT_VERSION,
        "input": input,
        "data_len": pool.data_len,
        "pad_len": pool.pad_len,
        "oligos": pool.oligos.len(),
        "constraints": {
            "gc_min": gc.clone().fold(f64::INFINITY, f64::min),
            "gc_max": gc.fold(f64::NEG_INFINITY, f64::max),
            "max_homopolymer": reports.iter().map(|r| r.max_homopolymer).max(),
            "outside_bounds": reports.iter().filter(|r| !r.within_pool_bounds).count(),
        },
        "config": cfg.to_json(),
    });
    let path = out_dir.join("manifest.json");
    write_json(&path, &manifest)?;
    write_json(&timing_path(&path), &json!({ "encode_ms": t0.elapsed().as_secs_f64() * 1e3 }))?;
    eprintln!("encoded {} bytes into {} oligos", pool.data_len, pool.oligos.len());
    Ok(0)
}

fn simulate(
    cfg: &RunConfig,
    pool_path: &Path,
    out: &Path,
    reads: Option<u64>,
    seed: Option<u64>,
    truth: Option<PathBuf>,
) -> CliResult<u8> {
    let t0 = Instant::now();
    let pool = read_fasta(&read_to_string(pool_path)?)?;
    let oligos: Vec<_> = pool.into_iter().map(|(_, o)| o).collect();
    let mut channel = cfg.channel.clone();
    if let Some(s) = seed {
        channel.rng_seed = s;
    }
    let n = reads.unwrap_or(cfg.simulate.reads);
    let sim = simulate_pool(&oligos, n, &channel)?;
    write_with(out, |w| write_fastq(w, &sim.reads))?;
    let truth_path = truth.unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".truth.tsv");
        PathBuf::from(s)
    });
    write_with(&truth_path, |w| write_truth(w, &sim.truth))?;
    let with_errors = sim.truth.iter().filter(|t| !t.errors.is_empty()).count();
    let meta = json!({
        "version": REPORT_VERSION,
        "reads": sim.reads.len(),
        "reads_with_errors": with_errors,
        "channel": channel,
    });
    let meta_path = {
        let mut s = out.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    };
    write_json(&meta_path, &meta)?;
    write_json(&timing_path(&meta_path), &json!({ "simulate_ms": t0.elapsed().as_secs_f64() * 1e3 }))?;
    eprintln!("simulated {} reads ({with_errors} with errors)", sim.reads.len());
    Ok(0)
}

fn stats(fastq: &Path, pool_path: &Path, out_dir: &Path) -> CliResult<u8> {
    let t0 = Instant::now();
    let pool = read_fasta(&read_to_string(pool_path)?)?;
    let oligos: Vec<_> = pool.into_iter().map(|(_, o)| o).collect();
    let index = PoolIndex::new(&oligos)?;
    let reads = read_fastq_file(fastq)?;
    let (table, summary) = estimate_transitions(&reads, &index);
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    table.save(&out_dir.join("transitions.tsv"))?;

    // Per-position curves: P(source | observed) for every unequal pair.
    write_with(&out_dir.join("curves.tsv"), |w| {
        let bases = dnacode::dna::Base::ALL;
        write!(w, "position")?;
        for s in bases {
            for o in bases.iter().filter(|&&o| o != s) {
                write!(w, "\tP({s}|{o})")?;
            }
        }
        writeln!(w)?;
        for pos in 0..table.positions() {
            write!(w, "{pos}")?;
            for s in bases {
                for &o in bases.iter().filter(|&&o| o != s) {
                    write!(w, "\t{:.6e}", table.cond(pos, o, s))?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    })?;

    // Quality product vs error count, for reads carrying at least one error.
    let points: Vec<(String, f64, usize)> = {
        use rayon::prelude::*;
        reads
            .par_iter()
            .filter(|r| r.len() == OLIGO_NT)
            .filter_map(|r| {
                let d = index.align(&r.bases).distance;
                (d > 0).then(|| (r.id.clone(), quality_product(r), d))
            })
            .collect()
    };
    write_with(&out_dir.join("scatter.tsv"), |w| {
        writeln!(w, "read_id\tquality_product\terrors")?;
        for (id, p, d) in &points {
            writeln!(w, "{id}\t{p:.6e}\t{d}")?;
        }
        Ok(())
    })?;
    let rho = if points.len() >= 2 {
        let xs: Vec<f64> = points.iter().map(|p| p.1).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.2 as f64).collect();
        Some(spearman(&xs, &ys))
    } else {
        None
    };
    let path = out_dir.join("stats.json");
    write_json(
        &path,
        &json!({
            "version": REPORT_VERSION,
            "summary": summary,
            "scatter_points": points.len(),
            "scatter_spearman": rho,
        }),
    )?;
    write_json(&timing_path(&path), &json!({ "stats_ms": t0.elapsed().as_secs_f64() * 1e3 }))?;
    eprintln!(
        "{} reads aligned, {} error-free, {} fallback entries",
        summary.reads_used, summary.reads_error_free, summary.fallback_entries
    );
    Ok(0)
}

struct DecodeArgs {
    fastq: PathBuf,
    seeds: PathBuf,
    table: Option<PathBuf>,
    manifest: Option<PathBuf>,
    out: PathBuf,
    report: Option<PathBuf>,
    hard: bool,
}

fn decode(cfg: &RunConfig, a: DecodeArgs) -> CliResult<u8> {
    let t0 = Instant::now();
    let params = cfg.pipeline_params()?;
    let seeds = SeedSchedule::parse(&read_to_string(&a.seeds)?)?;
    if seeds.is_empty() {
        return Err(usage(format!("{}: empty seed table", a.seeds.display())));
    }
    let data_len = match &a.manifest {
        Some(p) => {
            let m: Value = serde_json::from_str(&read_to_string(p)?).map_err(|e| Failure::from(Error::Json(e)))?;
            Some(
                m["data_len"]
                    .as_u64()
                    .ok_or_else(|| Failure::from(Error::Parse(format!("{}: no data_len", p.display()))))?
                    as usize,
            )
        }
        None => None,
    };
    let mut table_source = "uniform".to_string();
    let table = match a.table.as_ref().or(cfg.paths.transition_table.as_ref()) {
        Some(p) => {
            table_source = p.display().to_string();
            TransitionTable::load(p)?
        }
        None => TransitionTable::uniform(),
    };

    let mut read_err = None;
    let set = cluster_by_seed(
        open_fastq(&a.fastq)?.map_while(|r| r.map_err(|e| read_err = Some(e)).ok()),
        &seeds,
    );
    if let Some(e) = read_err {
        return Err(e.into());
    }
    let t_cluster = t0.elapsed().as_secs_f64() * 1e3;
    let report = if a.hard {
        hard_decode_baseline(&set.clusters, &params)?
    } else {
        iterative_soft_decode(&set.clusters, &table, &params)?
    };

    let mut written = None;
    if let Some(packets) = &report.recovered {
        let len = data_len.unwrap_or(packets.len() * dnacode::dna::PAYLOAD_BYTES);
        let bytes = bytes_from_packets(packets, len)?;
        write_with(&a.out, |w| w.write_all(&bytes))?;
        written = Some(bytes.len());
    }
    let report_path = a.report.unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".report.json");
        PathBuf::from(s)
    });
    write_json(
        &report_path,
        &json!({
            "version": REPORT_VERSION,
            "decoder": if a.hard { "hard" } else { "soft" },
            "transition_table": table_source,
            "clustering": set.report,
            "decode": report,
            "bytes_written": written,
            "config": cfg.to_json(),
        }),
    )?;
    write_json(
        &timing_path(&report_path),
        &json!({
            "cluster_ms": t_cluster,
            "decode_ms": report.millis,
            "rounds_ms": report.rounds.iter().map(|r| r.millis).collect::<Vec<_>>(),
            "total_ms": t0.elapsed().as_secs_f64() * 1e3,
        }),
    )?;
    if report.success {
        eprintln!("decoded {} bytes after {} BP phase(s)", written.unwrap_or(0), report.iterations_performed);
        Ok(0)
    } else {
        eprintln!("decoding failed: {}", report.reason.as_deref().unwrap_or("unknown"));
        Ok(EXIT_DECODE_FAILURE)
    }
}

fn experiment(cfg: &RunConfig, out_dir: &Path, fastq: Option<PathBuf>, input: Option<PathBuf>) -> CliResult<u8> {
    let t0 = Instant::now();
    let params = cfg.pipeline_params()?;
    let code = cfg.code.params()?;
    let data = match &input {
        Some(p) => fs::read(p).map_err(|e| io_err(p, e))?,
        None => {
            let mut data = vec![0u8; code.capacity_bytes()];
            stream_rng(cfg.experiment.rng_seed, u64::MAX).fill_bytes(&mut data);
            data
        }
    };
    let pool = encode_bytes(&data, &code)?;
    let reads = match &fastq {
        Some(p) => read_fastq_file(p)?,
        None => simulate_pool(&pool.oligos, cfg.experiment.pool_reads, &cfg.channel)?.reads,
    };
    let index = PoolIndex::new(&pool.oligos)?;
    let (table, _) = estimate_transitions(&reads, &index);
    let t_prep = t0.elapsed().as_secs_f64() * 1e3;
    let (mut report, timing) =
        experiment_sweep(&reads, &pool.seeds, &table, &params, &cfg.experiment.sweep(), Some(&pool.source))?;
    report.config = Some(cfg.to_json());

    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let path = out_dir.join("report.json");
    write_json(&path, &serde_json::to_value(&report).map_err(Error::Json)?)?;
    write_with(&out_dir.join("plot.tsv"), |w| report.write_plot_tsv(w))?;
    table.save(&out_dir.join("transitions.tsv"))?;
    write_json(
        &timing_path(&path),
        &json!({ "prepare_ms": t_prep, "sweep": timing, "total_ms": t0.elapsed().as_secs_f64() * 1e3 }),
    )?;
    for p in &report.points {
        let cells: Vec<String> = p
            .results
            .iter()
            .map(|(c, s)| format!("{c}={}/{}", s.successes, s.trials))
            .collect();
        eprintln!("{:>8} reads: {}", p.reads, cells.join(" "));
    }
    Ok(0)
}

fn run(cli: Cli) -> CliResult<u8> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    match cli.command {
        Command::Encode {
            cfg,
            input,
            out_dir,
            primers,
        } => encode(&load_config(&cfg)?, &input, &out_dir, primers),
        Command::Simulate {
            cfg,
            pool,
            out,
            reads,
            seed,
            truth,
        } => simulate(&load_config(&cfg)?, &pool, &out, reads, seed, truth),
        Command::Stats { fastq, pool, out_dir } => stats(&fastq, &pool, &out_dir),
        Command::Decode {
            cfg,
            fastq,
            seeds,
            table,
            manifest,
            out,
            report,
            llr_mode,
            n_re,
            no_redecoding,
            hard,
        } => {
            let mut config = load_config(&cfg)?;
            if let Some(m) = llr_mode {
                config.decoder.llr_mode = m;
            }
            if let Some(n) = n_re {
                config.decoder.n_re = n;
            }
            if no_redecoding {
                config.decoder.redecoding = false;
            }
            config.validate()?;
            decode(
                &config,
                DecodeArgs {
                    fastq,
                    seeds,
                    table,
                    manifest,
                    out,
                    report,
                    hard,
                },
            )
        }
        Command::Experiment {
            cfg,
            out_dir,
            fastq,
            input,
            points,
            trials,
            seed,
        } => {
            let mut config = load_config(&cfg)?;
            if let Some(p) = points {
                config.experiment.sampling_points = p;
            }
            if let Some(t) = trials {
                config.experiment.trials = t;
            }
            if let Some(s) = seed {
                config.experiment.rng_seed = s;
                config.channel.rng_seed = s;
            }
            config.validate()?;
            experiment(&config, &out_dir, fastq, input)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
