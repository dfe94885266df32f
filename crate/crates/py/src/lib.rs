//! Python bindings for the `dnacode` core.
//!
//! Reads cross the boundary as `(id, bases, quality)` tuples with the quality
//! string in Phred+33; oligos as plain `ACGT` strings.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use dnacode::channel::simulate_pool;
use dnacode::cluster::{bit_llrs, cluster_by_seed};
use dnacode::codec::{bytes_from_packets, encode_bytes};
use dnacode::config;
use dnacode::dna::{parse_bases, Oligo, PAYLOAD_BYTES};
use dnacode::experiment::experiment_sweep;
use dnacode::fastq::{ReadRecord, PHRED_OFFSET};
use dnacode::fountain::{required_symbols, SeedSchedule, SolitonParams};
use dnacode::pipeline::{hard_decode_baseline, iterative_soft_decode};
use dnacode::rs::{rs_decode_bytes, rs_encode_bytes, RsStatus, RS_K, RS_N};
use dnacode::stats::{estimate_transitions, PoolIndex};

create_exception!(dnacode_py, DnacodeError, PyException);

type Read = (String, String, String);

fn err(e: dnacode::Error) -> PyErr {
    DnacodeError::new_err(e.to_string())
}

fn to_record((id, bases, quality): &Read) -> PyResult<ReadRecord> {
    if bases.len() != quality.len() {
        return Err(DnacodeError::new_err(format!("read {id}: bases and quality differ in length")));
    }
    Ok(ReadRecord {
        id: id.clone(),
        bases: bases.as_bytes().to_vec(),
        qscores: quality.bytes().map(|c| c.saturating_sub(PHRED_OFFSET)).collect(),
    })
}

fn from_record(r: ReadRecord) -> Read {
    let quality = r.qscores.iter().map(|&q| (q + PHRED_OFFSET) as char).collect();
    (r.id, String::from_utf8_lossy(&r.bases).into_owned(), quality)
}

fn to_oligos(oligos: &[String]) -> PyResult<Vec<Oligo>> {
    oligos
        .iter()
        .map(|s| parse_bases(s).and_then(|b| Oligo::from_bases(&b)).map_err(err))
        .collect()
}

#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: config::RunConfig,
}

#[pymethods]
impl PyRunConfig {
    /// `paper-scale`, `desk-scale`, or a path to a TOML file.
    #[staticmethod]
    fn resolve(name_or_path: &str) -> PyResult<Self> {
        config::RunConfig::resolve(name_or_path)
            .map(|inner| PyRunConfig { inner })
            .map_err(err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        config::RunConfig::parse(text).map(|inner| PyRunConfig { inner }).map_err(err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.code.k
    }

    #[getter]
    fn n_oligos(&self) -> usize {
        self.inner.code.n_oligos
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(name={:?}, k={}, n_oligos={})", self.inner.name, self.inner.code.k, self.inner.code.n_oligos)
    }
}

#[pyclass(name = "EncodedPool", skip_from_py_object)]
struct PyEncodedPool {
    #[pyo3(get)]
    seeds: Vec<u32>,
    #[pyo3(get)]
    oligos: Vec<String>,
    #[pyo3(get)]
    data_len: usize,
    #[pyo3(get)]
    pad_len: usize,
}

#[pyclass(name = "TransitionTable", from_py_object)]
#[derive(Clone)]
struct PyTransitionTable {
    inner: dnacode::stats::TransitionTable,
}

#[pymethods]
impl PyTransitionTable {
    #[staticmethod]
    fn uniform() -> Self {
        PyTransitionTable {
            inner: dnacode::stats::TransitionTable::uniform(),
        }
    }

    /// Estimates the table from reads aligned against the encoded oligos.
    #[staticmethod]
    fn estimate(reads: Vec<Read>, oligos: Vec<String>) -> PyResult<Self> {
        let index = PoolIndex::new(&to_oligos(&oligos)?).map_err(err)?;
        let records = reads.iter().map(to_record).collect::<PyResult<Vec<_>>>()?;
        let (inner, _) = estimate_transitions(&records, &index);
        Ok(PyTransitionTable { inner })
    }

    #[staticmethod]
    fn from_tsv(text: &str) -> PyResult<Self> {
        dnacode::stats::TransitionTable::parse_tsv(text)
            .map(|inner| PyTransitionTable { inner })
            .map_err(err)
    }

    fn to_tsv(&self) -> String {
        let mut buf = Vec::new();
        self.inner.write_tsv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("table is ASCII")
    }

    /// P(source | observed) at a 0-based position.
    fn cond(&self, pos: usize, observed: char, source: char) -> PyResult<f64> {
        let base = |c: char| {
            dnacode::dna::Base::from_ascii(c as u8).ok_or_else(|| DnacodeError::new_err(format!("not a base: {c:?}")))
        };
        if pos >= self.inner.positions() {
            return Err(DnacodeError::new_err(format!("position {pos} out of range")));
        }
        Ok(self.inner.cond(pos, base(observed)?, base(source)?))
    }

    fn fallback_count(&self) -> usize {
        self.inner.fallback_count()
    }
}

#[pyfunction]
fn required_k(k: usize, c: f64, delta: f64) -> PyResult<usize> {
    required_symbols(&SolitonParams::new(k, c, delta).map_err(err)?).map_err(err)
}

/// `(LLR(y1), LLR(y2))` of four base probabilities in ACGT order.
#[pyfunction]
fn llrs_from_probabilities(p: [f64; 4]) -> (f64, f64) {
    bit_llrs(&p)
}

#[pyfunction]
fn rs_encode<'py>(py: Python<'py>, message: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
    let msg: &[u8; RS_K] = message
        .try_into()
        .map_err(|_| DnacodeError::new_err(format!("message must be {RS_K} bytes")))?;
    Ok(PyBytes::new(py, &rs_encode_bytes(msg)))
}

/// Returns `(status, codeword or None, corrected positions)`.
#[pyfunction]
fn rs_decode<'py>(py: Python<'py>, word: &[u8]) -> PyResult<(&'static str, Option<Bound<'py, PyBytes>>, Vec<usize>)> {
    let w: &[u8; RS_N] = word
        .try_into()
        .map_err(|_| DnacodeError::new_err(format!("word must be {RS_N} bytes")))?;
    let out = rs_decode_bytes(w);
    let status = match out.status {
        RsStatus::Clean => "clean",
        RsStatus::Corrected => "corrected",
        RsStatus::DetectedUncorrectable => "uncorrectable",
    };
    let cw = out
        .codeword
        .map(|c| PyBytes::new(py, &c.0.iter().map(|g| g.0).collect::<Vec<u8>>()));
    Ok((status, cw, out.corrected_positions))
}

#[pyfunction]
fn encode(data: &[u8], config: &PyRunConfig) -> PyResult<PyEncodedPool> {
    let pool = encode_bytes(data, &config.inner.code.params().map_err(err)?).map_err(err)?;
    Ok(PyEncodedPool {
        seeds: pool.seeds.seeds.clone(),
        oligos: pool.oligos.iter().map(Oligo::to_string_ascii).collect(),
        data_len: pool.data_len,
        pad_len: pool.pad_len,
    })
}

#[pyfunction]
#[pyo3(signature = (oligos, reads, config, seed=None))]
fn simulate(py: Python<'_>, oligos: Vec<String>, reads: u64, config: &PyRunConfig, seed: Option<u64>) -> PyResult<Vec<Read>> {
    let oligos = to_oligos(&oligos)?;
    let mut channel = config.inner.channel.clone();
    if let Some(s) = seed {
        channel.rng_seed = s;
    }
    let sim = py.detach(|| simulate_pool(&oligos, reads, &channel)).map_err(err)?;
    Ok(sim.reads.into_iter().map(from_record).collect())
}

/// Returns `(recovered bytes or None, JSON report)`.
#[pyfunction]
#[pyo3(signature = (reads, seeds, config, table=None, data_len=None, hard=false))]
fn decode<'py>(
    py: Python<'py>,
    reads: Vec<Read>,
    seeds: Vec<u32>,
    config: &PyRunConfig,
    table: Option<PyTransitionTable>,
    data_len: Option<usize>,
    hard: bool,
) -> PyResult<(Option<Bound<'py, PyBytes>>, String)> {
    let records = reads.iter().map(to_record).collect::<PyResult<Vec<_>>>()?;
    let schedule = SeedSchedule { seeds };
    let params = config.inner.pipeline_params().map_err(err)?;
    let table = table.map_or_else(dnacode::stats::TransitionTable::uniform, |t| t.inner);
    let report = py
        .detach(|| {
            let set = cluster_by_seed(records, &schedule);
            if hard {
                hard_decode_baseline(&set.clusters, &params)
            } else {
                iterative_soft_decode(&set.clusters, &table, &params)
            }
        })
        .map_err(err)?;
    let bytes = match &report.recovered {
        Some(packets) => {
            let len = data_len.unwrap_or(packets.len() * PAYLOAD_BYTES);
            Some(PyBytes::new(py, &bytes_from_packets(packets, len).map_err(err)?))
        }
        None => None,
    };
    let json = serde_json::to_string(&report).map_err(|e| err(e.into()))?;
    Ok((bytes, json))
}

/// Runs the configured sweep on a simulated pool of `data`; returns the JSON
/// report.
#[pyfunction]
#[pyo3(signature = (data, config, points=None, trials=None))]
fn experiment(
    py: Python<'_>,
    data: &[u8],
    config: &PyRunConfig,
    points: Option<Vec<usize>>,
    trials: Option<usize>,
) -> PyResult<String> {
    let cfg = &config.inner;
    let mut sweep = cfg.experiment.sweep();
    if let Some(p) = points {
        sweep.sampling_points = p;
    }
    if let Some(t) = trials {
        sweep.trials = t;
    }
    let report = py
        .detach(|| -> dnacode::Result<_> {
            let params = cfg.pipeline_params()?;
            let pool = encode_bytes(data, &cfg.code.params()?)?;
            let sim = simulate_pool(&pool.oligos, cfg.experiment.pool_reads, &cfg.channel)?;
            let (table, _) = estimate_transitions(&sim.reads, &PoolIndex::new(&pool.oligos)?);
            let (mut report, _) = experiment_sweep(&sim.reads, &pool.seeds, &table, &params, &sweep, Some(&pool.source))?;
            report.config = Some(cfg.to_json());
            Ok(report)
        })
        .map_err(err)?;
    serde_json::to_string(&report).map_err(|e| err(e.into()))
}

#[pymodule]
fn dnacode_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DnacodeError", m.py().get_type::<DnacodeError>())?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyEncodedPool>()?;
    m.add_class::<PyTransitionTable>()?;
    m.add_function(wrap_pyfunction!(required_k, m)?)?;
    m.add_function(wrap_pyfunction!(llrs_from_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(rs_encode, m)?)?;
    m.add_function(wrap_pyfunction!(rs_decode, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(experiment, m)?)?;
    Ok(())
}
