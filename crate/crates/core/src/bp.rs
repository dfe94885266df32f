//! Parity-check construction for the LT code and sum-product belief
//! propagation over one bit-plane.
//!
//! Each check row ties the XOR of a seed's neighbour information bits to that
//! seed's coded bit. Coded bits are degree-one leaves, so the decoder folds
//! their channel LLRs straight into the check nodes and only passes messages
//! on information edges.
//!
//! Information bits start punctured (LLR 0). Under that start a message is
//! nonzero only once every other neighbour of its check has been reached, so
//! the support of the nonzero messages is exactly the structural peeling
//! closure. Checks outside it emit zeros forever and are skipped.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::LLR_MAX;
use crate::error::{Error, Result};
use crate::fountain::{required_symbols, LtCode};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseParityMatrix {
    k: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    /// Symbols needed for reliable decoding; 0 when unknown.
    pub required: usize,
    pub warning: Option<String>,
}

impl SparseParityMatrix {
    /// Rows given as information-column lists; each also owns one coded bit.
    pub fn from_rows(k: usize, rows: &[Vec<u32>]) -> Result<Self> {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        for r in rows {
            if let Some(&bad) = r.iter().find(|&&c| c as usize >= k) {
                return Err(Error::Param(format!("column {bad} outside {k} information bits")));
            }
            let mut sorted = r.clone();
            sorted.sort_unstable();
            sorted.dedup();
            cols.extend_from_slice(&sorted);
            row_ptr.push(cols.len());
        }
        Ok(SparseParityMatrix {
            k,
            row_ptr,
            cols,
            required: 0,
            warning: None,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Information columns plus one identity column per row.
    pub fn columns(&self) -> usize {
        self.k + self.rows()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u32] {
        &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn row_weight(&self, r: usize) -> usize {
        self.row(r).len() + 1
    }

    /// Total number of information edges.
    pub fn edges(&self) -> usize {
        self.cols.len()
    }

    /// Rows whose XOR is nonzero under the given hard decisions.
    pub fn unsatisfied(&self, info_bits: &[u8], coded_bits: &[u8]) -> usize {
        (0..self.rows())
            .filter(|&r| self.row(r).iter().fold(coded_bits[r], |acc, &c| acc ^ info_bits[c as usize]) & 1 != 0)
            .count()
    }
}

/// One row per active seed, in the given order.
pub fn build_h(active_seeds: &[u32], code: &LtCode) -> Result<SparseParityMatrix> {
    let rows: Vec<Vec<u32>> = active_seeds.iter().map(|&s| code.neighbors(s)).collect();
    let mut h = SparseParityMatrix::from_rows(code.k(), &rows)?;
    h.required = required_symbols(&code.params)?;
    if h.rows() < h.required {
        h.warning = Some(format!(
            "{} active seeds is below the {} coded symbols needed; decoding is expected to fail",
            h.rows(),
            h.required
        ));
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpConfig {
    pub max_iter: usize,
    /// Stop once every live check is satisfied.
    pub early_stop: bool,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            max_iter: 500,
            early_stop: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpResult {
    /// Hard decisions, LLR >= 0 -> 0.
    pub info_bits: Vec<u8>,
    pub coded_bits: Vec<u8>,
    pub info_posteriors: Vec<f64>,
    pub coded_posteriors: Vec<f64>,
    /// Every information bit was reached and every check is satisfied by the
    /// hard decisions.
    pub converged: bool,
    pub iterations: usize,
    /// Information bits no message ever reaches.
    pub undetermined: usize,
}

/// Message-passing schedule shared by every plane decoded on the same matrix.
#[derive(Clone, Debug)]
pub struct BpGraph<'h> {
    h: &'h SparseParityMatrix,
    live_rows: Vec<u32>,
    /// Per live row, its range in the edge arrays.
    edge_ptr: Vec<usize>,
    edge_var: Vec<u32>,
    /// Live-row index of each edge.
    edge_row: Vec<u32>,
    /// Variable -> edge adjacency over live edges.
    var_ptr: Vec<usize>,
    var_edges: Vec<u32>,
    resolved: Vec<bool>,
}

impl<'h> BpGraph<'h> {
    /// `prior_known[v]` marks information bits with a nonzero prior LLR.
    pub fn new(h: &'h SparseParityMatrix, prior_known: Option<&[bool]>) -> Self {
        let k = h.k();
        let mut resolved = prior_known.map_or_else(|| vec![false; k], <[bool]>::to_vec);
        let mut var_rows: Vec<Vec<u32>> = vec![Vec::new(); k];
        let mut unknown: Vec<usize> = Vec::with_capacity(h.rows());
        for r in 0..h.rows() {
            for &c in h.row(r) {
                var_rows[c as usize].push(r as u32);
            }
            unknown.push(h.row(r).iter().filter(|&&c| !resolved[c as usize]).count());
        }
        let mut queue: VecDeque<usize> = (0..h.rows()).filter(|&r| unknown[r] == 1).collect();
        while let Some(r) = queue.pop_front() {
            if unknown[r] != 1 {
                continue;
            }
            let Some(&v) = h.row(r).iter().find(|&&c| !resolved[c as usize]) else {
                continue;
            };
            resolved[v as usize] = true;
            for &r2 in &var_rows[v as usize] {
                let r2 = r2 as usize;
                unknown[r2] -= 1;
                if unknown[r2] == 1 {
                    queue.push_back(r2);
                }
            }
        }
        let live_rows: Vec<u32> = (0..h.rows()).filter(|&r| unknown[r] == 0).map(|r| r as u32).collect();
        let mut edge_ptr = vec![0];
        let mut edge_var = Vec::new();
        let mut edge_row = Vec::new();
        for (li, &r) in live_rows.iter().enumerate() {
            edge_var.extend_from_slice(h.row(r as usize));
            edge_row.resize(edge_var.len(), li as u32);
            edge_ptr.push(edge_var.len());
        }
        let mut degree = vec![0usize; k];
        for &v in &edge_var {
            degree[v as usize] += 1;
        }
        let mut var_ptr = vec![0usize; k + 1];
        for v in 0..k {
            var_ptr[v + 1] = var_ptr[v] + degree[v];
        }
        let mut fill = var_ptr.clone();
        let mut var_edges = vec![0u32; edge_var.len()];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edges[fill[v as usize]] = e as u32;
            fill[v as usize] += 1;
        }
        BpGraph {
            h,
            live_rows,
            edge_ptr,
            edge_var,
            edge_row,
            var_ptr,
            var_edges,
            resolved,
        }
    }

    pub fn live_rows(&self) -> usize {
        self.live_rows.len()
    }

    pub fn undetermined(&self) -> usize {
        self.resolved.iter().filter(|&&r| !r).count()
    }

    pub fn decode(&self, info_llrs: &[f64], coded_llrs: &[f64], config: &BpConfig) -> Result<BpResult> {
        let h = self.h;
        if info_llrs.len() != h.k() {
            return Err(Error::Length {
                what: "information LLRs",
                expected: h.k(),
                got: info_llrs.len(),
            });
        }
        if coded_llrs.len() != h.rows() {
            return Err(Error::Length {
                what: "coded LLRs",
                expected: h.rows(),
                got: coded_llrs.len(),
            });
        }
        // tanh(m/2) = -expm1(-m) / (2 + expm1(-m)), one exponential.
        let tanh_half = |m: f64| {
            let e = (-m).exp_m1();
            -e / (2.0 + e)
        };
        let t_max = tanh_half(LLR_MAX);
        let atanh_of = |t: f64| ((1.0 + t) / (1.0 - t)).ln();
        let m_max = atanh_of(t_max);
        // Zero and clipped arguments are common and skip the libm calls.
        let half_tanh = |m: f64| {
            if m >= LLR_MAX {
                t_max
            } else if m <= -LLR_MAX {
                -t_max
            } else {
                tanh_half(m)
            }
        };
        let two_atanh = |t: f64| {
            if t == 0.0 {
                0.0
            } else if t >= t_max {
                m_max
            } else if t <= -t_max {
                -m_max
            } else {
                atanh_of(t)
            }
        };

        let n_edges = self.edge_var.len();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| half_tanh(info_llrs[v as usize])).collect();
        let mut c2v = vec![0.0; n_edges];
        let mut scratch = Vec::new();
        let coded_t: Vec<f64> = self.live_rows.iter().map(|&r| half_tanh(coded_llrs[r as usize])).collect();

        let mut info_post = info_llrs.to_vec();
        let mut coded_post = coded_llrs.to_vec();
        let mut info_bits: Vec<u8> = info_post.iter().map(|&l| (l < 0.0) as u8).collect();
        let mut coded_bits: Vec<u8> = coded_post.iter().map(|&l| (l < 0.0) as u8).collect();
        let mut iterations = 0;

        // A node whose inputs are bitwise unchanged would reproduce its
        // previous outputs, so only nodes downstream of a change are
        // recomputed. The result is identical to a full flooding sweep.
        let mut row_dirty = vec![true; self.live_rows.len()];
        let mut var_dirty = vec![false; h.k()];
        for _ in 0..config.max_iter {
            iterations += 1;
            let mut any_change = false;
            // Check nodes: exclusive products by prefix/suffix sweeps.
            for (li, &r) in self.live_rows.iter().enumerate() {
                if !std::mem::take(&mut row_dirty[li]) {
                    continue;
                }
                let (lo, hi) = (self.edge_ptr[li], self.edge_ptr[li + 1]);
                let t = &v2c[lo..hi];
                scratch.clear();
                let mut acc = coded_t[li];
                for &x in t {
                    scratch.push(acc);
                    acc *= x;
                }
                let mut suffix = 1.0;
                for j in (0..t.len()).rev() {
                    let m = two_atanh(scratch[j] * suffix);
                    if m != c2v[lo + j] {
                        c2v[lo + j] = m;
                        var_dirty[self.edge_var[lo + j] as usize] = true;
                        any_change = true;
                    }
                    suffix *= t[j];
                }
                coded_post[r as usize] = coded_llrs[r as usize] + two_atanh(suffix);
                coded_bits[r as usize] = (coded_post[r as usize] < 0.0) as u8;
            }
            // Variable nodes.
            for v in 0..h.k() {
                if !std::mem::take(&mut var_dirty[v]) {
                    continue;
                }
                let edges = &self.var_edges[self.var_ptr[v]..self.var_ptr[v + 1]];
                let total = info_llrs[v] + edges.iter().map(|&e| c2v[e as usize]).sum::<f64>();
                info_post[v] = total;
                info_bits[v] = (total < 0.0) as u8;
                for &e in edges {
                    let t = half_tanh(total - c2v[e as usize]);
                    if t != v2c[e as usize] {
                        v2c[e as usize] = t;
                        row_dirty[self.edge_row[e as usize] as usize] = true;
                    }
                }
            }
            if !any_change {
                // Fixed point: further sweeps change nothing.
                break;
            }
            if config.early_stop {
                let live_ok = self.live_rows.iter().all(|&r| {
                    h.row(r as usize)
                        .iter()
                        .fold(coded_bits[r as usize], |acc, &c| acc ^ info_bits[c as usize])
                        == 0
                });
                if live_ok {
                    break;
                }
            }
        }
        let converged = self.undetermined() == 0 && h.unsatisfied(&info_bits, &coded_bits) == 0;
        Ok(BpResult {
            info_bits,
            coded_bits,
            info_posteriors: info_post,
            coded_posteriors: coded_post,
            converged,
            iterations,
            undetermined: self.undetermined(),
        })
    }
}

/// Decodes one plane with punctured information bits.
pub fn bp_decode(h: &SparseParityMatrix, coded_llrs: &[f64], config: &BpConfig) -> Result<BpResult> {
    BpGraph::new(h, None).decode(&vec![0.0; h.k()], coded_llrs, config)
}

/// Decodes every plane independently; `planes[p][r]` is the LLR of row `r`.
pub fn bp_decode_planes(h: &SparseParityMatrix, planes: &[Vec<f64>], config: &BpConfig) -> Result<Vec<BpResult>> {
    let graph = BpGraph::new(h, None);
    let zeros = vec![0.0; h.k()];
    planes.par_iter().map(|p| graph.decode(&zeros, p, config)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fountain::SolitonParams;
    use rand::{Rng, SeedableRng};

    #[test]
    fn row_weights_follow_degrees() {
        let code = LtCode::new(SolitonParams::new(100, 0.025, 0.001).unwrap()).unwrap();
        let seeds: Vec<u32> = (0..150).collect();
        let h = build_h(&seeds, &code).unwrap();
        assert_eq!(h.rows(), 150);
        assert_eq!(h.columns(), 250);
        for (r, &s) in seeds.iter().enumerate() {
            assert_eq!(h.row_weight(r), code.neighbors(s).len() + 1);
        }
        assert!(h.warning.is_none());
        let fewer = build_h(&seeds[1..], &code).unwrap();
        assert_eq!(fewer.rows(), 149);
        assert_eq!(fewer.row(0), h.row(1));
        assert!(build_h(&seeds[..50], &code).unwrap().warning.is_some());
    }

    #[test]
    fn noiseless_llrs_decode_exactly() {
        let code = LtCode::new(SolitonParams::new(100, 0.025, 0.001).unwrap()).unwrap();
        let seeds: Vec<u32> = (0..170).collect();
        let h = build_h(&seeds, &code).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let info: Vec<u8> = (0..100).map(|_| rng.random_range(0..2)).collect();
        let coded: Vec<u8> = (0..h.rows()).map(|r| h.row(r).iter().fold(0, |a, &c| a ^ info[c as usize])).collect();
        let llrs: Vec<f64> = coded.iter().map(|&b| if b == 0 { LLR_MAX } else { -LLR_MAX }).collect();
        let res = bp_decode(&h, &llrs, &BpConfig::default()).unwrap();
        assert_eq!(res.undetermined, 0);
        assert!(res.converged);
        assert_eq!(res.info_bits, info);
        assert!(res.iterations < 50);
        assert_eq!(h.unsatisfied(&res.info_bits, &res.coded_bits), 0);
    }

    #[test]
    fn zero_llrs_do_not_converge_to_information() {
        let h = SparseParityMatrix::from_rows(3, &[vec![0, 1], vec![1, 2], vec![0, 2]]).unwrap();
        let res = bp_decode(&h, &[0.0; 3], &BpConfig::default()).unwrap();
        assert_eq!(res.undetermined, 3);
        assert!(!res.converged);
        assert!(res.info_posteriors.iter().all(|&l| l == 0.0));
        assert!(bp_decode(&h, &[0.0; 2], &BpConfig::default()).is_err());
    }
}
