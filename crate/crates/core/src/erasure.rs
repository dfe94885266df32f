//! Erasure-style recovery of LT information packets from known coded packets:
//! peeling first, dense Gaussian elimination over whatever is left.

use crate::dna::Payload;
use crate::fountain::xor_into;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveError {
    /// Information packets not pinned down by the equations.
    RankDeficient { unresolved: usize },
    /// Equations contradicting the solution.
    Inconsistent { rows: usize },
}

impl std::fmt::Display for SolveError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveError::RankDeficient { unresolved } => write!(f, "{unresolved} information packets unresolved"),
            SolveError::Inconsistent { rows } => write!(f, "{rows} coded packets inconsistent with the solution"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub peeled: usize,
    pub eliminated: usize,
}

/// Solves `XOR_{c in rows[r]} x[c] = values[r]` for `k` packets.
pub fn solve(k: usize, rows: &[Vec<u32>], values: &[Payload]) -> Result<(Vec<Payload>, SolveStats), SolveError> {
    assert_eq!(rows.len(), values.len());
    let mut x: Vec<Option<Payload>> = vec![None; k];
    let mut acc: Vec<Payload> = values.to_vec();
    let mut unknown: Vec<usize> = rows.iter().map(Vec::len).collect();
    let mut var_rows: Vec<Vec<u32>> = vec![Vec::new(); k];
    for (r, row) in rows.iter().enumerate() {
        for &c in row {
            var_rows[c as usize].push(r as u32);
        }
    }
    let mut stats = SolveStats::default();
    let mut stack: Vec<usize> = (0..rows.len()).filter(|&r| unknown[r] == 1).collect();
    while let Some(r) = stack.pop() {
        if unknown[r] != 1 {
            continue;
        }
        let Some(&v) = rows[r].iter().find(|&&c| x[c as usize].is_none()) else {
            continue;
        };
        let val = acc[r];
        x[v as usize] = Some(val);
        stats.peeled += 1;
        for &r2 in &var_rows[v as usize] {
            let r2 = r2 as usize;
            xor_into(&mut acc[r2], &val);
            unknown[r2] -= 1;
            if unknown[r2] == 1 {
                stack.push(r2);
            }
        }
    }

    let rest: Vec<usize> = (0..k).filter(|&v| x[v].is_none()).collect();
    if !rest.is_empty() {
        let mut col_of = vec![usize::MAX; k];
        for (i, &v) in rest.iter().enumerate() {
            col_of[v] = i;
        }
        let words = rest.len().div_ceil(64);
        let mut mat: Vec<(Vec<u64>, Payload)> = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if unknown[r] == 0 {
                continue;
            }
            let mut bits = vec![0u64; words];
            for &c in row {
                let i = col_of[c as usize];
                if i != usize::MAX {
                    bits[i / 64] ^= 1 << (i % 64);
                }
            }
            mat.push((bits, acc[r]));
        }
        let mut rank = 0;
        let mut pivots = Vec::with_capacity(rest.len());
        for col in 0..rest.len() {
            let (w, b) = (col / 64, 1u64 << (col % 64));
            let Some(p) = (rank..mat.len()).find(|&i| mat[i].0[w] & b != 0) else {
                continue;
            };
            mat.swap(rank, p);
            let (pivot_bits, pivot_val) = mat[rank].clone();
            for (i, (bits, val)) in mat.iter_mut().enumerate() {
                if i != rank && bits[w] & b != 0 {
                    for (x, y) in bits.iter_mut().zip(&pivot_bits) {
                        *x ^= y;
                    }
                    xor_into(val, &pivot_val);
                }
            }
            pivots.push(col);
            rank += 1;
        }
        if rank < rest.len() {
            return Err(SolveError::RankDeficient {
                unresolved: rest.len() - rank,
            });
        }
        for (i, &col) in pivots.iter().enumerate() {
            x[rest[col]] = Some(mat[i].1);
        }
        stats.eliminated = rest.len();
    }

    let x: Vec<Payload> = x.into_iter().map(|p| p.expect("all resolved")).collect();
    let bad = inconsistent_rows(&x, rows, values);
    if bad > 0 {
        return Err(SolveError::Inconsistent { rows: bad });
    }
    Ok((x, stats))
}

pub fn inconsistent_rows(x: &[Payload], rows: &[Vec<u32>], values: &[Payload]) -> usize {
    rows.iter()
        .zip(values)
        .filter(|(row, val)| {
            let mut acc = **val;
            for &c in row.iter() {
                xor_into(&mut acc, &x[c as usize]);
            }
            acc != [0u8; 32]
        })
        .count()
}
