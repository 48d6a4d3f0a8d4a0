//! Paired significance tests over per-query scores.
//!
//! Every draw seeds its own generator from `(seed, draw index)`, so the
//! result does not depend on how draws are spread over threads.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{check_paired, EvalReport};
use crate::seeded_rng;

pub const DEFAULT_PERMUTATIONS: usize = 100_000;
pub const ALPHA: f64 = 0.05;

/// Values within this relative distance of the observed statistic count as
/// at least as extreme.
const REL_EPS: f64 = 1e-9;

fn at_least(t: f64, observed: f64) -> bool {
    t >= observed * (1.0 - REL_EPS)
}

fn smoothed(count: usize, draws: usize) -> f64 {
    (count + 1) as f64 / (draws + 1) as f64
}

#[cfg(feature = "parallel")]
fn draw_stats<F: Fn(u64) -> f64 + Sync + Send>(n: usize, f: F) -> Vec<f64> {
    use rayon::prelude::*;
    (0..n as u64).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn draw_stats<F: Fn(u64) -> f64>(n: usize, f: F) -> Vec<f64> {
    (0..n as u64).map(f).collect()
}

fn sign_flip_stat(diffs: &[f64], seed: u64, draw: u64) -> f64 {
    let mut rng = seeded_rng(seed, draw);
    let mut sum = 0.0;
    for chunk in diffs.chunks(64) {
        let bits = rng.next_u64();
        for (i, d) in chunk.iter().enumerate() {
            if bits >> i & 1 == 1 {
                sum -= d;
            } else {
                sum += d;
            }
        }
    }
    (sum / diffs.len() as f64).abs()
}

fn paired_diffs(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Empty("score vector".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Two-sided paired sign-flip test on the mean difference.
pub fn permutation_test(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> Result<f64> {
    if n_perm < 1 {
        return Err(Error::InvalidArgument("n_perm must be >= 1".into()));
    }
    let diffs = paired_diffs(a, b)?;
    let observed = (diffs.iter().sum::<f64>() / diffs.len() as f64).abs();
    let stats = draw_stats(n_perm, |r| sign_flip_stat(&diffs, seed, r));
    Ok(smoothed(stats.iter().filter(|&&t| at_least(t, observed)).count(), n_perm))
}

/// Exact sign-flip p-value by enumerating all `2^n` patterns (`n <= 24`).
pub fn permutation_test_exhaustive(a: &[f64], b: &[f64]) -> Result<f64> {
    let diffs = paired_diffs(a, b)?;
    if diffs.len() > 24 {
        return Err(Error::InvalidArgument("exhaustive enumeration needs n <= 24".into()));
    }
    let n = diffs.len();
    let observed = (diffs.iter().sum::<f64>() / n as f64).abs();
    let total = 1u64 << n;
    let hits = (0..total)
        .filter(|mask| {
            let s: f64 = diffs
                .iter()
                .enumerate()
                .map(|(i, d)| if mask >> i & 1 == 1 { -d } else { *d })
                .sum();
            at_least((s / n as f64).abs(), observed)
        })
        .count();
    Ok(hits as f64 / total as f64)
}

/// Per-query scores of several systems on the same queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub systems: Vec<String>,
    pub queries: Vec<String>,
    /// Row-major, one row per query, one column per system.
    values: Vec<f64>,
}

impl ScoreMatrix {
    /// `columns[s][q]` is system `s`'s score on query `q`.
    pub fn from_columns(systems: Vec<String>, queries: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        if systems.len() != columns.len() {
            return Err(Error::LengthMismatch(systems.len(), columns.len()));
        }
        if let Some(bad) = columns.iter().find(|c| c.len() != queries.len()) {
            return Err(Error::LengthMismatch(bad.len(), queries.len()));
        }
        let mut values = Vec::with_capacity(queries.len() * systems.len());
        for q in 0..queries.len() {
            values.extend(columns.iter().map(|c| c[q]));
        }
        Ok(ScoreMatrix { systems, queries, values })
    }

    /// Builds the matrix from evaluation reports, which must score the same
    /// queries in the same order.
    pub fn from_reports(reports: &[EvalReport]) -> Result<Self> {
        check_paired(reports)?;
        let first = reports.first().ok_or_else(|| Error::Empty("report list".into()))?;
        let systems = reports
            .iter()
            .enumerate()
            .map(|(i, r)| if r.system.is_empty() { format!("system{}", i + 1) } else { r.system.clone() })
            .collect();
        let queries = first.per_query.iter().map(|q| q.query.clone()).collect();
        let columns: Vec<Vec<f64>> = reports.iter().map(EvalReport::scores).collect();
        Self::from_columns(systems, queries, &columns)
    }

    pub fn system_count(&self) -> usize {
        self.systems.len()
    }

    pub fn query_count(&self) -> usize {
        self.queries.len()
    }

    pub fn row(&self, q: usize) -> &[f64] {
        let m = self.systems.len();
        &self.values[q * m..(q + 1) * m]
    }

    pub fn column(&self, s: usize) -> Vec<f64> {
        (0..self.query_count()).map(|q| self.row(q)[s]).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        let m = self.system_count();
        let mut sums = vec![0.0; m];
        for q in 0..self.query_count() {
            for (s, v) in sums.iter_mut().zip(self.row(q)) {
                *s += v;
            }
        }
        sums.iter().map(|s| s / self.query_count() as f64).collect()
    }

    fn check(&self) -> Result<()> {
        if self.system_count() < 2 {
            return Err(Error::InvalidArgument("at least two systems are needed".into()));
        }
        if self.query_count() == 0 {
            return Err(Error::Empty("query list".into()));
        }
        Ok(())
    }
}

fn range(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

fn tukey_stat(matrix: &ScoreMatrix, seed: u64, draw: u64) -> f64 {
    let mut rng = seeded_rng(seed, draw);
    let m = matrix.system_count();
    let mut sums = vec![0.0; m];
    let mut row = vec![0.0; m];
    for q in 0..matrix.query_count() {
        row.copy_from_slice(matrix.row(q));
        row.shuffle(&mut rng);
        for (s, v) in sums.iter_mut().zip(&row) {
            *s += v;
        }
    }
    range(&sums) / matrix.query_count() as f64
}

/// Pairwise p-values for every system pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub systems: Vec<String>,
    pub means: Vec<f64>,
    /// Symmetric, ones on the diagonal.
    pub p_values: Vec<Vec<f64>>,
    pub alpha: f64,
    pub permutations: usize,
}

impl PairwiseReport {
    fn from_null(matrix: &ScoreMatrix, null: &[f64], permutations: usize, exact: bool) -> Self {
        let means = matrix.means();
        let m = means.len();
        let mut p_values = vec![vec![1.0; m]; m];
        for i in 0..m {
            for j in i + 1..m {
                let observed = (means[i] - means[j]).abs();
                let hits = null.iter().filter(|&&t| at_least(t, observed)).count();
                let p = if exact { hits as f64 / null.len() as f64 } else { smoothed(hits, permutations) };
                p_values[i][j] = p;
                p_values[j][i] = p;
            }
        }
        PairwiseReport {
            systems: matrix.systems.clone(),
            means,
            p_values,
            alpha: ALPHA,
            permutations,
        }
    }

    pub fn p_value(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.systems.iter().position(|s| s == a)?;
        let j = self.systems.iter().position(|s| s == b)?;
        Some(self.p_values[i][j])
    }

    /// Systems with their means and the p-value matrix; `*` marks pairs
    /// significant at `alpha`.
    pub fn to_table(&self) -> String {
        let width = self.systems.iter().map(String::len).max().unwrap_or(0).max(8);
        let mut s = String::new();
        let _ = write!(s, "{:<width$} {:>8}", "system", "mean");
        for name in &self.systems {
            let _ = write!(s, " {:>width$}", name);
        }
        s.push('\n');
        for (i, name) in self.systems.iter().enumerate() {
            let _ = write!(s, "{:<width$} {:>8.4}", name, self.means[i]);
            for j in 0..self.systems.len() {
                let cell = if i == j {
                    "-".to_owned()
                } else {
                    let p = self.p_values[i][j];
                    format!("{p:.4}{}", if p < self.alpha { "*" } else { " " })
                };
                let _ = write!(s, " {cell:>width$}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "* p < {} ({} permutations)", self.alpha, self.permutations);
        s
    }
}

/// Randomized Tukey HSD: the null distribution is the range of system means
/// after shuffling system labels independently within each query.
pub fn randomized_tukey_hsd(matrix: &ScoreMatrix, n_perm: usize, seed: u64) -> Result<PairwiseReport> {
    matrix.check()?;
    if n_perm < 1 {
        return Err(Error::InvalidArgument("n_perm must be >= 1".into()));
    }
    let null = draw_stats(n_perm, |r| tukey_stat(matrix, seed, r));
    Ok(PairwiseReport::from_null(matrix, &null, n_perm, false))
}

/// Exact Tukey HSD over all `(m!)^n` label permutations. Only for tiny
/// matrices (at most a few million permutations).
pub fn tukey_hsd_exhaustive(matrix: &ScoreMatrix) -> Result<PairwiseReport> {
    matrix.check()?;
    let m = matrix.system_count();
    let n = matrix.query_count();
    let perms = permutations_of(m);
    let total = (perms.len() as u128).checked_pow(n as u32).filter(|&t| t <= 20_000_000);
    let Some(total) = total else {
        return Err(Error::InvalidArgument("matrix too large for exhaustive enumeration".into()));
    };
    let mut null = Vec::with_capacity(total as usize);
    let mut choice = vec![0usize; n];
    let mut sums = vec![0.0; m];
    loop {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (q, &c) in choice.iter().enumerate() {
            let row = matrix.row(q);
            for (s, &src) in sums.iter_mut().zip(&perms[c]) {
                *s += row[src];
            }
        }
        null.push(range(&sums) / n as f64);
        // odometer increment
        let mut q = 0;
        while q < n {
            choice[q] += 1;
            if choice[q] < perms.len() {
                break;
            }
            choice[q] = 0;
            q += 1;
        }
        if q == n {
            break;
        }
    }
    let count = null.len();
    Ok(PairwiseReport::from_null(matrix, &null, count, true))
}

fn permutations_of(m: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; m], &mut out);
    out
}

/// Pairwise sign-flip tests for every pair, without family-wise correction.
#[allow(clippy::needless_range_loop)]
pub fn pairwise_permutation_tests(matrix: &ScoreMatrix, n_perm: usize, seed: u64) -> Result<PairwiseReport> {
    matrix.check()?;
    let m = matrix.system_count();
    let mut p_values = vec![vec![1.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let p = permutation_test(&matrix.column(i), &matrix.column(j), n_perm, seed)?;
            p_values[i][j] = p;
            p_values[j][i] = p;
        }
    }
    Ok(PairwiseReport {
        systems: matrix.systems.clone(),
        means: matrix.means(),
        p_values,
        alpha: ALPHA,
        permutations: n_perm,
    })
}
