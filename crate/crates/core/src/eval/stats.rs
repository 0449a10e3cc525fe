//! Wilcoxon signed-rank and Kendall tau-b tests.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest number of nonzero differences evaluated with the exact null
/// distribution.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of the (mid)ranks of positive differences `a - b`.
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs left after discarding zero differences.
    pub n: usize,
    pub method: WilcoxonMethod,
}

/// Midranks (1-based) of `|d|`, doubled so ties stay integral.
pub fn doubled_midranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&i, &j| abs[i].total_cmp(&abs[j]));
    let mut ranks = vec![0u64; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 average to (i + j + 2) / 2
        let doubled = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    ranks
}

fn tie_sizes(sorted: &[f64]) -> Vec<u64> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        out.push((j - i) as u64);
        i = j;
    }
    out
}

/// Two-sided paired test of `a` against `b`; zero differences are dropped.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Undefined("non-finite difference".into()));
    }
    if d.is_empty() {
        return Err(Error::Undefined("all paired differences are zero".into()));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = doubled_midranks(&abs);
    let w2: u64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let statistic = w2 as f64 / 2.0;
    if n <= WILCOXON_EXACT_MAX_N {
        let (below, above) = exact_tails(&ranks, w2);
        let p = (2.0 * below.min(above)).min(1.0);
        return Ok(WilcoxonResult {
            statistic,
            p_value: p,
            n,
            method: WilcoxonMethod::Exact,
        });
    }
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let ties: f64 = tie_sizes(&sorted).iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
    let diff = statistic - mean;
    let corrected = (diff.abs() - 0.5).max(0.0);
    let z = corrected / var.sqrt();
    Ok(WilcoxonResult {
        statistic,
        p_value: erfc(z / std::f64::consts::SQRT_2).min(1.0),
        n,
        method: WilcoxonMethod::Normal,
    })
}

/// `P(T <= t)` and `P(T >= t)` under random signs, where `T` is the doubled
/// positive-rank sum; counts come from a subset-sum table.
fn exact_tails(ranks: &[u64], t: u64) -> (f64, f64) {
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all = 2f64.powi(ranks.len() as i32);
    let below: f64 = counts[..=t as usize].iter().sum();
    let above: f64 = counts[t as usize..].iter().sum();
    (below / all, above / all)
}

/// Pair counts behind tau-b, all exact integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KendallCounts {
    pub n: u64,
    /// Concordant minus discordant pairs.
    pub s: i64,
    /// `n (n - 1) / 2`.
    pub n0: u64,
    /// Pairs tied in `x`.
    pub n1: u64,
    /// Pairs tied in `y`.
    pub n2: u64,
}

impl KendallCounts {
    pub fn tau_b(&self) -> Result<f64> {
        let denom = (self.n0 - self.n1) as f64 * (self.n0 - self.n2) as f64;
        if denom == 0.0 {
            return Err(Error::Undefined("tau-b denominator is zero (constant input)".into()));
        }
        Ok(self.s as f64 / denom.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KendallResult {
    pub tau: f64,
    pub p_value: f64,
    pub counts: KendallCounts,
}

fn pairs(t: u64) -> u64 {
    t * t.saturating_sub(1) / 2
}

fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Tie-aware pair counts in `O(n log n)` (Knight's algorithm).
pub fn kendall_counts(x: &[f64], y: &[f64]) -> Result<KendallCounts> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Undefined("NaN input".into()));
    }
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]).then(y[i].total_cmp(&y[j])));
    let mut n1 = 0;
    let mut n3 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        n1 += pairs((j - i) as u64);
        let mut k = i;
        while k < j {
            let mut l = k + 1;
            while l < j && y[idx[l]] == y[idx[k]] {
                l += 1;
            }
            n3 += pairs((l - k) as u64);
            k = l;
        }
        i = j;
    }
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let swaps = merge_count(&mut ys, &mut Vec::with_capacity(n));
    let n2: u64 = tie_sizes(&ys).into_iter().map(pairs).sum();
    let n0 = pairs(n as u64);
    let s = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * swaps as i64;
    Ok(KendallCounts {
        n: n as u64,
        s,
        n0,
        n1,
        n2,
    })
}

/// Tau-b with a two-sided p-value from the tie-corrected normal
/// approximation.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<KendallResult> {
    let counts = kendall_counts(x, y)?;
    if counts.n < 2 {
        return Err(Error::Undefined("need at least two observations".into()));
    }
    let tau = counts.tau_b()?;
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let mut ys = y.to_vec();
    ys.sort_by(f64::total_cmp);
    let tx = tie_sizes(&xs);
    let ty = tie_sizes(&ys);
    let n = counts.n as f64;
    let sum = |t: &[u64], f: &dyn Fn(f64) -> f64| t.iter().map(|&v| f(v as f64)).sum::<f64>();
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let vt = sum(&tx, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = sum(&ty, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let v1 = sum(&tx, &|t| t * (t - 1.0)) * sum(&ty, &|t| t * (t - 1.0)) / (2.0 * n * (n - 1.0));
    let v2 = if counts.n > 2 {
        sum(&tx, &|t| t * (t - 1.0) * (t - 2.0)) * sum(&ty, &|t| t * (t - 1.0) * (t - 2.0))
            / (9.0 * n * (n - 1.0) * (n - 2.0))
    } else {
        0.0
    };
    let var = (v0 - vt - vu) / 18.0 + v1 + v2;
    let z = counts.s as f64 / var.sqrt();
    Ok(KendallResult {
        tau,
        p_value: erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0),
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doubled_ranks_with_ties() {
        assert_eq!(doubled_midranks(&[3.0, 1.0, 3.0, 2.0]), [7, 2, 7, 4]);
    }

    #[test]
    fn six_positive_differences() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let r = wilcoxon_signed_rank(&a, &[0.0; 6]).unwrap();
        assert_eq!(r.statistic, 21.0);
        assert_eq!(r.p_value, 0.03125);
        assert_eq!(r.method, WilcoxonMethod::Exact);
    }

    #[test]
    fn wilcoxon_errors() {
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::Undefined(_))
        ));
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn kendall_extremes() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert_eq!(kendall_tau(&x, &x).unwrap().tau, 1.0);
        assert_eq!(kendall_tau(&x, &rev).unwrap().tau, -1.0);
        assert!(kendall_tau(&x, &[1.0; 10]).is_err());
        assert!(kendall_tau(&x, &x[..3]).is_err());
    }
}
