//! Rank tests and t-tests for group and phase comparisons.
//!
//! Two-sided p-values double the smaller tail and are capped at 1. Ties get
//! midranks and zero paired differences are dropped. The effect size is
//! `r = |z| / sqrt(N)` using the normal statistic without continuity correction.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest combined size for exact Mann-Whitney p-values.
pub const MWU_EXACT_MAX: usize = 16;
/// Largest number of nonzero differences for exact Wilcoxon p-values.
pub const WILCOXON_EXACT_MAX: usize = 12;

/// How rank-test p-values are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    /// Exact below the size limits on tie-free data, normal otherwise.
    Auto,
    /// Exact null distribution. Fails on ties.
    Exact,
    /// Normal approximation with tie and continuity correction.
    Normal,
}

fn use_exact(method: PMethod, small: bool, tied: bool) -> Result<bool> {
    match method {
        PMethod::Auto => Ok(small && !tied),
        PMethod::Normal => Ok(false),
        PMethod::Exact if tied => Err(Error::Stats("exact p-values need tie-free data".into())),
        PMethod::Exact => Ok(true),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p: f64,
    pub z: f64,
    pub r: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    pub w_plus: f64,
    pub w_minus: f64,
    /// Nonzero differences.
    pub n: usize,
    pub p: f64,
    pub z: f64,
    pub r: f64,
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub cohens_d: f64,
}

fn finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Stats(alloc::format!("{what} contains non-finite values")))
    }
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Upper tail of the standard normal.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / core::f64::consts::SQRT_2)
}

/// Midranks (1-based) and the tie groups' sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

fn tie_term(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

/// Two-sided p from a discrete null distribution given as counts per integer statistic.
fn exact_two_sided(counts: &[u64], stat: usize) -> f64 {
    let total: u64 = counts.iter().sum();
    let lower: u64 = counts[..=stat].iter().sum();
    let upper: u64 = counts[stat..].iter().sum();
    clamp_p(2.0 * lower.min(upper) as f64 / total as f64)
}

/// Null counts of U for sample sizes `m`, `n`: index u holds the number of
/// rank arrangements giving U = u.
pub fn mwu_null_counts(m: usize, n: usize) -> Vec<u64> {
    // f[j] = counts for (i, j) while sweeping i.
    let mut f: Vec<Vec<u64>> = (0..=n).map(|_| vec![1u64]).collect();
    for i in 1..=m {
        let mut g: Vec<Vec<u64>> = Vec::with_capacity(n + 1);
        g.push(vec![1u64]);
        for j in 1..=n {
            // The largest value belongs to the first sample (adds j) or to the second.
            let mut row = vec![0u64; i * j + 1];
            for (u, &c) in f[j].iter().enumerate() {
                row[u + j] += c;
            }
            for (u, &c) in g[j - 1].iter().enumerate() {
                row[u] += c;
            }
            g.push(row);
        }
        f = g;
    }
    f.pop().unwrap()
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    mann_whitney_u_with(a, b, PMethod::Auto)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], method: PMethod) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Stats("Mann-Whitney needs two non-empty samples".into()));
    }
    finite(a, "sample a")?;
    finite(b, "sample b")?;
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let ra: f64 = ranks[..na].iter().sum();
    let u = ra - (na * (na + 1)) as f64 / 2.0;

    let mu = (na * nb) as f64 / 2.0;
    let nf = n as f64;
    let var = (na * nb) as f64 / 12.0 * ((nf + 1.0) - tie_term(&ties) / (nf * (nf - 1.0)));
    let sd = libm::sqrt(var.max(0.0));
    let z = if sd > 0.0 { (u - mu) / sd } else { 0.0 };
    let r = libm::fabs(z) / libm::sqrt(nf);

    let exact = use_exact(method, n <= MWU_EXACT_MAX, !ties.is_empty())?;
    if exact && n > 64 {
        return Err(Error::Stats("exact Mann-Whitney p-values are limited to 64 values".into()));
    }
    let p = if exact {
        exact_two_sided(&mwu_null_counts(na, nb), u as usize)
    } else if sd > 0.0 {
        let zc = ((u - mu).abs() - 0.5).max(0.0) / sd;
        clamp_p(2.0 * normal_sf(zc))
    } else {
        1.0
    };
    Ok(MannWhitney { u, p, z, r, exact })
}

/// Null counts of W+ for `n` untied ranks.
pub fn signed_rank_null_counts(n: usize) -> Vec<u64> {
    let max = n * (n + 1) / 2;
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for k in 1..=n {
        for w in (k..=max).rev() {
            counts[w] += counts[w - k];
        }
    }
    counts
}

/// Signed-rank test on paired differences.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<Wilcoxon> {
    wilcoxon_signed_rank_with(diffs, PMethod::Auto)
}

pub fn wilcoxon_signed_rank_with(diffs: &[f64], method: PMethod) -> Result<Wilcoxon> {
    finite(diffs, "differences")?;
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if nz.is_empty() {
        return Err(Error::Stats("all paired differences are zero".into()));
    }
    let n = nz.len();
    let abs: Vec<f64> = nz.iter().map(|d| libm::fabs(*d)).collect();
    let (ranks, ties) = midranks(&abs);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;

    let nf = n as f64;
    let mu = total / 2.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&ties) / 48.0;
    let sd = libm::sqrt(var.max(0.0));
    let z = if sd > 0.0 { (w_plus - mu) / sd } else { 0.0 };
    let r = libm::fabs(z) / libm::sqrt(nf);

    let exact = use_exact(method, n <= WILCOXON_EXACT_MAX, !ties.is_empty())?;
    if exact && n > 60 {
        return Err(Error::Stats("exact signed-rank p-values are limited to 60 differences".into()));
    }
    let p = if exact {
        exact_two_sided(&signed_rank_null_counts(n), w_plus as usize)
    } else if sd > 0.0 {
        let zc = ((w_plus - mu).abs() - 0.5).max(0.0) / sd;
        clamp_p(2.0 * normal_sf(zc))
    } else {
        1.0
    };
    Ok(Wilcoxon { w_plus, w_minus, n, p, z, r, exact })
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Regularized incomplete beta I_x(a, b).
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta, modified Lentz.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if libm::fabs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        for coef in [aa, -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0))] {
            d = 1.0 + coef * d;
            if libm::fabs(d) < TINY {
                d = TINY;
            }
            c = 1.0 + coef / c;
            if libm::fabs(c) < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            h *= d * c;
            if coef != aa && libm::fabs(d * c - 1.0) < 1e-16 {
                return h;
            }
        }
    }
    h
}

/// Two-sided p of Student's t with `df` degrees of freedom.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    clamp_p(inc_beta(df / 2.0, 0.5, df / (df + t * t)))
}

/// Welch's t-test for independent samples.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Stats("t-test needs at least two values per sample".into()));
    }
    finite(a, "sample a")?;
    finite(b, "sample b")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        return Err(Error::Stats("zero variance in both samples".into()));
    }
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    let t = (ma - mb) / libm::sqrt(se2);
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let pooled = libm::sqrt(((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0));
    Ok(TTest { t, df, p: t_two_sided(t, df), cohens_d: (ma - mb) / pooled })
}

/// Paired t-test on `a[i] - b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Stats(alloc::format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Stats("t-test needs at least two pairs".into()));
    }
    finite(a, "sample a")?;
    finite(b, "sample b")?;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (m, v) = mean_var(&diffs);
    if v == 0.0 {
        return Err(Error::Stats("zero variance in paired differences".into()));
    }
    let n = diffs.len() as f64;
    let sd = libm::sqrt(v);
    let t = m / (sd / libm::sqrt(n));
    let df = n - 1.0;
    Ok(TTest { t, df, p: t_two_sided(t, df), cohens_d: m / sd })
}
