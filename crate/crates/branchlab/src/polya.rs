//! Unordered rooted trees with a degree bound: exact counting, uniform
//! generation, rank/unrank, the induced root-split law, and the stepwise
//! coupling with the independent-subtree (Markov branching) approximation.
//!
//! Counting follows the classical product formula for multisets of subtrees:
//! writing `T_n` for the number of unordered rooted trees with `n` vertices
//! and all out-degrees at most `m`, a tree of size `n` with root split
//! `λ = (λ₁ ≥ … ≥ λ_p)` exists in exactly
//!
//! ```text
//!   S_n(λ) = ∏_j C(T_j + m_j(λ) − 1, m_j(λ))
//! ```
//!
//! shapes, where `m_j(λ)` is the multiplicity of `j` in `λ`: each size class
//! contributes an unordered multiset of subtrees. Summing over root splits
//! gives the Otter-style recursion that [`otter_counts`] evaluates, exactly
//! in big integers up to [`EXACT_CAP`] vertices and in log space beyond.
//!
//! The root split of a uniform tree of size `n+1` defines a vertex-model
//! split law `q_n(λ) = S_{n+1}(λ) / T_{n+1}` ([`uniform_law`]); uniform trees
//! themselves are generated by walking the counting recursion
//! ([`uniform_tree`]), and every tree of size `n ≤` the exact range has a
//! rank in `[0, T_n)` ([`rank_tree`], [`unrank_tree`]).

use crate::partitions::{enumerate_partitions, IntPartition};
use crate::splitlaws::SplitLaw;
use crate::trees::Tree;
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{BigUint, One, ToPrimitive, Zero};
use rand::{Rng, RngCore};
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

/// Largest tree size for which the count tables are kept as exact big
/// integers (and rank/unrank is available).
pub const EXACT_CAP: usize = 450;

/// Memory guard for the quadratic log-space forest table (unbounded degree).
const LOG_FOREST_CAP: usize = 4096;

/// Length guard for the binary log-convolution recursion.
const LOG_PAIR_CAP: usize = 16384;

/// Below this subtree size, multisets of identical-size subtrees are drawn
/// by exact rank unranking; above it, by the sequential repeat/fresh scheme.
const INDEX_SAMPLING_CAP: usize = 16;

// ---------------------------------------------------------------------------
// Count tables
// ---------------------------------------------------------------------------

/// Forests with component sizes at most `j`, exactly counted.
enum ForestExact {
    /// `a[j][s]`: forests of total size `s`, components of size ≤ `j`.
    Unbounded(Vec<Vec<BigUint>>),
    /// `a[j][s][c]`: additionally exactly `c` components (degree bound `m`
    /// caps the usable component count at each node).
    Bounded(Vec<Vec<Vec<BigUint>>>),
}

/// Tree-count tables for out-degree bound `m` (`None` = unbounded), exact up
/// to [`EXACT_CAP`] and in log space up to `n_max`.
pub struct CountTables {
    m: Option<usize>,
    n_max: usize,
    exact_n: usize,
    /// `T_n` for `n ≤ exact_n`; `t_exact[0] = 1` by convention.
    t_exact: Vec<BigUint>,
    /// Trees whose root has at most `m − 2` children (all of them when the
    /// degree is unbounded); the reduced series entering `ψ`.
    t_tilde_exact: Vec<BigUint>,
    forest: ForestExact,
    /// `ln T_n` for all `n ≤ n_max`.
    log_t: Vec<f64>,
    /// `ln a[j][s]` for the unbounded family beyond the exact range.
    log_forest: Option<Vec<Vec<f64>>>,
    /// Tilted weights `u_s = T_s e^{−c s}` for the binary pair scan.
    pair_u: Option<Vec<f64>>,
}

/// Multiset coefficient `C(t + k − 1, k)`: multisets of `k` trees from `t`.
fn multiset_coeff(t: &BigUint, k: usize) -> BigUint {
    let mut f = BigUint::one();
    for i in 0..k {
        f *= t + BigUint::from(i);
        f /= BigUint::from(i + 1);
    }
    f
}

/// `ln x` for a big integer, −∞ at zero, accurate to one ulp of the top bits.
pub fn ln_big(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 53 {
        return x.to_f64().expect("small big fits f64").ln();
    }
    let shift = bits - 53;
    let top = (x >> shift).to_f64().expect("53-bit top fits f64");
    top.ln() + shift as f64 * LN_2
}

/// `ln(e^a + e^b)` without overflow.
fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Build the count tables for degree bound `m` up to trees of size `n_max`.
///
/// Exact big-integer tables (and with them rank/unrank, exact pmfs and the
/// coupling probabilities) cover `n ≤ min(n_max, EXACT_CAP)`. Beyond that the
/// unbounded family keeps a quadratic log-space forest table and the binary
/// family a log-space convolution; other finite bounds are capped.
pub fn otter_counts(m: Option<usize>, n_max: usize) -> CountTables {
    assert!(n_max >= 1, "need at least one tree size");
    if let Some(mm) = m {
        assert!(mm >= 2, "degree bound must be at least 2");
        if mm >= 3 {
            assert!(
                n_max <= EXACT_CAP,
                "degree bound {mm}: counts available only up to n = {EXACT_CAP}"
            );
        } else {
            assert!(
                n_max <= LOG_PAIR_CAP,
                "binary counts available only up to n = {LOG_PAIR_CAP}"
            );
        }
    } else {
        assert!(
            n_max <= LOG_FOREST_CAP,
            "unbounded counts available only up to n = {LOG_FOREST_CAP}"
        );
    }
    let exact_n = n_max.min(EXACT_CAP);
    let s_cap = exact_n.saturating_sub(1);

    // Exact forest dynamic programme over component-size cap j = 0..=s_cap.
    let mut t_exact: Vec<BigUint> = vec![BigUint::one(), BigUint::one()];
    let forest = match m {
        None => {
            let mut a: Vec<Vec<BigUint>> = Vec::with_capacity(s_cap + 1);
            let mut row0 = vec![BigUint::zero(); s_cap + 1];
            row0[0] = BigUint::one();
            a.push(row0);
            for j in 1..=s_cap {
                // F_j(k) for k ≤ s_cap / j, built by the ratio recurrence.
                let kmax = s_cap / j;
                let mut f_row = vec![BigUint::one()];
                for k in 0..kmax {
                    let mut next = f_row[k].clone() * (&t_exact[j] + BigUint::from(k));
                    next /= BigUint::from(k + 1);
                    f_row.push(next);
                }
                let mut row = vec![BigUint::zero(); s_cap + 1];
                for s in 0..=s_cap {
                    let mut acc = BigUint::zero();
                    for k in 0..=s / j {
                        acc += &f_row[k] * &a[j - 1][s - k * j];
                    }
                    row[s] = acc;
                }
                a.push(row);
                if j + 1 <= exact_n {
                    t_exact.push(a[j][j].clone());
                }
            }
            ForestExact::Unbounded(a)
        }
        Some(mm) => {
            let cdim = |s: usize| mm.min(s);
            let mut a: Vec<Vec<Vec<BigUint>>> = Vec::with_capacity(s_cap + 1);
            let mut row0: Vec<Vec<BigUint>> =
                (0..=s_cap).map(|s| vec![BigUint::zero(); cdim(s) + 1]).collect();
            row0[0][0] = BigUint::one();
            a.push(row0);
            for j in 1..=s_cap {
                let kmax_all = (s_cap / j).min(mm);
                let mut f_row = vec![BigUint::one()];
                for k in 0..kmax_all {
                    let mut next = f_row[k].clone() * (&t_exact[j] + BigUint::from(k));
                    next /= BigUint::from(k + 1);
                    f_row.push(next);
                }
                let mut row: Vec<Vec<BigUint>> =
                    (0..=s_cap).map(|s| vec![BigUint::zero(); cdim(s) + 1]).collect();
                for s in 0..=s_cap {
                    for c in 0..=cdim(s) {
                        let mut acc = BigUint::zero();
                        for k in 0..=(s / j).min(c) {
                            let prev = &a[j - 1][s - k * j];
                            if c - k < prev.len() {
                                acc += &f_row[k] * &prev[c - k];
                            }
                        }
                        row[s][c] = acc;
                    }
                }
                a.push(row);
                if j + 1 <= exact_n {
                    let total: BigUint = a[j][j].iter().sum();
                    t_exact.push(total);
                }
            }
            ForestExact::Bounded(a)
        }
    };
    t_exact.truncate(exact_n + 1);

    // Reduced series: root with at most m − 2 children.
    let t_tilde_exact: Vec<BigUint> = match (&forest, m) {
        (_, None) => t_exact.clone(),
        (ForestExact::Bounded(a), Some(mm)) => {
            let mut tt = vec![BigUint::one(), BigUint::one()];
            for n in 2..=exact_n {
                let total: BigUint = a[n - 1][n - 1]
                    .iter()
                    .take(mm.saturating_sub(1))
                    .sum();
                tt.push(total);
            }
            tt.truncate(exact_n + 1);
            tt
        }
        _ => unreachable!(),
    };

    let mut log_t: Vec<f64> = t_exact.iter().map(ln_big).collect();

    // Log-space continuation beyond the exact range.
    let mut log_forest = None;
    let mut pair_u = None;
    if n_max > exact_n {
        match m {
            None => {
                let smax = n_max - 1;
                // ln F_j(k) from ln T_j, stable for huge T.
                let ln_f_step = |lt: f64, k: usize| -> f64 {
                    // ln(T + k) − ln(k + 1)
                    log_add(lt, (k as f64).ln()) - ((k + 1) as f64).ln()
                };
                let mut la: Vec<Vec<f64>> = Vec::with_capacity(smax + 1);
                let mut row0 = vec![f64::NEG_INFINITY; smax + 1];
                row0[0] = 0.0;
                la.push(row0);
                for j in 1..=smax {
                    let lt = log_t[j];
                    let kmax = smax / j;
                    let mut ln_f = vec![0.0f64];
                    for k in 0..kmax {
                        ln_f.push(ln_f[k] + ln_f_step(lt, k));
                    }
                    let mut row = vec![f64::NEG_INFINITY; smax + 1];
                    for s in 0..=smax {
                        let mut acc = f64::NEG_INFINITY;
                        for k in 0..=s / j {
                            acc = log_add(acc, ln_f[k] + la[j - 1][s - k * j]);
                        }
                        row[s] = acc;
                    }
                    la.push(row);
                    if j + 1 > exact_n && j + 1 <= n_max {
                        log_t.push(la[j][j]);
                    }
                }
                log_forest = Some(la);
            }
            Some(2) => {
                for n in (exact_n + 1)..=n_max {
                    let s = n - 1;
                    // Single child, unordered pairs, and the equal pair.
                    let mut acc = log_t[s];
                    for b in 1..(s + 1) / 2 {
                        acc = log_add(acc, log_t[b] + log_t[s - b]);
                    }
                    if s % 2 == 0 {
                        let lh = log_t[s / 2];
                        // ln((T² + T) / 2)
                        acc = log_add(acc, 2.0 * lh - LN_2 + (-lh).exp().ln_1p());
                    }
                    log_t.push(acc);
                }
                // Tilt by the tail growth rate so the scan weights stay in
                // f64 range across the whole table.
                let c = log_t[n_max] - log_t[n_max - 1];
                let u: Vec<f64> = (0..=n_max)
                    .map(|s| if s == 0 { 0.0 } else { (log_t[s] - c * s as f64).exp() })
                    .collect();
                pair_u = Some(u);
            }
            Some(_) => unreachable!("finite bounds ≥ 3 are capped at EXACT_CAP"),
        }
    }
    assert_eq!(log_t.len(), n_max + 1);

    CountTables {
        m,
        n_max,
        exact_n,
        t_exact,
        t_tilde_exact,
        forest,
        log_t,
        log_forest,
        pair_u,
    }
}

impl CountTables {
    pub fn m(&self) -> Option<usize> {
        self.m
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Largest size with exact big-integer counts.
    pub fn exact_n(&self) -> usize {
        self.exact_n
    }

    /// Exact `T_n`; panics beyond the exact range.
    pub fn t(&self, n: usize) -> &BigUint {
        assert!(n <= self.exact_n, "exact counts stop at n = {}", self.exact_n);
        &self.t_exact[n]
    }

    /// Exact reduced count `T̃_n` (root with ≤ m − 2 children).
    pub fn t_tilde(&self, n: usize) -> &BigUint {
        assert!(n <= self.exact_n, "exact counts stop at n = {}", self.exact_n);
        &self.t_tilde_exact[n]
    }

    /// `ln T_n` for any `n ≤ n_max`.
    pub fn log_t(&self, n: usize) -> f64 {
        self.log_t[n]
    }

    /// `T_n` as f64 (∞ when it overflows).
    pub fn t_f64(&self, n: usize) -> f64 {
        self.log_t[n].exp()
    }

    fn family_name(&self) -> String {
        match self.m {
            None => "uniform(m=inf)".to_string(),
            Some(mm) => format!("uniform(m={mm})"),
        }
    }

    /// Counts serialized with exact values as decimal strings.
    pub fn to_json(&self) -> Value {
        json!({
            "m": match self.m { None => "inf".to_string(), Some(mm) => mm.to_string() },
            "n_max": self.n_max,
            "exact_n": self.exact_n,
            "t": self.t_exact.iter().map(|x| x.to_str_radix(10)).collect::<Vec<_>>(),
            "t_tilde": self.t_tilde_exact.iter().map(|x| x.to_str_radix(10)).collect::<Vec<_>>(),
            "log_t": self.log_t,
        })
    }

    /// Forests with components of size ≤ `j`, total `s`, at most `c` of them.
    fn forest_le(&self, j: usize, s: usize, c: usize) -> BigUint {
        if s == 0 {
            return BigUint::one();
        }
        if j == 0 {
            return BigUint::zero();
        }
        match &self.forest {
            ForestExact::Unbounded(a) => a[j][s].clone(),
            ForestExact::Bounded(a) => a[j][s].iter().take(c + 1).sum(),
        }
    }

    /// Number of tree shapes of size `n` with root split `λ` (so `n(λ) = n − 1`):
    /// the product of multiset coefficients over size classes, zero when the
    /// split needs more children than the degree bound allows.
    pub fn shape_count_poly(&self, n: usize, lambda: &IntPartition) -> BigUint {
        assert!(n >= 1 && n <= self.exact_n, "exact counts stop at n = {}", self.exact_n);
        if n == 1 {
            assert!(lambda.is_empty(), "a single vertex has an empty split");
            return BigUint::one();
        }
        assert_eq!(lambda.n(), n - 1, "split must partition n − 1");
        if let Some(mm) = self.m {
            if lambda.p() > mm {
                return BigUint::zero();
            }
        }
        let mut count = BigUint::one();
        for (&j, &k) in lambda.multiplicities().iter() {
            count *= multiset_coeff(&self.t_exact[j], k);
        }
        count
    }

    /// Variant that excludes splits using the full degree budget (`p(λ) ≥ m`);
    /// these no longer sum to `T_n` — kept behind its own name so the default
    /// stays the one the counting bijection needs.
    pub fn shape_count_poly_strict(&self, n: usize, lambda: &IntPartition) -> BigUint {
        if let Some(mm) = self.m {
            if n >= 2 && lambda.p() >= mm {
                return BigUint::zero();
            }
        }
        self.shape_count_poly(n, lambda)
    }
}

// ---------------------------------------------------------------------------
// Sampling the counting recursion
// ---------------------------------------------------------------------------

/// Uniform big integer in `[0, w)`.
fn big_below(w: &BigUint, rng: &mut dyn RngCore) -> BigUint {
    assert!(!w.is_zero());
    let bits = w.bits();
    let bytes = ((bits + 7) / 8) as usize;
    let extra = (bytes as u64) * 8 - bits;
    loop {
        let mut buf = vec![0u8; bytes];
        rng.fill_bytes(&mut buf);
        buf[0] &= 0xffu8 >> extra;
        let x = BigUint::from_bytes_be(&buf);
        if &x < w {
            return x;
        }
    }
}

/// Categorical draw proportional to exact big-integer weights.
fn pick_big(weights: &[BigUint], rng: &mut dyn RngCore) -> usize {
    let total: BigUint = weights.iter().sum();
    assert!(!total.is_zero(), "no admissible choice");
    let mut r = big_below(&total, rng);
    for (i, w) in weights.iter().enumerate() {
        if &r < w {
            return i;
        }
        r -= w;
    }
    unreachable!()
}

impl CountTables {
    /// Root split of a uniform tree of size `n`, as `(size, count)` classes
    /// in decreasing size order.
    pub fn sample_split(&self, n: usize, rng: &mut dyn RngCore) -> Vec<(usize, usize)> {
        assert!((2..=self.n_max).contains(&n), "size out of table range");
        if n <= self.exact_n {
            self.sample_split_exact(n, rng)
        } else {
            match self.m {
                None => self.sample_split_log(n, rng),
                Some(2) => self.sample_split_pair(n, rng),
                Some(_) => unreachable!(),
            }
        }
    }

    fn sample_split_exact(&self, n: usize, rng: &mut dyn RngCore) -> Vec<(usize, usize)> {
        let s = n - 1;
        let mut cap_left = self.m.unwrap_or(s);
        let mut rem = s;
        let mut out = Vec::new();
        for j in (1..=s).rev() {
            if rem == 0 {
                break;
            }
            if j > rem {
                continue;
            }
            let kmax = (rem / j).min(cap_left);
            let mut f = BigUint::one();
            let mut weights = Vec::with_capacity(kmax + 1);
            for k in 0..=kmax {
                if k > 0 {
                    f *= &self.t_exact[j] + BigUint::from(k - 1);
                    f /= BigUint::from(k);
                }
                weights.push(&f * self.forest_le(j - 1, rem - k * j, cap_left - k));
            }
            let k = pick_big(&weights, rng);
            if k > 0 {
                out.push((j, k));
                rem -= k * j;
                cap_left -= k;
            }
        }
        assert_eq!(rem, 0);
        out
    }

    fn sample_split_log(&self, n: usize, rng: &mut dyn RngCore) -> Vec<(usize, usize)> {
        let la = self.log_forest.as_ref().expect("log table present");
        let s = n - 1;
        let mut rem = s;
        let mut out = Vec::new();
        for j in (1..=s).rev() {
            if rem == 0 {
                break;
            }
            if j > rem {
                continue;
            }
            let lt = self.log_t[j];
            let kmax = rem / j;
            let mut ln_f = 0.0f64;
            let mut weights = Vec::with_capacity(kmax + 1);
            for k in 0..=kmax {
                weights.push((ln_f + la[j - 1][rem - k * j] - la[j][rem]).exp());
                ln_f += log_add(lt, (k as f64).ln()) - ((k + 1) as f64).ln();
            }
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            let mut k = kmax;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    k = i;
                    break;
                }
                u -= w;
            }
            if k > 0 {
                out.push((j, k));
                rem -= k * j;
            }
        }
        assert_eq!(rem, 0);
        out
    }

    fn sample_split_pair(&self, n: usize, rng: &mut dyn RngCore) -> Vec<(usize, usize)> {
        let u = self.pair_u.as_ref().expect("pair table present");
        let s = n - 1;
        let p_single = (self.log_t[s] - self.log_t[n]).exp();
        if rng.gen::<f64>() < p_single {
            return vec![(s, 1)];
        }
        // Scan unordered pairs b ≤ s − b by tilted weights u_b u_{s−b};
        // the size bias makes the expected scan length O(1).
        let c = self.log_t[self.n_max] - self.log_t[self.n_max - 1];
        let w_pairs =
            (self.log_t[n] - c * s as f64).exp() - (self.log_t[s] - c * s as f64).exp();
        let mut v = rng.gen::<f64>() * w_pairs;
        let mut chosen = s / 2;
        for b in 1..=s / 2 {
            let w = if 2 * b == s {
                // Multisets {x, x} add (T² + T)/2 instead of T².
                u[b] * u[b] * 0.5 * (1.0 + (-self.log_t[b]).exp())
            } else {
                u[b] * u[s - b]
            };
            if v < w {
                chosen = b;
                break;
            }
            v -= w;
        }
        let b = chosen;
        if 2 * b == s {
            vec![(b, 2)]
        } else {
            vec![(s - b, 1), (b, 1)]
        }
    }
}

/// One uniform unordered rooted tree of size `n` under the table's degree
/// bound, by walking the counting recursion at the root and drawing each
/// size class as a uniform multiset of subtrees.
pub fn uniform_tree(tables: &CountTables, n: usize, rng: &mut dyn RngCore) -> Tree {
    assert!(n >= 1 && n <= tables.n_max, "size out of table range");
    if n == 1 {
        return Tree::leaf();
    }
    let split = tables.sample_split(n, rng);
    let mut children = Vec::new();
    for (j, k) in split {
        if k == 1 {
            children.push(uniform_tree(tables, j, rng));
        } else {
            children.extend(sample_multiset(tables, j, k, rng, false));
        }
    }
    Tree::node(children)
}

/// Uniform multiset of `k` trees of size `j`: exact unranking for small `j`,
/// otherwise the sequential scheme that repeats an already-drawn tree with
/// probability `(c_x + 1)/(T + i)` and draws a fresh distinct one otherwise.
fn sample_multiset(
    tables: &CountTables,
    j: usize,
    k: usize,
    rng: &mut dyn RngCore,
    force_sequential: bool,
) -> Vec<Tree> {
    if k == 1 {
        return vec![uniform_tree(tables, j, rng)];
    }
    if !force_sequential && j <= INDEX_SAMPLING_CAP && j <= tables.exact_n {
        let f = multiset_coeff(tables.t(j), k);
        let r = big_below(&f, rng);
        let idxs = multiset_unrank(&r, k, tables.t(j));
        return idxs.iter().map(|i| unrank_tree(tables, j, i)).collect();
    }
    let tf = tables.t_f64(j);
    let mut groups: Vec<(Tree, usize)> = Vec::new();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let d = groups.len();
        let p_seen = if tf.is_finite() {
            (i + d) as f64 / (tf + i as f64)
        } else {
            0.0
        };
        if i > 0 && rng.gen::<f64>() < p_seen {
            let mut u = rng.gen::<f64>() * (i + d) as f64;
            let mut pick = d - 1;
            for (gi, (_, c)) in groups.iter().enumerate() {
                let w = (c + 1) as f64;
                if u < w {
                    pick = gi;
                    break;
                }
                u -= w;
            }
            groups[pick].1 += 1;
            out.push(groups[pick].0.clone());
        } else {
            loop {
                let cand = uniform_tree(tables, j, rng);
                if groups.iter().all(|(t, _)| t != &cand) {
                    out.push(cand.clone());
                    groups.push((cand, 1));
                    break;
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Rank / unrank
// ---------------------------------------------------------------------------

/// Multisets of size `k` from `{0, …, v − 1}`: `C(v + k − 1, k)`.
fn multisets_from(v: &BigUint, k: usize) -> BigUint {
    if v.is_zero() {
        return if k == 0 { BigUint::one() } else { BigUint::zero() };
    }
    multiset_coeff(v, k)
}

/// Unrank `r` into a non-increasing sequence of `k` indices below `universe`,
/// ordered by increasing lexicographic value of the sequence.
fn multiset_unrank(r: &BigUint, k: usize, universe: &BigUint) -> Vec<BigUint> {
    let mut out = Vec::with_capacity(k);
    let mut r = r.clone();
    let mut bound = universe.clone(); // exclusive upper bound for next index
    for kk in (1..=k).rev() {
        // Largest v with C(v + kk − 1, kk) ≤ r: all-below-v sequences first.
        let mut lo = BigUint::zero();
        let mut hi = &bound - 1u32;
        while lo < hi {
            let mid = (&lo + &hi + 1u32) >> 1;
            if multisets_from(&mid, kk) <= r {
                lo = mid;
            } else {
                hi = &mid - 1u32;
            }
        }
        r -= multisets_from(&lo, kk);
        bound = &lo + 1u32;
        out.push(lo);
    }
    out
}

/// Inverse of [`multiset_unrank`]; `seq` must be non-increasing.
fn multiset_rank(seq: &[BigUint]) -> BigUint {
    let mut r = BigUint::zero();
    for (pos, v) in seq.iter().enumerate() {
        r += multisets_from(v, seq.len() - pos);
    }
    r
}

/// The tree of size `n` with rank `r ∈ [0, T_n)`. Ranks are split-major in
/// the partition enumeration order, then mixed-radix over size classes
/// (larger sizes more significant), with each class a multiset rank over
/// subtree ranks.
pub fn unrank_tree(tables: &CountTables, n: usize, r: &BigUint) -> Tree {
    assert!(n >= 1 && n <= tables.exact_n, "rank tables stop at n = {}", tables.exact_n);
    assert!(r < tables.t(n), "rank out of range");
    if n == 1 {
        return Tree::leaf();
    }
    let mut r = r.clone();
    let max_parts = tables.m.map(|mm| mm.min(n - 1));
    for lambda in enumerate_partitions(n - 1, max_parts) {
        let s = tables.shape_count_poly(n, &lambda);
        if r >= s {
            r -= s;
            continue;
        }
        // Peel digits least-significant first (ascending size class).
        let mults = lambda.multiplicities();
        let mut digits: BTreeMap<usize, BigUint> = BTreeMap::new();
        for (&j, &k) in mults.iter() {
            let w = multiset_coeff(tables.t(j), k);
            digits.insert(j, &r % &w);
            r /= &w;
        }
        assert!(r.is_zero());
        let mut children = Vec::new();
        for (&j, &k) in mults.iter() {
            let idxs = multiset_unrank(&digits[&j], k, tables.t(j));
            for idx in &idxs {
                children.push(unrank_tree(tables, j, idx));
            }
        }
        return Tree::node(children);
    }
    unreachable!("rank exhausted the partition list");
}

/// Rank of a tree in `[0, T_n)`; inverse of [`unrank_tree`].
pub fn rank_tree(tables: &CountTables, t: &Tree) -> BigUint {
    let n = t.size();
    assert!(n <= tables.exact_n, "rank tables stop at n = {}", tables.exact_n);
    if n == 1 {
        return BigUint::zero();
    }
    let lambda = t.root_split().expect("n ≥ 2 has a split");
    let max_parts = tables.m.map(|mm| mm.min(n - 1));
    let mut base = BigUint::zero();
    for prev in enumerate_partitions(n - 1, max_parts) {
        if prev == lambda {
            break;
        }
        base += tables.shape_count_poly(n, &prev);
    }
    // Subtree ranks per size class, sorted non-increasing for multiset rank.
    let mut classes: BTreeMap<usize, Vec<BigUint>> = BTreeMap::new();
    for c in t.children() {
        classes.entry(c.size()).or_default().push(rank_tree(tables, c));
    }
    let mut within = BigUint::zero();
    for (&j, ranks) in classes.iter().rev() {
        let mut ranks = ranks.clone();
        ranks.sort_unstable_by(|a, b| b.cmp(a));
        let w = multiset_coeff(tables.t(j), ranks.len());
        within = within * w + multiset_rank(&ranks);
    }
    base + within
}

// ---------------------------------------------------------------------------
// The induced split law
// ---------------------------------------------------------------------------

/// Vertex-model split law of uniform trees: `q_n(λ) = S_{n+1}(λ) / T_{n+1}`.
pub struct UniformSplitLaw {
    tables: Arc<CountTables>,
}

/// Wrap count tables as a [`SplitLaw`] (vertex model, `γ = 1/2`).
pub fn uniform_law(tables: Arc<CountTables>) -> UniformSplitLaw {
    UniformSplitLaw { tables }
}

impl UniformSplitLaw {
    pub fn tables(&self) -> &Arc<CountTables> {
        &self.tables
    }
}

impl SplitLaw for UniformSplitLaw {
    fn family(&self) -> String {
        self.tables.family_name()
    }

    fn gamma(&self) -> f64 {
        0.5
    }

    fn is_leaf_model(&self) -> bool {
        false
    }

    fn pmf(&self, n: usize, lambda: &IntPartition) -> f64 {
        assert_eq!(lambda.n(), n, "vertex model: λ partitions n");
        if n + 1 <= self.tables.exact_n {
            let s = self.tables.shape_count_poly(n + 1, lambda);
            return (ln_big(&s) - self.tables.log_t[n + 1]).exp();
        }
        if let Some(mm) = self.tables.m {
            if lambda.p() > mm {
                return 0.0;
            }
        }
        let mut ln_s = 0.0;
        for (&j, &k) in lambda.multiplicities().iter() {
            let lt = self.tables.log_t[j];
            for i in 0..k {
                ln_s += log_add(lt, (i as f64).ln()) - ((i + 1) as f64).ln();
            }
        }
        (ln_s - self.tables.log_t[n + 1]).exp()
    }

    fn pmf_rational(&self, n: usize, lambda: &IntPartition) -> Option<BigRational> {
        if n + 1 > self.tables.exact_n {
            return None;
        }
        let s = self.tables.shape_count_poly(n + 1, lambda);
        Some(BigRational::new(
            BigInt::from(s),
            BigInt::from(self.tables.t(n + 1).clone()),
        ))
    }

    fn support(&self, n: usize) -> Option<Vec<(IntPartition, f64)>> {
        if n > 40 || n + 1 > self.tables.exact_n {
            return None;
        }
        let max_parts = self.tables.m.map(|mm| mm.min(n));
        Some(
            enumerate_partitions(n, max_parts)
                .into_iter()
                .map(|lambda| {
                    let p = self.pmf(n, &lambda);
                    (lambda, p)
                })
                .filter(|(_, p)| *p > 0.0)
                .collect(),
        )
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> IntPartition {
        let classes = self.tables.sample_split(n + 1, rng);
        let mut parts = Vec::new();
        for (j, k) in classes {
            parts.extend(std::iter::repeat(j).take(k));
        }
        IntPartition::new(parts)
    }

    fn max_n(&self) -> Option<usize> {
        Some(self.tables.n_max - 1)
    }
}

// ---------------------------------------------------------------------------
// Coupling with the independent-subtree approximation
// ---------------------------------------------------------------------------

/// Result of the stepwise coupling: the input tree, a tree with exactly the
/// independent-subtree (Markov branching) law, and the largest subtree size
/// at which the two constructions had to part ways (0 = identical copies).
#[derive(Debug, Clone)]
pub struct CouplingOutcome {
    pub original: Tree,
    pub coupled: Tree,
    pub j_star: usize,
}

const COUPLING_REJECTION_BUDGET: usize = 10_000;
/// Below this collision probability the conditioned-duplicate draw switches
/// to the direct duplicate-one construction (relative bias O(1/T)).
const DUP_REJECTION_FLOOR: f64 = 1e-3;

/// `P(repeat | k iid) / P(repeat | uniform multiset)` for `k` subtrees of
/// size `j`: the probability with which a repeated class must keep a
/// repeat-conditioned draw so the coupled marginal is exactly iid.
fn keep_duplicate_probability(tables: &CountTables, j: usize, k: usize) -> f64 {
    let tf = tables.t_f64(j);
    if !tf.is_finite() {
        // Limit T → ∞ of the ratio; the branch is unreachable in practice
        // because collisions die out long before counts overflow f64.
        return 0.5;
    }
    if tf < k as f64 {
        return 1.0; // fewer shapes than draws: every draw repeats
    }
    // 1 − ∏(1 − i/T) and 1 − ∏(T − i)/(T + i), cancellation-free.
    let mut ln_fall_over_pow = 0.0;
    let mut ln_fall_over_rise = 0.0;
    for i in 1..k {
        ln_fall_over_pow += (-(i as f64) / tf).ln_1p();
        ln_fall_over_rise += (-(i as f64) / tf).ln_1p() - (i as f64 / tf).ln_1p();
    }
    let num = -ln_fall_over_pow.exp_m1();
    let den = -ln_fall_over_rise.exp_m1();
    (num / den).clamp(0.0, 1.0)
}

/// iid probability that `k` uniform trees of size `j` contain a repeat.
fn iid_duplicate_probability(tables: &CountTables, j: usize, k: usize) -> f64 {
    let tf = tables.t_f64(j);
    if !tf.is_finite() {
        return 0.0;
    }
    if tf < k as f64 {
        return 1.0;
    }
    let mut ln_fall_over_pow = 0.0;
    for i in 1..k {
        ln_fall_over_pow += (-(i as f64) / tf).ln_1p();
    }
    -ln_fall_over_pow.exp_m1()
}

fn draw_iid_distinct(tables: &CountTables, j: usize, k: usize, rng: &mut dyn RngCore) -> Vec<Tree> {
    for _ in 0..COUPLING_REJECTION_BUDGET {
        let draws: Vec<Tree> = (0..k).map(|_| uniform_tree(tables, j, rng)).collect();
        let mut sorted = draws.clone();
        sorted.sort_unstable();
        if sorted.windows(2).all(|w| w[0] != w[1]) {
            return draws;
        }
    }
    panic!("distinct-subtree rejection budget exceeded at size {j}");
}

fn draw_iid_with_duplicate(
    tables: &CountTables,
    j: usize,
    k: usize,
    rng: &mut dyn RngCore,
) -> Vec<Tree> {
    if iid_duplicate_probability(tables, j, k) >= DUP_REJECTION_FLOOR {
        for _ in 0..COUPLING_REJECTION_BUDGET {
            let draws: Vec<Tree> = (0..k).map(|_| uniform_tree(tables, j, rng)).collect();
            let mut sorted = draws.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return draws;
            }
        }
    }
    // Collisions this rare are dominated by a single coincident pair: draw
    // k − 1 trees and duplicate a uniformly chosen one.
    let mut draws: Vec<Tree> = (0..k - 1).map(|_| uniform_tree(tables, j, rng)).collect();
    let dup = rng.gen_range(0..draws.len());
    let copy = draws[dup].clone();
    draws.push(copy);
    draws
}

fn couple_node(
    tables: &CountTables,
    t: &Tree,
    rng: &mut dyn RngCore,
    j_star: &mut usize,
) -> Tree {
    if t.is_leaf() {
        return Tree::leaf();
    }
    let mut classes: BTreeMap<usize, Vec<&Tree>> = BTreeMap::new();
    for c in t.children() {
        classes.entry(c.size()).or_default().push(c);
    }
    let mut new_children = Vec::with_capacity(t.children().len());
    for (&j, group) in classes.iter().rev() {
        let k = group.len();
        // Children are stored in canonical order, so equal subtrees within
        // a size class sit next to each other.
        let has_dup = group.windows(2).any(|w| w[0] == w[1]);
        let replaced: Vec<Tree> = if k >= 2 && has_dup {
            *j_star = (*j_star).max(j);
            if rng.gen::<f64>() < keep_duplicate_probability(tables, j, k) {
                draw_iid_with_duplicate(tables, j, k, rng)
            } else {
                draw_iid_distinct(tables, j, k, rng)
            }
        } else {
            group.iter().map(|c| (*c).clone()).collect()
        };
        for c in &replaced {
            new_children.push(couple_node(tables, c, rng, j_star));
        }
    }
    Tree::node(new_children)
}

/// Couple a uniform tree with the independent-subtree approximation.
///
/// Top-down, each size class of subtrees is kept verbatim when its members
/// are pairwise distinct (there the uniform-multiset and iid conditional laws
/// agree) and re-randomized through an exactly balanced Bernoulli otherwise;
/// the kernel then recurses into every resulting subtree. When `original` is
/// uniform, `coupled` has exactly the law of the Markov branching tree driven
/// by [`uniform_law`], and the two trees agree outside subtrees of size
/// ≤ `j_star`.
pub fn natural_coupling(
    tables: &CountTables,
    original: &Tree,
    rng: &mut dyn RngCore,
) -> CouplingOutcome {
    let mut j_star = 0usize;
    let coupled = couple_node(tables, original, rng, &mut j_star);
    CouplingOutcome {
        original: original.clone(),
        coupled,
        j_star,
    }
}

/// Uniformly random subtree (the fringe subtree at a uniform vertex).
pub fn random_subtree(t: &Tree, rng: &mut dyn RngCore) -> Tree {
    fn collect<'a>(t: &'a Tree, out: &mut Vec<&'a Tree>) {
        out.push(t);
        for c in t.children() {
            collect(c, out);
        }
    }
    let mut all = Vec::with_capacity(t.size());
    collect(t, &mut all);
    all[rng.gen_range(0..all.len())].clone()
}

// ---------------------------------------------------------------------------
// Scaling constants
// ---------------------------------------------------------------------------

/// Estimated growth constants of the count sequence `T_n ~ κ ρⁿ n^{−3/2}`
/// and the derived scaling constant `c_m = √2 / (√π κ ψ)` with
/// `ψ = Σ T̃_n ρ^{−n}`.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingConstants {
    pub family: String,
    pub n_used: usize,
    /// Raw tail ratio `T_{n+1}/T_n` before extrapolation.
    pub rho_raw: f64,
    /// Prefactor-corrected, Richardson-extrapolated growth rate.
    pub rho: f64,
    pub kappa: f64,
    /// Partial sum of `ψ` over the table range.
    pub psi_partial: f64,
    /// Bound on the dropped tail of `ψ` (0 when the series terminates).
    pub psi_tail_bound: f64,
    pub c_m: f64,
}

/// Estimate `ρ, κ, ψ, c_m` from the top of the count tables.
pub fn scaling_constants(tables: &CountTables) -> ScalingConstants {
    let n = tables.n_max;
    assert!(n >= 20, "constants need a reasonably deep table");
    let ratio = |i: usize| (tables.log_t[i + 1] - tables.log_t[i]).exp();
    // T_i ~ κ ρ^i i^{−3/2} (1 + O(1/i)), so the prefactor-corrected ratio
    // r_i ((i+1)/i)^{3/2} is ρ + O(1/i²); one Richardson step in 1/i²
    // leaves O(1/i³).
    let corrected = |i: usize| ratio(i) * ((i as f64 + 1.0) / i as f64).powf(1.5);
    let (i0, i1) = ((n - 2) as f64, (n - 1) as f64);
    let (s0, s1) = (corrected(n - 2), corrected(n - 1));
    let rho = (i1 * i1 * s1 - i0 * i0 * s0) / (i1 * i1 - i0 * i0);
    let ln_rho = rho.ln();
    let kappa = (tables.log_t[n] + 1.5 * (n as f64).ln() - n as f64 * ln_rho).exp();
    let mut psi_partial = 0.0;
    for i in 1..=n {
        let lt = if i <= tables.exact_n {
            ln_big(&tables.t_tilde_exact[i])
        } else {
            match tables.m {
                None => tables.log_t[i],
                Some(2) => f64::NEG_INFINITY, // T̃ vanishes past n = 1
                Some(_) => unreachable!(),
            }
        };
        psi_partial += (lt - i as f64 * ln_rho).exp();
    }
    let psi_tail_bound = match tables.m {
        // Σ_{i>n} T̃ ρ^{−i} ≲ κ Σ i^{−3/2} ≤ κ · 2/√n, padded 5%.
        Some(2) => 0.0,
        _ => kappa * 2.0 / (n as f64).sqrt() * 1.05,
    };
    let c_m = 2f64.sqrt() / (PI.sqrt() * kappa * psi_partial);
    ScalingConstants {
        family: tables.family_name(),
        n_used: n,
        rho_raw: ratio(n - 1),
        rho,
        kappa,
        psi_partial,
        psi_tail_bound,
        c_m,
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::{chi_square_gof, tv_distance};
    use crate::trees::{enumerate_trees, MaxDegree};
    use num::FromPrimitive;
    use std::collections::BTreeSet;

    fn big(x: u64) -> BigUint {
        BigUint::from_u64(x).unwrap()
    }

    #[test]
    fn otter_tables_match_enumeration() {
        for (m, max_deg) in [
            (None, MaxDegree::Unbounded),
            (Some(2), MaxDegree::Bounded(2)),
            (Some(3), MaxDegree::Bounded(3)),
        ] {
            let tables = otter_counts(m, 9);
            for n in 1..=9 {
                let by_enum = enumerate_trees(n, max_deg).len();
                assert_eq!(
                    tables.t(n),
                    &big(by_enum as u64),
                    "m={m:?} n={n}: table vs enumeration"
                );
            }
        }
        let t_inf = otter_counts(None, 8);
        for n in 1..=8 {
            assert_eq!(t_inf.t_tilde(n), t_inf.t(n), "unbounded: T̃ = T");
        }
        let t2 = otter_counts(Some(2), 8);
        assert_eq!(t2.t_tilde(1), &big(1));
        for n in 2..=8 {
            assert!(t2.t_tilde(n).is_zero(), "binary: no root with 0 children at n={n}");
        }
        let t3 = otter_counts(Some(3), 8);
        for n in 2..=8 {
            // Root with ≤ 1 child: one subtree carrying everything.
            assert_eq!(t3.t_tilde(n), t3.t(n - 1), "m=3 reduced count at n={n}");
        }
    }

    #[test]
    fn shape_counts_sum_to_totals() {
        for m in [None, Some(2), Some(3)] {
            let tables = otter_counts(m, 12);
            for n in 2..=12 {
                let sum: BigUint = enumerate_partitions(n - 1, None)
                    .iter()
                    .map(|lambda| tables.shape_count_poly(n, lambda))
                    .sum();
                assert_eq!(&sum, tables.t(n), "m={m:?} n={n}");
            }
        }
    }

    #[test]
    fn shape_count_examples() {
        let tables = otter_counts(None, 10);
        // Two subtrees of size 3 from T₃ = 2 shapes: C(2+1, 2) = 3 multisets.
        assert_eq!(tables.shape_count_poly(7, &IntPartition::new(vec![3, 3])), big(3));
        // A single subtree carries the full count below.
        assert_eq!(&tables.shape_count_poly(7, &IntPartition::new(vec![6])), tables.t(6));

        // Strict variant drops splits that exhaust the degree budget.
        let t2 = otter_counts(Some(2), 6);
        let lam = IntPartition::new(vec![2, 1]);
        assert_eq!(t2.shape_count_poly(4, &lam), big(1));
        assert!(t2.shape_count_poly_strict(4, &lam).is_zero());
        let strict_sum: BigUint = enumerate_partitions(3, None)
            .iter()
            .map(|l| t2.shape_count_poly_strict(4, l))
            .sum();
        assert!(&strict_sum < t2.t(4), "strict counts no longer complete T_n");
    }

    #[test]
    fn crude_bound_on_shape_counts() {
        let tables = otter_counts(None, 14);
        for n in 3..=14 {
            for lambda in enumerate_partitions(n - 1, None) {
                if lambda.p() < 2 {
                    continue;
                }
                let s = tables.shape_count_poly(n, &lambda);
                let l1 = lambda.parts()[0];
                let rest = IntPartition::new(lambda.parts()[1..].to_vec());
                let bound = tables.t(l1) * tables.shape_count_poly(n - l1, &rest);
                assert!(s <= bound, "n={n} λ={:?}", lambda.parts());
            }
        }
    }

    #[test]
    fn uniform_pmf_and_support() {
        let law = uniform_law(Arc::new(otter_counts(None, 14)));
        // q₆((6)) = T₆ / T₇ = 20/48.
        let q = law
            .pmf_rational(6, &IntPartition::new(vec![6]))
            .unwrap();
        assert_eq!(q, BigRational::new(BigInt::from(20), BigInt::from(48)));
        for n in 1..=12 {
            let total: BigRational = enumerate_partitions(n, None)
                .iter()
                .filter_map(|l| law.pmf_rational(n, l))
                .sum();
            assert!(total.is_integer() && total == BigRational::from(BigInt::from(1)));
            if let Some(support) = law.support(n) {
                let s: f64 = support.iter().map(|(_, p)| p).sum();
                assert!((s - 1.0).abs() < 1e-12, "n={n}: support sums to {s}");
            }
        }
    }

    #[test]
    fn rank_unrank_roundtrip() {
        for (m, max_deg) in [(None, MaxDegree::Unbounded), (Some(2), MaxDegree::Bounded(2))] {
            let tables = otter_counts(m, 8);
            for n in 1..=8 {
                let total = tables.t(n).to_u64().unwrap();
                let mut seen = BTreeSet::new();
                for r in 0..total {
                    let t = unrank_tree(&tables, n, &big(r));
                    assert_eq!(t.size(), n);
                    assert_eq!(rank_tree(&tables, &t), big(r), "m={m:?} n={n} r={r}");
                    seen.insert(t);
                }
                let by_enum: BTreeSet<Tree> = enumerate_trees(n, max_deg).into_iter().collect();
                assert_eq!(seen, by_enum, "m={m:?} n={n}: rank range covers all trees");
            }
        }
        // Split-major order at n = 3: the path (split (2)) precedes the
        // cherry (split (1,1)).
        let tables = otter_counts(None, 4);
        let path = Tree::node(vec![Tree::node(vec![Tree::leaf()])]);
        let cherry = Tree::node(vec![Tree::leaf(), Tree::leaf()]);
        assert_eq!(unrank_tree(&tables, 3, &big(0)), path);
        assert_eq!(unrank_tree(&tables, 3, &big(1)), cherry);
    }

    #[test]
    fn uniform_tree_is_uniform_over_shapes() {
        let tables = otter_counts(None, 12);
        let all: Vec<Tree> = enumerate_trees(7, MaxDegree::Unbounded);
        assert_eq!(all.len(), 48);
        let index: BTreeMap<&Tree, usize> =
            all.iter().enumerate().map(|(i, t)| (t, i)).collect();
        let mut rng = stream(20260826, 1);
        let mut counts = vec![0u64; all.len()];
        for _ in 0..96_000 {
            let t = uniform_tree(&tables, 7, &mut rng);
            counts[index[&t]] += 1;
        }
        let expected = vec![1.0 / all.len() as f64; all.len()];
        let res = chi_square_gof(&counts, &expected);
        assert!(res.p_value > 1e-6, "chi2={} p={}", res.statistic, res.p_value);
    }

    #[test]
    fn sequential_multiset_sampler_is_uniform() {
        // j = 3 has two shapes (path, cherry); multisets of two trees from
        // them come in C(2+1, 2) = 3 kinds, each with probability 1/3.
        let tables = otter_counts(None, 6);
        let mut rng = stream(20260826, 2);
        let mut counts = [0u64; 3];
        for _ in 0..30_000 {
            let pair = sample_multiset(&tables, 3, 2, &mut rng, true);
            let heights: BTreeSet<usize> = pair.iter().map(Tree::height).collect();
            let both_paths = pair.iter().all(|t| t.height() == 2);
            let both_cherries = pair.iter().all(|t| t.height() == 1);
            let idx = if both_paths {
                0
            } else if both_cherries {
                1
            } else {
                assert_eq!(heights.len(), 2);
                2
            };
            counts[idx] += 1;
        }
        let third = 1.0 / 3.0;
        let res = chi_square_gof(&counts, &[third, third, third]);
        assert!(res.p_value > 1e-6, "chi2={} p={}", res.statistic, res.p_value);
    }

    #[test]
    fn log_space_split_walk_matches_counts() {
        // Unbounded family, past the exact range: the probability of a
        // single giant subtree is T_{n−1} / T_n.
        let tables = otter_counts(None, 520);
        let n = 500usize;
        let p_single = (tables.log_t(n - 1) - tables.log_t(n)).exp();
        let mut rng = stream(20260826, 3);
        let reps = 4000usize;
        let mut hits = 0usize;
        for _ in 0..reps {
            let split = tables.sample_split(n, &mut rng);
            let total: usize = split.iter().map(|(j, k)| j * k).sum();
            assert_eq!(total, n - 1);
            if split == vec![(n - 1, 1)] {
                hits += 1;
            }
        }
        let freq = hits as f64 / reps as f64;
        let sigma = (p_single * (1.0 - p_single) / reps as f64).sqrt();
        assert!(
            (freq - p_single).abs() < 4.0 * sigma + 1e-3,
            "freq={freq} expected={p_single}"
        );
    }

    #[test]
    fn binary_pair_walk_matches_counts() {
        let tables = otter_counts(Some(2), 1200);
        let n = 1000usize;
        let p_single = (tables.log_t(n - 1) - tables.log_t(n)).exp();
        let mut rng = stream(20260826, 4);
        let reps = 4000usize;
        let mut hits = 0usize;
        for _ in 0..reps {
            let split = tables.sample_split(n, &mut rng);
            let total: usize = split.iter().map(|(j, k)| j * k).sum();
            assert_eq!(total, n - 1);
            let count: usize = split.iter().map(|(_, k)| k).sum();
            assert!(count <= 2);
            if split == vec![(n - 1, 1)] {
                hits += 1;
            }
        }
        let freq = hits as f64 / reps as f64;
        let sigma = (p_single * (1.0 - p_single) / reps as f64).sqrt();
        assert!(
            (freq - p_single).abs() < 4.0 * sigma + 1e-3,
            "freq={freq} expected={p_single}"
        );
    }

    #[test]
    fn coupling_identity_and_discrepancy_scale() {
        let tables = otter_counts(None, 12);
        let mut rng = stream(20260826, 5);
        // A path has no repeated siblings anywhere: the coupling is the
        // identity.
        let mut path = Tree::leaf();
        for _ in 0..6 {
            path = Tree::node(vec![path]);
        }
        let out = natural_coupling(&tables, &path, &mut rng);
        assert_eq!(out.coupled, path);
        assert_eq!(out.j_star, 0);

        // Two identical cherries force a re-draw at subtree size 3.
        let cherry = Tree::node(vec![Tree::leaf(), Tree::leaf()]);
        let twin = Tree::node(vec![cherry.clone(), cherry.clone()]);
        let out = natural_coupling(&tables, &twin, &mut rng);
        assert_eq!(out.j_star, 3);
        assert_eq!(out.coupled.size(), twin.size());

        // Two leaves below one node: T₁ = 1 < 2 shapes, so the coupled draw
        // necessarily repeats and reproduces the same tree, with j* = 1.
        let cherry_out = natural_coupling(&tables, &cherry, &mut rng);
        assert_eq!(cherry_out.coupled, cherry);
        assert_eq!(cherry_out.j_star, 1);
    }

    /// Markov branching tree driven by the uniform split law: split at the
    /// root, then fully independent subtrees.
    fn independent_tree(law: &UniformSplitLaw, n: usize, rng: &mut dyn RngCore) -> Tree {
        if n == 1 {
            return Tree::leaf();
        }
        let lambda = law.sample(n - 1, rng);
        let children = lambda
            .parts()
            .iter()
            .map(|&j| independent_tree(law, j, rng))
            .collect();
        Tree::node(children)
    }

    #[test]
    fn coupled_marginal_matches_independent_model() {
        let tables = Arc::new(otter_counts(None, 10));
        let law = uniform_law(tables.clone());
        let mut rng = stream(20260826, 6);
        let reps = 40_000usize;
        let mut emp_coupled: BTreeMap<Tree, f64> = BTreeMap::new();
        let mut emp_indep: BTreeMap<Tree, f64> = BTreeMap::new();
        let w = 1.0 / reps as f64;
        for _ in 0..reps {
            let original = uniform_tree(&tables, 5, &mut rng);
            let out = natural_coupling(&tables, &original, &mut rng);
            *emp_coupled.entry(out.coupled).or_insert(0.0) += w;
            let indep = independent_tree(&law, 5, &mut rng);
            *emp_indep.entry(indep).or_insert(0.0) += w;
        }
        for m in [&mut emp_coupled, &mut emp_indep] {
            let s: f64 = m.values().sum();
            for v in m.values_mut() {
                *v /= s;
            }
        }
        let tv = tv_distance(&emp_coupled, &emp_indep);
        assert!(tv < 0.03, "tv={tv}");
    }

    #[test]
    fn random_subtree_size_distribution() {
        // Uniform tree of size 3 is the path or the cherry with equal
        // probability; a uniform vertex then sees subtree sizes 1, 2, 3
        // with probabilities 1/2, 1/6, 1/3.
        let tables = otter_counts(None, 6);
        let mut rng = stream(20260826, 7);
        let mut counts = [0u64; 3];
        for _ in 0..30_000 {
            let t = uniform_tree(&tables, 3, &mut rng);
            let sub = random_subtree(&t, &mut rng);
            counts[sub.size() - 1] += 1;
        }
        let res = chi_square_gof(&counts, &[0.5, 1.0 / 6.0, 1.0 / 3.0]);
        assert!(res.p_value > 1e-6, "chi2={} p={}", res.statistic, res.p_value);
    }

    #[test]
    fn constants_binary_closed_form() {
        // For the binary family ψ = ρ⁻¹ exactly (only n = 1 contributes), so
        // c₂ = √2 ρ / (√π κ) must agree with the generic route.
        let tables = otter_counts(Some(2), 1200);
        let c = scaling_constants(&tables);
        let closed = 2f64.sqrt() * c.rho / (PI.sqrt() * c.kappa);
        assert!((c.c_m - closed).abs() / closed < 1e-9);
        assert_eq!(c.psi_tail_bound, 0.0);
        assert!(c.rho > 1.0 && c.kappa > 0.0);
    }

    #[test]
    fn constants_stabilize_with_depth() {
        let shallow = scaling_constants(&otter_counts(None, 150));
        let deep = scaling_constants(&otter_counts(None, 250));
        assert!((shallow.rho - deep.rho).abs() < 1e-3, "{} vs {}", shallow.rho, deep.rho);
        // Unbounded trees satisfy Σ T_n ρ^{−n} = 1 (the singularity
        // condition), so the partial sum must land within the tail bound.
        assert!(
            (1.0 - deep.psi_partial).abs() <= deep.psi_tail_bound + 1e-3,
            "psi={} tail={}",
            deep.psi_partial,
            deep.psi_tail_bound
        );
        assert!(deep.psi_tail_bound > 0.0);
        assert!(deep.c_m > 0.0);
    }

    #[test]
    fn tables_serialize_exact_counts() {
        let tables = otter_counts(Some(2), 8);
        let v = tables.to_json();
        assert_eq!(v["m"], "2");
        assert_eq!(v["t"][7], "23");
        assert_eq!(v["t"][8], "46");
    }
}
