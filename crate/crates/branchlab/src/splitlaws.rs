//! Split-law families `q = (q_n)_{n ≥ 1}` driving Markov branching
//! dynamics, and the hypothesis-(H) scaling probe.
//!
//! A split law assigns to each `n` a probability measure `q_n` on the
//! partitions `P_n`. Leaf-model laws must satisfy `q_n((n)) < 1`; vertex
//! models are used through the root-split recursion. The scaling
//! descriptor `(γ, ℓ)` fixes the probe normalization `a_n = n^γ ℓ(n)`.

use crate::fragmentation::{DislocationMeasure, MassPartition, RestrictedSampler};
use crate::partitions::{enumerate_partitions, IntPartition};
use num::rational::BigRational;
use num::{BigInt, One, Zero};
use rand::{Rng, RngCore};
use serde_json::Value;
use statrs::function::gamma::ln_gamma;
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

/// `λ/n` as a mass partition.
pub fn mass_of(lambda: &IntPartition, n: usize) -> MassPartition {
    MassPartition::new(
        lambda
            .parts()
            .iter()
            .map(|&p| p as f64 / n as f64)
            .collect(),
    )
}

/// Trials until first success (inclusive), success probability `p ∈ (0,1]`.
fn geometric_count(p: f64, rng: &mut dyn RngCore) -> u64 {
    assert!(p > 0.0 && p <= 1.0);
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    1 + (u.ln() / (1.0 - p).ln()).floor().max(0.0) as u64
}

/// A splitting-law family.
pub trait SplitLaw: Send + Sync {
    /// Family identifier for reports.
    fn family(&self) -> String;

    /// Scaling exponent γ of `a_n = n^γ ℓ(n)`.
    fn gamma(&self) -> f64;

    /// Slowly varying factor; defaults to `ℓ ≡ 1`.
    fn ell(&self, _n: usize) -> f64 {
        1.0
    }

    fn a_n(&self, n: usize) -> f64 {
        (n as f64).powf(self.gamma()) * self.ell(n)
    }

    /// Leaf models use `q₁(∅)`; vertex models require `q₁((1)) = 1`.
    fn is_leaf_model(&self) -> bool;

    /// `q₁(∅)`, only meaningful for leaf models.
    fn q1_empty(&self) -> f64 {
        if self.is_leaf_model() {
            1.0
        } else {
            0.0
        }
    }

    /// Whether exact pmf evaluation is available.
    fn has_pmf(&self) -> bool {
        true
    }

    /// `q_n(λ)`. Panics when the family has no exact pmf.
    fn pmf(&self, n: usize, lambda: &IntPartition) -> f64;

    /// Exact rational pmf where the family supports it.
    fn pmf_rational(&self, _n: usize, _lambda: &IntPartition) -> Option<BigRational> {
        None
    }

    /// Full support of `q_n` with probabilities, when enumerable.
    fn support(&self, n: usize) -> Option<Vec<(IntPartition, f64)>>;

    /// One draw from `q_n`.
    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> IntPartition;

    /// `(H, λ)`: the number of chain steps a block of size `n` survives
    /// whole (≥ 1, the splitting step included) and the proper split it
    /// ends with. Default: closed-form geometric via `q_n((n))` when a pmf
    /// exists, otherwise a counting rejection loop.
    fn sample_hold_split(&self, n: usize, rng: &mut dyn RngCore) -> (u64, IntPartition) {
        let whole = IntPartition::new(vec![n]);
        if self.has_pmf() {
            let q_top = self.pmf(n, &whole);
            assert!(q_top < 1.0, "q_{n}(({n})) = 1: no proper split exists");
            let hold = geometric_count(1.0 - q_top, rng);
            loop {
                let lambda = self.sample(n, rng);
                if lambda != whole {
                    return (hold, lambda);
                }
            }
        } else {
            let mut hold = 0u64;
            loop {
                hold += 1;
                let lambda = self.sample(n, rng);
                if lambda != whole {
                    return (hold, lambda);
                }
            }
        }
    }

    /// Largest usable `n`, if the family is table-bounded.
    fn max_n(&self) -> Option<usize> {
        None
    }
}

// ---------------------------------------------------------------------------
// Tabulated laws
// ---------------------------------------------------------------------------

/// Alias table for O(1) categorical sampling (Vose's method).
struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    fn new(weights: &[f64]) -> AliasTable {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut small: Vec<usize> = (0..n).filter(|&i| scaled[i] < 1.0).collect();
        let mut large: Vec<usize> = (0..n).filter(|&i| scaled[i] >= 1.0).collect();
        let mut prob = vec![1.0; n];
        let mut alias = vec![0usize; n];
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        for &i in small.iter().chain(large.iter()) {
            prob[i] = 1.0;
            alias[i] = i;
        }
        AliasTable { prob, alias }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> usize {
        let i = rng.gen_range(0..self.prob.len());
        if rng.gen::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// A law given by explicit per-`n` tables.
pub struct TabulatedLaw {
    name: String,
    gamma: f64,
    leaf: bool,
    entries: BTreeMap<usize, Vec<(IntPartition, f64)>>,
    alias: BTreeMap<usize, AliasTable>,
}

/// Builds a tabulated law. Each per-`n` list must sum to 1 within 1e-12;
/// under the leaf flag, `q_n((n))` must stay below 1.
pub fn tabulated_law(
    name: &str,
    entries: BTreeMap<usize, Vec<(IntPartition, f64)>>,
    leaf: bool,
    gamma: f64,
) -> TabulatedLaw {
    let mut alias = BTreeMap::new();
    for (&n, list) in &entries {
        let total: f64 = list.iter().map(|(_, p)| p).sum();
        assert!(
            (total - 1.0).abs() <= 1e-12,
            "q_{n} sums to {total}, must be 1"
        );
        for (lambda, p) in list {
            assert!(*p >= 0.0);
            assert_eq!(lambda.n(), n, "partition {lambda:?} not in P_{n}");
            if leaf && lambda.parts() == [n] {
                assert!(*p < 1.0, "leaf model requires q_{n}(({n})) < 1");
            }
        }
        let weights: Vec<f64> = list.iter().map(|(_, p)| *p).collect();
        alias.insert(n, AliasTable::new(&weights));
    }
    TabulatedLaw {
        name: name.to_string(),
        gamma,
        leaf,
        entries,
        alias,
    }
}

/// Loads `{"gamma": γ, "leaf": bool, "table": [{"n": k, "entries":
/// [{"parts": [..], "p": ..}]}]}` (or a bare `table` array with defaults
/// `γ = 1`, `leaf = true`).
pub fn tabulated_from_json(v: &Value) -> Result<TabulatedLaw, String> {
    let (gamma, leaf, table) = match v {
        Value::Array(_) => (1.0, true, v),
        Value::Object(map) => (
            map.get("gamma").and_then(Value::as_f64).unwrap_or(1.0),
            map.get("leaf").and_then(Value::as_bool).unwrap_or(true),
            map.get("table").ok_or("missing key: table")?,
        ),
        _ => return Err("missing key: table".into()),
    };
    let mut entries = BTreeMap::new();
    for block in table.as_array().ok_or("missing key: table")? {
        let n = block
            .get("n")
            .and_then(Value::as_u64)
            .ok_or("missing key: n")? as usize;
        let mut list = Vec::new();
        for e in block
            .get("entries")
            .and_then(Value::as_array)
            .ok_or("missing key: entries")?
        {
            let parts: Vec<usize> = e
                .get("parts")
                .and_then(Value::as_array)
                .ok_or("missing key: parts")?
                .iter()
                .map(|x| x.as_u64().map(|u| u as usize).ok_or("missing key: parts"))
                .collect::<Result<_, _>>()?;
            let p = e.get("p").and_then(Value::as_f64).ok_or("missing key: p")?;
            list.push((IntPartition::new(parts), p));
        }
        entries.insert(n, list);
    }
    // Validation panics become errors for the CLI path.
    std::panic::catch_unwind(|| tabulated_law("tabulated", entries, leaf, gamma))
        .map_err(|_| "invalid table: rows must sum to 1 and respect the leaf flag".into())
}

impl SplitLaw for TabulatedLaw {
    fn family(&self) -> String {
        self.name.clone()
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn is_leaf_model(&self) -> bool {
        self.leaf
    }

    fn pmf(&self, n: usize, lambda: &IntPartition) -> f64 {
        let list = self
            .entries
            .get(&n)
            .unwrap_or_else(|| panic!("no table for n = {n}"));
        list.iter()
            .find(|(l, _)| l == lambda)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }

    fn support(&self, n: usize) -> Option<Vec<(IntPartition, f64)>> {
        self.entries.get(&n).cloned()
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> IntPartition {
        let idx = self.alias[&n].sample(rng);
        self.entries[&n][idx].0.clone()
    }

    fn max_n(&self) -> Option<usize> {
        self.entries.keys().max().copied()
    }
}

// ---------------------------------------------------------------------------
// Offspring laws and the conditioned Galton–Watson split law
// ---------------------------------------------------------------------------

/// A critical offspring distribution `ξ` with `ξ(0) > 0`.
#[derive(Clone, Debug)]
pub struct OffspringLaw {
    name: String,
    pmf: Vec<f64>,
    rational: Option<Vec<BigRational>>,
    /// `σ² = Σ p(p−1)ξ(p)` when finite.
    pub sigma2: Option<f64>,
    /// Tail exponent for heavy-tailed families.
    pub tail_alpha: Option<f64>,
}

impl OffspringLaw {
    pub fn new(
        name: &str,
        pmf: Vec<f64>,
        rational: Option<Vec<BigRational>>,
        tail_alpha: Option<f64>,
    ) -> OffspringLaw {
        assert!(pmf[0] > 0.0, "ξ(0) must be positive");
        assert!(pmf.iter().all(|&x| x >= 0.0));
        let (mut sum, mut mean, mut comp_s, mut comp_m) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for (k, &p) in pmf.iter().enumerate() {
            kahan(&mut sum, &mut comp_s, p);
            kahan(&mut mean, &mut comp_m, k as f64 * p);
        }
        assert!((sum - 1.0).abs() <= 1e-12, "ξ sums to {sum}");
        assert!((mean - 1.0).abs() <= 1e-12, "criticality: mean is {mean}");
        let sigma2 = if tail_alpha.is_none() {
            Some(
                pmf.iter()
                    .enumerate()
                    .map(|(k, &p)| (k * k.saturating_sub(1)) as f64 * p)
                    .sum(),
            )
        } else {
            None
        };
        OffspringLaw {
            name: name.to_string(),
            pmf,
            rational,
            sigma2,
            tail_alpha,
        }
    }

    /// `ξ(0) = ξ(2) = 1/2` (σ² = 1), with exact rational weights.
    pub fn binary() -> OffspringLaw {
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        OffspringLaw::new(
            "binary",
            vec![0.5, 0.0, 0.5],
            Some(vec![half.clone(), BigRational::zero(), half]),
            None,
        )
    }

    /// Poisson(1), truncated where the tail drops below 1e-18 and
    /// renormalized (criticality defect ~1e-19).
    pub fn poisson() -> OffspringLaw {
        let mut pmf = Vec::new();
        let mut term = (-1.0f64).exp();
        for k in 0..64 {
            pmf.push(term);
            term /= (k + 1) as f64;
            if term < 1e-18 && k > 2 {
                break;
            }
        }
        // Rescale the k ≥ 1 terms so the mean is exactly 1, then put the
        // leftover mass at 0 so the sum is exactly 1.
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        for p in pmf.iter_mut().skip(1) {
            *p /= mean;
        }
        let tail: f64 = pmf.iter().skip(1).sum();
        pmf[0] = 1.0 - tail;
        OffspringLaw::new("poisson", pmf, None, None)
    }

    /// Heavy tail `ξ(k) = c·k^{−α−1}` for `k ≥ 2` up to `10⁶`, with
    /// `ξ(0), ξ(1)` adjusted so the mean is exactly 1.
    pub fn heavy_tail(alpha: f64, c: f64) -> OffspringLaw {
        assert!(alpha > 1.0 && alpha < 2.0);
        const K_CUT: usize = 1_000_000;
        let mut pmf = vec![0.0; K_CUT + 1];
        let (mut s0, mut s1) = (0.0f64, 0.0f64);
        for k in (2..=K_CUT).rev() {
            let raw = c * (k as f64).powf(-alpha - 1.0);
            pmf[k] = raw;
            s0 += raw;
            s1 += k as f64 * raw;
        }
        assert!(s1 < 1.0, "c too large: tail mean {s1} ≥ 1");
        pmf[1] = 1.0 - s1;
        pmf[0] = s1 - s0;
        assert!(pmf[0] > 0.0, "c too large: ξ(0) would be ≤ 0");
        OffspringLaw::new("heavy", pmf, None, Some(alpha))
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn max_support(&self) -> usize {
        self.pmf
            .iter()
            .rposition(|&p| p > 0.0)
            .expect("nonzero pmf")
    }
}

fn kahan(sum: &mut f64, comp: &mut f64, x: f64) {
    let y = x - *comp;
    let t = *sum + y;
    *comp = (t - *sum) - y;
    *sum = t;
}

/// Exact rational walk/hitting tables for offspring laws with rational
/// weights (small `n` only).
struct GwRational {
    n_max: usize,
    xi: Vec<BigRational>,
    /// `w[k] = GW(#t = k)`.
    w: Vec<BigRational>,
}

/// The split law of Galton–Watson trees conditioned on their size:
/// `q_n(λ) = (p!/∏ m_j!) ξ(p) ∏ GW(#t=λ_i) / GW(#t=n+1)`.
pub struct GwLaw {
    xi: OffspringLaw,
    n_max: usize,
    p_cut: usize,
    /// `w[k] = GW(#t = k) = P(S_k = −1)/k`, `k ≤ n_max + 1`.
    w: Vec<f64>,
    /// `s_neg[p][k] = P(S_k = −p)` for `1 ≤ p ≤ p_cut`.
    s_neg: Vec<Vec<f64>>,
    /// `tau[p][k] = P(τ_p = k)` for `1 ≤ p ≤ p_cut`, `k ≤ n_max + 1`.
    tau: Vec<Vec<f64>>,
    rational: Option<GwRational>,
}

/// Builds the Galton–Watson split law with tables up to size `n_max`.
/// The walk pmf `P(S_k = ·)` is computed by exact convolution dynamic
/// programming (upper/lower tails below 1e-20 per step are dropped).
pub fn gw_law(xi: OffspringLaw, n_max: usize) -> GwLaw {
    assert!(n_max >= 2);
    let kmax = xi.max_support();
    // p_cut: smallest prefix of ξ carrying all but 1e-15 of the mass.
    let mut acc = 0.0;
    let mut p_cut = kmax;
    for (k, &p) in xi.pmf().iter().enumerate() {
        acc += p;
        if 1.0 - acc < 1e-15 {
            p_cut = k;
            break;
        }
    }
    let p_cut = p_cut.clamp(1, n_max);
    let steps = n_max + 1;
    let mut w = vec![0.0; steps + 1];
    let mut s_neg = vec![vec![0.0; steps + 1]; p_cut + 1];
    // vals[i] = P(S_k = lo + i).
    let mut vals = vec![1.0f64];
    let mut lo: i64 = 0;
    for k in 1..=steps {
        lo -= 1;
        // Values above `steps` can never return below 0 within the horizon
        // (each step decreases by at most 1), so capping there is exact for
        // every P(S_k = −p) we record.
        let cap_len = ((steps as i64 - lo + 1).max(1) as usize).min(vals.len() + kmax);
        let mut next = vec![0.0f64; cap_len];
        for (i, &v) in vals.iter().enumerate() {
            if v == 0.0 || i >= cap_len {
                continue;
            }
            let jmax = (cap_len - 1 - i).min(kmax);
            for (j, &x) in xi.pmf()[..=jmax].iter().enumerate() {
                next[i + j] += v * x;
            }
        }
        // Trim tails carrying < 1e-20 each.
        let mut head = 0usize;
        let mut mass = 0.0;
        while head < next.len() && mass + next[head] < 1e-20 {
            mass += next[head];
            head += 1;
        }
        let mut tail = next.len();
        mass = 0.0;
        while tail > head && mass + next[tail - 1] < 1e-20 {
            mass += next[tail - 1];
            tail -= 1;
        }
        next.drain(tail..);
        next.drain(..head);
        lo += head as i64;
        vals = next;
        for p in 1..=p_cut {
            let idx = -(p as i64) - lo;
            if idx >= 0 && (idx as usize) < vals.len() {
                s_neg[p][k] = vals[idx as usize];
            }
        }
        w[k] = s_neg[1][k] / k as f64;
    }
    // Hitting-time tables by convolution powers of w.
    let mut tau: Vec<Vec<f64>> = vec![vec![0.0; steps + 1]; p_cut + 1];
    tau[1].copy_from_slice(&w);
    for p in 2..=p_cut {
        let (prev, cur) = {
            let (a, b) = tau.split_at_mut(p);
            (&a[p - 1], &mut b[0])
        };
        for k in p..=steps {
            let mut acc = 0.0;
            for m in 1..k {
                acc += w[m] * prev[k - m];
            }
            cur[k] = acc;
        }
    }
    let rational = xi.rational.clone().map(|xr| {
        let n_rat = n_max.min(13);
        let kr = xr.len() - 1;
        let mut wr = vec![BigRational::zero(); n_rat + 2];
        let mut vals = vec![BigRational::one()];
        let mut lo: i64 = 0;
        for k in 1..=n_rat + 1 {
            let mut next = vec![BigRational::zero(); vals.len() + kr];
            for (i, v) in vals.iter().enumerate() {
                for (j, x) in xr.iter().enumerate() {
                    if !x.is_zero() && !v.is_zero() {
                        next[i + j] += v * x;
                    }
                }
            }
            lo -= 1;
            vals = next;
            let idx = -1 - lo;
            if idx >= 0 && (idx as usize) < vals.len() {
                wr[k] = vals[idx as usize].clone() / BigRational::from_integer(BigInt::from(k));
            }
        }
        GwRational {
            n_max: n_rat,
            xi: xr,
            w: wr,
        }
    });
    GwLaw {
        xi,
        n_max,
        p_cut,
        w,
        s_neg,
        tau,
        rational,
    }
}

impl GwLaw {
    /// `GW_ξ(#t = k)`.
    pub fn gw_size_pmf(&self, k: usize) -> f64 {
        self.w[k]
    }

    /// `P(S_k = −p)` from the walk tables.
    pub fn walk_neg_pmf(&self, p: usize, k: usize) -> f64 {
        self.s_neg[p][k]
    }

    /// `q_n(p(λ) = p) = ξ(p) P(τ_p = n) / P(τ₁ = n+1)`.
    pub fn part_count_pmf(&self, n: usize, p: usize) -> f64 {
        assert!(n + 1 <= self.n_max + 1);
        let denom = self.w[n + 1];
        assert!(denom > 0.0, "GW(#t = {}) = 0", n + 1);
        if p > self.p_cut {
            return 0.0;
        }
        self.xi.pmf().get(p).copied().unwrap_or(0.0) * self.tau[p][n] / denom
    }

    pub fn offspring(&self) -> &OffspringLaw {
        &self.xi
    }

    fn multiplicity_factor(lambda: &IntPartition) -> f64 {
        let mut f = 1.0;
        for i in 1..=lambda.p() {
            f *= i as f64;
        }
        for (_, m) in lambda.multiplicities() {
            for i in 1..=m {
                f /= i as f64;
            }
        }
        f
    }
}

impl SplitLaw for GwLaw {
    fn family(&self) -> String {
        format!("gw-{}", self.xi.name)
    }

    fn gamma(&self) -> f64 {
        match self.xi.tail_alpha {
            Some(alpha) => 1.0 - 1.0 / alpha,
            None => 0.5,
        }
    }

    fn is_leaf_model(&self) -> bool {
        false
    }

    fn pmf(&self, n: usize, lambda: &IntPartition) -> f64 {
        assert!(n + 1 <= self.n_max + 1, "n = {n} exceeds table bound");
        let denom = self.w[n + 1];
        assert!(denom > 0.0, "GW(#t = {}) = 0", n + 1);
        if lambda.is_empty() || lambda.n() != n {
            return 0.0;
        }
        let p = lambda.p();
        let xi_p = self.xi.pmf().get(p).copied().unwrap_or(0.0);
        if xi_p == 0.0 {
            return 0.0;
        }
        let mut prod = xi_p;
        for &part in lambda.parts() {
            prod *= self.w[part];
        }
        Self::multiplicity_factor(lambda) * prod / denom
    }

    fn pmf_rational(&self, n: usize, lambda: &IntPartition) -> Option<BigRational> {
        let rat = self.rational.as_ref()?;
        if n + 1 > rat.n_max + 1 || lambda.is_empty() || lambda.n() != n {
            return None;
        }
        let denom = rat.w[n + 1].clone();
        if denom.is_zero() {
            return None;
        }
        let p = lambda.p();
        let xi_p = rat.xi.get(p).cloned().unwrap_or_else(BigRational::zero);
        let mut prod = xi_p;
        for &part in lambda.parts() {
            prod *= &rat.w[part];
        }
        let mut fact = BigRational::one();
        for i in 1..=p {
            fact *= BigRational::from_integer(BigInt::from(i));
        }
        for (_, m) in lambda.multiplicities() {
            for i in 1..=m {
                fact /= BigRational::from_integer(BigInt::from(i));
            }
        }
        Some(fact * prod / denom)
    }

    fn support(&self, n: usize) -> Option<Vec<(IntPartition, f64)>> {
        assert!(n + 1 <= self.n_max + 1);
        if self.w[n + 1] <= 0.0 {
            // No conditioned tree of this size exists; the split law is the
            // empty sub-probability, which downstream recursions handle.
            return Some(Vec::new());
        }
        if self.xi.max_support() <= 2 {
            // Binary offspring: only (n) and pairs occur.
            let mut out = Vec::new();
            let whole = IntPartition::new(vec![n]);
            let p_whole = self.pmf(n, &whole);
            if p_whole > 0.0 {
                out.push((whole, p_whole));
            }
            for m in 1..=n / 2 {
                let lambda = IntPartition::new(vec![n - m, m]);
                let p = self.pmf(n, &lambda);
                if p > 0.0 {
                    out.push((lambda, p));
                }
            }
            return Some(out);
        }
        if n <= 40 {
            let mut out = Vec::new();
            for lambda in enumerate_partitions(n, Some(self.p_cut.min(n))) {
                let p = self.pmf(n, &lambda);
                if p > 0.0 {
                    out.push((lambda, p));
                }
            }
            return Some(out);
        }
        None
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> IntPartition {
        assert!(n + 1 <= self.n_max + 1);
        let denom = self.w[n + 1];
        assert!(denom > 0.0, "GW(#t = {}) = 0", n + 1);
        // Part count.
        let u: f64 = rng.gen::<f64>() * denom;
        let mut acc = 0.0;
        let mut p = 0;
        for cand in 1..=self.p_cut {
            let xi_p = self.xi.pmf().get(cand).copied().unwrap_or(0.0);
            acc += xi_p * self.tau[cand][n];
            p = cand;
            if u < acc {
                break;
            }
        }
        // Composition (X₁,…,X_p | τ_p = n), sequentially.
        let mut parts = Vec::with_capacity(p);
        let mut r = n;
        for left in (2..=p).rev() {
            let total = self.tau[left][r];
            let u: f64 = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = r - (left - 1);
            for m in 1..=r - (left - 1) {
                acc += self.w[m] * self.tau[left - 1][r - m];
                if u < acc {
                    chosen = m;
                    break;
                }
            }
            parts.push(chosen);
            r -= chosen;
        }
        parts.push(r);
        IntPartition::new(parts)
    }

    fn max_n(&self) -> Option<usize> {
        Some(self.n_max)
    }
}

// ---------------------------------------------------------------------------
// (α, θ) law
// ---------------------------------------------------------------------------

/// The binary split law of `(α,θ)`-growth trees (splits of leaf counts).
pub struct AlphaThetaLaw {
    alpha: f64,
    theta: f64,
    cache: Mutex<BTreeMap<usize, Arc<Vec<(IntPartition, f64)>>>>,
}

/// Builds the `(α,θ)` split law, `α ∈ (0,1)`, `θ ≥ 0`.
pub fn alpha_theta_law(alpha: f64, theta: f64) -> AlphaThetaLaw {
    assert!(alpha > 0.0 && alpha < 1.0, "α ∈ (0,1)");
    assert!(theta >= 0.0, "θ ≥ 0");
    AlphaThetaLaw {
        alpha,
        theta,
        cache: Mutex::new(BTreeMap::new()),
    }
}

impl AlphaThetaLaw {
    /// `q_{α,θ}(m, k) = C(m,k)·((α(m−k)+θk)/m)·Γ(k−α)Γ(m−k+θ)/(Γ(1−α)Γ(m+θ))`,
    /// with the `k = m, θ → 0` boundary resolved through `θΓ(θ) = Γ(1+θ)`.
    pub fn q_at(&self, m: usize, k: usize) -> f64 {
        assert!(k >= 1 && k <= m);
        let (a, t) = (self.alpha, self.theta);
        let ln_c = ln_gamma(m as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((m - k) as f64 + 1.0);
        let ln_base = ln_c + ln_gamma(k as f64 - a) - (m as f64).ln() - ln_gamma(1.0 - a) - ln_gamma(m as f64 + t);
        let term_a = if m == k {
            0.0
        } else {
            (ln_base + a.ln() + ((m - k) as f64).ln() + ln_gamma((m - k) as f64 + t)).exp()
        };
        let term_b = if t == 0.0 && m != k {
            0.0
        } else if m == k {
            (ln_base + (k as f64).ln() + ln_gamma(1.0 + t)).exp()
        } else {
            (ln_base + t.ln() + (k as f64).ln() + ln_gamma((m - k) as f64 + t)).exp()
        };
        term_a + term_b
    }

    fn table(&self, n: usize) -> Arc<Vec<(IntPartition, f64)>> {
        let mut cache = self.cache.lock().unwrap();
        cache
            .entry(n)
            .or_insert_with(|| {
                assert!(n >= 2);
                let m = n - 1;
                let mut out = Vec::new();
                for k in n.div_ceil(2)..=n - 1 {
                    let p = if 2 * k == n {
                        self.q_at(m, k)
                    } else {
                        self.q_at(m, k) + self.q_at(m, n - k)
                    };
                    out.push((IntPartition::new(vec![k, n - k]), p));
                }
                Arc::new(out)
            })
            .clone()
    }
}

impl SplitLaw for AlphaThetaLaw {
    fn family(&self) -> String {
        format!("alpha-theta({},{})", self.alpha, self.theta)
    }

    fn gamma(&self) -> f64 {
        self.alpha
    }

    fn is_leaf_model(&self) -> bool {
        true
    }

    fn pmf(&self, n: usize, lambda: &IntPartition) -> f64 {
        if n == 1 {
            return if lambda.is_empty() { 1.0 } else { 0.0 };
        }
        if lambda.p() != 2 || lambda.n() != n {
            return 0.0;
        }
        let k = lambda.parts()[0];
        if 2 * k == n {
            self.q_at(n - 1, k)
        } else {
            self.q_at(n - 1, k) + self.q_at(n - 1, n - k)
        }
    }

    fn support(&self, n: usize) -> Option<Vec<(IntPartition, f64)>> {
        Some(self.table(n).as_ref().clone())
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> IntPartition {
        let table = self.table(n);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (lambda, p) in table.iter() {
            acc += p;
            if u < acc {
                return lambda.clone();
            }
        }
        table.last().unwrap().0.clone()
    }
}

// ---------------------------------------------------------------------------
// Consistent laws from a binary dislocation measure (Eq.-7 style)
// ---------------------------------------------------------------------------

/// The consistent split law driven by a binary measure:
/// `q_n((j, n−j)) = C(n,j)·∫(x^j(1−x)^{n−j} + x^{n−j}(1−x)^j) ν(dx) / Z_n`.
pub struct ConsistentLaw {
    name: String,
    gamma: f64,
    n_max: usize,
    tables: Vec<Arc<Vec<(IntPartition, f64)>>>,
}

/// Builds the consistent law for a binary measure (binary density or a
/// two-entry point mass) up to `n_max`, quadrature tolerance `tol`.
pub fn consistent_law(
    nu: &DislocationMeasure,
    n_max: usize,
    tol: f64,
    gamma: f64,
) -> ConsistentLaw {
    let integ = |f: &dyn Fn(f64) -> f64| -> f64 {
        match nu {
            DislocationMeasure::Binary { kind, x_max } => {
                crate::quad::tanh_sinh(|x| f(x) * kind.density(x), 0.5, *x_max, tol)
            }
            DislocationMeasure::PointMass(s) => {
                assert_eq!(s.masses().len(), 2, "binary ν only");
                f(s.s1())
            }
            _ => panic!("consistent_law supports binary densities and binary point masses"),
        }
    };
    let sanity = integ(&|x: f64| 1.0 - x);
    assert!(sanity.is_finite(), "∫(1−x)ν must be finite");
    let mut tables = vec![Arc::new(Vec::new()); n_max + 1];
    for n in 2..=n_max {
        let z = integ(&|x: f64| 1.0 - x.powi(n as i32) - (1.0 - x).powi(n as i32));
        assert!(z > 0.0, "degenerate normalization at n = {n}");
        let mut rows = Vec::new();
        for j in n.div_ceil(2)..=n - 1 {
            let term = integ(&|x: f64| {
                let a = x.powi(j as i32) * (1.0 - x).powi((n - j) as i32);
                if 2 * j == n {
                    a
                } else {
                    a + x.powi((n - j) as i32) * (1.0 - x).powi(j as i32)
                }
            });
            let binom = (ln_gamma(n as f64 + 1.0)
                - ln_gamma(j as f64 + 1.0)
                - ln_gamma((n - j) as f64 + 1.0))
            .exp();
            rows.push((IntPartition::new(vec![j, n - j]), binom * term / z));
        }
        tables[n] = Arc::new(rows);
    }
    ConsistentLaw {
        name: "consistent".to_string(),
        gamma,
        n_max,
        tables,
    }
}

impl SplitLaw for ConsistentLaw {
    fn family(&self) -> String {
        self.name.clone()
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn is_leaf_model(&self) -> bool {
        true
    }

    fn pmf(&self, n: usize, lambda: &IntPartition) -> f64 {
        if n == 1 {
            return if lambda.is_empty() { 1.0 } else { 0.0 };
        }
        assert!(n <= self.n_max, "n = {n} exceeds table bound");
        self.tables[n]
            .iter()
            .find(|(l, _)| l == lambda)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }

    fn support(&self, n: usize) -> Option<Vec<(IntPartition, f64)>> {
        assert!(n <= self.n_max);
        Some(self.tables[n].as_ref().clone())
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> IntPartition {
        let table = &self.tables[n];
        let total: f64 = table.iter().map(|(_, p)| p).sum();
        let u: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        for (lambda, p) in table.iter() {
            acc += p;
            if u < acc {
                return lambda.clone();
            }
        }
        table.last().unwrap().0.clone()
    }

    fn max_n(&self) -> Option<usize> {
        Some(self.n_max)
    }
}

// ---------------------------------------------------------------------------
// Restricted-measure law (the Propexemple construction)
// ---------------------------------------------------------------------------

struct CachedRestriction {
    sampler: RestrictedSampler,
    w_n: f64,
}

/// The approximating family `q̃_n(λ) = n^{−γ} ∫ P(Λ^{(s)}(n) = λ)
/// 1{δ(n) ≤ 1 − s₁} ν(ds)` for `λ ≠ (n)`, with `δ(n) = n^{−γ/2}`.
/// No exact pmf; sampling only.
pub struct PropexempleLaw {
    nu: DislocationMeasure,
    gamma: f64,
    delta: Option<fn(usize) -> f64>,
    cache: Mutex<BTreeMap<usize, Option<Arc<CachedRestriction>>>>,
}

impl PropexempleLaw {
    pub fn new(nu: DislocationMeasure, gamma: f64) -> PropexempleLaw {
        assert!(gamma > 0.0);
        PropexempleLaw {
            nu,
            gamma,
            delta: None,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    /// Overrides the default threshold `δ(n) = n^{−γ/2}` (sensitivity
    /// studies only).
    pub fn with_delta(mut self, delta: fn(usize) -> f64) -> PropexempleLaw {
        self.delta = Some(delta);
        self
    }

    fn delta_of(&self, n: usize) -> f64 {
        match self.delta {
            Some(f) => f(n),
            None => (n as f64).powf(-self.gamma / 2.0),
        }
    }

    /// `None` below the threshold `n₀`, i.e. when the restricted
    /// construction degenerates (δ(n) outside (0, 1/2), empty restriction,
    /// or split weight above 1). There the family falls back to a fixed
    /// law with `q_n((n)) < 1` — any such choice is admissible; we use the
    /// all-singletons split.
    fn restriction(&self, n: usize) -> Option<Arc<CachedRestriction>> {
        let mut cache = self.cache.lock().unwrap();
        cache
            .entry(n)
            .or_insert_with(|| {
                let delta = self.delta_of(n);
                if !(delta > 0.0 && delta <= 0.5) || self.nu.restricted_mass(delta) <= 0.0 {
                    return None;
                }
                let sampler = RestrictedSampler::new(&self.nu, delta);
                let w_n = (n as f64).powf(-self.gamma) * sampler.restricted_mass;
                if w_n > 1.0 {
                    return None;
                }
                Some(Arc::new(CachedRestriction { sampler, w_n }))
            })
            .clone()
    }

    /// Multinomial allocation of `n` balls over the cells of `s`; shape of
    /// the nonempty cells.
    fn allocate(s: &MassPartition, n: usize, rng: &mut dyn RngCore) -> IntPartition {
        let masses = s.masses();
        let mut counts = vec![0usize; masses.len()];
        for _ in 0..n {
            let u: f64 = rng.gen::<f64>() * s.total();
            let mut acc = 0.0;
            let mut cell = masses.len() - 1;
            for (i, &m) in masses.iter().enumerate() {
                acc += m;
                if u < acc {
                    cell = i;
                    break;
                }
            }
            counts[cell] += 1;
        }
        IntPartition::new(counts.into_iter().filter(|&c| c > 0).collect())
    }
}

impl SplitLaw for PropexempleLaw {
    fn family(&self) -> String {
        format!("propexemple(γ={})", self.gamma)
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn is_leaf_model(&self) -> bool {
        true
    }

    fn has_pmf(&self) -> bool {
        false
    }

    fn pmf(&self, _n: usize, _lambda: &IntPartition) -> f64 {
        panic!("propexemple_law has no exact pmf; estimate by Monte Carlo")
    }

    fn support(&self, _n: usize) -> Option<Vec<(IntPartition, f64)>> {
        None
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> IntPartition {
        let Some(r) = self.restriction(n) else {
            return IntPartition::new(vec![1; n]);
        };
        if rng.gen::<f64>() < r.w_n {
            let s = r.sampler.sample(rng);
            Self::allocate(&s, n, rng)
        } else {
            IntPartition::new(vec![n])
        }
    }

    fn sample_hold_split(&self, n: usize, rng: &mut dyn RngCore) -> (u64, IntPartition) {
        let Some(r) = self.restriction(n) else {
            return (1, IntPartition::new(vec![1; n]));
        };
        let whole = IntPartition::new(vec![n]);
        let mut hold = 0u64;
        loop {
            hold += geometric_count(r.w_n, rng);
            let s = r.sampler.sample(rng);
            let lambda = Self::allocate(&s, n, rng);
            if lambda != whole {
                return (hold, lambda);
            }
        }
    }
}

/// Builds the Propexemple law for `(ν, γ)`.
pub fn propexemple_law(nu: DislocationMeasure, gamma: f64) -> PropexempleLaw {
    PropexempleLaw::new(nu, gamma)
}

// ---------------------------------------------------------------------------
// Ghost-leaf transform of a vertex-model law
// ---------------------------------------------------------------------------

/// `q°`: the leaf-model law with `q°₁(∅) = 1` and `q°_{n+1}((λ,1)) = q_n(λ)`.
pub struct CircLaw {
    inner: Arc<dyn SplitLaw>,
}

/// Ghost-leaf transform of a vertex-model law (`q₁((1)) = 1` assumed).
pub fn circ_transform(inner: Arc<dyn SplitLaw>) -> CircLaw {
    CircLaw { inner }
}

impl CircLaw {
    /// `λ` minus one part equal to 1, or `None` if it has none.
    fn strip_one(lambda: &IntPartition) -> Option<IntPartition> {
        let parts = lambda.parts();
        if parts.last() != Some(&1) {
            return None;
        }
        Some(if parts.len() == 1 {
            IntPartition::empty()
        } else {
            IntPartition::new(parts[..parts.len() - 1].to_vec())
        })
    }
}

impl SplitLaw for CircLaw {
    fn family(&self) -> String {
        format!("circ({})", self.inner.family())
    }

    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    fn ell(&self, n: usize) -> f64 {
        self.inner.ell(n)
    }

    fn is_leaf_model(&self) -> bool {
        true
    }

    fn has_pmf(&self) -> bool {
        self.inner.has_pmf()
    }

    fn pmf(&self, n: usize, lambda: &IntPartition) -> f64 {
        if n == 1 {
            return if lambda.is_empty() { 1.0 } else { 0.0 };
        }
        match Self::strip_one(lambda) {
            Some(stripped) if !stripped.is_empty() => self.inner.pmf(n - 1, &stripped),
            Some(_) if n == 2 => self.inner.pmf(1, &IntPartition::new(vec![1])),
            _ => 0.0,
        }
    }

    fn support(&self, n: usize) -> Option<Vec<(IntPartition, f64)>> {
        assert!(n >= 2, "q°₁ is the Dirac mass at ∅");
        let inner = self.inner.support(n - 1)?;
        Some(
            inner
                .into_iter()
                .map(|(lambda, p)| {
                    let mut parts = lambda.parts().to_vec();
                    parts.push(1);
                    (IntPartition::new(parts), p)
                })
                .collect(),
        )
    }

    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> IntPartition {
        assert!(n >= 2);
        let inner = self.inner.sample(n - 1, rng);
        let mut parts = inner.parts().to_vec();
        parts.push(1);
        IntPartition::new(parts)
    }

    fn max_n(&self) -> Option<usize> {
        self.inner.max_n().map(|m| m + 1)
    }
}

// ---------------------------------------------------------------------------
// Hypothesis-(H) probe
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ProbeMode {
    Auto,
    Exact,
    MonteCarlo,
}

/// One probe evaluation: `a_n · Σ_λ q_n(λ)(1 − λ₁/n) f(λ/n)`.
#[derive(Clone, Debug, serde::Serialize)]
pub struct ProbeResult {
    pub family: String,
    pub n: usize,
    pub gamma: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub mode: &'static str,
}

/// Evaluates the hypothesis-(H) functional for `q` at `n`: exactly over an
/// enumerable support, or by Monte Carlo with `reps` draws.
pub fn probe_h<F: Fn(&MassPartition) -> f64>(
    q: &dyn SplitLaw,
    f: F,
    n: usize,
    mode: ProbeMode,
    reps: usize,
    rng: &mut dyn RngCore,
) -> ProbeResult {
    let a_n = q.a_n(n);
    let exact = match mode {
        ProbeMode::Exact => true,
        ProbeMode::MonteCarlo => false,
        ProbeMode::Auto => q.support(n).is_some(),
    };
    if exact {
        let support = q
            .support(n)
            .expect("exact probe mode requires an enumerable support");
        let mut total = 0.0;
        for (lambda, p) in &support {
            if lambda.is_empty() {
                continue;
            }
            let frac = 1.0 - lambda.largest() as f64 / n as f64;
            if frac > 0.0 {
                total += p * frac * f(&mass_of(lambda, n));
            }
        }
        ProbeResult {
            family: q.family(),
            n,
            gamma: q.gamma(),
            estimate: a_n * total,
            stderr: 0.0,
            mode: "exact",
        }
    } else {
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..reps {
            let lambda = q.sample(n, rng);
            let frac = 1.0 - lambda.largest() as f64 / n as f64;
            let v = if frac > 0.0 {
                frac * f(&mass_of(&lambda, n))
            } else {
                0.0
            };
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / reps as f64;
        let var = (sumsq / reps as f64 - mean * mean).max(0.0);
        ProbeResult {
            family: q.family(),
            n,
            gamma: q.gamma(),
            estimate: a_n * mean,
            stderr: a_n * (var / reps as f64).sqrt(),
            mode: "monte-carlo",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragmentation::{nu2, point_mass};
    use crate::rng::stream;
    use crate::stats::chi_square_gof;

    fn lam(parts: &[usize]) -> IntPartition {
        IntPartition::new(parts.to_vec())
    }

    #[test]
    fn tabulated_basics() {
        let mut table = BTreeMap::new();
        table.insert(2, vec![(lam(&[1, 1]), 1.0)]);
        table.insert(3, vec![(lam(&[2, 1]), 0.7), (lam(&[3]), 0.3)]);
        let law = tabulated_law("t", table, true, 1.0);
        let mut rng = stream(103, 0);
        for _ in 0..20 {
            assert_eq!(law.sample(2, &mut rng), lam(&[1, 1]));
        }
        let reps = 100_000;
        let hits = (0..reps)
            .filter(|_| law.sample(3, &mut rng) == lam(&[2, 1]))
            .count();
        let phat = hits as f64 / reps as f64;
        let sigma = (0.7f64 * 0.3 / reps as f64).sqrt();
        assert!((phat - 0.7).abs() < 3.0 * sigma, "phat={phat}");
        assert_eq!(law.pmf(3, &lam(&[3])), 0.3);
        assert_eq!(law.pmf(3, &lam(&[1, 1, 1])), 0.0);
    }

    #[test]
    fn tabulated_leaf_flag_rejects_absorbing_state() {
        let mut table = BTreeMap::new();
        table.insert(2, vec![(lam(&[2]), 1.0)]);
        let r = std::panic::catch_unwind(|| tabulated_law("bad", table, true, 1.0));
        assert!(r.is_err());
    }

    #[test]
    fn gw_binary_hand_values() {
        let law = gw_law(OffspringLaw::binary(), 16);
        assert!((law.pmf(2, &lam(&[1, 1])) - 1.0).abs() < 1e-15);
        assert!((law.pmf(4, &lam(&[3, 1])) - 1.0).abs() < 1e-14);
        assert_eq!(law.pmf(4, &lam(&[2, 2])), 0.0);
        // Rational mode agrees and is exact.
        let r = law.pmf_rational(4, &lam(&[3, 1])).unwrap();
        assert!(r.is_one());
    }

    /// Independent direct tree-size counts: GW(#t = n) via the forest
    /// recursion g[n] = Σ_k ξ(k)·(g^{*k})[n−1].
    fn gw_sizes_direct(xi: &OffspringLaw, n_max: usize) -> Vec<f64> {
        let mut g = vec![0.0; n_max + 1];
        for n in 1..=n_max {
            // forests[k][s] = P(forest of k independent trees has total s),
            // using sizes < n only (all contributions to g[n] use smaller
            // trees).
            let kmax = xi.max_support().min(n_max);
            let mut forest = vec![0.0; n_max + 1];
            forest[0] = 1.0;
            let mut total = xi.pmf()[0] * if n == 1 { 1.0 } else { 0.0 };
            for k in 1..=kmax {
                let mut next = vec![0.0; n_max + 1];
                for s in 0..n {
                    if forest[s] == 0.0 {
                        continue;
                    }
                    for t in 1..n {
                        if s + t > n_max {
                            break;
                        }
                        next[s + t] += forest[s] * g[t];
                    }
                }
                forest = next;
                if n >= 1 && xi.pmf().len() > k {
                    total += xi.pmf()[k] * forest[n - 1];
                }
            }
            g[n] = total;
        }
        g
    }

    #[test]
    fn cyclic_lemma_poisson() {
        let law = gw_law(OffspringLaw::poisson(), 16);
        let direct = gw_sizes_direct(law.offspring(), 12);
        for n in 1..=12 {
            // n·GW(#t=n) = P(S_n = −1), both sides from independent routes.
            let lhs = n as f64 * direct[n];
            let rhs = law.walk_neg_pmf(1, n);
            assert!((lhs - rhs).abs() <= 1e-14, "n={n}: {lhs} vs {rhs}");
        }
        // τ_p from convolution matches the cyclic form (p/n)·P(S_n = −p).
        for p in 1..=4usize {
            for n in p..=16 {
                let conv = law.tau[p][n];
                let cyc = p as f64 / n as f64 * law.walk_neg_pmf(p, n);
                assert!((conv - cyc).abs() <= 1e-13, "p={p} n={n}");
            }
        }
    }

    #[test]
    fn gw_normalization() {
        let poisson = gw_law(OffspringLaw::poisson(), 32);
        for n in 1..=20 {
            let total: f64 = poisson.support(n).unwrap().iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-9, "n={n} total={total}");
        }
        // Binary law: exact rational normalization. Binary trees have an odd
        // vertex count, so q_n lives on even n only.
        let binary = gw_law(OffspringLaw::binary(), 16);
        for n in [2usize, 4, 6, 8, 10] {
            let mut total = BigRational::zero();
            for lambda in enumerate_partitions(n, None) {
                if let Some(p) = binary.pmf_rational(n, &lambda) {
                    total += p;
                }
            }
            assert!(total.is_one(), "n={n}: Σ = {total}");
        }
    }

    #[test]
    fn gw_part_count_and_sampling() {
        let law = gw_law(OffspringLaw::poisson(), 16);
        let n = 8;
        let support = law.support(n).unwrap();
        // Sample frequencies match the pmf.
        let mut rng = stream(107, 0);
        let mut counts = vec![0u64; support.len()];
        let reps = 100_000;
        for _ in 0..reps {
            let s = law.sample(n, &mut rng);
            let i = support.iter().position(|(l, _)| *l == s).expect("in support");
            counts[i] += 1;
        }
        let probs: Vec<f64> = support.iter().map(|(_, p)| *p).collect();
        let r = chi_square_gof(&counts, &probs);
        assert!(r.p_value > 0.001, "χ²={} p={}", r.statistic, r.p_value);
        // Part-count marginal agrees with the summed pmf.
        for p in 1..=4 {
            let direct: f64 = support
                .iter()
                .filter(|(l, _)| l.p() == p)
                .map(|(_, q)| q)
                .sum();
            assert!((law.part_count_pmf(n, p) - direct).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn heavy_tail_offspring_is_critical() {
        let xi = OffspringLaw::heavy_tail(1.5, 0.05);
        assert!(xi.sigma2.is_none());
        assert_eq!(xi.tail_alpha, Some(1.5));
        let law = gw_law(xi, 8);
        assert!((law.gamma() - (1.0 - 1.0 / 1.5)).abs() < 1e-12);
        let total: f64 = law.support(5).unwrap().iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-6, "total={total}");
    }

    #[test]
    fn alpha_theta_law_checks() {
        let law = alpha_theta_law(0.5, 0.5);
        assert!((law.pmf(2, &lam(&[1, 1])) - 1.0).abs() < 1e-12);
        let total: f64 = law.support(10).unwrap().iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-10, "total={total}");
        for n in [3usize, 7, 20] {
            let total: f64 = law.support(n).unwrap().iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-9, "n={n} total={total}");
        }
        // θ = 0 boundary stays normalized.
        let law0 = alpha_theta_law(0.3, 0.0);
        let total: f64 = law0.support(9).unwrap().iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-9, "θ=0 total={total}");
    }

    #[test]
    fn consistent_law_point_mass_values() {
        let nu = point_mass(MassPartition::binary(0.5));
        let law = consistent_law(&nu, 16, 1e-10, 1.0);
        assert!((law.pmf(2, &lam(&[1, 1])) - 1.0).abs() < 1e-12);
        assert!((law.pmf(4, &lam(&[2, 2])) - 3.0 / 7.0).abs() < 1e-12);
        assert!((law.pmf(4, &lam(&[3, 1])) - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn consistent_law_nu2_normalization() {
        let nu = match nu2() {
            DislocationMeasure::Binary { kind, .. } => DislocationMeasure::Binary {
                kind,
                x_max: 1.0 - 1e-4,
            },
            _ => unreachable!(),
        };
        let law = consistent_law(&nu, 30, 1e-10, 0.5);
        for n in 2..=30 {
            let total: f64 = law.support(n).unwrap().iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-8, "n={n} total={total}");
        }
    }

    #[test]
    fn propexemple_point_mass_arithmetic() {
        // ν = δ_{(1/2,1/2)}, γ = 1, n = 4: w₄ = 1/4; the allocation is
        // multinomial(4; 1/2, 1/2), degenerate with probability 1/8, so
        // q̃₄(λ ≠ (4)) = (1/4)(7/8) = 7/32, and conditional shapes follow
        // the conditioned binomial: (2,2) w.p. (6/16)/(14/16), (3,1) w.p.
        // (8/16)/(14/16).
        let law = propexemple_law(point_mass(MassPartition::binary(0.5)), 1.0);
        let mut rng = stream(109, 0);
        let reps = 200_000;
        let (mut split, mut twotwo) = (0u64, 0u64);
        for _ in 0..reps {
            let l = law.sample(4, &mut rng);
            if l != lam(&[4]) {
                split += 1;
                if l == lam(&[2, 2]) {
                    twotwo += 1;
                }
            }
        }
        let phat = split as f64 / reps as f64;
        let target = 7.0 / 32.0;
        let sigma = (target * (1.0 - target) / reps as f64).sqrt();
        assert!((phat - target).abs() < 4.0 * sigma, "phat={phat}");
        let cond = twotwo as f64 / split as f64;
        let ctarget = 3.0 / 7.0;
        let csigma = (ctarget * (1.0 - ctarget) / split as f64).sqrt();
        assert!((cond - ctarget).abs() < 4.0 * csigma, "cond={cond}");
    }

    #[test]
    fn propexemple_probe_matches_integral() {
        // probe_H(q̃, f ≡ 1) → ∫(1−s₁)ν restricted; ν₂ cut at x ≤ 1−1e-3
        // keeps everything desk-sized.
        let nu = match nu2() {
            DislocationMeasure::Binary { kind, .. } => DislocationMeasure::Binary {
                kind,
                x_max: 1.0 - 1e-3,
            },
            _ => unreachable!(),
        };
        let mut rng = stream(113, 0);
        let target = nu.integrate(|s| 1.0 - s.s1(), 1e-10, &mut rng).value;
        let law = propexemple_law(nu, 1.0);
        let n = 10_000;
        let probe = probe_h(&law, |_| 1.0, n, ProbeMode::MonteCarlo, 400_000, &mut rng);
        assert!(
            (probe.estimate - target).abs() < 3.0 * probe.stderr + 0.02 * target,
            "probe={} ± {} target={target}",
            probe.estimate,
            probe.stderr
        );
    }

    #[test]
    fn circ_transform_mapping() {
        let mut table = BTreeMap::new();
        table.insert(1, vec![(lam(&[1]), 1.0)]);
        table.insert(2, vec![(lam(&[1, 1]), 1.0)]);
        table.insert(3, vec![(lam(&[2, 1]), 0.25), (lam(&[1, 1, 1]), 0.75)]);
        let q = Arc::new(tabulated_law("v", table, false, 0.5));
        let qc = circ_transform(q);
        assert!((qc.pmf(3, &lam(&[1, 1, 1])) - 1.0).abs() < 1e-15);
        assert_eq!(qc.pmf(3, &lam(&[2, 1])), 0.0);
        assert!((qc.pmf(4, &lam(&[2, 1, 1])) - 0.25).abs() < 1e-15);
        // Mass preservation through the mapping.
        for n in [2usize, 3, 4] {
            let total: f64 = qc.support(n).unwrap().iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-12, "n={n}");
        }
        // Samples always carry the ghost part.
        let mut rng = stream(127, 0);
        for _ in 0..100 {
            let l = qc.sample(4, &mut rng);
            assert_eq!(*l.parts().last().unwrap(), 1);
        }
    }

    #[test]
    fn circ_probe_difference_bound() {
        // |probe(q°, g, n) − probe(q, g, n)| ≤ 3K·a_n/(n+1) for g = (1−s₁)f
        // with |f| ≤ K = 1.
        let q = Arc::new(gw_law(OffspringLaw::poisson(), 64));
        let qc = circ_transform(q.clone());
        let mut rng = stream(131, 0);
        let f = |s: &MassPartition| (1.0 - s.s1()).min(1.0);
        for n in [10usize, 20, 40] {
            let a = probe_h(&*q, f, n, ProbeMode::Exact, 0, &mut rng).estimate;
            let b = probe_h(&qc, f, n, ProbeMode::Exact, 0, &mut rng).estimate;
            let bound = 3.0 * (n as f64).sqrt() / (n + 1) as f64;
            assert!((a - b).abs() <= bound + 1e-9, "n={n}: |{a} − {b}| > {bound}");
        }
    }

    #[test]
    fn probe_two_point_law_exact() {
        // q_n((n)) = 1 − c/a_n, the rest on one fixed shape: probe equals
        // c·(1 − shape₁/n)·f(shape) exactly.
        let n = 64usize;
        let c = 0.4;
        let gamma = 1.0;
        let a_n = (n as f64).powf(gamma);
        let shape = lam(&[48, 16]);
        let mut table = BTreeMap::new();
        table.insert(
            n,
            vec![(lam(&[n]), 1.0 - c / a_n), (shape.clone(), c / a_n)],
        );
        let law = tabulated_law("two-point", table, true, gamma);
        let mut rng = stream(137, 0);
        let f = |s: &MassPartition| 1.0 + s.s1();
        let probe = probe_h(&law, f, n, ProbeMode::Exact, 0, &mut rng);
        let expect = c * (1.0 - 48.0 / 64.0) * (1.0 + 48.0 / 64.0);
        assert!((probe.estimate - expect).abs() < 1e-12);
        assert_eq!(probe.stderr, 0.0);
        assert_eq!(probe.mode, "exact");
    }

    #[test]
    fn probe_gw_binary_trend_to_case1_target() {
        // √n Σ q_n(λ)(1−λ₁/n) → (σ/2)∫(1−s₁)ν₂ = σ·√(2/π), σ = 1; equal to
        // the quadrature target (1/√(2π))∫ min(x,1−x)x^{−1/2}(1−x)^{−3/2}.
        let target = crate::quad::tanh_sinh(
            |x| x.min(1.0 - x) * x.powf(-0.5) * (1.0 - x).powf(-1.5),
            0.0,
            1.0,
            1e-12,
        ) / (2.0 * std::f64::consts::PI).sqrt();
        let law = gw_law(OffspringLaw::binary(), 801);
        let mut rng = stream(139, 0);
        let mut prev_err = f64::INFINITY;
        for n in [50usize, 200, 800] {
            let probe = probe_h(&law, |_| 1.0, n, ProbeMode::Exact, 0, &mut rng);
            let err = (probe.estimate - target).abs() / target;
            assert!(err < prev_err, "error not decreasing at n={n}");
            prev_err = err;
        }
        assert!(prev_err < 0.2, "relative error {prev_err} at n=800");
    }

    #[test]
    fn size_biased_bridge() {
        // q̄*_n(g) via the exact reorder expectation versus
        // reorder-then-average Monte Carlo.
        let law = gw_law(OffspringLaw::poisson(), 16);
        let n = 10;
        let g = |xs: &[f64]| (1.0 - xs.iter().cloned().fold(0.0, f64::max)) * xs[0];
        // Exact: enumerate orderings of each λ with size-biased weights.
        fn orderings(parts: &[usize]) -> Vec<(Vec<usize>, f64)> {
            if parts.is_empty() {
                return vec![(Vec::new(), 1.0)];
            }
            let total: usize = parts.iter().sum();
            let mut out = Vec::new();
            let mut seen = std::collections::BTreeSet::new();
            for (i, &x) in parts.iter().enumerate() {
                if !seen.insert(x) {
                    continue;
                }
                let mult = parts.iter().filter(|&&y| y == x).count() as f64;
                let mut rest = parts.to_vec();
                rest.remove(i);
                for (tail, w) in orderings(&rest) {
                    let mut seq = vec![x];
                    seq.extend(tail);
                    out.push((seq, mult * x as f64 / total as f64 * w));
                }
            }
            out
        }
        let mut exact = 0.0;
        for (lambda, p) in law.support(n).unwrap() {
            for (seq, w) in orderings(lambda.parts()) {
                let xs: Vec<f64> = seq.iter().map(|&x| x as f64 / n as f64).collect();
                exact += p * w * g(&xs);
            }
        }
        // Monte Carlo reorder-then-average.
        let mut rng = stream(149, 0);
        let reps = 200_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..reps {
            let lambda = law.sample(n, &mut rng);
            let mut rest: Vec<usize> = lambda.parts().to_vec();
            let mut seq = Vec::with_capacity(rest.len());
            while !rest.is_empty() {
                let total: usize = rest.iter().sum();
                let mut u = rng.gen::<f64>() * total as f64;
                let mut pick = rest.len() - 1;
                for (i, &x) in rest.iter().enumerate() {
                    u -= x as f64;
                    if u < 0.0 {
                        pick = i;
                        break;
                    }
                }
                seq.push(rest.remove(pick));
            }
            let xs: Vec<f64> = seq.iter().map(|&x| x as f64 / n as f64).collect();
            let v = g(&xs);
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / reps as f64;
        let se = ((sumsq / reps as f64 - mean * mean).max(0.0) / reps as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se + 1e-6, "mc={mean} exact={exact}");
    }

    #[test]
    fn tabulated_json_roundtrip() {
        let v = serde_json::json!({
            "gamma": 0.5,
            "leaf": true,
            "table": [
                {"n": 2, "entries": [{"parts": [1, 1], "p": 1.0}]},
                {"n": 3, "entries": [{"parts": [2, 1], "p": 0.6}, {"parts": [3], "p": 0.4}]}
            ]
        });
        let law = tabulated_from_json(&v).unwrap();
        assert_eq!(law.gamma(), 0.5);
        assert!((law.pmf(3, &lam(&[2, 1])) - 0.6).abs() < 1e-15);
        let bad = serde_json::json!({"table": [{"entries": []}]});
        match tabulated_from_json(&bad) {
            Err(e) => assert_eq!(e, "missing key: n"),
            Ok(_) => panic!("expected an error"),
        }
    }
}
