//! Integer-partition and set-partition combinatorics.
//!
//! `P_n` is the set of partitions of the integer `n` into non-increasing
//! positive parts, together with a distinguished extra element `∅` that is
//! only meaningful in the `n = 1` context. A set partition of a finite label
//! set is kept in a single canonical form: blocks sorted internally, ordered
//! by least element.

use num::bigint::BigUint;
use num::rational::BigRational;
use num::{BigInt, One, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::fragmentation::MassPartition;

/// Exact nonnegative count; never overflows.
pub type BigCount = BigUint;

/// A partition of a positive integer into non-increasing parts.
///
/// The distinguished element `∅` of `P₁` is represented by an empty part
/// list and is excluded from enumeration and counting.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntPartition {
    parts: Vec<usize>,
}

impl IntPartition {
    /// Builds a partition from parts in any order; zero parts are rejected.
    pub fn new(mut parts: Vec<usize>) -> Self {
        assert!(parts.iter().all(|&p| p >= 1), "parts must be >= 1");
        parts.sort_unstable_by(|a, b| b.cmp(a));
        IntPartition { parts }
    }

    /// The distinguished element `∅` of `P₁`.
    pub fn empty() -> Self {
        IntPartition { parts: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Non-increasing parts.
    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    /// `n(λ)`: the integer being partitioned.
    pub fn n(&self) -> usize {
        self.parts.iter().sum()
    }

    /// `p(λ)`: the number of parts.
    pub fn p(&self) -> usize {
        self.parts.len()
    }

    /// Multiplicities `m_j(λ)` keyed by part size `j`.
    pub fn multiplicities(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for &part in &self.parts {
            *m.entry(part).or_insert(0) += 1;
        }
        m
    }

    /// Largest part, or 0 for `∅`.
    pub fn largest(&self) -> usize {
        self.parts.first().copied().unwrap_or(0)
    }
}

/// A set partition of a finite set of positive integer labels, in
/// least-element canonical form.
#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SetPartition {
    blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    /// Canonicalizes: sorts each block, orders blocks by least element.
    /// Panics if blocks overlap or any block is empty.
    pub fn new(mut blocks: Vec<Vec<usize>>) -> Self {
        let mut seen = std::collections::BTreeSet::new();
        for block in &mut blocks {
            assert!(!block.is_empty(), "empty block");
            block.sort_unstable();
            for &x in block.iter() {
                assert!(seen.insert(x), "duplicate label {x}");
            }
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        SetPartition { blocks }
    }

    /// The partition of `[n]` into singletons.
    pub fn singletons(n: usize) -> Self {
        SetPartition {
            blocks: (1..=n).map(|i| vec![i]).collect(),
        }
    }

    /// The one-block partition of the given labels.
    pub fn one_block(labels: Vec<usize>) -> Self {
        SetPartition::new(vec![labels])
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// All labels, sorted.
    pub fn ground(&self) -> Vec<usize> {
        let mut g: Vec<usize> = self.blocks.iter().flatten().copied().collect();
        g.sort_unstable();
        g
    }

    /// Shape `λ(π)`: the block sizes as an integer partition.
    pub fn shape(&self) -> IntPartition {
        IntPartition::new(self.blocks.iter().map(|b| b.len()).collect())
    }

    /// Restriction to the labels `1..=k`, re-canonicalized. Labels outside
    /// the ground set are ignored; blocks that become empty are dropped.
    pub fn restrict(&self, k: usize) -> SetPartition {
        let blocks: Vec<Vec<usize>> = self
            .blocks
            .iter()
            .map(|b| b.iter().copied().filter(|&x| x <= k).collect::<Vec<_>>())
            .filter(|b: &Vec<usize>| !b.is_empty())
            .collect();
        SetPartition::new(blocks)
    }

    /// Index of the block containing `label`, if any.
    pub fn block_of(&self, label: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.binary_search(&label).is_ok())
    }
}

/// `n!` as an exact integer.
pub fn factorial(n: usize) -> BigCount {
    (1..=n).fold(BigUint::one(), |acc, k| acc * BigUint::from(k))
}

/// Falling factorial `(n)_k = n(n−1)…(n−k+1)`.
pub fn falling(n: usize, k: usize) -> BigCount {
    if k > n {
        return BigUint::zero();
    }
    (0..k).fold(BigUint::one(), |acc, i| acc * BigUint::from(n - i))
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> BigCount {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// All partitions of `n` with at most `max_parts` parts (no bound if
/// `None`), in reverse lexicographic order: `(n)` first, `(1,…,1)` last.
pub fn enumerate_partitions(n: usize, max_parts: Option<usize>) -> Vec<IntPartition> {
    assert!(n >= 1);
    let bound = max_parts.unwrap_or(n);
    let mut out = Vec::new();
    let mut current = Vec::new();
    rec_partitions(n, n, bound, &mut current, &mut out);
    out
}

fn rec_partitions(
    remaining: usize,
    max_part: usize,
    parts_left: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<IntPartition>,
) {
    if remaining == 0 {
        out.push(IntPartition {
            parts: current.clone(),
        });
        return;
    }
    if parts_left == 0 {
        return;
    }
    // With `parts_left` parts of size <= max_part we can cover at most
    // parts_left * max_part.
    let lo = remaining.div_ceil(parts_left);
    for part in (lo..=max_part.min(remaining)).rev() {
        current.push(part);
        rec_partitions(remaining - part, part, parts_left - 1, current, out);
        current.pop();
    }
}

/// `C_λ = n!/(∏ λ_i! ∏ m_j(λ)!)`: the number of set partitions of `[n]`
/// with shape `λ`. Rejects `∅`.
pub fn shape_count(lambda: &IntPartition) -> BigCount {
    assert!(!lambda.is_empty(), "shape_count undefined for the empty partition");
    let mut denom = BigUint::one();
    for &part in lambda.parts() {
        denom *= factorial(part);
    }
    for (_, m) in lambda.multiplicities() {
        denom *= factorial(m);
    }
    factorial(lambda.n()) / denom
}

/// Refined count `C_λ^{π′}(i₁..i_b)`: set partitions of `[n]` with shape
/// `λ` whose restriction to `[k]` equals `π′` and whose block containing
/// `π′_j` has size `λ_{i_j}` (indices 1-based, pairwise distinct).
pub fn refined_count(
    lambda: &IntPartition,
    pi_prime: &SetPartition,
    assignment: &[usize],
) -> BigCount {
    let n = lambda.n();
    let k: usize = pi_prime.blocks().iter().map(|b| b.len()).sum();
    let b = pi_prime.num_blocks();
    assert!(k <= n, "restriction larger than ground set");
    assert_eq!(assignment.len(), b, "one part index per block of π′");
    let mut seen = std::collections::BTreeSet::new();
    for &i in assignment {
        assert!(i >= 1 && i <= lambda.p(), "part index out of range");
        assert!(seen.insert(i), "assignment indices must be pairwise distinct");
    }
    for (j, &i) in assignment.iter().enumerate() {
        assert!(
            pi_prime.blocks()[j].len() <= lambda.parts()[i - 1],
            "block larger than assigned part"
        );
    }
    // Complete π′ directly: each designated block B_j ⊇ π′_j needs
    // c_j = λ_{i_j} − #π′_j of the n − k free labels; the rest are
    // partitioned with the remaining shape μ = λ \ {λ_{i_j}}. Choosing free
    // labels is a multinomial; the residual blocks contribute C_μ.
    let assigned: std::collections::BTreeSet<usize> = assignment.iter().copied().collect();
    let mut num = BigRational::from(BigInt::from(factorial(n - k)));
    for (j, &i) in assignment.iter().enumerate() {
        let c_j = lambda.parts()[i - 1] - pi_prime.blocks()[j].len();
        num /= BigRational::from(BigInt::from(factorial(c_j)));
    }
    let mu: Vec<usize> = (1..=lambda.p())
        .filter(|i| !assigned.contains(i))
        .map(|i| lambda.parts()[i - 1])
        .collect();
    for &part in &mu {
        num /= BigRational::from(BigInt::from(factorial(part)));
    }
    let mut run = 0usize;
    for (idx, &part) in mu.iter().enumerate() {
        run += 1;
        if idx + 1 == mu.len() || mu[idx + 1] != part {
            num /= BigRational::from(BigInt::from(factorial(run)));
            run = 0;
        }
    }
    assert!(num.is_integer(), "refined count must be integral");
    num.to_integer().to_biguint().expect("nonnegative")
}

/// Paintbox sampler: labels `i, j` of `[n]` share a block iff their i.i.d.
/// categorical draws `K_i` with `P(K = k) = s_k` coincide. Entries of `s`
/// beyond the point where the remaining tail mass drops below `1e-15` are
/// lumped into fresh singleton-generating symbols.
pub fn paintbox<R: Rng + ?Sized>(s: &MassPartition, n: usize, rng: &mut R) -> SetPartition {
    assert!(n >= 1);
    assert!(
        (s.total() - 1.0).abs() <= 1e-12,
        "paintbox requires sum(s) = 1, got {}",
        s.total()
    );
    let masses = s.masses();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut fresh = Vec::new();
    'label: for i in 1..=n {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, &m) in masses.iter().enumerate() {
            acc += m;
            if u < acc {
                groups.entry(k).or_default().push(i);
                continue 'label;
            }
            if 1.0 - acc < 1e-15 {
                break;
            }
        }
        // Tail symbol: always a fresh singleton.
        fresh.push(vec![i]);
    }
    let mut blocks: Vec<Vec<usize>> = groups.into_values().collect();
    blocks.extend(fresh);
    SetPartition::new(blocks)
}

/// Uniform set partition of the labels `b` with prescribed shape `λ`;
/// each of the `C_λ` candidates has equal probability.
pub fn uniform_shape_partition<R: Rng + ?Sized>(
    lambda: &IntPartition,
    b: &[usize],
    rng: &mut R,
) -> SetPartition {
    assert_eq!(b.len(), lambda.n(), "label set size must equal n(λ)");
    let mut labels = b.to_vec();
    labels.shuffle(rng);
    let mut blocks = Vec::with_capacity(lambda.p());
    let mut offset = 0;
    for &part in lambda.parts() {
        blocks.push(labels[offset..offset + part].to_vec());
        offset += part;
    }
    SetPartition::new(blocks)
}

/// For an exchangeable partition of `[n]` whose block containing 1 has
/// `block_size` elements: the probability that `[k] ∩ π_(1)` equals a fixed
/// `l`-subset of `[k]` containing 1. Exact rational value
/// `((block_size−1)_{l−1} (n−block_size)_{k−l}) / (n−1)_{k−1}`.
pub fn block_containing_probability(
    n: usize,
    k: usize,
    block_size: usize,
    l: usize,
) -> BigRational {
    assert!(1 <= l && l <= k && k <= n, "need 1 <= l <= k <= n");
    assert!(1 <= block_size && block_size <= n, "need 1 <= block_size <= n");
    let num = falling(block_size - 1, l - 1) * falling(n - block_size, k - l);
    let den = falling(n - 1, k - 1);
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
