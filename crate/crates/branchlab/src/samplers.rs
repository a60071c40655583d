//! Markov branching samplers: the leaf model `P^q_n`, the vertex model
//! `Q^q_n`, the refining partition chain with its genealogy tree, exact
//! small-`n` laws, and the `(α,θ)` growth sampler.

use crate::partitions::{uniform_shape_partition, SetPartition};
use crate::splitlaws::SplitLaw;
use crate::trees::{reduced_edge_tree_labeled, ChainPath, EdgeTree, Tree};
use num::rational::BigRational;
use num::{One, Zero};
use rand::{Rng, RngCore};
use std::collections::BTreeMap;

/// Number of draws until the first success (≥ 1).
fn geometric_count(p: f64, rng: &mut dyn RngCore) -> u64 {
    assert!(p > 0.0 && p <= 1.0);
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    1 + (u.ln() / (1.0 - p).ln()).floor().max(0.0) as u64
}

/// Samples the leaf model `P^q_n`: a geometric hold (chain string whose
/// lowest vertex is the branch vertex), a conditioned proper split, and
/// independent recursion; `n = 1` plants `Geom₀(q₁(∅))` extra vertices
/// over a leaf. The hold length is drawn in closed form, never by
/// repeated trial.
#[allow(non_snake_case)]
pub fn sample_P(q: &dyn SplitLaw, n: usize, rng: &mut dyn RngCore) -> Tree {
    assert!(q.is_leaf_model(), "sample_P requires a leaf-model law");
    if n == 1 {
        let q1 = q.q1_empty();
        assert!(q1 > 0.0, "q₁(∅) = 0: the trivial block never dies");
        let extra = geometric_count(q1, rng) - 1;
        let mut t = Tree::leaf();
        for _ in 0..extra {
            t = Tree::node(vec![t]);
        }
        return t;
    }
    let (hold, lambda) = q.sample_hold_split(n, rng);
    let children = lambda
        .parts()
        .iter()
        .map(|&part| sample_P(q, part, rng))
        .collect();
    let mut t = Tree::node(children);
    for _ in 1..hold {
        t = Tree::node(vec![t]);
    }
    t
}

/// Samples the vertex model `Q^q_n`: `n` vertices, root split from
/// `q_{n−1}`, independent recursion on the parts.
#[allow(non_snake_case)]
pub fn sample_Q(q: &dyn SplitLaw, n: usize, rng: &mut dyn RngCore) -> Tree {
    assert!(n >= 1);
    if n == 1 {
        return Tree::leaf();
    }
    let lambda = q.sample(n - 1, rng);
    let children = lambda
        .parts()
        .iter()
        .map(|&part| sample_Q(q, part, rng))
        .collect();
    Tree::node(children)
}

/// One transition of the refining chain: every non-singleton block
/// independently draws a shape from `q_{#B}` and scatters into a uniform
/// set partition of that shape; singletons are held fixed.
pub fn chain_step(q: &dyn SplitLaw, pi: &SetPartition, rng: &mut dyn RngCore) -> SetPartition {
    assert!(q.is_leaf_model(), "the chain runs under a leaf-model law");
    let mut blocks = Vec::new();
    for b in pi.blocks() {
        if b.len() == 1 {
            blocks.push(b.clone());
            continue;
        }
        let lambda = q.sample(b.len(), rng);
        let sub = uniform_shape_partition(&lambda, b, rng);
        blocks.extend(sub.blocks().iter().cloned());
    }
    SetPartition::new(blocks)
}

/// A tree with leaves labeled by a ground set.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTree {
    /// Unit-edge genealogy tree (chain vertices explicit).
    pub tree: Tree,
    /// The reduced tree with its integer edge lengths.
    pub edge: EdgeTree,
    /// Ground labels of the leaves, in the preorder of `edge.tree()`.
    pub labels: Vec<usize>,
}

/// Runs the chain from the one-block partition of `labels` down to
/// singletons and reads off the genealogy tree; its unlabeled law is
/// `P^q_{#labels}`. Requires `q₁(∅) = 1`.
pub fn labeled_tree(
    q: &dyn SplitLaw,
    labels: &[usize],
    rng: &mut dyn RngCore,
) -> (LabeledTree, ChainPath) {
    assert!(!labels.is_empty());
    assert!(
        (q.q1_empty() - 1.0).abs() < 1e-15,
        "the chain convention requires q₁(∅) = 1"
    );
    let mut states = vec![SetPartition::one_block(labels.to_vec())];
    const MAX_STEPS: usize = 1_000_000;
    while states.last().unwrap().blocks().iter().any(|b| b.len() > 1) {
        assert!(states.len() < MAX_STEPS, "chain failed to refine");
        let next = chain_step(q, states.last().unwrap(), rng);
        states.push(next);
    }
    let path = ChainPath::new(states);
    let (edge, leaf_labels) = reduced_edge_tree_labeled(&path, labels);
    let tree = edge.to_unit_tree();
    (
        LabeledTree {
            tree,
            edge,
            labels: leaf_labels,
        },
        path,
    )
}

/// Exact vertex-model law `Q^q_n` as a map shape → probability, by
/// recursion over the enumerable split supports:
/// `Q_n(t) = q_{n−1}(λ(t)) ∏_j (multinomial probability of the observed
/// multiset of size-`j` subtrees under i.i.d. `Q_j` draws)`.
#[allow(non_snake_case)]
pub fn exact_Q_law(q: &dyn SplitLaw, n: usize) -> BTreeMap<Tree, f64> {
    assert!(n <= 9, "exact_Q_law size cap is 9 (got {n})");
    let mut memo: Vec<BTreeMap<Tree, f64>> = Vec::with_capacity(n + 1);
    memo.push(BTreeMap::new());
    memo.push(BTreeMap::from([(Tree::leaf(), 1.0)]));
    for k in 2..=n {
        let support = q
            .support(k - 1)
            .unwrap_or_else(|| panic!("q_{} support is not enumerable", k - 1));
        let mut law: BTreeMap<Tree, f64> = BTreeMap::new();
        for (lambda, p_lambda) in support {
            if p_lambda == 0.0 || lambda.is_empty() {
                continue;
            }
            // Per size class: the multiset law of m_j i.i.d. Q_j draws.
            let mut combos: Vec<(Vec<Tree>, f64)> = vec![(Vec::new(), p_lambda)];
            for (j, m) in lambda.multiplicities() {
                let class = multiset_law_f64(&memo[j], m);
                let mut next = Vec::with_capacity(combos.len() * class.len());
                for (children, w) in &combos {
                    for (extra, cw) in &class {
                        let mut c = children.clone();
                        c.extend(extra.iter().cloned());
                        next.push((c, w * cw));
                    }
                }
                combos = next;
            }
            for (children, w) in combos {
                *law.entry(Tree::node(children)).or_insert(0.0) += w;
            }
        }
        memo.push(law);
    }
    memo.pop().unwrap()
}

/// Law of the unordered multiset of `m` i.i.d. draws from `law`.
fn multiset_law_f64(law: &BTreeMap<Tree, f64>, m: usize) -> Vec<(Vec<Tree>, f64)> {
    let items: Vec<(&Tree, f64)> = law.iter().map(|(t, &p)| (t, p)).collect();
    let mut out = Vec::new();
    // Non-increasing index sequences with the multinomial coefficient.
    fn rec(
        items: &[(&Tree, f64)],
        start: usize,
        left: usize,
        acc: &mut Vec<usize>,
        out: &mut Vec<(Vec<Tree>, f64)>,
    ) {
        if left == 0 {
            let m = acc.len();
            let mut coeff = 1.0;
            for i in 1..=m {
                coeff *= i as f64;
            }
            let mut prob = 1.0;
            let mut i = 0;
            while i < m {
                let mut j = i;
                while j < m && acc[j] == acc[i] {
                    j += 1;
                }
                for r in 1..=(j - i) {
                    coeff /= r as f64;
                }
                prob *= items[acc[i]].1.powi((j - i) as i32);
                i = j;
            }
            out.push((
                acc.iter().map(|&i| items[i].0.clone()).collect(),
                coeff * prob,
            ));
            return;
        }
        for i in start..items.len() {
            acc.push(i);
            rec(items, i, left - 1, acc, out);
            acc.pop();
        }
    }
    rec(&items, 0, m, &mut Vec::new(), &mut out);
    out
}

/// Exact vertex-model law in rational arithmetic, available when the
/// split law offers `pmf_rational` over its whole support for every
/// `k < n`. Probabilities sum to 1 exactly.
#[allow(non_snake_case)]
pub fn exact_Q_law_rational(q: &dyn SplitLaw, n: usize) -> Option<BTreeMap<Tree, BigRational>> {
    assert!(n <= 9, "exact_Q_law size cap is 9 (got {n})");
    let mut memo: Vec<BTreeMap<Tree, BigRational>> = Vec::with_capacity(n + 1);
    memo.push(BTreeMap::new());
    memo.push(BTreeMap::from([(Tree::leaf(), BigRational::one())]));
    for k in 2..=n {
        let support = q.support(k - 1)?;
        let mut law: BTreeMap<Tree, BigRational> = BTreeMap::new();
        for (lambda, p_f64) in support {
            if p_f64 == 0.0 || lambda.is_empty() {
                continue;
            }
            let p_lambda = q.pmf_rational(k - 1, &lambda)?;
            let mut combos: Vec<(Vec<Tree>, BigRational)> = vec![(Vec::new(), p_lambda)];
            for (j, m) in lambda.multiplicities() {
                let class = multiset_law_rational(&memo[j], m);
                let mut next = Vec::with_capacity(combos.len() * class.len());
                for (children, w) in &combos {
                    for (extra, cw) in &class {
                        let mut c = children.clone();
                        c.extend(extra.iter().cloned());
                        next.push((c, w * cw));
                    }
                }
                combos = next;
            }
            for (children, w) in combos {
                let entry = law.entry(Tree::node(children)).or_insert_with(BigRational::zero);
                *entry += w;
            }
        }
        memo.push(law);
    }
    memo.pop()
}

fn multiset_law_rational(
    law: &BTreeMap<Tree, BigRational>,
    m: usize,
) -> Vec<(Vec<Tree>, BigRational)> {
    let items: Vec<(&Tree, &BigRational)> = law.iter().collect();
    let mut out = Vec::new();
    fn rec(
        items: &[(&Tree, &BigRational)],
        start: usize,
        left: usize,
        acc: &mut Vec<usize>,
        out: &mut Vec<(Vec<Tree>, BigRational)>,
    ) {
        if left == 0 {
            let m = acc.len();
            let mut coeff = BigRational::one();
            for i in 1..=m {
                coeff *= BigRational::from_integer(i.into());
            }
            let mut prob = BigRational::one();
            let mut i = 0;
            while i < m {
                let mut j = i;
                while j < m && acc[j] == acc[i] {
                    j += 1;
                }
                for r in 1..=(j - i) {
                    coeff /= BigRational::from_integer(r.into());
                }
                for _ in i..j {
                    prob *= items[acc[i]].1;
                }
                i = j;
            }
            out.push((
                acc.iter().map(|&i| items[i].0.clone()).collect(),
                coeff * prob,
            ));
            return;
        }
        for i in start..items.len() {
            acc.push(i);
            rec(items, i, left - 1, acc, out);
            acc.pop();
        }
    }
    rec(&items, 0, m, &mut Vec::new(), &mut out);
    out
}

/// Exact leaf-model law `P^q_n` for laws with `q_k((k)) = 0` (no holds)
/// and `q₁(∅) = 1`, where the shape support is finite.
#[allow(non_snake_case)]
pub fn exact_P_law(q: &dyn SplitLaw, n: usize) -> BTreeMap<Tree, f64> {
    assert!(n <= 9, "exact_P_law size cap is 9 (got {n})");
    assert!((q.q1_empty() - 1.0).abs() < 1e-15, "needs q₁(∅) = 1");
    let mut memo: Vec<BTreeMap<Tree, f64>> = Vec::with_capacity(n + 1);
    memo.push(BTreeMap::new());
    memo.push(BTreeMap::from([(Tree::leaf(), 1.0)]));
    for k in 2..=n {
        let support = q
            .support(k)
            .unwrap_or_else(|| panic!("q_{k} support is not enumerable"));
        let mut law: BTreeMap<Tree, f64> = BTreeMap::new();
        for (lambda, p_lambda) in support {
            if p_lambda == 0.0 {
                continue;
            }
            assert!(
                lambda.p() >= 2,
                "exact_P_law requires proper splits (q_{k}(({k})) = 0)"
            );
            let mut combos: Vec<(Vec<Tree>, f64)> = vec![(Vec::new(), p_lambda)];
            for (j, m) in lambda.multiplicities() {
                let class = multiset_law_f64(&memo[j], m);
                let mut next = Vec::with_capacity(combos.len() * class.len());
                for (children, w) in &combos {
                    for (extra, cw) in &class {
                        let mut c = children.clone();
                        c.extend(extra.iter().cloned());
                        next.push((c, w * cw));
                    }
                }
                combos = next;
            }
            for (children, w) in combos {
                *law.entry(Tree::node(children)).or_insert(0.0) += w;
            }
        }
        memo.push(law);
    }
    memo.pop().unwrap()
}

/// Binary tree with leaf-set minima tracked, for the `(α,θ)` growth rule.
enum GrowNode {
    Leaf(usize),
    Node {
        leaves: usize,
        min: usize,
        left: Box<GrowNode>,
        right: Box<GrowNode>,
    },
}

impl GrowNode {
    fn leaves(&self) -> usize {
        match self {
            GrowNode::Leaf(_) => 1,
            GrowNode::Node { leaves, .. } => *leaves,
        }
    }

    fn min(&self) -> usize {
        match self {
            GrowNode::Leaf(l) => *l,
            GrowNode::Node { min, .. } => *min,
        }
    }

    fn to_tree(&self) -> Tree {
        match self {
            GrowNode::Leaf(_) => Tree::leaf(),
            GrowNode::Node { left, right, .. } => Tree::node(vec![left.to_tree(), right.to_tree()]),
        }
    }
}

/// Grafts a cherry in place of `t` (the new leaf joins on `t`'s root edge).
fn graft(t: GrowNode, label: usize) -> GrowNode {
    let leaves = t.leaves() + 1;
    let min = t.min().min(label);
    GrowNode::Node {
        leaves,
        min,
        left: Box::new(t),
        right: Box::new(GrowNode::Leaf(label)),
        }
}

fn grow_insert(t: GrowNode, label: usize, alpha: f64, theta: f64, rng: &mut dyn RngCore) -> GrowNode {
    match t {
        GrowNode::Leaf(_) => graft(t, label),
        GrowNode::Node {
            leaves,
            min,
            left,
            right,
        } => {
            // The subtree holding the smallest label (k leaves) weighs
            // k−1+θ, the other one (n−k)−α, the root edge α. This pairing
            // is pinned down by the split pmf: the size chain of the
            // smallest-label side reproduces q_{α,θ}(n−1,·) for general
            // (α,θ) only with θ on the smallest-label side (the two
            // pairings agree on the consistent line θ = 1−α).
            let small_is_left = left.min() < right.min();
            let k = if small_is_left {
                left.leaves()
            } else {
                right.leaves()
            } as f64;
            let nk = leaves as f64 - k;
            let w_root = alpha;
            let w_small = k - 1.0 + theta;
            let w_other = nk - alpha;
            let u: f64 = rng.gen::<f64>() * (w_root + w_small + w_other);
            if u < w_root {
                let whole = GrowNode::Node {
                    leaves,
                    min,
                    left,
                    right,
                };
                return graft(whole, label);
            }
            let into_small = u < w_root + w_small;
            let into_left = into_small == small_is_left;
            let (left, right) = if into_left {
                (Box::new(descend(*left, label, alpha, theta, rng)), right)
            } else {
                (left, Box::new(descend(*right, label, alpha, theta, rng)))
            };
            GrowNode::Node {
                leaves: leaves + 1,
                min: min.min(label),
                left,
                right,
            }
        }
    }
}

/// A subtree was selected: a single leaf gets the new cherry directly;
/// otherwise the weighting recurses inside it.
fn descend(t: GrowNode, label: usize, alpha: f64, theta: f64, rng: &mut dyn RngCore) -> GrowNode {
    match t {
        GrowNode::Leaf(_) => graft(t, label),
        node => grow_insert(node, label, alpha, theta, rng),
    }
}

/// Samples the unlabeled `(α,θ)`-growth tree with `n` leaves.
pub fn alpha_theta_grow(
    alpha: f64,
    theta: f64,
    n: usize,
    rng: &mut dyn RngCore,
) -> Tree {
    assert!(alpha > 0.0 && alpha < 1.0 && theta >= 0.0 && n >= 1);
    let mut t = GrowNode::Leaf(1);
    for label in 2..=n {
        t = grow_insert(t, label, alpha, theta, rng);
    }
    t.to_tree()
}

/// Depth of a uniformly random vertex in the vertex-model tree `Q^q_n`,
/// without building the tree: the walk stops at the current root with
/// probability `1/size` and otherwise descends into a size-biased part of
/// one split draw, which reproduces the uniform-vertex marginal exactly.
/// For the uniform-tree split law this is also the uniform-vertex depth of
/// a uniform tree, since single-component marginals of a uniform subtree
/// multiset are uniform.
pub fn sample_vertex_depth(q: &dyn SplitLaw, n: usize, rng: &mut dyn RngCore) -> usize {
    assert!(n >= 1);
    let mut size = n;
    let mut depth = 0usize;
    loop {
        if size == 1 || rng.gen::<f64>() < 1.0 / size as f64 {
            return depth;
        }
        let lambda = q.sample(size - 1, rng);
        let mut u = rng.gen::<f64>() * (size - 1) as f64;
        let mut next = *lambda.parts().last().expect("proper split");
        for &part in lambda.parts() {
            if u < part as f64 {
                next = part;
                break;
            }
            u -= part as f64;
        }
        size = next;
        depth += 1;
    }
}
