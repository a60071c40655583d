//! Dislocation measures on the simplex of mass partitions, restricted
//! sampling, integral functionals, and the approximate continuum-tree
//! sampler.

use crate::quad::{adaptive_simpson, tanh_sinh};
use crate::trees::EdgeTree;
use rand::distributions::Distribution;
use rand::{Rng, RngCore};
use serde_json::Value;
use statrs::function::gamma::ln_gamma;

/// A finite non-increasing sequence of nonnegative masses with sum ≤ 1.
#[derive(Clone, Debug, PartialEq)]
pub struct MassPartition {
    entries: Vec<f64>,
}

impl MassPartition {
    pub fn new(mut entries: Vec<f64>) -> MassPartition {
        assert!(entries.iter().all(|&x| x >= 0.0), "negative mass");
        entries.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let total: f64 = entries.iter().sum();
        assert!(total <= 1.0 + 1e-12, "masses sum to {total} > 1");
        MassPartition { entries }
    }

    /// Binary partition `(x, 1−x)` for `x ∈ [1/2, 1]`.
    pub fn binary(x: f64) -> MassPartition {
        assert!((0.5..=1.0).contains(&x));
        MassPartition {
            entries: vec![x, 1.0 - x],
        }
    }

    pub fn masses(&self) -> &[f64] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().sum()
    }

    /// Largest mass `s₁` (0 for the empty sequence).
    pub fn s1(&self) -> f64 {
        self.entries.first().copied().unwrap_or(0.0)
    }
}

/// Binary dislocation densities on `[1/2, 1)` for `s₁` (with `s₂ = 1−s₁`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BinaryKind {
    /// `√(2/(π x³(1−x)³))`, the Brownian measure `ν₂`.
    Brownian,
    /// The `(α,θ)` density `f_{α,θ}`.
    AlphaTheta { alpha: f64, theta: f64 },
}

impl BinaryKind {
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            BinaryKind::Brownian => (2.0 / (std::f64::consts::PI * x.powi(3) * (1.0 - x).powi(3))).sqrt(),
            BinaryKind::AlphaTheta { alpha, theta } => {
                let g1a = ln_gamma(1.0 - alpha).exp();
                ((alpha * (1.0 - x) + theta * x) * x.powf(-alpha - 1.0) * (1.0 - x).powf(theta - 1.0)
                    + (alpha * x + theta * (1.0 - x)) * (1.0 - x).powf(-alpha - 1.0) * x.powf(theta - 1.0))
                    / g1a
            }
        }
    }
}

/// A σ-finite dislocation measure. Conservative by construction: every
/// sample sums to 1 and the pure-(1,0,…) state carries no mass.
#[derive(Clone, Debug)]
pub enum DislocationMeasure {
    /// Binary measure with density for `s₁` on `[1/2, x_max)`.
    Binary { kind: BinaryKind, x_max: f64 },
    /// Unit point mass at a fixed conservative partition.
    PointMass(MassPartition),
    /// Finite mixture of point masses with positive weights.
    Mixture(Vec<(f64, MassPartition)>),
    /// `ν_α` for `α ∈ (1,2)`: Poisson-atom construction, integration only.
    Stable { alpha: f64 },
}

/// The Brownian dislocation measure `ν₂`.
pub fn nu2() -> DislocationMeasure {
    DislocationMeasure::Binary {
        kind: BinaryKind::Brownian,
        x_max: 1.0,
    }
}

/// The binary `(α,θ)` measure `ν_{α,θ}`.
pub fn nu_alpha_theta(alpha: f64, theta: f64) -> DislocationMeasure {
    assert!(alpha > 0.0 && alpha < 1.0, "α ∈ (0,1)");
    assert!(theta >= 0.0, "θ ≥ 0");
    DislocationMeasure::Binary {
        kind: BinaryKind::AlphaTheta { alpha, theta },
        x_max: 1.0,
    }
}

/// The stable measure `ν_α` for `α ∈ (1,2)`.
pub fn nu_alpha(alpha: f64) -> DislocationMeasure {
    assert!(alpha > 1.0 && alpha < 2.0, "α ∈ (1,2)");
    DislocationMeasure::Stable { alpha }
}

/// Point mass at a conservative `s`.
pub fn point_mass(s: MassPartition) -> DislocationMeasure {
    assert!((s.total() - 1.0).abs() <= 1e-9, "point mass must be conservative");
    assert!(s.s1() < 1.0, "no mass on (1,0,…)");
    DislocationMeasure::PointMass(s)
}

/// Estimate of an integral functional, with a reported error.
#[derive(Clone, Copy, Debug)]
pub struct IntegralEstimate {
    pub value: f64,
    /// Monte Carlo standard error (0 for quadrature modes).
    pub std_error: f64,
    /// Bound on mass ignored by truncations (jump truncation for `ν_α`).
    pub tail_bound: f64,
}

impl DislocationMeasure {
    /// Parses `{"kind":"nu2"} | {"kind":"alpha_theta","alpha":..,"theta":..}
    /// | {"kind":"point","s":[..]} | {"kind":"stable","alpha":..}`.
    pub fn from_json(v: &Value) -> Result<DislocationMeasure, String> {
        let kind = v
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| "missing key: kind".to_string())?;
        let num = |key: &str| -> Result<f64, String> {
            v.get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| format!("missing key: {key}"))
        };
        match kind {
            "nu2" => Ok(nu2()),
            "alpha_theta" => Ok(nu_alpha_theta(num("alpha")?, num("theta")?)),
            "stable" => Ok(nu_alpha(num("alpha")?)),
            "point" => {
                let s = v
                    .get("s")
                    .and_then(Value::as_array)
                    .ok_or_else(|| "missing key: s".to_string())?
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(|| "missing key: s".to_string()))
                    .collect::<Result<Vec<f64>, String>>()?;
                Ok(point_mass(MassPartition::new(s)))
            }
            other => Err(format!("unknown kind: {other}")),
        }
    }

    /// `ν({1 − s₁ ≥ δ})`; finite for every `δ > 0`.
    pub fn restricted_mass(&self, delta: f64) -> f64 {
        assert!(delta > 0.0 && delta <= 0.5);
        match self {
            DislocationMeasure::Binary { kind, x_max } => {
                let hi = x_max.min(1.0 - delta);
                if hi <= 0.5 {
                    return 0.0;
                }
                tanh_sinh(|x| kind.density(x), 0.5, hi, 1e-10)
            }
            DislocationMeasure::PointMass(s) => {
                if 1.0 - s.s1() >= delta {
                    1.0
                } else {
                    0.0
                }
            }
            DislocationMeasure::Mixture(atoms) => atoms
                .iter()
                .filter(|(_, s)| 1.0 - s.s1() >= delta)
                .map(|(w, _)| w)
                .sum(),
            DislocationMeasure::Stable { .. } => {
                panic!("restricted sampling is not supported for stable ν_α")
            }
        }
    }

    /// `∫ f dν` for `f` with `|f(s)| ≤ c(1−s₁)`. Quadrature for binary and
    /// atomic measures; importance-weighted Monte Carlo over Poisson-atom
    /// simulations for `ν_α` (truncation bound reported).
    pub fn integrate<F: Fn(&MassPartition) -> f64>(
        &self,
        f: F,
        tol: f64,
        rng: &mut dyn RngCore,
    ) -> IntegralEstimate {
        match self {
            DislocationMeasure::Binary { kind, x_max } => {
                let value = tanh_sinh(
                    |x| f(&MassPartition::binary(x)) * kind.density(x),
                    0.5,
                    *x_max,
                    tol,
                );
                IntegralEstimate {
                    value,
                    std_error: 0.0,
                    tail_bound: 0.0,
                }
            }
            DislocationMeasure::PointMass(s) => IntegralEstimate {
                value: f(s),
                std_error: 0.0,
                tail_bound: 0.0,
            },
            DislocationMeasure::Mixture(atoms) => IntegralEstimate {
                value: atoms.iter().map(|(w, s)| w * f(s)).sum(),
                std_error: 0.0,
                tail_bound: 0.0,
            },
            DislocationMeasure::Stable { alpha } => {
                stable_integrate(*alpha, &f, 1e-6, 10_000, rng)
            }
        }
    }
}

/// `∫ f dν_α = (α²Γ(2−1/α)/Γ(2−α))·E[T·f((Δ_i/T)_i)]` by simulating the
/// Poisson atoms `Δ_i` above `eps_jump`. The compensator-free tail bound
/// `C_α · E-contribution of ignored jumps` is reported, not corrected.
pub fn stable_integrate<F: Fn(&MassPartition) -> f64>(
    alpha: f64,
    f: &F,
    eps_jump: f64,
    reps: usize,
    rng: &mut dyn RngCore,
) -> IntegralEstimate {
    let c_alpha = (2.0 * alpha.ln() + ln_gamma(2.0 - 1.0 / alpha) - ln_gamma(2.0 - alpha)).exp();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..reps {
        let (s, t) = stable_replicate(alpha, eps_jump, rng);
        let v = t * f(&s);
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / reps as f64;
    let var = (sumsq / reps as f64 - mean * mean).max(0.0);
    // Mean total mass of the ignored small jumps.
    let small = eps_jump.powf(1.0 - 1.0 / alpha) / ((1.0 - 1.0 / alpha) * alpha * ln_gamma(1.0 - 1.0 / alpha).exp());
    IntegralEstimate {
        value: c_alpha * mean,
        std_error: c_alpha * (var / reps as f64).sqrt(),
        tail_bound: c_alpha * small,
    }
}

/// One Poisson-atom replicate: atoms of intensity
/// `x^{−1−1/α}/(αΓ(1−1/α)) dx` above `eps`, normalized by their sum `T`.
/// The returned partition keeps the 64 largest normalized atoms.
pub fn stable_replicate(
    alpha: f64,
    eps: f64,
    rng: &mut dyn RngCore,
) -> (MassPartition, f64) {
    let lambda = eps.powf(-1.0 / alpha) / ln_gamma(1.0 - 1.0 / alpha).exp();
    let n = statrs::distribution::Poisson::new(lambda)
        .expect("positive rate")
        .sample(rng) as usize;
    let mut atoms: Vec<f64> = (0..n.max(1))
        .map(|_| {
            let u: f64 = rng.gen_range(0.0f64..1.0).max(f64::MIN_POSITIVE);
            eps * u.powf(-alpha)
        })
        .collect();
    let t: f64 = atoms.iter().sum();
    let keep = 64.min(atoms.len());
    atoms.select_nth_unstable_by(keep - 1, |a, b| b.partial_cmp(a).unwrap());
    atoms.truncate(keep);
    atoms.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for a in &mut atoms {
        *a /= t;
    }
    (MassPartition { entries: atoms }, t)
}

/// Precomputed inverse-CDF sampler for `ν(· | {1 − s₁ ≥ δ})`.
pub struct RestrictedSampler {
    measure: DislocationMeasure,
    /// Binary case: grid of `s₁` values and the normalized CDF over them.
    grid: Vec<f64>,
    cdf: Vec<f64>,
    /// Mixture case: cumulative weights over surviving atoms.
    atom_cdf: Vec<(f64, MassPartition)>,
    pub restricted_mass: f64,
}

const GRID_POINTS: usize = 1 << 14;

impl RestrictedSampler {
    pub fn new(measure: &DislocationMeasure, delta: f64) -> RestrictedSampler {
        let restricted_mass = measure.restricted_mass(delta);
        assert!(restricted_mass > 0.0, "restriction has zero mass");
        let (mut grid, mut cdf, mut atom_cdf) = (Vec::new(), Vec::new(), Vec::new());
        match measure {
            DislocationMeasure::Binary { kind, x_max } => {
                let hi = x_max.min(1.0 - delta);
                grid = (0..=GRID_POINTS)
                    .map(|i| 0.5 + (hi - 0.5) * i as f64 / GRID_POINTS as f64)
                    .collect();
                cdf = vec![0.0];
                let mut acc = 0.0;
                for w in grid.windows(2) {
                    acc += adaptive_simpson(|x| kind.density(x), w[0], w[1], 1e-12);
                    cdf.push(acc);
                }
                let z = *cdf.last().unwrap();
                for c in &mut cdf {
                    *c /= z;
                }
            }
            DislocationMeasure::PointMass(s) => {
                atom_cdf.push((1.0, s.clone()));
            }
            DislocationMeasure::Mixture(atoms) => {
                let mut acc = 0.0;
                for (w, s) in atoms {
                    if 1.0 - s.s1() >= delta {
                        acc += w / restricted_mass;
                        atom_cdf.push((acc, s.clone()));
                    }
                }
            }
            DislocationMeasure::Stable { .. } => {
                panic!("restricted sampling is not supported for stable ν_α")
            }
        }
        RestrictedSampler {
            measure: measure.clone(),
            grid,
            cdf,
            atom_cdf,
            restricted_mass,
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> MassPartition {
        if !self.atom_cdf.is_empty() {
            let u: f64 = rng.gen();
            let s = self
                .atom_cdf
                .iter()
                .find(|(c, _)| u <= *c)
                .unwrap_or(self.atom_cdf.last().unwrap());
            return s.1.clone();
        }
        let kind = match &self.measure {
            DislocationMeasure::Binary { kind, .. } => *kind,
            _ => unreachable!(),
        };
        let u: f64 = rng.gen();
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.grid.len() - 1);
        // Bisection refinement inside the bracketing cell to 1e-10.
        let (mut lo, mut hi) = (self.grid[i - 1], self.grid[i]);
        let (mut clo, chi) = (self.cdf[i - 1], self.cdf[i]);
        let density_scale = (chi - clo) / (hi - lo).max(f64::MIN_POSITIVE);
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            // Local linear CDF model refined by one Simpson panel.
            let add = adaptive_simpson(|x| kind.density(x), lo, mid, 1e-13)
                / (self.restricted_mass_binary_norm());
            if clo + add < u {
                clo += add;
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let _ = density_scale;
        MassPartition::binary(0.5 * (lo + hi))
    }

    fn restricted_mass_binary_norm(&self) -> f64 {
        self.restricted_mass
    }
}

/// One conditioned draw from `ν(· | {1 − s₁ ≥ δ})` together with the
/// restricted mass; builds a throwaway table for binary measures (use
/// [`RestrictedSampler`] directly for repeated draws).
pub fn sample_restricted(
    measure: &DislocationMeasure,
    delta: f64,
    rng: &mut dyn RngCore,
) -> (MassPartition, f64) {
    let sampler = RestrictedSampler::new(measure, delta);
    (sampler.sample(rng), sampler.restricted_mass)
}

/// Draws a tree from `P^{q̃}_n` with `q̃` the restricted-split law built
/// from `(ν, γ)` and returns it with every edge of length `n^{−γ}`.
pub fn approx_continuum_tree(
    measure: &DislocationMeasure,
    gamma: f64,
    n: usize,
    rng: &mut dyn RngCore,
) -> EdgeTree {
    let law = crate::splitlaws::PropexempleLaw::new(measure.clone(), gamma);
    let t = crate::samplers::sample_P(&law, n, rng);
    let scale = (n as f64).powf(-gamma);
    let lengths = vec![scale; t.size()];
    EdgeTree::new(t, lengths)
}
