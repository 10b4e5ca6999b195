//! Sparse pure bipartite states with named registers, plus the state-level
//! primitives the protocols are built from: fidelity against the maximally
//! entangled target, diagonal-subspace projection, joint permutations, the
//! fused Fourier/Hadamard measure-and-compare step, Schmidt rank, trace
//! distance, and a seeded generator of states at a prescribed fidelity.
//!
//! States are sparse maps (Alice index, Bob index) → complex amplitude. All
//! public operations preserve unit norm within [`NORM_TOLERANCE`] and prune
//! amplitudes below [`PRUNE_THRESHOLD`]. Mixed states are ensembles of pure
//! states; there is no density-matrix evolution here.

use crate::scramble::{ScrambleError, ScrambleMap, ScramblePerm};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

/// Amplitudes with |amp| below this are dropped after every operation.
pub const PRUNE_THRESHOLD: f64 = 1e-12;
/// Allowed deviation of Σ|amp|² from 1.
pub const NORM_TOLERANCE: f64 = 1e-9;
/// Measurement branches with less probability than this are folded into the
/// numerical residue instead of renormalized.
pub const BRANCH_FLOOR: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum QStateError {
    #[error("state norm² = {0}, violates normalization within 1e-9")]
    NormalizationViolated(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: u64, got: u64 },
    #[error("register {0:?} not found on both sides with equal dimension")]
    RegisterNotFound(String),
    #[error("register layout invalid: {0}")]
    LayoutInvalid(String),
    #[error("map on [{0}] is not a bijection")]
    NonBijective(u64),
    #[error("Hadamard variant requires a power-of-2 register dimension, got {0}")]
    HadamardDimension(u64),
    #[error("epsilon {0} out of range [0, 1)")]
    EpsilonOutOfRange(f64),
    #[error("probability weights must be non-negative and sum to 1, got sum {0}")]
    BadEnsembleWeights(f64),
    #[error(transparent)]
    Scramble(#[from] ScrambleError),
    #[error("state file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("state file parse: {0}")]
    Json(#[from] serde_json::Error),
}

/// Ordered named registers; index decomposition is big-endian, matching
/// string concatenation (the first register holds the most significant part).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    regs: Vec<(String, u64)>,
}

impl RegisterLayout {
    /// The empty layout: total dimension 1, no registers.
    pub fn empty() -> Self {
        Self { regs: Vec::new() }
    }

    pub fn new(regs: Vec<(String, u64)>) -> Result<Self, QStateError> {
        for (name, dim) in &regs {
            if *dim < 2 {
                return Err(QStateError::LayoutInvalid(format!(
                    "register {name:?} has dimension {dim}; dimensions must be >= 2"
                )));
            }
        }
        Ok(Self { regs })
    }

    pub fn single(name: &str, dim: u64) -> Result<Self, QStateError> {
        if dim == 1 {
            return Ok(Self::empty());
        }
        Self::new(vec![(name.to_string(), dim)])
    }

    pub fn registers(&self) -> &[(String, u64)] {
        &self.regs
    }

    pub fn dim(&self) -> u64 {
        self.regs.iter().map(|(_, d)| d).product()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.regs.iter().position(|(n, _)| n == name)
    }

    /// Split `index` into (prefix, value of register at `pos`, suffix) where
    /// prefix/suffix are the packed values of the registers before/after it.
    fn split(&self, index: u64, pos: usize) -> (u64, u64, u64) {
        let suffix_dim: u64 = self.regs[pos + 1..].iter().map(|(_, d)| d).product();
        let dim = self.regs[pos].1;
        let suffix = index % suffix_dim;
        let value = (index / suffix_dim) % dim;
        let prefix = index / (suffix_dim * dim);
        (prefix, value, suffix)
    }

    fn without(&self, pos: usize) -> Self {
        let mut regs = self.regs.clone();
        regs.remove(pos);
        Self { regs }
    }

    /// Recombine a (prefix, suffix) pair after removing the register at `pos`.
    fn join_without(&self, pos: usize, prefix: u64, suffix: u64) -> u64 {
        let suffix_dim: u64 = self.regs[pos + 1..].iter().map(|(_, d)| d).product();
        prefix * suffix_dim + suffix
    }
}

/// A pure bipartite state over symmetric layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseState {
    layout_a: RegisterLayout,
    layout_b: RegisterLayout,
    amps: BTreeMap<(u64, u64), Complex64>,
}

impl SparseState {
    pub fn new(
        layout_a: RegisterLayout,
        layout_b: RegisterLayout,
        amps: BTreeMap<(u64, u64), Complex64>,
    ) -> Result<Self, QStateError> {
        if layout_a.dim() != layout_b.dim() {
            return Err(QStateError::DimensionMismatch {
                expected: layout_a.dim(),
                got: layout_b.dim(),
            });
        }
        let dim = layout_a.dim();
        for &(a, b) in amps.keys() {
            if a >= dim || b >= dim {
                return Err(QStateError::LayoutInvalid(format!(
                    "amplitude index ({a},{b}) outside dimension {dim}"
                )));
            }
        }
        let mut state = Self {
            layout_a,
            layout_b,
            amps,
        };
        state.prune();
        state.check_norm()?;
        Ok(state)
    }

    /// Ψ_N: N diagonal entries, each 1/√N.
    pub fn max_entangled(dim: u64) -> Self {
        let layout = RegisterLayout::single("x", dim).expect("dim >= 1");
        let amp = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        let amps = (0..dim).map(|i| ((i, i), amp)).collect();
        Self {
            layout_a: layout.clone(),
            layout_b: layout,
            amps,
        }
    }

    /// The basis product state |i⟩^A |j⟩^B at a given dimension.
    pub fn basis(dim: u64, i: u64, j: u64) -> Result<Self, QStateError> {
        let layout = RegisterLayout::single("x", dim)?;
        let mut amps = BTreeMap::new();
        amps.insert((i, j), Complex64::new(1.0, 0.0));
        Self::new(layout.clone(), layout, amps)
    }

    pub fn layout_a(&self) -> &RegisterLayout {
        &self.layout_a
    }

    pub fn layout_b(&self) -> &RegisterLayout {
        &self.layout_b
    }

    pub fn dim(&self) -> u64 {
        self.layout_a.dim()
    }

    pub fn amps(&self) -> &BTreeMap<(u64, u64), Complex64> {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|c| c.norm_sqr()).sum()
    }

    fn prune(&mut self) {
        self.amps.retain(|_, c| c.norm() >= PRUNE_THRESHOLD);
    }

    fn check_norm(&self) -> Result<(), QStateError> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(QStateError::NormalizationViolated(n));
        }
        Ok(())
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Result<Complex64, QStateError> {
        if self.dim() != other.dim() {
            return Err(QStateError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let (small, large, conj_small) = if self.amps.len() <= other.amps.len() {
            (&self.amps, &other.amps, true)
        } else {
            (&other.amps, &self.amps, false)
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (key, c) in small {
            if let Some(d) = large.get(key) {
                acc += if conj_small { c.conj() * d } else { d.conj() * c };
            }
        }
        Ok(acc)
    }

    /// F = |⟨φ|Ψ_N⟩|² = |Σ_x α_{x,x}|² / N.
    pub fn fidelity(&self, dim: u64) -> Result<f64, QStateError> {
        if self.dim() != dim {
            return Err(QStateError::DimensionMismatch {
                expected: dim,
                got: self.dim(),
            });
        }
        let d: Complex64 = self
            .amps
            .iter()
            .filter(|((a, b), _)| a == b)
            .map(|(_, c)| c)
            .sum();
        Ok(d.norm_sqr() / dim as f64)
    }

    /// Squared projection length onto the diagonal subspace: Σ_x |α_{x,x}|².
    pub fn fidelity_with_diagonal(&self) -> f64 {
        self.amps
            .iter()
            .filter(|((a, b), _)| a == b)
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }

    /// Relabel both sides by the same bijection on [dim].
    pub fn apply_permutation_both(&self, perm: &[u64]) -> Result<Self, QStateError> {
        let dim = self.dim();
        if perm.len() as u64 != dim {
            return Err(QStateError::DimensionMismatch {
                expected: dim,
                got: perm.len() as u64,
            });
        }
        let mut seen = vec![false; dim as usize];
        for &v in perm {
            if v >= dim || seen[v as usize] {
                return Err(QStateError::NonBijective(dim));
            }
            seen[v as usize] = true;
        }
        let amps = self
            .amps
            .iter()
            .map(|(&(a, b), &c)| ((perm[a as usize], perm[b as usize]), c))
            .collect();
        Ok(Self {
            layout_a: self.layout_a.clone(),
            layout_b: self.layout_b.clone(),
            amps,
        })
    }

    /// Joint relabeling |x⟩|y⟩ → |g_y(x)⟩|h_y(x)⟩|y⟩ on both sides.
    ///
    /// Requires a two-register layout (X of dim N, Y of dim K) on each side;
    /// the output layout is (g: L, h: W, y: K) per side.
    pub fn apply_scramble_both(&self, perm: &ScramblePerm) -> Result<Self, QStateError> {
        let p = perm.params();
        let check = |layout: &RegisterLayout| -> Result<(), QStateError> {
            let dims: Vec<u64> = layout.registers().iter().map(|(_, d)| *d).collect();
            if dims != [p.n, p.k] {
                return Err(QStateError::LayoutInvalid(format!(
                    "expected registers of dimensions [{}, {}], got {:?}",
                    p.n, p.k, dims
                )));
            }
            Ok(())
        };
        check(&self.layout_a)?;
        check(&self.layout_b)?;
        let out_layout = RegisterLayout::new(vec![
            ("g".to_string(), p.l),
            ("h".to_string(), p.w),
            ("y".to_string(), p.k),
        ])?;
        let relabel = |index: u64| -> Result<u64, QStateError> {
            let x = index / p.k;
            let y = index % p.k;
            let (g, h) = perm.eval(x, y)?;
            Ok((g * p.w + h) * p.k + y)
        };
        let mut amps = BTreeMap::new();
        for (&(a, b), &c) in &self.amps {
            amps.insert((relabel(a)?, relabel(b)?), c);
        }
        Ok(Self {
            layout_a: out_layout.clone(),
            layout_b: out_layout,
            amps,
        })
    }

    /// Tensor with another state on both sides (layouts concatenated).
    pub fn tensor(&self, other: &Self) -> Result<Self, QStateError> {
        let concat = |x: &RegisterLayout, y: &RegisterLayout| -> Result<RegisterLayout, QStateError> {
            let mut regs = x.registers().to_vec();
            regs.extend(y.registers().iter().cloned());
            let names: Vec<&String> = regs.iter().map(|(n, _)| n).collect();
            for (i, n) in names.iter().enumerate() {
                if names[i + 1..].contains(n) {
                    return Err(QStateError::LayoutInvalid(format!(
                        "duplicate register name {n:?} in tensor product"
                    )));
                }
            }
            RegisterLayout::new(regs)
        };
        let layout_a = concat(&self.layout_a, &other.layout_a)?;
        let layout_b = concat(&self.layout_b, &other.layout_b)?;
        let od = other.dim();
        let mut amps = BTreeMap::new();
        for (&(a1, b1), &c1) in &self.amps {
            for (&(a2, b2), &c2) in &other.amps {
                amps.insert((a1 * od + a2, b1 * od + b2), c1 * c2);
            }
        }
        Ok(Self {
            layout_a,
            layout_b,
            amps,
        })
    }

    /// Numerical rank of the amplitude matrix (threshold 1e-9).
    pub fn schmidt_rank(&self) -> usize {
        let rows: Vec<u64> = {
            let mut v: Vec<u64> = self.amps.keys().map(|&(a, _)| a).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let cols: Vec<u64> = {
            let mut v: Vec<u64> = self.amps.keys().map(|&(_, b)| b).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let col_of: BTreeMap<u64, usize> = cols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut matrix: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|&r| {
                let mut row = vec![Complex64::new(0.0, 0.0); cols.len()];
                for (&(_, b), &c) in self.amps.range((r, 0)..=(r, u64::MAX)) {
                    row[col_of[&b]] = c;
                }
                row
            })
            .collect();
        // Gaussian elimination with partial pivoting.
        let mut rank = 0;
        for col in 0..cols.len() {
            let pivot = (rank..matrix.len())
                .max_by(|&i, &j| {
                    matrix[i][col]
                        .norm()
                        .partial_cmp(&matrix[j][col].norm())
                        .unwrap()
                })
                .filter(|&i| matrix[i][col].norm() > 1e-9);
            let Some(p) = pivot else { continue };
            matrix.swap(rank, p);
            let inv = matrix[rank][col].inv();
            let (pivot_rows, rest) = matrix.split_at_mut(rank + 1);
            let pivot_row = &pivot_rows[rank];
            for row in rest {
                let factor = row[col] * inv;
                for (v, &p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *v -= factor * p;
                }
            }
            rank += 1;
        }
        rank
    }

    /// Pure-state trace distance √(1 − |⟨s1|s2⟩|²).
    pub fn trace_distance(&self, other: &Self) -> Result<f64, QStateError> {
        let overlap = self.inner(other)?.norm_sqr();
        Ok((1.0 - overlap).max(0.0).sqrt())
    }

    /// Seeded pure state with fidelity exactly 1-ε against Ψ_N:
    /// √(1-ε)·Ψ_N + √ε·|noise⟩ with the noise a random unit vector
    /// orthogonal to Ψ_N (restricted to the diagonal subspace on request).
    pub fn random_near_target(
        dim: u64,
        epsilon: f64,
        diagonal_only: bool,
        seed: u64,
    ) -> Result<Self, QStateError> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(QStateError::EpsilonOutOfRange(epsilon));
        }
        let target = Self::max_entangled(dim);
        if epsilon == 0.0 {
            return Ok(target);
        }
        if dim < 2 {
            return Err(QStateError::DimensionMismatch { expected: 2, got: dim });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gaussian = move || {
            // Box-Muller from two uniform draws.
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let v: f64 = rng.gen::<f64>();
            (-2.0 * u.ln()).sqrt() * (2.0 * PI * v).cos()
        };
        let keys: Vec<(u64, u64)> = if diagonal_only {
            (0..dim).map(|i| (i, i)).collect()
        } else {
            (0..dim)
                .flat_map(|a| (0..dim).map(move |b| (a, b)))
                .collect()
        };
        let mut noise: BTreeMap<(u64, u64), Complex64> = keys
            .iter()
            .map(|&k| (k, Complex64::new(gaussian(), gaussian())))
            .collect();
        // Project out the Ψ_N component, then normalize.
        let coeff = 1.0 / (dim as f64).sqrt();
        let overlap: Complex64 = (0..dim)
            .map(|i| coeff * noise.get(&(i, i)).copied().unwrap_or_default())
            .sum();
        for i in 0..dim {
            *noise.entry((i, i)).or_default() -= overlap * coeff;
        }
        let norm: f64 = noise.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let scale = epsilon.sqrt() / norm;
        let mut amps = noise;
        for c in amps.values_mut() {
            *c *= scale;
        }
        let base = (1.0 - epsilon).sqrt() * coeff;
        for i in 0..dim {
            *amps.entry((i, i)).or_default() += Complex64::new(base, 0.0);
        }
        Self::new(target.layout_a.clone(), target.layout_b.clone(), amps)
    }

    /// Fused Fourier (or Hadamard) + measure + compare on a named register.
    ///
    /// Alice applies the Fourier operator to her copy of the register, Bob
    /// the inverse Fourier operator (or both apply Hadamard when the
    /// register dimension is a power of 2); both then measure it. Matched
    /// outcomes are returned with their renormalized post-states (register
    /// removed), mismatched outcomes are aggregated into one probability.
    pub fn fourier_measure_compare(
        &self,
        register: &str,
        use_hadamard: bool,
    ) -> Result<OutcomeSplit, QStateError> {
        let pos_a = self
            .layout_a
            .position(register)
            .ok_or_else(|| QStateError::RegisterNotFound(register.to_string()))?;
        let pos_b = self
            .layout_b
            .position(register)
            .ok_or_else(|| QStateError::RegisterNotFound(register.to_string()))?;
        let dim_l = self.layout_a.registers()[pos_a].1;
        if self.layout_b.registers()[pos_b].1 != dim_l {
            return Err(QStateError::RegisterNotFound(register.to_string()));
        }
        if use_hadamard && !dim_l.is_power_of_two() {
            return Err(QStateError::HadamardDimension(dim_l));
        }

        // Group amplitudes by the unmeasured labels.
        let mut groups: BTreeMap<(u64, u64), Vec<Complex64>> = BTreeMap::new();
        for (&(a, b), &c) in &self.amps {
            let (pa, ga, sa) = self.layout_a.split(a, pos_a);
            let (pb, gb, sb) = self.layout_b.split(b, pos_b);
            let rest_a = self.layout_a.join_without(pos_a, pa, sa);
            let rest_b = self.layout_b.join_without(pos_b, pb, sb);
            let entry = groups
                .entry((rest_a, rest_b))
                .or_insert_with(|| vec![Complex64::new(0.0, 0.0); (dim_l * dim_l) as usize]);
            entry[(ga * dim_l + gb) as usize] += c;
        }

        let l = dim_l as usize;
        let lf = dim_l as f64;
        // phase(j, g) for Alice; Bob's operator is the complex conjugate.
        let phase = |j: usize, g: usize| -> Complex64 {
            if use_hadamard {
                let sign = if ((j & g).count_ones() & 1) == 1 { -1.0 } else { 1.0 };
                Complex64::new(sign, 0.0)
            } else {
                let angle = -2.0 * PI * ((j * g) % l) as f64 / lf;
                Complex64::from_polar(1.0, angle)
            }
        };

        // Amplitude sent to the matched outcome j by each group.
        let mut matched = Vec::with_capacity(l);
        let mut total_match = 0.0;
        let mut residue = 0.0;
        let out_layout_a = self.layout_a.without(pos_a);
        let out_layout_b = self.layout_b.without(pos_b);
        for j in 0..l {
            let mut amps: BTreeMap<(u64, u64), Complex64> = BTreeMap::new();
            let mut prob = 0.0;
            for (&key, grid) in &groups {
                let mut beta = Complex64::new(0.0, 0.0);
                for ga in 0..l {
                    let pa = phase(j, ga);
                    for gb in 0..l {
                        let c = grid[ga * l + gb];
                        if c != Complex64::new(0.0, 0.0) {
                            beta += pa * phase(j, gb).conj() * c;
                        }
                    }
                }
                beta /= lf;
                if beta.norm_sqr() > 0.0 {
                    prob += beta.norm_sqr();
                    amps.insert(key, beta);
                }
            }
            total_match += prob;
            if prob < BRANCH_FLOOR {
                residue += prob;
                continue;
            }
            let scale = 1.0 / prob.sqrt();
            for c in amps.values_mut() {
                *c *= scale;
            }
            let state = SparseState::new(out_layout_a.clone(), out_layout_b.clone(), amps)?;
            matched.push(MatchedOutcome {
                outcome: j as u64,
                probability: prob,
                state,
            });
        }
        let mismatch_probability = (1.0 - total_match).max(0.0);
        Ok(OutcomeSplit {
            register: register.to_string(),
            matched,
            mismatch_probability,
            residue,
        })
    }

    /// Reinterpret both sides under a new layout of the same total dimension
    /// (indices unchanged).
    pub fn reshaped(&self, layout: RegisterLayout) -> Result<Self, QStateError> {
        if layout.dim() != self.dim() {
            return Err(QStateError::DimensionMismatch {
                expected: self.dim(),
                got: layout.dim(),
            });
        }
        Ok(Self {
            layout_a: layout.clone(),
            layout_b: layout,
            amps: self.amps.clone(),
        })
    }

    /// Serialize to the JSON state-file schema.
    pub fn to_file(&self) -> StateFile {
        StateFile {
            dim: self.dim(),
            layout_a: self.layout_a.registers().to_vec(),
            layout_b: self.layout_b.registers().to_vec(),
            amps: self
                .amps
                .iter()
                .map(|(&(a, b), c)| (a, b, c.re, c.im))
                .collect(),
        }
    }

    pub fn from_file(file: StateFile) -> Result<Self, QStateError> {
        let layout_a = RegisterLayout::new(file.layout_a)?;
        let layout_b = RegisterLayout::new(file.layout_b)?;
        if layout_a.dim() != file.dim {
            return Err(QStateError::DimensionMismatch {
                expected: file.dim,
                got: layout_a.dim(),
            });
        }
        let amps = file
            .amps
            .into_iter()
            .map(|(a, b, re, im)| ((a, b), Complex64::new(re, im)))
            .collect();
        Self::new(layout_a, layout_b, amps)
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<(), QStateError> {
        let json = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self, QStateError> {
        let text = std::fs::read_to_string(path)?;
        let file: StateFile = serde_json::from_str(&text)?;
        Self::from_file(file)
    }
}

impl Serialize for SparseState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_file().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SparseState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let file = StateFile::deserialize(deserializer)?;
        Self::from_file(file).map_err(serde::de::Error::custom)
    }
}

/// On-disk representation: {"dim", "layout_a", "layout_b", "amps"}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateFile {
    pub dim: u64,
    pub layout_a: Vec<(String, u64)>,
    pub layout_b: Vec<(String, u64)>,
    pub amps: Vec<(u64, u64, f64, f64)>,
}

/// One matched measurement outcome of the fused compare step.
#[derive(Debug, Clone)]
pub struct MatchedOutcome {
    pub outcome: u64,
    pub probability: f64,
    pub state: SparseState,
}

/// Output of [`SparseState::fourier_measure_compare`].
#[derive(Debug, Clone)]
pub struct OutcomeSplit {
    pub register: String,
    pub matched: Vec<MatchedOutcome>,
    /// Aggregated probability that the two parties measure different values.
    pub mismatch_probability: f64,
    /// Probability mass of matched branches too small to renormalize.
    pub residue: f64,
}

impl OutcomeSplit {
    pub fn match_probability(&self) -> f64 {
        self.matched.iter().map(|m| m.probability).sum()
    }
}

/// A mixed state as a probabilistic mixture of pure states.
#[derive(Debug, Clone)]
pub struct Ensemble {
    components: Vec<(f64, SparseState)>,
}

impl Ensemble {
    pub fn new(components: Vec<(f64, SparseState)>) -> Result<Self, QStateError> {
        let sum: f64 = components.iter().map(|(p, _)| p).sum();
        if components.iter().any(|(p, _)| *p < 0.0) || (sum - 1.0).abs() > NORM_TOLERANCE {
            return Err(QStateError::BadEnsembleWeights(sum));
        }
        Ok(Self { components })
    }

    pub fn pure(state: SparseState) -> Self {
        Self {
            components: vec![(1.0, state)],
        }
    }

    pub fn components(&self) -> &[(f64, SparseState)] {
        &self.components
    }

    /// Fidelity is linear over the mixture: Σ p_i F(φ_i).
    pub fn fidelity(&self, dim: u64) -> Result<f64, QStateError> {
        let mut acc = 0.0;
        for (p, state) in &self.components {
            acc += p * state.fidelity(dim)?;
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn max_entangled_shape() {
        let s = SparseState::max_entangled(4);
        assert_eq!(s.amps().len(), 4);
        for i in 0..4 {
            assert_abs_diff_eq!(s.amps()[&(i, i)].re, 0.5, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(s.fidelity(4).unwrap(), 1.0, epsilon = 1e-12);

        let one = SparseState::max_entangled(1);
        assert_eq!(one.amps()[&(0, 0)].re, 1.0);
        assert_eq!(one.layout_a().registers().len(), 0);
    }

    #[test]
    fn fidelity_of_basis_state() {
        // |0⟩|0⟩ at dimension N has fidelity 1/N.
        for n in [2u64, 4, 8] {
            let s = SparseState::basis(n, 0, 0).unwrap();
            assert_abs_diff_eq!(s.fidelity(n).unwrap(), 1.0 / n as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn adversarial_mix_has_fidelity_one_minus_eps() {
        // (1-ε')Ψ_N + ε'|Z,Z⟩ with ε' = εN/(N-1) has fidelity 1-ε.
        let (n, eps) = (4u64, 0.1);
        let eps_prime = eps * n as f64 / (n as f64 - 1.0);
        let ens = Ensemble::new(vec![
            (1.0 - eps_prime, SparseState::max_entangled(n)),
            (eps_prime, SparseState::basis(n, 0, 0).unwrap()),
        ])
        .unwrap();
        assert_abs_diff_eq!(ens.fidelity(n).unwrap(), 1.0 - eps, epsilon = 1e-12);
    }

    #[test]
    fn fidelity_with_diagonal_cases() {
        let diag = SparseState::max_entangled(4);
        assert_abs_diff_eq!(diag.fidelity_with_diagonal(), 1.0, epsilon = 1e-12);

        // (|01⟩+|10⟩)/√2 is fully off-diagonal.
        let layout = RegisterLayout::single("x", 2).unwrap();
        let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let off = SparseState::new(
            layout.clone(),
            layout,
            [((0, 1), c), ((1, 0), c)].into_iter().collect(),
        )
        .unwrap();
        assert_abs_diff_eq!(off.fidelity_with_diagonal(), 0.0, epsilon = 1e-12);

        // √(1-δ)·diag + √δ·offdiag.
        let delta = 0.3;
        let s = SparseState::random_near_target(4, delta, false, 7).unwrap();
        // fidelity 1-δ implies diagonal projection >= 1-δ; the generator's
        // Pythagoras property is asserted through fidelity.
        assert_abs_diff_eq!(s.fidelity(4).unwrap(), 1.0 - delta, epsilon = 1e-10);
    }

    #[test]
    fn permutation_preserves_max_entangled_and_diag_fidelity() {
        let psi = SparseState::max_entangled(4);
        let perm = [2u64, 0, 3, 1];
        let moved = psi.apply_permutation_both(&perm).unwrap();
        assert_abs_diff_eq!(moved.fidelity(4).unwrap(), 1.0, epsilon = 1e-12);

        let s = SparseState::random_near_target(4, 0.2, true, 11).unwrap();
        let f0 = s.fidelity(4).unwrap();
        let f1 = s.apply_permutation_both(&perm).unwrap().fidelity(4).unwrap();
        assert_abs_diff_eq!(f0, f1, epsilon = 1e-12);

        assert!(psi.apply_permutation_both(&[0, 0, 1, 2]).is_err());
    }

    #[test]
    fn identity_permutation_is_noop() {
        let s = SparseState::random_near_target(4, 0.15, false, 3).unwrap();
        let t = s.apply_permutation_both(&[0, 1, 2, 3]).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn scramble_relabel_properties() {
        use crate::scramble::make_multiplication_table;
        let perm = make_multiplication_table(3, 1).unwrap();
        let input = SparseState::random_near_target(8, 0.2, true, 5).unwrap();
        // Ψ_K, named "y" so tensoring with the "x" input is legal.
        let psi_k = {
            let layout = RegisterLayout::single("y", 7).unwrap();
            let amp = Complex64::new(1.0 / 7f64.sqrt(), 0.0);
            SparseState::new(
                layout.clone(),
                layout,
                (0..7).map(|i| ((i, i), amp)).collect(),
            )
            .unwrap()
        };
        let scrambled = input.tensor(&psi_k).unwrap().apply_scramble_both(&perm).unwrap();
        // diagonal stays diagonal; entry count preserved
        assert!(scrambled.amps().keys().all(|(a, b)| a == b));
        assert_eq!(scrambled.amps().len(), input.amps().len() * 7);
        assert_abs_diff_eq!(scrambled.norm_sqr(), 1.0, epsilon = 1e-12);
        // y index 0 is field element 1: identity on the x bits
        for (&(a, _), &c) in scrambled.amps() {
            let y = a % 7;
            if y == 0 {
                let x = a / 7;
                let orig = input.amps().get(&(x, x)).copied().unwrap_or_default() / 7f64.sqrt();
                assert_abs_diff_eq!((c - orig).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn schmidt_rank_cases() {
        assert_eq!(SparseState::max_entangled(5).schmidt_rank(), 5);
        assert_eq!(SparseState::basis(4, 2, 3).unwrap().schmidt_rank(), 1);
        // EPR pair tensored with a product factor still has rank 2.
        let epr = SparseState::max_entangled(2);
        let joint = {
            let layout = RegisterLayout::single("z", 2).unwrap();
            let mut amps = BTreeMap::new();
            amps.insert((0, 0), Complex64::new(1.0, 0.0));
            let p = SparseState::new(layout.clone(), layout, amps).unwrap();
            epr.tensor(&p).unwrap()
        };
        assert_eq!(joint.schmidt_rank(), 2);
    }

    #[test]
    fn trace_distance_cases() {
        let s = SparseState::random_near_target(4, 0.3, false, 9).unwrap();
        assert_abs_diff_eq!(s.trace_distance(&s).unwrap(), 0.0, epsilon = 1e-9);
        let a = SparseState::basis(2, 0, 0).unwrap();
        let b = SparseState::basis(2, 1, 1).unwrap();
        assert_abs_diff_eq!(a.trace_distance(&b).unwrap(), 1.0, epsilon = 1e-12);
        // For pure states D = √(1-F) exactly.
        let psi = SparseState::max_entangled(4);
        let f = s.inner(&psi).unwrap().norm_sqr();
        assert_abs_diff_eq!(
            s.trace_distance(&psi).unwrap(),
            (1.0 - f).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn random_near_target_contract() {
        for seed in 0..20u64 {
            let eps = 0.05 + 0.02 * seed as f64 / 2.0;
            let s = SparseState::random_near_target(8, eps, false, seed).unwrap();
            assert_abs_diff_eq!(s.fidelity(8).unwrap(), 1.0 - eps, epsilon = 1e-9);
            assert_abs_diff_eq!(s.norm_sqr(), 1.0, epsilon = 1e-9);
            let d = SparseState::random_near_target(8, eps, true, seed).unwrap();
            assert_abs_diff_eq!(d.fidelity_with_diagonal(), 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(d.fidelity(8).unwrap(), 1.0 - eps, epsilon = 1e-9);
        }
        assert!(SparseState::random_near_target(8, 1.0, false, 0).is_err());
        // determinism
        let a = SparseState::random_near_target(8, 0.2, false, 42).unwrap();
        let b = SparseState::random_near_target(8, 0.2, false, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fourier_compare_on_max_entangled() {
        // Ψ_L ⊗ rest: mismatch probability 0, each outcome at 1/L.
        let psi = SparseState::max_entangled(4);
        let split = psi.fourier_measure_compare("x", true).unwrap();
        assert_abs_diff_eq!(split.mismatch_probability, 0.0, epsilon = 1e-12);
        assert_eq!(split.matched.len(), 4);
        for m in &split.matched {
            assert_abs_diff_eq!(m.probability, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn fourier_and_hadamard_agree_on_diagonal_inputs() {
        let s = SparseState::random_near_target(8, 0.25, true, 17).unwrap();
        let f = s.fourier_measure_compare("x", false).unwrap();
        let h = s.fourier_measure_compare("x", true).unwrap();
        assert_abs_diff_eq!(
            f.match_probability(),
            h.match_probability(),
            epsilon = 1e-10
        );
        for (mf, mh) in f.matched.iter().zip(&h.matched) {
            assert_abs_diff_eq!(mf.probability, mh.probability, epsilon = 1e-10);
            // identical post-states up to global phase
            let overlap = mf.state.inner(&mh.state).unwrap().norm();
            assert_abs_diff_eq!(overlap, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn hadamard_requires_power_of_two() {
        let layout = RegisterLayout::single("x", 3).unwrap();
        let amp = Complex64::new(1.0 / 3f64.sqrt(), 0.0);
        let s = SparseState::new(
            layout.clone(),
            layout,
            (0..3).map(|i| ((i, i), amp)).collect(),
        )
        .unwrap();
        assert!(matches!(
            s.fourier_measure_compare("x", true),
            Err(QStateError::HadamardDimension(3))
        ));
        assert!(matches!(
            s.fourier_measure_compare("nope", false),
            Err(QStateError::RegisterNotFound(_))
        ));
    }

    #[test]
    fn state_file_roundtrip_and_validation() {
        let s = SparseState::random_near_target(4, 0.1, false, 1).unwrap();
        let file = s.to_file();
        let back = SparseState::from_file(file).unwrap();
        assert_eq!(s, back);

        let mut bad = s.to_file();
        bad.amps[0].2 *= 3.0;
        assert!(matches!(
            SparseState::from_file(bad),
            Err(QStateError::NormalizationViolated(_))
        ));
    }

    #[test]
    fn ensemble_weights_validated() {
        let s = SparseState::max_entangled(2);
        assert!(Ensemble::new(vec![(0.5, s.clone()), (0.4, s.clone())]).is_err());
        assert!(Ensemble::new(vec![(1.2, s.clone()), (-0.2, s)]).is_err());
    }
}
