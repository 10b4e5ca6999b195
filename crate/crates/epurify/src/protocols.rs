//! The four purification protocols as executable procedures over [`crate::qstate`].
//!
//! Each protocol exists in two modes. Exact mode enumerates every classical
//! branch (all permutations, an explicit hash-vector list) and returns the
//! full [`OutcomeDistribution`]. Sampled mode draws the classical randomness
//! and the measurement outcome from a seeded ChaCha8 stream and returns one
//! [`RunRecord`] per run; per-run seeds are derived from (seed, run index)
//! with a SplitMix64 finalizer so results are independent of scheduling.
//!
//! Both parties live in one process; classical communication is recorded as
//! transcript [`Event`]s. Transcripts are replayable: feeding a record's
//! transcript back through [`replay_transcript`] reproduces the outcome.

use crate::qstate::{Ensemble, QStateError, RegisterLayout, SparseState};
use crate::scramble::{ScrambleMap, ScramblePerm};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("output dimension {m} does not divide input dimension {n}")]
    OutputDimension { n: u64, m: u64 },
    #[error("exact all-permutation mode requires N <= 6, got N = {0}")]
    TooManyPermutations(u64),
    #[error("hash-and-compare requires a power-of-2 dimension, got {0}")]
    DimensionNotPowerOfTwo(u64),
    #[error("hash round count {0} exceeds the supported maximum of 12")]
    TooManyHashRounds(usize),
    #[error("hash vector {0} out of range [0, {1})")]
    HashVectorOutOfRange(u64, u64),
    #[error("transcript does not describe a reachable outcome of this protocol")]
    TranscriptMismatch,
    #[error("parameters out of range: {0}")]
    BadParams(String),
    #[error(transparent)]
    State(#[from] QStateError),
}

/// One entry of the classical record of a protocol execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Event {
    /// Alice's random permutation, transmitted to Bob.
    Permutation(Vec<u64>),
    /// The hash vectors r_0..r_{s-1} chosen by Alice.
    HashVectors(Vec<u64>),
    /// Both parties measured `register` and obtained the same `value`.
    Matched { register: String, value: u64 },
    /// The two measurement results on `register` differed.
    Mismatched { register: String },
    /// Bob's ancilla measurement: all-zero means the hash comparison passed.
    HashResult { all_zero: bool },
    Fail,
}

pub type Transcript = Vec<Event>;

/// Squared magnitudes of the three-part split of a hashed state: diagonal
/// mass, off-diagonal mass the hash cannot see, off-diagonal mass it rejects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSplit {
    pub l0_sq: f64,
    pub l1_sq: f64,
    pub l2_sq: f64,
}

impl LambdaSplit {
    pub fn total(&self) -> f64 {
        self.l0_sq + self.l1_sq + self.l2_sq
    }
}

/// Protocol parameters and resource accounting attached to a distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub protocol: String,
    pub input_dim: u64,
    pub output_dim: u64,
    /// Dimension of the maximally entangled auxiliary input consumed.
    pub aux_dim: u64,
    /// EPR pairs debited for teleporting hash ancillas (log2 S).
    pub epr_pairs_teleported: u64,
    pub lambda: Option<LambdaSplit>,
}

/// One classical outcome with its probability and renormalized post-state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub transcript: Transcript,
    pub probability: f64,
    pub state: SparseState,
}

/// Full enumeration of a protocol's outcomes on one input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    pub branches: Vec<Branch>,
    pub fail_probability: f64,
    /// Probability mass of branches below 1e-15, dropped unrenormalized.
    pub residue: f64,
    pub metadata: Metadata,
}

impl OutcomeDistribution {
    /// fail + residue + Σ branch probabilities, which must be 1.
    pub fn total_probability(&self) -> f64 {
        self.fail_probability
            + self.residue
            + self.branches.iter().map(|b| b.probability).sum::<f64>()
    }

    pub fn success_probability(&self) -> f64 {
        self.branches.iter().map(|b| b.probability).sum()
    }

    /// Probability that the parties saw differing measurement results
    /// (a FAIL for the comparing protocols; a |Z⟩⊗|Z⟩ branch otherwise).
    pub fn mismatch_probability(&self) -> f64 {
        let branch_mass: f64 = self
            .branches
            .iter()
            .filter(|b| {
                b.transcript
                    .iter()
                    .any(|e| matches!(e, Event::Mismatched { .. }))
            })
            .map(|b| b.probability)
            .sum();
        branch_mass + self.fail_probability
    }

    /// Probability-weighted fidelity of the non-FAIL output against Ψ_dim
    /// (conditioned on not failing).
    pub fn mean_fidelity(&self, dim: u64) -> Result<f64, ProtocolError> {
        let mut num = 0.0;
        let mut den = 0.0;
        for b in &self.branches {
            num += b.probability * b.state.fidelity(dim)?;
            den += b.probability;
        }
        Ok(if den > 0.0 { num / den } else { 0.0 })
    }

    /// Fraction of non-FAIL probability mass whose branch fidelity against
    /// Ψ_dim is at least `threshold`.
    pub fn good_fidelity_fraction(&self, dim: u64, threshold: f64) -> Result<f64, ProtocolError> {
        let mut good = 0.0;
        let mut den = 0.0;
        for b in &self.branches {
            if b.state.fidelity(dim)? >= threshold {
                good += b.probability;
            }
            den += b.probability;
        }
        Ok(if den > 0.0 { good / den } else { 0.0 })
    }
}

/// The tuple ⟨N, K, M, ε, δ, p, q⟩ a protocol is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeppParams {
    pub n: u64,
    pub k: u64,
    pub m: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub p: Option<f64>,
    pub q: Option<f64>,
}

impl GeppParams {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let probs = [Some(self.epsilon), Some(self.delta), self.p, self.q];
        if probs.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ProtocolError::BadParams(
                "epsilon, delta, p, q must lie in [0, 1]".into(),
            ));
        }
        if self.n == 0 || self.k == 0 || self.m == 0 {
            return Err(ProtocolError::BadParams("N, K, M must be positive".into()));
        }
        Ok(())
    }
}

/// Record of a single sampled (or replayed) run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub transcript: Transcript,
    /// None means FAIL.
    pub outcome: Option<SparseState>,
    /// Fidelity of the outcome against the maximally entangled state of the
    /// protocol's output dimension.
    pub fidelity: Option<f64>,
    pub diagnostics: Option<LambdaSplit>,
}

impl RunRecord {
    pub fn failed(&self) -> bool {
        self.outcome.is_none()
    }
}

/// Measurement branches below this mass are folded into the residue.
const BRANCH_FLOOR: f64 = 1e-15;

// ---------------------------------------------------------------------------
// Random Permutation Protocol
// ---------------------------------------------------------------------------

/// One pass of the Random Permutation Protocol with an explicit permutation:
/// relabel both sides by π, measure the low (dim L = N/M) part on each side,
/// compare; matching results keep the dim-M remainder, differing results
/// output |Z_M⟩⊗|Z_M⟩. This protocol never fails.
pub fn random_permutation_with(
    input: &SparseState,
    m: u64,
    perm: &[u64],
) -> Result<OutcomeDistribution, ProtocolError> {
    let n = input.dim();
    if m == 0 || !n.is_multiple_of(m) {
        return Err(ProtocolError::OutputDimension { n, m });
    }
    let l = n / m;
    let moved = input.apply_permutation_both(perm)?;
    let out_layout = RegisterLayout::single("m", m)?;

    let mut branches = Vec::new();
    let mut residue = 0.0;
    let mut mismatch = 0.0;
    for low in 0..l {
        let mut amps = std::collections::BTreeMap::new();
        let mut prob = 0.0;
        for (&(a, b), &c) in moved.amps() {
            if a % l == low && b % l == low {
                amps.insert((a / l, b / l), c);
                prob += c.norm_sqr();
            }
        }
        if prob < BRANCH_FLOOR {
            residue += prob;
            continue;
        }
        let scale = 1.0 / prob.sqrt();
        let amps = amps.into_iter().map(|(k, c)| (k, c * scale)).collect();
        branches.push(Branch {
            transcript: vec![
                Event::Permutation(perm.to_vec()),
                Event::Matched {
                    register: "l".into(),
                    value: low,
                },
            ],
            probability: prob,
            state: SparseState::new(out_layout.clone(), out_layout.clone(), amps)?,
        });
    }
    for (&(a, b), &c) in moved.amps() {
        if a % l != b % l {
            mismatch += c.norm_sqr();
        }
    }
    if mismatch >= BRANCH_FLOOR {
        branches.push(Branch {
            transcript: vec![
                Event::Permutation(perm.to_vec()),
                Event::Mismatched { register: "l".into() },
            ],
            probability: mismatch,
            state: SparseState::basis(m, 0, 0)?,
        });
    } else {
        residue += mismatch;
    }
    Ok(OutcomeDistribution {
        branches,
        fail_probability: 0.0,
        residue,
        metadata: Metadata {
            protocol: "random-permutation".into(),
            input_dim: n,
            output_dim: m,
            aux_dim: 1,
            epr_pairs_teleported: 0,
            lambda: None,
        },
    })
}

/// Exact mode: average [`random_permutation_with`] over all N! permutations
/// with weight 1/N!. Requires N ≤ 6.
pub fn random_permutation_exact(
    input: &SparseState,
    m: u64,
) -> Result<OutcomeDistribution, ProtocolError> {
    let n = input.dim();
    if n > 6 {
        return Err(ProtocolError::TooManyPermutations(n));
    }
    let perms = permutations(n);
    let weight = 1.0 / perms.len() as f64;
    let mut branches = Vec::new();
    let mut residue = 0.0;
    let mut metadata = None;
    for perm in &perms {
        let mut dist = random_permutation_with(input, m, perm)?;
        residue += weight * dist.residue;
        for mut b in dist.branches.drain(..) {
            b.probability *= weight;
            branches.push(b);
        }
        metadata = Some(dist.metadata);
    }
    Ok(OutcomeDistribution {
        branches,
        fail_probability: 0.0,
        residue,
        metadata: metadata.expect("at least one permutation"),
    })
}

fn permutations(n: u64) -> Vec<Vec<u64>> {
    let mut current: Vec<u64> = (0..n).collect();
    let mut out = Vec::new();
    heap_permute(&mut current, n as usize, &mut out);
    out
}

fn heap_permute(items: &mut Vec<u64>, k: usize, out: &mut Vec<Vec<u64>>) {
    if k <= 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        if k.is_multiple_of(2) {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

// ---------------------------------------------------------------------------
// Simple Scrambling Protocol
// ---------------------------------------------------------------------------

/// Tensor the input with Ψ_K, scramble |x⟩|y⟩ ↦ |g⟩|h⟩|y⟩ on both sides,
/// Fourier (or Hadamard) the G register, measure and compare it. Matching
/// results keep the (H, Y) remainder of dimension W·K; differing results FAIL.
pub fn simple_scrambling(
    input: &SparseState,
    perm: &ScramblePerm,
    use_hadamard: bool,
) -> Result<OutcomeDistribution, ProtocolError> {
    let p = perm.params();
    if input.dim() != p.n {
        return Err(ProtocolError::BadParams(format!(
            "input dimension {} does not match scrambler N = {}",
            input.dim(),
            p.n
        )));
    }
    let flat = input.reshaped(RegisterLayout::single("x", p.n)?)?;
    let psi_k = SparseState::max_entangled(p.k).reshaped(RegisterLayout::single("y", p.k)?)?;
    let scrambled = flat.tensor(&psi_k)?.apply_scramble_both(perm)?;
    let split = scrambled.fourier_measure_compare("g", use_hadamard)?;

    let branches = split
        .matched
        .into_iter()
        .map(|mo| Branch {
            transcript: vec![Event::Matched {
                register: "g".into(),
                value: mo.outcome,
            }],
            probability: mo.probability,
            state: mo.state,
        })
        .collect();
    Ok(OutcomeDistribution {
        branches,
        fail_probability: split.mismatch_probability,
        residue: split.residue,
        metadata: Metadata {
            protocol: "simple-scrambling".into(),
            input_dim: p.n,
            output_dim: p.w * p.k,
            aux_dim: p.k,
            epr_pairs_teleported: 0,
            lambda: None,
        },
    })
}

// ---------------------------------------------------------------------------
// Hash and Compare Protocol
// ---------------------------------------------------------------------------

/// Alice hashes her index with each vector r_j (bitwise inner product),
/// teleports the ancilla bits to Bob, who XORs in his own hashes and
/// measures. All-zero results keep exactly the amplitudes with
/// (x_A ⊕ x_B) • r_j = 0 for every j, renormalized; anything else FAILs.
///
/// Teleportation is bookkept as `r.len()` consumed EPR pairs (the auxiliary
/// Ψ_S, S = 2^s), not simulated as a circuit.
pub fn hash_and_compare(
    input: &SparseState,
    r: &[u64],
) -> Result<OutcomeDistribution, ProtocolError> {
    let n = input.dim();
    if !n.is_power_of_two() {
        return Err(ProtocolError::DimensionNotPowerOfTwo(n));
    }
    if r.len() > 12 {
        return Err(ProtocolError::TooManyHashRounds(r.len()));
    }
    if let Some(&bad) = r.iter().find(|&&v| v >= n) {
        return Err(ProtocolError::HashVectorOutOfRange(bad, n));
    }

    let in_z = |diff: u64| r.iter().all(|&rj| (diff & rj).count_ones().is_multiple_of(2));
    let mut l0_sq = 0.0;
    let mut l1_sq = 0.0;
    let mut l2_sq = 0.0;
    let mut kept = std::collections::BTreeMap::new();
    for (&(a, b), &c) in input.amps() {
        if a == b {
            l0_sq += c.norm_sqr();
            kept.insert((a, b), c);
        } else if in_z(a ^ b) {
            l1_sq += c.norm_sqr();
            kept.insert((a, b), c);
        } else {
            l2_sq += c.norm_sqr();
        }
    }
    let lambda = LambdaSplit { l0_sq, l1_sq, l2_sq };
    let success = l0_sq + l1_sq;
    let metadata = Metadata {
        protocol: "hash-and-compare".into(),
        input_dim: n,
        output_dim: n,
        aux_dim: 1 << r.len(),
        epr_pairs_teleported: r.len() as u64,
        lambda: Some(lambda),
    };
    let mut branches = Vec::new();
    let mut residue = 0.0;
    if success >= BRANCH_FLOOR {
        let scale = 1.0 / success.sqrt();
        let amps = kept.into_iter().map(|(k, c)| (k, c * scale)).collect();
        branches.push(Branch {
            transcript: vec![
                Event::HashVectors(r.to_vec()),
                Event::HashResult { all_zero: true },
            ],
            probability: success,
            state: SparseState::new(input.layout_a().clone(), input.layout_b().clone(), amps)?,
        });
    } else {
        residue = success;
    }
    Ok(OutcomeDistribution {
        branches,
        fail_probability: l2_sq,
        residue,
        metadata,
    })
}

// ---------------------------------------------------------------------------
// Complete Scrambling Protocol
// ---------------------------------------------------------------------------

/// Hash-and-Compare with vectors `r`, then Simple Scrambling on the
/// surviving state; FAIL if either stage fails. Consumes Ψ_{S·K}.
pub fn complete_scrambling(
    input: &SparseState,
    perm: &ScramblePerm,
    r: &[u64],
    use_hadamard: bool,
) -> Result<OutcomeDistribution, ProtocolError> {
    let hashed = hash_and_compare(input, r)?;
    let p = perm.params();
    let mut branches = Vec::new();
    let mut fail = hashed.fail_probability;
    let mut residue = hashed.residue;
    for hb in &hashed.branches {
        let scrambled = simple_scrambling(&hb.state, perm, use_hadamard)?;
        fail += hb.probability * scrambled.fail_probability;
        residue += hb.probability * scrambled.residue;
        for sb in scrambled.branches {
            let mut transcript = hb.transcript.clone();
            transcript.extend(sb.transcript);
            branches.push(Branch {
                transcript,
                probability: hb.probability * sb.probability,
                state: sb.state,
            });
        }
    }
    Ok(OutcomeDistribution {
        branches,
        fail_probability: fail,
        residue,
        metadata: Metadata {
            protocol: "complete-scrambling".into(),
            input_dim: input.dim(),
            output_dim: p.w * p.k,
            aux_dim: (1u64 << r.len()) * p.k,
            epr_pairs_teleported: r.len() as u64,
            lambda: hashed.metadata.lambda,
        },
    })
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

/// Run an exact protocol on each pure component and merge the weighted
/// outcome distributions (fidelity and probabilities are linear over the
/// mixture, so this is the mixed-state run).
pub fn run_on_ensemble<F>(
    ensemble: &Ensemble,
    mut protocol: F,
) -> Result<OutcomeDistribution, ProtocolError>
where
    F: FnMut(&SparseState) -> Result<OutcomeDistribution, ProtocolError>,
{
    let mut merged: Option<OutcomeDistribution> = None;
    for (weight, component) in ensemble.components() {
        let mut dist = protocol(component)?;
        for b in &mut dist.branches {
            b.probability *= weight;
        }
        dist.fail_probability *= weight;
        dist.residue *= weight;
        match &mut merged {
            None => merged = Some(dist),
            Some(acc) => {
                acc.branches.extend(dist.branches);
                acc.fail_probability += dist.fail_probability;
                acc.residue += dist.residue;
            }
        }
    }
    merged.ok_or_else(|| ProtocolError::BadParams("empty ensemble".into()))
}

// ---------------------------------------------------------------------------
// Sampled mode
// ---------------------------------------------------------------------------

/// Which protocol a sampled run executes, with its fixed parameters.
#[derive(Debug, Clone)]
pub enum ProtocolConfig {
    RandomPermutation { m: u64 },
    SimpleScrambling { perm: ScramblePerm, use_hadamard: bool },
    HashAndCompare { s: usize },
    CompleteScrambling { perm: ScramblePerm, s: usize, use_hadamard: bool },
}

impl ProtocolConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RandomPermutation { .. } => "random-permutation",
            Self::SimpleScrambling { .. } => "simple-scrambling",
            Self::HashAndCompare { .. } => "hash-and-compare",
            Self::CompleteScrambling { .. } => "complete-scrambling",
        }
    }

    pub fn output_dim(&self, input_dim: u64) -> u64 {
        match self {
            Self::RandomPermutation { m } => *m,
            Self::SimpleScrambling { perm, .. } | Self::CompleteScrambling { perm, .. } => {
                let p = perm.params();
                p.w * p.k
            }
            Self::HashAndCompare { .. } => input_dim,
        }
    }
}

/// Per-run seed derivation (SplitMix64 finalizer over seed ⊕ golden-ratio
/// multiples of the run index), so any partition of runs over workers
/// produces identical records.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Execute one seeded run: draw the classical randomness, then sample a
/// measurement outcome from the exact per-draw distribution.
pub fn run_once(
    input: &SparseState,
    config: &ProtocolConfig,
    seed: u64,
) -> Result<RunRecord, ProtocolError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dist, prelude) = realize(input, config, &mut rng)?;
    let u: f64 = rng.gen();
    pick_outcome(&dist, prelude, u, seed, config.output_dim(input.dim()))
}

/// `runs` independent records with per-run seeds derived from `seed`.
pub fn sample_runs(
    input: &SparseState,
    config: &ProtocolConfig,
    runs: u64,
    seed: u64,
) -> Result<Vec<RunRecord>, ProtocolError> {
    (0..runs)
        .map(|i| run_once(input, config, derive_seed(seed, i)))
        .collect()
}

/// Draw classical randomness and return the resulting exact distribution
/// plus the transcript prelude recording the draws.
fn realize(
    input: &SparseState,
    config: &ProtocolConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(OutcomeDistribution, Transcript), ProtocolError> {
    match config {
        ProtocolConfig::RandomPermutation { m } => {
            let mut perm: Vec<u64> = (0..input.dim()).collect();
            perm.shuffle(rng);
            let dist = random_permutation_with(input, *m, &perm)?;
            Ok((dist, Vec::new())) // perm already present in branch transcripts
        }
        ProtocolConfig::SimpleScrambling { perm, use_hadamard } => {
            Ok((simple_scrambling(input, perm, *use_hadamard)?, Vec::new()))
        }
        ProtocolConfig::HashAndCompare { s } => {
            let r = draw_hash_vectors(rng, *s, input.dim())?;
            let dist = hash_and_compare(input, &r)?;
            Ok((dist, vec![Event::HashVectors(r)]))
        }
        ProtocolConfig::CompleteScrambling { perm, s, use_hadamard } => {
            let r = draw_hash_vectors(rng, *s, input.dim())?;
            let dist = complete_scrambling(input, perm, &r, *use_hadamard)?;
            Ok((dist, vec![Event::HashVectors(r)]))
        }
    }
}

fn draw_hash_vectors(
    rng: &mut ChaCha8Rng,
    s: usize,
    n: u64,
) -> Result<Vec<u64>, ProtocolError> {
    if s > 12 {
        return Err(ProtocolError::TooManyHashRounds(s));
    }
    Ok((0..s).map(|_| rng.gen_range(0..n)).collect())
}

fn pick_outcome(
    dist: &OutcomeDistribution,
    prelude: Transcript,
    u: f64,
    seed: u64,
    output_dim: u64,
) -> Result<RunRecord, ProtocolError> {
    let diagnostics = dist.metadata.lambda;
    // FAIL mass (plus the dropped residue) comes first in the cumulative walk.
    let mut acc = dist.fail_probability + dist.residue;
    if u < acc {
        let mut transcript = prelude;
        transcript.push(Event::Fail);
        return Ok(RunRecord {
            seed,
            transcript,
            outcome: None,
            fidelity: None,
            diagnostics,
        });
    }
    for b in &dist.branches {
        acc += b.probability;
        if u < acc || std::ptr::eq(b, dist.branches.last().unwrap()) {
            let mut transcript = prelude;
            transcript.extend(b.transcript.iter().cloned());
            let fidelity = b.state.fidelity(output_dim).ok();
            return Ok(RunRecord {
                seed,
                transcript,
                outcome: Some(b.state.clone()),
                fidelity,
                diagnostics,
            });
        }
    }
    // No branches at all: everything was FAIL mass.
    let mut transcript = prelude;
    transcript.push(Event::Fail);
    Ok(RunRecord {
        seed,
        transcript,
        outcome: None,
        fidelity: None,
        diagnostics,
    })
}

/// Re-execute a recorded run: classical draws are read from the transcript
/// and the recorded measurement outcome is selected deterministically.
pub fn replay_transcript(
    input: &SparseState,
    config: &ProtocolConfig,
    transcript: &Transcript,
) -> Result<RunRecord, ProtocolError> {
    // Reconstruct the classical randomness from the recorded events.
    let dist = match config {
        ProtocolConfig::RandomPermutation { m } => {
            let perm = transcript
                .iter()
                .find_map(|e| match e {
                    Event::Permutation(p) => Some(p.clone()),
                    _ => None,
                })
                .ok_or(ProtocolError::TranscriptMismatch)?;
            random_permutation_with(input, *m, &perm)?
        }
        ProtocolConfig::SimpleScrambling { perm, use_hadamard } => {
            simple_scrambling(input, perm, *use_hadamard)?
        }
        ProtocolConfig::HashAndCompare { .. } | ProtocolConfig::CompleteScrambling { .. } => {
            let r = transcript
                .iter()
                .find_map(|e| match e {
                    Event::HashVectors(r) => Some(r.clone()),
                    _ => None,
                })
                .ok_or(ProtocolError::TranscriptMismatch)?;
            match config {
                ProtocolConfig::HashAndCompare { .. } => hash_and_compare(input, &r)?,
                ProtocolConfig::CompleteScrambling { perm, use_hadamard, .. } => {
                    complete_scrambling(input, perm, &r, *use_hadamard)?
                }
                _ => unreachable!(),
            }
        }
    };
    let diagnostics = dist.metadata.lambda;
    if transcript.iter().any(|e| matches!(e, Event::Fail)) {
        return Ok(RunRecord {
            seed: 0,
            transcript: transcript.clone(),
            outcome: None,
            fidelity: None,
            diagnostics,
        });
    }
    // Match the recorded outcome events against a branch: every non-classical
    // recorded event must appear, in order, in the branch transcript.
    let outcome_events: Vec<&Event> = transcript
        .iter()
        .filter(|e| {
            !matches!(e, Event::Permutation(_) | Event::HashVectors(_))
        })
        .collect();
    let output_dim = config.output_dim(input.dim());
    for b in &dist.branches {
        let branch_events: Vec<&Event> = b
            .transcript
            .iter()
            .filter(|e| !matches!(e, Event::Permutation(_) | Event::HashVectors(_)))
            .collect();
        if branch_events == outcome_events {
            let fidelity = b.state.fidelity(output_dim).ok();
            return Ok(RunRecord {
                seed: 0,
                transcript: transcript.clone(),
                outcome: Some(b.state.clone()),
                fidelity,
                diagnostics,
            });
        }
    }
    Err(ProtocolError::TranscriptMismatch)
}

// ---------------------------------------------------------------------------
// Definition checking
// ---------------------------------------------------------------------------

/// Which flavor of the purification-protocol definition to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeppKind {
    /// Never fails; mean output fidelity ≥ 1-δ.
    Absolute,
    /// Fails with probability ≤ p; conditioned on success, fidelity ≥ 1-δ.
    Deterministic,
    /// Fails with probability ≤ p; conditioned on success, the output has
    /// fidelity ≥ 1-δ with probability ≥ 1-q.
    Probabilistic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeppReport {
    pub kind: GeppKind,
    pub fail_probability: f64,
    pub fail_bound: f64,
    pub fail_ok: bool,
    pub fidelity_statistic: f64,
    pub fidelity_bound: f64,
    pub fidelity_ok: bool,
    pub pass: bool,
}

const CHECK_TOLERANCE: f64 = 1e-9;

/// Evaluate the definition's two probability clauses against an exact
/// distribution.
pub fn check_gepp_exact(
    dist: &OutcomeDistribution,
    params: &GeppParams,
    kind: GeppKind,
) -> Result<GeppReport, ProtocolError> {
    params.validate()?;
    if dist.metadata.output_dim != params.m {
        return Err(ProtocolError::BadParams(format!(
            "distribution output dimension {} does not match M = {}",
            dist.metadata.output_dim, params.m
        )));
    }
    let fail = dist.fail_probability + dist.residue;
    let m = params.m;
    let (fail_bound, stat, bound) = match kind {
        GeppKind::Absolute => (0.0, dist.mean_fidelity(m)?, 1.0 - params.delta),
        GeppKind::Deterministic => (
            params.p.unwrap_or(0.0),
            dist.mean_fidelity(m)?,
            1.0 - params.delta,
        ),
        GeppKind::Probabilistic => (
            params.p.unwrap_or(0.0),
            dist.good_fidelity_fraction(m, 1.0 - params.delta - CHECK_TOLERANCE)?,
            1.0 - params.q.unwrap_or(0.0),
        ),
    };
    let fail_ok = fail <= fail_bound + CHECK_TOLERANCE;
    let fidelity_ok = stat >= bound - CHECK_TOLERANCE;
    Ok(GeppReport {
        kind,
        fail_probability: fail,
        fail_bound,
        fail_ok,
        fidelity_statistic: stat,
        fidelity_bound: bound,
        fidelity_ok,
        pass: fail_ok && fidelity_ok,
    })
}

/// Wilson score interval for a binomial proportion at `z` standard errors.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Evaluate the definition clauses against empirical run records; a clause
/// passes unless its Wilson interval (at `z` standard errors) excludes the
/// claimed bound.
pub fn check_gepp_empirical(
    records: &[RunRecord],
    params: &GeppParams,
    kind: GeppKind,
    z: f64,
) -> Result<GeppReport, ProtocolError> {
    params.validate()?;
    let trials = records.len() as u64;
    let fails = records.iter().filter(|r| r.failed()).count() as u64;
    let successes = trials - fails;
    let good = records
        .iter()
        .filter(|r| {
            r.fidelity
                .map(|f| f >= 1.0 - params.delta - CHECK_TOLERANCE)
                .unwrap_or(false)
        })
        .count() as u64;
    let fail_rate = fails as f64 / trials.max(1) as f64;
    let (fail_lo, _) = wilson_interval(fails, trials, z);
    let fail_bound = match kind {
        GeppKind::Absolute => 0.0,
        _ => params.p.unwrap_or(0.0),
    };
    let fail_ok = fail_lo <= fail_bound + CHECK_TOLERANCE;
    let good_frac = good as f64 / successes.max(1) as f64;
    let (_, good_hi) = wilson_interval(good, successes, z);
    let bound = match kind {
        GeppKind::Probabilistic => 1.0 - params.q.unwrap_or(0.0),
        _ => 1.0,
    };
    let fidelity_ok = match kind {
        // For the non-probabilistic kinds every success must be good.
        GeppKind::Absolute | GeppKind::Deterministic => good == successes,
        GeppKind::Probabilistic => good_hi >= bound - CHECK_TOLERANCE,
    };
    Ok(GeppReport {
        kind,
        fail_probability: fail_rate,
        fail_bound,
        fail_ok,
        fidelity_statistic: good_frac,
        fidelity_bound: bound,
        fidelity_ok,
        pass: fail_ok && fidelity_ok,
    })
}
