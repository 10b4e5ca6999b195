//! Scrambling permutation families ⟨g_y, h_y⟩ and their verification.
//!
//! A scrambling permutation with parameter (N, K, W, L) is a family of K
//! function pairs g_y: X → G, h_y: X → H over X of size N = W·L such that
//! x ↦ g_y(x)∘h_y(x) is a bijection on X for every y, and every pair
//! x₁ ≠ x₂ collides on h_y for exactly the same number of y values. The
//! collision probability is then forced to (L-1)/(N-1).
//!
//! Three constructions are provided, all over GF(2^n):
//!
//! * multiplication table: g_y(x)∘h_y(x) = x·y with the top l bits as g;
//! * linear function: X = field pairs ⟨x₀,x₁⟩, Y = field ∪ {⊥};
//! * extended linear: X = field d-tuples, Y = all tuples of length < d.
//!
//! Encoding conventions (the constructions only fix the abstract maps, so
//! the integer encodings are pinned here):
//!
//! * Bit strings are big-endian: the leftmost symbol of a concatenation
//!   x∘y occupies the most significant bits.
//! * Y is indexed 0..K-1. For the linear construction index 0 is ⊥ and
//!   index i+1 is field element i; for the multiplication table index i is
//!   field element i+1 (zero is excluded); for the extended construction
//!   tuples are ordered by length then lexicographically, with ⊥ at 0.
//! * The linear construction encodes ⟨x₀,x₁⟩ with x₀ in the *low* n bits,
//!   while the extended construction packs ⟨x₀,...,x_{d-1}⟩ with x₀ in the
//!   most significant position. With these choices the d = 2 extended
//!   construction and the linear construction are identical as function
//!   tables.

use crate::gf2n::{gf_add, gf_inv, gf_mul, FieldElement, GfError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScrambleError {
    #[error("split point l={l} out of range for degree n={n} (need 1 <= l < n <= 8)")]
    SplitOutOfRange { n: u32, l: u32 },
    #[error("degree n={0} out of range for the linear construction (need 1 <= n <= 4)")]
    LinearDegreeOutOfRange(u32),
    #[error("extended construction too large: n*d = {0} exceeds 12, or d < 2")]
    ExtendedOutOfRange(u32),
    #[error("x value {0} outside X of size {1}")]
    XOutOfRange(u64, u64),
    #[error("y index {0} outside Y of size {1}")]
    YOutOfRange(u64, u64),
    #[error(transparent)]
    Field(#[from] GfError),
}

/// Sizes (N, K, W, L) of the sets X, Y, H, G.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrambleParams {
    /// |X|, the permutation domain.
    pub n: u64,
    /// |Y|, the number of parameters.
    pub k: u64,
    /// |H|, the size of the kept part.
    pub w: u64,
    /// |G|, the size of the compared part.
    pub l: u64,
}

impl ScrambleParams {
    /// N = W·L and N ≤ K·L must hold for any scrambling permutation.
    pub fn consistent(&self) -> bool {
        self.n == self.w * self.l && self.n <= self.k * self.l
    }
}

/// Evaluation interface shared by the constructions (and by test doubles).
pub trait ScrambleMap {
    fn params(&self) -> ScrambleParams;

    /// (g_y(x), h_y(x)) for x in [N] and y an index in [K].
    fn eval(&self, x: u64, y: u64) -> Result<(u64, u64), ScrambleError>;

    /// Combined permutation value g_y(x)∘h_y(x) as an integer in [N].
    fn combined(&self, x: u64, y: u64) -> Result<u64, ScrambleError> {
        let (g, h) = self.eval(x, y)?;
        Ok(g * self.params().w + h)
    }

    /// Preimage of (g, h) under y; inverse of the combined permutation.
    fn invert(&self, g: u64, h: u64, y: u64) -> Result<u64, ScrambleError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScrambleKind {
    /// g_y(x) = top l bits of x·y, h_y(x) = bottom n-l bits, over GF(2^n).
    MultiplicationTable { n: u32, l: u32 },
    /// h_y(⟨x₀,x₁⟩) = x₀·y + x₁ (or x₀ when y = ⊥), over GF(2^n).
    LinearFunction { n: u32 },
    /// The k-indexed tuple construction over GF(2^n)^d.
    ExtendedLinear { n: u32, d: u32 },
}

/// A concrete scrambling permutation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScramblePerm {
    pub params: ScrambleParams,
    pub kind: ScrambleKind,
}

pub fn make_multiplication_table(n: u32, l: u32) -> Result<ScramblePerm, ScrambleError> {
    if !(1 <= l && l < n && n <= 8) {
        return Err(ScrambleError::SplitOutOfRange { n, l });
    }
    Ok(ScramblePerm {
        params: ScrambleParams {
            n: 1 << n,
            k: (1 << n) - 1,
            w: 1 << (n - l),
            l: 1 << l,
        },
        kind: ScrambleKind::MultiplicationTable { n, l },
    })
}

pub fn make_linear_function(n: u32) -> Result<ScramblePerm, ScrambleError> {
    if !(1..=4).contains(&n) {
        return Err(ScrambleError::LinearDegreeOutOfRange(n));
    }
    Ok(ScramblePerm {
        params: ScrambleParams {
            n: 1 << (2 * n),
            k: (1 << n) + 1,
            w: 1 << n,
            l: 1 << n,
        },
        kind: ScrambleKind::LinearFunction { n },
    })
}

pub fn make_extended_linear(n: u32, d: u32) -> Result<ScramblePerm, ScrambleError> {
    if d < 2 || n * d > 12 {
        return Err(ScrambleError::ExtendedOutOfRange(n * d));
    }
    let field = 1u64 << n;
    // K = (2^{dn} - 1) / (2^n - 1) = 1 + 2^n + ... + 2^{(d-1)n}
    let k: u64 = (0..d).map(|j| field.pow(j)).sum();
    Ok(ScramblePerm {
        params: ScrambleParams {
            n: field.pow(d),
            k,
            w: field.pow(d - 1),
            l: field,
        },
        kind: ScrambleKind::ExtendedLinear { n, d },
    })
}

impl ScramblePerm {
    fn check_ranges(&self, x: u64, y: u64) -> Result<(), ScrambleError> {
        if x >= self.params.n {
            return Err(ScrambleError::XOutOfRange(x, self.params.n));
        }
        if y >= self.params.k {
            return Err(ScrambleError::YOutOfRange(y, self.params.k));
        }
        Ok(())
    }

    /// Decode an extended-construction y index into its tuple ⟨y₀,...,y_{k-1}⟩.
    fn decode_ext_y(y: u64, n: u32, d: u32) -> (u32, Vec<u32>) {
        let field = 1u64 << n;
        let mut rest = y;
        let mut k = 0u32;
        while k < d - 1 {
            let level = field.pow(k);
            if rest < level {
                break;
            }
            rest -= level;
            k += 1;
        }
        // rest encodes the tuple big-endian: y₀ in the most significant slot.
        let mut tuple = vec![0u32; k as usize];
        for i in (0..k).rev() {
            tuple[i as usize] = (rest % field) as u32;
            rest /= field;
        }
        (k, tuple)
    }

    /// Human-readable label of a y index: the field element it selects, or
    /// the (possibly empty) tuple of the extended construction, "⊥" for the
    /// length-0 tuple.
    pub fn y_label(&self, y: u64) -> Result<String, ScrambleError> {
        if y >= self.params.k {
            return Err(ScrambleError::YOutOfRange(y, self.params.k));
        }
        Ok(match self.kind {
            ScrambleKind::MultiplicationTable { .. } => format!("{}", y + 1),
            ScrambleKind::LinearFunction { .. } => {
                if y == 0 {
                    "⊥".to_string()
                } else {
                    format!("{}", y - 1)
                }
            }
            ScrambleKind::ExtendedLinear { n, d } => {
                let (k, tuple) = Self::decode_ext_y(y, n, d);
                if k == 0 {
                    "⊥".to_string()
                } else {
                    let parts: Vec<String> = tuple.iter().map(|v| v.to_string()).collect();
                    format!("⟨{}⟩", parts.join(","))
                }
            }
        })
    }
}

impl ScrambleMap for ScramblePerm {
    fn params(&self) -> ScrambleParams {
        self.params
    }

    fn eval(&self, x: u64, y: u64) -> Result<(u64, u64), ScrambleError> {
        self.check_ranges(x, y)?;
        match self.kind {
            ScrambleKind::MultiplicationTable { n, l } => {
                let xf = FieldElement::new(x as u32, n)?;
                let yf = FieldElement::new((y + 1) as u32, n)?;
                let prod = gf_mul(xf, yf)?.value() as u64;
                Ok((prod >> (n - l), prod & ((1 << (n - l)) - 1)))
            }
            ScrambleKind::LinearFunction { n } => {
                let mask = (1u64 << n) - 1;
                let x0 = FieldElement::new((x & mask) as u32, n)?;
                let x1 = FieldElement::new((x >> n) as u32, n)?;
                if y == 0 {
                    // ⊥ branch
                    Ok((x1.value() as u64, x0.value() as u64))
                } else {
                    let yf = FieldElement::new((y - 1) as u32, n)?;
                    let h = gf_add(gf_mul(x0, yf)?, x1)?;
                    Ok((x0.value() as u64, h.value() as u64))
                }
            }
            ScrambleKind::ExtendedLinear { n, d } => {
                let field = 1u64 << n;
                let (k, tuple) = Self::decode_ext_y(y, n, d);
                // x₀ is in the most significant position.
                let comp =
                    |i: u32| -> u64 { (x / field.pow(d - 1 - i)) % field };
                let xk = FieldElement::new(comp(k) as u32, n)?;
                let g = xk.value() as u64;
                let mut h = 0u64;
                for i in 0..d {
                    if i == k {
                        continue;
                    }
                    let xi = FieldElement::new(comp(i) as u32, n)?;
                    let out = if i < k {
                        let yi = FieldElement::new(tuple[i as usize], n)?;
                        gf_add(xi, gf_mul(xk, yi)?)?
                    } else {
                        xi
                    };
                    h = h * field + out.value() as u64;
                }
                Ok((g, h))
            }
        }
    }

    fn invert(&self, g: u64, h: u64, y: u64) -> Result<u64, ScrambleError> {
        let p = self.params;
        if g >= p.l {
            return Err(ScrambleError::XOutOfRange(g, p.l));
        }
        if h >= p.w {
            return Err(ScrambleError::XOutOfRange(h, p.w));
        }
        if y >= p.k {
            return Err(ScrambleError::YOutOfRange(y, p.k));
        }
        match self.kind {
            ScrambleKind::MultiplicationTable { n, l } => {
                let prod = (g << (n - l)) | h;
                let pf = FieldElement::new(prod as u32, n)?;
                let yf = FieldElement::new((y + 1) as u32, n)?;
                Ok(gf_mul(pf, gf_inv(yf)?)?.value() as u64)
            }
            ScrambleKind::LinearFunction { n } => {
                if y == 0 {
                    // g = x₁, h = x₀
                    Ok((g << n) | h)
                } else {
                    let x0 = FieldElement::new(g as u32, n)?;
                    let yf = FieldElement::new((y - 1) as u32, n)?;
                    let x1 = gf_add(FieldElement::new(h as u32, n)?, gf_mul(x0, yf)?)?;
                    Ok(((x1.value() as u64) << n) | x0.value() as u64)
                }
            }
            ScrambleKind::ExtendedLinear { n, d } => {
                let field = 1u64 << n;
                let (k, tuple) = Self::decode_ext_y(y, n, d);
                let xk = FieldElement::new(g as u32, n)?;
                let mut comps = vec![0u64; d as usize];
                comps[k as usize] = xk.value() as u64;
                let mut rest = h;
                let mut slots: Vec<u32> = (0..d).filter(|&i| i != k).collect();
                slots.reverse();
                for i in slots {
                    let hi = FieldElement::new((rest % field) as u32, n)?;
                    rest /= field;
                    comps[i as usize] = if i < k {
                        let yi = FieldElement::new(tuple[i as usize], n)?;
                        gf_add(hi, gf_mul(xk, yi)?)?.value() as u64
                    } else {
                        hi.value() as u64
                    };
                }
                Ok(comps.iter().fold(0u64, |acc, &c| acc * field + c))
            }
        }
    }
}

/// Result of exhaustively checking the two defining conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub params: ScrambleParams,
    /// Per-y bijectivity of x ↦ g_y(x)∘h_y(x), indexed by y.
    pub bijective_per_y: Vec<bool>,
    pub all_bijective: bool,
    /// Histogram: collision count per pair → number of pairs with that count.
    pub collision_histogram: BTreeMap<u64, u64>,
    /// Exact per-pair counts (x₁, x₂, count), kept when N ≤ 64.
    pub pair_counts: Option<Vec<(u64, u64, u64)>>,
    /// True when every pair has the same collision count.
    pub uniform: bool,
    /// Measured collision probability as an exact rational (count, K).
    pub measured_p: (u64, u64),
    /// count·(N−1) = K·(L−1) as exact integers.
    pub p_matches_formula: bool,
    /// N = W·L and N ≤ K·L.
    pub params_consistent: bool,
    pub pass: bool,
}

/// Exhaustively verify the permutation and scrambling conditions.
pub fn verify_scrambling(map: &dyn ScrambleMap) -> Result<VerificationReport, ScrambleError> {
    let p = map.params();
    let n = p.n;
    let mut bijective_per_y = Vec::with_capacity(p.k as usize);
    for y in 0..p.k {
        let mut seen = vec![false; n as usize];
        let mut ok = true;
        for x in 0..n {
            let v = map.combined(x, y)? as usize;
            if v >= n as usize || seen[v] {
                ok = false;
                break;
            }
            seen[v] = true;
        }
        bijective_per_y.push(ok);
    }
    let all_bijective = bijective_per_y.iter().all(|&b| b);

    // h values per (y, x), then exact collision counts per pair.
    let mut h_table = vec![0u64; (p.k * n) as usize];
    for y in 0..p.k {
        for x in 0..n {
            h_table[(y * n + x) as usize] = map.eval(x, y)?.1;
        }
    }
    let mut histogram: BTreeMap<u64, u64> = BTreeMap::new();
    let keep_pairs = n <= 64;
    let mut pair_counts = if keep_pairs { Some(Vec::new()) } else { None };
    for x1 in 0..n {
        for x2 in x1 + 1..n {
            let mut count = 0u64;
            for y in 0..p.k {
                if h_table[(y * n + x1) as usize] == h_table[(y * n + x2) as usize] {
                    count += 1;
                }
            }
            *histogram.entry(count).or_insert(0) += 1;
            if let Some(v) = pair_counts.as_mut() {
                v.push((x1, x2, count));
            }
        }
    }
    let uniform = histogram.len() == 1;
    let count = histogram.keys().next().copied().unwrap_or(0);
    let p_matches_formula = uniform && count * (n - 1) == p.k * (p.l - 1);
    let params_consistent = p.consistent();
    let pass = all_bijective && uniform && p_matches_formula && params_consistent;
    Ok(VerificationReport {
        params: p,
        bijective_per_y,
        all_bijective,
        collision_histogram: histogram,
        pair_counts,
        uniform,
        measured_p: (count, p.k),
        p_matches_formula,
        params_consistent,
        pass,
    })
}
