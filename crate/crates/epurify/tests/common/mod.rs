//! Shared test oracles: a dense brute-force implementation of the fused
//! Fourier/measure/compare step, built directly from the operator matrices
//! with no sparse shortcuts.

use epurify::qstate::SparseState;
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub struct DenseOutcome {
    pub outcome: u64,
    pub probability: f64,
    /// Renormalized post-state amplitudes keyed by (rest_a, rest_b).
    pub amps: BTreeMap<(u64, u64), Complex64>,
}

pub struct DenseSplit {
    pub matched: Vec<DenseOutcome>,
    pub mismatch_probability: f64,
}

/// The single-register Fourier (or Hadamard) matrix entry U[j][g].
fn phase(j: u64, g: u64, l: u64, hadamard: bool) -> Complex64 {
    let scale = 1.0 / (l as f64).sqrt();
    if hadamard {
        let sign = if (j & g).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        Complex64::new(sign * scale, 0.0)
    } else {
        Complex64::from_polar(scale, -2.0 * PI * ((j * g) % l) as f64 / l as f64)
    }
}

/// Dense oracle: materialize the full joint vector, apply U ⊗ conj(U) to the
/// measured register (Alice gets U, Bob its complex conjugate), then project
/// on every (j_A, j_B) outcome pair.
pub fn dense_fourier_measure_compare(
    state: &SparseState,
    register: &str,
    hadamard: bool,
) -> DenseSplit {
    let layout_a = state.layout_a();
    let layout_b = state.layout_b();
    let pos_a = layout_a.position(register).expect("register on side A");
    let pos_b = layout_b.position(register).expect("register on side B");
    let l = layout_a.registers()[pos_a].1;
    let dim = state.dim();

    // Slowest-varying first: suffix dimension of the measured register.
    let suffix_a: u64 = layout_a.registers()[pos_a + 1..].iter().map(|(_, d)| d).product();
    let suffix_b: u64 = layout_b.registers()[pos_b + 1..].iter().map(|(_, d)| d).product();
    let split = |index: u64, suffix: u64| -> (u64, u64, u64) {
        (index / (suffix * l), (index / suffix) % l, index % suffix)
    };
    let join = |prefix: u64, g: u64, suffix_val: u64, suffix: u64| -> u64 {
        (prefix * l + g) * suffix + suffix_val
    };

    // Dense joint vector.
    let mut vec_in = vec![Complex64::new(0.0, 0.0); (dim * dim) as usize];
    for (&(a, b), &c) in state.amps() {
        vec_in[(a * dim + b) as usize] = c;
    }

    // Apply U on Alice's register and conj(U) on Bob's.
    let mut vec_out = vec![Complex64::new(0.0, 0.0); (dim * dim) as usize];
    for a in 0..dim {
        let (pa, ga, sa) = split(a, suffix_a);
        for b in 0..dim {
            let c = vec_in[(a * dim + b) as usize];
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (pb, gb, sb) = split(b, suffix_b);
            for ja in 0..l {
                let ua = phase(ja, ga, l, hadamard);
                let a2 = join(pa, ja, sa, suffix_a);
                for jb in 0..l {
                    let ub = phase(jb, gb, l, hadamard).conj();
                    let b2 = join(pb, jb, sb, suffix_b);
                    vec_out[(a2 * dim + b2) as usize] += ua * ub * c;
                }
            }
        }
    }

    // Measure the register on both sides and compare.
    let mut matched = Vec::new();
    let mut mismatch = 0.0;
    for ja in 0..l {
        for jb in 0..l {
            let mut prob = 0.0;
            let mut amps = BTreeMap::new();
            for a in 0..dim {
                let (pa, ga, sa) = split(a, suffix_a);
                if ga != ja {
                    continue;
                }
                for b in 0..dim {
                    let (pb, gb, sb) = split(b, suffix_b);
                    if gb != jb {
                        continue;
                    }
                    let c = vec_out[(a * dim + b) as usize];
                    if c.norm_sqr() > 0.0 {
                        prob += c.norm_sqr();
                        amps.insert((pa * suffix_a + sa, pb * suffix_b + sb), c);
                    }
                }
            }
            if ja == jb {
                if prob >= 1e-15 {
                    let scale = 1.0 / prob.sqrt();
                    for c in amps.values_mut() {
                        *c *= scale;
                    }
                    matched.push(DenseOutcome {
                        outcome: ja,
                        probability: prob,
                        amps,
                    });
                }
            } else {
                mismatch += prob;
            }
        }
    }
    DenseSplit {
        matched,
        mismatch_probability: mismatch,
    }
}

/// |⟨u|v⟩| for two amplitude maps (1 when equal up to a global phase).
pub fn overlap(
    u: &BTreeMap<(u64, u64), Complex64>,
    v: &BTreeMap<(u64, u64), Complex64>,
) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (key, c) in u {
        if let Some(d) = v.get(key) {
            acc += c.conj() * d;
        }
    }
    acc.norm()
}
