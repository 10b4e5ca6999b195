//! Randomized property suites over the field, scrambler, and state layers.

use epurify::gf2n::{gf_add, gf_inv, gf_mul, FieldElement};
use epurify::protocols::{random_permutation_exact, run_on_ensemble};
use epurify::qstate::{Ensemble, SparseState};
use epurify::scramble::{
    make_extended_linear, make_linear_function, make_multiplication_table, ScrambleMap,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn field_axioms(n in 1u32..=8, a in 0u32..256, b in 0u32..256, c in 0u32..256) {
        let mask = (1u32 << n) - 1;
        let (a, b, c) = (
            FieldElement::new(a & mask, n).unwrap(),
            FieldElement::new(b & mask, n).unwrap(),
            FieldElement::new(c & mask, n).unwrap(),
        );
        prop_assert_eq!(gf_mul(a, b).unwrap(), gf_mul(b, a).unwrap());
        prop_assert_eq!(
            gf_mul(a, gf_mul(b, c).unwrap()).unwrap(),
            gf_mul(gf_mul(a, b).unwrap(), c).unwrap()
        );
        prop_assert_eq!(
            gf_mul(a, gf_add(b, c).unwrap()).unwrap(),
            gf_add(gf_mul(a, b).unwrap(), gf_mul(a, c).unwrap()).unwrap()
        );
        if !a.is_zero() {
            let inv = gf_inv(a).unwrap();
            prop_assert_eq!(gf_mul(a, inv).unwrap(), FieldElement::one(n));
        }
    }

    #[test]
    fn scramble_eval_invert_roundtrip(pick in 0usize..3, x in 0u64..64, y in 0u64..64) {
        let perm = match pick {
            0 => make_multiplication_table(4, 2).unwrap(),
            1 => make_linear_function(2).unwrap(),
            _ => make_extended_linear(2, 3).unwrap(),
        };
        let p = perm.params();
        let (x, y) = (x % p.n, y % p.k);
        let (g, h) = perm.eval(x, y).unwrap();
        prop_assert!(g < p.l && h < p.w);
        prop_assert_eq!(perm.invert(g, h, y).unwrap(), x);
    }

    #[test]
    fn trace_distance_and_triangle(
        dim in prop::sample::select(vec![2u64, 4, 8]),
        e1 in 0.0f64..0.45,
        e2 in 0.0f64..0.45,
        e3 in 0.0f64..0.45,
        seed in 0u64..1_000_000,
    ) {
        let a = SparseState::random_near_target(dim, e1, false, seed).unwrap();
        let b = SparseState::random_near_target(dim, e2, false, seed + 1).unwrap();
        let c = SparseState::random_near_target(dim, e3, false, seed + 2).unwrap();
        let fid = |u: &SparseState, v: &SparseState| u.inner(v).unwrap().norm_sqr();
        for (u, v) in [(&a, &b), (&a, &c), (&b, &c)] {
            let d = u.trace_distance(v).unwrap();
            prop_assert!(d <= (1.0 - fid(u, v)).max(0.0).sqrt() + 1e-9);
            prop_assert!((0.0..=1.0 + 1e-9).contains(&d));
        }
        let e = 1.0 - fid(&a, &b);
        let d = 1.0 - fid(&a, &c);
        if e <= 0.5 && d <= 0.5 {
            prop_assert!(fid(&b, &c) >= 1.0 - 2.0 * (e + d) - 1e-9);
        }
    }

    /// No mean output fidelity on the adversarial mixture ever exceeds the
    /// absolute bound, which the random permutation protocol attains at K=1.
    #[test]
    fn absolute_bound_witness(eps in 0.01f64..0.4, m in prop::sample::select(vec![2u64, 4])) {
        let n = 4u64;
        let eps_prime = eps * n as f64 / (n as f64 - 1.0);
        prop_assume!(eps_prime <= 1.0);
        let ens = Ensemble::new(vec![
            (1.0 - eps_prime, SparseState::max_entangled(n)),
            (eps_prime, SparseState::basis(n, 0, 0).unwrap()),
        ]).unwrap();
        let dist = run_on_ensemble(&ens, |s| random_permutation_exact(s, m)).unwrap();
        let bound =
            1.0 - ((m - 1) as f64 / m as f64) * (n as f64 / (n as f64 - 1.0)) * eps;
        let mean = dist.mean_fidelity(m).unwrap();
        prop_assert!(mean <= bound + 1e-9);
        prop_assert!((mean - bound).abs() <= 1e-9); // tight at K = 1
    }
}
