//! The random permutation protocol: an absolute purification protocol (it
//! never fails) whose mean output fidelity meets the general upper bound
//! 1 - ((M-K)/M)(N/(N-1))eps with equality -- no protocol without shared
//! entanglement can do better.

use epurify::bounds::absolute_upper_bound;
use epurify::protocols::random_permutation_exact;
use epurify::qstate::{Ensemble, SparseState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, m, eps) = (4u64, 2u64, 0.1);

    // Worst-case input of fidelity exactly 1 - eps: a mixture of the target
    // with a single diagonal basis state.
    let eps_prime = eps * n as f64 / (n as f64 - 1.0);
    let input = Ensemble::new(vec![
        (1.0 - eps_prime, SparseState::max_entangled(n)),
        (eps_prime, SparseState::basis(n, 0, 0)?),
    ])?;
    println!("input: dim {n}, fidelity {}", input.fidelity(n)?);

    let dist = epurify::protocols::run_on_ensemble(&input, |s| random_permutation_exact(s, m))?;
    println!("fail probability: {}   (the protocol never fails)", dist.fail_probability);
    assert_eq!(dist.fail_probability, 0.0);

    // On mismatch both sides hold |0>, which still overlaps the target;
    // the mismatch branches carry probability (N-M)/(N-1) * delta.
    println!("mismatch probability: {}", dist.mismatch_probability());

    let mean = dist.mean_fidelity(m)?;
    let bound = absolute_upper_bound(n, 1, m, eps)?;
    println!("mean output fidelity: {mean}");
    println!("absolute bound (K=1): {bound}");
    assert!((mean - bound).abs() < 1e-12, "the bound is tight for this input");

    // The same protocol on a generic noisy input stays under the bound.
    for seed in 0..5 {
        let state = SparseState::random_near_target(n, eps, false, seed)?;
        let d = random_permutation_exact(&state, m)?;
        let f = d.mean_fidelity(m)?;
        println!("seed {seed}: mean fidelity {f:.6} <= {bound:.6}");
        assert!(f <= bound + 1e-9);
    }
    Ok(())
}
