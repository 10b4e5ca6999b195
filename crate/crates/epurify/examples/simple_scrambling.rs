//! Simple scrambling on diagonal noise: the exact failure probability and
//! post-success fidelity have closed forms, and both are reproduced by the
//! simulator to machine precision.

use epurify::bounds::simple_scrambling_prediction;
use epurify::protocols::simple_scrambling;
use epurify::qstate::SparseState;
use epurify::scramble::{make_multiplication_table, ScrambleMap};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let perm = make_multiplication_table(3, 1)?;
    let p = perm.params();
    let eps = 0.1;

    // Diagonal noise: the same basis label on both sides, so the compared
    // registers agree unless scrambling separates them.
    let input = SparseState::random_near_target(p.n, eps, true, 42)?;
    println!("input: dim {}, fidelity {}", p.n, input.fidelity(p.n)?);

    let dist = simple_scrambling(&input, &perm, true)?;
    let predicted = simple_scrambling_prediction(p.n, p.l, p.w, eps)?;

    println!("protocol: <N={}, K={}, W={}, L={}>", p.n, p.k, p.w, p.l);
    println!(
        "fail probability: simulated {:.12}  formula {:.12}",
        dist.fail_probability,
        1.0 - predicted.success_probability
    );
    assert!((dist.fail_probability - (1.0 - predicted.success_probability)).abs() < 1e-9);

    // Post-success fidelity: every surviving branch has the same fidelity.
    let mean = dist.mean_fidelity(p.w * p.k)?;
    println!(
        "success fidelity:  simulated {:.12}  formula {:.12}",
        mean, predicted.success_fidelity
    );
    assert!((mean - predicted.success_fidelity).abs() < 1e-9);

    // The published lower bound 1 - (2W/N) eps is looser than the exact value.
    println!("published lower bound: {:.12}", predicted.fidelity_lower_bound);
    assert!(mean >= predicted.fidelity_lower_bound - 1e-9);

    // The Fourier and Hadamard variants give identical statistics.
    let had = simple_scrambling(&input, &perm, false)?;
    assert!((had.fail_probability - dist.fail_probability).abs() < 1e-12);
    assert!((had.mean_fidelity(p.w * p.k)? - mean).abs() < 1e-12);
    println!("Fourier comparison agrees with the Hadamard variant");

    // Larger compared part L => higher failure rate but better fidelity.
    println!("\ntrade-off across l (n=3, eps={eps}):");
    for l in 1..3u32 {
        let perm = make_multiplication_table(3, l)?;
        let q = perm.params();
        let d = simple_scrambling(&input, &perm, true)?;
        println!(
            "  l={l}: W={}, fail={:.6}, success fidelity={:.6}",
            q.w,
            d.fail_probability,
            d.mean_fidelity(q.w * q.k)?
        );
    }
    Ok(())
}
