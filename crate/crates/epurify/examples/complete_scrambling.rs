//! Complete scrambling = hash-and-compare followed by simple scrambling.
//! It purifies arbitrary (not just diagonal) noise and satisfies the
//! probabilistic purification definition with parameters
//! <N, SK, WK, eps, (4W/N + 4/sqrt(S))eps, 2eps + sqrt(2eps/sqrt(S)), 1/sqrt(S)>.

use epurify::bounds::complete_scrambling_prediction;
use epurify::protocols::{
    check_gepp_empirical, sample_runs, GeppKind, ProtocolConfig,
};
use epurify::qstate::SparseState;
use epurify::scramble::{make_multiplication_table, ScrambleMap};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let perm = make_multiplication_table(3, 2)?;
    let p = perm.params();
    let (s, eps) = (4usize, 0.05);

    let params = complete_scrambling_prediction(p.n, p.k, p.w, 1 << s, eps)?;
    println!(
        "claimed tuple: N={} K={} M={} eps={} delta={:.4} p={:.4} q={:.4}",
        params.n,
        params.k,
        params.m,
        params.epsilon,
        params.delta,
        params.p.unwrap(),
        params.q.unwrap()
    );

    // Generic (off-diagonal) noise, the case simple scrambling alone cannot
    // handle.
    let input = SparseState::random_near_target(p.n, eps, false, 4321)?;

    let config = ProtocolConfig::CompleteScrambling { perm, s, use_hadamard: true };
    let runs = 10_000u64;
    let records = sample_runs(&input, &config, runs, 2024)?;

    let fails = records.iter().filter(|r| r.failed()).count();
    let fidelities: Vec<f64> = records.iter().filter_map(|r| r.fidelity).collect();
    let mean: f64 = fidelities.iter().sum::<f64>() / fidelities.len() as f64;
    let good = fidelities.iter().filter(|&&f| f >= 1.0 - params.delta).count();
    println!("\n{runs} runs:");
    println!("  fail rate            = {:.4}  (bound p = {:.4})", fails as f64 / runs as f64, params.p.unwrap());
    println!("  mean success fidelity = {mean:.6}");
    println!(
        "  fraction with F >= 1-delta = {:.4}  (needs >= 1-q = {:.4})",
        good as f64 / fidelities.len() as f64,
        1.0 - params.q.unwrap()
    );

    // Formal check against the probabilistic definition, with Wilson
    // intervals so sampling noise cannot produce a spurious failure.
    let report = check_gepp_empirical(&records, &params, GeppKind::Probabilistic, 4.0)?;
    println!("\nprobabilistic-GEPP check: pass = {}", report.pass);
    println!("  fail clause:     {:.4} <= {:.4} -> {}", report.fail_probability, report.fail_bound, report.fail_ok);
    println!("  fidelity clause: {:.4} >= {:.4} -> {}", report.fidelity_statistic, report.fidelity_bound, report.fidelity_ok);
    assert!(report.pass);
    Ok(())
}
