//! Hash-and-compare: S rounds of random linear hashing split an arbitrary
//! noisy state into lambda_0 (diagonal), lambda_1 (off-diagonal noise the
//! hashes miss), and lambda_2 (rejected). On average lambda_1^2 <= eps / S.

use epurify::bounds::hash_compare_prediction;
use epurify::protocols::{hash_and_compare, sample_runs, ProtocolConfig};
use epurify::qstate::SparseState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (dim, s, eps) = (16u64, 4usize, 0.2);
    let input = SparseState::random_near_target(dim, eps, false, 7)?;

    // One explicit draw of hash vectors, to look at the split directly.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r: Vec<u64> = (0..s).map(|_| rng.gen_range(1..dim)).collect();
    let dist = hash_and_compare(&input, &r)?;
    let lam = dist.metadata.lambda.unwrap();
    println!("hash vectors: {r:?}");
    println!("lambda_0^2 = {:.6} (kept, diagonal)", lam.l0_sq);
    println!("lambda_1^2 = {:.6} (kept, invisible to these hashes)", lam.l1_sq);
    println!("lambda_2^2 = {:.6} (rejected -> FAIL)", lam.l2_sq);
    assert!((lam.total() - 1.0).abs() < 1e-9);
    assert!((dist.fail_probability - lam.l2_sq).abs() < 1e-9);

    // Average over random hash draws: E[lambda_1^2] <= eps / S and the
    // failure probability stays below eps.
    let runs = 20_000u64;
    let records = sample_runs(&input, &ProtocolConfig::HashAndCompare { s }, runs, 99)?;
    let mean_l1: f64 = records
        .iter()
        .filter_map(|rec| rec.diagnostics.map(|d| d.l1_sq))
        .sum::<f64>()
        / runs as f64;
    let fail_rate =
        records.iter().filter(|rec| rec.failed()).count() as f64 / runs as f64;

    let pred = hash_compare_prediction(1 << s, eps)?;
    println!("\nover {runs} random draws (S = 2^{s}):");
    println!("mean lambda_1^2 = {:.6}  (bound eps/S = {:.6})", mean_l1, eps / (1u64 << s) as f64);
    println!("fail rate       = {:.6}  (bound eps   = {:.6})", fail_rate, pred.fail_bound);
    println!(
        "=> post-selection fidelity >= {:.4} with confidence >= {:.4}",
        pred.diag_fidelity_bound, pred.confidence
    );
    assert!(mean_l1 <= eps / (1u64 << s) as f64 + 0.01);
    assert!(fail_rate <= pred.fail_bound + 0.01);
    Ok(())
}
