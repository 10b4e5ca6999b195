//! Working with states directly: seeded noisy states, JSON round trips,
//! fidelity / trace distance / Schmidt rank, and the fused
//! Fourier-measure-compare primitive on a named register.

use epurify::qstate::{RegisterLayout, SparseState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A seeded state of dimension 8 with fidelity exactly 1 - eps.
    let dim = 8u64;
    let eps = 0.15;
    let state = SparseState::random_near_target(dim, eps, false, 12345)?;
    println!("fidelity vs max-entangled: {}", state.fidelity(dim)?);
    assert!((state.fidelity(dim)? - (1.0 - eps)).abs() < 1e-12);

    // JSON round trip is exact: same amplitudes bit for bit.
    let dir = std::env::temp_dir().join("epurify_state_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("state.json");
    state.save_json(&path)?;
    let loaded = SparseState::load_json(&path)?;
    assert_eq!(state, loaded);
    println!("saved and reloaded {} amplitudes from {}", state.amps().len(), path.display());

    // Schmidt rank: product states have rank 1, the target has full rank,
    // and a generic noisy state is also full rank.
    println!("schmidt rank |0,0>: {}", SparseState::basis(dim, 0, 0)?.schmidt_rank());
    println!("schmidt rank target: {}", SparseState::max_entangled(dim).schmidt_rank());
    println!("schmidt rank noisy:  {}", state.schmidt_rank());

    // Trace distance respects the fidelity bound D <= sqrt(1 - F).
    let other = SparseState::random_near_target(dim, eps, false, 999)?;
    let d = state.trace_distance(&other)?;
    let f = state.inner(&other)?.norm_sqr();
    println!("trace distance: {d:.6}, sqrt(1-F) = {:.6}", (1.0 - f).sqrt());
    assert!(d <= (1.0 - f).sqrt() + 1e-9);

    // Reshape into named registers and run the fused compare primitive on
    // the low register: Alice Fourier-transforms her half, Bob applies the
    // inverse, both measure, and branches are split by agreement.
    let layout =
        RegisterLayout::new(vec![("keep".into(), 4), ("cmp".into(), 2)])?;
    let shaped = state.reshaped(layout)?;
    let split = shaped.fourier_measure_compare("cmp", true)?;
    println!("\ncompare on register 'cmp':");
    for m in &split.matched {
        println!(
            "  matched outcome {}: p = {:.6}, post-state dim = {}",
            m.outcome,
            m.probability,
            m.state.dim()
        );
    }
    println!("  mismatch probability: {:.6}", split.mismatch_probability);
    let total = split.match_probability() + split.mismatch_probability + split.residue;
    assert!((total - 1.0).abs() < 1e-9);

    std::fs::remove_file(&path).ok();
    Ok(())
}
