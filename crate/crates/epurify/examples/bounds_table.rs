//! Print the theory predictions for a grid of protocol parameters in the
//! power-of-two family: N = 2^n, W = 2^(n-t), L = 2^t, K = 2^n - 1, S = 2^(2t).

use epurify::bounds::bound_set_for;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 4;
    let epsilons = [0.05, 0.1, 0.2];

    for t in 1..n {
        for eps in epsilons {
            let set = bound_set_for(n, t, eps)?;
            println!("n={n} t={t} eps={eps}:");
            for (name, entry) in &set.entries {
                let marker = if entry.exact { "=" } else { "~" };
                println!("  {name:<34} {marker} {:<22.12} [{}]", entry.value, entry.formula);
            }
        }
    }

    // Named lookups work too; handy inside other programs.
    let set = bound_set_for(4, 2, 0.1)?;
    let ok = set.get("simple_scrambling_success_probability").expect("known entry");
    println!("\nsimple_scrambling_success_probability(n=4, t=2, eps=0.1) = {ok}");
    Ok(())
}
