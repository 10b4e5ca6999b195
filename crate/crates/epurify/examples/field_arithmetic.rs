//! GF(2^n) basics: the arithmetic every scrambling construction sits on.

use epurify::gf2n::{gf_add, gf_inv, gf_mul, FieldElement};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Multiplication table of GF(8)*.
    let n = 3;
    println!("GF(2^{n}) multiplication table (nonzero elements):");
    print!("    ");
    for b in 1..8u32 {
        print!("{b:>4}");
    }
    println!();
    for a in 1..8u32 {
        print!("{a:>4}");
        for b in 1..8 {
            let p = gf_mul(FieldElement::new(a, n)?, FieldElement::new(b, n)?)?;
            print!("{:>4}", p.value());
        }
        println!();
    }

    // Every nonzero element has an inverse, and a^(2^n - 1) = 1.
    for a in 1..8u32 {
        let a = FieldElement::new(a, n)?;
        let inv = gf_inv(a)?;
        assert_eq!(gf_mul(a, inv)?, FieldElement::one(n));
        let mut pow = FieldElement::one(n);
        for _ in 0..(1u32 << n) - 1 {
            pow = gf_mul(pow, a)?;
        }
        assert_eq!(pow, FieldElement::one(n));
        println!("inv({}) = {}", a.value(), inv.value());
    }

    // Addition is XOR, so every element is its own negative.
    let x = FieldElement::new(0b101, n)?;
    assert_eq!(gf_add(x, x)?, FieldElement::zero(n));

    // The same operations work up to n = 16.
    let a = FieldElement::new(0xBEEF, 16)?;
    let b = gf_inv(a)?;
    println!("in GF(2^16): inv({:#06x}) = {:#06x}", a.value(), b.value());
    assert_eq!(gf_mul(a, b)?, FieldElement::one(16));
    Ok(())
}
