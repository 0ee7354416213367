//! Replays the negative-prompt factorization on discrete toy
//! distributions and reports which derivation line stops holding.
//!
//! cargo run --release --example factorization_check

use negrasp::prop1::{random_suite, verify_proposition1, DiscreteToy};

fn report(name: &str, toy: &DiscreteToy) -> negrasp::Result<()> {
    let r = verify_proposition1(toy)?;
    println!("{name}: max relative error {:.3e}", r.max_rel_error);
    for line in &r.lines {
        let relation = format!("{:?}", line.relation);
        println!("  line {} {relation:<12} {:<48} deviation {:.3e}", line.line, line.justification, line.deviation);
    }
    Ok(())
}

fn main() -> negrasp::Result<()> {
    report("uniform", &DiscreteToy::uniform(3)?)?;
    report("negative prompt constant in g", &DiscreteToy::random_constant_negative(1)?)?;
    report("random independent", &DiscreteToy::random_independent(1)?)?;
    report("negative prompt depends on the scene", &DiscreteToy::planted_dependence(1)?)?;
    let suite = random_suite(0, 50)?;
    println!("50 random toys: worst relative error {:.3e}", suite.max_rel_error);
    Ok(())
}
