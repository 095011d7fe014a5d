//! Finite-difference checks of every tape primitive and of the full
//! weighted training loss.

use mcdepth::autodiff::gradcheck::primitive_suites;
use mcdepth::loss::composite_suite;

fn main() -> mcdepth::Result<()> {
    let mut suites = primitive_suites(20, 1)?;
    suites.push(composite_suite(20, 2)?);
    for s in &suites {
        let verdict = if s.passed(1e-5) { "ok" } else { "FAIL" };
        println!("{:<16} {:>3} trials  max rel err {:.2e}  {verdict}", s.name, s.trials, s.max_rel_err);
    }
    Ok(())
}
