//! Finite-difference check of every layer and objective term.
use san::selfcheck::{gradient_checks, table};

fn main() -> san::Result<()> {
    let checks = gradient_checks(3)?;
    print!("{}", table(&checks));
    Ok(())
}
