//! Conversion efficiency from single-count and coincidence rates.
//!
//!     cargo run --example efficiency

use qfc_sim::spectral::estimate_efficiency;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let singles = estimate_efficiency(100.0, 60e3, 0.8, 0.6)?;
    let pairs = estimate_efficiency(5.0, 2.6e3, 0.8, 0.6)?;
    println!("from single counts: {:.3} %", 100.0 * singles);
    println!("from coincidences:  {:.3} %", 100.0 * pairs);
    Ok(())
}
