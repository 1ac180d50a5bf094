//! One-sided conversion of entangled inputs against the product bound
//! C(out) <= C(choi) C(in), over a sweep of the QWP angle.
//!
//!     cargo run --example konrad_bound

use qfc_sim::driveprep::{drive_from_theta, random_drive};
use qfc_sim::qfcchannel::{konrad_check, ChannelSpec};
use qfc_sim::quantstate::{random_density, werner_with_concurrence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rho0 = werner_with_concurrence(0.919)?;
    println!("Werner input, C = 0.919, kt = 1e-5");
    println!("{:>6} {:>12} {:>12}", "theta", "C(out)", "bound");
    for deg in (0..=90).step_by(15) {
        let spec = ChannelSpec::new(drive_from_theta(f64::to_radians(deg as f64)), 1e-5)?;
        let r = konrad_check(&rho0, &spec)?;
        println!("{deg:>6} {:>12.9} {:>12.9}", r.c_out, r.bound);
    }

    // inputs whose second-qubit marginal is not maximally mixed can exceed
    // the normalized bound; count how often
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trials = 500;
    let mut violations = 0;
    for _ in 0..trials {
        let rank = rng.gen_range(1..=4);
        let rho = random_density(&mut rng, 4, rank);
        let spec = ChannelSpec::new(random_drive(&mut rng), rng.gen_range(0.01..2.0))?;
        if !konrad_check(&rho, &spec)?.holds {
            violations += 1;
        }
    }
    println!("\nrandom inputs: {violations}/{trials} exceed the normalized bound");
    Ok(())
}
