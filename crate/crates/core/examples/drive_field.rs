//! Drive matrix and coherence matrix for a few QWP angles.
//!
//!     cargo run --example drive_field

use qfc_sim::driveprep::{coherence_matrix, drive_concurrence, drive_from_theta};
use qfc_sim::quantstate::{concurrence, purity};

fn main() {
    println!("{:>8} {:>12} {:>12} {:>10}", "theta", "2|det A|", "wootters", "purity");
    for deg in [0.0, 11.25, 22.5, 33.75, 45.0, 67.5, 90.0] {
        let a = drive_from_theta(f64::to_radians(deg));
        let rho_d = coherence_matrix(&a);
        println!(
            "{deg:>8.2} {:>12.6} {:>12.6} {:>10.6}",
            drive_concurrence(&a),
            concurrence(&rho_d).unwrap(),
            purity(&rho_d)
        );
    }

    let a = drive_from_theta(f64::to_radians(22.5));
    println!("\nA(22.5 deg):");
    for r in 0..2 {
        let row = a.matrix().row(r);
        println!("  [{:+.4} {:+.4}i, {:+.4} {:+.4}i]", row[0].re, row[0].im, row[1].re, row[1].im);
    }
}
