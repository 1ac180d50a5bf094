//! The Choi state of the conversion channel approaches the drive's coherence
//! matrix as the interaction strength goes to zero.
//!
//!     cargo run --example choi_duality

use qfc_sim::driveprep::{coherence_matrix, drive_concurrence, drive_from_theta};
use qfc_sim::qfcchannel::{choi_concurrence_closed, choi_state, kraus_singulars, ChannelSpec};
use qfc_sim::quantstate::concurrence;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = drive_from_theta(f64::to_radians(15.0));
    let rho_d = coherence_matrix(&a);
    println!("drive concurrence {:.6}", drive_concurrence(&a));
    println!("{:>8} {:>14} {:>14} {:>12} {:>16}", "kt", "C(choi) exact", "C(choi) num", "distance", "kraus s1, s2");

    let mut prev: Option<f64> = None;
    for kt in [0.4, 0.2, 0.1, 0.05, 0.025] {
        let spec = ChannelSpec::new(a.clone(), kt)?;
        let choi = choi_state(&spec)?;
        let d = choi.frobenius_distance(&rho_d);
        let [s1, s2] = kraus_singulars(&spec)?;
        print!(
            "{kt:>8} {:>14.10} {:>14.10} {d:>12.3e} {s1:>8.5},{s2:.5}",
            choi_concurrence_closed(&spec)?,
            concurrence(&choi)?
        );
        if let Some(p) = prev {
            print!("   ratio {:.3}", p / d);
        }
        println!();
        prev = Some(d);
    }
    Ok(())
}
