//! Joint spectral amplitude of type-I and type-0 down-conversion in
//! lithium niobate, its Schmidt spectrum and the heralded photon's
//! temporal-mode content.
//!
//!     cargo run --release --example joint_spectrum

use qfc_sim::spectral::{
    coincidence_delay_width, compute_jsa, heralded_purity, hg_mode_probabilities, pump_overlap, reduced_density,
    schmidt, schmidt_number, tuned_poling_period_um, CrystalSpec, DispersionModel, GridSpec, Interaction, Photon,
    PumpSpec, TimeGrid,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pump = PumpSpec { center_wavelength_nm: 780.0, fwhm_duration_fs: 220.0 };
    let grid = GridSpec { points: 256, half_span_nm: 40.0 };

    for inter in [Interaction::Type1Ooe, Interaction::Type0Eee] {
        let disp = DispersionModel::congruent_ln();
        let period = tuned_poling_period_um(&disp, inter, 780.0, 25.0)?;
        let crystal = CrystalSpec::new(10.0, period, 25.0, inter, disp)?;
        let jsa = compute_jsa(&pump, &crystal, 12.0, &grid)?;
        let s = schmidt(&jsa)?;
        let photon = reduced_density(&jsa, Photon::Idler)?;

        println!("{inter:?}: poling period {period:.4} um");
        println!("  purity {:.4}, Schmidt number {:.3}", heralded_purity(&s), schmidt_number(&s));
        let top: Vec<String> = s.probabilities.iter().take(4).map(|p| format!("{p:.4}")).collect();
        println!("  leading Schmidt weights {}", top.join(" "));
        println!("  HG0 (220 fs) {:.4}, pump overlap {:.4}", hg_mode_probabilities(&photon, 220.0, 1)?[0], pump_overlap(&photon, &pump)?);
        if inter == Interaction::Type1Ooe {
            let width = coincidence_delay_width(&photon, &pump, &TimeGrid::default())?;
            println!("  delay scan FWHM {width:.1} fs");
        }
    }
    Ok(())
}
