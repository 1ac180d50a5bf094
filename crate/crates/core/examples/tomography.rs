//! Simulated 36-setting tomography of a Werner source, maximum-likelihood
//! reconstruction and Monte-Carlo error bars.
//!
//!     cargo run --release --example tomography

use qfc_sim::quantstate::{concurrence, fidelity, werner_with_concurrence};
use qfc_sim::tomosim::{
    mle_reconstruct, monte_carlo_metric, projector_set, simulate_counts, MleOptions, ProjectorSetKind, TomoError,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = werner_with_concurrence(0.919)?;
    let settings = projector_set(ProjectorSetKind::ThirtySix);
    let opts = MleOptions::default();

    for mean_pairs in [1.56e3, 1.56e4, 1.56e5] {
        let records = simulate_counts(&truth, &settings, mean_pairs, 42)?;
        let rho = mle_reconstruct(&records, &opts)?;
        let conc = monte_carlo_metric(
            &records,
            |r| concurrence(r).map_err(|e| TomoError::Metric(e.to_string())),
            100,
            7,
            &opts,
        )?;
        println!(
            "pairs/setting {mean_pairs:>9.0}: fidelity {:.5}, C = {:.4} +- {:.4}",
            fidelity(&rho, &truth)?,
            conc.value,
            conc.std
        );
    }
    Ok(())
}
