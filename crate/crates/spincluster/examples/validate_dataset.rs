//! Loads the bundled dataset, runs its cross-table consistency checks,
//! and recomputes the residuals of the published structures against the
//! measured couplings. Also derives hyperfine components from the raw
//! precession frequencies and checks them against the tabulated values.
//!
//! ```sh
//! cargo run --release --example validate_dataset
//! ```

use spincluster::io::Dataset;
use spincluster::model::{expected_spin_count, hyperfine_from_frequencies, residuals_and_xi};
use spincluster::PhysicalConstants;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let consts = PhysicalConstants::default();
    let ds = Dataset::bundled()?;
    ds.validate()?;
    println!(
        "dataset ok: {} spin records, {} averaged couplings",
        ds.records.len(),
        ds.averaged.len()
    );

    let carbons = ds.carbon_table()?;
    for (label, s) in [("lattice", &ds.diamond), ("refined", &ds.diamond_fit)] {
        let (res, xi) = residuals_and_xi(s, &carbons, &consts)?;
        let worst = res
            .iter()
            .map(|r| r.delta_f_hz.abs())
            .fold(0.0f64, f64::max);
        println!("{label:>8} structure: xi = {xi:8.3} Hz^2, worst residual {worst:.2} Hz");
    }

    // invert the three precession frequencies back to (A_par, A_perp)
    println!("\nhyperfine recomputation (kHz):");
    let mut worst = (0.0f64, String::new());
    for r in &ds.records {
        let (a_par, a_perp, imag) = hyperfine_from_frequencies(
            r.omega_minus1,
            r.omega_plus1,
            r.omega_0,
        )?;
        let d = (a_par - r.a_par).abs().max(if imag { 0.0 } else { (a_perp - r.a_perp).abs() });
        if d > worst.0 {
            worst = (d, r.id.clone());
        }
    }
    println!("  worst mismatch vs tabulated values: {:.3} kHz at {}", worst.0, worst.1);

    let est = expected_spin_count(&ds.diamond, 0.011, &consts)?;
    println!(
        "\nbounding box {:.1} x {:.1} x {:.1} A ({:.1} nm^3): {} lattice sites, \
         {:.1} spins expected at 1.1% abundance",
        est.box_dims[0],
        est.box_dims[1],
        est.box_dims[2],
        est.volume_nm3,
        est.lattice_sites,
        est.expected_spins
    );
    Ok(())
}
