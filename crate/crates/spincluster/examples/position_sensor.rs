//! Places the sensor's intrinsic nuclear spin on the lattice from its
//! couplings to the already-reconstructed nuclei, then refines the
//! position continuously. The paired lattice vacancy one bond along -z
//! marks the defect itself.
//!
//! ```sh
//! cargo run --release --example position_sensor
//! ```

use spincluster::io::Dataset;
use spincluster::lattice::{Solver, SolverParams};
use spincluster::refine::{position_sensor, SensorParams};
use spincluster::PhysicalConstants;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let consts = PhysicalConstants::default();
    let ds = Dataset::bundled()?;

    // the sensor search screens lattice sites around the solved
    // nuclei, so it needs the structure in the solver's lattice frame
    let carbons = ds.carbon_table()?;
    println!("reconstructing the {}-spin cluster first...", carbons.spins().len());
    let outcome = Solver::new(&carbons, &consts, SolverParams::default()).solve()?;
    let cluster = outcome.best_structure().ok_or("no surviving configuration")?;

    let params = SensorParams::default();
    let placement = position_sensor(&cluster, &ds.averaged, &params, &consts)?;

    println!(
        "{} lattice candidate(s){}",
        placement.candidates.len(),
        if placement.ambiguous { " (ambiguous)" } else { "" }
    );
    for c in &placement.candidates {
        println!(
            "  site {:?}  ->  ({:6.2}, {:6.2}, {:6.2}) A, xi = {:.3} Hz^2",
            c.site, c.position[0], c.position[1], c.position[2], c.xi
        );
        println!(
            "  vacancy at ({:6.2}, {:6.2}, {:6.2}) A",
            c.vacancy[0], c.vacancy[1], c.vacancy[2]
        );
    }

    if let (Some(p), Some(s)) = (placement.refined_position, placement.refined_sigma) {
        println!(
            "refined: ({:.2} +- {:.2}, {:.2} +- {:.2}, {:.2} +- {:.2}) A",
            p[0], s[0], p[1], s[1], p[2], s[2]
        );
    }
    Ok(())
}
