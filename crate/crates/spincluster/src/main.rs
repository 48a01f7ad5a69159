//! Command-line front end: reconstruction, refinement, correction
//! bounds, signal simulation, sensor placement, dataset validation and
//! summary reports over the bundled (or user-supplied) coupling data.
//!
//! Exit codes: 0 success, 2 invalid input, 3 search exhausted,
//! 4 non-convergence.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use spincluster::consts::TWO_PI;
use spincluster::hamiltonian::{max_correction_bound, CorrectionTarget};
use spincluster::io::{
    structure_from_string, structure_to_string, trace_to_csv, spectrum_to_csv, Dataset,
    RunConfig, StructureFormat,
};
use spincluster::lattice::Solver;
use spincluster::model::{
    dipolar_coupling, dipolar_tensor, gamma_for, residuals_and_xi, synthesize_table,
    MsProjection, Structure,
};
use spincluster::refine::{
    compare_structures, position_sensor, refine, GaugeSpec, RefineOptions, SensorParams,
};
use spincluster::signal::{
    fit_signal, frequency_comb, psd, synthesize_trace, TraceParams,
};
use spincluster::{Error, PhysicalConstants, Result};

/// Nuclear spin cluster reconstruction from pairwise couplings.
#[derive(Parser)]
#[command(name = "spincluster", version, about)]
struct Cli {
    /// Key = value run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory with the five dataset CSV files (overrides the
    /// bundled tables).
    #[arg(long, global = true, env = "SPINCLUSTER_DATA_DIR")]
    data_dir: Option<PathBuf>,

    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, env = "SPINCLUSTER_WORKERS", default_value_t = 0)]
    workers: usize,

    /// Output directory for generated files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve spin positions on the lattice from the coupling table.
    Reconstruct(ReconstructArgs),
    /// Continuously refine a structure against the measured couplings.
    Refine(RefineArgs),
    /// Bound electron- and field-induced shifts for every spin pair.
    Corrections(CorrectionsArgs),
    /// Synthesize a modulation trace and spectrum for given targets.
    Simulate(SimulateArgs),
    /// Locate the sensor nucleus (and its paired vacancy) on the lattice.
    SensorPosition(SensorPositionArgs),
    /// Check dataset consistency and recompute structure residuals.
    Validate(ValidateArgs),
    /// Print a columnar summary of the dataset and published structures.
    Report,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Keep only the first N spins of the placement order.
    #[arg(long)]
    spins: Option<usize>,
    /// Ranked structures to write.
    #[arg(long, default_value_t = 3)]
    top: usize,
}

#[derive(Args)]
struct RefineArgs {
    /// Starting structure (JSON or XYZ, by extension).
    structure: PathBuf,
    /// Weight residuals by the reported measurement uncertainties.
    #[arg(long)]
    weighted: bool,
}

#[derive(Args)]
struct CorrectionsArgs {
    /// Restrict to pairs with a measured coupling.
    #[arg(long)]
    measured_only: bool,
    /// Transverse-field bound in gauss.
    #[arg(long, default_value_t = 1.0)]
    b_perp_max: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Target frequencies in Hz, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    frequencies: Vec<f64>,
    /// Coherence time in seconds (Gaussian envelope); omit for none.
    #[arg(long)]
    t2: Option<f64>,
    #[arg(long, default_value_t = 2048)]
    samples: usize,
    /// Sampling interval, seconds.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Gaussian noise sigma.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SensorPositionArgs {
    /// Solved lattice structure; reconstructed on the fly if omitted.
    #[arg(long)]
    structure: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Structure to score; defaults to the published refined one.
    #[arg(long)]
    structure: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let code = match e {
            Error::SearchExhausted { .. } => 3,
            Error::NonConvergence { .. } => 4,
            _ => 2,
        };
        std::process::exit(code);
    }
}

fn load_structure(path: &Path) -> Result<Structure> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("xyz") => StructureFormat::Xyz,
        _ => StructureFormat::Json,
    };
    structure_from_string(&std::fs::read_to_string(path)?, format)
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }

    let config = match &cli.config {
        Some(path) => RunConfig::from_key_values(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    let consts = PhysicalConstants::default();
    let dataset = match &cli.data_dir {
        Some(dir) => Dataset::from_dir(dir)?,
        None => Dataset::bundled()?,
    };

    match cli.command {
        Command::Reconstruct(args) => reconstruct(&cli.out, &config, &dataset, &consts, args),
        Command::Refine(args) => run_refine(&cli.out, &config, &dataset, &consts, args),
        Command::Corrections(args) => corrections(&cli.out, &config, &dataset, &consts, args),
        Command::Simulate(args) => simulate(&cli.out, args),
        Command::SensorPosition(args) => sensor_position(&cli.out, &config, &dataset, &consts, args),
        Command::Validate(args) => validate(&dataset, &consts, args),
        Command::Report => report(&dataset, &consts),
    }
}

fn reconstruct(
    out: &Path,
    config: &RunConfig,
    dataset: &Dataset,
    consts: &PhysicalConstants,
    args: ReconstructArgs,
) -> Result<()> {
    let mut table = dataset.carbon_table()?;
    if let Some(n) = args.spins {
        let order = spincluster::lattice::derive_spin_order(&table, config.first_spin.as_deref())?;
        let ids: Vec<String> = order
            .iter()
            .take(n.min(table.spins().len()))
            .map(|&i| table.spins()[i].clone())
            .collect();
        table = table.restrict(&ids)?;
    }

    let outcome = Solver::new(&table, consts, config.solver_params()).solve()?;

    let mut steps = String::from("spin,generated,kept\n");
    for s in &outcome.steps {
        steps.push_str(&format!("{},{},{}\n", s.spin, s.generated, s.kept));
    }
    write_out(out, "steps.csv", &steps)?;

    let n_write = args.top.min(outcome.configurations.len());
    for rank in 0..n_write {
        let s = outcome.structure(rank).expect("rank checked");
        write_out(
            out,
            &format!("structure_{rank:02}.json"),
            &structure_to_string(&s, StructureFormat::Json)?,
        )?;
    }

    // couplings the best structure predicts for pairs that were never
    // measured (or only bounded from above)
    let best = outcome.best_structure().expect("at least one configuration");
    let mut predicted = String::from("spin_i,spin_j,predicted_hz\n");
    let spins = &best.spins;
    for i in 0..spins.len() {
        for j in (i + 1)..spins.len() {
            let (ti, tj) = (
                table.spin_index(&spins[i]).expect("solved spin in table"),
                table.spin_index(&spins[j]).expect("solved spin in table"),
            );
            if table.get(ti, tj).map(|e| !e.weak_upper_bound).unwrap_or(false) {
                continue;
            }
            let f = dipolar_coupling(
                best.coordinates[i],
                best.coordinates[j],
                gamma_for(&spins[i], consts),
                gamma_for(&spins[j], consts),
                consts,
            )?;
            predicted.push_str(&format!("{},{},{f:.4}\n", spins[i], spins[j]));
        }
    }
    write_out(out, "predicted_couplings.csv", &predicted)?;

    println!(
        "{} spins placed, {} configurations kept, best xi = {:.3} Hz^2",
        spins.len(),
        outcome.configurations.len(),
        best.xi.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn run_refine(
    out: &Path,
    config: &RunConfig,
    dataset: &Dataset,
    consts: &PhysicalConstants,
    args: RefineArgs,
) -> Result<()> {
    let initial = load_structure(&args.structure)?;
    let table = dataset.carbon_table()?;
    // the structure may cover a subcluster only
    let ids: Vec<String> = table
        .spins()
        .iter()
        .filter(|s| initial.position(s).is_some())
        .cloned()
        .collect();
    if ids.len() < 2 {
        return Err(Error::InvalidInput(
            "structure shares fewer than two spins with the coupling table".into(),
        ));
    }
    let table = table.restrict(&ids)?;
    // fall back to the first two structure spins when the configured
    // gauge spins are not part of the subcluster
    let (origin, plane) = if ids.contains(&config.origin_spin) && ids.contains(&config.plane_spin)
    {
        (config.origin_spin.clone(), config.plane_spin.clone())
    } else {
        (ids[0].clone(), ids[1].clone())
    };
    let gauge = GaugeSpec::new(&origin, &plane, config.pre_rotation_deg);
    let options = RefineOptions { weighted: args.weighted, ..RefineOptions::default() };
    let result = refine(&initial, &table, &gauge, &options, consts)?;

    write_out(
        out,
        "refined.json",
        &structure_to_string(&result.structure, StructureFormat::Json)?,
    )?;
    let n = result.delta_r.len() as f64;
    println!(
        "xi {:.3} -> {:.3} Hz^2 in {} iterations; mean displacement {:.3} A",
        result.initial_xi,
        result.final_xi,
        result.iterations,
        result.delta_r.iter().sum::<f64>() / n
    );
    Ok(())
}

fn corrections(
    out: &Path,
    config: &RunConfig,
    dataset: &Dataset,
    consts: &PhysicalConstants,
    args: CorrectionsArgs,
) -> Result<()> {
    let table = dataset.carbon_table()?;
    let structure = &dataset.diamond_fit;
    let khz = |v: f64| TWO_PI * v * 1e3;
    let record = |id: &str| {
        dataset
            .records
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::UnknownSpin(id.into()))
    };

    let spins = table.spins().to_vec();
    let mut pairs = Vec::new();
    for i in 0..spins.len() {
        for j in (i + 1)..spins.len() {
            let measured = table.get(i, j).map(|e| !e.weak_upper_bound).unwrap_or(false);
            if args.measured_only && !measured {
                continue;
            }
            pairs.push((i, j));
        }
    }

    let rows: Result<Vec<String>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (ri, rj) = (record(&spins[i])?, record(&spins[j])?);
            let pi = structure
                .position(&spins[i])
                .ok_or_else(|| Error::MissingCoordinates(spins[i].clone()))?;
            let pj = structure
                .position(&spins[j])
                .ok_or_else(|| Error::MissingCoordinates(spins[j].clone()))?;
            let g = consts.gamma_c;
            let c = dipolar_tensor(pi, pj, g, g, consts)?;
            let f_bare = c[2][2].abs() / (4.0 * std::f64::consts::PI);
            let a1 = (khz(ri.a_par), khz(ri.a_perp));
            let a2 = (khz(rj.a_par), khz(rj.a_perp));
            let mut row = format!("{},{},{f_bare:.4}", spins[i], spins[j]);
            for target in [
                CorrectionTarget::Minus1,
                CorrectionTarget::Plus1,
                CorrectionTarget::Averaged,
            ] {
                let b = max_correction_bound(
                    config.bz_gauss,
                    args.b_perp_max,
                    a1,
                    a2,
                    c,
                    target,
                    consts,
                )?;
                row.push_str(&format!(",{:.4},{:.4}", b.max_hz, b.mean_hz));
            }
            Ok(row)
        })
        .collect();

    let mut csv = String::from(
        "spin_i,spin_j,f_bare_hz,max_minus1_hz,mean_minus1_hz,\
         max_plus1_hz,mean_plus1_hz,max_averaged_hz,mean_averaged_hz\n",
    );
    for row in rows? {
        csv.push_str(&row);
        csv.push('\n');
    }
    write_out(out, "correction_bounds.csv", &csv)?;
    println!("{} pairs bounded (B_perp <= {} G)", pairs.len(), args.b_perp_max);
    Ok(())
}

fn simulate(out: &Path, args: SimulateArgs) -> Result<()> {
    let comb = frequency_comb(&args.frequencies);
    let params = TraceParams {
        n_samples: args.samples,
        dt: args.dt,
        t2: args.t2,
        noise_sigma: args.noise,
        seed: args.seed,
        ..TraceParams::default()
    };
    let trace = synthesize_trace(&comb, &params)?;
    let spectrum = psd(&trace, 4)?;
    write_out(out, "trace.csv", &trace_to_csv(&trace))?;
    write_out(out, "spectrum.csv", &spectrum_to_csv(&spectrum))?;

    match fit_signal(&trace, params.decay_exponent, None) {
        Ok(fit) => println!(
            "fitted frequency {:.4} Hz (T2 {:.3} s, cost {:.3e})",
            fit.frequency_hz, fit.t2, fit.cost
        ),
        Err(e) => println!("trace written; fit skipped: {e}"),
    }
    Ok(())
}

fn sensor_position(
    out: &Path,
    config: &RunConfig,
    dataset: &Dataset,
    consts: &PhysicalConstants,
    args: SensorPositionArgs,
) -> Result<()> {
    let cluster = match &args.structure {
        Some(path) => load_structure(path)?,
        None => {
            let table = dataset.carbon_table()?;
            println!("no structure supplied; reconstructing the cluster first");
            Solver::new(&table, consts, config.solver_params())
                .solve()?
                .best_structure()
                .ok_or_else(|| Error::InvalidInput("no surviving configuration".into()))?
        }
    };

    let params = SensorParams {
        n_l: config.n_l,
        tolerance_hz: config.tolerance_hz,
        tolerance_single_hz: config.tolerance_single_hz,
        ..SensorParams::default()
    };
    let placement = position_sensor(&cluster, &dataset.averaged, &params, consts)?;
    for c in &placement.candidates {
        println!(
            "site {:?}: sensor ({:.2}, {:.2}, {:.2}) A, vacancy ({:.2}, {:.2}, {:.2}) A, \
             xi = {:.3} Hz^2",
            c.site,
            c.position[0],
            c.position[1],
            c.position[2],
            c.vacancy[0],
            c.vacancy[1],
            c.vacancy[2],
            c.xi
        );
    }
    if placement.ambiguous {
        println!("warning: more than one site satisfies every coupling");
    }
    if let (Some(p), Some(s)) = (placement.refined_position, placement.refined_sigma) {
        println!(
            "refined: ({:.2} +- {:.2}, {:.2} +- {:.2}, {:.2} +- {:.2}) A",
            p[0], s[0], p[1], s[1], p[2], s[2]
        );
    }
    write_out(out, "sensor.json", &serde_json::to_string_pretty(&placement.candidates)?)?;
    Ok(())
}

fn validate(dataset: &Dataset, consts: &PhysicalConstants, args: ValidateArgs) -> Result<()> {
    dataset.validate()?;
    println!("dataset tables are consistent");

    let structure = match &args.structure {
        Some(path) => load_structure(path)?,
        None => dataset.diamond_fit.clone(),
    };
    let table = dataset.carbon_table()?;
    let (residuals, xi) = residuals_and_xi(&structure, &table, consts)?;
    println!("spin_i,spin_j,residual_hz");
    for r in &residuals {
        println!("{},{},{:.4}", table.spins()[r.i], table.spins()[r.j], r.delta_f_hz);
    }
    println!("xi = {xi:.4} Hz^2 over {} couplings", residuals.len());
    Ok(())
}

fn report(dataset: &Dataset, consts: &PhysicalConstants) -> Result<()> {
    dataset.validate()?;
    let table = dataset.carbon_table()?;
    println!("spins: {} nuclei + 1 sensor nucleus", dataset.records.len());
    println!("measured couplings: {} (of {} pairs)", table.len(), 27 * 26 / 2);

    println!("\nstructure,xi_hz2,mean_residual_hz");
    for (label, s) in [
        ("diamond_lattice", &dataset.diamond),
        ("diamond_refined", &dataset.diamond_fit),
        ("cubic_lattice", &dataset.cubic),
        ("cubic_refined", &dataset.cubic_fit),
    ] {
        let (residuals, xi) = residuals_and_xi(s, &table, consts)?;
        let mean =
            residuals.iter().map(|r| r.delta_f_hz.abs()).sum::<f64>() / residuals.len() as f64;
        println!("{label},{xi:.3},{mean:.3}");
    }

    let cmp = compare_structures(&dataset.diamond, &dataset.cubic)?;
    println!("\ncubic vs diamond: mean {:.3} A, max {:.3} A", cmp.mean_distance, cmp.max_distance);

    // self-consistency: couplings regenerated from the refined
    // structure reproduce the measured table
    let synth = synthesize_table(&dataset.diamond_fit, MsProjection::Averaged, consts)?;
    let mut worst = 0.0f64;
    for (i, j, e) in table.iter() {
        if e.weak_upper_bound {
            continue;
        }
        let (si, sj) = (
            synth.spin_index(&table.spins()[i]).expect("same spins"),
            synth.spin_index(&table.spins()[j]).expect("same spins"),
        );
        if let Some(p) = synth.get(si, sj) {
            worst = worst.max((p.frequency_hz - e.frequency_hz).abs());
        }
    }
    println!("worst synthesized-vs-measured coupling gap: {worst:.3} Hz");
    Ok(())
}
