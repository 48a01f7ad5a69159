//! Continuous refinement of a lattice solution, gauge-aware structure
//! comparison, sensor (electron-spin defect) positioning, and matching
//! of measured hyperfine components against reference site lists.

use serde::{Deserialize, Serialize};

use crate::consts::PhysicalConstants;
use crate::error::{Error, Result};
use crate::lattice::{cartesian_to_int, int_to_cartesian, CouplingLookup, DiamondLattice};
use crate::model::{
    dipolar_coupling, gamma_for, residuals_and_xi, CouplingTable, GaugeInfo, SpinRecord,
    Structure,
};
use crate::optim::{levenberg_marquardt, LmOptions};

/// Gauge fixing for the continuous fit: the coupling model is invariant
/// under translations, rotations about z, and z-inversion, so one spin
/// is pinned to the origin and a second to the x-z plane, leaving
/// `3M - 4` free coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeSpec {
    pub origin_spin: String,
    /// Spin constrained to y = 0 after the pre-rotation.
    pub plane_spin: String,
    /// Rotation about z applied to the input before fitting, degrees.
    pub pre_rotation_deg: f64,
}

impl GaugeSpec {
    pub fn new(origin_spin: &str, plane_spin: &str, pre_rotation_deg: f64) -> Self {
        GaugeSpec {
            origin_spin: origin_spin.into(),
            plane_spin: plane_spin.into(),
            pre_rotation_deg,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefineOptions {
    /// Scale residuals by 1/sigma where a positive sigma is available.
    pub weighted: bool,
    pub lm: LmOptions,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions { weighted: false, lm: LmOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct RefinementResult {
    /// Refined structure with 1-sigma coordinate uncertainties
    /// (gauge-fixed coordinates carry zero).
    pub structure: Structure,
    /// Displacement of each spin from its (gauge-fixed) input position.
    pub delta_r: Vec<f64>,
    pub initial_xi: f64,
    pub final_xi: f64,
    pub iterations: usize,
}

fn rotate_z(p: [f64; 3], angle_rad: f64) -> [f64; 3] {
    let (s, c) = angle_rad.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
}

/// Translates `origin_spin` to the origin, applies the pre-rotation and
/// then the exact residual rotation that puts `plane_spin` at y = 0.
fn fix_gauge(structure: &Structure, gauge: &GaugeSpec) -> Result<(Structure, GaugeInfo)> {
    let origin = structure
        .position(&gauge.origin_spin)
        .ok_or_else(|| Error::UnknownSpin(gauge.origin_spin.clone()))?;
    let mut coords: Vec<[f64; 3]> = structure
        .coordinates
        .iter()
        .map(|p| [p[0] - origin[0], p[1] - origin[1], p[2] - origin[2]])
        .collect();
    let pre = gauge.pre_rotation_deg.to_radians();
    for p in &mut coords {
        *p = rotate_z(*p, pre);
    }
    let plane_idx = structure
        .spins
        .iter()
        .position(|s| *s == gauge.plane_spin)
        .ok_or_else(|| Error::UnknownSpin(gauge.plane_spin.clone()))?;
    let p = coords[plane_idx];
    if p[0] == 0.0 && p[1] == 0.0 {
        return Err(Error::DegenerateGeometry(
            gauge.origin_spin.clone(),
            gauge.plane_spin.clone(),
        ));
    }
    let residual = -p[1].atan2(p[0]);
    for q in &mut coords {
        *q = rotate_z(*q, residual);
    }
    let fixed = Structure::new(structure.spins.clone(), coords);
    let info = GaugeInfo {
        origin_spin: Some(gauge.origin_spin.clone()),
        plane_spin: Some(gauge.plane_spin.clone()),
        fixed_coordinate: Some("y".into()),
        rotation_deg: gauge.pre_rotation_deg + residual.to_degrees(),
    };
    Ok((fixed, info))
}

/// Least-squares refinement of all spin positions against the measured
/// couplings, with the gauge frozen so the normal matrix is full rank.
pub fn refine(
    initial: &Structure,
    table: &CouplingTable,
    gauge: &GaugeSpec,
    options: &RefineOptions,
    consts: &PhysicalConstants,
) -> Result<RefinementResult> {
    let (start, gauge_info) = fix_gauge(initial, gauge)?;
    let spins = table.spins().to_vec();
    let m = spins.len();
    let origin_idx = spins
        .iter()
        .position(|s| *s == gauge.origin_spin)
        .ok_or_else(|| Error::UnknownSpin(gauge.origin_spin.clone()))?;
    let plane_idx = spins
        .iter()
        .position(|s| *s == gauge.plane_spin)
        .ok_or_else(|| Error::UnknownSpin(gauge.plane_spin.clone()))?;
    let mut base = Vec::with_capacity(m);
    for id in &spins {
        base.push(
            start
                .position(id)
                .ok_or_else(|| Error::MissingCoordinates(id.clone()))?,
        );
    }

    // parameter packing: every coordinate except the pinned ones
    let mut free: Vec<(usize, usize)> = Vec::with_capacity(3 * m - 4);
    for (i, _) in spins.iter().enumerate() {
        for d in 0..3 {
            if i == origin_idx || (i == plane_idx && d == 1) {
                continue;
            }
            free.push((i, d));
        }
    }
    let x0: Vec<f64> = free.iter().map(|&(i, d)| base[i][d]).collect();

    let entries: Vec<(usize, usize, f64, f64)> = table
        .iter()
        .map(|(i, j, e)| {
            let w = if options.weighted && e.sigma_hz > 0.0 {
                1.0 / e.sigma_hz
            } else {
                1.0
            };
            (i, j, e.frequency_hz, w)
        })
        .collect();
    if entries.len() <= free.len() {
        return Err(Error::InvalidInput(format!(
            "{} couplings cannot constrain {} free coordinates",
            entries.len(),
            free.len()
        )));
    }
    let gammas: Vec<f64> = spins.iter().map(|s| gamma_for(s, consts)).collect();

    let unpack = |x: &[f64]| -> Vec<[f64; 3]> {
        let mut pos = base.clone();
        pos[origin_idx] = [0.0; 3];
        pos[plane_idx][1] = 0.0;
        for (k, &(i, d)) in free.iter().enumerate() {
            pos[i][d] = x[k];
        }
        pos
    };

    let objective = |x: &[f64], r: &mut Vec<f64>| -> Result<()> {
        let pos = unpack(x);
        for (k, &(i, j, f, w)) in entries.iter().enumerate() {
            let predicted = dipolar_coupling(pos[i], pos[j], gammas[i], gammas[j], consts)?;
            r[k] = w * (f - predicted);
        }
        Ok(())
    };

    let (_, initial_xi) = residuals_and_xi(&start, table, consts)?;
    let fit = levenberg_marquardt(objective, &x0, entries.len(), options.lm)?;

    let coords = unpack(&fit.params);
    // reorder to the structure's spin list
    let mut refined = Structure::new(spins.clone(), coords.clone());
    refined.gauge = gauge_info;
    let (_, final_xi) = residuals_and_xi(&refined, table, consts)?;
    refined.xi = Some(final_xi);

    if let Some(sig) = fit.uncertainties() {
        // scale to the plain residual variance sum(r^2)/n: the reported
        // errors come from the residual scatter alone, without the
        // degrees-of-freedom correction baked into the optimizer
        let scale =
            ((entries.len() - free.len()) as f64 / entries.len() as f64).sqrt();
        let mut u = vec![[0.0f64; 3]; m];
        for (k, &(i, d)) in free.iter().enumerate() {
            u[i][d] = sig[k] * scale;
        }
        refined.uncertainties = Some(u);
    }

    let delta_r: Vec<f64> = (0..m)
        .map(|i| {
            (0..3)
                .map(|d| (coords[i][d] - base[i][d]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();

    Ok(RefinementResult {
        structure: refined,
        delta_r,
        initial_xi,
        final_xi,
        iterations: fit.iterations,
    })
}

/// Result of aligning one structure onto another over the gauge group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureComparison {
    /// Per-spin distances after alignment, in the order of `spins`.
    pub spins: Vec<String>,
    pub distances: Vec<f64>,
    pub mean_distance: f64,
    pub max_distance: f64,
    /// Applied transform: rotation about z (rad), inversion of z,
    /// reflection of x.
    pub rotation_rad: f64,
    pub z_inverted: bool,
    pub x_reflected: bool,
}

/// Aligns `other` onto `reference` over the transformations that leave
/// every pairwise coupling unchanged (translation, rotation about z,
/// z-inversion, transverse reflection) and reports residual distances
/// over the spins common to both.
pub fn compare_structures(
    reference: &Structure,
    other: &Structure,
) -> Result<StructureComparison> {
    let common: Vec<String> = reference
        .spins
        .iter()
        .filter(|s| other.position(s).is_some())
        .cloned()
        .collect();
    if common.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least two common spins to compare".into(),
        ));
    }
    let p_ref: Vec<[f64; 3]> = common.iter().map(|s| reference.position(s).unwrap()).collect();
    let p_oth: Vec<[f64; 3]> = common.iter().map(|s| other.position(s).unwrap()).collect();

    let centroid = |pts: &[[f64; 3]]| -> [f64; 3] {
        let mut c = [0.0; 3];
        for p in pts {
            for d in 0..3 {
                c[d] += p[d];
            }
        }
        for d in 0..3 {
            c[d] /= pts.len() as f64;
        }
        c
    };
    let c_ref = centroid(&p_ref);

    let mut best: Option<StructureComparison> = None;
    for z_inv in [false, true] {
        for x_ref in [false, true] {
            let q: Vec<[f64; 3]> = p_oth
                .iter()
                .map(|p| {
                    [
                        if x_ref { -p[0] } else { p[0] },
                        p[1],
                        if z_inv { -p[2] } else { p[2] },
                    ]
                })
                .collect();
            let c_q = centroid(&q);
            // optimal rotation about z for centred clouds (2D Procrustes)
            let mut num = 0.0;
            let mut den = 0.0;
            for (a, b) in p_ref.iter().zip(&q) {
                let (ax, ay) = (a[0] - c_ref[0], a[1] - c_ref[1]);
                let (bx, by) = (b[0] - c_q[0], b[1] - c_q[1]);
                num += bx * ay - by * ax;
                den += bx * ax + by * ay;
            }
            let theta = if num == 0.0 && den == 0.0 {
                0.0
            } else {
                num.atan2(den)
            };
            let mut distances = Vec::with_capacity(q.len());
            for (a, b) in p_ref.iter().zip(&q) {
                let centred = [b[0] - c_q[0], b[1] - c_q[1], b[2] - c_q[2]];
                let r = rotate_z(centred, theta);
                let moved = [r[0] + c_ref[0], r[1] + c_ref[1], r[2] + c_ref[2]];
                distances.push(
                    (0..3)
                        .map(|d| (moved[d] - a[d]).powi(2))
                        .sum::<f64>()
                        .sqrt(),
                );
            }
            let mean = distances.iter().sum::<f64>() / distances.len() as f64;
            let max = distances.iter().fold(0.0f64, |m, &d| m.max(d));
            if best.as_ref().map_or(true, |b| mean < b.mean_distance) {
                best = Some(StructureComparison {
                    spins: common.clone(),
                    distances,
                    mean_distance: mean,
                    max_distance: max,
                    rotation_rad: theta,
                    z_inverted: z_inv,
                    x_reflected: x_ref,
                });
            }
        }
    }
    Ok(best.unwrap())
}

/// Sensor placement result: the defect's nuclear-spin site plus the
/// adjacent (empty) lattice site below it along z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorPlacement {
    /// Lattice candidates ordered by goodness of fit.
    pub candidates: Vec<SensorCandidate>,
    /// More than one candidate satisfied every coupling constraint.
    pub ambiguous: bool,
    /// Continuously refined nitrogen position and 1-sigma uncertainties.
    pub refined_position: Option<[f64; 3]>,
    pub refined_sigma: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorCandidate {
    pub position: [f64; 3],
    pub site: [i32; 3],
    /// Site adjacent along -z where the paired lattice vacancy sits.
    pub vacancy: [f64; 3],
    /// Sum of squared residuals over the sensor-nucleus couplings.
    pub xi: f64,
}

#[derive(Debug, Clone)]
pub struct SensorParams {
    pub n_l: i32,
    pub tolerance_hz: f64,
    pub tolerance_single_hz: f64,
    pub refine: bool,
    /// Spin label identifying the sensor's nucleus in the table.
    pub sensor_id: String,
}

impl Default for SensorParams {
    fn default() -> Self {
        SensorParams {
            n_l: 11,
            tolerance_hz: 1.1,
            tolerance_single_hz: 3.0,
            refine: true,
            sensor_id: "N".into(),
        }
    }
}

/// Places the sensor's nuclear spin on the lattice from its couplings
/// to the already-solved nuclei, exactly as the nuclei themselves were
/// placed: anchored at the strongest coupling, then screened against
/// every other one.
pub fn position_sensor(
    carbons: &Structure,
    table: &CouplingTable,
    params: &SensorParams,
    consts: &PhysicalConstants,
) -> Result<SensorPlacement> {
    let sensor_idx = table
        .spin_index(&params.sensor_id)
        .ok_or_else(|| Error::UnknownSpin(params.sensor_id.clone()))?;
    let couplings: Vec<(usize, f64, bool)> = table
        .couplings_of(sensor_idx)
        .map(|(j, e)| (j, e.frequency_hz, e.single_projection_only))
        .collect();
    if couplings.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no couplings to {} in the table",
            params.sensor_id
        )));
    }

    let lattice = DiamondLattice::new(params.n_l, consts.a0);
    // snap the carbon positions to exact lattice coordinates; published
    // coordinates are rounded, so allow a small snapping distance
    let mut ints = Vec::with_capacity(carbons.len());
    for (id, &p) in carbons.spins.iter().zip(&carbons.coordinates) {
        let v = cartesian_to_int(p, consts.a0);
        let back = int_to_cartesian(v, consts.a0);
        if (0..3).any(|d| (back[d] - p[d]).abs() > 0.05) {
            return Err(Error::InvalidInput(format!(
                "spin {id} does not sit on the lattice; solve on the lattice first"
            )));
        }
        ints.push(v);
    }
    // use the exact (snapped) coordinates for all frequency checks
    let carbons = Structure::new(
        carbons.spins.clone(),
        ints.iter().map(|&v| int_to_cartesian(v, consts.a0)).collect(),
    );
    let carbons = &carbons;

    let (anchor_j, anchor_f, anchor_single) = couplings
        .iter()
        .copied()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let anchor_id = &table.spins()[anchor_j];
    let anchor_pos_idx = carbons
        .spins
        .iter()
        .position(|s| s == anchor_id)
        .ok_or_else(|| Error::MissingCoordinates(anchor_id.clone()))?;
    let anchor_int = ints[anchor_pos_idx];

    let lookup = CouplingLookup::build(&lattice, consts);
    let g_sensor = gamma_for(&params.sensor_id, consts);
    let scale = g_sensor * gamma_for(anchor_id, consts)
        / (consts.gamma_c * consts.gamma_c);
    let anchor_tol = if anchor_single {
        params.tolerance_single_hz
    } else {
        params.tolerance_hz
    };

    let mut candidates = Vec::new();
    let mut best_miss: Option<(f64, usize, f64)> = None;
    'cand: for d in lookup.candidates(
        lattice.sublattice(anchor_int),
        anchor_f,
        anchor_tol,
        scale,
    ) {
        let site = [anchor_int[0] + d[0], anchor_int[1] + d[1], anchor_int[2] + d[2]];
        if !lattice.contains(site) || ints.contains(&site) {
            continue;
        }
        let pos = int_to_cartesian(site, consts.a0);
        let mut xi = 0.0;
        for &(j, f, single) in &couplings {
            let id = &table.spins()[j];
            let other = match carbons.position(id) {
                Some(p) => p,
                None => continue, // coupled spin that was never solved
            };
            let predicted =
                dipolar_coupling(pos, other, g_sensor, gamma_for(id, consts), consts)?;
            let delta = f - predicted;
            let tol = if single { params.tolerance_single_hz } else { params.tolerance_hz };
            if delta.abs() >= tol {
                if best_miss.map_or(true, |(r, _, _)| delta.abs() < r) {
                    best_miss = Some((delta.abs(), j, f));
                }
                continue 'cand;
            }
            xi += delta * delta;
        }
        // the defect axis is along z, so the site one bond below must
        // exist on the lattice (and be vacant) to host the vacancy
        let below = [site[0] - 1, site[1] - 1, site[2] - 1];
        if !crate::lattice::on_diamond_lattice(below) || ints.contains(&below) {
            continue;
        }
        candidates.push(SensorCandidate {
            position: pos,
            site,
            vacancy: vacancy_below(site, &lattice, consts),
            xi,
        });
    }
    if candidates.is_empty() {
        let (residual, j, f) = best_miss.unwrap_or((f64::INFINITY, anchor_j, anchor_f));
        return Err(Error::SearchExhausted {
            spin: params.sensor_id.clone(),
            other: table.spins()[j].clone(),
            measured: f,
            best_residual: residual,
        });
    }
    candidates.sort_by(|a, b| a.xi.total_cmp(&b.xi).then(a.site.cmp(&b.site)));
    let ambiguous = candidates.len() > 1;

    let (refined_position, refined_sigma) = if params.refine {
        let start = candidates[0].position;
        let objective = |x: &[f64], r: &mut Vec<f64>| -> Result<()> {
            let pos = [x[0], x[1], x[2]];
            for (k, &(j, f, _)) in couplings.iter().enumerate() {
                let id = &table.spins()[j];
                let other = carbons
                    .position(id)
                    .ok_or_else(|| Error::MissingCoordinates(id.clone()))?;
                let predicted =
                    dipolar_coupling(pos, other, g_sensor, gamma_for(id, consts), consts)?;
                r[k] = f - predicted;
            }
            Ok(())
        };
        let usable = couplings
            .iter()
            .filter(|(j, _, _)| carbons.position(&table.spins()[*j]).is_some())
            .count();
        if usable > 3 {
            let fit = levenberg_marquardt(objective, &start, couplings.len(), LmOptions::default())?;
            let dof_scale = ((couplings.len() - 3) as f64 / couplings.len() as f64).sqrt();
            let sigma = fit
                .uncertainties()
                .map(|u| [u[0] * dof_scale, u[1] * dof_scale, u[2] * dof_scale]);
            (Some([fit.params[0], fit.params[1], fit.params[2]]), sigma)
        } else {
            (None, None)
        }
    } else {
        (None, None)
    };

    Ok(SensorPlacement { candidates, ambiguous, refined_position, refined_sigma })
}

/// The lattice site adjacent to `site` along -z (the vacancy of the
/// defect pair). Second-sublattice sites have an exact neighbour one
/// bond below; otherwise the nearest lattice site to that point is used.
fn vacancy_below(site: [i32; 3], lattice: &DiamondLattice, consts: &PhysicalConstants) -> [f64; 3] {
    let below = [site[0] - 1, site[1] - 1, site[2] - 1];
    if crate::lattice::on_diamond_lattice(below) {
        return int_to_cartesian(below, consts.a0);
    }
    let p = int_to_cartesian(site, consts.a0);
    let target = [p[0], p[1], p[2] - consts.bond_length()];
    let mut best = (f64::INFINITY, [0.0; 3]);
    for &s in lattice.sites() {
        let q = int_to_cartesian(s, consts.a0);
        if s == site {
            continue;
        }
        let d2: f64 = (0..3).map(|d| (q[d] - target[d]).powi(2)).sum();
        if d2 < best.0 {
            best = (d2, q);
        }
    }
    best.1
}

/// One reference site (e.g. from an ab-initio calculation) to compare
/// measured hyperfine components against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSite {
    pub id: Option<String>,
    /// Position in the reference frame, angstrom.
    pub position: Option<[f64; 3]>,
    pub a_par_khz: f64,
    pub a_perp_khz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperfineComparisonOptions {
    /// Negate the reference A_par (opposite sign convention).
    pub sign_flip_a_par: bool,
    /// Uniform scale applied to the measured coordinates before
    /// matching (lattice relaxation between frames).
    pub coordinate_scale: f64,
    /// Maximum spin-to-site distance for a positional match, angstrom.
    pub match_radius: f64,
}

impl Default for HyperfineComparisonOptions {
    fn default() -> Self {
        HyperfineComparisonOptions {
            sign_flip_a_par: false,
            coordinate_scale: 1.02,
            match_radius: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperfineMatch {
    pub spin: String,
    pub site_index: usize,
    /// Spin-to-site distance where positional matching was used.
    pub distance: Option<f64>,
    /// Measured minus reference, kHz.
    pub d_par_khz: f64,
    pub d_perp_khz: f64,
}

/// Matches measured spins to reference sites (by position when the
/// reference carries coordinates, by label otherwise) and returns the
/// hyperfine differences.
pub fn hyperfine_comparison(
    records: &[SpinRecord],
    structure: Option<&Structure>,
    reference: &[ReferenceSite],
    opts: &HyperfineComparisonOptions,
) -> Result<Vec<HyperfineMatch>> {
    let positional = reference.iter().any(|s| s.position.is_some());
    if positional && structure.is_none() {
        return Err(Error::InvalidInput(
            "positional reference sites need a structure".into(),
        ));
    }
    let mut out = Vec::new();
    for rec in records {
        let matched: Option<(usize, Option<f64>)> = if positional {
            let p = match structure.unwrap().position(&rec.id) {
                Some(p) => [
                    p[0] * opts.coordinate_scale,
                    p[1] * opts.coordinate_scale,
                    p[2] * opts.coordinate_scale,
                ],
                None => continue,
            };
            reference
                .iter()
                .enumerate()
                .filter_map(|(k, site)| {
                    site.position.map(|q| {
                        let d: f64 =
                            (0..3).map(|d| (p[d] - q[d]).powi(2)).sum::<f64>().sqrt();
                        (k, d)
                    })
                })
                .filter(|&(_, d)| d <= opts.match_radius)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, d)| (k, Some(d)))
        } else {
            reference
                .iter()
                .position(|s| s.id.as_deref() == Some(rec.id.as_str()))
                .map(|k| (k, None))
        };
        if let Some((k, distance)) = matched {
            let sign = if opts.sign_flip_a_par { -1.0 } else { 1.0 };
            out.push(HyperfineMatch {
                spin: rec.id.clone(),
                site_index: k,
                distance,
                d_par_khz: rec.a_par - sign * reference[k].a_par_khz,
                d_perp_khz: rec.a_perp - reference[k].a_perp_khz,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synthesize_table, MsProjection};
    use approx::assert_relative_eq;

    fn lattice_structure(consts: &PhysicalConstants) -> Structure {
        let ints = [
            [0, 0, 0],
            [2, 2, 0],
            [4, 0, 0],
            [3, 3, 1],
            [-2, 0, 2],
            [0, 4, 4],
            [1, 1, 5],
        ];
        let spins: Vec<String> = (1..=ints.len()).map(|i| format!("C{i}")).collect();
        let coords = ints.iter().map(|&v| int_to_cartesian(v, consts.a0)).collect();
        Structure::new(spins, coords)
    }

    #[test]
    fn refinement_restores_perturbed_positions() {
        let consts = PhysicalConstants::default();
        let truth = lattice_structure(&consts);
        let table = synthesize_table(&truth, MsProjection::Averaged, &consts).unwrap();
        // perturb every coordinate by up to 0.05 angstrom, the scale of
        // the discrepancies a lattice solution leaves behind
        let mut start = truth.clone();
        for (i, p) in start.coordinates.iter_mut().enumerate() {
            for d in 0..3 {
                p[d] += 0.05 * ((i * 3 + d) as f64 * 0.77).sin();
            }
        }
        let gauge = GaugeSpec::new("C1", "C2", 0.0);
        let result = refine(&start, &table, &gauge, &RefineOptions::default(), &consts).unwrap();
        assert!(result.final_xi < 1e-10, "xi = {}", result.final_xi);
        assert!(result.final_xi <= result.initial_xi);
        let cmp = compare_structures(&truth, &result.structure).unwrap();
        assert!(cmp.mean_distance < 1e-4, "mean {}", cmp.mean_distance);
        // gauge pins: origin at 0, plane spin in the x-z plane
        let o = result.structure.position("C1").unwrap();
        assert_eq!(o, [0.0, 0.0, 0.0]);
        assert_eq!(result.structure.position("C2").unwrap()[1], 0.0);
        let u = result.structure.uncertainties.as_ref().unwrap();
        assert_eq!(u[0], [0.0; 3]);
    }

    #[test]
    fn comparison_undoes_gauge_transformations() {
        let consts = PhysicalConstants::default();
        let a = lattice_structure(&consts);
        // rotate, invert z, reflect x, translate
        let theta: f64 = 0.83;
        let coords = a
            .coordinates
            .iter()
            .map(|p| {
                let q = [-p[0], p[1], -p[2]];
                let r = rotate_z(q, theta);
                [r[0] + 3.0, r[1] - 1.5, r[2] + 7.0]
            })
            .collect();
        let b = Structure::new(a.spins.clone(), coords);
        let cmp = compare_structures(&a, &b).unwrap();
        assert!(cmp.mean_distance < 1e-9, "mean {}", cmp.mean_distance);
        assert!(cmp.z_inverted);
        assert!(cmp.x_reflected);
    }

    #[test]
    fn comparison_detects_genuine_differences() {
        let consts = PhysicalConstants::default();
        let a = lattice_structure(&consts);
        let mut b = a.clone();
        b.coordinates[3][2] += 2.0;
        let cmp = compare_structures(&a, &b).unwrap();
        assert!(cmp.mean_distance > 0.1);
        assert!(cmp.max_distance > 1.0);
    }

    #[test]
    fn sensor_is_recovered_from_synthetic_couplings() {
        let consts = PhysicalConstants::default();
        let carbons = lattice_structure(&consts);
        let n_site = [-3, -1, -5];
        assert!(crate::lattice::on_diamond_lattice(n_site));
        let n_pos = int_to_cartesian(n_site, consts.a0);
        let mut spins = carbons.spins.clone();
        spins.push("N".into());
        let mut coords = carbons.coordinates.clone();
        coords.push(n_pos);
        let full = Structure::new(spins, coords);
        let table = synthesize_table(&full, MsProjection::Averaged, &consts).unwrap();
        let placement = position_sensor(
            &carbons,
            &table,
            &SensorParams { n_l: 6, ..SensorParams::default() },
            &consts,
        )
        .unwrap();
        let best = &placement.candidates[0];
        assert_eq!(best.site, n_site);
        assert!(best.xi < 1e-12);
        // vacancy is one bond length straight below
        assert_relative_eq!(best.vacancy[2], n_pos[2] - consts.bond_length(), epsilon = 1e-9);
        assert_relative_eq!(best.vacancy[0], n_pos[0], epsilon = 1e-9);
        let refined = placement.refined_position.unwrap();
        for d in 0..3 {
            assert_relative_eq!(refined[d], n_pos[d], epsilon = 1e-4);
        }
    }

    #[test]
    fn hyperfine_matching_by_position_and_scale() {
        let consts = PhysicalConstants::default();
        let structure = lattice_structure(&consts);
        let records: Vec<SpinRecord> = structure
            .spins
            .iter()
            .enumerate()
            .map(|(i, id)| SpinRecord {
                id: id.clone(),
                omega_minus1: 0.0,
                omega_plus1: 0.0,
                omega_0: 0.0,
                a_par: 10.0 + i as f64,
                a_perp: 5.0,
                a_perp_imaginary: false,
            })
            .collect();
        let scale = 1.02;
        let reference: Vec<ReferenceSite> = structure
            .spins
            .iter()
            .zip(&structure.coordinates)
            .enumerate()
            .map(|(i, (_, p))| ReferenceSite {
                id: None,
                position: Some([p[0] * scale, p[1] * scale, p[2] * scale]),
                a_par_khz: -(10.0 + i as f64),
                a_perp_khz: 5.0,
            })
            .collect();
        let opts = HyperfineComparisonOptions {
            sign_flip_a_par: true,
            coordinate_scale: scale,
            match_radius: 0.3,
        };
        let matches =
            hyperfine_comparison(&records, Some(&structure), &reference, &opts).unwrap();
        assert_eq!(matches.len(), records.len());
        for m in &matches {
            assert!(m.distance.unwrap() < 1e-9);
            assert_relative_eq!(m.d_par_khz, 0.0, epsilon = 1e-12);
            assert_relative_eq!(m.d_perp_khz, 0.0, epsilon = 1e-12);
        }
    }
}
