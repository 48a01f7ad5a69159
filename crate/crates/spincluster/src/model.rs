//! Domain types and the point-dipole coupling model.
//!
//! Couplings are predicted from coordinates via the secular (zz) component
//! of the nuclear-nuclear dipolar interaction; a double-resonance
//! measurement on spins i and j oscillates at `f_ij = |C_ij| / 4pi`.
//! Only magnitudes are ever compared to data: the sign of `C_ij` is not
//! observable in these experiments.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::consts::{PhysicalConstants, ANGSTROM};
use crate::error::{Error, Result};

/// Frequency assigned to couplings reported only as "< 1 Hz".
pub const WEAK_EFFECTIVE_HZ: f64 = 0.5;

/// Electron spin projection a coupling was measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MsProjection {
    Minus1,
    Plus1,
    Averaged,
}

/// One nuclear spin: label, measured precession frequencies and the
/// hyperfine components estimated from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinRecord {
    pub id: String,
    /// Precession frequency for m_s = -1, kHz.
    pub omega_minus1: f64,
    /// Precession frequency for m_s = +1, kHz.
    pub omega_plus1: f64,
    /// Precession frequency for m_s = 0, kHz.
    pub omega_0: f64,
    /// Parallel hyperfine estimate, kHz.
    pub a_par: f64,
    /// Perpendicular hyperfine estimate, kHz (>= 0).
    pub a_perp: f64,
    /// Set when the hyperfine equations gave an imaginary A_perp
    /// and 0 was stored instead.
    pub a_perp_imaginary: bool,
}

/// Default m_s = 0 precession frequency (kHz), the average measured value.
pub const OMEGA_0_DEFAULT_KHZ: f64 = 431.960;

/// One measured pairwise coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingEntry {
    /// Measured double-resonance frequency, Hz. For `weak_upper_bound`
    /// entries this is the fitting stand-in value of 0.5 Hz.
    pub frequency_hz: f64,
    /// 1-sigma uncertainty, Hz.
    pub sigma_hz: f64,
    pub ms_projection: MsProjection,
    /// Coupling observed to be below 1 Hz but not resolved.
    pub weak_upper_bound: bool,
    /// Numeric value available for only one of the m_s = +-1 projections.
    pub single_projection_only: bool,
}

impl CouplingEntry {
    pub fn measured(frequency_hz: f64, sigma_hz: f64, ms: MsProjection) -> Self {
        CouplingEntry {
            frequency_hz,
            sigma_hz,
            ms_projection: ms,
            weak_upper_bound: false,
            single_projection_only: false,
        }
    }

    pub fn weak(ms: MsProjection) -> Self {
        CouplingEntry {
            frequency_hz: WEAK_EFFECTIVE_HZ,
            sigma_hz: WEAK_EFFECTIVE_HZ,
            ms_projection: ms,
            weak_upper_bound: true,
            single_projection_only: false,
        }
    }
}

/// Sparse symmetric table of measured pairwise coupling frequencies.
///
/// Entries are keyed on `(min(i,j), max(i,j))` so `(i, j)` and `(j, i)`
/// resolve to the same entry; diagonal entries are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingTable {
    spins: Vec<String>,
    entries: BTreeMap<(usize, usize), CouplingEntry>,
}

impl CouplingTable {
    pub fn new(spins: Vec<String>) -> Self {
        CouplingTable {
            spins,
            entries: BTreeMap::new(),
        }
    }

    pub fn spins(&self) -> &[String] {
        &self.spins
    }

    pub fn spin_index(&self, id: &str) -> Option<usize> {
        self.spins.iter().position(|s| s == id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn key(i: usize, j: usize) -> (usize, usize) {
        (i.min(j), i.max(j))
    }

    pub fn insert(&mut self, i: usize, j: usize, entry: CouplingEntry) -> Result<()> {
        if i == j {
            return Err(Error::InvalidInput(format!(
                "diagonal coupling entry for spin {}",
                self.spins[i]
            )));
        }
        self.entries.insert(Self::key(i, j), entry);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&CouplingEntry> {
        self.entries.get(&Self::key(i, j))
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> Option<&mut CouplingEntry> {
        self.entries.get_mut(&Self::key(i, j))
    }

    /// Iterate measured pairs as `(i, j, entry)` with `i < j`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &CouplingEntry)> {
        self.entries.iter().map(|(&(i, j), e)| (i, j, e))
    }

    /// Measured couplings of one spin: `(other, entry)`.
    pub fn couplings_of(&self, i: usize) -> impl Iterator<Item = (usize, &CouplingEntry)> {
        self.entries.iter().filter_map(move |(&(a, b), e)| {
            if a == i {
                Some((b, e))
            } else if b == i {
                Some((a, e))
            } else {
                None
            }
        })
    }

    /// Sub-table over the given spin ids, in the given order.
    pub fn restrict(&self, ids: &[String]) -> Result<CouplingTable> {
        let mut idx = Vec::with_capacity(ids.len());
        for id in ids {
            idx.push(
                self.spin_index(id)
                    .ok_or_else(|| Error::UnknownSpin(id.clone()))?,
            );
        }
        let mut out = CouplingTable::new(ids.to_vec());
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate().skip(a + 1) {
                if let Some(e) = self.get(ia, ib) {
                    out.insert(a, b, *e)?;
                }
            }
        }
        Ok(out)
    }
}

/// Gauge metadata carried by a structure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GaugeInfo {
    /// Spin fixed at the origin.
    pub origin_spin: Option<String>,
    /// Spin with one transverse coordinate fixed to zero.
    pub plane_spin: Option<String>,
    /// Which coordinate of `plane_spin` is fixed ("x" or "y").
    pub fixed_coordinate: Option<String>,
    /// z-rotation applied to the initial guess, degrees.
    pub rotation_deg: f64,
}

/// Ordered list of 3D coordinates (angstrom) per spin.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub spins: Vec<String>,
    pub coordinates: Vec<[f64; 3]>,
    pub gauge: GaugeInfo,
    /// Per-coordinate 1-sigma uncertainties, angstrom.
    pub uncertainties: Option<Vec<[f64; 3]>>,
    /// Sum of squared residuals against the table it was fitted to, Hz^2.
    pub xi: Option<f64>,
}

impl Structure {
    pub fn new(spins: Vec<String>, coordinates: Vec<[f64; 3]>) -> Self {
        Structure {
            spins,
            coordinates,
            gauge: GaugeInfo::default(),
            uncertainties: None,
            xi: None,
        }
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<[f64; 3]> {
        self.spins
            .iter()
            .position(|s| s == id)
            .map(|i| self.coordinates[i])
    }
}

/// Gyromagnetic ratio for a spin label: "N" is the 14N nitrogen spin,
/// everything else is 13C.
pub fn gamma_for(id: &str, consts: &PhysicalConstants) -> f64 {
    if id == "N" {
        consts.gamma_n
    } else {
        consts.gamma_c
    }
}

/// Signed secular dipolar coupling `C_ij` in rad/s.
///
/// `C_ij = alpha_ij / r^3 * (3 dz^2 / r^2 - 1)` with
/// `alpha_ij = mu0 gamma_i gamma_j hbar / 4pi`. Positions in angstrom.
pub fn dipolar_coupling_signed(
    pos_i: [f64; 3],
    pos_j: [f64; 3],
    gamma_i: f64,
    gamma_j: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    let dx = (pos_j[0] - pos_i[0]) * ANGSTROM;
    let dy = (pos_j[1] - pos_i[1]) * ANGSTROM;
    let dz = (pos_j[2] - pos_i[2]) * ANGSTROM;
    let r2 = dx * dx + dy * dy + dz * dz;
    if r2 == 0.0 {
        return Err(Error::DegenerateGeometry(
            format!("({:.3},{:.3},{:.3})", pos_i[0], pos_i[1], pos_i[2]),
            format!("({:.3},{:.3},{:.3})", pos_j[0], pos_j[1], pos_j[2]),
        ));
    }
    let r = r2.sqrt();
    let alpha = consts.alpha(gamma_i, gamma_j);
    Ok(alpha / (r2 * r) * (3.0 * dz * dz / r2 - 1.0))
}

/// Double-resonance frequency `|C_ij| / 4pi` in Hz.
pub fn dipolar_coupling(
    pos_i: [f64; 3],
    pos_j: [f64; 3],
    gamma_i: f64,
    gamma_j: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    Ok(dipolar_coupling_signed(pos_i, pos_j, gamma_i, gamma_j, consts)?.abs() / (4.0 * PI))
}

/// Full 3x3 dipolar tensor in rad/s: `C_ab = alpha / r^3 (3 n_a n_b - d_ab)`.
///
/// The zz component matches [`dipolar_coupling_signed`]; the tensor is
/// symmetric and traceless.
pub fn dipolar_tensor(
    pos_i: [f64; 3],
    pos_j: [f64; 3],
    gamma_i: f64,
    gamma_j: f64,
    consts: &PhysicalConstants,
) -> Result<[[f64; 3]; 3]> {
    let d = [
        (pos_j[0] - pos_i[0]) * ANGSTROM,
        (pos_j[1] - pos_i[1]) * ANGSTROM,
        (pos_j[2] - pos_i[2]) * ANGSTROM,
    ];
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    if r2 == 0.0 {
        return Err(Error::DegenerateGeometry(
            format!("({:.3},{:.3},{:.3})", pos_i[0], pos_i[1], pos_i[2]),
            format!("({:.3},{:.3},{:.3})", pos_j[0], pos_j[1], pos_j[2]),
        ));
    }
    let r = r2.sqrt();
    let pref = consts.alpha(gamma_i, gamma_j) / (r2 * r);
    let n = [d[0] / r, d[1] / r, d[2] / r];
    let mut c = [[0.0; 3]; 3];
    for (a, row) in c.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let delta = if a == b { 1.0 } else { 0.0 };
            *v = pref * (3.0 * n[a] * n[b] - delta);
        }
    }
    Ok(c)
}

/// Hyperfine components from the three measured precession frequencies
/// (all kHz). Returns `(a_par, a_perp, imaginary_flag)` in kHz.
///
/// `A_par = (w+^2 - w-^2) / (4 w0)`;
/// `A_perp = sqrt((w+^2 + w-^2 - 2 w0^2 - 2 A_par^2) / 2)`.
/// A negative radicand yields `A_perp = 0` with the flag set.
pub fn hyperfine_from_frequencies(
    omega_minus1: f64,
    omega_plus1: f64,
    omega_0: f64,
) -> Result<(f64, f64, bool)> {
    if omega_0 == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    let wm2 = omega_minus1 * omega_minus1;
    let wp2 = omega_plus1 * omega_plus1;
    let a_par = (wp2 - wm2) / (4.0 * omega_0);
    let radicand = (wp2 + wm2 - 2.0 * omega_0 * omega_0 - 2.0 * a_par * a_par) / 2.0;
    if radicand < 0.0 {
        Ok((a_par, 0.0, true))
    } else {
        Ok((a_par, radicand.sqrt(), false))
    }
}

/// Precession frequencies `(w-, w+)` in kHz synthesized from hyperfine
/// components via the secular model. Inverse of
/// [`hyperfine_from_frequencies`] when the radicand is positive.
pub fn frequencies_from_hyperfine(a_par: f64, a_perp: f64, omega_0: f64) -> (f64, f64) {
    let wm = ((omega_0 - a_par).powi(2) + a_perp * a_perp).sqrt();
    let wp = ((omega_0 + a_par).powi(2) + a_perp * a_perp).sqrt();
    (wm, wp)
}

/// One residual `delta_f = f_measured - |C_ij|/4pi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub i: usize,
    pub j: usize,
    pub delta_f_hz: f64,
}

/// Residuals over measured pairs and the sum of squares `xi` (Hz^2).
///
/// Weak-upper-bound entries enter at their 0.5 Hz stand-in frequency.
pub fn residuals_and_xi(
    structure: &Structure,
    table: &CouplingTable,
    consts: &PhysicalConstants,
) -> Result<(Vec<Residual>, f64)> {
    let mut positions = Vec::with_capacity(table.spins().len());
    for id in table.spins() {
        positions.push(
            structure
                .position(id)
                .ok_or_else(|| Error::MissingCoordinates(id.clone()))?,
        );
    }
    let mut residuals = Vec::with_capacity(table.len());
    let mut xi = 0.0;
    for (i, j, entry) in table.iter() {
        let gi = gamma_for(&table.spins()[i], consts);
        let gj = gamma_for(&table.spins()[j], consts);
        let predicted = dipolar_coupling(positions[i], positions[j], gi, gj, consts)?;
        let delta = entry.frequency_hz - predicted;
        residuals.push(Residual {
            i,
            j,
            delta_f_hz: delta,
        });
        xi += delta * delta;
    }
    Ok((residuals, xi))
}

/// Table of couplings generated exactly from a structure (all pairs).
pub fn synthesize_table(
    structure: &Structure,
    ms: MsProjection,
    consts: &PhysicalConstants,
) -> Result<CouplingTable> {
    let mut table = CouplingTable::new(structure.spins.clone());
    for i in 0..structure.len() {
        for j in (i + 1)..structure.len() {
            let gi = gamma_for(&structure.spins[i], consts);
            let gj = gamma_for(&structure.spins[j], consts);
            let f = dipolar_coupling(
                structure.coordinates[i],
                structure.coordinates[j],
                gi,
                gj,
                consts,
            )?;
            table.insert(i, j, CouplingEntry::measured(f, 0.0, ms))?;
        }
    }
    Ok(table)
}

/// Bounding-box volume / lattice-site / spin-count estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinCountEstimate {
    /// Axis-aligned box edge lengths, angstrom.
    pub box_dims: [f64; 3],
    /// Box volume, nm^3.
    pub volume_nm3: f64,
    /// Diamond lattice sites inside the closed box.
    pub lattice_sites: usize,
    /// Sites times isotopic abundance.
    pub expected_spins: f64,
}

/// Expected number of spins in the bounding box of a structure at the
/// given isotopic abundance. Box boundaries are closed: sites on the
/// faces are counted.
pub fn expected_spin_count(
    structure: &Structure,
    abundance: f64,
    consts: &PhysicalConstants,
) -> Result<SpinCountEstimate> {
    if structure.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least 2 spins for a bounding box".into(),
        ));
    }
    if !(abundance > 0.0 && abundance <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "abundance {abundance} outside (0, 1]"
        )));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &structure.coordinates {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let dims = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let volume_nm3 = dims.iter().product::<f64>() / 1e3;
    let sites = crate::lattice::diamond_sites_in_box(lo, hi, consts);
    Ok(SpinCountEstimate {
        box_dims: dims,
        volume_nm3,
        lattice_sites: sites,
        expected_spins: sites as f64 * abundance,
    })
}
