//! File formats and the bundled measurement dataset: coupling tables
//! and precession frequencies (CSV), structures (JSON / XYZ), traces
//! and spectra (delimited text), and flat key-value run configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeMode;
use crate::model::{
    CouplingEntry, CouplingTable, MsProjection, SpinRecord, Structure, OMEGA_0_DEFAULT_KHZ,
};
use crate::signal::{Spectrum, Trace};

// ---------------------------------------------------------------------------
// value parsing

/// Parses `"61.90(8)"` into value and 1-sigma uncertainty
/// `(61.90, 0.08)`; the parenthesised digits scale with the last
/// decimal place of the mantissa. Plain numbers carry zero uncertainty.
pub fn parse_value_with_uncertainty(s: &str) -> Result<(f64, f64)> {
    let s = s.trim();
    let bad = |m: &str| Error::Parse { line: 0, message: format!("{m}: {s:?}") };
    if let Some(open) = s.find('(') {
        if !s.ends_with(')') {
            return Err(bad("unterminated uncertainty"));
        }
        let mantissa = &s[..open];
        let digits = &s[open + 1..s.len() - 1];
        let value: f64 = mantissa.parse().map_err(|_| bad("bad mantissa"))?;
        let raw: f64 = digits.parse().map_err(|_| bad("bad uncertainty"))?;
        let decimals = mantissa
            .split('.')
            .nth(1)
            .map(|frac| frac.len() as i32)
            .unwrap_or(0);
        Ok((value, raw * 10f64.powi(-decimals)))
    } else {
        let value: f64 = s.parse().map_err(|_| bad("bad number"))?;
        Ok((value, 0.0))
    }
}

/// One cell of a coupling matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Cell {
    Missing,
    Weak,
    Value(f64, f64),
}

fn parse_cell(s: &str) -> Result<Cell> {
    let s = s.trim();
    match s {
        "-" | "" => Ok(Cell::Missing),
        "<1" => Ok(Cell::Weak),
        _ => {
            let (v, u) = parse_value_with_uncertainty(s)?;
            Ok(Cell::Value(v, u))
        }
    }
}

fn at_line<T>(r: Result<T>, line: usize) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse { line, message },
        other => other,
    })
}

// ---------------------------------------------------------------------------
// coupling tables

/// Loads a symmetric coupling matrix in CSV form: `#`-prefixed header
/// lines, a column header `spin,<id>,...`, then one row per spin with
/// cells `value(sigma)`, `<1` (unresolved weak coupling) or `-`.
///
/// The two triangles are cross-checked; any disagreement is an error
/// naming the offending cells.
pub fn coupling_table_from_csv(text: &str, ms: MsProjection) -> Result<CouplingTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 0, message: "empty table".into() })?;
    let mut cols = header.split(',').map(str::trim);
    if cols.next() != Some("spin") {
        return Err(Error::Parse {
            line: hline + 1,
            message: "first column must be 'spin'".into(),
        });
    }
    let ids: Vec<String> = cols.map(|c| c.to_string()).collect();
    let mut table = CouplingTable::new(ids.clone());
    let mut seen: BTreeMap<(usize, usize), Cell> = BTreeMap::new();
    let mut n_rows = 0usize;
    for (lno, line) in lines {
        let mut parts = line.split(',').map(str::trim);
        let row_id = parts
            .next()
            .ok_or_else(|| Error::Parse { line: lno + 1, message: "empty row".into() })?;
        let i = table
            .spin_index(row_id)
            .ok_or_else(|| Error::UnknownSpin(row_id.to_string()))?;
        n_rows += 1;
        for (j, cell_text) in parts.enumerate() {
            if j >= ids.len() {
                return Err(Error::Parse {
                    line: lno + 1,
                    message: "row longer than header".into(),
                });
            }
            let cell = at_line(parse_cell(cell_text), lno + 1)?;
            if i == j {
                if cell != Cell::Missing {
                    return Err(Error::Parse {
                        line: lno + 1,
                        message: format!("diagonal cell {row_id},{row_id} must be '-'"),
                    });
                }
                continue;
            }
            let key = (i.min(j), i.max(j));
            match seen.get(&key) {
                None => {
                    seen.insert(key, cell);
                }
                Some(prev) => {
                    let agree = match (prev, &cell) {
                        (Cell::Value(a, ua), Cell::Value(b, ub)) => {
                            (a - b).abs() <= 1e-9 && (ua - ub).abs() <= 1e-9
                        }
                        (p, c) => p == c,
                    };
                    if !agree {
                        return Err(Error::AsymmetricTable(format!(
                            "cells ({},{}) and ({},{}) disagree",
                            ids[i], ids[j], ids[j], ids[i]
                        )));
                    }
                    continue;
                }
            }
        }
    }
    if n_rows != ids.len() {
        return Err(Error::Parse {
            line: 0,
            message: format!("{n_rows} rows for {} columns", ids.len()),
        });
    }
    for ((i, j), cell) in seen {
        match cell {
            Cell::Missing => {}
            Cell::Weak => table.insert(i, j, CouplingEntry::weak(ms))?,
            Cell::Value(v, u) => table.insert(i, j, CouplingEntry::measured(v, u, ms))?,
        }
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// precession frequencies

/// Loads the per-spin precession frequency table (kHz, `value(sigma)`
/// cells) and carries the tabulated hyperfine estimates alongside.
/// The m_s = 0 frequency is not in the file; the shared measured value
/// is used for every spin.
pub fn spin_records_from_csv(text: &str) -> Result<Vec<SpinRecord>> {
    let mut records = Vec::new();
    for (lno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("spin,") {
            continue;
        }
        let parts: Vec<&str> = t.split(',').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(Error::Parse {
                line: lno + 1,
                message: format!("expected 5 columns, got {}", parts.len()),
            });
        }
        let num = |s: &str| at_line(parse_value_with_uncertainty(s), lno + 1);
        records.push(SpinRecord {
            id: parts[0].to_string(),
            omega_minus1: num(parts[1])?.0,
            omega_plus1: num(parts[2])?.0,
            omega_0: OMEGA_0_DEFAULT_KHZ,
            a_par: num(parts[3])?.0,
            a_perp: num(parts[4])?.0,
            a_perp_imaginary: false,
        });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// structures

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureFormat {
    Json,
    Xyz,
}

/// Serialises a structure. JSON keeps the full record (gauge,
/// uncertainties, xi); XYZ keeps id + coordinates only but both
/// round-trip coordinates losslessly.
pub fn structure_to_string(s: &Structure, format: StructureFormat) -> Result<String> {
    match format {
        StructureFormat::Json => Ok(serde_json::to_string_pretty(s)?),
        StructureFormat::Xyz => {
            let mut out = format!("{}\n\n", s.len());
            for (id, p) in s.spins.iter().zip(&s.coordinates) {
                // `{}` prints the shortest exactly-round-tripping decimal
                out.push_str(&format!("{} {} {} {}\n", element_of(id), p[0], p[1], p[2]));
            }
            Ok(out)
        }
    }
}

fn element_of(id: &str) -> &str {
    if id.starts_with('N') {
        "N"
    } else {
        "C"
    }
}

pub fn structure_from_string(text: &str, format: StructureFormat) -> Result<Structure> {
    match format {
        StructureFormat::Json => Ok(serde_json::from_str(text)?),
        StructureFormat::Xyz => {
            let mut lines = text.lines();
            let n: usize = lines
                .next()
                .and_then(|l| l.trim().parse().ok())
                .ok_or_else(|| Error::Parse { line: 1, message: "bad atom count".into() })?;
            lines.next(); // comment line
            let mut spins = Vec::with_capacity(n);
            let mut coords = Vec::with_capacity(n);
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for (k, line) in lines.enumerate().take(n) {
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 4 {
                    return Err(Error::Parse {
                        line: k + 3,
                        message: "expected 'element x y z'".into(),
                    });
                }
                let c = counts.entry(parts[0].to_string()).or_insert(0);
                *c += 1;
                spins.push(if parts[0] == "N" && *c == 1 {
                    "N".to_string()
                } else {
                    format!("{}{}", parts[0], c)
                });
                let mut p = [0.0; 3];
                for d in 0..3 {
                    p[d] = parts[d + 1].parse().map_err(|_| Error::Parse {
                        line: k + 3,
                        message: format!("bad coordinate {:?}", parts[d + 1]),
                    })?;
                }
                coords.push(p);
            }
            if spins.len() != n {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("expected {n} atoms, found {}", spins.len()),
                });
            }
            Ok(Structure::new(spins, coords))
        }
    }
}

// ---------------------------------------------------------------------------
// traces and spectra

/// Two-column delimited text, `t,value` per line with a header.
pub fn trace_to_csv(trace: &Trace) -> String {
    let mut out = String::from("t,value\n");
    for (t, v) in trace.times.iter().zip(&trace.values) {
        out.push_str(&format!("{t},{v}\n"));
    }
    out
}

pub fn trace_from_csv(text: &str) -> Result<Trace> {
    let (times, values) = two_columns(text, "t")?;
    Ok(Trace { times, values })
}

pub fn spectrum_to_csv(spectrum: &Spectrum) -> String {
    let mut out = String::from("frequency,power\n");
    for (f, p) in spectrum.frequencies.iter().zip(&spectrum.power) {
        out.push_str(&format!("{f},{p}\n"));
    }
    out
}

pub fn spectrum_from_csv(text: &str) -> Result<Spectrum> {
    let (frequencies, power) = two_columns(text, "frequency")?;
    Ok(Spectrum { frequencies, power })
}

fn two_columns(text: &str, first_header: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (lno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with(first_header) {
            continue;
        }
        let (x, y) = t.split_once(',').ok_or_else(|| Error::Parse {
            line: lno + 1,
            message: "expected two comma-separated columns".into(),
        })?;
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::Parse {
                line: lno + 1,
                message: format!("bad number {s:?}"),
            })
        };
        a.push(parse(x)?);
        b.push(parse(y)?);
    }
    Ok((a, b))
}

// ---------------------------------------------------------------------------
// run configuration

/// All tunables of the pipeline, loadable from a flat `key = value`
/// file (`#` comments allowed). Defaults reproduce the reference runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: LatticeMode,
    pub n_l: i32,
    pub tolerance_hz: f64,
    pub tolerance_single_hz: f64,
    pub cutoff: usize,
    pub n_l_tilde_m: f64,
    pub bz_gauss: f64,
    pub b_perp_max_gauss: f64,
    pub omega_0_khz: f64,
    pub origin_spin: String,
    pub plane_spin: String,
    pub pre_rotation_deg: f64,
    pub first_spin: Option<String>,
    pub spin_order: Option<Vec<String>>,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub workers: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: LatticeMode::Diamond,
            n_l: 11,
            tolerance_hz: 1.1,
            tolerance_single_hz: 3.0,
            cutoff: 5000,
            n_l_tilde_m: 2e-8,
            bz_gauss: 403.0,
            b_perp_max_gauss: 1.0,
            omega_0_khz: OMEGA_0_DEFAULT_KHZ,
            origin_spin: "C1".into(),
            plane_spin: "C2".into(),
            pre_rotation_deg: -49.1,
            first_spin: None,
            spin_order: None,
            seed: 0,
            workers: 0,
            checkpoint_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lno, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (key, value) = t.split_once('=').ok_or_else(|| Error::Parse {
                line: lno + 1,
                message: "expected 'key = value'".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |m: String| Error::Parse { line: lno + 1, message: m };
            macro_rules! num {
                () => {
                    value.parse().map_err(|_| bad(format!("bad value {value:?} for {key}")))?
                };
            }
            match key {
                "mode" => {
                    cfg.mode = match value {
                        "diamond" => LatticeMode::Diamond,
                        "cubic" => LatticeMode::Cubic,
                        _ => return Err(bad(format!("unknown mode {value:?}"))),
                    }
                }
                "n_l" => cfg.n_l = num!(),
                "tolerance_hz" => cfg.tolerance_hz = num!(),
                "tolerance_single_hz" => cfg.tolerance_single_hz = num!(),
                "cutoff" => cfg.cutoff = num!(),
                "n_l_tilde_m" => cfg.n_l_tilde_m = num!(),
                "bz_gauss" => cfg.bz_gauss = num!(),
                "b_perp_max_gauss" => cfg.b_perp_max_gauss = num!(),
                "omega_0_khz" => cfg.omega_0_khz = num!(),
                "origin_spin" => cfg.origin_spin = value.to_string(),
                "plane_spin" => cfg.plane_spin = value.to_string(),
                "pre_rotation_deg" => cfg.pre_rotation_deg = num!(),
                "first_spin" => cfg.first_spin = Some(value.to_string()),
                "spin_order" => {
                    cfg.spin_order =
                        Some(value.split(',').map(|s| s.trim().to_string()).collect())
                }
                "seed" => cfg.seed = num!(),
                "workers" => cfg.workers = num!(),
                "checkpoint_dir" => cfg.checkpoint_dir = Some(PathBuf::from(value)),
                _ => return Err(bad(format!("unknown key {key:?}"))),
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if self.tolerance_hz <= 0.0 || self.tolerance_single_hz <= 0.0 {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if self.cutoff == 0 {
            return Err(Error::InvalidInput("cutoff must be at least 1".into()));
        }
        Ok(())
    }

    pub fn solver_params(&self) -> crate::lattice::SolverParams {
        crate::lattice::SolverParams {
            mode: self.mode,
            n_l: self.n_l,
            tolerance_hz: self.tolerance_hz,
            tolerance_single_hz: self.tolerance_single_hz,
            cutoff: self.cutoff,
            n_l_tilde_m: self.n_l_tilde_m,
            spin_order: self.spin_order.clone(),
            first_spin: self.first_spin.clone(),
            parallel: true,
            checkpoint_dir: self.checkpoint_dir.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// bundled dataset

const PRECESSION_CSV: &str = include_str!("../data/precession_frequencies.csv");
const COUPLINGS_MINUS1_CSV: &str = include_str!("../data/couplings_ms_minus1.csv");
const COUPLINGS_PLUS1_CSV: &str = include_str!("../data/couplings_ms_plus1.csv");
const COUPLINGS_AVERAGED_CSV: &str = include_str!("../data/couplings_averaged.csv");
const STRUCTURES_CSV: &str = include_str!("../data/structures.csv");

/// The bundled 27-spin measurement set: per-spin precession
/// frequencies, the three coupling tables, and the four published
/// coordinate sets (lattice and continuous fit, on both lattices).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<SpinRecord>,
    pub minus1: CouplingTable,
    pub plus1: CouplingTable,
    /// Projection-averaged table; `single_projection_only` is set on
    /// entries with a numeric value in exactly one of the two
    /// projection tables.
    pub averaged: CouplingTable,
    pub diamond: Structure,
    pub diamond_fit: Structure,
    pub cubic: Structure,
    pub cubic_fit: Structure,
}

fn structures_from_csv(text: &str) -> Result<[Structure; 4]> {
    let mut spins: Vec<Vec<String>> = vec![Vec::new(); 4];
    let mut coords: Vec<Vec<[f64; 3]>> = vec![Vec::new(); 4];
    let mut sigmas: Vec<Vec<[f64; 3]>> = vec![Vec::new(); 4];
    for (lno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("spin,") {
            continue;
        }
        let parts: Vec<&str> = t.split(',').map(str::trim).collect();
        if parts.len() != 13 {
            return Err(Error::Parse {
                line: lno + 1,
                message: format!("expected 13 columns, got {}", parts.len()),
            });
        }
        for set in 0..4 {
            let cells = &parts[1 + 3 * set..4 + 3 * set];
            if cells.iter().any(|c| *c == "-") {
                continue;
            }
            let mut p = [0.0; 3];
            let mut s = [0.0; 3];
            for d in 0..3 {
                let (v, u) = at_line(parse_value_with_uncertainty(cells[d]), lno + 1)?;
                p[d] = v;
                s[d] = u;
            }
            spins[set].push(parts[0].to_string());
            coords[set].push(p);
            sigmas[set].push(s);
        }
    }
    let mut out = Vec::with_capacity(4);
    for set in 0..4 {
        let mut s = Structure::new(spins[set].clone(), coords[set].clone());
        if sigmas[set].iter().any(|u| u.iter().any(|&x| x > 0.0)) {
            s.uncertainties = Some(sigmas[set].clone());
        }
        out.push(s);
    }
    Ok(out.try_into().expect("four structures"))
}

impl Dataset {
    /// Loads and cross-validates the bundled tables.
    pub fn bundled() -> Result<Dataset> {
        Dataset::from_sources(
            PRECESSION_CSV,
            COUPLINGS_MINUS1_CSV,
            COUPLINGS_PLUS1_CSV,
            COUPLINGS_AVERAGED_CSV,
            STRUCTURES_CSV,
        )
    }

    /// Loads the same five files from a directory instead of the
    /// bundled copies (same names as under `data/`).
    pub fn from_dir(dir: &std::path::Path) -> Result<Dataset> {
        let read = |name: &str| std::fs::read_to_string(dir.join(name));
        Dataset::from_sources(
            &read("precession_frequencies.csv")?,
            &read("couplings_ms_minus1.csv")?,
            &read("couplings_ms_plus1.csv")?,
            &read("couplings_averaged.csv")?,
            &read("structures.csv")?,
        )
    }

    fn from_sources(
        precession: &str,
        minus1: &str,
        plus1: &str,
        averaged: &str,
        structures: &str,
    ) -> Result<Dataset> {
        let records = spin_records_from_csv(precession)?;
        let minus1 = coupling_table_from_csv(minus1, MsProjection::Minus1)?;
        let plus1 = coupling_table_from_csv(plus1, MsProjection::Plus1)?;
        let mut averaged = coupling_table_from_csv(averaged, MsProjection::Averaged)?;

        // mark averaged entries backed by only one projection
        let pairs: Vec<(usize, usize)> = averaged
            .iter()
            .map(|(i, j, _)| (i, j))
            .collect();
        for (i, j) in pairs {
            let id_i = averaged.spins()[i].clone();
            let id_j = averaged.spins()[j].clone();
            let numeric = |t: &CouplingTable| -> bool {
                match (t.spin_index(&id_i), t.spin_index(&id_j)) {
                    (Some(a), Some(b)) => {
                        t.get(a, b).map(|e| !e.weak_upper_bound).unwrap_or(false)
                    }
                    _ => false,
                }
            };
            let n = numeric(&minus1) as u8 + numeric(&plus1) as u8;
            if n == 1 {
                averaged.get_mut(i, j).unwrap().single_projection_only = true;
            }
        }

        let [diamond, diamond_fit, cubic, cubic_fit] = structures_from_csv(structures)?;
        let ds = Dataset {
            records,
            minus1,
            plus1,
            averaged,
            diamond,
            diamond_fit,
            cubic,
            cubic_fit,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Consistency checks across the bundled tables: row counts, and
    /// every averaged entry backed by both projections must equal their
    /// mean within rounding.
    pub fn validate(&self) -> Result<()> {
        if self.records.len() != 27 {
            return Err(Error::InvalidInput(format!(
                "expected 27 spin records, found {}",
                self.records.len()
            )));
        }
        for (table, n) in [(&self.minus1, 28), (&self.plus1, 28), (&self.averaged, 28)] {
            if table.spins().len() != n {
                return Err(Error::InvalidInput(format!(
                    "expected {n} table spins, found {}",
                    table.spins().len()
                )));
            }
        }
        let mut checked = 0usize;
        for (i, j, e) in self.averaged.iter() {
            if e.weak_upper_bound {
                continue;
            }
            let id_i = &self.averaged.spins()[i];
            let id_j = &self.averaged.spins()[j];
            let value = |t: &CouplingTable| -> Option<f64> {
                let a = t.spin_index(id_i)?;
                let b = t.spin_index(id_j)?;
                t.get(a, b).filter(|e| !e.weak_upper_bound).map(|e| e.frequency_hz)
            };
            if let (Some(m), Some(p)) = (value(&self.minus1), value(&self.plus1)) {
                let mean = 0.5 * (m + p);
                // the published tables are rounded independently
                let round = 0.5 * (e.sigma_hz.max(0.05) + 0.1);
                if (mean - e.frequency_hz).abs() > round.max(0.15) {
                    return Err(Error::InvalidInput(format!(
                        "averaged {id_i}-{id_j} = {} Hz but projections mean {mean} Hz",
                        e.frequency_hz
                    )));
                }
                checked += 1;
            }
        }
        if checked == 0 {
            return Err(Error::InvalidInput(
                "no averaged entries backed by both projections".into(),
            ));
        }
        Ok(())
    }

    /// The averaged table restricted to the 27 nuclei (sensor excluded).
    pub fn carbon_table(&self) -> Result<CouplingTable> {
        let ids: Vec<String> = self
            .averaged
            .spins()
            .iter()
            .filter(|s| *s != "N")
            .cloned()
            .collect();
        self.averaged.restrict(&ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uncertainty_notation_scales_with_decimals() {
        assert_eq!(parse_value_with_uncertainty("61.90(8)").unwrap(), (61.90, 0.08));
        assert_eq!(parse_value_with_uncertainty("12(1)").unwrap(), (12.0, 1.0));
        let (v, u) = parse_value_with_uncertainty("-20.72(15)").unwrap();
        assert_relative_eq!(v, -20.72);
        assert_relative_eq!(u, 0.15);
        assert_eq!(parse_value_with_uncertainty("3.5").unwrap(), (3.5, 0.0));
        assert!(parse_value_with_uncertainty("abc").is_err());
        assert!(parse_value_with_uncertainty("1.0(2").is_err());
    }

    #[test]
    fn bundled_dataset_loads_and_validates() {
        let ds = Dataset::bundled().unwrap();
        assert_eq!(ds.records.len(), 27);
        assert_eq!(ds.averaged.spins().len(), 28);
        // 171 carbon-carbon + 12 sensor couplings
        let n_idx = ds.averaged.spin_index("N").unwrap();
        let sensor = ds.averaged.couplings_of(n_idx).count();
        assert_eq!(sensor, 12);
        let carbon = ds
            .averaged
            .iter()
            .filter(|(i, j, _)| *i != n_idx && *j != n_idx)
            .count();
        assert_eq!(carbon, 171);
        // published structures: all 27 nuclei plus the sensor's nucleus
        // on the lattice, carbons only for the cubic runs
        assert_eq!(ds.diamond.len(), 28);
        assert_eq!(ds.diamond_fit.len(), 28);
        assert_eq!(ds.cubic.len(), 27);
        assert_eq!(ds.cubic_fit.len(), 27);
        assert!(ds.diamond_fit.uncertainties.is_some());
    }

    #[test]
    fn single_projection_flags_come_from_cross_reference() {
        let ds = Dataset::bundled().unwrap();
        let idx = |s: &str| ds.averaged.spin_index(s).unwrap();
        // C6-C20 is measured only at one projection
        let e = ds.averaged.get(idx("C6"), idx("C20")).unwrap();
        assert!(e.single_projection_only);
        // C1-C2 appears in both
        let e = ds.averaged.get(idx("C1"), idx("C2")).unwrap();
        assert!(!e.single_projection_only);
    }

    #[test]
    fn asymmetric_tables_are_rejected() {
        let text = "spin,A,B\nA,-,1.0(1)\nB,2.0(1),-\n";
        match coupling_table_from_csv(text, MsProjection::Averaged) {
            Err(Error::AsymmetricTable(msg)) => assert!(msg.contains("A")),
            other => panic!("expected asymmetry error, got {other:?}"),
        }
    }

    #[test]
    fn weak_and_missing_cells_parse() {
        let text = "spin,A,B,C\nA,-,<1,-\nB,<1,-,3.5(2)\nC,-,3.5(2),-\n";
        let t = coupling_table_from_csv(text, MsProjection::Minus1).unwrap();
        assert_eq!(t.len(), 2);
        let e = t.get(0, 1).unwrap();
        assert!(e.weak_upper_bound);
        assert_relative_eq!(e.frequency_hz, 0.5);
        let e = t.get(1, 2).unwrap();
        assert_relative_eq!(e.frequency_hz, 3.5);
        assert_relative_eq!(e.sigma_hz, 0.2);
    }

    #[test]
    fn structure_round_trips_both_formats() {
        let mut s = Structure::new(
            vec!["C1".into(), "C2".into(), "N".into()],
            vec![
                [0.0, 0.0, 0.0],
                [1.234567890123, -2.5, 0.125],
                [3.78, -0.73, -8.75],
            ],
        );
        s.xi = Some(1.5);
        for format in [StructureFormat::Json, StructureFormat::Xyz] {
            let text = structure_to_string(&s, format).unwrap();
            let back = structure_from_string(&text, format).unwrap();
            assert_eq!(back.spins, s.spins);
            assert_eq!(back.coordinates, s.coordinates);
            if format == StructureFormat::Json {
                assert_eq!(back.xi, s.xi);
            }
        }
    }

    #[test]
    fn trace_and_spectrum_round_trip() {
        let trace = Trace {
            times: vec![0.0, 0.001, 0.002],
            values: vec![1.0, -0.5, 0.3333333333333333],
        };
        let back = trace_from_csv(&trace_to_csv(&trace)).unwrap();
        assert_eq!(back, trace);
        let spec = Spectrum {
            frequencies: vec![0.0, 10.0, 20.0],
            power: vec![0.0, 0.25, 1e-17],
        };
        let back = spectrum_from_csv(&spectrum_to_csv(&spec)).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn config_parses_and_defaults() {
        let text = "# comment\nmode = cubic\nn_l = 7\ntolerance_hz = 0.9\nspin_order = C1, C2, C3\n";
        let cfg = RunConfig::from_key_values(text).unwrap();
        assert_eq!(cfg.mode, LatticeMode::Cubic);
        assert_eq!(cfg.n_l, 7);
        assert_relative_eq!(cfg.tolerance_hz, 0.9);
        assert_eq!(
            cfg.spin_order.as_deref().unwrap(),
            ["C1".to_string(), "C2".into(), "C3".into()]
        );
        // untouched keys keep defaults
        assert_relative_eq!(cfg.bz_gauss, 403.0);
        assert!(RunConfig::from_key_values("bogus = 1\n").is_err());
        assert!(RunConfig::from_key_values("n_l\n").is_err());
    }
}
