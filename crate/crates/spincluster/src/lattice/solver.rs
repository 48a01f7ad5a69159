use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consts::PhysicalConstants;
use crate::error::{Error, Result};
use crate::lattice::diamond::{int_to_cartesian, sublattice_of, DiamondLattice, Sublattice};
use crate::lattice::lookup::CouplingLookup;
use crate::lattice::cubic::cubic_lattice_for_coupling;
use crate::model::{dipolar_coupling, gamma_for, CouplingTable, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeMode {
    Diamond,
    Cubic,
}

#[derive(Debug, Clone)]
pub struct SolverParams {
    pub mode: LatticeMode,
    /// Diamond lattice half-extent in fcc indices.
    pub n_l: i32,
    /// Residual bound (strict) for regular entries, Hz.
    pub tolerance_hz: f64,
    /// Looser bound for entries measured in only one projection, Hz.
    pub tolerance_single_hz: f64,
    /// Maximum number of configurations kept after each placement.
    pub cutoff: usize,
    /// Cubic-mode grid sizing length, meters.
    pub n_l_tilde_m: f64,
    /// Explicit placement order; derived greedily when absent.
    pub spin_order: Option<Vec<String>>,
    /// Seed spin when the order is derived (defaults to the first spin
    /// of the table).
    pub first_spin: Option<String>,
    pub parallel: bool,
    /// When set, the surviving configuration list is written to
    /// `step_NN.json` after every placement.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            mode: LatticeMode::Diamond,
            n_l: 11,
            tolerance_hz: 1.1,
            tolerance_single_hz: 3.0,
            cutoff: 5000,
            n_l_tilde_m: 2e-8,
            spin_order: None,
            first_spin: None,
            parallel: true,
            checkpoint_dir: None,
        }
    }
}

/// One branch of the search: positions for the spins placed so far, in
/// placement order, plus the running sum of squared residuals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateConfiguration {
    /// Working-frame positions, angstrom.
    pub positions: Vec<[f64; 3]>,
    /// Exact lattice coordinates (units a0/4); empty in cubic mode.
    pub ints: Vec<[i32; 3]>,
    /// Sum over measured couplings among placed spins of squared
    /// residuals, Hz^2.
    pub xi_partial: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLog {
    pub spin: String,
    /// Configurations that satisfied every constraint at this step.
    pub generated: usize,
    /// Configurations surviving the cutoff.
    pub kept: usize,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// Placement order actually used.
    pub order: Vec<String>,
    /// Surviving configurations, best (lowest xi) first.
    pub configurations: Vec<CandidateConfiguration>,
    pub steps: Vec<StepLog>,
}

impl SolveOutcome {
    /// Best-ranked configuration as a structure (spins in placement order).
    pub fn best_structure(&self) -> Option<Structure> {
        self.structure(0)
    }

    pub fn structure(&self, rank: usize) -> Option<Structure> {
        let cfg = self.configurations.get(rank)?;
        let mut s = Structure::new(self.order.clone(), cfg.positions.clone());
        s.xi = Some(cfg.xi_partial);
        Some(s)
    }
}

/// Greedy placement order: start from `first` and repeatedly add the
/// unplaced spin with the strongest measured coupling into the placed
/// set (weak upper-bound entries count at their stand-in value).
pub fn derive_spin_order(table: &CouplingTable, first: Option<&str>) -> Result<Vec<usize>> {
    let n = table.spins().len();
    if n == 0 {
        return Err(Error::InvalidInput("empty coupling table".into()));
    }
    let start = match first {
        Some(id) => table
            .spin_index(id)
            .ok_or_else(|| Error::UnknownSpin(id.to_string()))?,
        None => 0,
    };
    let mut order = vec![start];
    let mut placed = vec![false; n];
    placed[start] = true;
    while order.len() < n {
        let mut best: Option<(f64, usize)> = None;
        for cand in 0..n {
            if placed[cand] {
                continue;
            }
            let strongest = table
                .couplings_of(cand)
                .filter(|(other, _)| placed[*other])
                .map(|(_, e)| e.frequency_hz)
                .fold(f64::NEG_INFINITY, f64::max);
            if strongest == f64::NEG_INFINITY {
                continue;
            }
            let better = match best {
                None => true,
                Some((f, i)) => strongest > f || (strongest == f && cand < i),
            };
            if better {
                best = Some((strongest, cand));
            }
        }
        match best {
            Some((_, cand)) => {
                placed[cand] = true;
                order.push(cand);
            }
            None => {
                let missing = (0..n).find(|&i| !placed[i]).unwrap();
                return Err(Error::InvalidInput(format!(
                    "spin {} has no measured coupling into the placed set",
                    table.spins()[missing]
                )));
            }
        }
    }
    Ok(order)
}

/// Canonical representative of the orbit of `v` under the six coordinate
/// permutations that fix the [111] axis (the point group of the lattice
/// about the first placed spin): the lexicographic minimum.
pub fn reduce_symmetry_diamond(v: [i32; 3]) -> [i32; 3] {
    let perms = [
        [v[0], v[1], v[2]],
        [v[0], v[2], v[1]],
        [v[1], v[0], v[2]],
        [v[1], v[2], v[0]],
        [v[2], v[0], v[1]],
        [v[2], v[1], v[0]],
    ];
    *perms.iter().min().unwrap()
}

struct NearMiss {
    other: usize,
    measured: f64,
    residual: f64,
}

pub struct Solver<'a> {
    table: &'a CouplingTable,
    consts: &'a PhysicalConstants,
    params: SolverParams,
    gammas: Vec<f64>,
    lattice: Option<DiamondLattice>,
    lookup: Option<CouplingLookup>,
}

impl<'a> Solver<'a> {
    pub fn new(
        table: &'a CouplingTable,
        consts: &'a PhysicalConstants,
        params: SolverParams,
    ) -> Self {
        let gammas = table
            .spins()
            .iter()
            .map(|id| gamma_for(id, consts))
            .collect();
        let (lattice, lookup) = match params.mode {
            LatticeMode::Diamond => {
                let lattice = DiamondLattice::new(params.n_l, consts.a0);
                let lookup = CouplingLookup::build(&lattice, consts);
                (Some(lattice), Some(lookup))
            }
            LatticeMode::Cubic => (None, None),
        };
        Solver { table, consts, params, gammas, lattice, lookup }
    }

    pub fn lattice(&self) -> Option<&DiamondLattice> {
        self.lattice.as_ref()
    }

    fn tolerance_for(&self, i: usize, j: usize) -> f64 {
        match self.table.get(i, j) {
            Some(e) if e.single_projection_only => self.params.tolerance_single_hz,
            _ => self.params.tolerance_hz,
        }
    }

    /// Anchor for placing `spin`: the already-placed spin with the
    /// strongest measured coupling to it.
    fn anchor_for(&self, spin: usize, placed: &[usize]) -> Result<usize> {
        placed
            .iter()
            .enumerate()
            .filter_map(|(slot, &other)| {
                self.table.get(spin, other).map(|e| (e.frequency_hz, slot))
            })
            .max_by(|a, b| a.partial_cmp(b).unwrap())
            .map(|(_, slot)| slot)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "spin {} has no measured coupling into the placed set",
                    self.table.spins()[spin]
                ))
            })
    }

    /// Runs the sequential search over the full placement order.
    pub fn solve(&self) -> Result<SolveOutcome> {
        let order_idx = match &self.params.spin_order {
            Some(ids) => ids
                .iter()
                .map(|id| {
                    self.table
                        .spin_index(id)
                        .ok_or_else(|| Error::UnknownSpin(id.clone()))
                })
                .collect::<Result<Vec<_>>>()?,
            None => derive_spin_order(self.table, self.params.first_spin.as_deref())?,
        };
        let order: Vec<String> = order_idx
            .iter()
            .map(|&i| self.table.spins()[i].clone())
            .collect();

        let mut configs = vec![CandidateConfiguration {
            positions: vec![[0.0, 0.0, 0.0]],
            ints: match self.params.mode {
                LatticeMode::Diamond => vec![[0, 0, 0]],
                LatticeMode::Cubic => vec![],
            },
            xi_partial: 0.0,
        }];
        let mut steps = vec![StepLog { spin: order[0].clone(), generated: 1, kept: 1 }];

        for step in 1..order_idx.len() {
            let spin = order_idx[step];
            let placed = &order_idx[..step];
            let anchor_slot = self.anchor_for(spin, placed)?;
            let anchor_spin = placed[anchor_slot];
            let anchor_entry = self.table.get(spin, anchor_spin).unwrap();
            let anchor_tol = self.tolerance_for(spin, anchor_spin);

            // Displacements from the anchor compatible with the anchor
            // coupling are the same for every configuration; build them once.
            let expanded: Vec<Vec<CandidateConfiguration>>;
            let mut near_miss: Option<NearMiss> = None;
            match self.params.mode {
                LatticeMode::Diamond => {
                    let lookup = self.lookup.as_ref().unwrap();
                    let scale = self.gammas[spin] * self.gammas[anchor_spin]
                        / (self.consts.gamma_c * self.consts.gamma_c);
                    let per_sublattice = |from: Sublattice| -> Vec<[i32; 3]> {
                        let mut v: Vec<_> = lookup
                            .candidates(
                                from,
                                anchor_entry.frequency_hz,
                                anchor_tol,
                                scale,
                            )
                            .collect();
                        if step == 1 {
                            v.retain(|&d| reduce_symmetry_diamond(d) == d);
                        }
                        v
                    };
                    let cands_a = per_sublattice(Sublattice::A);
                    let cands_b = per_sublattice(Sublattice::B);
                    let lattice = self.lattice.as_ref().unwrap();
                    let expand = |cfg: &CandidateConfiguration| {
                        let anchor_int = cfg.ints[anchor_slot];
                        let cands = match sublattice_of(anchor_int) {
                            Sublattice::A => &cands_a,
                            Sublattice::B => &cands_b,
                        };
                        let mut out = Vec::new();
                        let mut miss: Option<NearMiss> = None;
                        'cand: for &d in cands {
                            let site = [
                                anchor_int[0] + d[0],
                                anchor_int[1] + d[1],
                                anchor_int[2] + d[2],
                            ];
                            if !lattice.contains(site) || cfg.ints.contains(&site) {
                                continue;
                            }
                            let pos = int_to_cartesian(site, self.consts.a0);
                            let mut dxi = 0.0;
                            for (slot, &other) in placed.iter().enumerate() {
                                if let Some(entry) = self.table.get(spin, other) {
                                    let predicted = dipolar_coupling(
                                        pos,
                                        cfg.positions[slot],
                                        self.gammas[spin],
                                        self.gammas[other],
                                        self.consts,
                                    )
                                    .expect("distinct sites");
                                    let delta = entry.frequency_hz - predicted;
                                    if delta.abs() >= self.tolerance_for(spin, other) {
                                        let worse = miss
                                            .as_ref()
                                            .map_or(true, |m| delta.abs() < m.residual);
                                        if worse {
                                            miss = Some(NearMiss {
                                                other,
                                                measured: entry.frequency_hz,
                                                residual: delta.abs(),
                                            });
                                        }
                                        continue 'cand;
                                    }
                                    dxi += delta * delta;
                                }
                            }
                            let mut ints = cfg.ints.clone();
                            ints.push(site);
                            let mut positions = cfg.positions.clone();
                            positions.push(pos);
                            out.push(CandidateConfiguration {
                                positions,
                                ints,
                                xi_partial: cfg.xi_partial + dxi,
                            });
                        }
                        (out, miss)
                    };
                    let results: Vec<_> = if self.params.parallel {
                        configs.par_iter().map(expand).collect()
                    } else {
                        configs.iter().map(expand).collect()
                    };
                    let mut kept = Vec::new();
                    for (out, miss) in results {
                        kept.push(out);
                        if let Some(m) = miss {
                            if near_miss.as_ref().map_or(true, |b| m.residual < b.residual) {
                                near_miss = Some(m);
                            }
                        }
                    }
                    expanded = kept;
                }
                LatticeMode::Cubic => {
                    let spec = cubic_lattice_for_coupling(
                        anchor_entry.frequency_hz,
                        self.gammas[spin],
                        self.gammas[anchor_spin],
                        self.params.n_l_tilde_m,
                        self.consts,
                    )?;
                    let mut cands: Vec<[f64; 3]> = spec
                        .displacements()
                        .into_iter()
                        .filter(|&d| {
                            let f = dipolar_coupling(
                                [0.0; 3],
                                d,
                                self.gammas[spin],
                                self.gammas[anchor_spin],
                                self.consts,
                            )
                            .expect("nonzero displacement");
                            (f - anchor_entry.frequency_hz).abs() < anchor_tol
                        })
                        .collect();
                    if step == 1 {
                        // the second spin is confined to the x-z plane
                        cands.retain(|d| d[1] == 0.0);
                    }
                    let expand = |cfg: &CandidateConfiguration| {
                        let anchor_pos = cfg.positions[anchor_slot];
                        let mut out = Vec::new();
                        let mut miss: Option<NearMiss> = None;
                        'cand: for &d in &cands {
                            let pos = [
                                anchor_pos[0] + d[0],
                                anchor_pos[1] + d[1],
                                anchor_pos[2] + d[2],
                            ];
                            // the third spin resolves the remaining
                            // reflection freedom: keep y >= 0 only
                            if step == 2 && pos[1] < 0.0 {
                                continue;
                            }
                            let mut dxi = 0.0;
                            for (slot, &other) in placed.iter().enumerate() {
                                if let Some(entry) = self.table.get(spin, other) {
                                    let predicted = match dipolar_coupling(
                                        pos,
                                        cfg.positions[slot],
                                        self.gammas[spin],
                                        self.gammas[other],
                                        self.consts,
                                    ) {
                                        Ok(f) => f,
                                        Err(_) => continue 'cand,
                                    };
                                    let delta = entry.frequency_hz - predicted;
                                    if delta.abs() >= self.tolerance_for(spin, other) {
                                        let worse = miss
                                            .as_ref()
                                            .map_or(true, |m| delta.abs() < m.residual);
                                        if worse {
                                            miss = Some(NearMiss {
                                                other,
                                                measured: entry.frequency_hz,
                                                residual: delta.abs(),
                                            });
                                        }
                                        continue 'cand;
                                    }
                                    dxi += delta * delta;
                                }
                            }
                            let mut positions = cfg.positions.clone();
                            positions.push(pos);
                            out.push(CandidateConfiguration {
                                positions,
                                ints: vec![],
                                xi_partial: cfg.xi_partial + dxi,
                            });
                        }
                        (out, miss)
                    };
                    let results: Vec<_> = if self.params.parallel {
                        configs.par_iter().map(expand).collect()
                    } else {
                        configs.iter().map(expand).collect()
                    };
                    let mut kept = Vec::new();
                    for (out, miss) in results {
                        kept.push(out);
                        if let Some(m) = miss {
                            if near_miss.as_ref().map_or(true, |b| m.residual < b.residual) {
                                near_miss = Some(m);
                            }
                        }
                    }
                    expanded = kept;
                }
            }

            let mut next: Vec<CandidateConfiguration> =
                expanded.into_iter().flatten().collect();
            let generated = next.len();
            if next.is_empty() {
                let miss = near_miss.unwrap_or(NearMiss {
                    other: anchor_spin,
                    measured: anchor_entry.frequency_hz,
                    residual: f64::INFINITY,
                });
                return Err(Error::SearchExhausted {
                    spin: self.table.spins()[spin].clone(),
                    other: self.table.spins()[miss.other].clone(),
                    measured: miss.measured,
                    best_residual: miss.residual,
                });
            }
            next.sort_by(compare_configs);
            next.truncate(self.params.cutoff);
            steps.push(StepLog {
                spin: order[step].clone(),
                generated,
                kept: next.len(),
            });
            configs = next;

            if let Some(dir) = &self.params.checkpoint_dir {
                write_checkpoint(dir, step, &order[..=step], &configs)?;
            }
        }

        Ok(SolveOutcome { order, configurations: configs, steps })
    }
}

/// Deterministic total order: ascending xi, ties broken on coordinates.
fn compare_configs(a: &CandidateConfiguration, b: &CandidateConfiguration) -> std::cmp::Ordering {
    a.xi_partial
        .total_cmp(&b.xi_partial)
        .then_with(|| a.ints.cmp(&b.ints))
        .then_with(|| {
            for (p, q) in a.positions.iter().zip(&b.positions) {
                for d in 0..3 {
                    let c = p[d].total_cmp(&q[d]);
                    if c != std::cmp::Ordering::Equal {
                        return c;
                    }
                }
            }
            std::cmp::Ordering::Equal
        })
}

#[derive(Serialize, Deserialize)]
struct Checkpoint<'a> {
    step: usize,
    placed: std::borrow::Cow<'a, [String]>,
    configurations: std::borrow::Cow<'a, [CandidateConfiguration]>,
}

fn write_checkpoint(
    dir: &std::path::Path,
    step: usize,
    placed: &[String],
    configs: &[CandidateConfiguration],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("step_{step:02}.json"));
    let payload = Checkpoint {
        step,
        placed: placed.into(),
        configurations: configs.into(),
    };
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(file, &payload)?;
    Ok(())
}

/// Reads back a configuration list written by the solver.
pub fn load_checkpoint(path: &std::path::Path) -> Result<(Vec<String>, Vec<CandidateConfiguration>)> {
    let text = std::fs::read_to_string(path)?;
    let cp: Checkpoint = serde_json::from_str(&text)?;
    Ok((cp.placed.into_owned(), cp.configurations.into_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synthesize_table, MsProjection};

    fn synthetic_cluster() -> (Structure, CouplingTable, PhysicalConstants) {
        let consts = PhysicalConstants::default();
        let lattice = DiamondLattice::new(4, consts.a0);
        let ints = [
            [0, 0, 0],
            [2, 2, 0],
            [4, 0, 0],
            [3, 3, 1],
            [-2, 0, 2],
            [0, 4, 4],
        ];
        let spins: Vec<String> = (1..=ints.len()).map(|i| format!("C{i}")).collect();
        let coords = ints
            .iter()
            .map(|&v| {
                assert!(lattice.contains(v));
                int_to_cartesian(v, consts.a0)
            })
            .collect();
        let structure = Structure::new(spins, coords);
        let table = synthesize_table(&structure, MsProjection::Averaged, &consts).unwrap();
        (structure, table, consts)
    }

    #[test]
    fn greedy_order_follows_strongest_links() {
        let (_, table, _) = synthetic_cluster();
        let order = derive_spin_order(&table, None).unwrap();
        assert_eq!(order[0], 0);
        assert_eq!(order.len(), table.spins().len());
        // every spin appears once
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..table.spins().len()).collect::<Vec<_>>());
    }

    #[test]
    fn symmetry_reduction_is_idempotent_orbit_minimum() {
        let v = [3, -1, -3];
        let c = reduce_symmetry_diamond(v);
        assert_eq!(c, [-3, -1, 3]);
        assert_eq!(reduce_symmetry_diamond(c), c);
    }

    #[test]
    fn diamond_solver_recovers_synthetic_cluster() {
        let (truth, table, consts) = synthetic_cluster();
        let params = SolverParams {
            n_l: 5,
            tolerance_hz: 1.0,
            ..SolverParams::default()
        };
        let solver = Solver::new(&table, &consts, params);
        let outcome = solver.solve().unwrap();
        let best = outcome.best_structure().unwrap();
        assert!(best.xi.unwrap() < 1e-12, "xi = {:?}", best.xi);
        // the reconstruction matches the original up to the gauge group;
        // pairwise distances are gauge invariant
        for i in 0..truth.len() {
            for j in (i + 1)..truth.len() {
                let d = |s: &Structure, a: &str, b: &str| {
                    let p = s.position(a).unwrap();
                    let q = s.position(b).unwrap();
                    (0..3)
                        .map(|k| (p[k] - q[k]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                };
                let a = &truth.spins[i];
                let b = &truth.spins[j];
                assert!(
                    (d(&truth, a, b) - d(&best, a, b)).abs() < 1e-9,
                    "distance mismatch {a}-{b}"
                );
            }
        }
    }

    #[test]
    fn serial_and_parallel_searches_agree() {
        let (_, table, consts) = synthetic_cluster();
        let run = |parallel| {
            let params = SolverParams {
                n_l: 5,
                tolerance_hz: 1.0,
                parallel,
                ..SolverParams::default()
            };
            Solver::new(&table, &consts, params).solve().unwrap()
        };
        let a = run(true);
        let b = run(false);
        assert_eq!(a.configurations.len(), b.configurations.len());
        for (x, y) in a.configurations.iter().zip(&b.configurations) {
            assert_eq!(x.ints, y.ints);
            assert_eq!(x.xi_partial, y.xi_partial);
        }
    }

    #[test]
    fn cubic_solver_approximates_synthetic_cluster() {
        let (truth, table, consts) = synthetic_cluster();
        let params = SolverParams {
            mode: LatticeMode::Cubic,
            tolerance_hz: 2.5,
            ..SolverParams::default()
        };
        let solver = Solver::new(&table, &consts, params);
        let outcome = solver.solve().unwrap();
        let best = outcome.best_structure().unwrap();
        // free-grid positions approximate the true pairwise distances
        for i in 0..truth.len() {
            for j in (i + 1)..truth.len() {
                let pa = truth.coordinates[i];
                let pb = truth.coordinates[j];
                let qa = best.position(&truth.spins[i]).unwrap();
                let qb = best.position(&truth.spins[j]).unwrap();
                let dt = (0..3).map(|k| (pa[k] - pb[k]).powi(2)).sum::<f64>().sqrt();
                let dr = (0..3).map(|k| (qa[k] - qb[k]).powi(2)).sum::<f64>().sqrt();
                assert!((dt - dr).abs() < 1.2, "pair {i}-{j}: {dt} vs {dr}");
            }
        }
    }

    #[test]
    fn exhaustion_reports_the_binding_constraint() {
        let (_, mut table, consts) = synthetic_cluster();
        // corrupt one coupling so no lattice placement can satisfy it
        let (i, j, f) = {
            let (i, j, e) = table.iter().next().unwrap();
            (i, j, e.frequency_hz)
        };
        table.get_mut(i, j).unwrap().frequency_hz = f + 500.0;
        let params = SolverParams {
            n_l: 5,
            tolerance_hz: 0.5,
            ..SolverParams::default()
        };
        let err = Solver::new(&table, &consts, params).solve().unwrap_err();
        match err {
            Error::SearchExhausted { spin, .. } => assert!(!spin.is_empty()),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn checkpoints_round_trip() {
        let (_, table, consts) = synthetic_cluster();
        let dir = tempfile::tempdir().unwrap();
        let params = SolverParams {
            n_l: 5,
            tolerance_hz: 1.0,
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..SolverParams::default()
        };
        let outcome = Solver::new(&table, &consts, params).solve().unwrap();
        let last = dir
            .path()
            .join(format!("step_{:02}.json", table.spins().len() - 1));
        let (placed, configs) = load_checkpoint(&last).unwrap();
        assert_eq!(placed, outcome.order);
        assert_eq!(configs.len(), outcome.configurations.len());
        assert_eq!(configs[0].ints, outcome.configurations[0].ints);
    }
}
