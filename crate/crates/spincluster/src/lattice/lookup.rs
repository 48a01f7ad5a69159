use crate::consts::PhysicalConstants;
use crate::lattice::diamond::{DiamondLattice, Sublattice, DELTA_INT};
use crate::model::dipolar_coupling;

/// Every lattice vector reachable from a site of a given sublattice,
/// sorted by the coupling frequency it produces, so that the candidate
/// set for a measured frequency is a single binary-searched range.
#[derive(Debug, Clone)]
pub struct CouplingLookup {
    // (frequency for a gamma_c * gamma_c pair in Hz, displacement in a0/4 units)
    from_a: Vec<(f64, [i32; 3])>,
    from_b: Vec<(f64, [i32; 3])>,
}

impl CouplingLookup {
    pub fn build(lattice: &DiamondLattice, consts: &PhysicalConstants) -> Self {
        let entry = |origin: [i32; 3], site: [i32; 3]| -> Option<(f64, [i32; 3])> {
            if site == origin {
                return None;
            }
            let v = [site[0] - origin[0], site[1] - origin[1], site[2] - origin[2]];
            let p0 = lattice.cartesian(origin);
            let p1 = lattice.cartesian(site);
            let f = dipolar_coupling(p0, p1, consts.gamma_c, consts.gamma_c, consts)
                .expect("distinct lattice sites");
            Some((f, v))
        };
        let mut from_a: Vec<_> = lattice
            .sites()
            .iter()
            .filter_map(|&s| entry([0, 0, 0], s))
            .collect();
        let mut from_b: Vec<_> = lattice
            .sites()
            .iter()
            .filter_map(|&s| entry(DELTA_INT, s))
            .collect();
        let key = |e: &(f64, [i32; 3])| (e.0, e.1);
        from_a.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        from_b.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        CouplingLookup { from_a, from_b }
    }

    /// Displacements whose predicted frequency, scaled by `gamma_scale`
    /// (ratio of the actual gyromagnetic product to gamma_c^2), falls
    /// within `tol_hz` of `target_hz`. Results keep the sorted order.
    pub fn candidates(
        &self,
        from: Sublattice,
        target_hz: f64,
        tol_hz: f64,
        gamma_scale: f64,
    ) -> impl Iterator<Item = [i32; 3]> + '_ {
        let table = match from {
            Sublattice::A => &self.from_a,
            Sublattice::B => &self.from_b,
        };
        let lo = (target_hz - tol_hz) / gamma_scale;
        let hi = (target_hz + tol_hz) / gamma_scale;
        let start = table.partition_point(|e| e.0 < lo);
        table[start..]
            .iter()
            .take_while(move |e| e.0 <= hi)
            .map(|e| e.1)
    }

    pub fn len(&self) -> usize {
        self.from_a.len() + self.from_b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.from_a.is_empty() && self.from_b.is_empty()
    }
}
