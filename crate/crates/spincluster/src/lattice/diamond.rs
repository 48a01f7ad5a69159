use std::collections::HashSet;

use crate::consts::PhysicalConstants;

/// Offset between the two interpenetrating fcc sublattices, in units of
/// a0/4 and in the cubic axis frame.
pub const DELTA_INT: [i32; 3] = [1, 1, 1];

/// Rows of the rotation taking cubic-axis coordinates to the working frame:
/// z along [111], x along [1,-1,0], y along [1,1,-2] (each normalised).
pub const CUBIC_TO_Z_FRAME: [[f64; 3]; 3] = [
    [std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2, 0.0],
    [0.408_248_290_463_863_05, 0.408_248_290_463_863_05, -0.816_496_580_927_726_1],
    [0.577_350_269_189_625_8, 0.577_350_269_189_625_8, 0.577_350_269_189_625_8],
];

/// Which of the two fcc sublattices a site belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sublattice {
    A,
    B,
}

/// A finite diamond lattice, stored in exact integer coordinates
/// (units of a0/4, cubic axis frame) so that membership tests and
/// symmetry operations are free of rounding.
#[derive(Debug, Clone)]
pub struct DiamondLattice {
    pub n_l: i32,
    pub a0_angstrom: f64,
    sites: Vec<[i32; 3]>,
    membership: HashSet<[i32; 3]>,
}

/// True when `v` (units a0/4, cubic frame) lies on the infinite diamond
/// lattice with one atom at the origin.
pub fn on_diamond_lattice(v: [i32; 3]) -> bool {
    let s = v[0] + v[1] + v[2];
    let even = v.iter().all(|c| c & 1 == 0);
    let odd = v.iter().all(|c| c & 1 == 1);
    (even && s.rem_euclid(4) == 0) || (odd && s.rem_euclid(4) == 3)
}

pub(crate) fn sublattice_of(v: [i32; 3]) -> Sublattice {
    if v[0] & 1 == 0 {
        Sublattice::A
    } else {
        Sublattice::B
    }
}

impl DiamondLattice {
    /// Builds the lattice from fcc indices i,j,k in [-n_l, n_l] plus the
    /// second sublattice copy: 2(2n_l+1)^3 sites in total.
    pub fn new(n_l: i32, a0_angstrom: f64) -> Self {
        let range = -n_l..=n_l;
        let mut sites = Vec::with_capacity((2 * (2 * n_l as usize + 1).pow(3)) as usize);
        for i in range.clone() {
            for j in range.clone() {
                for k in range.clone() {
                    // fcc primitive vectors a0/2 (0,1,1), (1,0,1), (1,1,0)
                    // expressed in a0/4 units.
                    let a = [2 * (j + k), 2 * (i + k), 2 * (i + j)];
                    sites.push(a);
                    sites.push([a[0] + 1, a[1] + 1, a[2] + 1]);
                }
            }
        }
        let membership = sites.iter().copied().collect();
        DiamondLattice { n_l, a0_angstrom, sites, membership }
    }

    pub fn from_constants(n_l: i32, consts: &PhysicalConstants) -> Self {
        Self::new(n_l, consts.a0)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[[i32; 3]] {
        &self.sites
    }

    pub fn contains(&self, v: [i32; 3]) -> bool {
        self.membership.contains(&v)
    }

    pub fn sublattice(&self, v: [i32; 3]) -> Sublattice {
        sublattice_of(v)
    }

    /// Integer coordinates to angstroms in the working (z || [111]) frame.
    pub fn cartesian(&self, v: [i32; 3]) -> [f64; 3] {
        int_to_cartesian(v, self.a0_angstrom)
    }
}

/// Shared conversion so structures can be mapped without a lattice handle.
pub fn int_to_cartesian(v: [i32; 3], a0_angstrom: f64) -> [f64; 3] {
    let s = a0_angstrom / 4.0;
    let c = [v[0] as f64 * s, v[1] as f64 * s, v[2] as f64 * s];
    let r = &CUBIC_TO_Z_FRAME;
    [
        r[0][0] * c[0] + r[0][1] * c[1] + r[0][2] * c[2],
        r[1][0] * c[0] + r[1][1] * c[1] + r[1][2] * c[2],
        r[2][0] * c[0] + r[2][1] * c[1] + r[2][2] * c[2],
    ]
}

/// Inverse of [`int_to_cartesian`]: nearest integer lattice-frame triple
/// for a point given in the working frame (angstroms).
pub fn cartesian_to_int(p: [f64; 3], a0_angstrom: f64) -> [i32; 3] {
    let s = 4.0 / a0_angstrom;
    let r = &CUBIC_TO_Z_FRAME;
    // rows are orthonormal, so the inverse is the transpose
    let c = [
        r[0][0] * p[0] + r[1][0] * p[1] + r[2][0] * p[2],
        r[0][1] * p[0] + r[1][1] * p[1] + r[2][1] * p[2],
        r[0][2] * p[0] + r[1][2] * p[1] + r[2][2] * p[2],
    ];
    [
        (c[0] * s).round() as i32,
        (c[1] * s).round() as i32,
        (c[2] * s).round() as i32,
    ]
}

/// Counts diamond-lattice sites inside a closed axis-aligned box given in
/// the working frame (angstroms), with one site pinned at the origin.
pub fn diamond_sites_in_box(lo: [f64; 3], hi: [f64; 3], consts: &PhysicalConstants) -> usize {
    let s = 4.0 / consts.a0;
    // Bound the integer search region by the box corners mapped back to
    // the cubic frame.
    let mut lo_i = [i32::MAX; 3];
    let mut hi_i = [i32::MIN; 3];
    for cx in 0..8 {
        let p = [
            if cx & 1 == 0 { lo[0] } else { hi[0] },
            if cx & 2 == 0 { lo[1] } else { hi[1] },
            if cx & 4 == 0 { lo[2] } else { hi[2] },
        ];
        let r = &CUBIC_TO_Z_FRAME;
        let c = [
            r[0][0] * p[0] + r[1][0] * p[1] + r[2][0] * p[2],
            r[0][1] * p[0] + r[1][1] * p[1] + r[2][1] * p[2],
            r[0][2] * p[0] + r[1][2] * p[1] + r[2][2] * p[2],
        ];
        for d in 0..3 {
            lo_i[d] = lo_i[d].min((c[d] * s).floor() as i32 - 1);
            hi_i[d] = hi_i[d].max((c[d] * s).ceil() as i32 + 1);
        }
    }
    let eps = 1e-9;
    let mut count = 0usize;
    for x in lo_i[0]..=hi_i[0] {
        for y in lo_i[1]..=hi_i[1] {
            for z in lo_i[2]..=hi_i[2] {
                let v = [x, y, z];
                if !on_diamond_lattice(v) {
                    continue;
                }
                let p = int_to_cartesian(v, consts.a0);
                if (0..3).all(|d| p[d] >= lo[d] - eps && p[d] <= hi[d] + eps) {
                    count += 1;
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn site_count_matches_closed_form() {
        let lat = DiamondLattice::new(2, 3.5668);
        assert_eq!(lat.len(), 2 * 5usize.pow(3));
        let lat = DiamondLattice::new(11, 3.5668);
        assert_eq!(lat.len(), 24_334);
    }

    #[test]
    fn all_sites_pass_membership_predicate() {
        let lat = DiamondLattice::new(3, 3.5668);
        for &s in lat.sites() {
            assert!(on_diamond_lattice(s), "{s:?}");
            assert!(lat.contains(s));
        }
        assert!(!on_diamond_lattice([1, 0, 0]));
        assert!(!on_diamond_lattice([2, 0, 0]));
        assert!(!on_diamond_lattice([-1, -1, -1]));
    }

    #[test]
    fn nearest_neighbour_distance_is_bond_length() {
        let lat = DiamondLattice::new(2, 3.5668);
        let origin = lat.cartesian([0, 0, 0]);
        let mut best = f64::INFINITY;
        for &s in lat.sites() {
            if s == [0, 0, 0] {
                continue;
            }
            let p = lat.cartesian(s);
            let d: f64 = (0..3).map(|i| (p[i] - origin[i]).powi(2)).sum::<f64>().sqrt();
            best = best.min(d);
        }
        assert_relative_eq!(best, 3.5668 * 3f64.sqrt() / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn working_frame_matches_published_convention() {
        // a0/2 (0,1,-1) must land at (-1.26, 2.18, 0.00) angstroms.
        let p = int_to_cartesian([0, 2, -2], 3.5668);
        assert_relative_eq!(p[0], -1.26, epsilon = 0.005);
        assert_relative_eq!(p[1], 2.18, epsilon = 0.005);
        assert_relative_eq!(p[2], 0.0, epsilon = 1e-12);
        // a0/4 (3,-1,-3) is a valid second-sublattice site.
        assert!(on_diamond_lattice([3, -1, -3]));
        assert_eq!(sublattice_of([3, -1, -3]), Sublattice::B);
    }

    #[test]
    fn cartesian_round_trip() {
        let lat = DiamondLattice::new(3, 3.5668);
        for &s in lat.sites() {
            let p = lat.cartesian(s);
            assert_eq!(cartesian_to_int(p, 3.5668), s);
        }
    }

    #[test]
    fn box_count_scales_with_volume() {
        let consts = PhysicalConstants::default();
        // density: 8 atoms per conventional cell of volume a0^3
        let a0 = consts.a0;
        let n = diamond_sites_in_box([-20.0, -20.0, -20.0], [20.0, 20.0, 20.0], &consts);
        let expected = 8.0 * 40f64.powi(3) / a0.powi(3);
        assert!((n as f64 - expected).abs() / expected < 0.05, "{n} vs {expected}");
    }
}
