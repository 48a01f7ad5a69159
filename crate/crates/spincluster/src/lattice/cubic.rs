use crate::consts::{PhysicalConstants, ANGSTROM};
use crate::error::{Error, Result};

/// Cubic search lattice sized to a single anchor coupling: the grid spans
/// a cube of edge `2 dr_max` where `dr_max` is the largest separation
/// consistent with the measured frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicLatticeSpec {
    /// Maximum compatible separation, angstrom.
    pub dr_max_angstrom: f64,
    /// Grid half-extent in steps; points run over `[-n_l, n_l]^3`.
    pub n_l: i32,
    /// Grid step, angstrom.
    pub spacing_angstrom: f64,
}

/// Sizes the cubic lattice for an anchor coupling of `frequency_hz`
/// between spins with gyromagnetic ratios `gamma_i`, `gamma_j`.
///
/// `dr_max = (2 alpha / C)^(1/3)` with `C = 4 pi f` (the axial, i.e.
/// largest-magnitude, orientation); `n_l = round(n_l_tilde / dr_max)`
/// clamped to at least 1, with `n_l_tilde` in meters.
pub fn cubic_lattice_for_coupling(
    frequency_hz: f64,
    gamma_i: f64,
    gamma_j: f64,
    n_l_tilde_m: f64,
    consts: &PhysicalConstants,
) -> Result<CubicLatticeSpec> {
    if frequency_hz <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "anchor frequency {frequency_hz} Hz must be positive"
        )));
    }
    let alpha = consts.alpha(gamma_i, gamma_j);
    let c = 4.0 * std::f64::consts::PI * frequency_hz;
    let dr_max_m = (2.0 * alpha / c).cbrt();
    let n_l = ((n_l_tilde_m / dr_max_m).round() as i32).max(1);
    let dr_max_angstrom = dr_max_m / ANGSTROM;
    Ok(CubicLatticeSpec {
        dr_max_angstrom,
        n_l,
        spacing_angstrom: dr_max_angstrom / n_l as f64,
    })
}

impl CubicLatticeSpec {
    /// Grid points as displacements from the anchor, skipping the origin.
    pub fn displacements(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity((2 * self.n_l as usize + 1).pow(3) - 1);
        for ix in -self.n_l..=self.n_l {
            for iy in -self.n_l..=self.n_l {
                for iz in -self.n_l..=self.n_l {
                    if ix == 0 && iy == 0 && iz == 0 {
                        continue;
                    }
                    out.push([
                        ix as f64 * self.spacing_angstrom,
                        iy as f64 * self.spacing_angstrom,
                        iz as f64 * self.spacing_angstrom,
                    ]);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::dipolar_coupling;
    use approx::assert_relative_eq;

    #[test]
    fn dr_max_reproduces_the_axial_frequency() {
        let consts = PhysicalConstants::default();
        let spec = cubic_lattice_for_coupling(
            100.0,
            consts.gamma_c,
            consts.gamma_c,
            2e-8,
            &consts,
        )
        .unwrap();
        // an axial pair at dr_max gives coupling 2 alpha / dr_max^3, i.e.
        // exactly the requested frequency
        let f = dipolar_coupling(
            [0.0, 0.0, 0.0],
            [0.0, 0.0, spec.dr_max_angstrom],
            consts.gamma_c,
            consts.gamma_c,
            &consts,
        )
        .unwrap();
        assert_relative_eq!(f, 100.0, max_relative = 1e-12);
    }

    #[test]
    fn grid_scales_inversely_with_dr_max() {
        let consts = PhysicalConstants::default();
        let weak =
            cubic_lattice_for_coupling(10.0, consts.gamma_c, consts.gamma_c, 2e-8, &consts)
                .unwrap();
        let strong =
            cubic_lattice_for_coupling(1000.0, consts.gamma_c, consts.gamma_c, 2e-8, &consts)
                .unwrap();
        assert!(weak.dr_max_angstrom > strong.dr_max_angstrom);
        assert!(weak.n_l < strong.n_l);
        assert!(strong.n_l >= 1);
        assert_eq!(
            weak.displacements().len(),
            (2 * weak.n_l as usize + 1).pow(3) - 1
        );
    }

    #[test]
    fn nonpositive_frequency_is_rejected() {
        let consts = PhysicalConstants::default();
        assert!(
            cubic_lattice_for_coupling(0.0, consts.gamma_c, consts.gamma_c, 2e-8, &consts)
                .is_err()
        );
    }
}
