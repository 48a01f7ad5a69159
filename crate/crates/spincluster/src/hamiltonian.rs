//! Electron-mediated frequency shifts: the full electron + two-nucleus
//! Hamiltonian, its exact double-resonance frequencies, the closed-form
//! perturbative corrections, and worst-case bounds over the unmeasured
//! hyperfine/field orientation angles.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::consts::{PhysicalConstants, GAUSS};
use crate::error::{Error, Result};

type CMat = DMatrix<Complex<f64>>;

fn cmat(rows: usize, data: &[Complex<f64>]) -> CMat {
    CMat::from_row_slice(rows, data.len() / rows, data)
}

fn re(x: f64) -> Complex<f64> {
    Complex::new(x, 0.0)
}

fn im(x: f64) -> Complex<f64> {
    Complex::new(0.0, x)
}

/// Spin-1 operators in the basis (|+1>, |0>, |-1>).
fn spin1() -> [CMat; 3] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sx = cmat(3, &[
        re(0.0), re(s), re(0.0),
        re(s), re(0.0), re(s),
        re(0.0), re(s), re(0.0),
    ]);
    let sy = cmat(3, &[
        re(0.0), im(-s), re(0.0),
        im(s), re(0.0), im(-s),
        re(0.0), im(s), re(0.0),
    ]);
    let sz = cmat(3, &[
        re(1.0), re(0.0), re(0.0),
        re(0.0), re(0.0), re(0.0),
        re(0.0), re(0.0), re(-1.0),
    ]);
    [sx, sy, sz]
}

/// Spin-1/2 operators in the basis (|+1/2>, |-1/2>).
fn spin_half() -> [CMat; 3] {
    let ix = cmat(2, &[re(0.0), re(0.5), re(0.5), re(0.0)]);
    let iy = cmat(2, &[re(0.0), im(-0.5), im(0.5), re(0.0)]);
    let iz = cmat(2, &[re(0.5), re(0.0), re(0.0), re(-0.5)]);
    [ix, iy, iz]
}

fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Electron spin (S = 1) coupled to two nuclear spins (I = 1/2):
/// zero-field splitting, Zeeman terms, two hyperfine tensors and the
/// internuclear tensor. All tensor entries and the returned energies
/// are angular frequencies (rad/s); fields are in tesla.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystemHamiltonian {
    pub delta_zfs: f64,
    pub gamma_e: f64,
    pub gamma_n: f64,
    /// Magnetic field, tesla.
    pub b_field: [f64; 3],
    pub a1: [[f64; 3]; 3],
    pub a2: [[f64; 3]; 3],
    pub c: [[f64; 3]; 3],
}

/// Reduced description of one hyperfine interaction: the three
/// components that couple to `S_z`, with the transverse part specified
/// by magnitude and azimuth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedHyperfine {
    /// `A_zz`, rad/s.
    pub a_zz: f64,
    /// `A_perp = sqrt(A_zx^2 + A_zy^2)`, rad/s.
    pub a_perp: f64,
    /// Azimuth of the transverse component, rad.
    pub phi: f64,
}

impl ReducedHyperfine {
    pub fn a_zx(&self) -> f64 {
        self.a_perp * self.phi.cos()
    }

    pub fn a_zy(&self) -> f64 {
        self.a_perp * self.phi.sin()
    }

    fn tensor(&self) -> [[f64; 3]; 3] {
        // hyperfine tensors are symmetric, so the measured z-row fixes
        // the x,z / y,z entries as well; without them the exact levels
        // lack the electron-mediated internuclear shift
        [
            [0.0, 0.0, self.a_zx()],
            [0.0, 0.0, self.a_zy()],
            [self.a_zx(), self.a_zy(), self.a_zz],
        ]
    }
}

/// Transverse-field direction and magnitude on top of the aligned bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    pub bz_gauss: f64,
    pub b_perp_gauss: f64,
    /// Azimuth of the transverse field, rad.
    pub theta: f64,
}

impl FieldParams {
    pub fn aligned(bz_gauss: f64) -> Self {
        FieldParams { bz_gauss, b_perp_gauss: 0.0, theta: 0.0 }
    }

    fn tesla(&self) -> [f64; 3] {
        [
            self.b_perp_gauss * GAUSS * self.theta.cos(),
            self.b_perp_gauss * GAUSS * self.theta.sin(),
            self.bz_gauss * GAUSS,
        ]
    }
}

/// Exact and perturbative double-resonance frequencies, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleResonance {
    pub f_minus1_hz: f64,
    pub f_plus1_hz: f64,
    /// Mean of the two single-projection frequencies.
    pub f_averaged_hz: f64,
    /// True when the perturbative small-parameter assumptions
    /// (hyperfine much smaller than the nuclear Zeeman splitting,
    /// transverse field much smaller than the bias) are strained.
    pub regime_warning: bool,
}

impl SpinSystemHamiltonian {
    pub fn new(
        field: FieldParams,
        h1: ReducedHyperfine,
        h2: ReducedHyperfine,
        c: [[f64; 3]; 3],
        consts: &PhysicalConstants,
    ) -> Self {
        SpinSystemHamiltonian {
            delta_zfs: consts.delta_zfs,
            // the electron gyromagnetic ratio is negative; the constant
            // table stores its magnitude
            gamma_e: -consts.gamma_e,
            gamma_n: consts.gamma_c,
            b_field: field.tesla(),
            a1: h1.tensor(),
            a2: h2.tensor(),
            c,
        }
    }

    /// The 12x12 Hamiltonian matrix in the product basis
    /// |m_s> (x) |m_1> (x) |m_2> with m_s = +1, 0, -1 and m_i = +-1/2.
    pub fn matrix(&self) -> CMat {
        let s = spin1();
        let i = spin_half();
        let s_ops: Vec<CMat> = s.iter().map(|op| op.kronecker(&eye(4))).collect();
        let i1_ops: Vec<CMat> = i
            .iter()
            .map(|op| eye(3).kronecker(op).kronecker(&eye(2)))
            .collect();
        let i2_ops: Vec<CMat> = i.iter().map(|op| eye(6).kronecker(op)).collect();

        let mut h = &s_ops[2] * &s_ops[2] * re(self.delta_zfs);
        for a in 0..3 {
            h += &s_ops[a] * re(self.gamma_e * self.b_field[a]);
            h += (&i1_ops[a] + &i2_ops[a]) * re(self.gamma_n * self.b_field[a]);
            for b in 0..3 {
                h += &s_ops[a] * &i1_ops[b] * re(self.a1[a][b]);
                h += &s_ops[a] * &i2_ops[b] * re(self.a2[a][b]);
                h += &i1_ops[a] * &i2_ops[b] * re(self.c[a][b]);
            }
        }
        h
    }

    /// Eigenvalues labelled by their dominant product basis state:
    /// `lambda[ms][m1][m2]` in rad/s with index 0 = "+" and 1 = "-"
    /// (for m_s: 0 = +1, 1 = 0, 2 = -1).
    ///
    /// Fails when any eigenvector has less than half its weight on a
    /// single basis state, since the labels are then meaningless.
    pub fn labelled_eigenvalues(&self) -> Result<[[[f64; 2]; 2]; 3]> {
        let h = self.matrix();
        let eig = SymmetricEigen::new(h.clone());
        let mut lambda = [[[f64::NAN; 2]; 2]; 3];
        let mut claimed = [false; 12];
        for basis in 0..12 {
            let (mut best, mut overlap) = (0usize, 0.0f64);
            for col in 0..12 {
                let w = eig.eigenvectors[(basis, col)].norm_sqr();
                if w > overlap {
                    overlap = w;
                    best = col;
                }
            }
            let ms = basis / 4;
            let m1 = (basis / 2) % 2;
            let m2 = basis % 2;
            if overlap < 0.5 || claimed[best] {
                return Err(Error::DegenerateEigenstates {
                    overlap,
                    ms: [1, 0, -1][ms],
                    mi1: if m1 == 0 { 1 } else { -1 },
                    mi2: if m2 == 0 { 1 } else { -1 },
                });
            }
            // a state dominated by this basis vector must have an
            // eigenvalue inside the Gershgorin disc of its row; a value
            // outside it means the eigensolver silently paired the
            // vector with the wrong eigenvalue
            let diag = h[(basis, basis)].re;
            let radius: f64 = (0..12)
                .filter(|&j| j != basis)
                .map(|j| h[(basis, j)].norm())
                .sum();
            if (eig.eigenvalues[best] - diag).abs() > radius {
                return Err(Error::DegenerateEigenstates {
                    overlap,
                    ms: [1, 0, -1][ms],
                    mi1: if m1 == 0 { 1 } else { -1 },
                    mi2: if m2 == 0 { 1 } else { -1 },
                });
            }
            claimed[best] = true;
            lambda[ms][m1][m2] = eig.eigenvalues[best];
        }
        Ok(lambda)
    }

    /// Double-resonance frequencies from exact diagonalisation:
    /// `f(ms) = |l(ms,++) + l(ms,--) - l(ms,+-) - l(ms,-+)| / 4pi`.
    pub fn exact_double_resonance(&self) -> Result<DoubleResonance> {
        let l = self.labelled_eigenvalues()?;
        let f = |ms: usize| {
            (l[ms][0][0] + l[ms][1][1] - l[ms][0][1] - l[ms][1][0]).abs()
                / (4.0 * std::f64::consts::PI)
        };
        let f_plus1 = f(0);
        let f_minus1 = f(2);
        Ok(DoubleResonance {
            f_minus1_hz: f_minus1,
            f_plus1_hz: f_plus1,
            f_averaged_hz: 0.5 * (f_minus1 + f_plus1),
            regime_warning: false,
        })
    }
}

/// The individual closed-form correction terms (rad/s) to the bare
/// internuclear coupling `C_zz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTerms {
    /// Electron-mediated nucleus-nucleus term, per m_s = +-1.
    pub delta1_plus: f64,
    pub delta1_minus: f64,
    /// m_s-odd hyperfine/internuclear cross term.
    pub delta2_0: f64,
    /// m_s-even second-order hyperfine/internuclear cross term.
    pub delta2_1: f64,
    /// Transverse-field tilt of the nuclear quantisation axes.
    pub delta3_0: f64,
    /// m_s-odd hyperfine correction to the tilt term.
    pub delta3_1: f64,
}

/// Perturbative double-resonance frequencies for a pair of nuclei with
/// reduced hyperfine parameters in a slightly tilted field.
///
/// The small parameters are `A / (gamma_n B_z)`, `A / Delta` and
/// `B_perp / B_z`; when they are not small the result is still
/// returned but flagged with `regime_warning`.
pub fn perturbative_corrections(
    field: FieldParams,
    h1: ReducedHyperfine,
    h2: ReducedHyperfine,
    c: [[f64; 3]; 3],
    consts: &PhysicalConstants,
) -> Result<(DoubleResonance, CorrectionTerms)> {
    let bz = field.bz_gauss * GAUSS;
    if bz == 0.0 {
        return Err(Error::InvalidInput("perturbative form needs B_z != 0".into()));
    }
    let b = field.tesla();
    // signed electron gamma (see SpinSystemHamiltonian::new)
    let (gc, ge, delta) = (consts.gamma_c, -consts.gamma_e, consts.delta_zfs);
    let (czz, czx, czy) = (c[2][2], c[2][0], c[2][1]);

    let delta1 = |ms: f64| {
        (h1.a_zx() * h2.a_zx() + h1.a_zy() * h2.a_zy()) / (delta + ms * ge * bz)
    };
    let delta2_0 =
        ((h1.a_zx() + h2.a_zx()) * czx + (h1.a_zy() + h2.a_zy()) * czy) / (gc * bz);
    let delta2_1 = -((h1.a_zx() * czx + h1.a_zy() * czy) * h1.a_zz
        + (h2.a_zx() * czx + h2.a_zy() * czy) * h2.a_zz)
        / (gc * gc * bz * bz);
    let delta3_0 = 2.0 * (b[0] * czx + b[1] * czy) / bz;
    let delta3_1 = (h1.a_zz + h2.a_zz) * (b[0] * czx + b[1] * czy) / (gc * bz * bz);

    let four_pi = 4.0 * std::f64::consts::PI;
    let f_ms = |ms: f64| {
        (czz + delta1(ms) + ms * delta2_0 + delta2_1 + delta3_0 + ms * delta3_1).abs()
            / four_pi
    };
    let f_av = (czz + 0.5 * (delta1(1.0) + delta1(-1.0)) + delta2_1 + delta3_0).abs()
        / four_pi;

    let zeeman = (gc * bz).abs();
    let strained = [h1.a_zz, h1.a_perp, h2.a_zz, h2.a_perp]
        .iter()
        .any(|a| a.abs() > 0.2 * zeeman)
        || field.b_perp_gauss.abs() > 0.2 * field.bz_gauss.abs()
        || [h1.a_zz, h1.a_perp, h2.a_zz, h2.a_perp]
            .iter()
            .any(|a| a.abs() > 0.2 * delta);

    Ok((
        DoubleResonance {
            f_minus1_hz: f_ms(-1.0),
            f_plus1_hz: f_ms(1.0),
            f_averaged_hz: f_av,
            regime_warning: strained,
        },
        CorrectionTerms {
            delta1_plus: delta1(1.0),
            delta1_minus: delta1(-1.0),
            delta2_0,
            delta2_1,
            delta3_0,
            delta3_1,
        },
    ))
}

/// Which double-resonance frequency a correction bound refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrectionTarget {
    Minus1,
    Plus1,
    Averaged,
}

/// Worst case (and orientation-averaged) deviation of the perturbative
/// double-resonance frequency from the bare `|C_zz| / 4pi`, maximised
/// over the unmeasured azimuths `phi_1`, `phi_2`, `theta` and the
/// transverse field magnitude up to `b_perp_max_gauss`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionBound {
    pub max_hz: f64,
    /// Mean over the orientation grid at the worst transverse field.
    pub mean_hz: f64,
    /// Arguments attaining the maximum: (phi1, phi2, theta, b_perp_gauss).
    pub argmax: [f64; 4],
}

/// Grid-plus-polish maximisation of the correction magnitude.
///
/// `a1`, `a2` carry the known `A_zz` and `A_perp` magnitudes; their
/// azimuths (and the transverse-field direction) are unknown and are
/// searched over.
pub fn max_correction_bound(
    bz_gauss: f64,
    b_perp_max_gauss: f64,
    a1: (f64, f64),
    a2: (f64, f64),
    c: [[f64; 3]; 3],
    target: CorrectionTarget,
    consts: &PhysicalConstants,
) -> Result<CorrectionBound> {
    let f_bare = c[2][2].abs() / (4.0 * std::f64::consts::PI);
    let eval = |phi1: f64, phi2: f64, theta: f64, b_perp: f64| -> Result<f64> {
        let (dr, _) = perturbative_corrections(
            FieldParams { bz_gauss, b_perp_gauss: b_perp, theta },
            ReducedHyperfine { a_zz: a1.0, a_perp: a1.1, phi: phi1 },
            ReducedHyperfine { a_zz: a2.0, a_perp: a2.1, phi: phi2 },
            c,
            consts,
        )?;
        let f = match target {
            CorrectionTarget::Minus1 => dr.f_minus1_hz,
            CorrectionTarget::Plus1 => dr.f_plus1_hz,
            CorrectionTarget::Averaged => dr.f_averaged_hz,
        };
        Ok((f - f_bare).abs())
    };

    const N_ANGLE: usize = 24;
    const N_FIELD: usize = 5;
    let angle = |i: usize| i as f64 * std::f64::consts::TAU / N_ANGLE as f64;
    let fields: Vec<f64> = if b_perp_max_gauss > 0.0 {
        (0..=N_FIELD)
            .map(|i| i as f64 * b_perp_max_gauss / N_FIELD as f64)
            .collect()
    } else {
        vec![0.0]
    };

    let mut best = (f64::NEG_INFINITY, [0.0; 4]);
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..N_ANGLE {
        for j in 0..N_ANGLE {
            for k in 0..N_ANGLE {
                for &bp in &fields {
                    let v = eval(angle(i), angle(j), angle(k), bp)?;
                    if v > best.0 {
                        best = (v, [angle(i), angle(j), angle(k), bp]);
                    }
                }
                // orientation average at the maximal transverse field
                let v = eval(angle(i), angle(j), angle(k), *fields.last().unwrap())?;
                sum += v;
                count += 1;
            }
        }
    }

    // coordinate-wise polish around the grid maximum
    let mut x = best.1;
    let mut width = [
        std::f64::consts::TAU / N_ANGLE as f64,
        std::f64::consts::TAU / N_ANGLE as f64,
        std::f64::consts::TAU / N_ANGLE as f64,
        if b_perp_max_gauss > 0.0 { b_perp_max_gauss / N_FIELD as f64 } else { 0.0 },
    ];
    for _ in 0..8 {
        for d in 0..4 {
            if width[d] == 0.0 {
                continue;
            }
            for step in [-1.0, 1.0] {
                let mut trial = x;
                trial[d] += step * width[d];
                if d == 3 {
                    trial[3] = trial[3].clamp(0.0, b_perp_max_gauss);
                }
                let v = eval(trial[0], trial[1], trial[2], trial[3])?;
                if v > best.0 {
                    best = (v, trial);
                    x = trial;
                }
            }
            width[d] *= 0.5;
        }
    }

    Ok(CorrectionBound {
        max_hz: best.0,
        mean_hz: sum / count as f64,
        argmax: best.1,
    })
}

/// Second-order Rayleigh–Schroedinger eigenvalue estimates for
/// `H = diag(e) + V`: `e_n + V_nn + sum_m |V_nm|^2 / (e_n - e_m)`.
pub fn second_order_eigenvalues(e: &[f64], v: &CMat) -> Result<Vec<f64>> {
    let n = e.len();
    if v.nrows() != n || v.ncols() != n {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut val = e[i] + v[(i, i)].re;
        for j in 0..n {
            if j == i {
                continue;
            }
            let gap = e[i] - e[j];
            if gap == 0.0 {
                return Err(Error::InvalidInput(
                    "degenerate unperturbed levels".into(),
                ));
            }
            val += v[(i, j)].norm_sqr() / gap;
        }
        out.push(val);
    }
    Ok(out)
}
