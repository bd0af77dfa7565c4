//! Kard parameterization (φ, μ, χ) of unimodular flux-conserving transfer
//! matrices, band classification and energy derivatives.
//!
//! In an allowed band
//!
//! ```text
//! M11 = cos φ - i sin φ cosh μ,   M21 = -i e^{iχ} sin φ sinh μ,
//! M22 = conj(M11),                M12 = conj(M21),
//! ```
//!
//! with μ ≥ 0 and χ ∈ (-π, π]. φ is defined modulo 2π by Re M11 and the sign
//! of Im M11; a previous sample selects the 2π branch along sweeps.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::EnergyGrid;
use crate::numeric::{bisect, richardson, second_difference, unwrap_near};
use crate::tmatrix::{TransferMatrix, UnitCell};

/// Tolerance on |Tr M/2| - 1 for the band-edge classification.
pub const EDGE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandKind {
    Allowed,
    Forbidden,
    Edge,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KardParams {
    pub energy: f64,
    /// Real part of the Bloch phase (radians, unwrapped). In a forbidden band
    /// this is pπ.
    pub phi: f64,
    /// Impedance parameter, ≥ 0; infinite at edges and in forbidden bands.
    pub mu: f64,
    /// Asymmetry parameter in (-π, π].
    pub chi: f64,
    pub band: BandKind,
    /// Imaginary Bloch phase (forbidden band only).
    pub theta: f64,
}

impl KardParams {
    pub fn allowed(energy: f64, phi: f64, mu: f64, chi: f64) -> Self {
        KardParams {
            energy,
            phi,
            mu,
            chi,
            band: BandKind::Allowed,
            theta: 0.0,
        }
    }

    pub fn is_allowed(&self) -> bool {
        self.band == BandKind::Allowed
    }

    /// μ with the sign carried by χ for (nearly) mirror-symmetric cells,
    /// where χ is 0 or π.
    pub fn signed_mu(&self) -> f64 {
        self.mu * self.chi.cos().signum()
    }

    /// Same (μ, χ) with the Bloch phase multiplied by `n` (N-cell array).
    pub fn scaled(&self, n: usize) -> KardParams {
        KardParams {
            phi: self.phi * n as f64,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KardDerivatives {
    /// dφ/dE in rad/meV.
    pub phi_p: f64,
    /// d²φ/dE² in rad/meV².
    pub phi_pp: f64,
    /// dμ/dE in 1/meV.
    pub mu_p: f64,
}

/// Kard parameters and their derivatives at one energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KardSample {
    pub params: KardParams,
    pub derivs: KardDerivatives,
}

fn nearest_with_parity(reference: Option<f64>, even: bool) -> f64 {
    let parity = if even { 0.0 } else { 1.0 };
    match reference {
        Some(phi) => {
            // nearest integer p of the right parity to phi/π
            let x = (phi / PI - parity) / 2.0;
            (2.0 * x.round() + parity) * PI
        }
        None => parity * PI,
    }
}

pub fn decompose(m: &TransferMatrix, prev: Option<&KardParams>) -> KardParams {
    let c = m.half_trace();
    let excess = c.abs() - 1.0;
    let reference = prev.map(|p| p.phi);
    if excess.abs() <= EDGE_TOL {
        return KardParams {
            energy: m.ref_energy,
            phi: nearest_with_parity(reference, c > 0.0),
            mu: f64::INFINITY,
            chi: chi_from(m.m21, 1.0),
            band: BandKind::Edge,
            theta: 0.0,
        };
    }
    if excess > 0.0 {
        return KardParams {
            energy: m.ref_energy,
            phi: nearest_with_parity(reference, c > 0.0),
            mu: f64::INFINITY,
            chi: chi_from(m.m21, 1.0),
            band: BandKind::Forbidden,
            theta: c.abs().acosh(),
        };
    }
    let im11 = m.m11.im;
    debug_assert!(
        im11.abs() > 1e-300,
        "Im M11 vanishes inside an allowed band"
    );
    let sin_sign = if im11 > 0.0 { -1.0 } else { 1.0 };
    let sin_abs = ((1.0 - c) * (1.0 + c)).sqrt();
    let principal = (sin_sign * sin_abs).atan2(c);
    let phi = match reference {
        Some(r) => unwrap_near(r, principal),
        None => principal.rem_euclid(2.0 * PI),
    };
    // tanh μ = |M21| / |Im M11|  ⇔  μ = ln((|Im M11| + |M21|) / |sin φ|)
    let mu = ((im11.abs() + m.m21.norm()) / sin_abs).ln().max(0.0);
    KardParams::allowed(m.ref_energy, phi, mu, chi_from(m.m21, sin_sign))
}

fn chi_from(m21: Complex64, sin_sign: f64) -> f64 {
    if m21.norm() < 1e-14 {
        return 0.0;
    }
    // e^{iχ} = i M21 / (sin φ sinh μ)
    let chi = (Complex64::new(0.0, sin_sign) * m21).arg();
    if chi <= -PI {
        chi + 2.0 * PI
    } else {
        chi
    }
}

/// Entry form of the Kard matrix.
pub fn reconstruct(k: &KardParams) -> Result<TransferMatrix> {
    if !k.is_allowed() {
        return Err(Error::NotAllowed(k.energy));
    }
    let (s, c) = k.phi.sin_cos();
    let m11 = Complex64::new(c, -s * k.mu.cosh());
    let m21 = Complex64::new(0.0, -1.0) * Complex64::from_polar(1.0, k.chi) * (s * k.mu.sinh());
    Ok(TransferMatrix {
        m11,
        m12: m21.conj(),
        m21,
        m22: m11.conj(),
        ref_energy: k.energy,
        cell_width: 0.0,
    })
}

pub type Mat2 = [[Complex64; 2]; 2];

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn as_mat2(m: &TransferMatrix) -> Mat2 {
    [[m.m11, m.m12], [m.m21, m.m22]]
}

/// Bloch eigenvalues (e^{-iφ}, e^{+iφ}) and the eigenvector matrix
/// U = e^{-i(χ/2)σz} e^{(μ/2)σx}, so that M U = U diag(e^{-iφ}, e^{iφ}).
pub fn bloch_eigen(k: &KardParams) -> Result<([Complex64; 2], Mat2)> {
    if !k.is_allowed() {
        return Err(Error::NotAllowed(k.energy));
    }
    let ch = (0.5 * k.mu).cosh();
    let sh = (0.5 * k.mu).sinh();
    let left = Complex64::from_polar(1.0, -0.5 * k.chi);
    let right = Complex64::from_polar(1.0, 0.5 * k.chi);
    let u = [[left * ch, left * sh], [right * sh, right * ch]];
    let eig = [
        Complex64::from_polar(1.0, -k.phi),
        Complex64::from_polar(1.0, k.phi),
    ];
    Ok((eig, u))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandInterval {
    pub lower: f64,
    pub upper: f64,
}

impl BandInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn centre(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, e: f64) -> bool {
        e > self.lower && e < self.upper
    }

    /// Default finite-difference step: 1e-3 of the band width, clamped to
    /// [1e-4, 1e-1] meV.
    pub fn default_step(&self) -> f64 {
        (1e-3 * self.width()).clamp(1e-4, 1e-1)
    }

    /// `count` uniformly spaced energies strictly inside the band, keeping a
    /// relative margin `margin` from each edge.
    pub fn interior_samples(&self, count: usize, margin: f64) -> Vec<f64> {
        let lo = self.lower + margin * self.width();
        let hi = self.upper - margin * self.width();
        if count == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect()
    }
}

/// Allowed bands intersecting the grid, edges refined to 1e-8 meV.
pub fn band_structure<C: UnitCell + ?Sized>(
    model: &C,
    grid: &EnergyGrid,
) -> Result<Vec<BandInterval>> {
    let excess = |e: f64| -> Result<f64> { Ok(model.half_trace(e)?.abs() - 1.0) };
    let values: Vec<f64> = grid
        .samples
        .iter()
        .map(|&e| excess(e))
        .collect::<Result<_>>()?;
    let mut bands = Vec::new();
    let mut start: Option<f64> = if values[0] <= 0.0 {
        Some(grid.samples[0])
    } else {
        None
    };
    for i in 1..values.len() {
        let (e0, e1) = (grid.samples[i - 1], grid.samples[i]);
        let was_in = values[i - 1] <= 0.0;
        let is_in = values[i] <= 0.0;
        if was_in != is_in {
            let edge = bisect(excess, e0, e1, 1e-8)?;
            if is_in {
                start = Some(edge);
            } else if let Some(lower) = start.take() {
                bands.push(BandInterval { lower, upper: edge });
            }
        }
    }
    if let Some(lower) = start {
        bands.push(BandInterval {
            lower,
            upper: *grid.samples.last().unwrap(),
        });
    }
    Ok(bands)
}

/// Kard parameters at `energy`, continued from `prev` when given.
pub fn kard_at<C: UnitCell + ?Sized>(
    model: &C,
    energy: f64,
    prev: Option<&KardParams>,
) -> Result<KardParams> {
    Ok(decompose(&model.matrix(energy)?, prev))
}

/// Kard parameters along an ascending sweep with a continuous Bloch phase.
pub fn kard_sweep<C: UnitCell + ?Sized>(model: &C, energies: &[f64]) -> Result<Vec<KardParams>> {
    let mut out: Vec<KardParams> = Vec::with_capacity(energies.len());
    for &e in energies {
        let k = kard_at(model, e, out.last())?;
        out.push(k);
    }
    Ok(out)
}

/// Finite-difference derivatives of φ and μ with step `h`.
///
/// φ′ and μ′ use the five-point Richardson stencil, φ″ the central second
/// difference. Every stencil point must lie in the same allowed band.
pub fn kard_derivatives<C: UnitCell + ?Sized>(
    model: &C,
    energy: f64,
    h: f64,
) -> Result<KardSample> {
    for offset in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        let e = energy + offset * h;
        if !(e > 0.0) || model.half_trace(e)?.abs() >= 1.0 - EDGE_TOL {
            return Err(Error::NearEdge { energy, step: h });
        }
    }
    let centre = kard_at(model, energy, None)?;
    let at = |offset: f64| kard_at(model, energy + offset * h, Some(&centre));
    let (m2, m1, p1, p2) = (at(-2.0)?, at(-1.0)?, at(1.0)?, at(2.0)?);
    let derivs = KardDerivatives {
        phi_p: richardson([m2.phi, m1.phi, p1.phi, p2.phi], h),
        phi_pp: second_difference(m1.phi, centre.phi, p1.phi, h),
        mu_p: richardson([m2.mu, m1.mu, p1.mu, p2.mu], h),
    };
    Ok(KardSample {
        params: centre,
        derivs,
    })
}

/// d(Tr M/2)/dE by the same five-point stencil.
pub fn half_trace_derivative<C: UnitCell + ?Sized>(model: &C, energy: f64, h: f64) -> Result<f64> {
    let f = |o: f64| model.half_trace(energy + o * h);
    Ok(richardson([f(-2.0)?, f(-1.0)?, f(1.0)?, f(2.0)?], h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{representative_cell, CellSpec, Layer, Lead};
    use crate::tmatrix::PhysicalCell;
    use proptest::prelude::*;

    fn sigma_exp(kind: char, angle: Complex64) -> Mat2 {
        // exp(angle · σ) for σ ∈ {x, z}
        let (c, s) = (angle.cosh(), angle.sinh());
        let z = Complex64::new(0.0, 0.0);
        match kind {
            'x' => [[c, s], [s, c]],
            'z' => [[c + s, z], [z, c - s]],
            _ => unreachable!(),
        }
    }

    /// Five-factor product form of the Kard matrix.
    fn factored(phi: f64, mu: f64, chi: f64) -> Mat2 {
        let i = Complex64::new(0.0, 1.0);
        let f = [
            sigma_exp('z', -i * (0.5 * chi)),
            sigma_exp('x', Complex64::new(0.5 * mu, 0.0)),
            sigma_exp('z', -i * phi),
            sigma_exp('x', Complex64::new(-0.5 * mu, 0.0)),
            sigma_exp('z', i * (0.5 * chi)),
        ];
        f.iter().skip(1).fold(f[0], |acc, m| mat2_mul(&acc, m))
    }

    #[test]
    fn free_cell_has_zero_impedance() {
        let lead = Lead::new(0.067);
        let w = 10.0;
        let consts = crate::medium::PhysConstants::default();
        // kw = π/3
        let k = PI / 3.0 / w;
        let e = k * k * consts.hbar2_over_2m0 / 0.067;
        let m =
            crate::tmatrix::cell_matrix(&CellSpec::new(vec![lead.as_layer(w)]), &lead, e, &consts)
                .unwrap();
        let kp = decompose(&m, None);
        assert!((kp.phi - PI / 3.0).abs() < 1e-12);
        assert!(kp.mu.abs() < 1e-7);
    }

    #[test]
    fn symmetric_barrier_cell_has_zero_chi() {
        let lead = Lead::new(0.067);
        let consts = crate::medium::PhysConstants::default();
        let cell = representative_cell();
        let bands = band_structure(
            &PhysicalCell::new(cell.clone(), lead),
            &EnergyGrid::uniform(1.0, 400.0, 800).unwrap(),
        )
        .unwrap();
        // first miniband; higher bands of the same cell may carry χ = π
        // since μ is kept non-negative
        for b in bands.iter().take(1) {
            for e in b.interior_samples(7, 0.05) {
                let m = crate::tmatrix::cell_matrix(&cell, &lead, e, &consts).unwrap();
                let kp = decompose(&m, None);
                assert!(kp.chi.abs() < 1e-8, "E={e} chi={}", kp.chi);
            }
        }
    }

    #[test]
    fn reconstruct_simple_point() {
        let m = reconstruct(&KardParams::allowed(1.0, PI / 2.0, 0.0, 0.0)).unwrap();
        assert!((m.m11 - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((m.m22 - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(m.m12.norm() < 1e-15 && m.m21.norm() < 1e-15);
    }

    #[test]
    fn reconstruct_rejects_forbidden() {
        let mut k = KardParams::allowed(1.0, PI, 0.0, 0.0);
        k.band = BandKind::Forbidden;
        assert!(matches!(reconstruct(&k), Err(Error::NotAllowed(_))));
        assert!(bloch_eigen(&k).is_err());
    }

    #[test]
    fn forbidden_band_theta() {
        let m = TransferMatrix {
            m11: Complex64::new(1.5, -0.3),
            m12: Complex64::new(0.2, 0.0),
            m21: Complex64::new(0.2, 0.0),
            m22: Complex64::new(1.5, 0.3),
            ref_energy: 1.0,
            cell_width: 0.0,
        };
        let k = decompose(&m, None);
        assert_eq!(k.band, BandKind::Forbidden);
        assert!((k.theta - 1.5f64.acosh()).abs() < 1e-15);
    }

    #[test]
    fn free_cell_band_covers_grid() {
        let lead = Lead::new(0.067);
        let cell = PhysicalCell::new(CellSpec::new(vec![lead.as_layer(5.0)]), lead);
        let grid = EnergyGrid::uniform(1.0, 300.0, 500).unwrap();
        let bands = band_structure(&cell, &grid).unwrap();
        assert_eq!(bands.len(), 1);
        assert_eq!(bands[0].lower, 1.0);
        assert_eq!(bands[0].upper, 300.0);
    }

    #[test]
    fn phi_monotone_across_first_band() {
        let lead = Lead::new(0.067);
        let cell = PhysicalCell::new(representative_cell(), lead);
        let grid = EnergyGrid::uniform(1.0, 200.0, 400).unwrap();
        let band = band_structure(&cell, &grid).unwrap()[0];
        let e: Vec<f64> = band.interior_samples(2001, 1e-6);
        let sweep = kard_sweep(&cell, &e).unwrap();
        assert!(sweep.windows(2).all(|w| w[1].phi > w[0].phi));
        let span = sweep.last().unwrap().phi - sweep[0].phi;
        assert!((span - PI).abs() < 1e-2, "{span}");
        // cosh μ · sin φ stays bounded while μ diverges at the edges
        let bounded = sweep
            .iter()
            .map(|k| k.mu.cosh() * k.phi.sin().abs())
            .fold(0.0, f64::max);
        assert!(bounded < 20.0);
        assert!(sweep[0].mu > 5.0 && sweep.last().unwrap().mu > 5.0);
    }

    #[test]
    fn free_cell_mu_derivative_vanishes() {
        let lead = Lead::new(0.067);
        let cell = PhysicalCell::new(CellSpec::new(vec![lead.as_layer(5.0)]), lead);
        let s = kard_derivatives(&cell, 30.0, 0.01).unwrap();
        assert!(s.derivs.mu_p.abs() < 1e-9);
        assert!(s.derivs.phi_p > 0.0);
    }

    #[test]
    fn derivative_stencil_near_edge_rejected() {
        let lead = Lead::new(0.067);
        let cell = PhysicalCell::new(representative_cell(), lead);
        let band =
            band_structure(&cell, &EnergyGrid::uniform(1.0, 200.0, 400).unwrap()).unwrap()[0];
        let h = 0.05;
        assert!(matches!(
            kard_derivatives(&cell, band.lower + 1.5 * h, h),
            Err(Error::NearEdge { .. })
        ));
        assert!(kard_derivatives(&cell, band.lower + 3.0 * h, h).is_ok());
    }

    #[test]
    fn trace_of_power_is_cos_n_phi() {
        let lead = Lead::new(0.067);
        let cell = PhysicalCell::new(
            CellSpec::new(vec![
                Layer::new(2.0, 0.0, 0.067),
                Layer::new(1.5, 180.0, 0.085),
                Layer::new(4.0, 0.0, 0.067),
            ]),
            lead,
        );
        let band =
            band_structure(&cell, &EnergyGrid::uniform(1.0, 300.0, 600).unwrap()).unwrap()[0];
        for e in band.interior_samples(25, 0.02) {
            let m = cell.matrix(e).unwrap();
            let k = decompose(&m, None);
            for n in 1..=32 {
                let lhs = m.pow(n).half_trace();
                assert!((lhs - (n as f64 * k.phi).cos()).abs() < 1e-9, "E={e} N={n}");
            }
        }
    }

    proptest! {
        #[test]
        fn product_form_matches_entry_form(phi in 0.01f64..3.13, mu in 0.0f64..3.0, chi in -3.14f64..3.14) {
            let m = reconstruct(&KardParams::allowed(1.0, phi, mu, chi)).unwrap();
            let f = factored(phi, mu, chi);
            let e = as_mat2(&m);
            for i in 0..2 { for j in 0..2 {
                prop_assert!((f[i][j] - e[i][j]).norm() < 1e-12 * mu.cosh().max(1.0));
            }}
        }

        #[test]
        fn decompose_inverts_reconstruct(phi in 0.05f64..3.09, mu in 0.0f64..4.0, chi in -3.1f64..3.1) {
            let m = reconstruct(&KardParams::allowed(1.0, phi, mu, chi)).unwrap();
            let k = decompose(&m, None);
            prop_assert!(k.is_allowed());
            prop_assert!((k.phi - phi).abs() < 1e-10 * mu.cosh());
            prop_assert!((k.mu - mu).abs() < 1e-10 * mu.cosh().powi(2));
            if mu > 1e-3 {
                prop_assert!((k.chi - chi).abs() < 1e-9);
            }
            let back = reconstruct(&k).unwrap();
            prop_assert!(back.max_abs_diff(&m) < 1e-9);
        }

        #[test]
        fn bloch_vectors_diagonalize(phi in 0.05f64..3.09, mu in 0.0f64..3.0, chi in -3.1f64..3.1) {
            let k = KardParams::allowed(1.0, phi, mu, chi);
            let m = as_mat2(&reconstruct(&k).unwrap());
            let (eig, u) = bloch_eigen(&k).unwrap();
            let mu_ = mat2_mul(&m, &u);
            let z = Complex64::new(0.0, 0.0);
            let ud = mat2_mul(&u, &[[eig[0], z], [z, eig[1]]]);
            for i in 0..2 { for j in 0..2 {
                prop_assert!((mu_[i][j] - ud[i][j]).norm() < 1e-10 * mu.cosh());
            }}
            let det = u[0][0] * u[1][1] - u[0][1] * u[1][0];
            prop_assert!((det - 1.0).norm() < 1e-12 * mu.cosh().powi(2));
        }
    }

    #[test]
    fn trivial_bloch_vectors() {
        let (_, u) = bloch_eigen(&KardParams::allowed(1.0, 1.0, 0.0, 0.0)).unwrap();
        assert!((u[0][0] - 1.0).norm() < 1e-15 && (u[1][1] - 1.0).norm() < 1e-15);
        assert!(u[0][1].norm() < 1e-15 && u[1][0].norm() < 1e-15);
    }
}
