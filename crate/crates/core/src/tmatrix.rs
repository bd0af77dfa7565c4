//! Flux-normalized transfer matrices of piecewise-constant cells.
//!
//! Inside each layer the pair (ψ, ψ'/m*) is propagated with the analytic
//! interior solution; at the cell edges it is converted to the coefficients
//! of unit-flux plane waves referenced at x = a (left) and x = b (right).

use std::f64::consts::PI;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kard::{kard_derivatives, KardSample};
use crate::medium::{CellSpec, Layer, Lead, PhysConstants, ValidatedStack};
use crate::numeric::unwrap_near;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub m11: Complex64,
    pub m12: Complex64,
    pub m21: Complex64,
    pub m22: Complex64,
    /// Energy (meV) at which the matrix was evaluated.
    pub ref_energy: f64,
    /// Spatial width (nm) covered by the matrix; zero for abstract cells.
    pub cell_width: f64,
}

impl TransferMatrix {
    pub fn identity(energy: f64) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        TransferMatrix {
            m11: one,
            m12: zero,
            m21: zero,
            m22: one,
            ref_energy: energy,
            cell_width: 0.0,
        }
    }

    pub fn det(&self) -> Complex64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    /// Tr M / 2 = Re M11 for a flux-conserving matrix.
    pub fn half_trace(&self) -> f64 {
        0.5 * (self.m11 + self.m22).re
    }

    /// max-norm of M σ_z M† - σ_z.
    pub fn flux_residual(&self) -> f64 {
        let a = self.m11.norm_sqr() - self.m12.norm_sqr() - 1.0;
        let b = self.m11 * self.m21.conj() - self.m12 * self.m22.conj();
        let d = self.m21.norm_sqr() - self.m22.norm_sqr() + 1.0;
        a.abs().max(b.norm()).max(d.abs())
    }

    /// max deviation from M22 = conj(M11), M12 = conj(M21).
    pub fn time_reversal_residual(&self) -> f64 {
        (self.m22 - self.m11.conj())
            .norm()
            .max((self.m12 - self.m21.conj()).norm())
    }

    pub fn max_abs_diff(&self, other: &TransferMatrix) -> f64 {
        [
            self.m11 - other.m11,
            self.m12 - other.m12,
            self.m21 - other.m21,
            self.m22 - other.m22,
        ]
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
    }

    /// N-fold product M^N by repeated squaring.
    pub fn pow(&self, n: usize) -> TransferMatrix {
        let mut result = TransferMatrix::identity(self.ref_energy);
        let mut base = *self;
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                result = result * base;
            }
            base = base * base;
            n >>= 1;
        }
        result
    }

    /// Product by sequential multiplication, M·M·…·M.
    pub fn pow_sequential(&self, n: usize) -> TransferMatrix {
        (0..n).fold(TransferMatrix::identity(self.ref_energy), |acc, _| {
            acc * *self
        })
    }
}

impl Mul for TransferMatrix {
    type Output = TransferMatrix;

    fn mul(self, rhs: TransferMatrix) -> TransferMatrix {
        TransferMatrix {
            m11: self.m11 * rhs.m11 + self.m12 * rhs.m21,
            m12: self.m11 * rhs.m12 + self.m12 * rhs.m22,
            m21: self.m21 * rhs.m11 + self.m22 * rhs.m21,
            m22: self.m21 * rhs.m12 + self.m22 * rhs.m22,
            ref_energy: self.ref_energy,
            cell_width: self.cell_width + rhs.cell_width,
        }
    }
}

/// Matrix product `left · right` of two matrices at the same energy.
pub fn compose(left: &TransferMatrix, right: &TransferMatrix) -> Result<TransferMatrix> {
    let scale = left.ref_energy.abs().max(right.ref_energy.abs()).max(1.0);
    if (left.ref_energy - right.ref_energy).abs() > 1e-12 * scale {
        return Err(Error::EnergyMismatch(left.ref_energy, right.ref_energy));
    }
    Ok(*left * *right)
}

/// Real 2×2 propagator of (ψ, ψ'/m*) across one layer.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Propagator {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Propagator {
    pub const IDENTITY: Propagator = Propagator {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    /// Propagates over a distance `x` inside a layer with squared wavenumber
    /// `k2` (signed) and mass ratio `mass`.
    pub fn across(k2: f64, mass: f64, x: f64) -> Propagator {
        let arg2 = k2 * x * x;
        let (cos, sin_over_k) = if arg2.abs() < 1e-12 {
            (1.0 - 0.5 * arg2, x * (1.0 - arg2 / 6.0))
        } else if k2 > 0.0 {
            let k = k2.sqrt();
            ((k * x).cos(), (k * x).sin() / k)
        } else {
            let kappa = (-k2).sqrt();
            ((kappa * x).cosh(), (kappa * x).sinh() / kappa)
        };
        Propagator {
            a: cos,
            b: mass * sin_over_k,
            c: -k2 * sin_over_k / mass,
            d: cos,
        }
    }

    pub fn layer(layer: &Layer, energy: f64, consts: &PhysConstants) -> Propagator {
        let k2 = consts.wavenumber_sq(energy, layer.potential, layer.mass_ratio);
        Propagator::across(k2, layer.mass_ratio, layer.width)
    }

    /// `self` applied after `first`.
    pub fn then(self, first: Propagator) -> Propagator {
        Propagator {
            a: self.a * first.a + self.b * first.c,
            b: self.a * first.b + self.b * first.d,
            c: self.c * first.a + self.d * first.c,
            d: self.c * first.b + self.d * first.d,
        }
    }

    pub fn inverse(self) -> Propagator {
        Propagator {
            a: self.d,
            b: -self.b,
            c: -self.c,
            d: self.a,
        }
    }

    pub fn apply(&self, psi: Complex64, p: Complex64) -> (Complex64, Complex64) {
        (self.a * psi + self.b * p, self.c * psi + self.d * p)
    }
}

/// Transfer matrix of a sequence of layers between identical leads.
pub fn layers_matrix(
    layers: &[Layer],
    outside: &Lead,
    energy: f64,
    consts: &PhysConstants,
) -> Result<TransferMatrix> {
    if !(energy > 0.0) {
        return Err(Error::NoPropagation(energy));
    }
    let forward = layers.iter().fold(Propagator::IDENTITY, |acc, layer| {
        Propagator::layer(layer, energy, consts).then(acc)
    });
    let back = forward.inverse();
    let k = outside.wavenumber(energy, consts);
    // (ψ, ψ'/m) = W (c, d) with W = [[1, 1], [ik/m, -ik/m]].
    let q = I * (k / outside.mass_ratio);
    let col = |sign: f64| {
        let psi = Complex64::new(1.0, 0.0);
        let p = q * sign;
        back.apply(psi, p)
    };
    let (psi1, p1) = col(1.0);
    let (psi2, p2) = col(-1.0);
    // W⁻¹ (ψ, p) = (ψ/2 + p/(2q), ψ/2 - p/(2q)).
    let inv = |psi: Complex64, p: Complex64| (0.5 * (psi + p / q), 0.5 * (psi - p / q));
    let (m11, m21) = inv(psi1, p1);
    let (m12, m22) = inv(psi2, p2);
    Ok(TransferMatrix {
        m11,
        m12,
        m21,
        m22,
        ref_energy: energy,
        cell_width: layers.iter().map(|l| l.width).sum(),
    })
}

/// Transfer matrix of one cell, referenced at its own edges.
pub fn cell_matrix(
    cell: &CellSpec,
    outside: &Lead,
    energy: f64,
    consts: &PhysConstants,
) -> Result<TransferMatrix> {
    layers_matrix(&cell.layers, outside, energy, consts)
}

/// Transfer matrix of a whole validated stack.
pub fn stack_matrix(
    stack: &ValidatedStack,
    energy: f64,
    consts: &PhysConstants,
) -> Result<TransferMatrix> {
    layers_matrix(stack.layers(), &stack.outside(), energy, consts)
}

/// Anything that supplies a unit-cell transfer matrix as a function of
/// energy: a layered cell, a whole stack, or an analytic model.
pub trait UnitCell: Sync {
    fn matrix(&self, energy: f64) -> Result<TransferMatrix>;

    /// Tr M / 2; may be defined where `matrix` is not.
    fn half_trace(&self, energy: f64) -> Result<f64> {
        Ok(self.matrix(energy)?.half_trace())
    }

    /// Kard parameters with their energy derivatives. Finite differences
    /// with step `h` unless the model knows them in closed form.
    fn derivatives(&self, energy: f64, h: f64) -> Result<KardSample> {
        kard_derivatives(self, energy, h)
    }

    /// Group velocity in the leads (nm/fs), when the model has leads.
    fn lead_velocity(&self, _energy: f64) -> Option<f64> {
        None
    }

    /// Spatial width of one cell (nm), zero for abstract models.
    fn cell_width(&self) -> f64 {
        0.0
    }
}

/// A layered cell between given leads.
#[derive(Clone, Debug)]
pub struct PhysicalCell {
    pub cell: CellSpec,
    pub outside: Lead,
    pub consts: PhysConstants,
}

impl PhysicalCell {
    pub fn new(cell: CellSpec, outside: Lead) -> Self {
        PhysicalCell {
            cell,
            outside,
            consts: PhysConstants::default(),
        }
    }
}

impl UnitCell for PhysicalCell {
    fn matrix(&self, energy: f64) -> Result<TransferMatrix> {
        cell_matrix(&self.cell, &self.outside, energy, &self.consts)
    }

    fn lead_velocity(&self, energy: f64) -> Option<f64> {
        Some(self.outside.velocity(energy, &self.consts))
    }

    fn cell_width(&self) -> f64 {
        self.cell.width()
    }
}

/// A whole stack treated as a single scatterer.
#[derive(Clone, Debug)]
pub struct StackScatterer {
    pub stack: ValidatedStack,
    pub consts: PhysConstants,
}

impl StackScatterer {
    pub fn new(stack: ValidatedStack) -> Self {
        StackScatterer {
            stack,
            consts: PhysConstants::default(),
        }
    }
}

impl UnitCell for StackScatterer {
    fn matrix(&self, energy: f64) -> Result<TransferMatrix> {
        stack_matrix(&self.stack, energy, &self.consts)
    }

    fn lead_velocity(&self, energy: f64) -> Option<f64> {
        Some(self.stack.lead_velocity(energy, &self.consts))
    }

    fn cell_width(&self) -> f64 {
        self.stack.total_width()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convention {
    /// Phases reset to zero at each cell edge (transfer-matrix convention).
    CellReferenced,
    /// Plane waves referenced at the coordinate origin.
    OriginReferenced,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Amplitudes {
    pub r: Complex64,
    pub t: Complex64,
    /// Transmission phase η = arg t.
    pub eta: f64,
    /// Reflection phase δ = arg r.
    pub delta: f64,
    pub convention: Convention,
}

impl Amplitudes {
    pub fn transmission(&self) -> f64 {
        self.t.norm_sqr()
    }

    pub fn unitarity_residual(&self) -> f64 {
        (self.r.norm_sqr() + self.t.norm_sqr() - 1.0).abs()
    }
}

/// Cell-referenced amplitudes t = 1/M11, r = M21/M11 (principal phases).
pub fn amplitudes(m: &TransferMatrix) -> Amplitudes {
    // |M11| ≥ 1 for any flux-conserving matrix.
    debug_assert!(m.m11.norm() > 0.5, "degenerate transfer matrix {m:?}");
    let t = m.m11.inv();
    let r = m.m21 * t;
    Amplitudes {
        r,
        t,
        eta: t.arg(),
        delta: if r.norm() > 0.0 { r.arg() } else { 0.0 },
        convention: Convention::CellReferenced,
    }
}

/// Amplitudes along an ascending energy sweep with η (and δ) continued
/// branch by branch from the previous sample.
///
/// Fails if η moves by more than π/2 between neighbours.
pub fn amplitude_sweep<C: UnitCell + ?Sized>(
    model: &C,
    energies: &[f64],
) -> Result<Vec<Amplitudes>> {
    let mut out: Vec<Amplitudes> = Vec::with_capacity(energies.len());
    for (i, &e) in energies.iter().enumerate() {
        let mut amp = amplitudes(&model.matrix(e)?);
        if let Some(prev) = out.last() {
            let eta = unwrap_near(prev.eta, amp.eta);
            let jump = (eta - prev.eta).abs();
            if jump >= 0.5 * PI {
                return Err(Error::PhaseJump {
                    from: energies[i - 1],
                    to: e,
                    jump,
                });
            }
            amp.eta = eta;
            amp.delta = unwrap_near(prev.delta, amp.delta);
        }
        out.push(amp);
    }
    Ok(out)
}
