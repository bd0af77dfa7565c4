//! Scattering-theory view of a stack: origin-referenced amplitudes, the
//! S-matrix, the Smith delay matrix, interior wave functions and the dwell
//! time.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kard::{mat2_mul, Mat2};
use crate::medium::{local_wavenumber, PhysConstants, ValidatedStack};
use crate::numeric::{adaptive_simpson, richardson};
use crate::tmatrix::{amplitudes, stack_matrix, Amplitudes, Convention, Propagator};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Converts cell-referenced amplitudes of a scatterer on [a, a + w] to the
/// origin-referenced convention: t̃ = t e^{-ikw}, r̃ = r e^{2ika}.
pub fn shift_convention(amp: &Amplitudes, k: f64, a: f64, w: f64) -> Result<Amplitudes> {
    if amp.convention != Convention::CellReferenced {
        return Err(Error::Invalid(vec![
            "amplitudes are already origin-referenced".into(),
        ]));
    }
    Ok(Amplitudes {
        r: amp.r * Complex64::from_polar(1.0, 2.0 * k * a),
        t: amp.t * Complex64::from_polar(1.0, -k * w),
        eta: amp.eta - k * w,
        delta: amp.delta + 2.0 * k * a,
        convention: Convention::OriginReferenced,
    })
}

/// Inverse of [`shift_convention`].
pub fn unshift_convention(amp: &Amplitudes, k: f64, a: f64, w: f64) -> Result<Amplitudes> {
    if amp.convention != Convention::OriginReferenced {
        return Err(Error::Invalid(vec![
            "amplitudes are already cell-referenced".into(),
        ]));
    }
    Ok(Amplitudes {
        r: amp.r * Complex64::from_polar(1.0, -2.0 * k * a),
        t: amp.t * Complex64::from_polar(1.0, k * w),
        eta: amp.eta + k * w,
        delta: amp.delta - 2.0 * k * a,
        convention: Convention::CellReferenced,
    })
}

/// Origin-referenced amplitudes of a placed stack.
pub fn origin_amplitudes(
    stack: &ValidatedStack,
    energy: f64,
    consts: &PhysConstants,
) -> Result<Amplitudes> {
    let amp = amplitudes(&stack_matrix(stack, energy, consts)?);
    let k = stack.outside().wavenumber(energy, consts);
    shift_convention(&amp, k, stack.left(), stack.total_width())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SMatrix {
    pub r: Complex64,
    pub t: Complex64,
    /// Reflection amplitude for incidence from the right.
    pub r_bar: Complex64,
}

impl SMatrix {
    pub fn as_mat2(&self) -> Mat2 {
        [[self.r, self.t], [self.t, self.r_bar]]
    }

    /// max-norm of S†S - I.
    pub fn unitarity_residual(&self) -> f64 {
        let s = self.as_mat2();
        let dagger = [
            [s[0][0].conj(), s[1][0].conj()],
            [s[0][1].conj(), s[1][1].conj()],
        ];
        let p = mat2_mul(&dagger, &s);
        let one = Complex64::new(1.0, 0.0);
        [p[0][0] - one, p[0][1], p[1][0], p[1][1] - one]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Two-channel S-matrix, with r̄ = -r* t / t*.
pub fn s_matrix(amp: &Amplitudes) -> SMatrix {
    let r_bar = if amp.r.norm() == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        -amp.r.conj() * amp.t / amp.t.conj()
    };
    SMatrix {
        r: amp.r,
        t: amp.t,
        r_bar,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmithRegime {
    /// Mirror-symmetric stack: real entries and τ11 = τ22.
    Symmetric,
    /// Asymmetric stack; the general expressions apply but are not
    /// covered by the symmetric-cell checks.
    Untested,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmithMatrix {
    pub tau11: f64,
    pub tau22: f64,
    pub tau12: Complex64,
    pub regime: SmithRegime,
}

fn smatrix_at(stack: &ValidatedStack, energy: f64, consts: &PhysConstants) -> Result<Mat2> {
    Ok(s_matrix(&origin_amplitudes(stack, energy, consts)?).as_mat2())
}

fn stencil_guard(energy: f64, h: f64) -> Result<()> {
    if !(h > 0.0) || !(energy - 2.0 * h > 0.0) {
        return Err(Error::NearEdge { energy, step: h });
    }
    Ok(())
}

/// Smith delay matrix τ = -iħ S† dS/dE with a five-point derivative of S.
pub fn smith_matrix(
    stack: &ValidatedStack,
    energy: f64,
    h: f64,
    consts: &PhysConstants,
) -> Result<SmithMatrix> {
    stencil_guard(energy, h)?;
    let s = smatrix_at(stack, energy, consts)?;
    let at = |o: f64| smatrix_at(stack, energy + o * h, consts);
    let (m2, m1, p1, p2) = (at(-2.0)?, at(-1.0)?, at(1.0)?, at(2.0)?);
    let mut ds = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            ds[i][j] = richardson([m2[i][j], m1[i][j], p1[i][j], p2[i][j]], h);
        }
    }
    let dagger = [
        [s[0][0].conj(), s[1][0].conj()],
        [s[0][1].conj(), s[1][1].conj()],
    ];
    let prod = mat2_mul(&dagger, &ds);
    let scale = -I * consts.hbar;
    let regime = if stack.is_mirror_symmetric() {
        SmithRegime::Symmetric
    } else {
        SmithRegime::Untested
    };
    Ok(SmithMatrix {
        tau11: (scale * prod[0][0]).re,
        tau22: (scale * prod[1][1]).re,
        tau12: scale * prod[0][1],
        regime,
    })
}

/// Left-incident scattering state of unit incident flux,
/// ψ = (e^{ikx} + r̃ e^{-ikx})/√v on the left and t̃ e^{ikx}/√v on the right.
#[derive(Clone, Debug)]
pub struct ScatteringState {
    energy: f64,
    k: f64,
    lead_mass: f64,
    /// Interface positions and (ψ, ψ'/m*) there.
    nodes: Vec<(f64, Complex64, Complex64)>,
    /// Signed k² and mass ratio of each layer.
    media: Vec<(f64, f64)>,
    incident: Complex64,
    reflected: Complex64,
    transmitted: Complex64,
    hbar_over_m0: f64,
}

impl ScatteringState {
    pub fn new(stack: &ValidatedStack, energy: f64, consts: &PhysConstants) -> Result<Self> {
        if !(energy > 0.0) {
            return Err(Error::NoPropagation(energy));
        }
        let lead = stack.outside();
        let k = lead.wavenumber(energy, consts);
        let v = lead.velocity(energy, consts);
        let amp = origin_amplitudes(stack, energy, consts)?;
        let xs = stack.interfaces();
        let media: Vec<(f64, f64)> = stack
            .layers()
            .iter()
            .map(|l| {
                (
                    consts.wavenumber_sq(energy, l.potential, l.mass_ratio),
                    l.mass_ratio,
                )
            })
            .collect();
        let b = *xs.last().unwrap();
        let psi_b = amp.t * Complex64::from_polar(1.0, k * b) / v.sqrt();
        let p_b = I * (k / lead.mass_ratio) * psi_b;
        let mut nodes = vec![(b, psi_b, p_b); xs.len()];
        for j in (0..media.len()).rev() {
            let (_, psi, p) = nodes[j + 1];
            let (k2, mass) = media[j];
            let back = Propagator::across(k2, mass, xs[j] - xs[j + 1]);
            let (psi_l, p_l) = back.apply(psi, p);
            nodes[j] = (xs[j], psi_l, p_l);
        }
        // decompose the left-edge state into lead plane waves
        let (a, psi_a, p_a) = nodes[0];
        let q = I * (k / lead.mass_ratio);
        let incident = 0.5 * (psi_a + p_a / q) * Complex64::from_polar(1.0, -k * a);
        let reflected = 0.5 * (psi_a - p_a / q) * Complex64::from_polar(1.0, k * a);
        Ok(ScatteringState {
            energy,
            k,
            lead_mass: lead.mass_ratio,
            nodes,
            media,
            incident,
            reflected,
            transmitted: amp.t / v.sqrt(),
            hbar_over_m0: consts.hbar_over_m0(),
        })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Incident and reflected plane-wave coefficients on the left, as
    /// reconstructed from the interior solution.
    pub fn left_coefficients(&self) -> (Complex64, Complex64) {
        (self.incident, self.reflected)
    }

    fn left_lead(&self, x: f64) -> (Complex64, Complex64) {
        let q = I * (self.k / self.lead_mass);
        let fwd = self.incident * Complex64::from_polar(1.0, self.k * x);
        let bwd = self.reflected * Complex64::from_polar(1.0, -self.k * x);
        (fwd + bwd, q * (fwd - bwd))
    }

    /// ψ(x) and ψ'(x)/m*(x).
    pub fn eval(&self, x: f64) -> (Complex64, Complex64) {
        let q = I * (self.k / self.lead_mass);
        let (a, _, _) = self.nodes[0];
        let (b, _, _) = *self.nodes.last().unwrap();
        if x < a {
            return self.left_lead(x);
        }
        if x >= b {
            let psi = self.transmitted * Complex64::from_polar(1.0, self.k * x);
            return (psi, q * psi);
        }
        let j = self
            .nodes
            .partition_point(|n| n.0 <= x)
            .saturating_sub(1)
            .min(self.media.len() - 1);
        let (x0, psi, p) = self.nodes[j];
        let (k2, mass) = self.media[j];
        Propagator::across(k2, mass, x - x0).apply(psi, p)
    }

    pub fn density(&self, x: f64) -> f64 {
        self.eval(x).0.norm_sqr()
    }

    /// Probability current (ħ/m0) Im(ψ* ψ'/m*), equal to |t|² everywhere.
    pub fn flux(&self, x: f64) -> f64 {
        let (psi, p) = self.eval(x);
        self.hbar_over_m0 * (psi.conj() * p).im
    }

    /// Interface positions a = x_0 < ... < x_n = b.
    pub fn interfaces(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.0).collect()
    }

    /// Largest difference in (ψ, ψ'/m*) at interface `j` between the
    /// solutions on its two sides.
    pub fn interface_mismatch(&self, j: usize) -> f64 {
        let (x, psi, p) = self.nodes[j];
        if j == 0 {
            let (l_psi, l_p) = self.left_lead(x);
            return (l_psi - psi).norm().max((l_p - p).norm());
        }
        let (x0, psi0, p0) = self.nodes[j - 1];
        let (k2, mass) = self.media[j - 1];
        let (fwd_psi, fwd_p) = Propagator::across(k2, mass, x - x0).apply(psi0, p0);
        (fwd_psi - psi).norm().max((fwd_p - p).norm())
    }
}

/// ψ samples of the left-incident scattering state.
pub fn interior_wavefunction(
    stack: &ValidatedStack,
    energy: f64,
    xs: &[f64],
    consts: &PhysConstants,
) -> Result<Vec<Complex64>> {
    let state = ScatteringState::new(stack, energy, consts)?;
    Ok(xs.iter().map(|&x| state.eval(x).0).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellResult {
    pub energy: f64,
    pub x_left: f64,
    pub x_right: f64,
    /// ħ(|t|² η̃′ + |r|² δ̃′) in fs.
    pub tau_dwell_delay: f64,
    /// -ħ|r|/(2E) sin(2k x_L - δ̃) in fs.
    pub oscillatory_term: f64,
    /// (x_R - x_L)|t|²/v - 2 x_L |r|²/v in fs.
    pub free_passage: f64,
    /// Sum of the three terms above: ∫|ψ|² dx over [x_L, x_R] in closed form.
    pub closed_total: f64,
    /// ∫|ψ|² dx over [x_L, x_R] by quadrature.
    pub numeric_total: f64,
    /// ∫(|ψ|² - 1/v) dx over [x_L, x_R] by quadrature.
    pub numeric_excess: f64,
}

/// Default measurement points: one core-cell width outside each end.
pub fn default_window(stack: &ValidatedStack) -> (f64, f64) {
    let w = stack.spec().core.width();
    (stack.left() - w, stack.right() + w)
}

/// Absolute tolerance of the density quadrature, in fs.
pub const DWELL_QUAD_TOL: f64 = 1e-6;

/// Dwell time over [x_L, x_R] in closed form and by direct integration of
/// the scattering density.
pub fn dwell_time(
    stack: &ValidatedStack,
    energy: f64,
    x_left: f64,
    x_right: f64,
    h: f64,
    consts: &PhysConstants,
) -> Result<DwellResult> {
    if !(x_left <= stack.left()) || !(x_right >= stack.right()) {
        return Err(Error::Invalid(vec![format!(
            "measurement window [{x_left}, {x_right}] nm must enclose the stack [{}, {}] nm",
            stack.left(),
            stack.right()
        )]));
    }
    stencil_guard(energy, h)?;
    let lead = stack.outside();
    let k = lead.wavenumber(energy, consts);
    let v = lead.velocity(energy, consts);
    let amp = origin_amplitudes(stack, energy, consts)?;
    let at = |o: f64| origin_amplitudes(stack, energy + o * h, consts);
    let (m2, m1, p1, p2) = (at(-2.0)?, at(-1.0)?, at(1.0)?, at(2.0)?);
    let dt = richardson([m2.t, m1.t, p1.t, p2.t], h);
    let dr = richardson([m2.r, m1.r, p1.r, p2.r], h);
    let (t2, r2) = (amp.t.norm_sqr(), amp.r.norm_sqr());
    let eta_p = (dt / amp.t).im;
    // |r|² δ′ = Im(r* r′), finite at reflectionless points
    let r2_delta_p = (amp.r.conj() * dr).im;
    let hbar = consts.hbar;
    let tau_dwell_delay = hbar * (t2 * eta_p + r2_delta_p);
    let oscillatory_term =
        -hbar * amp.r.norm() / (2.0 * energy) * (2.0 * k * x_left - amp.delta).sin();
    let free_passage = (x_right - x_left) * t2 / v - 2.0 * x_left * r2 / v;

    let state = ScatteringState::new(stack, energy, consts)?;
    let mut cuts = vec![x_left];
    cuts.extend(stack.interfaces());
    cuts.push(x_right);
    // pieces shorter than a quarter of the shortest local wavelength, so the
    // first Simpson estimates cannot alias a whole number of oscillations
    let k_max = stack
        .layers()
        .iter()
        .map(|l| local_wavenumber(energy, l, consts).norm())
        .fold(k, f64::max);
    let piece = (0.5 * PI / k_max).min(1.0);
    let spans: Vec<(f64, f64)> = cuts
        .windows(2)
        .flat_map(|w| {
            let parts = ((w[1] - w[0]) / piece).ceil().max(1.0) as usize;
            let step = (w[1] - w[0]) / parts as f64;
            (0..parts).map(move |i| {
                (
                    w[0] + i as f64 * step,
                    if i + 1 == parts {
                        w[1]
                    } else {
                        w[0] + (i + 1) as f64 * step
                    },
                )
            })
        })
        .collect();
    let tol = DWELL_QUAD_TOL / spans.len() as f64;
    let mut numeric_total = 0.0;
    for (a, b) in spans {
        numeric_total += adaptive_simpson(|x| state.density(x), a, b, tol)?;
    }
    Ok(DwellResult {
        energy,
        x_left,
        x_right,
        tau_dwell_delay,
        oscillatory_term,
        free_passage,
        closed_total: tau_dwell_delay + oscillatory_term + free_passage,
        numeric_total,
        numeric_excess: numeric_total - (x_right - x_left) / v,
    })
}
