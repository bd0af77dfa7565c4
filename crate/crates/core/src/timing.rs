//! Phase time of N-cell arrays, Bloch time and the envelope loci of the
//! phase time at transmission maxima and minima.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kard::{decompose, half_trace_derivative, BandKind, KardSample};
use crate::medium::PhysConstants;
use crate::numeric::richardson;
use crate::tmatrix::{amplitudes, UnitCell};

fn hbar() -> f64 {
    PhysConstants::default().hbar
}

/// ln cosh μ without overflow.
pub fn ln_cosh(mu: f64) -> f64 {
    let a = mu.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Bloch time ħ dφ/dE of one cell, in fs.
pub fn bloch_time<C: UnitCell + ?Sized>(model: &C, energy: f64, h: f64) -> Result<f64> {
    Ok(hbar() * model.derivatives(energy, h)?.derivs.phi_p)
}

/// N-cell phase time from single-cell Kard data.
pub fn phase_time_from(sample: &KardSample, n: usize) -> f64 {
    let nf = n as f64;
    let KardSample { params, derivs } = sample;
    let (mu, n_phi) = (params.mu, nf * params.phi);
    let numer = 1.0 + (2.0 * n_phi).sin() * mu.tanh() * derivs.mu_p / (2.0 * nf * derivs.phi_p);
    let denom = 1.0 + (mu.sinh() * n_phi.sin()).powi(2);
    nf * hbar() * derivs.phi_p * mu.cosh() * numer / denom
}

/// Phase time ħ dη_N/dE of N identical cells, in fs.
pub fn phase_time<C: UnitCell + ?Sized>(model: &C, n: usize, energy: f64, h: f64) -> Result<f64> {
    Ok(phase_time_from(&model.derivatives(energy, h)?, n))
}

/// ħ dη_N/dE by differentiating the N-fold matrix product directly.
pub fn phase_time_oracle<C: UnitCell + ?Sized>(
    model: &C,
    n: usize,
    energy: f64,
    h: f64,
) -> Result<f64> {
    let t = |o: f64| -> Result<num_complex::Complex64> {
        Ok(amplitudes(&model.matrix(energy + o * h)?.pow(n)).t)
    };
    let centre = t(0.0)?;
    let dt = richardson([t(-2.0)?, t(-1.0)?, t(1.0)?, t(2.0)?], h);
    Ok(hbar() * (dt / centre).im)
}

/// Phase time minus the free passage time N w / v of the leads.
pub fn phase_time_delay<C: UnitCell + ?Sized>(
    model: &C,
    n: usize,
    energy: f64,
    tau_ph: f64,
) -> f64 {
    match model.lead_velocity(energy) {
        Some(v) => tau_ph - n as f64 * model.cell_width() / v,
        None => tau_ph,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelopes {
    /// N τ_Bl cosh μ.
    pub env_max: f64,
    /// N τ_Bl / cosh μ.
    pub env_min: f64,
    /// env_min from single-cell matrix elements, N ħ (d cos φ/dE)/Im M11.
    pub env_min_matrix: f64,
    /// N τ_Bl.
    pub bloch_total: f64,
    pub ln_env_max: f64,
    pub ln_env_min: f64,
}

pub fn envelopes_from(sample: &KardSample, n: usize) -> Envelopes {
    let bloch_total = n as f64 * hbar() * sample.derivs.phi_p;
    let lc = ln_cosh(sample.params.mu);
    let ln_bloch = bloch_total.ln();
    Envelopes {
        env_max: (ln_bloch + lc).exp(),
        env_min: (ln_bloch - lc).exp(),
        env_min_matrix: f64::NAN,
        bloch_total,
        ln_env_max: ln_bloch + lc,
        ln_env_min: ln_bloch - lc,
    }
}

pub fn envelopes<C: UnitCell + ?Sized>(
    model: &C,
    n: usize,
    energy: f64,
    h: f64,
) -> Result<Envelopes> {
    let sample = model.derivatives(energy, h)?;
    let mut env = envelopes_from(&sample, n);
    let dcos = half_trace_derivative(model, energy, h)?;
    let im11 = model.matrix(energy)?.m11.im;
    env.env_min_matrix = n as f64 * hbar() * dcos / im11;
    Ok(env)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionSample {
    pub energy: f64,
    /// |t_N|² from the explicit N-fold product.
    pub t_n: f64,
    /// |t_N|² from the Kard closed form (allowed band only).
    pub t_n_kard: Option<f64>,
    /// Envelope of minima 1/cosh²μ (allowed band only).
    pub envelope: Option<f64>,
    /// Single-cell transmission.
    pub t_1: f64,
    pub band: BandKind,
}

/// |t_N|² and the envelope of minima at each energy.
pub fn transmission_sweep<C: UnitCell + ?Sized>(
    model: &C,
    n: usize,
    energies: &[f64],
) -> Result<Vec<TransmissionSample>> {
    energies
        .par_iter()
        .map(|&e| {
            let m = model.matrix(e)?;
            let k = decompose(&m, None);
            let (t_n_kard, envelope) = if k.band == BandKind::Allowed {
                let s = k.mu.sinh() * (n as f64 * k.phi).sin();
                (
                    Some(1.0 / (1.0 + s * s)),
                    Some((-2.0 * ln_cosh(k.mu)).exp()),
                )
            } else {
                (None, None)
            };
            Ok(TransmissionSample {
                energy: e,
                t_n: amplitudes(&m.pow(n)).transmission(),
                t_n_kard,
                envelope,
                t_1: amplitudes(&m).transmission(),
                band: k.band,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingSample {
    pub energy: f64,
    pub tau_ph: f64,
    pub tau_ph_delay: f64,
    pub tau_bloch_total: f64,
    pub env_max: f64,
    pub env_min: f64,
    pub t2: f64,
}

pub type TimingCurve = Vec<TimingSample>;

pub fn timing_sample<C: UnitCell + ?Sized>(
    model: &C,
    n: usize,
    energy: f64,
    h: f64,
) -> Result<TimingSample> {
    let sample = model.derivatives(energy, h)?;
    let env = envelopes_from(&sample, n);
    let tau_ph = phase_time_from(&sample, n);
    let s = sample.params.mu.sinh() * (n as f64 * sample.params.phi).sin();
    Ok(TimingSample {
        energy,
        tau_ph,
        tau_ph_delay: phase_time_delay(model, n, energy, tau_ph),
        tau_bloch_total: env.bloch_total,
        env_max: env.env_max,
        env_min: env.env_min,
        t2: 1.0 / (1.0 + s * s),
    })
}

/// Timing quantities at each energy whose derivative stencil fits inside
/// an allowed band; other energies are dropped.
pub fn timing_curve<C: UnitCell + ?Sized>(
    model: &C,
    n: usize,
    energies: &[f64],
    h: f64,
) -> Result<TimingCurve> {
    let samples: Vec<Result<TimingSample>> = energies
        .par_iter()
        .map(|&e| timing_sample(model, n, e, h))
        .collect();
    let mut out = Vec::with_capacity(samples.len());
    for (s, &e) in samples.into_iter().zip(energies) {
        match s {
            Ok(s) => out.push(s),
            Err(Error::NearEdge { .. }) | Err(Error::NotAllowed(_)) => {
                log::debug!("skipping E = {e} meV outside the band interior");
            }
            Err(other) => return Err(other),
        }
    }
    Ok(out)
}
