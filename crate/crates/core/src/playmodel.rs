//! Analytic single-band model: cos φ linear in energy across one band and
//! a prescribed single-cell transmission. Everything else (μ, η, the N-cell
//! response) follows from these two laws, so the model exercises the Kard
//! machinery without a potential profile.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kard::{reconstruct, BandInterval, KardDerivatives, KardParams, KardSample};
use crate::medium::ValidatedStack;
use crate::tmatrix::{TransferMatrix, UnitCell};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayModel {
    /// Slope of cos φ in 1/meV.
    pub lambda: f64,
    /// Band centre where cos φ = 0, in meV.
    pub bragg_energy: f64,
    /// Scale of the transmission law |t|⁻² = 1 + scale/E, in meV.
    pub transmission_scale: f64,
}

impl Default for PlayModel {
    fn default() -> Self {
        PlayModel {
            lambda: 0.08,
            bragg_energy: 62.5,
            transmission_scale: 160.0,
        }
    }
}

impl PlayModel {
    pub fn band(&self) -> BandInterval {
        let half = 1.0 / self.lambda;
        BandInterval {
            lower: self.bragg_energy - half,
            upper: self.bragg_energy + half,
        }
    }

    pub fn cos_phi(&self, energy: f64) -> f64 {
        self.lambda * (self.bragg_energy - energy)
    }

    /// Single-cell transmission probability E/(E + scale).
    pub fn transmission(&self, energy: f64) -> f64 {
        energy / (energy + self.transmission_scale)
    }

    fn check(&self, energy: f64) -> Result<()> {
        if self.band().contains(energy) {
            Ok(())
        } else {
            Err(Error::NotAllowed(energy))
        }
    }

    /// Single-cell transmission phase, continuous across the band with
    /// η = π/2 at the band centre.
    pub fn eta(&self, energy: f64) -> Result<f64> {
        self.check(energy)?;
        Ok((self.transmission(energy).sqrt() * self.cos_phi(energy)).acos())
    }

    pub fn kard(&self, energy: f64) -> Result<KardParams> {
        self.check(energy)?;
        let phi = self.cos_phi(energy).acos();
        let t = self.transmission(energy).sqrt();
        let eta = (t * self.cos_phi(energy)).acos();
        let cosh_mu = eta.sin() / (t * phi.sin());
        Ok(KardParams::allowed(
            energy,
            phi,
            cosh_mu.max(1.0).acosh(),
            0.0,
        ))
    }

    pub fn matrix_at(&self, energy: f64) -> Result<TransferMatrix> {
        reconstruct(&self.kard(energy)?)
    }

    /// Closed-form φ′, φ″ and μ′.
    pub fn analytic_derivatives(&self, energy: f64) -> Result<KardSample> {
        let params = self.kard(energy)?;
        let (sin, cos) = params.phi.sin_cos();
        let lambda = self.lambda;
        // sinh²μ = (scale/E) / sin²φ
        let mu_p = params.mu.tanh() * (-0.5 / energy - lambda * cos / (sin * sin));
        Ok(KardSample {
            params,
            derivs: KardDerivatives {
                phi_p: lambda / sin,
                phi_pp: -lambda * lambda * cos / sin.powi(3),
                mu_p,
            },
        })
    }

    /// The model carries no potential profile.
    pub fn spatial_profile(&self) -> Result<ValidatedStack> {
        Err(Error::NoProfile)
    }

    /// Energy where the Bloch phase equals `phi` (0 < φ < π).
    pub fn energy_at_phase(&self, phi: f64) -> f64 {
        debug_assert!(phi > 0.0 && phi < PI);
        self.bragg_energy - phi.cos() / self.lambda
    }
}

impl UnitCell for PlayModel {
    fn matrix(&self, energy: f64) -> Result<TransferMatrix> {
        self.matrix_at(energy)
    }

    fn half_trace(&self, energy: f64) -> Result<f64> {
        Ok(self.cos_phi(energy))
    }

    fn derivatives(&self, energy: f64, _h: f64) -> Result<KardSample> {
        self.analytic_derivatives(energy)
    }
}

pub fn play_kard(energy: f64) -> Result<KardParams> {
    PlayModel::default().kard(energy)
}

pub fn play_matrix(energy: f64) -> Result<TransferMatrix> {
    PlayModel::default().matrix_at(energy)
}

pub fn play_derivatives(energy: f64) -> Result<KardSample> {
    PlayModel::default().analytic_derivatives(energy)
}
