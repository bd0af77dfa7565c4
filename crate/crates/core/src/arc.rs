//! Anti-reflection cells: composition with the periodic core, band-averaged
//! transmission and a quarter-wave, half-impedance design search.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kard::{decompose, BandInterval, KardParams};
use crate::medium::{CellSpec, EnergyGrid, Layer, Lead, PhysConstants, StackSpec, ValidatedStack};
use crate::numeric::bisect;
use crate::tmatrix::{amplitudes, cell_matrix, stack_matrix, TransferMatrix};

/// M_arcL · M_core^N · M_arcR.
pub fn compose_with_arc(
    stack: &ValidatedStack,
    energy: f64,
    consts: &PhysConstants,
) -> Result<TransferMatrix> {
    let spec = stack.spec();
    let lead = spec.outside;
    let mut total = cell_matrix(&spec.core, &lead, energy, consts)?.pow(spec.replicas);
    if let Some(arc) = &spec.left_arc {
        total = cell_matrix(arc, &lead, energy, consts)? * total;
    }
    if let Some(arc) = &spec.right_arc {
        total = total * cell_matrix(arc, &lead, energy, consts)?;
    }
    Ok(total)
}

pub const MIN_AVERAGE_SAMPLES: usize = 2000;

/// Mean |t|² of the whole stack over a uniform grid spanning `band`.
pub fn band_average_transmission(
    stack: &ValidatedStack,
    band: &BandInterval,
    samples: usize,
    consts: &PhysConstants,
) -> Result<f64> {
    if samples < MIN_AVERAGE_SAMPLES {
        return Err(Error::Invalid(vec![format!(
            "band average needs at least {MIN_AVERAGE_SAMPLES} samples, got {samples}"
        )]));
    }
    let grid = EnergyGrid::uniform(band.lower, band.upper, samples)?;
    let values = grid
        .samples
        .par_iter()
        .map(|&e| Ok(amplitudes(&stack_matrix(stack, e, consts)?).transmission()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcDesign {
    pub arc_cell: CellSpec,
    /// Bragg point of the core (cos φ = 0), meV.
    pub target_energy: f64,
    /// Signed μ_A of the ARC cell at the target energy.
    pub achieved_mu_a: f64,
    pub achieved_phi_a: f64,
    /// Half the signed core impedance at the target energy.
    pub target_mu_a: f64,
    /// Scale applied to the lead-material layers of the core.
    pub well_scale: f64,
    /// Scale applied to the other layers of the core.
    pub barrier_scale: f64,
    pub residual: f64,
}

impl ArcDesign {
    /// `stack` with this ARC on the left and its mirror image on the right.
    pub fn apply(&self, stack: StackSpec) -> StackSpec {
        stack.with_arc(self.arc_cell.clone())
    }
}

/// Core cell with lead-material layers scaled by `well_scale` and all
/// other layers by `barrier_scale`.
pub fn scaled_cell(
    core: &CellSpec,
    outside: &Lead,
    well_scale: f64,
    barrier_scale: f64,
) -> CellSpec {
    let layers: Vec<Layer> = core
        .layers
        .iter()
        .map(|l| {
            let lead_like = l.potential == outside.potential && l.mass_ratio == outside.mass_ratio;
            let s = if lead_like { well_scale } else { barrier_scale };
            Layer::new(l.width * s, l.potential, l.mass_ratio)
        })
        .collect();
    CellSpec::new(layers)
}

/// Threshold on the design residual above which no design is returned.
pub const DESIGN_THRESHOLD: f64 = 1e-2;
const GRID_STEPS: usize = 150;
const MAX_SCALE: f64 = 3.0;

/// Bragg point of `core` in `band`, or the band centre when cos φ has no
/// sign change there.
pub fn bragg_point(
    core: &CellSpec,
    outside: &Lead,
    band: &BandInterval,
    consts: &PhysConstants,
) -> Result<f64> {
    let f = |e: f64| Ok(cell_matrix(core, outside, e, consts)?.half_trace());
    match bisect(f, band.lower, band.upper, 1e-10) {
        Ok(e) => Ok(e),
        Err(Error::NotBracketed(..)) => Ok(band.centre()),
        Err(other) => Err(other),
    }
}

struct Residual {
    phi: f64,
    mu: f64,
}

fn arc_kard(
    core: &CellSpec,
    outside: &Lead,
    beta: f64,
    alpha: f64,
    e: f64,
    consts: &PhysConstants,
) -> Result<KardParams> {
    Ok(decompose(
        &cell_matrix(&scaled_cell(core, outside, beta, alpha), outside, e, consts)?,
        None,
    ))
}

fn residual(
    core: &CellSpec,
    outside: &Lead,
    scales: (f64, f64),
    e: f64,
    target: f64,
    consts: &PhysConstants,
) -> Option<Residual> {
    if !(scales.0 > 0.0 && scales.1 > 0.0) {
        return None;
    }
    let k = arc_kard(core, outside, scales.0, scales.1, e, consts).ok()?;
    if !k.is_allowed() {
        return None;
    }
    Some(Residual {
        phi: k.phi - FRAC_PI_2,
        mu: k.signed_mu() - target,
    })
}

fn objective(r: &Residual) -> f64 {
    r.phi * r.phi + r.mu * r.mu
}

/// Searches the two-scale family around `core` for a cell with φ_A = π/2
/// and signed μ_A equal to half the core's at the Bragg point.
pub fn design_rule_of_thumb(
    core: &CellSpec,
    outside: &Lead,
    band: &BandInterval,
    consts: &PhysConstants,
) -> Result<ArcDesign> {
    core.validate()?;
    let e = bragg_point(core, outside, band, consts)?;
    let core_kard = decompose(&cell_matrix(core, outside, e, consts)?, None);
    if !core_kard.is_allowed() {
        return Err(Error::NotAllowed(e));
    }
    let target = 0.5 * core_kard.signed_mu();
    let step = MAX_SCALE / GRID_STEPS as f64;
    let scored: Vec<(f64, (f64, f64))> = (1..=GRID_STEPS)
        .into_par_iter()
        .flat_map_iter(|i| {
            (1..=GRID_STEPS).map(move |j| {
                let s = (step * i as f64, step * j as f64);
                let obj = residual(core, outside, s, e, target, consts)
                    .map(|r| objective(&r))
                    .unwrap_or(f64::INFINITY);
                (obj, s)
            })
        })
        .collect();
    let (best_obj, mut best) =
        scored
            .iter()
            .copied()
            .fold((f64::INFINITY, (0.0, 0.0)), |acc, x| {
                if x.0 < acc.0 {
                    x
                } else {
                    acc
                }
            });
    if !best_obj.is_finite() {
        return Err(Error::NoViableDesign(f64::INFINITY));
    }
    log::debug!("ARC grid optimum {best:?} with objective {best_obj:.3e}");
    best = refine(core, outside, best, e, target, consts);
    let k = arc_kard(core, outside, best.0, best.1, e, consts)?;
    let r = residual(core, outside, best, e, target, consts)
        .ok_or(Error::NoViableDesign(f64::INFINITY))?;
    let res = objective(&r).sqrt();
    if res > DESIGN_THRESHOLD {
        return Err(Error::NoViableDesign(res));
    }
    Ok(ArcDesign {
        arc_cell: scaled_cell(core, outside, best.0, best.1),
        target_energy: e,
        achieved_mu_a: k.signed_mu(),
        achieved_phi_a: k.phi,
        target_mu_a: target,
        well_scale: best.0,
        barrier_scale: best.1,
        residual: res,
    })
}

/// Damped Gauss-Newton on the two matching conditions.
fn refine(
    core: &CellSpec,
    outside: &Lead,
    start: (f64, f64),
    e: f64,
    target: f64,
    consts: &PhysConstants,
) -> (f64, f64) {
    let eval = |s: (f64, f64)| residual(core, outside, s, e, target, consts);
    let mut x = start;
    let Some(mut r) = eval(x) else { return x };
    let mut damping = 1e-3;
    for _ in 0..60 {
        let obj = objective(&r);
        if obj < 1e-28 {
            break;
        }
        let h = 1e-7;
        let (Some(rb), Some(ra)) = (eval((x.0 + h, x.1)), eval((x.0, x.1 + h))) else {
            break;
        };
        let j = [
            [(rb.phi - r.phi) / h, (ra.phi - r.phi) / h],
            [(rb.mu - r.mu) / h, (ra.mu - r.mu) / h],
        ];
        let f = [r.phi, r.mu];
        // (JᵀJ + λ diag) δ = -Jᵀ f
        let jtj = [
            [
                j[0][0] * j[0][0] + j[1][0] * j[1][0],
                j[0][0] * j[0][1] + j[1][0] * j[1][1],
            ],
            [
                j[0][1] * j[0][0] + j[1][1] * j[1][0],
                j[0][1] * j[0][1] + j[1][1] * j[1][1],
            ],
        ];
        let g = [
            j[0][0] * f[0] + j[1][0] * f[1],
            j[0][1] * f[0] + j[1][1] * f[1],
        ];
        let mut improved = false;
        for _ in 0..20 {
            let a = [
                [jtj[0][0] * (1.0 + damping) + 1e-300, jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + damping) + 1e-300],
            ];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det == 0.0 || !det.is_finite() {
                damping *= 10.0;
                continue;
            }
            let d0 = -(a[1][1] * g[0] - a[0][1] * g[1]) / det;
            let d1 = -(a[0][0] * g[1] - a[1][0] * g[0]) / det;
            let trial = (x.0 + d0, x.1 + d1);
            if let Some(rt) = eval(trial) {
                if objective(&rt) < obj {
                    x = trial;
                    r = rt;
                    damping = (damping * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    x
}
