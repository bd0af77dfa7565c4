//! CSV recipes behind `playmodel --figure` and `reproduce --figure`.

use std::f64::consts::{FRAC_PI_2, PI};

use superlattice_core::arc::{design_rule_of_thumb, ArcDesign};
use superlattice_core::kard::{band_structure, decompose, BandInterval, BandKind};
use superlattice_core::medium::{
    representative_cell, representative_stack, validate_stack, CellSpec, EnergyGrid, Layer, Lead, PhysConstants,
    GAAS_MASS,
};
use superlattice_core::numeric::unwrap_near;
use superlattice_core::playmodel::PlayModel;
use superlattice_core::resonance::{approx_curves, fit_all, refined_energies, Segment};
use superlattice_core::timing::{bloch_time, phase_time_oracle, timing_curve, transmission_sweep};
use superlattice_core::tmatrix::{amplitudes, stack_matrix, PhysicalCell, StackScatterer, UnitCell};
use superlattice_core::{Error, Result};

use crate::output::{Cell, Table};

/// Fraction of the band width kept clear of each edge.
const EDGE_MARGIN: f64 = 2e-3;

pub fn segment_label(s: Segment) -> String {
    match s {
        Segment::Peak(m) => format!("peak{m}"),
        Segment::Valley(p) => format!("valley{p}"),
        Segment::Connector => "connector".into(),
    }
}

pub fn band_label(b: BandKind) -> &'static str {
    match b {
        BandKind::Allowed => "allowed",
        BandKind::Forbidden => "forbidden",
        BandKind::Edge => "edge",
    }
}

/// First allowed band of `cell` below 300 meV.
pub fn first_band<C: UnitCell + ?Sized>(cell: &C) -> Result<BandInterval> {
    let grid = EnergyGrid::uniform(0.5, 300.0, 6000)?;
    band_structure(cell, &grid)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Numeric("no allowed band below 300 meV".into()))
}

pub fn playmodel_figure(figure: u8, n: usize, count: usize) -> Result<Table> {
    let model = PlayModel::default();
    let band = model.band();
    let h = band.default_step();
    match figure {
        1 => {
            let mut t = Table::new(
                "play model: Bloch phase and single-cell transmission phase",
                &["E_meV", "cos_phi", "phi_over_half_pi", "eta_over_half_pi"],
            );
            for e in band.interior_samples(count, 1e-9) {
                let k = model.kard(e)?;
                t.push(vec![e.into(), model.cos_phi(e).into(), (k.phi / FRAC_PI_2).into(), (model.eta(e)? / FRAC_PI_2).into()]);
            }
            Ok(t)
        }
        2 => {
            let tn = format!("T{n}");
            let mut t = Table::new(
                "play model: single-cell and N-cell transmission with the envelope of minima",
                &["E_meV", "T1", tn.as_str(), "T_min_envelope"],
            );
            for s in transmission_sweep(&model, n, &band.interior_samples(count, 1e-9))? {
                t.push(vec![s.energy.into(), s.t_1.into(), s.t_n.into(), s.envelope.into()]);
            }
            Ok(t)
        }
        3 => {
            let tn = format!("T{n}");
            let mut t = Table::new(
                "play model: phase time with the loci at transmission maxima and minima",
                &["E_meV", "tau_ph_fs", "env_max_fs", "env_min_fs", tn.as_str()],
            );
            for s in timing_curve(&model, n, &band.interior_samples(count, EDGE_MARGIN), h)? {
                t.push(vec![s.energy.into(), s.tau_ph.into(), s.env_max.into(), s.env_min.into(), s.t2.into()]);
            }
            Ok(t)
        }
        4 => {
            let mut t = Table::new(
                "play model: N-cell transmission phase and N phi over the lower half band",
                &["E_meV", "eta_N_over_pi", "N_phi_over_pi"],
            );
            let half = BandInterval {
                lower: band.lower,
                upper: band.centre(),
            };
            let mut eta = 0.0;
            for e in half.interior_samples(count, 1e-6) {
                let m = model.matrix_at(e)?;
                let k = decompose(&m, None);
                eta = unwrap_near(eta, amplitudes(&m.pow(n)).eta);
                t.push(vec![e.into(), (eta / PI).into(), (n as f64 * k.phi / PI).into()]);
            }
            Ok(t)
        }
        5 | 6 => {
            let fits = fit_all(&model, n, &band, h)?;
            let energies = refined_energies(&fits, &band, count, EDGE_MARGIN, 40);
            let exact = timing_curve(&model, n, &energies, h)?;
            let approx = approx_curves(&fits, &exact.iter().map(|s| s.energy).collect::<Vec<_>>());
            let tn = format!("T{n}");
            let mut t = if figure == 5 {
                Table::new(
                    "play model: transmission and its resonance approximation",
                    &["E_meV", tn.as_str(), "T_approx", "segment"],
                )
            } else {
                Table::new(
                    "play model: phase time and its resonance approximation",
                    &["E_meV", "tau_ph_fs", "tau_approx_fs", "env_max_fs", "segment"],
                )
            };
            for (s, a) in exact.iter().zip(&approx) {
                if figure == 5 {
                    t.push(vec![s.energy.into(), s.t2.into(), a.t_approx.into(), segment_label(a.t_segment).into()]);
                } else {
                    t.push(vec![
                        s.energy.into(),
                        s.tau_ph.into(),
                        a.tau_approx.into(),
                        s.env_max.into(),
                        segment_label(a.tau_segment).into(),
                    ]);
                }
            }
            Ok(t)
        }
        _ => Err(Error::Invalid(vec![format!("play model figures are 1 to 6, got {figure}")])),
    }
}

/// Barrier cell with the representative cell's width and barrier area but
/// a Gaussian profile, sliced into thin layers.
pub fn gaussian_cell() -> CellSpec {
    let rep = representative_cell();
    let width = rep.width();
    let area: f64 = rep.layers.iter().map(|l| l.width * l.potential).sum();
    let s = 1.0;
    let height = area / (s * (2.0 * PI).sqrt());
    let slices = 45;
    let dw = width / slices as f64;
    let layers = (0..slices)
        .map(|i| {
            let x = (i as f64 + 0.5) * dw - 0.5 * width;
            Layer::new(dw, height * (-0.5 * x * x / (s * s)).exp(), GAAS_MASS)
        })
        .collect();
    CellSpec::new(layers)
}

pub fn representative_design(consts: &PhysConstants) -> Result<(ArcDesign, BandInterval)> {
    let lead = Lead::new(GAAS_MASS);
    let band = first_band(&PhysicalCell::new(representative_cell(), lead))?;
    Ok((design_rule_of_thumb(&representative_cell(), &lead, &band, consts)?, band))
}

pub fn reproduce(figure: u8, count: usize) -> Result<Table> {
    let consts = PhysConstants::default();
    let lead = Lead::new(GAAS_MASS);
    let cell = PhysicalCell::new(representative_cell(), lead);
    match figure {
        0 => {
            let gauss = PhysicalCell::new(gaussian_cell(), lead);
            let (design, _) = representative_design(&consts)?;
            let arc = PhysicalCell::new(design.arc_cell.clone(), lead);
            let mut t = Table::new(
                "square and Gaussian barrier cells with a single-cell ARC: cos phi and mu",
                &["E_meV", "cos_phi_square", "cos_phi_gauss", "cos_phi_arc", "mu_square", "mu_gauss", "mu_arc"],
            );
            for e in EnergyGrid::uniform(0.5, 150.0, count)?.samples {
                let ms: Vec<_> = [&cell, &gauss, &arc].iter().map(|c| c.matrix(e)).collect::<Result<_>>()?;
                let mut row: Vec<Cell> = vec![e.into()];
                row.extend(ms.iter().map(|m| Cell::from(m.half_trace())));
                row.extend(ms.iter().map(|m| {
                    let k = decompose(m, None);
                    Cell::from(if k.is_allowed() { k.mu } else { f64::NAN })
                }));
                t.push(row);
            }
            Ok(t)
        }
        1..=6 => playmodel_figure(figure, 9, count),
        7 | 8 => {
            let band = first_band(&cell)?;
            let h = band.default_step();
            let n = representative_stack().replicas;
            let fits = fit_all(&cell, n, &band, h)?;
            let energies = refined_energies(&fits, &band, count, EDGE_MARGIN, 40);
            let exact = timing_curve(&cell, n, &energies, h)?;
            if figure == 7 {
                let mut t = Table::new(
                    "representative 5-cell array: phase time, loci, Bloch time and 4T",
                    &["E_meV", "tau_ph_fs", "env_max_fs", "env_min_fs", "bloch_fs", "four_T"],
                );
                for s in &exact {
                    t.push(vec![
                        s.energy.into(),
                        s.tau_ph.into(),
                        s.env_max.into(),
                        s.env_min.into(),
                        s.tau_bloch_total.into(),
                        (4.0 * s.t2).into(),
                    ]);
                }
                Ok(t)
            } else {
                let approx = approx_curves(&fits, &exact.iter().map(|s| s.energy).collect::<Vec<_>>());
                let mut t = Table::new(
                    "representative 5-cell array: phase time and resonance approximations",
                    &["E_meV", "tau_ph_fs", "tau_approx_fs", "env_max_fs", "env_min_fs", "segment"],
                );
                for (s, a) in exact.iter().zip(&approx) {
                    t.push(vec![
                        s.energy.into(),
                        s.tau_ph.into(),
                        a.tau_approx.into(),
                        s.env_max.into(),
                        s.env_min.into(),
                        segment_label(a.tau_segment).into(),
                    ]);
                }
                Ok(t)
            }
        }
        9 => {
            let (design, band) = representative_design(&consts)?;
            let bare = validate_stack(&representative_stack())?;
            let coated = validate_stack(&design.apply(representative_stack()))?;
            let arc_cell = PhysicalCell::new(design.arc_cell.clone(), lead);
            let scatterer = StackScatterer::new(coated.clone());
            let h = band.default_step();
            let n = bare.spec().replicas as f64;
            let mut t = Table::new(
                "representative 5-cell array with ARC: transmission, phase time and Bloch times",
                &["E_meV", "T_arc", "T_bare", "tau_ph_arc_fs", "bloch_fs", "bloch_with_arc_fs"],
            );
            for e in band.interior_samples(count, EDGE_MARGIN) {
                // stencils that leave a band are blank rather than fatal
                let bloch = bloch_time(&cell, e, h).map_or(f64::NAN, |v| n * v);
                // the ARC cells add their own ħ dφ_A/dE where they are allowed
                let arc_extra = bloch_time(&arc_cell, e, h).map_or(f64::NAN, |v| 2.0 * v);
                t.push(vec![
                    e.into(),
                    amplitudes(&stack_matrix(&coated, e, &consts)?).transmission().into(),
                    amplitudes(&stack_matrix(&bare, e, &consts)?).transmission().into(),
                    phase_time_oracle(&scatterer, 1, e, h)?.into(),
                    bloch.into(),
                    (bloch + arc_extra).into(),
                ]);
            }
            Ok(t)
        }
        _ => Err(Error::Invalid(vec![format!("figures are 0 to 9, got {figure}")])),
    }
}
