use std::f64::consts::PI;

use proptest::prelude::*;

use superlattice_core::kard::{band_structure, decompose, reconstruct, KardParams};
use superlattice_core::medium::{
    local_wavenumber, representative_cell, validate_stack, CellSpec, EnergyGrid, Layer, Lead, PhysConstants,
    StackSpec, GAAS_MASS,
};
use superlattice_core::resonance::fit_all;
use superlattice_core::scattering::{dwell_time, origin_amplitudes, ScatteringState};
use superlattice_core::timing::{phase_time_oracle, timing_sample};
use superlattice_core::tmatrix::{amplitudes, compose, layers_matrix, stack_matrix, PhysicalCell, UnitCell};

fn consts() -> PhysConstants {
    PhysConstants::default()
}

fn lead() -> Lead {
    Lead::new(GAAS_MASS)
}

fn layer() -> impl Strategy<Value = Layer> {
    (0.2..2.0_f64, 0.0..250.0_f64, 0.05..0.15_f64).prop_map(|(w, v, m)| Layer::new(w, v, m))
}

fn layers() -> impl Strategy<Value = Vec<Layer>> {
    prop::collection::vec(layer(), 1..4)
}

/// Mirror-symmetric cell from a random half.
fn symmetric_cell() -> impl Strategy<Value = CellSpec> {
    (prop::collection::vec(layer(), 1..3), layer()).prop_map(|(half, mid)| {
        let mut all = half.clone();
        all.push(mid);
        all.extend(half.into_iter().rev());
        CellSpec::new(all)
    })
}

fn rep_band() -> superlattice_core::kard::BandInterval {
    let cell = PhysicalCell::new(representative_cell(), lead());
    band_structure(&cell, &EnergyGrid::uniform(0.5, 300.0, 6000).unwrap()).unwrap()[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dispersion_is_consistent(e in 0.0..500.0_f64, l in layer()) {
        let c = consts();
        let k = local_wavenumber(e, &l, &c);
        let kinetic = c.hbar2_over_2m0 / l.mass_ratio * (k.re * k.re - k.im * k.im);
        prop_assert!((kinetic + l.potential - e).abs() <= 1e-12 * e.abs().max(l.potential).max(1.0));
    }

    #[test]
    fn validation_is_idempotent(ls in layers(), n in 1usize..6) {
        let s = validate_stack(&StackSpec::new(lead(), CellSpec::new(ls), n)).unwrap();
        prop_assert_eq!(validate_stack(s.spec()).unwrap(), s);
    }

    #[test]
    fn transfer_matrices_conserve_flux(ls in layers(), e in 0.5..500.0_f64) {
        let m = layers_matrix(&ls, &lead(), e, &consts()).unwrap();
        prop_assert!((m.det() - 1.0).norm() < 1e-10);
        prop_assert!(m.flux_residual() < 1e-10);
        prop_assert!(amplitudes(&m).unitarity_residual() < 1e-10);
    }

    #[test]
    fn reversed_cell_transmits_alike(ls in layers(), e in 0.5..500.0_f64) {
        let rev: Vec<Layer> = ls.iter().rev().copied().collect();
        let a = amplitudes(&layers_matrix(&ls, &lead(), e, &consts()).unwrap());
        let b = amplitudes(&layers_matrix(&rev, &lead(), e, &consts()).unwrap());
        prop_assert!((a.t - b.t).norm() < 1e-10);
    }

    #[test]
    fn composition_is_associative(a in layers(), b in layers(), c in layers(), e in 0.5..500.0_f64) {
        let m = |ls: &[Layer]| layers_matrix(ls, &lead(), e, &consts()).unwrap();
        let (ma, mb, mc) = (m(&a), m(&b), m(&c));
        let left = compose(&compose(&ma, &mb).unwrap(), &mc).unwrap();
        let right = compose(&ma, &compose(&mb, &mc).unwrap()).unwrap();
        let scale = left.m11.norm();
        prop_assert!(left.max_abs_diff(&right) <= 1e-12 * scale);
        // and equals the matrix of the concatenated layers
        let all: Vec<Layer> = a.iter().chain(&b).chain(&c).copied().collect();
        prop_assert!(left.max_abs_diff(&m(&all)) <= 1e-10 * scale);
    }

    #[test]
    fn decompose_inverts_reconstruct(phi in 0.01..(PI - 0.01), mu in 0.0..3.0_f64, chi in -3.1..PI) {
        let k = KardParams::allowed(50.0, phi, mu, chi);
        let back = decompose(&reconstruct(&k).unwrap(), None);
        prop_assert!((back.phi - phi).abs() < 1e-10);
        prop_assert!((back.mu - mu).abs() < 1e-10);
        if mu > 1e-6 {
            let d = (back.chi - chi).rem_euclid(2.0 * PI);
            prop_assert!(d.min(2.0 * PI - d) < 1e-9);
        }
    }

    #[test]
    fn trace_of_power(f in 0.001..0.999_f64, n in 1usize..=32) {
        let band = rep_band();
        let cell = PhysicalCell::new(representative_cell(), lead());
        let e = band.lower + f * band.width();
        let m = cell.matrix(e).unwrap();
        let k = decompose(&m, None);
        prop_assert!((m.pow(n).half_trace() - (n as f64 * k.phi).cos()).abs() < 1e-9);
    }

    #[test]
    fn closed_form_transmission_matches_product(f in 0.01..0.99_f64, n in 1usize..=32) {
        let band = rep_band();
        let cell = PhysicalCell::new(representative_cell(), lead());
        let e = band.lower + f * band.width();
        let s = timing_sample(&cell, n, e, band.default_step()).unwrap();
        let direct = amplitudes(&cell.matrix(e).unwrap().pow(n)).transmission();
        prop_assert!((s.t2 - direct).abs() < 1e-10);
    }

    #[test]
    fn closed_form_phase_time_matches_numeric(f in 0.02..0.98_f64, n in 1usize..=12) {
        let band = rep_band();
        let cell = PhysicalCell::new(representative_cell(), lead());
        let e = band.lower + f * band.width();
        let h = band.default_step();
        let closed = timing_sample(&cell, n, e, h).unwrap().tau_ph;
        // the oracle differentiates the N-cell product; a finer step keeps its
        // own truncation error out of the comparison near the edges
        let numeric = phase_time_oracle(&cell, n, e, 1e-4).unwrap();
        prop_assert!((closed - numeric).abs() <= 1e-4 * numeric.abs());
    }

    #[test]
    fn symmetric_stacks_have_quadrature_phases(cell in symmetric_cell(), n in 1usize..5, e in 0.5..300.0_f64) {
        let s = validate_stack(&StackSpec::new(lead(), cell, n)).unwrap();
        let amp = origin_amplitudes(&s, e, &consts()).unwrap();
        if amp.r.norm() > 1e-6 {
            prop_assert!((amp.eta - amp.delta).cos().abs() < 1e-9);
        }
    }

    #[test]
    fn flux_is_uniform(ls in layers(), n in 1usize..4, e in 0.5..300.0_f64, u in prop::collection::vec(0.0..1.0_f64, 8)) {
        let s = validate_stack(&StackSpec::new(lead(), CellSpec::new(ls), n)).unwrap();
        let state = ScatteringState::new(&s, e, &consts()).unwrap();
        let reference = state.flux(s.right() + 3.0);
        for f in u {
            let x = s.left() - 2.0 + f * (s.total_width() + 4.0);
            prop_assert!((state.flux(x) - reference).abs() <= 1e-9 * reference.abs());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn dwell_closed_form_matches_integral(
        cell in symmetric_cell(),
        n in 1usize..4,
        e in 1.0..200.0_f64,
        dl in 0.0..15.0_f64,
        dr in 0.0..15.0_f64,
    ) {
        let s = validate_stack(&StackSpec::new(lead(), cell, n)).unwrap();
        let d = dwell_time(&s, e, s.left() - dl, s.right() + dr, 1e-3, &consts()).unwrap();
        prop_assert!((d.closed_total - d.numeric_total).abs() <= (1e-4 * d.numeric_total.abs()).max(1e-3));
    }
}

#[test]
fn extrema_counts_for_many_sizes() {
    let cell = PhysicalCell::new(representative_cell(), lead());
    let band = rep_band();
    for n in 2..=12 {
        let fits = fit_all(&cell, n, &band, band.default_step()).unwrap();
        assert_eq!(fits.peaks.len(), n - 1);
        let interior = fits.valleys.iter().filter(|v| !v.edge_degraded).count();
        assert_eq!(interior, n - 2);
    }
}

/// The m-th phase-time maximum sits within Γ_m of the m-th transmission
/// peak, and the phase time there exceeds its value at the neighbouring
/// valley points.
#[test]
fn phase_time_peaks_interlace_with_transmission() {
    let cell = PhysicalCell::new(representative_cell(), lead());
    let band = rep_band();
    let h = band.default_step();
    for n in [3, 5, 9] {
        let fits = fit_all(&cell, n, &band, h).unwrap();
        for p in &fits.peaks {
            let tau = |e: f64| timing_sample(&cell, n, e, h).map(|s| s.tau_ph);
            let grid: Vec<f64> = (0..=400)
                .map(|i| p.energy - p.gamma + 2.0 * p.gamma * i as f64 / 400.0)
                .filter(|&e| band.contains(e))
                .collect();
            let vals: Vec<f64> = grid.iter().filter_map(|&e| tau(e).ok()).collect();
            let top = (1..vals.len() - 1).any(|i| vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1]);
            assert!(top, "N={n} m={}: no phase-time maximum within one width", p.m);
            let at_peak = tau(p.energy).unwrap();
            for v in &fits.valleys[p.m - 1..=p.m] {
                assert!(at_peak > tau(v.energy).unwrap(), "N={n} m={}", p.m);
            }
        }
    }
}

#[test]
fn stacks_with_arc_conserve_flux() {
    let core = representative_cell();
    let arc = CellSpec::new(vec![Layer::new(1.5, 0.0, GAAS_MASS), Layer::new(1.2, 250.0, 0.092)]);
    let s = validate_stack(&StackSpec::new(lead(), core, 5).with_arc(arc)).unwrap();
    // inside the miniband; deep in the gaps |M11| grows past 1e7 and the
    // determinant carries a round-off of order eps |M11|²
    for e in rep_band().interior_samples(400, 1e-3) {
        let m = stack_matrix(&s, e, &consts()).unwrap();
        assert!((m.det() - 1.0).norm() < 1e-10);
        assert!(m.flux_residual() < 1e-10);
    }
}
