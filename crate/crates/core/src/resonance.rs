//! Transmission extrema of N-cell arrays and the local resonance shapes
//! fitted at them: Breit-Wigner/Fano at the peaks, the valley form at the
//! minima, and a piecewise approximation built from both.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kard::BandInterval;
use crate::medium::PhysConstants;
use crate::numeric::bisect;
use crate::timing::ln_cosh;
use crate::tmatrix::UnitCell;

/// Position of the Bloch phase inside `band`, running from 0 at the lower
/// edge to π at the upper edge.
pub fn band_phase<C: UnitCell + ?Sized>(
    model: &C,
    band: &BandInterval,
    energy: f64,
) -> Result<f64> {
    let c = model.half_trace(energy)?.clamp(-1.0, 1.0);
    let lower_sign = model.half_trace(band.lower)?.signum();
    Ok((lower_sign * c).acos())
}

/// Energy inside `band` at which the band phase equals `target` ∈ (0, π).
pub fn energy_at_band_phase<C: UnitCell + ?Sized>(
    model: &C,
    band: &BandInterval,
    target: f64,
) -> Result<f64> {
    bisect(
        |e| Ok(band_phase(model, band, e)? - target),
        band.lower,
        band.upper,
        1e-10,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrema {
    /// Energies with Nφ = mπ, m = 1..N-1 (band-local φ).
    pub peaks: Vec<f64>,
    /// Energies with Nφ = (p + 1/2)π, p = 0..N-1.
    pub valleys: Vec<f64>,
}

pub fn locate_extrema<C: UnitCell + ?Sized>(
    model: &C,
    n: usize,
    band: &BandInterval,
) -> Result<Extrema> {
    if n == 0 {
        return Err(Error::Invalid(vec!["cell count must be at least 1".into()]));
    }
    let nf = n as f64;
    let peaks = (1..n)
        .map(|m| energy_at_band_phase(model, band, m as f64 * PI / nf))
        .collect::<Result<Vec<_>>>()?;
    let valleys = (0..n)
        .map(|p| energy_at_band_phase(model, band, (p as f64 + 0.5) * PI / nf))
        .collect::<Result<Vec<_>>>()?;
    Ok(Extrema { peaks, valleys })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub m: usize,
    pub energy: f64,
    /// Full width at half maximum of the Breit-Wigner line, meV.
    pub gamma: f64,
    /// Fano asymmetry.
    pub b: f64,
    /// N τ_Bl cosh μ at the peak, fs.
    pub tau_peak: f64,
}

impl PeakFit {
    fn reduced(&self, energy: f64) -> f64 {
        (energy - self.energy) / (0.5 * self.gamma)
    }

    /// Breit-Wigner transmission.
    pub fn transmission(&self, energy: f64) -> f64 {
        let x = self.reduced(energy);
        1.0 / (1.0 + x * x)
    }

    /// Fano-shaped phase time.
    pub fn phase_time(&self, energy: f64) -> f64 {
        let x = self.reduced(energy);
        self.tau_peak * (1.0 + 2.0 * self.b * x) / (1.0 + x * x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValleyFit {
    pub p: usize,
    pub energy: f64,
    pub gamma: f64,
    pub c: f64,
    pub d: f64,
    /// N τ_Bl / cosh μ at the valley, fs.
    pub tau_valley: f64,
    /// Outermost valleys next to the band edges, where μ is large and
    /// varies quickly.
    pub edge_degraded: bool,
    /// ln cosh μ at the valley.
    pub ln_cosh_mu: f64,
}

impl ValleyFit {
    fn reduced(&self, energy: f64) -> f64 {
        (energy - self.energy) / (0.5 * self.gamma)
    }

    pub fn phase_time(&self, energy: f64) -> f64 {
        let y = self.reduced(energy);
        let denom = 1.0 + 2.0 * self.d * y + (self.d * self.d - 1.0) * y * y;
        self.tau_valley * (1.0 + self.c * y) / denom
    }

    /// Expansion of |t_N|² about the minimum.
    pub fn transmission(&self, energy: f64) -> f64 {
        let y = self.reduced(energy);
        let lift = 1.0 + self.d * y;
        (-2.0 * self.ln_cosh_mu).exp() / (lift * lift * (1.0 - y * y))
    }
}

fn hbar() -> f64 {
    PhysConstants::default().hbar
}

pub fn fit_peak_at<C: UnitCell + ?Sized>(
    model: &C,
    n: usize,
    m: usize,
    energy: f64,
    h: f64,
) -> Result<PeakFit> {
    let s = model.derivatives(energy, h)?;
    let nf = n as f64;
    let (mu, phi_p) = (s.params.mu, s.derivs.phi_p);
    let gamma = 2.0 / (nf * mu.sinh() * phi_p);
    let two_b =
        (2.0 * s.derivs.mu_p + s.derivs.phi_pp / (phi_p * mu.tanh())) / (nf * phi_p * mu.cosh());
    Ok(PeakFit {
        m,
        energy,
        gamma,
        b: 0.5 * two_b,
        tau_peak: nf * hbar() * phi_p * mu.cosh(),
    })
}

/// Resonance parameters of the m-th peak (m = 1..N-1).
pub fn fit_peak<C: UnitCell + ?Sized>(
    model: &C,
    n: usize,
    m: usize,
    band: &BandInterval,
    h: f64,
) -> Result<PeakFit> {
    if m == 0 || m >= n {
        return Err(Error::Invalid(vec![format!(
            "peak index {m} outside 1..{}",
            n.saturating_sub(1)
        )]));
    }
    let e = energy_at_band_phase(model, band, m as f64 * PI / n as f64)?;
    fit_peak_at(model, n, m, e, h)
}

pub fn fit_valley_at<C: UnitCell + ?Sized>(
    model: &C,
    n: usize,
    p: usize,
    energy: f64,
    h: f64,
) -> Result<ValleyFit> {
    let s = model.derivatives(energy, h)?;
    let nf = n as f64;
    let (mu, phi_p) = (s.params.mu, s.derivs.phi_p);
    let gamma = 2.0 / (nf * phi_p * mu.tanh());
    let lc = ln_cosh(mu);
    Ok(ValleyFit {
        p,
        energy,
        gamma,
        c: s.derivs.phi_pp / phi_p * 0.5 * gamma,
        d: s.derivs.mu_p / (nf * phi_p),
        tau_valley: ((nf * hbar() * phi_p).ln() - lc).exp(),
        edge_degraded: p == 0 || p + 1 == n,
        ln_cosh_mu: lc,
    })
}

/// Valley parameters of the p-th minimum (p = 0..N-1).
pub fn fit_valley<C: UnitCell + ?Sized>(
    model: &C,
    n: usize,
    p: usize,
    band: &BandInterval,
    h: f64,
) -> Result<ValleyFit> {
    if p >= n {
        return Err(Error::Invalid(vec![format!(
            "valley index {p} outside 0..{}",
            n - 1
        )]));
    }
    let e = energy_at_band_phase(model, band, (p as f64 + 0.5) * PI / n as f64)?;
    fit_valley_at(model, n, p, e, h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFits {
    pub cells: usize,
    pub peaks: Vec<PeakFit>,
    pub valleys: Vec<ValleyFit>,
}

/// Fits at every extremum of the band.
pub fn fit_all<C: UnitCell + ?Sized>(
    model: &C,
    n: usize,
    band: &BandInterval,
    h: f64,
) -> Result<ResonanceFits> {
    let ex = locate_extrema(model, n, band)?;
    let peaks = ex
        .peaks
        .par_iter()
        .enumerate()
        .map(|(i, &e)| fit_peak_at(model, n, i + 1, e, h))
        .collect::<Result<Vec<_>>>()?;
    let valleys = ex
        .valleys
        .par_iter()
        .enumerate()
        .map(|(p, &e)| fit_valley_at(model, n, p, e, h))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResonanceFits {
        cells: n,
        peaks,
        valleys,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Peak(usize),
    Valley(usize),
    Connector,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxSample {
    pub energy: f64,
    pub t_approx: f64,
    pub tau_approx: f64,
    pub t_segment: Segment,
    pub tau_segment: Segment,
}

#[derive(Clone, Copy)]
enum Piece<'a> {
    Peak(&'a PeakFit),
    Valley(&'a ValleyFit),
}

impl Piece<'_> {
    fn window(&self) -> (f64, f64) {
        match self {
            Piece::Peak(p) => (p.energy - p.gamma, p.energy + p.gamma),
            Piece::Valley(v) => (v.energy - 0.5 * v.gamma, v.energy + 0.5 * v.gamma),
        }
    }

    fn segment(&self) -> Segment {
        match self {
            Piece::Peak(p) => Segment::Peak(p.m),
            Piece::Valley(v) => Segment::Valley(v.p),
        }
    }

    fn transmission(&self, e: f64) -> f64 {
        match self {
            Piece::Peak(p) => p.transmission(e),
            Piece::Valley(v) => v.transmission(e),
        }
    }

    fn phase_time(&self, e: f64) -> f64 {
        match self {
            Piece::Peak(p) => p.phase_time(e),
            Piece::Valley(v) => v.phase_time(e),
        }
    }
}

/// Evaluates `f` on the first piece whose window holds `e`; elsewhere holds
/// the value at the nearest `bridges` window edge to the left (right if
/// none).
fn piecewise(
    pieces: &[Piece<'_>],
    bridges: &[Piece<'_>],
    e: f64,
    f: impl Fn(&Piece<'_>, f64) -> f64,
) -> (f64, Segment) {
    if let Some(p) = pieces.iter().find(|p| {
        let (lo, hi) = p.window();
        e >= lo && e <= hi
    }) {
        return (f(p, e), p.segment());
    }
    let left = bridges
        .iter()
        .filter(|p| p.window().1 < e)
        .max_by(|a, b| a.window().1.total_cmp(&b.window().1));
    if let Some(p) = left {
        return (f(p, p.window().1), Segment::Connector);
    }
    let right = bridges
        .iter()
        .filter(|p| p.window().0 > e)
        .min_by(|a, b| a.window().0.total_cmp(&b.window().0));
    match right {
        Some(p) => (f(p, p.window().0), Segment::Connector),
        None => (f64::NAN, Segment::Connector),
    }
}

/// Piecewise approximations of |t_N|² and τ_ph: resonance shapes within one
/// width Γ_m of each peak, the valley form within Γ_p/2 of each minimum
/// (phase time only), and horizontal connectors between the peak shapes
/// elsewhere.
pub fn approx_curves(fits: &ResonanceFits, energies: &[f64]) -> Vec<ApproxSample> {
    let peaks: Vec<Piece<'_>> = fits.peaks.iter().map(Piece::Peak).collect();
    let mut all = peaks.clone();
    all.extend(fits.valleys.iter().map(Piece::Valley));
    energies
        .iter()
        .map(|&e| {
            let (t_approx, t_segment) = piecewise(&peaks, &peaks, e, |p, x| p.transmission(x));
            let (tau_approx, tau_segment) = piecewise(&all, &peaks, e, |p, x| p.phase_time(x));
            ApproxSample {
                energy: e,
                t_approx,
                tau_approx,
                t_segment,
                tau_segment,
            }
        })
        .collect()
}

/// Uniform grid over the band interior with at least `per_width` samples
/// per Γ_m inside ±2Γ_m of every peak.
pub fn refined_energies(
    fits: &ResonanceFits,
    band: &BandInterval,
    base: usize,
    margin: f64,
    per_width: usize,
) -> Vec<f64> {
    let mut out = band.interior_samples(base.max(2), margin);
    let (lo, hi) = (out[0], out[out.len() - 1]);
    for p in &fits.peaks {
        let count = 4 * per_width.max(1);
        for i in 0..=count {
            let e = p.energy - 2.0 * p.gamma + 4.0 * p.gamma * i as f64 / count as f64;
            if e > lo && e < hi {
                out.push(e);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kard::band_structure;
    use crate::medium::{representative_cell, EnergyGrid, Lead};
    use crate::playmodel::PlayModel;
    use crate::timing::phase_time;
    use crate::tmatrix::{amplitudes, PhysicalCell};

    fn play() -> (PlayModel, BandInterval) {
        let m = PlayModel::default();
        (m, m.band())
    }

    #[test]
    fn play_nine_cell_extrema() {
        let (m, band) = play();
        let ex = locate_extrema(&m, 9, &band).unwrap();
        assert_eq!(ex.peaks.len(), 8);
        assert_eq!(ex.valleys.len(), 9);
        // E₁ = 62.5 - cos(π/9)/0.08
        assert!((ex.peaks[0] - (62.5 - (PI / 9.0).cos() / 0.08)).abs() < 1e-8);
        assert!((ex.peaks[0] - 50.754).abs() < 1e-3);
        assert!(ex.peaks.windows(2).all(|w| w[1] > w[0]));
        assert!((ex.valleys[4] - 62.5).abs() < 1e-8);
    }

    #[test]
    fn two_cells_peak_at_band_centre() {
        let (m, band) = play();
        let ex = locate_extrema(&m, 2, &band).unwrap();
        assert_eq!(ex.peaks.len(), 1);
        assert!((ex.peaks[0] - 62.5).abs() < 1e-8);
    }

    #[test]
    fn peak_and_valley_counts_for_many_sizes() {
        let (m, band) = play();
        for n in 2..=12 {
            let fits = fit_all(&m, n, &band, 1e-3).unwrap();
            assert_eq!(fits.peaks.len(), n - 1);
            let interior = fits.valleys.iter().filter(|v| !v.edge_degraded).count();
            assert_eq!(interior, n - 2, "N = {n}");
            assert!(fits.peaks.iter().all(|p| p.gamma > 0.0));
        }
    }

    #[test]
    fn representative_five_cells_have_four_peaks() {
        let cell = PhysicalCell::new(representative_cell(), Lead::new(0.067));
        let grid = EnergyGrid::uniform(1.0, 150.0, 1500).unwrap();
        let band = band_structure(&cell, &grid).unwrap()[0];
        let ex = locate_extrema(&cell, 5, &band).unwrap();
        assert_eq!(ex.peaks.len(), 4);
        for &e in &ex.peaks {
            let t2 = amplitudes(&cell.matrix(e).unwrap().pow(5)).transmission();
            assert!((t2 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn band_phase_continues_in_second_band() {
        let cell = PhysicalCell::new(representative_cell(), Lead::new(0.067));
        let grid = EnergyGrid::uniform(1.0, 300.0, 3000).unwrap();
        let band = band_structure(&cell, &grid).unwrap()[1];
        let lo = band_phase(&cell, &band, band.lower + 1e-3 * band.width()).unwrap();
        let hi = band_phase(&cell, &band, band.upper - 1e-3 * band.width()).unwrap();
        assert!(lo < 0.2 && hi > PI - 0.2);
        let ex = locate_extrema(&cell, 4, &band).unwrap();
        assert_eq!(ex.peaks.len(), 3);
    }

    #[test]
    fn breit_wigner_half_points() {
        let (m, band) = play();
        let fit = fit_peak(&m, 9, 3, &band, 1e-3).unwrap();
        assert_eq!(fit.transmission(fit.energy), 1.0);
        assert!((fit.transmission(fit.energy + 0.5 * fit.gamma) - 0.5).abs() < 1e-12);
        assert!((fit.transmission(fit.energy - 0.5 * fit.gamma) - 0.5).abs() < 1e-12);
        assert_eq!(fit.phase_time(fit.energy), fit.tau_peak);
    }

    #[test]
    fn first_play_peak_width() {
        let (m, band) = play();
        let fit = fit_peak(&m, 9, 1, &band, 1e-3).unwrap();
        let k = m.kard(fit.energy).unwrap();
        let expected = 2.0 * (PI / 9.0).sin() / (9.0 * 0.08 * k.mu.sinh());
        assert!((fit.gamma - expected).abs() < 1e-8 * expected);
    }

    #[test]
    fn centre_fits_of_play_model() {
        // φ″ vanishes at the band centre but μ′ does not
        let (m, band) = play();
        let fits = fit_all(&m, 9, &band, 1e-3).unwrap();
        let centre = &fits.valleys[4];
        assert!((centre.energy - 62.5).abs() < 1e-8);
        assert!(centre.c.abs() < 1e-8);
        let mu = m.kard(62.5).unwrap().mu;
        let expected_d = -mu.tanh() / 125.0 / (9.0 * 0.08);
        assert!((centre.d - expected_d).abs() < 1e-8);
        let n = 10;
        let fits = fit_all(&m, n, &band, 1e-3).unwrap();
        let mid = &fits.peaks[n / 2 - 1];
        assert!((mid.energy - 62.5).abs() < 1e-8);
        let expected_b = -mu.tanh() / 125.0 / (n as f64 * 0.08 * mu.cosh());
        assert!((mid.b - expected_b).abs() < 1e-8);
    }

    #[test]
    fn valley_fits_are_wider_and_order_one_over_n() {
        let (m, band) = play();
        let n = 9;
        let fits = fit_all(&m, n, &band, 1e-3).unwrap();
        for v in fits.valleys.iter().filter(|v| !v.edge_degraded) {
            let below = fits.peaks[v.p - 1].gamma;
            let above = fits.peaks[v.p].gamma;
            assert!(v.gamma > below && v.gamma > above);
            assert!(v.c.abs() < 10.0 / n as f64 && v.d.abs() < 10.0 / n as f64);
            let tau = phase_time(&m, n, v.energy, 1e-3).unwrap();
            assert!((v.tau_valley - tau).abs() < 1e-8 * tau);
        }
    }

    #[test]
    fn approximation_hits_extrema_exactly() {
        let (m, band) = play();
        let fits = fit_all(&m, 9, &band, 1e-3).unwrap();
        let energies: Vec<f64> = fits.peaks.iter().map(|p| p.energy).collect();
        for (s, p) in approx_curves(&fits, &energies).iter().zip(&fits.peaks) {
            assert_eq!(s.t_approx, 1.0);
            assert_eq!(s.tau_approx, p.tau_peak);
            assert_eq!(s.tau_segment, Segment::Peak(p.m));
        }
    }

    #[test]
    fn connectors_are_flat() {
        let (m, band) = play();
        let fits = fit_all(&m, 9, &band, 1e-3).unwrap();
        let (p1, p2) = (&fits.peaks[3], &fits.peaks[4]);
        let gap: Vec<f64> = (1..20)
            .map(|i| {
                p1.energy
                    + p1.gamma
                    + (p2.energy - p2.gamma - p1.energy - p1.gamma) * i as f64 / 20.0
            })
            .collect();
        let samples = approx_curves(&fits, &gap);
        for s in &samples {
            assert_eq!(s.t_segment, Segment::Connector);
            assert!((s.t_approx - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn refined_grid_resolves_peaks() {
        let (m, band) = play();
        let fits = fit_all(&m, 9, &band, 1e-3).unwrap();
        let grid = refined_energies(&fits, &band, 200, 0.002, 40);
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
        for p in &fits.peaks {
            let inside = grid
                .iter()
                .filter(|&&e| (e - p.energy).abs() <= 0.5 * p.gamma)
                .count();
            assert!(inside >= 40, "m = {}: {inside}", p.m);
        }
    }

    #[test]
    fn bad_indices_are_rejected() {
        let (m, band) = play();
        assert!(fit_peak(&m, 5, 0, &band, 1e-3).is_err());
        assert!(fit_peak(&m, 5, 5, &band, 1e-3).is_err());
        assert!(fit_valley(&m, 5, 5, &band, 1e-3).is_err());
    }
}
