//! Crank–Nicolson propagation of Gaussian packets through a stack and
//! extraction of the packet delay.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::{Lead, PhysConstants, ValidatedStack};
use crate::timing::{bloch_time, phase_time_oracle};
use crate::tmatrix::{amplitudes, stack_matrix, PhysicalCell, StackScatterer};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Points next to either edge that are watched for boundary contact.
const EDGE_POINTS: usize = 5;
const EDGE_LIMIT: f64 = 1e-10;
const STEP_NORM_LIMIT: f64 = 1e-6;
pub const MIN_TRANSMISSION: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub dt: f64,
    pub n_points: usize,
    pub n_steps: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, dx: f64, dt: f64, n_steps: usize) -> Result<Grid1D> {
        let mut problems = Vec::new();
        if !(x_max > x_min) {
            problems.push(format!("empty domain [{x_min}, {x_max}]"));
        }
        if !(dx > 0.0) || !(dt > 0.0) {
            problems.push(format!("dx and dt must be positive, got {dx} and {dt}"));
        }
        if !problems.is_empty() {
            return Err(Error::Invalid(problems));
        }
        let n_points = ((x_max - x_min) / dx).round() as usize + 1;
        if n_points < 3 {
            return Err(Error::Invalid(vec![format!("{n_points} grid points")]));
        }
        Ok(Grid1D {
            x_min,
            x_max: x_min + (n_points - 1) as f64 * dx,
            dx,
            dt,
            n_points,
            n_steps,
        })
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    /// Grid and step count for a packet launched from `packet.x0` that has to
    /// carry its transmitted part past `detector`, allowing `allowance` fs
    /// beyond free flight. The domain leaves room on both sides for the
    /// fastest spectral components over the whole run.
    pub fn for_run(
        stack: &ValidatedStack,
        packet: &WavePacket,
        detector: f64,
        allowance: f64,
        dx: f64,
        dt: f64,
        consts: &PhysConstants,
    ) -> Result<Grid1D> {
        let lead = stack.outside();
        let v = packet.group_velocity(consts);
        let fast = lead.velocity(packet.e0 + 5.0 * packet.energy_spread, consts);
        let duration = (detector - packet.x0) / v + allowance.max(0.0);
        let pad = 12.0 * packet.width_at(duration, consts);
        // reflected parts turn round at the left edge of the stack
        let turned = fast * duration - (stack.left() - packet.x0);
        let x_min = packet.x0.min(stack.left() - turned) - pad;
        let x_max = detector.max(packet.x0 + fast * duration) + pad;
        Grid1D::new(x_min, x_max, dx, dt, (duration / dt).ceil() as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavePacket {
    /// Centre, nm.
    pub x0: f64,
    /// Width of |Ψ|², nm.
    pub sigma_x: f64,
    /// Central energy, meV.
    pub e0: f64,
    pub mass_ratio: f64,
    /// Standard deviation of the energy spectrum, meV.
    pub energy_spread: f64,
}

impl WavePacket {
    pub fn new(
        x0: f64,
        sigma_x: f64,
        e0: f64,
        lead: &Lead,
        consts: &PhysConstants,
    ) -> Result<WavePacket> {
        if !(sigma_x > 0.0) || !(e0 > lead.potential) {
            return Err(Error::Invalid(vec![format!(
                "packet needs sigma_x > 0 and E0 above the lead edge, got {sigma_x} nm, {e0} meV"
            )]));
        }
        let k0 = lead.wavenumber(e0, consts);
        let c = consts.hbar2_over_2m0 / lead.mass_ratio;
        Ok(WavePacket {
            x0,
            sigma_x,
            e0,
            mass_ratio: lead.mass_ratio,
            energy_spread: 2.0 * c * k0 * self_sigma_k(sigma_x),
        })
    }

    fn lead(&self) -> Lead {
        Lead::new(self.mass_ratio)
    }

    pub fn k0(&self, consts: &PhysConstants) -> f64 {
        self.lead().wavenumber(self.e0, consts)
    }

    pub fn sigma_k(&self) -> f64 {
        self_sigma_k(self.sigma_x)
    }

    pub fn group_velocity(&self, consts: &PhysConstants) -> f64 {
        self.lead().velocity(self.e0, consts)
    }

    /// Free-space width of |Ψ|² after time t.
    pub fn width_at(&self, t: f64, consts: &PhysConstants) -> f64 {
        let spread =
            consts.hbar_over_m0() / self.mass_ratio * t / (2.0 * self.sigma_x * self.sigma_x);
        self.sigma_x * (1.0 + spread * spread).sqrt()
    }

    /// Normalized spectral density in energy, w(E) = |φ(k)|² dk/dE.
    pub fn spectral_weight(&self, energy: f64, consts: &PhysConstants) -> f64 {
        if energy <= 0.0 {
            return 0.0;
        }
        let lead = self.lead();
        let k = lead.wavenumber(energy, consts);
        let dk_de = self.mass_ratio / (2.0 * consts.hbar2_over_2m0 * k);
        let sk = self.sigma_k();
        let z = (k - self.k0(consts)) / sk;
        (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sk) * dk_de
    }

    /// Checks that at least 99% of the spectral weight lies in [lower, upper].
    pub fn check_band(&self, lower: f64, upper: f64, consts: &PhysConstants) -> Result<()> {
        let k0 = self.k0(consts);
        let lead = self.lead();
        let (kl, ku) = (
            lead.wavenumber(lower, consts),
            lead.wavenumber(upper, consts),
        );
        let sk = self.sigma_k();
        // 2.576 σ on each side holds 99% of a Gaussian
        if k0 - 2.576 * sk < kl || k0 + 2.576 * sk > ku {
            return Err(Error::Invalid(vec![format!(
                "packet spectrum {:.3} ± {:.3} meV leaks outside [{lower}, {upper}] meV",
                self.e0, self.energy_spread
            )]));
        }
        Ok(())
    }

    /// Samples of the packet on `grid`, normalized on the grid.
    pub fn sample(&self, grid: &Grid1D, consts: &PhysConstants) -> Vec<Complex64> {
        let k0 = self.k0(consts);
        let s2 = 4.0 * self.sigma_x * self.sigma_x;
        let mut psi: Vec<Complex64> = (0..grid.n_points)
            .map(|j| {
                let x = grid.x(j);
                let d = x - self.x0;
                Complex64::from_polar((-d * d / s2).exp(), k0 * x)
            })
            .collect();
        let norm = norm_of(&psi, grid.dx).sqrt();
        psi.iter_mut().for_each(|p| *p /= norm);
        psi
    }
}

fn self_sigma_k(sigma_x: f64) -> f64 {
    0.5 / sigma_x
}

fn edge_density(psi: &[Complex64], dx: f64) -> f64 {
    let n = psi.len();
    psi[..EDGE_POINTS]
        .iter()
        .chain(&psi[n - EDGE_POINTS..])
        .map(|p| p.norm_sqr())
        .sum::<f64>()
        * dx
}

fn norm_of(psi: &[Complex64], dx: f64) -> f64 {
    psi.iter().map(|p| p.norm_sqr()).sum::<f64>() * dx
}

/// Potential and inverse mass sampled on the staggered grid: V at nodes,
/// 1/m* on links.
#[derive(Clone, Debug)]
pub struct DiscreteProfile {
    pub potential: Vec<f64>,
    pub inv_mass_link: Vec<f64>,
}

impl DiscreteProfile {
    /// Node potentials are cell averages; link values are 1/⟨m*⟩ over the
    /// link, which keeps (ħ/m*)ψ′ continuous across an interface.
    pub fn from_stack(stack: &ValidatedStack, grid: &Grid1D) -> DiscreteProfile {
        let edges = stack.interfaces();
        let average = |a: f64, b: f64, pick: &dyn Fn((f64, f64)) -> f64| {
            let mut cuts: Vec<f64> = vec![a];
            cuts.extend(edges.iter().copied().filter(|&x| x > a && x < b));
            cuts.push(b);
            cuts.windows(2)
                .map(|w| pick(stack.profile_at(0.5 * (w[0] + w[1]))) * (w[1] - w[0]))
                .sum::<f64>()
                / (b - a)
        };
        let h = 0.5 * grid.dx;
        let potential = (0..grid.n_points)
            .map(|j| average(grid.x(j) - h, grid.x(j) + h, &|p| p.0))
            .collect();
        let inv_mass_link = (0..grid.n_points - 1)
            .map(|j| 1.0 / average(grid.x(j), grid.x(j + 1), &|p| p.1))
            .collect();
        DiscreteProfile {
            potential,
            inv_mass_link,
        }
    }

    pub fn free(lead: &Lead, grid: &Grid1D) -> DiscreteProfile {
        DiscreteProfile {
            potential: vec![lead.potential; grid.n_points],
            inv_mass_link: vec![1.0 / lead.mass_ratio; grid.n_points - 1],
        }
    }

    /// Diagonal and upper off-diagonal of H with Ψ = 0 beyond the grid.
    fn hamiltonian(&self, grid: &Grid1D, consts: &PhysConstants) -> (Vec<f64>, Vec<f64>) {
        let k = consts.hbar2_over_2m0 / (grid.dx * grid.dx);
        let n = grid.n_points;
        let a = &self.inv_mass_link;
        // the links just outside the grid carry the edge node's mass
        let diag = (0..n)
            .map(|j| {
                let left = if j > 0 { a[j - 1] } else { a[0] };
                let right = if j + 1 < n { a[j] } else { a[n - 2] };
                k * (left + right) + self.potential[j]
            })
            .collect();
        let off = a.iter().map(|&aj| -k * aj).collect();
        (diag, off)
    }
}

/// Expectation value of H, meV.
pub fn energy_expectation(
    psi: &[Complex64],
    profile: &DiscreteProfile,
    grid: &Grid1D,
    consts: &PhysConstants,
) -> f64 {
    let (diag, off) = profile.hamiltonian(grid, consts);
    let n = psi.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let mut hpsi = psi[j] * diag[j];
        if j > 0 {
            hpsi += psi[j - 1] * off[j - 1];
        }
        if j + 1 < n {
            hpsi += psi[j + 1] * off[j];
        }
        acc += psi[j].conj() * hpsi;
    }
    acc.re * grid.dx / norm_of(psi, grid.dx)
}

/// (1 + iβH)ψⁿ⁺¹ = (1 − iβH)ψⁿ with the forward sweep of the Thomas
/// algorithm computed once.
struct CrankNicolson {
    beta: f64,
    diag: Vec<f64>,
    off: Vec<f64>,
    upper: Vec<Complex64>,
    inv_pivot: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl CrankNicolson {
    fn new(profile: &DiscreteProfile, grid: &Grid1D, consts: &PhysConstants) -> Self {
        let (diag, off) = profile.hamiltonian(grid, consts);
        let beta = grid.dt / (2.0 * consts.hbar);
        let n = diag.len();
        let mut upper = vec![Complex64::new(0.0, 0.0); n];
        let mut inv_pivot = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            let d = Complex64::new(1.0, beta * diag[j]);
            let pivot = if j == 0 {
                d
            } else {
                d - I * beta * off[j - 1] * upper[j - 1]
            };
            inv_pivot[j] = 1.0 / pivot;
            if j + 1 < n {
                upper[j] = I * beta * off[j] * inv_pivot[j];
            }
        }
        CrankNicolson {
            beta,
            diag,
            off,
            upper,
            inv_pivot,
            scratch: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    fn step(&mut self, psi: &mut [Complex64]) {
        let n = psi.len();
        let b = self.beta;
        let rhs = &mut self.scratch;
        for j in 0..n {
            let mut hpsi = psi[j] * self.diag[j];
            if j > 0 {
                hpsi += psi[j - 1] * self.off[j - 1];
            }
            if j + 1 < n {
                hpsi += psi[j + 1] * self.off[j];
            }
            rhs[j] = psi[j] - I * b * hpsi;
        }
        for j in 0..n {
            let carried = if j > 0 {
                I * b * self.off[j - 1] * rhs[j - 1]
            } else {
                Complex64::new(0.0, 0.0)
            };
            rhs[j] = (rhs[j] - carried) * self.inv_pivot[j];
        }
        psi[n - 1] = rhs[n - 1];
        for j in (0..n - 1).rev() {
            psi[j] = rhs[j] - self.upper[j] * psi[j + 1];
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub time: f64,
    /// ∫_{x > split} |Ψ|² dx.
    pub transmitted: f64,
    /// Centroid of the part beyond the split point, nm.
    pub centroid: f64,
    /// ∫_{x > detector} |Ψ|² dx.
    pub beyond_detector: f64,
    pub norm: f64,
}

#[derive(Clone, Debug)]
pub struct TdseRun {
    pub grid: Grid1D,
    pub split: f64,
    pub detector: f64,
    pub series: Vec<SeriesPoint>,
    pub psi: Vec<Complex64>,
    pub norm_drift: f64,
    pub energy_drift: f64,
}

impl TdseRun {
    pub fn final_transmitted(&self) -> f64 {
        self.series.last().map_or(0.0, |p| p.transmitted)
    }
}

/// Where the transmitted part starts and where its arrival is timed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub split: f64,
    pub detector: f64,
}

fn record(psi: &[Complex64], grid: &Grid1D, det: &Detection, time: f64) -> SeriesPoint {
    let mut total = 0.0;
    let mut beyond = 0.0;
    let mut moment = 0.0;
    let mut past = 0.0;
    for (j, p) in psi.iter().enumerate() {
        let x = grid.x(j);
        let d = p.norm_sqr();
        total += d;
        if x > det.split {
            beyond += d;
            moment += x * d;
        }
        if x > det.detector {
            past += d;
        }
    }
    SeriesPoint {
        time,
        transmitted: beyond * grid.dx,
        centroid: if beyond > 0.0 {
            moment / beyond
        } else {
            det.split
        },
        beyond_detector: past * grid.dx,
        norm: total * grid.dx,
    }
}

/// Propagates `psi` for `grid.n_steps` steps, recording the transmitted
/// part every `record_every` steps. With `watch_edges` the run stops once
/// the state touches either end of the grid.
pub fn evolve_state(
    profile: &DiscreteProfile,
    grid: &Grid1D,
    mut psi: Vec<Complex64>,
    det: Detection,
    record_every: usize,
    watch_edges: bool,
    consts: &PhysConstants,
) -> Result<TdseRun> {
    if psi.len() != grid.n_points {
        return Err(Error::Invalid(vec![format!(
            "state has {} samples for {} grid points",
            psi.len(),
            grid.n_points
        )]));
    }
    let every = record_every.max(1);
    let mut cn = CrankNicolson::new(profile, grid, consts);
    let n0 = norm_of(&psi, grid.dx);
    let e0 = energy_expectation(&psi, profile, grid, consts);
    let mut series = vec![record(&psi, grid, &det, 0.0)];
    let mut prev = n0;
    for step in 1..=grid.n_steps {
        cn.step(&mut psi);
        let norm = norm_of(&psi, grid.dx);
        let change = (norm - prev).abs() / n0;
        if !(change <= STEP_NORM_LIMIT) {
            return Err(Error::Unstable { step, change });
        }
        prev = norm;
        if watch_edges && edge_density(&psi, grid.dx) > EDGE_LIMIT * n0 {
            return Err(Error::BoundaryReached(step as f64 * grid.dt));
        }
        if step % every == 0 || step == grid.n_steps {
            series.push(record(&psi, grid, &det, step as f64 * grid.dt));
        }
    }
    let energy = energy_expectation(&psi, profile, grid, consts);
    Ok(TdseRun {
        grid: *grid,
        split: det.split,
        detector: det.detector,
        norm_drift: (norm_of(&psi, grid.dx) - n0).abs() / n0,
        energy_drift: ((energy - e0) / e0).abs(),
        series,
        psi,
    })
}

/// Launches `packet` at the stack.
pub fn evolve(
    stack: &ValidatedStack,
    grid: &Grid1D,
    packet: &WavePacket,
    det: Detection,
    consts: &PhysConstants,
) -> Result<TdseRun> {
    check_layout(stack, grid, packet, &det)?;
    let profile = DiscreteProfile::from_stack(stack, grid);
    evolve_state(
        &profile,
        grid,
        packet.sample(grid, consts),
        det,
        1,
        true,
        consts,
    )
}

/// Same packet and grid with the stack replaced by lead material.
pub fn evolve_free(
    stack: &ValidatedStack,
    grid: &Grid1D,
    packet: &WavePacket,
    det: Detection,
    consts: &PhysConstants,
) -> Result<TdseRun> {
    check_layout(stack, grid, packet, &det)?;
    let profile = DiscreteProfile::free(&stack.outside(), grid);
    evolve_state(
        &profile,
        grid,
        packet.sample(grid, consts),
        det,
        1,
        true,
        consts,
    )
}

fn check_layout(
    stack: &ValidatedStack,
    grid: &Grid1D,
    packet: &WavePacket,
    det: &Detection,
) -> Result<()> {
    let margin = 10.0 * packet.sigma_x;
    let mut problems = Vec::new();
    if packet.x0 - margin < grid.x_min {
        problems.push(format!(
            "launch margin: x0 - 10σ = {} below x_min = {}",
            packet.x0 - margin,
            grid.x_min
        ));
    }
    if packet.x0 + margin > stack.left() {
        problems.push(format!(
            "packet starts within 10σ of the stack edge {}",
            stack.left()
        ));
    }
    if det.split < stack.right() || det.detector < det.split {
        problems.push("detection must lie to the right of the stack".to_string());
    }
    if det.detector + margin > grid.x_max {
        problems.push(format!(
            "detection margin: detector + 10σ exceeds x_max = {}",
            grid.x_max
        ));
    }
    if packet.mass_ratio != stack.outside().mass_ratio {
        problems.push("packet mass differs from the lead mass".to_string());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(problems))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayResult {
    pub arrival_detected: f64,
    pub arrival_free: f64,
    pub delay: f64,
    pub transmitted_fraction: f64,
    pub bloch_time_prediction: f64,
}

/// First time the transmitted centroid reaches `detector`, interpolated
/// linearly between records.
pub fn centroid_arrival(series: &[SeriesPoint], detector: f64) -> Option<f64> {
    series.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if b.transmitted > MIN_TRANSMISSION * 1e-2
            && a.centroid < detector
            && b.centroid >= detector
        {
            let f = (detector - a.centroid) / (b.centroid - a.centroid);
            Some(a.time + f * (b.time - a.time))
        } else {
            None
        }
    })
}

pub fn packet_delay(
    run: &TdseRun,
    free: &TdseRun,
    bloch_time_prediction: f64,
) -> Result<DelayResult> {
    let fraction = run.final_transmitted().clamp(0.0, 1.0);
    if fraction < MIN_TRANSMISSION {
        return Err(Error::NoTransmission(fraction));
    }
    let arrival = centroid_arrival(&run.series, run.detector)
        .ok_or_else(|| Error::Numeric("transmitted centroid never reached the detector".into()))?;
    let arrival_free = centroid_arrival(&free.series, free.detector)
        .ok_or_else(|| Error::Numeric("free packet never reached the detector".into()))?;
    Ok(DelayResult {
        arrival_detected: arrival,
        arrival_free,
        delay: arrival - arrival_free,
        transmitted_fraction: fraction,
        bloch_time_prediction,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralAverage {
    pub value: f64,
    /// Share of the packet spectrum that falls outside the sampled energies.
    pub outside_weight: f64,
}

/// ∫ w(E) f(E) dE over the sampled energies with the packet's spectral
/// density, normalized on the samples.
pub fn spectral_average(
    energies: &[f64],
    values: &[f64],
    packet: &WavePacket,
    consts: &PhysConstants,
) -> Result<SpectralAverage> {
    if energies.len() != values.len() || energies.len() < 2 {
        return Err(Error::Invalid(vec![format!(
            "spectral average needs matching samples, got {} energies and {} values",
            energies.len(),
            values.len()
        )]));
    }
    if energies.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Invalid(vec!["energies must increase".into()]));
    }
    let w: Vec<f64> = energies
        .iter()
        .map(|&e| packet.spectral_weight(e, consts))
        .collect();
    let mut norm = 0.0;
    let mut acc = 0.0;
    for j in 0..energies.len() - 1 {
        let h = 0.5 * (energies[j + 1] - energies[j]);
        norm += h * (w[j] + w[j + 1]);
        acc += h * (w[j] * values[j] + w[j + 1] * values[j + 1]);
    }
    if !(norm > 0.0) {
        return Err(Error::Numeric(
            "packet spectrum misses the sampled energies".into(),
        ));
    }
    let outside = (1.0 - norm).max(0.0);
    if outside > 0.01 {
        log::warn!(
            "{:.1}% of the packet spectrum lies outside the sampled energies",
            100.0 * outside
        );
    }
    Ok(SpectralAverage {
        value: acc / norm,
        outside_weight: outside,
    })
}

/// Energies spanning ±`width` spectral standard deviations about E0.
pub fn packet_energies(packet: &WavePacket, width: f64, count: usize) -> Vec<f64> {
    let span = width * packet.energy_spread;
    let count = count.max(2);
    (0..count)
        .map(|i| packet.e0 - span + 2.0 * span * i as f64 / (count - 1) as f64)
        .collect()
}

/// Spectral average of `f` over the packet, skipping energies where `f`
/// fails (outside a band, say); the skipped weight shows up in
/// `outside_weight`.
pub fn spectral_average_of<F>(
    packet: &WavePacket,
    count: usize,
    f: F,
    consts: &PhysConstants,
) -> Result<SpectralAverage>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let samples: Vec<(f64, f64)> = packet_energies(packet, 5.0, count)
        .par_iter()
        .filter_map(|&e| f(e).ok().map(|v| (e, v)))
        .collect();
    let (energies, values): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    spectral_average(&energies, &values, packet, consts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    /// Spectral average of N τ_Bl for the core cell, fs.
    pub bloch_total: f64,
    /// Transmission-weighted spectral average of the stack phase time, fs.
    pub phase_time: f64,
    /// `phase_time` minus the free flight time over the stack, fs.
    pub phase_time_delay: f64,
    /// Stack width over the lead group velocity at E0, fs.
    pub free_traversal: f64,
    /// Spectral average of |t|².
    pub transmission: f64,
}

/// Stationary-state expectations for a packet sent at `stack`.
pub fn predictions(
    stack: &ValidatedStack,
    packet: &WavePacket,
    h: f64,
    consts: &PhysConstants,
) -> Result<Predictions> {
    const SAMPLES: usize = 801;
    let cell = PhysicalCell {
        cell: stack.spec().core.clone(),
        outside: stack.outside(),
        consts: *consts,
    };
    let n = stack.spec().replicas as f64;
    let scatterer = StackScatterer {
        stack: stack.clone(),
        consts: *consts,
    };
    let bloch = spectral_average_of(
        packet,
        SAMPLES,
        |e| Ok(n * bloch_time(&cell, e, h)?),
        consts,
    )?;
    let t2 = |e: f64| Ok(amplitudes(&stack_matrix(stack, e, consts)?).transmission());
    let weighted = spectral_average_of(
        packet,
        SAMPLES,
        |e| Ok(t2(e)? * phase_time_oracle(&scatterer, 1, e, h)?),
        consts,
    )?;
    let transmission = spectral_average_of(packet, SAMPLES, t2, consts)?;
    let phase_time = weighted.value / transmission.value;
    let free_traversal = stack.total_width() / packet.group_velocity(consts);
    Ok(Predictions {
        bloch_total: bloch.value,
        phase_time,
        phase_time_delay: phase_time - free_traversal,
        free_traversal,
        transmission: transmission.value,
    })
}
