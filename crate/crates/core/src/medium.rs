//! Units, constants and validated descriptions of layers, cells and stacks.
//!
//! Energies are in meV, lengths in nm, times in fs and masses are ratios to
//! the free electron mass. The energy zero is the conduction-band bottom of
//! the leads.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysConstants {
    /// ħ in meV·fs.
    pub hbar: f64,
    /// ħ²/(2 m_e) in meV·nm².
    pub hbar2_over_2m0: f64,
}

impl Default for PhysConstants {
    fn default() -> Self {
        PhysConstants {
            hbar: 658.2119569,
            hbar2_over_2m0: 38.0998,
        }
    }
}

impl PhysConstants {
    /// k² = 2m*(E - V)/ħ² in nm⁻², signed.
    pub fn wavenumber_sq(&self, energy: f64, potential: f64, mass_ratio: f64) -> f64 {
        mass_ratio * (energy - potential) / self.hbar2_over_2m0
    }

    /// ħ/m_e in nm²/fs.
    pub fn hbar_over_m0(&self) -> f64 {
        2.0 * self.hbar2_over_2m0 / self.hbar
    }

    /// Group velocity ħk/m* in nm/fs.
    pub fn velocity(&self, k: f64, mass_ratio: f64) -> f64 {
        self.hbar_over_m0() * k / mass_ratio
    }
}

/// A layer of constant band offset and effective mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(rename = "width_nm")]
    pub width: f64,
    #[serde(rename = "V_meV")]
    pub potential: f64,
    pub mass_ratio: f64,
}

impl Layer {
    pub fn new(width: f64, potential: f64, mass_ratio: f64) -> Self {
        Layer {
            width,
            potential,
            mass_ratio,
        }
    }

    fn problems(&self, label: &str, out: &mut Vec<String>) {
        if !(self.width > 0.0) || !self.width.is_finite() {
            out.push(format!("{label}: nonpositive width {}", self.width));
        }
        if !(self.mass_ratio > 0.0) || !self.mass_ratio.is_finite() {
            out.push(format!(
                "{label}: nonpositive mass ratio {}",
                self.mass_ratio
            ));
        }
        if !self.potential.is_finite() {
            out.push(format!("{label}: potential is not finite"));
        }
    }
}

/// Semi-infinite lead material on both sides of a stack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lead {
    #[serde(rename = "V_meV", default)]
    pub potential: f64,
    pub mass_ratio: f64,
}

impl Lead {
    pub fn new(mass_ratio: f64) -> Self {
        Lead {
            potential: 0.0,
            mass_ratio,
        }
    }

    /// Lead wavenumber; only meaningful for E > 0.
    pub fn wavenumber(&self, energy: f64, consts: &PhysConstants) -> f64 {
        consts
            .wavenumber_sq(energy, self.potential, self.mass_ratio)
            .max(0.0)
            .sqrt()
    }

    pub fn velocity(&self, energy: f64, consts: &PhysConstants) -> f64 {
        consts.velocity(self.wavenumber(energy, consts), self.mass_ratio)
    }

    /// A layer of lead material, i.e. free propagation.
    pub fn as_layer(&self, width: f64) -> Layer {
        Layer::new(width, self.potential, self.mass_ratio)
    }

    fn problems(&self, out: &mut Vec<String>) {
        if self.potential != 0.0 {
            out.push(format!(
                "outside: lead potential must be the energy zero, got {} meV",
                self.potential
            ));
        }
        if !(self.mass_ratio > 0.0) || !self.mass_ratio.is_finite() {
            out.push(format!(
                "outside: nonpositive mass ratio {}",
                self.mass_ratio
            ));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub symmetric: bool,
}

impl CellSpec {
    pub fn new(layers: Vec<Layer>) -> Self {
        let symmetric = is_mirror_symmetric(&layers);
        CellSpec { layers, symmetric }
    }

    pub fn width(&self) -> f64 {
        self.layers.iter().map(|l| l.width).sum()
    }

    /// The mirror image of the cell.
    pub fn reversed(&self) -> CellSpec {
        CellSpec {
            layers: self.layers.iter().rev().copied().collect(),
            symmetric: self.symmetric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        self.problems("cell", &mut problems);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(problems))
        }
    }

    fn problems(&self, label: &str, out: &mut Vec<String>) {
        if self.layers.is_empty() {
            out.push(format!("{label}: no layers"));
            return;
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.problems(&format!("{label} layer {i}"), out);
        }
        if self.symmetric && !is_mirror_symmetric(&self.layers) {
            out.push(format!("{label}: symmetry flag contradicts layers"));
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

fn is_mirror_symmetric(layers: &[Layer]) -> bool {
    layers.iter().zip(layers.iter().rev()).all(|(a, b)| {
        close(a.width, b.width)
            && close(a.potential, b.potential)
            && close(a.mass_ratio, b.mass_ratio)
    })
}

/// A finite superlattice: `replicas` copies of `core`, optionally terminated
/// by anti-reflection cells, between identical leads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackSpec {
    pub outside: Lead,
    pub core: CellSpec,
    pub replicas: usize,
    #[serde(default)]
    pub left_arc: Option<CellSpec>,
    #[serde(default)]
    pub right_arc: Option<CellSpec>,
}

impl StackSpec {
    pub fn new(outside: Lead, core: CellSpec, replicas: usize) -> Self {
        StackSpec {
            outside,
            core,
            replicas,
            left_arc: None,
            right_arc: None,
        }
    }

    /// Adds `arc` on the left and its mirror image on the right.
    pub fn with_arc(mut self, arc: CellSpec) -> Self {
        self.right_arc = Some(arc.reversed());
        self.left_arc = Some(arc);
        self
    }

    pub fn without_arc(mut self) -> Self {
        self.left_arc = None;
        self.right_arc = None;
        self
    }

    pub fn from_json(text: &str) -> Result<StackSpec> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<StackSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        StackSpec::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stack serializes")
    }
}

/// A stack that passed validation, with its layer sequence laid out in space.
///
/// The stack occupies `[left, left + total_width]`; by default it is centred
/// on the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedStack {
    spec: StackSpec,
    layers: Vec<Layer>,
    total_width: f64,
    left: f64,
}

pub fn validate_stack(stack: &StackSpec) -> Result<ValidatedStack> {
    let mut problems = Vec::new();
    stack.outside.problems(&mut problems);
    stack.core.problems("core", &mut problems);
    if stack.replicas < 1 {
        problems.push(format!(
            "replicas must be at least 1, got {}",
            stack.replicas
        ));
    }
    if let Some(arc) = &stack.left_arc {
        arc.problems("left_arc", &mut problems);
    }
    if let Some(arc) = &stack.right_arc {
        arc.problems("right_arc", &mut problems);
    }
    if !problems.is_empty() {
        return Err(Error::Invalid(problems));
    }
    let mut layers = Vec::new();
    if let Some(arc) = &stack.left_arc {
        layers.extend_from_slice(&arc.layers);
    }
    for _ in 0..stack.replicas {
        layers.extend_from_slice(&stack.core.layers);
    }
    if let Some(arc) = &stack.right_arc {
        layers.extend_from_slice(&arc.layers);
    }
    let total_width: f64 = layers.iter().map(|l| l.width).sum();
    Ok(ValidatedStack {
        spec: stack.clone(),
        layers,
        total_width,
        left: -0.5 * total_width,
    })
}

impl ValidatedStack {
    pub fn spec(&self) -> &StackSpec {
        &self.spec
    }

    pub fn outside(&self) -> Lead {
        self.spec.outside
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn total_width(&self) -> f64 {
        self.total_width
    }

    /// Position a of the left edge.
    pub fn left(&self) -> f64 {
        self.left
    }

    /// Position b of the right edge.
    pub fn right(&self) -> f64 {
        self.left + self.total_width
    }

    /// Moves the stack so that its left edge sits at `left`.
    pub fn placed_at(mut self, left: f64) -> Self {
        self.left = left;
        self
    }

    /// True if the flattened layer sequence reads the same both ways.
    pub fn is_mirror_symmetric(&self) -> bool {
        is_mirror_symmetric(&self.layers)
    }

    pub fn has_arc(&self) -> bool {
        self.spec.left_arc.is_some() || self.spec.right_arc.is_some()
    }

    /// Lead velocity ħk/m* at energy E.
    pub fn lead_velocity(&self, energy: f64, consts: &PhysConstants) -> f64 {
        self.spec.outside.velocity(energy, consts)
    }

    /// Interfaces x_0 = a < x_1 < ... < x_n = b.
    pub fn interfaces(&self) -> Vec<f64> {
        let mut x = self.left;
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        out.push(x);
        for layer in &self.layers {
            x += layer.width;
            out.push(x);
        }
        out
    }

    /// Band offset and mass at position x (lead values outside the stack).
    pub fn profile_at(&self, x: f64) -> (f64, f64) {
        if x < self.left || x >= self.right() {
            return (self.spec.outside.potential, self.spec.outside.mass_ratio);
        }
        let mut edge = self.left;
        for layer in &self.layers {
            edge += layer.width;
            if x < edge {
                return (layer.potential, layer.mass_ratio);
            }
        }
        let last = self.layers.last().expect("validated stack has layers");
        (last.potential, last.mass_ratio)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyGrid {
    pub e_min: f64,
    pub e_max: f64,
    pub count: usize,
    pub samples: Vec<f64>,
}

impl EnergyGrid {
    pub fn uniform(e_min: f64, e_max: f64, count: usize) -> Result<EnergyGrid> {
        let mut problems = Vec::new();
        if !(e_min < e_max) {
            problems.push(format!("energy range [{e_min}, {e_max}] is empty"));
        }
        if count < 2 {
            problems.push(format!("energy grid needs at least 2 samples, got {count}"));
        }
        if !(e_min > 0.0) {
            problems.push(format!(
                "energies must lie above the lead band bottom, got {e_min}"
            ));
        }
        if !problems.is_empty() {
            return Err(Error::Invalid(problems));
        }
        let step = (e_max - e_min) / (count - 1) as f64;
        let mut samples: Vec<f64> = (0..count).map(|i| e_min + step * i as f64).collect();
        samples[count - 1] = e_max;
        Ok(EnergyGrid {
            e_min,
            e_max,
            count,
            samples,
        })
    }

    pub fn from_samples(samples: Vec<f64>) -> Result<EnergyGrid> {
        if samples.len() < 2 {
            return Err(Error::Invalid(vec![
                "energy grid needs at least 2 samples".into()
            ]));
        }
        if samples.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid(vec![
                "energy samples must be strictly increasing".into(),
            ]));
        }
        if !(samples[0] > 0.0) {
            return Err(Error::Invalid(vec![
                "energies must lie above the lead band bottom".into(),
            ]));
        }
        Ok(EnergyGrid {
            e_min: samples[0],
            e_max: *samples.last().unwrap(),
            count: samples.len(),
            samples,
        })
    }
}

/// Local wavenumber in a layer: positive real part above the band offset,
/// positive imaginary part below it.
pub fn local_wavenumber(energy: f64, layer: &Layer, consts: &PhysConstants) -> Complex64 {
    let k2 = consts.wavenumber_sq(energy, layer.potential, layer.mass_ratio);
    if k2 >= 0.0 {
        Complex64::new(k2.sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-k2).sqrt())
    }
}

/// GaAs effective mass ratio.
pub const GAAS_MASS: f64 = 0.067;

/// Representative GaAs/AlGaAs superlattice cell: a barrier centred between
/// two half wells. This is a stand-in with realistic parameters, not a
/// published device structure.
pub fn representative_cell() -> CellSpec {
    let well = Layer::new(REP_WELL / 2.0, 0.0, GAAS_MASS);
    let barrier = Layer::new(REP_BARRIER, REP_BARRIER_HEIGHT, REP_BARRIER_MASS);
    CellSpec::new(vec![well, barrier, well])
}

const REP_WELL: f64 = 6.5;
const REP_BARRIER: f64 = 2.5;
const REP_BARRIER_HEIGHT: f64 = 250.0;
const REP_BARRIER_MASS: f64 = 0.092;

/// Five representative cells between GaAs leads, without ARC.
pub fn representative_stack() -> StackSpec {
    StackSpec::new(Lead::new(GAAS_MASS), representative_cell(), 5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_bottom_gives_zero_wavenumber() {
        let c = PhysConstants::default();
        let l = Layer::new(1.0, 37.0, 0.2);
        assert_eq!(local_wavenumber(37.0, &l, &c), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn free_electron_wavenumber() {
        let c = PhysConstants::default();
        let k = local_wavenumber(100.0, &Layer::new(1.0, 0.0, 1.0), &c);
        assert!((k.re - (100.0f64 / 38.0998).sqrt()).abs() < 1e-14);
        assert!((k.re - 1.620).abs() < 1e-3);
        assert_eq!(k.im, 0.0);
    }

    #[test]
    fn evanescent_branch() {
        let c = PhysConstants::default();
        let k = local_wavenumber(50.0, &Layer::new(1.0, 290.0, 0.1), &c);
        assert_eq!(k.re, 0.0);
        assert!(k.im > 0.0);
    }

    #[test]
    fn single_free_layer_is_valid() {
        let s = StackSpec::new(
            Lead::new(0.067),
            CellSpec::new(vec![Layer::new(3.0, 0.0, 0.067)]),
            1,
        );
        let v = validate_stack(&s).unwrap();
        assert!((v.total_width() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_width_rejected() {
        let s = StackSpec::new(
            Lead::new(0.067),
            CellSpec::new(vec![Layer::new(0.0, 0.0, 0.067)]),
            1,
        );
        let err = validate_stack(&s).unwrap_err().to_string();
        assert!(err.contains("nonpositive width"), "{err}");
    }

    #[test]
    fn contradictory_symmetry_flag_rejected() {
        let mut cell = CellSpec::new(vec![
            Layer::new(1.0, 0.0, 0.067),
            Layer::new(2.0, 100.0, 0.09),
        ]);
        assert!(!cell.symmetric);
        cell.symmetric = true;
        let s = StackSpec::new(Lead::new(0.067), cell, 2);
        let err = validate_stack(&s).unwrap_err().to_string();
        assert!(err.contains("symmetry flag contradicts layers"), "{err}");
    }

    #[test]
    fn zero_replicas_rejected() {
        let s = StackSpec::new(Lead::new(0.067), representative_cell(), 0);
        assert!(validate_stack(&s).is_err());
    }

    #[test]
    fn every_violation_is_reported() {
        let s = StackSpec::new(
            Lead::new(-1.0),
            CellSpec::new(vec![Layer::new(-1.0, 0.0, 0.0)]),
            0,
        );
        match validate_stack(&s) {
            Err(Error::Invalid(list)) => assert_eq!(list.len(), 4, "{list:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_is_idempotent() {
        let s = representative_stack().with_arc(representative_cell());
        let v1 = validate_stack(&s).unwrap();
        let v2 = validate_stack(v1.spec()).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn json_schema_round_trip() {
        let text = r#"{
            "outside": {"V_meV": 0.0, "mass_ratio": 0.067},
            "core": {"layers": [
                {"width_nm": 3.0, "V_meV": 0.0, "mass_ratio": 0.067},
                {"width_nm": 2.0, "V_meV": 250.0, "mass_ratio": 0.092},
                {"width_nm": 3.0, "V_meV": 0.0, "mass_ratio": 0.067}
            ], "symmetric": true},
            "replicas": 5,
            "left_arc": null,
            "right_arc": null
        }"#;
        let s = StackSpec::from_json(text).unwrap();
        assert_eq!(s.replicas, 5);
        assert!(s.core.symmetric);
        assert_eq!(StackSpec::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn grid_rejects_nonpositive_energies() {
        assert!(EnergyGrid::uniform(0.0, 10.0, 5).is_err());
        assert!(EnergyGrid::uniform(5.0, 1.0, 5).is_err());
        let g = EnergyGrid::uniform(1.0, 2.0, 3).unwrap();
        assert_eq!(g.samples, vec![1.0, 1.5, 2.0]);
    }

    #[test]
    fn profile_lookup() {
        let v = validate_stack(&representative_stack()).unwrap();
        let (pot, _) = v.profile_at(v.left() + REP_WELL / 2.0 + 0.1);
        assert_eq!(pot, REP_BARRIER_HEIGHT);
        assert_eq!(v.profile_at(v.right() + 1.0).0, 0.0);
    }
}
