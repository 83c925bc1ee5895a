//! Piecewise-constant evolution of photon/collective-excitation states.
//!
//! Pulse strengths are cooperative couplings: a segment with coupling `g`
//! moves a single quantum between its two modes at rate `g` whatever the
//! collective model, so the Tavis–Cummings ladder is rescaled by `1/√N`.
//! Pulse areas follow the convention that a π transition is `g·t = π/2`
//! (full single-quantum transfer) and a 2π transition is `g·t = π`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::hilbert::{
    enumerate_basis, exchange_coupling, HilbertBasis, ModeKind, ModeSpec, OperatorMatrix,
};
use crate::report::fmt_f64;

pub const PHOTON_1: &str = "photon1";
pub const PHOTON_2: &str = "photon2";
pub const COLLECTIVE: &str = "collective";

const I: C64 = C64::new(0.0, 1.0);

/// Which ladder the atomic ensemble uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollectiveModel {
    Bosonized,
    TavisCummings { atoms: u32 },
}

impl CollectiveModel {
    pub(crate) fn mode(self, label: &str) -> ModeSpec {
        match self {
            CollectiveModel::Bosonized => ModeSpec::bosonized(label),
            CollectiveModel::TavisCummings { atoms } => ModeSpec::collective(label, atoms),
        }
    }
}

/// Mode layout plus the rule that turns pulse segments into Hamiltonians.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    modes: Vec<ModeSpec>,
}

impl Model {
    pub fn new(modes: Vec<ModeSpec>) -> Result<Self> {
        // enumerating the vacuum validates labels and capacities
        enumerate_basis(&modes, 0)?;
        Ok(Self { modes })
    }

    /// `photon1`, `photon2` and one collective mode.
    pub fn two_photon(collective: CollectiveModel) -> Self {
        Self {
            modes: vec![
                ModeSpec::photonic(PHOTON_1),
                ModeSpec::photonic(PHOTON_2),
                collective.mode(COLLECTIVE),
            ],
        }
    }

    /// `photon1` and one collective mode.
    pub fn single_photon(collective: CollectiveModel) -> Self {
        Self {
            modes: vec![ModeSpec::photonic(PHOTON_1), collective.mode(COLLECTIVE)],
        }
    }

    pub fn modes(&self) -> &[ModeSpec] {
        &self.modes
    }

    pub fn basis(&self, sector: u32) -> Result<Arc<HilbertBasis>> {
        Ok(Arc::new(enumerate_basis(&self.modes, sector)?))
    }

    fn ladder_scale(&self, label: &str) -> Result<f64> {
        let mode = self
            .modes
            .iter()
            .find(|m| m.label == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))?;
        Ok(match mode.kind {
            ModeKind::Collective { atoms } => 1.0 / f64::from(atoms).sqrt(),
            _ => 1.0,
        })
    }

    /// Generator of one segment on `basis`: exchange term, detunings on the
    /// diagonal and `−i·w·n` widths.
    pub fn hamiltonian(
        &self,
        basis: &Arc<HilbertBasis>,
        segment: &PulseSegment,
    ) -> Result<OperatorMatrix> {
        if basis.modes() != self.modes.as_slice() {
            return Err(Error::InvalidInput(
                "basis was not built from this model".into(),
            ));
        }
        let mut h = OperatorMatrix::zeros(basis);
        if let Some(c) = &segment.coupling {
            let scale = self.ladder_scale(&c.mode_a)? * self.ladder_scale(&c.mode_b)?;
            h = h.plus(&exchange_coupling(basis, &c.mode_a, &c.mode_b, c.g * scale)?)?;
        }
        let mut diag = Vec::new();
        for (label, energy) in &segment.detunings {
            diag.push((basis.mode_index(label)?, C64::new(*energy, 0.0)));
        }
        for (label, width) in &segment.widths {
            diag.push((basis.mode_index(label)?, C64::new(0.0, -*width)));
        }
        if !diag.is_empty() {
            h = h.plus(&OperatorMatrix::diagonal_from_modes(basis, &diag))?;
        }
        Ok(h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    pub mode_a: String,
    pub mode_b: String,
    pub g: f64,
}

impl Coupling {
    pub fn new(mode_a: impl Into<String>, mode_b: impl Into<String>, g: f64) -> Self {
        Self {
            mode_a: mode_a.into(),
            mode_b: mode_b.into(),
            g,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSegment {
    pub coupling: Option<Coupling>,
    /// Energy per quantum added to the diagonal.
    pub detunings: BTreeMap<String, f64>,
    /// Width per quantum, entering the diagonal as `−i·w`.
    pub widths: BTreeMap<String, f64>,
    pub duration: f64,
}

impl PulseSegment {
    pub fn new(coupling: Option<Coupling>, duration: f64) -> Self {
        Self {
            coupling,
            detunings: BTreeMap::new(),
            widths: BTreeMap::new(),
            duration,
        }
    }

    /// Resonant pulse of the given area in units of π.
    pub fn with_area(coupling: Coupling, area_in_pi: f64) -> Result<Self> {
        if coupling.g == 0.0 || !coupling.g.is_finite() {
            return Err(Error::validation(
                "g",
                "a pulse area needs a finite non-zero coupling",
            ));
        }
        let duration = area_in_pi * PI / (2.0 * coupling.g.abs());
        Ok(Self::new(Some(coupling), duration))
    }

    pub fn free(duration: f64) -> Self {
        Self::new(None, duration)
    }

    pub fn detuned(mut self, mode: impl Into<String>, energy: f64) -> Self {
        self.detunings.insert(mode.into(), energy);
        self
    }

    pub fn widened(mut self, mode: impl Into<String>, width: f64) -> Self {
        self.widths.insert(mode.into(), width);
        self
    }

    pub fn has_widths(&self) -> bool {
        self.widths.values().any(|w| *w > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.duration.is_finite() || self.duration < 0.0 {
            return Err(Error::validation(
                "duration",
                format!("must be finite and non-negative, got {}", self.duration),
            ));
        }
        if let Some(c) = &self.coupling {
            if !c.g.is_finite() {
                return Err(Error::validation("g", "coupling must be finite"));
            }
            if c.mode_a == c.mode_b {
                return Err(Error::validation("coupling", "modes must differ"));
            }
        }
        for (mode, d) in &self.detunings {
            if !d.is_finite() {
                return Err(Error::validation(
                    format!("detunings.{mode}"),
                    "must be finite",
                ));
            }
        }
        for (mode, w) in &self.widths {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::validation(
                    format!("widths.{mode}"),
                    "must be finite and non-negative",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PulseSchedule {
    segments: Vec<PulseSegment>,
}

impl PulseSchedule {
    pub fn new(segments: Vec<PulseSegment>) -> Result<Self> {
        for s in &segments {
            s.validate()?;
        }
        Ok(Self { segments })
    }

    /// π on photon 1, 2π on photon 2, π on photon 1, all against the
    /// collective mode.
    pub fn three_pulse(g: f64) -> Result<Self> {
        Self::new(vec![
            PulseSegment::with_area(Coupling::new(PHOTON_1, COLLECTIVE, g), 1.0)?,
            PulseSegment::with_area(Coupling::new(PHOTON_2, COLLECTIVE, g), 2.0)?,
            PulseSegment::with_area(Coupling::new(PHOTON_1, COLLECTIVE, g), 1.0)?,
        ])
    }

    pub fn segments(&self) -> &[PulseSegment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

/// `exp(−iHt)` for a fixed generator.
#[derive(Clone, Debug)]
pub struct Propagator {
    kind: PropagatorKind,
}

#[derive(Clone, Debug)]
enum PropagatorKind {
    Spectral {
        energies: DVector<f64>,
        vectors: DMatrix<C64>,
    },
    General {
        generator: DMatrix<C64>,
    },
}

impl Propagator {
    pub fn new(h: &OperatorMatrix) -> Result<Self> {
        if h.matrix().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("Hamiltonian"));
        }
        let kind = if h.is_hermitian() {
            let eig = h.matrix().clone().symmetric_eigen();
            PropagatorKind::Spectral {
                energies: eig.eigenvalues,
                vectors: eig.eigenvectors,
            }
        } else {
            PropagatorKind::General {
                generator: h.matrix().clone(),
            }
        };
        Ok(Self { kind })
    }

    pub fn matrix(&self, t: f64) -> DMatrix<C64> {
        match &self.kind {
            PropagatorKind::Spectral { energies, vectors } => {
                let phases = DVector::from_iterator(
                    energies.len(),
                    energies.iter().map(|e| C64::from_polar(1.0, -e * t)),
                );
                let mut scaled = vectors.clone();
                for (j, p) in phases.iter().enumerate() {
                    let mut col = scaled.column_mut(j);
                    col *= *p;
                }
                scaled * vectors.adjoint()
            }
            PropagatorKind::General { generator } => (generator * (-I * t)).exp(),
        }
    }

    pub fn evolve(&self, state: &DVector<C64>, t: f64) -> DVector<C64> {
        if t == 0.0 {
            return state.clone();
        }
        match &self.kind {
            PropagatorKind::Spectral { energies, vectors } => {
                let mut coeffs = vectors.adjoint() * state;
                for (c, e) in coeffs.iter_mut().zip(energies.iter()) {
                    *c *= C64::from_polar(1.0, -e * t);
                }
                vectors * coeffs
            }
            PropagatorKind::General { .. } => self.matrix(t) * state,
        }
    }
}

/// `exp(−iHt)·state`: spectral for Hermitian generators, Padé scaling and
/// squaring otherwise.
pub fn evolve_segment(h: &OperatorMatrix, state: &DVector<C64>, t: f64) -> Result<DVector<C64>> {
    if state.len() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: state.len(),
        });
    }
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidInput(format!(
            "evolution time must be finite and non-negative, got {t}"
        )));
    }
    if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("state"));
    }
    Ok(Propagator::new(h)?.evolve(state, t))
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<C64>>,
    pub norms: Vec<f64>,
}

impl Trajectory {
    fn push(&mut self, t: f64, state: DVector<C64>) {
        self.norms.push(state.norm());
        self.times.push(t);
        self.states.push(state);
    }

    pub fn final_state(&self) -> Option<&DVector<C64>> {
        self.states.last()
    }

    /// CSV: `time,state_index,re,im,norm`, one row per sample and basis state.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "state_index", "re", "im", "norm"])?;
        for ((t, psi), norm) in self.times.iter().zip(&self.states).zip(&self.norms) {
            for (i, z) in psi.iter().enumerate() {
                w.write_record(&[
                    fmt_f64(*t),
                    i.to_string(),
                    fmt_f64(z.re),
                    fmt_f64(z.im),
                    fmt_f64(*norm),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the segments in order, sampling each one `samples_per_segment`
/// times (uniformly, end point included) after the initial sample.
pub fn run_schedule(
    model: &Model,
    schedule: &PulseSchedule,
    basis: &Arc<HilbertBasis>,
    initial: &DVector<C64>,
    samples_per_segment: usize,
) -> Result<Trajectory> {
    if initial.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: initial.len(),
        });
    }
    let samples = samples_per_segment.max(1);
    let mut traj = Trajectory::default();
    let mut t = 0.0;
    let mut psi = initial.clone();
    traj.push(t, psi.clone());
    for segment in schedule.segments() {
        let h = model.hamiltonian(basis, segment)?;
        let prop = Propagator::new(&h)?;
        let start = psi.clone();
        for k in 1..=samples {
            let dt = segment.duration * k as f64 / samples as f64;
            psi = prop.evolve(&start, dt);
            traj.push(t + dt, psi.clone());
        }
        t += segment.duration;
    }
    Ok(traj)
}

/// Final state of a schedule without intermediate samples.
pub fn evolve_schedule(
    model: &Model,
    schedule: &PulseSchedule,
    basis: &Arc<HilbertBasis>,
    initial: &DVector<C64>,
) -> Result<DVector<C64>> {
    let mut psi = initial.clone();
    for segment in schedule.segments() {
        let h = model.hamiltonian(basis, segment)?;
        psi = evolve_segment(&h, &psi, segment.duration)?;
    }
    Ok(psi)
}

/// Angular frequency of the return probability `|⟨i|ψ(t)⟩|²` under a
/// single resonant coupling, from the time of its first revival maximum.
pub fn rabi_frequency(model: &Model, coupling: &Coupling, initial: &[u32]) -> Result<f64> {
    let basis = model.basis(initial.iter().sum())?;
    let start = basis.ket(initial)?;
    let h = model.hamiltonian(&basis, &PulseSegment::new(Some(coupling.clone()), 0.0))?;
    let eig = h.matrix().clone().symmetric_eigen();
    let overlaps = eig.eigenvectors.adjoint() * &start;
    let spectrum: Vec<(f64, f64)> = eig
        .eigenvalues
        .iter()
        .zip(overlaps.iter())
        .map(|(e, c)| (*e, c.norm_sqr()))
        .filter(|(_, w)| *w > 1e-14)
        .collect();
    let mean: f64 = spectrum.iter().map(|(e, w)| e * w).sum();
    let variance: f64 = spectrum.iter().map(|(e, w)| w * (e - mean).powi(2)).sum();
    let (lo, hi) = spectrum
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (e, _)| {
            (lo.min(*e), hi.max(*e))
        });
    if variance < 1e-20 || hi - lo <= 0.0 {
        return Err(Error::NoDynamics(format!(
            "{} is stationary under the coupling",
            basis.state(basis.index_of(initial).expect("ket succeeded"))
        )));
    }

    // dP/dt = 2 Re(a* a'), with a(t) = Σ w_j e^{−iE_j t}
    let slope = |t: f64| {
        let mut a = C64::new(0.0, 0.0);
        let mut da = C64::new(0.0, 0.0);
        for (e, w) in &spectrum {
            let p = C64::from_polar(*w, -e * t);
            a += p;
            da += -I * e * p;
        }
        2.0 * (a.conj() * da).re
    };

    let step = PI / (16.0 * (hi - lo));
    const MAX_STEPS: usize = 200_000;
    let mut prev = slope(step);
    for k in 1..MAX_STEPS {
        let (t0, t1) = (k as f64 * step, (k + 1) as f64 * step);
        let next = slope(t1);
        if prev > 0.0 && next <= 0.0 {
            let (mut a, mut b) = (t0, t1);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if slope(mid) > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            return Ok(2.0 * PI / (0.5 * (a + b)));
        }
        prev = next;
    }
    Err(Error::NoDynamics(
        "no revival found within the scan horizon".into(),
    ))
}

/// Photon survival probability after the medium is switched into
/// resonance for each duration.
pub fn transmission_scan(g: f64, durations: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !g.is_finite() || g <= 0.0 {
        return Err(Error::InvalidInput(format!("coupling must be positive, got {g}")));
    }
    let model = Model::single_photon(CollectiveModel::Bosonized);
    let basis = model.basis(1)?;
    let photon = basis.ket(&[1, 0])?;
    let h = model.hamiltonian(
        &basis,
        &PulseSegment::new(Some(Coupling::new(PHOTON_1, COLLECTIVE, g)), 0.0),
    )?;
    let prop = Propagator::new(&h)?;
    durations
        .iter()
        .map(|&tau| {
            if !tau.is_finite() || tau < 0.0 {
                return Err(Error::InvalidInput(format!("bad duration {tau}")));
            }
            let psi = prop.evolve(&photon, tau);
            Ok((tau, photon.dotc(&psi).norm_sqr()))
        })
        .collect()
}

/// Phase and loss of an off-resonant photon dressed by a lossy collective
/// excitation.
///
/// The photon state sits at zero energy and the collective state at
/// `Δ − iw`. Returns the unwrapped phase of the photon survival amplitude,
/// measured against uncoupled propagation, and `1 − ‖ψ(t)‖²`.
pub fn phase_vs_loss(g: f64, detuning: f64, width: f64, t: f64) -> Result<(f64, f64)> {
    if detuning == 0.0 || !detuning.is_finite() {
        return Err(Error::InvalidInput("detuning must be finite and non-zero".into()));
    }
    if !g.is_finite() || !width.is_finite() || width < 0.0 || !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidInput(
            "g, width and t must be finite; width and t non-negative".into(),
        ));
    }
    let model = Model::single_photon(CollectiveModel::Bosonized);
    let basis = model.basis(1)?;
    let photon = basis.ket(&[1, 0])?;
    let segment = PulseSegment::new(Some(Coupling::new(PHOTON_1, COLLECTIVE, g)), t)
        .detuned(COLLECTIVE, detuning)
        .widened(COLLECTIVE, width);
    let h = model.hamiltonian(&basis, &segment)?;

    // steps short enough that the phase increment stays far below π
    let scale = h.matrix().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let steps = ((t * scale / 0.25).ceil() as usize).max(64);
    let dt = t / steps as f64;
    let step = Propagator::new(&h)?.matrix(dt);

    let mut psi = photon.clone();
    let mut prev = C64::new(1.0, 0.0);
    let mut phase = 0.0;
    for _ in 0..steps {
        psi = &step * &psi;
        let a = photon.dotc(&psi);
        if a.norm() > 0.0 && prev.norm() > 0.0 {
            phase += (a / prev).arg();
        }
        prev = a;
    }
    Ok((phase, 1.0 - psi.norm_squared()))
}
