//! Logical two-qubit gates over the photon presence/absence encoding.
//!
//! Logical inputs are indexed `2·q1 + q2`, i.e. `|0,0⟩, |0,1⟩, |1,0⟩, |1,1⟩`
//! with `q1` the occupation of the first qubit mode.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    evolve_schedule, CollectiveModel, Coupling, Model, Propagator, PulseSchedule, PulseSegment,
    COLLECTIVE, PHOTON_1, PHOTON_2,
};
use crate::error::{Error, Result};
use crate::hilbert::{HilbertBasis, ModeSpec};
use crate::linalg;
use crate::report::{complex_pair, complex_rows};

/// Default tolerance for unitarity and rank decisions.
pub const ENTANGLING_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogicalEncoding {
    pub qubit1: String,
    pub qubit2: String,
    /// Modes that must start and end empty.
    pub ancillas: Vec<String>,
}

impl LogicalEncoding {
    pub fn new(
        qubit1: impl Into<String>,
        qubit2: impl Into<String>,
        ancillas: Vec<String>,
    ) -> Self {
        Self {
            qubit1: qubit1.into(),
            qubit2: qubit2.into(),
            ancillas,
        }
    }

    /// Photons 1 and 2 as qubits, the collective mode as ancilla.
    pub fn standard() -> Self {
        Self::new(PHOTON_1, PHOTON_2, vec![COLLECTIVE.to_string()])
    }

    fn qubit_positions(&self, model: &Model) -> Result<(usize, usize)> {
        let find = |label: &str| {
            model
                .modes()
                .iter()
                .position(|m| m.label == label)
                .ok_or_else(|| Error::UnknownMode(label.to_string()))
        };
        let q1 = find(&self.qubit1)?;
        let q2 = find(&self.qubit2)?;
        if q1 == q2 {
            return Err(Error::InvalidInput("qubit modes must be distinct".into()));
        }
        for a in &self.ancillas {
            let pos = find(a)?;
            if pos == q1 || pos == q2 {
                return Err(Error::InvalidInput(format!(
                    "ancilla `{a}` is also a qubit mode"
                )));
            }
        }
        for m in model.modes() {
            if m.label != self.qubit1
                && m.label != self.qubit2
                && !self.ancillas.contains(&m.label)
            {
                return Err(Error::InvalidInput(format!(
                    "mode `{}` is neither a qubit nor an ancilla",
                    m.label
                )));
            }
        }
        Ok((q1, q2))
    }
}

/// `(A, B)` with `U = A ⊗ B`.
pub type LocalFactors = (Matrix2<C64>, Matrix2<C64>);

#[derive(Clone, Debug)]
pub struct GateReport {
    /// `matrix[(out, in)]`, global phase fixed by a real positive `|0,0⟩` amplitude.
    pub matrix: Matrix4<C64>,
    pub leakage: [f64; 4],
    pub unitarity_defect: f64,
    pub entangling: bool,
    pub local_factors: Option<LocalFactors>,
}

impl GateReport {
    /// Largest entrywise distance to a diagonal target.
    pub fn deviation_from_diagonal(&self, target: [C64; 4]) -> f64 {
        let t = Matrix4::from_diagonal(&nalgebra::Vector4::from(target));
        (self.matrix - t).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_leakage(&self) -> f64 {
        self.leakage.iter().copied().fold(0.0, f64::max)
    }

    pub fn payload(&self) -> GatePayload {
        let m = DMatrix::from_iterator(4, 4, self.matrix.iter().copied());
        GatePayload {
            matrix: complex_rows(&m),
            leakage: self.leakage.to_vec(),
            unitarity_defect: self.unitarity_defect,
            entangling: self.entangling,
            local_factors: self.local_factors.as_ref().map(|(a, b)| {
                [a, b].map(|f| {
                    let d = DMatrix::from_iterator(2, 2, f.iter().copied());
                    complex_rows(&d)
                })
            }),
            conditional_phase: conditional_phase(&self.matrix, ENTANGLING_TOL),
        }
    }
}

/// JSON form of a [`GateReport`].
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct GatePayload {
    pub matrix: Vec<Vec<[f64; 2]>>,
    pub leakage: Vec<f64>,
    pub unitarity_defect: f64,
    pub entangling: bool,
    pub local_factors: Option<[Vec<Vec<[f64; 2]>>; 2]>,
    pub conditional_phase: Option<f64>,
}

fn logical_occupations(model: &Model, q1: usize, q2: usize, input: usize) -> Vec<u32> {
    let mut occ = vec![0u32; model.modes().len()];
    occ[q1] = (input >> 1) as u32;
    occ[q2] = (input & 1) as u32;
    occ
}

/// Runs `schedule` on each logical basis state and collects the logical
/// block of the resulting map.
pub fn extract_gate(
    schedule: &PulseSchedule,
    encoding: &LogicalEncoding,
    model: &Model,
) -> Result<GateReport> {
    let (q1, q2) = encoding.qubit_positions(model)?;
    let bases: Vec<Arc<HilbertBasis>> = (0..=2).map(|s| model.basis(s)).collect::<Result<_>>()?;

    let columns: Vec<Result<(Vec<C64>, f64)>> = (0..4usize)
        .into_par_iter()
        .map(|input| {
            let occ = logical_occupations(model, q1, q2, input);
            let basis = &bases[occ.iter().sum::<u32>() as usize];
            let psi = evolve_schedule(model, schedule, basis, &basis.ket(&occ)?)?;
            let amps: Vec<C64> = (0..4)
                .map(|out| {
                    let target = logical_occupations(model, q1, q2, out);
                    basis.index_of(&target).map_or(C64::new(0.0, 0.0), |i| psi[i])
                })
                .collect();
            let kept: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
            let leak = (psi.norm_squared() - kept).clamp(0.0, 1.0);
            Ok((amps, leak))
        })
        .collect();

    let mut matrix = Matrix4::<C64>::zeros();
    let mut leakage = [0.0; 4];
    for (input, col) in columns.into_iter().enumerate() {
        let (amps, leak) = col?;
        for (out, a) in amps.into_iter().enumerate() {
            matrix[(out, input)] = a;
        }
        leakage[input] = leak;
    }
    let anchor = matrix[(0, 0)];
    if anchor.norm() > 1e-12 {
        matrix *= anchor.conj() / anchor.norm();
    }
    let unitarity_defect = unitarity_defect(&matrix);
    let (entangling, local_factors) = operator_schmidt(&matrix, ENTANGLING_TOL);
    Ok(GateReport {
        matrix,
        leakage,
        unitarity_defect,
        entangling,
        local_factors,
    })
}

pub fn unitarity_defect(u: &Matrix4<C64>) -> f64 {
    (u.adjoint() * u - Matrix4::identity())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Whether `u` fails to factor as `A ⊗ B` (up to global phase).
///
/// Decided by the rank of the realigned matrix
/// `R[(i1 j1), (i2 j2)] = U[(i1 i2), (j1 j2)]`, which is one exactly for
/// product operators. When non-entangling, the factors are returned with
/// `|det A| = 1` and the largest entry of `A` real positive.
pub fn is_entangling(
    u: &Matrix4<C64>,
    tol: f64,
) -> Result<(bool, Option<LocalFactors>)> {
    let defect = unitarity_defect(u);
    if defect.is_nan() || defect > tol {
        return Err(Error::NotUnitary { defect, tol });
    }
    Ok(operator_schmidt(u, tol))
}

fn operator_schmidt(u: &Matrix4<C64>, tol: f64) -> (bool, Option<LocalFactors>) {
    let mut r = Matrix4::<C64>::zeros();
    for i1 in 0..2 {
        for i2 in 0..2 {
            for j1 in 0..2 {
                for j2 in 0..2 {
                    r[(2 * i1 + j1, 2 * i2 + j2)] = u[(2 * i1 + i2, 2 * j1 + j2)];
                }
            }
        }
    }
    let Ok(svd) = linalg::svd(&DMatrix::from_iterator(4, 4, r.iter().copied())) else {
        return (true, None);
    };
    let (s0, s1) = (svd.s[0], svd.s[1]);
    if s0 == 0.0 || s1 > tol * s0 {
        return (true, None);
    }
    let root = s0.sqrt();
    let mut a = Matrix2::<C64>::zeros();
    let mut b = Matrix2::<C64>::zeros();
    for i in 0..2 {
        for j in 0..2 {
            a[(i, j)] = svd.u[(2 * i + j, 0)] * root;
            b[(i, j)] = svd.v_t[(0, 2 * i + j)] * root;
        }
    }
    let det = a.determinant().norm();
    if det > 0.0 {
        let scale = det.sqrt();
        a /= C64::new(scale, 0.0);
        b *= C64::new(scale, 0.0);
    }
    let pivot = largest_entry(a.iter().copied());
    if pivot.norm() > 0.0 {
        let phase = pivot / pivot.norm();
        a /= phase;
        b *= phase;
    }
    (false, Some((a, b)))
}

/// First entry within 1e-12 of the largest modulus.
fn largest_entry(entries: impl Iterator<Item = C64> + Clone) -> C64 {
    let max = entries.clone().map(|z| z.norm()).fold(0.0, f64::max);
    // nalgebra iterates column-major; Matrix2 order (0,0),(1,0),(0,1),(1,1)
    // puts the diagonal pivot first for diagonal factors either way.
    entries
        .into_iter()
        .find(|z| z.norm() >= max - 1e-12)
        .unwrap_or(C64::new(0.0, 0.0))
}

/// `φ00 − φ01 − φ10 + φ11` wrapped to `(−π, π]`, for diagonal `u`.
pub fn conditional_phase(u: &Matrix4<C64>, tol: f64) -> Option<f64> {
    for i in 0..4 {
        for j in 0..4 {
            if i != j && u[(i, j)].norm() > tol {
                return None;
            }
        }
        if u[(i, i)].norm() <= tol {
            return None;
        }
    }
    let z = u[(0, 0)] * u[(3, 3)] * u[(1, 1)].conj() * u[(2, 2)].conj();
    let phi = z.arg();
    Some(if phi <= -PI { phi + 2.0 * PI } else { phi })
}

/// Single-quantum transfer amplitudes between modes, `t[(to, from)]`.
pub fn single_quantum_transfer(model: &Model, schedule: &PulseSchedule) -> Result<DMatrix<C64>> {
    let basis = model.basis(1)?;
    let n = model.modes().len();
    let unit = |m: usize| {
        let mut occ = vec![0u32; n];
        occ[m] = 1;
        occ
    };
    let mut t = DMatrix::zeros(n, n);
    for from in 0..n {
        let psi = evolve_schedule(model, schedule, &basis, &basis.ket(&unit(from))?)?;
        for to in 0..n {
            t[(to, from)] = psi[basis.index_of(&unit(to)).expect("unit state in sector 1")];
        }
    }
    Ok(t)
}

/// Amplitudes `ψ(n1, n2)` of a two-mode state.
#[derive(Clone, Debug)]
pub struct TwoModeState {
    amplitudes: DMatrix<C64>,
}

impl TwoModeState {
    pub fn new(amplitudes: DMatrix<C64>) -> Result<Self> {
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("two-mode amplitudes"));
        }
        if amplitudes.is_empty() {
            return Err(Error::InvalidInput("empty amplitude matrix".into()));
        }
        Ok(Self { amplitudes })
    }

    /// Restricts a state to two modes; every other mode must be empty up to
    /// a weight of 1e-12.
    pub fn from_state(
        basis: &HilbertBasis,
        psi: &DVector<C64>,
        mode_a: &str,
        mode_b: &str,
    ) -> Result<Self> {
        if psi.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: psi.len(),
            });
        }
        let a = basis.mode_index(mode_a)?;
        let b = basis.mode_index(mode_b)?;
        let cut = |m: usize| {
            basis
                .states()
                .iter()
                .map(|s| s.occupations()[m])
                .max()
                .unwrap_or(0) as usize
                + 1
        };
        let mut amps = DMatrix::zeros(cut(a), cut(b));
        let mut stray = 0.0;
        for (i, s) in basis.states().iter().enumerate() {
            let occ = s.occupations();
            let elsewhere = occ
                .iter()
                .enumerate()
                .any(|(m, n)| m != a && m != b && *n > 0);
            if elsewhere {
                stray += psi[i].norm_sqr();
            } else {
                amps[(occ[a] as usize, occ[b] as usize)] = psi[i];
            }
        }
        if stray > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "weight {stray:e} outside modes `{mode_a}`, `{mode_b}`"
            )));
        }
        Self::new(amps)
    }

    pub fn amplitudes(&self) -> &DMatrix<C64> {
        &self.amplitudes
    }
}

#[derive(Clone, Debug)]
pub struct SchmidtReport {
    pub rank: usize,
    pub entropy_bits: f64,
    pub coefficients: Vec<f64>,
    /// `(left, right)` with `ψ = left ⊗ right` when the rank is one.
    pub factors: Option<(DVector<C64>, DVector<C64>)>,
}

pub fn schmidt_analysis(state: &TwoModeState) -> Result<SchmidtReport> {
    let psi = state.amplitudes();
    let norm = psi.norm();
    if norm == 0.0 {
        return Err(Error::InvalidInput("zero state".into()));
    }
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "state is not normalized (norm {norm})"
        )));
    }
    let svd = linalg::svd(psi)?;
    let coefficients: Vec<f64> = svd.s.iter().copied().collect();
    let rank = coefficients.iter().filter(|s| **s > 1e-9).count();
    let entropy_bits = coefficients
        .iter()
        .map(|s| s * s)
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        .max(0.0);
    let factors = (rank == 1).then(|| {
        let mut left: DVector<C64> = svd.u.column(0).into_owned();
        let mut right: DVector<C64> = svd.v_t.row(0).transpose() * C64::new(coefficients[0], 0.0);
        let pivot = largest_entry(left.iter().copied());
        if pivot.norm() > 0.0 {
            let phase = pivot / pivot.norm();
            left /= phase;
            right *= phase;
        }
        (left, right)
    });
    Ok(SchmidtReport {
        rank,
        entropy_bits,
        coefficients,
        factors,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LeakageReport {
    pub p_two_photon: f64,
    pub p_two_excitation: f64,
    pub p_return: f64,
}

/// Populations after the second pulse of the five-pulse protocol, starting
/// from one collective excitation plus one photon in mode 2 and evolving
/// for mixing angle `θ = g·t`.
pub fn five_pulse_leakage(collective: CollectiveModel, theta: f64) -> Result<LeakageReport> {
    if !theta.is_finite() || theta < 0.0 {
        return Err(Error::InvalidInput(format!(
            "mixing angle must be finite and non-negative, got {theta}"
        )));
    }
    let model = Model::new(vec![
        collective.mode(COLLECTIVE),
        ModeSpec::photonic(PHOTON_2),
    ])?;
    let basis = model.basis(2)?;
    let start = basis.ket(&[1, 1])?;
    let h = model.hamiltonian(
        &basis,
        &PulseSegment::new(Some(Coupling::new(COLLECTIVE, PHOTON_2, 1.0)), theta),
    )?;
    let psi = Propagator::new(&h)?.evolve(&start, theta);
    let population = |occ: &[u32]| basis.index_of(occ).map_or(0.0, |i| psi[i].norm_sqr());
    Ok(LeakageReport {
        p_two_photon: population(&[0, 2]),
        p_two_excitation: population(&[2, 0]),
        p_return: population(&[1, 1]),
    })
}

/// `|⟨0,2|H|1,1⟩| / |⟨2,0|H|1,1⟩|`: stimulated emission into photon 2
/// against absorption of it, from one excitation plus one photon.
pub fn emission_absorption_ratio(collective: CollectiveModel) -> Result<f64> {
    let model = Model::new(vec![
        collective.mode(COLLECTIVE),
        ModeSpec::photonic(PHOTON_2),
    ])?;
    let basis = model.basis(2)?;
    let h = model.hamiltonian(
        &basis,
        &PulseSegment::new(Some(Coupling::new(COLLECTIVE, PHOTON_2, 1.0)), 0.0),
    )?;
    let from = basis.index_of(&[1, 1]).expect("sector 2 holds |1,1⟩");
    let element = |occ: &[u32]| basis.index_of(occ).map_or(0.0, |i| h.matrix()[(i, from)].norm());
    let absorption = element(&[2, 0]);
    if absorption == 0.0 {
        return Err(Error::InvalidInput(
            "a single atom cannot hold two excitations".into(),
        ));
    }
    Ok(element(&[0, 2]) / absorption)
}

/// Serializable view of a [`SchmidtReport`].
#[derive(Clone, Debug, Serialize)]
pub struct SchmidtPayload {
    pub rank: usize,
    pub entropy_bits: f64,
    pub coefficients: Vec<f64>,
    pub factors: Option<[Vec<[f64; 2]>; 2]>,
}

impl From<&SchmidtReport> for SchmidtPayload {
    fn from(r: &SchmidtReport) -> Self {
        Self {
            rank: r.rank,
            entropy_bits: r.entropy_bits,
            coefficients: r.coefficients.clone(),
            factors: r.factors.as_ref().map(|(a, b)| {
                [a, b].map(|v| v.iter().copied().map(complex_pair).collect())
            }),
        }
    }
}
