//! Truncated occupation-number bases and exchange operators.
//!
//! A basis is built over a list of modes. Photonic modes are ordinary
//! bosonic ladders. Collective atomic modes are the fully symmetric Dicke
//! ladder of `N` two-level atoms, indexed by the excitation number `m`;
//! the bosonized collective mode is the large-`N` limit of the same ladder
//! and is a separate kind rather than `N = ∞`.
//!
//! States are ordered by total quanta (ascending) and, within a sector, in
//! descending lexicographic order of the occupation vector, so two photonic
//! modes in sector 2 read `|2,0⟩, |1,1⟩, |0,2⟩`.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Tolerance used when an operator claims to be Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModeKind {
    Photonic,
    /// Symmetric Dicke ladder of a finite number of atoms, `m ≤ atoms`.
    Collective { atoms: u32 },
    /// Collective excitation treated as a harmonic mode.
    Bosonized,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModeSpec {
    pub label: String,
    pub kind: ModeKind,
}

impl ModeSpec {
    pub fn photonic(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            kind: ModeKind::Photonic,
        }
    }

    pub fn collective(label: impl Into<String>, atoms: u32) -> Self {
        Self {
            label: label.into(),
            kind: ModeKind::Collective { atoms },
        }
    }

    pub fn bosonized(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            kind: ModeKind::Bosonized,
        }
    }

    pub fn is_collective(&self) -> bool {
        !matches!(self.kind, ModeKind::Photonic)
    }

    /// Maximum occupation, if the ladder is finite.
    pub fn capacity(&self) -> Option<u32> {
        match self.kind {
            ModeKind::Collective { atoms } => Some(atoms),
            _ => None,
        }
    }

    /// Matrix element of the raising operator from occupation `n` to `n + 1`.
    ///
    /// Bosonic ladders give `√(n+1)`; the finite Dicke ladder gives
    /// `√((N−n)(n+1))`, which vanishes at the top of the ladder.
    pub fn raising_factor(&self, n: u32) -> f64 {
        match self.kind {
            ModeKind::Photonic | ModeKind::Bosonized => f64::from(n + 1).sqrt(),
            ModeKind::Collective { atoms } => {
                if n >= atoms {
                    0.0
                } else {
                    (f64::from(atoms - n) * f64::from(n + 1)).sqrt()
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.label.is_empty() {
            return Err(Error::InvalidInput("mode label must not be empty".into()));
        }
        if let ModeKind::Collective { atoms: 0 } = self.kind {
            return Err(Error::InvalidInput(format!(
                "collective mode `{}` needs at least one atom",
                self.label
            )));
        }
        Ok(())
    }
}

/// Occupation numbers, one per mode of the owning basis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisState(Vec<u32>);

impl BasisState {
    pub fn new(occupations: Vec<u32>) -> Self {
        Self(occupations)
    }

    pub fn occupations(&self) -> &[u32] {
        &self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }
}

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "⟩")
    }
}

#[derive(Clone, Debug)]
pub struct HilbertBasis {
    modes: Vec<ModeSpec>,
    states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
    sectors: (u32, u32),
}

/// All occupation vectors over `modes` with exactly `sector` quanta.
pub fn enumerate_basis(modes: &[ModeSpec], sector: u32) -> Result<HilbertBasis> {
    enumerate_sectors(modes, sector, sector)
}

/// Union of the sectors `0..=max_quanta`.
pub fn enumerate_truncated(modes: &[ModeSpec], max_quanta: u32) -> Result<HilbertBasis> {
    enumerate_sectors(modes, 0, max_quanta)
}

fn enumerate_sectors(modes: &[ModeSpec], lo: u32, hi: u32) -> Result<HilbertBasis> {
    validate_modes(modes)?;
    let mut states = Vec::new();
    let mut scratch = vec![0u32; modes.len()];
    for sector in lo..=hi {
        compositions(modes, 0, sector, &mut scratch, &mut states);
    }
    Ok(HilbertBasis::assemble(modes.to_vec(), states, (lo, hi)))
}

fn compositions(
    modes: &[ModeSpec],
    pos: usize,
    remaining: u32,
    scratch: &mut Vec<u32>,
    out: &mut Vec<BasisState>,
) {
    if pos + 1 == modes.len() {
        if modes[pos].capacity().is_none_or(|cap| remaining <= cap) {
            scratch[pos] = remaining;
            out.push(BasisState(scratch.clone()));
        }
        return;
    }
    let top = modes[pos]
        .capacity()
        .map_or(remaining, |cap| cap.min(remaining));
    for n in (0..=top).rev() {
        scratch[pos] = n;
        compositions(modes, pos + 1, remaining - n, scratch, out);
    }
}

fn validate_modes(modes: &[ModeSpec]) -> Result<()> {
    if modes.is_empty() {
        return Err(Error::InvalidInput("mode list is empty".into()));
    }
    for (i, m) in modes.iter().enumerate() {
        m.validate()?;
        if modes[..i].iter().any(|o| o.label == m.label) {
            return Err(Error::InvalidInput(format!(
                "duplicate mode label `{}`",
                m.label
            )));
        }
    }
    Ok(())
}

impl HilbertBasis {
    /// Basis spanned by an explicit set of states (e.g. a reachable subspace).
    ///
    /// States are re-sorted into the canonical order; duplicates and states
    /// violating a ladder capacity are rejected.
    pub fn from_states(modes: Vec<ModeSpec>, mut states: Vec<BasisState>) -> Result<Self> {
        validate_modes(&modes)?;
        if states.is_empty() {
            return Err(Error::InvalidInput("state list is empty".into()));
        }
        for s in &states {
            if s.0.len() != modes.len() {
                return Err(Error::DimensionMismatch {
                    expected: modes.len(),
                    found: s.0.len(),
                });
            }
            for (n, m) in s.0.iter().zip(&modes) {
                if m.capacity().is_some_and(|cap| *n > cap) {
                    return Err(Error::InvalidInput(format!(
                        "occupation {n} exceeds capacity of mode `{}`",
                        m.label
                    )));
                }
            }
        }
        states.sort_by(|a, b| a.total().cmp(&b.total()).then_with(|| b.0.cmp(&a.0)));
        let before = states.len();
        states.dedup();
        if states.len() != before {
            return Err(Error::InvalidInput("duplicate basis states".into()));
        }
        let lo = states.first().map_or(0, BasisState::total);
        let hi = states.last().map_or(0, BasisState::total);
        Ok(Self::assemble(modes, states, (lo, hi)))
    }

    fn assemble(modes: Vec<ModeSpec>, states: Vec<BasisState>, sectors: (u32, u32)) -> Self {
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Self {
            modes,
            states,
            index,
            sectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn modes(&self) -> &[ModeSpec] {
        &self.modes
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &BasisState {
        &self.states[i]
    }

    /// Lowest and highest total quanta present.
    pub fn sectors(&self) -> (u32, u32) {
        self.sectors
    }

    /// The conserved quanta, when the basis is a single sector.
    pub fn sector(&self) -> Option<u32> {
        (self.sectors.0 == self.sectors.1).then_some(self.sectors.0)
    }

    pub fn mode_index(&self, label: &str) -> Result<usize> {
        self.modes
            .iter()
            .position(|m| m.label == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    pub fn index_of(&self, occupations: &[u32]) -> Option<usize> {
        // HashMap<BasisState, _> cannot be queried by slice without allocating.
        self.index.get(&BasisState(occupations.to_vec())).copied()
    }

    /// Basis vector for the given occupations.
    pub fn ket(&self, occupations: &[u32]) -> Result<DVector<C64>> {
        let i = self.index_of(occupations).ok_or_else(|| {
            Error::InvalidInput(format!(
                "{} is not in the basis",
                BasisState(occupations.to_vec())
            ))
        })?;
        let mut v = DVector::zeros(self.dim());
        v[i] = C64::new(1.0, 0.0);
        Ok(v)
    }

    /// CSV dump: `index,<mode labels...>,total`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string()];
        header.extend(self.modes.iter().map(|m| m.label.clone()));
        header.push("total".into());
        w.write_record(&header)?;
        for (i, s) in self.states.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(s.0.iter().map(u32::to_string));
            row.push(s.total().to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Complex matrix in a fixed basis.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    basis: Arc<HilbertBasis>,
    matrix: DMatrix<C64>,
    hermitian: bool,
}

impl OperatorMatrix {
    /// Wraps `matrix`. When `hermitian` is set the claim is checked to
    /// [`HERMITIAN_TOL`].
    pub fn new(basis: Arc<HilbertBasis>, matrix: DMatrix<C64>, hermitian: bool) -> Result<Self> {
        let d = basis.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        let op = Self {
            basis,
            matrix,
            hermitian,
        };
        if hermitian {
            let defect = op.hermiticity_defect();
            if defect.is_nan() || defect > HERMITIAN_TOL {
                return Err(Error::InvalidInput(format!(
                    "operator flagged Hermitian has defect {defect:e}"
                )));
            }
        }
        Ok(op)
    }

    pub fn zeros(basis: &Arc<HilbertBasis>) -> Self {
        let d = basis.dim();
        Self {
            basis: Arc::clone(basis),
            matrix: DMatrix::zeros(d, d),
            hermitian: true,
        }
    }

    pub fn identity(basis: &Arc<HilbertBasis>) -> Self {
        let d = basis.dim();
        Self {
            basis: Arc::clone(basis),
            matrix: DMatrix::identity(d, d),
            hermitian: true,
        }
    }

    /// Diagonal operator `Σ_modes c_mode · n_mode`.
    pub fn diagonal_from_modes(basis: &Arc<HilbertBasis>, weights: &[(usize, C64)]) -> Self {
        let d = basis.dim();
        let mut m = DMatrix::zeros(d, d);
        for (i, s) in basis.states().iter().enumerate() {
            m[(i, i)] = weights
                .iter()
                .map(|(mode, c)| c * f64::from(s.occupations()[*mode]))
                .sum();
        }
        let hermitian = weights.iter().all(|(_, c)| c.im == 0.0);
        Self {
            basis: Arc::clone(basis),
            matrix: m,
            hermitian,
        }
    }

    /// Number operator of one mode.
    pub fn number(basis: &Arc<HilbertBasis>, label: &str) -> Result<Self> {
        let mode = basis.mode_index(label)?;
        Ok(Self::diagonal_from_modes(basis, &[(mode, C64::new(1.0, 0.0))]))
    }

    /// Total-quanta operator.
    pub fn total_quanta(basis: &Arc<HilbertBasis>) -> Self {
        let weights: Vec<_> = (0..basis.modes().len())
            .map(|m| (m, C64::new(1.0, 0.0)))
            .collect();
        Self::diagonal_from_modes(basis, &weights)
    }

    pub fn basis(&self) -> &Arc<HilbertBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `max |A − A†|` over entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..=i {
                let diff = (self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm();
                worst = worst.max(diff);
            }
        }
        worst
    }

    /// Entrywise max of `[A, B]`.
    pub fn commutator_norm(&self, other: &OperatorMatrix) -> Result<f64> {
        self.check_same_basis(other)?;
        let c = &self.matrix * &other.matrix - &other.matrix * &self.matrix;
        Ok(c.iter().map(|z| z.norm()).fold(0.0, f64::max))
    }

    pub fn plus(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.check_same_basis(other)?;
        Ok(Self {
            basis: Arc::clone(&self.basis),
            matrix: &self.matrix + &other.matrix,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    pub fn scaled(&self, factor: C64) -> OperatorMatrix {
        Self {
            basis: Arc::clone(&self.basis),
            matrix: &self.matrix * factor,
            hermitian: self.hermitian && factor.im == 0.0,
        }
    }

    fn check_same_basis(&self, other: &OperatorMatrix) -> Result<()> {
        if !Arc::ptr_eq(&self.basis, &other.basis) && self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// CSV dump of non-zero entries: `row,col,re,im`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "re", "im"])?;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                let z = self.matrix[(i, j)];
                if z != C64::new(0.0, 0.0) {
                    w.write_record(&[
                        i.to_string(),
                        j.to_string(),
                        crate::report::fmt_f64(z.re),
                        crate::report::fmt_f64(z.im),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `g·(A†B + B†A)` between two modes of `basis`.
///
/// Transitions leading outside the basis (ladder tops, truncated subspaces)
/// are dropped.
pub fn exchange_coupling(
    basis: &Arc<HilbertBasis>,
    mode_a: &str,
    mode_b: &str,
    g: f64,
) -> Result<OperatorMatrix> {
    let a = basis.mode_index(mode_a)?;
    let b = basis.mode_index(mode_b)?;
    if a == b {
        return Err(Error::InvalidInput(format!(
            "exchange coupling needs two distinct modes, got `{mode_a}` twice"
        )));
    }
    if !g.is_finite() {
        return Err(Error::NonFinite("coupling strength"));
    }
    let spec_a = &basis.modes()[a];
    let spec_b = &basis.modes()[b];
    let d = basis.dim();
    let mut m = DMatrix::<C64>::zeros(d, d);
    let mut target = Vec::with_capacity(basis.modes().len());
    for (col, s) in basis.states().iter().enumerate() {
        let occ = s.occupations();
        if occ[a] == 0 {
            continue;
        }
        // B†A: one quantum moves from a to b.
        let amp = spec_a.raising_factor(occ[a] - 1) * spec_b.raising_factor(occ[b]);
        if amp == 0.0 {
            continue;
        }
        target.clear();
        target.extend_from_slice(occ);
        target[a] -= 1;
        target[b] += 1;
        if let Some(row) = basis.index_of(&target) {
            m[(row, col)] += C64::new(g * amp, 0.0);
            m[(col, row)] += C64::new(g * amp, 0.0);
        }
    }
    OperatorMatrix::new(Arc::clone(basis), m, true)
}

pub fn apply(op: &OperatorMatrix, state: &DVector<C64>) -> Result<DVector<C64>> {
    if state.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            found: state.len(),
        });
    }
    Ok(op.matrix() * state)
}

/// Atom positions in units of `1/|k|`.
#[derive(Clone, Debug)]
pub struct AtomCloud {
    positions: Vec<Vector3<f64>>,
}

impl AtomCloud {
    pub fn new(positions: Vec<Vector3<f64>>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidInput("atom cloud is empty".into()));
        }
        if positions.iter().any(|r| r.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("atom position"));
        }
        Ok(Self { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }
}

/// Matrix element `⟨p(q_t)| Σ_j M e^{i q·r_j} |e_j⟩⟨g_j| |G⟩` with
/// `q = k_photon − k_laser`.
///
/// `k_laser = None` is a direct transition. The Dicke state `|p(q_t)⟩`
/// defaults to the phase-matched one, `q_t = q`, which yields `√N·M` for
/// any cloud.
pub fn dicke_matrix_element(
    cloud: &AtomCloud,
    k_photon: Vector3<f64>,
    k_laser: Option<Vector3<f64>>,
    target: Option<Vector3<f64>>,
    coupling: f64,
) -> Result<C64> {
    let all_finite = k_photon
        .iter()
        .chain(k_laser.iter().flatten())
        .chain(target.iter().flatten())
        .all(|x| x.is_finite());
    if !all_finite || !coupling.is_finite() {
        return Err(Error::NonFinite("wavevector or coupling"));
    }
    let q = k_photon - k_laser.unwrap_or_else(Vector3::zeros);
    let residual = q - target.unwrap_or(q);
    let n = cloud.len() as f64;
    let sum: C64 = cloud
        .positions
        .iter()
        .map(|r| C64::from_polar(1.0, residual.dot(r)))
        .sum();
    Ok(sum * (coupling / n.sqrt()))
}
