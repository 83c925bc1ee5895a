//! Rayleigh–Schrödinger energy corrections for two photon modes coupled to
//! `N` distinguishable two-level atoms, with optional `−i·w` widths on a
//! chosen class of unperturbed levels.
//!
//! Energies are measured from the reference `|n1, n2, all ground⟩`; moving a
//! photon of mode `i` into an atom costs `+δ_i`.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{PHOTON_1, PHOTON_2};
use crate::error::{Error, Result};
use crate::hilbert::{exchange_coupling, BasisState, HilbertBasis, ModeSpec, OperatorMatrix};
use crate::linalg;
use crate::report::{complex_pair, fmt_f64};

/// Grid of photon numbers used for the polynomial fit.
pub const FIT_GRID: [u32; 3] = [1, 2, 3];
const MAX_CONDITION: f64 = 1e10;

fn atom_label(j: u32) -> String {
    format!("atom{j}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionModelParams {
    /// Single-atom coupling `M`.
    pub m: f64,
    pub atoms: u32,
    pub delta1: f64,
    pub delta2: f64,
    /// Reference detuning `δ ≈ δ1 ≈ δ2` used by the closed forms.
    pub delta: f64,
    pub w: f64,
    pub f_r: f64,
    pub n1: u32,
    pub n2: u32,
}

impl CollisionModelParams {
    /// `M = 1`, `δ = (δ1 + δ2)/2`, no width, `f_R = 1`, one photon per mode.
    pub fn new(atoms: u32, delta1: f64, delta2: f64) -> Self {
        Self {
            m: 1.0,
            atoms,
            delta1,
            delta2,
            delta: 0.5 * (delta1 + delta2),
            w: 0.0,
            f_r: 1.0,
            n1: 1,
            n2: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("m", self.m),
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("delta", self.delta),
            ("w", self.w),
            ("f_r", self.f_r),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(Error::validation(field, "must be finite"));
            }
        }
        if self.atoms < 2 {
            return Err(Error::validation("atoms", "pair terms need at least two atoms"));
        }
        if self.delta1 == self.delta2 {
            return Err(Error::validation("delta2", "must differ from delta1"));
        }
        if self.delta == 0.0 {
            return Err(Error::validation("delta", "must be non-zero"));
        }
        if self.w < 0.0 {
            return Err(Error::validation("w", "must be non-negative"));
        }
        if !(self.f_r > 0.0 && self.f_r <= 1.0) {
            return Err(Error::validation("f_r", "must lie in (0, 1]"));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::validation("n1", "photon numbers must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidthSelector {
    None,
    /// Each excited atom adds `−i·w`.
    ExcitedAtomStates,
    /// The states with no excitation and one photon moved between modes.
    ExchangedPhotonGroundStates,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidthRule {
    pub selector: WidthSelector,
    #[serde(default)]
    pub w: f64,
}

impl WidthRule {
    pub fn none() -> Self {
        Self {
            selector: WidthSelector::None,
            w: 0.0,
        }
    }

    pub fn new(selector: WidthSelector, w: f64) -> Result<Self> {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::validation("w", "width must be finite and non-negative"));
        }
        Ok(Self { selector, w })
    }
}

#[derive(Clone, Debug)]
pub struct PerturbationProblem {
    basis: Arc<HilbertBasis>,
    energies: DVector<C64>,
    coupling: OperatorMatrix,
    reference: usize,
    energy_scale: f64,
    /// Atom whose occupation changes along each nonzero coupling, row-major.
    edge_atoms: Option<Vec<Option<u32>>>,
}

impl PerturbationProblem {
    /// Generic problem on an explicit basis; paths are left unclassified.
    pub fn new(energies: DVector<C64>, coupling: OperatorMatrix, reference: usize) -> Result<Self> {
        let dim = coupling.dim();
        if energies.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: energies.len(),
            });
        }
        if reference >= dim {
            return Err(Error::InvalidInput(format!(
                "reference index {reference} outside basis of dimension {dim}"
            )));
        }
        if energies.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("unperturbed energies"));
        }
        if (0..dim).any(|i| coupling.matrix()[(i, i)].norm() != 0.0) {
            return Err(Error::InvalidInput("coupling must have zero diagonal".into()));
        }
        let e0 = energies[reference];
        let energy_scale = energies.iter().map(|e| (e - e0).norm()).fold(0.0, f64::max);
        Ok(Self {
            basis: Arc::clone(coupling.basis()),
            energies,
            coupling,
            reference,
            energy_scale,
            edge_atoms: None,
        })
    }

    pub fn basis(&self) -> &Arc<HilbertBasis> {
        &self.basis
    }

    pub fn energies(&self) -> &DVector<C64> {
        &self.energies
    }

    pub fn coupling(&self) -> &OperatorMatrix {
        &self.coupling
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    fn edge_atom(&self, from: usize, to: usize) -> Option<u32> {
        self.edge_atoms
            .as_ref()
            .and_then(|e| e[from * self.basis.dim() + to])
    }
}

fn neighbours(occ: &[u32]) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for j in 2..occ.len() {
        for photon in 0..2 {
            let mut next = occ.to_vec();
            if occ[j] == 1 {
                next[j] = 0;
                next[photon] += 1;
                out.push(next);
            } else if occ[photon] > 0 {
                next[j] = 1;
                next[photon] -= 1;
                out.push(next);
            }
        }
    }
    out
}

/// Builds the truncated problem: every state within two couplings of the
/// reference, which is all fourth order needs.
pub fn build_problem(params: &CollisionModelParams, rule: WidthRule) -> Result<PerturbationProblem> {
    params.validate()?;
    WidthRule::new(rule.selector, rule.w)?;
    let mut modes = vec![ModeSpec::photonic(PHOTON_1), ModeSpec::photonic(PHOTON_2)];
    modes.extend((0..params.atoms).map(|j| ModeSpec::collective(atom_label(j), 1)));

    let mut reference = vec![0u32; modes.len()];
    reference[0] = params.n1;
    reference[1] = params.n2;
    let mut seen: HashSet<Vec<u32>> = HashSet::from([reference.clone()]);
    let mut queue = VecDeque::from([(reference.clone(), 0u32)]);
    while let Some((occ, depth)) = queue.pop_front() {
        if depth == 2 {
            continue;
        }
        for next in neighbours(&occ) {
            if seen.insert(next.clone()) {
                queue.push_back((next, depth + 1));
            }
        }
    }
    let states: Vec<BasisState> = seen.into_iter().map(BasisState::new).collect();
    let basis = Arc::new(HilbertBasis::from_states(modes, states)?);

    let mut coupling = OperatorMatrix::zeros(&basis);
    for photon in [PHOTON_1, PHOTON_2] {
        for j in 0..params.atoms {
            coupling = coupling.plus(&exchange_coupling(&basis, photon, &atom_label(j), params.m)?)?;
        }
    }

    let (n1, n2) = (i64::from(params.n1), i64::from(params.n2));
    let energies = DVector::from_iterator(
        basis.dim(),
        basis.states().iter().map(|s| {
            let occ = s.occupations();
            let removed1 = (n1 - i64::from(occ[0])) as f64;
            let removed2 = (n2 - i64::from(occ[1])) as f64;
            let excited: u32 = occ[2..].iter().sum();
            let width = match rule.selector {
                WidthSelector::None => 0.0,
                WidthSelector::ExcitedAtomStates => rule.w * f64::from(excited),
                WidthSelector::ExchangedPhotonGroundStates => {
                    let moved = (removed1 == 1.0 && removed2 == -1.0)
                        || (removed1 == -1.0 && removed2 == 1.0);
                    if excited == 0 && moved {
                        rule.w
                    } else {
                        0.0
                    }
                }
            };
            C64::new(removed1 * params.delta1 + removed2 * params.delta2, -width)
        }),
    );

    let dim = basis.dim();
    let mut edge_atoms = vec![None; dim * dim];
    for (i, si) in basis.states().iter().enumerate() {
        for (k, sk) in basis.states().iter().enumerate() {
            if coupling.matrix()[(i, k)].norm() == 0.0 {
                continue;
            }
            let atom = (2..si.occupations().len())
                .find(|&m| si.occupations()[m] != sk.occupations()[m])
                .map(|m| (m - 2) as u32);
            edge_atoms[i * dim + k] = atom;
        }
    }

    let reference = basis.index_of(&reference).expect("reference is in its own closure");
    Ok(PerturbationProblem {
        basis,
        energies,
        coupling,
        reference,
        energy_scale: params.delta.abs(),
        edge_atoms: Some(edge_atoms),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PathDiagnostics {
    pub single_atom_paths: usize,
    pub pair_paths: usize,
    pub unclassified_paths: usize,
    pub renormalization_terms: usize,
}

impl PathDiagnostics {
    fn merge(self, o: Self) -> Self {
        Self {
            single_atom_paths: self.single_atom_paths + o.single_atom_paths,
            pair_paths: self.pair_paths + o.pair_paths,
            unclassified_paths: self.unclassified_paths + o.unclassified_paths,
            renormalization_terms: self.renormalization_terms + o.renormalization_terms,
        }
    }
}

/// Fourth-order correction split by which atoms a path touches.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FourthOrderSplit {
    pub single_atom: C64,
    pub pair: C64,
    pub unclassified: C64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationResult {
    pub order: u8,
    /// `E⁽¹⁾ … E⁽⁴⁾`; orders above `order` are zero.
    pub corrections: [C64; 4],
    pub fourth_order: FourthOrderSplit,
    /// Largest modulus of a single summand of `E⁽⁴⁾`.
    pub largest_term: f64,
    pub diagnostics: PathDiagnostics,
}

impl PerturbationResult {
    pub fn total(&self) -> C64 {
        self.corrections.iter().sum()
    }
}

#[derive(Clone, Copy, Default)]
struct Partial {
    single: C64,
    pair: C64,
    other: C64,
    largest: f64,
    diag: PathDiagnostics,
}

impl Partial {
    fn add(&mut self, term: C64, atoms: &[Option<u32>], renormalization: bool) {
        self.largest = self.largest.max(term.norm());
        if renormalization {
            self.diag.renormalization_terms += 1;
        }
        let distinct: Option<BTreeSet<u32>> = atoms.iter().copied().collect();
        match distinct {
            Some(set) if set.len() == 1 => {
                self.single += term;
                if !renormalization {
                    self.diag.single_atom_paths += 1;
                }
            }
            Some(_) => {
                self.pair += term;
                if !renormalization {
                    self.diag.pair_paths += 1;
                }
            }
            None => {
                self.other += term;
                if !renormalization {
                    self.diag.unclassified_paths += 1;
                }
            }
        }
    }

    fn merge(self, o: Self) -> Self {
        Self {
            single: self.single + o.single,
            pair: self.pair + o.pair,
            other: self.other + o.other,
            largest: self.largest.max(o.largest),
            diag: self.diag.merge(o.diag),
        }
    }
}

/// Nondegenerate corrections through `order` (1 to 4).
///
/// Denominators are `E_ref − E_k` with complex energies used as given; the
/// fourth order includes the `−E⁽²⁾·Σ|V_0k|²/D_k²` renormalization term.
pub fn rspt_energy(problem: &PerturbationProblem, order: u8) -> Result<PerturbationResult> {
    if !(1..=4).contains(&order) {
        return Err(Error::InvalidInput(format!("order must be 1..4, got {order}")));
    }
    let v = problem.coupling.matrix();
    let r = problem.reference;
    let dim = problem.basis.dim();
    let e0 = problem.energies[r];
    let denom: Vec<C64> = problem.energies.iter().map(|e| e0 - e).collect();
    for k in (0..dim).filter(|&k| k != r) {
        if denom[k].norm() <= 1e-9 * problem.energy_scale || denom[k].norm() == 0.0 {
            return Err(Error::Singularity {
                state: problem.basis.state(k).to_string(),
            });
        }
    }

    // sparse rows: adj[i] = [(k, V_ik)] for k ≠ reference
    let adj: Vec<Vec<(usize, C64)>> = (0..dim)
        .map(|i| {
            (0..dim)
                .filter(|&k| k != r && v[(i, k)].norm() != 0.0)
                .map(|k| (k, v[(i, k)]))
                .collect()
        })
        .collect();

    let mut corrections = [C64::new(0.0, 0.0); 4];
    corrections[0] = v[(r, r)];
    let e2: C64 = adj[r].iter().map(|&(k, vrk)| vrk * v[(k, r)] / denom[k]).sum();
    if order >= 2 {
        corrections[1] = e2;
    }
    if order >= 3 {
        corrections[2] = adj[r]
            .iter()
            .flat_map(|&(k, vrk)| {
                adj[k]
                    .iter()
                    .map(move |&(l, vkl)| (k, l, vrk * vkl))
            })
            .map(|(k, l, p)| p * v[(l, r)] / (denom[k] * denom[l]))
            .sum();
    }
    let mut split = FourthOrderSplit::default();
    let mut largest_term = 0.0;
    let mut diagnostics = PathDiagnostics::default();
    if order >= 4 {
        let partials: Vec<Partial> = adj[r]
            .par_iter()
            .map(|&(k, vrk)| {
                let mut acc = Partial::default();
                let e_rk = problem.edge_atom(r, k);
                for &(l, vkl) in &adj[k] {
                    let e_kl = problem.edge_atom(k, l);
                    for &(m, vlm) in &adj[l] {
                        let vmr = v[(m, r)];
                        if vmr.norm() == 0.0 {
                            continue;
                        }
                        let term = vrk * vkl * vlm * vmr / (denom[k] * denom[l] * denom[m]);
                        acc.add(
                            term,
                            &[e_rk, e_kl, problem.edge_atom(l, m), problem.edge_atom(m, r)],
                            false,
                        );
                    }
                }
                for &(kk, vrkk) in &adj[r] {
                    let term = -(vrk * v[(k, r)] / denom[k])
                        * (vrkk * v[(kk, r)] / (denom[kk] * denom[kk]));
                    acc.add(term, &[e_rk, problem.edge_atom(r, kk)], true);
                }
                acc
            })
            .collect();
        let total = partials.into_iter().fold(Partial::default(), Partial::merge);
        split = FourthOrderSplit {
            single_atom: total.single,
            pair: total.pair,
            unclassified: total.other,
        };
        corrections[3] = total.single + total.pair + total.other;
        largest_term = total.largest;
        diagnostics = total.diag;
    }
    Ok(PerturbationResult {
        order,
        corrections,
        fourth_order: split,
        largest_term,
        diagnostics,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrossCoefficient {
    /// `n1·n2` coefficient of the pair (two-atom) part of `E⁽⁴⁾`.
    pub value: C64,
    /// Same coefficient for paths confined to one atom.
    pub single_atom: C64,
    pub total: C64,
    /// Largest least-squares residual norm among the three fits.
    pub fit_residual: f64,
    /// Largest single summand over the whole grid.
    pub largest_term: f64,
    pub diagnostics: PathDiagnostics,
}

/// Fits `E⁽⁴⁾(n1, n2)` over [`FIT_GRID`]² to `{1, n1, n2, n1², n2², n1·n2}`.
pub fn cross_coefficient(params: &CollisionModelParams, rule: WidthRule) -> Result<CrossCoefficient> {
    params.validate()?;
    let points: Vec<(u32, u32)> = FIT_GRID
        .iter()
        .flat_map(|&a| FIT_GRID.iter().map(move |&b| (a, b)))
        .collect();
    let results: Vec<Result<PerturbationResult>> = points
        .par_iter()
        .map(|&(n1, n2)| {
            let p = CollisionModelParams {
                n1,
                n2,
                ..params.clone()
            };
            rspt_energy(&build_problem(&p, rule)?, 4)
        })
        .collect();
    let results: Vec<PerturbationResult> = results.into_iter().collect::<Result<_>>()?;

    let design = DMatrix::from_fn(points.len(), 6, |i, j| {
        let (a, b) = (f64::from(points[i].0), f64::from(points[i].1));
        C64::new([1.0, a, b, a * a, b * b, a * b][j], 0.0)
    });
    let svd = linalg::svd(&design)?;
    let cond = svd.s[0] / svd.s[svd.s.len() - 1];
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::IllConditioned(cond));
    }
    let pinv = svd.v_t.adjoint()
        * DMatrix::from_diagonal(&svd.s.map(|s| C64::new(1.0 / s, 0.0)))
        * svd.u.adjoint();
    let fit = |pick: &dyn Fn(&PerturbationResult) -> C64| {
        let y = DVector::from_iterator(results.len(), results.iter().map(pick));
        let c = &pinv * &y;
        ((&design * &c - y).norm(), c[5])
    };
    let (r_pair, pair) = fit(&|r| r.fourth_order.pair);
    let (r_single, single) = fit(&|r| r.fourth_order.single_atom);
    let (r_total, total) = fit(&|r| r.corrections[3]);

    let largest_term = results.iter().map(|r| r.largest_term).fold(0.0, f64::max);
    let diagnostics = results
        .iter()
        .map(|r| r.diagnostics)
        .fold(PathDiagnostics::default(), PathDiagnostics::merge);
    Ok(CrossCoefficient {
        value: pair,
        single_atom: single,
        total,
        fit_residual: r_pair.max(r_single).max(r_total),
        largest_term,
        diagnostics,
    })
}

/// Closed-form nonlinear energy `ΔE` and its imaginary companion `ΔE′`.
pub fn franson_formula(params: &CollisionModelParams) -> Result<(C64, C64)> {
    params.validate()?;
    let p = params;
    let split = p.delta1 - p.delta2;
    let n = f64::from(p.atoms);
    let common = -2.0 * p.m.powi(4) * n * n * f64::from(p.n1) * f64::from(p.n2) * p.f_r
        / (split * split);
    let de = C64::new(common * p.w * p.w / p.delta.powi(3), 0.0);
    let de_prime = C64::new(0.0, common * p.w / (p.delta * p.delta));
    Ok((de, de_prime))
}

/// JSON form of a perturbation run.
#[derive(Clone, Debug, Serialize)]
pub struct PerturbationPayload {
    pub params: CollisionModelParams,
    pub rule: WidthRule,
    pub corrections: Vec<[f64; 2]>,
    pub fourth_order_single_atom: [f64; 2],
    pub fourth_order_pair: [f64; 2],
    pub cross_coefficient: [f64; 2],
    pub cross_coefficient_single_atom: [f64; 2],
    pub cross_coefficient_total: [f64; 2],
    pub largest_term: f64,
    pub relative_cross_coefficient: f64,
    pub im_re_ratio: Option<f64>,
    pub fit_residual: f64,
    pub basis_dim: usize,
    pub diagnostics: PathDiagnostics,
    pub closed_form: Option<[[f64; 2]; 2]>,
}

pub fn payload(params: &CollisionModelParams, rule: WidthRule) -> Result<PerturbationPayload> {
    let problem = build_problem(params, rule)?;
    let res = rspt_energy(&problem, 4)?;
    let cross = cross_coefficient(params, rule)?;
    let closed = franson_formula(params)?;
    Ok(PerturbationPayload {
        params: params.clone(),
        rule,
        corrections: res.corrections.iter().copied().map(complex_pair).collect(),
        fourth_order_single_atom: complex_pair(res.fourth_order.single_atom),
        fourth_order_pair: complex_pair(res.fourth_order.pair),
        cross_coefficient: complex_pair(cross.value),
        cross_coefficient_single_atom: complex_pair(cross.single_atom),
        cross_coefficient_total: complex_pair(cross.total),
        largest_term: cross.largest_term,
        relative_cross_coefficient: cross.value.norm() / cross.largest_term,
        im_re_ratio: (cross.value.re != 0.0).then(|| (cross.value.im / cross.value.re).abs()),
        fit_residual: cross.fit_residual,
        basis_dim: problem.basis().dim(),
        diagnostics: res.diagnostics,
        closed_form: (params.w > 0.0).then(|| [complex_pair(closed.0), complex_pair(closed.1)]),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub atoms: u32,
    pub w: f64,
    pub delta_split: f64,
    pub cross: C64,
    pub relative: f64,
    pub fit_residual: f64,
    pub closed_form: C64,
}

/// Cross coefficient over every `(N, w, δ1 − δ2)` combination, keeping
/// `δ1` and the selector of `rule` fixed.
pub fn scan(
    base: &CollisionModelParams,
    selector: WidthSelector,
    atoms: &[u32],
    widths: &[f64],
    splits: &[f64],
) -> Result<Vec<ScanRow>> {
    let mut points = Vec::new();
    for &n in atoms {
        for &w in widths {
            for &s in splits {
                points.push((n, w, s));
            }
        }
    }
    points
        .par_iter()
        .map(|&(n, w, s)| {
            let p = CollisionModelParams {
                atoms: n,
                w,
                delta2: base.delta1 - s,
                ..base.clone()
            };
            let cross = cross_coefficient(&p, WidthRule::new(selector, w)?)?;
            let (de, dep) = franson_formula(&p)?;
            Ok(ScanRow {
                atoms: n,
                w,
                delta_split: s,
                cross: cross.value,
                relative: cross.value.norm() / cross.largest_term,
                fit_residual: cross.fit_residual,
                closed_form: de + dep,
            })
        })
        .collect()
}

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "atoms",
        "w",
        "delta_split",
        "cross_re",
        "cross_im",
        "relative",
        "fit_residual",
        "closed_form_re",
        "closed_form_im",
    ])?;
    for r in rows {
        w.write_record([
            r.atoms.to_string(),
            fmt_f64(r.w),
            fmt_f64(r.delta_split),
            fmt_f64(r.cross.re),
            fmt_f64(r.cross.im),
            fmt_f64(r.relative),
            fmt_f64(r.fit_residual),
            fmt_f64(r.closed_form.re),
            fmt_f64(r.closed_form.im),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(v: f64, gap: f64) -> PerturbationProblem {
        let modes = vec![ModeSpec::photonic("a"), ModeSpec::photonic("b")];
        let basis = Arc::new(crate::hilbert::enumerate_basis(&modes, 1).unwrap());
        let coupling = exchange_coupling(&basis, "a", "b", v).unwrap();
        let r = basis.index_of(&[1, 0]).unwrap();
        let mut e = DVector::zeros(2);
        e[1 - r] = C64::new(-gap, 0.0);
        PerturbationProblem::new(e, coupling, r).unwrap()
    }

    #[test]
    fn two_level_expansion() {
        let (v, gap) = (0.03, 1.7);
        let res = rspt_energy(&toy(v, gap), 4).unwrap();
        assert!((res.corrections[1].re - v * v / gap).abs() < 1e-15);
        assert!((res.corrections[3].re + v.powi(4) / gap.powi(3)).abs() < 1e-18);
        assert_eq!(res.corrections[0], C64::new(0.0, 0.0));
        assert_eq!(res.corrections[2], C64::new(0.0, 0.0));
    }

    #[test]
    fn zero_coupling_vanishes() {
        let res = rspt_energy(&toy(0.0, 1.0), 4).unwrap();
        assert!(res.corrections.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn order_truncates() {
        let res = rspt_energy(&toy(0.1, 1.0), 2).unwrap();
        assert_eq!(res.corrections[3], C64::new(0.0, 0.0));
        assert!(rspt_energy(&toy(0.1, 1.0), 5).is_err());
    }

    #[test]
    fn degenerate_reference_is_singular() {
        assert!(matches!(
            rspt_energy(&toy(0.1, 0.0), 2),
            Err(Error::Singularity { .. })
        ));
    }

    #[test]
    fn reachable_basis_size() {
        let p = CollisionModelParams::new(2, 1.0, 0.9);
        let problem = build_problem(&p, WidthRule::none()).unwrap();
        assert_eq!(problem.basis().dim(), 8);
        assert!(matches!(
            build_problem(&CollisionModelParams::new(1, 1.0, 0.9), WidthRule::none()),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn width_selectors() {
        let mut p = CollisionModelParams::new(3, 1.0, 0.9);
        p.n1 = 2;
        p.n2 = 2;
        let w = 0.05;
        let exc = build_problem(&p, WidthRule::new(WidthSelector::ExcitedAtomStates, w).unwrap())
            .unwrap();
        for (s, e) in exc.basis().states().iter().zip(exc.energies().iter()) {
            let excited: u32 = s.occupations()[2..].iter().sum();
            assert_eq!(e.im, -w * f64::from(excited));
        }
        let exch = build_problem(
            &p,
            WidthRule::new(WidthSelector::ExchangedPhotonGroundStates, w).unwrap(),
        )
        .unwrap();
        for (s, e) in exch.basis().states().iter().zip(exch.energies().iter()) {
            let o = s.occupations();
            let ground = o[2..].iter().all(|x| *x == 0);
            let moved = (o[0], o[1]) == (3, 1) || (o[0], o[1]) == (1, 3);
            assert_eq!(e.im != 0.0, ground && moved, "{s}");
        }
    }

    #[test]
    fn second_order_has_no_cross_term() {
        // E2 is linear in each occupation separately
        let e2 = |n1, n2| {
            let p = CollisionModelParams { n1, n2, ..CollisionModelParams::new(3, 1.0, 0.8) };
            rspt_energy(&build_problem(&p, WidthRule::none()).unwrap(), 2)
                .unwrap()
                .corrections[1]
        };
        let mixed = e2(2, 2) - e2(2, 1) - e2(1, 2) + e2(1, 1);
        assert!(mixed.norm() < 1e-13);
        let lin = e2(3, 1) - 2.0 * e2(2, 1) + e2(1, 1);
        assert!(lin.norm() < 1e-13);
    }

    #[test]
    fn cancellation_without_width() {
        let c = cross_coefficient(&CollisionModelParams::new(2, 1.0, 0.9), WidthRule::none())
            .unwrap();
        assert!(c.value.norm() < 1e-10 * c.largest_term);
        assert!(c.single_atom.norm() > 1e-3, "one atom alone is nonlinear");
        assert!(c.diagnostics.pair_paths > 0);
    }

    #[test]
    fn exchanged_width_golden() {
        let rule = WidthRule::new(WidthSelector::ExchangedPhotonGroundStates, 1e-2).unwrap();
        let c = cross_coefficient(&CollisionModelParams::new(2, 1.0, 0.9), rule).unwrap();
        assert!((c.value - C64::new(-0.046449, -4.424887)).norm() < 1e-5, "{}", c.value);
    }

    #[test]
    fn closed_form_examples() {
        let mut p = CollisionModelParams::new(3, 1.0, 0.95);
        let (a, b) = franson_formula(&p).unwrap();
        assert_eq!((a.norm(), b.norm()), (0.0, 0.0));
        p.w = 1e-3;
        let (a, b) = franson_formula(&p).unwrap();
        assert!((b.norm() / a.norm() - p.delta / p.w).abs() < 1e-9 * p.delta / p.w);
        p.atoms = 6;
        let (a2, b2) = franson_formula(&p).unwrap();
        assert!((a2.norm() / a.norm() - 4.0).abs() < 1e-12);
        assert!((b2.norm() / b.norm() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn scan_rows_follow_grid_order() {
        let rows = scan(
            &CollisionModelParams::new(2, 1.0, 0.9),
            WidthSelector::ExchangedPhotonGroundStates,
            &[2, 3],
            &[0.0, 0.01],
            &[0.1],
        )
        .unwrap();
        let keys: Vec<(u32, f64)> = rows.iter().map(|r| (r.atoms, r.w)).collect();
        assert_eq!(keys, vec![(2, 0.0), (2, 0.01), (3, 0.0), (3, 0.01)]);
        assert!(rows[0].relative < 1e-10);
        let mut buf = Vec::new();
        write_scan_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn hermitian_corrections_are_real(
            atoms in 2u32..4,
            d2 in 0.5f64..0.99,
            n1 in 1u32..4,
            n2 in 1u32..4,
        ) {
            let p = CollisionModelParams { n1, n2, ..CollisionModelParams::new(atoms, 1.0, d2) };
            let res = rspt_energy(&build_problem(&p, WidthRule::none()).unwrap(), 4).unwrap();
            for k in [1, 3] {
                let c = res.corrections[k];
                prop_assert!(c.im.abs() <= 1e-12 * c.re.abs());
            }
        }

        #[test]
        fn toy_matches_exact_eigenvalue(v in 1e-3f64..0.05, gap in 0.5f64..3.0) {
            let res = rspt_energy(&toy(v, gap), 4).unwrap();
            // exact: −gap/2 + (gap/2)·√(1 + x), x = 4v²/gap²
            let x = 4.0 * v * v / (gap * gap);
            let (t2, t4) = (gap / 2.0 * x / 2.0, -gap / 2.0 * x * x / 8.0);
            prop_assert!((res.corrections[1].re - t2).abs() <= 1e-12 * t2.abs());
            prop_assert!((res.corrections[3].re - t4).abs() <= 1e-12 * t4.abs());
        }
    }
}
