mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use photon_exchange::dynamics::{
    evolve_schedule, CollectiveModel, Coupling, Model, PulseSchedule, PulseSegment, COLLECTIVE,
    PHOTON_1, PHOTON_2,
};
use photon_exchange::gates::{extract_gate, schmidt_analysis, LogicalEncoding, TwoModeState};
use photon_exchange::hilbert::{enumerate_basis, exchange_coupling, ModeSpec};
use photon_exchange::perturbation::{
    build_problem, cross_coefficient, franson_formula, rspt_energy, CollisionModelParams,
    PerturbationProblem, WidthRule, WidthSelector,
};

fn exchanged(w: f64) -> WidthRule {
    WidthRule::new(WidthSelector::ExchangedPhotonGroundStates, w).unwrap()
}

#[test]
fn cross_coefficient_ratio_to_closed_form_converges() {
    for atoms in [2u32, 3, 4] {
        let ratio = |split: f64, w: f64| {
            let mut p = CollisionModelParams::new(atoms, 1.0 + split / 2.0, 1.0 - split / 2.0);
            p.w = w;
            let numeric = cross_coefficient(&p, exchanged(w)).unwrap().value;
            let (de, dep) = franson_formula(&p).unwrap();
            numeric / (de + dep)
        };
        let a = ratio(1e-2, 2.5e-5);
        let b = ratio(5e-3, 6.25e-6);
        assert!((a - b).norm() < 0.1 * b.norm(), "N={atoms}: {a} vs {b}");
        assert!(b.im.abs() < 1e-6 * b.re.abs());
    }
}

#[test]
fn real_part_sign_and_dominant_imaginary_part_match_closed_form() {
    let mut p = CollisionModelParams::new(3, 1.0, 0.95);
    p.w = 1e-4;
    let numeric = cross_coefficient(&p, exchanged(p.w)).unwrap().value;
    let (de, dep) = franson_formula(&p).unwrap();
    assert_eq!(numeric.re.signum(), de.re.signum());
    assert_eq!(numeric.im.signum(), dep.im.signum());
}

#[test]
fn fit_is_exact_polynomial() {
    let rule = exchanged(1e-2);
    let c = cross_coefficient(&CollisionModelParams::new(3, 1.0, 0.85), rule).unwrap();
    assert!(c.fit_residual < 1e-12 * c.largest_term);
    // finite-difference estimate of the same coefficient
    let e4 = |n1, n2| {
        let p = CollisionModelParams { n1, n2, ..CollisionModelParams::new(3, 1.0, 0.85) };
        rspt_energy(&build_problem(&p, rule).unwrap(), 4).unwrap().fourth_order.pair
    };
    let fd = e4(2, 2) - e4(2, 1) - e4(1, 2) + e4(1, 1);
    assert!((fd - c.value).norm() < 1e-10 * c.largest_term);
}

fn toy(v: f64, gap: f64) -> PerturbationProblem {
    let modes = vec![ModeSpec::photonic("a"), ModeSpec::photonic("b")];
    let basis = Arc::new(enumerate_basis(&modes, 1).unwrap());
    let r = basis.index_of(&[1, 0]).unwrap();
    let mut e = DVector::zeros(2);
    e[1 - r] = C64::new(-gap, 0.0);
    PerturbationProblem::new(e, exchange_coupling(&basis, "a", "b", v).unwrap(), r).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn toy_rspt_matches_series_oracle(v in 1e-4f64..0.1, gap in 0.3f64..5.0) {
        let res = rspt_energy(&toy(v, gap), 4).unwrap();
        let (e2, e4) = common::two_level_series(v, gap);
        prop_assert!((res.corrections[1].re - e2).abs() <= 1e-12 * e2.abs());
        prop_assert!((res.corrections[3].re - e4).abs() <= 1e-12 * e4.abs());
    }

    #[test]
    fn rule_none_cancels_for_any_detunings(atoms in 2u32..5, d2 in 0.5f64..0.995, m in 0.1f64..2.0) {
        let p = CollisionModelParams { m, ..CollisionModelParams::new(atoms, 1.0, d2) };
        let c = cross_coefficient(&p, WidthRule::none()).unwrap();
        prop_assert!(c.value.norm() < 1e-10 * c.largest_term);
    }

    #[test]
    fn closed_form_ratio_is_delta_over_w(
        atoms in 2u32..50,
        d2 in 0.5f64..0.99,
        w in 1e-6f64..0.5,
        f_r in 0.01f64..1.0,
    ) {
        let p = CollisionModelParams { w, f_r, ..CollisionModelParams::new(atoms, 1.0, d2) };
        let (de, dep) = franson_formula(&p).unwrap();
        prop_assert!((dep.norm() / de.norm() - p.delta / w).abs() <= 1e-12 * p.delta / w);
    }

    #[test]
    fn bosonized_exchange_gate_keeps_separable_inputs_separable(
        a in 0.0f64..PI,
        b in 0.0f64..PI,
        g in 0.3f64..2.0,
    ) {
        // (cos a|0⟩ + sin a|1⟩) ⊗ (cos b|0⟩ + sin b|1⟩) through the three-pulse gate
        let model = Model::two_photon(CollectiveModel::Bosonized);
        let basis = Arc::new(photon_exchange::hilbert::enumerate_truncated(model.modes(), 2).unwrap());
        let mut psi = DVector::zeros(basis.dim());
        let amp = [a.cos(), a.sin()];
        let bmp = [b.cos(), b.sin()];
        for q1 in 0..2 {
            for q2 in 0..2 {
                psi[basis.index_of(&[q1 as u32, q2 as u32, 0]).unwrap()] = C64::new(amp[q1] * bmp[q2], 0.0);
            }
        }
        let out = evolve_schedule(&model, &PulseSchedule::three_pulse(g).unwrap(), &basis, &psi).unwrap();
        let state = TwoModeState::from_state(&basis, &out, PHOTON_1, PHOTON_2).unwrap();
        prop_assert_eq!(schmidt_analysis(&state).unwrap().rank, 1);
    }
}

#[test]
fn detuned_two_pi_pulse_still_gives_local_gate() {
    let g: f64 = 0.8;
    let detuning: f64 = 0.6;
    let omega = (g * g + detuning * detuning / 4.0).sqrt();
    let schedule = PulseSchedule::new(vec![
        PulseSegment::with_area(Coupling::new(PHOTON_1, COLLECTIVE, g), 1.0).unwrap(),
        PulseSegment::new(Some(Coupling::new(PHOTON_2, COLLECTIVE, g)), PI / omega)
            .detuned(COLLECTIVE, detuning),
        PulseSegment::with_area(Coupling::new(PHOTON_1, COLLECTIVE, g), 1.0).unwrap(),
    ])
    .unwrap();
    let report = extract_gate(
        &schedule,
        &LogicalEncoding::standard(),
        &Model::two_photon(CollectiveModel::Bosonized),
    )
    .unwrap();
    assert!(!report.entangling);
    assert!(report.max_leakage() < 1e-12);
}

#[test]
fn finite_ensemble_gate_is_entangling_and_leaky() {
    let report = extract_gate(
        &PulseSchedule::three_pulse(1.0).unwrap(),
        &LogicalEncoding::standard(),
        &Model::two_photon(CollectiveModel::TavisCummings { atoms: 2 }),
    )
    .unwrap();
    assert!(report.max_leakage() > 1e-3);
    assert!(report.entangling);
}
