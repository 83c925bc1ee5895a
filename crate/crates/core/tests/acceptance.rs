//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

mod common;

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Matrix2, Vector3};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use photon_exchange::cli::{self, Kind};
use photon_exchange::dynamics::{
    evolve_segment, phase_vs_loss, rabi_frequency, transmission_scan, CollectiveModel, Coupling,
    Model, PulseSchedule, PulseSegment, COLLECTIVE, PHOTON_1, PHOTON_2,
};
use photon_exchange::gates::{
    conditional_phase, emission_absorption_ratio, extract_gate, five_pulse_leakage,
    single_quantum_transfer, LogicalEncoding, ENTANGLING_TOL,
};
use photon_exchange::hilbert::{
    dicke_matrix_element, enumerate_basis, AtomCloud, HilbertBasis, ModeSpec, OperatorMatrix,
};
use photon_exchange::perturbation::{
    cross_coefficient, franson_formula, CollisionModelParams, WidthRule, WidthSelector,
};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: f64) -> std::result::Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit,
        format!("took {:.2}s, limit {limit}s", elapsed.as_secs_f64()),
    )
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn three_pulse_gate() -> Check {
    let start = Instant::now();
    let model = Model::two_photon(CollectiveModel::Bosonized);
    let schedule = PulseSchedule::three_pulse(1.0).map_err(err)?;
    let report = extract_gate(&schedule, &LogicalEncoding::standard(), &model).map_err(err)?;
    let dev = report.deviation_from_diagonal([1.0, -1.0, 1.0, -1.0].map(c));
    ensure(dev < 1e-9, format!("deviation {dev:e}"))?;
    ensure(report.max_leakage() < 1e-12, format!("leakage {:e}", report.max_leakage()))?;
    ensure(!report.entangling, "reported as entangling")?;
    let (a, b) = report.local_factors.ok_or("no local factors")?;
    let fa = (a - Matrix2::identity()).norm();
    let fb = (b - Matrix2::new(c(1.0), c(0.0), c(0.0), c(-1.0))).norm();
    ensure(fa < 1e-9 && fb < 1e-9, format!("factor errors {fa:e}, {fb:e}"))?;
    within(start.elapsed(), 1.0)?;
    Ok(format!("deviation {dev:.1e}, leakage {:.1e}", report.max_leakage()))
}

fn frequency_doubling() -> Check {
    let start = Instant::now();
    let model = Model::two_photon(CollectiveModel::Bosonized);
    let coupling = Coupling::new(PHOTON_2, COLLECTIVE, 0.7);
    let stored = rabi_frequency(&model, &coupling, &[0, 1, 1]).map_err(err)?;
    let empty = rabi_frequency(&model, &coupling, &[0, 1, 0]).map_err(err)?;
    let ratio = stored / empty;
    ensure((ratio - 2.0).abs() < 1e-6, format!("ratio {ratio}"))?;
    within(start.elapsed(), 1.0)?;
    Ok(format!("ratio {ratio:.12}"))
}

fn five_pulse() -> Check {
    let start = Instant::now();
    let quarter = five_pulse_leakage(CollectiveModel::Bosonized, PI / 4.0).map_err(err)?;
    ensure(
        (quarter.p_two_photon - 0.5).abs() < 1e-9,
        format!("P(π/4) = {}", quarter.p_two_photon),
    )?;
    let full = five_pulse_leakage(CollectiveModel::Bosonized, PI).map_err(err)?;
    ensure(full.p_two_photon < 1e-12, format!("P(π) = {:e}", full.p_two_photon))?;
    let mut prev = f64::INFINITY;
    for n in [2u32, 3, 4, 10, 100, 1000, 1_000_000] {
        let ratio = emission_absorption_ratio(CollectiveModel::TavisCummings { atoms: n }).map_err(err)?;
        let exact = (f64::from(n) / f64::from(n - 1)).sqrt();
        ensure(
            (ratio - exact).abs() <= 4.0 * f64::EPSILON * exact,
            format!("N={n}: ratio {ratio} vs {exact}"),
        )?;
        ensure(ratio < prev && ratio > 1.0, format!("N={n}: not approaching 1 from above"))?;
        prev = ratio;
    }
    ensure((prev - 1.0) < 1e-6, format!("ratio at N=1e6 is {prev}"))?;
    within(start.elapsed(), 1.0)?;
    Ok(format!("P(π/4) = {:.12}, P(π) = {:.1e}", quarter.p_two_photon, full.p_two_photon))
}

fn cancellation() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for atoms in [2u32, 3, 4] {
        for ratio in [0.8, 0.9, 0.99] {
            let params = CollisionModelParams::new(atoms, 1.0, ratio);
            for w_rel in [0.0, 0.1] {
                let w = w_rel * params.delta;
                for selector in [WidthSelector::None, WidthSelector::ExcitedAtomStates] {
                    let rule = WidthRule::new(selector, w).map_err(err)?;
                    let cc = cross_coefficient(&params, rule).map_err(err)?;
                    let rel = cc.value.norm() / cc.largest_term;
                    worst = worst.max(rel);
                    cases += 1;
                    ensure(
                        rel < 1e-10,
                        format!("N={atoms} δ2/δ1={ratio} w/δ={w_rel} {selector:?}: relative {rel:e}"),
                    )?;
                }
            }
        }
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("{cases} cases, worst relative {worst:.1e}"))
}

fn imaginary_dominance() -> Check {
    let start = Instant::now();
    let mut notes = Vec::new();
    for w_rel in [1e-2, 1e-3] {
        for atoms in [2u32, 3, 4] {
            let mut params = CollisionModelParams::new(atoms, 1.0, 0.9);
            params.w = w_rel * params.delta;
            let rule = WidthRule::new(WidthSelector::ExchangedPhotonGroundStates, params.w).map_err(err)?;
            let cc = cross_coefficient(&params, rule).map_err(err)?;
            let ratio = (cc.value.im / cc.value.re).abs();
            let expected = 1.0 / w_rel;
            ensure(
                (ratio / expected - 1.0).abs() < 0.2,
                format!("N={atoms} w/δ={w_rel}: |Im/Re| = {ratio}, δ/w = {expected}"),
            )?;
            let (de, dep) = franson_formula(&params).map_err(err)?;
            let closed = dep.norm() / de.norm();
            ensure(
                (closed / expected - 1.0).abs() < 1e-12,
                format!("closed-form ratio {closed} vs {expected}"),
            )?;
            if atoms == 2 {
                notes.push(format!("w/δ={w_rel:.0e}: {ratio:.1}"));
            }
        }
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("|Im/Re| {}", notes.join(", ")))
}

fn pair_scaling() -> Check {
    let coefficient = |atoms| {
        let params = CollisionModelParams::new(atoms, 1.0, 0.9);
        let rule = WidthRule::new(WidthSelector::ExchangedPhotonGroundStates, 1e-2).unwrap();
        cross_coefficient(&params, rule).map(|c| c.value)
    };
    let base = coefficient(2).map_err(err)?;
    ensure(base.norm() > 0.0, "vanishing coefficient")?;
    for atoms in [3u32, 4] {
        let pairs = f64::from(atoms * (atoms - 1) / 2);
        let v = coefficient(atoms).map_err(err)?;
        let rel = (v - base * pairs).norm() / (base * pairs).norm();
        ensure(rel < 1e-9, format!("N={atoms}: relative {rel:e}"))?;
    }
    Ok("ratios 1 : 3 : 6".into())
}

fn dicke_enhancement() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = 0.37;
    let mut worst: f64 = 0.0;
    for n in 1..=64usize {
        let positions = (0..n)
            .map(|_| Vector3::from_fn(|_, _| rng.random_range(-5e-6..5e-6)))
            .collect();
        let cloud = AtomCloud::new(positions).map_err(err)?;
        let k = Vector3::new(8e6, 1e5, -3e5);
        let laser = Some(Vector3::new(0.0, 7.5e6, 1e6));
        for k_laser in [None, laser] {
            let z = dicke_matrix_element(&cloud, k, k_laser, None, m).map_err(err)?;
            let expected = (n as f64).sqrt() * m;
            let rel = (z - c(expected)).norm() / expected;
            worst = worst.max(rel);
            ensure(rel < 1e-12, format!("N={n}: relative {rel:e}"))?;
        }
    }
    Ok(format!("worst relative {worst:.1e}"))
}

fn transmission() -> Check {
    let g = 1.3;
    let period = PI / g;
    let taus: Vec<f64> = (0..40).map(|i| i as f64 * period / 17.0).collect();
    let shifted: Vec<f64> = taus.iter().map(|t| t + period).collect();
    let a = transmission_scan(g, &taus).map_err(err)?;
    let b = transmission_scan(g, &shifted).map_err(err)?;
    let drift = a.iter().zip(&b).map(|(x, y)| (x.1 - y.1).abs()).fold(0.0, f64::max);
    ensure(drift < 1e-12, format!("period drift {drift:e}"))?;
    let key = transmission_scan(g, &[0.0, PI / (2.0 * g), period]).map_err(err)?;
    ensure((key[0].1 - 1.0).abs() < 1e-15, format!("P(0) = {}", key[0].1))?;
    ensure(key[1].1 < 1e-9, format!("min P = {:e}", key[1].1))?;
    ensure(key[2].1 > 1.0 - 1e-9, format!("P(π/g) = {}", key[2].1))?;
    Ok(format!("min {:.1e}, P(π/g) {:.12}", key[1].1, key[2].1))
}

fn phase_loss_law() -> Check {
    let (g, detuning) = (0.05, 1.0);
    let mut notes = Vec::new();
    for (ratio, tol) in [(100.0, 0.10), (1000.0, 0.03)] {
        let w = detuning / ratio;
        let (phase, loss) = phase_vs_loss(g, detuning, w, 10.0 / w).map_err(err)?;
        let got = phase / loss;
        let expected = detuning / (2.0 * w);
        let dev = got / expected - 1.0;
        ensure(dev.abs() < tol, format!("Δ/w={ratio}: phase/loss {got} vs {expected}"))?;
        notes.push(format!("Δ/w={ratio}: {:+.2}%", 100.0 * dev));
    }
    Ok(notes.join(", "))
}

fn oracle_bases() -> Vec<Arc<HilbertBasis>> {
    let photons = |n: usize| -> Vec<ModeSpec> {
        (0..n).map(|i| ModeSpec::photonic(format!("p{i}"))).collect()
    };
    let mut out = Vec::new();
    for sector in 0..=5 {
        out.push(enumerate_basis(&photons(2), sector).unwrap());
    }
    out.push(enumerate_basis(&photons(1), 3).unwrap());
    out.push(enumerate_basis(&photons(3), 1).unwrap());
    out.push(enumerate_basis(&photons(3), 2).unwrap());
    out.push(enumerate_basis(&photons(4), 1).unwrap());
    out.push(enumerate_basis(&photons(6), 1).unwrap());
    for sector in 1..=3 {
        let modes = vec![ModeSpec::photonic("p"), ModeSpec::collective("c", 2)];
        out.push(enumerate_basis(&modes, sector).unwrap());
        let modes = vec![ModeSpec::photonic("p"), ModeSpec::bosonized("b")];
        out.push(enumerate_basis(&modes, sector).unwrap());
    }
    let model = Model::two_photon(CollectiveModel::TavisCummings { atoms: 3 });
    out.push(enumerate_basis(model.modes(), 1).unwrap());
    out.push(enumerate_basis(model.modes(), 2).unwrap());
    out.into_iter()
        .filter(|b| b.dim() <= 6)
        .map(Arc::new)
        .collect()
}

fn oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let bases = oracle_bases();
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let basis = &bases[trial % bases.len()];
        let d = basis.dim();
        let mut m = DMatrix::from_fn(d, d, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        m = (&m + m.adjoint()) * c(0.5);
        let shifted = trial >= 100;
        if shifted {
            for i in 0..d {
                m[(i, i)] -= C64::new(0.0, rng.random_range(0.0..0.5));
            }
        }
        let h = OperatorMatrix::new(Arc::clone(basis), m.clone(), !shifted).map_err(err)?;
        let state = nalgebra::DVector::from_fn(d, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let state = &state / c(state.norm());
        let t = rng.random_range(0.0..4.0);
        let got = evolve_segment(&h, &state, t).map_err(err)?;
        let want = common::series_propagator(&m, t) * &state;
        let e = (got - want).norm();
        worst = worst.max(e);
        ensure(e < 1e-10, format!("trial {trial} (dim {d}, t {t:.3}): error {e:e}"))?;
    }
    Ok(format!("{} bases, worst error {worst:.1e}", bases.len()))
}

fn gate_convergence() -> Check {
    let schedule = PulseSchedule::three_pulse(1.0).map_err(err)?;
    let mut prev = f64::INFINITY;
    let mut devs = Vec::new();
    for atoms in [2u32, 4, 8, 16, 32, 64] {
        let model = Model::two_photon(CollectiveModel::TavisCummings { atoms });
        let report = extract_gate(&schedule, &LogicalEncoding::standard(), &model).map_err(err)?;
        let dev = report.deviation_from_diagonal([1.0, -1.0, 1.0, -1.0].map(c));
        ensure(dev < prev, format!("N={atoms}: deviation {dev} not below {prev}"))?;
        prev = dev;
        devs.push(format!("{dev:.2e}"));
    }
    Ok(devs.join(" > "))
}

/// π transfer of photon 1 into the ensemble, a few generalized 2π cycles of
/// photon 2 with random detuning, free phases, and the transfer back.
fn random_exchange_schedule(rng: &mut ChaCha8Rng) -> PulseSchedule {
    let mut segs = Vec::new();
    let g1 = rng.random_range(0.2..3.0);
    segs.push(PulseSegment::with_area(Coupling::new(PHOTON_1, COLLECTIVE, g1), 1.0).unwrap());
    for _ in 0..rng.random_range(1..4) {
        if rng.random_bool(0.5) {
            let mut free = PulseSegment::free(rng.random_range(0.0..3.0));
            for mode in [PHOTON_1, PHOTON_2, COLLECTIVE] {
                free = free.detuned(mode, rng.random_range(-2.0..2.0));
            }
            segs.push(free);
        }
        let g = rng.random_range(0.2..3.0);
        let detuning: f64 = rng.random_range(-2.0..2.0);
        let omega = (g * g + detuning * detuning / 4.0).sqrt();
        segs.push(
            PulseSegment::new(Some(Coupling::new(PHOTON_2, COLLECTIVE, g)), PI / omega)
                .detuned(COLLECTIVE, detuning),
        );
    }
    let g2 = rng.random_range(0.2..3.0);
    segs.push(PulseSegment::with_area(Coupling::new(PHOTON_1, COLLECTIVE, g2), 1.0).unwrap());
    PulseSchedule::new(segs).unwrap()
}

fn no_entanglement() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = Model::two_photon(CollectiveModel::Bosonized);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let schedule = random_exchange_schedule(&mut rng);
        let t = single_quantum_transfer(&model, &schedule).map_err(err)?;
        let off = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| t[(i, j)].norm())
            .fold(0.0, f64::max);
        ensure(off < 1e-9, format!("trial {trial}: transfer not diagonal ({off:e})"))?;
        let report = extract_gate(&schedule, &LogicalEncoding::standard(), &model).map_err(err)?;
        ensure(!report.entangling, format!("trial {trial}: entangling"))?;
        let phi = conditional_phase(&report.matrix, ENTANGLING_TOL)
            .ok_or(format!("trial {trial}: gate not diagonal"))?;
        worst = worst.max(phi.abs());
        ensure(phi.abs() < 1e-8, format!("trial {trial}: conditional phase {phi:e}"))?;
    }
    Ok(format!("worst conditional phase {worst:.1e}"))
}

fn determinism() -> Check {
    let files = common::scenario_files();
    ensure(!files.is_empty(), "no scenarios found")?;
    for path in &files {
        let scenario = cli::load_scenario(path).map_err(err)?;
        let first = cli::evaluate(&scenario).map_err(err)?;
        let second = cli::evaluate(&scenario).map_err(err)?;
        ensure(first.files.len() == second.files.len(), "artifact count differs")?;
        for (a, b) in first.files.iter().zip(&second.files) {
            let (pa, pb) = (a.payload_text().map_err(err)?, b.payload_text().map_err(err)?);
            ensure(pa == pb, format!("{}: {} differs between runs", path.display(), a.name()))?;
        }
        if scenario.kind == Kind::Sweep {
            let serial = cli::sweep_csv(&cli::sweep(&scenario, 1).map_err(err)?).map_err(err)?;
            let parallel = cli::sweep_csv(&cli::sweep(&scenario, 8).map_err(err)?).map_err(err)?;
            ensure(serial == parallel, format!("{}: parallel sweep differs", path.display()))?;
        }
    }
    Ok(format!("{} scenarios", files.len()))
}

type Criterion = (&'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 13] = [
        ("three-pulse gate is diag(1,-1,1,-1) and non-entangling", three_pulse_gate),
        ("revival frequency doubles with a stored excitation", frequency_doubling),
        ("five-pulse two-photon leakage and ladder ratio", five_pulse),
        ("n1*n2 pair terms cancel without exchanged-photon widths", cancellation),
        ("imaginary part dominates by delta/w", imaginary_dominance),
        ("pair coefficient scales as N(N-1)/2", pair_scaling),
        ("phase-matched Dicke element is sqrt(N)*M", dicke_enhancement),
        ("transmission is periodic in pi/g", transmission),
        ("phase/loss approaches delta/(2w)", phase_loss_law),
        ("propagator matches series oracle", oracle_equivalence),
        ("finite-N gate deviation decreases with N", gate_convergence),
        ("random exchange schedules never entangle", no_entanglement),
        ("scenario payloads and sweeps are deterministic", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  criterion {:>2}: {name} ({detail}; {secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {:>2}: {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
