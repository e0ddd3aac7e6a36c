//! Two-qubit CPHASE checks: vanishing phase with an idle partner, the
//! uncoupled limit, scaling with the coupling and agreement between the
//! quadratures and the 64-level simulation.

use donor_qubit::gates::{wrap_pi, IdleFrame};
use donor_qubit::linalg::{self, DOp, C64};
use donor_qubit::model::BasisConvention;
use donor_qubit::propagation::{evolve, EvolveOptions, Frame};
use donor_qubit::pulses::{make_cphase_schedule, make_idle_schedule, Envelope, PulseSchedule};
use donor_qubit::twoqubit::*;
use donor_qubit::{ns, SystemParams};

fn both_exchange_settings() -> [CphaseOptions; 2] {
    [false, true].map(|exchange_term| CphaseOptions {
        exchange_term,
        ..Default::default()
    })
}

#[test]
fn idle_partner_gives_no_conditional_phase() {
    let p = SystemParams::default();
    let layout = TwoQubitLayout::default();
    for t in [ns(200.0), ns(494.0)] {
        let drive = make_cphase_schedule(&p, t).unwrap();
        let idle = make_idle_schedule(&p, t).unwrap();
        for opts in both_exchange_settings() {
            for pair in [[&idle, &drive], [&drive, &idle]] {
                let rep = cphase_angle(&layout, pair, [0.0; 2], &opts).unwrap();
                assert!(rep.phi.abs() < 1e-6, "T = {t:e}: φ = {:e}", rep.phi);
            }
        }
    }
}

#[test]
fn idle_partner_in_the_all_orders_quadrature() {
    // higher orders in V leave a tiny residue through the far-detuned idle
    // orbital, far below any gate-relevant scale
    let p = SystemParams::default();
    let layout = TwoQubitLayout::default();
    let drive = make_cphase_schedule(&p, ns(300.0)).unwrap();
    let idle = make_idle_schedule(&p, ns(300.0)).unwrap();
    let rep = cphase_angle_coupled(&layout, [&idle, &drive], [0.0; 2], &TwoQubitOptions::default(), 1e-9).unwrap();
    assert!(rep.phi.abs() < 1e-3, "φ = {:e}", rep.phi);
}

/// Single-qubit qubit block in [↑̃, ↓̃] ordering with idle evolution removed.
fn single_block(p: &SystemParams, s: &PulseSchedule, dt: f64) -> DOp {
    let res = evolve(p, s, 0.0, &EvolveOptions::new(Frame::Effective).dt(dt)).unwrap();
    let frame = IdleFrame::for_schedule(p, Frame::Effective, s).unwrap();
    let b = frame.qubit_block(&res.propagator, s.total_time);
    DOp::from_fn(2, 2, |i, j| b[(i, j)])
}

#[test]
fn uncoupled_evolution_is_a_tensor_product() {
    let p = SystemParams::default();
    let layout = TwoQubitLayout::default().with_coupling(0.0);
    let s = make_cphase_schedule(&p, ns(150.0)).unwrap();
    let dt = 0.1e-9;
    let opts = TwoQubitOptions {
        dt,
        adjust_omega_e: false,
        exchange_term: true,
    };
    let sim = simulate_two_qubit(&layout, [&s, &s], [0.0; 2], &opts).unwrap();
    let b = single_block(&p, &s, dt);
    let product = linalg::kron(&b, &b);
    let err = (&sim.block - &product).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(err < 1e-6, "block differs from the product by {err:e}");
    assert!(wrap_pi(sim.report.phi).abs() < 1e-6);

    let quad = cphase_angle(&layout, [&s, &s], [0.0; 2], &CphaseOptions::default()).unwrap();
    assert!(quad.phi.abs() < 1e-9, "φ = {:e}", quad.phi);
}

#[test]
fn first_order_phase_is_linear_in_the_coupling() {
    let p = SystemParams::default();
    let base = TwoQubitLayout::default();
    let v = base.coupling();
    let s = make_cphase_schedule(&p, ns(300.0)).unwrap();
    for opts in both_exchange_settings() {
        let at = |scale: f64| {
            cphase_angle(&base.with_coupling(scale * v), [&s, &s], [0.0; 2], &opts)
                .unwrap()
                .phi
        };
        let (one, two, half) = (at(1.0), at(2.0), at(0.5));
        assert!(one.abs() > 0.1);
        assert!((two - 2.0 * one).abs() < 1e-9 * one.abs(), "{two} vs 2·{one}");
        assert!((half - 0.5 * one).abs() < 1e-9 * one.abs());
    }
}

#[test]
fn dipole_coefficient_matches_the_closed_form() {
    // e² d² / (4π ε0 εr r³ ħ) at d = 15 nm, r = 500 nm, εr = 11.7
    let layout = TwoQubitLayout::default();
    let (e, hbar, eps0) = (1.602176634e-19, 1.054571817e-34, 8.8541878128e-12);
    let d = 15e-9;
    let expected = e * e * d * d / (4.0 * std::f64::consts::PI * eps0 * 11.7 * (500e-9f64).powi(3) * hbar);
    let got = dipole_coupling_strength(&layout);
    assert!((got / expected - 1.0).abs() < 1e-3, "{got:e} vs {expected:e}");
}

#[test]
fn local_corrections_leave_a_single_conditional_phase() {
    let p = SystemParams::default();
    let layout = TwoQubitLayout::default();
    let s = make_cphase_schedule(&p, ns(400.0)).unwrap();
    let rep = cphase_angle(&layout, [&s, &s], [0.0; 2], &CphaseOptions::default()).unwrap();
    let d = rep.corrected_diagonal();
    for z in &d[..3] {
        assert!((z - C64::new(1.0, 0.0)).norm() < 1e-12);
    }
    assert!((d[3] - C64::from_polar(1.0, rep.phi)).norm() < 1e-12);
}

#[test]
fn conditional_phase_depends_on_common_field_noise() {
    let p = SystemParams::default();
    let layout = TwoQubitLayout::default();
    let s = make_cphase_schedule(&p, ns(400.0)).unwrap();
    let opts = CphaseOptions::default();
    let at = |n: f64| cphase_angle(&layout, [&s, &s], [n, n], &opts).unwrap().phi;
    let slope = (at(20.0) - at(-20.0)) / 40.0;
    assert!(slope.abs() > 1e-5, "dφ/dδE = {slope:e} rad per V/m");
}

#[test]
fn dressed_down_state_in_the_square_pulse() {
    let p = SystemParams::default();
    let (model, sample) = SquareCphase::default().model_and_sample(&p);
    let (_, v) = dressed_state(&model, &sample, 0.0, BasisConvention::QUBIT_DOWN).unwrap();
    let g = v[BasisConvention::index(0, 0, 0)];
    let e = v[BasisConvention::index(1, 0, 0)];
    assert!((g.norm() - 0.711).abs() < 0.01, "|g↓⇓| = {}", g.norm());
    assert!((e.norm() - 0.703).abs() < 0.01, "|e↓⇓| = {}", e.norm());
    // opposite signs
    assert!((g * e.conj()).re < 0.0);
}

#[test]
fn square_rate_matches_a_flat_schedule_quadrature() {
    // the tracked quadrature over a constant drive accumulates the same
    // phase per unit time as the static weight formula
    let p = SystemParams::default();
    let layout = TwoQubitLayout::default();
    let pulse = SquareCphase::default();
    let rate = square_cphase_rate(&layout, &pulse).unwrap();
    assert!(rate < 0.0);
    let (model, _) = pulse.model_and_sample(&p);
    let t = ns(100.0);
    let flat = PulseSchedule {
        label: "flat".into(),
        de: Envelope::constant(pulse.de),
        ea: Envelope::constant(pulse.ea),
        ba: Envelope::Zero,
        omega_e: model.omega_e,
        omega_b: model.omega_b,
        total_time: t,
    };
    let rep = cphase_angle(&layout, [&flat, &flat], [0.0; 2], &CphaseOptions::default()).unwrap();
    assert!(
        (rep.phi / t - rate).abs() < 1e-9 * rate.abs(),
        "{} vs {rate}",
        rep.phi / t
    );
}

#[test]
fn coupled_quadrature_follows_the_simulation() {
    let p = SystemParams::default();
    let layout = TwoQubitLayout::default();
    let s = make_cphase_schedule(&p, ns(300.0)).unwrap();
    let opts = TwoQubitOptions::default();
    let quad = cphase_angle_coupled(&layout, [&s, &s], [0.0; 2], &opts, 0.5e-9).unwrap();
    let sim = simulate_two_qubit(&layout, [&s, &s], [0.0; 2], &opts).unwrap();
    assert!(sim.block_unitarity_defect < 1e-2);
    let gap = wrap_pi(quad.phi - sim.report.phi).abs();
    assert!(
        gap <= 0.05 * quad.phi.abs(),
        "quadrature {} vs simulation {} (gap {gap})",
        quad.phi,
        sim.report.phi
    );
}

#[test]
fn arbitrary_phase_below_the_reachable_maximum() {
    let layout = TwoQubitLayout::default();
    let opts = CphaseOptions::default();
    let t = cphase_duration_search(&layout, 1.0, &opts).unwrap();
    assert!(t < ns(750.0));
    let phi = cphase_for_duration(&layout, t, &opts).unwrap().phi;
    assert!((phi.abs() - 1.0).abs() < 1e-6, "φ = {phi}");
}

#[test]
fn bad_geometry_is_rejected() {
    let layout = TwoQubitLayout {
        separation: 0.0,
        ..Default::default()
    };
    assert!(square_cphase_rate(&layout, &SquareCphase::default()).is_err());
    assert!(cphase_for_duration(&layout, ns(300.0), &CphaseOptions::default()).is_err());
}
