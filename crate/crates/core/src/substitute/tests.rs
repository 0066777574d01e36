use super::*;
use crate::integrate::{integrate_conservative_from, integrate_damped, DEFAULT_ATOL, DEFAULT_RTOL};
use crate::model::InitialCondition;
use std::f64::consts::{PI, TAU};

fn wd() -> f64 {
    0.99f64.sqrt()
}

// closed-form solution of q'' + 0.2 q' + q = 0, q(0) = 1, q'(0) = 0
fn closed_q(t: f64) -> f64 {
    (-0.1 * t).exp() * ((wd() * t).cos() + 0.1 / wd() * (wd() * t).sin())
}

fn closed_p(t: f64) -> f64 {
    -(-0.1 * t).exp() * (wd() * t).sin() / wd()
}

fn damped_1dof(t_end: f64) -> (DampedSystem, Trajectory) {
    let sys = DampedSystem::diagonal(&[0.2], &[1.0]).unwrap();
    let a = InitialCondition::from_parts(&[1.0], &[0.0]).unwrap();
    let tr = integrate_damped(&sys, &a, t_end, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
    (sys, tr)
}

#[test]
fn undamped_half_periods() {
    let sys = DampedSystem::diagonal(&[0.0], &[1.0]).unwrap();
    let a = InitialCondition::from_parts(&[1.0], &[0.0]).unwrap();
    let tr = integrate_damped(&sys, &a, TAU, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
    let spans = segment_trajectory(&tr, 0);
    assert_eq!(spans.len(), 2);
    assert_eq!(spans[0].t_start, 0.0);
    assert!((spans[0].t_end - PI).abs() < 1e-9);
    assert_eq!(spans[1].t_end, TAU);
    assert_eq!(spans[0].motion, Motion::Decreasing);
    assert_eq!(spans[1].motion, Motion::Increasing);
}

#[test]
fn damped_turning_points_match_closed_form() {
    let (_, tr) = damped_1dof(3.0 * PI / wd());
    let spans = segment_trajectory(&tr, 0);
    assert_eq!(spans.len(), 3);
    for (k, s) in spans.iter().enumerate() {
        assert!((s.t_start - k as f64 * PI / wd()).abs() < 1e-9, "{s:?}");
    }
    let tps = turning_points(&tr, 0);
    assert_eq!(tps.len(), 2);
}

#[test]
fn free_particle_single_segment() {
    let sys = DampedSystem::diagonal(&[0.0], &[0.0]).unwrap();
    let a = InitialCondition::from_parts(&[0.0], &[1.0]).unwrap();
    let tr = integrate_damped(&sys, &a, 5.0, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
    let spans = segment_trajectory(&tr, 0);
    assert_eq!(spans.len(), 1);
    assert_eq!(spans[0].motion, Motion::Increasing);
}

#[test]
fn resting_decoupled_coordinate_is_frozen() {
    let sys = DampedSystem::diagonal(&[0.2, 0.1], &[1.0, 2.0]).unwrap();
    let a = InitialCondition::from_parts(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
    let tr = integrate_damped(&sys, &a, 4.0, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
    let sub = build_substituting_system(&tr, &sys).unwrap();
    let segs = sub.segments(1);
    assert_eq!(segs.len(), 1);
    assert!(segs[0].is_frozen());
    assert_eq!(segs[0].motion(), Motion::Frozen);
    assert_eq!(segs[0].g(0.3).unwrap(), 0.0);
    for t in tr.uniform_times(50) {
        assert_eq!(sub.work_components(t).unwrap()[1], 0.0);
    }
}

#[test]
fn zero_damping_has_zero_work_and_force_table() {
    let sys = DampedSystem::diagonal(&[0.0], &[1.0]).unwrap();
    let a = InitialCondition::from_parts(&[1.0], &[0.0]).unwrap();
    let tr = integrate_damped(&sys, &a, 10.0, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
    let sub = build_substituting_system(&tr, &sys).unwrap();
    for t in tr.uniform_times(101) {
        assert_eq!(sub.work(t).unwrap(), 0.0);
        assert_eq!(sub.hat_h(t).unwrap(), sub.mechanical_energy(t).unwrap());
    }
    for seg in sub.segments(0) {
        assert!(seg.table().unwrap().values().iter().all(|&g| g == 0.0));
    }
    let field = sub.force_field(&[0]).unwrap();
    assert_eq!(field.evaluate(&[0.25]).unwrap()[0], -0.25);
}

#[test]
fn work_matches_energy_balance() {
    let (sys, tr) = damped_1dof(20.0);
    let sub = build_substituting_system(&tr, &sys).unwrap();
    let h0 = sub.mechanical_energy(0.0).unwrap();
    assert_eq!(sub.work(0.0).unwrap(), 0.0);
    let mut prev = 0.0;
    for t in tr.uniform_times(2001) {
        let w = sub.work(t).unwrap();
        // independent oracle: closed-form energy loss
        let h = 0.5 * (closed_q(t).powi(2) + closed_p(t).powi(2));
        assert!((w - (h0 - h)).abs() < 1e-9, "t = {t}: {:e}", w - (h0 - h));
        assert!(w >= prev - 1e-15);
        prev = w;
    }
}

#[test]
fn work_is_additive_over_uncoupled_coordinates() {
    let two = DampedSystem::diagonal(&[0.2, 0.3], &[1.0, 2.0]).unwrap();
    let a = InitialCondition::from_parts(&[1.0, -0.5], &[0.0, 0.4]).unwrap();
    let tr = integrate_damped(&two, &a, 15.0, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
    let one_a = DampedSystem::diagonal(&[0.2], &[1.0]).unwrap();
    let one_b = DampedSystem::diagonal(&[0.3], &[2.0]).unwrap();
    let tra = integrate_damped(
        &one_a,
        &InitialCondition::from_parts(&[1.0], &[0.0]).unwrap(),
        15.0,
        DEFAULT_RTOL,
        DEFAULT_ATOL,
    )
    .unwrap();
    let trb = integrate_damped(
        &one_b,
        &InitialCondition::from_parts(&[-0.5], &[0.4]).unwrap(),
        15.0,
        DEFAULT_RTOL,
        DEFAULT_ATOL,
    )
    .unwrap();
    for t in tr.uniform_times(301) {
        let w = work_along(&tr, &two, t).unwrap();
        let sum = work_along(&tra, &one_a, t).unwrap() + work_along(&trb, &one_b, t).unwrap();
        assert!((w - sum).abs() < 1e-9, "t = {t}");
    }
}

#[test]
fn work_rate_is_dissipated_power() {
    let (sys, tr) = damped_1dof(10.0);
    let sub = build_substituting_system(&tr, &sys).unwrap();
    let dt = 1e-4;
    for k in 1..100 {
        let t = 0.1 * k as f64;
        let rate = (sub.work(t + dt).unwrap() - sub.work(t - dt).unwrap()) / (2.0 * dt);
        let power = sys.dissipated_power(&tr.evaluate(t).unwrap()).unwrap();
        // central difference truncation ~ dt² |W'''|
        assert!((rate - power).abs() < 1e-8, "t = {t}: {:e}", rate - power);
    }
}

#[test]
fn hat_h_is_constant_half() {
    let (sys, tr) = damped_1dof(60.0);
    let sub = build_substituting_system(&tr, &sys).unwrap();
    assert_eq!(sub.hat_h(0.0).unwrap(), 0.5);
    let worst = tr
        .uniform_times(6001)
        .into_iter()
        .map(|t| (sub.hat_h(t).unwrap() - 0.5).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "max |Ĥ - 0.5| = {worst:e}");
}

#[test]
fn equilibrium_has_zero_hamiltonian_and_lagrangian() {
    let sys = DampedSystem::diagonal(&[0.2], &[1.0]).unwrap();
    let a = InitialCondition::from_parts(&[0.0], &[0.0]).unwrap();
    let tr = integrate_damped(&sys, &a, 5.0, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
    let sub = build_substituting_system(&tr, &sys).unwrap();
    for t in tr.uniform_times(11) {
        assert_eq!(sub.hat_h(t).unwrap(), 0.0);
        assert_eq!(sub.hat_l(t).unwrap(), 0.0);
    }
    assert!(sub.segments(0)[0].is_frozen());
}

#[test]
fn lagrangian_examples() {
    let sys = DampedSystem::diagonal(&[0.0], &[1.0]).unwrap();
    let a = InitialCondition::from_parts(&[1.0], &[0.0]).unwrap();
    let tr = integrate_damped(&sys, &a, 5.0, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
    let sub = build_substituting_system(&tr, &sys).unwrap();
    assert_eq!(sub.hat_l(0.0).unwrap(), -0.5);

    let (sys, tr) = damped_1dof(20.0);
    let sub = build_substituting_system(&tr, &sys).unwrap();
    for t in tr.uniform_times(400) {
        let p = tr.evaluate(t).unwrap().p[0];
        let pairing = sub.hat_l(t).unwrap() + sub.hat_h(t).unwrap();
        assert!((pairing - p * p).abs() < 1e-10);
    }
}

#[test]
fn first_segment_table_matches_closed_form_velocity() {
    let (sys, tr) = damped_1dof(10.0);
    let sub = build_substituting_system(&tr, &sys).unwrap();
    let seg = &sub.segments(0)[0];
    assert_eq!(seg.motion(), Motion::Decreasing);
    let table = seg.table().unwrap();
    for (&q, &g) in table.abscissae().iter().zip(table.values()) {
        // invert the closed form for t(q) on the first half period
        let (mut lo, mut hi) = (0.0, PI / wd());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if closed_q(mid) > q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        let exact = 0.2 * closed_p(t);
        // t(q) is singular at the turning points: a nodal error δq moves the
        // inverted velocity by ~δq/|q'|, so the comparison is only meaningful
        // away from them.
        if closed_p(t).abs() < 1e-3 {
            continue;
        }
        assert!((g - exact).abs() < 1e-8, "q = {q}: {:e}", g - exact);
    }
}

#[test]
fn equivalent_stiffness_examples() {
    let (sys, tr) = damped_1dof(10.0);
    let sub = build_substituting_system(&tr, &sys).unwrap();
    let (mut lo, mut hi) = (0.0, PI / wd());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if closed_q(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let g_exact = 0.2 * closed_p(0.5 * (lo + hi));
    let kt = sub.equivalent_stiffness(&[0], &[0.5], None).unwrap();
    assert!((kt[0].unwrap() - g_exact / 0.5).abs() < 1e-6);
    assert_eq!(sub.equivalent_stiffness(&[0], &[0.0], None).unwrap()[0], None);

    let free = DampedSystem::diagonal(&[0.0], &[1.0]).unwrap();
    let a = InitialCondition::from_parts(&[1.0], &[0.0]).unwrap();
    let tr = integrate_damped(&free, &a, 3.0, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
    let sub = build_substituting_system(&tr, &free).unwrap();
    assert_eq!(sub.equivalent_stiffness(&[0], &[0.5], None).unwrap()[0], Some(0.0));
}

#[test]
fn force_field_reproduces_damped_force_on_samples() {
    let (sys, tr) = damped_1dof(20.0);
    let sub = build_substituting_system(&tr, &sys).unwrap();
    let mut worst = 0.0f64;
    for j in 0..tr.len() {
        let t = tr.times()[j];
        let sel = sub.selector_at(t).unwrap();
        let field = sub.force_field(&sel).unwrap();
        let s = tr.node(j);
        let f = field.evaluate(s.q.as_slice()).unwrap();
        let expected = -s.q[0] - 0.2 * s.p[0];
        worst = worst.max((f[0] - expected).abs());
    }
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn force_field_rejects_out_of_domain() {
    let (sys, tr) = damped_1dof(10.0);
    let sub = build_substituting_system(&tr, &sys).unwrap();
    let field = sub.force_field(&[0]).unwrap();
    let (lo, hi) = field.segments()[0].domain();
    match field.evaluate(&[hi + 0.1]) {
        Err(Error::OutOfDomain {
            coord,
            value,
            lo: l,
            hi: h,
        }) => {
            assert_eq!(coord, 0);
            assert_eq!(value, hi + 0.1);
            assert_eq!((l, h), (lo, hi));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(sub.force_field(&[7]).is_err());
}

#[test]
fn segment_potential_recovers_time_parameterized_work() {
    let (sys, tr) = damped_1dof(20.0);
    let sub = build_substituting_system(&tr, &sys).unwrap();
    let mut worst = 0.0f64;
    for t in tr.uniform_times(4001) {
        let sel = sub.selector_at(t).unwrap();
        let q = tr.evaluate(t).unwrap().q;
        let v = sub.potential(&sel, q.as_slice()).unwrap();
        worst = worst.max((v - sub.work(t).unwrap()).abs());
    }
    assert!(worst < 1e-9, "{worst:e}");
}

#[test]
fn segment_local_ode_residual() {
    let (sys, tr) = damped_1dof(60.0);
    let sub = build_substituting_system(&tr, &sys).unwrap();
    let mut worst = 0.0f64;
    for t in tr.uniform_times(12001) {
        let s = tr.evaluate(t).unwrap();
        let sel = sub.selector_at(t).unwrap();
        let qdd = sys.damped_rhs(&s).unwrap()[1];
        let g = sub.g_vector(&sel, s.q.as_slice()).unwrap()[0];
        worst = worst.max((qdd + s.q[0] + g).abs());
    }
    assert!(worst < 1e-6, "{worst:e}");
}

#[test]
fn diagonal_two_dof_decouples() {
    let two = DampedSystem::diagonal(&[0.2, 0.2], &[1.0, 1.0]).unwrap();
    let a2 = InitialCondition::from_parts(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
    let tr2 = integrate_damped(&two, &a2, 12.0, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
    let sub2 = build_substituting_system(&tr2, &two).unwrap();
    let (one, tr1) = damped_1dof(12.0);
    let sub1 = build_substituting_system(&tr1, &one).unwrap();
    for i in 0..2 {
        let (s2, s1) = (sub2.segments(i), sub1.segments(0));
        assert_eq!(s2.len(), s1.len());
        for (a, b) in s2.iter().zip(s1) {
            assert!((a.t_start() - b.t_start()).abs() < 1e-9);
            assert!((a.q_start() - b.q_start()).abs() < 1e-9);
            let qm = 0.5 * (a.q_start() + a.q_end());
            assert!((a.g(qm).unwrap() - b.g(qm).unwrap()).abs() < 1e-9);
        }
    }
    assert_eq!(sub2.windows().len(), sub1.windows().len());
}

#[test]
fn zero_damping_reintegration_reproduces_trajectory() {
    let sys = DampedSystem::diagonal(&[0.0], &[1.0]).unwrap();
    let a = InitialCondition::from_parts(&[1.0], &[0.0]).unwrap();
    let tr = integrate_damped(&sys, &a, 10.0 * TAU, DEFAULT_RTOL, DEFAULT_ATOL).unwrap();
    let sub = build_substituting_system(&tr, &sys).unwrap();
    // with C = 0 every segment's force is -Kq, valid on the whole line only
    // within each segment's range; the full-period field is linear anyway
    let field = sub.force_field(&[0]).unwrap();
    let h = 1e-4;
    let re = integrate_conservative_from(&field, &a, 0.0, PI - 10.0 * h, h).unwrap();
    let mut worst = 0.0f64;
    for j in 0..re.len() {
        let s = re.node(j);
        worst = worst.max(s.distance(&tr.evaluate(s.t).unwrap()));
    }
    assert!(worst < 1e-8, "{worst:e}");
}
