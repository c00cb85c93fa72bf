use proptest::prelude::*;

use poincare::forms::{kernel_energy, local_energy};
use poincare::grid::{deviation_p, mean, weighted_mean};
use poincare::inequalities::{
    ball_deviation_functional, check_chain_lemma, check_ckk, check_kernel_bounded_below,
    check_local_weighted, check_nonlocal_weighted, check_theorem, InequalityReport,
};
use poincare::sharp::{assemble_p2, dense_oracle_eigen, sharp_constant_p2, EigenOptions};
use poincare::{Grid, GridFunction, KernelSpec, LayerCakeMeasure, RadialProfile};

fn profile_strategy() -> impl Strategy<Value = RadialProfile> {
    (
        prop::collection::vec(0.01f64..0.99, 0..8),
        prop::collection::vec(0.05f64..1.0, 9),
        0.5f64..4.0,
    )
        .prop_map(|(mut bps, factors, top)| {
            bps.sort_by(f64::total_cmp);
            bps.dedup();
            let mut level = top;
            let mut vals = vec![level];
            for f in factors.iter().take(bps.len()) {
                level *= f;
                vals.push(level);
            }
            RadialProfile::step(bps, vals).unwrap()
        })
}

fn field_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, len)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn same_report(a: &InequalityReport, b: &InequalityReport, lhs_scale: f64) -> bool {
    close(a.lhs * lhs_scale, b.lhs, 1e-10)
        && close(a.rhs * lhs_scale, b.rhs, 1e-10)
        && close(a.ratio, b.ratio, 1e-10)
}

/// Every check that takes a plain field, run on `u`.
fn all_reports(u: &GridFunction, w: &RadialProfile, p: f64) -> Vec<InequalityReport> {
    let kernel = KernelSpec::fractional(0.6, p, None);
    vec![
        check_theorem(u, w, ball_deviation_functional(p), p, 0.0).unwrap(),
        check_local_weighted(u, w, p, 1.0, 0.0).unwrap(),
        check_nonlocal_weighted(u, w, &kernel, 1e6, 0.0).unwrap(),
        check_kernel_bounded_below(u, w, &KernelSpec::floor(0.5, p), None, 0.0).unwrap(),
        check_ckk(u, w, p, 0.6, 2.0, 1.0, 0.05).unwrap(),
        check_chain_lemma(u, p, 0.6, 2.0, 0.05).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reconstruction_is_monotone(prof in profile_strategy(), a in 0.5001f64..0.9999, b in 0.5001f64..0.9999) {
        let mu = prof.layer_cake();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(mu.reconstruct(lo).unwrap() >= mu.reconstruct(hi).unwrap());
    }

    #[test]
    fn total_mass_is_value_just_above_half(prof in profile_strategy()) {
        let mu = prof.layer_cake();
        let above = prof.eval(0.5 + 1e-12).unwrap();
        prop_assert!(close(mu.total_mass(), above, 1e-14));
    }

    #[test]
    fn truncation_sandwich(prof in profile_strategy(), r in 0.0f64..0.9999) {
        let t = prof.truncate();
        let v = prof.eval(r).unwrap();
        let tv = t.eval(r).unwrap();
        prop_assert!(tv <= v);
        prop_assert!(prof.at_half() / prof.at_center() * v <= tv * (1.0 + 1e-15));
    }

    #[test]
    fn measure_roundtrip_through_atoms(prof in profile_strategy()) {
        let mu = prof.layer_cake();
        let rebuilt = LayerCakeMeasure::new(mu.atoms()).unwrap();
        prop_assert_eq!(rebuilt.atoms(), mu.atoms());
    }

    #[test]
    fn constant_weight_mean_is_mean(v in field_strategy(16), c in 0.1f64..5.0) {
        let g = Grid::new(1, 16).unwrap();
        let u = GridFunction::new(&g, v).unwrap();
        let flat = RadialProfile::constant(c).unwrap();
        prop_assert!((weighted_mean(&u, &flat).unwrap() - mean(&u, &g.all_cells()).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn mean_minimizes_quadratic_deviation(v in field_strategy(12), centers in prop::collection::vec(-3.0f64..3.0, 10)) {
        let g = Grid::new(2, 4).unwrap();
        let u = GridFunction::new(&g, v).unwrap();
        let all = g.all_cells();
        let best = deviation_p(&u, &all, 2.0, None, None).unwrap();
        for c in centers {
            prop_assert!(best <= deviation_p(&u, &all, 2.0, None, Some(c)).unwrap() + 1e-14);
        }
    }

    #[test]
    fn mean_zero_identity(prof in profile_strategy(), v in field_strategy(32)) {
        // with the truncated weight, Σ_j w_j |B_j| u_{B_j} is the weighted sum
        let g = Grid::new(1, 32).unwrap();
        let t = prof.truncate();
        let raw = GridFunction::new(&g, v).unwrap();
        let u = raw.shifted(-weighted_mean(&raw, &t).unwrap());
        let mut total = 0.0;
        let mut scale = 0.0;
        for (tj, wj) in t.layer_cake().atoms() {
            let ball = g.ball_cells(tj).unwrap();
            if ball.is_empty() {
                continue;
            }
            let term = wj * g.volume(&ball) * mean(&u, &ball).unwrap();
            total += term;
            scale += term.abs() + wj * g.volume(&ball);
        }
        prop_assert!(total.abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn energies_symmetric_under_negation_and_shift(v in field_strategy(16), a in -5.0f64..5.0, p in 1.0f64..4.0) {
        let g = Grid::new(1, 16).unwrap();
        let u = GridFunction::new(&g, v.clone()).unwrap();
        let neg = GridFunction::new(&g, v.iter().map(|x| -x).collect()).unwrap();
        let all = g.all_cells();
        for k in [KernelSpec::local(p), KernelSpec::fractional(0.4, p, Some(2.0)), KernelSpec::floor(1.0, p)] {
            let e = kernel_energy(&u, &all, &k, None).unwrap();
            prop_assert!(close(e, kernel_energy(&neg, &all, &k, None).unwrap(), 1e-12));
            prop_assert!(close(e, kernel_energy(&u.shifted(a), &all, &k, None).unwrap(), 1e-12));
        }
    }

    #[test]
    fn truncation_only_removes_pairs(v in field_strategy(20), r1 in 1.0f64..4.0, dr in 0.0f64..4.0) {
        let g = Grid::new(1, 20).unwrap();
        let u = GridFunction::new(&g, v).unwrap();
        let all = g.all_cells();
        let e1 = kernel_energy(&u, &all, &KernelSpec::fractional(0.5, 2.0, Some(r1)), None).unwrap();
        let e2 = kernel_energy(&u, &all, &KernelSpec::fractional(0.5, 2.0, Some(r1 + dr)), None).unwrap();
        prop_assert!(e2 <= e1 * (1.0 + 1e-14));
    }

    #[test]
    fn weights_below_one_lower_energy(prof in profile_strategy(), v in field_strategy(16)) {
        let g = Grid::new(1, 16).unwrap();
        let scaled = RadialProfile::step(
            prof.breakpoints().to_vec(),
            prof.values().iter().map(|x| x / prof.at_center()).collect(),
        ).unwrap();
        let u = GridFunction::new(&g, v).unwrap();
        let all = g.all_cells();
        for k in [KernelSpec::local(2.0), KernelSpec::fractional(0.7, 2.0, None)] {
            prop_assert!(kernel_energy(&u, &all, &k, Some(&scaled)).unwrap()
                <= kernel_energy(&u, &all, &k, None).unwrap() * (1.0 + 1e-14));
        }
    }

    #[test]
    fn convexity_step(a in -10.0f64..10.0, b in -10.0f64..10.0, p in 1.0f64..4.0) {
        let lhs = (a + b).abs().powf(p);
        let rhs = a.abs().powf(p) + b * p * a.abs().powf(p - 1.0) * a.signum();
        prop_assert!(lhs >= rhs - 1e-9 * (1.0 + lhs.abs() + rhs.abs()));
    }

    #[test]
    fn jensen_chain(v in field_strategy(32), p in 1.0f64..4.0, t in 0.2f64..1.0) {
        let g = Grid::new(1, 32).unwrap();
        let u = GridFunction::new(&g, v).unwrap();
        let cells = g.ball_cells(t).unwrap();
        prop_assume!(cells.len() >= 2);
        let e = kernel_energy(&u, &cells, &KernelSpec::floor(1.0, p), None).unwrap();
        let dev = deviation_p(&u, &cells, p, None, None).unwrap();
        prop_assert!(e >= g.volume(&cells) * dev * (1.0 - 1e-10));
    }

    #[test]
    fn reports_scale_by_lambda_to_the_p(prof in profile_strategy(), v in field_strategy(16), lambda in -3.0f64..3.0, p in 1.0f64..3.0) {
        prop_assume!(lambda.abs() > 1e-3);
        let g = Grid::new(1, 16).unwrap();
        let u = GridFunction::new(&g, v).unwrap();
        let scaled = u.scaled(lambda);
        let factor = lambda.abs().powf(p);
        for (a, b) in all_reports(&u, &prof, p).iter().zip(all_reports(&scaled, &prof, p).iter()) {
            prop_assert!(same_report(a, b, factor), "{} {:?} {:?}", a.check_id, a, b);
        }
    }

    #[test]
    fn reports_are_shift_invariant(prof in profile_strategy(), v in field_strategy(16), a in -5.0f64..5.0, p in 1.0f64..3.0) {
        let g = Grid::new(1, 16).unwrap();
        let u = GridFunction::new(&g, v).unwrap();
        for (x, y) in all_reports(&u, &prof, p).iter().zip(all_reports(&u.shifted(a), &prof, p).iter()) {
            prop_assert!(same_report(x, y, 1.0), "{} {:?} {:?}", x.check_id, x, y);
        }
    }

    #[test]
    fn truncated_profile_lhs_within_sandwich(prof in profile_strategy(), v in field_strategy(32), p in 1.0f64..3.0) {
        let g = Grid::new(1, 32).unwrap();
        let u = GridFunction::new(&g, v).unwrap();
        let f = ball_deviation_functional(p);
        let full = check_theorem(&u, &prof, &f, p, 0.0).unwrap();
        let cut = check_theorem(&u, &prof.truncate(), &f, p, 0.0).unwrap();
        let factor = prof.at_center() / prof.at_half();
        prop_assert!(cut.lhs <= full.lhs * (1.0 + 1e-12));
        prop_assert!(full.lhs <= factor * cut.lhs * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn assembled_spectrum_starts_at_zero(prof in profile_strategy(), s in 0.1f64..0.9) {
        let g = Grid::new(1, 16).unwrap();
        let all = g.all_cells();
        for k in [KernelSpec::local(2.0), KernelSpec::fractional(s, 2.0, None)] {
            let pair = assemble_p2(&g, &all, &k, Some(&prof)).unwrap();
            let spec = dense_oracle_eigen(&pair).unwrap();
            prop_assert!(spec[0].abs() < 1e-12 * spec[spec.len() - 1]);
            prop_assert!(spec[1] > 1e-8 * spec[spec.len() - 1]);
            prop_assert!(spec.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}

#[test]
fn constant_weight_theorem_degenerates() {
    let g = Grid::new(2, 16).unwrap();
    let u = GridFunction::from_fn(&g, |x| x[0] * x[1] + x[1].sin()).unwrap();
    let flat = RadialProfile::constant(3.0).unwrap();
    assert_eq!(flat.layer_cake().atoms(), vec![(1.0, 3.0)]);
    let f = ball_deviation_functional(2.0);
    let r = check_theorem(&u, &flat, &f, 2.0, 0.0).unwrap();
    let plain = deviation_p(&u, &g.all_cells(), 2.0, None, None).unwrap();
    assert!(close(r.lhs, 3.0 * plain, 1e-13));
    assert!(close(r.rhs, r.constant_used * 3.0 * f(&u, 1.0), 1e-13));
}

#[test]
fn mesh_refinement_gaps_shrink() {
    let local = KernelSpec::local(2.0);
    let lambdas: Vec<f64> = [64, 128, 256, 512]
        .iter()
        .map(|&n| {
            let g = Grid::new(1, n).unwrap();
            sharp_constant_p2(&g, &g.all_cells(), &local, None, EigenOptions::default())
                .unwrap()
                .lambda
        })
        .collect();
    for w in lambdas.windows(3) {
        let (g1, g2) = ((w[1] - w[0]).abs(), (w[2] - w[1]).abs());
        assert!(g2 * 2.0 <= g1, "{lambdas:?}");
    }
    let limit = std::f64::consts::PI.powi(2) / 4.0;
    assert!((lambdas[3] - limit).abs() < 1e-5);
}

#[test]
fn local_energy_ignores_cells_outside_set() {
    let g = Grid::new(2, 8).unwrap();
    let u = GridFunction::from_fn(&g, |x| x[0] + 2.0 * x[1]).unwrap();
    let inner = g.ball_cells(0.5).unwrap();
    let full = local_energy(&u, &g.all_cells(), 2.0, None).unwrap();
    let part = local_energy(&u, &inner, 2.0, None).unwrap();
    assert!(part < full);
}
