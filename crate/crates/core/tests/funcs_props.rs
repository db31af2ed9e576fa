use derfkit::funcs::{
    catalog, clip_bound, erf_eval, flat_zone, lookup, negate, shift, Monotonicity, PointwiseFn, ShiftKind,
};
use derfkit::props::{classify, fit_eps, Thresholds};
use proptest::prelude::*;

fn entries() -> Vec<PointwiseFn> {
    catalog()
}

fn fn_index() -> impl Strategy<Value = usize> {
    0..catalog().len()
}

proptest! {
    #[test]
    fn catalog_entries_are_odd(i in fn_index(), x in -6.0f64..6.0) {
        let f = &entries()[i];
        prop_assert!((f.eval(x) + f.eval(-x)).abs() <= 1e-12, "{} at {x}", f.name());
    }

    #[test]
    fn bounded_entries_stay_in_unit_range(i in fn_index(), x in -1e6f64..1e6) {
        let f = &entries()[i];
        if f.declared_props().bounded {
            // dampexp peaks at 2.72/e, a hair above 1.
            let cap = if f.name() == "dampexp" { 2.72 / std::f64::consts::E } else { 1.0 };
            prop_assert!(f.eval(x).abs() <= cap + 1e-12, "{} at {x}", f.name());
        }
    }

    #[test]
    fn monotone_entries_respect_order(i in fn_index(), a in -8.0f64..8.0, b in -8.0f64..8.0) {
        let f = &entries()[i];
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        match f.declared_props().monotonic {
            Monotonicity::Increasing => prop_assert!(f.eval(lo) <= f.eval(hi) + 1e-12),
            Monotonicity::Decreasing => prop_assert!(f.eval(lo) >= f.eval(hi) - 1e-12),
            Monotonicity::NonMonotonic => {}
        }
    }

    #[test]
    fn derivative_matches_finite_differences(i in fn_index(), x in -6.0f64..6.0) {
        let f = &entries()[i];
        prop_assume!(f.distance_to_kink(x) > 1e-3);
        // A small step keeps truncation error below 1e-6 even next to the
        // singular derivatives of power23 and exproot.
        let h = 1e-6;
        let fd = (f.eval(x + h) - f.eval(x - h)) / (2.0 * h);
        prop_assert!((f.deriv(x) - fd).abs() <= 1e-6, "{} at {x}: {} vs {fd}", f.name(), f.deriv(x));
    }

    #[test]
    fn clip_is_exactly_bounded(i in fn_index(), lam in 0.01f64..5.0, x in -1e4f64..1e4) {
        let c = clip_bound(&entries()[i], lam).unwrap();
        prop_assert!(c.eval(x).abs() <= lam);
    }

    #[test]
    fn flat_zone_is_continuous_at_its_edges(lam in 0.0f64..3.0, name in prop::sample::select(vec!["erf", "tanh", "isru", "arctan_scaled"])) {
        let g = flat_zone(&lookup(name).unwrap(), lam).unwrap();
        for edge in [lam, -lam] {
            prop_assert!(g.eval(edge).abs() <= 1e-15);
            prop_assert!((g.eval(edge + 1e-9)).abs() <= 1e-8);
            prop_assert!((g.eval(edge - 1e-9)).abs() <= 1e-8);
        }
    }

    #[test]
    fn erf_is_odd_and_in_closed_unit_interval(x in -50.0f64..50.0) {
        let v = erf_eval(x);
        prop_assert_eq!(erf_eval(-x), -v);
        prop_assert!(v.abs() <= 1.0);
    }
}

#[test]
fn classify_is_deterministic_across_threads() {
    let f = lookup("saturlog").unwrap();
    let first = classify(&f).unwrap();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let f = f.clone();
            std::thread::spawn(move || classify(&f).unwrap())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), first);
    }
}

#[test]
fn negation_flips_only_monotonicity() {
    for f in catalog() {
        let a = classify(&f).unwrap();
        let b = classify(&negate(&f)).unwrap();
        assert_eq!(b.monotonic, a.monotonic.flipped(), "{}", f.name());
        assert_eq!(
            (a.zero_centered, a.bounded, a.center_sensitive, a.growth_class),
            (b.zero_centered, b.bounded, b.center_sensitive, b.growth_class),
            "{}",
            f.name()
        );
    }
}

#[test]
fn large_horizontal_shift_breaks_zero_centering() {
    for f in catalog() {
        if f.declared_props().monotonic == Monotonicity::NonMonotonic {
            continue;
        }
        for lam in [-2.0, -1.0, 1.0, 2.0] {
            let r = classify(&shift(&f, ShiftKind::Horizontal, lam)).unwrap();
            assert!(!r.zero_centered, "{} shifted by {lam}", f.name());
        }
    }
}

#[test]
fn small_shift_keeps_labels_elsewhere() {
    let r = classify(&shift(&lookup("erf").unwrap(), ShiftKind::Vertical, 0.5)).unwrap();
    assert!(!r.zero_centered && r.bounded && r.center_sensitive);
}

#[test]
fn flat_zone_grid_loses_center_sensitivity() {
    let th = Thresholds::default();
    for lam in [0.5, 1.0, 2.0, 3.0] {
        let r = classify(&flat_zone(&lookup("tanh").unwrap(), lam).unwrap()).unwrap();
        assert!(!r.center_sensitive, "lambda {lam}");
        assert!((r.flat_half_width - lam).abs() < 0.01 + th.flat_level);
    }
}

#[test]
fn eps_fit_is_stable_in_truncation_radius() {
    let a = fit_eps(8.0, 1e-6).unwrap();
    let b = fit_eps(16.0, 1e-6).unwrap();
    assert!((a.eps_star - b.eps_star).abs() < 1e-4);
    assert!(derfkit::props::eps_objective(1.0, 8.0) > a.objective_value);
}

#[test]
fn eps_fit_coarse_tolerance_still_bracketed() {
    let r = fit_eps(8.0, 1e-2).unwrap();
    assert!(r.eps_star > 0.8 && r.eps_star < 1.6);
    assert!((r.eps_star - 1.205).abs() < 0.02);
}
