use negcurve::chart::phi_encoding;
use negcurve::config::RunConfig;
use negcurve::immersion::form_from_invariants;
use negcurve::outer::{gronwall_check, slice_norms};
use proptest::prelude::*;

proptest! {
    #[test]
    fn gauss_identity_holds_for_any_ordered_invariants(h in 0.1f64..10.0, kappa in 1e-3f64..5.0, r in -5.0f64..5.0, gap in 1e-3f64..5.0) {
        let s = r + gap;
        let (l, m, n) = form_from_invariants(h, kappa, r, s);
        prop_assert!(l > 0.0);
        let target = (h * kappa).powi(2);
        let scale = target + (l * n).abs() + m * m;
        prop_assert!((l * n - m * m + target).abs() <= 1e-12 * scale);
    }

    #[test]
    fn phi_encoding_stays_on_the_unit_circle(phi in -800.0f64..800.0) {
        let (th, sech) = phi_encoding(phi);
        prop_assert!(th.is_finite() && sech.is_finite() && sech >= 0.0);
        prop_assert!((th * th + sech * sech - 1.0).abs() < 1e-14);
        prop_assert!(th.signum() == phi.signum() || phi == 0.0);
    }

    #[test]
    fn slice_norms_are_nondecreasing(vals in prop::collection::vec(-3.0f64..3.0, 8..40), h in 1e-3f64..0.5) {
        let n = slice_norms(&vals, h);
        prop_assert!(n[0] <= n[1] && n[1] <= n[2]);
    }

    #[test]
    fn gronwall_accepts_energies_built_from_its_own_bound(
        f in prop::collection::vec(0.0f64..2.0, 10),
        h in prop::collection::vec(0.0f64..1.0, 10),
        e0 in 0.0f64..3.0,
        slack in prop::collection::vec(0.0f64..1.0, 10),
    ) {
        let rho: Vec<f64> = (0..11).map(|i| 1.0 + 0.1 * i as f64).collect();
        let mut e = vec![e0];
        for k in 0..10 {
            let step = 0.1 * (f[k] * e[k].sqrt() + h[k]) * slack[k];
            e.push(e[k] + step);
        }
        let mut ff = f.clone();
        ff.push(0.0);
        let mut hh = h.clone();
        hh.push(0.0);
        let rep = gronwall_check(&rho, &e, &ff, &hh, 1e-12);
        prop_assert!(rep.hypothesis_holds && rep.conclusion_holds && rep.worst_margin >= 0.0);
    }

    #[test]
    fn count_overrides_round_trip(n in 8usize..100_000) {
        let mut c = RunConfig::default();
        c.apply_override(&format!("grids.n_x={n}")).unwrap();
        prop_assert_eq!(c.grids.n_x, n);
        prop_assert!(c.validate().is_ok());
        prop_assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
