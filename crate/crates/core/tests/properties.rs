use approx::assert_relative_eq;
use proptest::prelude::*;

use rcoda::inference::Uniform;
use rcoda::lattice::build_plan;
use rcoda::likelihood::{pseudo_loglik, rcoda_loglik};
use rcoda::potts::{bond_count, exact_log_likelihood};
use rcoda::{Backend, LabelField, LatticeGeometry, ModelParams, Order, PottsModel, RcodaConfig};

fn order_of(second: bool) -> Order {
    if second {
        Order::Second
    } else {
        Order::First
    }
}

prop_compose! {
    fn lattice_field(max_side: usize)(rows in 1..=max_side, cols in 1..=max_side, q in 2usize..=4, second in any::<bool>())
        (values in proptest::collection::vec(0..q as u8, rows * cols), rows in Just(rows), cols in Just(cols), q in Just(q), second in Just(second))
        -> (LatticeGeometry, LabelField)
    {
        (LatticeGeometry::new(rows, cols, order_of(second)).unwrap(), LabelField::new(rows, cols, q, values).unwrap())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn likelihoods_ignore_label_names((g, f) in lattice_field(12), beta in 0.0..1.5f64, alpha in 0.0..1.0f64) {
        let q = f.q();
        let perm: Vec<u8> = (0..q as u8).rev().collect();
        let swapped = f.relabel(&perm).unwrap();
        assert_relative_eq!(pseudo_loglik(&f, q, beta, &g).unwrap(), pseudo_loglik(&swapped, q, beta, &g).unwrap(), max_relative = 1e-12);
        let plan = build_plan(&g, 1.min(rcoda::lattice::max_depth(&g))).unwrap();
        let params = ModelParams::new(beta, alpha, plan.depth(), q, g.order()).unwrap();
        assert_relative_eq!(
            rcoda_loglik(&f, &params, &plan).unwrap(),
            rcoda_loglik(&swapped, &params, &plan).unwrap(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn prepared_backends_match_direct_evaluation((g, f) in lattice_field(10), beta in 0.0..1.2f64, alpha in 0.0..1.0f64) {
        let backend = if g.order() == Order::First { Backend::Rcoda(RcodaConfig::default()) } else { Backend::RcodaC(RcodaConfig::default()) };
        let prepared = backend.prepare(&g, &f).unwrap();
        let plan = build_plan(&g, rcoda::lattice::default_depth(&g)).unwrap();
        let params = ModelParams::new(beta, alpha, plan.depth(), f.q(), g.order()).unwrap();
        assert_relative_eq!(prepared.log_lik(beta, alpha).unwrap(), rcoda_loglik(&f, &params, &plan).unwrap(), max_relative = 1e-10, epsilon = 1e-10);
        let pl = Backend::Pseudo.prepare(&g, &f).unwrap();
        assert_relative_eq!(pl.log_lik(beta, 0.0).unwrap(), pseudo_loglik(&f, f.q(), beta, &g).unwrap(), max_relative = 1e-10, epsilon = 1e-10);
    }

    #[test]
    fn log_likelihoods_are_nonpositive((g, f) in lattice_field(4), beta in 0.0..2.0f64) {
        // Each is a log-probability (or a product of conditionals).
        prop_assert!(pseudo_loglik(&f, f.q(), beta, &g).unwrap() <= 1e-12);
        let exact = exact_log_likelihood(&f, &PottsModel::new(g.clone(), f.q(), beta).unwrap()).unwrap();
        prop_assert!(exact <= 1e-12);
        prop_assert!(bond_count(&g, &f).unwrap() <= g.edge_count());
    }

    #[test]
    fn reflection_lands_in_support(lo in -5.0..5.0f64, width in 0.01..10.0f64, x in -100.0..100.0f64) {
        let u = Uniform::new(lo, lo + width).unwrap();
        let y = u.reflect(x);
        prop_assert!(u.contains(y) || (y - u.lo).abs() < 1e-9 || (y - u.hi).abs() < 1e-9);
        if u.contains(x) {
            assert_relative_eq!(y, x, epsilon = 1e-9);
        }
    }
}
