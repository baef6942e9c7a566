use std::sync::Arc;

use glshap::{gauss_legendre_rule, gauss_legendre_rule_with_cap, monomial_exactness_defect};
use proptest::prelude::*;

#[test]
fn rule_shape_for_every_order_up_to_1000() {
    for m in 1..=1000 {
        let rule = gauss_legendre_rule(m).unwrap();
        let (t, w) = (rule.nodes(), rule.weights());
        assert_eq!((t.len(), w.len(), rule.order()), (m, m, m));
        assert!(t.iter().all(|&x| x > 0.0 && x < 1.0), "m={m}");
        assert!(t.windows(2).all(|p| p[0] < p[1]), "m={m}");
        assert!(w.iter().all(|&x| x > 0.0), "m={m}");
        let sum: f64 = w.iter().sum();
        assert!(
            (sum - 1.0).abs() <= 1e-14,
            "m={m}: Σω - 1 = {:e}",
            sum - 1.0
        );
        for q in 0..m {
            let r = m - 1 - q;
            assert!((t[q] + t[r] - 1.0).abs() <= 1e-14, "m={m} q={q}");
            assert!((w[q] - w[r]).abs() <= 1e-14, "m={m} q={q}");
        }
    }
}

#[test]
fn order_outside_cap_is_rejected() {
    assert!(gauss_legendre_rule(0).is_err());
    assert!(gauss_legendre_rule_with_cap(11, 10).is_err());
    assert!(gauss_legendre_rule_with_cap(10, 10).is_ok());
}

#[test]
fn concurrent_construction_agrees_bitwise() {
    // Orders no other test touches, so the first requests race to fill the cache.
    let orders = [1201, 1337, 1999];
    let handles: Vec<_> = (0..8)
        .map(|_| std::thread::spawn(move || orders.map(|m| gauss_legendre_rule(m).unwrap())))
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    for rules in &results[1..] {
        for (a, b) in rules.iter().zip(&results[0]) {
            let bits = |r: &Arc<glshap::QuadratureRule>| {
                r.nodes()
                    .iter()
                    .chain(r.weights())
                    .map(|x| x.to_bits())
                    .collect::<Vec<_>>()
            };
            assert_eq!(bits(a), bits(b));
        }
    }
}

proptest! {
    #[test]
    fn exact_for_monomials_below_2m(m in 1usize..=50, k_frac in 0.0f64..1.0) {
        let k = ((2 * m) as f64 * k_frac) as u32;
        let rule = gauss_legendre_rule(m).unwrap();
        prop_assert!(monomial_exactness_defect(&rule, k) <= 1e-12);
    }

    #[test]
    fn complement_matches_one_minus_node(m in 1usize..=300) {
        let rule = gauss_legendre_rule(m).unwrap();
        for (q, &t) in rule.nodes().iter().enumerate() {
            prop_assert!((rule.complement(q) - (1.0 - t)).abs() <= 1e-15);
        }
    }
}
