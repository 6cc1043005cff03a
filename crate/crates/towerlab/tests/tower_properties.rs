//! Property tests for the symbolic core: random specs, points and horizons.

use proptest::prelude::*;

use towerlab::measures;
use towerlab::tower::{
    quotient_project, separation_time, tower_step, Branch, ReturnTimeSpec, SeparationTime,
};

fn arb_spec() -> impl Strategy<Value = ReturnTimeSpec> {
    (2usize..6, 1u64..1_000_000).prop_map(|(b, salt)| {
        // Random positive masses normalized to 1, random small return times.
        let raws: Vec<f64> = (0..b)
            .map(|i| 0.05 + towerlab::rng::unit3(salt, 0xa, i as u64))
            .collect();
        let total: f64 = raws.iter().sum();
        let branches: Vec<Branch> = raws
            .iter()
            .enumerate()
            .map(|(i, &w)| Branch {
                index: i as u32 + 1,
                p: w / total,
                r: 1 + (towerlab::rng::unit3(salt, 0xb, i as u64) * 5.0) as u32,
            })
            .collect();
        ReturnTimeSpec::new(branches, 0.9, 0.5).expect("normalized spec is valid")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn step_preserves_validity_and_quotient_commutes(spec in arb_spec(), seed in 0u64..u64::MAX) {
        let mut pts = measures::srb_sample(&spec, seed, 8);
        for p in &mut pts {
            for _ in 0..50 {
                let a = quotient_project(&tower_step(&spec, p).unwrap());
                let b = tower_step(&spec, &quotient_project(p)).unwrap();
                prop_assert_eq!(a.level(), b.level());
                for k in 0..4 {
                    prop_assert_eq!(a.future_symbol(&spec, k), b.future_symbol(&spec, k));
                }
                p.step_in_place(&spec).unwrap();
                prop_assert!(p.level() < spec.r(p.column()));
            }
        }
    }

    #[test]
    fn separation_is_symmetric_and_ultrametric_like(spec in arb_spec(), seed in 0u64..u64::MAX) {
        let pts = measures::srb_sample(&spec, seed, 6);
        for x in &pts {
            for y in &pts {
                let sxy = separation_time(&spec, x, y, 48);
                let syx = separation_time(&spec, y, x, 48);
                prop_assert_eq!(sxy, syx);
                if let (SeparationTime::Finite(a), SeparationTime::Finite(b)) = (sxy, syx) {
                    prop_assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn spec_table_roundtrips(spec in arb_spec()) {
        let text = spec.to_table();
        let back = ReturnTimeSpec::parse_table(&text).unwrap();
        prop_assert_eq!(spec, back);
    }
}
