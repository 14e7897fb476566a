use maxreglab::harness::{Scenario, BUILTIN_IDS};
use maxreglab::noise::{sample_path, TimeGrid};
use maxreglab::spectral::{Basis, Quadrature, SpectralOperator, StateVector, TraceNorm};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scenario_round_trip(idx in 0usize..BUILTIN_IDS.len(), seed in any::<u64>(), horizon in 0.1f64..10.0, paths in 1usize..100) {
        let mut s = Scenario::builtin(BUILTIN_IDS[idx]).unwrap();
        s.seed = seed;
        s.horizon = horizon;
        s.n_paths = paths;
        let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.hash(), s.hash());
        prop_assert_eq!(back, s);
    }

    #[test]
    fn trace_norm_is_homogeneous(c in 0.01f64..100.0, a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let op = SpectralOperator::laplacian(Basis::SineInterval { order: 2 }, 4, 0.0).unwrap();
        let tn = TraceNorm::new(&op, 0.5, 2.0, Quadrature::default()).unwrap();
        let x = StateVector::from_real(&[a, b, 0.5 * a, 0.1]);
        let lhs = tn.norm(&x.scale(c));
        let rhs = c * tn.norm(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
    }

    #[test]
    fn semigroup_composes(s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let op = SpectralOperator::laplacian(Basis::FourierTorus { dim: 1, order: 2 }, 9, 1.0).unwrap();
        let x = StateVector::from_real(&(0..9).map(|k| 1.0 / (1.0 + k as f64)).collect::<Vec<_>>());
        let two = op.semigroup_apply(t, &op.semigroup_apply(s, &x).unwrap()).unwrap();
        let one = op.semigroup_apply(s + t, &x).unwrap();
        prop_assert!(two.sub(&one).norm() <= 1e-14);
    }

    #[test]
    fn paths_are_reproducible(seed in any::<u64>(), index in 0u64..1000, levels in 2u32..10) {
        let grid = TimeGrid::new(1.0, 1 << levels).unwrap();
        prop_assert_eq!(sample_path(seed, index, grid, 2), sample_path(seed, index, grid, 2));
    }
}
